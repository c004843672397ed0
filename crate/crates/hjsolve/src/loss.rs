//! The pointwise implicit-formula residual, its Monte-Carlo empirical mean,
//! boundary penalties, and the batched loss-plus-gradient evaluation used by
//! the trainer.

use crate::autodiff::{
    dot_s, eval_jet_into, record_forward, record_jet, register_params, InputJet, JetScratch,
    Scalar, Tape, Var,
};
use crate::error::{HjError, Result};
use crate::network::MlpParams;
use crate::problems::{BoundaryKind, DirichletData, ProblemSpec};

/// One epoch's collocation points. Interior points live in `Omega x [0, T]`,
/// boundary points on faces; `partner_x` holds the opposite-face twin of each
/// boundary point when the problem is periodic.
#[derive(Clone, Debug, Default)]
pub struct CollocationBatch {
    pub dim: usize,
    pub interior_x: Vec<f64>,
    pub interior_t: Vec<f64>,
    pub boundary_x: Vec<f64>,
    pub boundary_t: Vec<f64>,
    pub partner_x: Vec<f64>,
}

impl CollocationBatch {
    pub fn interior_len(&self) -> usize {
        self.interior_t.len()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary_t.len()
    }

    pub fn interior_point(&self, j: usize) -> (&[f64], f64) {
        (
            &self.interior_x[j * self.dim..(j + 1) * self.dim],
            self.interior_t[j],
        )
    }

    pub fn boundary_point(&self, j: usize) -> (&[f64], f64) {
        (
            &self.boundary_x[j * self.dim..(j + 1) * self.dim],
            self.boundary_t[j],
        )
    }

    pub fn partner_point(&self, j: usize) -> &[f64] {
        &self.partner_x[j * self.dim..(j + 1) * self.dim]
    }
}

/// S(u) = u + t H(p) - t p . grad H(p) - g(x - t grad H(p)), with p the
/// spatial gradient of u at (x, t). Generic so the same expression runs on
/// floats and on the tape.
pub(crate) fn residual_expr<S: Scalar>(
    problem: &ProblemSpec,
    x: &[f64],
    t: f64,
    u: S,
    p: &[S],
) -> S {
    let h = problem.hamiltonian.value(x, p);
    let gp = problem.hamiltonian.grad_p(x, p);
    let advect = dot_s(p, &gp);
    let pulled: Vec<S> = gp
        .iter()
        .zip(x)
        .map(|(gi, xi)| gi.scale(-t).shift(*xi))
        .collect();
    let g = problem.initial.value(&pulled);
    u + h.scale(t) - advect.scale(t) - g
}

/// Residual from a precomputed jet (value and spatial gradient at (x, t)).
pub fn residual_from_jet(problem: &ProblemSpec, x: &[f64], t: f64, jet: &InputJet) -> f64 {
    residual_expr(problem, x, t, jet.value, &jet.grad_x)
}

/// Pointwise residual of the network. State-dependent problems use the
/// time-marching residual instead.
pub fn residual(params: &MlpParams, problem: &ProblemSpec, x: &[f64], t: f64) -> Result<f64> {
    if problem.state_dependent {
        return Err(HjError::Contract(format!(
            "problem `{}` is state-dependent; use the time-marching residual",
            problem.id
        )));
    }
    let jet = crate::autodiff::eval_with_input_grad(params, x, t)?;
    let s = residual_from_jet(problem, x, t, &jet);
    if !s.is_finite() {
        return Err(HjError::NonFinite(format!(
            "residual at x = {x:?}, t = {t}"
        )));
    }
    Ok(s)
}

/// Mean of squared residuals over the interior batch.
pub fn empirical_loss(
    params: &MlpParams,
    problem: &ProblemSpec,
    batch: &CollocationBatch,
) -> Result<f64> {
    let m = batch.interior_len();
    if m == 0 {
        return Err(HjError::Contract("empty collocation batch".into()));
    }
    let mut scratch = JetScratch::default();
    let mut jet = InputJet::default();
    let mut acc = 0.0;
    for j in 0..m {
        let (x, t) = batch.interior_point(j);
        eval_jet_into(params, x, t, &mut scratch, &mut jet)?;
        let s = residual_from_jet(problem, x, t, &jet);
        if !s.is_finite() {
            return Err(HjError::NonFinite(format!(
                "residual at x = {x:?}, t = {t}"
            )));
        }
        acc += s * s;
    }
    Ok(acc / m as f64)
}

fn dirichlet_target(problem: &ProblemSpec, data: &DirichletData, x: &[f64], t: f64) -> Result<f64> {
    match data {
        DirichletData::Constant(c) => Ok(*c),
        DirichletData::Exact => problem.exact_solution(x, t).ok_or_else(|| {
            HjError::Contract(format!(
                "problem `{}` has no closed form for Dirichlet data",
                problem.id
            ))
        }),
    }
}

/// Dirichlet: mean (u - h)^2 over boundary points; periodic: mean
/// (u(x^b) - u(y^b))^2 against the opposite-face partners.
pub fn boundary_loss(
    params: &MlpParams,
    problem: &ProblemSpec,
    batch: &CollocationBatch,
) -> Result<f64> {
    let mb = batch.boundary_len();
    if mb == 0 {
        return Err(HjError::Contract("empty boundary batch".into()));
    }
    let mut ws = crate::network::ForwardScratch::default();
    let mut acc = 0.0;
    match &problem.boundary {
        BoundaryKind::None => {
            return Err(HjError::Contract(format!(
                "problem `{}` has no boundary condition",
                problem.id
            )))
        }
        BoundaryKind::Dirichlet(data) => {
            for j in 0..mb {
                let (x, t) = batch.boundary_point(j);
                let u = crate::network::forward_with(params, x, t, &mut ws);
                let h = dirichlet_target(problem, data, x, t)?;
                acc += (u - h) * (u - h);
            }
        }
        BoundaryKind::Periodic => {
            if batch.partner_x.len() != batch.boundary_x.len() {
                return Err(HjError::Contract(
                    "periodic boundary batch is missing partner points".into(),
                ));
            }
            for j in 0..mb {
                let (x, t) = batch.boundary_point(j);
                let y = batch.partner_point(j);
                let u = crate::network::forward_with(params, x, t, &mut ws);
                let v = crate::network::forward_with(params, y, t, &mut ws);
                acc += (u - v) * (u - v);
            }
        }
    }
    Ok(acc / mb as f64)
}

/// empirical + lambda * boundary (boundary term absent when the problem has
/// no boundary condition).
pub fn total_loss(
    params: &MlpParams,
    problem: &ProblemSpec,
    batch: &CollocationBatch,
    lambda: f64,
) -> Result<f64> {
    if lambda < 0.0 {
        return Err(HjError::Contract("lambda must be nonnegative".into()));
    }
    let interior = empirical_loss(params, problem, batch)?;
    if matches!(problem.boundary, BoundaryKind::None) || lambda == 0.0 || batch.boundary_len() == 0
    {
        return Ok(interior);
    }
    Ok(interior + lambda * boundary_loss(params, problem, batch)?)
}

/// Record one interior squared residual on the tape and return it.
pub(crate) fn record_sq_residual<'t>(
    tape: &'t Tape,
    net: &crate::autodiff::TapeNet<'t>,
    problem: &ProblemSpec,
    x: &[f64],
    t: f64,
) -> Var<'t> {
    let jet = record_jet(tape, net, x, t);
    let s = residual_expr(problem, x, t, jet.value, jet.grad_x());
    s.square()
}

/// Total loss and its parameter gradient in one pass over the batch: per
/// point, record the term, reverse with the mean weight, rewind. The
/// summation order is the batch order, so the result is deterministic.
pub(crate) fn loss_and_grad(
    params: &MlpParams,
    problem: &ProblemSpec,
    batch: &CollocationBatch,
    lambda: f64,
    tape: &Tape,
    grad: &mut Vec<f64>,
) -> Result<f64> {
    let m = batch.interior_len();
    if m == 0 {
        return Err(HjError::Contract("empty collocation batch".into()));
    }
    tape.clear();
    let net = register_params(tape, params);
    tape.freeze();

    let mut sum_sq = 0.0;
    let w_int = 1.0 / m as f64;
    for j in 0..m {
        let (x, t) = batch.interior_point(j);
        let q = record_sq_residual(tape, &net, problem, x, t);
        let qv = tape.value(q);
        if !qv.is_finite() {
            return Err(HjError::NonFinite(format!(
                "residual at x = {x:?}, t = {t}"
            )));
        }
        sum_sq += qv;
        tape.backward(q, w_int);
        tape.rewind();
    }
    let mut loss = sum_sq * w_int;
    loss += accumulate_boundary(tape, &net, problem, batch, lambda, 0.0)?;
    tape.param_adjoints(grad);
    Ok(loss)
}

/// Record, differentiate and rewind every boundary penalty term; returns the
/// weighted boundary contribution to the loss. `t_offset` shifts the time at
/// which Dirichlet data is sampled (interval-local time in the marcher).
pub(crate) fn accumulate_boundary<'t>(
    tape: &'t Tape,
    net: &crate::autodiff::TapeNet<'t>,
    problem: &ProblemSpec,
    batch: &CollocationBatch,
    lambda: f64,
    t_offset: f64,
) -> Result<f64> {
    let mb = batch.boundary_len();
    if matches!(problem.boundary, BoundaryKind::None) || lambda <= 0.0 || mb == 0 {
        return Ok(0.0);
    }
    let w_b = lambda / mb as f64;
    let mut sum_b = 0.0;
    let mut buf = Vec::with_capacity(batch.dim + 1);
    for j in 0..mb {
        let (x, t) = batch.boundary_point(j);
        buf.clear();
        buf.extend_from_slice(x);
        buf.push(t);
        let u = record_forward(tape, net, tape.vector(&buf));
        let term = match &problem.boundary {
            BoundaryKind::Dirichlet(data) => {
                let h = dirichlet_target(problem, data, x, t + t_offset)?;
                u.shift(-h).square()
            }
            BoundaryKind::Periodic => {
                let y = batch.partner_point(j);
                buf.clear();
                buf.extend_from_slice(y);
                buf.push(t);
                let v = record_forward(tape, net, tape.vector(&buf));
                (u - v).square()
            }
            BoundaryKind::None => unreachable!(),
        };
        let tv = tape.value(term);
        if !tv.is_finite() {
            return Err(HjError::NonFinite(format!(
                "boundary term at x = {x:?}, t = {t}"
            )));
        }
        sum_b += tv;
        tape.backward(term, w_b);
        tape.rewind();
    }
    Ok(lambda * (sum_b / mb as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{fd_check, param_gradient};
    use crate::network::testing::constant_net;
    use crate::network::{init_network, NetworkConfig};
    use crate::problems::Domain;

    fn batch_of(points: &[(&[f64], f64)]) -> CollocationBatch {
        let dim = points[0].0.len();
        CollocationBatch {
            dim,
            interior_x: points.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
            interior_t: points.iter().map(|&(_, t)| t).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn residual_reduces_at_t0() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let params = init_network(&NetworkConfig::new(1, 2, 8, 100.0), 3).unwrap();
        for &x in &[-0.7, 0.0, 0.4] {
            let s = residual(&params, &problem, &[x], 0.0).unwrap();
            let expected = crate::network::forward(&params, &[x], 0.0).unwrap()
                - problem.initial_value(&[x]);
            assert!((s - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_network_residual_is_minus_g() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let params = constant_net(1, 0.0);
        let s = residual(&params, &problem, &[2.0], 1.0).unwrap();
        assert_eq!(s, -2.0);
    }

    #[test]
    fn exact_solution_stand_in_has_zero_residual() {
        // Burgers d=1 at a smooth point: u = |x| - t/2, p = sign(x).
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let jet = InputJet {
            value: 1.5,
            grad_x: vec![1.0],
            grad_t: -0.5,
        };
        let s = residual_from_jet(&problem, &[2.0], 1.0, &jet);
        assert!(s.abs() <= 1e-9, "{s}");
    }

    #[test]
    fn empirical_loss_basics() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let params = constant_net(1, 0.0);
        // one point with S = -g(2) = -2 -> loss 4
        let b1 = batch_of(&[(&[2.0], 1.0)]);
        assert!((empirical_loss(&params, &problem, &b1).unwrap() - 4.0).abs() < 1e-12);
        // duplicating the batch leaves the mean unchanged
        let b2 = batch_of(&[(&[2.0], 1.0), (&[2.0], 1.0)]);
        let (l1, l2) = (
            empirical_loss(&params, &problem, &b1).unwrap(),
            empirical_loss(&params, &problem, &b2).unwrap(),
        );
        assert!((l1 - l2).abs() < 1e-12 * l1.abs().max(1.0));
        // empty batch violates the contract
        let empty = CollocationBatch {
            dim: 1,
            ..Default::default()
        };
        assert!(matches!(
            empirical_loss(&params, &problem, &empty),
            Err(HjError::Contract(_))
        ));
    }

    #[test]
    fn stand_in_loss_vanishes_on_smooth_batch() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        // smooth region |x| > t: jets of the closed form
        let pts: Vec<(f64, f64)> = vec![(1.5, 0.4), (-1.8, 0.9), (2.5, 1.0), (-1.2, 0.3)];
        let mut acc = 0.0;
        for &(x, t) in &pts {
            let jet = InputJet {
                value: x.abs() - 0.5 * t,
                grad_x: vec![x.signum()],
                grad_t: -0.5,
            };
            let s = residual_from_jet(&problem, &[x], t, &jet);
            acc += s * s;
        }
        assert!(acc / pts.len() as f64 <= 1e-16);
    }

    fn periodic_1d_problem() -> ProblemSpec {
        let mut p = ProblemSpec::by_id("burgers-d1").unwrap();
        p.domain = Domain::cube(1, 0.0, 1.0);
        p.boundary = BoundaryKind::Periodic;
        p
    }

    #[test]
    fn boundary_loss_cases() {
        // constant network, Dirichlet h = c -> 0
        let params = constant_net(1, 2.5);
        let mut problem = ProblemSpec::by_id("burgers-d1").unwrap();
        problem.boundary = BoundaryKind::Dirichlet(DirichletData::Constant(2.5));
        let batch = CollocationBatch {
            dim: 1,
            boundary_x: vec![-1.0, 1.0],
            boundary_t: vec![0.2, 0.8],
            ..Default::default()
        };
        assert_eq!(boundary_loss(&params, &problem, &batch).unwrap(), 0.0);

        // constant network, periodic -> 0
        let problem = periodic_1d_problem();
        let batch = CollocationBatch {
            dim: 1,
            boundary_x: vec![0.0, 1.0],
            boundary_t: vec![0.3, 0.6],
            partner_x: vec![1.0, 0.0],
            ..Default::default()
        };
        assert_eq!(boundary_loss(&params, &problem, &batch).unwrap(), 0.0);

        // u = x on [0,1] periodic with pairs (0 <-> 1): mean of 1
        let mut u_is_x = crate::network::testing::identity_chain(1, 1);
        u_is_x.out_w = vec![1.0, 0.0];
        let l = boundary_loss(&u_is_x, &problem, &batch).unwrap();
        assert!((l - 1.0).abs() < 1e-12);

        // periodic without partners is a contract violation
        let missing = CollocationBatch {
            dim: 1,
            boundary_x: vec![0.0],
            boundary_t: vec![0.3],
            ..Default::default()
        };
        assert!(matches!(
            boundary_loss(&params, &problem, &missing),
            Err(HjError::Contract(_))
        ));
    }

    #[test]
    fn total_loss_combines_linearly() {
        let params = init_network(&NetworkConfig::new(1, 2, 6, 100.0), 5).unwrap();
        let problem = periodic_1d_problem();
        let batch = CollocationBatch {
            dim: 1,
            interior_x: vec![0.3, 0.7],
            interior_t: vec![0.1, 0.9],
            boundary_x: vec![0.0, 1.0],
            boundary_t: vec![0.5, 0.2],
            partner_x: vec![1.0, 0.0],
            ..Default::default()
        };
        let a = empirical_loss(&params, &problem, &batch).unwrap();
        let b = boundary_loss(&params, &problem, &batch).unwrap();
        let t01 = total_loss(&params, &problem, &batch, 0.1).unwrap();
        assert!((t01 - (a + 0.1 * b)).abs() < 1e-15);
        assert_eq!(total_loss(&params, &problem, &batch, 0.0).unwrap(), a);
        // boundary none -> empirical regardless of lambda
        let free = ProblemSpec::by_id("burgers-d1").unwrap();
        assert_eq!(
            total_loss(&params, &free, &batch, 0.7).unwrap(),
            empirical_loss(&params, &free, &batch).unwrap()
        );
    }

    /// Level-set special form: for H homogeneous of degree one the residual
    /// algebraically reduces to u - g(x - t grad H); no separate code path.
    #[test]
    fn homogeneous_hamiltonian_reduction() {
        let problem = ProblemSpec::by_id("collision-d2").unwrap();
        let params = init_network(&NetworkConfig::new(2, 2, 8, 100.0), 17).unwrap();
        for &(x0, x1, t) in &[(0.3, -0.2, 0.4), (-0.6, 0.5, 0.9), (0.1, 0.9, 0.2)] {
            let x = [x0, x1];
            let jet = crate::autodiff::eval_with_input_grad(&params, &x, t).unwrap();
            let s = residual_from_jet(&problem, &x, t, &jet);
            let gp = problem.hamiltonian_grad_p(&x, &jet.grad_x);
            let pulled = [x[0] - t * gp[0], x[1] - t * gp[1]];
            let reduced = jet.value - problem.initial_value(&pulled);
            assert!((s - reduced).abs() <= 1e-12, "{s} vs {reduced}");
        }
    }

    /// Tape gradient of the total loss matches finite differences across the
    /// spec's problem classes (quadratic, norm, trigonometric Hamiltonians).
    #[test]
    fn loss_gradient_matches_fd_per_problem_class() {
        for id in ["burgers-d2", "collision-d2", "cos-d2"] {
            let problem = ProblemSpec::by_id(id).unwrap();
            let cfg = NetworkConfig::new(2, 2, 6, 2.0);
            let params = init_network(&cfg, 77).unwrap();
            let batch = CollocationBatch {
                dim: 2,
                interior_x: vec![0.31, 0.42, 0.81, 0.15, 0.55, 0.99],
                interior_t: vec![0.05, 0.12, 0.19],
                boundary_x: vec![0.0, 0.5, 2.0, 0.5],
                boundary_t: vec![0.1, 0.15],
                partner_x: vec![2.0, 0.5, 0.0, 0.5],
                ..Default::default()
            };
            let lambda = 0.1;
            let tape = Tape::new();
            let mut grad = Vec::new();
            let loss = loss_and_grad(&params, &problem, &batch, lambda, &tape, &mut grad).unwrap();
            let reference = total_loss(&params, &problem, &batch, lambda).unwrap();
            assert!(
                (loss - reference).abs() <= 1e-12 * reference.max(1.0),
                "{id}: tape loss {loss} vs reference {reference}"
            );
            let flat = params.flatten();
            let err = fd_check(
                |f| {
                    let q = MlpParams::from_flat(&cfg, f).unwrap();
                    total_loss(&q, &problem, &batch, lambda).unwrap()
                },
                |_| grad.clone(),
                &flat,
                1e-5,
            );
            assert!(err <= 1e-5, "{id}: rel err {err}");
        }
    }

    #[test]
    fn loss_and_grad_matches_param_gradient_api() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let cfg = NetworkConfig::new(1, 2, 5, 1.5);
        let params = init_network(&cfg, 8).unwrap();
        let batch = batch_of(&[(&[0.5], 0.3), (&[-0.4], 0.8)]);
        let tape = Tape::new();
        let mut grad = Vec::new();
        loss_and_grad(&params, &problem, &batch, 0.0, &tape, &mut grad).unwrap();

        let api_grad = param_gradient(&params, |tape, net| {
            let q0 = record_sq_residual(tape, net, &problem, &[0.5], 0.3);
            let q1 = record_sq_residual(tape, net, &problem, &[-0.4], 0.8);
            Ok((q0 + q1).scale(0.5))
        })
        .unwrap();
        for (a, b) in grad.iter().zip(&api_grad) {
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn state_dependent_residual_rejected() {
        let problem = ProblemSpec::by_id("advsin").unwrap();
        let params = constant_net(1, 0.0);
        assert!(matches!(
            residual(&params, &problem, &[1.0], 0.5),
            Err(HjError::Contract(_))
        ));
    }
}
