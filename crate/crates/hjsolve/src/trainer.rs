//! Training loop: fresh uniform collocation sampling per epoch, loss and
//! gradient evaluation, parameter update, and the improvement-triggered
//! step-size decay.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{HjError, Result};
use crate::loss::{loss_and_grad, CollocationBatch};
use crate::network::{forward_with, init_network, ForwardScratch, MlpParams, NetworkConfig};
use crate::problems::{BoundaryKind, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Gd,
    /// Adam(0.9, 0.999, 1e-8); the step size follows the same decay schedule.
    Adam,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Interior collocation points per epoch (M).
    pub batch: usize,
    /// Boundary collocation points per epoch (M_b).
    pub boundary_batch: usize,
    /// Initial step size.
    pub alpha0: f64,
    /// Decay factor applied when the epoch loss improves on the best so far.
    pub gamma: f64,
    /// Boundary-loss weight.
    pub lambda: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Epoch-CSV cadence (rows every `log_every` epochs; 0 disables).
    pub log_every: usize,
    /// Stop once the epoch loss drops below this value (0 disables).
    pub early_stop_loss: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200_000,
            batch: 5_000,
            boundary_batch: 200,
            alpha0: 1e-3,
            gamma: 0.99,
            lambda: 0.1,
            seed: 0,
            optimizer: OptimizerKind::Gd,
            log_every: 100,
            early_stop_loss: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 && self.early_stop_loss == 0.0 {
            // zero-epoch runs are allowed; they return the initialization
        }
        if self.batch < 1 {
            return Err(HjError::Config("batch (M) must be at least 1".into()));
        }
        if !(self.alpha0 > 0.0) {
            return Err(HjError::Config("alpha0 must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(HjError::Config("gamma must lie in (0, 1]".into()));
        }
        if self.lambda < 0.0 {
            return Err(HjError::Config("lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub loss_trace: Vec<f64>,
    pub alpha_trace: Vec<f64>,
    pub epoch_ms: Vec<f64>,
    pub final_params: MlpParams,
    pub epochs_run: usize,
    /// First epoch whose loss fell below `early_stop_loss`, if any.
    pub first_below_threshold: Option<usize>,
    /// Peak bytes held by parameters, optimizer state and the tape arena.
    pub peak_memory_bytes: usize,
}

impl TrainReport {
    pub fn sec_per_epoch(&self) -> f64 {
        if self.epoch_ms.is_empty() {
            return 0.0;
        }
        self.epoch_ms.iter().sum::<f64>() / (1000.0 * self.epoch_ms.len() as f64)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Draw M interior points uniformly on `Omega x [0, T]` and M_b boundary
/// points uniformly on the faces (face picked proportional to its measure),
/// with periodic partners mirrored across the box.
pub fn sample_collocation(
    problem: &ProblemSpec,
    m: usize,
    m_b: usize,
    rng: &mut ChaCha8Rng,
) -> CollocationBatch {
    let d = problem.dim;
    let (lo, hi) = (&problem.domain.lo, &problem.domain.hi);
    let horizon = problem.horizon;
    let mut batch = CollocationBatch {
        dim: d,
        interior_x: Vec::with_capacity(m * d),
        interior_t: Vec::with_capacity(m),
        ..Default::default()
    };
    for _ in 0..m {
        for i in 0..d {
            batch.interior_x.push(lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>());
        }
        batch.interior_t.push(horizon * rng.gen::<f64>());
    }
    if matches!(problem.boundary, BoundaryKind::None) || m_b == 0 {
        return batch;
    }

    // Face f = 2*axis + side; measure is the product of the other lengths.
    let lengths = problem.domain.lengths();
    let mut weights = Vec::with_capacity(2 * d);
    for axis in 0..d {
        let measure: f64 = if d == 1 {
            1.0
        } else {
            lengths
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != axis)
                .map(|(_, l)| l)
                .product()
        };
        weights.push(measure);
        weights.push(measure);
    }
    let total: f64 = weights.iter().sum();
    let periodic = matches!(problem.boundary, BoundaryKind::Periodic);
    for _ in 0..m_b {
        let mut pick = rng.gen::<f64>() * total;
        let mut face = 0;
        for (f, w) in weights.iter().enumerate() {
            if pick < *w || f == weights.len() - 1 {
                face = f;
                break;
            }
            pick -= w;
        }
        let (axis, side) = (face / 2, face % 2);
        let base = batch.boundary_x.len();
        for i in 0..d {
            if i == axis {
                batch
                    .boundary_x
                    .push(if side == 0 { lo[i] } else { hi[i] });
            } else {
                batch.boundary_x.push(lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>());
            }
        }
        batch.boundary_t.push(horizon * rng.gen::<f64>());
        if periodic {
            for i in 0..d {
                let v = batch.boundary_x[base + i];
                batch.partner_x.push(if i == axis {
                    if side == 0 {
                        hi[i]
                    } else {
                        lo[i]
                    }
                } else {
                    v
                });
            }
        }
    }
    batch
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// One loss+gradient evaluation; the closure owns sampling so both the plain
/// trainer and the time-marcher drive the same loop.
pub(crate) fn optimize<F>(
    mut params: MlpParams,
    cfg: &TrainConfig,
    mut eval: F,
    mut csv: Option<&mut dyn Write>,
) -> Result<TrainReport>
where
    F: FnMut(&MlpParams, usize, &Tape, &mut Vec<f64>) -> Result<f64>,
{
    cfg.validate()?;
    let n_params = params.param_count();
    let mut flat = params.flatten();
    let mut grad = Vec::with_capacity(n_params);
    let tape = Tape::new();
    let mut adam = match cfg.optimizer {
        OptimizerKind::Adam => Some(AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }),
        OptimizerKind::Gd => None,
    };

    let mut alpha = cfg.alpha0;
    let mut best = f64::INFINITY;
    let mut report = TrainReport {
        loss_trace: Vec::with_capacity(cfg.epochs),
        alpha_trace: Vec::with_capacity(cfg.epochs),
        epoch_ms: Vec::with_capacity(cfg.epochs),
        final_params: params.clone(),
        epochs_run: 0,
        first_below_threshold: None,
        peak_memory_bytes: 0,
    };
    if let Some(w) = csv.as_deref_mut() {
        writeln!(w, "epoch,loss,alpha,wall_ms")?;
    }

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let loss = match eval(&params, epoch, &tape, &mut grad) {
            Ok(l) if l.is_finite() => l,
            Ok(l) => {
                return Err(HjError::Diverged {
                    epoch,
                    loss: l,
                    last_good: Box::new(params),
                })
            }
            Err(HjError::NonFinite(_)) => {
                return Err(HjError::Diverged {
                    epoch,
                    loss: f64::NAN,
                    last_good: Box::new(params),
                })
            }
            Err(e) => return Err(e),
        };

        match adam.as_mut() {
            None => {
                for (p, g) in flat.iter_mut().zip(&grad) {
                    *p -= alpha * g;
                }
            }
            Some(state) => {
                state.t += 1;
                let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
                let c1 = 1.0 - b1.powi(state.t as i32);
                let c2 = 1.0 - b2.powi(state.t as i32);
                for i in 0..n_params {
                    let g = grad[i];
                    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
                    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
                    flat[i] -= alpha * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
                }
            }
        }
        params.assign_flat(&flat);

        let wall_ms = started.elapsed().as_secs_f64() * 1000.0;
        report.loss_trace.push(loss);
        report.alpha_trace.push(alpha);
        report.epoch_ms.push(wall_ms);
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs) {
            if let Some(w) = csv.as_deref_mut() {
                writeln!(w, "{epoch},{loss:.17e},{alpha:.17e},{wall_ms:.3}")?;
            }
        }

        if loss < best {
            best = loss;
            alpha *= cfg.gamma;
        }
        if report.first_below_threshold.is_none()
            && cfg.early_stop_loss > 0.0
            && loss < cfg.early_stop_loss
        {
            report.first_below_threshold = Some(epoch);
        }
        report.epochs_run = epoch + 1;
        if cfg.early_stop_loss > 0.0 && loss < cfg.early_stop_loss {
            break;
        }
    }

    let state_bytes = match cfg.optimizer {
        OptimizerKind::Adam => 4 * n_params * 8,
        OptimizerKind::Gd => 2 * n_params * 8,
    };
    report.peak_memory_bytes = state_bytes + tape.peak_bytes();
    report.final_params = params;
    Ok(report)
}

/// Algorithm: per epoch, sample a fresh uniform batch, evaluate the total
/// loss and its gradient, step the optimizer, and decay the step size on
/// strict improvement of the best-so-far loss.
pub fn train(
    problem: &ProblemSpec,
    net_config: &NetworkConfig,
    train_config: &TrainConfig,
) -> Result<TrainReport> {
    train_logged(problem, net_config, train_config, None)
}

pub fn train_logged(
    problem: &ProblemSpec,
    net_config: &NetworkConfig,
    train_config: &TrainConfig,
    csv: Option<&mut dyn Write>,
) -> Result<TrainReport> {
    problem.validate()?;
    if net_config.input_dim != problem.dim + 1 {
        return Err(HjError::Config(format!(
            "network input_dim {} does not match problem dimension {}",
            net_config.input_dim, problem.dim
        )));
    }
    if problem.state_dependent {
        return Err(HjError::Config(format!(
            "problem `{}` is state-dependent; use the time marcher",
            problem.id
        )));
    }
    let params = init_network(net_config, train_config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let lambda = train_config.lambda;
    let (m, mb) = (train_config.batch, train_config.boundary_batch);
    let problem = problem.clone();
    optimize(
        params,
        train_config,
        move |p, _epoch, tape, grad| {
            let batch = sample_collocation(&problem, m, mb, &mut rng);
            loss_and_grad(p, &problem, &batch, lambda, tape, grad)
        },
        csv,
    )
}

/// Evaluation-point layout for error measurement: a regular grid for d <= 2
/// (grid_per_axis points per axis crossed with `time_slices` times including
/// endpoints), seeded uniform random spacetime points for d > 2.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalSpec {
    pub grid_per_axis: usize,
    pub time_slices: usize,
    pub random_points: usize,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            grid_per_axis: 201,
            time_slices: 11,
            random_points: 100_000,
            seed: 9001,
        }
    }
}

pub(crate) fn for_each_eval_point<F: FnMut(&[f64], f64)>(
    problem: &ProblemSpec,
    spec: &EvalSpec,
    mut visit: F,
) {
    let d = problem.dim;
    let (lo, hi) = (&problem.domain.lo, &problem.domain.hi);
    if d <= 2 {
        let n = spec.grid_per_axis.max(2);
        let nt = spec.time_slices.max(2);
        let coord = |i: usize, k: usize| lo[i] + (hi[i] - lo[i]) * k as f64 / (n - 1) as f64;
        for kt in 0..nt {
            let t = problem.horizon * kt as f64 / (nt - 1) as f64;
            if d == 1 {
                for k in 0..n {
                    visit(&[coord(0, k)], t);
                }
            } else {
                for kx in 0..n {
                    for ky in 0..n {
                        visit(&[coord(0, kx), coord(1, ky)], t);
                    }
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut x = vec![0.0; d];
        for _ in 0..spec.random_points {
            for i in 0..d {
                x[i] = lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>();
            }
            let t = problem.horizon * rng.gen::<f64>();
            visit(&x, t);
        }
    }
}

/// MSE and relative MSE of an arbitrary evaluator against the closed form.
pub fn evaluate_mse_with<F: FnMut(&[f64], f64) -> f64>(
    mut u: F,
    problem: &ProblemSpec,
    spec: &EvalSpec,
) -> Result<(f64, f64)> {
    if !problem.has_exact_solution() {
        return Err(HjError::Contract(format!(
            "problem `{}` has no closed-form solution to evaluate against",
            problem.id
        )));
    }
    let mut sq = 0.0;
    let mut ref_sq = 0.0;
    let mut count = 0usize;
    for_each_eval_point(problem, spec, |x, t| {
        let exact = problem.exact_solution(x, t).unwrap();
        let diff = u(x, t) - exact;
        sq += diff * diff;
        ref_sq += exact * exact;
        count += 1;
    });
    let mse = sq / count as f64;
    let rmse = mse / (ref_sq / count as f64).max(1e-12);
    Ok((mse, rmse))
}

/// MSE / RMSE of the trained network against the closed form.
pub fn evaluate_mse(
    params: &MlpParams,
    problem: &ProblemSpec,
    spec: &EvalSpec,
) -> Result<(f64, f64)> {
    let mut ws = ForwardScratch::default();
    evaluate_mse_with(|x, t| forward_with(params, x, t, &mut ws), problem, spec)
}
