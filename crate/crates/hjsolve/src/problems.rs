//! Benchmark catalog: Hamiltonians with analytic p-gradients, initial
//! conditions, domains, boundary kinds, and closed-form solutions where one
//! exists.
//!
//! Hamiltonians and initial conditions are generic over [`Scalar`] so the same
//! formulas evaluate on plain floats (oracles, diagnostics) and on the tape
//! (training gradients). State coordinates always enter as plain `f64`: they
//! never depend on network parameters, unlike the gradient argument and the
//! pulled-back point fed to `g`.

use crate::autodiff::{norm2, norm2_reg, sum, sum_squares, Scalar};
use crate::error::{HjError, Result};

/// Axis-aligned box domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Domain {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lengths().iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(HjError::Config("empty or ragged domain".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(a < b)) {
            return Err(HjError::Config("domain requires lo < hi per axis".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DirichletData {
    Constant(f64),
    /// h(x, t) = exact solution; only valid for problems that have one.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryKind {
    None,
    Periodic,
    Dirichlet(DirichletData),
}

/// Gaussian bump coefficient c(x) = 2 (1 + 3 exp(-4 |x - (1,1)|^2)).
fn coeff_c(x0: f64, x1: f64) -> f64 {
    2.0 * (1.0 + 3.0 * (-4.0 * ((x0 - 1.0).powi(2) + (x1 - 1.0).powi(2))).exp())
}

/// Speed field f(x) = 1 + 3 exp(-4 |x - (1,1)|^2).
fn speed_f(x0: f64, x1: f64) -> f64 {
    1.0 + 3.0 * (-4.0 * ((x0 - 1.0).powi(2) + (x1 - 1.0).powi(2))).exp()
}

/// Piecewise-linear potential of the quadratic control benchmark:
/// psi_i(z) = -a_i z for z >= 0, b_i z for z < 0 with
/// a = (4, 6, 5, ..., 5), b = (3, 9, 6, ..., 6).
fn potential_psi(x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &z) in x.iter().enumerate() {
        let (a, b) = match i {
            0 => (4.0, 3.0),
            1 => (6.0, 9.0),
            _ => (5.0, 6.0),
        };
        acc += if z >= 0.0 { -a * z } else { b * z };
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hamiltonian {
    /// 1/2 |p|^2
    Quadratic,
    /// -1/2 |p|^2
    NegQuadratic,
    /// |p|_2
    EuclideanNorm,
    /// -cos(sum p_i + 1)
    SumCos,
    /// sin(p_1 + p_2)
    SumSin,
    /// p_1 p_2
    Product,
    /// +-sqrt(p_1 + p_2 + 1), radicand clamped at 0; the `squared` variant
    /// reads sqrt(p_1^2 + p_2^2 + 1).
    SqrtSum { negative: bool, squared: bool },
    /// p^3 - p (1-D)
    Cubic,
    /// p^2 (1-D); the viscosity-selection example
    GradSquared,
    /// sin(x) p (1-D, state-dependent)
    AdvectionSin,
    /// -x_2 p_1 + x_1 p_2 (solid rotation)
    Rotation,
    /// p_1 sin x_2 + (sin x_2 + sign(p_2)) p_2 - 1/2 sin^2 x_2 - (1 - cos x_1)
    CostControl,
    /// +-1/2 (|x|^2 + |p|^2)
    Oscillator { negative: bool },
    /// -c(x) p_1 + 2 |p_2| + |p| - 1
    NonconvexOne,
    /// -c(x) |p_1| - c(-x) |p_2|
    NonconvexTwo,
    /// +-f(x) |p|
    Speed { negative: bool },
    /// 1/2 |p|^2 + psi(x)
    QuadraticPotential,
}

impl Hamiltonian {
    pub fn state_dependent(self) -> bool {
        matches!(
            self,
            Hamiltonian::AdvectionSin
                | Hamiltonian::Rotation
                | Hamiltonian::CostControl
                | Hamiltonian::Oscillator { .. }
                | Hamiltonian::NonconvexOne
                | Hamiltonian::NonconvexTwo
                | Hamiltonian::Speed { .. }
                | Hamiltonian::QuadraticPotential
        )
    }

    pub fn value<S: Scalar>(self, x: &[f64], p: &[S]) -> S {
        match self {
            Hamiltonian::Quadratic => sum_squares(p).scale(0.5),
            Hamiltonian::NegQuadratic => sum_squares(p).scale(-0.5),
            Hamiltonian::EuclideanNorm => norm2(p),
            Hamiltonian::SumCos => -sum(p).shift(1.0).cos(),
            Hamiltonian::SumSin => (p[0] + p[1]).sin(),
            Hamiltonian::Product => p[0] * p[1],
            Hamiltonian::SqrtSum { negative, squared } => {
                let radicand = if squared {
                    (p[0].square() + p[1].square()).shift(1.0)
                } else {
                    (p[0] + p[1]).shift(1.0)
                };
                let root = radicand.sqrt_clamped();
                if negative {
                    -root
                } else {
                    root
                }
            }
            Hamiltonian::Cubic => p[0] * p[0] * p[0] - p[0],
            Hamiltonian::GradSquared => p[0].square(),
            Hamiltonian::AdvectionSin => p[0].scale(x[0].sin()),
            Hamiltonian::Rotation => p[0].scale(-x[1]) + p[1].scale(x[0]),
            Hamiltonian::CostControl => {
                let sy = x[1].sin();
                // (sin y + sign(p2)) p2 = sin(y) p2 + |p2|
                let c = -0.5 * sy * sy - (1.0 - x[0].cos());
                (p[0].scale(sy) + p[1].scale(sy) + p[1].abs()).shift(c)
            }
            Hamiltonian::Oscillator { negative } => {
                let xs: f64 = x.iter().map(|v| v * v).sum();
                let h = sum_squares(p).shift(xs).scale(0.5);
                if negative {
                    -h
                } else {
                    h
                }
            }
            Hamiltonian::NonconvexOne => {
                let c = coeff_c(x[0], x[1]);
                (p[0].scale(-c) + p[1].abs().scale(2.0) + norm2(p)).shift(-1.0)
            }
            Hamiltonian::NonconvexTwo => {
                p[0].abs().scale(-coeff_c(x[0], x[1])) + p[1].abs().scale(-coeff_c(-x[0], -x[1]))
            }
            Hamiltonian::Speed { negative } => {
                let f = speed_f(x[0], x[1]);
                norm2(p).scale(if negative { -f } else { f })
            }
            Hamiltonian::QuadraticPotential => sum_squares(p).scale(0.5).shift(potential_psi(x)),
        }
    }

    /// Analytic gradient in p, with the kink regularizations fixed at:
    /// |p| -> p / sqrt(|p|^2 + 1e-16), sign(0) = 0, d|z|/dz(0) = 0, and
    /// clamped square roots contributing zero slope where clamped.
    pub fn grad_p<S: Scalar>(self, x: &[f64], p: &[S]) -> Vec<S> {
        match self {
            Hamiltonian::Quadratic => p.to_vec(),
            Hamiltonian::NegQuadratic => p.iter().map(|v| -*v).collect(),
            Hamiltonian::EuclideanNorm => {
                let inv = recip(norm2_reg(p));
                p.iter().map(|v| *v * inv).collect()
            }
            Hamiltonian::SumCos => {
                let s = sum(p).shift(1.0).sin();
                vec![s; p.len()]
            }
            Hamiltonian::SumSin => {
                let c = (p[0] + p[1]).cos();
                vec![c, c]
            }
            Hamiltonian::Product => vec![p[1], p[0]],
            Hamiltonian::SqrtSum { negative, squared } => {
                let radicand = if squared {
                    (p[0].square() + p[1].square()).shift(1.0)
                } else {
                    (p[0] + p[1]).shift(1.0)
                };
                // 0 where clamped: sqrt_clamped has zero slope there, and we
                // gate the whole expression on the radicand sign.
                let root = radicand.sqrt_clamped();
                let pos = radicand.sign().max(radicand.lift(0.0)); // 1 if radicand > 0 else 0
                let half_inv = recip(root.max(root.lift(1e-150))).scale(0.5) * pos;
                let sgn = if negative { -1.0 } else { 1.0 };
                if squared {
                    vec![
                        p[0] * half_inv.scale(2.0 * sgn),
                        p[1] * half_inv.scale(2.0 * sgn),
                    ]
                } else {
                    vec![half_inv.scale(sgn), half_inv.scale(sgn)]
                }
            }
            Hamiltonian::Cubic => vec![p[0].square().scale(3.0).shift(-1.0)],
            Hamiltonian::GradSquared => vec![p[0].scale(2.0)],
            Hamiltonian::AdvectionSin => vec![p[0].lift(x[0].sin())],
            Hamiltonian::Rotation => vec![p[0].lift(-x[1]), p[0].lift(x[0])],
            Hamiltonian::CostControl => {
                let sy = x[1].sin();
                vec![p[0].lift(sy), p[1].sign().shift(sy)]
            }
            Hamiltonian::Oscillator { negative } => {
                if negative {
                    p.iter().map(|v| -*v).collect()
                } else {
                    p.to_vec()
                }
            }
            Hamiltonian::NonconvexOne => {
                let c = coeff_c(x[0], x[1]);
                let inv = recip(norm2_reg(p));
                vec![
                    (p[0] * inv).shift(-c),
                    p[1].sign().scale(2.0) + p[1] * inv,
                ]
            }
            Hamiltonian::NonconvexTwo => {
                vec![
                    p[0].sign().scale(-coeff_c(x[0], x[1])),
                    p[1].sign().scale(-coeff_c(-x[0], -x[1])),
                ]
            }
            Hamiltonian::Speed { negative } => {
                let f = speed_f(x[0], x[1]);
                let s = if negative { -f } else { f };
                let inv = recip(norm2_reg(p)).scale(s);
                p.iter().map(|v| *v * inv).collect()
            }
            Hamiltonian::QuadraticPotential => p.to_vec(),
        }
    }

    /// Arity of the gradient argument; None means any dimension.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            Hamiltonian::Quadratic
            | Hamiltonian::NegQuadratic
            | Hamiltonian::EuclideanNorm
            | Hamiltonian::SumCos
            | Hamiltonian::QuadraticPotential => None,
            Hamiltonian::Cubic | Hamiltonian::GradSquared | Hamiltonian::AdvectionSin => Some(1),
            _ => Some(2),
        }
    }
}

fn recip<S: Scalar>(s: S) -> S {
    s.recip()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    /// |x|_1
    L1Norm,
    /// Signed distance to two spheres, centers (-+0.3, 0, ..., 0), radius 0.2.
    TwoSpheres,
    /// -cos((pi / d) sum x_i)
    CosSum,
    /// pi (|x_2| - |x_1|)
    RiemannWedge,
    /// sin x_1 + cos x_2
    SinPlusCos,
    /// 1/4 (cos 2 pi x - 1)(cos 2 pi y - 1) - 1
    EikonalBumps,
    /// cos 2 pi x - cos 2 pi y
    CombustionWave,
    /// -(1/10) cos 5x
    CosFifth,
    /// sin x
    SinX,
    /// Cone with plateau: 0 for r >= 0.3, 0.3 - r for 0.1 < r < 0.3, 0.2 for
    /// r <= 0.1, with r measured from (0.4, 0.4).
    ConePlateau,
    /// 0
    Zero,
    /// 1/2 (x^2 / 2.5^2 + y^2 - 1)
    Ellipse,
    /// 1/2 (x^T diag(0.25, 1) x - 1)
    QuadForm,
    /// 1/2 |x - 1|^2
    ShiftedQuadratic,
    /// min_j 1/2 |x - y_j|^2 - alpha_j over three shifted quadratics.
    MinQuadratics,
}

impl InitialCondition {
    pub fn value<S: Scalar>(self, x: &[S]) -> S {
        match self {
            InitialCondition::L1Norm => sum(&x.iter().map(|v| v.abs()).collect::<Vec<_>>()),
            InitialCondition::TwoSpheres => {
                let dist = |center0: f64| {
                    let mut terms: Vec<S> = Vec::with_capacity(x.len());
                    terms.push(x[0].shift(-center0).square());
                    for v in &x[1..] {
                        terms.push(v.square());
                    }
                    sum(&terms).sqrt_guard().shift(-0.2)
                };
                dist(-0.3).min(dist(0.3))
            }
            InitialCondition::CosSum => {
                let k = std::f64::consts::PI / x.len() as f64;
                -sum(x).scale(k).cos()
            }
            InitialCondition::RiemannWedge => {
                (x[1].abs() - x[0].abs()).scale(std::f64::consts::PI)
            }
            InitialCondition::SinPlusCos => x[0].sin() + x[1].cos(),
            InitialCondition::EikonalBumps => {
                let tau = 2.0 * std::f64::consts::PI;
                let a = x[0].scale(tau).cos().shift(-1.0);
                let b = x[1].scale(tau).cos().shift(-1.0);
                (a * b).scale(0.25).shift(-1.0)
            }
            InitialCondition::CombustionWave => {
                let tau = 2.0 * std::f64::consts::PI;
                x[0].scale(tau).cos() - x[1].scale(tau).cos()
            }
            InitialCondition::CosFifth => -x[0].scale(5.0).cos().scale(0.1),
            InitialCondition::SinX => x[0].sin(),
            InitialCondition::ConePlateau => {
                let r = (x[0].shift(-0.4).square() + x[1].shift(-0.4).square()).sqrt_guard();
                let ramp = (-r).shift(0.3);
                ramp.max(r.lift(0.0)).min(r.lift(0.2))
            }
            InitialCondition::Zero => x[0].lift(0.0),
            InitialCondition::Ellipse => {
                (x[0].square().scale(1.0 / 6.25) + x[1].square()).shift(-1.0).scale(0.5)
            }
            InitialCondition::QuadForm => {
                (x[0].square().scale(0.25) + x[1].square()).shift(-1.0).scale(0.5)
            }
            InitialCondition::ShiftedQuadratic => {
                let terms: Vec<S> = x.iter().map(|v| v.shift(-1.0).square()).collect();
                sum(&terms).scale(0.5)
            }
            InitialCondition::MinQuadratics => {
                let centers: [(&[f64], f64); 3] = [
                    (&[-2.0], -0.5),
                    (&[2.0, -2.0, -1.0], 0.0),
                    (&[0.0, 2.0], -1.0),
                ];
                let mut best: Option<S> = None;
                for (prefix, alpha) in centers {
                    let terms: Vec<S> = x
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let c = prefix.get(i).copied().unwrap_or(0.0);
                            v.shift(-c).square()
                        })
                        .collect();
                    let q = sum(&terms).scale(0.5).shift(-alpha);
                    best = Some(match best {
                        None => q,
                        Some(b) => b.min(q),
                    });
                }
                best.unwrap()
            }
        }
    }

    /// Upper bound on |grad g|_2 over the given domain, used to size oracle
    /// search boxes.
    pub fn lipschitz_bound(self, domain: &Domain) -> f64 {
        let d = domain.dim() as f64;
        let far = domain
            .lo
            .iter()
            .chain(domain.hi.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        match self {
            InitialCondition::L1Norm => d.sqrt(),
            InitialCondition::TwoSpheres => 1.0,
            InitialCondition::CosSum => std::f64::consts::PI / d.sqrt(),
            InitialCondition::RiemannWedge => std::f64::consts::PI * 2.0f64.sqrt(),
            InitialCondition::SinPlusCos => 2.0f64.sqrt(),
            InitialCondition::EikonalBumps => 2.0 * std::f64::consts::PI,
            InitialCondition::CombustionWave => 3.0 * std::f64::consts::PI,
            InitialCondition::CosFifth => 0.5,
            InitialCondition::SinX => 1.0,
            InitialCondition::ConePlateau => 1.0,
            InitialCondition::Zero => 0.0,
            InitialCondition::Ellipse | InitialCondition::QuadForm => far + 1.0,
            InitialCondition::ShiftedQuadratic => (far + 1.0) * d.sqrt(),
            InitialCondition::MinQuadratics => (far + 3.0) * d.sqrt(),
        }
    }
}

/// One benchmark instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub id: String,
    pub dim: usize,
    pub hamiltonian: Hamiltonian,
    pub initial: InitialCondition,
    pub domain: Domain,
    pub horizon: f64,
    pub boundary: BoundaryKind,
    pub state_dependent: bool,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.domain.dim() != self.dim {
            return Err(HjError::Config(format!(
                "domain dimension {} != problem dimension {}",
                self.domain.dim(),
                self.dim
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(HjError::Config("horizon must be positive".into()));
        }
        if let Some(fd) = self.hamiltonian.fixed_dim() {
            if fd != self.dim {
                return Err(HjError::Config(format!(
                    "hamiltonian of problem `{}` requires dimension {fd}",
                    self.id
                )));
            }
        }
        if self.state_dependent != self.hamiltonian.state_dependent() {
            return Err(HjError::Config(
                "state_dependent flag inconsistent with hamiltonian".into(),
            ));
        }
        Ok(())
    }

    pub fn hamiltonian_value(&self, x: &[f64], p: &[f64]) -> f64 {
        self.hamiltonian.value(x, p)
    }

    pub fn hamiltonian_grad_p(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        self.hamiltonian.grad_p(x, p)
    }

    pub fn initial_value(&self, x: &[f64]) -> f64 {
        self.initial.value(x)
    }

    /// Closed-form solution where the catalog has one.
    pub fn exact_solution(&self, x: &[f64], t: f64) -> Option<f64> {
        match (self.hamiltonian, self.initial) {
            (Hamiltonian::Quadratic, InitialCondition::L1Norm) => {
                // Per-coordinate 1-D solution of u_t + u_x^2/2 = 0 with g = |x|.
                Some(
                    x.iter()
                        .map(|&xi| {
                            if xi.abs() <= t {
                                xi * xi / (2.0 * t.max(f64::MIN_POSITIVE))
                            } else {
                                xi.abs() - 0.5 * t
                            }
                        })
                        .sum(),
                )
            }
            (Hamiltonian::NegQuadratic, InitialCondition::L1Norm) => {
                Some(x.iter().map(|v| v.abs()).sum::<f64>() + x.len() as f64 * 0.5 * t)
            }
            (Hamiltonian::EuclideanNorm, InitialCondition::TwoSpheres) => {
                Some(self.initial_value(x) - t)
            }
            (Hamiltonian::GradSquared, InitialCondition::Zero) => Some(0.0),
            (Hamiltonian::AdvectionSin, InitialCondition::SinX) => {
                Some((2.0 * ((-t).exp() * (x[0] / 2.0).tan()).atan()).sin())
            }
            (Hamiltonian::Rotation, InitialCondition::ConePlateau) => {
                let (c, s) = (t.cos(), t.sin());
                let rotated = [x[0] * c + x[1] * s, -x[0] * s + x[1] * c];
                Some(self.initial.value(&rotated))
            }
            _ => None,
        }
    }

    pub fn has_exact_solution(&self) -> bool {
        self.exact_solution(&vec![0.1; self.dim], 0.1).is_some()
    }
}

/// Base catalog entries; `<id>-d<k>` selects the dimension for scalable ones.
const SCALABLE: &[&str] = &["burgers", "concave", "collision", "cos", "ocquad-g1", "ocquad-g2"];

fn base_spec(base: &str, dim: usize) -> Option<ProblemSpec> {
    use BoundaryKind::*;
    use Hamiltonian as H;
    use InitialCondition as G;
    let pi = std::f64::consts::PI;
    let (h, g, domain, horizon, boundary) = match base {
        "burgers" => (H::Quadratic, G::L1Norm, Domain::cube(dim, -1.0, 1.0), 1.0, None),
        "concave" => (H::NegQuadratic, G::L1Norm, Domain::cube(dim, -1.0, 1.0), 1.0, None),
        "collision" => (
            H::EuclideanNorm,
            G::TwoSpheres,
            Domain::cube(dim, -1.0, 1.0),
            1.0,
            None,
        ),
        "cos" => (H::SumCos, G::CosSum, Domain::cube(dim, 0.0, 2.0), 0.2, Periodic),
        "riemann" => (H::SumSin, G::RiemannWedge, Domain::cube(2, -1.0, 1.0), 1.0, None),
        "prod" => (
            H::Product,
            G::SinPlusCos,
            Domain::cube(2, 0.0, 2.0 * pi),
            1.5,
            Periodic,
        ),
        "eikonal" => (
            H::SqrtSum {
                negative: false,
                squared: false,
            },
            G::EikonalBumps,
            Domain::cube(2, 0.0, 1.0),
            0.45,
            Periodic,
        ),
        "eikonal-sq" => (
            H::SqrtSum {
                negative: false,
                squared: true,
            },
            G::EikonalBumps,
            Domain::cube(2, 0.0, 1.0),
            0.45,
            Periodic,
        ),
        "combustion" => (
            H::SqrtSum {
                negative: true,
                squared: false,
            },
            G::CombustionWave,
            Domain::cube(2, 0.0, 1.0),
            0.27,
            Periodic,
        ),
        "combustion-sq" => (
            H::SqrtSum {
                negative: true,
                squared: true,
            },
            G::CombustionWave,
            Domain::cube(2, 0.0, 1.0),
            0.27,
            Periodic,
        ),
        "cubic" => (H::Cubic, G::CosFifth, Domain::cube(1, -pi, pi), 0.7, Periodic),
        "viscosity" => (H::GradSquared, G::Zero, Domain::cube(1, -1.0, 1.0), 1.0, None),
        "advsin" => (
            H::AdvectionSin,
            G::SinX,
            Domain::cube(1, 0.0, 2.0 * pi),
            1.0,
            Periodic,
        ),
        "rotation" => (
            H::Rotation,
            G::ConePlateau,
            Domain::cube(2, -1.0, 1.0),
            1.0,
            Periodic,
        ),
        "oc" => (
            H::CostControl,
            G::Zero,
            Domain::cube(2, 0.0, 2.0 * pi),
            1.0,
            Periodic,
        ),
        "osc-plus" => (
            H::Oscillator { negative: false },
            G::Ellipse,
            Domain::cube(2, -1.0, 1.0),
            0.4,
            None,
        ),
        "osc-minus" => (
            H::Oscillator { negative: true },
            G::Ellipse,
            Domain::cube(2, -1.0, 1.0),
            0.4,
            None,
        ),
        "nc1" => (
            H::NonconvexOne,
            G::Ellipse,
            Domain::cube(2, -1.0, 1.0),
            1.0,
            None,
        ),
        "nc2" => (
            H::NonconvexTwo,
            G::Ellipse,
            Domain::cube(2, -1.0, 1.0),
            0.3,
            None,
        ),
        "speed-plus" => (
            H::Speed { negative: false },
            G::QuadForm,
            Domain::cube(2, -1.0, 1.0),
            0.2,
            None,
        ),
        "speed-minus" => (
            H::Speed { negative: true },
            G::QuadForm,
            Domain::cube(2, -1.0, 1.0),
            0.5,
            None,
        ),
        "ocquad-g1" => (
            H::QuadraticPotential,
            G::ShiftedQuadratic,
            Domain::cube(dim, -1.0, 1.0),
            0.5,
            None,
        ),
        "ocquad-g2" => (
            H::QuadraticPotential,
            G::MinQuadratics,
            Domain::cube(dim, -1.0, 1.0),
            0.5,
            None,
        ),
        _ => return Option::None,
    };
    let dim = domain.dim();
    Some(ProblemSpec {
        id: base.to_string(),
        dim,
        hamiltonian: h,
        initial: g,
        domain,
        horizon,
        boundary,
        state_dependent: h.state_dependent(),
    })
}

impl ProblemSpec {
    /// Look up a catalog entry, e.g. "burgers-d10", "collision-d2", "osc-plus".
    pub fn by_id(id: &str) -> Result<ProblemSpec> {
        let (base, dim) = match id.rsplit_once("-d") {
            Some((b, suffix)) if SCALABLE.contains(&b) => {
                let k: usize = suffix
                    .parse()
                    .map_err(|_| HjError::UnknownProblem(id.to_string()))?;
                if k == 0 {
                    return Err(HjError::UnknownProblem(id.to_string()));
                }
                (b, k)
            }
            _ => (id, 0),
        };
        let default_dim = match base {
            "ocquad-g1" | "ocquad-g2" => 10,
            "cos" => 1,
            _ => 1,
        };
        let dim = if dim == 0 { default_dim } else { dim };
        let mut spec =
            base_spec(base, dim).ok_or_else(|| HjError::UnknownProblem(id.to_string()))?;
        spec.id = id.to_string();
        spec.validate()?;
        Ok(spec)
    }

    /// Every benchmark id at its paper dimension(s).
    pub fn catalog_ids() -> Vec<&'static str> {
        vec![
            "burgers-d1",
            "burgers-d10",
            "burgers-d40",
            "concave-d1",
            "concave-d10",
            "concave-d40",
            "collision-d1",
            "collision-d2",
            "collision-d10",
            "collision-d40",
            "cos-d1",
            "cos-d2",
            "riemann",
            "prod",
            "eikonal",
            "eikonal-sq",
            "combustion",
            "combustion-sq",
            "cubic",
            "viscosity",
            "advsin",
            "rotation",
            "oc",
            "osc-plus",
            "osc-minus",
            "nc1",
            "nc2",
            "speed-plus",
            "speed-minus",
            "ocquad-g1",
            "ocquad-g2",
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::fd_check;

    #[test]
    fn hamiltonian_values() {
        let q = Hamiltonian::Quadratic;
        assert_eq!(q.value(&[], &[3.0, 4.0]), 12.5);
        // sum p = -1 puts the cosine argument at 0
        assert_eq!(Hamiltonian::SumCos.value(&[], &[-0.4, -0.6]), -1.0);
        // c(1,1) = 8 but p = 0 kills every gradient term
        let h = Hamiltonian::NonconvexOne.value(&[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(h, -1.0);
    }

    #[test]
    fn hamiltonian_gradients() {
        assert_eq!(Hamiltonian::Quadratic.grad_p(&[], &[3.0, 4.0]), vec![3.0, 4.0]);
        let g = Hamiltonian::EuclideanNorm.grad_p(&[], &[3.0, 4.0]);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        // regularized at the kink
        assert_eq!(Hamiltonian::EuclideanNorm.grad_p(&[], &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn initial_values() {
        assert_eq!(InitialCondition::L1Norm.value(&[1.0, -2.0]), 3.0);
        let g = InitialCondition::TwoSpheres.value(&[0.0, 0.0]);
        assert!((g - 0.1).abs() < 1e-15);
        let e = InitialCondition::Ellipse.value(&[2.5, 0.0]);
        assert!(e.abs() < 1e-15);
    }

    #[test]
    fn cone_plateau_branches() {
        let g = InitialCondition::ConePlateau;
        assert_eq!(g.value(&[0.4, 0.4]), 0.2); // r = 0
        assert_eq!(g.value(&[0.4 + 0.35, 0.4]), 0.0); // r >= 0.3
        let mid = g.value(&[0.4 + 0.2, 0.4]);
        assert!((mid - 0.1).abs() < 1e-15); // 0.3 - 0.2
    }

    #[test]
    fn grad_p_matches_finite_differences_away_from_kinks() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let x2 = [0.3, -0.5];
        let cases: Vec<(Hamiltonian, usize)> = vec![
            (Hamiltonian::Quadratic, 2),
            (Hamiltonian::NegQuadratic, 2),
            (Hamiltonian::EuclideanNorm, 2),
            (Hamiltonian::SumCos, 2),
            (Hamiltonian::SumSin, 2),
            (Hamiltonian::Product, 2),
            (Hamiltonian::SqrtSum { negative: false, squared: false }, 2),
            (Hamiltonian::SqrtSum { negative: true, squared: true }, 2),
            (Hamiltonian::Cubic, 1),
            (Hamiltonian::GradSquared, 1),
            (Hamiltonian::AdvectionSin, 1),
            (Hamiltonian::Rotation, 2),
            (Hamiltonian::CostControl, 2),
            (Hamiltonian::Oscillator { negative: false }, 2),
            (Hamiltonian::NonconvexOne, 2),
            (Hamiltonian::NonconvexTwo, 2),
            (Hamiltonian::Speed { negative: true }, 2),
            (Hamiltonian::QuadraticPotential, 2),
        ];
        for (h, d) in cases {
            for _ in 0..20 {
                // stay > 1e-3 away from the |.| and sign kinks at p_i = 0
                let p: Vec<f64> = (0..d)
                    .map(|_| {
                        let v: f64 = rng.gen::<f64>() * 1.5 + 0.05;
                        if rng.gen::<bool>() { v } else { -v }
                    })
                    .collect();
                // keep sqrt radicands well inside the domain
                let p = match h {
                    Hamiltonian::SqrtSum { squared: false, .. } => {
                        vec![p[0].abs(), p[1].abs()]
                    }
                    _ => p,
                };
                let err = fd_check(
                    |q| h.value(&x2[..d.min(2)], q),
                    |q| h.grad_p(&x2[..d.min(2)], q),
                    &p,
                    1e-5,
                );
                assert!(err <= 1e-6, "{h:?} at {p:?}: rel err {err}");
            }
        }
    }

    #[test]
    fn exact_solutions() {
        let burgers = ProblemSpec::by_id("burgers-d1").unwrap();
        assert_eq!(burgers.exact_solution(&[2.0], 1.0), Some(1.5));
        let concave = ProblemSpec::by_id("concave-d1").unwrap();
        assert_eq!(concave.exact_solution(&[0.0], 1.0), Some(0.5));
        let collision = ProblemSpec::by_id("collision-d2").unwrap();
        let u = collision.exact_solution(&[0.0, 0.0], 0.5).unwrap();
        assert!((u - (-0.4)).abs() < 1e-15);
        let advsin = ProblemSpec::by_id("advsin").unwrap();
        let u = advsin
            .exact_solution(&[std::f64::consts::FRAC_PI_2], 1.0)
            .unwrap();
        assert!((u - 0.648054).abs() < 1e-5, "{u}");
        assert_eq!(ProblemSpec::by_id("riemann").unwrap().exact_solution(&[0.1, 0.1], 0.5), None);
    }

    #[test]
    fn exact_solution_at_t0_equals_initial() {
        for id in ProblemSpec::catalog_ids() {
            let spec = ProblemSpec::by_id(id).unwrap();
            let x: Vec<f64> = (0..spec.dim)
                .map(|i| {
                    let (a, b) = (spec.domain.lo[i], spec.domain.hi[i]);
                    a + (b - a) * (0.3 + 0.11 * i as f64 % 0.7)
                })
                .collect();
            if let Some(u0) = spec.exact_solution(&x, 0.0) {
                let g = spec.initial_value(&x);
                assert!((u0 - g).abs() < 1e-12, "{id}: {u0} vs {g}");
            }
        }
    }

    #[test]
    fn catalog_is_complete_and_runnable() {
        for id in ProblemSpec::catalog_ids() {
            let spec = ProblemSpec::by_id(id).unwrap();
            spec.validate().unwrap();
            let x = vec![0.25; spec.dim];
            let p = vec![0.35; spec.dim];
            let h = spec.hamiltonian_value(&x, &p);
            let gp = spec.hamiltonian_grad_p(&x, &p);
            let g0 = spec.initial_value(&x);
            assert!(h.is_finite() && g0.is_finite(), "{id}");
            assert_eq!(gp.len(), spec.dim, "{id}");
            assert!(gp.iter().all(|v| v.is_finite()), "{id}");
            assert_eq!(spec.state_dependent, spec.hamiltonian.state_dependent());
        }
    }

    #[test]
    fn unknown_ids_rejected() {
        assert!(matches!(
            ProblemSpec::by_id("nonsense"),
            Err(HjError::UnknownProblem(_))
        ));
        assert!(matches!(
            ProblemSpec::by_id("burgers-d0"),
            Err(HjError::UnknownProblem(_))
        ));
        assert!(ProblemSpec::by_id("cubic-d2").is_err());
    }

    /// The closed form g - t agrees with the Hopf-Lax ball infimum on the
    /// region where no sphere center is within reach (t <= min_i |x - c_i|);
    /// inside that region the infimum saturates at -radius instead. Brute
    /// force the infimum and compare on the validity region.
    #[test]
    fn two_sphere_exact_matches_ball_infimum_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let spec = ProblemSpec::by_id("collision-d2").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 50 {
            let x = [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0];
            let t = rng.gen::<f64>() * 0.9 + 0.05;
            let rho = ((x[0] + 0.3).powi(2) + x[1].powi(2))
                .sqrt()
                .min(((x[0] - 0.3).powi(2) + x[1].powi(2)).sqrt());
            if t > rho {
                continue;
            }
            checked += 1;
            let mut best = f64::INFINITY;
            let n = 400;
            for i in 0..=n {
                for j in 0..=n {
                    let (dx, dy) = (
                        t * (2.0 * i as f64 / n as f64 - 1.0),
                        t * (2.0 * j as f64 / n as f64 - 1.0),
                    );
                    if dx * dx + dy * dy <= t * t {
                        best = best.min(spec.initial_value(&[x[0] + dx, x[1] + dy]));
                    }
                }
            }
            let exact = spec.exact_solution(&x, t).unwrap();
            assert!((best - exact).abs() < 4.0 * t / 400.0, "{best} vs {exact}");
        }
    }
}
