//! Numerical Hopf-Lax evaluation for convex / concave Hamiltonians:
//!
//!   u(x, t) = inf_y { t H*((x - y) / t) + g(y) }     (sup for concave H)
//!
//! The conjugate term is analytic where the catalog provides it; otherwise an
//! inner numerical maximization computes H*(q) = sup_z { z.q - H(z) }. The
//! outer problem runs multi-start coordinate descent with shrinking steps,
//! starting from a Halton sequence over a box sized by t max|grad H| plus a
//! diameter guard. Verification-only: training never calls this.

use crate::error::{HjError, Result};
use crate::problems::{Hamiltonian, ProblemSpec};

#[derive(Clone, Copy, Debug)]
pub struct HopfLaxOpts {
    pub starts: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Force the generic inner-maximization route even when an analytic
    /// conjugate exists (cross-validation of the machinery).
    pub force_numeric_conjugate: bool,
}

impl Default for HopfLaxOpts {
    fn default() -> Self {
        HopfLaxOpts {
            starts: 16,
            tol: 1e-10,
            max_sweeps: 200,
            force_numeric_conjugate: false,
        }
    }
}

enum Conjugate {
    /// t H*((x-y)/t) as a closure of (diff, t); minimized over y.
    Analytic(fn(&[f64], f64) -> f64),
    /// Concave H: u = sup_y { t H_*((x-y)/t) + g(y) } with analytic H_*.
    AnalyticConcave(fn(&[f64], f64) -> f64),
    /// H* = indicator of the unit ball: u = inf over |y - x| <= t of g.
    BallIndicator,
    /// Generic convex H: inner sup_z { z.q - H(z) } computed numerically.
    Numeric { z_radius: f64 },
}

fn conjugate_for(problem: &ProblemSpec, opts: &HopfLaxOpts) -> Result<Conjugate> {
    let unsupported = |why: &str| {
        Err(HjError::UnsupportedOracle(
            problem.id.clone(),
            why.to_string(),
        ))
    };
    if problem.state_dependent {
        return unsupported("state-dependent Hamiltonian");
    }
    match problem.hamiltonian {
        Hamiltonian::Quadratic => {
            if opts.force_numeric_conjugate {
                // |grad H| = |p|; p stays within the g-Lipschitz ball
                let r = problem.initial.lipschitz_bound(&problem.domain) + 1.0;
                Ok(Conjugate::Numeric { z_radius: r })
            } else {
                Ok(Conjugate::Analytic(|diff, t| {
                    diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * t)
                }))
            }
        }
        Hamiltonian::GradSquared => {
            if opts.force_numeric_conjugate {
                let r = problem.initial.lipschitz_bound(&problem.domain) + 1.0;
                Ok(Conjugate::Numeric { z_radius: r })
            } else {
                // H = p^2 has H*(q) = q^2 / 4
                Ok(Conjugate::Analytic(|diff, t| {
                    diff.iter().map(|d| d * d).sum::<f64>() / (4.0 * t)
                }))
            }
        }
        Hamiltonian::NegQuadratic => Ok(Conjugate::AnalyticConcave(|diff, t| {
            -diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * t)
        })),
        Hamiltonian::EuclideanNorm => Ok(Conjugate::BallIndicator),
        _ => unsupported("Hamiltonian is neither convex nor concave with a usable conjugate"),
    }
}

/// Radical-inverse Halton point in [0,1]^d (bases 2, 3, 5, ...).
fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    (0..dim)
        .map(|i| {
            let base = PRIMES[i % PRIMES.len()];
            let mut n = index + 1;
            let mut denom = 1.0;
            let mut out = 0.0;
            while n > 0 {
                denom *= base as f64;
                out += (n % base) as f64 / denom;
                n /= base;
            }
            out
        })
        .collect()
}

/// Cyclic coordinate descent with shrinking steps; optional projection keeps
/// iterates feasible (used for the ball-constrained case).
fn coordinate_descent<F, P>(
    f: &F,
    start: &[f64],
    initial_step: f64,
    tol: f64,
    max_sweeps: usize,
    project: &P,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
    P: Fn(&mut Vec<f64>),
{
    let mut y = start.to_vec();
    project(&mut y);
    let mut best = f(&y);
    let mut step = initial_step;
    for _ in 0..max_sweeps {
        let mut improved = false;
        for i in 0..y.len() {
            for sign in [1.0, -1.0] {
                let old = y[i];
                y[i] = old + sign * step;
                project(&mut y);
                let v = f(&y);
                if v < best - 1e-18 {
                    best = v;
                    improved = true;
                } else {
                    y[i] = old;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < tol {
                break;
            }
        }
    }
    (y, best)
}

fn multistart_minimize<F, P>(
    f: F,
    center: &[f64],
    radius: f64,
    opts: &HopfLaxOpts,
    project: P,
) -> f64
where
    F: Fn(&[f64]) -> f64,
    P: Fn(&mut Vec<f64>),
{
    let d = center.len();
    let mut best = f64::INFINITY;
    for s in 0..opts.starts {
        let start: Vec<f64> = if s == 0 {
            center.to_vec()
        } else {
            halton(s - 1, d)
                .iter()
                .zip(center)
                .map(|(h, c)| c + radius * (2.0 * h - 1.0))
                .collect()
        };
        let (_, v) = coordinate_descent(&f, &start, radius.max(1e-6) / 2.0, opts.tol, opts.max_sweeps, &project);
        best = best.min(v);
    }
    best
}

/// Numerical inner Legendre transform: H*(q) = sup_z { z.q - H(z) }.
fn numeric_conjugate(problem: &ProblemSpec, q: &[f64], z_radius: f64, opts: &HopfLaxOpts) -> f64 {
    let neg = |z: &[f64]| {
        problem.hamiltonian_value(z, z) // state-independent: x ignored
            - z.iter().zip(q).map(|(zi, qi)| zi * qi).sum::<f64>()
    };
    let center = vec![0.0; q.len()];
    let inner_opts = HopfLaxOpts {
        starts: 8,
        ..*opts
    };
    -multistart_minimize(neg, &center, z_radius, &inner_opts, |_| {})
}

/// Evaluate the Hopf-Lax representation at one spacetime point.
pub fn hopf_lax_eval(
    problem: &ProblemSpec,
    x: &[f64],
    t: f64,
    opts: &HopfLaxOpts,
) -> Result<f64> {
    if x.len() != problem.dim {
        return Err(HjError::DimensionMismatch(format!(
            "expected {} coordinates, got {}",
            problem.dim,
            x.len()
        )));
    }
    if !(t > 0.0) {
        return Err(HjError::Contract("hopf-lax needs t > 0".into()));
    }
    let conj = conjugate_for(problem, opts)?;
    let g = |y: &[f64]| problem.initial_value(y);
    let lip = problem.initial.lipschitz_bound(&problem.domain);
    let guard = 0.5 * problem.domain.diameter();

    let value = match conj {
        Conjugate::Analytic(hstar) => {
            // reach: |y* - x| = t |grad H(p*)|, |p*| <= Lip(g)
            let radius = t * grad_bound(problem.hamiltonian, lip) + guard;
            let f = |y: &[f64]| {
                let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                hstar(&diff, t) + g(y)
            };
            multistart_minimize(f, x, radius, opts, |_| {})
        }
        Conjugate::AnalyticConcave(hstar) => {
            let radius = t * grad_bound(problem.hamiltonian, lip) + guard;
            let f = |y: &[f64]| {
                let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                -(hstar(&diff, t) + g(y))
            };
            -multistart_minimize(f, x, radius, opts, |_| {})
        }
        Conjugate::BallIndicator => {
            let xc = x.to_vec();
            let project = move |y: &mut Vec<f64>| {
                let norm: f64 = y
                    .iter()
                    .zip(&xc)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if norm > t {
                    let scalef = t / norm;
                    for (yi, xi) in y.iter_mut().zip(&xc) {
                        *yi = xi + (*yi - xi) * scalef;
                    }
                }
            };
            multistart_minimize(|y| g(y), x, t, opts, project)
        }
        Conjugate::Numeric { z_radius } => {
            let radius = t * grad_bound(problem.hamiltonian, lip) + guard;
            let f = |y: &[f64]| {
                let q: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) / t).collect();
                t * numeric_conjugate(problem, &q, z_radius, opts) + g(y)
            };
            multistart_minimize(f, x, radius, opts, |_| {})
        }
    };
    Ok(value)
}

/// Bound on |grad H| over the p-ball of radius `lip`.
fn grad_bound(h: Hamiltonian, lip: f64) -> f64 {
    match h {
        Hamiltonian::Quadratic | Hamiltonian::NegQuadratic => lip,
        Hamiltonian::EuclideanNorm => 1.0,
        Hamiltonian::GradSquared => 2.0 * lip,
        _ => lip + 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemSpec;

    #[test]
    fn burgers_matches_closed_form() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let opts = HopfLaxOpts::default();
        let u = hopf_lax_eval(&problem, &[2.0], 1.0, &opts).unwrap();
        assert!((u - 1.5).abs() <= 1e-8, "{u}");
        // inside the parabolic region
        let u = hopf_lax_eval(&problem, &[0.3], 1.0, &opts).unwrap();
        assert!((u - 0.045).abs() <= 1e-8, "{u}");
    }

    #[test]
    fn collision_ball_infimum() {
        let problem = ProblemSpec::by_id("collision-d2").unwrap();
        let opts = HopfLaxOpts::default();
        // outside the overshoot region the closed form g - t holds
        let u = hopf_lax_eval(&problem, &[0.9, 0.4], 0.5, &opts).unwrap();
        let exact = problem.exact_solution(&[0.9, 0.4], 0.5).unwrap();
        assert!((u - exact).abs() <= 1e-7, "{u} vs {exact}");
        // at the origin with t = 0.5 the infimum saturates at -radius
        let u = hopf_lax_eval(&problem, &[0.0, 0.0], 0.5, &opts).unwrap();
        assert!((u - (-0.2)).abs() <= 1e-7, "{u}");
    }

    #[test]
    fn concave_supremum() {
        let problem = ProblemSpec::by_id("concave-d1").unwrap();
        let opts = HopfLaxOpts::default();
        let u = hopf_lax_eval(&problem, &[0.0], 1.0, &opts).unwrap();
        assert!((u - 0.5).abs() <= 1e-8, "{u}");
    }

    #[test]
    fn short_time_limit_recovers_initial_condition() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let opts = HopfLaxOpts::default();
        let u = hopf_lax_eval(&problem, &[0.37], 1e-8, &opts).unwrap();
        assert!((u - 0.37).abs() <= 1e-6, "{u}");
    }

    #[test]
    fn numeric_conjugate_route_agrees_with_analytic() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let analytic = HopfLaxOpts::default();
        let numeric = HopfLaxOpts {
            force_numeric_conjugate: true,
            tol: 1e-10,
            ..Default::default()
        };
        for &(x, t) in &[(0.5, 0.4), (-1.2, 0.8), (1.7, 1.0)] {
            let a = hopf_lax_eval(&problem, &[x], t, &analytic).unwrap();
            let b = hopf_lax_eval(&problem, &[x], t, &numeric).unwrap();
            assert!((a - b).abs() <= 1e-5, "x={x} t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn nonconvex_rejected() {
        let problem = ProblemSpec::by_id("cos-d1").unwrap();
        assert!(matches!(
            hopf_lax_eval(&problem, &[1.0], 0.1, &HopfLaxOpts::default()),
            Err(HjError::UnsupportedOracle(..))
        ));
    }
}
