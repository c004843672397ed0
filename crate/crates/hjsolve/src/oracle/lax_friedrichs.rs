//! First-order monotone Lax-Friedrichs scheme on 1-D / 2-D grids, used as an
//! independent reference for nonconvex Hamiltonians. Dissipation coefficients
//! are per-axis bounds of |dH/dp_i| over the observed one-sided-difference
//! range; forward Euler in time under a CFL number of 0.45.

use crate::error::{HjError, Result};
use crate::problems::{BoundaryKind, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridBoundary {
    /// Wrap-around stencils; nodes exclude the right edge (uniform spacing
    /// box_length / n).
    Periodic,
    /// Linear extrapolation ghost nodes; nodes include both edges.
    Outflow,
}

#[derive(Clone, Debug)]
pub struct GridSpec {
    /// Nodes per axis.
    pub resolution: Vec<usize>,
    /// March until this time.
    pub t_end: f64,
    /// Times at which slices are stored (always includes 0 and t_end).
    pub report_times: Vec<f64>,
    /// Boundary treatment; defaults to the problem's boundary kind.
    pub boundary: Option<GridBoundary>,
    /// CFL number; the scheme is monotone for values up to 0.5.
    pub cfl: f64,
    /// Start from these nodal values instead of sampling g (row-major).
    pub initial_slice: Option<Vec<f64>>,
    /// Pin the per-axis dissipation coefficients (comparison runs must share
    /// one scheme); checked against the observed requirement every step.
    pub alpha_override: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn new(resolution: Vec<usize>, t_end: f64) -> Self {
        GridSpec {
            resolution,
            t_end,
            report_times: vec![0.0, t_end],
            boundary: None,
            cfl: 0.45,
            initial_slice: None,
            alpha_override: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridSolution {
    pub problem_id: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: Vec<usize>,
    pub boundary: GridBoundary,
    pub dt_used: f64,
    pub times: Vec<f64>,
    /// One slice per reported time, row-major over (x) or (x, y).
    pub slices: Vec<Vec<f64>>,
}

impl GridSolution {
    pub fn node_coord(&self, axis: usize, index: usize) -> f64 {
        let n = self.resolution[axis];
        let len = self.hi[axis] - self.lo[axis];
        match self.boundary {
            GridBoundary::Periodic => self.lo[axis] + len * index as f64 / n as f64,
            GridBoundary::Outflow => self.lo[axis] + len * index as f64 / (n - 1) as f64,
        }
    }

    pub fn slice_at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9)
            .map(|i| self.slices[i].as_slice())
    }

    /// CSV rows `x[,y],t,u` for every stored slice.
    pub fn write_csv(&self, w: &mut dyn std::io::Write) -> Result<()> {
        let d = self.resolution.len();
        if d == 1 {
            writeln!(w, "x,t,u")?;
        } else {
            writeln!(w, "x,y,t,u")?;
        }
        for (slice, &t) in self.slices.iter().zip(&self.times) {
            if d == 1 {
                for (i, u) in slice.iter().enumerate() {
                    writeln!(w, "{},{},{}", self.node_coord(0, i), t, u)?;
                }
            } else {
                let ny = self.resolution[1];
                for (idx, u) in slice.iter().enumerate() {
                    let (i, j) = (idx / ny, idx % ny);
                    writeln!(
                        w,
                        "{},{},{},{}",
                        self.node_coord(0, i),
                        self.node_coord(1, j),
                        t,
                        u
                    )?;
                }
            }
        }
        Ok(())
    }
}

struct Mesh {
    d: usize,
    n: Vec<usize>,
    dx: Vec<f64>,
    lo: Vec<f64>,
    boundary: GridBoundary,
}

impl Mesh {
    fn coords(&self, idx: usize) -> Vec<f64> {
        if self.d == 1 {
            vec![self.lo[0] + self.dx[0] * idx as f64]
        } else {
            let ny = self.n[1];
            vec![
                self.lo[0] + self.dx[0] * (idx / ny) as f64,
                self.lo[1] + self.dx[1] * (idx % ny) as f64,
            ]
        }
    }

    fn neighbor(&self, u: &[f64], idx: usize, axis: usize, dir: isize) -> f64 {
        let (i, j) = if self.d == 1 {
            (idx as isize, 0isize)
        } else {
            ((idx / self.n[1]) as isize, (idx % self.n[1]) as isize)
        };
        let (mut a, mut b) = (i, j);
        if axis == 0 {
            a += dir;
        } else {
            b += dir;
        }
        let n_axis = self.n[axis] as isize;
        let clamp_lin = |k: isize, n: isize, u: &[f64], stride: isize, base: isize| -> f64 {
            // linear extrapolation ghost: u[-1] = 2 u[0] - u[1], etc.
            if k < 0 {
                2.0 * u[base as usize] - u[(base + stride) as usize]
            } else if k >= n {
                let edge = base + stride * (n - 1);
                2.0 * u[edge as usize] - u[(edge - stride) as usize]
            } else {
                u[(base + stride * k) as usize]
            }
        };
        match self.boundary {
            GridBoundary::Periodic => {
                let wrap = |k: isize, n: isize| ((k % n) + n) % n;
                let (aw, bw) = (wrap(a, self.n[0] as isize), if self.d == 1 { 0 } else { wrap(b, self.n[1] as isize) });
                if self.d == 1 {
                    u[aw as usize]
                } else {
                    u[(aw * self.n[1] as isize + bw) as usize]
                }
            }
            GridBoundary::Outflow => {
                if self.d == 1 {
                    clamp_lin(a, n_axis, u, 1, 0)
                } else if axis == 0 {
                    clamp_lin(a, n_axis, u, self.n[1] as isize, b)
                } else {
                    clamp_lin(b, n_axis, u, 1, i * self.n[1] as isize)
                }
            }
        }
    }
}

/// March the grid from g to `t_end`, storing the requested slices.
pub fn lax_friedrichs_solve(problem: &ProblemSpec, spec: &GridSpec) -> Result<GridSolution> {
    let d = problem.dim;
    if d > 2 {
        return Err(HjError::UnsupportedOracle(
            problem.id.clone(),
            "grid oracle supports d <= 2 only".into(),
        ));
    }
    if spec.resolution.len() != d || spec.resolution.iter().any(|&n| n < 4) {
        return Err(HjError::Config(
            "grid resolution must list >= 4 nodes per axis".into(),
        ));
    }
    if !(spec.cfl > 0.0 && spec.cfl <= 0.5) {
        return Err(HjError::Config("CFL number must lie in (0, 0.5]".into()));
    }
    let boundary = spec.boundary.unwrap_or(match problem.boundary {
        BoundaryKind::Periodic => GridBoundary::Periodic,
        _ => GridBoundary::Outflow,
    });
    let lengths = problem.domain.lengths();
    let dx: Vec<f64> = (0..d)
        .map(|i| match boundary {
            GridBoundary::Periodic => lengths[i] / spec.resolution[i] as f64,
            GridBoundary::Outflow => lengths[i] / (spec.resolution[i] - 1) as f64,
        })
        .collect();
    let mesh = Mesh {
        d,
        n: spec.resolution.clone(),
        dx: dx.clone(),
        lo: problem.domain.lo.clone(),
        boundary,
    };
    let total: usize = spec.resolution.iter().product();

    let mut u: Vec<f64> = match &spec.initial_slice {
        Some(init) => {
            if init.len() != total {
                return Err(HjError::Config(format!(
                    "initial slice has {} values, grid has {total}",
                    init.len()
                )));
            }
            init.clone()
        }
        None => (0..total)
            .map(|idx| problem.initial_value(&mesh.coords(idx)))
            .collect(),
    };

    // Differences and the alpha probes share one buffer pass per step.
    let mut dminus = vec![0.0; d * total];
    let mut dplus = vec![0.0; d * total];
    let fill_diffs = |u: &[f64], dminus: &mut [f64], dplus: &mut [f64]| {
        for idx in 0..total {
            for axis in 0..d {
                let here = u[idx];
                dminus[axis * total + idx] = (here - mesh.neighbor(u, idx, axis, -1)) / dx[axis];
                dplus[axis * total + idx] = (mesh.neighbor(u, idx, axis, 1) - here) / dx[axis];
            }
        }
    };

    // Dissipation bound per axis: max |dH/dp_axis| with p probed over the
    // observed global range (endpoints, midpoint, zero for interior kinks).
    // State-independent Hamiltonians need a single x probe; state-dependent
    // coefficients are sampled on a node subgrid and inflated.
    let alphas = |dminus: &[f64], dplus: &[f64]| -> Vec<f64> {
        let mut pmin = vec![f64::INFINITY; d];
        let mut pmax = vec![f64::NEG_INFINITY; d];
        for axis in 0..d {
            for idx in 0..total {
                let (m, p) = (dminus[axis * total + idx], dplus[axis * total + idx]);
                pmin[axis] = pmin[axis].min(m.min(p));
                pmax[axis] = pmax[axis].max(m.max(p));
            }
        }
        let probes: Vec<[f64; 4]> = (0..d)
            .map(|i| [pmin[i], 0.5 * (pmin[i] + pmax[i]), pmax[i], 0.0])
            .collect();
        let x_stride = if problem.state_dependent {
            (total / 4096).max(1)
        } else {
            total
        };
        let inflate = if problem.state_dependent && x_stride > 1 {
            1.15
        } else {
            1.0
        };
        let mut alpha = vec![1e-8f64; d];
        let mut idx = 0;
        while idx < total {
            let x = mesh.coords(idx);
            let mut p = vec![0.0; d];
            let mut visit = |p: &[f64]| {
                let g = problem.hamiltonian_grad_p(&x, p);
                for axis in 0..d {
                    alpha[axis] = alpha[axis].max(g[axis].abs());
                }
            };
            if d == 1 {
                for &a in &probes[0] {
                    p[0] = a;
                    visit(&p);
                }
            } else {
                for &a in &probes[0] {
                    for &b in &probes[1] {
                        p[0] = a;
                        p[1] = b;
                        visit(&p);
                    }
                }
            }
            idx += x_stride;
        }
        alpha.iter_mut().for_each(|a| *a *= inflate);
        alpha
    };

    // Fixed time step from the initial p-range with headroom; each step
    // re-checks the CFL bound against the current range.
    fill_diffs(&u, &mut dminus, &mut dplus);
    let mut alpha0 = match &spec.alpha_override {
        Some(a) => {
            if a.len() != d {
                return Err(HjError::Config("alpha override needs one entry per axis".into()));
            }
            a.clone()
        }
        None => {
            let mut a = alphas(&dminus, &dplus);
            a.iter_mut().for_each(|v| *v *= 2.0);
            a
        }
    };
    alpha0.iter_mut().for_each(|a| *a = a.max(1e-8));
    let denom: f64 = alpha0.iter().zip(&dx).map(|(a, h)| a / h).sum();
    let dt = (spec.cfl / denom).min(spec.t_end);

    let mut report_times: Vec<f64> = spec.report_times.clone();
    report_times.push(0.0);
    report_times.push(spec.t_end);
    report_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    report_times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut out = GridSolution {
        problem_id: problem.id.clone(),
        lo: problem.domain.lo.clone(),
        hi: problem.domain.hi.clone(),
        resolution: spec.resolution.clone(),
        boundary,
        dt_used: dt,
        times: Vec::new(),
        slices: Vec::new(),
    };

    let mut t = 0.0;
    let mut next = vec![0.0; total];
    let mut report_iter = report_times.into_iter().peekable();
    loop {
        while let Some(&rt) = report_iter.peek() {
            if rt <= t + 1e-12 {
                out.times.push(rt);
                out.slices.push(u.clone());
                report_iter.next();
            } else {
                break;
            }
        }
        if t >= spec.t_end - 1e-12 {
            break;
        }
        let step = dt.min(spec.t_end - t).min(
            report_iter
                .peek()
                .map(|&rt| (rt - t).max(1e-12))
                .unwrap_or(f64::INFINITY),
        );
        fill_diffs(&u, &mut dminus, &mut dplus);
        let a_now = alphas(&dminus, &dplus);
        let number: f64 = a_now.iter().zip(&dx).map(|(a, h)| a / h * step).sum();
        if number > 0.5 + 1e-9 {
            return Err(HjError::Config(format!(
                "CFL violation at t = {t}: number {number:.3} exceeds 0.5"
            )));
        }
        for idx in 0..total {
            let x = mesh.coords(idx);
            let mut pbar = vec![0.0; d];
            let mut damp = 0.0;
            for axis in 0..d {
                let (m, p) = (dminus[axis * total + idx], dplus[axis * total + idx]);
                pbar[axis] = 0.5 * (m + p);
                damp += 0.5 * a_now[axis] * (p - m);
            }
            let h = problem.hamiltonian_value(&x, &pbar);
            next[idx] = u[idx] - step * (h - damp);
        }
        std::mem::swap(&mut u, &mut next);
        t += step;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Domain, Hamiltonian, InitialCondition, ProblemSpec};

    #[test]
    fn initial_slice_matches_g() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let spec = GridSpec::new(vec![101], 0.5);
        let sol = lax_friedrichs_solve(&problem, &spec).unwrap();
        let s0 = sol.slice_at(0.0).unwrap();
        for (i, &v) in s0.iter().enumerate() {
            let x = sol.node_coord(0, i);
            assert_eq!(v, problem.initial_value(&[x]));
        }
    }

    #[test]
    fn burgers_converges_first_order() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let mut errors = Vec::new();
        for n in [101usize, 401] {
            let spec = GridSpec::new(vec![n], 1.0);
            let sol = lax_friedrichs_solve(&problem, &spec).unwrap();
            let s = sol.slice_at(1.0).unwrap();
            let mut linf: f64 = 0.0;
            let mut l1 = 0.0;
            for (i, &v) in s.iter().enumerate() {
                let x = sol.node_coord(0, i);
                let exact = problem.exact_solution(&[x], 1.0).unwrap();
                linf = linf.max((v - exact).abs());
                l1 += (v - exact).abs();
            }
            l1 /= s.len() as f64;
            if n == 401 {
                assert!(linf <= 2e-2, "L-inf at 401 nodes: {linf}");
            }
            errors.push(l1);
        }
        assert!(
            errors[0] / errors[1] >= 2.5,
            "refinement gain {} too small",
            errors[0] / errors[1]
        );
    }

    #[test]
    fn viscosity_selection_example_stays_zero() {
        let problem = ProblemSpec::by_id("viscosity").unwrap();
        let spec = GridSpec::new(vec![101], 1.0);
        let sol = lax_friedrichs_solve(&problem, &spec).unwrap();
        let last = sol.slice_at(1.0).unwrap();
        assert!(last.iter().all(|v| v.abs() <= 1e-12));
    }

    /// Monotone scheme: raising the initial data pointwise never lowers any
    /// nodal value. Random smooth pairs u1 <= u2 on the cubic benchmark.
    #[test]
    fn monotone_in_initial_data() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(66);
        let problem = ProblemSpec::by_id("cubic").unwrap();
        let n = 64;
        for trial in 0..5 {
            let (a1, a2, ph) = (
                0.3 * rng.gen::<f64>(),
                0.3 * rng.gen::<f64>(),
                rng.gen::<f64>() * 6.28,
            );
            let lower: Vec<f64> = (0..n)
                .map(|i| {
                    let x = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    a1 * (3.0 * x + ph).sin() - 0.1 * x.cos()
                })
                .collect();
            let upper: Vec<f64> = lower
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    v + 0.02 + a2 * (1.0 + (2.0 * x).sin())
                })
                .collect();
            let mut s1 = GridSpec::new(vec![n], 0.3);
            s1.initial_slice = Some(lower);
            let mut s2 = GridSpec::new(vec![n], 0.3);
            s2.initial_slice = Some(upper);
            let r1 = lax_friedrichs_solve(&problem, &s1).unwrap();
            let r2 = lax_friedrichs_solve(&problem, &s2).unwrap();
            // Both runs must use the same time step for nodewise comparison.
            let (sa, sb) = (r1.slice_at(0.3).unwrap(), r2.slice_at(0.3).unwrap());
            for (x, y) in sa.iter().zip(sb) {
                assert!(x <= &(y + 1e-12), "trial {trial}: monotonicity violated");
            }
        }
    }

    #[test]
    fn rejects_high_dimensions() {
        let problem = ProblemSpec::by_id("burgers-d3").unwrap();
        let spec = GridSpec::new(vec![16, 16, 16], 0.1);
        assert!(matches!(
            lax_friedrichs_solve(&problem, &spec),
            Err(HjError::UnsupportedOracle(..))
        ));
    }

    #[test]
    fn two_dimensional_periodic_runs() {
        let problem = ProblemSpec::by_id("prod").unwrap();
        let mut spec = GridSpec::new(vec![48, 48], 0.2);
        spec.report_times = vec![0.0, 0.1, 0.2];
        let sol = lax_friedrichs_solve(&problem, &spec).unwrap();
        assert_eq!(sol.times.len(), 3);
        assert!(sol
            .slices
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn csv_export_shape() {
        let problem = ProblemSpec::by_id("burgers-d1").unwrap();
        let spec = GridSpec::new(vec![8], 0.1);
        let sol = lax_friedrichs_solve(&problem, &spec).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,t,u"));
        assert_eq!(text.lines().count(), 1 + 2 * 8);
        let _ = Domain::cube(1, 0.0, 1.0);
        let _ = Hamiltonian::Quadratic;
    }
}
