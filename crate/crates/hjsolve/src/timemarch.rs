//! Sequential solver for state-dependent Hamiltonians: the characteristic
//! curves are frozen to straight segments over intervals of length dt, the
//! per-interval implicit residual couples the live network to the previous
//! interval's frozen snapshot, and each interval warm-starts from the last.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    dot_s, record_forward, record_jet, register_frozen, register_params, InputJet, Scalar, Tape,
    TapeNet, Var,
};
use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::error::{HjError, Result};
use crate::loss::{accumulate_boundary, CollocationBatch};
use crate::network::{forward, init_network, MlpParams, NetworkConfig};
use crate::problems::ProblemSpec;
use crate::trainer::{optimize, sample_collocation, TrainConfig, TrainReport};

/// Initial data for the interval being trained.
#[derive(Clone, Debug)]
pub enum PrevLevel {
    /// k = 1: the analytic initial condition.
    Initial,
    /// k >= 2: frozen parameters of the previous interval's network,
    /// evaluated at interval-local time dt.
    Frozen(MlpParams),
}

/// Sequencing state while marching: interval index, frozen previous level,
/// live network being trained.
#[derive(Clone, Debug)]
pub struct MarchState {
    pub k: usize,
    pub prev: PrevLevel,
    pub live: MlpParams,
}

#[derive(Clone, Debug)]
pub struct MarchConfig {
    /// Interval length; must divide the horizon to within 1e-12.
    pub dt: f64,
    /// Per-interval training configuration.
    pub train: TrainConfig,
    /// Where per-interval checkpoints and the manifest go (None: in memory).
    pub out_dir: Option<PathBuf>,
    /// Stop after this many intervals (for staged runs); None runs them all.
    pub limit_intervals: Option<usize>,
    /// Pick up after the last checkpoint already present in `out_dir`.
    pub resume: bool,
}

impl MarchConfig {
    pub fn new(dt: f64, train: TrainConfig) -> Self {
        MarchConfig {
            dt,
            train,
            out_dir: None,
            limit_intervals: None,
            resume: false,
        }
    }

    pub fn intervals(&self, horizon: f64) -> Result<usize> {
        if !(self.dt > 0.0) {
            return Err(HjError::Config("dt must be positive".into()));
        }
        let n = (horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(HjError::Config(format!(
                "dt = {} does not divide the horizon {}",
                self.dt, horizon
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub k: usize,
    pub epochs_run: usize,
    pub final_loss: f64,
    /// Epoch at which the loss first crossed the early-stop threshold.
    pub first_below_threshold: Option<usize>,
    /// max |u^k(x, 0) - u^{k-1}(x, dt)| over a sample of the domain.
    pub seam_gap: f64,
    /// RMS of the trained interval residual over a fresh validation batch.
    pub residual_rms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarchManifest {
    pub problem: String,
    pub dt: f64,
    pub n_march: usize,
    pub seed: u64,
    pub checkpoints: Vec<String>,
    pub intervals: Vec<IntervalSummary>,
}

#[derive(Clone, Debug)]
pub struct MarchReport {
    pub manifest: MarchManifest,
    pub nets: Vec<MlpParams>,
    pub peak_memory_bytes: usize,
    pub total_epoch_ms: f64,
}

/// Queryable piecewise solution produced by the marcher.
#[derive(Clone, Debug)]
pub struct MarchSolution {
    pub dt: f64,
    pub horizon: f64,
    pub nets: Vec<MlpParams>,
}

impl MarchSolution {
    /// Map global time onto (interval, local time). Exact interval boundaries
    /// resolve to the later interval's tau = 0, except t = T which belongs to
    /// the last interval.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.nets.len();
        let idx = ((t / self.dt) + 1e-9).floor() as usize;
        let k = idx.min(n - 1);
        let tau = (t - k as f64 * self.dt).clamp(0.0, self.dt);
        (k, tau)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64> {
        let (k, tau) = self.locate(t);
        forward(&self.nets[k], x, tau)
    }

    pub fn load(dir: &Path) -> Result<MarchSolution> {
        let manifest: MarchManifest =
            serde_json::from_reader(std::fs::File::open(dir.join("march.json"))?)
                .map_err(|e| HjError::Config(format!("march manifest: {e}")))?;
        let mut nets = Vec::with_capacity(manifest.checkpoints.len());
        for name in &manifest.checkpoints {
            let (params, _) = load_checkpoint(&dir.join(name))?;
            nets.push(params);
        }
        if nets.is_empty() {
            return Err(HjError::Config("march manifest lists no checkpoints".into()));
        }
        Ok(MarchSolution {
            dt: manifest.dt,
            horizon: manifest.dt * manifest.n_march as f64,
            nets,
        })
    }
}

fn prev_value_f64(prev: &PrevLevel, problem: &ProblemSpec, y: &[f64], dt: f64) -> Result<f64> {
    match prev {
        PrevLevel::Initial => Ok(problem.initial_value(y)),
        PrevLevel::Frozen(params) => forward(params, y, dt),
    }
}

/// S[u^k, u^{k-1}](x, tau) = u^k - tau p . grad_p H(x, p) + tau H(x, p)
///                           - u^{k-1}(x - tau grad_p H(x, p), dt).
pub fn residual_step(
    live: &MlpParams,
    prev: &PrevLevel,
    problem: &ProblemSpec,
    x: &[f64],
    tau: f64,
    dt: f64,
) -> Result<f64> {
    if !(0.0..=dt).contains(&tau) {
        return Err(HjError::Contract(format!(
            "tau = {tau} outside [0, dt = {dt}]"
        )));
    }
    let jet = crate::autodiff::eval_with_input_grad(live, x, tau)?;
    residual_step_from_jet(&jet, prev, problem, x, tau, dt)
}

/// Same residual from a precomputed jet of the live level (stand-in support).
pub fn residual_step_from_jet(
    jet: &InputJet,
    prev: &PrevLevel,
    problem: &ProblemSpec,
    x: &[f64],
    tau: f64,
    dt: f64,
) -> Result<f64> {
    let p = &jet.grad_x;
    let h = problem.hamiltonian.value(x, p);
    let gp = problem.hamiltonian.grad_p(x, p);
    let advect: f64 = p.iter().zip(&gp).map(|(a, b)| a * b).sum();
    let pulled: Vec<f64> = x.iter().zip(&gp).map(|(xi, gi)| xi - tau * gi).collect();
    let prev_u = prev_value_f64(prev, problem, &pulled, dt)?;
    let s = jet.value - tau * advect + tau * h - prev_u;
    if !s.is_finite() {
        return Err(HjError::NonFinite(format!(
            "interval residual at x = {x:?}, tau = {tau}"
        )));
    }
    Ok(s)
}

fn record_step_residual<'t>(
    tape: &'t Tape,
    live: &TapeNet<'t>,
    frozen: &Option<TapeNet<'t>>,
    problem: &ProblemSpec,
    x: &[f64],
    tau: f64,
    dt: f64,
) -> Var<'t> {
    let jet = record_jet(tape, live, x, tau);
    let p = jet.grad_x();
    let h = problem.hamiltonian.value(x, p);
    let gp = problem.hamiltonian.grad_p(x, p);
    let advect = dot_s(p, &gp);
    let pulled: Vec<Var<'t>> = gp
        .iter()
        .zip(x)
        .map(|(gi, xi)| gi.scale(-tau).shift(*xi))
        .collect();
    let prev_u = match frozen {
        None => problem.initial.value(&pulled),
        Some(net) => {
            let mut parts = pulled.clone();
            parts.push(jet.value.lift(dt));
            record_forward(tape, net, tape.gather(&parts))
        }
    };
    jet.value - advect.scale(tau) + h.scale(tau) - prev_u
}

fn march_loss_and_grad(
    live: &MlpParams,
    prev: &PrevLevel,
    problem: &ProblemSpec,
    interval_problem: &ProblemSpec,
    batch: &CollocationBatch,
    lambda: f64,
    dt: f64,
    tape: &Tape,
    grad: &mut Vec<f64>,
) -> Result<f64> {
    let m = batch.interior_len();
    if m == 0 {
        return Err(HjError::Contract("empty collocation batch".into()));
    }
    tape.clear();
    let net = register_params(tape, live);
    let frozen = match prev {
        PrevLevel::Initial => None,
        PrevLevel::Frozen(p) => Some(register_frozen(tape, p)),
    };
    tape.freeze();

    let w = 1.0 / m as f64;
    let mut sum_sq = 0.0;
    for j in 0..m {
        let (x, tau) = batch.interior_point(j);
        let s = record_step_residual(tape, &net, &frozen, problem, x, tau, dt);
        let q = s.square();
        let qv = tape.value(q);
        if !qv.is_finite() {
            return Err(HjError::NonFinite(format!(
                "interval residual at x = {x:?}, tau = {tau}"
            )));
        }
        sum_sq += qv;
        tape.backward(q, w);
        tape.rewind();
    }
    let mut loss = sum_sq * w;
    loss += accumulate_boundary(tape, &net, interval_problem, batch, lambda, 0.0)?;
    tape.param_adjoints(grad);
    Ok(loss)
}

fn interval_seed(base: u64, k: usize) -> u64 {
    base ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Residual RMS over a fresh validation batch and the max seam gap against
/// the previous level, both on the trained interval.
fn interval_diagnostics(
    live: &MlpParams,
    prev: &PrevLevel,
    problem: &ProblemSpec,
    interval_problem: &ProblemSpec,
    dt: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1A6);
    let batch = sample_collocation(interval_problem, 256, 0, &mut rng);
    let mut acc = 0.0;
    for j in 0..batch.interior_len() {
        let (x, tau) = batch.interior_point(j);
        let s = residual_step(live, prev, problem, x, tau, dt)?;
        acc += s * s;
    }
    let rms = (acc / batch.interior_len() as f64).sqrt();

    let mut seam: f64 = 0.0;
    for j in 0..batch.interior_len() {
        let (x, _) = batch.interior_point(j);
        let here = forward(live, x, 0.0)?;
        let below = prev_value_f64(prev, problem, x, dt)?;
        seam = seam.max((here - below).abs());
    }
    Ok((rms, seam))
}

/// Train the solution interval by interval. Checkpoints land in
/// `config.out_dir` as `step_<k>.hjin` plus a `march.json` manifest.
pub fn march(
    problem: &ProblemSpec,
    net_config: &NetworkConfig,
    config: &MarchConfig,
) -> Result<MarchReport> {
    problem.validate()?;
    config.train.validate()?;
    if net_config.input_dim != problem.dim + 1 {
        return Err(HjError::Config(format!(
            "network input_dim {} does not match problem dimension {}",
            net_config.input_dim, problem.dim
        )));
    }
    let n_march = config.intervals(problem.horizon)?;
    let last = config.limit_intervals.unwrap_or(n_march).min(n_march);
    let dt = config.dt;
    // Interval-local problem: same box and boundary, horizon dt.
    let mut interval_problem = problem.clone();
    interval_problem.horizon = dt;

    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut manifest = MarchManifest {
        problem: problem.id.clone(),
        dt,
        n_march,
        seed: config.train.seed,
        checkpoints: Vec::new(),
        intervals: Vec::new(),
    };
    let mut nets: Vec<MlpParams> = Vec::new();
    let mut total_ms = 0.0;
    let mut peak_mem = 0usize;

    let mut start_k = 1usize;
    let mut state = MarchState {
        k: 1,
        prev: PrevLevel::Initial,
        live: init_network(net_config, config.train.seed)?,
    };

    if config.resume {
        let dir = config
            .out_dir
            .as_ref()
            .ok_or_else(|| HjError::Config("resume requires out_dir".into()))?;
        let mut k = 0;
        while dir.join(format!("step_{}.hjin", k + 1)).exists() {
            k += 1;
        }
        if k > 0 {
            for j in 1..=k {
                let (params, _) = load_checkpoint(&dir.join(format!("step_{j}.hjin")))?;
                manifest.checkpoints.push(format!("step_{j}.hjin"));
                nets.push(params);
            }
            let latest = nets.last().unwrap().clone();
            state = MarchState {
                k: k + 1,
                prev: PrevLevel::Frozen(latest.clone()),
                live: latest,
            };
            start_k = k + 1;
        }
    }

    for k in start_k..=last {
        state.k = k;
        let seed_k = interval_seed(config.train.seed, k);
        let mut cfg_k = config.train.clone();
        cfg_k.seed = seed_k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed_k);
        let (m, mb, lambda) = (cfg_k.batch, cfg_k.boundary_batch, cfg_k.lambda);

        let report: TrainReport = {
            let prev = &state.prev;
            let ip = &interval_problem;
            let pr = problem;
            optimize(
                state.live.clone(),
                &cfg_k,
                |params, _epoch, tape, grad| {
                    let batch = sample_collocation(ip, m, mb, &mut rng);
                    march_loss_and_grad(params, prev, pr, ip, &batch, lambda, dt, tape, grad)
                },
                None,
            )?
        };
        total_ms += report.epoch_ms.iter().sum::<f64>();
        peak_mem = peak_mem.max(report.peak_memory_bytes);
        state.live = report.final_params.clone();

        let (rms, seam) =
            interval_diagnostics(&state.live, &state.prev, problem, &interval_problem, dt, seed_k)?;
        manifest.intervals.push(IntervalSummary {
            k,
            epochs_run: report.epochs_run,
            final_loss: report.final_loss(),
            first_below_threshold: report.first_below_threshold,
            seam_gap: seam,
            residual_rms: rms,
        });

        if let Some(dir) = &config.out_dir {
            let name = format!("step_{k}.hjin");
            let meta = CheckpointMeta {
                epoch: report.epochs_run as u64,
                final_loss: report.final_loss(),
                seed: seed_k,
                problem_id: problem.id.clone(),
            };
            save_checkpoint(&state.live, &meta, &dir.join(&name))?;
            manifest.checkpoints.push(name);
        } else {
            manifest.checkpoints.push(format!("step_{k}.hjin"));
        }
        nets.push(state.live.clone());
        state.prev = PrevLevel::Frozen(state.live.clone());
    }

    if let Some(dir) = &config.out_dir {
        let f = std::fs::File::create(dir.join("march.json"))?;
        serde_json::to_writer_pretty(f, &manifest)
            .map_err(|e| HjError::Config(format!("writing march manifest: {e}")))?;
    }

    Ok(MarchReport {
        manifest,
        nets,
        peak_memory_bytes: peak_mem,
        total_epoch_ms: total_ms,
    })
}

impl MarchReport {
    pub fn solution(&self, problem: &ProblemSpec) -> MarchSolution {
        MarchSolution {
            dt: self.manifest.dt,
            horizon: problem.horizon,
            nets: self.nets.clone(),
        }
    }
}
