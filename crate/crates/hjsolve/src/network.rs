//! The coordinate MLP representing the solution u(x, t), its deterministic
//! initialization, and the plain forward pass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels;
use crate::error::{HjError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Softplus,
    /// Test-only: makes hand-built linear networks exact.
    Identity,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Activation::Softplus => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::Softplus),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// d + 1: spatial dimension plus time.
    pub input_dim: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Hidden width.
    pub width: usize,
    pub activation: Activation,
    pub beta: f64,
}

impl NetworkConfig {
    pub fn new(space_dim: usize, depth: usize, width: usize, beta: f64) -> Self {
        NetworkConfig {
            input_dim: space_dim + 1,
            depth,
            width,
            activation: Activation::Softplus,
            beta,
        }
    }

    pub fn space_dim(&self) -> usize {
        self.input_dim - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 2 {
            return Err(HjError::Config("input_dim must be at least 2".into()));
        }
        if self.depth < 1 || self.width < 1 {
            return Err(HjError::Config("depth and width must be at least 1".into()));
        }
        if !(self.beta > 0.0) {
            return Err(HjError::Config("beta must be positive".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (w, l, din) = (self.width, self.depth, self.input_dim);
        w * din + w + (l - 1) * (w * w + w) + w + 1
    }

    fn layer_cols(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.width
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// Row-major, width x cols.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// All weights and biases of the solution network. Immutable during batch
/// evaluation; the trainer owns the single mutable copy.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub config: NetworkConfig,
    pub layers: Vec<DenseLayer>,
    /// Output row, 1 x width.
    pub out_w: Vec<f64>,
    pub out_b: f64,
}

/// Uniform fan-in initialization: weights from U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases zero. Fully determined by the seed.
pub fn init_network(config: &NetworkConfig, seed: u64) -> Result<MlpParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(config.depth);
    for l in 0..config.depth {
        let cols = config.layer_cols(l);
        let bound = 1.0 / (cols as f64).sqrt();
        let w: Vec<f64> = (0..config.width * cols)
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        layers.push(DenseLayer {
            w,
            b: vec![0.0; config.width],
        });
    }
    let bound = 1.0 / (config.width as f64).sqrt();
    let out_w: Vec<f64> = (0..config.width)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
        .collect();
    Ok(MlpParams {
        config: *config,
        layers,
        out_w,
        out_b: 0.0,
    })
}

impl MlpParams {
    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    /// Flatten in checkpoint order: (W_0, b_0, ..., W_{L-1}, b_{L-1}, W, b),
    /// matrices row-major. Parameter gradients use the same order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out.extend_from_slice(&self.out_w);
        out.push(self.out_b);
        out
    }

    pub fn from_flat(config: &NetworkConfig, flat: &[f64]) -> Result<MlpParams> {
        config.validate()?;
        if flat.len() != config.param_count() {
            return Err(HjError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                config.param_count(),
                flat.len()
            )));
        }
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &flat[pos..pos + n];
            pos += n;
            s
        };
        let mut layers = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let cols = config.layer_cols(l);
            let w = take(config.width * cols).to_vec();
            let b = take(config.width).to_vec();
            layers.push(DenseLayer { w, b });
        }
        let out_w = take(config.width).to_vec();
        let out_b = take(1)[0];
        Ok(MlpParams {
            config: *config,
            layers,
            out_w,
            out_b,
        })
    }

    /// Overwrite from a flat vector without reallocating.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        debug_assert_eq!(flat.len(), self.param_count());
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        let no = self.out_w.len();
        self.out_w.copy_from_slice(&flat[pos..pos + no]);
        pos += no;
        self.out_b = flat[pos];
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
            && self.out_w.iter().all(|v| v.is_finite())
            && self.out_b.is_finite()
    }

    /// Upper bound on the Lipschitz constant of u over any box: product of
    /// Frobenius norms (>= operator norms) times the activation slope bound 1.
    pub fn lipschitz_bound(&self) -> f64 {
        let frob = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut bound = frob(&self.out_w);
        for l in &self.layers {
            bound *= frob(&l.w);
        }
        bound
    }
}

/// Scratch buffers for forward evaluation; reuse across calls in hot loops.
#[derive(Default)]
pub struct ForwardScratch {
    input: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

pub(crate) fn forward_with(params: &MlpParams, x: &[f64], t: f64, ws: &mut ForwardScratch) -> f64 {
    let cfg = &params.config;
    ws.input.clear();
    ws.input.extend_from_slice(x);
    ws.input.push(t);
    ws.a.resize(cfg.width, 0.0);
    ws.b.resize(cfg.width, 0.0);
    let mut cur: &mut Vec<f64> = &mut ws.a;
    let mut next: &mut Vec<f64> = &mut ws.b;
    for (l, layer) in params.layers.iter().enumerate() {
        if l == 0 {
            kernels::affine(&layer.w, &ws.input, &layer.b, cur);
        } else {
            kernels::affine(&layer.w, next, &layer.b, cur);
        }
        if cfg.activation == Activation::Softplus {
            for v in cur.iter_mut() {
                *v = kernels::softplus(cfg.beta, *v);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    params.out_b + kernels::dot(&params.out_w, next)
}

/// u(x, t). Errors when the result is non-finite.
pub fn forward(params: &MlpParams, x: &[f64], t: f64) -> Result<f64> {
    if x.len() + 1 != params.config.input_dim {
        return Err(HjError::DimensionMismatch(format!(
            "network expects {} spatial inputs, got {}",
            params.config.space_dim(),
            x.len()
        )));
    }
    let mut ws = ForwardScratch::default();
    let u = forward_with(params, x, t, &mut ws);
    if !u.is_finite() {
        return Err(HjError::NonFinite("network output".into()));
    }
    Ok(u)
}

/// Hand-built networks for tests elsewhere in the crate.
#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Identity-composition network: hidden layers are identity maps, output
    /// picks the first coordinate.
    pub(crate) fn identity_chain(space_dim: usize, depth: usize) -> MlpParams {
        let width = space_dim + 1;
        let config = NetworkConfig {
            input_dim: width,
            depth,
            width,
            activation: Activation::Identity,
            beta: 1.0,
        };
        let mut layers = Vec::new();
        for _ in 0..depth {
            let mut w = vec![0.0; width * width];
            for i in 0..width {
                w[i * width + i] = 1.0;
            }
            layers.push(DenseLayer {
                w,
                b: vec![0.0; width],
            });
        }
        let mut out_w = vec![0.0; width];
        out_w[0] = 1.0;
        MlpParams {
            config,
            layers,
            out_w,
            out_b: 0.0,
        }
    }

    /// Constant network: zero output weights, output bias c.
    pub(crate) fn constant_net(space_dim: usize, c: f64) -> MlpParams {
        let config = NetworkConfig::new(space_dim, 1, 4, 100.0);
        let mut p = init_network(&config, 0).unwrap();
        p.out_w.iter_mut().for_each(|v| *v = 0.0);
        p.out_b = c;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::testing::identity_chain;
    use super::*;

    fn small_cfg() -> NetworkConfig {
        NetworkConfig::new(1, 5, 64, 100.0)
    }

    #[test]
    fn param_count_matches_shape_arithmetic() {
        // 64*2+64 + 4*(64*64+64) + 64+1
        assert_eq!(small_cfg().param_count(), 16_897);
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let cfg = small_cfg();
        let a = init_network(&cfg, 7).unwrap();
        let b = init_network(&cfg, 7).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        for l in &a.layers {
            assert!(l.b.iter().all(|&v| v == 0.0));
        }
        assert_eq!(a.out_b, 0.0);
        let c = init_network(&cfg, 8).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn init_weights_within_fan_in_bound() {
        let cfg = small_cfg();
        let p = init_network(&cfg, 0).unwrap();
        let bound0 = 1.0 / (cfg.input_dim as f64).sqrt();
        assert!(p.layers[0].w.iter().all(|v| v.abs() <= bound0));
        let bound = 1.0 / (cfg.width as f64).sqrt();
        assert!(p.layers[1].w.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn identity_composition_forwards_first_input() {
        let p = identity_chain(1, 3);
        let u = forward(&p, &[0.7], 0.2).unwrap();
        assert_eq!(u, 0.7);
    }

    #[test]
    fn softplus_at_zero_preactivation() {
        // One hidden unit chain with zero weights: every pre-activation is 0,
        // each unit outputs ln(2)/beta.
        let beta = 100.0;
        let config = NetworkConfig {
            input_dim: 2,
            depth: 1,
            width: 3,
            activation: Activation::Softplus,
            beta,
        };
        let p = MlpParams {
            config,
            layers: vec![DenseLayer {
                w: vec![0.0; 6],
                b: vec![0.0; 3],
            }],
            out_w: vec![1.0, 1.0, 1.0],
            out_b: 0.0,
        };
        let u = forward(&p, &[0.3], 0.9).unwrap();
        assert!((u - 3.0 * 2.0f64.ln() / beta).abs() < 1e-15);
    }

    #[test]
    fn flatten_round_trips() {
        let cfg = NetworkConfig::new(3, 2, 5, 100.0);
        let p = init_network(&cfg, 42).unwrap();
        let flat = p.flatten();
        assert_eq!(flat.len(), cfg.param_count());
        let q = MlpParams::from_flat(&cfg, &flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn lipschitz_bound_finite() {
        let p = init_network(&small_cfg(), 3).unwrap();
        let b = p.lipschitz_bound();
        assert!(b.is_finite() && b > 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = init_network(&small_cfg(), 3).unwrap();
        assert!(matches!(
            forward(&p, &[0.1, 0.2], 0.0),
            Err(HjError::DimensionMismatch(_))
        ));
    }
}
