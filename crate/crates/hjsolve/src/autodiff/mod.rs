//! Differentiation engine: exact input derivatives of the network and exact
//! parameter gradients of losses built from those derivatives.
//!
//! Input gradients are computed by an analytic layer sweep. When gradients
//! with respect to parameters are needed, the same sweep is recorded on the
//! tape through first-class primitives, so one reverse pass differentiates
//! straight through it (nested differentiation without a second engine).

pub(crate) mod kernels;
mod scalar;
mod tape;

pub use scalar::{dot_s, norm2, norm2_reg, sum, sum_squares, Scalar};
pub use tape::{Tape, Var, VecNode};

use crate::error::{HjError, Result};
use crate::network::{Activation, MlpParams, NetworkConfig};

/// Value and exact first input-derivatives of the network at one point.
#[derive(Clone, Debug, Default)]
pub struct InputJet {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_t: f64,
}

/// Reusable buffers for the plain-f64 jet evaluation.
#[derive(Default)]
pub struct JetScratch {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    act: Vec<f64>,
    act_next: Vec<f64>,
    m: Vec<f64>,
    r: Vec<f64>,
    r_next: Vec<f64>,
}

/// Exact (u, grad_x u, u_t) by forward pass plus analytic reverse sweep.
pub fn eval_with_input_grad(params: &MlpParams, x: &[f64], t: f64) -> Result<InputJet> {
    let mut scratch = JetScratch::default();
    let mut jet = InputJet::default();
    eval_jet_into(params, x, t, &mut scratch, &mut jet)?;
    Ok(jet)
}

pub(crate) fn eval_jet_into(
    params: &MlpParams,
    x: &[f64],
    t: f64,
    ws: &mut JetScratch,
    jet: &mut InputJet,
) -> Result<()> {
    let cfg = &params.config;
    if x.len() + 1 != cfg.input_dim {
        return Err(HjError::DimensionMismatch(format!(
            "network expects {} spatial inputs, got {}",
            cfg.space_dim(),
            x.len()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) || !t.is_finite() {
        return Err(HjError::NonFinite("evaluation point".into()));
    }
    ws.input.clear();
    ws.input.extend_from_slice(x);
    ws.input.push(t);
    ws.pre.resize_with(cfg.depth, Vec::new);
    ws.act.resize(cfg.width, 0.0);
    ws.act_next.resize(cfg.width, 0.0);

    // Forward, storing pre-activations for the sweep.
    for l in 0..cfg.depth {
        ws.pre[l].resize(cfg.width, 0.0);
        {
            let input = if l == 0 { &ws.input } else { &ws.act };
            kernels::affine(&params.layers[l].w, input, &params.layers[l].b, &mut ws.pre[l]);
        }
        if !ws.pre[l].iter().all(|v| v.is_finite()) {
            return Err(HjError::NonFinite(format!("layer {l} pre-activation")));
        }
        match cfg.activation {
            Activation::Softplus => {
                for (a, s) in ws.act_next.iter_mut().zip(&ws.pre[l]) {
                    *a = kernels::softplus(cfg.beta, *s);
                }
            }
            Activation::Identity => ws.act_next.copy_from_slice(&ws.pre[l]),
        }
        std::mem::swap(&mut ws.act, &mut ws.act_next);
    }
    jet.value = params.out_b + kernels::dot(&params.out_w, &ws.act);
    if !jet.value.is_finite() {
        return Err(HjError::NonFinite("output layer".into()));
    }

    // Reverse sweep: r <- (r ∘ σ'(pre_l)) W_l, starting from the output row.
    ws.r.clear();
    ws.r.extend_from_slice(&params.out_w);
    ws.m.resize(cfg.width, 0.0);
    for l in (0..cfg.depth).rev() {
        match cfg.activation {
            Activation::Softplus => {
                for ((m, r), s) in ws.m.iter_mut().zip(&ws.r).zip(&ws.pre[l]) {
                    *m = r * kernels::sigmoid(cfg.beta, *s);
                }
            }
            Activation::Identity => ws.m.copy_from_slice(&ws.r),
        }
        let cols = if l == 0 { cfg.input_dim } else { cfg.width };
        ws.r_next.resize(cols, 0.0);
        kernels::vecmat(&ws.m, &params.layers[l].w, &mut ws.r_next);
        std::mem::swap(&mut ws.r, &mut ws.r_next);
    }
    if !ws.r.iter().all(|v| v.is_finite()) {
        return Err(HjError::NonFinite("input-gradient sweep".into()));
    }
    jet.grad_x.clear();
    jet.grad_x.extend_from_slice(&ws.r[..cfg.space_dim()]);
    jet.grad_t = ws.r[cfg.space_dim()];
    Ok(())
}

/// Network parameters registered as tape leaves (differentiable or frozen).
pub struct TapeNet<'t> {
    pub(crate) config: NetworkConfig,
    layers: Vec<(VecNode<'t>, VecNode<'t>)>,
    out_w: VecNode<'t>,
    out_b: VecNode<'t>,
}

/// Register `params` as differentiable leaves, in flatten order.
pub fn register_params<'t>(tape: &'t Tape, params: &MlpParams) -> TapeNet<'t> {
    register(tape, params, true)
}

/// Register `params` as constants (e.g. the frozen previous-interval net).
pub fn register_frozen<'t>(tape: &'t Tape, params: &MlpParams) -> TapeNet<'t> {
    register(tape, params, false)
}

fn register<'t>(tape: &'t Tape, params: &MlpParams, differentiable: bool) -> TapeNet<'t> {
    let leaf = |v: &[f64]| {
        if differentiable {
            tape.param(v)
        } else {
            tape.vector(v)
        }
    };
    let layers = params
        .layers
        .iter()
        .map(|l| (leaf(&l.w), leaf(&l.b)))
        .collect();
    let out_w = leaf(&params.out_w);
    let out_b = leaf(&[params.out_b]);
    TapeNet {
        config: params.config,
        layers,
        out_w,
        out_b,
    }
}

/// Jet of the network recorded on the tape.
pub struct JetVars<'t> {
    pub value: Var<'t>,
    /// d + 1 entries; last is the time derivative.
    pub grad: Vec<Var<'t>>,
}

impl<'t> JetVars<'t> {
    pub fn grad_x(&self) -> &[Var<'t>] {
        &self.grad[..self.grad.len() - 1]
    }
    pub fn grad_t(&self) -> Var<'t> {
        self.grad[self.grad.len() - 1]
    }
}

fn record_hidden<'t>(tape: &'t Tape, net: &TapeNet<'t>, input: VecNode<'t>) -> (VecNode<'t>, Vec<VecNode<'t>>) {
    let cfg = &net.config;
    let mut a = input;
    let mut pres = Vec::with_capacity(cfg.depth);
    for (w, b) in &net.layers {
        let s = tape.affine(*w, a, *b);
        pres.push(s);
        a = match cfg.activation {
            Activation::Softplus => tape.softplus_map(s, cfg.beta),
            Activation::Identity => s,
        };
    }
    (a, pres)
}

/// Record the forward pass only; `input` may depend on parameters.
pub fn record_forward<'t>(tape: &'t Tape, net: &TapeNet<'t>, input: VecNode<'t>) -> Var<'t> {
    let (a, _) = record_hidden(tape, net, input);
    let out = tape.affine(net.out_w, a, net.out_b);
    tape.extract(out, 0)
}

/// Record value and input gradient at a fixed point (x, t).
pub fn record_jet<'t>(tape: &'t Tape, net: &TapeNet<'t>, x: &[f64], t: f64) -> JetVars<'t> {
    let cfg = &net.config;
    debug_assert_eq!(x.len() + 1, cfg.input_dim);
    let mut buf = Vec::with_capacity(cfg.input_dim);
    buf.extend_from_slice(x);
    buf.push(t);
    let input = tape.vector(&buf);
    let (a, pres) = record_hidden(tape, net, input);
    let out = tape.affine(net.out_w, a, net.out_b);
    let value = tape.extract(out, 0);

    let mut r = net.out_w;
    for l in (0..cfg.depth).rev() {
        let m = match cfg.activation {
            Activation::Softplus => tape.hadamard(r, tape.sigmoid_map(pres[l], cfg.beta)),
            Activation::Identity => r,
        };
        r = tape.vecmat(m, net.layers[l].0);
    }
    let grad = (0..cfg.input_dim).map(|i| tape.extract(r, i)).collect();
    JetVars { value, grad }
}

/// Gradient of a scalar loss with respect to every parameter, flattened in
/// checkpoint order. The loss is recorded through tape primitives, including
/// any input-gradient jets it contains.
pub fn param_gradient<F>(params: &MlpParams, build: F) -> Result<Vec<f64>>
where
    F: for<'t> FnOnce(&'t Tape, &TapeNet<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let net = register_params(&tape, params);
    tape.freeze();
    let loss = build(&tape, &net)?;
    let value = tape.value(loss);
    if !value.is_finite() {
        return Err(HjError::NonFinite("loss".into()));
    }
    tape.backward(loss, 1.0);
    let mut grad = Vec::new();
    tape.param_adjoints(&mut grad);
    Ok(grad)
}

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-12).
pub fn fd_check<F, G>(f: F, grad: G, point: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    assert!(h > 0.0);
    let analytic = grad(point);
    let mut worst = 0.0f64;
    let mut p = point.to_vec();
    for i in 0..point.len() {
        let x0 = p[i];
        p[i] = x0 + h;
        let fp = f(&p);
        p[i] = x0 - h;
        let fm = f(&p);
        p[i] = x0;
        let fd = (fp - fm) / (2.0 * h);
        let err = (analytic[i] - fd).abs() / (analytic[i].abs() + 1e-12);
        worst = worst.max(err);
    }
    worst
}
