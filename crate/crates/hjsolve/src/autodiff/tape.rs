//! Reverse-mode tape over scalar and small-vector nodes.
//!
//! Values live in one flat arena; every node records the primitive that
//! produced it plus operand ids. The tape is append-only while recording and
//! topologically ordered by construction, so a single reverse sweep over the
//! node range yields exact parameter gradients.
//!
//! The MLP input-gradient sweep is itself recorded through these primitives,
//! which is what gives second-order (nested) capability: differentiating a
//! loss built from `grad_x` nodes only ever needs first-order VJPs of the
//! primitives below.
//!
//! Batch usage pattern: register parameter leaves once, call [`Tape::freeze`],
//! then per collocation point record + [`Tape::backward`] + [`Tape::rewind`].
//! Parameter adjoints accumulate across points; everything above the freeze
//! watermark is discarded per point, so memory stays bounded.

use std::cell::RefCell;

use super::kernels;

#[derive(Clone, Copy, Debug)]
enum Op {
    Const,
    Param,
    /// W x + b; rows = len(b), cols = len(x), W row-major.
    Affine { w: u32, x: u32, b: u32 },
    /// out[j] = sum_i v[i] W[i,j]; cols = len(out).
    VecMat { v: u32, w: u32 },
    Hadamard { a: u32, b: u32 },
    Softplus { x: u32, beta: f64 },
    /// σ(beta x), the softplus slope.
    SigmoidB { x: u32, beta: f64 },
    Extract { x: u32, i: u32 },
    /// Assemble a vector from scalar nodes listed in `gather_ids[start..start+len]`.
    Gather { start: u32 },
    Add { a: u32, b: u32 },
    Sub { a: u32, b: u32 },
    Mul { a: u32, b: u32 },
    Neg { a: u32 },
    Scale { a: u32, c: f64 },
    Shift { a: u32, c: f64 },
    Sin { a: u32 },
    Cos { a: u32 },
    Exp { a: u32 },
    /// sqrt with subgradient 0 at 0 (callers guarantee nonnegative input).
    Sqrt { a: u32 },
    Recip { a: u32 },
    /// sqrt(max(a, 0)), derivative 0 where clamped.
    SqrtClamp { a: u32 },
    Abs { a: u32 },
    Sign { a: u32 },
    Min { a: u32, b: u32 },
    Max { a: u32, b: u32 },
    Square { a: u32 },
}

struct TapeInner {
    ops: Vec<Op>,
    off: Vec<u32>,
    len: Vec<u32>,
    vals: Vec<f64>,
    adj: Vec<f64>,
    gather_ids: Vec<u32>,
    param_nodes: Vec<u32>,
    frozen_ops: usize,
    frozen_vals: usize,
    frozen_gather: usize,
    peak_vals: usize,
}

impl TapeInner {
    fn push(&mut self, op: Op, n: usize) -> u32 {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.off.push(self.vals.len() as u32);
        self.len.push(n as u32);
        self.vals.resize(self.vals.len() + n, 0.0);
        self.adj.resize(self.vals.len(), 0.0);
        self.peak_vals = self.peak_vals.max(self.vals.len());
        id
    }

    #[inline]
    fn range(&self, id: u32) -> std::ops::Range<usize> {
        let o = self.off[id as usize] as usize;
        o..o + self.len[id as usize] as usize
    }

    #[inline]
    fn val(&self, id: u32) -> &[f64] {
        &self.vals[self.range(id)]
    }

    #[inline]
    fn is_const(&self, id: u32) -> bool {
        matches!(self.ops[id as usize], Op::Const)
    }

    fn execute(&mut self, id: u32) {
        let op = self.ops[id as usize];
        let out_r = self.range(id);
        match op {
            Op::Const | Op::Param => {}
            Op::Affine { w, x, b } => {
                let (wr, xr, br) = (self.range(w), self.range(x), self.range(b));
                let (head, out) = self.vals.split_at_mut(out_r.start);
                kernels::affine(&head[wr], &head[xr], &head[br], &mut out[..out_r.len()]);
            }
            Op::VecMat { v, w } => {
                let (vr, wr) = (self.range(v), self.range(w));
                let (head, out) = self.vals.split_at_mut(out_r.start);
                kernels::vecmat(&head[vr], &head[wr], &mut out[..out_r.len()]);
            }
            Op::Hadamard { a, b } => {
                let (ar, br) = (self.range(a), self.range(b));
                let (head, out) = self.vals.split_at_mut(out_r.start);
                for ((o, x), y) in out[..out_r.len()].iter_mut().zip(&head[ar]).zip(&head[br]) {
                    *o = x * y;
                }
            }
            Op::Softplus { x, beta } => {
                let xr = self.range(x);
                let (head, out) = self.vals.split_at_mut(out_r.start);
                for (o, z) in out[..out_r.len()].iter_mut().zip(&head[xr]) {
                    *o = kernels::softplus(beta, *z);
                }
            }
            Op::SigmoidB { x, beta } => {
                let xr = self.range(x);
                let (head, out) = self.vals.split_at_mut(out_r.start);
                for (o, z) in out[..out_r.len()].iter_mut().zip(&head[xr]) {
                    *o = kernels::sigmoid(beta, *z);
                }
            }
            Op::Extract { x, i } => {
                self.vals[out_r.start] = self.vals[self.off[x as usize] as usize + i as usize]
            }
            Op::Gather { start } => {
                for k in 0..out_r.len() {
                    let src = self.gather_ids[start as usize + k];
                    self.vals[out_r.start + k] = self.scalar(src);
                }
            }
            Op::Add { a, b } => self.vals[out_r.start] = self.scalar(a) + self.scalar(b),
            Op::Sub { a, b } => self.vals[out_r.start] = self.scalar(a) - self.scalar(b),
            Op::Mul { a, b } => self.vals[out_r.start] = self.scalar(a) * self.scalar(b),
            Op::Neg { a } => self.vals[out_r.start] = -self.scalar(a),
            Op::Scale { a, c } => self.vals[out_r.start] = self.scalar(a) * c,
            Op::Shift { a, c } => self.vals[out_r.start] = self.scalar(a) + c,
            Op::Sin { a } => self.vals[out_r.start] = self.scalar(a).sin(),
            Op::Cos { a } => self.vals[out_r.start] = self.scalar(a).cos(),
            Op::Exp { a } => self.vals[out_r.start] = self.scalar(a).exp(),
            Op::Sqrt { a } => self.vals[out_r.start] = self.scalar(a).sqrt(),
            Op::Recip { a } => self.vals[out_r.start] = 1.0 / self.scalar(a),
            Op::SqrtClamp { a } => self.vals[out_r.start] = self.scalar(a).max(0.0).sqrt(),
            Op::Abs { a } => self.vals[out_r.start] = self.scalar(a).abs(),
            Op::Sign { a } => {
                let v = self.scalar(a);
                self.vals[out_r.start] = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            Op::Min { a, b } => {
                let (va, vb) = (self.scalar(a), self.scalar(b));
                self.vals[out_r.start] = if va <= vb { va } else { vb };
            }
            Op::Max { a, b } => {
                let (va, vb) = (self.scalar(a), self.scalar(b));
                self.vals[out_r.start] = if va >= vb { va } else { vb };
            }
            Op::Square { a } => {
                let v = self.scalar(a);
                self.vals[out_r.start] = v * v;
            }
        }
    }

    #[inline]
    fn scalar(&self, id: u32) -> f64 {
        self.vals[self.off[id as usize] as usize]
    }

    #[inline]
    fn adj_scalar(&self, id: u32) -> f64 {
        self.adj[self.off[id as usize] as usize]
    }

    #[inline]
    fn add_adj(&mut self, id: u32, v: f64) {
        self.adj[self.off[id as usize] as usize] += v;
    }

    fn backward(&mut self, seed: u32, weight: f64) {
        debug_assert_eq!(self.len[seed as usize], 1);
        self.adj[self.off[seed as usize] as usize] += weight;
        for id in (self.frozen_ops as u32..=seed).rev() {
            self.vjp(id);
        }
    }

    fn vjp(&mut self, id: u32) {
        let op = self.ops[id as usize];
        let out_r = self.range(id);
        match op {
            Op::Const | Op::Param => {}
            Op::Affine { w, x, b } => {
                let rows = out_r.len();
                let cols = self.len[x as usize] as usize;
                let (wr, xr, br) = (self.range(w), self.range(x), self.range(b));
                // db += adj
                if !self.is_const(b) {
                    for i in 0..rows {
                        self.adj[br.start + i] += self.adj[out_r.start + i];
                    }
                }
                // dW[i,:] += adj[i] * x
                if !self.is_const(w) {
                    for i in 0..rows {
                        let a = self.adj[out_r.start + i];
                        let (lo, hi) = (wr.start + i * cols, wr.start + (i + 1) * cols);
                        let x0 = xr.start;
                        // adj and vals are disjoint buffers
                        let (adj, vals) = (&mut self.adj, &self.vals);
                        kernels::axpy(&mut adj[lo..hi], a, &vals[x0..x0 + cols]);
                    }
                }
                // dx += W^T adj
                if !self.is_const(x) {
                    for i in 0..rows {
                        let a = self.adj[out_r.start + i];
                        let w_row = wr.start + i * cols;
                        let (adj, vals) = (&mut self.adj, &self.vals);
                        kernels::axpy(
                            &mut adj[xr.start..xr.start + cols],
                            a,
                            &vals[w_row..w_row + cols],
                        );
                    }
                }
            }
            Op::VecMat { v, w } => {
                let cols = out_r.len();
                let (vr, wr) = (self.range(v), self.range(w));
                let rows = vr.len();
                // dv[i] += dot(adj, W[i,:])
                if !self.is_const(v) {
                    for i in 0..rows {
                        let w_row = wr.start + i * cols;
                        let d = kernels::dot(
                            &self.adj[out_r.start..out_r.end],
                            &self.vals[w_row..w_row + cols],
                        );
                        self.adj[vr.start + i] += d;
                    }
                }
                // dW[i,:] += v[i] * adj
                if !self.is_const(w) {
                    for i in 0..rows {
                        let a = self.vals[vr.start + i];
                        let w_row = wr.start + i * cols;
                        let (head, tail) = self.adj.split_at_mut(out_r.start);
                        kernels::axpy(&mut head[w_row..w_row + cols], a, &tail[..cols]);
                    }
                }
            }
            Op::Hadamard { a, b } => {
                let (ar, br) = (self.range(a), self.range(b));
                for k in 0..out_r.len() {
                    let g = self.adj[out_r.start + k];
                    self.adj[ar.start + k] += g * self.vals[br.start + k];
                    self.adj[br.start + k] += g * self.vals[ar.start + k];
                }
            }
            Op::Softplus { x, beta } => {
                let xr = self.range(x);
                for k in 0..out_r.len() {
                    let g = self.adj[out_r.start + k];
                    self.adj[xr.start + k] += g * kernels::sigmoid(beta, self.vals[xr.start + k]);
                }
            }
            Op::SigmoidB { x, beta } => {
                // d/dz σ(βz) = β σ (1-σ), σ is this node's stored output
                let xr = self.range(x);
                for k in 0..out_r.len() {
                    let g = self.adj[out_r.start + k];
                    let s = self.vals[out_r.start + k];
                    self.adj[xr.start + k] += g * beta * s * (1.0 - s);
                }
            }
            Op::Extract { x, i } => {
                let g = self.adj[out_r.start];
                self.adj[self.off[x as usize] as usize + i as usize] += g;
            }
            Op::Gather { start } => {
                for k in 0..out_r.len() {
                    let src = self.gather_ids[start as usize + k];
                    let g = self.adj[out_r.start + k];
                    self.add_adj(src, g);
                }
            }
            Op::Add { a, b } => {
                let g = self.adj_scalar(id);
                self.add_adj(a, g);
                self.add_adj(b, g);
            }
            Op::Sub { a, b } => {
                let g = self.adj_scalar(id);
                self.add_adj(a, g);
                self.add_adj(b, -g);
            }
            Op::Mul { a, b } => {
                let g = self.adj_scalar(id);
                let (va, vb) = (self.scalar(a), self.scalar(b));
                self.add_adj(a, g * vb);
                self.add_adj(b, g * va);
            }
            Op::Neg { a } => {
                let g = self.adj_scalar(id);
                self.add_adj(a, -g);
            }
            Op::Scale { a, c } => {
                let g = self.adj_scalar(id);
                self.add_adj(a, g * c);
            }
            Op::Shift { a, .. } => {
                let g = self.adj_scalar(id);
                self.add_adj(a, g);
            }
            Op::Sin { a } => {
                let g = self.adj_scalar(id);
                self.add_adj(a, g * self.scalar(a).cos());
            }
            Op::Cos { a } => {
                let g = self.adj_scalar(id);
                self.add_adj(a, -g * self.scalar(a).sin());
            }
            Op::Exp { a } => {
                let g = self.adj_scalar(id);
                let out = self.vals[out_r.start];
                self.add_adj(a, g * out);
            }
            Op::Sqrt { a } | Op::SqrtClamp { a } => {
                let out = self.vals[out_r.start];
                if out > 0.0 {
                    let g = self.adj_scalar(id);
                    self.add_adj(a, g * 0.5 / out);
                }
            }
            Op::Recip { a } => {
                let g = self.adj_scalar(id);
                let out = self.vals[out_r.start];
                self.add_adj(a, -g * out * out);
            }
            Op::Abs { a } => {
                let g = self.adj_scalar(id);
                let v = self.scalar(a);
                let s = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                self.add_adj(a, g * s);
            }
            Op::Sign { .. } => {}
            Op::Min { a, b } => {
                let g = self.adj_scalar(id);
                if self.scalar(a) <= self.scalar(b) {
                    self.add_adj(a, g);
                } else {
                    self.add_adj(b, g);
                }
            }
            Op::Max { a, b } => {
                let g = self.adj_scalar(id);
                if self.scalar(a) >= self.scalar(b) {
                    self.add_adj(a, g);
                } else {
                    self.add_adj(b, g);
                }
            }
            Op::Square { a } => {
                let g = self.adj_scalar(id);
                let v = self.scalar(a);
                self.add_adj(a, g * 2.0 * v);
            }
        }
    }
}

/// Append-only reverse-mode tape. Interior mutability keeps the handle types
/// (`Var`, `VecNode`) `Copy` so generic formula code reads naturally.
pub struct Tape {
    inner: RefCell<TapeInner>,
}

/// Scalar node handle.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: u32,
}

/// Vector node handle.
#[derive(Clone, Copy)]
pub struct VecNode<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: u32,
    pub(crate) len: u32,
}

impl<'t> VecNode<'t> {
    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn values(self) -> Vec<f64> {
        self.tape.vector_values(self)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner {
                ops: Vec::new(),
                off: Vec::new(),
                len: Vec::new(),
                vals: Vec::new(),
                adj: Vec::new(),
                gather_ids: Vec::new(),
                param_nodes: Vec::new(),
                frozen_ops: 0,
                frozen_vals: 0,
                frozen_gather: 0,
                peak_vals: 0,
            }),
        }
    }

    fn push_exec(&self, op: Op, n: usize) -> u32 {
        let mut t = self.inner.borrow_mut();
        let id = t.push(op, n);
        t.execute(id);
        id
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        let id = self.push_exec(Op::Const, 1);
        {
            let mut t = self.inner.borrow_mut();
            let o = t.off[id as usize] as usize;
            t.vals[o] = v;
        }
        Var { tape: self, id }
    }

    pub fn vector(&self, v: &[f64]) -> VecNode<'_> {
        let id = self.push_exec(Op::Const, v.len());
        {
            let mut t = self.inner.borrow_mut();
            let r = t.range(id);
            t.vals[r].copy_from_slice(v);
        }
        VecNode {
            tape: self,
            id,
            len: v.len() as u32,
        }
    }

    /// Register a differentiable leaf. Its adjoint accumulates across
    /// `backward` calls until `clear`.
    pub fn param(&self, v: &[f64]) -> VecNode<'_> {
        let id = self.push_exec(Op::Param, v.len());
        {
            let mut t = self.inner.borrow_mut();
            let r = t.range(id);
            t.vals[r].copy_from_slice(v);
            t.param_nodes.push(id);
        }
        VecNode {
            tape: self,
            id,
            len: v.len() as u32,
        }
    }

    /// Mark the end of the leaf region; `rewind` drops everything after it.
    pub fn freeze(&self) {
        let mut t = self.inner.borrow_mut();
        t.frozen_ops = t.ops.len();
        t.frozen_vals = t.vals.len();
        t.frozen_gather = t.gather_ids.len();
    }

    /// Drop all nodes recorded after `freeze`, keeping leaf adjoints.
    pub fn rewind(&self) {
        let mut t = self.inner.borrow_mut();
        let (fo, fv, fg) = (t.frozen_ops, t.frozen_vals, t.frozen_gather);
        t.ops.truncate(fo);
        t.off.truncate(fo);
        t.len.truncate(fo);
        t.vals.truncate(fv);
        t.adj.truncate(fv);
        t.gather_ids.truncate(fg);
    }

    /// Full reset (keeps allocations and the peak-usage statistic).
    pub fn clear(&self) {
        let mut t = self.inner.borrow_mut();
        t.ops.clear();
        t.off.clear();
        t.len.clear();
        t.vals.clear();
        t.adj.clear();
        t.gather_ids.clear();
        t.param_nodes.clear();
        t.frozen_ops = 0;
        t.frozen_vals = 0;
        t.frozen_gather = 0;
    }

    /// Reverse sweep from a scalar node, seeding with `weight`.
    pub fn backward(&self, seed: Var<'_>, weight: f64) {
        self.inner.borrow_mut().backward(seed.id, weight);
    }

    /// Concatenated adjoints of the parameter leaves, in registration order.
    pub fn param_adjoints(&self, out: &mut Vec<f64>) {
        out.clear();
        let t = self.inner.borrow();
        for &id in &t.param_nodes {
            out.extend_from_slice(&t.adj[t.range(id)]);
        }
    }

    pub fn value(&self, v: Var<'_>) -> f64 {
        self.inner.borrow().scalar(v.id)
    }

    pub fn vector_values(&self, v: VecNode<'_>) -> Vec<f64> {
        self.inner.borrow().val(v.id).to_vec()
    }

    /// High-water mark of the value arena in bytes (values + adjoints).
    pub fn peak_bytes(&self) -> usize {
        self.inner.borrow().peak_vals * 16
    }

    /// Re-execute every op and compare against stored values bit-for-bit.
    pub fn replay_matches(&self) -> bool {
        let mut t = self.inner.borrow_mut();
        let saved = t.vals.clone();
        for id in 0..t.ops.len() as u32 {
            t.execute(id);
        }
        let ok = t.vals == saved;
        t.vals = saved;
        ok
    }

    // ---- vector ops ----

    pub fn affine<'t>(&'t self, w: VecNode<'t>, x: VecNode<'t>, b: VecNode<'t>) -> VecNode<'t> {
        debug_assert_eq!(w.len, b.len * x.len);
        let id = self.push_exec(
            Op::Affine {
                w: w.id,
                x: x.id,
                b: b.id,
            },
            b.len as usize,
        );
        VecNode {
            tape: self,
            id,
            len: b.len,
        }
    }

    pub fn vecmat<'t>(&'t self, v: VecNode<'t>, w: VecNode<'t>) -> VecNode<'t> {
        debug_assert_eq!(w.len % v.len, 0);
        let cols = w.len / v.len;
        let id = self.push_exec(Op::VecMat { v: v.id, w: w.id }, cols as usize);
        VecNode {
            tape: self,
            id,
            len: cols,
        }
    }

    pub fn hadamard<'t>(&'t self, a: VecNode<'t>, b: VecNode<'t>) -> VecNode<'t> {
        debug_assert_eq!(a.len, b.len);
        let id = self.push_exec(Op::Hadamard { a: a.id, b: b.id }, a.len as usize);
        VecNode {
            tape: self,
            id,
            len: a.len,
        }
    }

    pub fn softplus_map<'t>(&'t self, x: VecNode<'t>, beta: f64) -> VecNode<'t> {
        let id = self.push_exec(Op::Softplus { x: x.id, beta }, x.len as usize);
        VecNode {
            tape: self,
            id,
            len: x.len,
        }
    }

    pub fn sigmoid_map<'t>(&'t self, x: VecNode<'t>, beta: f64) -> VecNode<'t> {
        let id = self.push_exec(Op::SigmoidB { x: x.id, beta }, x.len as usize);
        VecNode {
            tape: self,
            id,
            len: x.len,
        }
    }

    pub fn extract<'t>(&'t self, x: VecNode<'t>, i: usize) -> Var<'t> {
        debug_assert!((i as u32) < x.len);
        let id = self.push_exec(Op::Extract { x: x.id, i: i as u32 }, 1);
        Var { tape: self, id }
    }

    /// Assemble scalar nodes into a vector node.
    pub fn gather<'t>(&'t self, parts: &[Var<'t>]) -> VecNode<'t> {
        let start = {
            let mut t = self.inner.borrow_mut();
            let start = t.gather_ids.len() as u32;
            t.gather_ids.extend(parts.iter().map(|v| v.id));
            start
        };
        let id = self.push_exec(Op::Gather { start }, parts.len());
        VecNode {
            tape: self,
            id,
            len: parts.len() as u32,
        }
    }

    // ---- scalar op constructors used by the `Scalar` impl ----

    pub(crate) fn unary(&self, kind: UnaryKind, a: u32) -> u32 {
        let op = match kind {
            UnaryKind::Neg => Op::Neg { a },
            UnaryKind::Sin => Op::Sin { a },
            UnaryKind::Cos => Op::Cos { a },
            UnaryKind::Exp => Op::Exp { a },
            UnaryKind::Sqrt => Op::Sqrt { a },
            UnaryKind::Recip => Op::Recip { a },
            UnaryKind::SqrtClamp => Op::SqrtClamp { a },
            UnaryKind::Abs => Op::Abs { a },
            UnaryKind::Sign => Op::Sign { a },
            UnaryKind::Square => Op::Square { a },
        };
        self.push_exec(op, 1)
    }

    pub(crate) fn binary(&self, kind: BinaryKind, a: u32, b: u32) -> u32 {
        let op = match kind {
            BinaryKind::Add => Op::Add { a, b },
            BinaryKind::Sub => Op::Sub { a, b },
            BinaryKind::Mul => Op::Mul { a, b },
            BinaryKind::Min => Op::Min { a, b },
            BinaryKind::Max => Op::Max { a, b },
        };
        self.push_exec(op, 1)
    }

    pub(crate) fn with_const(&self, kind: ConstKind, a: u32, c: f64) -> u32 {
        let op = match kind {
            ConstKind::Scale => Op::Scale { a, c },
            ConstKind::Shift => Op::Shift { a, c },
        };
        self.push_exec(op, 1)
    }
}

pub(crate) enum UnaryKind {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Recip,
    SqrtClamp,
    Abs,
    Sign,
    Square,
}

pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Min,
    Max,
}

pub(crate) enum ConstKind {
    Scale,
    Shift,
}
