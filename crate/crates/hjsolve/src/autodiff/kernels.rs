//! Low-level numeric kernels shared by the plain-f64 evaluation path and the
//! tape executor, so both produce bit-identical values.
//!
//! Reductions use a fixed 4-lane association order: deterministic on a given
//! platform and wide enough for the autovectorizer.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (pa, pb) in ca.zip(cb) {
        acc[0] += pa[0] * pb[0];
        acc[1] += pa[1] * pb[1];
        acc[2] += pa[2] * pb[2];
        acc[3] += pa[3] * pb[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// y += a * x
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// out = W x + b with W stored row-major, rows = b.len(), cols = x.len().
#[inline]
pub(crate) fn affine(w: &[f64], x: &[f64], b: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), b.len() * cols);
    for (i, (oi, bi)) in out.iter_mut().zip(b).enumerate() {
        *oi = bi + dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// out[j] = sum_i v[i] * W[i, j]  (row vector times matrix, W row-major).
#[inline]
pub(crate) fn vecmat(v: &[f64], w: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), v.len() * cols);
    out.fill(0.0);
    for (i, vi) in v.iter().enumerate() {
        axpy(out, *vi, &w[i * cols..(i + 1) * cols]);
    }
}

/// Overflow-safe softplus (1/beta) ln(1 + e^{beta z}).
#[inline]
pub(crate) fn softplus(beta: f64, z: f64) -> f64 {
    let bz = beta * z;
    if bz > 0.0 {
        z + (-bz).exp().ln_1p() / beta
    } else {
        bz.exp().ln_1p() / beta
    }
}

/// d/dz softplus = logistic sigmoid of beta z, overflow-safe.
#[inline]
pub(crate) fn sigmoid(beta: f64, z: f64) -> f64 {
    let bz = beta * z;
    if bz >= 0.0 {
        1.0 / (1.0 + (-bz).exp())
    } else {
        let e = bz.exp();
        e / (1.0 + e)
    }
}
