//! Generic scalar abstraction so Hamiltonians, initial conditions and the
//! residual formula are written once and evaluated either on plain `f64`
//! (oracles, diagnostics) or on the tape (training gradients).

use super::tape::{BinaryKind, ConstKind, UnaryKind, Var};

pub trait Scalar:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Neg<Output = Self>
{
    /// A constant "in the same context" as `self` (same tape for `Var`).
    fn lift(self, c: f64) -> Self;
    fn scale(self, c: f64) -> Self;
    fn shift(self, c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    /// Derivative defined as 0 at the origin.
    fn abs(self) -> Self;
    /// Piecewise-constant sign with sign(0) = 0; derivative 0 everywhere.
    fn sign(self) -> Self;
    /// Square root over nonnegative input; subgradient 0 at 0.
    fn sqrt_guard(self) -> Self;
    fn recip(self) -> Self;
    /// sqrt(max(z, 0)); derivative 0 where the clamp is active.
    fn sqrt_clamped(self) -> Self;
    fn min(self, o: Self) -> Self;
    fn max(self, o: Self) -> Self;
    fn square(self) -> Self;
    /// Current numeric value.
    fn value(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn lift(self, c: f64) -> f64 {
        c
    }
    #[inline]
    fn scale(self, c: f64) -> f64 {
        self * c
    }
    #[inline]
    fn shift(self, c: f64) -> f64 {
        self + c
    }
    #[inline]
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    #[inline]
    fn sign(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
    #[inline]
    fn sqrt_guard(self) -> f64 {
        f64::sqrt(self)
    }
    #[inline]
    fn recip(self) -> f64 {
        1.0 / self
    }
    #[inline]
    fn sqrt_clamped(self) -> f64 {
        f64::sqrt(f64::max(self, 0.0))
    }
    #[inline]
    fn min(self, o: f64) -> f64 {
        if self <= o {
            self
        } else {
            o
        }
    }
    #[inline]
    fn max(self, o: f64) -> f64 {
        if self >= o {
            self
        } else {
            o
        }
    }
    #[inline]
    fn square(self) -> f64 {
        self * self
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
}

impl<'t> Var<'t> {
    fn un(self, k: UnaryKind) -> Var<'t> {
        Var {
            tape: self.tape,
            id: self.tape.unary(k, self.id),
        }
    }
    fn bin(self, k: BinaryKind, o: Var<'t>) -> Var<'t> {
        Var {
            tape: self.tape,
            id: self.tape.binary(k, self.id, o.id),
        }
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.bin(BinaryKind::Add, o)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.bin(BinaryKind::Sub, o)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.bin(BinaryKind::Mul, o)
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.un(UnaryKind::Neg)
    }
}

impl<'t> Scalar for Var<'t> {
    fn lift(self, c: f64) -> Var<'t> {
        self.tape.scalar(c)
    }
    fn scale(self, c: f64) -> Var<'t> {
        Var {
            tape: self.tape,
            id: self.tape.with_const(ConstKind::Scale, self.id, c),
        }
    }
    fn shift(self, c: f64) -> Var<'t> {
        Var {
            tape: self.tape,
            id: self.tape.with_const(ConstKind::Shift, self.id, c),
        }
    }
    fn sin(self) -> Var<'t> {
        self.un(UnaryKind::Sin)
    }
    fn cos(self) -> Var<'t> {
        self.un(UnaryKind::Cos)
    }
    fn exp(self) -> Var<'t> {
        self.un(UnaryKind::Exp)
    }
    fn abs(self) -> Var<'t> {
        self.un(UnaryKind::Abs)
    }
    fn sign(self) -> Var<'t> {
        self.un(UnaryKind::Sign)
    }
    fn sqrt_guard(self) -> Var<'t> {
        self.un(UnaryKind::Sqrt)
    }
    fn recip(self) -> Var<'t> {
        self.un(UnaryKind::Recip)
    }
    fn sqrt_clamped(self) -> Var<'t> {
        self.un(UnaryKind::SqrtClamp)
    }
    fn min(self, o: Var<'t>) -> Var<'t> {
        self.bin(BinaryKind::Min, o)
    }
    fn max(self, o: Var<'t>) -> Var<'t> {
        self.bin(BinaryKind::Max, o)
    }
    fn square(self) -> Var<'t> {
        self.un(UnaryKind::Square)
    }
    fn value(self) -> f64 {
        self.tape.value(self)
    }
}

/// Euclidean norm regularized as sqrt(|p|^2 + eps^2), eps = 1e-8.
pub fn norm2_reg<S: Scalar>(p: &[S]) -> S {
    sum_squares(p).shift(1e-16).sqrt_guard()
}

/// Exact Euclidean norm; subgradient 0 at the origin.
pub fn norm2<S: Scalar>(p: &[S]) -> S {
    sum_squares(p).sqrt_guard()
}

pub fn sum_squares<S: Scalar>(p: &[S]) -> S {
    let mut acc = p[0].square();
    for v in &p[1..] {
        acc = acc + v.square();
    }
    acc
}

pub fn sum<S: Scalar>(p: &[S]) -> S {
    let mut acc = p[0];
    for v in &p[1..] {
        acc = acc + *v;
    }
    acc
}

pub fn dot_s<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for (x, y) in a[1..].iter().zip(&b[1..]) {
        acc = acc + *x * *y;
    }
    acc
}
