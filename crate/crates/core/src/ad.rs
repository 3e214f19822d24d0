//! Taped reverse-mode automatic differentiation.
//!
//! [`Var`] records every operation involving a tracked operand on a
//! thread-local tape. A [`Tape`] guard owns the tape for its lifetime; calling
//! [`Tape::gradient`] sweeps it backwards from a set of seeded outputs.
//!
//! Operations whose operands are all untracked constants do not touch the
//! tape, which keeps the per-step tapes of the simulator small.

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{
    Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign,
};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use crate::scalar::Real;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    a: u32,
    b: u32,
    da: f64,
    db: f64,
}

thread_local! {
    static TAPE: RefCell<Vec<Node>> = const { RefCell::new(Vec::new()) };
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
}

#[inline]
fn push(node: Node) -> u32 {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let idx = t.len();
        assert!(idx < NONE as usize, "tape overflow");
        t.push(node);
        idx as u32
    })
}

/// Scalar carrying a primal value and, when tracked, its tape slot.
#[derive(Clone, Copy)]
pub struct Var {
    val: f64,
    idx: u32,
}

impl Var {
    /// Untracked constant.
    #[inline]
    pub const fn constant(val: f64) -> Self {
        Self { val, idx: NONE }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.val
    }

    #[inline]
    pub fn is_tracked(self) -> bool {
        self.idx != NONE
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Self {
        if self.idx == NONE {
            return Self::constant(val);
        }
        let idx = push(Node {
            a: self.idx,
            b: NONE,
            da: d,
            db: 0.0,
        });
        Self { val, idx }
    }

    #[inline]
    fn binary(self, rhs: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.idx == NONE, rhs.idx == NONE) {
            (true, true) => Self::constant(val),
            (false, true) => self.unary(val, da),
            (true, false) => rhs.unary(val, db),
            (false, false) => {
                let idx = push(Node {
                    a: self.idx,
                    b: rhs.idx,
                    da,
                    db,
                });
                Self { val, idx }
            }
        }
    }
}

/// Exclusive handle on this thread's tape.
///
/// Creating a `Tape` clears any previous recording; dropping it clears the
/// recording again. Only one `Tape` may be alive per thread.
pub struct Tape {
    _private: (),
}

impl Tape {
    pub fn start() -> Self {
        ACTIVE.with(|a| {
            assert!(!a.get(), "a tape is already active on this thread");
            a.set(true);
        });
        TAPE.with(|t| t.borrow_mut().clear());
        Self { _private: () }
    }

    /// New independent variable.
    pub fn var(&self, val: f64) -> Var {
        let idx = push(Node {
            a: NONE,
            b: NONE,
            da: 0.0,
            db: 0.0,
        });
        Var { val, idx }
    }

    pub fn vars(&self, vals: &[f64]) -> Vec<Var> {
        vals.iter().map(|&v| self.var(v)).collect()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reverse sweep. Each `(output, seed)` pair adds `seed` to the adjoint of
    /// `output`; untracked outputs are ignored.
    pub fn gradient(&self, seeds: &[(Var, f64)]) -> Adjoints {
        TAPE.with(|t| {
            let tape = t.borrow();
            let mut adj = vec![0.0; tape.len()];
            for &(v, s) in seeds {
                if v.idx != NONE {
                    adj[v.idx as usize] += s;
                }
            }
            for i in (0..tape.len()).rev() {
                let g = adj[i];
                if g == 0.0 {
                    continue;
                }
                let n = tape[i];
                if n.a != NONE {
                    adj[n.a as usize] += n.da * g;
                }
                if n.b != NONE {
                    adj[n.b as usize] += n.db * g;
                }
            }
            Adjoints(adj)
        })
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.clear();
            t.shrink_to(1 << 20);
        });
        ACTIVE.with(|a| a.set(false));
    }
}

/// Result of a reverse sweep.
pub struct Adjoints(Vec<f64>);

impl Adjoints {
    /// Adjoint of `v`; zero for constants.
    #[inline]
    pub fn wrt(&self, v: Var) -> f64 {
        if v.idx == NONE {
            0.0
        } else {
            self.0[v.idx as usize]
        }
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({:?})", self.val)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.val, f)
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.val == other.val
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.val.partial_cmp(&other.val)
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: Var) -> Var {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: Var) -> Var {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: Var) -> Var {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: Var) -> Var {
        let q = self.val / rhs.val;
        self.binary(rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl Rem for Var {
    type Output = Var;
    fn rem(self, rhs: Var) -> Var {
        let r = self.val % rhs.val;
        let k = (self.val / rhs.val).trunc();
        self.binary(rhs, r, 1.0, -k)
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

macro_rules! assign_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for Var {
            #[inline]
            fn $m(&mut self, rhs: Var) {
                *self = *self $op rhs;
            }
        }
    };
}

assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl Zero for Var {
    fn zero() -> Self {
        Self::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.val == 0.0
    }
}

impl One for Var {
    fn one() -> Self {
        Self::constant(1.0)
    }
}

impl Num for Var {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::constant)
    }
}

impl ToPrimitive for Var {
    fn to_i64(&self) -> Option<i64> {
        self.val.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.val.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.val)
    }
}

impl NumCast for Var {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Self::constant)
    }
}

impl FromPrimitive for Var {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Self::constant(n as f64))
    }
    fn from_u64(n: u64) -> Option<Self> {
        Some(Self::constant(n as f64))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Self::constant(n))
    }
}

impl Float for Var {
    fn nan() -> Self {
        Self::constant(f64::NAN)
    }
    fn infinity() -> Self {
        Self::constant(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Self::constant(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Self::constant(-0.0)
    }
    fn min_value() -> Self {
        Self::constant(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Self::constant(f64::MIN_POSITIVE)
    }
    fn max_value() -> Self {
        Self::constant(f64::MAX)
    }
    fn is_nan(self) -> bool {
        self.val.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.val.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.val.is_finite()
    }
    fn is_normal(self) -> bool {
        self.val.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.val.classify()
    }
    // Piecewise-constant functions have zero derivative almost everywhere.
    fn floor(self) -> Self {
        Self::constant(self.val.floor())
    }
    fn ceil(self) -> Self {
        Self::constant(self.val.ceil())
    }
    fn round(self) -> Self {
        Self::constant(self.val.round())
    }
    fn trunc(self) -> Self {
        Self::constant(self.val.trunc())
    }
    fn fract(self) -> Self {
        self.unary(self.val.fract(), 1.0)
    }
    fn abs(self) -> Self {
        let s = if self.val < 0.0 { -1.0 } else { 1.0 };
        self.unary(self.val.abs(), s)
    }
    fn signum(self) -> Self {
        Self::constant(self.val.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.val.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.val.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.val;
        self.unary(r, -r * r)
    }
    fn powi(self, n: i32) -> Self {
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.unary(self.val.powi(n), d)
    }
    fn powf(self, n: Self) -> Self {
        let v = self.val.powf(n.val);
        let da = if n.val == 0.0 {
            0.0
        } else {
            n.val * self.val.powf(n.val - 1.0)
        };
        let db = if self.val > 0.0 { v * self.val.ln() } else { 0.0 };
        self.binary(n, v, da, db)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn exp2(self) -> Self {
        let e = self.val.exp2();
        self.unary(e, e * std::f64::consts::LN_2)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.unary(self.val.log2(), 1.0 / (self.val * std::f64::consts::LN_2))
    }
    fn log10(self) -> Self {
        self.unary(self.val.log10(), 1.0 / (self.val * std::f64::consts::LN_10))
    }
    fn max(self, other: Self) -> Self {
        if self.val >= other.val || other.val.is_nan() {
            self
        } else {
            other
        }
    }
    fn min(self, other: Self) -> Self {
        if self.val <= other.val || other.val.is_nan() {
            self
        } else {
            other
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self.val <= other.val {
            Self::constant(0.0)
        } else {
            self - other
        }
    }
    fn cbrt(self) -> Self {
        let c = self.val.cbrt();
        self.unary(c, 1.0 / (3.0 * c * c))
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn tan(self) -> Self {
        let t = self.val.tan();
        self.unary(t, 1.0 + t * t)
    }
    fn asin(self) -> Self {
        self.unary(self.val.asin(), 1.0 / (1.0 - self.val * self.val).sqrt())
    }
    fn acos(self) -> Self {
        self.unary(self.val.acos(), -1.0 / (1.0 - self.val * self.val).sqrt())
    }
    fn atan(self) -> Self {
        self.unary(self.val.atan(), 1.0 / (1.0 + self.val * self.val))
    }
    fn atan2(self, other: Self) -> Self {
        let (y, x) = (self.val, other.val);
        let r2 = x * x + y * y;
        self.binary(other, y.atan2(x), x / r2, -y / r2)
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        self.unary(self.val.exp_m1(), self.val.exp())
    }
    fn ln_1p(self) -> Self {
        self.unary(self.val.ln_1p(), 1.0 / (1.0 + self.val))
    }
    fn sinh(self) -> Self {
        self.unary(self.val.sinh(), self.val.cosh())
    }
    fn cosh(self) -> Self {
        self.unary(self.val.cosh(), self.val.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn asinh(self) -> Self {
        self.unary(self.val.asinh(), 1.0 / (self.val * self.val + 1.0).sqrt())
    }
    fn acosh(self) -> Self {
        self.unary(self.val.acosh(), 1.0 / (self.val * self.val - 1.0).sqrt())
    }
    fn atanh(self) -> Self {
        self.unary(self.val.atanh(), 1.0 / (1.0 - self.val * self.val))
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.val.integer_decode()
    }
}

impl Real for Var {
    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    #[inline]
    fn lit(v: f64) -> Self {
        Self::constant(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn product_rule() {
        let tape = Tape::start();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let z = x * y + x * x;
        let g = tape.gradient(&[(z, 1.0)]);
        assert_eq!(z.value(), 3.0);
        assert_eq!(g.wrt(x), -2.0 + 6.0);
        assert_eq!(g.wrt(y), 3.0);
    }

    #[test]
    fn constants_stay_off_tape() {
        let tape = Tape::start();
        let a = Var::constant(2.0);
        let b = a * a + a.sqrt();
        assert!(!b.is_tracked());
        assert!(tape.is_empty());
        assert_eq!(tape.gradient(&[(b, 1.0)]).wrt(b), 0.0);
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        type F = fn(Var) -> Var;
        let cases: [(F, fn(f64) -> f64, f64); 8] = [
            (|x| x.sqrt(), f64::sqrt, 1.7),
            (|x| x.exp(), f64::exp, 0.3),
            (|x| x.ln(), f64::ln, 2.2),
            (|x| x.powi(3), |x| x.powi(3), -1.3),
            (|x| x.sin() * x.cos(), |x| x.sin() * x.cos(), 0.7),
            (|x| x.atan2(Var::constant(0.4)), |x| x.atan2(0.4), 0.9),
            (|x| x.recip().tanh(), |x| x.recip().tanh(), 0.8),
            (|x| x.abs() / (x * x + Var::constant(1.0)), |x| x.abs() / (x * x + 1.0), -0.6),
        ];
        for (fv, ff, x0) in cases {
            let tape = Tape::start();
            let x = tape.var(x0);
            let y = fv(x);
            let g = tape.gradient(&[(y, 1.0)]).wrt(x);
            let expect = fd(ff, x0);
            assert!((g - expect).abs() < 1e-7 * expect.abs().max(1.0), "{g} vs {expect}");
            assert_eq!(y.value(), ff(x0));
        }
    }

    #[test]
    fn seeds_accumulate_over_outputs() {
        let tape = Tape::start();
        let x = tape.var(2.0);
        let a = x * x;
        let b = x * Var::constant(5.0);
        let g = tape.gradient(&[(a, 2.0), (b, -1.0)]);
        assert_eq!(g.wrt(x), 2.0 * 4.0 - 5.0);
    }
}
