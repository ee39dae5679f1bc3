//! Midpoint-radius reals: an MPFR midpoint with an `f64` radius that is an
//! upper bound on the absolute error.
//!
//! MPFR rounds every primitive correctly, so a rounded result `v` is within
//! `|v| 2^{-prec}` of the exact value; we charge `|v| 2^{1-prec}`. Radii are
//! combined in `f64` and inflated by [`up`] after each step.

use std::cmp::Ordering;
use std::fmt;

use rug::float::{Constant, Round};
use rug::{Float, Integer, Rational};
use serde::ser::SerializeStruct;
use serde::Serialize;

const INFLATE: f64 = 1.0 + 8.0 * f64::EPSILON;

/// Rounds an error sum outward.
pub(crate) fn up(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * INFLATE + f64::MIN_POSITIVE
    }
}

fn mag_up(v: &Float) -> f64 {
    v.clone().abs().to_f64_round(Round::Up)
}

fn rounding_err(v: &Float, dir: Ordering) -> f64 {
    if dir == Ordering::Equal {
        0.0
    } else {
        up(mag_up(v) * 2f64.powi(1 - v.prec() as i32))
    }
}

#[derive(Clone, Debug)]
pub struct ApproxReal {
    value: Float,
    abs_err: f64,
}

impl ApproxReal {
    pub fn new(value: Float, abs_err: f64) -> Self {
        assert!(abs_err >= 0.0, "negative error radius");
        ApproxReal { value, abs_err }
    }

    pub fn zero(bits: u32) -> Self {
        Self::new(Float::new(bits), 0.0)
    }

    pub fn from_int(v: impl Into<Integer>, bits: u32) -> Self {
        let (f, dir) = Float::with_val_round(bits, v.into(), Round::Nearest);
        let e = rounding_err(&f, dir);
        Self::new(f, e)
    }

    pub fn from_rational(q: &Rational, bits: u32) -> Self {
        let (f, dir) = Float::with_val_round(bits, q, Round::Nearest);
        let e = rounding_err(&f, dir);
        Self::new(f, e)
    }

    /// An `f64` midpoint with a caller-supplied error bound.
    pub fn from_f64(v: f64, abs_err: f64, bits: u32) -> Self {
        Self::new(Float::with_val(bits.max(53), v), abs_err)
    }

    pub fn pi(bits: u32) -> Self {
        let f = Float::with_val(bits, Constant::Pi);
        let e = rounding_err(&f, Ordering::Less);
        Self::new(f, e)
    }

    pub fn value(&self) -> &Float {
        &self.value
    }

    pub fn abs_err(&self) -> f64 {
        self.abs_err
    }

    pub fn prec(&self) -> u32 {
        self.value.prec()
    }

    pub fn to_f64(&self) -> f64 {
        self.value.to_f64()
    }

    /// An `f64` no smaller than every real the ball contains.
    pub fn upper(&self) -> f64 {
        up(self.value.to_f64_round(Round::Up) + self.abs_err)
    }

    /// An `f64` no larger than every real the ball contains.
    pub fn lower(&self) -> f64 {
        let lo = self.value.to_f64_round(Round::Down) - self.abs_err;
        if lo == 0.0 {
            0.0
        } else {
            lo - lo.abs() * 8.0 * f64::EPSILON - f64::MIN_POSITIVE
        }
    }

    /// Certified `self < t`.
    pub fn certainly_lt(&self, t: f64) -> bool {
        self.upper() < t
    }

    /// Certified `self > t`.
    pub fn certainly_gt(&self, t: f64) -> bool {
        self.lower() > t
    }

    /// True when the ball may contain 0.
    pub fn may_be_zero(&self) -> bool {
        mag_up(&self.value) <= self.abs_err || self.value.is_zero()
    }

    /// Whether `x` lies in the ball.
    pub fn contains_int(&self, x: &Integer) -> bool {
        let d = Float::with_val(self.prec() + 64, &self.value - x);
        mag_up(&d) <= self.abs_err
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        let d = Float::with_val(self.prec().max(64) + 64, &self.value - x);
        mag_up(&d) <= self.abs_err
    }

    /// `|self - other|` bounded above, for cross-checks between two balls.
    pub fn distance_upper(&self, other: &ApproxReal) -> f64 {
        let d = Float::with_val(self.prec().max(other.prec()) + 64, &self.value - &other.value);
        mag_up(&d)
    }

    pub fn add(&self, rhs: &ApproxReal) -> ApproxReal {
        let (v, dir) = Float::with_val_round(self.prec(), &self.value + &rhs.value, Round::Nearest);
        let e = up(self.abs_err + rhs.abs_err + rounding_err(&v, dir));
        ApproxReal::new(v, e)
    }

    pub fn sub(&self, rhs: &ApproxReal) -> ApproxReal {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> ApproxReal {
        ApproxReal::new(Float::with_val(self.prec(), -&self.value), self.abs_err)
    }

    pub fn abs(&self) -> ApproxReal {
        ApproxReal::new(self.value.clone().abs(), self.abs_err)
    }

    pub fn mul(&self, rhs: &ApproxReal) -> ApproxReal {
        let (v, dir) = Float::with_val_round(self.prec(), &self.value * &rhs.value, Round::Nearest);
        let e = up(mag_up(&self.value) * rhs.abs_err
            + mag_up(&rhs.value) * self.abs_err
            + self.abs_err * rhs.abs_err
            + rounding_err(&v, dir));
        ApproxReal::new(v, e)
    }

    pub fn mul_int(&self, k: i64) -> ApproxReal {
        let (v, dir) = Float::with_val_round(self.prec(), &self.value * k, Round::Nearest);
        let e = up(self.abs_err * k.unsigned_abs() as f64 + rounding_err(&v, dir));
        ApproxReal::new(v, e)
    }

    pub fn div(&self, rhs: &ApproxReal) -> Option<ApproxReal> {
        let b = rhs.value.clone().abs().to_f64_round(Round::Down);
        if b <= rhs.abs_err {
            return None;
        }
        let (v, dir) = Float::with_val_round(self.prec(), &self.value / &rhs.value, Round::Nearest);
        let a = mag_up(&self.value);
        let prop = (a * rhs.abs_err + b * self.abs_err) / (b * (b - rhs.abs_err));
        Some(ApproxReal::new(v.clone(), up(prop + rounding_err(&v, dir))))
    }

    pub fn square(&self) -> ApproxReal {
        self.mul(self)
    }

    pub fn sqrt(&self) -> Option<ApproxReal> {
        let lo = self.value.to_f64_round(Round::Down) - self.abs_err;
        if lo < 0.0 || (lo == 0.0 && self.abs_err > 0.0) {
            return None;
        }
        let (v, dir) = Float::with_val_round(self.prec(), self.value.sqrt_ref(), Round::Nearest);
        let prop = if self.abs_err == 0.0 { 0.0 } else { self.abs_err / lo.sqrt() };
        Some(ApproxReal::new(v.clone(), up(prop + rounding_err(&v, dir))))
    }

    pub fn exp(&self) -> ApproxReal {
        let (v, dir) = Float::with_val_round(self.prec(), self.value.exp_ref(), Round::Nearest);
        let m = mag_up(&v);
        let prop = m * self.abs_err.exp_m1() * INFLATE;
        ApproxReal::new(v.clone(), up(prop + rounding_err(&v, dir)))
    }

    /// Natural log; `None` unless the ball is strictly positive.
    pub fn ln(&self) -> Option<ApproxReal> {
        let lo = self.value.to_f64_round(Round::Down) - self.abs_err;
        if lo <= 0.0 {
            return None;
        }
        let (v, dir) = Float::with_val_round(self.prec(), self.value.ln_ref(), Round::Nearest);
        let prop = if self.abs_err == 0.0 {
            0.0
        } else {
            let mid = self.value.to_f64_round(Round::Down);
            -(-(self.abs_err / mid)).ln_1p() * INFLATE
        };
        Some(ApproxReal::new(v.clone(), up(prop + rounding_err(&v, dir))))
    }

    /// `self^q` for a strictly positive ball, via `exp(q ln self)`.
    pub fn pow_rational(&self, q: &Rational) -> Option<ApproxReal> {
        if *q == 0 {
            return Some(ApproxReal::from_int(1, self.prec()));
        }
        let l = self.ln()?;
        Some(l.mul(&ApproxReal::from_rational(q, self.prec())).exp())
    }

    /// `2cos(2πk/denom)`.
    pub fn two_cos_frac(k: i64, denom: i64, bits: u32) -> ApproxReal {
        let work = bits + 16;
        let angle = ApproxReal::pi(work).mul_int(2 * k);
        let angle = angle
            .div(&ApproxReal::from_int(denom, work))
            .expect("nonzero denominator");
        let (c, dir) = Float::with_val_round(work, angle.value.cos_ref(), Round::Nearest);
        let e = up(angle.abs_err + rounding_err(&c, dir));
        let two_c = Float::with_val(work, &c * 2u32); // exact
        let (v, dir2) = Float::with_val_round(bits, &two_c, Round::Nearest);
        ApproxReal::new(v.clone(), up(2.0 * e + rounding_err(&v, dir2)))
    }

    /// Decimal rendering of the midpoint with `digits` significant digits.
    pub fn value_string(&self, digits: usize) -> String {
        self.value.to_string_radix(10, Some(digits))
    }

    /// Digits after the decimal point that the error radius leaves meaningful.
    fn display_decimals(&self) -> usize {
        if self.abs_err == 0.0 {
            12
        } else {
            (-self.abs_err.log10()).floor().clamp(0.0, 30.0) as usize
        }
    }

    /// Rendering with a fixed number of decimals, e.g. `95.69172386`.
    pub fn fixed(&self, decimals: usize) -> String {
        let digits = self.value.to_f64().abs().log10().floor().max(0.0) as usize + 1 + decimals;
        let s = Float::with_val(self.prec(), &self.value).to_string_radix(10, Some(digits + 2));
        format_fixed(&s, decimals).unwrap_or(s)
    }
}

/// Truncates an MPFR `to_string_radix` rendering (possibly with exponent)
/// to `decimals` places after the point.
fn format_fixed(s: &str, decimals: usize) -> Option<String> {
    let (mantissa, exp) = match s.split_once('e') {
        Some((m, e)) => (m, e.parse::<i64>().ok()?),
        None => (s, 0),
    };
    let neg = mantissa.starts_with('-');
    let mantissa = mantissa.trim_start_matches('-');
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: String = format!("{int_part}{frac_part}");
    let point = int_part.len() as i64 + exp;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if point <= 0 {
        out.push('0');
    } else {
        for i in 0..point {
            out.push(digits.chars().nth(i as usize).unwrap_or('0'));
        }
    }
    if decimals > 0 {
        out.push('.');
        for i in 0..decimals as i64 {
            let pos = point + i;
            let c = if pos < 0 { '0' } else { digits.chars().nth(pos as usize).unwrap_or('0') };
            out.push(c);
        }
    }
    Some(out)
}

impl fmt::Display for ApproxReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = f.precision().unwrap_or_else(|| self.display_decimals().min(20));
        write!(f, "{} ± {:.1e}", self.fixed(d), self.abs_err)
    }
}

impl Serialize for ApproxReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ApproxReal", 3)?;
        st.serialize_field("value", &self.value_string(30))?;
        st.serialize_field("approx", &self.to_f64())?;
        st.serialize_field("abs_err", &self.abs_err)?;
        st.end()
    }
}
