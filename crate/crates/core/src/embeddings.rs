//! Real embeddings `x ↦ (σ^i(x))_i`, log vectors of relative units, and
//! traces of real powers of products of conjugates of `ε_n`.
//!
//! Two evaluators share one cached table of conjugates per `(n, bits)`:
//! [`trace_power`] works in MPFR balls and is the reference, while
//! [`FastTrace`] evaluates in `f64` with a forward error bound for the
//! enumeration and grid loops. The `f64` bound assumes `f64::exp` is
//! accurate to 2 ulp; decisions inside the `f64` radius are redone in MPFR.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rug::{Float, Integer, Rational};
use thiserror::Error;

use crate::approx::{up, ApproxReal};
use crate::ring::{Level, RingElement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("conjugate {index} is indistinguishable from zero at {bits} bits")]
    ZeroConjugate { index: usize, bits: u32 },
    #[error("expected {expected} exponents, got {got}")]
    ExponentLength { expected: usize, got: usize },
    #[error("precision exhausted: error {achieved:e} above target {target:e} at {bits} bits")]
    PrecisionExhausted { bits: u32, achieved: f64, target: f64 },
    #[error("precision must be at least 64 bits, got {0}")]
    PrecisionTooLow(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Precision {
    pub bits: u32,
    pub target_abs_err: f64,
}

impl Precision {
    pub fn new(bits: u32, target_abs_err: f64) -> Result<Self, EmbeddingError> {
        if bits < 64 {
            return Err(EmbeddingError::PrecisionTooLow(bits));
        }
        Ok(Precision { bits, target_abs_err })
    }

    /// 192 bits up to `n = 5`, 320 bits for `n = 6, 7`, 512 beyond.
    pub fn default_for(level: Level) -> Self {
        let bits = match level.n() {
            0..=5 => 192,
            6..=7 => 320,
            _ => 512,
        };
        Precision { bits, target_abs_err: 1e-20 }
    }

    pub fn doubled(self) -> Self {
        Precision { bits: self.bits * 2, ..self }
    }

    pub fn with_bits(self, bits: u32) -> Self {
        Precision { bits, ..self }
    }
}

/// Cached numerical data for one `(n, bits)`.
#[derive(Debug)]
pub struct ConjugateTable {
    pub level: Level,
    pub bits: u32,
    /// `2cos(2πk / 2^{n+2})` for `0 <= k < 2^{n+2}`.
    pub two_cos: Vec<ApproxReal>,
    /// `σ^i(ε_n)` for `0 <= i < 2^n`.
    pub epsilon: Vec<ApproxReal>,
    /// `log|σ^i(ε_n)|` for `0 <= i < 2^n`.
    pub logs: Vec<ApproxReal>,
}

impl ConjugateTable {
    fn build(level: Level, bits: u32) -> Self {
        let full = level.circle();
        let m = level.degree();
        let two_cos: Vec<ApproxReal> =
            (0..full).map(|k| ApproxReal::two_cos_frac(k, full, bits)).collect();
        let one = ApproxReal::from_int(1, bits);
        let mut epsilon = Vec::with_capacity(m);
        let mut logs = Vec::with_capacity(m);
        for i in 0..m {
            let x = &two_cos[galois_multiplier(level, i as i64) as usize];
            let e = x.add(&one).div(&x.sub(&one)).expect("X_n - 1 is bounded away from zero");
            logs.push(e.abs().ln().expect("units have nonzero conjugates"));
            epsilon.push(e);
        }
        ConjugateTable { level, bits, two_cos, epsilon, logs }
    }

    /// Log table extended to a single signed index: `log|σ^k(ε)|` for any `k`.
    pub fn log_at(&self, k: i64) -> &ApproxReal {
        &self.logs[k.rem_euclid(self.level.degree() as i64) as usize]
    }
}

/// `3^i mod 2^{n+2}`, the index multiplier of `σ^i`.
pub fn galois_multiplier(level: Level, i: i64) -> i64 {
    let full = level.circle();
    let e = i.rem_euclid(level.degree() as i64);
    (0..e).fold(1i64, |acc, _| acc * 3 % full)
}

/// Shared table for `(n, bits)`, built on first use.
pub fn conjugate_table(level: Level, bits: u32) -> Arc<ConjugateTable> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, u32), Arc<ConjugateTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("cache lock").get(&(level.n(), bits)) {
        return t.clone();
    }
    // build outside the lock; a duplicate build is harmless and the first insert wins
    let table = Arc::new(ConjugateTable::build(level, bits));
    cache
        .lock()
        .expect("cache lock")
        .entry((level.n(), bits))
        .or_insert(table)
        .clone()
}

/// `(σ^i(x))_{0 <= i < 2^n}` as balls.
pub fn conjugates(x: &RingElement, p: &Precision) -> Result<Vec<ApproxReal>, EmbeddingError> {
    if p.bits < 64 {
        return Err(EmbeddingError::PrecisionTooLow(p.bits));
    }
    let level = x.level();
    let table = conjugate_table(level, p.bits);
    let full = level.circle();
    let out = (0..level.degree())
        .map(|i| {
            let mult = galois_multiplier(level, i as i64);
            let mut acc = ApproxReal::from_int(x.coeffs()[0].clone(), p.bits);
            for (j, a) in x.coeffs().iter().enumerate().skip(1) {
                if *a == 0 {
                    continue;
                }
                let c = &table.two_cos[((j as i64 * mult) % full) as usize];
                acc = acc.add(&c.mul(&ApproxReal::from_int(a.clone(), p.bits)));
            }
            acc
        })
        .collect();
    Ok(out)
}

/// `log|σ^i(u)|` for `0 <= i < 2^{n-1}`.
#[derive(Clone, Debug)]
pub struct LogVector {
    pub level: Level,
    pub entries: Vec<ApproxReal>,
}

impl LogVector {
    /// `Σ x_i²`, the squared length of the log embedding.
    pub fn squared_length(&self) -> ApproxReal {
        let bits = self.entries.first().map_or(64, |e| e.prec());
        self.entries
            .iter()
            .fold(ApproxReal::zero(bits), |acc, x| acc.add(&x.square()))
    }
}

pub fn log_vector(u: &RingElement, p: &Precision) -> Result<LogVector, EmbeddingError> {
    let level = u.level();
    let conj = conjugates(u, p)?;
    let entries = conj
        .iter()
        .take(level.half_degree())
        .enumerate()
        .map(|(index, c)| {
            if c.may_be_zero() {
                return Err(EmbeddingError::ZeroConjugate { index, bits: p.bits });
            }
            c.abs().ln().ok_or(EmbeddingError::ZeroConjugate { index, bits: p.bits })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LogVector { level, entries })
}

fn check_len(level: Level, got: usize) -> Result<(), EmbeddingError> {
    let expected = level.half_degree();
    if got != expected {
        return Err(EmbeddingError::ExponentLength { expected, got });
    }
    Ok(())
}

/// `Σ_{i<2^n} ∏_{j<2^{n-1}} |σ^{i+j}(ε_n)|^{2 e_j}` in MPFR balls.
///
/// Returns `PrecisionExhausted` when the radius exceeds `p.target_abs_err`.
pub fn trace_power(
    level: Level,
    exponents: &[Rational],
    p: &Precision,
) -> Result<ApproxReal, EmbeddingError> {
    check_len(level, exponents.len())?;
    if p.bits < 64 {
        return Err(EmbeddingError::PrecisionTooLow(p.bits));
    }
    let table = conjugate_table(level, p.bits);
    let m = level.degree();
    let twice: Vec<Option<ApproxReal>> = exponents
        .iter()
        .map(|e| {
            (*e != 0).then(|| ApproxReal::from_rational(&Rational::from(e * 2u32), p.bits))
        })
        .collect();
    let mut total = ApproxReal::zero(p.bits);
    for i in 0..m {
        let mut s = ApproxReal::zero(p.bits);
        for (j, e) in twice.iter().enumerate() {
            if let Some(e) = e {
                s = s.add(&table.logs[(i + j) % m].mul(e));
            }
        }
        total = total.add(&s.exp());
    }
    if total.abs_err() > p.target_abs_err {
        return Err(EmbeddingError::PrecisionExhausted {
            bits: p.bits,
            achieved: total.abs_err(),
            target: p.target_abs_err,
        });
    }
    Ok(total)
}

/// [`trace_power`] with precision doubling, at most four times.
pub fn trace_power_escalating(
    level: Level,
    exponents: &[Rational],
    p: &Precision,
) -> Result<ApproxReal, EmbeddingError> {
    let mut prec = *p;
    let mut last = None;
    for _ in 0..5 {
        match trace_power(level, exponents, &prec) {
            Ok(v) => return Ok(v),
            Err(e @ EmbeddingError::PrecisionExhausted { .. }) => {
                last = Some(e);
                prec = prec.doubled();
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Integer exponent vector as rationals.
pub fn int_exponents(n: &[i64]) -> Vec<Rational> {
    n.iter().map(|&k| Rational::from(k)).collect()
}

/// A value with an absolute error bound from the `f64` evaluator.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FastValue {
    pub value: f64,
    pub abs_err: f64,
}

impl FastValue {
    pub fn upper(&self) -> f64 {
        up(self.value + self.abs_err)
    }

    pub fn lower(&self) -> f64 {
        let lo = self.value - self.abs_err;
        lo - lo.abs() * 4.0 * f64::EPSILON
    }

    pub fn to_approx(&self) -> ApproxReal {
        ApproxReal::from_f64(self.value, self.abs_err, 64)
    }
}

const U: f64 = f64::EPSILON / 2.0;

fn gamma(k: usize) -> f64 {
    let ku = k as f64 * U;
    ku / (1.0 - ku)
}

/// `f64` evaluator for [`trace_power`] with a forward error bound.
#[derive(Clone, Debug)]
pub struct FastTrace {
    level: Level,
    logs: Vec<f64>,
    log_err: Vec<f64>,
}

impl FastTrace {
    pub fn new(level: Level, p: &Precision) -> Self {
        let table = conjugate_table(level, p.bits);
        Self::from_table(&table)
    }

    pub fn from_table(table: &ConjugateTable) -> Self {
        let (logs, log_err) = table
            .logs
            .iter()
            .map(|l| {
                let v = l.to_f64();
                let rounding = l.distance_upper(&ApproxReal::from_f64(v, 0.0, l.prec()));
                (v, up(l.abs_err() + rounding))
            })
            .unzip();
        FastTrace { level: table.level, logs, log_err }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    /// `log|σ^k(ε_n)|` as `f64`.
    pub fn logs(&self) -> &[f64] {
        &self.logs
    }

    pub fn log_errors(&self) -> &[f64] {
        &self.log_err
    }

    /// Evaluates with exponents `e_j` known to within `e_err[j]`.
    pub fn eval(&self, exponents: &[f64], exponent_err: &[f64]) -> FastValue {
        let m = self.level.degree();
        let nz: Vec<(usize, f64, f64)> = exponents
            .iter()
            .zip(exponent_err)
            .enumerate()
            .filter(|(_, (e, _))| **e != 0.0)
            .map(|(j, (&e, &de))| (j, e, de))
            .collect();
        let g = gamma(nz.len() + 1);
        let mut total = 0.0f64;
        let mut total_err = 0.0f64;
        for i in 0..m {
            let mut s = 0.0f64;
            let mut abs_sum = 0.0f64;
            let mut prop = 0.0f64;
            for &(j, e, de) in &nz {
                let k = (i + j) % m;
                let l = self.logs[k];
                let dl = self.log_err[k];
                s += e * l;
                abs_sum += (e * l).abs();
                prop += e.abs() * dl + de * (l.abs() + dl);
            }
            let err_s = up(prop + g * abs_sum);
            let v = (2.0 * s).exp();
            let rel = (2.0 * err_s).exp_m1();
            total_err += v * (rel + 2.0 * f64::EPSILON) * (1.0 + 4.0 * f64::EPSILON);
            total += v;
        }
        let err = up(total_err + gamma(m) * total);
        FastValue { value: total, abs_err: err }
    }

    pub fn eval_int(&self, n: &[i64]) -> FastValue {
        let e: Vec<f64> = n.iter().map(|&k| k as f64).collect();
        let de = vec![0.0; n.len()];
        self.eval(&e, &de)
    }

    /// Exponents `a_j / l` with `a_j` exactly representable.
    pub fn eval_over(&self, numerators: &[i64], denom: i64) -> FastValue {
        let d = denom as f64;
        let e: Vec<f64> = numerators.iter().map(|&a| a as f64 / d).collect();
        let de: Vec<f64> = e.iter().map(|x| x.abs() * U).collect();
        self.eval(&e, &de)
    }

    /// Evaluates rational exponents, rounding each to `f64`.
    pub fn eval_rational(&self, exponents: &[Rational]) -> FastValue {
        let (e, de): (Vec<f64>, Vec<f64>) = exponents
            .iter()
            .map(|q| {
                let v = q.to_f64();
                let exact = Rational::from_f64(v).map(|r| r == *q).unwrap_or(false);
                (v, if exact { 0.0 } else { v.abs() * f64::EPSILON })
            })
            .unzip();
        self.eval(&e, &de)
    }
}

/// `M[n] = Σ_{k<2^{n-1}} (Σ_j n_j log|σ^{k+j}(ε_n)|)²`.
pub fn log_length_squared(ft: &FastTrace, n: &[i64]) -> FastValue {
    let m = ft.level.degree();
    let h = ft.level.half_degree();
    let nz: Vec<(usize, f64)> = n
        .iter()
        .enumerate()
        .filter(|(_, &k)| k != 0)
        .map(|(j, &k)| (j, k as f64))
        .collect();
    let g = gamma(nz.len() + 1);
    let mut total = 0.0;
    let mut total_err = 0.0;
    for k in 0..h {
        let mut s = 0.0;
        let mut abs_sum = 0.0;
        let mut prop = 0.0;
        for &(j, c) in &nz {
            let idx = (k + j) % m;
            s += c * ft.logs[idx];
            abs_sum += (c * ft.logs[idx]).abs();
            prop += c.abs() * ft.log_err[idx];
        }
        let es = up(prop + g * abs_sum);
        // |s*² - s²| <= 2|s| es + es², plus one rounding of the square
        total_err += 2.0 * s.abs() * es + es * es + s * s * 2.0 * U;
        total += s * s;
    }
    FastValue { value: total, abs_err: up(total_err + gamma(h) * total) }
}

/// Exact `∏ σ^j(ε)^{n_j}` for an exponent vector, using `σ^{j+2^{n-1}}(ε) = σ^j(ε)^{-1}`.
pub fn unit_from_exponents(epsilon_conjugates: &[RingElement], n: &[i64]) -> RingElement {
    let level = epsilon_conjugates[0].level();
    let h = level.half_degree();
    n.iter().enumerate().filter(|(_, &k)| k != 0).fold(
        RingElement::one(level),
        |acc, (j, &k)| {
            let base = if k > 0 { &epsilon_conjugates[j] } else { &epsilon_conjugates[j + h] };
            acc.mul(&base.pow(k.unsigned_abs())).expect("same level")
        },
    )
}

/// Exact trace as an `Integer` ball check helper: `|value - exact| <= err`.
pub fn agrees_with(fast: &FastValue, exact: &Integer) -> bool {
    let d = (fast.value - exact.to_f64()).abs();
    // exact.to_f64 rounds; charge one ulp of the exact value
    d <= up(fast.abs_err + exact.to_f64().abs() * f64::EPSILON)
}

/// Squared absolute values: `Σ_i σ^i(x)²`, which must equal `Tr(x²)`.
pub fn sum_of_squares(values: &[ApproxReal]) -> ApproxReal {
    let bits = values.first().map_or(64, |v| v.prec());
    values.iter().fold(ApproxReal::zero(bits), |acc, v| acc.add(&v.square()))
}

/// High-precision reference value of `|σ^i(ε_n)|^{2x}` products, exposed for tests.
pub fn epsilon_conjugate(level: Level, i: usize, bits: u32) -> Float {
    conjugate_table(level, bits).epsilon[i].value().clone()
}
