//! Exact arithmetic in the ring of integers of the `n`th layer `B_n`.
//!
//! Elements are integer vectors over the orthogonal basis
//! `b_0 = 1`, `b_i = 2cos(2πi / 2^{n+2})` for `1 <= i < 2^n`. Products of
//! basis vectors are expanded with `b_i b_j = b_{i+j} + b_{i-j}` and folded
//! back into range with [`fold_index`].

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rug::{Assign, Integer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported layer. Multiplication is quadratic in `2^n`.
pub const MAX_LEVEL: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("invalid level n={0} (supported: 1..={MAX_LEVEL})")]
    InvalidLevel(u32),
    #[error("level mismatch: n={left} vs n={right}")]
    LevelMismatch { left: u32, right: u32 },
    #[error("expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("element is not a unit (absolute norm {norm})")]
    NotAUnit { norm: String },
    #[error("relative norm has a nonzero odd-index coefficient at b_{index}")]
    OddCoefficient { index: usize },
    #[error("norm is not a rational integer")]
    NonIntegralNorm,
    #[error("cannot parse ring element: {0}")]
    Parse(String),
}

/// Layer index `n`; the field `B_n` has degree `2^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Level(u32);

impl Level {
    /// The rational integers, used as the target of the relative norm at `n = 1`.
    pub const RATIONAL: Level = Level(0);

    pub fn new(n: u32) -> Result<Self, RingError> {
        if n == 0 || n > MAX_LEVEL {
            Err(RingError::InvalidLevel(n))
        } else {
            Ok(Level(n))
        }
    }

    pub fn n(self) -> u32 {
        self.0
    }

    /// `2^n`, the number of basis vectors.
    pub fn degree(self) -> usize {
        1 << self.0
    }

    /// `2^{n-1}`, the rank of the relative unit lattice.
    pub fn half_degree(self) -> usize {
        self.degree() / 2
    }

    /// `2^{n+2}`: `b_k` depends only on `k` modulo this.
    pub fn circle(self) -> i64 {
        1 << (self.0 + 2)
    }

    /// The layer below; `Level::RATIONAL` for `n = 1`.
    pub fn below(self) -> Level {
        Level(self.0.saturating_sub(1))
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Normal form of the symbol `b_k = 2cos(2πk / 2^{n+2})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldedIndex {
    /// `b_{2^n} = 0`.
    Zero,
    /// The rational constant `±2` (from `2cos(0)` or `2cos(π)`), never `b_0`.
    Constant(i8),
    /// `sign * b_index` with `1 <= index < 2^n`.
    Basis { sign: i8, index: usize },
}

pub fn fold_index(level: Level, k: i64) -> FoldedIndex {
    let m = level.degree() as i64;
    let full = 4 * m;
    let mut k = k.rem_euclid(full);
    if k == 0 {
        return FoldedIndex::Constant(2);
    }
    if k > 2 * m {
        k = full - k;
    }
    if k == 2 * m {
        FoldedIndex::Constant(-2)
    } else if k == m {
        FoldedIndex::Zero
    } else if k > m {
        FoldedIndex::Basis { sign: -1, index: (2 * m - k) as usize }
    } else {
        FoldedIndex::Basis { sign: 1, index: k as usize }
    }
}

/// `(index, coefficient)` contribution of a folded symbol, if nonzero.
fn folded_term(f: FoldedIndex) -> Option<(usize, i8)> {
    match f {
        FoldedIndex::Zero => None,
        FoldedIndex::Constant(c) => Some((0, c)),
        FoldedIndex::Basis { sign, index } => Some((index, sign)),
    }
}

/// Expansion of `b_i b_j` for `i, j >= 1` into at most two folded terms.
struct MulTable {
    m: usize,
    terms: Vec<[(u16, i8); 2]>,
}

impl MulTable {
    fn build(level: Level) -> Self {
        let m = level.degree();
        let mut terms = vec![[(0u16, 0i8); 2]; m * m];
        for i in 1..m {
            for j in 1..m {
                let mut slot = [(0u16, 0i8); 2];
                let plus = folded_term(fold_index(level, (i + j) as i64));
                let minus = folded_term(fold_index(level, i as i64 - j as i64));
                for (s, t) in slot.iter_mut().zip([plus, minus]) {
                    if let Some((idx, c)) = t {
                        *s = (idx as u16, c);
                    }
                }
                terms[i * m + j] = slot;
            }
        }
        MulTable { m, terms }
    }
}

fn mul_table(level: Level) -> Arc<MulTable> {
    static TABLES: OnceLock<Vec<OnceLock<Arc<MulTable>>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| (0..=MAX_LEVEL).map(|_| OnceLock::new()).collect());
    tables[level.n() as usize]
        .get_or_init(|| Arc::new(MulTable::build(level)))
        .clone()
}

fn add_scaled(acc: &mut Integer, t: &Integer, c: i8) {
    match c {
        1 => *acc += t,
        -1 => *acc -= t,
        2 => {
            *acc += t;
            *acc += t;
        }
        -2 => {
            *acc -= t;
            *acc -= t;
        }
        0 => {}
        _ => unreachable!("fold coefficients are in {{-2,-1,0,1,2}}"),
    }
}

/// An element `Σ a_i b_i` of `O_{B_n}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RingElement {
    level: Level,
    coeffs: Vec<Integer>,
}

impl RingElement {
    pub fn new(level: Level, coeffs: Vec<Integer>) -> Result<Self, RingError> {
        let expected = level.degree();
        if coeffs.len() != expected {
            return Err(RingError::LengthMismatch { expected, got: coeffs.len() });
        }
        Ok(RingElement { level, coeffs })
    }

    pub fn from_i64s(level: Level, coeffs: &[i64]) -> Result<Self, RingError> {
        Self::new(level, coeffs.iter().map(|&c| Integer::from(c)).collect())
    }

    /// Builds an element from sparse `(index, coefficient)` pairs.
    pub fn from_terms(level: Level, terms: &[(usize, i64)]) -> Self {
        let mut coeffs = vec![Integer::new(); level.degree()];
        for &(i, c) in terms {
            coeffs[i] += c;
        }
        RingElement { level, coeffs }
    }

    pub fn zero(level: Level) -> Self {
        RingElement { level, coeffs: vec![Integer::new(); level.degree()] }
    }

    pub fn one(level: Level) -> Self {
        Self::constant(level, 1)
    }

    pub fn constant(level: Level, c: i64) -> Self {
        let mut x = Self::zero(level);
        x.coeffs[0] = Integer::from(c);
        x
    }

    /// The basis vector `b_i`.
    pub fn basis(level: Level, i: usize) -> Self {
        let mut x = Self::zero(level);
        x.coeffs[i] = Integer::from(1);
        x
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn coeffs(&self) -> &[Integer] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Integer> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0)
    }

    /// True when only `a_0` may be nonzero.
    pub fn is_rational(&self) -> bool {
        self.coeffs[1..].iter().all(|c| *c == 0)
    }

    fn check_level(&self, other: &Self) -> Result<(), RingError> {
        if self.level != other.level {
            Err(RingError::LevelMismatch { left: self.level.n(), right: other.level.n() })
        } else {
            Ok(())
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, RingError> {
        self.check_level(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| Integer::from(a + b))
            .collect();
        Ok(RingElement { level: self.level, coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, RingError> {
        self.check_level(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| Integer::from(a - b))
            .collect();
        Ok(RingElement { level: self.level, coeffs })
    }

    pub fn neg(&self) -> Self {
        RingElement {
            level: self.level,
            coeffs: self.coeffs.iter().map(|a| Integer::from(-a)).collect(),
        }
    }

    pub fn scale(&self, c: &Integer) -> Self {
        RingElement {
            level: self.level,
            coeffs: self.coeffs.iter().map(|a| Integer::from(a * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, RingError> {
        self.check_level(other)?;
        let table = mul_table(self.level);
        let m = table.m;
        let mut acc = vec![Integer::new(); m];
        let lhs: Vec<(usize, &Integer)> =
            self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0).collect();
        let rhs: Vec<(usize, &Integer)> =
            other.coeffs.iter().enumerate().filter(|(_, c)| **c != 0).collect();
        let mut t = Integer::new();
        for &(i, a) in &lhs {
            for &(j, b) in &rhs {
                t.assign(a * b);
                if i == 0 {
                    acc[j] += &t;
                } else if j == 0 {
                    acc[i] += &t;
                } else {
                    for &(idx, c) in &table.terms[i * m + j] {
                        add_scaled(&mut acc[idx as usize], &t, c);
                    }
                }
            }
        }
        Ok(RingElement { level: self.level, coeffs: acc })
    }

    pub fn square(&self) -> Self {
        self.mul(self).expect("same level")
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one(self.level);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base).expect("same level");
            }
            e >>= 1;
            if e > 0 {
                base = base.square();
            }
        }
        acc
    }

    /// `σ^j(x)` where `σ(b_i) = b_{3i}` (folded).
    pub fn galois(&self, j: i64) -> Self {
        let level = self.level;
        let m = level.degree();
        let full = level.circle();
        let j = j.rem_euclid(m as i64) as u64;
        let mult = pow_mod(3, j, full as u64) as i64;
        let mut out = vec![Integer::new(); m];
        out[0] += &self.coeffs[0];
        for (i, a) in self.coeffs.iter().enumerate().skip(1) {
            if *a == 0 {
                continue;
            }
            match fold_index(level, (i as i64 * mult) % full) {
                FoldedIndex::Basis { sign, index } => add_scaled(&mut out[index], a, sign),
                other => unreachable!("σ permutes b_1..b_(2^n-1), got {other:?}"),
            }
        }
        RingElement { level, coeffs: out }
    }

    /// `Tr(x) = 2^n a_0`.
    pub fn trace(&self) -> Integer {
        Integer::from(&self.coeffs[0] << self.level.n())
    }

    /// `Tr(x²) = 2^n (a_0² + 2 Σ_{i≥1} a_i²)`.
    pub fn trace_of_square(&self) -> Integer {
        let mut s = Integer::new();
        for a in &self.coeffs[1..] {
            s += a.square_ref();
        }
        s *= 2;
        s += self.coeffs[0].square_ref();
        s << self.level.n()
    }

    /// `N_{n/n-1}(x) = x σ^{2^{n-1}}(x)`, re-expressed at level `n - 1`.
    pub fn relative_norm(&self) -> Result<Self, RingError> {
        if self.level == Level::RATIONAL {
            return Err(RingError::InvalidLevel(0));
        }
        let conj = self.galois(self.level.half_degree() as i64);
        let y = self.mul(&conj)?;
        if let Some((index, _)) = y.coeffs.iter().enumerate().find(|(i, c)| i % 2 == 1 && **c != 0) {
            return Err(RingError::OddCoefficient { index });
        }
        let coeffs = y.coeffs.into_iter().step_by(2).collect();
        Ok(RingElement { level: self.level.below(), coeffs })
    }

    fn product_of_conjugates(&self, start: i64) -> Self {
        let m = self.level.degree() as i64;
        (start..m).fold(Self::one(self.level), |acc, j| {
            acc.mul(&self.galois(j)).expect("same level")
        })
    }

    /// `∏_j σ^j(x)`.
    pub fn absolute_norm(&self) -> Result<Integer, RingError> {
        let p = self.product_of_conjugates(0);
        if !p.is_rational() {
            return Err(RingError::NonIntegralNorm);
        }
        Ok(p.coeffs.into_iter().next().expect("nonempty"))
    }

    /// Inverse of a unit, as `±∏_{j≥1} σ^j(x)`.
    pub fn invert_unit(&self) -> Result<Self, RingError> {
        let p = self.product_of_conjugates(1);
        let norm = self.mul(&p)?;
        if !norm.is_rational() {
            return Err(RingError::NonIntegralNorm);
        }
        let n = &norm.coeffs[0];
        if *n == 1 {
            Ok(p)
        } else if *n == -1 {
            Ok(p.neg())
        } else {
            Err(RingError::NotAUnit { norm: n.to_string() })
        }
    }

    /// Lexicographic comparison of coefficient vectors.
    pub fn cmp_coeffs(&self, other: &Self) -> std::cmp::Ordering {
        self.coeffs.cmp(&other.coeffs)
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}: [", self.level.n())?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

impl FromStr for RingElement {
    type Err = RingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RingError::Parse(s.to_string());
        let (head, body) = s.trim().split_once(':').ok_or_else(err)?;
        let n: u32 = head
            .trim()
            .strip_prefix("n=")
            .ok_or_else(err)?
            .trim()
            .parse()
            .map_err(|_| err())?;
        let level = if n == 0 { Level::RATIONAL } else { Level::new(n)? };
        let body = body
            .trim()
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .ok_or_else(err)?;
        let coeffs = body
            .split(',')
            .map(|t| t.trim().parse::<Integer>().map_err(|_| err()))
            .collect::<Result<Vec<_>, _>>()?;
        RingElement::new(level, coeffs)
    }
}

impl Serialize for RingElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RingElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn pow_mod(base: u64, mut e: u64, m: u64) -> u64 {
    let mut b = base % m;
    let mut acc = 1 % m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}
