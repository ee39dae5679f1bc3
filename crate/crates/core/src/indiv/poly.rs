//! Polynomials over `F_ℓ` for word-size primes, and factorization of
//! `x^{2^{n-1}} + 1`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::Integer;
use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("moduli differ: {left} vs {right}")]
    ModulusMismatch { left: u64, right: u64 },
    #[error("division by the zero polynomial")]
    DivisionByZero,
    #[error("{0} is not an odd prime")]
    NotOddPrime(u64),
    #[error("polynomials are not coprime")]
    NotCoprime,
}

fn mulmod(a: u64, b: u64, l: u64) -> u64 {
    ((a as u128 * b as u128) % l as u128) as u64
}

pub fn powmod_u64(mut b: u64, mut e: u64, l: u64) -> u64 {
    let mut r = 1 % l;
    b %= l;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, b, l);
        }
        b = mulmod(b, b, l);
        e >>= 1;
    }
    r
}

fn inv_mod(a: u64, l: u64) -> u64 {
    powmod_u64(a, l - 2, l)
}

/// Deterministic Miller–Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'base: for a in BASES {
        let mut x = powmod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'base;
            }
        }
        return false;
    }
    true
}

/// A polynomial over `F_ℓ`, coefficients low to high, trailing zeros trimmed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolyModL {
    modulus: u64,
    coeffs: Vec<u64>,
}

impl PolyModL {
    pub fn new(modulus: u64, coeffs: Vec<u64>) -> Self {
        let mut p = PolyModL { modulus, coeffs: coeffs.into_iter().map(|c| c % modulus).collect() };
        p.trim();
        p
    }

    /// Reduces signed coefficients into `[0, ℓ)`.
    pub fn from_i64s(modulus: u64, coeffs: &[i64]) -> Self {
        let l = modulus as i128;
        Self::new(modulus, coeffs.iter().map(|&c| (c as i128).rem_euclid(l) as u64).collect())
    }

    pub fn from_integers(modulus: u64, coeffs: &[Integer]) -> Self {
        let l = Integer::from(modulus);
        Self::new(
            modulus,
            coeffs
                .iter()
                .map(|c| {
                    let mut r = Integer::from(c % &l);
                    if r < 0 {
                        r += &l;
                    }
                    r.to_u64().expect("reduced")
                })
                .collect(),
        )
    }

    pub fn zero(modulus: u64) -> Self {
        PolyModL { modulus, coeffs: Vec::new() }
    }

    pub fn constant(modulus: u64, c: u64) -> Self {
        Self::new(modulus, vec![c])
    }

    pub fn one(modulus: u64) -> Self {
        Self::constant(modulus, 1)
    }

    pub fn x(modulus: u64) -> Self {
        Self::new(modulus, vec![0, 1])
    }

    /// `x^k + 1`.
    pub fn x_pow_plus_one(modulus: u64, k: usize) -> Self {
        let mut c = vec![0; k + 1];
        c[0] = 1;
        c[k] = (c[k] + 1) % modulus;
        Self::new(modulus, c)
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&0) {
            self.coeffs.pop();
        }
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> u64 {
        self.coeffs.get(i).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs == [1]
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> u64 {
        self.coeffs.last().copied().unwrap_or(0)
    }

    fn check(&self, o: &Self) -> Result<(), PolyError> {
        if self.modulus != o.modulus {
            return Err(PolyError::ModulusMismatch { left: self.modulus, right: o.modulus });
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self, PolyError> {
        self.check(o)?;
        let l = self.modulus;
        let n = self.coeffs.len().max(o.coeffs.len());
        Ok(Self::new(l, (0..n).map(|i| (self.coeff(i) + o.coeff(i)) % l).collect()))
    }

    pub fn sub(&self, o: &Self) -> Result<Self, PolyError> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        let l = self.modulus;
        Self::new(l, self.coeffs.iter().map(|&c| (l - c) % l).collect())
    }

    pub fn scale(&self, c: u64) -> Self {
        let l = self.modulus;
        let c = c % l;
        Self::new(l, self.coeffs.iter().map(|&a| mulmod(a, c, l)).collect())
    }

    pub fn mul(&self, o: &Self) -> Result<Self, PolyError> {
        self.check(o)?;
        if self.is_zero() || o.is_zero() {
            return Ok(Self::zero(self.modulus));
        }
        let l = self.modulus as u128;
        let mut acc = vec![0u128; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in o.coeffs.iter().enumerate() {
                acc[i + j] = (acc[i + j] + a as u128 * b as u128) % l;
            }
        }
        Ok(Self::new(self.modulus, acc.into_iter().map(|c| c as u64).collect()))
    }

    /// `(q, r)` with `self = q·d + r` and `deg r < deg d`.
    pub fn div_rem(&self, d: &Self) -> Result<(Self, Self), PolyError> {
        self.check(d)?;
        let dd = d.degree().ok_or(PolyError::DivisionByZero)?;
        let l = self.modulus;
        let inv = inv_mod(d.leading(), l);
        let mut r = self.coeffs.clone();
        if r.len() <= dd {
            return Ok((Self::zero(l), self.clone()));
        }
        let mut q = vec![0u64; r.len() - dd];
        for k in (0..q.len()).rev() {
            let c = mulmod(r[k + dd], inv, l);
            q[k] = c;
            if c == 0 {
                continue;
            }
            for (j, &b) in d.coeffs.iter().enumerate() {
                r[k + j] = (r[k + j] + l - mulmod(c, b, l)) % l;
            }
        }
        r.truncate(dd);
        Ok((Self::new(l, q), Self::new(l, r)))
    }

    pub fn rem(&self, d: &Self) -> Result<Self, PolyError> {
        Ok(self.div_rem(d)?.1)
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(inv_mod(self.leading(), self.modulus))
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, o: &Self) -> Result<Self, PolyError> {
        self.check(o)?;
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let r = a.rem(&b)?;
            a = b;
            b = r;
        }
        Ok(a.monic())
    }

    /// `(g, u, v)` with `u·self + v·o = g` and `g` monic.
    pub fn ext_gcd(&self, o: &Self) -> Result<(Self, Self, Self), PolyError> {
        self.check(o)?;
        let l = self.modulus;
        let (mut r0, mut r1) = (self.clone(), o.clone());
        let (mut s0, mut s1) = (Self::one(l), Self::zero(l));
        let (mut t0, mut t1) = (Self::zero(l), Self::one(l));
        while !r1.is_zero() {
            let (q, r) = r0.div_rem(&r1)?;
            let s = s0.sub(&q.mul(&s1)?)?;
            let t = t0.sub(&q.mul(&t1)?)?;
            r0 = std::mem::replace(&mut r1, r);
            s0 = std::mem::replace(&mut s1, s);
            t0 = std::mem::replace(&mut t1, t);
        }
        if r0.is_zero() {
            return Ok((r0, s0, t0));
        }
        let inv = inv_mod(r0.leading(), l);
        Ok((r0.scale(inv), s0.scale(inv), t0.scale(inv)))
    }

    /// Inverse of `self` modulo `m`.
    pub fn inverse_mod(&self, m: &Self) -> Result<Self, PolyError> {
        let (g, u, _) = self.ext_gcd(m)?;
        if !g.is_one() {
            return Err(PolyError::NotCoprime);
        }
        u.rem(m)
    }

    pub fn mul_mod(&self, o: &Self, m: &Self) -> Result<Self, PolyError> {
        self.mul(o)?.rem(m)
    }

    /// `self^e mod m`.
    pub fn powmod(&self, e: &Integer, m: &Self) -> Result<Self, PolyError> {
        let mut r = Self::one(self.modulus).rem(m)?;
        let base = self.rem(m)?;
        for i in (0..e.significant_bits()).rev() {
            r = r.mul_mod(&r, m)?;
            if e.get_bit(i) {
                r = r.mul_mod(&base, m)?;
            }
        }
        Ok(r)
    }

    /// Canonical order: degree, then coefficients from the constant term up.
    pub fn canonical_cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.coeffs.len().cmp(&o.coeffs.len()).then_with(|| self.coeffs.cmp(&o.coeffs))
    }

    /// Coefficients in `[−(ℓ−1)/2, (ℓ−1)/2]`.
    pub fn centered(&self) -> Vec<i64> {
        let l = self.modulus;
        self.coeffs
            .iter()
            .map(|&c| if c > l / 2 { c as i64 - l as i64 } else { c as i64 })
            .collect()
    }

    /// Rabin's test.
    pub fn is_irreducible(&self) -> Result<bool, PolyError> {
        let Some(d) = self.degree() else { return Ok(false) };
        if d == 0 {
            return Ok(false);
        }
        let f = self.monic();
        let l = Integer::from(self.modulus);
        let x = Self::x(self.modulus);
        let frob = |k: usize| -> Result<Self, PolyError> { x.powmod(&l.clone().pow(k as u32), &f) };
        if frob(d)? != x.rem(&f)? {
            return Ok(false);
        }
        let mut m = d;
        let mut q = 2;
        while m > 1 {
            if m % q == 0 {
                while m % q == 0 {
                    m /= q;
                }
                if !frob(d / q)?.sub(&x)?.gcd(&f)?.is_one() {
                    return Ok(false);
                }
            }
            q += 1;
        }
        Ok(true)
    }
}

impl fmt::Display for PolyModL {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &c) in self.centered().iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            let a = c.unsigned_abs();
            let coef = if a == 1 && i > 0 { String::new() } else { a.to_string() };
            let var = match i {
                0 => String::new(),
                1 => "x".into(),
                _ => format!("x^{i}"),
            };
            if first {
                write!(f, "{sign}{coef}{var}")?;
            } else {
                write!(f, " {sign} {coef}{var}")?;
            }
            first = false;
        }
        Ok(())
    }
}

impl Serialize for PolyModL {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.centered())
    }
}

fn equal_degree_split(
    g: &PolyModL,
    d: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<PolyModL>,
) -> Result<(), PolyError> {
    let deg = g.degree().expect("nonzero");
    if deg == d {
        out.push(g.monic());
        return Ok(());
    }
    let l = g.modulus();
    let e = (Integer::from(l).pow(d as u32) - 1u32) / 2u32;
    loop {
        let a = PolyModL::new(l, (0..deg).map(|_| rng.gen_range(0..l)).collect());
        if a.degree().map_or(true, |k| k == 0) {
            continue;
        }
        let b = a.powmod(&e, g)?.sub(&PolyModL::one(l))?;
        let h = b.gcd(g)?;
        let hd = h.degree().unwrap_or(0);
        if hd > 0 && hd < deg {
            let (q, _) = g.div_rem(&h)?;
            equal_degree_split(&h, d, rng, out)?;
            equal_degree_split(&q.monic(), d, rng, out)?;
            return Ok(());
        }
    }
}

/// Distinct-degree then Cantor–Zassenhaus factorization of a squarefree monic `f`.
pub fn factor_squarefree(f: &PolyModL, seed: u64) -> Result<Vec<PolyModL>, PolyError> {
    let l = f.modulus();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ l.rotate_left(17));
    let x = PolyModL::x(l);
    let mut rest = f.monic();
    let mut h = x.rem(&rest)?;
    let mut out = Vec::new();
    let mut d = 0usize;
    let li = Integer::from(l);
    while rest.degree().unwrap_or(0) > 0 {
        d += 1;
        if 2 * d > rest.degree().unwrap_or(0) {
            out.push(rest.monic());
            break;
        }
        h = h.powmod(&li, &rest)?;
        let g = h.sub(&x)?.gcd(&rest)?;
        if !g.is_one() {
            equal_degree_split(&g, d, &mut rng, &mut out)?;
            rest = rest.div_rem(&g)?.0;
            h = h.rem(&rest)?;
        }
    }
    out.sort_by(|a, b| a.canonical_cmp(b));
    Ok(out)
}

/// The factors `x² − r` for roots `r` of `y^{h/2} + 1` when `ℓ ≡ h + 1 mod 2h`,
/// or the linear factors `x − r` when `ℓ ≡ 1 mod 2h`.
pub fn factor_by_roots(l: u64, h: usize) -> Option<Vec<PolyModL>> {
    let two_h = 2 * h as u64;
    let (order, quadratic) = if (l - 1) % two_h == 0 {
        (two_h, false)
    } else if h >= 2 && (l - 1) % two_h == h as u64 {
        (h as u64, true)
    } else {
        return None;
    };
    // a primitive `order`-th root of unity ζ has ζ^{order/2} = −1
    let zeta = (2..l).find_map(|g| {
        let z = powmod_u64(g, (l - 1) / order, l);
        (powmod_u64(z, order / 2, l) == l - 1).then_some(z)
    })?;
    let mut out: Vec<PolyModL> = (1..order)
        .step_by(2)
        .map(|k| {
            let r = powmod_u64(zeta, k, l);
            if quadratic {
                PolyModL::new(l, vec![(l - r) % l, 0, 1])
            } else {
                PolyModL::new(l, vec![(l - r) % l, 1])
            }
        })
        .collect();
    out.sort_by(|a, b| a.canonical_cmp(b));
    Some(out)
}

/// Distinct monic irreducible factors of `x^{2^{n-1}} + 1` mod `ℓ`, canonically sorted.
pub fn factor_cyclotomic(n: u32, l: u64, seed: u64) -> Result<Vec<PolyModL>, PolyError> {
    if l % 2 == 0 || !is_prime(l) {
        return Err(PolyError::NotOddPrime(l));
    }
    let h = 1usize << (n - 1);
    let target = PolyModL::x_pow_plus_one(l, h);
    let factors = match factor_by_roots(l, h) {
        Some(f) => f,
        None => factor_squarefree(&target, seed)?,
    };
    let product = factors.iter().try_fold(PolyModL::one(l), |acc, f| acc.mul(f))?;
    assert_eq!(product, target, "factor product differs from x^{h} + 1 mod {l}");
    Ok(factors)
}
