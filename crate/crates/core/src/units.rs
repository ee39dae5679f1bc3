//! `ε_n`, the sequence `c_n`, the candidate minimal units `u_n`, and an
//! exhaustive minimum search for small `n`.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use rug::Integer;
use serde::Serialize;
use thiserror::Error;

use crate::embeddings::{FastTrace, Precision};
use crate::ring::{Level, RingElement, RingError, MAX_LEVEL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitsError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("no candidate unit is known for n = {0}")]
    UnsupportedLevel(u32),
    #[error("exhaustive search at n = {0} is too large (n <= 3 supported)")]
    SearchSpaceTooLarge(u32),
    #[error("verification failed: {0}")]
    Verification(String),
}

/// `c_1 = 2`, otherwise `2·round(2^n / 5)`.
pub fn c_seq(n: u32) -> Integer {
    assert!(n >= 1, "c_n is defined for n >= 1");
    if n == 1 {
        return Integer::from(2);
    }
    let p = Integer::from(1) << n;
    (p + 2u32) / 5u32 * 2u32
}

/// `2^n (1 + 8 c_n)`, the conjectured minimum of `Tr u²`.
pub fn conjectured_bound(n: u32) -> Integer {
    (Integer::from(1) << n) * (c_seq(n) * 8u32 + 1u32)
}

/// `(s, t) = (⌈2^{n+1}/5⌉, ⌊2^{n+2}/5⌋)`.
pub fn interval_bounds(n: u32) -> (usize, usize) {
    let s = ((1usize << (n + 1)) + 4) / 5;
    let t = (1usize << (n + 2)) / 5;
    (s, t)
}

fn epsilon_cache() -> &'static Vec<OnceLock<Result<Arc<RingElement>, UnitsError>>> {
    static CACHE: OnceLock<Vec<OnceLock<Result<Arc<RingElement>, UnitsError>>>> = OnceLock::new();
    CACHE.get_or_init(|| (0..=MAX_LEVEL).map(|_| OnceLock::new()).collect())
}

fn compute_epsilon(level: Level) -> Result<RingElement, UnitsError> {
    let b0 = RingElement::one(level);
    let b1 = RingElement::basis(level, 1);
    let e = b1.add(&b0)?.mul(&b1.sub(&b0)?.invert_unit()?)?;
    if e.relative_norm()? != RingElement::one(level.below()) {
        return Err(UnitsError::Verification(format!("relative norm of ε_{} is not 1", level.n())));
    }
    if e.absolute_norm()?.abs() != 1 {
        return Err(UnitsError::Verification(format!("ε_{} is not a unit", level.n())));
    }
    Ok(e)
}

/// `ε_n = (b_1 + 1)/(b_1 − 1)`, exact and cached.
pub fn epsilon(n: u32) -> Result<Arc<RingElement>, UnitsError> {
    let level = Level::new(n)?;
    epsilon_cache()[n as usize]
        .get_or_init(|| compute_epsilon(level).map(Arc::new))
        .clone()
}

/// `σ^j(ε_n)` for `0 <= j < 2^n`.
pub fn epsilon_conjugates(n: u32) -> Result<Vec<RingElement>, UnitsError> {
    let e = epsilon(n)?;
    Ok((0..e.level().degree() as i64).map(|j| e.galois(j)).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateUnit {
    pub level: Level,
    pub element: RingElement,
    #[serde(serialize_with = "crate::report::ser_integer")]
    pub claimed_trace_sq: Integer,
}

fn explicit_candidate(n: u32) -> Option<RingElement> {
    let level = Level::new(n).ok()?;
    let terms: Vec<(usize, i64)> = match n {
        1 => vec![(0, 3), (1, 2)],
        3 => vec![(0, 1), (1, 2), (2, 2), (5, 2), (6, 2)],
        5 => {
            let mut t = vec![(0, 1)];
            t.extend([11, 12, 17, 18, 19, 20, 25, 26].map(|i| (i, 2)));
            t.extend([14, 15, 22, 23].map(|i| (i, -2)));
            t
        }
        _ if n % 2 == 0 => {
            let (s, t) = interval_bounds(n);
            let sign = if n % 4 == 0 { 2 } else { -2 };
            std::iter::once((0, 1)).chain((s..=t).map(|i| (i, sign))).collect()
        }
        _ => return None,
    };
    Some(RingElement::from_terms(level, &terms))
}

/// Builds `u_n` and checks it exactly: relative norm 1 and `Tr u_n² = 2^n(1 + 8c_n)`.
pub fn candidate_unit(n: u32) -> Result<CandidateUnit, UnitsError> {
    let level = Level::new(n)?;
    let element = explicit_candidate(n).ok_or(UnitsError::UnsupportedLevel(n))?;
    if n % 2 == 0 {
        check_interval_facts(n)?;
    }
    if element.relative_norm()? != RingElement::one(level.below()) {
        return Err(UnitsError::Verification(format!("u_{n} has relative norm != 1")));
    }
    let claimed = conjectured_bound(n);
    let tr = element.trace_of_square();
    if tr != claimed {
        return Err(UnitsError::Verification(format!("Tr u_{n}^2 = {tr}, expected {claimed}")));
    }
    Ok(CandidateUnit { level, element, claimed_trace_sq: claimed })
}

/// Summand count and parity facts for even `n`.
pub fn check_interval_facts(n: u32) -> Result<(), UnitsError> {
    let (s, t) = interval_bounds(n);
    if Integer::from(t - s + 1) != c_seq(n) {
        return Err(UnitsError::Verification(format!("t - s + 1 != c_{n}")));
    }
    if s % 2 == t % 2 {
        return Err(UnitsError::Verification(format!("s, t have equal parity at n = {n}")));
    }
    if (s % 2 == 0) != (n % 4 == 2) {
        return Err(UnitsError::Verification(format!("parity of s mismatched at n = {n}")));
    }
    Ok(())
}

/// Witnesses of a minimum grouped into `{±1} × ⟨σ⟩ × inversion` orbits.
#[derive(Clone, Debug, Serialize)]
pub struct BruteForceResult {
    #[serde(serialize_with = "crate::report::ser_opt_integer")]
    pub min: Option<Integer>,
    pub witnesses: Vec<RingElement>,
    pub orbits: Vec<Orbit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Orbit {
    pub representative: RingElement,
    pub size: usize,
}

/// All images of `u` under sign, Galois and inversion, sorted and deduplicated.
pub fn orbit_of(u: &RingElement) -> Result<Vec<RingElement>, UnitsError> {
    let m = u.level().degree() as i64;
    let inv = u.invert_unit()?;
    let mut out = Vec::new();
    for base in [u, &inv] {
        for j in 0..m {
            let g = base.galois(j);
            out.push(g.neg());
            out.push(g);
        }
    }
    out.sort_by(|a, b| a.cmp_coeffs(b));
    out.dedup();
    Ok(out)
}

/// Groups units into orbits; the representative is the least member by coefficient order.
pub fn canonical_orbits(units: &[RingElement]) -> Result<Vec<Orbit>, UnitsError> {
    let mut orbits: Vec<(RingElement, Vec<RingElement>)> = Vec::new();
    for u in units {
        if orbits.iter().any(|(_, members)| members.contains(u)) {
            continue;
        }
        let members = orbit_of(u)?;
        orbits.push((members[0].clone(), members));
    }
    orbits.sort_by(|a, b| a.0.cmp_coeffs(&b.0));
    Ok(orbits
        .into_iter()
        .map(|(representative, members)| {
            let size = members.iter().filter(|m| units.contains(m)).count();
            Orbit { representative, size }
        })
        .collect())
}

fn even_vectors(len: usize, budget: i64, out: &mut Vec<Vec<i64>>, cur: &mut Vec<i64>) {
    if cur.len() == len {
        out.push(cur.clone());
        return;
    }
    let used: i64 = cur.iter().map(|a| a * a).sum();
    let left = budget - used;
    let mut a = 0i64;
    while a * a <= left {
        a += 2;
    }
    let max = a - 2;
    let mut v = -max;
    while v <= max {
        cur.push(v);
        even_vectors(len, budget, out, cur);
        cur.pop();
        v += 2;
    }
}

/// Exhaustive minimum of `Tr u²` over relative units `u ≠ ±1` with `Tr u² <= trace_bound`.
pub fn brute_force_min(n: u32, trace_bound: &Integer) -> Result<BruteForceResult, UnitsError> {
    if n > 3 {
        return Err(UnitsError::SearchSpaceTooLarge(n));
    }
    let level = Level::new(n)?;
    let m = level.degree();
    let scaled = Integer::from(trace_bound >> n).to_i64().unwrap_or(i64::MAX).max(-1);
    let one = RingElement::one(level.below());
    let mut a0s = Vec::new();
    let mut a = 1i64;
    while a * a <= scaled {
        a0s.push(a);
        a0s.push(-a);
        a += 2;
    }
    let found: Vec<RingElement> = a0s
        .par_iter()
        .map(|&a0| -> Result<Vec<RingElement>, UnitsError> {
            // a_0² + 2Σ a_i² <= bound / 2^n
            let rest = (scaled - a0 * a0) / 2;
            let mut tails = Vec::new();
            even_vectors(m - 1, rest, &mut tails, &mut Vec::with_capacity(m - 1));
            let mut hits = Vec::new();
            for tail in tails {
                if a0.abs() == 1 && tail.iter().all(|&x| x == 0) {
                    continue;
                }
                let mut coeffs = Vec::with_capacity(m);
                coeffs.push(a0);
                coeffs.extend(tail);
                let x = RingElement::from_i64s(level, &coeffs)?;
                if x.relative_norm()? == one {
                    hits.push(x);
                }
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    for x in &found {
        let c = x.coeffs();
        if c[0].is_even() || c[1..].iter().any(|a| a.is_odd()) {
            return Err(UnitsError::Verification(format!("parity violated by {x}")));
        }
    }
    let min = found.iter().map(|x| x.trace_of_square()).min();
    let mut witnesses: Vec<RingElement> = match &min {
        Some(mn) => found.into_iter().filter(|x| x.trace_of_square() == *mn).collect(),
        None => Vec::new(),
    };
    witnesses.sort_by(|a, b| a.cmp_coeffs(b));
    let orbits = canonical_orbits(&witnesses)?;
    Ok(BruteForceResult { min, witnesses, orbits })
}

/// The best `ε`-monomial among `σ^0(ε)·σ^k(ε)^{±1}` and `ε` itself, by `f64` trace.
/// This is a heuristic search with no claim of minimality.
#[derive(Clone, Debug, Serialize)]
pub struct HeuristicCandidate {
    pub level: Level,
    pub exponents: Vec<i64>,
    pub trace_estimate: f64,
    pub trace_err: f64,
    #[serde(serialize_with = "crate::report::ser_integer")]
    pub conjectured_bound: Integer,
    pub heuristic: bool,
}

pub fn heuristic_monomial(n: u32) -> Result<HeuristicCandidate, UnitsError> {
    let level = Level::new(n)?;
    let h = level.half_degree();
    let ft = FastTrace::new(level, &Precision::default_for(level));
    let mut best: Option<(Vec<i64>, f64, f64)> = None;
    let mut consider = |v: Vec<i64>| {
        let t = ft.eval_int(&v);
        if best.as_ref().map_or(true, |b| t.value < b.1) {
            best = Some((v, t.value, t.abs_err));
        }
    };
    let mut single = vec![0; h];
    single[0] = 1;
    consider(single);
    for k in 1..h {
        for s in [1, -1] {
            let mut v = vec![0; h];
            v[0] = 1;
            v[k] = s;
            consider(v);
        }
    }
    let (exponents, trace_estimate, trace_err) = best.expect("at least one monomial");
    Ok(HeuristicCandidate {
        level,
        exponents,
        trace_estimate,
        trace_err,
        conjectured_bound: conjectured_bound(n),
        heuristic: true,
    })
}
