//! `ℓ`-indivisibility certificates: for every irreducible `f | x^{2^{n-1}} + 1`
//! mod `ℓ`, an integer lift `g` of a nonzero element of `M_f` whose extended
//! trace is certified below `2^n(1 + 8c_n)`.

pub mod poly;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::{Integer, Rational};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::approx::ApproxReal;
use crate::embeddings::{trace_power, EmbeddingError, FastTrace, FastValue, Precision};
use crate::ring::{Level, RingError};
use crate::units::conjectured_bound;
pub use poly::{factor_cyclotomic, is_prime, PolyError, PolyModL};

#[derive(Debug, Error)]
pub enum IndivError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("lift file line {line}: {message}")]
    LiftFile { line: usize, message: String },
    #[error("lift for factor {0} does not exist")]
    NoSuchFactor(usize),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

/// An integer polynomial `Σ a_i x^i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntPoly {
    pub coeffs: Vec<Integer>,
}

impl IntPoly {
    pub fn from_i64s(c: &[i64]) -> Self {
        IntPoly { coeffs: c.iter().map(|&a| Integer::from(a)).collect() }
    }

    pub fn to_i64s(&self) -> Option<Vec<i64>> {
        self.coeffs.iter().map(|c| c.to_i64()).collect()
    }

    pub fn reduce(&self, l: u64) -> PolyModL {
        PolyModL::from_integers(l, &self.coeffs)
    }
}

impl fmt::Display for IntPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl FromStr for IntPoly {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| format!("expected [a_0, ..., a_m], got {s:?}"))?;
        let coeffs = inner
            .split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| Integer::from_str(t).map_err(|e| format!("{t:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if coeffs.is_empty() {
            return Err("empty coefficient list".into());
        }
        Ok(IntPoly { coeffs })
    }
}

impl Serialize for IntPoly {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.coeffs.iter().map(|c| c.to_string()))
    }
}

/// Coefficient-wise representative in `[−(ℓ−1)/2, (ℓ−1)/2]`.
pub fn center_lift(p: &PolyModL) -> IntPoly {
    IntPoly::from_i64s(&p.centered())
}

/// `f`, its cofactor `(x^{2^{n-1}} + 1)/f` and `g_f = cofactor⁻¹ mod f`.
#[derive(Clone, Debug, Serialize)]
pub struct FactorIdempotent {
    pub f: PolyModL,
    pub cofactor: PolyModL,
    pub g_f: PolyModL,
}

impl FactorIdempotent {
    /// `e_f = cofactor · g_f mod (x^{2^{n-1}} + 1)`.
    pub fn idempotent(&self, modulus: &PolyModL) -> Result<PolyModL, PolyError> {
        self.cofactor.mul_mod(&self.g_f, modulus)
    }

    /// `g mod (ℓ, x^{2^{n-1}} + 1)` lies in `M_f − {0}`.
    pub fn contains(&self, g: &IntPoly, modulus: &PolyModL) -> Result<bool, PolyError> {
        let r = g.reduce(self.f.modulus()).rem(modulus)?;
        Ok(r.rem(&self.cofactor)?.is_zero() && !r.rem(&self.f)?.is_zero())
    }
}

fn cyclotomic_modulus(n: u32, l: u64) -> PolyModL {
    PolyModL::x_pow_plus_one(l, 1 << (n - 1))
}

pub fn idempotent_data(n: u32, l: u64, f: &PolyModL) -> Result<FactorIdempotent, IndivError> {
    let modulus = cyclotomic_modulus(n, l);
    let (cofactor, r) = modulus.div_rem(f)?;
    if !r.is_zero() {
        return Err(PolyError::NotCoprime.into());
    }
    let g_f = cofactor.inverse_mod(f)?;
    Ok(FactorIdempotent { f: f.clone(), cofactor, g_f })
}

/// Partition of unity `Σ e_f = 1`, `e_f ≡ 1 mod f`, and `e_f ≡ 0 mod f'` for `f' ≠ f`.
pub fn check_idempotents(n: u32, l: u64, data: &[FactorIdempotent]) -> Result<bool, PolyError> {
    let modulus = cyclotomic_modulus(n, l);
    let es = data.iter().map(|d| d.idempotent(&modulus)).collect::<Result<Vec<_>, _>>()?;
    let sum = es.iter().try_fold(PolyModL::zero(l), |a, e| a.add(e))?;
    if !sum.is_one() {
        return Ok(false);
    }
    for (i, e) in es.iter().enumerate() {
        for (j, d) in data.iter().enumerate() {
            let r = e.rem(&d.f)?;
            if (i == j && !r.is_one()) || (i != j && !r.is_zero()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Exponents `e_j = Σ_{i ≡ j mod h} (−1)^{⌊i/h⌋} a_i / ℓ` over `0 <= j < h = 2^{n-1}`.
pub fn folded_numerators(n: u32, g: &IntPoly) -> Vec<Integer> {
    let h = 1usize << (n - 1);
    let mut out = vec![Integer::new(); h];
    for (i, a) in g.coeffs.iter().enumerate() {
        if (i / h) % 2 == 0 {
            out[i % h] += a;
        } else {
            out[i % h] -= a;
        }
    }
    out
}

/// `Tr~((g·ε_n)²) = Σ_{i<2^n} ∏_j |σ^{i+j}(ε_n)|^{2a_j/ℓ}` in MPFR.
pub fn extended_trace(n: u32, l: u64, g: &IntPoly, p: &Precision) -> Result<ApproxReal, IndivError> {
    let level = Level::new(n)?;
    let e: Vec<Rational> = folded_numerators(n, g)
        .into_iter()
        .map(|a| Rational::from((a, Integer::from(l))))
        .collect();
    Ok(trace_power(level, &e, p)?)
}

/// [`extended_trace`] in `f64` with a certified radius.
pub fn extended_trace_fast(ft: &FastTrace, l: u64, g: &IntPoly) -> Option<FastValue> {
    let n = ft.level().n();
    let nums = folded_numerators(n, g)
        .into_iter()
        .map(|a| a.to_i64().filter(|v| v.unsigned_abs() < 1 << 53))
        .collect::<Option<Vec<i64>>>()?;
    Some(ft.eval_over(&nums, l as i64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Center lifts of `c·cofactor`.
    Scalar,
    /// Center lifts of `(c_1 x + c_0)·cofactor`.
    Linear,
    /// Randomized `±ℓ` moves on single coefficients (heuristic).
    Perturb,
    /// A lift given explicitly.
    #[value(skip)]
    LiftFile,
}

#[derive(Clone, Debug)]
pub struct StrategyConfig {
    /// Highest strategy tried; lower ones run first.
    pub max_strategy: Strategy,
    pub c_max: u64,
    pub linear_max: u64,
    pub perturb_iters: u64,
    pub seed: u64,
    /// Explicit lifts by 1-based factor index.
    pub lifts: BTreeMap<usize, IntPoly>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            max_strategy: Strategy::Perturb,
            c_max: 4096,
            linear_max: 16,
            perturb_iters: 100_000,
            seed: 1,
            lifts: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorOutcome {
    /// 1-based, in canonical factor order.
    pub index: usize,
    pub factor: PolyModL,
    pub lift: Option<IntPoly>,
    pub strategy: Option<Strategy>,
    /// `[c_0]` or `[c_0, c_1]` for the multiplier of the cofactor; for
    /// perturbed lifts, the multiplier of the starting center lift.
    pub multiplier: Option<Vec<i64>>,
    pub value: Option<ApproxReal>,
    /// Smallest `f64` value seen when no lift succeeded.
    pub best_value: Option<f64>,
    pub succeeded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct IndivReport {
    pub n: u32,
    pub l: u64,
    #[serde(serialize_with = "crate::report::ser_integer")]
    pub threshold: Integer,
    pub factors: Vec<FactorIdempotent>,
    pub factorization_verified: bool,
    pub idempotents_verified: bool,
    pub per_factor: Vec<FactorOutcome>,
    pub all_succeeded: bool,
    pub conclusion: String,
}

enum Verdict {
    Below(ApproxReal),
    NotBelow(f64),
}

/// Certified strict comparison `Tr~ < threshold`, escalating MPFR precision when undecided.
fn certify(n: u32, l: u64, g: &IntPoly, ft: &FastTrace, threshold: f64, p: &Precision) -> Result<Verdict, IndivError> {
    if let Some(fast) = extended_trace_fast(ft, l, g) {
        if fast.lower() >= threshold {
            return Ok(Verdict::NotBelow(fast.value));
        }
    }
    let mut prec = Precision { target_abs_err: f64::INFINITY, ..*p };
    for _ in 0..4 {
        let v = extended_trace(n, l, g, &prec)?;
        if v.certainly_lt(threshold) {
            return Ok(Verdict::Below(v));
        }
        if v.lower() >= threshold {
            return Ok(Verdict::NotBelow(v.to_f64()));
        }
        prec = prec.doubled();
    }
    Ok(Verdict::NotBelow(extended_trace(n, l, g, &prec)?.to_f64()))
}

fn quick(ft: &FastTrace, l: u64, g: &IntPoly) -> f64 {
    extended_trace_fast(ft, l, g).map_or(f64::INFINITY, |v| v.value)
}

/// Number of scalar and linear lifts used as descent starts.
const PERTURB_STARTS: usize = 32;

struct Search<'a> {
    n: u32,
    l: u64,
    modulus: &'a PolyModL,
    ft: &'a FastTrace,
    threshold: f64,
    p: &'a Precision,
}

impl Search<'_> {
    fn outcome(&self, index: usize, d: &FactorIdempotent, cfg: &StrategyConfig) -> Result<FactorOutcome, IndivError> {
        let mut out = FactorOutcome {
            index,
            factor: d.f.clone(),
            lift: None,
            strategy: None,
            multiplier: None,
            value: None,
            best_value: None,
            succeeded: false,
        };
        if let Some(g) = cfg.lifts.get(&index) {
            out.lift = Some(g.clone());
            out.strategy = Some(Strategy::LiftFile);
            if !d.contains(g, self.modulus)? {
                out.best_value = Some(quick(self.ft, self.l, g));
                return Ok(out);
            }
            match certify(self.n, self.l, g, self.ft, self.threshold, self.p)? {
                Verdict::Below(v) => {
                    out.value = Some(v);
                    out.succeeded = true;
                }
                Verdict::NotBelow(v) => {
                    out.value = Some(extended_trace(self.n, self.l, g, self.p)?);
                    out.best_value = Some(v);
                }
            }
            return Ok(out);
        }
        let mut pool: Vec<(f64, IntPoly, Vec<i64>)> = Vec::new();
        let half = (self.l - 1) / 2;
        for c in 1..=cfg.c_max.min(half).max(1) {
            let g = center_lift(&d.cofactor.scale(c));
            let v = quick(self.ft, self.l, &g);
            if v < self.threshold * (1.0 + 1e-9) && self.accept(&mut out, d, g.clone(), Strategy::Scalar, vec![c as i64])? {
                return Ok(out);
            }
            pool.push((v, g, vec![c as i64]));
        }
        if cfg.max_strategy >= Strategy::Linear {
            let x_cof = d.cofactor.mul_mod(&PolyModL::x(self.l), self.modulus)?;
            let lim = cfg.linear_max.min(half) as i64;
            for c1 in 1..=lim {
                for c0 in -lim..=lim {
                    let m = x_cof.scale(c1 as u64).add(&d.cofactor.scale(c0.rem_euclid(self.l as i64) as u64))?;
                    let g = center_lift(&m);
                    let v = quick(self.ft, self.l, &g);
                    if v < self.threshold * (1.0 + 1e-9) && self.accept(&mut out, d, g.clone(), Strategy::Linear, vec![c0, c1])? {
                        return Ok(out);
                    }
                    pool.push((v, g, vec![c0, c1]));
                }
            }
        }
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        if cfg.max_strategy >= Strategy::Perturb && !pool.is_empty() {
            pool.truncate(PERTURB_STARTS);
            if self.perturb(&mut out, d, &mut pool, cfg)? {
                return Ok(out);
            }
        }
        out.best_value = pool.first().map(|b| b.0);
        Ok(out)
    }

    /// Steepest descent over single `±ℓ` coefficient moves from the best starts,
    /// then seeded random two-move kicks from the resulting local minima.
    fn perturb(
        &self,
        out: &mut FactorOutcome,
        d: &FactorIdempotent,
        pool: &mut [(f64, IntPoly, Vec<i64>)],
        cfg: &StrategyConfig,
    ) -> Result<bool, IndivError> {
        let h = self.modulus.degree().expect("nonzero");
        let l = Integer::from(self.l);
        let mut budget = cfg.perturb_iters;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (out.index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ self.l);
        let moved = |g: &IntPoly, i: usize, up: bool| {
            let mut g = g.clone();
            g.coeffs.resize(h, Integer::new());
            if up {
                g.coeffs[i] += &l;
            } else {
                g.coeffs[i] -= &l;
            }
            g
        };
        let mut k = 0usize;
        while budget > 0 {
            let slot = k % pool.len();
            let (mut cur_v, mut cur) = (pool[slot].0, pool[slot].1.clone());
            if k >= pool.len() {
                // kick: two random moves, kept regardless of value
                for _ in 0..2 {
                    cur = moved(&cur, rng.gen_range(0..h), rng.gen_bool(0.5));
                }
                cur_v = quick(self.ft, self.l, &cur);
                budget = budget.saturating_sub(1);
            }
            loop {
                let mut step: Option<(f64, IntPoly)> = None;
                for i in 0..h {
                    for up in [true, false] {
                        if budget == 0 {
                            break;
                        }
                        budget -= 1;
                        let g = moved(&cur, i, up);
                        let v = quick(self.ft, self.l, &g);
                        if v < step.as_ref().map_or(cur_v, |s| s.0) {
                            step = Some((v, g));
                        }
                    }
                }
                let Some((v, g)) = step else { break };
                cur_v = v;
                cur = g;
                if v < self.threshold * (1.0 + 1e-9) {
                    let mult = pool[slot].2.clone();
                    if self.accept(out, d, cur.clone(), Strategy::Perturb, mult)? {
                        return Ok(true);
                    }
                }
            }
            if cur_v < pool[slot].0 {
                pool[slot].0 = cur_v;
                pool[slot].1 = cur;
            }
            k += 1;
        }
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(false)
    }

    fn accept(
        &self,
        out: &mut FactorOutcome,
        d: &FactorIdempotent,
        g: IntPoly,
        strategy: Strategy,
        multiplier: Vec<i64>,
    ) -> Result<bool, IndivError> {
        if !d.contains(&g, self.modulus)? {
            return Ok(false);
        }
        if let Verdict::Below(v) = certify(self.n, self.l, &g, self.ft, self.threshold, self.p)? {
            out.lift = Some(g);
            out.strategy = Some(strategy);
            out.multiplier = Some(multiplier);
            out.value = Some(v);
            out.succeeded = true;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Factors, idempotents and the per-factor lift search for one `(n, ℓ)`.
pub fn check_indivisibility(n: u32, l: u64, cfg: &StrategyConfig, p: &Precision) -> Result<IndivReport, IndivError> {
    let level = Level::new(n)?;
    let fs = factor_cyclotomic(n, l, cfg.seed)?;
    if let Some(&k) = cfg.lifts.keys().find(|&&k| k == 0 || k > fs.len()) {
        return Err(IndivError::NoSuchFactor(k));
    }
    let factorization_verified = fs.iter().all(|f| f.is_irreducible().unwrap_or(false))
        && fs.windows(2).all(|w| w[0] != w[1]);
    let factors = fs.iter().map(|f| idempotent_data(n, l, f)).collect::<Result<Vec<_>, _>>()?;
    let idempotents_verified = check_idempotents(n, l, &factors)?;
    let modulus = cyclotomic_modulus(n, l);
    let ft = FastTrace::new(level, p);
    let threshold = conjectured_bound(n);
    let search = Search { n, l, modulus: &modulus, ft: &ft, threshold: threshold.to_f64(), p };
    let per_factor = factors
        .par_iter()
        .enumerate()
        .map(|(i, d)| search.outcome(i + 1, d, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let all_succeeded = per_factor.iter().all(|o| o.succeeded);
    let conclusion = if all_succeeded {
        format!("{l} does not divide k_{n}, conditional on the conjectured minimum 2^{n}(1+8c_{n}) = {threshold}")
    } else {
        let failed: Vec<String> = per_factor.iter().filter(|o| !o.succeeded).map(|o| o.index.to_string()).collect();
        format!("inconclusive: no certified lift for factors {}", failed.join(", "))
    };
    Ok(IndivReport {
        n,
        l,
        threshold,
        factors,
        factorization_verified,
        idempotents_verified,
        per_factor,
        all_succeeded,
        conclusion,
    })
}

/// Parses lines `f_index: [a_0, ..., a_m]`; blank lines and `#` comments are skipped.
pub fn parse_lift_file(text: &str) -> Result<BTreeMap<usize, IntPoly>, IndivError> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| IndivError::LiftFile { line: k + 1, message };
        let (idx, poly) = line.split_once(':').ok_or_else(|| err("missing ':'".into()))?;
        let idx = idx.trim();
        let idx = idx.strip_prefix('f').unwrap_or(idx).trim_start_matches('_');
        let index: usize = idx.parse().map_err(|_| err(format!("bad factor index {idx:?}")))?;
        let g: IntPoly = poly.parse().map_err(err)?;
        if out.insert(index, g).is_some() {
            return Err(err(format!("factor {index} listed twice")));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanEntry {
    pub l: u64,
    pub succeeded: bool,
    pub failed_factors: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub n: u32,
    pub residue: u64,
    pub modulus: u64,
    pub entries: Vec<ScanEntry>,
    pub all_succeeded: bool,
}

/// The first `count` primes `ℓ >= l_min` with `ℓ ≡ residue mod modulus`.
pub fn primes_in_progression(l_min: u64, count: usize, residue: u64, modulus: u64) -> Vec<u64> {
    let mut l = l_min + (residue + modulus - l_min % modulus) % modulus;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if l % 2 == 1 && is_prime(l) {
            out.push(l);
        }
        l += modulus;
    }
    out
}

fn format_entry(e: &ScanEntry) -> String {
    let failed: Vec<String> = e.failed_factors.iter().map(|i| i.to_string()).collect();
    format!("l {} {} {}", e.l, if e.succeeded { "ok" } else { "fail" }, failed.join(","))
}

fn parse_entry(line: &str) -> Option<ScanEntry> {
    let mut it = line.split_whitespace();
    if it.next()? != "l" {
        return None;
    }
    let l = it.next()?.parse().ok()?;
    let succeeded = match it.next()? {
        "ok" => true,
        "fail" => false,
        _ => return None,
    };
    let failed_factors = it
        .next()
        .map(|s| s.split(',').map(|x| x.parse().ok()).collect::<Option<Vec<usize>>>())
        .unwrap_or(Some(Vec::new()))?;
    Some(ScanEntry { l, succeeded, failed_factors })
}

fn load_scan_checkpoint(path: &Path) -> Result<BTreeMap<u64, ScanEntry>, IndivError> {
    let mut out = BTreeMap::new();
    let Ok(file) = std::fs::File::open(path) else {
        return Ok(out);
    };
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IndivError::Checkpoint { path: path.into(), message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let e = parse_entry(&line).ok_or_else(|| IndivError::Checkpoint {
            path: path.into(),
            message: format!("bad line {}", k + 1),
        })?;
        out.insert(e.l, e);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub n: u32,
    pub l_min: u64,
    pub count: usize,
    pub residue: u64,
    pub modulus: u64,
    pub checkpoint: Option<PathBuf>,
    pub progress: bool,
}

/// Runs [`check_indivisibility`] over a progression of primes.
pub fn scan(opts: &ScanOptions, cfg: &StrategyConfig, p: &Precision) -> Result<ScanReport, IndivError> {
    let primes = primes_in_progression(opts.l_min, opts.count, opts.residue, opts.modulus);
    let mut done = match &opts.checkpoint {
        Some(path) => load_scan_checkpoint(path)?,
        None => BTreeMap::new(),
    };
    let writer = match &opts.checkpoint {
        Some(path) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| IndivError::Checkpoint { path: path.clone(), message: e.to_string() })?,
        )),
        None => None,
    };
    let todo: Vec<u64> = primes.iter().copied().filter(|l| !done.contains_key(l)).collect();
    let k = Mutex::new(primes.len() - todo.len());
    let fresh = todo
        .par_iter()
        .map(|&l| -> Result<ScanEntry, IndivError> {
            let r = check_indivisibility(opts.n, l, cfg, p)?;
            let e = ScanEntry {
                l,
                succeeded: r.all_succeeded && r.factorization_verified && r.idempotents_verified,
                failed_factors: r.per_factor.iter().filter(|o| !o.succeeded).map(|o| o.index).collect(),
            };
            if let Some(w) = &writer {
                let mut f = w.lock().expect("checkpoint lock");
                let _ = writeln!(f, "{}", format_entry(&e));
                let _ = f.flush();
            }
            if opts.progress {
                let mut k = k.lock().expect("progress lock");
                *k += 1;
                eprintln!("scan: {}/{} l={} {}", *k, primes.len(), l, if e.succeeded { "ok" } else { "fail" });
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for e in fresh {
        done.insert(e.l, e);
    }
    let entries: Vec<ScanEntry> = primes.iter().filter_map(|l| done.remove(l)).collect();
    Ok(ScanReport {
        n: opts.n,
        residue: opts.residue,
        modulus: opts.modulus,
        all_succeeded: entries.iter().all(|e| e.succeeded),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::unit_from_exponents;
    use crate::units::epsilon_conjugates;
    use proptest::prelude::*;

    fn prec(n: u32) -> Precision {
        Precision::default_for(Level::new(n).unwrap())
    }

    #[test]
    fn center_lift_examples() {
        let p = PolyModL::new(7, vec![5, 3, 4, 6]);
        assert_eq!(center_lift(&p), IntPoly::from_i64s(&[-2, 3, -3, -1]));
        assert_eq!(center_lift(&p).reduce(7), p);
        let fs = factor_cyclotomic(4, 3, 1).unwrap();
        let d = idempotent_data(4, 3, &fs[0]).unwrap();
        assert_eq!(center_lift(&d.cofactor), IntPoly::from_i64s(&[-1, 0, -1, 0, 1]));
    }

    #[test]
    fn idempotent_algebra() {
        for (n, l) in [(4u32, 3u64), (4, 7), (5, 97), (6, 31), (5, 3)] {
            let modulus = cyclotomic_modulus(n, l);
            let data: Vec<FactorIdempotent> = factor_cyclotomic(n, l, 1)
                .unwrap()
                .iter()
                .map(|f| idempotent_data(n, l, f).unwrap())
                .collect();
            for d in &data {
                assert!(d.cofactor.mul_mod(&d.g_f, &d.f).unwrap().is_one());
            }
            let es: Vec<PolyModL> = data.iter().map(|d| d.idempotent(&modulus).unwrap()).collect();
            let sum = es.iter().fold(PolyModL::zero(l), |a, e| a.add(e).unwrap());
            assert!(sum.is_one(), "n={n} l={l}");
            for i in 0..es.len() {
                for j in 0..es.len() {
                    let prod = es[i].mul_mod(&es[j], &modulus).unwrap();
                    if i == j {
                        assert_eq!(prod, es[i]);
                    } else {
                        assert!(prod.is_zero());
                    }
                }
            }
            assert!(check_idempotents(n, l, &data).unwrap());
        }
    }

    #[test]
    fn extended_trace_of_constant_is_trace_of_square() {
        for n in 2..=4 {
            let l = 7;
            let v = extended_trace(n, l, &IntPoly::from_i64s(&[7]), &prec(n)).unwrap();
            let eps = crate::units::epsilon(n).unwrap();
            assert!(v.contains_int(&eps.trace_of_square()));
        }
    }

    #[test]
    fn folding_of_long_lifts() {
        let g = IntPoly::from_i64s(&[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let f: Vec<i64> = folded_numerators(3, &g).iter().map(|a| a.to_i64().unwrap()).collect();
        assert_eq!(f, vec![1 - 5 + 9, 2 - 6, 3 - 7, 4 - 8]);
    }

    #[test]
    fn lift_file_parsing() {
        let m = parse_lift_file("# header\n2: [34, 8, -50]\nf3: [1,2]\n\n").unwrap();
        assert_eq!(m[&2], IntPoly::from_i64s(&[34, 8, -50]));
        assert_eq!(m[&3], IntPoly::from_i64s(&[1, 2]));
        assert!(matches!(parse_lift_file("2 [1]"), Err(IndivError::LiftFile { line: 1, .. })));
        assert!(matches!(parse_lift_file("2: [1]\n2: [3]"), Err(IndivError::LiftFile { line: 2, .. })));
        assert!(parse_lift_file("x: [1]").is_err());
    }

    #[test]
    fn n4_small_primes() {
        let r = check_indivisibility(4, 3, &StrategyConfig::default(), &prec(4)).unwrap();
        assert!(r.all_succeeded && r.factorization_verified && r.idempotents_verified);
        let vals: Vec<String> = r.per_factor.iter().map(|o| o.value.as_ref().unwrap().fixed(1)).collect();
        assert_eq!(vals, vec!["95.6", "100.1"]);
        let r = check_indivisibility(4, 7, &StrategyConfig::default(), &prec(4)).unwrap();
        assert!(r.all_succeeded);
        assert_eq!(r.per_factor[2].multiplier, Some(vec![2]));
        assert_eq!(r.per_factor[2].value.as_ref().unwrap().fixed(1), "200.7");
        assert_eq!(r.per_factor[2].lift, Some(IntPoly::from_i64s(&[-2, -1, 1, 3, -1, -1, 2])));
    }

    #[test]
    fn explicit_lifts_are_checked_for_membership() {
        let mut cfg = StrategyConfig::default();
        cfg.lifts.insert(1, IntPoly::from_i64s(&[1]));
        let r = check_indivisibility(4, 3, &cfg, &prec(4)).unwrap();
        assert!(!r.per_factor[0].succeeded);
        assert!(r.per_factor[1].succeeded);
        cfg.lifts.insert(9, IntPoly::from_i64s(&[1]));
        assert!(matches!(check_indivisibility(4, 3, &cfg, &prec(4)), Err(IndivError::NoSuchFactor(9))));
    }

    #[test]
    fn progression_and_entries() {
        let ps = primes_in_progression(1_000_000_000, 3, 65, 128);
        assert_eq!(ps[0], 1_000_000_321);
        assert!(ps.iter().all(|&p| p % 128 == 65 && is_prime(p)));
        let e = ScanEntry { l: 97, succeeded: false, failed_factors: vec![2, 5] };
        let back = parse_entry(&format_entry(&e)).unwrap();
        assert_eq!((back.l, back.succeeded, back.failed_factors), (97, false, vec![2, 5]));
        let ok = parse_entry("l 101 ok ").unwrap();
        assert!(ok.succeeded && ok.failed_factors.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn multiplication_by_x_preserves_extended_trace(c in prop::collection::vec(-30i64..=30, 8)) {
            let (n, l) = (4u32, 31u64);
            let ft = FastTrace::new(Level::new(n).unwrap(), &prec(n));
            let g = IntPoly::from_i64s(&c);
            // x·g mod (x^8 + 1): shift up, wrapping the top coefficient with a sign change
            let mut xc = vec![-c[7]];
            xc.extend_from_slice(&c[..7]);
            let xg = IntPoly::from_i64s(&xc);
            let a = extended_trace_fast(&ft, l, &g).unwrap();
            let b = extended_trace_fast(&ft, l, &xg).unwrap();
            prop_assert!((a.value - b.value).abs() <= a.abs_err + b.abs_err);
        }

        #[test]
        fn integral_exponents_match_exact_traces(c in prop::collection::vec(-2i64..=2, 4)) {
            let (n, l) = (3u32, 5u64);
            let g = IntPoly::from_i64s(&c.iter().map(|a| a * l as i64).collect::<Vec<_>>());
            let v = extended_trace(n, l, &g, &prec(n)).unwrap();
            let u = unit_from_exponents(&epsilon_conjugates(n).unwrap(), &c);
            prop_assert!(v.contains_int(&u.trace_of_square()));
        }
    }
}
