//! Seeded invariant checks behind the `selftest` subcommand.
//!
//! Each check draws its cases from one ChaCha stream, so a given seed always
//! exercises the same inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::{Integer, Rational};
use serde::Serialize;

use crate::embeddings::{trace_power, unit_from_exponents, Precision};
use crate::indiv::poly::factor_cyclotomic;
use crate::indiv::{check_idempotents, extended_trace, idempotent_data, IntPoly};
use crate::lattice::{enumerate_short, GramForm};
use crate::units::epsilon_conjugates;
use crate::{ApproxReal, Level, RingElement};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

type Check = fn(&mut ChaCha8Rng, usize) -> Result<(), String>;

const CHECKS: &[(&str, Check, usize)] = &[
    ("ring algebra laws", ring_laws, 40),
    ("trace of square formula", trace_formula, 40),
    ("relative norm multiplicativity", norm_multiplicative, 40),
    ("galois order", galois_order, 40),
    ("idempotent partition and orthogonality", idempotents, 6),
    ("fincke-pohst equals naive enumeration", fincke_pohst, 40),
    ("extended trace at integral exponents", integral_exponents, 16),
    ("precision doubling stability", precision_doubling, 16),
];

pub fn run(seed: u64) -> SelftestReport {
    let mut checks = Vec::new();
    for (k, &(name, check, cases)) in CHECKS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let res = check(&mut rng, cases);
        checks.push(CheckResult { name, cases, passed: res.is_ok(), detail: res.err() });
    }
    let all_passed = checks.iter().all(|c| c.passed);
    SelftestReport { seed, checks, all_passed }
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn random_element(rng: &mut ChaCha8Rng, n: u32, span: i64) -> RingElement {
    let level = Level::new(n).expect("level");
    let c: Vec<i64> = (0..level.degree()).map(|_| rng.gen_range(-span..=span)).collect();
    RingElement::from_i64s(level, &c).expect("length")
}

fn ring_laws(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for _ in 0..cases {
        let n = rng.gen_range(1..=5);
        let (x, y, z) = (random_element(rng, n, 20), random_element(rng, n, 20), random_element(rng, n, 20));
        let m = |a: &RingElement, b: &RingElement| a.mul(b).expect("same level");
        let s = |a: &RingElement, b: &RingElement| a.add(b).expect("same level");
        ensure(m(&x, &y) == m(&y, &x), || format!("commutativity fails at {x}, {y}"))?;
        ensure(m(&m(&x, &y), &z) == m(&x, &m(&y, &z)), || format!("associativity fails at {x}"))?;
        ensure(m(&x, &s(&y, &z)) == s(&m(&x, &y), &m(&x, &z)), || format!("distributivity fails at {x}"))?;
        ensure(m(&x, &RingElement::one(x.level())) == x, || format!("unit law fails at {x}"))?;
    }
    Ok(())
}

fn trace_formula(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for _ in 0..cases {
        let n = rng.gen_range(1..=7);
        let x = random_element(rng, n, 1000);
        let c = x.coeffs();
        let tail: Integer = c[1..].iter().map(|a| Integer::from(a * a)).sum();
        let want = (Integer::from(&c[0] * &c[0]) + tail * 2u32) << n;
        ensure(x.trace_of_square() == want, || format!("Tr x^2 mismatch at {x}"))?;
        ensure(x.square().trace() == want, || format!("trace of x*x mismatch at {x}"))?;
    }
    Ok(())
}

fn norm_multiplicative(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for _ in 0..cases {
        let n = rng.gen_range(1..=5);
        let (x, y) = (random_element(rng, n, 15), random_element(rng, n, 15));
        let lhs = x.mul(&y).and_then(|p| p.relative_norm()).map_err(|e| e.to_string())?;
        let rhs = x
            .relative_norm()
            .and_then(|a| y.relative_norm().and_then(|b| a.mul(&b)))
            .map_err(|e| e.to_string())?;
        ensure(lhs == rhs, || format!("N(xy) != N(x)N(y) at {x}, {y}"))?;
    }
    Ok(())
}

fn galois_order(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for _ in 0..cases {
        let n = rng.gen_range(1..=6);
        let x = random_element(rng, n, 30);
        let m = x.level().degree() as i64;
        let mut y = x.clone();
        for _ in 0..m {
            y = y.galois(1);
        }
        ensure(y == x, || format!("sigma^(2^n) != id at {x}"))?;
        let j = rng.gen_range(0..m);
        ensure(x.galois(j).galois(m - j) == x, || format!("sigma^j sigma^-j != id at {x}"))?;
        if x.coeffs().iter().skip(1).step_by(2).any(|c| *c != 0) {
            ensure(x.galois(m / 2) != x, || format!("x outside B_(n-1) fixed by sigma^(2^(n-1)): {x}"))?;
        }
    }
    Ok(())
}

fn idempotents(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    const PRIMES: &[(u32, u64)] = &[(3, 3), (3, 7), (4, 7), (4, 17), (5, 97), (4, 31), (3, 41), (5, 13)];
    for _ in 0..cases {
        let (n, l) = PRIMES[rng.gen_range(0..PRIMES.len())];
        let seed = rng.gen();
        let factors = factor_cyclotomic(n, l, seed).map_err(|e| e.to_string())?;
        let data = factors
            .iter()
            .map(|f| idempotent_data(n, l, f))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let ok = check_idempotents(n, l, &data).map_err(|e| e.to_string())?;
        ensure(ok, || format!("idempotents fail for n={n}, l={l}"))?;
    }
    Ok(())
}

fn fincke_pohst(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for _ in 0..cases {
        let dim = rng.gen_range(2..=4);
        let a: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-3..=3) as f64).collect();
        let mut m = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] = (0..dim).map(|k| a[dim * k + i] * a[dim * k + j]).sum::<f64>() + f64::from(u8::from(i == j));
            }
        }
        let bound: f64 = rng.gen_range(0.5..10.0);
        let g = GramForm::from_f64(&m).map_err(|e| e.to_string())?;
        let mut fp = enumerate_short(&g, &ApproxReal::from_f64(bound, 0.0, 64));
        fp.sort();
        // least eigenvalue >= 1, so every coordinate lies in [-√bound, √bound]
        let r = bound.sqrt().floor() as i64;
        let mut naive = Vec::new();
        let mut x = vec![-r; dim];
        loop {
            if x.iter().any(|&v| v != 0) && g.eval_f64(&x) <= bound * (1.0 + 1e-9) + 1e-9 {
                naive.push(x.clone());
            }
            let Some(k) = (0..dim).find(|&k| x[k] < r) else { break };
            x[k] += 1;
            for v in &mut x[..k] {
                *v = -r;
            }
        }
        naive.sort();
        ensure(fp == naive, || format!("enumeration differs for {m:?} below {bound}"))?;
    }
    Ok(())
}

fn integral_exponents(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    let (n, l) = (3u32, 7u64);
    let p = Precision::default_for(Level::new(n).expect("level"));
    let eps = epsilon_conjugates(n).map_err(|e| e.to_string())?;
    for _ in 0..cases {
        let c: Vec<i64> = (0..4).map(|_| rng.gen_range(-2..=2)).collect();
        let g = IntPoly::from_i64s(&c.iter().map(|a| a * l as i64).collect::<Vec<_>>());
        let v = extended_trace(n, l, &g, &p).map_err(|e| e.to_string())?;
        let u = unit_from_exponents(&eps, &c);
        ensure(v.contains_int(&u.trace_of_square()), || format!("extended trace {v} misses Tr u^2 for {c:?}"))?;
    }
    Ok(())
}

fn precision_doubling(rng: &mut ChaCha8Rng, cases: usize) -> Result<(), String> {
    for _ in 0..cases {
        let n = rng.gen_range(1..=5);
        let level = Level::new(n).expect("level");
        let den = rng.gen_range(1..=13);
        let e: Vec<Rational> = (0..level.half_degree()).map(|_| Rational::from((rng.gen_range(-20..=20), den))).collect();
        let lo = Precision::new(96, f64::INFINITY).map_err(|e| e.to_string())?;
        let a = trace_power(level, &e, &lo).map_err(|e| e.to_string())?;
        let b = trace_power(level, &e, &lo.doubled()).map_err(|e| e.to_string())?;
        ensure(a.distance_upper(&b) <= a.abs_err() + b.abs_err(), || format!("{a} and {b} disagree"))?;
        ensure(b.abs_err() <= a.abs_err(), || format!("radius grew from {} to {}", a.abs_err(), b.abs_err()))?;
    }
    Ok(())
}
