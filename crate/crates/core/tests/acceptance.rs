//! Acceptance run: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit on
//! any failure.

use std::process::ExitCode;
use std::time::Instant;

use rug::{Integer, Rational};

use relunits::indiv::poly::factor_cyclotomic;
use relunits::indiv::{center_lift, extended_trace, idempotent_data, parse_lift_file, IntPoly};
use relunits::lattice::{bound_l, verify_conjecture, VerifyOptions};
use relunits::minmax::{nested_minmax, Grid};
use relunits::units::{brute_force_min, c_seq, candidate_unit, conjectured_bound, orbit_of};
use relunits::{selftest, ApproxReal, Level, Precision};

/// Reported reals must carry a certified radius below half a unit in the
/// last printed digit.
const HALF_ULP: f64 = 0.5;
/// Working precision for the `L_n` table.
const L_BITS: u32 = 192;
const SELFTEST_SEED: u64 = 1;
const N5_LIFTS: &str = include_str!("../testdata/n5_l97_lifts.txt");

type Outcome = Result<String, String>;

fn precision(n: u32) -> Precision {
    Precision::default_for(Level::new(n).unwrap())
}

/// Every real in `[v - err, v + err]` truncates to `printed`, and the radius
/// is below half an ULP of it.
fn matches_printed(v: &ApproxReal, printed: &str) -> Result<(), String> {
    let decimals = printed.split_once('.').map_or(0, |(_, f)| f.len()) as i32;
    let scale = 10f64.powi(decimals);
    let want: f64 = printed.parse::<f64>().map_err(|e| e.to_string())?;
    let want = (want * scale).round();
    let (lo, hi) = ((v.lower() * scale).floor(), (v.upper() * scale).floor());
    if lo != want || hi != want {
        return Err(format!("{v} does not truncate to {printed}"));
    }
    if v.abs_err() >= HALF_ULP / scale {
        return Err(format!("radius {:.1e} too wide for {printed}", v.abs_err()));
    }
    Ok(())
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c_table() -> Outcome {
    let want = [2, 2, 4, 6, 12, 26, 52, 102, 204, 410];
    let got: Vec<Integer> = (1..=10).map(c_seq).collect();
    check(got.iter().zip(want).all(|(g, w)| *g == w), || format!("got {got:?}"))?;
    Ok(format!("c_1..c_10 = {want:?}"))
}

fn candidates() -> Outcome {
    let levels = [1, 3, 5, 2, 4, 6, 8, 10, 12];
    for n in levels {
        let u = candidate_unit(n).map_err(|e| format!("n={n}: {e}"))?;
        let norm = u.element.relative_norm().map_err(|e| e.to_string())?;
        let one = relunits::RingElement::one(Level::new(n).unwrap().below());
        check(norm == one, || format!("n={n}: relative norm {norm}"))?;
        let tr = u.element.trace_of_square();
        check(tr == conjectured_bound(n), || format!("n={n}: Tr u^2 = {tr}"))?;
    }
    Ok(format!("N u_n = 1 and Tr u_n^2 = 2^n(1+8c_n) for n in {levels:?}"))
}

fn brute_force() -> Outcome {
    let mut mins = Vec::new();
    for (n, want) in [(1, 34), (2, 68), (3, 264)] {
        let r = brute_force_min(n, &conjectured_bound(n)).map_err(|e| e.to_string())?;
        check(r.min == Some(Integer::from(want)), || format!("n={n}: min {:?}", r.min))?;
        if n == 3 {
            let mut orbit = orbit_of(&candidate_unit(3).unwrap().element).map_err(|e| e.to_string())?;
            let mut seen = r.witnesses.clone();
            orbit.sort_by(|a, b| a.cmp_coeffs(b));
            seen.sort_by(|a, b| a.cmp_coeffs(b));
            check(seen == orbit, || format!("witnesses {} vs orbit {}", seen.len(), orbit.len()))?;
            check(r.orbits.len() == 1, || format!("{} orbits", r.orbits.len()))?;
        }
        mins.push(want);
    }
    Ok(format!("minima {mins:?}; n=3 witnesses are the orbit of u_3"))
}

fn l_values() -> Outcome {
    let want = ["3.107", "6.214", "17.55", "42.04", "111.0", "291.4", "723.8"];
    for (i, w) in want.iter().enumerate() {
        let v = bound_l(i as u32 + 1, L_BITS);
        matches_printed(&v, w).map_err(|e| format!("L_{}: {e}", i + 1))?;
    }
    Ok(format!("L_1..L_7 = {want:?}"))
}

fn conjecture() -> Outcome {
    let opts = VerifyOptions::default();
    let mut counts = Vec::new();
    for n in 1..=6 {
        let r = verify_conjecture(n, &precision(n), &opts).map_err(|e| format!("n={n}: {e}"))?;
        check(r.min_trace == Some(conjectured_bound(n)), || format!("n={n}: min {:?}", r.min_trace))?;
        check(r.float_exact_agree, || format!("n={n}: float/exact disagreement"))?;
        check(r.verified(), || format!("n={n}: report not verified"))?;
        counts.push(r.vector_count);
        if n == 6 {
            check(r.vector_count == 290_624, || format!("n=6: {} vectors", r.vector_count))?;
            check(r.min_trace == Some(Integer::from(13376)), || "n=6 minimum".into())?;
        }
    }
    Ok(format!("minima 2^n(1+8c_n) for n = 1..6; vector counts {counts:?}"))
}

fn minmax() -> Outcome {
    let want = [
        (-404, "887.4"),
        (-229, "312.9"),
        (-204, "260.8"),
        (-179, "241.1"),
        (171, "239.1"),
        (196, "259.0"),
        (221, "308.8"),
        (396, "1094.5"),
    ];
    let r = nested_minmax(&Grid::standard(), &precision(3)).map_err(|e| e.to_string())?;
    for (k, printed) in want {
        let t = r.t(&Rational::from((k, 400))).ok_or_else(|| format!("t({k}/400) missing"))?;
        matches_printed(t, printed).map_err(|e| format!("t({k}/400): {e}"))?;
    }
    check(r.certified_below_threshold && r.bound.certainly_lt(264.0), || format!("bound {}", r.bound))?;
    Ok(format!("eight t values match; bound {} < 264", r.bound.fixed(3)))
}

/// Extended traces of center lifts of `c·cofactor` for the listed factors.
fn scalar_values(n: u32, l: u64, cases: &[(usize, u64, &str)]) -> Result<(), String> {
    let p = precision(n);
    let fs = factor_cyclotomic(n, l, 1).map_err(|e| e.to_string())?;
    for &(i, c, printed) in cases {
        let d = idempotent_data(n, l, &fs[i - 1]).map_err(|e| e.to_string())?;
        let g = center_lift(&d.cofactor.scale(c));
        let v = extended_trace(n, l, &g, &p).map_err(|e| e.to_string())?;
        matches_printed(&v, printed).map_err(|e| format!("n={n} l={l} f{i}: {e}"))?;
    }
    Ok(())
}

fn golden_n4() -> Outcome {
    let fs = factor_cyclotomic(4, 3, 1).map_err(|e| e.to_string())?;
    let got: Vec<Vec<i64>> = fs.iter().map(|f| f.centered()).collect();
    check(got == [vec![-1, 0, 1, 0, 1], vec![-1, 0, -1, 0, 1]], || format!("l=3 factors {got:?}"))?;
    scalar_values(4, 3, &[(1, 1, "95.6"), (2, 1, "100.1")])?;
    let fs = factor_cyclotomic(4, 7, 1).map_err(|e| e.to_string())?;
    let got: Vec<Vec<i64>> = fs.iter().map(|f| f.centered()).collect();
    let want = [vec![-1, 1, 1], vec![-1, 3, 1], vec![-1, -3, 1], vec![-1, -1, 1]];
    check(got == want, || format!("l=7 factors {got:?}"))?;
    scalar_values(4, 7, &[(1, 1, "106.5"), (2, 1, "546.9"), (3, 1, "840.6"), (4, 1, "160.2"), (3, 2, "200.7")])?;
    let d = idempotent_data(4, 7, &fs[2]).map_err(|e| e.to_string())?;
    let g3 = center_lift(&d.cofactor.scale(2));
    check(g3 == IntPoly::from_i64s(&[-2, -1, 1, 3, -1, -1, 2]), || format!("replacement lift {g3}"))?;
    Ok("l=3: 95.6, 100.1; l=7: 106.5, 546.9, 840.6, 160.2, replacement 200.7".into())
}

fn golden_n5() -> Outcome {
    let (n, l) = (5, 97);
    let fs = factor_cyclotomic(n, l, 1).map_err(|e| e.to_string())?;
    let roots: Vec<i64> = fs.iter().map(|f| f.centered()[0]).collect();
    let want = [19, 20, 28, 30, 34, 42, 45, 46, -46, -45, -42, -34, -30, -28, -20, -19];
    check(roots == want, || format!("factors x + {roots:?}"))?;
    let scalar = [
        (1, "1123.9"),
        (4, "1429.9"),
        (5, "2421.7"),
        (6, "1632.8"),
        (8, "2332.6"),
        (9, "1291.7"),
        (11, "1537.1"),
        (13, "1492.2"),
        (14, "1444.4"),
    ];
    scalar_values(n, l, &scalar.map(|(i, v)| (i, 4, v)))?;
    let lifts = parse_lift_file(N5_LIFTS).map_err(|e| e.to_string())?;
    let listed = [
        (2, "1492.1"),
        (3, "1963.0"),
        (7, "1548.9"),
        (10, "920.6"),
        (12, "1831.2"),
        (15, "2985.0"),
        (16, "2386.1"),
    ];
    check(lifts.len() == listed.len(), || format!("{} lifts in file", lifts.len()))?;
    let modulus = relunits::indiv::poly::PolyModL::x_pow_plus_one(l, 16);
    let p = precision(n);
    for (i, printed) in listed {
        let g = lifts.get(&i).ok_or_else(|| format!("no lift for f{i}"))?;
        let d = idempotent_data(n, l, &fs[i - 1]).map_err(|e| e.to_string())?;
        check(d.contains(g, &modulus).map_err(|e| e.to_string())?, || format!("lift f{i} outside M_f"))?;
        let v = extended_trace(n, l, g, &p).map_err(|e| e.to_string())?;
        matches_printed(&v, printed).map_err(|e| format!("lift f{i}: {e}"))?;
    }
    Ok("nine scalar-4 values and seven lift-file values".into())
}

fn golden_n7() -> Outcome {
    let (n, l) = (7, 1_000_000_321u64);
    let half = [
        30063488, 30912022, 42483948, 59955883, 78186285, 160612070, 191346380, 246360387, 268629094, 269645956,
        280492327, 303644312, 311722386, 424439170, 441230693, 447503416,
    ];
    let a: Vec<i64> = half.iter().copied().chain(half.iter().rev().map(|x| -x)).collect();
    let b = [
        231, 231, 867, 125, 386, 231, 100, 100, 64, 36, 702, 771, 231, 2069, 349, 64, 64, 64, 4, 64, 686, 105, 167,
        64, 100, 89, 100, 100, 100, 100, 100, 64,
    ];
    let t = [
        "24947.7", "15616.7", "49165.2", "23454.0", "46028.1", "41400.4", "19344.5", "26943.5", "42868.4", "40913.4",
        "44067.7", "49457.9", "18759.3", "39188.3", "35939.1", "44713.3", "41782.1", "47974.8", "52445.8", "49841.0",
        "43256.3", "52244.6", "49338.6", "22229.3", "36290.0", "48593.0", "26438.3", "40208.3", "23006.2", "19831.0",
        "16060.6", "42470.9",
    ];
    let fs = factor_cyclotomic(n, l, 1).map_err(|e| e.to_string())?;
    check(fs.len() == 32, || format!("{} factors", fs.len()))?;
    for (i, f) in fs.iter().enumerate() {
        let c = f.centered();
        check(c.len() == 3 && c[1] == 0 && c[2] == 1 && c[0] == a[i], || format!("f{} = {f}", i + 1))?;
    }
    let p = precision(n);
    let bound = conjectured_bound(n).to_f64();
    for i in 0..32 {
        let d = idempotent_data(n, l, &fs[i]).map_err(|e| e.to_string())?;
        let g = center_lift(&d.cofactor.scale(b[i]));
        let v = extended_trace(n, l, &g, &p).map_err(|e| e.to_string())?;
        matches_printed(&v, t[i]).map_err(|e| format!("t_{}: {e}", i + 1))?;
        check(v.certainly_lt(bound), || format!("t_{} = {v} not below {bound}", i + 1))?;
    }
    Ok("32 factors x^2 + a_i and all t_i < 53376".into())
}

fn properties() -> Outcome {
    let r = selftest::run(SELFTEST_SEED);
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    check(failed.is_empty(), || format!("failed: {failed:?}"))?;
    Ok(format!("{} seeded suites pass (seed {SELFTEST_SEED})", r.checks.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 c_n table", c_table),
        ("2 candidate units", candidates),
        ("3 brute-force oracle", brute_force),
        ("4 L_n values", l_values),
        ("5 conjecture verification n <= 6", conjecture),
        ("6 min-max bound", minmax),
        ("7a/7b indivisibility n=4", golden_n4),
        ("7c indivisibility n=5, l=97", golden_n5),
        ("7d indivisibility n=7, l=1000000321", golden_n7),
        ("8 property suites", properties),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let res = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.1}s)"),
            Err(why) => {
                failures += 1;
                println!("[FAIL] {name}: {why} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} criteria, {failures} failed", criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
