//! Nested min-max upper bound for `T(x_0, x_1, x_2, x_3)` at `n = 3` over a
//! rational grid `A` and its shift `A + 1`.
//!
//! `T` is tabulated once per `x_0` on the union `A ∪ (A + 1)` in `f64`
//! with certified radii, then the alternating min/max is applied to whole
//! intervals one axis at a time, which keeps every comparison sound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::Rational;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::approx::ApproxReal;
use crate::embeddings::{trace_power, EmbeddingError, FastTrace, Precision};
use crate::ring::Level;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinMaxError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("grid needs a < b and N >= 1")]
    InvalidGrid,
}

fn ser_rational<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&q.to_string())
}

fn ser_rationals<S: Serializer>(qs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(qs.iter().map(|q| q.to_string()))
}

/// `N + 1` equally spaced exact rationals from `a` to `b`.
#[derive(Clone, Debug, Serialize)]
pub struct Grid {
    #[serde(serialize_with = "ser_rational")]
    pub a: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub b: Rational,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(serialize_with = "ser_rationals")]
    pub points: Vec<Rational>,
}

impl Grid {
    pub fn new(a: Rational, b: Rational, n: u32) -> Result<Self, MinMaxError> {
        if n == 0 || a >= b {
            return Err(MinMaxError::InvalidGrid);
        }
        let step = Rational::from(&b - &a) / n;
        let points = (0..=n).map(|k| Rational::from(&a + Rational::from(&step * k))).collect();
        Ok(Grid { a, b, n, points })
    }

    /// `[−101/100, 99/100]` with `N = 32`.
    pub fn standard() -> Self {
        Grid::new(Rational::from((-101, 100)), Rational::from((99, 100)), 32).expect("valid grid")
    }

    /// Sorted `A ∪ (A + 1)` and, for each point of `A`, the union positions of `α` and `α + 1`.
    pub fn union_with_shift(&self) -> (Vec<Rational>, Vec<(usize, usize)>) {
        let mut u: Vec<Rational> = self
            .points
            .iter()
            .cloned()
            .chain(self.points.iter().map(|p| Rational::from(p + 1u32)))
            .collect();
        u.sort();
        u.dedup();
        let pos = |q: &Rational| u.binary_search(q).expect("member of union");
        let pairs = self
            .points
            .iter()
            .map(|p| (pos(p), pos(&Rational::from(p + 1u32))))
            .collect();
        (u, pairs)
    }
}

/// A closed interval `[lo, hi]` of `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn min(self, o: Interval) -> Interval {
        Interval { lo: self.lo.min(o.lo), hi: self.hi.min(o.hi) }
    }

    pub fn max(self, o: Interval) -> Interval {
        Interval { lo: self.lo.max(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn to_approx(self) -> ApproxReal {
        let mid = (self.lo + self.hi) / 2.0;
        let rad = ((self.hi - mid).max(mid - self.lo)) * (1.0 + 4.0 * f64::EPSILON) + f64::MIN_POSITIVE;
        ApproxReal::from_f64(mid, rad, 64)
    }
}

/// Reduces the last axis of a dense tensor with `len` entries per axis:
/// `v(…) = min_k max(v(…, pairs[k].0), v(…, pairs[k].1))`.
pub fn reduce_last_axis(values: &[Interval], len: usize, pairs: &[(usize, usize)]) -> Vec<Interval> {
    values
        .chunks(len)
        .map(|row| {
            pairs
                .iter()
                .map(|&(lo, hi)| row[lo].max(row[hi]))
                .reduce(Interval::min)
                .expect("nonempty grid")
        })
        .collect()
}

/// Nested min-max over `dim − 1` trailing variables for each leading index.
///
/// `leaf(idx)` evaluates the function at union indices `idx` (length `dim`).
pub fn nested_minmax_values<F>(dim: usize, len: usize, pairs: &[(usize, usize)], leaf: F) -> Vec<Interval>
where
    F: Fn(&[usize]) -> Interval + Sync,
{
    let inner = len.pow(dim as u32 - 1);
    (0..len)
        .into_par_iter()
        .map(|x0| {
            let mut idx = vec![0usize; dim];
            idx[0] = x0;
            let mut table = Vec::with_capacity(inner);
            for flat in 0..inner {
                let mut r = flat;
                for k in (1..dim).rev() {
                    idx[k] = r % len;
                    r /= len;
                }
                table.push(leaf(&idx));
            }
            for _ in 1..dim {
                table = reduce_last_axis(&table, len, pairs);
            }
            table[0]
        })
        .collect()
}

/// `T(x) = Σ_{i<8} ∏_{j<4} |σ^{i+j}(ε_3)|^{2x_j}` in MPFR.
#[allow(non_snake_case)]
pub fn T_eval(x: &[Rational; 4], p: &Precision) -> Result<ApproxReal, MinMaxError> {
    Ok(trace_power(Level::new(3).expect("level 3"), x, p)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct TValue {
    #[serde(serialize_with = "ser_rational")]
    pub alpha: Rational,
    pub value: ApproxReal,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinMaxReport {
    pub grid: Grid,
    pub t_values: Vec<TValue>,
    /// `t` at the points of `A + 1` outside `A`.
    pub shifted_t_values: Vec<TValue>,
    /// `min_{α_0 ∈ A} max(t(α_0), t(α_0 + 1))`.
    pub bound: ApproxReal,
    #[serde(serialize_with = "ser_rational")]
    pub bound_alpha: Rational,
    pub threshold: i64,
    pub certified_below_threshold: bool,
}

impl MinMaxReport {
    pub fn t(&self, alpha: &Rational) -> Option<&ApproxReal> {
        self.t_values
            .iter()
            .chain(&self.shifted_t_values)
            .find(|t| t.alpha == *alpha)
            .map(|t| &t.value)
    }
}

fn fast_interval(ft: &FastTrace, x: &[f64], dx: &[f64]) -> Interval {
    let v = ft.eval(x, dx);
    Interval { lo: v.lower(), hi: v.upper() }
}

/// Runs the nested min-max at `n = 3` and bounds `L` by the best pair `t(α_0), t(α_0 + 1)`.
pub fn nested_minmax(g: &Grid, p: &Precision) -> Result<MinMaxReport, MinMaxError> {
    let level = Level::new(3).expect("level 3");
    let ft = FastTrace::new(level, p);
    let (union, pairs) = g.union_with_shift();
    let xs: Vec<(f64, f64)> = union
        .iter()
        .map(|q| {
            let v = q.to_f64();
            let exact = Rational::from_f64(v).is_some_and(|r| r == *q);
            (v, if exact { 0.0 } else { v.abs() * f64::EPSILON })
        })
        .collect();
    let t = nested_minmax_values(4, union.len(), &pairs, |idx| {
        let x: Vec<f64> = idx.iter().map(|&i| xs[i].0).collect();
        let dx: Vec<f64> = idx.iter().map(|&i| xs[i].1).collect();
        fast_interval(&ft, &x, &dx)
    });
    let in_grid: Vec<bool> = union.iter().map(|q| g.points.contains(q)).collect();
    let tv = |i: usize| TValue { alpha: union[i].clone(), value: t[i].to_approx() };
    let t_values = (0..union.len()).filter(|&i| in_grid[i]).map(tv).collect();
    let shifted_t_values = (0..union.len()).filter(|&i| !in_grid[i]).map(tv).collect();
    let (best_k, best) = pairs
        .iter()
        .map(|&(lo, hi)| t[lo].max(t[hi]))
        .enumerate()
        .min_by(|a, b| a.1.hi.total_cmp(&b.1.hi))
        .expect("nonempty grid");
    let bound = best.to_approx();
    let threshold = 264;
    Ok(MinMaxReport {
        grid: g.clone(),
        t_values,
        shifted_t_values,
        certified_below_threshold: bound.certainly_lt(threshold as f64),
        bound,
        bound_alpha: g.points[best_k].clone(),
        threshold,
    })
}

/// Midpoint convexity of `T` on random segments with endpoints in `[−3/2, 3/2]^4` (step `1/64`).
pub fn convexity_spot_check(samples: usize, seed: u64, p: &Precision) -> Result<bool, MinMaxError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> [Rational; 4] {
        std::array::from_fn(|_| Rational::from((rng.gen_range(-96i64..=96), 64)))
    };
    for _ in 0..samples {
        let a = point(&mut rng);
        let b = point(&mut rng);
        if !midpoint_convex(&a, &b, p)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `T((a + b)/2) <= (T(a) + T(b))/2` up to certified error.
pub fn midpoint_convex(a: &[Rational; 4], b: &[Rational; 4], p: &Precision) -> Result<bool, MinMaxError> {
    let mid: [Rational; 4] = std::array::from_fn(|i| Rational::from(&a[i] + &b[i]) / 2u32);
    let ta = T_eval(a, p)?;
    let tb = T_eval(b, p)?;
    let tm = T_eval(&mid, p)?;
    let avg = ta.add(&tb).mul(&ApproxReal::from_rational(&Rational::from((1, 2)), p.bits));
    Ok(tm.lower() <= avg.upper())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Integer;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from((a, b))
    }

    fn prec() -> Precision {
        Precision::new(192, 1e-20).unwrap()
    }

    #[test]
    fn grid_points() {
        let g = Grid::standard();
        assert_eq!(g.points.len(), 33);
        assert_eq!(g.points[0], q(-404, 400));
        assert_eq!(g.points[32], q(396, 400));
        assert_eq!(g.points[8], q(-204, 400));
        let (u, pairs) = g.union_with_shift();
        assert_eq!(u.len(), 49);
        assert_eq!(u[pairs[8].1], q(196, 400));
        assert!(Grid::new(q(1, 1), q(0, 1), 4).is_err());
    }

    #[test]
    fn t_eval_examples() {
        let z = T_eval(&[q(0, 1), q(0, 1), q(0, 1), q(0, 1)], &prec()).unwrap();
        assert!(z.contains_int(&Integer::from(8)));
        let e = crate::units::epsilon(3).unwrap().trace_of_square();
        let one = T_eval(&[q(1, 1), q(0, 1), q(0, 1), q(0, 1)], &prec()).unwrap();
        assert!(one.contains_int(&e));
        let u3 = T_eval(&[q(1, 1), q(1, 1), q(0, 1), q(0, 1)], &prec()).unwrap();
        assert!(u3.contains_int(&Integer::from(264)));
    }

    fn brute(dim: usize, depth: usize, idx: &mut Vec<usize>, pairs: &[(usize, usize)], f: &dyn Fn(&[usize]) -> f64) -> f64 {
        if depth == dim {
            return f(idx);
        }
        let mut best = f64::INFINITY;
        for &(lo, hi) in pairs {
            let mut worst = f64::NEG_INFINITY;
            for x in [lo, hi] {
                idx.push(x);
                worst = worst.max(brute(dim, depth + 1, idx, pairs, f));
                idx.pop();
            }
            best = best.min(worst);
        }
        best
    }

    #[test]
    fn tabulated_recursion_matches_direct_definition() {
        let g = Grid::new(q(-1, 1), q(1, 2), 3).unwrap();
        let (u, pairs) = g.union_with_shift();
        let vals: Vec<f64> = u.iter().map(|r| r.to_f64()).collect();
        let f = |idx: &[usize]| -> f64 {
            idx.iter().enumerate().map(|(k, &i)| ((k + 1) as f64 * vals[i] - 0.3).powi(2) + vals[i].sin()).sum()
        };
        for dim in [2usize, 3, 4] {
            let got = nested_minmax_values(dim, u.len(), &pairs, |idx| {
                let v = f(idx);
                Interval { lo: v, hi: v }
            });
            for (x0, t) in got.iter().enumerate() {
                let want = brute(dim, 1, &mut vec![x0], &pairs, &f);
                assert_eq!(t.lo, want);
                assert_eq!(t.hi, want);
            }
        }
    }

    #[test]
    fn refinement_never_increases_t() {
        let p = prec();
        let coarse = nested_minmax(&Grid::new(q(-101, 100), q(99, 100), 4).unwrap(), &p).unwrap();
        let fine = nested_minmax(&Grid::new(q(-101, 100), q(99, 100), 8).unwrap(), &p).unwrap();
        for tv in &coarse.t_values {
            let f = fine.t(&tv.alpha).unwrap();
            assert!(f.lower() <= tv.value.upper(), "alpha {}", tv.alpha);
        }
    }

    #[test]
    fn fast_table_agrees_with_mpfr() {
        let ft = FastTrace::new(Level::new(3).unwrap(), &prec());
        let pts = [[q(-51, 100), q(49, 100), q(3, 16), q(-7, 8)], [q(99, 100), q(-101, 100), q(1, 1), q(0, 1)]];
        for x in pts {
            let f: Vec<f64> = x.iter().map(|r| r.to_f64()).collect();
            let df: Vec<f64> = f.iter().map(|v| v.abs() * f64::EPSILON).collect();
            let fast = fast_interval(&ft, &f, &df);
            let exact = T_eval(&x, &prec()).unwrap();
            assert!(fast.lo <= exact.upper() && exact.lower() <= fast.hi);
        }
    }

    #[test]
    fn convexity_examples() {
        let p = prec();
        let zero = [q(0, 1), q(0, 1), q(0, 1), q(0, 1)];
        let two = [q(2, 1), q(0, 1), q(0, 1), q(0, 1)];
        assert!(midpoint_convex(&zero, &two, &p).unwrap());
        let x = [q(1, 3), q(-2, 5), q(1, 1), q(0, 1)];
        assert!(midpoint_convex(&x, &x, &p).unwrap());
        assert!(convexity_spot_check(100, 1, &p).unwrap());
    }
}
