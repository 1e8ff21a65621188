//! Independent brute-force oracles used by the test suite and the `verify`
//! CLI command. Deliberately naive; they share no code with the modules they
//! check.

use crate::rng::{bernoulli_threshold, Rng};
use crate::schedule::lil_bound;

/// Connected components of an interval overlap graph by O(K²) pairwise tests
/// plus union-find, ordered by descending midpoint of their members (ties by
/// smallest member index). Touching endpoints count as overlapping.
pub fn components_oracle(intervals: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let n = intervals.len();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }

    for i in 0..n {
        for j in (i + 1)..n {
            let (alo, ahi) = intervals[i];
            let (blo, bhi) = intervals[j];
            if alo <= bhi && blo <= ahi {
                let ri = find(&mut parent, i);
                let rj = find(&mut parent, j);
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
    for c in &mut comps {
        c.sort_unstable();
    }
    comps.sort_by(|a, b| {
        let mid = |c: &Vec<usize>| {
            c.iter()
                .map(|&i| (intervals[i].0 + intervals[i].1) / 2.0)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        mid(b).partial_cmp(&mid(a)).unwrap().then(a[0].cmp(&b[0]))
    });
    comps
}

/// Exponent of the unique power of `base` in `[x, base*x)`, by enumeration of
/// integer exponents -200..=200. Panics if zero or more than one power lands
/// in the interval; either would falsify the uniqueness property.
pub fn power_oracle(x: f64, base: u64) -> i32 {
    assert!(x > 0.0 && base >= 2);
    let mut hits = Vec::new();
    for a in -200..=200i32 {
        let p = (base as f64).powi(a);
        if p >= x && p < base as f64 * x {
            hits.push(a);
        }
    }
    assert_eq!(hits.len(), 1, "powers of {base} in [{x}, {}): {hits:?}", base as f64 * x);
    hits[0]
}

/// Which side of the anytime Bernstein band to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSide {
    /// `mean - 2 sqrt(v B/n) - B/n <= empirical mean` for all n.
    Lower,
    /// `empirical mean <= mean + 2 sqrt(v B/n) + B/n` for all n.
    Upper,
}

/// Monte Carlo coverage of the anytime empirical-Bernstein band on Bernoulli
/// streams: fraction of streams violating the band at any n <= n_max.
pub fn bernstein_coverage_oracle(
    mean: f64,
    n_max: u64,
    delta_prime: f64,
    trials: u64,
    side: BandSide,
    seed: u64,
) -> f64 {
    assert!(mean > 0.0 && mean < 1.0);
    let v = mean.min(1.0 - mean);
    let th = bernoulli_threshold(mean);
    // one boundary value per n, shared across trials
    let bounds: Vec<f64> = (1..=n_max)
        .map(|n| {
            let b = lil_bound(n, delta_prime);
            let slack = 2.0 * (v * b / n as f64).sqrt();
            match side {
                BandSide::Lower => mean - slack - b / n as f64,
                BandSide::Upper => mean + slack + b / n as f64,
            }
        })
        .collect();
    let mut violated = 0u64;
    let mut rng = Rng::seed_from(seed);
    for _ in 0..trials {
        let mut sum = 0.0;
        for n in 1..=n_max {
            if rng.bernoulli(th) {
                sum += 1.0;
            }
            let emp = sum / n as f64;
            let bad = match side {
                BandSide::Lower => emp < bounds[(n - 1) as usize],
                BandSide::Upper => emp > bounds[(n - 1) as usize],
            };
            if bad {
                violated += 1;
                break;
            }
        }
    }
    violated as f64 / trials as f64
}

/// Grid check of the log-inversion bound: every x with `x / ln(c x) <= b`
/// satisfies `x <= 4 b ln(c b)`, scanned up to `10 b ln(c b)`.
/// Requires `c b >= 4` and `b >= e/c`. Returns the scanned grid size.
pub fn log_inversion_oracle(b: f64, c: f64) -> Result<u64, String> {
    if c * b < 4.0 {
        return Err(format!("precondition c*b >= 4 violated: {}", c * b));
    }
    let x0 = std::f64::consts::E / c;
    if b < x0 {
        return Err(format!("precondition b >= e/c violated: b={b}, e/c={x0}"));
    }
    let bound = 4.0 * b * (c * b).ln();
    let hi = 10.0 * b * (c * b).ln();
    let steps = 200_000u64;
    for i in 0..=steps {
        let x = x0 + (hi - x0) * i as f64 / steps as f64;
        if x / (c * x).ln() <= b && x > bound {
            return Err(format!("counterexample x={x}: h(x) <= {b} but x > {bound}"));
        }
    }
    Ok(steps)
}
