//! Per-player confidence intervals over arms and the induced connectivity
//! graph. Two arms are connected when their widened intervals overlap; the
//! ordered connected components drive the elimination trigger.
//!
//! Interval half-width is `blowup * conf_width(N) / 2`, so with equal pull
//! counts two arms disconnect exactly when their empirical means separate by
//! more than `blowup * conf_width(N)`. With the default blowup of 10 this is
//! the `C = 10` separation the trigger-time sandwich is calibrated to.

use crate::schedule::{conf_width, ConfidenceParams};

/// Running pull count and reward sum for one arm. The sum representation
/// keeps the per-sample update division-free; the mean is derived on demand
/// (the protocol only reads it at cycle boundaries).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    pub count: u64,
    pub sum: f64,
}

impl ArmStats {
    pub fn with_mean(count: u64, mean: f64) -> Self {
        ArmStats { count, sum: mean * count as f64 }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        debug_assert!(self.count > 0);
        self.sum / self.count as f64
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.sum = 0.0;
    }
}

/// Overlap graph over arms with its components ordered by descending
/// empirical mean.
#[derive(Debug, Clone)]
pub struct ConnectivityGraph {
    pub blowup: f64,
    /// Per-arm `[lo, hi]` interval, indexed by arm.
    pub intervals: Vec<(f64, f64)>,
    /// Arm-index sets; `components[0]` holds the highest empirical means.
    /// Within a component arms are sorted by index.
    pub components: Vec<Vec<usize>>,
}

/// Build the graph. Every arm must have at least one pull.
///
/// Overlap is closed: touching endpoints keep two arms connected.
pub fn build_graph(stats: &[ArmStats], blowup: f64, p: &ConfidenceParams) -> ConnectivityGraph {
    assert!(!stats.is_empty());
    assert!(
        stats.iter().all(|s| s.count >= 1),
        "every arm needs at least one pull before the graph is defined"
    );
    let intervals: Vec<(f64, f64)> = stats
        .iter()
        .map(|s| {
            let r = blowup * conf_width(s.count, p) / 2.0;
            (s.mean() - r, s.mean() + r)
        })
        .collect();

    // Sort arms by interval start; chained overlaps then merge in one sweep.
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        intervals[a]
            .0
            .partial_cmp(&intervals[b].0)
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut cur_hi = f64::NEG_INFINITY;
    for &i in &order {
        let (lo, hi) = intervals[i];
        if cur.is_empty() || lo <= cur_hi {
            cur.push(i);
            cur_hi = cur_hi.max(hi);
        } else {
            cur.sort_unstable();
            components.push(std::mem::take(&mut cur));
            cur.push(i);
            cur_hi = hi;
        }
    }
    if !cur.is_empty() {
        cur.sort_unstable();
        components.push(cur);
    }

    // Highest means first. Components occupy disjoint spans on the line, so
    // comparing any member mean orders them; ties break on smallest index.
    components.sort_by(|a, b| {
        let ma = a.iter().map(|&i| stats[i].mean()).fold(f64::NEG_INFINITY, f64::max);
        let mb = b.iter().map(|&i| stats[i].mean()).fold(f64::NEG_INFINITY, f64::max);
        mb.partial_cmp(&ma).unwrap().then(a[0].cmp(&b[0]))
    });

    let g = ConnectivityGraph { blowup, intervals, components };
    debug_checks(&g, stats);
    g
}

/// Number of connected components.
pub fn conn_count(graph: &ConnectivityGraph) -> usize {
    graph.components.len()
}

/// Order-convexity: sorting arms by empirical mean, each component occupies a
/// contiguous block. Holds structurally (means sit at interval centers) and is
/// asserted on every build.
fn debug_checks(g: &ConnectivityGraph, stats: &[ArmStats]) {
    let mut by_mean: Vec<usize> = (0..stats.len()).collect();
    by_mean.sort_by(|&a, &b| stats[a].mean().partial_cmp(&stats[b].mean()).unwrap().then(a.cmp(&b)));
    let mut comp_of = vec![usize::MAX; stats.len()];
    for (c, members) in g.components.iter().enumerate() {
        for &i in members {
            comp_of[i] = c;
        }
    }
    let mut seen_done: Vec<bool> = vec![false; g.components.len()];
    let mut prev = usize::MAX;
    for &i in &by_mean {
        let c = comp_of[i];
        if c != prev {
            assert!(
                !seen_done[c],
                "component {c} is not contiguous in mean order"
            );
            if prev != usize::MAX {
                seen_done[prev] = true;
            }
            prev = c;
        }
    }
}
