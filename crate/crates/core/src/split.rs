//! Direction scheduling and the constrained split-point search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Split counts per coordinate along a root-to-node path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionCounts(pub Vec<u32>);

impl DirectionCounts {
    pub fn zeros(d: usize) -> Self {
        DirectionCounts(vec![0; d])
    }

    pub fn min(&self) -> u32 {
        self.0.iter().copied().min().unwrap_or(0)
    }

    pub fn max(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn spread(&self) -> u32 {
        self.max() - self.min()
    }

    pub fn incremented(&self, direction: usize) -> Self {
        let mut c = self.clone();
        c.0[direction] += 1;
        c
    }
}

/// Returns a direction that has been split the fewest times, chosen
/// uniformly among ties.
pub fn pick_balanced_direction(counts: &DirectionCounts, rng: &mut RngStream) -> usize {
    let min = counts.min();
    let ties: Vec<usize> = (0..counts.0.len()).filter(|&j| counts.0[j] == min).collect();
    ties[rng.below(ties.len())]
}

/// Order in which remaining directions are tried after `tried` turned out
/// degenerate: ascending split count, ties in random order.
pub(crate) fn fallback_order(
    counts: &DirectionCounts,
    tried: &[usize],
    rng: &mut RngStream,
) -> Vec<usize> {
    let mut rest: Vec<usize> = (0..counts.0.len()).filter(|j| !tried.contains(j)).collect();
    rng.shuffle(&mut rest);
    rest.sort_by_key(|&j| counts.0[j]);
    rest
}

/// Candidate direction sets for one round of balanced feature subsetting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtrySchedule {
    d: usize,
    mtry: usize,
    /// Sets not yet consumed in the current round.
    unused: Vec<Vec<usize>>,
}

impl MtrySchedule {
    /// The `d` cyclic windows of length `mtry` over `perm`, in window order.
    pub fn from_permutation(perm: &[usize], mtry: usize) -> Self {
        let d = perm.len();
        let unused = (0..d)
            .map(|start| (0..mtry).map(|t| perm[(start + t) % d]).collect())
            .collect();
        MtrySchedule { d, mtry, unused }
    }

    pub fn unused(&self) -> &[Vec<usize>] {
        &self.unused
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }
}

/// Shuffles the directions, forms the cyclic windows and presents them in
/// random order.
pub fn build_mtry_schedule(d: usize, mtry: usize, rng: &mut RngStream) -> MtrySchedule {
    debug_assert!(mtry >= 1 && mtry <= d);
    let perm = rng.permutation(d);
    let mut s = MtrySchedule::from_permutation(&perm, mtry);
    rng.shuffle(&mut s.unused);
    s
}

/// What the two children inherit after a set is consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChildSchedules {
    /// Both children continue the round with the remaining sets.
    Shared(MtrySchedule),
    /// The round ended; each child starts a freshly drawn round.
    Fresh(MtrySchedule, MtrySchedule),
}

/// Removes a uniformly chosen unused set and returns it with the children's
/// schedules.
pub fn advance_schedule(mut s: MtrySchedule, rng: &mut RngStream) -> (Vec<usize>, ChildSchedules) {
    let idx = rng.below(s.unused.len());
    let chosen = s.unused.remove(idx);
    let children = if s.unused.is_empty() {
        let left = build_mtry_schedule(s.d, s.mtry, rng);
        let right = build_mtry_schedule(s.d, s.mtry, rng);
        ChildSchedules::Fresh(left, right)
    } else {
        ChildSchedules::Shared(s)
    };
    (chosen, children)
}

/// Admissible cut positions: a cut at `c` sends the `c` smallest I-values
/// left. Both children keep at least `min_child` I-samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutRange {
    pub lo: usize,
    pub hi: usize,
    pub n: usize,
    pub min_child: usize,
}

/// Minimum child size `max(min(ceil(alpha n), floor(n/2)), k)`. The
/// `floor(n/2)` cap only binds at `alpha = 0.5` with odd `n`.
pub fn min_child_size(n: usize, alpha: f64, k: usize) -> usize {
    // The tolerance absorbs products such as 0.3 * 10 = 3.0000000000000004.
    let frac = ((alpha * n as f64) - 1e-9).ceil().max(0.0) as usize;
    frac.min(n / 2).max(k)
}

/// Cut interval honouring the alpha-fraction and minimum leaf size.
pub fn feasible_range(n: usize, alpha: f64, k: usize) -> Result<CutRange> {
    if n < 2 * k || n < 2 {
        return Err(Error::InvalidConfig(format!(
            "node with {n} I-samples cannot be split with k = {k}"
        )));
    }
    let m = min_child_size(n, alpha, k);
    Ok(CutRange {
        lo: m,
        hi: n - m,
        n,
        min_child: m,
    })
}

/// A chosen split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    pub direction: usize,
    pub threshold: f64,
    pub left_i_count: usize,
    pub right_i_count: usize,
    /// Sum of child SSEs over the J-samples; 0 when there were none.
    pub criterion_value: f64,
    /// No J-samples reached the node, so the I-median cut was used.
    pub j_fallback: bool,
}

/// Relative tolerance under which two criterion values count as tied.
pub const TIE_RTOL: f64 = 1e-12;

/// Distance of a cut from the I-median, doubled to stay integral.
#[inline]
fn median_distance(c: usize, n: usize) -> usize {
    (2 * c).abs_diff(n)
}

/// Finds the cut minimizing the two-child SSE of the J-responses.
///
/// `sorted_i` holds the node's I-sample coordinates in `direction`, sorted.
/// `j_rows` are `(coordinate, response)` pairs of the node's J-samples.
/// Returns `None` when no admissible cut separates distinct I-values.
/// Among cuts whose criterion is within `TIE_RTOL` of the node's total SSE
/// of the minimum, the one closest to the I-median wins, then the smaller.
pub fn best_split(
    direction: usize,
    sorted_i: &[f64],
    j_rows: &[(f64, f64)],
    range: CutRange,
) -> Option<SplitDecision> {
    let n = sorted_i.len();
    debug_assert_eq!(n, range.n);
    let cuts: Vec<usize> = (range.lo..=range.hi)
        .filter(|&c| c > 0 && c < n && sorted_i[c - 1] < sorted_i[c])
        .collect();
    if cuts.is_empty() {
        return None;
    }
    let threshold = |c: usize| 0.5 * (sorted_i[c - 1] + sorted_i[c]);
    let decision = |c: usize, crit: f64, j_fallback: bool| SplitDecision {
        direction,
        threshold: threshold(c),
        left_i_count: c,
        right_i_count: n - c,
        criterion_value: crit,
        j_fallback,
    };

    if j_rows.is_empty() {
        let c = *cuts
            .iter()
            .min_by_key(|&&c| (median_distance(c, n), c))
            .expect("nonempty");
        return Some(decision(c, 0.0, true));
    }

    let mut j: Vec<(f64, f64)> = j_rows.to_vec();
    j.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mean = j.iter().map(|p| p.1).sum::<f64>() / j.len() as f64;
    // Prefix sums of centered responses.
    let mut s1 = Vec::with_capacity(j.len() + 1);
    let mut s2 = Vec::with_capacity(j.len() + 1);
    s1.push(0.0);
    s2.push(0.0);
    for &(_, r) in &j {
        let c = r - mean;
        s1.push(s1.last().unwrap() + c);
        s2.push(s2.last().unwrap() + c * c);
    }
    let total_n = j.len();
    let sse = |lo: usize, hi: usize| -> f64 {
        let m = hi - lo;
        if m == 0 {
            return 0.0;
        }
        let a = s1[hi] - s1[lo];
        let v = (s2[hi] - s2[lo]) - a * a / m as f64;
        v.max(0.0)
    };
    let total = sse(0, total_n);

    let mut crits = Vec::with_capacity(cuts.len());
    let mut left = 0usize;
    for &c in &cuts {
        let t = threshold(c);
        while left < total_n && j[left].0 <= t {
            left += 1;
        }
        crits.push(sse(0, left) + sse(left, total_n));
    }
    let best = crits.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = TIE_RTOL * total;
    let (c, crit) = cuts
        .iter()
        .zip(&crits)
        .filter(|(_, &v)| v <= best + tol)
        .min_by_key(|(&c, _)| (median_distance(c, n), c))
        .map(|(&c, &v)| (c, v))
        .expect("nonempty");
    Some(decision(c, crit, false))
}
