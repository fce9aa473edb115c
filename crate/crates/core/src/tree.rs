//! Honest sample partition, growth of one balanced tree, and single-tree
//! prediction.

use serde::{Deserialize, Serialize};

use crate::basis::BasisLadder;
use crate::data::{honest_size, Dataset, DirectionRule, ForestConfig};
use crate::error::{Error, Result};
pub use crate::leaf::{fit_leaf_model, LeafModel};
use crate::leaf::{fit_with_fallback, LocalFrame};
use crate::rng::RngStream;
use crate::split::{
    advance_schedule, best_split, build_mtry_schedule, fallback_order, feasible_range,
    pick_balanced_direction, ChildSchedules, DirectionCounts, MtrySchedule, SplitDecision,
};

/// Disjoint I (leaf estimation) and J (split selection) index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HonestPartition {
    pub i_idx: Vec<usize>,
    pub j_idx: Vec<usize>,
}

/// Draws a uniform subset of size `floor(w n)` as the I-sample.
pub fn honest_split(n: usize, w: f64, rng: &mut RngStream) -> HonestPartition {
    let m = honest_size(n, w);
    let perm = rng.permutation(n);
    let mut i_idx = perm[..m].to_vec();
    let mut j_idx = perm[m..].to_vec();
    i_idx.sort_unstable();
    j_idx.sort_unstable();
    HonestPartition { i_idx, j_idx }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LeafFlags {
    /// No admissible cut existed in any direction although the node was
    /// large enough to split.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Indices of the I-sample rows in this leaf.
    pub members: Vec<u32>,
    pub model: LeafModel,
    #[serde(default)]
    pub flags: LeafFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Internal {
        direction: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Candidate directions offered to this split.
        candidates: Vec<usize>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        j_fallback: bool,
        /// The scheduled candidates were all degenerate and another
        /// direction was used.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        off_schedule: bool,
    },
    Leaf(Leaf),
}

/// One node of a tree stored in a flat arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub depth: u32,
    /// Splits per direction on the path from the root to this node.
    pub counts: DirectionCounts,
    pub i_count: usize,
    /// Node box: a point `x` is inside when `lo_j < x_j <= hi_j` for every
    /// coordinate, with `lo_j = 0` read as inclusive.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn leaf(&self) -> Option<&Leaf> {
        match &self.kind {
            NodeKind::Leaf(l) => Some(l),
            NodeKind::Internal { .. } => None,
        }
    }

    pub fn box_contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| (v > lo || (lo == 0.0 && v >= 0.0)) && v <= hi)
    }
}

/// A grown tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.leaf().is_some())
    }

    /// Arena index of the leaf containing `x`, which must lie in `[0,1]^d`.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id].kind {
                NodeKind::Internal {
                    direction,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if x[*direction] <= *threshold { *left } else { *right },
                NodeKind::Leaf(_) => return id,
            }
        }
    }

    /// Root-to-node index paths for every leaf.
    pub fn leaf_paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![vec![0usize]];
        while let Some(path) = stack.pop() {
            let id = *path.last().unwrap();
            match &self.nodes[id].kind {
                NodeKind::Internal { left, right, .. } => {
                    for child in [*right, *left] {
                        let mut p = path.clone();
                        p.push(child);
                        stack.push(p);
                    }
                }
                NodeKind::Leaf(_) => out.push(path),
            }
        }
        out
    }

    /// The honest partition recovered from leaf membership.
    pub fn partition(&self, n: usize) -> HonestPartition {
        let mut in_i = vec![false; n];
        for leaf in self.leaves().filter_map(TreeNode::leaf) {
            for &m in &leaf.members {
                in_i[m as usize] = true;
            }
        }
        HonestPartition {
            i_idx: (0..n).filter(|&i| in_i[i]).collect(),
            j_idx: (0..n).filter(|&i| !in_i[i]).collect(),
        }
    }
}

pub(crate) fn check_query(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    for (col, &value) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::QueryOutOfRange { col, value });
        }
    }
    Ok(())
}

/// The leaf whose box contains `x` (`<=` threshold goes left).
pub fn locate_leaf<'t>(tree: &'t Tree, x: &[f64]) -> Result<&'t Leaf> {
    check_query(x, tree.root().lo.len())?;
    Ok(tree.nodes[tree.leaf_index(x)].leaf().expect("leaf index"))
}

/// Single-tree prediction: the leaf mean, or the leaf polynomial at `x`.
pub fn tree_predict(tree: &Tree, x: &[f64], ladder: &BasisLadder) -> Result<f64> {
    Ok(locate_leaf(tree, x)?.model.predict(x, ladder))
}

struct Pending {
    id: usize,
    i_idx: Vec<usize>,
    j_idx: Vec<usize>,
    schedule: Option<MtrySchedule>,
}

/// Grows one tree on `part` following `cfg`.
pub fn grow_tree(
    data: &Dataset,
    part: &HonestPartition,
    cfg: &ForestConfig,
    ladder: &BasisLadder,
    rng: &mut RngStream,
) -> Result<Tree> {
    let d = data.d();
    cfg.validate_for(data.n(), d)?;
    if part.i_idx.len() < cfg.k {
        return Err(Error::Infeasible(format!(
            "I-sample of size {} is smaller than k = {}",
            part.i_idx.len(),
            cfg.k
        )));
    }
    let use_schedule = cfg.mtry > 1;
    let mut nodes = vec![TreeNode {
        depth: 0,
        counts: DirectionCounts::zeros(d),
        i_count: part.i_idx.len(),
        lo: vec![0.0; d],
        hi: vec![1.0; d],
        kind: NodeKind::Leaf(placeholder_leaf()),
    }];
    let mut stack = vec![Pending {
        id: 0,
        i_idx: part.i_idx.clone(),
        j_idx: part.j_idx.clone(),
        schedule: use_schedule.then(|| build_mtry_schedule(d, cfg.mtry, rng)),
    }];

    while let Some(p) = stack.pop() {
        let n_i = p.i_idx.len();
        if n_i < 2 * cfg.k {
            nodes[p.id].kind = NodeKind::Leaf(make_leaf(data, &p.i_idx, cfg.q, ladder, false));
            continue;
        }
        let range = feasible_range(n_i, cfg.alpha, cfg.k)?;
        let responses = criterion_responses(data, &p.j_idx, cfg.q, ladder);
        let j_rows = |dir: usize| -> Vec<(f64, f64)> {
            p.j_idx
                .iter()
                .zip(&responses)
                .map(|(&i, &r)| (data.value(i, dir), r))
                .collect()
        };
        let try_direction = |dir: usize| -> Option<SplitDecision> {
            let mut vals: Vec<f64> = p.i_idx.iter().map(|&i| data.value(i, dir)).collect();
            vals.sort_by(f64::total_cmp);
            best_split(dir, &vals, &j_rows(dir), range)
        };

        let counts = nodes[p.id].counts.clone();
        let mut child_sched: Option<(MtrySchedule, MtrySchedule)> = None;
        let mut off_schedule = false;
        let (candidates, mut decision) = if let Some(sched) = p.schedule {
            let (set, next) = advance_schedule(sched, rng);
            child_sched = Some(match next {
                ChildSchedules::Shared(s) => (s.clone(), s),
                ChildSchedules::Fresh(l, r) => (l, r),
            });
            let best = set
                .iter()
                .filter_map(|&dir| try_direction(dir))
                .fold(None::<SplitDecision>, |acc, s| match acc {
                    Some(a) if a.criterion_value <= s.criterion_value => Some(a),
                    _ => Some(s),
                });
            (set, best)
        } else {
            let first = match cfg.direction_rule {
                DirectionRule::Balanced => pick_balanced_direction(&counts, rng),
                DirectionRule::Random => rng.below(d),
            };
            (vec![first], try_direction(first))
        };
        if decision.is_none() {
            let order = match cfg.direction_rule {
                DirectionRule::Balanced => fallback_order(&counts, &candidates, rng),
                DirectionRule::Random => {
                    let mut rest: Vec<usize> =
                        (0..d).filter(|j| !candidates.contains(j)).collect();
                    rng.shuffle(&mut rest);
                    rest
                }
            };
            decision = order.into_iter().find_map(try_direction);
            off_schedule = decision.is_some();
        }
        let Some(split) = decision else {
            nodes[p.id].kind = NodeKind::Leaf(make_leaf(data, &p.i_idx, cfg.q, ladder, true));
            continue;
        };

        let dir = split.direction;
        let goes_left = |i: usize| data.value(i, dir) <= split.threshold;
        let (li, ri): (Vec<usize>, Vec<usize>) = p.i_idx.iter().partition(|&&i| goes_left(i));
        let (lj, rj): (Vec<usize>, Vec<usize>) = p.j_idx.iter().partition(|&&i| goes_left(i));
        debug_assert_eq!(li.len(), split.left_i_count);

        let parent = &nodes[p.id];
        let child_counts = parent.counts.incremented(dir);
        let depth = parent.depth + 1;
        let mut left_hi = parent.hi.clone();
        left_hi[dir] = split.threshold;
        let mut right_lo = parent.lo.clone();
        right_lo[dir] = split.threshold;
        let left_node = TreeNode {
            depth,
            counts: child_counts.clone(),
            i_count: li.len(),
            lo: parent.lo.clone(),
            hi: left_hi,
            kind: NodeKind::Leaf(placeholder_leaf()),
        };
        let right_node = TreeNode {
            depth,
            counts: child_counts,
            i_count: ri.len(),
            lo: right_lo,
            hi: parent.hi.clone(),
            kind: NodeKind::Leaf(placeholder_leaf()),
        };
        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes.push(left_node);
        nodes.push(right_node);
        nodes[p.id].kind = NodeKind::Internal {
            direction: dir,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
            candidates,
            j_fallback: split.j_fallback,
            off_schedule,
        };
        let (ls, rs) = match child_sched {
            Some((l, r)) => (Some(l), Some(r)),
            None => (None, None),
        };
        // Right first so the left subtree is grown (and draws) first.
        stack.push(Pending {
            id: right_id,
            i_idx: ri,
            j_idx: rj,
            schedule: rs,
        });
        stack.push(Pending {
            id: left_id,
            i_idx: li,
            j_idx: lj,
            schedule: ls,
        });
    }
    Ok(Tree { nodes })
}

fn placeholder_leaf() -> Leaf {
    Leaf {
        members: Vec::new(),
        model: LeafModel::Mean {
            mean: 0.0,
            singular_fallback: false,
        },
        flags: LeafFlags::default(),
    }
}

fn make_leaf(
    data: &Dataset,
    members: &[usize],
    q: usize,
    ladder: &BasisLadder,
    degenerate: bool,
) -> Leaf {
    let mut rows = Vec::with_capacity(members.len() * data.d());
    for &i in members {
        rows.extend_from_slice(data.row(i));
    }
    let y: Vec<f64> = members.iter().map(|&i| data.y()[i]).collect();
    Leaf {
        members: members.iter().map(|&i| i as u32).collect(),
        model: fit_leaf_model(&rows, &y, q, ladder),
        flags: LeafFlags { degenerate },
    }
}

/// Split-criterion responses for the node's J-samples: raw responses when
/// `q = 0`, otherwise residuals of a degree-`q` fit on the same J-samples
/// (falling back in order when rank deficient).
fn criterion_responses(data: &Dataset, j_idx: &[usize], q: usize, ladder: &BasisLadder) -> Vec<f64> {
    let y: Vec<f64> = j_idx.iter().map(|&i| data.y()[i]).collect();
    if q == 0 || y.is_empty() {
        return y;
    }
    let d = data.d();
    let mut rows = Vec::with_capacity(j_idx.len() * d);
    for &i in j_idx {
        rows.extend_from_slice(data.row(i));
    }
    let frame = LocalFrame::of_points(&rows, d);
    match fit_with_fallback(&rows, &y, &frame, ladder, q) {
        Some((order, beta)) => {
            let basis = ladder.get(order);
            let mut u = vec![0.0; d];
            rows.chunks_exact(d)
                .zip(&y)
                .map(|(r, &yi)| {
                    frame.map(r, &mut u);
                    yi - basis.dot(&u, &beta)
                })
                .collect()
        }
        None => {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            y.iter().map(|v| v - mean).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn uniform_data(n: usize, d: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Dataset {
        let mut s = derive_stream(seed, 99);
        let x: Vec<f64> = (0..n * d).map(|_| s.uniform()).collect();
        let y = x.chunks(d).map(&f).collect();
        Dataset::new(x, d, y, None).unwrap()
    }

    fn cfg(k: usize, alpha: f64, w: f64, q: usize, mtry: usize) -> ForestConfig {
        ForestConfig {
            b_trees: 1,
            alpha,
            w,
            k,
            mtry,
            q,
            seed: 0,
            direction_rule: DirectionRule::Balanced,
        }
    }

    fn grow(data: &Dataset, c: &ForestConfig, seed: u64) -> Tree {
        let ladder = BasisLadder::new(data.d(), c.q);
        let mut rng = derive_stream(seed, 0);
        let part = honest_split(data.n(), c.w, &mut rng);
        grow_tree(data, &part, c, &ladder, &mut rng).unwrap()
    }

    #[test]
    fn honest_split_sizes() {
        let mut rng = derive_stream(0, 0);
        let p = honest_split(10, 0.5, &mut rng);
        assert_eq!((p.i_idx.len(), p.j_idx.len()), (5, 5));
        let mut all: Vec<usize> = p.i_idx.iter().chain(&p.j_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let p = honest_split(10, 1.0, &mut rng);
        assert!(p.j_idx.is_empty());
        assert_eq!(honest_split(7, 0.5, &mut rng).i_idx.len(), 3);
    }

    #[test]
    fn median_split_with_empty_j() {
        // N = 4k, w = 1, d = 1: one median split into two leaves of 2k.
        let k = 3;
        let x: Vec<f64> = (0..4 * k).map(|i| (i as f64 + 0.5) / (4 * k) as f64).collect();
        let y = x.clone();
        let data = Dataset::new(x, 1, y, None).unwrap();
        let c = ForestConfig { alpha: 0.25, ..cfg(k, 0.25, 1.0, 0, 1) };
        let t = grow(&data, &c, 1);
        let leaves: Vec<&Leaf> = t.leaves().filter_map(TreeNode::leaf).collect();
        // Each child of the root holds 2k = 6 >= 2k, so both split again:
        // with alpha = 0.25 and k = 3 the children need 3 each.
        assert_eq!(leaves.len(), 4);
        match &t.root().kind {
            NodeKind::Internal { threshold, j_fallback, .. } => {
                assert!(*j_fallback);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            _ => panic!("root must split"),
        }
        let c = cfg(2 * k, 0.5, 1.0, 0, 1);
        let t = grow(&data, &c, 1);
        let sizes: Vec<usize> = t.leaves().map(|n| n.i_count).collect();
        assert_eq!(sizes, vec![2 * k, 2 * k]);
    }

    #[test]
    fn leaf_window_and_balance() {
        let data = uniform_data(1500, 2, 4, |x| x[0] + x[1]);
        for alpha in [0.1, 0.3, 0.5] {
            let c = cfg(7, alpha, 0.5, 0, 1);
            let t = grow(&data, &c, 8);
            for leaf in t.leaves() {
                assert!(leaf.i_count >= 7 && leaf.i_count <= 13, "{}", leaf.i_count);
                assert!(leaf.counts.spread() <= 1);
            }
        }
    }

    #[test]
    fn single_leaf_tree() {
        let data = uniform_data(10, 2, 1, |x| x[0]);
        let t = grow(&data, &cfg(5, 0.5, 0.5, 0, 1), 0);
        assert_eq!(t.nodes.len(), 1);
        let ladder = BasisLadder::new(2, 0);
        let mean = t.root().leaf().unwrap().members.iter().map(|&i| data.y()[i as usize]).sum::<f64>() / 5.0;
        for x in [[0.0, 0.0], [1.0, 1.0], [0.3, 0.9]] {
            assert_eq!(tree_predict(&t, &x, &ladder).unwrap(), mean);
        }
    }

    #[test]
    fn boundary_goes_left() {
        let t = Tree {
            nodes: vec![
                TreeNode {
                    depth: 0,
                    counts: DirectionCounts(vec![0]),
                    i_count: 2,
                    lo: vec![0.0],
                    hi: vec![1.0],
                    kind: NodeKind::Internal {
                        direction: 0,
                        threshold: 0.5,
                        left: 1,
                        right: 2,
                        candidates: vec![0],
                        j_fallback: false,
                        off_schedule: false,
                    },
                },
                leaf_node(vec![0.0], vec![0.5], 1.0),
                leaf_node(vec![0.5], vec![1.0], 2.0),
            ],
        };
        let ladder = BasisLadder::new(1, 0);
        assert_eq!(tree_predict(&t, &[0.5], &ladder).unwrap(), 1.0);
        assert_eq!(tree_predict(&t, &[0.500001], &ladder).unwrap(), 2.0);
        assert!(t.nodes[1].box_contains(&[0.5]) && !t.nodes[2].box_contains(&[0.5]));
        assert!(matches!(
            tree_predict(&t, &[1.2], &ladder),
            Err(Error::QueryOutOfRange { col: 0, .. })
        ));
    }

    fn leaf_node(lo: Vec<f64>, hi: Vec<f64>, mean: f64) -> TreeNode {
        TreeNode {
            depth: 1,
            counts: DirectionCounts(vec![1]),
            i_count: 1,
            lo,
            hi,
            kind: NodeKind::Leaf(Leaf {
                members: vec![0],
                model: LeafModel::Mean { mean, singular_fallback: false },
                flags: LeafFlags::default(),
            }),
        }
    }

    #[test]
    fn leaf_boxes_tile_the_cube() {
        let data = uniform_data(800, 3, 2, |x| x[0] * x[1]);
        let t = grow(&data, &cfg(5, 0.2, 0.5, 0, 1), 3);
        let volume: f64 = t
            .leaves()
            .map(|n| n.lo.iter().zip(&n.hi).map(|(a, b)| b - a).product::<f64>())
            .sum();
        assert!((volume - 1.0).abs() < 1e-12);
        let mut s = derive_stream(3, 3);
        for _ in 0..10_000 {
            let x = [s.uniform(), s.uniform(), s.uniform()];
            let hits = t.leaves().filter(|n| n.box_contains(&x)).count();
            assert_eq!(hits, 1);
            assert!(t.nodes[t.leaf_index(&x)].box_contains(&x));
        }
    }

    #[test]
    fn mean_prediction_is_weighted_average() {
        let data = uniform_data(300, 2, 6, |x| (x[0] * 7.0).sin() + x[1]);
        let t = grow(&data, &cfg(4, 0.3, 0.5, 0, 1), 6);
        let ladder = BasisLadder::new(2, 0);
        let mut s = derive_stream(4, 4);
        for _ in 0..200 {
            let x = [s.uniform(), s.uniform()];
            let leaf = locate_leaf(&t, &x).unwrap();
            let w = 1.0 / leaf.members.len() as f64;
            let via_weights: f64 = leaf.members.iter().map(|&i| w * data.y()[i as usize]).sum();
            assert!((via_weights - tree_predict(&t, &x, &ladder).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn three_member_leaf_mean() {
        let ladder = BasisLadder::new(1, 0);
        let m = fit_leaf_model(&[0.1, 0.2, 0.3], &[0.0, 1.0, 1.0], 0, &ladder);
        assert!((m.predict(&[0.2], &ladder) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn linear_reproduction_q1() {
        let data = uniform_data(400, 2, 9, |x| 5.0 * x[0]);
        let t = grow(&data, &cfg(8, 0.3, 0.5, 1, 1), 9);
        let ladder = BasisLadder::new(2, 1);
        let mut s = derive_stream(1, 7);
        for _ in 0..500 {
            let x = [s.uniform(), s.uniform()];
            assert!((tree_predict(&t, &x, &ladder).unwrap() - 5.0 * x[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn honesty_j_responses_do_not_move_leaves() {
        // Freeze the structure, then permute J responses and refit leaves.
        let data = uniform_data(500, 2, 10, |x| x[0] - x[1]);
        let c = cfg(5, 0.3, 0.5, 1, 1);
        let t = grow(&data, &c, 10);
        let part = t.partition(data.n());
        let mut y = data.y().to_vec();
        let mut s = derive_stream(2, 2);
        let mut jy: Vec<f64> = part.j_idx.iter().map(|&i| y[i]).collect();
        s.shuffle(&mut jy);
        for (&i, v) in part.j_idx.iter().zip(jy) {
            y[i] = v;
        }
        let permuted = data.with_response(y).unwrap();
        let ladder = BasisLadder::new(2, 1);
        for node in t.leaves() {
            let leaf = node.leaf().unwrap();
            let members: Vec<usize> = leaf.members.iter().map(|&m| m as usize).collect();
            let refit = make_leaf(&permuted, &members, 1, &ladder, false);
            assert_eq!(refit.model, leaf.model);
        }
    }

    #[test]
    fn schedule_rounds_use_each_set_once() {
        let data = uniform_data(2000, 5, 12, |x| x[0] + x[1] * x[2]);
        let c = cfg(5, 0.2, 0.5, 0, 3);
        let t = grow(&data, &c, 12);
        for path in t.leaf_paths() {
            let sets: Vec<Vec<usize>> = path
                .iter()
                .filter_map(|&id| match &t.nodes[id].kind {
                    NodeKind::Internal { candidates, .. } => Some(candidates.clone()),
                    _ => None,
                })
                .collect();
            for round in sets.chunks(5).filter(|r| r.len() == 5) {
                let mut count = [0usize; 5];
                for set in round {
                    for &j in set {
                        count[j] += 1;
                    }
                }
                assert_eq!(count, [3; 5]);
            }
        }
    }

    #[test]
    fn q0_residual_criterion_matches_raw() {
        // For q = 0 the residual criterion is the raw one shifted by the
        // node mean, so splits coincide.
        let data = uniform_data(300, 2, 13, |x| (x[0] * 5.0).cos() + x[1] * x[1]);
        let ladder = BasisLadder::new(2, 0);
        let idx: Vec<usize> = (0..150).collect();
        let raw = criterion_responses(&data, &idx, 0, &ladder);
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let i_vals = {
            let mut v: Vec<f64> = (150..300).map(|i| data.value(i, 0)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let range = feasible_range(150, 0.2, 3).unwrap();
        let a: Vec<(f64, f64)> = idx.iter().zip(&raw).map(|(&i, &r)| (data.value(i, 0), r)).collect();
        let b: Vec<(f64, f64)> = idx.iter().zip(&centered).map(|(&i, &r)| (data.value(i, 0), r)).collect();
        let sa = best_split(0, &i_vals, &a, range).unwrap();
        let sb = best_split(0, &i_vals, &b, range).unwrap();
        assert_eq!(sa.left_i_count, sb.left_i_count);
        assert!((sa.criterion_value - sb.criterion_value).abs() < 1e-9);
    }

    #[test]
    fn infeasible_k_rejected() {
        let data = uniform_data(100, 2, 1, |x| x[0]);
        let c = cfg(60, 0.5, 0.5, 0, 1);
        let ladder = BasisLadder::new(2, 0);
        let mut rng = derive_stream(0, 0);
        let part = honest_split(100, 0.5, &mut rng);
        let err = grow_tree(&data, &part, &c, &ladder, &mut rng).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
