#![allow(dead_code)]

use asbf::data::honest_size;
use asbf::rng::derive_stream;
use asbf::tree::NodeKind;
use asbf::{Dataset, DirectionRule, Forest, ForestConfig, Tree};

/// Uniform covariates on the unit cube with a smooth response.
pub fn uniform_data(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = derive_stream(seed, 0xDA7A);
    let x: Vec<f64> = (0..n * d).map(|_| rng.uniform()).collect();
    let y = x
        .chunks(d)
        .map(|r| r.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v).sum::<f64>() + rng.uniform() - 0.5)
        .collect();
    Dataset::new(x, d, y, None).unwrap()
}

/// Smallest admissible child of a node holding `n` I-samples, computed from
/// first principles: at least `k`, and at least `alpha n` rounded up unless
/// that is impossible for both children at once.
fn min_child(n: usize, alpha: f64, k: usize) -> usize {
    let frac = (alpha * n as f64 - 1e-9).ceil() as usize;
    let frac = if 2 * frac > n { n / 2 } else { frac };
    frac.max(k)
}

/// Checks the structural guarantees of one tree. Returns a description of
/// the first violation.
pub fn check_tree(tree: &Tree, data: &Dataset, cfg: &ForestConfig) -> Result<(), String> {
    let d = data.d();
    let n = data.n();
    let part = tree.partition(n);
    let n_i = honest_size(n, cfg.w);
    if part.i_idx.len() != n_i {
        return Err(format!("I-sample has {} rows, expected {n_i}", part.i_idx.len()));
    }
    if tree.root().i_count != n_i {
        return Err("root I-count differs from I-sample size".into());
    }

    // alpha-fraction and child sizes
    for (id, node) in tree.nodes.iter().enumerate() {
        if let NodeKind::Internal { left, right, .. } = node.kind {
            let (l, r) = (tree.nodes[left].i_count, tree.nodes[right].i_count);
            if l + r != node.i_count {
                return Err(format!("node {id}: children hold {l} + {r} != {}", node.i_count));
            }
            let m = min_child(node.i_count, cfg.alpha, cfg.k);
            if l < m || r < m {
                return Err(format!("node {id}: children {l}/{r} below minimum {m}"));
            }
        }
    }

    // leaf window and membership
    let mut seen = vec![0u32; n];
    for node in tree.leaves() {
        let leaf = node.leaf().unwrap();
        if leaf.members.len() != node.i_count {
            return Err("leaf member list disagrees with its I-count".into());
        }
        if !leaf.flags.degenerate && (node.i_count < cfg.k || node.i_count > 2 * cfg.k - 1) {
            return Err(format!("leaf with {} I-samples outside [{}, {}]", node.i_count, cfg.k, 2 * cfg.k - 1));
        }
        for &m in &leaf.members {
            seen[m as usize] += 1;
            if !node.box_contains(data.row(m as usize)) {
                return Err(format!("member {m} lies outside its leaf box"));
            }
        }
    }
    if part.i_idx.iter().any(|&i| seen[i] != 1) {
        return Err("an I-sample row is not in exactly one leaf".into());
    }

    // tiling: volumes add to one and the boxes are disjoint, which for
    // axis-aligned boxes with unit total volume inside the cube also means
    // they cover it
    let vol: f64 = tree
        .leaves()
        .map(|l| l.lo.iter().zip(&l.hi).map(|(a, b)| b - a).product::<f64>())
        .sum();
    if (vol - 1.0).abs() > 1e-9 {
        return Err(format!("leaf volumes sum to {vol}"));
    }
    let leaves: Vec<_> = tree.leaves().collect();
    for (a, la) in leaves.iter().enumerate() {
        for lb in &leaves[a + 1..] {
            let overlap = (0..d).all(|j| la.lo[j].max(lb.lo[j]) < la.hi[j].min(lb.hi[j]));
            if overlap {
                return Err("two leaf boxes overlap".into());
            }
        }
    }

    // balance along every path
    for path in tree.leaf_paths() {
        let splits: Vec<(usize, &[usize], bool)> = path
            .iter()
            .filter_map(|&id| match &tree.nodes[id].kind {
                NodeKind::Internal {
                    direction,
                    candidates,
                    off_schedule,
                    ..
                } => Some((*direction, candidates.as_slice(), *off_schedule)),
                NodeKind::Leaf(_) => None,
            })
            .collect();
        let leaf = &tree.nodes[*path.last().unwrap()];
        let mut counts = vec![0u32; d];
        for s in &splits {
            counts[s.0] += 1;
        }
        if counts != leaf.counts.0 {
            return Err("stored direction counts disagree with the path".into());
        }
        if splits.iter().any(|s| s.2) {
            continue;
        }
        if cfg.mtry == 1 && cfg.direction_rule == DirectionRule::Balanced {
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            if spread > 1 {
                return Err(format!("path direction counts {counts:?} spread by {spread}"));
            }
            for prefix in 1..=splits.len() {
                let mut c = vec![0u32; d];
                for s in &splits[..prefix] {
                    c[s.0] += 1;
                }
                if c.iter().max().unwrap() - c.iter().min().unwrap() > 1 {
                    return Err(format!("prefix counts {c:?} unbalanced"));
                }
            }
        }
        if cfg.mtry > 1 {
            for round in splits.chunks_exact(d) {
                let mut offered = vec![0usize; d];
                for s in round {
                    if s.1.len() != cfg.mtry || !s.1.contains(&s.0) {
                        return Err(format!("candidate set {:?} for direction {}", s.1, s.0));
                    }
                    for &j in s.1 {
                        offered[j] += 1;
                    }
                }
                if offered.iter().any(|&c| c != cfg.mtry) {
                    return Err(format!("round offered directions {offered:?} times"));
                }
            }
        }
    }
    Ok(())
}

/// Forest weights at `x` are non-negative and sum to one, per tree and
/// averaged.
pub fn check_weights(forest: &Forest, x: &[f64]) -> Result<(), String> {
    let w = forest.weights_at(x).map_err(|e| e.to_string())?;
    for t in &w.per_tree {
        let s = t.weight * t.members.len() as f64;
        if t.weight < 0.0 || (s - 1.0).abs() > 1e-12 {
            return Err(format!("tree weights sum to {s}"));
        }
    }
    let s: f64 = w.average.iter().sum();
    if w.average.iter().any(|&v| v < 0.0) || (s - 1.0).abs() > 1e-12 {
        return Err(format!("forest weights sum to {s}"));
    }
    Ok(())
}

/// Brute-force best cut: tries every admissible cut position, evaluates
/// both child sums of squares directly, and applies the median tie rule.
pub fn brute_force_split(sorted_i: &[f64], j: &[(f64, f64)], lo: usize, hi: usize) -> Option<(usize, f64, f64)> {
    let n = sorted_i.len();
    let sse = |v: &[f64]| -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|y| (y - m) * (y - m)).sum()
    };
    let total = sse(&j.iter().map(|p| p.1).collect::<Vec<_>>());
    let mut cands = Vec::new();
    for c in lo..=hi {
        if c == 0 || c >= n || sorted_i[c - 1] >= sorted_i[c] {
            continue;
        }
        let t = 0.5 * (sorted_i[c - 1] + sorted_i[c]);
        let left: Vec<f64> = j.iter().filter(|p| p.0 <= t).map(|p| p.1).collect();
        let right: Vec<f64> = j.iter().filter(|p| p.0 > t).map(|p| p.1).collect();
        cands.push((c, t, sse(&left) + sse(&right)));
    }
    let best = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    cands
        .into_iter()
        .filter(|c| c.2 <= best + 1e-12 * total)
        .min_by_key(|c| ((2 * c.0).abs_diff(n), c.0))
}
