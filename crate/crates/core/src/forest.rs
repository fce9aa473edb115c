//! Ensembles of honest balanced trees: fitting, prediction, explicit forest
//! weights and leaf-diameter diagnostics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::basis::{BasisLadder, PolyBasis};
use crate::data::{Dataset, ForestConfig};
use crate::error::{Error, Result};
use crate::rng::derive_stream;
use crate::tree::{check_query, grow_tree, honest_split, NodeKind, Tree};

/// Schema tag written at the head of every serialized forest.
pub const FOREST_SCHEMA: &str = "asbf-forest/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    cfg: ForestConfig,
    ladder: BasisLadder,
    n: usize,
    d: usize,
}

impl Forest {
    /// Grows `cfg.b_trees` trees; tree `b` draws its honest partition and
    /// all of its randomness from `derive_stream(cfg.seed, b)`.
    pub fn fit(data: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
        cfg.validate_for(data.n(), data.d())?;
        let ladder = BasisLadder::new(data.d(), cfg.q);
        let trees = (0..cfg.b_trees)
            .into_par_iter()
            .map(|b| {
                let mut rng = derive_stream(cfg.seed, b as u64);
                let part = honest_split(data.n(), cfg.w, &mut rng);
                grow_tree(data, &part, cfg, &ladder, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest {
            trees,
            cfg: cfg.clone(),
            ladder,
            n: data.n(),
            d: data.d(),
        })
    }

    /// Assembles a forest from already grown trees.
    pub fn from_trees(trees: Vec<Tree>, cfg: ForestConfig, n: usize, d: usize) -> Result<Forest> {
        if trees.is_empty() {
            return Err(Error::InvalidConfig("a forest needs at least one tree".into()));
        }
        if let Some(t) = trees.iter().find(|t| t.root().lo.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: t.root().lo.len(),
            });
        }
        Ok(Forest {
            ladder: BasisLadder::new(d, cfg.q),
            trees,
            cfg,
            n,
            d,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.cfg
    }

    pub fn ladder(&self) -> &BasisLadder {
        &self.ladder
    }

    pub fn basis(&self) -> &PolyBasis {
        self.ladder.top()
    }

    /// Number of training rows the forest was fitted on.
    pub fn n_train(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Mean of the tree predictions at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_query(x, self.d)?;
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| match &t.nodes[t.leaf_index(x)].kind {
                NodeKind::Leaf(leaf) => leaf.model.predict(x, &self.ladder),
                NodeKind::Internal { .. } => unreachable!(),
            })
            .sum();
        sum / self.trees.len() as f64
    }

    /// Predictions for row-major query points, computed in parallel.
    pub fn predict_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if xs.len() % self.d != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: xs.len() % self.d,
            });
        }
        for x in xs.chunks_exact(self.d) {
            check_query(x, self.d)?;
        }
        Ok(xs
            .par_chunks_exact(self.d)
            .map(|x| self.predict_unchecked(x))
            .collect())
    }

    /// Forest weights at `x`: for each tree, `1/|leaf|` on the I-members of
    /// the leaf containing `x`, and their average over trees.
    pub fn weights_at(&self, x: &[f64]) -> Result<WeightVector> {
        check_query(x, self.d)?;
        let mut average = vec![0.0; self.n];
        let inv_b = 1.0 / self.trees.len() as f64;
        let per_tree = self
            .trees
            .iter()
            .map(|t| {
                let leaf = t.nodes[t.leaf_index(x)].leaf().expect("leaf");
                let weight = 1.0 / leaf.members.len() as f64;
                for &m in &leaf.members {
                    average[m as usize] += weight * inv_b;
                }
                TreeWeights {
                    members: leaf.members.clone(),
                    weight,
                }
            })
            .collect();
        Ok(WeightVector { per_tree, average })
    }

    /// Side lengths and diagonals of every leaf box, with summaries.
    pub fn diameter_report(&self) -> DiameterReport {
        let mut leaves = Vec::new();
        let mut per_tree = Vec::with_capacity(self.trees.len());
        for (b, t) in self.trees.iter().enumerate() {
            let start = leaves.len();
            for node in t.leaves() {
                let sides: Vec<f64> = node.lo.iter().zip(&node.hi).map(|(a, c)| c - a).collect();
                let diam2: f64 = sides.iter().map(|s| s * s).sum();
                leaves.push(LeafDiameter {
                    tree: b,
                    i_count: node.i_count,
                    diam: diam2.sqrt(),
                    diam2,
                    sides,
                });
            }
            per_tree.push(DiameterStats::of(&leaves[start..]));
        }
        let pooled = DiameterStats::of(&leaves);
        // Each tree's leaves tile the cube, so the pooled volume-weighted
        // figures are the tree averages of the per-tree ones.
        let b = per_tree.len() as f64;
        let pooled = DiameterStats {
            volume_mean_diam: per_tree.iter().map(|s| s.volume_mean_diam).sum::<f64>() / b,
            volume_mean_diam2: per_tree.iter().map(|s| s.volume_mean_diam2).sum::<f64>() / b,
            ..pooled
        };
        DiameterReport {
            n: self.n,
            k: self.cfg.k,
            alpha: self.cfg.alpha,
            d: self.d,
            leaves,
            per_tree,
            pooled,
        }
    }

    /// Counts used by the fit report.
    pub fn summary(&self) -> FitSummary {
        let mut s = FitSummary::default();
        let mut kappas = Vec::new();
        for t in &self.trees {
            for node in &t.nodes {
                match &node.kind {
                    NodeKind::Internal { j_fallback, .. } => s.j_fallback_splits += *j_fallback as usize,
                    NodeKind::Leaf(leaf) => {
                        s.leaves += 1;
                        *s.leaf_size_histogram.entry(leaf.members.len()).or_default() += 1;
                        s.degenerate_leaves += leaf.flags.degenerate as usize;
                        s.singular_fallback_leaves += leaf.model.singular_fallback() as usize;
                        if let Some(k) = leaf.model.kappa() {
                            if k.singular {
                                s.singular_kappa_leaves += 1;
                            } else {
                                kappas.push(k.value);
                            }
                        }
                    }
                }
            }
        }
        s.trees = self.trees.len();
        if !kappas.is_empty() {
            kappas.sort_by(f64::total_cmp);
            s.kappa_median = Some(kappas[kappas.len() / 2]);
            s.kappa_max = kappas.last().copied();
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Forest> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Weights a single tree puts on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeWeights {
    pub members: Vec<u32>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub per_tree: Vec<TreeWeights>,
    /// Dense forest weights indexed by training row.
    pub average: Vec<f64>,
}

impl WeightVector {
    /// `sum_i w_i y_i` under the averaged weights.
    pub fn apply(&self, y: &[f64]) -> f64 {
        self.average.iter().zip(y).map(|(w, v)| w * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafDiameter {
    pub tree: usize,
    pub i_count: usize,
    pub sides: Vec<f64>,
    pub diam: f64,
    pub diam2: f64,
}

/// Leaf-averaged and volume-weighted (the leaf containing a uniform random
/// point) moments of the leaf diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterStats {
    pub leaves: usize,
    pub mean_diam: f64,
    pub max_diam: f64,
    pub mean_diam2: f64,
    pub max_diam2: f64,
    pub volume_mean_diam: f64,
    pub volume_mean_diam2: f64,
}

impl DiameterStats {
    fn of(leaves: &[LeafDiameter]) -> Self {
        let n = leaves.len() as f64;
        let mut s = DiameterStats {
            leaves: leaves.len(),
            mean_diam: 0.0,
            max_diam: 0.0,
            mean_diam2: 0.0,
            max_diam2: 0.0,
            volume_mean_diam: 0.0,
            volume_mean_diam2: 0.0,
        };
        for l in leaves {
            let vol: f64 = l.sides.iter().product();
            s.mean_diam += l.diam / n;
            s.mean_diam2 += l.diam2 / n;
            s.max_diam = s.max_diam.max(l.diam);
            s.max_diam2 = s.max_diam2.max(l.diam2);
            s.volume_mean_diam += vol * l.diam;
            s.volume_mean_diam2 += vol * l.diam2;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterReport {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub d: usize,
    pub leaves: Vec<LeafDiameter>,
    pub per_tree: Vec<DiameterStats>,
    pub pooled: DiameterStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub trees: usize,
    pub leaves: usize,
    pub leaf_size_histogram: BTreeMap<usize, usize>,
    pub degenerate_leaves: usize,
    pub singular_fallback_leaves: usize,
    pub singular_kappa_leaves: usize,
    pub j_fallback_splits: usize,
    pub kappa_median: Option<f64>,
    pub kappa_max: Option<f64>,
}

#[derive(Serialize)]
struct ForestOut<'a> {
    schema: &'static str,
    config: &'a ForestConfig,
    seed: u64,
    basis: &'a PolyBasis,
    n: usize,
    d: usize,
    trees: &'a [Tree],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestIn {
    schema: String,
    config: ForestConfig,
    seed: u64,
    basis: PolyBasis,
    n: usize,
    d: usize,
    trees: Vec<Tree>,
}

impl Serialize for Forest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ForestOut {
            schema: FOREST_SCHEMA,
            config: &self.cfg,
            seed: self.cfg.seed,
            basis: self.ladder.top(),
            n: self.n,
            d: self.d,
            trees: &self.trees,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Forest {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = ForestIn::deserialize(de)?;
        if f.schema != FOREST_SCHEMA {
            return Err(D::Error::custom(format!("unsupported forest schema {:?}", f.schema)));
        }
        if f.seed != f.config.seed || f.basis.d() != f.d || f.basis.q() != f.config.q {
            return Err(D::Error::custom("forest header is inconsistent"));
        }
        Forest::from_trees(f.trees, f.config, f.n, f.d).map_err(D::Error::custom)
    }
}
