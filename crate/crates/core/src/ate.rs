//! Cross-fitted AIPW estimation of the average treatment effect with forest
//! nuisances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, ForestConfig};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::rng::{derive_stream, sub_seed, tags, RngStream};

/// Assigns each of `n` rows to one of `k` folds; fold sizes differ by at most
/// one.
pub fn kfold(n: usize, k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!("{k} folds for {n} rows")));
    }
    let perm = rng.permutation(n);
    let mut fold = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

/// Doubly robust score
/// `mu1 - mu0 + a (y - mu1) / pi - (1 - a) (y - mu0) / (1 - pi)`.
/// A propensity outside `(0, 1)` is reported with row 0; callers that know
/// the row check the domain themselves.
pub fn aipw_score(y: f64, a: u8, mu1: f64, mu0: f64, pi: f64) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::PropensityDomain { row: 0, value: pi });
    }
    let ipw = if a == 1 {
        (y - mu1) / pi
    } else {
        -(y - mu0) / (1.0 - pi)
    };
    Ok(mu1 - mu0 + ipw)
}

/// Propensity diagnostics over the evaluation folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub eps: f64,
    pub min: f64,
    pub max: f64,
    /// Rows whose propensity lies outside `(eps, 1 - eps)`.
    pub flagged: Vec<usize>,
    /// Rows whose propensity was clipped (only under [`OverlapPolicy::Clip`]).
    #[serde(default)]
    pub clipped: usize,
}

impl OverlapReport {
    pub fn is_clean(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Flags every propensity outside `(eps, 1 - eps)`.
pub fn overlap_check(pi_hats: &[f64], eps: f64) -> OverlapReport {
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut flagged = Vec::new();
    for (i, &p) in pi_hats.iter().enumerate() {
        min = min.min(p);
        max = max.max(p);
        if !(p > eps && p < 1.0 - eps) {
            flagged.push(i);
        }
    }
    OverlapReport {
        eps,
        min,
        max,
        flagged,
        clipped: 0,
    }
}

/// What to do with propensities outside `(eps, 1 - eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "eps")]
pub enum OverlapPolicy {
    /// Report only. Propensities of exactly 0 or 1 still fail.
    #[default]
    Warn,
    /// Fail with [`Error::OverlapViolation`].
    Abort,
    /// Clip into `[eps, 1 - eps]` before scoring.
    Clip(f64),
}

/// Hyperparameter candidates searched by [`tune_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningGrid {
    pub alpha: Vec<f64>,
    pub k: Vec<usize>,
    pub mtry: Vec<usize>,
    pub q: Vec<usize>,
}

impl TuningGrid {
    /// `alpha` in {0.1, 0.25, 0.5}, `k` doubling from 5 up to a quarter of
    /// the honest sample, `mtry` in {1, ceil(d/3), d}, and the given orders.
    pub fn default_for(n_train: usize, d: usize, w: f64, q: Vec<usize>) -> Self {
        let cap = (crate::data::honest_size(n_train, w) / 4).max(5);
        let mut k = vec![5];
        while k.last().unwrap() * 2 <= cap && k.len() < 6 {
            k.push(k.last().unwrap() * 2);
        }
        let mut mtry = vec![1, d.div_ceil(3), d];
        mtry.dedup();
        TuningGrid {
            alpha: vec![0.1, 0.25, 0.5],
            k,
            mtry,
            q,
        }
    }

    pub fn singleton(cfg: &ForestConfig) -> Self {
        TuningGrid {
            alpha: vec![cfg.alpha],
            k: vec![cfg.k],
            mtry: vec![cfg.mtry],
            q: vec![cfg.q],
        }
    }

    /// Candidates in tie-break order: smaller k, larger alpha, smaller mtry,
    /// smaller q.
    pub fn candidates(&self, base: &ForestConfig) -> Vec<ForestConfig> {
        let mut k = self.k.clone();
        k.sort_unstable();
        k.dedup();
        let mut alpha = self.alpha.clone();
        alpha.sort_by(|a, b| b.total_cmp(a));
        alpha.dedup();
        let mut mtry = self.mtry.clone();
        mtry.sort_unstable();
        mtry.dedup();
        let mut q = self.q.clone();
        q.sort_unstable();
        q.dedup();
        let mut out = Vec::new();
        for &k in &k {
            for &alpha in &alpha {
                for &mtry in &mtry {
                    for &q in &q {
                        out.push(ForestConfig {
                            alpha,
                            k,
                            mtry,
                            q,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub config: ForestConfig,
    pub score: f64,
    /// Every feasible candidate with its validation loss.
    pub table: Vec<(ForestConfig, f64)>,
}

/// Picks the grid point with the smallest validation loss. The loss is the
/// mean squared error of the response, which for a 0/1 response is the
/// Brier score. Candidates that do not fit the training part are skipped.
pub fn tune_config(
    data: &Dataset,
    grid: &TuningGrid,
    base: &ForestConfig,
    val_fraction: f64,
) -> Result<TuneResult> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let candidates = grid.candidates(base);
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("tuning grid is empty".into()));
    }
    if candidates.len() == 1 {
        return Ok(TuneResult {
            config: candidates[0].clone(),
            score: f64::NAN,
            table: Vec::new(),
        });
    }
    let n = data.n();
    if n < 2 {
        return Err(Error::Infeasible(format!("cannot hold out validation rows from {n} rows")));
    }
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = derive_stream(base.seed, tags::VALIDATION_SPLIT);
    let perm = rng.permutation(n);
    let (val_idx, train_idx) = perm.split_at(n_val);
    let train = data.subset(train_idx);
    let val = data.subset(val_idx);
    // Losses within this of each other count as tied.
    let val_mean = val.y().iter().sum::<f64>() / val.n() as f64;
    let tie_tol = 1e-12
        * val.y().iter().map(|v| (v - val_mean) * (v - val_mean)).sum::<f64>()
        / val.n() as f64;
    let mut table = Vec::new();
    for cfg in candidates {
        if cfg.validate_for(train.n(), train.d()).is_err() {
            continue;
        }
        let forest = Forest::fit(&train, &cfg)?;
        let pred = forest.predict_many(val.x())?;
        let loss = pred
            .iter()
            .zip(val.y())
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / val.n() as f64;
        table.push((cfg, loss));
    }
    let best = table
        .iter()
        .fold(None::<&(ForestConfig, f64)>, |acc, cand| match acc {
            Some(b) if b.1 <= cand.1 + tie_tol => Some(b),
            _ => Some(cand),
        })
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no grid point fits a training part of {} rows",
                train.n()
            ))
        })?
        .clone();
    Ok(TuneResult {
        config: best.0,
        score: best.1,
        table,
    })
}

/// Which nuisance function a learner is asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceRole {
    Mu1,
    Mu0,
    Pi,
}

pub struct NuisanceFit {
    pub predictions: Vec<f64>,
    pub config: Option<ForestConfig>,
}

/// Fits one nuisance on `train` and predicts at the row-major points
/// `eval_x`. For `Mu1`/`Mu0` the training rows are the treated/control
/// rows and the response is the outcome; for `Pi` the response is the
/// treatment indicator. `eval_rows` are the dataset indices of `eval_x`.
pub trait NuisanceLearner: Sync {
    fn fit_predict(
        &self,
        role: NuisanceRole,
        train: &Dataset,
        eval_x: &[f64],
        eval_rows: &[usize],
        seed: u64,
    ) -> Result<NuisanceFit>;
}

/// How one nuisance forest is configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NuisanceSpec {
    Fixed {
        config: ForestConfig,
    },
    Tuned {
        base: ForestConfig,
        grid: TuningGrid,
        val_fraction: f64,
    },
}

impl NuisanceSpec {
    fn config(&self, data: &Dataset, seed: u64) -> Result<ForestConfig> {
        match self {
            NuisanceSpec::Fixed { config } => Ok(ForestConfig {
                seed,
                ..config.clone()
            }),
            NuisanceSpec::Tuned {
                base,
                grid,
                val_fraction,
            } => {
                let base = ForestConfig {
                    seed,
                    ..base.clone()
                };
                Ok(tune_config(data, grid, &base, *val_fraction)?.config)
            }
        }
    }
}

/// ASBF nuisances: one spec shared by both outcome regressions and one for
/// the propensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestLearner {
    pub mu: NuisanceSpec,
    pub pi: NuisanceSpec,
}

impl NuisanceLearner for ForestLearner {
    fn fit_predict(
        &self,
        role: NuisanceRole,
        train: &Dataset,
        eval_x: &[f64],
        _eval_rows: &[usize],
        seed: u64,
    ) -> Result<NuisanceFit> {
        let spec = match role {
            NuisanceRole::Pi => &self.pi,
            NuisanceRole::Mu1 | NuisanceRole::Mu0 => &self.mu,
        };
        let cfg = spec.config(train, seed)?;
        let forest = Forest::fit(train, &cfg)?;
        Ok(NuisanceFit {
            predictions: forest.predict_many(eval_x)?,
            config: Some(cfg),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AteConfig {
    pub folds: usize,
    /// Confidence level of the interval, e.g. 0.95.
    pub level: f64,
    pub overlap_eps: f64,
    pub overlap_policy: OverlapPolicy,
    pub seed: u64,
}

impl Default for AteConfig {
    fn default() -> Self {
        AteConfig {
            folds: 5,
            level: 0.95,
            overlap_eps: 0.01,
            overlap_policy: OverlapPolicy::Warn,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub size: usize,
    pub train_treated: usize,
    pub train_control: usize,
    pub score_mean: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub mu1_config: Option<ForestConfig>,
    pub mu0_config: Option<ForestConfig>,
    pub pi_config: Option<ForestConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub level: f64,
    pub z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub folds: Vec<FoldReport>,
    pub overlap: OverlapReport,
    /// Per-row scores and fold labels; `theta_hat` and `sigma_hat` are
    /// their mean and root centred second moment.
    pub scores: Vec<f64>,
    pub fold_of: Vec<usize>,
}

/// Two-sided normal quantile for a confidence `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Cross-fitted estimate with forest nuisances.
pub fn estimate_ate(data: &Dataset, cfg: &AteConfig, learner: &ForestLearner) -> Result<AteResult> {
    estimate_ate_with(data, cfg, learner)
}

/// Cross-fitted estimate with any nuisance learner.
pub fn estimate_ate_with(
    data: &Dataset,
    cfg: &AteConfig,
    learner: &dyn NuisanceLearner,
) -> Result<AteResult> {
    let a = data
        .treatment()
        .ok_or_else(|| Error::InvalidConfig("dataset has no treatment column".into()))?;
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {}", cfg.level)));
    }
    if !(cfg.overlap_eps >= 0.0 && cfg.overlap_eps < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "overlap eps must lie in [0, 0.5), got {}",
            cfg.overlap_eps
        )));
    }
    if let OverlapPolicy::Clip(e) = cfg.overlap_policy {
        if !(e > 0.0 && e < 0.5) {
            return Err(Error::InvalidConfig(format!("clip eps must lie in (0, 0.5), got {e}")));
        }
    }
    let n = data.n();
    let d = data.d();
    let fold_of = kfold(n, cfg.folds, &mut derive_stream(cfg.seed, tags::FOLDS))?;
    let nuisance_seed = sub_seed(cfg.seed, tags::NUISANCE);

    struct FoldOut {
        rows: Vec<usize>,
        mu1: Vec<f64>,
        mu0: Vec<f64>,
        pi: Vec<f64>,
        report: FoldReport,
    }

    let outs = (0..cfg.folds)
        .into_par_iter()
        .map(|k| -> Result<FoldOut> {
            let rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
            let treated: Vec<usize> = train.iter().copied().filter(|&i| a[i] == 1).collect();
            let control: Vec<usize> = train.iter().copied().filter(|&i| a[i] == 0).collect();
            if treated.is_empty() {
                return Err(Error::EmptyArm { fold: k, arm: 1 });
            }
            if control.is_empty() {
                return Err(Error::EmptyArm { fold: k, arm: 0 });
            }
            let mut eval_x = Vec::with_capacity(rows.len() * d);
            for &i in &rows {
                eval_x.extend_from_slice(data.row(i));
            }
            let seed = |role: u64| sub_seed(nuisance_seed, 3 * k as u64 + role);
            let pi_train = data
                .subset(&train)
                .treatment_as_response()
                .expect("treatment column present");
            let mu1 = learner.fit_predict(NuisanceRole::Mu1, &data.subset(&treated), &eval_x, &rows, seed(0))?;
            let mu0 = learner.fit_predict(NuisanceRole::Mu0, &data.subset(&control), &eval_x, &rows, seed(1))?;
            let pi = learner.fit_predict(NuisanceRole::Pi, &pi_train, &eval_x, &rows, seed(2))?;
            for (what, fit) in [("mu1", &mu1), ("mu0", &mu0), ("pi", &pi)] {
                if fit.predictions.len() != rows.len() {
                    return Err(Error::LengthMismatch {
                        what,
                        expected: rows.len(),
                        found: fit.predictions.len(),
                    });
                }
            }
            let report = FoldReport {
                fold: k,
                size: rows.len(),
                train_treated: treated.len(),
                train_control: control.len(),
                score_mean: f64::NAN,
                pi_min: pi.predictions.iter().copied().fold(f64::INFINITY, f64::min),
                pi_max: pi.predictions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mu1_config: mu1.config,
                mu0_config: mu0.config,
                pi_config: pi.config,
            };
            Ok(FoldOut {
                rows,
                mu1: mu1.predictions,
                mu0: mu0.predictions,
                pi: pi.predictions,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mu1 = vec![0.0; n];
    let mut mu0 = vec![0.0; n];
    let mut pi = vec![0.0; n];
    for o in &outs {
        for (j, &i) in o.rows.iter().enumerate() {
            mu1[i] = o.mu1[j];
            mu0[i] = o.mu0[j];
            pi[i] = o.pi[j];
        }
    }
    let mut overlap = overlap_check(&pi, cfg.overlap_eps);
    match cfg.overlap_policy {
        OverlapPolicy::Warn => {}
        OverlapPolicy::Abort => {
            if !overlap.is_clean() {
                return Err(Error::OverlapViolation {
                    count: overlap.flagged.len(),
                    eps: cfg.overlap_eps,
                });
            }
        }
        OverlapPolicy::Clip(e) => {
            for p in pi.iter_mut() {
                let c = p.clamp(e, 1.0 - e);
                if c != *p {
                    overlap.clipped += 1;
                    *p = c;
                }
            }
        }
    }
    let y = data.y();
    let scores = (0..n)
        .map(|i| {
            aipw_score(y[i], a[i], mu1[i], mu0[i], pi[i])
                .map_err(|_| Error::PropensityDomain { row: i, value: pi[i] })
        })
        .collect::<Result<Vec<_>>>()?;

    let theta_hat = scores.iter().sum::<f64>() / n as f64;
    let sigma2 = scores.iter().map(|s| (s - theta_hat) * (s - theta_hat)).sum::<f64>() / n as f64;
    let sigma_hat = sigma2.sqrt();
    let z = normal_quantile(cfg.level);
    let half = z * sigma_hat / (n as f64).sqrt();
    let folds = outs
        .into_iter()
        .map(|o| FoldReport {
            score_mean: o.rows.iter().map(|&i| scores[i]).sum::<f64>() / o.rows.len() as f64,
            ..o.report
        })
        .collect();
    Ok(AteResult {
        theta_hat,
        sigma_hat,
        level: cfg.level,
        z,
        ci_low: theta_hat - half,
        ci_high: theta_hat + half,
        n,
        folds,
        overlap,
        scores,
        fold_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DirectionRule;
    use std::sync::Mutex;

    #[test]
    fn fold_sizes() {
        let mut rng = derive_stream(1, 1);
        let f = kfold(100, 5, &mut rng).unwrap();
        let mut c = [0; 5];
        f.iter().for_each(|&k| c[k] += 1);
        assert_eq!(c, [20; 5]);
        let f = kfold(101, 5, &mut rng).unwrap();
        let mut c = [0; 5];
        f.iter().for_each(|&k| c[k] += 1);
        c.sort_unstable();
        assert_eq!(c, [20, 20, 20, 20, 21]);
        assert!(kfold(3, 5, &mut rng).is_err());
        assert!(kfold(10, 1, &mut rng).is_err());
        let a = kfold(50, 4, &mut derive_stream(7, 0)).unwrap();
        assert_eq!(a, kfold(50, 4, &mut derive_stream(7, 0)).unwrap());
    }

    #[test]
    fn score_examples() {
        assert!((aipw_score(1.0, 1, 0.5, 0.2, 0.5).unwrap() - 1.3).abs() < 1e-15);
        assert_eq!(aipw_score(0.7, 1, 0.7, 0.2, 0.3).unwrap(), 0.7 - 0.2);
        assert_eq!(aipw_score(0.2, 0, 0.7, 0.2, 0.3).unwrap(), 0.7 - 0.2);
        for pi in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                aipw_score(1.0, 1, 0.0, 0.0, pi),
                Err(Error::PropensityDomain { .. })
            ));
        }
    }

    #[test]
    fn overlap_flags() {
        let r = overlap_check(&[0.3, 0.5, 0.7], 0.01);
        assert!(r.is_clean());
        assert_eq!((r.min, r.max), (0.3, 0.7));
        let r = overlap_check(&[0.3, 0.005, 0.7], 0.01);
        assert_eq!(r.flagged, vec![1]);
    }

    #[test]
    fn quantile() {
        assert!((normal_quantile(0.95) - 1.959963984540054).abs() < 1e-9);
    }

    fn base(seed: u64) -> ForestConfig {
        ForestConfig {
            b_trees: 10,
            k: 5,
            seed,
            direction_rule: DirectionRule::Balanced,
            ..ForestConfig::default()
        }
    }

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut s = derive_stream(seed, 3);
        let x: Vec<f64> = (0..2 * n).map(|_| s.uniform()).collect();
        let y = x.chunks(2).map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        Dataset::new(x, 2, y, None).unwrap()
    }

    #[test]
    fn tuning_prefers_linear_leaves_on_linear_data() {
        let data = linear_data(400, 1);
        let grid = TuningGrid {
            alpha: vec![0.5],
            k: vec![10],
            mtry: vec![1],
            q: vec![0, 1],
        };
        let r = tune_config(&data, &grid, &base(3), 0.2).unwrap();
        assert_eq!(r.config.q, 1);
        assert!(r.score < 1e-16);
        let again = tune_config(&data, &grid, &base(3), 0.2).unwrap();
        assert_eq!(r, again);
        let single = TuningGrid::singleton(&base(3));
        assert_eq!(tune_config(&data, &single, &base(3), 0.2).unwrap().config, base(3));
    }

    #[test]
    fn tuning_ties_prefer_small_k_then_large_alpha() {
        // Noiseless linear data with q = 1 fits every candidate exactly.
        let data = linear_data(300, 2);
        let grid = TuningGrid {
            alpha: vec![0.1, 0.5],
            k: vec![20, 10],
            mtry: vec![1],
            q: vec![1],
        };
        let r = tune_config(&data, &grid, &base(1), 0.2).unwrap();
        assert_eq!((r.config.k, r.config.alpha), (10, 0.5));
    }

    struct Oracle<F: Fn(NuisanceRole, &[f64]) -> f64 + Sync> {
        f: F,
        seen: Mutex<Vec<(NuisanceRole, Vec<Vec<f64>>, Vec<usize>)>>,
    }

    impl<F: Fn(NuisanceRole, &[f64]) -> f64 + Sync> NuisanceLearner for Oracle<F> {
        fn fit_predict(
            &self,
            role: NuisanceRole,
            train: &Dataset,
            eval_x: &[f64],
            eval_rows: &[usize],
            _seed: u64,
        ) -> Result<NuisanceFit> {
            let rows = (0..train.n()).map(|i| train.row(i).to_vec()).collect();
            self.seen.lock().unwrap().push((role, rows, eval_rows.to_vec()));
            Ok(NuisanceFit {
                predictions: eval_x.chunks(train.d()).map(|x| (self.f)(role, x)).collect(),
                config: None,
            })
        }
    }

    fn randomized(n: usize, tau: f64, seed: u64) -> Dataset {
        let mut s = derive_stream(seed, 11);
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut a = Vec::new();
        for _ in 0..n {
            let xi = [s.uniform(), s.uniform()];
            let t = (s.uniform() < 0.5) as u8;
            let noise = s.uniform() - 0.5;
            y.push(xi[0] + tau * t as f64 + noise);
            a.push(t);
            x.extend_from_slice(&xi);
        }
        Dataset::new(x, 2, y, Some(a)).unwrap()
    }

    #[test]
    fn oracle_constant_effect_and_fold_hygiene() {
        let data = randomized(2000, 0.7, 4);
        let oracle = Oracle {
            f: |role, x: &[f64]| match role {
                NuisanceRole::Mu1 => x[0] + 0.7,
                NuisanceRole::Mu0 => x[0],
                NuisanceRole::Pi => 0.5,
            },
            seen: Mutex::new(Vec::new()),
        };
        let r = estimate_ate_with(&data, &AteConfig::default(), &oracle).unwrap();
        assert!((r.theta_hat - 0.7).abs() < 3.0 * r.sigma_hat / (2000f64).sqrt());
        // Re-derive the summary statistics from the stored scores.
        let mean = r.scores.iter().sum::<f64>() / 2000.0;
        assert_eq!(mean, r.theta_hat);
        let width = r.ci_high - r.ci_low;
        assert!((width - 2.0 * r.z * r.sigma_hat / (2000f64).sqrt()).abs() < 1e-12);
        // No evaluation row was seen in training.
        let seen = oracle.seen.lock().unwrap();
        assert_eq!(seen.len(), 15);
        for (role, train_rows, eval_rows) in seen.iter() {
            for &i in eval_rows {
                assert!(!train_rows.iter().any(|r| r.as_slice() == data.row(i)));
            }
            let arm_ok = |t: &Vec<f64>| {
                let i = (0..data.n()).find(|&i| data.row(i) == t.as_slice()).unwrap();
                match role {
                    NuisanceRole::Mu1 => data.treatment().unwrap()[i] == 1,
                    NuisanceRole::Mu0 => data.treatment().unwrap()[i] == 0,
                    NuisanceRole::Pi => true,
                }
            };
            assert!(train_rows.iter().all(arm_ok));
        }
    }

    #[test]
    fn overlap_policies() {
        let data = randomized(200, 0.0, 5);
        let extreme = |role, _x: &[f64]| if role == NuisanceRole::Pi { 0.005 } else { 0.0 };
        let learner = Oracle {
            f: extreme,
            seen: Mutex::new(Vec::new()),
        };
        let warn = estimate_ate_with(&data, &AteConfig::default(), &learner).unwrap();
        assert_eq!(warn.overlap.flagged.len(), 200);
        let abort = AteConfig {
            overlap_policy: OverlapPolicy::Abort,
            ..AteConfig::default()
        };
        assert!(matches!(
            estimate_ate_with(&data, &abort, &learner),
            Err(Error::OverlapViolation { count: 200, .. })
        ));
        let clip = AteConfig {
            overlap_policy: OverlapPolicy::Clip(0.05),
            ..AteConfig::default()
        };
        assert_eq!(estimate_ate_with(&data, &clip, &learner).unwrap().overlap.clipped, 200);
        let zero = Oracle {
            f: |role, _x: &[f64]| if role == NuisanceRole::Pi { 0.0 } else { 0.0 },
            seen: Mutex::new(Vec::new()),
        };
        assert!(matches!(
            estimate_ate_with(&data, &AteConfig::default(), &zero),
            Err(Error::PropensityDomain { .. })
        ));
    }

    #[test]
    fn empty_arm_rejected() {
        let mut s = derive_stream(0, 0);
        let x: Vec<f64> = (0..40).map(|_| s.uniform()).collect();
        let mut a = vec![0u8; 40];
        a[3] = 1;
        let data = Dataset::new(x, 1, vec![0.0; 40], Some(a)).unwrap();
        let learner = Oracle {
            f: |_r, _x: &[f64]| 0.5,
            seen: Mutex::new(Vec::new()),
        };
        assert!(matches!(
            estimate_ate_with(&data, &AteConfig::default(), &learner),
            Err(Error::EmptyArm { arm: 1, .. })
        ));
        let plain = Dataset::new(vec![0.5; 10], 1, vec![0.0; 10], None).unwrap();
        assert!(estimate_ate_with(&plain, &AteConfig::default(), &learner).is_err());
    }

    #[test]
    fn forest_nuisances_run() {
        let data = randomized(600, 1.0, 6);
        let learner = ForestLearner {
            mu: NuisanceSpec::Fixed { config: base(0) },
            pi: NuisanceSpec::Fixed {
                config: ForestConfig { k: 20, ..base(0) },
            },
        };
        let r = estimate_ate(&data, &AteConfig::default(), &learner).unwrap();
        assert!((r.theta_hat - 1.0).abs() < 0.2, "{}", r.theta_hat);
        assert!(r.folds.iter().all(|f| f.mu1_config.is_some()));
        let again = estimate_ate(&data, &AteConfig::default(), &learner).unwrap();
        assert_eq!(r, again);
    }
}
