//! Replicated Monte-Carlo experiments: leaf-diameter and IMSE rates, paired
//! method comparisons on the regression designs, and ATE replications.

use serde::{Deserialize, Serialize};

use crate::ate::{estimate_ate, AteConfig, ForestLearner, TuningGrid};
use crate::ate::tune_config;
use crate::data::{Dataset, DirectionRule, ForestConfig};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::rng::{derive_stream, sub_seed};
use crate::sim::{fit_rate_slope, generate, median, replicate, rmse, sign_test, test_points, DgpSpec, RateFit, SignTest};
use rand::Rng;
use rand_distr::StandardNormal;

/// Which leaf-diameter moment a rate experiment tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterMoment {
    /// `E diam(L(X))^r` for uniform `X`.
    #[default]
    Volume,
    /// Average over leaves.
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiameterRateSpec {
    pub alpha: f64,
    pub d: usize,
    pub k: usize,
    pub n: Vec<usize>,
    pub reps: usize,
    #[serde(default = "ten")]
    pub b_trees: usize,
    #[serde(default = "half")]
    pub w: f64,
    /// Power of the diameter, 1 or 2.
    #[serde(default = "two")]
    pub r: u32,
    #[serde(default)]
    pub moment: DiameterMoment,
    #[serde(default)]
    pub seed: u64,
}

fn ten() -> usize {
    10
}

fn half() -> f64 {
    0.5
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    /// Abscissa of the fit: `N / k` for diameter rates, `N` for IMSE rates.
    pub x: f64,
    pub mean: f64,
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub fit: RateFit,
}

/// Uniform covariates with pure-noise responses; the response does not
/// enter the leaf geometry except through the split criterion.
fn noise_data(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    let mut s = derive_stream(seed, 0);
    let x: Vec<f64> = (0..n * d).map(|_| s.uniform()).collect();
    let y: Vec<f64> = (0..n).map(|_| s.sample::<f64, _>(StandardNormal)).collect();
    Dataset::new(x, d, y, None)
}

/// Mean leaf `diam^r` against `N / k`, with a log-log slope.
pub fn diameter_rate(spec: &DiameterRateSpec) -> Result<RateReport> {
    if spec.r == 0 || spec.r > 2 {
        return Err(Error::InvalidConfig(format!("diameter power must be 1 or 2, got {}", spec.r)));
    }
    let mut points = Vec::new();
    for (gi, &n) in spec.n.iter().enumerate() {
        let reps = replicate(spec.reps, sub_seed(spec.seed, gi as u64), |_, seed| {
            let data = noise_data(n, spec.d, seed)?;
            let cfg = ForestConfig {
                b_trees: spec.b_trees,
                alpha: spec.alpha,
                w: spec.w,
                k: spec.k,
                mtry: 1,
                q: 0,
                seed,
                direction_rule: DirectionRule::Balanced,
            };
            let r = Forest::fit(&data, &cfg)?.diameter_report().pooled;
            Ok(match (spec.moment, spec.r) {
                (DiameterMoment::Volume, 1) => r.volume_mean_diam,
                (DiameterMoment::Volume, _) => r.volume_mean_diam2,
                (DiameterMoment::Leaf, 1) => r.mean_diam,
                (DiameterMoment::Leaf, _) => r.mean_diam2,
            })
        })?;
        points.push(RatePoint {
            n,
            x: n as f64 / spec.k as f64,
            mean: reps.iter().sum::<f64>() / reps.len() as f64,
            replicates: reps,
        });
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.mean)).collect();
    Ok(RateReport {
        fit: fit_rate_slope(&pairs)?,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImseRateSpec {
    pub d: usize,
    pub n: Vec<usize>,
    pub reps: usize,
    #[serde(default = "half")]
    pub alpha: f64,
    /// Leaf size `k = round(k_scale * N^(2/(d+2)))`, at least 1.
    pub k_scale: f64,
    #[serde(default = "unit")]
    pub noise_sd: f64,
    #[serde(default = "ten")]
    pub b_trees: usize,
    #[serde(default = "thousand")]
    pub test_n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

fn thousand() -> usize {
    1000
}

impl ImseRateSpec {
    pub fn k_for(&self, n: usize) -> usize {
        let e = 2.0 / (self.d as f64 + 2.0);
        ((self.k_scale * (n as f64).powf(e)).round() as usize).max(1)
    }
}

/// Integrated squared error of a mean forest on `m(x) = |x|_1 / d`, against
/// `N`.
pub fn imse_rate(spec: &ImseRateSpec) -> Result<RateReport> {
    let d = spec.d;
    let target = |x: &[f64]| x.iter().sum::<f64>() / d as f64;
    let mut points = Vec::new();
    for (gi, &n) in spec.n.iter().enumerate() {
        let k = spec.k_for(n);
        let reps = replicate(spec.reps, sub_seed(spec.seed, gi as u64), |_, seed| {
            let mut s = derive_stream(seed, 0);
            let x: Vec<f64> = (0..n * d).map(|_| s.uniform()).collect();
            let y = x
                .chunks_exact(d)
                .map(|r| target(r) + spec.noise_sd * s.sample::<f64, _>(StandardNormal))
                .collect();
            let data = Dataset::new(x, d, y, None)?;
            let cfg = ForestConfig {
                b_trees: spec.b_trees,
                alpha: spec.alpha,
                w: 0.5,
                k,
                mtry: 1,
                q: 0,
                seed,
                direction_rule: DirectionRule::Balanced,
            };
            let forest = Forest::fit(&data, &cfg)?;
            let tx = test_points(spec.test_n, d, seed);
            let truth: Vec<f64> = tx.chunks_exact(d).map(target).collect();
            let e = rmse(&forest.predict_many(&tx)?, &truth)?;
            Ok(e * e)
        })?;
        points.push(RatePoint {
            n,
            x: n as f64,
            mean: reps.iter().sum::<f64>() / reps.len() as f64,
            replicates: reps,
        });
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.mean)).collect();
    Ok(RateReport {
        fit: fit_rate_slope(&pairs)?,
        points,
    })
}

/// One forest variant in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default)]
    pub direction_rule: DirectionRule,
    pub grid: TuningGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub dgp: DgpSpec,
    pub reps: usize,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "hundred")]
    pub b_trees: usize,
    #[serde(default = "half")]
    pub w: f64,
    #[serde(default = "fifth")]
    pub val_fraction: f64,
    #[serde(default = "thousand")]
    pub test_n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn hundred() -> usize {
    100
}

fn fifth() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    /// Test RMSE per replicate.
    pub rmse: Vec<f64>,
    pub median_rmse: f64,
    /// Tuned configuration per replicate.
    pub chosen: Vec<ForestConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub methods: Vec<MethodResult>,
    /// Sign test of the first method against each of the others.
    pub sign_tests: Vec<(String, SignTest)>,
}

/// Replicated comparison: every method is tuned on the same validation
/// split of the same data, refit on all rows, and scored against the true
/// regression function at uniform test points.
pub fn compare_methods(spec: &CompareSpec) -> Result<CompareReport> {
    if spec.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods to compare".into()));
    }
    spec.dgp.validate()?;
    let per_rep = replicate(spec.reps, spec.seed, |_, seed| {
        let dgp = DgpSpec {
            seed,
            ..spec.dgp.clone()
        };
        let data = generate(&dgp)?;
        let tx = test_points(spec.test_n, dgp.d, seed);
        let truth: Vec<f64> = tx.chunks_exact(dgp.d).map(|x| dgp.mean(x)).collect();
        spec.methods
            .iter()
            .map(|m| {
                let base = ForestConfig {
                    b_trees: spec.b_trees,
                    w: spec.w,
                    seed,
                    direction_rule: m.direction_rule,
                    ..ForestConfig::default()
                };
                let cfg = tune_config(&data, &m.grid, &base, spec.val_fraction)?.config;
                let forest = Forest::fit(&data, &cfg)?;
                Ok((rmse(&forest.predict_many(&tx)?, &truth)?, cfg))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let methods: Vec<MethodResult> = spec
        .methods
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let rmse: Vec<f64> = per_rep.iter().map(|r| r[j].0).collect();
            MethodResult {
                name: m.name.clone(),
                median_rmse: median(&rmse),
                chosen: per_rep.iter().map(|r| r[j].1.clone()).collect(),
                rmse,
            }
        })
        .collect();
    let sign_tests = methods[1..]
        .iter()
        .map(|m| Ok((m.name.clone(), sign_test(&methods[0].rmse, &m.rmse)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport {
        methods,
        sign_tests,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AteSimSpec {
    pub dgp: DgpSpec,
    pub reps: usize,
    pub ate: AteConfig,
    pub learner: ForestLearner,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReplicate {
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covered: bool,
    pub overlap_flags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteSimReport {
    pub theta: f64,
    pub replicates: Vec<AteReplicate>,
    pub median_bias: f64,
    /// Median absolute error.
    pub median_abs_error: f64,
    pub median_ci_length: f64,
    pub coverage: f64,
}

/// Replicated cross-fitted ATE estimation on a treatment design with known
/// effect.
pub fn ate_replicates(spec: &AteSimSpec) -> Result<AteSimReport> {
    let theta = spec
        .dgp
        .true_theta()
        .ok_or_else(|| Error::InvalidConfig("ATE replications need a treatment design".into()))?;
    let replicates = replicate(spec.reps, spec.seed, |_, seed| {
        let data = generate(&DgpSpec {
            seed,
            ..spec.dgp.clone()
        })?;
        let cfg = AteConfig {
            seed,
            ..spec.ate.clone()
        };
        let r = estimate_ate(&data, &cfg, &spec.learner)?;
        Ok(AteReplicate {
            theta_hat: r.theta_hat,
            sigma_hat: r.sigma_hat,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            covered: r.ci_low <= theta && theta <= r.ci_high,
            overlap_flags: r.overlap.flagged.len(),
        })
    })?;
    let bias: Vec<f64> = replicates.iter().map(|r| r.theta_hat - theta).collect();
    let abs: Vec<f64> = bias.iter().map(|b| b.abs()).collect();
    let len: Vec<f64> = replicates.iter().map(|r| r.ci_high - r.ci_low).collect();
    Ok(AteSimReport {
        theta,
        median_bias: median(&bias),
        median_abs_error: median(&abs),
        median_ci_length: median(&len),
        coverage: replicates.iter().filter(|r| r.covered).count() as f64 / replicates.len() as f64,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::DgpKind;

    #[test]
    fn diameter_rate_runs_and_is_deterministic() {
        let spec = DiameterRateSpec {
            alpha: 0.5,
            d: 2,
            k: 5,
            n: vec![80, 160, 320, 640],
            reps: 3,
            b_trees: 2,
            w: 0.5,
            r: 2,
            moment: DiameterMoment::Volume,
            seed: 1,
        };
        let a = diameter_rate(&spec).unwrap();
        assert!(a.fit.slope < 0.0);
        assert_eq!(a, diameter_rate(&spec).unwrap());
    }

    #[test]
    fn k_scaling() {
        let spec = ImseRateSpec {
            d: 2,
            n: vec![],
            reps: 1,
            alpha: 0.5,
            k_scale: 0.5,
            noise_sd: 1.0,
            b_trees: 1,
            test_n: 10,
            seed: 0,
        };
        assert_eq!(spec.k_for(10_000), 50);
    }

    #[test]
    fn small_comparison() {
        let grid = TuningGrid {
            alpha: vec![0.5],
            k: vec![5, 10],
            mtry: vec![1],
            q: vec![0],
        };
        let spec = CompareSpec {
            dgp: DgpSpec::new(DgpKind::FriedmanA, 200, 5),
            reps: 2,
            methods: vec![
                MethodSpec {
                    name: "balanced".into(),
                    direction_rule: DirectionRule::Balanced,
                    grid: grid.clone(),
                },
                MethodSpec {
                    name: "random".into(),
                    direction_rule: DirectionRule::Random,
                    grid,
                },
            ],
            b_trees: 5,
            w: 0.5,
            val_fraction: 0.2,
            test_n: 100,
            seed: 4,
        };
        let r = compare_methods(&spec).unwrap();
        assert_eq!(r.methods.len(), 2);
        assert_eq!(r.sign_tests.len(), 1);
        assert!(r.methods.iter().all(|m| m.rmse.len() == 2));
        assert_eq!(r.methods[1].chosen[0].direction_rule, DirectionRule::Random);
    }
}
