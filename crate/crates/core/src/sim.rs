//! Simulation designs, error metrics, the random-direction baseline and
//! log-log rate fits.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::data::{Dataset, DirectionRule, ForestConfig};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::rng::{derive_stream, sub_seed, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `10 sin(pi x1 x2) + 20 (x3 - c)^2 + 10 x4 + 5 x5` with `c = 5` as
    /// printed.
    FriedmanA,
    /// `20 exp((x1 + .. + xs - s/2) / sqrt(s))`.
    ExpSparseB,
    /// Treatment design with a mild propensity and effect `cyc / d` per arm.
    AteA,
    /// Treatment design with propensity `sum / (sum + d)` and effect
    /// `2 cyc` per arm.
    AteB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub which: DgpKind,
    pub n: usize,
    pub d: usize,
    /// Number of active coordinates; only used by `exp_sparse_b`.
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    /// The constant inside the squared Friedman term.
    #[serde(default = "five")]
    pub friedman_offset: f64,
}

fn one() -> f64 {
    1.0
}

fn five() -> f64 {
    5.0
}

impl DgpSpec {
    pub fn new(which: DgpKind, n: usize, d: usize) -> Self {
        DgpSpec {
            which,
            n,
            d,
            s: None,
            noise_sd: 1.0,
            seed: 0,
            friedman_offset: 5.0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        DgpSpec { seed, ..self }
    }

    pub fn with_sparsity(self, s: usize) -> Self {
        DgpSpec { s: Some(s), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd));
        }
        match self.which {
            DgpKind::FriedmanA if self.d < 5 => bad(format!("friedman_a needs d >= 5, got {}", self.d)),
            DgpKind::FriedmanA if !self.friedman_offset.is_finite() => {
                bad("friedman_offset must be finite".into())
            }
            DgpKind::ExpSparseB => match self.s {
                Some(s) if s >= 1 && s <= self.d => Ok(()),
                Some(s) => bad(format!("exp_sparse_b needs 1 <= s <= d, got s = {s}, d = {}", self.d)),
                None => bad("exp_sparse_b needs s".into()),
            },
            _ => Ok(()),
        }
    }

    pub fn is_treatment_design(&self) -> bool {
        matches!(self.which, DgpKind::AteA | DgpKind::AteB)
    }

    /// Regression function for the regression designs, `E[Y | X = x]`
    /// averaged over treatment for the treatment designs.
    pub fn mean(&self, x: &[f64]) -> f64 {
        match self.which {
            DgpKind::FriedmanA => {
                let c = self.friedman_offset;
                10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - c) * (x[2] - c)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
            }
            DgpKind::ExpSparseB => {
                let s = self.s.unwrap_or(self.d);
                let sum: f64 = x[..s].iter().sum();
                20.0 * ((sum - 0.5 * s as f64) / (s as f64).sqrt()).exp()
            }
            DgpKind::AteA | DgpKind::AteB => {
                let p = self.propensity(x);
                p * self.mu1(x) + (1.0 - p) * self.mu0(x)
            }
        }
    }

    pub fn propensity(&self, x: &[f64]) -> f64 {
        let sum: f64 = x.iter().sum();
        let d = x.len() as f64;
        match self.which {
            DgpKind::AteA => {
                let m = sum / d;
                (m + 1.1) / (m + 2.0)
            }
            DgpKind::AteB => sum / (sum + d),
            _ => 0.5,
        }
    }

    pub fn mu1(&self, x: &[f64]) -> f64 {
        match self.which {
            DgpKind::AteA => cyclic(x) / x.len() as f64,
            DgpKind::AteB => 2.0 * cyclic(x),
            _ => self.mean(x),
        }
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        match self.which {
            DgpKind::AteA => -cyclic(x) / x.len() as f64,
            DgpKind::AteB => -2.0 * cyclic(x),
            _ => self.mean(x),
        }
    }

    /// `E[Y(1) - Y(0)]` in closed form, for the treatment designs.
    pub fn true_theta(&self) -> Option<f64> {
        // E[x_j x_{j+1}] = 1/4 and E[x_1^2] = 1/3 for d = 1.
        let e_cyc = if self.d == 1 { 1.0 / 3.0 } else { self.d as f64 / 4.0 };
        match self.which {
            DgpKind::AteA => Some(2.0 * e_cyc / self.d as f64),
            DgpKind::AteB => Some(4.0 * e_cyc),
            _ => None,
        }
    }
}

/// `x1 x2 + x2 x3 + .. + x_{d-1} x_d + x_d x1`.
pub fn cyclic(x: &[f64]) -> f64 {
    let d = x.len();
    (0..d).map(|j| x[j] * x[(j + 1) % d]).sum()
}

/// Draws a dataset from `spec`. Covariates, noise and treatment come from
/// separate streams of `spec.seed`.
pub fn generate(spec: &DgpSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut cov = derive_stream(spec.seed, tags::DGP_COVARIATES);
    let mut noise = derive_stream(spec.seed, tags::DGP_NOISE);
    let x: Vec<f64> = (0..n * d).map(|_| cov.uniform()).collect();
    let eps: Vec<f64> = (0..n)
        .map(|_| spec.noise_sd * noise.sample::<f64, _>(StandardNormal))
        .collect();
    if spec.is_treatment_design() {
        let mut treat = derive_stream(spec.seed, tags::DGP_TREATMENT);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for (r, e) in x.chunks_exact(d).zip(&eps) {
            let t = treat.uniform() < spec.propensity(r);
            a.push(t as u8);
            y.push(if t { spec.mu1(r) } else { spec.mu0(r) } + e);
        }
        Dataset::new(x, d, y, Some(a))
    } else {
        let y = x.chunks_exact(d).zip(&eps).map(|(r, e)| spec.mean(r) + e).collect();
        Dataset::new(x, d, y, None)
    }
}

/// `n` uniform test points in `[0,1]^d`, row-major.
pub fn test_points(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut s = derive_stream(seed, tags::TEST_POINTS);
    (0..n * d).map(|_| s.uniform()).collect()
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            expected: truths.len(),
            found: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mse = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truths.len() as f64;
    Ok(mse.sqrt())
}

/// The forest pipeline with each split direction drawn uniformly at random
/// instead of from the balanced rule.
pub fn baseline_random_direction_fit(data: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    let cfg = ForestConfig {
        direction_rule: DirectionRule::Random,
        ..cfg.clone()
    };
    Forest::fit(data, &cfg)
}

/// Least-squares fit of `log stat` on `log x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub x: Vec<f64>,
    pub stat: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn fit_rate_slope(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "a rate fit needs at least 4 points, got {}",
            pairs.len()
        )));
    }
    for (index, &(x, s)) in pairs.iter().enumerate() {
        if !(x > 0.0) {
            return Err(Error::NonPositiveStatistic { index, value: x });
        }
        if !(s > 0.0) {
            return Err(Error::NonPositiveStatistic { index, value: s });
        }
    }
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidConfig("rate fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    Ok(RateFit {
        x: pairs.iter().map(|p| p.0).collect(),
        stat: pairs.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        slope_se: (sse / (n - 2.0) / sxx).sqrt(),
    })
}

/// Paired one-sided sign test of "a tends to be smaller than b".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(Bin(wins + losses, 1/2) >= wins)`.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "paired sample",
            expected: a.len(),
            found: b.len(),
        });
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let ties = a.len() - wins - losses;
    let m = (wins + losses) as u64;
    let p_value = if m == 0 || wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, m).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        1.0 - bin.cdf(wins as u64 - 1)
    };
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seed of replicate `r` of an experiment seeded with `seed`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    sub_seed(sub_seed(seed, tags::REPLICATE), r as u64)
}

/// Runs `f(r, replicate_seed(seed, r))` for every replicate in parallel and
/// returns the results in replicate order.
pub fn replicate<T, F>(reps: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| f(r, replicate_seed(seed, r)))
        .collect()
}
