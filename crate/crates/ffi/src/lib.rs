//! C interface to the `asbf` forest library.
//!
//! Objects are opaque handles created by `*_new`/`*_fit`/`*_from_json` and
//! released by the matching `*_free`. Every fallible call returns an
//! [`AsbfStatus`]; on failure the message is available from
//! [`asbf_last_error`] on the same thread. Status values match the exit codes
//! of the `asbf` command-line tool.
//!
//! Covariate matrices are row-major `n x d` arrays of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use asbf::ate::OverlapPolicy;
use asbf::{estimate_ate, AteConfig, Dataset, DirectionRule, Error, Forest, ForestConfig, ForestLearner, NuisanceSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsbfStatus {
    Ok = 0,
    /// A panic inside the library; should not happen.
    Internal = 1,
    /// Bad arguments, data or configuration.
    Validation = 2,
    /// The configuration cannot be honoured for this sample size.
    Infeasible = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsbfDirectionRule {
    Balanced = 0,
    Random = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsbfOverlapPolicy {
    Warn = 0,
    Abort = 1,
    Clip = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsbfForestConfig {
    pub b_trees: usize,
    pub alpha: f64,
    pub w: f64,
    pub k: usize,
    pub mtry: usize,
    pub q: usize,
    pub seed: u64,
    pub direction_rule: AsbfDirectionRule,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsbfAteConfig {
    pub folds: usize,
    pub level: f64,
    pub overlap_eps: f64,
    pub overlap_policy: AsbfOverlapPolicy,
    /// Clipping bound, used with `ASBF_OVERLAP_POLICY_CLIP`.
    pub clip_eps: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AsbfAteResult {
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub pi_min: f64,
    pub pi_max: f64,
    pub overlap_flagged: usize,
    pub clipped: usize,
}

/// Validated training data.
pub struct AsbfDataset(Dataset);

/// A fitted forest.
pub struct AsbfForest(Forest);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> AsbfStatus {
    let status = match e.exit_code() {
        3 => AsbfStatus::Infeasible,
        _ => AsbfStatus::Validation,
    };
    set_error(e.to_string());
    status
}

fn invalid(msg: &str) -> AsbfStatus {
    set_error(msg.to_string());
    AsbfStatus::Validation
}

fn guard(f: impl FnOnce() -> AsbfStatus) -> AsbfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            AsbfStatus::Internal
        }
    }
}

impl From<AsbfForestConfig> for ForestConfig {
    fn from(c: AsbfForestConfig) -> Self {
        ForestConfig {
            b_trees: c.b_trees,
            alpha: c.alpha,
            w: c.w,
            k: c.k,
            mtry: c.mtry,
            q: c.q,
            seed: c.seed,
            direction_rule: match c.direction_rule {
                AsbfDirectionRule::Balanced => DirectionRule::Balanced,
                AsbfDirectionRule::Random => DirectionRule::Random,
            },
        }
    }
}

impl From<&ForestConfig> for AsbfForestConfig {
    fn from(c: &ForestConfig) -> Self {
        AsbfForestConfig {
            b_trees: c.b_trees,
            alpha: c.alpha,
            w: c.w,
            k: c.k,
            mtry: c.mtry,
            q: c.q,
            seed: c.seed,
            direction_rule: match c.direction_rule {
                DirectionRule::Balanced => AsbfDirectionRule::Balanced,
                DirectionRule::Random => AsbfDirectionRule::Random,
            },
        }
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn asbf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library defaults.
#[no_mangle]
pub extern "C" fn asbf_forest_config_default() -> AsbfForestConfig {
    (&ForestConfig::default()).into()
}

#[no_mangle]
pub extern "C" fn asbf_ate_config_default() -> AsbfAteConfig {
    let c = AteConfig::default();
    AsbfAteConfig {
        folds: c.folds,
        level: c.level,
        overlap_eps: c.overlap_eps,
        overlap_policy: AsbfOverlapPolicy::Warn,
        clip_eps: c.overlap_eps,
        seed: c.seed,
    }
}

/// Copies `n` rows into a new dataset. `a` may be NULL; otherwise it holds
/// 0/1 treatment indicators.
///
/// # Safety
/// `x` must point to `n * d` doubles, `y` to `n` doubles, `a` (if non-NULL)
/// to `n` bytes, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asbf_dataset_new(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const f64,
    a: *const u8,
    out: *mut *mut AsbfDataset,
) -> AsbfStatus {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            return invalid("null pointer argument");
        }
        let Some(len) = n.checked_mul(d) else {
            return invalid("n * d overflows");
        };
        let xs = std::slice::from_raw_parts(x, len).to_vec();
        let ys = std::slice::from_raw_parts(y, n).to_vec();
        let arm = (!a.is_null()).then(|| std::slice::from_raw_parts(a, n).to_vec());
        match Dataset::new(xs, d, ys, arm) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(AsbfDataset(ds)));
                AsbfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `data` must be NULL or a handle from `asbf_dataset_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asbf_dataset_free(data: *mut AsbfDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// # Safety
/// `data` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn asbf_dataset_rows(data: *const AsbfDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n())
}

/// # Safety
/// `data` must be a live dataset handle, `cfg` a valid pointer and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_fit(
    data: *const AsbfDataset,
    cfg: *const AsbfForestConfig,
    out: *mut *mut AsbfForest,
) -> AsbfStatus {
    guard(|| {
        let (Some(data), Some(cfg)) = (data.as_ref(), cfg.as_ref()) else {
            return invalid("null pointer argument");
        };
        if out.is_null() {
            return invalid("null pointer argument");
        }
        match Forest::fit(&data.0, &(*cfg).into()) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(AsbfForest(f)));
                AsbfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `forest` must be NULL or a live forest handle.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_free(forest: *mut AsbfForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

/// Covariate dimension of a fitted forest, 0 for NULL.
///
/// # Safety
/// `forest` must be NULL or a live forest handle.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_dim(forest: *const AsbfForest) -> usize {
    forest.as_ref().map_or(0, |f| f.0.dim())
}

/// # Safety
/// `forest` must be NULL or a live forest handle.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_num_trees(forest: *const AsbfForest) -> usize {
    forest.as_ref().map_or(0, |f| f.0.trees().len())
}

/// Configuration the forest was fitted with.
///
/// # Safety
/// `forest` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_config(forest: *const AsbfForest, out: *mut AsbfForestConfig) -> AsbfStatus {
    guard(|| {
        let Some(f) = forest.as_ref() else {
            return invalid("null pointer argument");
        };
        if out.is_null() {
            return invalid("null pointer argument");
        }
        *out = f.0.config().into();
        AsbfStatus::Ok
    })
}

/// Predicts `m` query rows of width `d` into `out`.
///
/// # Safety
/// `xs` must point to `m * d` doubles and `out` to room for `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_predict(
    forest: *const AsbfForest,
    xs: *const f64,
    m: usize,
    d: usize,
    out: *mut f64,
) -> AsbfStatus {
    guard(|| {
        let Some(f) = forest.as_ref() else {
            return invalid("null pointer argument");
        };
        if (xs.is_null() || out.is_null()) && m > 0 {
            return invalid("null pointer argument");
        }
        if d != f.0.dim() {
            return fail(Error::DimensionMismatch {
                expected: f.0.dim(),
                found: d,
            });
        }
        if m == 0 {
            return AsbfStatus::Ok;
        }
        let Some(len) = m.checked_mul(d) else {
            return invalid("m * d overflows");
        };
        match f.0.predict_many(std::slice::from_raw_parts(xs, len)) {
            Ok(p) => {
                std::slice::from_raw_parts_mut(out, m).copy_from_slice(&p);
                AsbfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes a forest. Release the string with `asbf_string_free`.
///
/// # Safety
/// `forest` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_to_json(forest: *const AsbfForest, out: *mut *mut c_char) -> AsbfStatus {
    guard(|| {
        let Some(f) = forest.as_ref() else {
            return invalid("null pointer argument");
        };
        if out.is_null() {
            return invalid("null pointer argument");
        }
        match f.0.to_json() {
            Ok(s) => match CString::new(s) {
                Ok(c) => {
                    *out = c.into_raw();
                    AsbfStatus::Ok
                }
                Err(_) => invalid("serialized forest contains NUL"),
            },
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asbf_forest_from_json(json: *const c_char, out: *mut *mut AsbfForest) -> AsbfStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return invalid("null pointer argument");
        }
        let Ok(s) = CStr::from_ptr(json).to_str() else {
            return invalid("forest JSON is not UTF-8");
        };
        match Forest::from_json(s) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(AsbfForest(f)));
                AsbfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asbf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cross-fitted AIPW estimate of the average treatment effect. All three
/// nuisance forests use `nuisance`; the dataset must carry treatments.
///
/// # Safety
/// All pointers must be valid; `data` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn asbf_ate_estimate(
    data: *const AsbfDataset,
    nuisance: *const AsbfForestConfig,
    cfg: *const AsbfAteConfig,
    out: *mut AsbfAteResult,
) -> AsbfStatus {
    guard(|| {
        let (Some(data), Some(nuisance), Some(cfg)) = (data.as_ref(), nuisance.as_ref(), cfg.as_ref()) else {
            return invalid("null pointer argument");
        };
        if out.is_null() {
            return invalid("null pointer argument");
        }
        let forest: ForestConfig = (*nuisance).into();
        let learner = ForestLearner {
            mu: NuisanceSpec::Fixed { config: forest.clone() },
            pi: NuisanceSpec::Fixed { config: forest },
        };
        let ate = AteConfig {
            folds: cfg.folds,
            level: cfg.level,
            overlap_eps: cfg.overlap_eps,
            overlap_policy: match cfg.overlap_policy {
                AsbfOverlapPolicy::Warn => OverlapPolicy::Warn,
                AsbfOverlapPolicy::Abort => OverlapPolicy::Abort,
                AsbfOverlapPolicy::Clip => OverlapPolicy::Clip(cfg.clip_eps),
            },
            seed: cfg.seed,
        };
        match estimate_ate(&data.0, &ate, &learner) {
            Ok(r) => {
                *out = AsbfAteResult {
                    theta_hat: r.theta_hat,
                    sigma_hat: r.sigma_hat,
                    ci_low: r.ci_low,
                    ci_high: r.ci_high,
                    n: r.n,
                    pi_min: r.overlap.min,
                    pi_max: r.overlap.max,
                    overlap_flagged: r.overlap.flagged.len(),
                    clipped: r.overlap.clipped,
                };
                AsbfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
