//! C ABI over the `mopo` crate.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! producer functions and released with the matching `*_free`. Every fallible
//! function returns a [`MopoStatus`]; on failure a message is available from
//! [`mopo_last_error_message`] on the same thread. Panics never unwind into
//! the caller; they surface as `MOPO_STATUS_PANIC`.

use mopo::domain::{PolicyShape, PreferenceDataset, TrainResult};
use mopo::pareto::{self, ObjectivePoint, ParetoFront};
use mopo::solver::{self, SolverConfig};
use mopo::synth::{self, BtForm, RewardSet};
use mopo::MopoError;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MopoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NumericalDivergence = 4,
    Infeasible = 5,
    Domain = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MopoRewardSet {
    A = 0,
    B = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MopoBtForm {
    Logistic = 0,
    Ratio = 1,
}

/// Which of the synthetic datasets built from one draw of triples.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MopoMotivatingVariant {
    D1 = 0,
    D2 = 1,
    Joint = 2,
    Dj = 3,
    Dc = 4,
}

/// Opaque preference dataset.
pub struct MopoDataset(PreferenceDataset);
/// Opaque solver configuration.
pub struct MopoSolverConfig(SolverConfig);
/// Opaque training result.
pub struct MopoTrainResult(TrainResult);
/// Opaque Pareto front.
pub struct MopoFront(ParetoFront);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &MopoError) -> MopoStatus {
    match e {
        MopoError::Config(_) => MopoStatus::Config,
        MopoError::NumericalDivergence { .. } => MopoStatus::NumericalDivergence,
        MopoError::Infeasible { .. } => MopoStatus::Infeasible,
        MopoError::DomainError { .. } | MopoError::InvalidRatioForm { .. } => MopoStatus::Domain,
        MopoError::Io { .. } => MopoStatus::Io,
        MopoError::InvalidArgument(_)
        | MopoError::DimMismatch { .. }
        | MopoError::UnknownDataset(_)
        | MopoError::EmptyInput(_)
        | MopoError::NonFiniteInput(_) => MopoStatus::InvalidArgument,
        _ => MopoStatus::Other,
    }
}

struct Fail(MopoStatus, String);

impl From<MopoError> for Fail {
    fn from(e: MopoError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MopoStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MopoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MopoStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            MopoStatus::Panic
        }
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err(Fail(
            MopoStatus::BufferTooSmall,
            format!("buffer holds {len}, need {}", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn reward_set(s: MopoRewardSet) -> RewardSet {
    match s {
        MopoRewardSet::A => RewardSet::A,
        MopoRewardSet::B => RewardSet::B,
    }
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mopo_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mopo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// One of the five three-action canonical datasets (`id` in 1..=5).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_dataset_canonical(id: u32, out: *mut *mut MopoDataset) -> MopoStatus {
    guard(|| put(out, MopoDataset(synth::canonical_dataset(id as usize)?)))
}

/// Random three-action, two-objective bandit data.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_dataset_random(
    seed: u64,
    reps: usize,
    out: *mut *mut MopoDataset,
) -> MopoStatus {
    guard(|| put(out, MopoDataset(synth::random_bandit_dataset(seed, reps)?)))
}

/// Synthetic contextual data for a reward set under the logistic form.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_dataset_motivating(
    n: usize,
    seed: u64,
    set: MopoRewardSet,
    w: f64,
    variant: MopoMotivatingVariant,
    out: *mut *mut MopoDataset,
) -> MopoStatus {
    guard(|| {
        let ds = synth::build_motivating_datasets(n, seed, reward_set(set), w, BtForm::Logistic)?;
        let d = match variant {
            MopoMotivatingVariant::D1 => ds.d1,
            MopoMotivatingVariant::D2 => ds.d2,
            MopoMotivatingVariant::Joint => ds.joint,
            MopoMotivatingVariant::Dj => ds.dj,
            MopoMotivatingVariant::Dc => ds.dc,
        };
        put(out, MopoDataset(d))
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_dataset_len(ds: *const MopoDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mopo_dataset_free(ds: *mut MopoDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Default configuration (adaptive thresholds, three-action bandit).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_new_default(out: *mut *mut MopoSolverConfig) -> MopoStatus {
    guard(|| put(out, MopoSolverConfig(SolverConfig::default())))
}

/// Fixed-threshold configuration with no KL slack and no lagged reference.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_new_constrained(out: *mut *mut MopoSolverConfig) -> MopoStatus {
    guard(|| {
        put(
            out,
            MopoSolverConfig(SolverConfig::constrained(PolicyShape::Bandit { n: 3 })),
        )
    })
}

/// Entropy/KL temperature τ.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_tau(cfg: *mut MopoSolverConfig, value: f64) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.tau = value;
        Ok(())
    })
}

/// KL slack ε of the lower bound.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_epsilon(cfg: *mut MopoSolverConfig, value: f64) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.epsilon = value;
        Ok(())
    })
}

/// Step size η shared by all updates.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_eta(cfg: *mut MopoSolverConfig, value: f64) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.eta = value;
        Ok(())
    })
}

/// RNG seed.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_seed(cfg: *mut MopoSolverConfig, value: u64) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.seed = value;
        Ok(())
    })
}

/// Number of training steps.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_epochs(cfg: *mut MopoSolverConfig, value: usize) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.epochs = value;
        Ok(())
    })
}

/// Lag between reference swaps and threshold refreshes.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_t0(cfg: *mut MopoSolverConfig, value: usize) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.t0 = value;
        Ok(())
    })
}

/// Records per mini-batch.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_batch_size(cfg: *mut MopoSolverConfig, value: usize) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.batch_size = value;
        Ok(())
    })
}

/// Mini-batches drawn per step.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_batches_per_step(cfg: *mut MopoSolverConfig, value: usize) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.batches_per_step = value;
        Ok(())
    })
}

/// Initial χ.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_chi_init(cfg: *mut MopoSolverConfig, value: f64) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.chi_init = value;
        Ok(())
    })
}

/// Cap on each λ.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_lambda_max(cfg: *mut MopoSolverConfig, value: f64) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.lambda_max = value;
        Ok(())
    })
}

/// Enables or disables symmetric augmentation.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_augment(cfg: *mut MopoSolverConfig, value: bool) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.augment = value;
        Ok(())
    })
}

/// Sets a single β broadcast to all constraints.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_beta(cfg: *mut MopoSolverConfig, beta: f64) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.beta = vec![beta];
        Ok(())
    })
}

/// Tabular policy over `n` actions.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_bandit(cfg: *mut MopoSolverConfig, n: usize) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.policy_shape = PolicyShape::Bandit { n };
        Ok(())
    })
}

/// Context×action grid policy.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_set_grid(
    cfg: *mut MopoSolverConfig,
    bx: usize,
    by: usize,
) -> MopoStatus {
    guard(|| {
        get_mut(cfg, "config")?.0.policy_shape = PolicyShape::Grid { bx, by };
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mopo_config_free(cfg: *mut MopoSolverConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Trains on `ds` and stores the result handle in `out`.
///
/// # Safety
/// Handles must be live; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn mopo_train(
    cfg: *const MopoSolverConfig,
    ds: *const MopoDataset,
    out: *mut *mut MopoTrainResult,
) -> MopoStatus {
    guard(|| {
        let r = solver::train(&get(cfg, "config")?.0, &get(ds, "dataset")?.0)?;
        put(out, MopoTrainResult(r))
    })
}

/// Length of the flattened probability table, or 0 for null.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_result_num_probs(res: *const MopoTrainResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.final_policy.logits().len())
}

/// Row-major final policy probabilities.
///
/// # Safety
/// `res` must be live; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mopo_result_probabilities(
    res: *const MopoTrainResult,
    buf: *mut f64,
    len: usize,
) -> MopoStatus {
    guard(|| copy_out(&get(res, "result")?.0.final_policy.probabilities(), buf, len))
}

/// Number of constraints (K − 1), or 0 for null.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_result_num_constraints(res: *const MopoTrainResult) -> usize {
    res.as_ref()
        .and_then(|r| r.0.history.last())
        .map_or(0, |s| s.lambda.len())
}

/// Final multipliers λ.
///
/// # Safety
/// `res` must be live; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mopo_result_lambda(
    res: *const MopoTrainResult,
    buf: *mut f64,
    len: usize,
) -> MopoStatus {
    guard(|| {
        let r = get(res, "result")?;
        let last = r.0.history.last().ok_or_else(|| {
            Fail(MopoStatus::Other, "result has no history".into())
        })?;
        copy_out(&last.lambda, buf, len)
    })
}

/// Number of recorded steps, or 0 for null.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_result_history_len(res: *const MopoTrainResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.history.len())
}

/// # Safety
/// `res` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mopo_result_free(res: *mut MopoTrainResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Bradley-Terry win probability of reward `r` over `r_prime`.
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn mopo_bt_prob(
    r: f64,
    r_prime: f64,
    form: MopoBtForm,
    out: *mut f64,
) -> MopoStatus {
    guard(|| {
        let form = match form {
            MopoBtForm::Logistic => BtForm::Logistic,
            MopoBtForm::Ratio => BtForm::Ratio,
        };
        let p = synth::bt_prob(r, r_prime, form)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = p;
        Ok(())
    })
}

/// Non-dominated subset of `n_points` points with `k` objectives each,
/// given row-major in `values`.
///
/// # Safety
/// `values` must hold `n_points * k` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mopo_front_from_points(
    values: *const f64,
    n_points: usize,
    k: usize,
    out: *mut *mut MopoFront,
) -> MopoStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if k == 0 {
            return Err(Fail(MopoStatus::InvalidArgument, "k must be positive".into()));
        }
        let flat = std::slice::from_raw_parts(values, n_points * k);
        let pts: Vec<ObjectivePoint> = flat
            .chunks(k)
            .map(|c| ObjectivePoint::new(c.to_vec()))
            .collect();
        put(out, MopoFront(pareto::pareto_front(&pts)?))
    })
}

/// Scalarization-sweep front of a synthetic reward set.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mopo_ground_truth_front(
    set: MopoRewardSet,
    grid_x: usize,
    grid_y: usize,
    w_steps: usize,
    out: *mut *mut MopoFront,
) -> MopoStatus {
    guard(|| {
        let f = pareto::ground_truth_front(reward_set(set), grid_x, grid_y, w_steps)?;
        put(out, MopoFront(f))
    })
}

/// Number of front points, or 0 for null.
///
/// # Safety
/// `front` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mopo_front_len(front: *const MopoFront) -> usize {
    front.as_ref().map_or(0, |f| f.0.len())
}

/// Normalized dominated distance of a `k`-objective point to the front.
///
/// # Safety
/// `front` must be live; `point` must hold `k` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mopo_dominated_distance(
    front: *const MopoFront,
    point: *const f64,
    k: usize,
    out: *mut f64,
) -> MopoStatus {
    guard(|| {
        let f = get(front, "front")?;
        if point.is_null() {
            return Err(null("point"));
        }
        let p = ObjectivePoint::new(std::slice::from_raw_parts(point, k).to_vec());
        if f.0.points.first().is_some_and(|q| q.k() != k) {
            return Err(Fail(MopoStatus::InvalidArgument, "objective count mismatch".into()));
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(Fail(MopoStatus::InvalidArgument, "point is not finite".into()));
        }
        *out.as_mut().ok_or_else(|| null("output pointer"))? = pareto::dominated_distance(&p, &f.0);
        Ok(())
    })
}

/// # Safety
/// `front` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mopo_front_free(front: *mut MopoFront) {
    if !front.is_null() {
        drop(Box::from_raw(front));
    }
}
