//! C ABI for the high-index saddle dynamics toolkit.
//!
//! Models and trajectories are opaque handles owned by Rust; every function
//! returns a status code and writes results through caller-provided buffers.
//! Each `*_new` / `hisd_run` handle must be released with the matching
//! `*_free`. All functions are safe to call from multiple threads as long as
//! each handle is used from one thread at a time.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::{DMatrix, DVector};

use hisd::manifold::Frame;
use hisd::model::{DimerParams, DoubleWell, EnergyModel, Quadratic};
use hisd::scheme::{
    run, HessianMode, Retraction, SaddleState, Scheme, SchemeConfig, Trajectory,
};
use hisd::HisdError;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HisdStatus {
    HisdOk = 0,
    /// A required pointer argument was null.
    HisdNullPointer = 1,
    /// Dimensions, indices or configuration values are invalid.
    HisdInvalidArgument = 2,
    /// A direction degenerated during orthonormalization or retraction.
    HisdDegenerate = 3,
    /// The iteration diverged.
    HisdDiverged = 4,
    /// A model evaluation failed.
    HisdEvaluationFailed = 5,
    /// Unexpected internal failure.
    HisdInternalError = 6,
}

/// Scheme selector of [`HisdRunConfig`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HisdScheme {
    HisdUnconstrainedGs = 0,
    HisdUnconstrainedLm = 1,
    HisdConstrainedSphere = 2,
}

/// Frame retraction selector of [`HisdRunConfig`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HisdRetraction {
    HisdGramSchmidt = 0,
    HisdSvdProjection = 1,
}

/// Run parameters. `dimer_half_length <= 0` selects the analytic
/// negative-Hessian action; a positive value selects the dimer
/// approximation with that half-length. `gs_tol <= 0` selects the default
/// degeneracy tolerance.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HisdRunConfig {
    pub scheme: HisdScheme,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub index_k: usize,
    pub horizon: f64,
    pub retraction: HisdRetraction,
    pub dimer_half_length: f64,
    pub gs_tol: f64,
}

/// Opaque energy-model handle.
pub struct HisdModel {
    inner: Box<dyn EnergyModel>,
}

/// Opaque trajectory handle.
pub struct HisdTrajectory {
    inner: Trajectory,
}

fn status_of(err: &HisdError) -> HisdStatus {
    match err {
        HisdError::Config(_) | HisdError::Io(_) => HisdStatus::HisdInvalidArgument,
        HisdError::DegenerateDirection { .. } => HisdStatus::HisdDegenerate,
        HisdError::Divergence { .. } => HisdStatus::HisdDiverged,
        HisdError::Evaluation(_) => HisdStatus::HisdEvaluationFailed,
    }
}

/// Creates the built-in two-dimensional double-well benchmark model.
/// Returns null only on allocation failure.
#[no_mangle]
pub extern "C" fn hisd_model_double_well_new() -> *mut HisdModel {
    Box::into_raw(Box::new(HisdModel {
        inner: Box::new(DoubleWell),
    }))
}

/// Creates a quadratic energy `E(x) = 1/2 x^T A x` from a row-major
/// `dim * dim` matrix, symmetrized as `(A + A^T) / 2`. Returns null when
/// `matrix` is null or `dim` is zero.
///
/// # Safety
/// `matrix` must point to at least `dim * dim` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn hisd_model_quadratic_new(
    dim: usize,
    matrix: *const f64,
) -> *mut HisdModel {
    if matrix.is_null() || dim == 0 {
        return ptr::null_mut();
    }
    let data = slice::from_raw_parts(matrix, dim * dim);
    let m = DMatrix::from_fn(dim, dim, |i, j| data[i * dim + j]);
    match Quadratic::new(m) {
        Ok(model) => Box::into_raw(Box::new(HisdModel {
            inner: Box::new(model),
        })),
        Err(_) => ptr::null_mut(),
    }
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be a handle returned by a `hisd_model_*_new` function that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn hisd_model_free(model: *mut HisdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension d of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live model handle or null.
#[no_mangle]
pub unsafe extern "C" fn hisd_model_dim(model: *const HisdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

unsafe fn read_vector(ptr: *const f64, len: usize) -> DVector<f64> {
    DVector::from_column_slice(slice::from_raw_parts(ptr, len))
}

/// Evaluates the energy at `x` (length `dim`).
///
/// # Safety
/// `x` must point to `dim` readable doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn hisd_model_energy(
    model: *const HisdModel,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HisdStatus {
    let Some(model) = model.as_ref() else {
        return HisdStatus::HisdNullPointer;
    };
    if x.is_null() || out.is_null() {
        return HisdStatus::HisdNullPointer;
    }
    if dim != model.inner.dim() {
        return HisdStatus::HisdInvalidArgument;
    }
    *out = model.inner.energy(&read_vector(x, dim));
    HisdStatus::HisdOk
}

/// Evaluates the negative gradient `F(x) = -grad E(x)` into `out`
/// (length `dim`).
///
/// # Safety
/// `x` and `out` must point to `dim` readable / writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hisd_model_neg_gradient(
    model: *const HisdModel,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HisdStatus {
    let Some(model) = model.as_ref() else {
        return HisdStatus::HisdNullPointer;
    };
    if x.is_null() || out.is_null() {
        return HisdStatus::HisdNullPointer;
    }
    if dim != model.inner.dim() {
        return HisdStatus::HisdInvalidArgument;
    }
    let g = model.inner.neg_gradient(&read_vector(x, dim));
    slice::from_raw_parts_mut(out, dim).copy_from_slice(g.as_slice());
    HisdStatus::HisdOk
}

/// Evaluates the negative-Hessian action `J(x) v` into `out` (length `dim`).
///
/// # Safety
/// `x`, `v` and `out` must point to `dim` readable / writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hisd_model_neg_hessian_apply(
    model: *const HisdModel,
    x: *const f64,
    v: *const f64,
    dim: usize,
    out: *mut f64,
) -> HisdStatus {
    let Some(model) = model.as_ref() else {
        return HisdStatus::HisdNullPointer;
    };
    if x.is_null() || v.is_null() || out.is_null() {
        return HisdStatus::HisdNullPointer;
    }
    if dim != model.inner.dim() {
        return HisdStatus::HisdInvalidArgument;
    }
    let jv = model
        .inner
        .neg_hessian_apply(&read_vector(x, dim), &read_vector(v, dim));
    slice::from_raw_parts_mut(out, dim).copy_from_slice(jv.as_slice());
    HisdStatus::HisdOk
}

fn scheme_config_from(cfg: &HisdRunConfig) -> SchemeConfig {
    SchemeConfig {
        scheme: match cfg.scheme {
            HisdScheme::HisdUnconstrainedGs => Scheme::UnconstrainedGs,
            HisdScheme::HisdUnconstrainedLm => Scheme::UnconstrainedLm,
            HisdScheme::HisdConstrainedSphere => Scheme::ConstrainedSphere,
        },
        tau: cfg.tau,
        beta: cfg.beta,
        gamma: cfg.gamma,
        index_k: cfg.index_k,
        horizon: cfg.horizon,
        retraction: match cfg.retraction {
            HisdRetraction::HisdGramSchmidt => Retraction::GramSchmidt,
            HisdRetraction::HisdSvdProjection => Retraction::SvdProjection,
        },
        hessian_mode: if cfg.dimer_half_length > 0.0 {
            HessianMode::Dimer(DimerParams {
                half_length: cfg.dimer_half_length,
            })
        } else {
            HessianMode::Analytic
        },
        gs_tol: if cfg.gs_tol > 0.0 {
            cfg.gs_tol
        } else {
            hisd::manifold::DEFAULT_DEGENERACY_TOL
        },
        early_stop_grad_norm: None,
    }
}

/// Runs the selected scheme from `x0` (length `dim`) and the `index_k`
/// initial directions in `v0` (row-major, `index_k * dim`). On success
/// writes a trajectory handle into `out`; the caller frees it with
/// `hisd_trajectory_free`.
///
/// # Safety
/// `x0` must point to `dim` doubles, `v0` to `index_k * dim` doubles, and
/// `out` to a writable pointer slot. `model` and `config` must be live.
#[no_mangle]
pub unsafe extern "C" fn hisd_run(
    model: *const HisdModel,
    config: *const HisdRunConfig,
    x0: *const f64,
    v0: *const f64,
    out: *mut *mut HisdTrajectory,
) -> HisdStatus {
    let Some(model) = model.as_ref() else {
        return HisdStatus::HisdNullPointer;
    };
    let Some(config) = config.as_ref() else {
        return HisdStatus::HisdNullPointer;
    };
    if x0.is_null() || v0.is_null() || out.is_null() {
        return HisdStatus::HisdNullPointer;
    }
    let dim = model.inner.dim();
    if config.index_k == 0 || config.index_k > dim {
        return HisdStatus::HisdInvalidArgument;
    }
    let x = read_vector(x0, dim);
    let v = slice::from_raw_parts(v0, config.index_k * dim);
    let columns: Vec<DVector<f64>> = (0..config.index_k)
        .map(|i| DVector::from_column_slice(&v[i * dim..(i + 1) * dim]))
        .collect();
    let init = SaddleState::initial(x, Frame::from_vectors_unchecked(&columns));
    let cfg = scheme_config_from(config);

    let result = catch_unwind(AssertUnwindSafe(|| run(model.inner.as_ref(), &init, &cfg)));
    match result {
        Ok(Ok(traj)) => {
            *out = Box::into_raw(Box::new(HisdTrajectory { inner: traj }));
            HisdStatus::HisdOk
        }
        Ok(Err(err)) => status_of(&err),
        Err(_) => HisdStatus::HisdInternalError,
    }
}

/// Releases a trajectory handle. Null is ignored.
///
/// # Safety
/// `traj` must be a handle returned by `hisd_run` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_free(traj: *mut HisdTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded states (steps + 1), or 0 for a null handle.
///
/// # Safety
/// `traj` must be a live trajectory handle or null.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_len(traj: *const HisdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// State dimension d of a trajectory, or 0 for a null handle.
///
/// # Safety
/// `traj` must be a live trajectory handle or null.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_dim(traj: *const HisdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| {
        t.inner.states.first().map_or(0, |s| s.x.len())
    })
}

/// Number of directions k of a trajectory, or 0 for a null handle.
///
/// # Safety
/// `traj` must be a live trajectory handle or null.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_index_k(traj: *const HisdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.config.index_k)
}

/// Copies state `n` out of the trajectory: the time into `time_out`, the
/// state into `x_out` (length `dim`) and the directions into `v_out`
/// (row-major, `index_k * dim`). Each output pointer may be null to skip
/// that field.
///
/// # Safety
/// Non-null output pointers must provide the buffer sizes stated above.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_state(
    traj: *const HisdTrajectory,
    n: usize,
    time_out: *mut f64,
    x_out: *mut f64,
    v_out: *mut f64,
) -> HisdStatus {
    let Some(traj) = traj.as_ref() else {
        return HisdStatus::HisdNullPointer;
    };
    let Some(state) = traj.inner.states.get(n) else {
        return HisdStatus::HisdInvalidArgument;
    };
    let dim = state.x.len();
    if !time_out.is_null() {
        *time_out = state.time;
    }
    if !x_out.is_null() {
        slice::from_raw_parts_mut(x_out, dim).copy_from_slice(state.x.as_slice());
    }
    if !v_out.is_null() {
        let k = traj.inner.config.index_k;
        let buffer = slice::from_raw_parts_mut(v_out, k * dim);
        for i in 0..k {
            let column = state.frame.column(i);
            buffer[i * dim..(i + 1) * dim].copy_from_slice(column.as_slice());
        }
    }
    HisdStatus::HisdOk
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn hisd_status_message(status: HisdStatus) -> *const c_char {
    let message: &'static [u8] = match status {
        HisdStatus::HisdOk => b"ok\0",
        HisdStatus::HisdNullPointer => b"null pointer argument\0",
        HisdStatus::HisdInvalidArgument => b"invalid argument\0",
        HisdStatus::HisdDegenerate => b"degenerate direction\0",
        HisdStatus::HisdDiverged => b"solution diverged\0",
        HisdStatus::HisdEvaluationFailed => b"model evaluation failed\0",
        HisdStatus::HisdInternalError => b"internal error\0",
    };
    message.as_ptr().cast()
}
