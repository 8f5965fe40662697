//! Convergence laboratory: reference-solution generation, max-in-time error
//! norms, convergence-rate tables, scheme-difference time series and
//! recovery-residual order studies.

use nalgebra::DVector;

use crate::error::{HisdError, Result};
use crate::model::EnergyModel;
use crate::scheme::{
    grid_ratio, residual_vs_recovered, run, SaddleState, Scheme, SchemeConfig, Trajectory,
};

/// Residuals below this floor are reported as exact rather than fitted.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Per-step-size max-in-time errors against a reference run, with the
/// convergence rates of consecutive rows. `rates_*[i]` belongs to the row of
/// the smaller step `taus[i + 1]`.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub taus: Vec<f64>,
    pub errors_x: Vec<f64>,
    /// Indexed `[row][direction]`.
    pub errors_v: Vec<Vec<f64>>,
    pub rates_x: Vec<f64>,
    /// Indexed `[row - 1][direction]`.
    pub rates_v: Vec<Vec<f64>>,
    pub reference_tau: f64,
    pub scheme: Scheme,
}

impl ConvergenceReport {
    pub fn directions(&self) -> usize {
        self.errors_v.first().map_or(0, Vec::len)
    }
}

/// Pointwise difference norms between two schemes advanced in lockstep.
#[derive(Debug, Clone)]
pub struct DifferenceSeries {
    pub tau: f64,
    pub t_grid: Vec<f64>,
    /// `|x_n - X_n|` per step.
    pub dx: Vec<f64>,
    /// `|v_{1,n} - V_{1,n}|` per step.
    pub dv1: Vec<f64>,
}

impl DifferenceSeries {
    pub fn max_dx(&self) -> f64 {
        self.dx.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_dv1(&self) -> f64 {
        self.dv1.iter().copied().fold(0.0, f64::max)
    }
}

/// Slope of a residual-order fit, or `Exact` when every residual sits at the
/// roundoff floor (both sides of the recovered identity vanish).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualOrder {
    Exact,
    Slope(f64),
}

impl ResidualOrder {
    pub fn slope(&self) -> Option<f64> {
        match self {
            ResidualOrder::Exact => None,
            ResidualOrder::Slope(s) => Some(*s),
        }
    }
}

/// Max recovery residuals per step size with fitted log-log slopes.
#[derive(Debug, Clone)]
pub struct ResidualOrderStudy {
    pub taus: Vec<f64>,
    pub max_x: Vec<f64>,
    pub max_v: Vec<f64>,
    pub order_x: ResidualOrder,
    pub order_v: ResidualOrder,
}

/// The canonical reference variant for a scheme family: the Gram-Schmidt
/// scheme for the unconstrained pair, the constrained scheme for itself.
fn reference_scheme(scheme: Scheme) -> Scheme {
    match scheme {
        Scheme::UnconstrainedGs | Scheme::UnconstrainedLm => Scheme::UnconstrainedGs,
        Scheme::ConstrainedSphere => Scheme::ConstrainedSphere,
    }
}

/// Runs the canonical reference at `ref_tau` and keeps only the states on the
/// grid of `cfg.tau` (which `ref_tau` must divide).
pub fn reference_solution(
    model: &dyn EnergyModel,
    init: &SaddleState,
    cfg: &SchemeConfig,
    ref_tau: f64,
) -> Result<Trajectory> {
    if grid_ratio(cfg.tau, ref_tau).is_none() {
        return Err(HisdError::Config(format!(
            "reference step {ref_tau} does not divide the experiment step {}",
            cfg.tau
        )));
    }
    let full = run_reference(model, init, cfg, ref_tau)?;
    full.subsample(cfg.tau)
}

fn run_reference(
    model: &dyn EnergyModel,
    init: &SaddleState,
    cfg: &SchemeConfig,
    ref_tau: f64,
) -> Result<Trajectory> {
    let mut ref_cfg = cfg.with_tau(ref_tau);
    ref_cfg.scheme = reference_scheme(cfg.scheme);
    run(model, init, &ref_cfg)
}

/// Max-over-time errors between two trajectories at their shared grid times:
/// `max_n |x_n - x_ref(t_n)|` and the per-direction analogues.
pub fn max_error(traj: &Trajectory, reference: &Trajectory) -> Result<(f64, Vec<f64>)> {
    let k = traj.config.index_k;
    if reference.config.index_k != k {
        return Err(HisdError::Config(format!(
            "direction counts differ: {} vs {}",
            k, reference.config.index_k
        )));
    }
    let (st, sr) = (traj.grid_spacing(), reference.grid_spacing());
    let shared = st.max(sr);
    let (stride_t, stride_r) = match (grid_ratio(shared, st), grid_ratio(shared, sr)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(HisdError::Config(format!(
                "trajectory grids {st} and {sr} share no common refinement"
            )))
        }
    };
    let points = ((traj.len() - 1) / stride_t).min((reference.len() - 1) / stride_r) + 1;
    let mut e_x = 0.0f64;
    let mut e_v = vec![0.0f64; k];
    for m in 0..points {
        let a = &traj.states[m * stride_t];
        let b = &reference.states[m * stride_r];
        e_x = e_x.max((&a.x - &b.x).norm());
        for (i, acc) in e_v.iter_mut().enumerate() {
            *acc = acc.max((a.frame.column(i) - b.frame.column(i)).norm());
        }
    }
    Ok((e_x, e_v))
}

fn validate_tau_family(taus: &[f64], ref_tau: f64) -> Result<()> {
    if taus.is_empty() {
        return Err(HisdError::Config("tau list is empty".into()));
    }
    for pair in taus.windows(2) {
        if pair[1] >= pair[0] || pair[1].is_nan() {
            return Err(HisdError::Config(format!(
                "tau values must be strictly decreasing, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    for &tau in taus {
        if tau <= ref_tau {
            return Err(HisdError::Config(format!(
                "tau = {tau} must be coarser than the reference step ref_tau = {ref_tau}"
            )));
        }
        if grid_ratio(tau, ref_tau).is_none() {
            return Err(HisdError::Config(format!(
                "ref_tau = {ref_tau} does not divide tau = {tau}"
            )));
        }
    }
    Ok(())
}

/// Runs the scheme at each step size, measures max-in-time errors on each
/// run's own grid against one shared reference run at `ref_tau`, and fits the
/// rate `log2(e(2 tau) / e(tau))` between consecutive rows (generalized to
/// the actual step ratio).
pub fn convergence_table(
    model: &dyn EnergyModel,
    init: &SaddleState,
    cfg: &SchemeConfig,
    taus: &[f64],
    ref_tau: f64,
) -> Result<ConvergenceReport> {
    validate_tau_family(taus, ref_tau)?;
    let reference = run_reference(model, init, &cfg.with_tau(taus[0]), ref_tau)?;

    let mut errors_x = Vec::with_capacity(taus.len());
    let mut errors_v = Vec::with_capacity(taus.len());
    for &tau in taus {
        let traj = run(model, init, &cfg.with_tau(tau))?;
        let (e_x, e_v) = max_error(&traj, &reference)?;
        errors_x.push(e_x);
        errors_v.push(e_v);
    }

    let rate = |coarse: f64, fine: f64, ratio: f64| (coarse / fine).ln() / ratio.ln();
    let mut rates_x = Vec::new();
    let mut rates_v = Vec::new();
    for i in 1..taus.len() {
        let ratio = taus[i - 1] / taus[i];
        rates_x.push(rate(errors_x[i - 1], errors_x[i], ratio));
        rates_v.push(
            (0..cfg.index_k)
                .map(|d| rate(errors_v[i - 1][d], errors_v[i][d], ratio))
                .collect(),
        );
    }
    Ok(ConvergenceReport {
        taus: taus.to_vec(),
        errors_x,
        errors_v,
        rates_x,
        rates_v,
        reference_tau: ref_tau,
        scheme: cfg.scheme,
    })
}

/// Advances two schemes from the same initial state at the same step and
/// records the pointwise difference norms.
pub fn difference_series_between(
    model: &dyn EnergyModel,
    init: &SaddleState,
    cfg: &SchemeConfig,
    tau: f64,
    scheme_a: Scheme,
    scheme_b: Scheme,
) -> Result<DifferenceSeries> {
    if scheme_a.is_constrained() != scheme_b.is_constrained() {
        return Err(HisdError::Config(
            "cannot compare a constrained scheme with an unconstrained one".into(),
        ));
    }
    let mut cfg_a = cfg.with_tau(tau);
    cfg_a.scheme = scheme_a;
    let mut cfg_b = cfg.with_tau(tau);
    cfg_b.scheme = scheme_b;
    let ta = run(model, init, &cfg_a)?;
    let tb = run(model, init, &cfg_b)?;
    let mut series = DifferenceSeries {
        tau,
        t_grid: Vec::with_capacity(ta.len()),
        dx: Vec::with_capacity(ta.len()),
        dv1: Vec::with_capacity(ta.len()),
    };
    for (a, b) in ta.states.iter().zip(&tb.states) {
        series.t_grid.push(a.time);
        series.dx.push((&a.x - &b.x).norm());
        series
            .dv1
            .push((a.frame.column(0) - b.frame.column(0)).norm());
    }
    Ok(series)
}

/// Difference series between the Gram-Schmidt and Lagrange-multiplier
/// schemes from a shared initial state.
pub fn scheme_difference_series(
    model: &dyn EnergyModel,
    init: &SaddleState,
    cfg: &SchemeConfig,
    tau: f64,
) -> Result<DifferenceSeries> {
    difference_series_between(
        model,
        init,
        cfg,
        tau,
        Scheme::UnconstrainedGs,
        Scheme::UnconstrainedLm,
    )
}

fn least_squares_slope(log_taus: &[f64], log_residuals: &[f64]) -> f64 {
    let n = log_taus.len() as f64;
    let mean_x = log_taus.iter().sum::<f64>() / n;
    let mean_y = log_residuals.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in log_taus.iter().zip(log_residuals) {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}

fn fit_order(taus: &[f64], residuals: &[f64]) -> ResidualOrder {
    let max = residuals.iter().copied().fold(0.0f64, f64::max);
    if max < RESIDUAL_FLOOR || taus.len() < 2 {
        return ResidualOrder::Exact;
    }
    let lx: Vec<f64> = taus.iter().map(|t| t.log2()).collect();
    let ly: Vec<f64> = residuals
        .iter()
        .map(|r| r.max(f64::MIN_POSITIVE).log2())
        .collect();
    ResidualOrder::Slope(least_squares_slope(&lx, &ly))
}

/// Runs the scheme across a family of step sizes, takes the max-over-time
/// recovery residual per size, and fits the slope of log residual against
/// log step. A slope near one confirms the first-order remainder of the
/// recovered dynamics.
pub fn residual_order_study(
    model: &dyn EnergyModel,
    init: &SaddleState,
    cfg: &SchemeConfig,
    taus: &[f64],
) -> Result<ResidualOrderStudy> {
    if taus.is_empty() {
        return Err(HisdError::Config("tau list is empty".into()));
    }
    for pair in taus.windows(2) {
        if pair[1] >= pair[0] || pair[1].is_nan() {
            return Err(HisdError::Config(
                "tau values must be strictly decreasing".into(),
            ));
        }
    }
    let mut max_x = Vec::with_capacity(taus.len());
    let mut max_v = Vec::with_capacity(taus.len());
    for &tau in taus {
        let traj = run(model, init, &cfg.with_tau(tau))?;
        let series = residual_vs_recovered(&traj, model)?;
        max_x.push(series.max_x());
        max_v.push(series.max_v());
    }
    Ok(ResidualOrderStudy {
        taus: taus.to_vec(),
        order_x: fit_order(taus, &max_x),
        order_v: fit_order(taus, &max_v),
        max_x,
        max_v,
    })
}

/// Largest per-step direction velocity `max_{i,n} |v_{i,n} - v_{i,n-1}| / tau`
/// over a finished run.
pub fn max_step_difference_rate(traj: &Trajectory) -> f64 {
    let tau = traj.config.tau;
    let mut max = 0.0f64;
    for pair in traj.states.windows(2) {
        for i in 0..traj.config.index_k {
            let d = (pair[1].frame.column(i) - pair[0].frame.column(i)).norm() / tau;
            max = max.max(d);
        }
    }
    max
}

/// Closed-form flow of the state equation for a quadratic energy with an
/// eigenvector frame: with constant orthonormal directions the dynamics is
/// the linear system `dx/dt = beta (I - 2 sum v_j v_j^T) (-A) x`.
pub fn quadratic_exact_flow(
    matrix: &nalgebra::DMatrix<f64>,
    frame: &crate::manifold::Frame,
    beta: f64,
    x0: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let dim = matrix.nrows();
    let mut m = -matrix.clone();
    for v in frame.columns() {
        let correction = 2.0 * (&v * (v.transpose() * matrix));
        m += correction;
    }
    m *= beta;
    // dense matrix exponential via scaling-and-squaring on the small system
    let exp = exp_matrix(&(m * t), dim);
    exp * x0
}

fn exp_matrix(a: &nalgebra::DMatrix<f64>, dim: usize) -> nalgebra::DMatrix<f64> {
    let norm = a.abs().max();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2.0f64.powi(squarings as i32);
    let mut result = nalgebra::DMatrix::identity(dim, dim);
    let mut term = nalgebra::DMatrix::identity(dim, dim);
    for order in 1..=16 {
        term = (&term * &scaled) / order as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
