//! Time-stepping schemes for high-index saddle dynamics.
//!
//! Three explicit Euler variants are provided. The Gram-Schmidt scheme
//! advances the state with the reflected force and pushes each direction
//! along J(x) v before a sequential Gram-Schmidt pass; the
//! Lagrange-multiplier scheme augments the direction predictor with the
//! multiplier terms that keep the continuous dynamics on the Stiefel
//! manifold; the sphere-constrained scheme adds the normalization retraction
//! and the tangent transport of the directions. Evaluators for the
//! continuous-form right-hand sides back the recovery-residual studies.

use nalgebra::DVector;

use crate::error::{HisdError, Result};
use crate::manifold::{
    gram_schmidt, sphere_retract, svd_projection_retract, tangent_project, Frame,
    DEFAULT_DEGENERACY_TOL,
};
use crate::model::{dimer_hv, DimerParams, EnergyModel};

/// Norm threshold beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Predictor without multiplier terms; Gram-Schmidt enforces the frame
    /// constraint.
    UnconstrainedGs,
    /// Predictor keeps the Lagrange-multiplier terms; the trailing
    /// Gram-Schmidt pass is retained so both schemes land exactly on the
    /// Stiefel manifold and differ only in the predictor.
    UnconstrainedLm,
    /// Sphere-constrained dynamics with normalization retraction and tangent
    /// transport; relaxation parameters are fixed to 1.
    ConstrainedSphere,
}

impl Scheme {
    pub fn is_constrained(self) -> bool {
        matches!(self, Scheme::ConstrainedSphere)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::UnconstrainedGs => "unconstrained_gs",
            Scheme::UnconstrainedLm => "unconstrained_lm",
            Scheme::ConstrainedSphere => "constrained_sphere",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retraction {
    /// Sequential Gram-Schmidt pass over the predicted directions.
    GramSchmidt,
    /// Nearest-orthonormal (polar) projection of the whole predicted frame.
    SvdProjection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HessianMode {
    Analytic,
    Dimer(DimerParams),
}

/// Parameters of a single saddle-dynamics run.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Time step.
    pub tau: f64,
    /// Relaxation of the state equation.
    pub beta: f64,
    /// Relaxation of the direction equations.
    pub gamma: f64,
    /// Number of directions k (the target saddle index).
    pub index_k: usize,
    /// End time T; the run takes round(T / tau) steps.
    pub horizon: f64,
    pub retraction: Retraction,
    pub hessian_mode: HessianMode,
    /// Relative degeneracy tolerance of the orthonormalization kernels.
    pub gs_tol: f64,
    /// Optional early stop on |F(x_n)| below this value. Off by default so
    /// error tables follow the fixed-horizon protocol.
    pub early_stop_grad_norm: Option<f64>,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, tau: f64, index_k: usize, horizon: f64) -> Self {
        SchemeConfig {
            scheme,
            tau,
            beta: 1.0,
            gamma: 1.0,
            index_k,
            horizon,
            retraction: Retraction::GramSchmidt,
            hessian_mode: HessianMode::Analytic,
            gs_tol: DEFAULT_DEGENERACY_TOL,
            early_stop_grad_norm: None,
        }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        let mut cfg = self.clone();
        cfg.tau = tau;
        cfg
    }

    pub fn num_steps(&self) -> usize {
        (self.horizon / self.tau).round() as usize
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let fail = |msg: String| Err(HisdError::Config(msg));
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return fail(format!("tau must be positive and finite, got {}", self.tau));
        }
        if self.horizon <= 0.0 || !self.horizon.is_finite() {
            return fail(format!("T must be positive and finite, got {}", self.horizon));
        }
        if self.tau > self.horizon {
            return fail(format!(
                "tau = {} exceeds the horizon T = {}",
                self.tau, self.horizon
            ));
        }
        if self.index_k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.index_k > dim {
            return fail(format!(
                "k = {} exceeds the model dimension d = {dim}",
                self.index_k
            ));
        }
        if self.beta <= 0.0 || self.gamma <= 0.0 || self.beta.is_nan() || self.gamma.is_nan() {
            return fail(format!(
                "relaxation parameters must be positive, got beta = {}, gamma = {}",
                self.beta, self.gamma
            ));
        }
        if self.scheme.is_constrained() && (self.beta != 1.0 || self.gamma != 1.0) {
            return fail(format!(
                "the constrained scheme requires beta = gamma = 1, got beta = {}, gamma = {}",
                self.beta, self.gamma
            ));
        }
        if self.scheme.is_constrained() && self.retraction == Retraction::SvdProjection {
            return fail(
                "retraction = svd_projection is only defined for the unconstrained schemes"
                    .into(),
            );
        }
        if self.gs_tol <= 0.0 || self.gs_tol.is_nan() {
            return fail(format!("gs_tol must be positive, got {}", self.gs_tol));
        }
        if let HessianMode::Dimer(params) = self.hessian_mode {
            params.validate()?;
        }
        Ok(())
    }
}

/// One iterate of the dynamics: the state x, the directional frame, and the
/// step index with its time t = n tau.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState {
    pub x: DVector<f64>,
    pub frame: Frame,
    pub step: usize,
    pub time: f64,
}

impl SaddleState {
    pub fn initial(x: DVector<f64>, frame: Frame) -> Self {
        SaddleState {
            x,
            frame,
            step: 0,
            time: 0.0,
        }
    }

    fn advanced(&self, x: DVector<f64>, frame: Frame, tau: f64) -> Self {
        let step = self.step + 1;
        SaddleState {
            x,
            frame,
            step,
            time: step as f64 * tau,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|a| a.is_finite()) && self.frame.is_finite()
    }
}

/// An ordered record of every state of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SaddleState>,
    pub config: SchemeConfig,
    pub model_name: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &SaddleState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Spacing of the recorded time grid.
    pub fn grid_spacing(&self) -> f64 {
        self.config.tau
    }

    /// Keeps only the states commensurate with a coarser grid of spacing
    /// `keep_tau`; states are re-indexed on the kept grid.
    pub fn subsample(&self, keep_tau: f64) -> Result<Trajectory> {
        let stride = grid_ratio(keep_tau, self.grid_spacing()).ok_or_else(|| {
            HisdError::Config(format!(
                "subsampling grid {keep_tau} is not a multiple of the recorded grid {}",
                self.grid_spacing()
            ))
        })?;
        let states = self
            .states
            .iter()
            .step_by(stride)
            .enumerate()
            .map(|(m, s)| SaddleState {
                x: s.x.clone(),
                frame: s.frame.clone(),
                step: m,
                time: m as f64 * keep_tau,
            })
            .collect();
        let mut config = self.config.clone();
        config.tau = keep_tau;
        Ok(Trajectory {
            states,
            config,
            model_name: self.model_name.clone(),
        })
    }
}

/// Integer ratio coarse/fine of two commensurate grid spacings.
pub(crate) fn grid_ratio(coarse: f64, fine: f64) -> Option<usize> {
    if coarse <= 0.0 || fine <= 0.0 || coarse.is_nan() || fine.is_nan() {
        return None;
    }
    let ratio = coarse / fine;
    let rounded = ratio.round();
    if rounded >= 1.0 && (ratio - rounded).abs() <= 1e-9 * ratio {
        Some(rounded as usize)
    } else {
        None
    }
}

fn hessian_apply(
    model: &dyn EnergyModel,
    cfg: &SchemeConfig,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    match cfg.hessian_mode {
        HessianMode::Analytic => Ok(model.neg_hessian_apply(x, v)),
        HessianMode::Dimer(params) => dimer_hv(model, x, v, params),
    }
}

/// `beta (I - 2 sum_j v_j v_j^T) F`.
fn reflected_force(force: &DVector<f64>, frame: &Frame, beta: f64) -> DVector<f64> {
    let mut s = force.clone();
    for v in frame.columns() {
        s.axpy(-2.0 * force.dot(&v), &v, 1.0);
    }
    s * beta
}

/// Multiplier terms `gamma (-v_i v_i^T - 2 sum_{j<i} v_j v_j^T) J v_i`,
/// with `jv = J(x) v_i` already evaluated and `prev` the directions j < i.
fn multiplier_terms(
    vi: &DVector<f64>,
    jv: &DVector<f64>,
    prev: &[DVector<f64>],
    gamma: f64,
) -> DVector<f64> {
    let mut l = vi * (-vi.dot(jv));
    for vj in prev {
        l.axpy(-2.0 * vj.dot(jv), vj, 1.0);
    }
    l * gamma
}

fn retract_frame(cfg: &SchemeConfig, raw: Vec<DVector<f64>>) -> Result<Frame> {
    match cfg.retraction {
        Retraction::GramSchmidt => {
            let mut done: Vec<DVector<f64>> = Vec::with_capacity(raw.len());
            for (i, r) in raw.iter().enumerate() {
                let basis = Frame::from_vectors_unchecked(&done);
                let v = gram_schmidt(&basis, r, cfg.gs_tol).map_err(|e| match e {
                    HisdError::DegenerateDirection { residual, .. } => {
                        HisdError::DegenerateDirection { index: i, residual }
                    }
                    other => other,
                })?;
                done.push(v);
            }
            Ok(Frame::from_vectors_unchecked(&done))
        }
        Retraction::SvdProjection => {
            let m = Frame::from_vectors_unchecked(&raw);
            svd_projection_retract(m.as_matrix(), cfg.gs_tol)
        }
    }
}

fn ensure_finite(state: SaddleState) -> Result<SaddleState> {
    if state.is_finite() {
        Ok(state)
    } else {
        Err(HisdError::Divergence {
            step: state.step,
            norm: f64::INFINITY,
        })
    }
}

fn step_unconstrained(
    state: &SaddleState,
    model: &dyn EnergyModel,
    cfg: &SchemeConfig,
    with_multipliers: bool,
) -> Result<SaddleState> {
    // All predictors evaluate at the old x and the old frame.
    let force = model.neg_gradient(&state.x);
    let s = reflected_force(&force, &state.frame, cfg.beta);
    let x_new = &state.x + cfg.tau * s;

    let old: Vec<DVector<f64>> = state.frame.columns().collect();
    let mut raw = Vec::with_capacity(old.len());
    for (i, vi) in old.iter().enumerate() {
        let jv = hessian_apply(model, cfg, &state.x, vi)?;
        let mut predicted = vi + cfg.tau * cfg.gamma * &jv;
        if with_multipliers {
            predicted += cfg.tau * multiplier_terms(vi, &jv, &old[..i], cfg.gamma);
        }
        raw.push(predicted);
    }
    let frame = retract_frame(cfg, raw)?;
    ensure_finite(state.advanced(x_new, frame, cfg.tau))
}

/// One step of the Gram-Schmidt scheme.
pub fn step_unconstrained_gs(
    state: &SaddleState,
    model: &dyn EnergyModel,
    cfg: &SchemeConfig,
) -> Result<SaddleState> {
    step_unconstrained(state, model, cfg, false)
}

/// One step of the Lagrange-multiplier scheme.
pub fn step_unconstrained_lm(
    state: &SaddleState,
    model: &dyn EnergyModel,
    cfg: &SchemeConfig,
) -> Result<SaddleState> {
    step_unconstrained(state, model, cfg, true)
}

/// One step of the sphere-constrained scheme. The tangent projection uses
/// the retracted x_n, not the old state.
pub fn step_constrained(
    state: &SaddleState,
    model: &dyn EnergyModel,
    cfg: &SchemeConfig,
) -> Result<SaddleState> {
    let force = model.neg_gradient(&state.x);
    let s = reflected_force(&force, &state.frame, cfg.beta);
    let x_tilde = &state.x + cfg.tau * s;
    let x_new = sphere_retract(&x_tilde)?;

    let old: Vec<DVector<f64>> = state.frame.columns().collect();
    let mut raw = Vec::with_capacity(old.len());
    for vi in &old {
        let jv = hessian_apply(model, cfg, &state.x, vi)?;
        let predicted = vi + cfg.tau * cfg.gamma * jv;
        raw.push(tangent_project(&predicted, &x_new));
    }
    let frame = retract_frame(cfg, raw)?;
    ensure_finite(state.advanced(x_new, frame, cfg.tau))
}

pub fn step(
    state: &SaddleState,
    model: &dyn EnergyModel,
    cfg: &SchemeConfig,
) -> Result<SaddleState> {
    match cfg.scheme {
        Scheme::UnconstrainedGs => step_unconstrained_gs(state, model, cfg),
        Scheme::UnconstrainedLm => step_unconstrained_lm(state, model, cfg),
        Scheme::ConstrainedSphere => step_constrained(state, model, cfg),
    }
}

/// Continuous right-hand side of the unconstrained dynamics at the given
/// state: `dx = S`, `dv_i = R_i + L_i`. Pure evaluation.
pub fn recovered_rhs(
    state: &SaddleState,
    model: &dyn EnergyModel,
    cfg: &SchemeConfig,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let force = model.neg_gradient(&state.x);
    let s = reflected_force(&force, &state.frame, cfg.beta);
    let old: Vec<DVector<f64>> = state.frame.columns().collect();
    let mut dvs = Vec::with_capacity(old.len());
    for (i, vi) in old.iter().enumerate() {
        let jv = hessian_apply(model, cfg, &state.x, vi)?;
        dvs.push(cfg.gamma * &jv + multiplier_terms(vi, &jv, &old[..i], cfg.gamma));
    }
    Ok((s, dvs))
}

/// Continuous right-hand side of the sphere-constrained dynamics
/// (relaxation parameters 1): `dx = S - x x^T F`,
/// `dv_i = R_i + L_i - x x^T J v_i + x v_i^T F`.
pub fn constrained_rhs(
    state: &SaddleState,
    model: &dyn EnergyModel,
) -> (DVector<f64>, Vec<DVector<f64>>) {
    let x = &state.x;
    let force = model.neg_gradient(x);
    let s = reflected_force(&force, &state.frame, 1.0);
    let dx = &s - x * x.dot(&force);
    let old: Vec<DVector<f64>> = state.frame.columns().collect();
    let mut dvs = Vec::with_capacity(old.len());
    for (i, vi) in old.iter().enumerate() {
        let jv = model.neg_hessian_apply(x, vi);
        let mut dv = &jv + multiplier_terms(vi, &jv, &old[..i], 1.0);
        dv.axpy(-x.dot(&jv), x, 1.0);
        dv.axpy(vi.dot(&force), x, 1.0);
        dvs.push(dv);
    }
    (dx, dvs)
}

/// Runs the selected scheme for round(T / tau) steps, recording every state.
///
/// The initial frame is stored as given; a frame that is not orthonormal (or
/// not tangent, for the constrained scheme) is absorbed by the first step's
/// orthonormalization pass. States from step 1 on satisfy the manifold
/// constraints by construction.
pub fn run(
    model: &dyn EnergyModel,
    init: &SaddleState,
    cfg: &SchemeConfig,
) -> Result<Trajectory> {
    let dim = model.dim();
    cfg.validate(dim)?;
    if init.x.len() != dim {
        return Err(HisdError::Config(format!(
            "x0 has length {} but the model has dimension {dim}",
            init.x.len()
        )));
    }
    if init.frame.dim() != dim || init.frame.count() != cfg.index_k {
        return Err(HisdError::Config(format!(
            "v0 is a {}x{} frame but the run needs {dim}x{}",
            init.frame.dim(),
            init.frame.count(),
            cfg.index_k
        )));
    }

    let n_steps = cfg.num_steps();
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(SaddleState::initial(init.x.clone(), init.frame.clone()));
    for _ in 0..n_steps {
        let next = step(states.last().expect("non-empty"), model, cfg)?;
        let norm = next.x.norm();
        if norm > DIVERGENCE_NORM {
            return Err(HisdError::Divergence {
                step: next.step,
                norm,
            });
        }
        let stop = cfg
            .early_stop_grad_norm
            .is_some_and(|eps| model.neg_gradient(&next.x).norm() < eps);
        states.push(next);
        if stop {
            break;
        }
    }
    Ok(Trajectory {
        states,
        config: cfg.clone(),
        model_name: model.name().to_owned(),
    })
}

/// Per-step distances between the discrete increments and the recovered
/// continuous right-hand sides:
/// `|(v_{i,n} - v_{i,n-1}) / tau - dv_i(state_{n-1})|` per direction, and the
/// x analogue. For the unconstrained schemes the x update is exactly Euler,
/// so its residual is zero to roundoff.
#[derive(Debug, Clone)]
pub struct ResidualSeries {
    /// Times t_n for n = 1..N.
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// Indexed `[direction][step - 1]`.
    pub v: Vec<Vec<f64>>,
}

impl ResidualSeries {
    pub fn max_x(&self) -> f64 {
        self.x.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_v(&self) -> f64 {
        self.v
            .iter()
            .flat_map(|series| series.iter().copied())
            .fold(0.0, f64::max)
    }
}

pub fn residual_vs_recovered(
    traj: &Trajectory,
    model: &dyn EnergyModel,
) -> Result<ResidualSeries> {
    let cfg = &traj.config;
    let tau = cfg.tau;
    let k = cfg.index_k;
    let n_incr = traj.len().saturating_sub(1);
    let mut series = ResidualSeries {
        times: Vec::with_capacity(n_incr),
        x: Vec::with_capacity(n_incr),
        v: vec![Vec::with_capacity(n_incr); k],
    };
    for pair in traj.states.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let (dx, dvs) = if cfg.scheme.is_constrained() {
            constrained_rhs(prev, model)
        } else {
            recovered_rhs(prev, model, cfg)?
        };
        series.times.push(cur.time);
        series.x.push(((&cur.x - &prev.x) / tau - dx).norm());
        for (i, dv) in dvs.iter().enumerate() {
            let incr = (cur.frame.column(i) - prev.frame.column(i)) / tau;
            series.v[i].push((incr - dv).norm());
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_double_well, Quadratic};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn unit2(a: f64, b: f64) -> DVector<f64> {
        let v = dvector![a, b];
        let n = v.norm();
        v / n
    }

    fn index1_init() -> SaddleState {
        SaddleState::initial(
            dvector![1.0, 0.5],
            Frame::from_vectors_unchecked(&[unit2(-1.0, -1.0)]),
        )
    }

    #[test]
    fn gs_step_matches_hand_evaluation() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 7.0);
        let next = step_unconstrained_gs(&index1_init(), &model, &cfg).unwrap();
        // F(x0) = (0, 0.5), I - 2 v v^T = [[0,-1],[-1,0]], S = (-0.5, 0).
        assert_relative_eq!(next.x[0], 0.995, epsilon = 1e-15);
        assert_relative_eq!(next.x[1], 0.5, epsilon = 1e-15);
        // v_tilde = (-1.02, -1.01)/sqrt(2), then normalization.
        assert_relative_eq!(next.frame.column(0)[0], -0.7105814441973987, epsilon = 1e-14);
        assert_relative_eq!(next.frame.column(0)[1], -0.7036149594503653, epsilon = 1e-14);
        assert_eq!(next.step, 1);
        assert_relative_eq!(next.time, 0.01);
    }

    #[test]
    fn lm_step_matches_hand_evaluation() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedLm, 0.01, 1, 7.0);
        let next = step_unconstrained_lm(&index1_init(), &model, &cfg).unwrap();
        // R = (-2,-1)/sqrt(2), v^T J v = 1.5, L = (1.5,1.5)/sqrt(2),
        // v_tilde = (-1.005, -0.995)/sqrt(2), then normalization.
        assert_relative_eq!(next.x[0], 0.995, epsilon = 1e-15);
        assert_relative_eq!(next.frame.column(0)[0], -0.7106334322300949, epsilon = 1e-14);
        assert_relative_eq!(next.frame.column(0)[1], -0.7035624528049199, epsilon = 1e-14);
    }

    #[test]
    fn stationary_point_with_eigenvector_frame_is_fixed() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 7.0);
        // F(0,0) = 0 and e1 is an eigenvector of J(0,0) = diag(-1,1); the
        // Gram-Schmidt normalization cancels the scalar stretch 1 + tau gamma lambda.
        let init = SaddleState::initial(
            dvector![0.0, 0.0],
            Frame::from_vectors_unchecked(&[dvector![1.0, 0.0]]),
        );
        let next = step_unconstrained_gs(&init, &model, &cfg).unwrap();
        assert!((next.x - &init.x).norm() <= 1e-14);
        assert!((next.frame.column(0) - init.frame.column(0)).norm() <= 1e-14);

        let next_lm = step_unconstrained_lm(&init, &model, &cfg).unwrap();
        assert!((next_lm.frame.column(0) - init.frame.column(0)).norm() <= 1e-14);
    }

    #[test]
    fn constrained_step_keeps_stationary_pole_fixed() {
        // E = (x1^2 + 2 x2^2) / 2 on the circle; the pole (1,0) with tangent
        // (0,1) is a constrained stationary point.
        let model = Quadratic::from_diagonal(&[1.0, 2.0]).unwrap();
        let cfg = SchemeConfig::new(Scheme::ConstrainedSphere, 0.1, 1, 7.0);
        let init = SaddleState::initial(
            dvector![1.0, 0.0],
            Frame::from_vectors_unchecked(&[dvector![0.0, 1.0]]),
        );
        let next = step_constrained(&init, &model, &cfg).unwrap();
        assert!((next.x - dvector![1.0, 0.0]).norm() <= 1e-15);
        assert!((next.frame.column(0) - dvector![0.0, 1.0]).norm() <= 1e-15);
    }

    #[test]
    fn constrained_step_matches_hand_evaluation() {
        let model = Quadratic::from_diagonal(&[1.0, 2.0]).unwrap();
        let cfg = SchemeConfig::new(Scheme::ConstrainedSphere, 0.1, 1, 7.0);
        let init = SaddleState::initial(
            unit2(1.0, 1.0),
            Frame::from_vectors_unchecked(&[unit2(-1.0, 1.0)]),
        );
        let next = step_constrained(&init, &model, &cfg).unwrap();
        // S = (-2,-1)/sqrt(2), x_tilde = (0.8, 0.9)/sqrt(2), |x_tilde| ~ 0.851469.
        assert_relative_eq!(next.x[0], 0.6643638388299198, epsilon = 1e-14);
        assert_relative_eq!(next.x[1], 0.7474093186836598, epsilon = 1e-14);
        assert_relative_eq!(next.frame.column(0)[0], -0.7474093186836598, epsilon = 1e-13);
        assert_relative_eq!(next.frame.column(0)[1], 0.6643638388299198, epsilon = 1e-13);
    }

    #[test]
    fn constrained_step_enforces_sphere_and_tangency() {
        let model = Quadratic::from_diagonal(&[1.0, 2.0]).unwrap();
        let cfg = SchemeConfig::new(Scheme::ConstrainedSphere, 0.1, 1, 7.0);
        let init = SaddleState::initial(
            unit2(0.3, -0.95),
            Frame::from_vectors_unchecked(&[unit2(0.95, 0.3)]),
        );
        let next = step_constrained(&init, &model, &cfg).unwrap();
        assert!((next.x.norm() - 1.0).abs() <= 1e-14);
        assert!(next.frame.max_tangency_defect(&next.x) <= 1e-14);
        assert!(next.frame.orthonormality_defect() <= 1e-14);
    }

    #[test]
    fn recovered_rhs_matches_hand_evaluation() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 7.0);
        let (dx, dv) = recovered_rhs(&index1_init(), &model, &cfg).unwrap();
        assert_relative_eq!(dx[0], -0.5, epsilon = 1e-14);
        assert_relative_eq!(dx[1], 0.0, epsilon = 1e-14);
        // dv1 = R1 + L1 = (-2,-1)/sqrt(2) + (1.5,1.5)/sqrt(2) = (-0.5,0.5)/sqrt(2).
        assert_relative_eq!(dv[0][0], -0.35355339059327395, epsilon = 1e-14);
        assert_relative_eq!(dv[0][1], 0.3535533905932735, epsilon = 1e-14);
    }

    #[test]
    fn rhs_vanishes_at_stationary_state_with_eigenvector_frame() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 2, 7.0);
        let state = SaddleState::initial(
            dvector![1.0, 0.0],
            Frame::from_vectors_unchecked(&[dvector![1.0, 0.0], dvector![0.0, 1.0]]),
        );
        let (dx, dv) = recovered_rhs(&state, &model, &cfg).unwrap();
        assert!(dx.norm() <= 1e-14);
        for d in dv {
            assert!(d.norm() <= 1e-14);
        }
    }

    #[test]
    fn constrained_rhs_matches_hand_evaluation() {
        let model = Quadratic::from_diagonal(&[1.0, 2.0]).unwrap();
        let state = SaddleState::initial(
            dvector![1.0, 0.0],
            Frame::from_vectors_unchecked(&[dvector![0.0, 1.0]]),
        );
        let (dx, dv) = constrained_rhs(&state, &model);
        assert!(dx.norm() <= 1e-15);
        assert!(dv[0].norm() <= 1e-15);
    }

    #[test]
    fn constrained_rhs_is_tangent() {
        let model = Quadratic::random_symmetric(4, 3).unwrap();
        let x = sphere_retract(&dvector![0.3, -1.0, 0.7, 0.2]).unwrap();
        let raw = [
            tangent_project(&dvector![1.0, 0.2, -0.3, 0.5], &x),
            tangent_project(&dvector![-0.4, 0.9, 1.0, -0.2], &x),
        ];
        let frame = crate::manifold::orthonormalize_frame(&raw, 1e-10).unwrap();
        let state = SaddleState::initial(x.clone(), frame);
        let (dx, _) = constrained_rhs(&state, &model);
        assert!(dx.dot(&x).abs() <= 1e-14);
    }

    #[test]
    fn constrained_one_step_residual_is_second_order() {
        let model = Quadratic::from_diagonal(&[1.0, 2.0]).unwrap();
        let init = SaddleState::initial(
            unit2(1.0, 1.0),
            Frame::from_vectors_unchecked(&[unit2(-1.0, 1.0)]),
        );
        let (dx, dv) = constrained_rhs(&init, &model);
        let residual = |tau: f64| {
            let cfg = SchemeConfig::new(Scheme::ConstrainedSphere, tau, 1, 7.0);
            let next = step_constrained(&init, &model, &cfg).unwrap();
            let rx = (&next.x - &init.x - tau * &dx).norm();
            let rv = (next.frame.column(0) - init.frame.column(0) - tau * &dv[0]).norm();
            (rx, rv)
        };
        let (rx1, rv1) = residual(0.1);
        let (rx2, rv2) = residual(0.05);
        let (rx3, rv3) = residual(0.025);
        for ratio in [rx1 / rx2, rx2 / rx3, rv1 / rv2, rv2 / rv3] {
            assert!((3.0..=5.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn run_reaches_the_index1_saddle() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 7.0);
        let traj = run(&model, &index1_init(), &cfg).unwrap();
        assert_eq!(traj.len(), 701);
        assert!(traj.final_state().x.norm() <= 1e-2);
    }

    #[test]
    fn run_reaches_the_index2_saddle() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 2, 7.0);
        let init = SaddleState::initial(
            dvector![1.3, 0.5],
            Frame::from_vectors_unchecked(&[
                unit2(-1.0, -1.0),
                dvector![-2.0, -1.0] / 5.0f64.sqrt(),
            ]),
        );
        let traj = run(&model, &init, &cfg).unwrap();
        assert!((traj.final_state().x.clone() - dvector![1.0, 0.0]).norm() <= 1e-2);
        // orthonormality holds after every completed step even though the
        // initial v2 is not orthogonal to v1
        for state in &traj.states[1..] {
            assert!(state.frame.orthonormality_defect() <= 1e-12);
        }
    }

    #[test]
    fn single_step_horizon_equals_step_operation() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 0.01);
        let traj = run(&model, &index1_init(), &cfg).unwrap();
        assert_eq!(traj.len(), 2);
        let single = step_unconstrained_gs(&index1_init(), &model, &cfg).unwrap();
        assert_eq!(traj.final_state().x, single.x);
        assert_eq!(
            traj.final_state().frame.as_matrix(),
            single.frame.as_matrix()
        );
    }

    #[test]
    fn run_is_deterministic() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 2.0f64.powi(-6), 1, 7.0);
        let a = run(&model, &index1_init(), &cfg).unwrap();
        let b = run(&model, &index1_init(), &cfg).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa.x, sb.x);
            assert_eq!(sa.frame.as_matrix(), sb.frame.as_matrix());
        }
    }

    #[test]
    fn run_rejects_mismatched_init() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 2, 7.0);
        // frame holds one direction, config wants two
        assert!(matches!(
            run(&model, &index1_init(), &cfg),
            Err(HisdError::Config(_))
        ));
    }

    #[test]
    fn run_detects_divergence() {
        // E = -|x|^4 style blow-up: use a quadratic with a strongly unstable
        // reflected direction and a huge step so Euler explodes.
        let model = Quadratic::from_diagonal(&[-4.0, 1.0]).unwrap();
        let mut cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 1.0, 1, 200.0);
        cfg.gamma = 1e-9;
        let init = SaddleState::initial(
            dvector![1.0, 1.0],
            Frame::from_vectors_unchecked(&[dvector![0.0, 1.0]]),
        );
        let err = run(&model, &init, &cfg).unwrap_err();
        assert!(matches!(err, HisdError::Divergence { .. }));
    }

    #[test]
    fn dimer_mode_tracks_analytic_mode() {
        let model = make_double_well();
        let analytic = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 1.0);
        let mut dimer = analytic.clone();
        dimer.hessian_mode = HessianMode::Dimer(DimerParams::default());
        let ta = run(&model, &index1_init(), &analytic).unwrap();
        let td = run(&model, &index1_init(), &dimer).unwrap();
        let max_gap = ta
            .states
            .iter()
            .zip(&td.states)
            .map(|(a, b)| {
                (&a.x - &b.x).norm()
                    + (a.frame.as_matrix() - b.frame.as_matrix()).norm()
            })
            .fold(0.0f64, f64::max);
        // dimer truncation is O(l^2) = 1e-6 per application
        assert!(max_gap <= 1e-4, "gap {max_gap:.3e}");
        assert!(max_gap > 0.0);
    }

    #[test]
    fn svd_retraction_variant_stays_orthonormal_and_close_to_gs() {
        let model = make_double_well();
        let gs = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 2, 2.0);
        let mut svd = gs.clone();
        svd.retraction = Retraction::SvdProjection;
        let init = SaddleState::initial(
            dvector![1.3, 0.5],
            crate::manifold::orthonormalize_frame(
                &[unit2(-1.0, -1.0), dvector![-2.0, -1.0] / 5.0f64.sqrt()],
                1e-10,
            )
            .unwrap(),
        );
        let ta = run(&model, &init, &gs).unwrap();
        let tb = run(&model, &init, &svd).unwrap();
        for state in &tb.states[1..] {
            assert!(state.frame.orthonormality_defect() <= 1e-12);
        }
        let gap = (&ta.final_state().x - &tb.final_state().x).norm();
        assert!(gap <= 0.05, "final gap {gap}");
    }

    #[test]
    fn svd_retraction_rejected_for_constrained_scheme() {
        let mut cfg = SchemeConfig::new(Scheme::ConstrainedSphere, 0.01, 1, 1.0);
        cfg.retraction = Retraction::SvdProjection;
        assert!(matches!(cfg.validate(2), Err(HisdError::Config(_))));
    }

    #[test]
    fn first_step_residual_matches_hand_evaluation() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 0.01);
        let traj = run(&model, &index1_init(), &cfg).unwrap();
        let series = residual_vs_recovered(&traj, &model).unwrap();
        assert_relative_eq!(series.v[0][0], 0.007494010710116804, epsilon = 1e-12);
        // the x update is exactly Euler; only division roundoff remains
        assert!(series.max_x() <= 1e-13);
    }

    #[test]
    fn residual_is_zero_on_quadratic_eigenvector_run() {
        let model = Quadratic::from_diagonal(&[-1.0, 2.0]).unwrap();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.0625, 1, 2.0);
        let init = SaddleState::initial(
            dvector![0.8, -0.6],
            Frame::from_vectors_unchecked(&[dvector![1.0, 0.0]]),
        );
        let traj = run(&model, &init, &cfg).unwrap();
        let series = residual_vs_recovered(&traj, &model).unwrap();
        assert!(series.max_v() <= 1e-13, "max {:.3e}", series.max_v());
    }

    #[test]
    fn residual_max_halves_with_tau() {
        let model = make_double_well();
        let max_at = |tau: f64| {
            let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, tau, 1, 7.0);
            let traj = run(&model, &index1_init(), &cfg).unwrap();
            residual_vs_recovered(&traj, &model).unwrap().max_v()
        };
        let ratio = max_at(0.01) / max_at(0.005);
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let good = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 7.0);
        assert!(good.validate(2).is_ok());
        assert!(good.with_tau(0.0).validate(2).is_err());
        assert!(good.with_tau(8.0).validate(2).is_err());
        let mut k_too_big = good.clone();
        k_too_big.index_k = 3;
        assert!(k_too_big.validate(2).is_err());
        let mut bad_beta = good.clone();
        bad_beta.beta = -1.0;
        assert!(bad_beta.validate(2).is_err());
        let mut con = SchemeConfig::new(Scheme::ConstrainedSphere, 0.01, 1, 7.0);
        con.gamma = 2.0;
        assert!(con.validate(2).is_err());
    }

    #[test]
    fn early_stop_truncates_the_trajectory() {
        let model = make_double_well();
        let mut cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.01, 1, 7.0);
        cfg.early_stop_grad_norm = Some(1e-2);
        let traj = run(&model, &index1_init(), &cfg).unwrap();
        assert!(traj.len() < 701, "stopped after {} states", traj.len());
        let grad = model.neg_gradient(&traj.final_state().x).norm();
        assert!(grad < 1e-2);
    }

    #[test]
    fn trajectory_subsample_reindexes() {
        let model = make_double_well();
        let cfg = SchemeConfig::new(Scheme::UnconstrainedGs, 0.125, 1, 1.0);
        let traj = run(&model, &index1_init(), &cfg).unwrap();
        let sub = traj.subsample(0.25).unwrap();
        assert_eq!(sub.len(), 5);
        assert_eq!(sub.states[2].step, 2);
        assert_relative_eq!(sub.states[2].time, 0.5);
        assert_eq!(sub.states[2].x, traj.states[4].x);
        assert!(traj.subsample(0.3).is_err());
    }

    #[test]
    fn frames_stay_orthonormal_across_schemes() {
        let model = make_double_well();
        for scheme in [Scheme::UnconstrainedGs, Scheme::UnconstrainedLm] {
            let cfg = SchemeConfig::new(scheme, 2.0f64.powi(-6), 1, 7.0);
            let traj = run(&model, &index1_init(), &cfg).unwrap();
            for state in &traj.states {
                assert!(state.frame.orthonormality_defect() <= 1e-12);
            }
        }
    }

    #[test]
    fn lm_and_gs_coincide_on_eigenvector_quadratic() {
        // axis-aligned eigenvector and dyadic step: both predictors collapse
        // to the same normalized direction exactly
        let model = Quadratic::from_diagonal(&[-1.0, 2.0]).unwrap();
        let init = SaddleState::initial(
            dvector![0.8, -0.6],
            Frame::from_vectors_unchecked(&[dvector![1.0, 0.0]]),
        );
        let gs = SchemeConfig::new(Scheme::UnconstrainedGs, 0.0625, 1, 2.0);
        let lm = SchemeConfig::new(Scheme::UnconstrainedLm, 0.0625, 1, 2.0);
        let ta = run(&model, &init, &gs).unwrap();
        let tb = run(&model, &init, &lm).unwrap();
        for (a, b) in ta.states.iter().zip(&tb.states) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.frame.as_matrix(), b.frame.as_matrix());
        }
    }

    #[test]
    fn grid_ratio_accepts_multiples_only() {
        assert_eq!(grid_ratio(0.25, 0.125), Some(2));
        assert_eq!(grid_ratio(0.125, 0.125), Some(1));
        assert_eq!(grid_ratio(0.3, 0.125), None);
        assert_eq!(grid_ratio(0.125, 0.25), None);
    }
}
