//! Experiment configuration: a single JSON document per experiment, loaded
//! and validated into a model, an initial state and a scheme configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{HisdError, Result};
use crate::manifold::{orthonormalize_frame, sphere_retract, tangent_project, Frame};
use crate::model::{builtin_model, DimerParams, EnergyModel, Quadratic};
use crate::scheme::{HessianMode, Retraction, SaddleState, Scheme, SchemeConfig};

/// Adjustment above which load-time normalization of the initial data is
/// reported on stderr.
const LOAD_ADJUSTMENT_WARN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Converge,
    Compare,
    Residual,
    Check,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    /// Full matrix of a quadratic energy (row-major rows).
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Diagonal of a quadratic energy.
    #[serde(default)]
    pub diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    Single(f64),
    List(Vec<f64>),
}

impl TauSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TauSpec::Single(t) => vec![*t],
            TauSpec::List(ts) => ts.clone(),
        }
    }

    pub fn first(&self) -> Option<f64> {
        self.values().first().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    UnconstrainedGs,
    UnconstrainedLm,
    ConstrainedSphere,
}

impl From<SchemeName> for Scheme {
    fn from(name: SchemeName) -> Scheme {
        match name {
            SchemeName::UnconstrainedGs => Scheme::UnconstrainedGs,
            SchemeName::UnconstrainedLm => Scheme::UnconstrainedLm,
            SchemeName::ConstrainedSphere => Scheme::ConstrainedSphere,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetractionName {
    GramSchmidt,
    SvdProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianModeName {
    Analytic,
    Dimer,
}

fn default_one() -> f64 {
    1.0
}

fn default_ref_tau() -> f64 {
    2.0f64.powi(-13)
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

fn default_dimer_half_length() -> f64 {
    DimerParams::default().half_length
}

fn default_gs_tol() -> f64 {
    crate::manifold::DEFAULT_DEGENERACY_TOL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: ModelSpec,
    pub scheme: SchemeName,
    pub tau: TauSpec,
    #[serde(default = "default_one")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub gamma: f64,
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<Vec<f64>>,
    #[serde(default = "default_ref_tau")]
    pub ref_tau: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub retraction: Option<RetractionName>,
    #[serde(default)]
    pub hessian_mode: Option<HessianModeName>,
    #[serde(default = "default_dimer_half_length")]
    pub dimer_half_length: f64,
    #[serde(default = "default_gs_tol")]
    pub gs_tol: f64,
    /// Orthonormalize v0 on load. Turn off to feed a raw frame to the
    /// scheme's first orthonormalization pass.
    #[serde(default = "default_true")]
    pub orthonormalize_v0: bool,
    /// Compare mode sanity flag: difference the Gram-Schmidt scheme against
    /// itself instead of against the Lagrange-multiplier scheme.
    #[serde(default)]
    pub gs_vs_gs: bool,
    #[serde(default)]
    pub early_stop_grad_norm: Option<f64>,
}

/// A loaded experiment: model, validated scheme configuration (carrying the
/// first step size) and the initial state after load-time normalization.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: Box<dyn EnergyModel>,
    pub scheme_config: SchemeConfig,
    pub init: SaddleState,
    pub taus: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HisdError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| HisdError::Config(format!("cannot parse {}: {e}", path.display())))
    }

    fn build_model(&self) -> Result<Box<dyn EnergyModel>> {
        match self.model.name.as_str() {
            "quadratic" => {
                if let Some(rows) = &self.model.matrix {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(HisdError::Config(
                            "model.matrix must be square (rows of equal length)".into(),
                        ));
                    }
                    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                    Ok(Box::new(Quadratic::new(m)?))
                } else if let Some(diag) = &self.model.diagonal {
                    Ok(Box::new(Quadratic::from_diagonal(diag)?))
                } else {
                    Err(HisdError::Config(
                        "model \"quadratic\" needs model.matrix or model.diagonal".into(),
                    ))
                }
            }
            name => builtin_model(name).ok_or_else(|| {
                HisdError::Config(format!("unknown model name \"{name}\""))
            }),
        }
    }

    /// Validates the document and assembles the runnable experiment.
    /// Initial directions are orthonormalized on load (unless disabled);
    /// for the constrained scheme the initial state is normalized onto the
    /// sphere and the directions are projected tangent first. Adjustments
    /// beyond 1e-8 are reported on stderr.
    pub fn load(self) -> Result<Experiment> {
        let model = self.build_model()?;
        let dim = model.dim();

        if self.k != self.v0.len() {
            return Err(HisdError::Config(format!(
                "field k = {} does not match the {} initial directions in v0",
                self.k,
                self.v0.len()
            )));
        }
        if self.k > dim {
            return Err(HisdError::Config(format!(
                "field k = {} exceeds the model dimension d = {dim}",
                self.k
            )));
        }
        if self.x0.len() != dim {
            return Err(HisdError::Config(format!(
                "field x0 has length {} but the model has dimension {dim}",
                self.x0.len()
            )));
        }
        for (i, v) in self.v0.iter().enumerate() {
            if v.len() != dim {
                return Err(HisdError::Config(format!(
                    "field v0[{i}] has length {} but the model has dimension {dim}",
                    v.len()
                )));
            }
        }
        let taus = self.tau.values();
        if taus.is_empty() {
            return Err(HisdError::Config("field tau is an empty list".into()));
        }

        let scheme: Scheme = self.scheme.into();
        let mut x0 = DVector::from_row_slice(&self.x0);
        let mut raw_v: Vec<DVector<f64>> =
            self.v0.iter().map(|v| DVector::from_row_slice(v)).collect();

        if scheme.is_constrained() {
            let normalized = sphere_retract(&x0)?;
            warn_if_adjusted("x0 normalized onto the sphere", (&normalized - &x0).norm());
            x0 = normalized;
            for (i, v) in raw_v.iter_mut().enumerate() {
                let projected = tangent_project(v, &x0);
                warn_if_adjusted(
                    &format!("v0[{i}] projected tangent to the sphere"),
                    (&projected - &*v).norm(),
                );
                *v = projected;
            }
        }

        let frame = if self.orthonormalize_v0 || scheme.is_constrained() {
            let frame = orthonormalize_frame(&raw_v, self.gs_tol)?;
            let adjustment = raw_v
                .iter()
                .enumerate()
                .map(|(i, v)| (frame.column(i) - v).norm())
                .fold(0.0f64, f64::max);
            warn_if_adjusted("v0 orthonormalized", adjustment);
            frame
        } else {
            Frame::from_vectors_unchecked(&raw_v)
        };

        let scheme_config = SchemeConfig {
            scheme,
            tau: taus[0],
            beta: self.beta,
            gamma: self.gamma,
            index_k: self.k,
            horizon: self.horizon,
            retraction: match self.retraction {
                Some(RetractionName::SvdProjection) => Retraction::SvdProjection,
                _ => Retraction::GramSchmidt,
            },
            hessian_mode: match self.hessian_mode {
                Some(HessianModeName::Dimer) => HessianMode::Dimer(DimerParams {
                    half_length: self.dimer_half_length,
                }),
                _ => HessianMode::Analytic,
            },
            gs_tol: self.gs_tol,
            early_stop_grad_norm: self.early_stop_grad_norm,
        };
        for &tau in &taus {
            scheme_config.with_tau(tau).validate(dim)?;
        }

        Ok(Experiment {
            model,
            scheme_config,
            init: SaddleState::initial(x0, frame),
            taus,
            config: self,
        })
    }
}

fn warn_if_adjusted(what: &str, adjustment: f64) {
    if adjustment > LOAD_ADJUSTMENT_WARN {
        eprintln!("warning: {what} (adjustment {adjustment:.3e})");
    }
}
