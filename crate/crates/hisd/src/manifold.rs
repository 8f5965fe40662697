//! Stateless kernels for frames of orthonormal directions: Gram-Schmidt
//! orthonormalization, sphere retraction, tangent projection and the
//! nearest-orthonormal (polar) projection retraction.

use nalgebra::{DMatrix, DVector};

use crate::error::{HisdError, Result};

/// Default relative tolerance below which a projected residual is treated as
/// rank-deficient. Applied as `tol * |v_tilde|`.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-10;

/// Absolute disagreement between the subtractive normalizer
/// `Y = (|v|^2 - sum_j (v.b_j)^2)^(1/2)` and the direct residual norm above
/// which the direct norm is used instead. The subtractive form is an exact
/// algebraic identity but cancels catastrophically when `v` is nearly in the
/// span of the basis.
const NORMALIZER_CROSSCHECK_TOL: f64 = 1e-8;

/// An ordered set of k pairwise-orthonormal d-dimensional vectors, stored as
/// the columns of a d-by-k matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: DMatrix<f64>,
}

impl Frame {
    /// Builds a frame and verifies that `max |V^T V - I| <= 1e-12`.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let frame = Self::new_unchecked(columns);
        let defect = frame.orthonormality_defect();
        if defect > 1e-12 {
            return Err(HisdError::Config(format!(
                "frame columns are not orthonormal: max |V^T V - I| = {defect:.3e}"
            )));
        }
        Ok(frame)
    }

    /// Builds a frame without the orthonormality check. Used for vectors that
    /// are orthonormal by construction, and for initial frames that a scheme
    /// is expected to orthonormalize itself on its first step.
    pub fn new_unchecked(columns: DMatrix<f64>) -> Self {
        Frame { columns }
    }

    /// Builds a frame from a list of column vectors (unchecked).
    pub fn from_vectors_unchecked(vectors: &[DVector<f64>]) -> Self {
        let dim = vectors.first().map_or(0, DVector::len);
        let columns = DMatrix::from_fn(dim, vectors.len(), |r, c| vectors[c][r]);
        Frame { columns }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of directions k.
    pub fn count(&self) -> usize {
        self.columns.ncols()
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.columns.column(i).into_owned()
    }

    pub fn columns(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.count()).map(|i| self.column(i))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// `max |V^T V - I|`, the discrete Stiefel constraint violation.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.columns.transpose() * &self.columns;
        let mut defect = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - target).abs());
            }
        }
        defect
    }

    /// Largest `|v_i . x|` over the frame; zero for a frame tangent to the
    /// sphere at `x`.
    pub fn max_tangency_defect(&self, x: &DVector<f64>) -> f64 {
        self.columns()
            .map(|v| v.dot(x).abs())
            .fold(0.0f64, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.columns.iter().all(|a| a.is_finite())
    }
}

/// Orthonormalizes `v_tilde` against an orthonormal `basis`:
/// `v = (v_tilde - sum_j (v_tilde . b_j) b_j) / Y`.
///
/// The normalizer is computed both by the subtractive identity
/// `Y = (|v_tilde|^2 - sum_j (v_tilde . b_j)^2)^(1/2)` and as the direct norm
/// of the projected residual; the direct norm wins when the two disagree
/// beyond `1e-8` (cancellation guard). Inputs that lose more than half their
/// norm to the projection get a second projection pass so the output stays
/// orthogonal to the basis at the 1e-12 level. Fails with
/// [`HisdError::DegenerateDirection`] when the residual norm is at most
/// `tol * |v_tilde|`.
pub fn gram_schmidt(basis: &Frame, v_tilde: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let cols: Vec<DVector<f64>> = basis.columns().collect();
    gram_schmidt_against(&cols, v_tilde, tol, basis.count())
}

fn gram_schmidt_against(
    basis: &[DVector<f64>],
    v_tilde: &DVector<f64>,
    tol: f64,
    index: usize,
) -> Result<DVector<f64>> {
    let input_norm = v_tilde.norm();
    let mut residual = v_tilde.clone();
    let mut projection_sq = 0.0;
    for b in basis {
        let coeff = v_tilde.dot(b);
        residual.axpy(-coeff, b, 1.0);
        projection_sq += coeff * coeff;
    }
    let mut direct = residual.norm();
    let subtractive = (input_norm * input_norm - projection_sq).max(0.0).sqrt();
    let floor = tol * input_norm;

    // One projection pass loses orthogonality when it cancels most of the
    // input ("twice is enough"); reorthogonalize in that case. The scheme
    // predictors perturb an orthonormal frame by O(tau) and never take this
    // branch.
    let reorthogonalized = direct < 0.5 * input_norm;
    if reorthogonalized && direct > 0.0 {
        let first = residual.clone();
        for b in basis {
            residual.axpy(-first.dot(b), b, 1.0);
        }
        direct = residual.norm();
    }

    let normalizer = if reorthogonalized
        || (subtractive - direct).abs() > NORMALIZER_CROSSCHECK_TOL
        || subtractive <= floor
    {
        direct
    } else {
        subtractive
    };
    if normalizer <= floor || !normalizer.is_finite() {
        return Err(HisdError::DegenerateDirection {
            index,
            residual: direct,
        });
    }
    Ok(residual / normalizer)
}

/// Sequentially orthonormalizes a list of raw vectors: vector i is
/// orthonormalized against the already-produced outputs 1..i-1, not against
/// the raw inputs.
pub fn orthonormalize_frame(raw: &[DVector<f64>], tol: f64) -> Result<Frame> {
    if raw.is_empty() {
        return Err(HisdError::Config("cannot orthonormalize an empty list".into()));
    }
    let dim = raw[0].len();
    if raw.len() > dim {
        return Err(HisdError::Config(format!(
            "cannot orthonormalize {} vectors in dimension {dim}",
            raw.len()
        )));
    }
    let mut done: Vec<DVector<f64>> = Vec::with_capacity(raw.len());
    for (i, v) in raw.iter().enumerate() {
        if v.len() != dim {
            return Err(HisdError::Config(format!(
                "vector {i} has length {} but expected {dim}",
                v.len()
            )));
        }
        done.push(gram_schmidt_against(&done, v, tol, i)?);
    }
    Ok(Frame::from_vectors_unchecked(&done))
}

/// Retraction onto the unit sphere: `x_tilde / |x_tilde|`.
pub fn sphere_retract(x_tilde: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = x_tilde.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(HisdError::DegenerateDirection {
            index: 0,
            residual: norm,
        });
    }
    Ok(x_tilde / norm)
}

/// Projection onto the tangent space of the sphere at the unit vector `x`:
/// `v_tilde - (v_tilde . x) x`.
pub fn tangent_project(v_tilde: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    debug_assert!((x.norm() - 1.0).abs() <= 1e-12, "base point is not unit");
    let mut out = v_tilde.clone();
    out.axpy(-v_tilde.dot(x), x, 1.0);
    out
}

/// Nearest orthonormal matrix in Frobenius norm: the orthonormal factor of
/// the polar decomposition of `v_tilde`, computed through the singular value
/// decomposition. Rank deficiency is detected relative to the largest
/// singular value.
pub fn svd_projection_retract(v_tilde: &DMatrix<f64>, tol: f64) -> Result<Frame> {
    if v_tilde.ncols() == 0 || v_tilde.nrows() < v_tilde.ncols() {
        return Err(HisdError::Config(format!(
            "polar retraction needs a tall matrix, got {}x{}",
            v_tilde.nrows(),
            v_tilde.ncols()
        )));
    }
    let svd = v_tilde.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if smin <= tol * smax || !smin.is_finite() {
        return Err(HisdError::DegenerateDirection {
            index: 0,
            residual: smin,
        });
    }
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    Ok(Frame::new_unchecked(u * v_t))
}
