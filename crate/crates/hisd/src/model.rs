//! Energy-model abstraction: energy E, negative gradient F = -grad E and the
//! matrix-free action of the negative Hessian J = -hess E, plus the built-in
//! benchmark landscapes, the dimer approximation of J(x)v and
//! finite-difference self-checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HisdError, Result};

/// An energy landscape evaluated matrix-free.
///
/// `neg_hessian_apply` exposes J = -hess E only through its action on
/// vectors, so the time-stepping schemes run identically whether J comes from
/// analytic second derivatives or from a dimer (finite-difference)
/// approximation. Implementations must be re-entrant and side-effect free;
/// they are shared read-only across concurrent parameter sweeps.
pub trait EnergyModel: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    fn energy(&self, x: &DVector<f64>) -> f64;
    /// F(x) = -grad E(x).
    fn neg_gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// J(x) v = -hess E(x) v.
    fn neg_hessian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

/// The two-dimensional benchmark landscape
/// `E(x, y) = -1/4 (x^2 - 1)^2 - 1/2 y^2`.
///
/// (0, 0) is an index-1 saddle point and (+-1, 0) are index-2 saddle points.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWell;

pub fn make_double_well() -> DoubleWell {
    DoubleWell
}

impl EnergyModel for DoubleWell {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "double_well"
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        let a = x[0] * x[0] - 1.0;
        -0.25 * a * a - 0.5 * x[1] * x[1]
    }

    fn neg_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0] * x[0] * x[0] - x[0], x[1]])
    }

    fn neg_hessian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![(3.0 * x[0] * x[0] - 1.0) * v[0], v[1]])
    }
}

/// Quadratic energy `E(x) = 1/2 x^T A x` with symmetric A. Its negative
/// Hessian action is exact under the dimer approximation (third derivatives
/// vanish), and with an eigenvector frame the saddle dynamics reduces to a
/// linear constant-coefficient flow with a closed-form solution.
#[derive(Debug, Clone)]
pub struct Quadratic {
    matrix: DMatrix<f64>,
}

impl Quadratic {
    /// Builds the model from a square matrix, symmetrizing `(A + A^T) / 2`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(HisdError::Config(format!(
                "quadratic energy needs a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let sym = 0.5 * (&matrix + matrix.transpose());
        Ok(Quadratic { matrix: sym })
    }

    pub fn from_diagonal(diagonal: &[f64]) -> Result<Self> {
        if diagonal.is_empty() {
            return Err(HisdError::Config("empty diagonal".into()));
        }
        Ok(Quadratic {
            matrix: DMatrix::from_diagonal(&DVector::from_row_slice(diagonal)),
        })
    }

    /// Seed-fixed random symmetric matrix with entries drawn uniformly from
    /// [-1, 1) before symmetrization.
    pub fn random_symmetric(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(HisdError::Config("dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        Quadratic::new(raw)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl EnergyModel for Quadratic {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn name(&self) -> &str {
        "quadratic"
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.matrix * x))
    }

    fn neg_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.matrix * x)
    }

    fn neg_hessian_apply(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        -(&self.matrix * v)
    }
}

/// Double well with a deliberately wrong gradient. Self-test fixture for the
/// check command's negative control; never use for actual searches.
#[derive(Debug, Clone, Copy, Default)]
pub struct CorruptedDoubleWell;

impl EnergyModel for CorruptedDoubleWell {
    fn dim(&self) -> usize {
        2
    }

    fn name(&self) -> &str {
        "double_well_corrupted"
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        DoubleWell.energy(x)
    }

    fn neg_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DoubleWell.neg_gradient(x);
        g[1] += 1e-3;
        g
    }

    fn neg_hessian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DoubleWell.neg_hessian_apply(x, v)
    }
}

/// Parameters of the dimer approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimerParams {
    /// Half-length l of the symmetric displacement.
    pub half_length: f64,
}

impl Default for DimerParams {
    fn default() -> Self {
        DimerParams { half_length: 1e-3 }
    }
}

impl DimerParams {
    pub fn validate(&self) -> Result<()> {
        if self.half_length <= 0.0 || !self.half_length.is_finite() {
            return Err(HisdError::Config(format!(
                "dimer half_length must be positive and finite, got {}",
                self.half_length
            )));
        }
        Ok(())
    }
}

/// Dimer approximation of the negative-Hessian action:
/// `(F(x + l v) - F(x - l v)) / (2 l) = J(x) v + O(l^2)`.
///
/// Exact on quadratic energies. Costs two gradient evaluations.
pub fn dimer_hv(
    model: &dyn EnergyModel,
    x: &DVector<f64>,
    v: &DVector<f64>,
    params: DimerParams,
) -> Result<DVector<f64>> {
    params.validate()?;
    if v.norm() == 0.0 {
        return Err(HisdError::Evaluation(
            "dimer direction is the zero vector".into(),
        ));
    }
    let l = params.half_length;
    let forward = model.neg_gradient(&(x + l * v));
    let backward = model.neg_gradient(&(x - l * v));
    let out = (forward - backward) / (2.0 * l);
    if !out.iter().all(|a| a.is_finite()) {
        return Err(HisdError::Evaluation(format!(
            "non-finite gradient in dimer evaluation at |x| = {:.3e}",
            x.norm()
        )));
    }
    Ok(out)
}

/// Discrepancies reported by [`finite_difference_check`].
#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    /// max_i |central-difference dE/dx_i + F_i|
    pub gradient_discrepancy: f64,
    /// max over probes of max_i |central-difference (dF v)_i - (J v)_i|
    pub hessian_discrepancy: f64,
}

/// Checks the analytic F against central differences of E, and the analytic
/// J v against central differences of F, over a fixed probe set (coordinate
/// directions plus the normalized all-ones vector).
pub fn finite_difference_check(
    model: &dyn EnergyModel,
    x: &DVector<f64>,
    h: f64,
) -> Result<CheckReport> {
    if h <= 0.0 || !h.is_finite() {
        return Err(HisdError::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let dim = model.dim();
    if x.len() != dim {
        return Err(HisdError::Config(format!(
            "point has length {} but the model has dimension {dim}",
            x.len()
        )));
    }

    let f = model.neg_gradient(x);
    let mut grad_disc = 0.0f64;
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        let de = (model.energy(&(x + h * &e)) - model.energy(&(x - h * &e))) / (2.0 * h);
        grad_disc = grad_disc.max((de + f[i]).abs());
    }

    let mut probes: Vec<DVector<f64>> = (0..dim)
        .map(|i| {
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            e
        })
        .collect();
    probes.push(DVector::from_element(dim, 1.0 / (dim as f64).sqrt()));

    let mut hess_disc = 0.0f64;
    for v in &probes {
        let dfv = (model.neg_gradient(&(x + h * v)) - model.neg_gradient(&(x - h * v)))
            / (2.0 * h);
        let jv = model.neg_hessian_apply(x, v);
        hess_disc = hess_disc.max((dfv - jv).abs().max());
    }

    Ok(CheckReport {
        gradient_discrepancy: grad_disc,
        hessian_discrepancy: hess_disc,
    })
}

/// Built-in models selectable by name. `quadratic` needs parameters and is
/// constructed through [`Quadratic`] instead.
pub fn builtin_model(name: &str) -> Option<Box<dyn EnergyModel>> {
    match name {
        "double_well" => Some(Box::new(DoubleWell)),
        "double_well_corrupted" => Some(Box::new(CorruptedDoubleWell)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn double_well_values_at_stationary_points() {
        let m = make_double_well();
        assert_relative_eq!(m.energy(&dvector![0.0, 0.0]), -0.25);
        assert_eq!(m.neg_gradient(&dvector![0.0, 0.0]), dvector![0.0, 0.0]);
        // J(0,0) = diag(-1, 1): hess E has exactly one negative eigenvalue.
        assert_eq!(
            m.neg_hessian_apply(&dvector![0.0, 0.0], &dvector![1.0, 0.0]),
            dvector![-1.0, 0.0]
        );
        assert_eq!(
            m.neg_hessian_apply(&dvector![0.0, 0.0], &dvector![0.0, 1.0]),
            dvector![0.0, 1.0]
        );
        // J(1,0) = diag(2, 1): hess E negative definite, index-2 saddle.
        assert_eq!(
            m.neg_hessian_apply(&dvector![1.0, 0.0], &dvector![1.0, 0.0]),
            dvector![2.0, 0.0]
        );
        assert_eq!(
            m.neg_hessian_apply(&dvector![1.0, 0.0], &dvector![0.0, 1.0]),
            dvector![0.0, 1.0]
        );
    }

    #[test]
    fn double_well_derivatives_match_finite_differences_at_random_points() {
        let m = make_double_well();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let report = finite_difference_check(&m, &x, 1e-4).unwrap();
            assert!(report.gradient_discrepancy <= 1e-6, "at {x:?}");
            assert!(report.hessian_discrepancy <= 1e-6, "at {x:?}");
        }
    }

    #[test]
    fn hessian_action_is_linear_and_symmetric() {
        let m = make_double_well();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let u = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let w = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let (a, b) = (0.7, -1.3);
            let lin = m.neg_hessian_apply(&x, &(a * &u + b * &w))
                - a * m.neg_hessian_apply(&x, &u)
                - b * m.neg_hessian_apply(&x, &w);
            assert!(lin.norm() <= 1e-10 * (u.norm() + w.norm()));
            let sym =
                u.dot(&m.neg_hessian_apply(&x, &w)) - w.dot(&m.neg_hessian_apply(&x, &u));
            assert!(sym.abs() <= 1e-10);
        }
    }

    #[test]
    fn dimer_approximates_hessian_action() {
        let m = make_double_well();
        let got = dimer_hv(
            &m,
            &dvector![0.0, 0.0],
            &dvector![1.0, 0.0],
            DimerParams { half_length: 1e-3 },
        )
        .unwrap();
        // analytic J(0,0) (1,0) = (-1, 0); symmetric-difference error is l^2.
        assert!((got - dvector![-1.0, 0.0]).norm() <= 1e-5);
    }

    #[test]
    fn dimer_is_exact_on_quadratics() {
        let q = Quadratic::new(nalgebra::dmatrix![2.0, 0.5; 0.5, -1.0]).unwrap();
        let x = dvector![0.3, -0.8];
        let v = dvector![1.0, 2.0];
        for l in [1e-1, 1e-2, 1e-3] {
            let got = dimer_hv(&q, &x, &v, DimerParams { half_length: l }).unwrap();
            let want = q.neg_hessian_apply(&x, &v);
            assert!((got - want).norm() <= 1e-12);
        }
    }

    #[test]
    fn dimer_rejects_zero_direction() {
        let m = make_double_well();
        let err = dimer_hv(
            &m,
            &dvector![0.0, 0.0],
            &dvector![0.0, 0.0],
            DimerParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, HisdError::Evaluation(_)));
    }

    #[test]
    fn dimer_error_scales_quadratically_in_half_length() {
        let m = make_double_well();
        let x = dvector![0.3, -0.7];
        let v = dvector![0.6, 0.8];
        let exact = m.neg_hessian_apply(&x, &v);
        let err = |l: f64| {
            (dimer_hv(&m, &x, &v, DimerParams { half_length: l }).unwrap() - &exact).norm()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        let ratio = e1 / e2;
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn finite_difference_check_on_probe_point() {
        let m = make_double_well();
        let report = finite_difference_check(&m, &dvector![0.3, -0.7], 1e-4).unwrap();
        assert!(report.gradient_discrepancy <= 1e-6);
        assert!(report.hessian_discrepancy <= 1e-6);
    }

    #[test]
    fn finite_difference_check_exact_on_linear_energy() {
        struct Linear;
        impl EnergyModel for Linear {
            fn dim(&self) -> usize {
                3
            }
            fn name(&self) -> &str {
                "linear"
            }
            fn energy(&self, x: &DVector<f64>) -> f64 {
                2.0 * x[0] - x[1] + 0.5 * x[2]
            }
            fn neg_gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
                dvector![-2.0, 1.0, -0.5]
            }
            fn neg_hessian_apply(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(3)
            }
        }
        let report =
            finite_difference_check(&Linear, &dvector![0.4, -1.0, 2.0], 1e-3).unwrap();
        assert!(report.gradient_discrepancy <= 1e-12);
        assert!(report.hessian_discrepancy <= 1e-12);
    }

    #[test]
    fn finite_difference_check_rejects_zero_step() {
        let m = make_double_well();
        assert!(matches!(
            finite_difference_check(&m, &dvector![0.0, 0.0], 0.0),
            Err(HisdError::Config(_))
        ));
    }

    #[test]
    fn corrupted_fixture_fails_gradient_check() {
        let report =
            finite_difference_check(&CorruptedDoubleWell, &dvector![0.3, -0.7], 1e-4).unwrap();
        assert!(report.gradient_discrepancy > 1e-6);
    }

    #[test]
    fn random_symmetric_quadratic_is_deterministic_and_symmetric() {
        let a = Quadratic::random_symmetric(5, 42).unwrap();
        let b = Quadratic::random_symmetric(5, 42).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        let asym = (a.matrix() - a.matrix().transpose()).abs().max();
        assert_eq!(asym, 0.0);
    }
}
