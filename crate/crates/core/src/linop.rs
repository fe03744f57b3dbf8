//! Dense real operators on `R^d`: matrix exponentials, real matrix powers
//! `c^D = exp((log c) D)`, operator norms and spectral bounds.
//!
//! Dimensions are small (a handful of coordinates), so everything is dense
//! and recomputed on demand.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scaled norm threshold below which the Taylor series is summed directly.
const SCALED_NORM_TARGET: f64 = 0.5;
const MAX_TAYLOR_TERMS: usize = 40;

/// A real square matrix viewed as a linear operator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    entries: DMatrix<f64>,
}

/// Minimum and maximum real part over the spectrum of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl LinearOperator {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::Input(format!(
                "operator must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("operator has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    /// Builds a `dim x dim` operator from row-major entries.
    pub fn from_row_slice(dim: usize, values: &[f64]) -> Result<Self> {
        if dim == 0 || values.len() != dim * dim {
            return Err(Error::Input(format!(
                "expected {} row-major entries for dimension {dim}, got {}",
                dim * dim,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        row_major(&self.entries)
    }

    /// The adjoint; the transpose for real operators.
    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.transpose(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * factor,
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            entries: &self.entries * &other.entries,
        }
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.entries)
    }

    pub fn spectral_bounds(&self) -> SpectralBounds {
        spectral_bounds(&self.entries)
    }

    /// `c^self`.
    pub fn pow_of(&self, c: f64) -> Result<Self> {
        mat_pow(c, self)
    }
}

/// `c^D = exp((log c) D)` by scaling and squaring of the exponential series.
pub fn mat_pow(c: f64, exponent: &LinearOperator) -> Result<LinearOperator> {
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Domain(format!("matrix power base must be positive, got {c}")));
    }
    let log_c = c.ln();
    Ok(LinearOperator {
        entries: expm(&(exponent.matrix() * log_c)),
    })
}

/// Matrix exponential of a finite square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    // Frobenius norm bounds the operator norm from above.
    let norm = a.norm();
    let mut squarings = 0u32;
    if norm > SCALED_NORM_TARGET {
        squarings = (norm / SCALED_NORM_TARGET).log2().ceil().max(0.0) as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=MAX_TAYLOR_TERMS {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.norm() <= f64::EPSILON * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Largest singular value, from the top eigenvalue of `A^T A`.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let eig = gram.symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(0.0f64, f64::max).sqrt()
}

pub fn spectral_bounds(a: &DMatrix<f64>) -> SpectralBounds {
    let eigs = a.complex_eigenvalues();
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    for z in eigs.iter() {
        lambda_min = lambda_min.min(z.re);
        lambda_max = lambda_max.max(z.re);
    }
    SpectralBounds { lambda_min, lambda_max }
}

/// Solves the Lyapunov equation `B Y + Y B^T = S` through its Kronecker form.
///
/// Requires the spectrum of `B` to avoid pairs `λ_i + λ_j = 0`.
pub fn solve_lyapunov(b: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    // vec(B Y) = (I ⊗ B) vec(Y), vec(Y B^T) = (B ⊗ I) vec(Y) for column-major vec.
    let system = id.kronecker(b) + b.kronecker(&id);
    let rhs = DVector::from_column_slice(s.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("Lyapunov operator is singular".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Symmetric square root and inverse square root of a symmetric positive
/// semi-definite matrix. Eigenvalues below `floor` (relative to the largest)
/// make the inverse undefined and return an error.
pub fn sym_sqrt_pair(s: &DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let bottom = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if top <= 0.0 || bottom <= floor * top.max(1.0) {
        return Err(Error::Domain(format!(
            "matrix is singular or indefinite (eigenvalues in [{bottom:e}, {top:e}])"
        )));
    }
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * v.transpose();
    let inv_root = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * v.transpose();
    Ok((root, inv_root))
}

/// Smallest eigenvalue of the symmetric part of `s`.
pub fn min_sym_eigenvalue(s: &DMatrix<f64>) -> f64 {
    let sym = (s + s.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn max_abs_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Frobenius norm of `a - b` relative to the Frobenius norm of `b`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        (a - b).norm()
    } else {
        (a - b).norm() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn op(dim: usize, v: &[f64]) -> LinearOperator {
        LinearOperator::from_row_slice(dim, v).unwrap()
    }

    #[test]
    fn mat_pow_of_one_is_identity() {
        let d = op(2, &[0.7, 0.3, -0.2, 0.9]);
        assert_eq!(mat_pow(1.0, &d).unwrap(), LinearOperator::identity(2));
        assert_eq!(
            mat_pow(3.7, &LinearOperator::zeros(3)).unwrap(),
            LinearOperator::identity(3)
        );
    }

    #[test]
    fn mat_pow_diagonal() {
        let d = LinearOperator::diagonal(&[0.5, 0.75]).unwrap();
        let p = mat_pow(4.0, &d).unwrap();
        assert_relative_eq!(p.matrix()[(0, 0)], 2.0, epsilon = 1e-13);
        assert_relative_eq!(p.matrix()[(1, 1)], 2.828_427_124_746_19, epsilon = 1e-13);
        assert_eq!(p.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn mat_pow_jordan_block() {
        // exp(0.7 I + N) with N nilpotent = e^0.7 (I + N).
        let d = op(2, &[0.7, 0.1, 0.0, 0.7]);
        let p = mat_pow(std::f64::consts::E, &d).unwrap();
        let e07 = 0.7f64.exp();
        assert_relative_eq!(p.matrix()[(0, 0)], e07, epsilon = 1e-13);
        assert_relative_eq!(p.matrix()[(0, 1)], 0.1 * e07, epsilon = 1e-13);
        assert_relative_eq!(p.matrix()[(1, 1)], e07, epsilon = 1e-13);
        assert_eq!(p.matrix()[(1, 0)], 0.0);
        assert_relative_eq!(e07, 2.01375, epsilon = 1e-5);
    }

    #[test]
    fn mat_pow_rejects_bad_base() {
        let d = LinearOperator::identity(2);
        assert!(matches!(mat_pow(0.0, &d), Err(Error::Domain(_))));
        assert!(matches!(mat_pow(-1.0, &d), Err(Error::Domain(_))));
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(matches!(
            LinearOperator::from_row_slice(2, &[1.0, f64::NAN, 0.0, 1.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn operator_norm_examples() {
        assert_relative_eq!(LinearOperator::identity(2).operator_norm(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(
            LinearOperator::diagonal(&[3.0, 4.0]).unwrap().operator_norm(),
            4.0,
            epsilon = 1e-14
        );
        let golden = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert_relative_eq!(op(2, &[1.0, 1.0, 0.0, 1.0]).operator_norm(), golden, epsilon = 1e-13);
        assert_relative_eq!(golden, 1.61803, epsilon = 1e-5);
    }

    #[test]
    fn spectral_bounds_examples() {
        let b = LinearOperator::diagonal(&[0.6, 0.8]).unwrap().spectral_bounds();
        assert_relative_eq!(b.lambda_min, 0.6, epsilon = 1e-14);
        assert_relative_eq!(b.lambda_max, 0.8, epsilon = 1e-14);
        let b = op(2, &[0.75, 0.05, 0.05, 0.75]).spectral_bounds();
        assert_relative_eq!(b.lambda_min, 0.7, epsilon = 1e-13);
        assert_relative_eq!(b.lambda_max, 0.8, epsilon = 1e-13);
        let b = op(2, &[0.0, -1.0, 1.0, 0.0]).spectral_bounds();
        assert!(b.lambda_min.abs() < 1e-14 && b.lambda_max.abs() < 1e-14);
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(LinearOperator::identity(3).adjoint(), LinearOperator::identity(3));
        assert_eq!(op(2, &[1.0, 2.0, 3.0, 4.0]).adjoint(), op(2, &[1.0, 3.0, 2.0, 4.0]));
    }

    #[test]
    fn diagonal_power_spectral_bounds() {
        let d = LinearOperator::diagonal(&[0.6, 0.8]).unwrap();
        for c in [0.3, 2.0, 17.0] {
            let b = mat_pow(c, &d).unwrap().spectral_bounds();
            let (lo, hi) = (c.powf(0.6).min(c.powf(0.8)), c.powf(0.6).max(c.powf(0.8)));
            assert_relative_eq!(b.lambda_min, lo, max_relative = 1e-12);
            assert_relative_eq!(b.lambda_max, hi, max_relative = 1e-12);
        }
    }

    #[test]
    fn norm_growth_envelope_is_bounded() {
        // Non-normal exponent: the Jordan part adds a log factor absorbed by delta.
        let d = op(2, &[0.6, 0.5, 0.0, 0.8]);
        let bounds = d.spectral_bounds();
        let delta = 0.05;
        let envelope = |exps: std::ops::RangeInclusive<i32>, step: f64, power: f64| -> f64 {
            let mut max = 0.0f64;
            let mut k = *exps.start() as f64;
            while k <= *exps.end() as f64 + 1e-9 {
                let r = 2f64.powf(k);
                let ratio = mat_pow(r, &d).unwrap().operator_norm() * r.powf(-power);
                max = max.max(ratio);
                k += step;
            }
            max
        };
        let small = bounds.lambda_min - delta;
        let large = bounds.lambda_max + delta;
        let coarse_lo = envelope(-20..=0, 1.0, small);
        let fine_lo = envelope(-20..=0, 0.25, small);
        assert!(fine_lo <= coarse_lo * 1.01, "{fine_lo} vs {coarse_lo}");
        let coarse_hi = envelope(0..=20, 1.0, large);
        let fine_hi = envelope(0..=20, 0.25, large);
        assert!(fine_hi <= coarse_hi * 1.01, "{fine_hi} vs {coarse_hi}");
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let b = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.9]);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let y = solve_lyapunov(&b, &s).unwrap();
        let resid = &b * &y + &y * b.transpose() - &s;
        assert!(resid.norm() < 1e-13);
    }

    fn matrix_strategy(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, dim * dim).prop_map(move |v| DMatrix::from_row_slice(dim, dim, &v))
    }

    proptest! {
        #[test]
        fn adjoint_is_involution(m in matrix_strategy(3)) {
            let a = LinearOperator::new(m).unwrap();
            prop_assert_eq!(a.adjoint().adjoint(), a);
        }

        #[test]
        fn submultiplicative(a in matrix_strategy(3), b in matrix_strategy(3)) {
            let ab = operator_norm(&(&a * &b));
            prop_assert!(ab <= operator_norm(&a) * operator_norm(&b) + 1e-12);
        }

        #[test]
        fn entry_sandwich(a in matrix_strategy(3)) {
            let norm = operator_norm(&a);
            let m = max_abs_entry(&a);
            prop_assert!(m <= norm + 1e-12);
            prop_assert!(norm <= 3f64.powf(1.5) * m + 1e-12);
        }

        #[test]
        fn group_law(m in matrix_strategy(2), c1 in 0.1f64..10.0, c2 in 0.1f64..10.0) {
            let d = LinearOperator::new(m * 0.5).unwrap();
            let lhs = mat_pow(c1 * c2, &d).unwrap();
            let rhs = mat_pow(c1, &d).unwrap().compose(&mat_pow(c2, &d).unwrap());
            prop_assert!(rel_frobenius(rhs.matrix(), lhs.matrix()) < 1e-10);
        }
    }
}
