//! Sample correlation matrix construction, its eigendecomposition, and the
//! empirical spectral distribution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A p x n observation matrix: rows are variables, columns are samples.
///
/// Construction rejects degenerate inputs (p or n below 2, constant rows),
/// so every downstream correlation is well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps a matrix whose rows are variables.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (p, n) = (values.nrows(), values.ncols());
        if p < 2 || n < 2 {
            return Err(Error::DimensionTooSmall { p, n });
        }
        for i in 0..p {
            let row = values.row(i);
            let mean = row.sum() / n as f64;
            let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
            if ss <= 0.0 {
                return Err(Error::ConstantRow(i));
            }
        }
        Ok(Self { values })
    }

    /// Builds from row-major nested vectors; rows must share one length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if p < 2 || n < 2 {
            return Err(Error::DimensionTooSmall { p, n });
        }
        assert!(rows.iter().all(|r| r.len() == n), "rows must have equal length");
        let values = DMatrix::from_fn(p, n, |i, j| rows[i][j]);
        Self::new(values)
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    /// Aspect ratio c_n = p/n.
    pub fn aspect_ratio(&self) -> f64 {
        self.p() as f64 / self.n() as f64
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// The sample correlation matrix together with its full spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpectrum {
    /// Symmetrized correlation matrix B_n.
    pub b: DMatrix<f64>,
    /// Eigenvalues of B_n, sorted ascending.
    pub eigenvalues: Vec<f64>,
    /// c_n = p/n of the data the spectrum came from.
    pub c_n: f64,
}

/// Centers and normalizes every row, returning the n x p matrix whose
/// columns are the unit vectors (y_i - ȳ_i)/||y_i - ȳ_i||.
pub(crate) fn normalized_columns(data: &DataMatrix) -> Result<DMatrix<f64>> {
    let (p, n) = (data.p(), data.n());
    let mut y = DMatrix::zeros(n, p);
    for i in 0..p {
        let row = data.values().row(i);
        let mean = row.sum() / n as f64;
        let mut norm_sq = 0.0;
        for j in 0..n {
            let v = row[j] - mean;
            y[(j, i)] = v;
            norm_sq += v * v;
        }
        if norm_sq <= 0.0 {
            return Err(Error::ConstantRow(i));
        }
        let inv = 1.0 / norm_sq.sqrt();
        for j in 0..n {
            y[(j, i)] *= inv;
        }
    }
    Ok(y)
}

/// The correlation matrix alone, without the eigendecomposition.
///
/// Entries are the centered-normalized inner products; the result is
/// symmetrized as (B + Bᵀ)/2 to remove 1-ulp asymmetry from the product.
pub fn correlation_gram(data: &DataMatrix) -> Result<DMatrix<f64>> {
    let y = normalized_columns(data)?;
    let mut b = y.transpose() * &y;
    let p = b.nrows();
    for i in 0..p {
        b[(i, i)] = 1.0;
        for k in 0..i {
            let avg = 0.5 * (b[(i, k)] + b[(k, i)]);
            b[(i, k)] = avg;
            b[(k, i)] = avg;
        }
    }
    Ok(b)
}

/// Builds B_n and its sorted eigenvalue list from raw data.
pub fn correlation_matrix(data: &DataMatrix) -> Result<CorrelationSpectrum> {
    let b = correlation_gram(data)?;
    let mut eigenvalues: Vec<f64> = b.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| x.total_cmp(y));
    Ok(CorrelationSpectrum { b, eigenvalues, c_n: data.aspect_ratio() })
}

/// Empirical spectral distribution F^{B_n}(x): the fraction of eigenvalues <= x.
pub fn esd_eval(spec: &CorrelationSpectrum, x: f64) -> f64 {
    let count = spec.eigenvalues.partition_point(|&lambda| lambda <= x);
    count as f64 / spec.eigenvalues.len() as f64
}

/// The normalized all-ones quadratic form of the companion resolvent,
/// (1/n) 1ᵀ (B̲_n - z I_n)⁻¹ 1 with B̲_n = Y_n Y_n*.
///
/// Converges to -1/z as p, n grow at a fixed ratio; used as a validation
/// probe for the plug-in machinery.
pub fn companion_resolvent_form(data: &DataMatrix, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(Error::RealShift);
    }
    let y = normalized_columns(data)?;
    let n = data.n();
    let companion = &y * y.transpose();
    let eigen = companion.symmetric_eigen();
    let ones = DVector::from_element(n, 1.0);
    let projections = eigen.eigenvectors.transpose() * ones;
    let mut total = Complex64::new(0.0, 0.0);
    for (k, proj) in projections.iter().enumerate() {
        total += proj * proj / (Complex64::new(eigen.eigenvalues[k], 0.0) - z);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_data(p: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
        DataMatrix::new(values).unwrap()
    }

    #[test]
    fn rejects_small_and_constant_inputs() {
        assert!(matches!(
            DataMatrix::from_rows(vec![vec![1.0, 2.0]]),
            Err(Error::DimensionTooSmall { .. })
        ));
        assert!(matches!(
            DataMatrix::from_rows(vec![vec![1.0, 2.0], vec![5.0, 5.0]]),
            Err(Error::ConstantRow(1))
        ));
    }

    #[test]
    fn affinely_dependent_rows_give_perfect_correlation() {
        let row1 = vec![0.3, -1.2, 2.5, 0.0, 1.1];
        let row2: Vec<f64> = row1.iter().map(|v| 3.0 * v + 7.0).collect();
        let data = DataMatrix::from_rows(vec![row1, row2]).unwrap();
        let spec = correlation_matrix(&data).unwrap();
        assert_abs_diff_eq!(spec.b[(0, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn anti_correlated_two_by_two() {
        let data = DataMatrix::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let spec = correlation_matrix(&data).unwrap();
        assert_abs_diff_eq!(spec.b[(0, 1)], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.eigenvalues[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn correlation_invariants_hold_on_random_data() {
        let data = gaussian_data(30, 80, 7);
        let spec = correlation_matrix(&data).unwrap();
        let p = data.p();
        for i in 0..p {
            assert_abs_diff_eq!(spec.b[(i, i)], 1.0, epsilon = 1e-12);
            for k in 0..p {
                assert!(spec.b[(i, k)].abs() <= 1.0 + 1e-12);
                assert_abs_diff_eq!(spec.b[(i, k)], spec.b[(k, i)], epsilon = 1e-12);
            }
        }
        let trace: f64 = spec.eigenvalues.iter().sum();
        assert_abs_diff_eq!(trace, p as f64, epsilon = 1e-8 * p as f64);
        assert!(spec.eigenvalues.iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn rank_deficiency_when_p_exceeds_n() {
        let data = gaussian_data(12, 6, 3);
        let spec = correlation_matrix(&data).unwrap();
        let zeros = spec.eigenvalues.iter().filter(|&&l| l.abs() < 1e-8).count();
        assert!(zeros >= 12 - 6, "expected at least 6 zero eigenvalues, got {zeros}");
    }

    #[test]
    fn esd_is_a_right_continuous_step_function() {
        let spec = CorrelationSpectrum {
            b: DMatrix::identity(2, 2),
            eigenvalues: vec![0.0, 2.0],
            c_n: 1.0,
        };
        assert_eq!(esd_eval(&spec, -0.5), 0.0);
        assert_eq!(esd_eval(&spec, 0.0), 0.5);
        assert_eq!(esd_eval(&spec, 1.0), 0.5);
        assert_eq!(esd_eval(&spec, 2.0), 1.0);
        assert_eq!(esd_eval(&spec, 5.0), 1.0);
    }

    #[test]
    fn eigenvalues_concentrate_in_the_mp_bulk() {
        // p = 40, n = 100: edges (1 ± sqrt(0.4))², slack 0.25.
        let c = 0.4f64;
        let lo = (1.0 - c.sqrt()).powi(2) - 0.25;
        let hi = (1.0 + c.sqrt()).powi(2) + 0.25;
        let mut inside = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let data = gaussian_data(40, 100, seed);
            let spec = correlation_matrix(&data).unwrap();
            inside += spec.eigenvalues.iter().filter(|&&l| l >= lo && l <= hi).count();
            total += spec.eigenvalues.len();
        }
        let frequency = inside as f64 / total as f64;
        assert!(frequency >= 0.99, "bulk frequency {frequency}");
    }

    #[test]
    fn affine_and_sign_flip_invariance() {
        let data = gaussian_data(10, 40, 11);
        let spec = correlation_matrix(&data).unwrap();

        let mut scaled = data.values().clone();
        for i in 0..10 {
            let a = 0.5 + i as f64;
            let b = -3.0 + i as f64;
            for j in 0..40 {
                scaled[(i, j)] = a * scaled[(i, j)] + b;
            }
        }
        let spec2 = correlation_matrix(&DataMatrix::new(scaled).unwrap()).unwrap();
        for (x, y) in spec.eigenvalues.iter().zip(&spec2.eigenvalues) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }

        let mut flipped = data.values().clone();
        for j in 0..40 {
            flipped[(3, j)] = -flipped[(3, j)];
            flipped[(7, j)] = -flipped[(7, j)];
        }
        let spec3 = correlation_matrix(&DataMatrix::new(flipped).unwrap()).unwrap();
        for (x, y) in spec.eigenvalues.iter().zip(&spec3.eigenvalues) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn eigendecomposition_reconstructs_the_matrix() {
        let data = gaussian_data(50, 120, 5);
        let b = correlation_gram(&data).unwrap();
        let eigen = b.clone().symmetric_eigen();
        let reconstructed = &eigen.eigenvectors
            * DMatrix::from_diagonal(&eigen.eigenvalues)
            * eigen.eigenvectors.transpose();
        let max_err = (&b - reconstructed).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err < 1e-8, "reconstruction error {max_err}");
    }

    #[test]
    fn companion_form_approaches_minus_inverse_z() {
        let z = Complex64::new(0.0, 2.0);
        let data = gaussian_data(200, 200, 42);
        let value = companion_resolvent_form(&data, z).unwrap();
        assert!((value - (-1.0 / z)).norm() < 0.1, "value {value}");

        let z = Complex64::new(0.0, 1.0);
        let data = gaussian_data(50, 100, 9);
        let value = companion_resolvent_form(&data, z).unwrap();
        assert!((value - (-1.0 / z)).norm() < 0.15, "value {value}");
    }

    #[test]
    fn companion_form_rejects_real_shift() {
        let data = gaussian_data(4, 8, 0);
        assert!(matches!(
            companion_resolvent_form(&data, Complex64::new(2.0, 0.0)),
            Err(Error::RealShift)
        ));
    }
}
