//! Dense matrix primitives, sample statistics, Cholesky factorization and
//! multivariate normal density/sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape, RcsError, Result};

/// Feature, latent and mean vectors.
pub type Vector = Vec<f64>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(shape("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v`
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.cols {
            return Err(shape(format!("{}x{} times {}-vector", self.rows, self.cols, v.len())));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(shape("matrix dimensions differ"));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn diag(&self) -> Vector {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Replace with `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        (0..self.rows).map(|i| x[i] * dot(self.row(i), x)).sum()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mean_vector(rows: &[Vector]) -> Result<Vector> {
    let first = rows.first().ok_or_else(|| RcsError::EmptyInput("mean of no rows".into()))?;
    let d = first.len();
    let mut acc = vec![0.0; d];
    for r in rows {
        if r.len() != d {
            return Err(shape("rows have different dimensions"));
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Unbiased sample covariance `1/(N-1) Σ (x-μ)(x-μ)ᵀ`.
pub fn covariance_matrix(rows: &[Vector], mean: &[f64]) -> Result<Matrix> {
    if rows.len() < 2 {
        return Err(RcsError::InsufficientSamples(format!(
            "covariance needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let d = mean.len();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in rows {
        if r.len() != d {
            return Err(shape("row and mean dimensions differ"));
        }
        for (c, (x, m)) in centered.iter_mut().zip(r.iter().zip(mean)) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (rows.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// `m + eps·I`
pub fn ridge_regularize(m: &Matrix, eps: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(shape(format!("ridge needs a square matrix, got {}x{}", m.rows, m.cols)));
    }
    if !(eps >= 0.0) {
        return Err(RcsError::InvalidArgument(format!("ridge eps must be >= 0, got {eps}")));
    }
    let mut out = m.clone();
    for i in 0..m.rows {
        out[(i, i)] += eps;
    }
    Ok(out)
}

/// Scale-aware ridge: `1e-6 · trace(Σ)/d`, floored at `1e-9`.
pub fn default_ridge(m: &Matrix) -> f64 {
    let d = m.rows.max(1) as f64;
    (1e-6 * m.trace() / d).max(1e-9)
}

/// Lower-triangular factor `L` with `L·Lᵀ = Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: Matrix,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// `log |Σ|`
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solve `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vector {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (b[i] - s) / row[i];
        }
        y
    }

    /// `(x-μ)ᵀ Σ⁻¹ (x-μ)`
    pub fn mahalanobis_sq(&self, x: &[f64], mean: &[f64]) -> f64 {
        let diff: Vector = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        let y = self.solve_lower(&diff);
        dot(&y, &y)
    }

    /// Log density of `N(mean, LLᵀ)` at `x`; dimensions are not rechecked.
    pub fn log_density(&self, x: &[f64], mean: &[f64]) -> f64 {
        let d = self.dim() as f64;
        -0.5 * (d * LN_2PI + self.log_det() + self.mahalanobis_sq(x, mean))
    }
}

pub fn cholesky(m: &Matrix) -> Result<CholeskyFactor> {
    if !m.is_square() {
        return Err(shape(format!("cholesky needs a square matrix, got {}x{}", m.rows, m.cols)));
    }
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let pivot = m[(j, j)] - dot(lj, lj);
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(RcsError::NotPositiveDefinite { row: j, pivot });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let s = dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            l[(i, j)] = (m[(i, j)] - s) / diag;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Ridge with the default policy, then factor.
pub fn regularized_cholesky(m: &Matrix) -> Result<CholeskyFactor> {
    cholesky(&ridge_regularize(m, default_ridge(m))?)
}

/// `n` draws of `mean + L·z`, `z ~ N(0, I)`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &[f64],
    chol: &CholeskyFactor,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vector>> {
    let d = chol.dim();
    if mean.len() != d {
        return Err(shape(format!("mean has dim {}, factor has dim {d}", mean.len())));
    }
    let l = &chol.lower;
    let mut out = Vec::with_capacity(n);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let x: Vector = (0..d).map(|i| mean[i] + dot(&l.row(i)[..=i], &z[..=i])).collect();
        out.push(x);
    }
    Ok(out)
}

/// Log of the standard multivariate normal density.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], cov: &Matrix) -> Result<f64> {
    if x.len() != mean.len() || cov.rows != x.len() {
        return Err(shape("point, mean and covariance dimensions differ"));
    }
    Ok(cholesky(cov)?.log_density(x, mean))
}

/// log Σ exp(v), `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use proptest::prelude::*;

    fn brute_cov(rows: &[Vector]) -> Vec<Vec<f64>> {
        let n = rows.len();
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                mean[j] += r[j] / n as f64;
            }
        }
        let mut c = vec![vec![0.0; d]; d];
        for a in 0..d {
            for b in 0..d {
                let mut s = 0.0;
                for r in rows {
                    s += (r[a] - mean[a]) * (r[b] - mean[b]);
                }
                c[a][b] = s / (n as f64 - 1.0);
            }
        }
        c
    }

    // Determinant and inverse via cofactors, independent of the Cholesky path.
    fn det3(m: &[[f64; 3]; 3]) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    fn inv3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let det = det3(m);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = match j {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let (c0, c1) = match i {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                inv[i][j] = sign * minor / det;
            }
        }
        inv
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_vector(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(mean_vector(&[vec![5.0]]).unwrap(), vec![5.0]);
        assert!(matches!(mean_vector(&[]), Err(RcsError::EmptyInput(_))));

        let chol = cholesky(&Matrix::identity(1)).unwrap();
        let mut rng = Seed::new(7).rng();
        let draws = sample_gaussian(&[3.0], &chol, 100, &mut rng).unwrap();
        let m = mean_vector(&draws).unwrap()[0];
        assert!((m - 3.0).abs() <= 3.0 / 10.0, "mean {m}");
    }

    #[test]
    fn covariance_examples() {
        let c = covariance_matrix(&[vec![0.0], vec![2.0]], &[1.0]).unwrap();
        assert_eq!(c.as_slice(), &[2.0]);
        let same = vec![vec![1.0, 2.0]; 4];
        assert_eq!(covariance_matrix(&same, &[1.0, 2.0]).unwrap().max_abs(), 0.0);
        assert!(matches!(
            covariance_matrix(&[vec![1.0]], &[1.0]),
            Err(RcsError::InsufficientSamples(_))
        ));

        let rows = vec![
            vec![0.3, -1.2, 2.5],
            vec![1.7, 0.4, -0.9],
            vec![-2.1, 3.3, 0.8],
            vec![0.05, 0.6, 1.1],
            vec![4.2, -0.7, -3.3],
        ];
        let mean = mean_vector(&rows).unwrap();
        let c = covariance_matrix(&rows, &mean).unwrap();
        let oracle = brute_cov(&rows);
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[(i, j)] - oracle[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ridge_examples() {
        let r = ridge_regularize(&Matrix::zeros(2, 2), 1e-6).unwrap();
        assert_eq!(r, Matrix::from_diag(&[1e-6, 1e-6]));
        assert_eq!(ridge_regularize(&Matrix::identity(2), 0.0).unwrap(), Matrix::identity(2));
        let m = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let r = ridge_regularize(&m, 0.5).unwrap();
        assert_eq!(r.as_slice(), &[2.5, 1.0, 1.0, 2.5]);
        assert!(matches!(
            ridge_regularize(&Matrix::zeros(2, 3), 1.0),
            Err(RcsError::ShapeMismatch(_))
        ));
        assert_eq!(default_ridge(&Matrix::zeros(3, 3)), 1e-9);
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky(&Matrix::identity(3)).unwrap().lower(), &Matrix::identity(3));
        let m = Matrix::from_diag(&[4.0, 9.0]);
        assert_eq!(cholesky(&m).unwrap().lower(), &Matrix::from_diag(&[2.0, 3.0]));
        let bad = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(cholesky(&bad), Err(RcsError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn sampling_examples() {
        let chol = cholesky(&Matrix::identity(2)).unwrap();
        let mut rng = Seed::new(1).rng();
        assert!(sample_gaussian(&[0.0, 0.0], &chol, 0, &mut rng).unwrap().is_empty());
        assert!(sample_gaussian(&[0.0], &chol, 1, &mut rng).is_err());

        let tight = cholesky(&ridge_regularize(&Matrix::zeros(2, 2), 1e-12).unwrap()).unwrap();
        for x in sample_gaussian(&[1.0, -1.0], &tight, 200, &mut rng).unwrap() {
            assert!(squared_distance(&x, &[1.0, -1.0]).sqrt() < 1e-4);
        }

        let n = 50_000;
        let draws = sample_gaussian(&[1.0, 2.0], &chol, n, &mut Seed::new(3).rng()).unwrap();
        let m = mean_vector(&draws).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        assert!((m[0] - 1.0).abs() < bound && (m[1] - 2.0).abs() < bound, "{m:?}");

        let again = sample_gaussian(&[1.0, 2.0], &chol, 100, &mut Seed::new(3).rng()).unwrap();
        assert_eq!(&draws[..100], &again[..]);
    }

    #[test]
    fn log_density_examples() {
        let one = Matrix::identity(1);
        let peak = gaussian_log_density(&[0.0], &[0.0], &one).unwrap();
        assert!((peak - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        let off = gaussian_log_density(&[1.0], &[0.0], &one).unwrap();
        assert!((off - (peak - 0.5)).abs() < 1e-12);

        let a = [[2.0, 0.3, -0.4], [0.3, 1.5, 0.2], [-0.4, 0.2, 0.9]];
        let cov = Matrix::from_rows(&a.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let x = [0.7, -1.1, 0.4];
        let mu = [0.1, 0.2, -0.3];
        let inv = inv3(&a);
        let diff: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += diff[i] * inv[i][j] * diff[j];
            }
        }
        let oracle = ((2.0 * std::f64::consts::PI).powf(-1.5) * det3(&a).powf(-0.5)
            * (-0.5 * q).exp())
        .ln();
        let got = gaussian_log_density(&x, &mu, &cov).unwrap();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }

    fn spd(n: usize, vals: &[f64]) -> Matrix {
        let a = Matrix::from_vec(n, n, vals[..n * n].to_vec()).unwrap();
        let mut m = a.transpose().matmul(&a).unwrap();
        m.add_scaled(1.0, &Matrix::identity(n)).unwrap();
        m
    }

    proptest! {
        #[test]
        fn cholesky_reconstructs(n in 1usize..7, vals in prop::collection::vec(-3.0f64..3.0, 36)) {
            let m = spd(n, &vals);
            let l = cholesky(&m).unwrap();
            let back = l.lower().matmul(&l.lower().transpose()).unwrap();
            let mut diff = back.clone();
            diff.add_scaled(-1.0, &m).unwrap();
            prop_assert!(diff.max_abs() <= 1e-8 * m.max_abs());
            for i in 0..n {
                for j in (i + 1)..n {
                    prop_assert_eq!(l.lower()[(i, j)], 0.0);
                }
                prop_assert!(l.lower()[(i, i)] > 0.0);
            }
        }

        #[test]
        fn covariance_symmetric_psd(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..12),
                                    probe in prop::collection::vec(-1.0f64..1.0, 3)) {
            let mean = mean_vector(&rows).unwrap();
            let c = covariance_matrix(&rows, &mean).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(c[(i, j)], c[(j, i)]);
                }
            }
            let r = ridge_regularize(&c, 1e-9).unwrap();
            prop_assert!(r.quadratic_form(&probe) >= -1e-12);
        }

        #[test]
        fn density_peaks_at_mean(n in 1usize..5, vals in prop::collection::vec(-2.0f64..2.0, 25),
                                 offset in prop::collection::vec(-1.0f64..1.0, 5)) {
            let cov = spd(n, &vals);
            let mean: Vec<f64> = vals[..n].to_vec();
            let x: Vec<f64> = mean.iter().zip(&offset).map(|(m, o)| m + o).collect();
            let at_mean = gaussian_log_density(&mean, &mean, &cov).unwrap();
            prop_assert!(gaussian_log_density(&x, &mean, &cov).unwrap() <= at_mean);
        }
    }
}
