//! Latent correlation structures and their Cholesky factors.

use crate::error::{Error, Result};

/// Dense row-major square matrix. Dimensions here are small (a cluster size),
/// so nothing fancier is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("matrix rows must form a square".into()));
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        Self::from_fn(n, |i, j| (0..n).map(|k| self[(i, k)] * other[(k, j)]).sum())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Symmetric permutation `P R Pᵀ` with `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.n, |i, j| self[(perm[i], perm[j])])
    }

    /// Principal submatrix on the given indices.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |i, j| self[(idx[i], idx[j])])
    }

    /// Eigenvalues of a symmetric matrix in ascending order, by cyclic
    /// Jacobi rotations, applied to the symmetric part `(A + Aᵀ)/2`.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = Self::from_fn(n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]));
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
            let scale: f64 = (0..n).map(|i| a[(i, i)].powi(2)).sum::<f64>() + off;
            if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Smallest acceptable Cholesky pivot.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular `C` with `C Cᵀ = R`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: Matrix,
}

impl CholeskyFactor {
    pub fn matrix(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[(i, j)]
    }

    /// `C Cᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        self.lower.matmul(&self.lower.transpose())
    }

    /// `log |R|`.
    pub fn ln_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `C w = v` in place.
    pub fn forward_solve_in_place(&self, v: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.lower.row(i);
            let mut s = v[i];
            for k in 0..i {
                s -= row[k] * v[k];
            }
            v[i] = s / row[i];
        }
    }

    /// `vᵀ R⁻¹ v`.
    pub fn inv_quad_form(&self, v: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend_from_slice(v);
        self.forward_solve_in_place(scratch);
        scratch.iter().map(|w| w * w).sum()
    }

    /// `R⁻¹` via two triangular solves per column.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.forward_solve_in_place(&mut col);
            // back-substitute with Cᵀ
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in i + 1..n {
                    s -= self.lower[(k, i)] * col[k];
                }
                col[i] = s / self.lower[(i, i)];
            }
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(r: &Matrix) -> Result<CholeskyFactor> {
    let n = r.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut diag = r[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > PIVOT_TOL) {
            return Err(Error::NotPositiveDefinite { row: j, pivot: diag });
        }
        let djj = diag.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = r[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureKind {
    Exchangeable,
    Ar1,
    Markov,
    Unstructured,
}

impl StructureKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "exch" | "exchangeable" => Ok(Self::Exchangeable),
            "ar1" => Ok(Self::Ar1),
            "markov" => Ok(Self::Markov),
            "unstructured" => Ok(Self::Unstructured),
            other => Err(Error::Config(format!("unknown correlation structure `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Exchangeable => "exch",
            Self::Ar1 => "ar1",
            Self::Markov => "markov",
            Self::Unstructured => "unstructured",
        }
    }

    /// Open admissible interval for the scalar `ρ` at dimension `d`.
    pub fn rho_range(self, d: usize) -> Option<(f64, f64)> {
        match self {
            Self::Exchangeable => {
                let lo = if d >= 2 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
                Some((lo, 1.0))
            }
            Self::Ar1 => Some((-1.0, 1.0)),
            Self::Markov => Some((0.0, 1.0)),
            Self::Unstructured => None,
        }
    }
}

impl std::fmt::Display for StructureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A parametric correlation matrix for one cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationStructure {
    Exchangeable { rho: f64, dim: usize },
    Ar1 { rho: f64, dim: usize },
    Markov { rho: f64, times: Vec<f64> },
    Unstructured(Matrix),
}

impl CorrelationStructure {
    pub fn dim(&self) -> usize {
        match self {
            Self::Exchangeable { dim, .. } | Self::Ar1 { dim, .. } => *dim,
            Self::Markov { times, .. } => times.len(),
            Self::Unstructured(m) => m.dim(),
        }
    }

    pub fn kind(&self) -> StructureKind {
        match self {
            Self::Exchangeable { .. } => StructureKind::Exchangeable,
            Self::Ar1 { .. } => StructureKind::Ar1,
            Self::Markov { .. } => StructureKind::Markov,
            Self::Unstructured(_) => StructureKind::Unstructured,
        }
    }

    /// Builds a scalar-parameter structure of the given kind for a cluster.
    pub fn scalar(kind: StructureKind, rho: f64, dim: usize, times: Option<&[f64]>) -> Result<Self> {
        match kind {
            StructureKind::Exchangeable => Ok(Self::Exchangeable { rho, dim }),
            StructureKind::Ar1 => Ok(Self::Ar1 { rho, dim }),
            StructureKind::Markov => {
                let times = times.ok_or_else(|| {
                    Error::Validation("Markov structure needs observation times".into())
                })?;
                if times.len() != dim {
                    return Err(Error::Validation("times length differs from dimension".into()));
                }
                Ok(Self::Markov { rho, times: times.to_vec() })
            }
            StructureKind::Unstructured => Err(Error::UnsupportedStructure(
                "unstructured matrices have no scalar parametrization".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        let in_range = |rho: f64, (lo, hi): (f64, f64), closed_lo: bool| {
            rho.is_finite() && rho < hi && (rho > lo || (closed_lo && rho == lo))
        };
        match self {
            Self::Exchangeable { rho, dim } => {
                let range = StructureKind::Exchangeable.rho_range(*dim).unwrap();
                if *dim >= 2 && !in_range(*rho, range, false) {
                    return Err(Error::Validation(format!(
                        "exchangeable rho {rho} outside ({}, 1) at d = {dim}",
                        range.0
                    )));
                }
            }
            Self::Ar1 { rho, .. } => {
                if !in_range(*rho, (-1.0, 1.0), false) {
                    return Err(Error::Validation(format!("AR(1) rho {rho} outside (-1, 1)")));
                }
            }
            Self::Markov { rho, times } => {
                if !in_range(*rho, (0.0, 1.0), true) {
                    return Err(Error::Validation(format!("Markov rho {rho} outside [0, 1)")));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Validation("Markov times must be strictly increasing".into()));
                }
            }
            Self::Unstructured(m) => {
                if !m.is_symmetric(1e-12) {
                    return Err(Error::Validation("unstructured matrix is not symmetric".into()));
                }
                if (0..d).any(|i| (m[(i, i)] - 1.0).abs() > 1e-12) {
                    return Err(Error::Validation("unstructured matrix needs a unit diagonal".into()));
                }
                cholesky(m).map_err(|e| Error::Validation(format!("unstructured matrix: {e}")))?;
            }
        }
        Ok(())
    }

    /// The correlation matrix `R`.
    pub fn build_matrix(&self) -> Result<Matrix> {
        self.validate()?;
        let d = self.dim();
        Ok(match self {
            Self::Exchangeable { rho, .. } => {
                Matrix::from_fn(d, |i, j| if i == j { 1.0 } else { *rho })
            }
            Self::Ar1 { rho, .. } => {
                Matrix::from_fn(d, |i, j| rho.powi((i as i32 - j as i32).abs()))
            }
            Self::Markov { rho, times } => Matrix::from_fn(d, |i, j| {
                if i == j {
                    1.0
                } else {
                    rho.powf((times[i] - times[j]).abs())
                }
            }),
            Self::Unstructured(m) => m.clone(),
        })
    }

    pub fn cholesky(&self) -> Result<CholeskyFactor> {
        cholesky(&self.build_matrix()?)
    }
}
