//! Small dense symmetric positive-definite factorization.
//!
//! Information matrices here are at most a few dozen rows, and the annealer
//! factors one per proposal, so this is a flat, allocation-light Cholesky on a
//! diagonally equilibrated copy of the matrix. The equilibration makes the
//! reciprocal-condition guard independent of parameter scaling.

use nalgebra::DMatrix;

/// Reciprocal-condition floor below which a matrix is treated as singular.
pub const RCOND_FLOOR: f64 = 1e-12;

/// Cholesky factor of `S M S` where `S = diag(M)^{-1/2}`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    dim: usize,
    /// Row-major lower-triangular factor.
    lower: Vec<f64>,
    /// Equilibration scales `1/sqrt(M_ii)`.
    scale: Vec<f64>,
    logdet: f64,
}

impl SpdFactor {
    /// Factors a symmetric matrix given in row-major order. Returns `None` when
    /// the matrix is not numerically positive definite.
    pub fn from_row_major(dim: usize, m: &[f64]) -> Option<Self> {
        debug_assert_eq!(m.len(), dim * dim);
        let mut scale = vec![0.0; dim];
        for i in 0..dim {
            let d = m[i * dim + i];
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            scale[i] = 1.0 / d.sqrt();
        }
        let mut l = vec![0.0; dim * dim];
        let mut min_diag = f64::INFINITY;
        let mut max_diag: f64 = 0.0;
        for j in 0..dim {
            let mut s = m[j * dim + j] * scale[j] * scale[j];
            for k in 0..j {
                s -= l[j * dim + k] * l[j * dim + k];
            }
            if !(s > 0.0) {
                return None;
            }
            let ljj = s.sqrt();
            l[j * dim + j] = ljj;
            min_diag = min_diag.min(ljj);
            max_diag = max_diag.max(ljj);
            for i in (j + 1)..dim {
                let mut s = m[i * dim + j] * scale[i] * scale[j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / ljj;
            }
        }
        let ratio = min_diag / max_diag;
        if !(ratio * ratio >= RCOND_FLOOR) {
            return None;
        }
        let mut logdet = 0.0;
        for i in 0..dim {
            logdet += 2.0 * l[i * dim + i].ln() - 2.0 * scale[i].ln();
        }
        if !logdet.is_finite() {
            return None;
        }
        Some(SpdFactor {
            dim,
            lower: l,
            scale,
            logdet,
        })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Option<Self> {
        let dim = m.nrows();
        let mut flat = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                flat.push(m[(i, j)]);
            }
        }
        Self::from_row_major(dim, &flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `log det M`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Overwrites `v` with `L^{-1} S v`, so that `|L^{-1} S v|^2 = v' M^{-1} v`.
    pub fn whiten_in_place(&self, v: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let mut s = v[i] * self.scale[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * v[k];
            }
            v[i] = s / self.lower[i * n + i];
        }
    }

    /// `v' M^{-1} v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut buf = [0.0f64; 16];
        let mut heap;
        let w: &mut [f64] = if v.len() <= 16 {
            &mut buf[..v.len()]
        } else {
            heap = vec![0.0; v.len()];
            &mut heap
        };
        w.copy_from_slice(v);
        self.whiten_in_place(w);
        w.iter().map(|x| x * x).sum()
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        self.whiten_in_place(b);
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * b[k];
            }
            b[i] = s / self.lower[i * n + i];
        }
        for i in 0..n {
            b[i] *= self.scale[i];
        }
    }

    /// Dense inverse of `M`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim;
        let mut inv = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}
