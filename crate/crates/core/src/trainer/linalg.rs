//! Dense row-major matrix with just the products the trainer needs.

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `Aᵀ y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
        out
    }

    /// Numerical rank by modified Gram-Schmidt over the rows (or columns when `by_cols`).
    pub fn rank(&self, by_cols: bool, rel_tol: f64) -> usize {
        let vectors: Vec<Vec<f64>> = if by_cols {
            (0..self.cols).map(|c| (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()).collect()
        } else {
            (0..self.rows).map(|r| self.row(r).to_vec()).collect()
        };
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in vectors {
            let orig = norm(&v);
            let mut w = v;
            for b in &basis {
                let p = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= p * bi;
                }
            }
            let n = norm(&w);
            if orig > 0.0 && n > rel_tol * orig {
                basis.push(w.iter().map(|x| x / n).collect());
            }
        }
        basis.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_and_rank() {
        let m = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![1.0, 5.0, 9.0]);
        assert_eq!(m.matvec_t(&[1.0, 0.0, 1.0]), vec![4.0, 6.0]);
        assert_eq!(m.rank(true, 1e-9), 2);
        let degenerate = Matrix::from_fn(2, 3, |_, c| c as f64);
        assert_eq!(degenerate.rank(false, 1e-9), 1);
    }
}
