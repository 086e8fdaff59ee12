use crate::Real;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        let cols = data.len();
        Self { rows: 1, cols, data }
    }

    pub fn scalar(v: T) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Reinterprets the buffer with a new shape of equal size.
    pub fn reshaped(mut self, rows: usize, cols: usize) -> Self {
        assert_eq!(rows * cols, self.data.len(), "reshape must preserve element count");
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "accumulate shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn squared_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `op(self) * op(rhs)` where `op` optionally transposes.
    pub fn matmul_t(&self, trans_a: bool, rhs: &Self, trans_b: bool) -> Self {
        let (m, ka) = if trans_a { (self.cols, self.rows) } else { (self.rows, self.cols) };
        let (kb, n) = if trans_b { (rhs.cols, rhs.rows) } else { (rhs.rows, rhs.cols) };
        assert_eq!(ka, kb, "matmul inner dimension mismatch: {ka} vs {kb}");
        let mut out = Self::zeros(m, n);
        self.gemm_into(trans_a, rhs, trans_b, T::zero(), &mut out);
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        self.matmul_t(false, rhs, false)
    }

    /// `out = op(self) * op(rhs) + beta * out`.
    pub fn gemm_into(&self, trans_a: bool, rhs: &Self, trans_b: bool, beta: T, out: &mut Self) {
        let (m, k) = if trans_a { (self.cols, self.rows) } else { (self.rows, self.cols) };
        let n = if trans_b { rhs.rows } else { rhs.cols };
        assert_eq!(out.shape(), (m, n), "gemm output shape mismatch");
        let (rsa, csa) = if trans_a { (1, self.cols as isize) } else { (self.cols as isize, 1) };
        let (rsb, csb) = if trans_b { (1, rhs.cols as isize) } else { (rhs.cols as isize, 1) };
        let ldc = out.cols as isize;
        T::gemm(m, k, n, T::one(), &self.data, rsa, csa, &rhs.data, rsb, csb, beta, &mut out.data, ldc, 1);
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a = Matrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64 * 0.5 - 2.0);
        let b = Matrix::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.25);
        let expected = naive(&a, &b);
        assert_eq!(a.matmul(&b), expected);
        assert_eq!(a.transpose().matmul_t(true, &b, false), expected);
        assert_eq!(a.matmul_t(false, &b.transpose(), true), expected);
    }

    #[test]
    fn reshape_keeps_data() {
        let m = Matrix::from_vec(2, 3, vec![1.0f32, 2., 3., 4., 5., 6.]);
        let r = m.clone().reshaped(3, 2);
        assert_eq!(r.data(), m.data());
        assert_eq!(r.get(2, 1), 6.0);
    }
}
