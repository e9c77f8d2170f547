use crate::{Error, Result};

/// Row-major dense matrix of `f64`.
///
/// Rows are batch items throughout the crate: a batch of object features is
/// `(n_objects, width)`, a dense layer weight is `(in, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "Tensor2::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// Builds a tensor from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(format!("Tensor2::from_rows row {i}"), cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2 {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor2 {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    fn check_same_shape(&self, other: &Tensor2, context: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                context,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Tensor2) -> Result<Tensor2> {
        if self.cols != rhs.rows {
            return Err(Error::dims(
                "matmul inner dimension",
                self.cols,
                rhs.rows,
            ));
        }
        let mut out = Tensor2::zeros(self.rows, rhs.cols);
        gemm(false, self, false, rhs, 0.0, &mut out);
        Ok(out)
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: &Tensor2) -> Result<Tensor2> {
        if self.rows != rhs.rows {
            return Err(Error::dims("t_matmul shared rows", self.rows, rhs.rows));
        }
        let mut out = Tensor2::zeros(self.cols, rhs.cols);
        gemm(true, self, false, rhs, 0.0, &mut out);
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Tensor2) -> Result<Tensor2> {
        if self.cols != rhs.cols {
            return Err(Error::dims("matmul_t shared cols", self.cols, rhs.cols));
        }
        let mut out = Tensor2::zeros(self.rows, rhs.rows);
        gemm(false, self, true, rhs, 0.0, &mut out);
        Ok(out)
    }

    /// Accumulates `selfᵀ · rhs` into `acc`.
    pub fn t_matmul_acc(&self, rhs: &Tensor2, acc: &mut Tensor2) -> Result<()> {
        if self.rows != rhs.rows || acc.shape() != (self.cols, rhs.cols) {
            return Err(Error::dims(
                "t_matmul_acc",
                format!("({},{})", self.cols, rhs.cols),
                format!("{:?}", acc.shape()),
            ));
        }
        gemm(true, self, false, rhs, 1.0, acc);
        Ok(())
    }

    /// Adds a `(1, cols)` row vector to every row.
    pub fn add_row(&mut self, bias: &Tensor2) -> Result<()> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::dims("add_row bias", format!("(1,{})", self.cols), format!("{:?}", bias.shape())));
        }
        for r in 0..self.rows {
            for (x, b) in self.row_mut(r).iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Column sums accumulated into a `(1, cols)` tensor.
    pub fn sum_rows_acc(&self, acc: &mut Tensor2) -> Result<()> {
        if acc.rows != 1 || acc.cols != self.cols {
            return Err(Error::dims("sum_rows_acc", format!("(1,{})", self.cols), format!("{:?}", acc.shape())));
        }
        for r in 0..self.rows {
            for (a, x) in acc.data.iter_mut().zip(self.row(r)) {
                *a += x;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn hcat(parts: &[&Tensor2]) -> Result<Tensor2> {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Tensor2::zeros(rows, cols);
        for p in parts {
            if p.rows != rows {
                return Err(Error::dims("hcat rows", rows, p.rows));
            }
        }
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut off = 0;
            for p in parts {
                dst[off..off + p.cols].copy_from_slice(p.row(r));
                off += p.cols;
            }
        }
        Ok(out)
    }

    /// Copy of columns `start..start + width`.
    pub fn slice_cols(&self, start: usize, width: usize) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// `self[idx[k]] += src[k]` for every row `k` of `src`.
    pub fn scatter_add_rows(&mut self, idx: &[usize], src: &Tensor2) {
        debug_assert_eq!(idx.len(), src.rows);
        debug_assert_eq!(self.cols, src.cols);
        for (k, &dst) in idx.iter().enumerate() {
            let cols = self.cols;
            let d = &mut self.data[dst * cols..(dst + 1) * cols];
            for (a, b) in d.iter_mut().zip(src.row(k)) {
                *a += b;
            }
        }
    }

    /// Same as [`scatter_add_rows`](Self::scatter_add_rows) restricted to a
    /// column window of `src`.
    pub fn scatter_add_cols_window(&mut self, idx: &[usize], src: &Tensor2, start: usize) {
        let cols = self.cols;
        for (k, &dst) in idx.iter().enumerate() {
            let s = &src.row(k)[start..start + cols];
            let d = &mut self.data[dst * cols..(dst + 1) * cols];
            for (a, b) in d.iter_mut().zip(s) {
                *a += b;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `c = op(a) · op(b) + beta · c` through the `matrixmultiply` kernel.
fn gemm(trans_a: bool, a: &Tensor2, trans_b: bool, b: &Tensor2, beta: f64, c: &mut Tensor2) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if trans_b { b.rows } else { b.cols };
    debug_assert_eq!(c.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale(beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: the strides describe exactly the buffers owned by `a`, `b` and
    // `c`, whose shapes were checked by the callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}
