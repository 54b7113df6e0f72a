//! Row-major f64 matrix. All model arithmetic is 64-bit; shapes are asserted
//! at every operation boundary so dimension bugs fail loudly at the call
//! site.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            assert_eq!(row.len(), cols);
            data.extend_from_slice(&row);
        }
        Mat { rows: n, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// self @ other: [m×k] @ [k×n] -> [m×n].
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(r);
                for c in 0..other.cols {
                    dst[c] += a * src[c];
                }
            }
        }
        out
    }

    /// self @ otherᵀ: [m×k] @ [n×k]ᵀ -> [m×n].
    pub fn matmul_bt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_bt inner dims");
        let mut out = Mat::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a = self.row(r);
            for n in 0..other.rows {
                let b = other.row(n);
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += a[k] * b[k];
                }
                *out.at_mut(r, n) = acc;
            }
        }
        out
    }

    /// selfᵀ @ other: [k×m]ᵀ @ [k×n] -> [m×n], accumulated into `out`.
    pub fn matmul_at_acc(&self, other: &Mat, out: &mut Mat) {
        assert_eq!(self.rows, other.rows, "matmul_at inner dims");
        assert_eq!((out.rows, out.cols), (self.cols, other.cols));
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for m in 0..self.cols {
                let am = a[m];
                if am == 0.0 {
                    continue;
                }
                let dst = out.row_mut(m);
                for n in 0..other.cols {
                    dst[n] += am * b[n];
                }
            }
        }
    }

    /// Add a broadcast row vector (bias) to every row.
    pub fn add_row(&mut self, bias: &Mat) {
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.cols);
        for r in 0..self.rows {
            let dst = self.row_mut(r);
            for c in 0..bias.cols {
                dst[c] += bias.data[c];
            }
        }
    }

    /// Column sums accumulated into a [1×cols] matrix (bias gradient).
    pub fn col_sum_acc(&self, out: &mut Mat) {
        assert_eq!((out.rows, out.cols), (1, self.cols));
        for r in 0..self.rows {
            let src = self.row(r);
            for c in 0..self.cols {
                out.data[c] += src[c];
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Rows of `self` rearranged so output row j equals `self.row(idx[j])`.
    pub fn gather_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (j, &i) in idx.iter().enumerate() {
            out.row_mut(j).copy_from_slice(self.row(i));
        }
        out
    }

    /// Inverse of gather: row j of `self` accumulated into output row idx[j].
    pub fn scatter_rows_acc(&self, idx: &[usize], out: &mut Mat) {
        assert_eq!(self.rows, idx.len());
        assert_eq!(self.cols, out.cols);
        for (j, &i) in idx.iter().enumerate() {
            let src = self.row(j);
            let dst = out.row_mut(i);
            for c in 0..self.cols {
                dst[c] += src[c];
            }
        }
    }

    /// The rows `range` as a new matrix.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Mat {
        Mat {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }
}
