use ndarray::ArrayView2;

/// Nonzero entries of one column.
#[derive(Clone, Debug, Default)]
pub(crate) struct SparseCol {
    pub rows: Vec<u32>,
    pub vals: Vec<f64>,
}

/// Column-compressed copy of a row subset of a dense matrix. Stump columns
/// are zero outside their node, so deep splits are very sparse.
#[derive(Clone, Debug)]
pub(crate) struct ColumnMatrix {
    pub n_rows: usize,
    pub cols: Vec<SparseCol>,
    /// Row-major copy of the same entries.
    row_ptr: Vec<usize>,
    row_cols: Vec<u32>,
    row_vals: Vec<f64>,
}

impl ColumnMatrix {
    pub fn from_rows(z: ArrayView2<f64>, rows: &[usize]) -> Self {
        let cols = (0..z.ncols())
            .map(|j| {
                let col = z.column(j);
                let mut sc = SparseCol::default();
                for (pos, &i) in rows.iter().enumerate() {
                    let v = col[i];
                    if v != 0.0 {
                        sc.rows.push(pos as u32);
                        sc.vals.push(v);
                    }
                }
                sc
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut row_cols = Vec::new();
        let mut row_vals = Vec::new();
        row_ptr.push(0);
        for &i in rows {
            for (j, &v) in z.row(i).iter().enumerate() {
                if v != 0.0 {
                    row_cols.push(j as u32);
                    row_vals.push(v);
                }
            }
            row_ptr.push(row_cols.len());
        }
        Self {
            n_rows: rows.len(),
            cols,
            row_ptr,
            row_cols,
            row_vals,
        }
    }

    /// Column indices (ascending) and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.row_cols[a..b], &self.row_vals[a..b])
    }

    /// `intercept + Z beta` for every row.
    pub fn linear_predictor(&self, intercept: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![intercept; self.n_rows];
        for (col, &b) in self.cols.iter().zip(beta) {
            if b != 0.0 {
                for (&r, &v) in col.rows.iter().zip(&col.vals) {
                    eta[r as usize] += b * v;
                }
            }
        }
        eta
    }
}

/// A column matrix with per-column centering and scaling applied
/// implicitly: the standardized entry is `(x - mean) / scale`.
#[derive(Clone, Debug)]
pub(crate) struct StdDesign {
    pub x: ColumnMatrix,
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks an excluded column.
    pub scale: Vec<f64>,
}

impl StdDesign {
    pub fn new(x: ColumnMatrix) -> Self {
        let n = x.n_rows as f64;
        let mut mean = Vec::with_capacity(x.cols.len());
        let mut scale = Vec::with_capacity(x.cols.len());
        for col in &x.cols {
            let m = col.vals.iter().sum::<f64>() / n;
            let nz = col.vals.len() as f64;
            let ss = col.vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() + (n - nz) * m * m;
            let var = ss / n;
            // relative guard: constant columns can pick up rounding noise
            let magnitude = col.vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sd = if var > 0.0 && var.sqrt() > 1e-10 * magnitude.max(f64::MIN_POSITIVE) {
                var.sqrt()
            } else {
                0.0
            };
            mean.push(m);
            scale.push(sd);
        }
        Self { x, mean, scale }
    }

    pub fn n_rows(&self) -> usize {
        self.x.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.x.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        self.x.row(i)
    }

    /// Standardized-scale `eta = b0 + sum_j z_j beta_j`.
    pub fn linear_predictor(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut shift = b0;
        let raw: Vec<f64> = beta
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&b, (&m, &s))| {
                if s > 0.0 && b != 0.0 {
                    shift -= b * m / s;
                    b / s
                } else {
                    0.0
                }
            })
            .collect();
        self.x.linear_predictor(shift, &raw)
    }

    /// Converts standardized coefficients to the original column scale.
    pub fn destandardize(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut intercept = b0;
        let coef = beta
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&b, (&m, &s))| {
                if s > 0.0 {
                    intercept -= b * m / s;
                    b / s
                } else {
                    0.0
                }
            })
            .collect();
        (intercept, coef)
    }
}
