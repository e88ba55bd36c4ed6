use crate::ocp::OcpError;

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            rows: Vec::new(),
        }
    }

    /// Appends a row; entries must reference columns below `ncols`.
    pub fn push_row(&mut self, entries: Vec<(usize, f64)>) {
        assert!(
            entries.iter().all(|&(c, _)| c < self.ncols),
            "column out of range"
        );
        self.rows.push(entries);
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    /// `out = B z`.
    pub fn mul(&self, z: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(c, v)| v * z[c]).sum();
        }
    }

    /// `out = B^T mu`.
    pub fn mul_transpose(&self, mu: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &m) in self.rows.iter().zip(mu) {
            for &(c, v) in row {
                out[c] += v * m;
            }
        }
    }

    pub fn residual_norm(&self, z: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * z[c]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Column-wise view: for each column, its `(row, value)` entries.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                match cols[c].iter_mut().find(|e| e.0 == r) {
                    Some(e) => e.1 += v,
                    None => cols[c].push((r, v)),
                }
            }
        }
        cols
    }

    /// Half bandwidth of `B D Bᵀ` for any diagonal `D`.
    pub fn normal_band_width(&self) -> usize {
        self.columns()
            .iter()
            .filter_map(|c| {
                let lo = c.iter().map(|e| e.0).min()?;
                let hi = c.iter().map(|e| e.0).max()?;
                Some(hi - lo)
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; self.ncols];
                for &(c, v) in row {
                    dense[c] += v;
                }
                dense
            })
            .collect()
    }
}

/// Smooth objective evaluated on the stacked decision vector.
pub trait Objective: Send + Sync {
    fn value(&self, z: &[f64]) -> Result<f64, OcpError>;
    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<f64, OcpError>;
}

impl<F> Objective for F
where
    F: Fn(&[f64], Option<&mut [f64]>) -> Result<f64, OcpError> + Send + Sync,
{
    fn value(&self, z: &[f64]) -> Result<f64, OcpError> {
        self(z, None)
    }

    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<f64, OcpError> {
        self(z, Some(grad))
    }
}

/// `min J(z)` over `{lo <= z <= hi, B z = 0}`.
pub struct PolyhedralNlp {
    pub objective: Box<dyn Objective>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equality: SparseRows,
}

impl PolyhedralNlp {
    pub fn new(
        objective: Box<dyn Objective>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        equality: SparseRows,
    ) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound vectors differ in length");
        assert_eq!(equality.ncols(), lower.len(), "equality matrix width");
        assert!(
            lower.iter().zip(&upper).all(|(l, h)| l <= h),
            "lower bound exceeds upper bound"
        );
        Self {
            objective,
            lower,
            upper,
            equality,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

impl std::fmt::Debug for PolyhedralNlp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolyhedralNlp")
            .field("dim", &self.dim())
            .field("equalities", &self.equality.nrows())
            .finish()
    }
}
