//! Symmetric banded matrices and a pivot-dropping LDL^T factorization.
//!
//! Pivots that collapse below a relative threshold are treated as exact
//! zeros: the corresponding solution component is set to zero, which gives a
//! valid solution for consistent semidefinite systems.

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    width: usize,
    // data[i * (width + 1) + d] = M[i][i - d]
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, width: usize) -> Self {
        Self {
            n,
            width,
            data: vec![0.0; n * (width + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` to `M[i][j]` (and implicitly `M[j][i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.width);
        self.data[i * (self.width + 1) + (i - j)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.width {
            0.0
        } else {
            self.data[i * (self.width + 1) + (i - j)]
        }
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * (self.width + 1)] += v;
        }
    }

    pub fn factor(&self, rel_tol: f64) -> BandLdl {
        let (n, w) = (self.n, self.width);
        let stride = w + 1;
        let scale = (0..n)
            .map(|i| self.data[i * stride].abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        let thresh = rel_tol * scale;
        let mut l = vec![0.0; n * stride];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        for i in 0..n {
            let lo = i.saturating_sub(w);
            for j in lo..i {
                let klo = lo.max(j.saturating_sub(w));
                let mut s = self.data[i * stride + (i - j)];
                for k in klo..j {
                    s -= l[i * stride + (i - k)] * l[j * stride + (j - k)] * d[k];
                }
                l[i * stride + (i - j)] = s * dinv[j];
            }
            let mut s = self.data[i * stride];
            for k in lo..i {
                let lik = l[i * stride + (i - k)];
                s -= lik * lik * d[k];
            }
            if s > thresh {
                d[i] = s;
                dinv[i] = 1.0 / s;
            } else {
                d[i] = 0.0;
                dinv[i] = 0.0;
            }
        }
        BandLdl {
            n,
            width: w,
            l,
            d,
            dinv,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BandLdl {
    n: usize,
    width: usize,
    l: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl BandLdl {
    pub fn dropped_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v == 0.0).count()
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, w) = (self.n, self.width);
        let stride = w + 1;
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let mut s = b[i];
            for k in lo..i {
                s -= self.l[i * stride + (i - k)] * b[k];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let hi = (i + w).min(n.saturating_sub(1));
            let mut s = b[i];
            for k in i + 1..=hi {
                s -= self.l[k * stride + (k - i)] * b[k];
            }
            b[i] = s;
        }
    }
}
