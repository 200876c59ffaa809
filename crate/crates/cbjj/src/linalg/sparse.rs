use num_complex::Complex64;

use super::band::BandMatrix;

type C = Complex64;

/// Compressed-row copy of a band matrix that skips explicit zeros. Used
/// for the repeated products inside time stepping.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C>,
}

impl CsrMatrix {
    pub fn from_band(m: &BandMatrix) -> Self {
        let n = m.dim();
        let k = m.bandwidth();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..n {
            for j in i.saturating_sub(k)..(i + k + 1).min(n) {
                let v = m.get(i, j);
                if v != C::new(0.0, 0.0) {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x
    pub fn matvec_into(&self, x: &[C], y: &mut [C]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            let mut acc = C::new(0.0, 0.0);
            for (j, v) in self.indices[a..b].iter().zip(&self.values[a..b]) {
                acc += v * x[*j];
            }
            *yi = acc;
        }
    }
}
