use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

/// Square complex band matrix with equal lower and upper half-bandwidth.
///
/// Row `i` stores columns `i - k ..= i + k` contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    k: usize,
    data: Vec<C>,
}

impl BandMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self { n, k, data: vec![C::new(0.0, 0.0); n * (2 * k + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), 0);
        for (i, &v) in d.iter().enumerate() {
            m.data[i] = C::new(v, 0.0);
        }
        m
    }

    /// Build from (row, col, value) triplets; the bandwidth is the widest
    /// offset present. Repeated entries are summed.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, C)]) -> Self {
        let k = entries
            .iter()
            .map(|&(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0);
        let mut m = Self::zeros(n, k);
        for &(i, j, v) in entries {
            m.add(i, j, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.k
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i.abs_diff(j) > self.k || i >= self.n || j >= self.n {
            return None;
        }
        Some(i * (2 * self.k + 1) + (j + self.k - i))
    }

    pub fn get(&self, i: usize, j: usize) -> C {
        self.slot(i, j).map_or(C::new(0.0, 0.0), |s| self.data[s])
    }

    pub fn add(&mut self, i: usize, j: usize, v: C) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside band {}", self.k));
        self.data[s] += v;
    }

    pub fn with_bandwidth(&self, k: usize) -> Self {
        assert!(k >= self.k);
        let mut m = Self::zeros(self.n, k);
        for i in 0..self.n {
            for j in i.saturating_sub(self.k)..(i + self.k + 1).min(self.n) {
                m.add(i, j, self.get(i, j));
            }
        }
        m
    }

    /// self + s·other, widening the band if needed.
    pub fn axpy(&self, s: C, other: &BandMatrix) -> Result<BandMatrix> {
        if self.n != other.n {
            return Err(Error::Assembly(format!(
                "dimension mismatch {} vs {}",
                self.n, other.n
            )));
        }
        let k = self.k.max(other.k);
        let mut m = if k == self.k { self.clone() } else { self.with_bandwidth(k) };
        for i in 0..other.n {
            for j in i.saturating_sub(other.k)..(i + other.k + 1).min(other.n) {
                let v = other.get(i, j);
                if v != C::new(0.0, 0.0) {
                    m.add(i, j, s * v);
                }
            }
        }
        Ok(m)
    }

    pub fn scale(&self, s: C) -> BandMatrix {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn adjoint(&self) -> BandMatrix {
        let mut m = Self::zeros(self.n, self.k);
        for i in 0..self.n {
            for j in i.saturating_sub(self.k)..(i + self.k + 1).min(self.n) {
                let s = m.slot(j, i).unwrap();
                m.data[s] = self.get(i, j).conj();
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// max |A − A†|.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i..(i + self.k + 1).min(self.n) {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Gershgorin bounds on the spectrum, valid for Hermitian matrices.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let mut r = 0.0;
            for j in i.saturating_sub(self.k)..(i + self.k + 1).min(self.n) {
                if j != i {
                    r += self.get(i, j).norm();
                }
            }
            let d = self.get(i, i).re;
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    /// y = A x
    pub fn matvec_into(&self, x: &[C], y: &mut [C]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let w = 2 * self.k + 1;
        for (i, yi) in y.iter_mut().enumerate() {
            let j0 = i.saturating_sub(self.k);
            let j1 = (i + self.k + 1).min(self.n);
            let row = &self.data[i * w + (j0 + self.k - i)..i * w + (j1 + self.k - i)];
            let mut acc = C::new(0.0, 0.0);
            for (a, b) in row.iter().zip(&x[j0..j1]) {
                acc += a * b;
            }
            *yi = acc;
        }
    }

    pub fn matvec(&self, x: &[C]) -> Vec<C> {
        let mut y = vec![C::new(0.0, 0.0); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// ⟨x|A|y⟩
    pub fn expectation(&self, x: &[C], y: &[C]) -> C {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<C> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn factorize(&self) -> Result<BandLu> {
        BandLu::new(self, true)
    }

    /// LU without row interchanges. Stable when the Hermitian part of the
    /// matrix is positive definite, as for Crank-Nicolson matrices.
    pub fn factorize_unpivoted(&self) -> Result<BandLu> {
        BandLu::new(self, false)
    }
}

/// LU factorization with partial (row) pivoting of a band matrix.
///
/// After pivoting, U has upper bandwidth 2k; multipliers stay in the rows
/// they were computed for, so the forward sweep replays swaps and
/// eliminations in the original order.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    k: usize,
    /// upper bandwidth of U
    ku: usize,
    /// row i holds columns i − k ..= i + 2k
    data: Vec<C>,
    piv: Vec<usize>,
}

impl BandLu {
    fn width(k: usize) -> usize {
        3 * k + 1
    }

    fn new(a: &BandMatrix, pivot: bool) -> Result<Self> {
        let (n, k) = (a.n, a.k);
        let ku = if pivot { 2 * k } else { k };
        let w = Self::width(k);
        let mut data = vec![C::new(0.0, 0.0); n * w];
        for i in 0..n {
            for j in i.saturating_sub(k)..(i + k + 1).min(n) {
                data[i * w + (j + k - i)] = a.get(i, j);
            }
        }
        let at = |i: usize, j: usize| i * w + (j + k - i);
        let mut piv = vec![0; n];
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for c in 0..n {
            let last = (c + k).min(n - 1);
            let mut p = c;
            let mut best = data[at(c, c)].norm();
            if pivot {
                for r in c + 1..=last {
                    let v = data[at(r, c)].norm();
                    if v > best {
                        best = v;
                        p = r;
                    }
                }
            }
            if best <= 1e-300 * scale {
                return Err(Error::Singular(c));
            }
            piv[c] = p;
            let jmax = (c + ku).min(n - 1);
            if p != c {
                for j in c..=jmax {
                    data.swap(at(c, j), at(p, j));
                }
            }
            let inv = 1.0 / data[at(c, c)];
            for r in c + 1..=last {
                let l = data[at(r, c)] * inv;
                data[at(r, c)] = l;
                if l == C::new(0.0, 0.0) {
                    continue;
                }
                let (rb, cb) = (at(r, c + 1), at(c, c + 1));
                let len = jmax - c;
                let (head, tail) = data.split_at_mut(rb);
                let src = &head[cb..cb + len];
                for (d, s) in tail[..len].iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(Self { n, k, ku, data, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [C]) {
        let (n, k) = (self.n, self.k);
        let w = Self::width(k);
        let at = |i: usize, j: usize| i * w + (j + k - i);
        if self.ku == k {
            // no row exchanges: forward sweep as contiguous row products
            for r in 1..n {
                let c0 = r.saturating_sub(k);
                let row = &self.data[at(r, c0)..at(r, r)];
                let mut acc = b[r];
                for (l, bc) in row.iter().zip(&b[c0..r]) {
                    acc -= l * bc;
                }
                b[r] = acc;
            }
            return self.back_substitute(b);
        }
        for c in 0..n {
            let p = self.piv[c];
            if p != c {
                b.swap(c, p);
            }
            let bc = b[c];
            if bc == C::new(0.0, 0.0) {
                continue;
            }
            for r in c + 1..=(c + k).min(n - 1) {
                b[r] -= self.data[at(r, c)] * bc;
            }
        }
        self.back_substitute(b);
    }

    fn back_substitute(&self, b: &mut [C]) {
        let (n, k) = (self.n, self.k);
        let w = Self::width(k);
        let at = |i: usize, j: usize| i * w + (j + k - i);
        for c in (0..n).rev() {
            let jmax = (c + self.ku).min(n - 1);
            let base = at(c, c);
            let row = &self.data[base + 1..base + 1 + (jmax - c)];
            let mut acc = b[c];
            for (u, bj) in row.iter().zip(&b[c + 1..=jmax]) {
                acc -= u * bj;
            }
            b[c] = acc / self.data[base];
        }
    }

    pub fn solve(&self, b: &[C]) -> Vec<C> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, k: usize) -> BandMatrix {
        let mut m = BandMatrix::zeros(n, k);
        for i in 0..n {
            for j in i.saturating_sub(k)..(i + k + 1).min(n) {
                let x = ((i * 7 + j * 13) % 11) as f64 - 5.0;
                let y = ((i * 3 + j * 5) % 7) as f64 - 3.0;
                m.add(i, j, C::new(x, y));
            }
        }
        m
    }

    #[test]
    fn lu_solves_general_band() {
        let a = sample(40, 3);
        let x: Vec<C> = (0..40).map(|i| C::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
        let b = a.matvec(&x);
        let y = a.factorize().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn lu_needs_pivoting() {
        // zero diagonal forces a swap on every column
        let mut a = BandMatrix::zeros(6, 1);
        for i in 0..5 {
            a.add(i, i + 1, C::new(1.0, 0.0));
            a.add(i + 1, i, C::new(2.0, 0.5));
        }
        let x: Vec<C> = (0..6).map(|i| C::new(1.0 + i as f64, 0.0)).collect();
        let b = a.matvec(&x);
        let y = a.factorize().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn dense_agrees() {
        let a = sample(12, 2);
        let d = a.to_dense();
        let x: Vec<C> = (0..12).map(|i| C::new(1.0, i as f64)).collect();
        let y1 = a.matvec(&x);
        let y2 = &d * nalgebra::DVector::from_vec(x.clone());
        for (u, v) in y1.iter().zip(y2.iter()) {
            assert!((u - v).norm() < 1e-12);
        }
        let adj = a.adjoint().to_dense();
        assert!((adj - d.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn unpivoted_on_dominant_real_part() {
        let h = sample(30, 2);
        let herm = h.axpy(C::new(1.0, 0.0), &h.adjoint()).unwrap();
        // 1 + i·τ·H has identity Hermitian part
        let m = BandMatrix::identity(30)
            .axpy(C::new(0.0, 0.3), &herm)
            .unwrap();
        let x: Vec<C> = (0..30).map(|i| C::new(1.0, -(i as f64))).collect();
        let b = m.matvec(&x);
        let y = m.factorize_unpivoted().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_detected() {
        let a = BandMatrix::zeros(4, 1);
        assert!(matches!(a.factorize(), Err(Error::Singular(0))));
    }
}
