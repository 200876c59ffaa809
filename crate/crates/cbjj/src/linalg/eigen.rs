use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::band::BandMatrix;
use super::{axpy, dot, norm};
use crate::error::{Error, Result};

type C = Complex64;

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Residual target relative to the Gershgorin scale of the matrix.
    pub tol: f64,
    /// Upper limit on the Krylov dimension.
    pub max_krylov: usize,
    /// Matrices up to this dimension are diagonalized densely.
    pub dense_limit: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_krylov: 600, dense_limit: 600 }
    }
}

/// Eigenvalues in ascending order with unit eigenvectors.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<C>>,
    /// ‖Hv − λv‖ for each pair.
    pub residuals: Vec<f64>,
    pub krylov_steps: usize,
}

/// Spectral scale used for residual tolerances.
pub fn matrix_scale(h: &BandMatrix) -> f64 {
    let (lo, hi) = h.gershgorin();
    lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
}

/// The `count` lowest eigenpairs of a Hermitian band matrix.
pub fn lowest(h: &BandMatrix, count: usize, opts: &EigenOptions) -> Result<Eigen> {
    let (lo, hi) = h.gershgorin();
    let sigma = lo - 1e-3 * (hi - lo).max(1.0);
    nearest(h, sigma, count, opts)
}

/// The `count` eigenpairs closest to `sigma`, returned in ascending order.
pub fn nearest(h: &BandMatrix, sigma: f64, count: usize, opts: &EigenOptions) -> Result<Eigen> {
    let n = h.dim();
    if count == 0 {
        return Ok(Eigen { values: vec![], vectors: vec![], residuals: vec![], krylov_steps: 0 });
    }
    if count > n {
        return Err(Error::Parameter(format!("asked for {count} eigenpairs of a {n}-dimensional matrix")));
    }
    if n <= opts.dense_limit {
        return dense_nearest(h, sigma, count);
    }
    shift_invert_lanczos(h, sigma, count, opts)
}

fn dense_nearest(h: &BandMatrix, sigma: f64, count: usize) -> Result<Eigen> {
    let d = h.to_dense();
    let eig = SymmetricEigen::new(d);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| {
        (eig.eigenvalues[a] - sigma)
            .abs()
            .total_cmp(&(eig.eigenvalues[b] - sigma).abs())
    });
    idx.truncate(count);
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = Eigen { values: vec![], vectors: vec![], residuals: vec![], krylov_steps: 0 };
    for i in idx {
        let v: Vec<C> = eig.eigenvectors.column(i).iter().copied().collect();
        let (lam, res) = rayleigh(h, &v);
        out.values.push(lam);
        out.vectors.push(v);
        out.residuals.push(res);
    }
    Ok(out)
}

/// Rayleigh quotient and residual norm of a unit vector.
pub fn rayleigh(h: &BandMatrix, v: &[C]) -> (f64, f64) {
    let hv = h.matvec(v);
    let lam = dot(v, &hv).re;
    let r: f64 = hv
        .iter()
        .zip(v)
        .map(|(a, b)| (a - lam * b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (lam, r)
}

fn start_vector(n: usize) -> Vec<C> {
    // fixed pseudo-random start so results are reproducible
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut v: Vec<C> = (0..n).map(|_| C::new(next(), next())).collect();
    let s = 1.0 / norm(&v);
    v.iter_mut().for_each(|x| *x *= s);
    v
}

fn shift_invert_lanczos(h: &BandMatrix, sigma: f64, count: usize, opts: &EigenOptions) -> Result<Eigen> {
    let n = h.dim();
    let shifted = h.axpy(C::new(-sigma, 0.0), &BandMatrix::identity(n))?;
    let lu = shifted.factorize()?;
    let scale = matrix_scale(h);
    let target = opts.tol * scale;
    let max_m = opts.max_krylov.min(n);

    let mut basis: Vec<Vec<C>> = vec![start_vector(n)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut worst = f64::INFINITY;
    let mut next_check = (2 * count + 10).min(max_m);

    loop {
        let m = basis.len();
        let mut w = lu.solve(&basis[m - 1]);
        let a = dot(&basis[m - 1], &w).re;
        axpy(C::new(-a, 0.0), &basis[m - 1], &mut w);
        if m >= 2 {
            axpy(C::new(-beta[m - 2], 0.0), &basis[m - 2], &mut w);
        }
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        alpha.push(a);
        let b = norm(&w);

        let exhausted = m >= max_m;
        let breakdown = b < 1e-14 * a.abs().max(1e-300);
        if m >= next_check || exhausted || breakdown {
            next_check = m + 10;
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&x, &y| eig.eigenvalues[y].abs().total_cmp(&eig.eigenvalues[x].abs()));
            if idx.len() >= count {
                let chosen = &idx[..count];
                let est_ok = chosen.iter().all(|&i| {
                    let theta = eig.eigenvalues[i];
                    let s_last = eig.eigenvectors[(m - 1, i)];
                    (b * s_last).abs() / theta.abs() * scale <= target
                });
                if est_ok || exhausted || breakdown {
                    let mut pairs: Vec<(f64, Vec<C>, f64)> = Vec::with_capacity(count);
                    for &i in chosen {
                        let mut x = vec![C::new(0.0, 0.0); n];
                        for (j, q) in basis.iter().enumerate() {
                            axpy(C::new(eig.eigenvectors[(j, i)], 0.0), q, &mut x);
                        }
                        let s = 1.0 / norm(&x);
                        x.iter_mut().for_each(|v| *v *= s);
                        let (lam, res) = rayleigh(h, &x);
                        pairs.push((lam, x, res));
                    }
                    worst = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
                    if worst <= target {
                        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
                        let mut out = Eigen {
                            values: vec![],
                            vectors: vec![],
                            residuals: vec![],
                            krylov_steps: m,
                        };
                        for (l, v, r) in pairs {
                            out.values.push(l);
                            out.vectors.push(v);
                            out.residuals.push(r);
                        }
                        return Ok(out);
                    }
                }
            }
            if exhausted || breakdown {
                let converged = idx
                    .iter()
                    .filter(|&&i| {
                        let s_last = eig.eigenvectors[(m - 1, i)];
                        (b * s_last).abs() / eig.eigenvalues[i].abs() * scale <= target
                    })
                    .count();
                return Err(Error::NoConvergence {
                    requested: count,
                    converged,
                    iterations: m,
                    worst_residual: worst,
                });
            }
        }
        beta.push(b);
        let s = 1.0 / b;
        w.iter_mut().for_each(|x| *x *= s);
        basis.push(w);
    }
}
