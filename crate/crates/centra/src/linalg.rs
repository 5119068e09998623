//! Dense linear algebra kernels: symmetric eigendecomposition, Cholesky,
//! linear solves, and the matrix norms used by the robustness bounds.
//!
//! The eigensolver is Householder tridiagonalization (tred2) followed by
//! implicit-shift QL iteration (tql2), the classic EISPACK pair. All spectra
//! in this crate go through real symmetric matrices (non-symmetric operators
//! are handled upstream via similarity transforms), which keeps eigenvalues
//! real and the decomposition orthonormal.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2};

/// Eigendecomposition of a real symmetric matrix.
///
/// Eigenvalues are sorted descending; `eigenvectors` holds the matching
/// orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Symmetric eigendecomposition. The input must be square and symmetric
/// (checked up to 1e-10 relative).
pub fn sym_eig(m: ArrayView2<f64>) -> Result<SymEig> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::shape(format!("{n}x{n}"), format!("{}x{}", n, m.ncols())));
    }
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-10 * scale {
                return Err(Error::Numerical(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }
    if n == 0 {
        return Ok(SymEig {
            eigenvalues: vec![],
            eigenvectors: Array2::zeros((0, 0)),
        });
    }

    let mut z = m.to_owned();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut d, &mut e, &mut z)?;

    // Sort descending, reordering eigenvector columns.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vecs[[r, new]] = z[[r, old]];
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors: vecs,
    })
}

/// Householder reduction to tridiagonal form with accumulation of the
/// orthogonal transform in `a`. On exit `d` holds the diagonal and `e[1..]`
/// the subdiagonal.
fn tred2(a: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[[i, k]].abs();
            }
            if scale == 0.0 {
                e[i] = a[[i, l]];
            } else {
                for k in 0..=l {
                    a[[i, k]] /= scale;
                    h += a[[i, k]] * a[[i, k]];
                }
                let mut f = a[[i, l]];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[[i, l]] = f - g;
                f = 0.0;
                for j in 0..=l {
                    a[[j, i]] = a[[i, j]] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[[j, k]] * a[[i, k]];
                    }
                    for k in (j + 1)..=l {
                        g += a[[k, j]] * a[[i, k]];
                    }
                    e[j] = g / h;
                    f += e[j] * a[[i, j]];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[[i, j]];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let delta = f * e[k] + g * a[[i, k]];
                        a[[j, k]] -= delta;
                    }
                }
            }
        } else {
            e[i] = a[[i, l]];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += a[[i, k]] * a[[k, j]];
                }
                for k in 0..i {
                    let delta = g * a[[k, i]];
                    a[[k, j]] -= delta;
                }
            }
        }
        d[i] = a[[i, i]];
        a[[i, i]] = 1.0;
        for j in 0..i {
            a[[j, i]] = 0.0;
            a[[i, j]] = 0.0;
        }
    }
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix, updating the
/// accumulated transform `z` so its columns become eigenvectors.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut Array2<f64>) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::NoConvergence {
                    iters: iter,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[[k, i + 1]];
                    z[[k, i + 1]] = s * z[[k, i]] + c * f;
                    z[[k, i]] = c * z[[k, i]] - s * f;
                }
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::shape(format!("{n}x{n}"), format!("{}x{}", n, m.ncols())));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite at pivot {i} ({sum:.3e})"
                    )));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve `M x = b` for symmetric positive-definite `M` via Cholesky.
pub fn solve_spd(m: ArrayView2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(m)?;
    let n = b.len();
    // forward: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    // back: L^T x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    Ok(x)
}

/// Induced 1-norm: maximum absolute column sum.
pub fn norm_l1(m: ArrayView2<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let s: f64 = m.column(j).iter().map(|x| x.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Induced infinity-norm: maximum absolute row sum.
pub fn norm_linf(m: ArrayView2<f64>) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() {
        let s: f64 = m.row(i).iter().map(|x| x.abs()).sum();
        best = best.max(s);
    }
    best
}

pub fn norm_fro(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral norm (largest singular value), computed as
/// sqrt(lambda_max(M^T M)) with the symmetric eigensolver.
pub fn norm_spectral(m: ArrayView2<f64>) -> f64 {
    let gram = if m.nrows() >= m.ncols() {
        m.t().dot(&m)
    } else {
        m.dot(&m.t())
    };
    match sym_eig(gram.view()) {
        Ok(eig) => eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0).sqrt(),
        Err(_) => 0.0,
    }
}
