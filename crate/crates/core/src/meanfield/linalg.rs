//! Small linear solvers: Thomas, cyclic Thomas (Sherman–Morrison) and
//! Jacobi-preconditioned BiCGSTAB for general nonsymmetric systems.

use crate::error::{Error, Result};

/// Solve a tridiagonal system. `lower[i]` multiplies `x[i-1]` and
/// `upper[i]` multiplies `x[i+1]` in row `i`; `lower[0]` and `upper[n-1]`
/// are ignored. No pivoting: intended for diagonally dominant matrices.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(singular());
    }
    c[0] = if n > 1 { upper[0] / beta } else { 0.0 };
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 {
            return Err(singular());
        }
        c[i] = if i + 1 < n { upper[i] / beta } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

fn singular() -> Error {
    Error::SolverFailed {
        residual: f64::INFINITY,
        tolerance: 0.0,
    }
}

/// Solve a periodic tridiagonal system: as [`solve_tridiagonal`] but
/// `lower[0]` multiplies `x[n-1]` and `upper[n-1]` multiplies `x[0]`.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] += diag[i];
            a[i][(i + n - 1) % n] += lower[i];
            a[i][(i + 1) % n] += upper[i];
        }
        return solve_dense(a, rhs.to_vec());
    }
    let alpha = upper[n - 1]; // A[n-1][0]
    let beta = lower[0]; // A[0][n-1]
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &bb, upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &bb, upper, &u)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return Err(singular());
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BiCGSTAB with Jacobi preconditioning. Converged when
/// `‖b − Ax‖₁ ≤ tol·‖b‖₁`; returns the solution and that relative residual.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = b.len();
    let bnorm = l1_norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0.0));
    }
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = v[i] / diag[i];
        }
    };
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = l1_norm(&r) / bnorm;
    if res <= tol {
        return Ok((x, res));
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut y);
        apply(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if l1_norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            break;
        }
        precond(&s, &mut z);
        apply(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if l1_norm(&r) / bnorm <= tol {
            break;
        }
    }
    // true residual, not the recursively updated one
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    res = l1_norm(&r) / bnorm;
    if res <= tol {
        Ok((x, res))
    } else {
        Err(Error::SolverFailed {
            residual: res,
            tolerance: tol,
        })
    }
}
