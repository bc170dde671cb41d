//! Gelfand–Levitan equations and potential recovery.
//!
//! The kernel `z(x, s)` of the Volterra operator `(Lf)(x) = ∫_x^T z(x, s) f(s) ds`
//! satisfies `(I + L)^* (I + C_T) (I + L) = I`. Since `(I + C_T)(I + L)` is
//! then lower triangular, each column `z(·, s)` solves
//!
//! ```text
//! z(x, s) + c_T(x, s) + ∫_0^s c_T(x, τ) z(τ, s) dτ = 0,    0 <= x <= s,
//! ```
//!
//! and the potential follows from the diagonal, `q(x) = 2 d/dx z(x, x)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::connecting::ConnectingKernel;
use crate::error::{usage, Error, Result};
use crate::goursat::GoursatSolution;
use crate::model::{trap_weight, trapz, CoefficientField, GridSpec, KernelKind, TriangularField};

/// Systems with a larger 1-norm condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative asymmetry of `c_T` accepted by the solver.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GLSolution {
    pub grid: GridSpec,
    /// `z(x_i, s_j)` for `0 <= i <= j <= N`.
    pub z: TriangularField,
    /// `z(x_i, x_i)`.
    pub diag: Vec<f64>,
    pub q_hat: CoefficientField,
    /// Largest condition number met over all columns.
    pub max_condition: f64,
}

/// One column of the Nyström discretization, with its diagnostics.
#[derive(Debug, Clone)]
pub struct GLColumn {
    /// `z(x_k, s_j)` for `k = 0..=j`; the last entry is on the diagonal.
    pub z: Vec<f64>,
    /// 1-norm condition number of the system matrix.
    pub condition: f64,
}

fn check_symmetric(c: &ConnectingKernel) -> Result<()> {
    let asym = c.asymmetry();
    if asym > SYMMETRY_TOLERANCE * (1.0 + c.max_abs()) {
        return Err(Error::Assembly(format!(
            "connecting kernel is not symmetric (defect {asym:.3e})"
        )));
    }
    Ok(())
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves column `j` with an optional ridge `λ` added to the identity:
/// `(I + λI + A) z = -b`, `A_ak = ω_k c_T(x_a, τ_k)`, `b_a = c_T(x_a, s_j)`
/// on the nodes of `[0, s_j]`, the diagonal row included.
pub fn solve_gl_column(c: &ConnectingKernel, j: usize, ridge: f64) -> Result<GLColumn> {
    let n = c.grid().n();
    if j > n {
        return usage(format!("diagonal index {j} exceeds N = {n}"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return usage("ridge must be finite and non-negative");
    }
    let h = c.grid().h();
    let m = j + 1;
    let system = DMatrix::from_fn(m, m, |a, k| {
        let id = if a == k { 1.0 + ridge } else { 0.0 };
        id + trap_weight(k, j, h) * c.get(a, k)
    });
    let rhs = DVector::from_fn(m, |a, _| -c.get(a, j));
    let ill = |condition| Error::IllConditioned {
        stage: "gelfand-levitan",
        index: j,
        condition,
    };
    let lu = system.clone().lu();
    let inverse = lu.try_inverse().ok_or_else(|| ill(f64::INFINITY))?;
    let condition = norm1(&system) * norm1(&inverse);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(ill(condition));
    }
    let z = lu.solve(&rhs).ok_or_else(|| ill(f64::INFINITY))?;
    Ok(GLColumn {
        z: z.iter().copied().collect(),
        condition,
    })
}

/// `z(x_k, s_j)`, `k = 0..=j`, without regularization.
pub fn solve_gl(c: &ConnectingKernel, j: usize) -> Result<Vec<f64>> {
    check_symmetric(c)?;
    Ok(solve_gl_column(c, j, 0.0)?.z)
}

/// Solves every column in parallel and recovers the potential.
pub fn solve_gl_all(c: &ConnectingKernel, ridge: f64) -> Result<GLSolution> {
    check_symmetric(c)?;
    let grid = *c.grid();
    let n = grid.n();
    let cols: Vec<GLColumn> = (0..=n)
        .into_par_iter()
        .map(|j| solve_gl_column(c, j, ridge))
        .collect::<Result<_>>()?;
    let mut z = TriangularField::square(grid, KernelKind::Inverse);
    let mut max_condition = 0.0_f64;
    for (j, col) in cols.iter().enumerate() {
        for (k, &v) in col.z.iter().enumerate() {
            z.set(k, j, v);
        }
        max_condition = max_condition.max(col.condition);
    }
    let diag: Vec<f64> = cols.iter().map(|col| col.z[col.z.len() - 1]).collect();
    let q_hat = recover_potential(&diag, &grid)?;
    Ok(GLSolution {
        grid,
        z,
        diag,
        q_hat,
        max_condition,
    })
}

/// `sup_k |φ_s(x_k)|` for column `j`, where
/// `φ_s(x) = z(x, s) + c_T(x, s) + ∫_0^s c_T(x, τ) z(τ, s) dτ`.
pub fn gl_residual(c: &ConnectingKernel, z_col: &[f64], j: usize) -> Result<f64> {
    let n = c.grid().n();
    if j > n || z_col.len() != j + 1 {
        return usage("z column does not match the diagonal index");
    }
    let h = c.grid().h();
    let mut worst = 0.0_f64;
    let mut prod = vec![0.0; z_col.len()];
    for (a, &za) in z_col.iter().enumerate() {
        for (k, p) in prod.iter_mut().enumerate() {
            *p = c.get(a, k) * z_col[k];
        }
        worst = worst.max((za + c.get(a, j) + trapz(&prod, h)).abs());
    }
    Ok(worst)
}

/// Inverts `I + M` through `(I + M)(I + L) = I`, i.e. for `x <= s`
/// `z(x, s) + w(x, s) + ∫_x^s w(x, τ) z(τ, s) dτ = 0`, with the integral
/// taken by the trapezoid rule and solved backward in `x` for each `s`.
/// On the diagonal the integral is empty and `z(s, s) = -w(s, s)`.
pub fn z_from_w(sol: &GoursatSolution) -> Result<TriangularField> {
    let grid = *sol.grid();
    let n = grid.n();
    let h = grid.h();
    let w = &sol.w;
    let mut z = TriangularField::square(grid, KernelKind::Inverse);
    for s in 0..=n {
        z.set(s, s, -w.get(s, s));
        for x in (0..s).rev() {
            let mut acc = w.get(x, s) + 0.5 * h * w.get(x, s) * z.get(s, s);
            for tau in x + 1..s {
                acc += h * w.get(x, tau) * z.get(tau, s);
            }
            let lead = 1.0 + 0.5 * h * w.get(x, x);
            if lead.abs() < 1e-8 {
                return Err(Error::IllConditioned {
                    stage: "volterra inversion",
                    index: x,
                    condition: 1.0 / lead.abs(),
                });
            }
            let v = -acc / lead;
            if !v.is_finite() {
                return Err(Error::Instability {
                    stage: "volterra inversion",
                    i: x,
                    j: s,
                });
            }
            z.set(x, s, v);
        }
    }
    Ok(z)
}

/// Largest defect of the discrete composition solved by [`z_from_w`].
pub fn composition_residual(sol: &GoursatSolution, z: &TriangularField) -> f64 {
    let n = sol.grid().n();
    let h = sol.grid().h();
    let w = &sol.w;
    let mut worst = 0.0_f64;
    for s in 0..=n {
        for x in 0..=s {
            let prod: Vec<f64> = (x..=s).map(|tau| w.get(x, tau) * z.get(tau, s)).collect();
            worst = worst.max((z.get(x, s) + w.get(x, s) + trapz(&prod, h)).abs());
        }
    }
    worst
}

/// Max-norm defect of `(I + L)^* (I + C_T) (I + L) = I`.
///
/// Operators are discretized on `[0, T]` with trapezoid weights `W`, so the
/// adjoint is `W^{-1} A^T W`. Entries are taken at matrix level: scaling to
/// kernel samples would turn the `O(h²)` defect of the identity part into
/// `O(h)`. The last row and column are skipped, where the quadrature of
/// `L` degenerates to a single point.
pub fn operator_identity_residual(c: &ConnectingKernel, z: &TriangularField) -> Result<f64> {
    let grid = *c.grid();
    if z.grid() != &grid {
        return usage("connecting kernel and z must share a grid");
    }
    let n = grid.n();
    let h = grid.h();
    let weights: Vec<f64> = (0..=n).map(|k| trap_weight(k, n, h)).collect();
    let il = DMatrix::from_fn(n + 1, n + 1, |i, k| {
        let id = if i == k { 1.0 } else { 0.0 };
        if k < i {
            id
        } else {
            id + trap_weight(k - i, n - i, h) * z.get(i, k)
        }
    });
    let ic = DMatrix::from_fn(n + 1, n + 1, |i, k| {
        let id = if i == k { 1.0 } else { 0.0 };
        id + weights[k] * c.get(i, k)
    });
    let wmat = DMatrix::from_diagonal(&DVector::from_column_slice(&weights));
    let inner = wmat * ic * &il;
    let composed = il.transpose() * inner;
    let mut worst = 0.0_f64;
    for i in 0..n {
        for k in 0..n {
            let id = if i == k { 1.0 } else { 0.0 };
            worst = worst.max((composed[(i, k)] / weights[i] - id).abs());
        }
    }
    Ok(worst)
}

/// `q = 2 d/dx z(x, x)`: central differences inside, one-sided second-order
/// stencils at the ends.
pub fn recover_potential(diag: &[f64], grid: &GridSpec) -> Result<CoefficientField> {
    let n = grid.n();
    if diag.len() != n + 1 {
        return usage(format!("diagonal needs {} samples", n + 1));
    }
    let h = grid.h();
    let mut q = vec![0.0; n + 1];
    q[0] = (-3.0 * diag[0] + 4.0 * diag[1] - diag[2]) / h;
    for i in 1..n {
        q[i] = (diag[i + 1] - diag[i - 1]) / h;
    }
    q[n] = (3.0 * diag[n] - 4.0 * diag[n - 1] + diag[n - 2]) / h;
    CoefficientField::new(*grid, q)
}

/// Reconstruction errors on the window `[0.1 T, 0.9 T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowError {
    /// `‖q̂ - q‖₂ / ‖q‖₂`, or the absolute L₂ error when `q` vanishes there.
    pub l2_relative: f64,
    pub linf: f64,
}

pub fn window_error(q_hat: &CoefficientField, q: &CoefficientField) -> Result<WindowError> {
    let grid = *q.grid();
    if q_hat.grid() != &grid {
        return usage("q and q_hat must share a grid");
    }
    let t = grid.horizon();
    let idx: Vec<usize> = (0..=grid.n())
        .filter(|&i| {
            let x = grid.node(i);
            x >= 0.1 * t - 1e-12 && x <= 0.9 * t + 1e-12
        })
        .collect();
    let h = grid.h();
    let (a, b) = (q_hat.values(), q.values());
    let diff2: Vec<f64> = idx.iter().map(|&i| (a[i] - b[i]).powi(2)).collect();
    let ref2: Vec<f64> = idx.iter().map(|&i| b[i].powi(2)).collect();
    let err = trapz(&diff2, h).sqrt();
    let norm = trapz(&ref2, h).sqrt();
    let l2_relative = if norm > 0.0 { err / norm } else { err };
    let linf = idx.iter().map(|&i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    Ok(WindowError { l2_relative, linf })
}
