//! Duhamel kernel of the forward problem.
//!
//! The kernel `w(x, t)` solves, on `0 <= x <= t`,
//!
//! ```text
//! w_tt - w_xx + q(x) w + ∫_x^t K(t - s) w(x, s) ds + K(t - x) = 0,
//! w(0, t) = 0,        w(x, x) = -1/2 ∫_0^x q,
//! ```
//!
//! and is marched on the characteristic triangle `{0 <= i <= j, i + j <= 2N}`
//! with a diamond stencil. Every point of that triangle has `x <= T`, so `q`
//! on `[0, T]` is enough while `w(0+, t)` and hence the response kernel are
//! produced on all of `[0, 2T]`.

use crate::error::{usage, Error, Result};
use crate::model::{
    cumulative_trapezoid, CoefficientField, GridSpec, KernelKind, MemoryKernel, TriangularField,
};

/// Solved Duhamel kernel together with the data that generated it.
#[derive(Debug, Clone)]
pub struct GoursatSolution {
    pub w: TriangularField,
    pub q: CoefficientField,
    pub kernel: MemoryKernel,
}

impl GoursatSolution {
    pub fn grid(&self) -> &GridSpec {
        self.w.grid()
    }
}

/// Smooth part `r` of the response operator on `[0, 2T]`:
/// `(Rf)(t) = -f'(t) + ∫_0^t r(s) f(t - s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseData {
    grid: GridSpec,
    r: Vec<f64>,
}

impl ResponseData {
    pub fn new(grid: GridSpec, r: Vec<f64>) -> Result<Self> {
        if r.len() != grid.n2() + 1 {
            return usage(format!(
                "response kernel needs {} samples, got {}",
                grid.n2() + 1,
                r.len()
            ));
        }
        if let Some(k) = r.iter().position(|v| !v.is_finite()) {
            return usage(format!("response sample {k} is not finite"));
        }
        Ok(Self { grid, r })
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            r: vec![0.0; grid.n2() + 1],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }
}

/// Forcing of the kernel equation at `(x_i, t_j)`:
/// `q_i w + ∫_{x_i}^{t_j} K(t_j - s) w(x_i, s) ds + K(t_j - x_i)`.
fn forcing(w: &TriangularField, q: &[f64], k: &[f64], h: f64, i: usize, j: usize) -> f64 {
    let row = w.row(i);
    let len = j - i;
    let memory = if len == 0 {
        0.0
    } else {
        // trapezoid over s = x_i..=t_j of K(t_j - s) w(x_i, s)
        let mut acc = 0.5 * (k[len] * row[0] + k[0] * row[len]);
        for d in 1..len {
            acc += k[len - d] * row[d];
        }
        h * acc
    };
    q[i] * row[len] + memory + k[len]
}

/// Marches the Goursat problem for `w` on the characteristic triangle.
///
/// Rows advance in `t`. Points two or more steps above the diagonal use the
/// diamond `w(i,j+1) = w(i-1,j) + w(i+1,j) - w(i,j-1) - h² F(i,j)`. The
/// diamond couples only points of equal parity of `i + j`, and for the
/// points one step above the diagonal its lower corners would fall below
/// the characteristic; those points are instead advanced by integrating the
/// equation over the characteristic half-cell that rests on the diagonal
/// between `x_{i-1/2}` and `x_{i+1/2}`.
pub fn solve_goursat(
    q: &CoefficientField,
    kernel: &MemoryKernel,
    grid: &GridSpec,
) -> Result<GoursatSolution> {
    if q.grid() != grid || kernel.grid() != grid {
        return usage("q, K and the grid must agree");
    }
    let n = grid.n();
    let n2 = grid.n2();
    let h = grid.h();
    let qv = q.values();
    let kv = kernel.values();

    let cum = cumulative_trapezoid(qv, h);
    let diag: Vec<f64> = cum.iter().map(|c| -0.5 * c).collect();

    let mut w = TriangularField::characteristic(*grid, KernelKind::Duhamel);
    // row j = 0 is the single point (0, 0) where w = 0.
    let mut f_prev: Vec<f64> = vec![forcing(&w, qv, kv, h, 0, 0)];

    for j in 1..=n2 {
        let i_max = n2 - j;
        let mut cur = vec![0.0; i_max.min(j) + 1];
        // boundary line x = 0 stays zero; diagonal imposed
        if j <= n {
            cur[j] = diag[j];
        }
        // half-cell next to the diagonal: P = (j-1, j)
        let i = j - 1;
        if i >= 1 && i <= i_max {
            // ∫ q over [x_{i-1/2}, x_{i+1/2}] of the piecewise linear interpolant
            let q_mid = h * (qv[i - 1] + 6.0 * qv[i] + qv[i + 1]) / 8.0;
            let d_diag = -0.5 * q_mid;
            let w_half = 0.5 * (diag[i] + diag[i + 1]);
            let q_half = 0.5 * (qv[i] + qv[i + 1]);
            let f_diag_half = q_half * w_half + kv[0];
            let f_center = 0.5 * (f_prev[i - 1] + f_diag_half);
            cur[i] = w.get(i - 1, i) + d_diag - 0.5 * h * h * f_center;
        }
        // full diamonds
        for i in 1..=i_max.min(j.saturating_sub(2)) {
            cur[i] =
                w.get(i - 1, j - 1) + w.get(i + 1, j - 1) - w.get(i, j - 2) - h * h * f_prev[i];
        }
        for (i, &v) in cur.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Instability {
                    stage: "goursat",
                    i,
                    j,
                });
            }
            w.set(i, j, v);
        }
        f_prev = (0..cur.len())
            .map(|i| forcing(&w, qv, kv, h, i, j))
            .collect();
    }

    Ok(GoursatSolution {
        w,
        q: q.clone(),
        kernel: kernel.clone(),
    })
}

/// Extracts `r(t) = w_x(0, t)` on `[0, 2T]`.
///
/// The three-point one-sided stencil is used wherever `w(x_2, t_j)` exists.
/// Where only `w(x_1, t_j)` exists the identity `w_xx(0, t) = K(t)` (the
/// equation restricted to `x = 0`, where `w` vanishes identically) gives the
/// second-order two-point form `w(x_1, t)/h - h K(t)/2`. At `t = 0` the
/// diagonal condition gives the limit `-q(0)/2`; the last sample is
/// extrapolated.
pub fn response_kernel(sol: &GoursatSolution) -> Result<ResponseData> {
    let grid = *sol.grid();
    let n2 = grid.n2();
    if grid.n() < 2 {
        return usage("response kernel needs N >= 2");
    }
    let h = grid.h();
    let w = &sol.w;
    let kv = sol.kernel.values();
    let mut r = vec![0.0; n2 + 1];
    r[0] = -0.5 * sol.q.values()[0];
    for (j, rj) in r.iter_mut().enumerate().take(n2).skip(1) {
        *rj = if w.contains(2, j) {
            (4.0 * w.get(1, j) - w.get(2, j)) / (2.0 * h)
        } else {
            w.get(1, j) / h - 0.5 * h * kv[j]
        };
    }
    r[n2] = 3.0 * r[n2 - 1] - 3.0 * r[n2 - 2] + r[n2 - 3];
    ResponseData::new(grid, r)
}

/// Largest defect of `d/dx w(x, x) = -q(x)/2` along the computed diagonal,
/// by central differences at the interior nodes.
pub fn diagonal_residual(sol: &GoursatSolution) -> f64 {
    let n = sol.grid().n();
    let h = sol.grid().h();
    let q = sol.q.values();
    (1..n)
        .map(|i| {
            let slope = (sol.w.get(i + 1, i + 1) - sol.w.get(i - 1, i - 1)) / (2.0 * h);
            (slope + 0.5 * q[i]).abs()
        })
        .fold(0.0, f64::max)
}
