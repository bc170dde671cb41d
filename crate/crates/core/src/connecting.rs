//! The connecting operator `C^T` from boundary data.
//!
//! For controls `f`, `g` the Blagoveshchenskii function
//! `ψ(t, s) = (u^f(·, t), u^g(·, s))` solves, on `{t, s >= 0, t + s <= 2T}`,
//!
//! ```text
//! ψ_ss - ψ_tt = (Rf)(t) g(s) - f(t) (Rg)(s)
//!             + ∫_0^t K(t - τ) ψ(τ, s) dτ - ∫_0^s K(s - α) ψ(t, α) dα,
//! ψ(0, s) = ψ(t, 0) = 0,
//! ```
//!
//! and `(C^T f, g) = ψ(T, T)`. Only the response kernel `r` and the
//! relaxation kernel `K` enter, so `C^T` is computable from inverse data.
//! Probing with a basis of narrow controls gives its Galerkin matrix, from
//! which the smooth kernel `c_T` of `C_T = J C^T J - I` is extracted.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{usage, Error, Result};
use crate::forward::{fd_forward, response_of};
use crate::goursat::{GoursatSolution, ResponseData};
use crate::model::{trap_weight, trapz, CoefficientField, ControlSignal, GridSpec, MemoryKernel};

/// `ψ(t_m, s_k)` on the triangle `m + k <= 2N`, stored by level `k`.
#[derive(Debug, Clone)]
pub struct PsiField {
    grid: GridSpec,
    levels: Vec<Vec<f64>>,
}

impl PsiField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `ψ(t_m, s_k)`; requires `m + k <= 2N`.
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.levels[k][m]
    }

    /// `(C^T f, g)`.
    pub fn at_horizon(&self) -> f64 {
        let n = self.grid.n();
        self.get(n, n)
    }

    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Samples `c_T(t_i, s_j)`, `0 <= i, j <= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectingKernel {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ConnectingKernel {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let n1 = grid.n() + 1;
        if values.len() != n1 * n1 {
            return usage(format!("connecting kernel needs {} samples", n1 * n1));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Assembly(format!(
                "connecting kernel entry ({}, {}) is not finite",
                k / n1,
                k % n1
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: GridSpec) -> Self {
        let n1 = grid.n() + 1;
        Self {
            grid,
            values: vec![0.0; n1 * n1],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.grid.n() + 1) + j]
    }

    /// Row-major samples.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n1 = self.grid.n() + 1;
        &self.values[i * n1..(i + 1) * n1]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|c(i, j) - c(j, i)|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.grid.n();
        let mut worst = 0.0_f64;
        for i in 0..=n {
            for j in i + 1..=n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `(c + c^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.grid.n();
        let mut values = self.values.clone();
        for i in 0..=n {
            for j in 0..=n {
                values[i * (n + 1) + j] = 0.5 * (self.get(i, j) + self.get(j, i));
            }
        }
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `(C^T f, g) = (f, g) + ∫∫ c_T(T - t, T - s) f(s) g(t) ds dt` for
    /// controls on `[0, T]`, by the trapezoid rule.
    pub fn connecting_form(&self, f: &[f64], g: &[f64]) -> f64 {
        let n = self.grid.n();
        let h = self.grid.h();
        let fg: Vec<f64> = (0..=n).map(|k| f[k] * g[k]).collect();
        let mut total = trapz(&fg, h);
        for t in 0..=n {
            let wt = trap_weight(t, n, h);
            let mut inner = 0.0;
            for s in 0..=n {
                inner += trap_weight(s, n, h) * self.get(n - t, n - s) * f[s];
            }
            total += wt * g[t] * inner;
        }
        total
    }
}

/// Memory integrals at fixed `s` (over `t`) and fixed `t` (over `s`).
#[inline]
fn memory_terms(levels: &[Vec<f64>], kv: &[f64], h: f64, m: usize, k: usize) -> f64 {
    let row = &levels[k];
    let mut mt = 0.5 * (kv[m] * row[0] + kv[0] * row[m]);
    for tau in 1..m {
        mt += kv[m - tau] * row[tau];
    }
    let mut ms = 0.0;
    if k > 0 {
        ms = 0.5 * (kv[k] * levels[0][m] + kv[0] * row[m]);
        for alpha in 1..k {
            ms += kv[k - alpha] * levels[alpha][m];
        }
    }
    h * (mt - ms)
}

/// `ψ(t_m, h)`: near `s = 0` the state `u^g(·, s)` is a boundary layer of
/// width `s`, so `ψ(t, s) ≈ f(t) g'(0) s² / 2`. Vanishes to third order for
/// smooth admissible controls; keeps the scheme consistent for controls
/// that are only zero at `t = 0`.
#[inline]
fn start_up(f: &[f64], g: &[f64], h: f64, m: usize) -> f64 {
    0.5 * h * f[m] * g[1]
}

/// Diamond march in `s` up to level `top`; level 0 is zero and level 1 is
/// the start-up value.
#[allow(clippy::too_many_arguments)]
fn march_psi(
    rf: &[f64],
    f: &[f64],
    rg: &[f64],
    g: &[f64],
    kv: &[f64],
    memory: bool,
    h: f64,
    n2: usize,
    top: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(top + 1);
    levels.push(vec![0.0; n2 + 1]);
    if top >= 1 {
        levels.push((0..n2).map(|m| start_up(f, g, h, m)).collect());
    }
    let h2 = h * h;
    for k in 1..top {
        let mut next = vec![0.0; n2 - k];
        for m in 1..n2 - k {
            let mut src = rf[m] * g[k] - f[m] * rg[k];
            if memory {
                src += memory_terms(&levels, kv, h, m, k);
            }
            let v = levels[k][m - 1] + levels[k][m + 1] - levels[k - 1][m] + h2 * src;
            if !v.is_finite() {
                return Err(Error::Instability {
                    stage: "blagoveshchenskii",
                    i: m,
                    j: k + 1,
                });
            }
            next[m] = v;
        }
        levels.push(next);
    }
    Ok(levels)
}

fn check_data(r: &ResponseData, kernel: &MemoryKernel, grid: &GridSpec) -> Result<()> {
    if r.grid() != grid || kernel.grid() != grid {
        return usage("response data, K and grid must agree");
    }
    Ok(())
}

/// Solves for `ψ` on the whole triangle `t + s <= 2T`.
pub fn solve_blagoveshchenskii(
    r: &ResponseData,
    kernel: &MemoryKernel,
    f: &ControlSignal,
    g: &ControlSignal,
    grid: &GridSpec,
) -> Result<PsiField> {
    check_data(r, kernel, grid)?;
    if !f.is_admissible() || !g.is_admissible() {
        return usage("ψ needs admissible controls");
    }
    if f.grid() != grid || g.grid() != grid {
        return usage("controls must share the data grid");
    }
    let n2 = grid.n2();
    let fv = f.padded(n2 + 1);
    let gv = g.padded(n2 + 1);
    let rf = response_of(r, &fv)?;
    let rg = response_of(r, &gv)?;
    let levels = march_psi(
        &rf,
        &fv,
        &rg,
        &gv,
        kernel.values(),
        !kernel.is_zero(),
        grid.h(),
        n2,
        n2,
    )?;
    Ok(PsiField {
        grid: *grid,
        levels,
    })
}

/// How the probe Galerkin matrix is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMethod {
    /// One ψ solve per probe pair, `O(N^5)` overall.
    PerPair,
    /// One backward sweep of the transposed scheme for the functional
    /// `ψ -> ψ(T, T)`, then dense products, `O(N^3)` overall. Identical to
    /// `PerPair` up to rounding since the scheme is linear.
    #[default]
    Adjoint,
}

/// Probe centred at node `p`: grid trace `(1/4, 1/2, 1/4)` of a compact bump
/// of half-width `2h`, normalized to trapezoid mass `h`.
fn probe(n2: usize, p: usize) -> Vec<f64> {
    let mut b = vec![0.0; n2 + 1];
    b[p - 1] = 0.25;
    b[p] = 0.5;
    b[p + 1] = 0.25;
    b
}

/// Galerkin matrix of `C^T` in the probe basis.
///
/// Rows and columns are indexed by probe centre `p` in `first..=last`.
#[derive(Debug, Clone)]
pub struct ProbeGalerkin {
    pub first: usize,
    pub last: usize,
    /// `B[p - first][p' - first] = ψ(T, T)` for the pair `(b_p, b_p')`.
    pub matrix: DMatrix<f64>,
    /// Largest `|B_pp' - B_p'p|` before mirroring (scheme-level asymmetry).
    pub raw_asymmetry: f64,
}

impl ProbeGalerkin {
    pub fn smallest_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Assembles the probe Galerkin matrix of `C^T` from `(r, K)` only.
///
/// Probes are centred at `p = 2..=N-1` so every probe vanishes at `t = 0`
/// and lies inside `[0, T]`.
pub fn probe_galerkin(
    r: &ResponseData,
    kernel: &MemoryKernel,
    grid: &GridSpec,
    method: SweepMethod,
) -> Result<ProbeGalerkin> {
    check_data(r, kernel, grid)?;
    let n = grid.n();
    let n2 = grid.n2();
    let h = grid.h();
    let (first, last) = (2, n - 1);
    let count = last - first + 1;
    let probes: Vec<Vec<f64>> = (first..=last).map(|p| probe(n2, p)).collect();
    let responses: Vec<Vec<f64>> = probes
        .iter()
        .map(|b| response_of(r, b))
        .collect::<Result<_>>()?;

    let full = match method {
        SweepMethod::PerPair => {
            let pairs: Vec<(usize, usize)> = (0..count)
                .flat_map(|a| (0..count).map(move |b| (a, b)))
                .collect();
            let memory = !kernel.is_zero();
            let values: Vec<f64> = pairs
                .par_iter()
                .map(|&(a, b)| {
                    let levels = march_psi(
                        &responses[a],
                        &probes[a],
                        &responses[b],
                        &probes[b],
                        kernel.values(),
                        memory,
                        h,
                        n2,
                        n,
                    )?;
                    Ok(levels[n][n])
                })
                .collect::<Result<_>>()?;
            DMatrix::from_row_slice(count, count, &values)
        }
        SweepMethod::Adjoint => {
            let (phi, start) = horizon_adjoint(kernel.values(), !kernel.is_zero(), h, n)?;
            let pm = DMatrix::from_fn(n2 + 1, count, |m, a| probes[a][m]);
            let rm = DMatrix::from_fn(n2 + 1, count, |m, a| responses[a][m]);
            // restrict the probe columns to the levels the functional reads
            let pk = pm.rows(0, n).clone_owned();
            let rk = rm.rows(0, n).clone_owned();
            let source = (rm.transpose() * &phi * &pk - pm.transpose() * &phi * &rk) * (h * h);
            let initial = (pm.transpose() * start) * pm.row(1) * (0.5 * h);
            source + initial
        }
    };

    let mut raw_asymmetry = 0.0_f64;
    let mut matrix = full.clone();
    for a in 0..count {
        for b in a + 1..count {
            raw_asymmetry = raw_asymmetry.max((full[(a, b)] - full[(b, a)]).abs());
            matrix[(b, a)] = full[(a, b)];
        }
    }
    Ok(ProbeGalerkin {
        first,
        last,
        matrix,
        raw_asymmetry,
    })
}

/// Weights with `ψ(T, T) = h² Σ Φ(m, k) G(m, k) + Σ S(m) ψ(t_m, h)` for any
/// source `G` and start-up level of the ψ scheme, found by back-substitution
/// on the transposed (unit lower-triangular) system. `Φ` is a
/// `(2N + 1) x N` matrix indexed by `(m, k)`; `S` has `2N + 1` entries.
fn horizon_adjoint(
    kv: &[f64],
    memory: bool,
    h: f64,
    n: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n2 = 2 * n;
    let h2 = h * h;
    // phi[k][m] for the equation centred at (m, k), k in 1..n, m in 1..=2N-k-1
    let mut phi: Vec<Vec<f64>> = (0..n).map(|k| vec![0.0; n2 + 1 - k]).collect();
    let exists = |m: usize, k: usize| k >= 1 && k < n && m >= 1 && m + k < n2;
    let mut start = DVector::zeros(n2 + 1);
    phi[n - 1][n] = 1.0;
    for l in (1..n).rev() {
        for p in 1..=n2 - l {
            let mut acc = 0.0;
            let at = |phi: &Vec<Vec<f64>>, m: usize, k: usize| {
                if exists(m, k) {
                    phi[k][m]
                } else {
                    0.0
                }
            };
            acc -= at(&phi, p - 1, l);
            acc -= at(&phi, p + 1, l);
            acc += at(&phi, p, l + 1);
            if memory {
                // ψ(p, l) inside ∫ K ψ(τ, l) dτ of equations (m, l), m >= p
                let mut mt = 0.0;
                let mut m = p;
                while exists(m, l) {
                    mt += phi[l][m] * trap_weight(p, m, h) * kv[m - p];
                    m += 1;
                }
                // ψ(p, l) inside ∫ K ψ(p, α) dα of equations (p, k), k >= l
                let mut ms = 0.0;
                let mut k = l;
                while exists(p, k) {
                    ms += phi[k][p] * trap_weight(l, k, h) * kv[k - l];
                    k += 1;
                }
                acc += h2 * (ms - mt);
            }
            let v = -acc;
            if !v.is_finite() {
                return Err(Error::Instability {
                    stage: "blagoveshchenskii adjoint",
                    i: p,
                    j: l - 1,
                });
            }
            if l == 1 {
                start[p] = v;
            } else {
                phi[l - 1][p] = v;
            }
        }
    }
    let phi = DMatrix::from_fn(n2 + 1, n, |m, k| if exists(m, k) { phi[k][m] } else { 0.0 });
    Ok((phi, start))
}

/// Lagrange weights for nodes `k0, k0+1, k0+2` evaluated at 0.
fn extrapolation_weights(k0: usize) -> [f64; 3] {
    let k = k0 as f64;
    [
        (k + 1.0) * (k + 2.0) / 2.0,
        -k * (k + 2.0),
        k * (k + 1.0) / 2.0,
    ]
}

/// Fills the entries of a symmetric kernel that the probes cannot resolve.
///
/// `c_T` is smooth on each side of the diagonal but has a derivative jump
/// across it, so the de-mollified entries within two steps of the diagonal
/// are biased at first order, and the boundary rows have no probe of their
/// own. Each missing entry on the upper side is extrapolated quadratically
/// from the nearest run of three known upper-side entries along a lattice
/// direction; ties between directions are averaged. Passes repeat so that
/// corners can lean on entries filled earlier.
fn fill_from_smooth_side(c: &mut [Vec<f64>], known: &mut [Vec<bool>]) -> Result<()> {
    const DIRS: [(isize, isize); 7] = [(-1, 1), (0, 1), (-1, 0), (1, 1), (-1, -1), (1, 0), (0, -1)];
    let n = c.len() - 1;
    let inside = |a: isize, b: isize| a >= 0 && b >= a && (b as usize) <= n;
    loop {
        let snapshot: Vec<Vec<bool>> = known.to_vec();
        let mut missing = 0;
        let mut filled = 0;
        for a in 0..=n {
            for b in a..=n {
                if snapshot[a][b] {
                    continue;
                }
                missing += 1;
                let mut best = usize::MAX;
                let mut sum = 0.0;
                let mut count = 0;
                for &(da, db) in &DIRS {
                    for k0 in 1..=4usize {
                        if k0 > best {
                            break;
                        }
                        let pts: Vec<(isize, isize)> = (k0..k0 + 3)
                            .map(|k| (a as isize + k as isize * da, b as isize + k as isize * db))
                            .collect();
                        if pts
                            .iter()
                            .all(|&(x, y)| inside(x, y) && snapshot[x as usize][y as usize])
                        {
                            let wts = extrapolation_weights(k0);
                            let est: f64 = pts
                                .iter()
                                .zip(wts)
                                .map(|(&(x, y), wt)| wt * c[x as usize][y as usize])
                                .sum();
                            if k0 < best {
                                best = k0;
                                sum = 0.0;
                                count = 0;
                            }
                            sum += est;
                            count += 1;
                            break;
                        }
                    }
                }
                if count > 0 {
                    c[a][b] = sum / count as f64;
                    known[a][b] = true;
                    filled += 1;
                }
            }
        }
        if missing == 0 {
            break;
        }
        if filled == 0 {
            return Err(Error::Assembly(
                "grid too coarse to extrapolate the connecting kernel".into(),
            ));
        }
    }
    for a in 0..=n {
        for b in 0..a {
            c[a][b] = c[b][a];
        }
    }
    Ok(())
}

/// Smallest `N` for which the probe extraction has enough resolved entries.
pub const MIN_RESPONSE_CELLS: usize = 12;

/// Extracts `c_T` from a probe Galerkin matrix.
///
/// De-mollification: subtract the trapezoid mass matrix (the identity part
/// of `C^T` at Galerkin level) and divide by `h²`; then reverse both indices
/// (`C_T + I = J C^T J`).
pub fn kernel_from_galerkin(gal: &ProbeGalerkin, grid: &GridSpec) -> Result<ConnectingKernel> {
    let n = grid.n();
    let n2 = grid.n2();
    let h = grid.h();
    if n < MIN_RESPONSE_CELLS {
        return usage(format!(
            "probe extraction needs N >= {MIN_RESPONSE_CELLS}, got {n}"
        ));
    }
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    let mut known = vec![vec![false; n + 1]; n + 1];
    for p in gal.first..=gal.last {
        let bp = probe(n2, p);
        for pp in p..=gal.last {
            let bq = probe(n2, pp);
            let prod: Vec<f64> = (0..=n).map(|k| bp[k] * bq[k]).collect();
            let mass = trapz(&prod, h);
            let value = (gal.matrix[(p - gal.first, pp - gal.first)] - mass) / (h * h);
            // reversed indices; keep the upper side a <= b
            let (a, b) = (n - pp, n - p);
            c[a][b] = value;
            known[a][b] = b - a >= 3;
        }
    }
    fill_from_smooth_side(&mut c, &mut known)?;
    ConnectingKernel::new(*grid, c.into_iter().flatten().collect())
}

/// Inverse-data route: `c_T` from the response kernel and `K` alone.
pub fn connecting_kernel_from_response(
    r: &ResponseData,
    kernel: &MemoryKernel,
    grid: &GridSpec,
) -> Result<ConnectingKernel> {
    connecting_kernel_from_response_with(r, kernel, grid, SweepMethod::default())
}

pub fn connecting_kernel_from_response_with(
    r: &ResponseData,
    kernel: &MemoryKernel,
    grid: &GridSpec,
    method: SweepMethod,
) -> Result<ConnectingKernel> {
    if grid.n() < MIN_RESPONSE_CELLS {
        return usage(format!(
            "probe extraction needs N >= {MIN_RESPONSE_CELLS}, got {}",
            grid.n()
        ));
    }
    let gal = probe_galerkin(r, kernel, grid, method)?;
    kernel_from_galerkin(&gal, grid)
}

/// Oracle route through the Duhamel kernel: `J C^T J = (I + M)^* (I + M)`,
/// so for `s >= t`
/// `c_T(t, s) = w(t, s) + ∫_0^t w(τ, t) w(τ, s) dτ`, and symmetric. On the
/// diagonal the kernel is taken by continuity.
pub fn connecting_kernel_from_w(sol: &GoursatSolution) -> ConnectingKernel {
    let grid = *sol.grid();
    let n = grid.n();
    let h = grid.h();
    let w = &sol.w;
    let mut values = vec![0.0; (n + 1) * (n + 1)];
    let mut prod = Vec::with_capacity(n + 1);
    for a in 0..=n {
        for b in a..=n {
            prod.clear();
            prod.extend((0..=a).map(|tau| w.get(tau, a) * w.get(tau, b)));
            let v = w.get(a, b) + trapz(&prod, h);
            values[a * (n + 1) + b] = v;
            values[b * (n + 1) + a] = v;
        }
    }
    ConnectingKernel { grid, values }
}

/// Oracle route through interior data: `(u^f(·, T), u^g(·, T))` from the
/// leapfrog solver. Uses information the inverse problem does not have.
pub fn connecting_form_from_interior(
    q: &CoefficientField,
    kernel: &MemoryKernel,
    f: &ControlSignal,
    g: &ControlSignal,
) -> Result<f64> {
    let n = q.grid().n();
    let uf = fd_forward(q, kernel, f, n)?.snapshot(n);
    let ug = fd_forward(q, kernel, g, n)?.snapshot(n);
    let prod: Vec<f64> = uf
        .values()
        .iter()
        .zip(ug.values())
        .map(|(a, b)| a * b)
        .collect();
    Ok(trapz(&prod, q.grid().h()))
}
