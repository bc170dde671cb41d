//! Waves driven from the boundary: the Duhamel representation, the control
//! operator `W^T` and its inverse, the response operator, and an
//! independent leapfrog solver for the full integro-differential system.

use crate::error::{usage, Error, Result};
use crate::goursat::{GoursatSolution, ResponseData};
use crate::model::{
    causal_conv, trap_weight, CoefficientField, ControlSignal, GridSpec, MemoryKernel,
};

/// State `u(·, t*)` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSnapshot {
    grid: GridSpec,
    step: usize,
    values: Vec<f64>,
}

impl WaveSnapshot {
    pub fn new(grid: GridSpec, step: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return usage(format!("snapshot needs {} samples", grid.n() + 1));
        }
        Ok(Self { grid, step, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Time index `t* = step * h`.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Leapfrog solution `u(x_i, t_j)` on `[0, L] x [0, T_max]`, `L = T_max + 4h`.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: GridSpec,
    nx: usize,
    nt: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Last space index.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Last time index.
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.nx + 1) + i]
    }

    /// Row `t = t_j` over all space indices.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * (self.nx + 1)..(j + 1) * (self.nx + 1)]
    }

    /// Row `t = t_j` restricted to `[0, T]`.
    pub fn snapshot(&self, j: usize) -> WaveSnapshot {
        let n = self.grid.n();
        WaveSnapshot {
            grid: self.grid,
            step: j,
            values: self.row(j)[..=n].to_vec(),
        }
    }
}

/// `u(x_i, t*) = f(t* - x_i) + ∫_{x_i}^{t*} w(x_i, s) f(t* - s) ds`, zero
/// beyond the front `x > t*`.
pub fn duhamel_eval(sol: &GoursatSolution, f: &ControlSignal, step: usize) -> Result<WaveSnapshot> {
    let grid = *sol.grid();
    let n = grid.n();
    if step > n {
        return usage(format!("evaluation time index {step} exceeds N = {n}"));
    }
    if f.values().len() <= step {
        return usage("control is too short for the evaluation time");
    }
    let h = grid.h();
    let fv = f.values();
    let mut u = vec![0.0; n + 1];
    for (i, ui) in u.iter_mut().enumerate().take(step + 1) {
        let last = step - i;
        let integral: f64 = (i..=step)
            .map(|s| trap_weight(s - i, last, h) * sol.w.get(i, s) * fv[step - s])
            .sum();
        *ui = fv[step - i] + integral;
    }
    WaveSnapshot::new(grid, step, u)
}

/// `(W^T f)(x) = f(T - x) + ∫_x^T w(x, s) f(T - s) ds`.
pub fn apply_control_operator(sol: &GoursatSolution, f: &ControlSignal) -> Result<WaveSnapshot> {
    duhamel_eval(sol, f, sol.grid().n())
}

/// Solves `W^T f = a` for `f` on `[0, T]`.
///
/// With `g_k = f(T - s_k)` the equation is a Volterra equation of the
/// second kind in `x`, solved by substitution from `x = T` down to `x = 0`;
/// each step is a scalar solve with coefficient `1 + (h/2) w(x, x)`.
pub fn solve_control(sol: &GoursatSolution, a: &WaveSnapshot) -> Result<ControlSignal> {
    let grid = *sol.grid();
    if a.grid() != &grid {
        return usage("snapshot and kernel grids differ");
    }
    let n = grid.n();
    let h = grid.h();
    let av = a.values();
    let mut g = vec![0.0; n + 1];
    for i in (0..=n).rev() {
        let last = n - i;
        let tail: f64 = (i + 1..=n)
            .map(|s| trap_weight(s - i, last, h) * sol.w.get(i, s) * g[s])
            .sum();
        let diag = 1.0 + trap_weight(0, last, h) * sol.w.get(i, i);
        if diag.abs() < 1e-8 {
            return Err(Error::IllConditioned {
                stage: "control inversion",
                index: i,
                condition: 1.0 / diag.abs(),
            });
        }
        g[i] = (av[i] - tail) / diag;
    }
    // f(t_k) = g_{N-k}
    g.reverse();
    ControlSignal::new(grid, g, false)
}

/// Central differences inside, one-sided second order at both ends.
pub(crate) fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() - 1;
    (0..=n)
        .map(|k| {
            if k == 0 {
                (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
            } else if k == n {
                (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * h)
            } else {
                (f[k + 1] - f[k - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// `(Rf)(t_k) = -f'(t_k) + ∫_0^{t_k} r(s) f(t_k - s) ds` over the span of `f`.
pub fn apply_response(r: &ResponseData, f: &ControlSignal) -> Result<Vec<f64>> {
    if !f.is_admissible() {
        return usage("response operator needs an admissible-smooth control");
    }
    response_of(r, f.values())
}

/// Unchecked response for sampled signals whose admissibility the caller
/// guarantees.
pub(crate) fn response_of(r: &ResponseData, f: &[f64]) -> Result<Vec<f64>> {
    let h = r.grid().h();
    if f.len() > r.values().len() {
        return usage("control extends beyond the available response kernel");
    }
    if f.len() < 3 {
        return usage("control needs at least three samples");
    }
    let df = derivative(f, h);
    let conv = causal_conv(&r.values()[..f.len()], f, h);
    Ok(df.iter().zip(conv).map(|(d, c)| c - d).collect())
}

/// Explicit leapfrog for the full system with unit Courant number.
///
/// `u(i, j+1) = u(i-1, j) + u(i+1, j) - u(i, j-1) - h² [q_i u(i, j) + H_ij]`
/// with `H_ij` the trapezoid memory integral at fixed `x_i`. The far end
/// `x = T_max + 4h` is a homogeneous Dirichlet wall; its reflection cannot
/// reach `x = 0` before `t = 2 T_max + 8h`. The potential is extended by its
/// last sample beyond `x = T`, which lies outside the domain of dependence
/// of every quantity read at `x = 0` or `t <= T`.
pub fn fd_forward(
    q: &CoefficientField,
    kernel: &MemoryKernel,
    f: &ControlSignal,
    t_max_steps: usize,
) -> Result<SpaceTimeField> {
    let grid = *q.grid();
    if kernel.grid() != &grid || f.grid() != &grid {
        return usage("q, K and f must share a grid");
    }
    if t_max_steps > grid.n2() {
        return usage("T_max beyond 2T");
    }
    if f.values().len() <= t_max_steps {
        return usage("control is too short for T_max");
    }
    let h = grid.h();
    let nt = t_max_steps;
    let nx = nt + 4;
    let qv = q.values();
    let q_at = |i: usize| qv[i.min(qv.len() - 1)];
    let kv = kernel.values();
    let memoryless = kernel.is_zero();
    let fv = f.values();
    let stride = nx + 1;
    let mut u = vec![0.0; stride * (nt + 1)];
    if nt >= 1 {
        u[stride] = fv[1];
    }
    for j in 1..nt {
        let (done, next) = u.split_at_mut((j + 1) * stride);
        let cur = &done[j * stride..];
        let prev = &done[(j - 1) * stride..j * stride];
        next[0] = fv[j + 1];
        for i in 1..nx {
            let mut force = q_at(i) * cur[i];
            if !memoryless {
                // trapezoid over tau = 0..=t_j of K(t_j - tau) u(x_i, tau)
                let mut acc = 0.5 * (kv[j] * done[i] + kv[0] * cur[i]);
                for l in 1..j {
                    acc += kv[j - l] * done[l * stride + i];
                }
                force += h * acc;
            }
            let v = cur[i - 1] + cur[i + 1] - prev[i] - h * h * force;
            if !v.is_finite() {
                return Err(Error::Instability {
                    stage: "fd_forward",
                    i,
                    j: j + 1,
                });
            }
            next[i] = v;
        }
        next[nx] = 0.0;
    }
    Ok(SpaceTimeField {
        grid,
        nx,
        nt,
        values: u,
    })
}

/// One-sided second-order `u_x(0, t_j)` for every time row.
pub fn fd_boundary_trace(u: &SpaceTimeField) -> Vec<f64> {
    let h = u.grid().h();
    (0..=u.nt())
        .map(|j| (-3.0 * u.get(0, j) + 4.0 * u.get(1, j) - u.get(2, j)) / (2.0 * h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goursat::{response_kernel, solve_goursat};
    use crate::model::{Domain, Family};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(1.0, n).unwrap()
    }

    fn bump(g: GridSpec, center: f64, width: f64, domain: Domain) -> ControlSignal {
        ControlSignal::from_family(g, &Family::SmoothBumpControl { center, width }, domain).unwrap()
    }

    fn free(g: GridSpec) -> GoursatSolution {
        solve_goursat(&CoefficientField::zero(g), &MemoryKernel::zero(g), &g).unwrap()
    }

    #[test]
    fn free_waves_translate() {
        let g = grid(32);
        let sol = free(g);
        let f = bump(g, 0.5, 0.3, Domain::Half);
        let u = duhamel_eval(&sol, &f, 24).unwrap();
        for i in 0..=32 {
            let expect = if i <= 24 { f.values()[24 - i] } else { 0.0 };
            assert_eq!(u.values()[i], expect);
        }
        let zero = duhamel_eval(&sol, &ControlSignal::zero(g, Domain::Half), 32).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(duhamel_eval(&sol, &f, 33).is_err());
    }

    #[test]
    fn reflection_inverse() {
        let g = grid(16);
        let sol = free(g);
        let a = WaveSnapshot::new(g, 16, (0..=16).map(|i| g.node(i)).collect()).unwrap();
        let f = solve_control(&sol, &a).unwrap();
        for (k, v) in f.values().iter().enumerate() {
            assert!((v - (1.0 - g.node(k))).abs() < 1e-15);
        }
        let wf = apply_control_operator(&sol, &f).unwrap();
        assert_eq!(wf.values(), a.values());
    }

    #[test]
    fn control_round_trip_with_memory() {
        let g = grid(200);
        let q = CoefficientField::from_family(
            g,
            &Family::GaussianBump {
                center: 0.5,
                width: 0.1,
                amplitude: 1.0,
            },
        )
        .unwrap();
        let k = MemoryKernel::from_family(
            g,
            &Family::ExpDecay {
                amplitude: 1.0,
                rate: 1.0,
            },
        )
        .unwrap();
        let sol = solve_goursat(&q, &k, &g).unwrap();
        let f = bump(g, 0.45, 0.3, Domain::Half);
        let a = apply_control_operator(&sol, &f).unwrap();
        let back = solve_control(&sol, &a).unwrap();
        let err = f
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err <= 1e-6, "round trip error {err}");
    }

    #[test]
    fn response_derivative_part() {
        let g = grid(64);
        let r = ResponseData::zero(g);
        let f = bump(g, 0.5, 0.3, Domain::Half);
        let rf = apply_response(&r, &f).unwrap();
        let err = |n: usize| {
            let g = grid(n);
            let f = bump(g, 0.5, 0.3, Domain::Half);
            let rf = apply_response(&ResponseData::zero(g), &f).unwrap();
            (0..=n)
                .map(|k| {
                    let t = g.node(k);
                    let rho = (t - 0.5) / 0.3;
                    let d = if rho.abs() < 1.0 {
                        -8.0 * rho * (1.0 - rho * rho).powi(3) / 0.3
                    } else {
                        0.0
                    };
                    (rf[k] + d).abs()
                })
                .fold(0.0, f64::max)
        };
        assert_eq!(rf.len(), 65);
        let ratio = err(64) / err(128);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");

        let raw = ControlSignal::new(g, f.values().to_vec(), false).unwrap();
        assert!(matches!(apply_response(&r, &raw), Err(Error::Usage(_))));
    }

    #[test]
    fn leapfrog_is_exact_for_free_transport() {
        let g = grid(64);
        let f = bump(g, 0.6, 0.4, Domain::Full);
        let u = fd_forward(
            &CoefficientField::zero(g),
            &MemoryKernel::zero(g),
            &f,
            g.n2(),
        )
        .unwrap();
        for j in 0..=u.nt() {
            for i in 0..=u.nx() {
                let expect = if i <= j { f.values()[j - i] } else { 0.0 };
                assert!((u.get(i, j) - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn finite_speed_in_leapfrog() {
        let g = grid(32);
        let q = CoefficientField::from_family(g, &Family::Constant(2.0)).unwrap();
        let k = MemoryKernel::from_family(
            g,
            &Family::ExpDecay {
                amplitude: 3.0,
                rate: 1.0,
            },
        )
        .unwrap();
        let f = bump(g, 0.4, 0.3, Domain::Full);
        let u = fd_forward(&q, &k, &f, 64).unwrap();
        for j in 0..=64 {
            for i in j + 1..=u.nx() {
                assert_eq!(u.get(i, j), 0.0);
            }
        }
        let zero = fd_forward(&q, &k, &ControlSignal::zero(g, Domain::Full), 64).unwrap();
        assert!(fd_boundary_trace(&zero).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_order_memory_response() {
        // r(t) ~ -(K0/2) t, so Rf ~ -f' - (K0/2) (t * f)
        let k0 = 0.01;
        let g = grid(128);
        let k = MemoryKernel::from_family(g, &Family::Constant(k0)).unwrap();
        let sol = solve_goursat(&CoefficientField::zero(g), &k, &g).unwrap();
        let r = response_kernel(&sol).unwrap();
        let f = bump(g, 0.5, 0.3, Domain::Full);
        let rf = apply_response(&r, &f).unwrap();
        let lin: Vec<f64> = (0..=g.n2()).map(|k| -0.5 * k0 * g.node(k)).collect();
        let conv = causal_conv(&lin, f.values(), g.h());
        let df = derivative(f.values(), g.h());
        for k in 0..=g.n2() {
            assert!((rf[k] - (conv[k] - df[k])).abs() <= 5.0 * k0 * k0);
        }
    }
}
