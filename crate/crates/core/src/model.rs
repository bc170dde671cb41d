//! Sampled functions on the characteristic grid, and the quadrature every
//! stage of the pipeline is built on.
//!
//! Every function is carried as uniform samples with one step `h` shared by
//! space and time, so grid diagonals are exactly the characteristics
//! `t - x = const` of the wave operator.

use crate::error::{usage, Error, Result};

/// Uniform characteristic grid: `x_i = t_i = i * h`, `h = T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    horizon: f64,
    cells: usize,
}

impl GridSpec {
    pub const MIN_CELLS: usize = 8;

    pub fn new(horizon: f64, cells: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return usage(format!(
                "horizon must be positive and finite, got {horizon}"
            ));
        }
        if cells < Self::MIN_CELLS {
            return usage(format!(
                "grid needs at least {} cells, got {cells}",
                Self::MIN_CELLS
            ));
        }
        Ok(Self { horizon, cells })
    }

    /// The horizon `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Cell count `N` on `[0, T]`.
    pub fn n(&self) -> usize {
        self.cells
    }

    /// Cell count `2N` on the extended interval `[0, 2T]`.
    pub fn n2(&self) -> usize {
        2 * self.cells
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    /// Same horizon, step halved.
    pub fn refined(&self) -> Self {
        Self {
            horizon: self.horizon,
            cells: 2 * self.cells,
        }
    }
}

/// Which interval a sampled function lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `[0, T]`, `N + 1` samples.
    Half,
    /// `[0, 2T]`, `2N + 1` samples.
    Full,
}

impl Domain {
    pub fn len(self, grid: &GridSpec) -> usize {
        match self {
            Domain::Half => grid.n() + 1,
            Domain::Full => grid.n2() + 1,
        }
    }
}

fn check_samples(what: &str, values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return usage(format!(
            "{what} needs {expected} samples, got {}",
            values.len()
        ));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return usage(format!("{what} sample {k} is not finite"));
    }
    Ok(())
}

/// The potential `q` sampled on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_samples("coefficient field", &values, grid.n() + 1)?;
        Ok(Self { grid, values })
    }

    pub fn from_family(grid: GridSpec, family: &Family) -> Result<Self> {
        Self::new(grid, family.sample(&grid, Domain::Half)?)
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n() + 1],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The relaxation kernel `K` sampled on `[0, 2T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryKernel {
    grid: GridSpec,
    values: Vec<f64>,
}

impl MemoryKernel {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_samples("memory kernel", &values, grid.n2() + 1)?;
        Ok(Self { grid, values })
    }

    pub fn from_family(grid: GridSpec, family: &Family) -> Result<Self> {
        Self::new(grid, family.sample(&grid, Domain::Full)?)
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n2() + 1],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when every sample is exactly zero (memoryless system).
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&k| k == 0.0)
    }
}

/// A boundary control `f(t)` on `[0, T]` or `[0, 2T]`.
///
/// `admissible` records that the signal is the trace of a smooth function
/// vanishing together with its derivative at `t = 0`; only such signals may
/// be fed to the response operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    grid: GridSpec,
    values: Vec<f64>,
    admissible: bool,
}

impl ControlSignal {
    /// Wraps raw samples. The signal is marked admissible only if the caller
    /// asserts it and `f(0) = 0`.
    pub fn new(grid: GridSpec, values: Vec<f64>, admissible: bool) -> Result<Self> {
        if values.len() != grid.n() + 1 && values.len() != grid.n2() + 1 {
            return usage(format!(
                "control needs {} or {} samples, got {}",
                grid.n() + 1,
                grid.n2() + 1,
                values.len()
            ));
        }
        check_samples("control", &values, values.len())?;
        if admissible && values[0] != 0.0 {
            return usage("admissible control must vanish at t = 0");
        }
        Ok(Self {
            grid,
            values,
            admissible,
        })
    }

    pub fn from_family(grid: GridSpec, family: &Family, domain: Domain) -> Result<Self> {
        let values = family.sample(&grid, domain)?;
        let admissible = matches!(family, Family::Zero | Family::SmoothBumpControl { .. });
        Self::new(grid, values, admissible)
    }

    pub fn zero(grid: GridSpec, domain: Domain) -> Self {
        Self {
            grid,
            values: vec![0.0; domain.len(&grid)],
            admissible: true,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    /// Samples extended by zeros (or cut) to `len`.
    pub(crate) fn padded(&self, len: usize) -> Vec<f64> {
        let mut v = self.values.clone();
        v.resize(len, 0.0);
        v
    }

    /// `alpha * self + beta * other`; admissible when both are.
    pub fn combined(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.values.len() != other.values.len() {
            return usage("cannot combine controls of different lengths");
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::new(self.grid, values, self.admissible && other.admissible)
    }
}

/// Which kernel a [`TriangularField`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Duhamel kernel `w(x, t)` of the forward representation.
    Duhamel,
    /// Kernel `z(x, s)` of the Volterra part of the inverse control operator.
    Inverse,
}

/// Kernel samples on a triangular index set `{(i, j): i <= j <= j_max(i)}`.
///
/// Two shapes occur: the characteristic triangle `i + j <= 2N` (the Duhamel
/// kernel, reaching `t = 2T` at `x = 0`) and the square's upper half
/// `j <= N`. Below the characteristic (`j < i`) the field is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularField {
    grid: GridSpec,
    kind: KernelKind,
    rows: Vec<Vec<f64>>,
}

impl TriangularField {
    /// Zero field on `{0 <= i <= j, i + j <= 2N}`.
    pub fn characteristic(grid: GridSpec, kind: KernelKind) -> Self {
        let n2 = grid.n2();
        let rows = (0..=grid.n()).map(|i| vec![0.0; n2 - 2 * i + 1]).collect();
        Self { grid, kind, rows }
    }

    /// Zero field on `{0 <= i <= j <= N}`.
    pub fn square(grid: GridSpec, kind: KernelKind) -> Self {
        let n = grid.n();
        let rows = (0..=n).map(|i| vec![0.0; n - i + 1]).collect();
        Self { grid, kind, rows }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Largest `j` stored for row `i`.
    pub fn row_end(&self, i: usize) -> usize {
        i + self.rows[i].len() - 1
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.rows.len() && j >= i && j <= self.row_end(i)
    }

    /// Value at `(x_i, t_j)`; zero below the characteristic.
    ///
    /// Panics when `(i, j)` lies above the stored triangle.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j < i {
            return 0.0;
        }
        self.rows[i][j - i]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.rows[i][j - i] = value;
    }

    /// Samples `(x_i, t_j)` for `j = i..=row_end(i)`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Iterates `(i, j, value)` over the stored set.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(d, &v)| (i, i + d, v)))
    }
}

/// Composite trapezoid rule. A single sample integrates to zero.
pub fn trapezoid(samples: &[f64], h: f64) -> Result<f64> {
    if samples.is_empty() {
        return usage("trapezoid needs at least one sample");
    }
    Ok(trapz(samples, h))
}

/// Unchecked trapezoid for the inner loops; empty input integrates to zero.
#[inline]
pub(crate) fn trapz(samples: &[f64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = samples[1..n - 1].iter().sum();
            h * (inner + 0.5 * (samples[0] + samples[n - 1]))
        }
    }
}

/// Trapezoid weight of node `k` on a rule with nodes `0..=last`.
#[inline]
pub(crate) fn trap_weight(k: usize, last: usize, h: f64) -> f64 {
    if last == 0 {
        0.0
    } else if k == 0 || k == last {
        0.5 * h
    } else {
        h
    }
}

/// Running trapezoid integral: `out[k] = ∫_0^{t_k}`.
pub fn cumulative_trapezoid(samples: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    for (k, &v) in samples.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * h * (samples[k - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// `out_k = ∫_0^{t_k} a(t_k - s) b(s) ds` by the trapezoid rule; `out_0 = 0`.
pub fn causal_convolution(a: &[f64], b: &[f64], h: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return usage(format!(
            "convolution operands differ in length ({} vs {})",
            a.len(),
            b.len()
        ));
    }
    Ok(causal_conv(a, b, h))
}

pub(crate) fn causal_conv(a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
    (0..b.len())
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let mut acc = 0.5 * (a[k] * b[0] + a[0] * b[k]);
            for m in 1..k {
                acc += a[k - m] * b[m];
            }
            h * acc
        })
        .collect()
}

/// Catalogue of analytic test functions.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Zero,
    Constant(f64),
    /// `amplitude * exp(-(x - center)^2 / (2 width^2))`.
    GaussianBump {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    /// `amplitude * sin(2 pi freq x)`.
    Sine {
        freq: f64,
        amplitude: f64,
    },
    /// `amplitude * exp(-rate t)`.
    ExpDecay {
        amplitude: f64,
        rate: f64,
    },
    /// `(1 - ((t - center) / width)^2)^4` on `|t - center| < width`, zero
    /// elsewhere: a C³ bump of half-width `width` and unit height.
    SmoothBumpControl {
        center: f64,
        width: f64,
    },
}

impl Family {
    /// Builds a family from its catalogue name and positional parameters.
    pub fn parse(name: &str, params: &[f64]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::Family(format!(
                    "{name} takes {n} parameters, got {}",
                    params.len()
                )))
            }
        };
        let family = match name {
            "zero" => {
                want(0)?;
                Family::Zero
            }
            "constant" => {
                want(1)?;
                Family::Constant(params[0])
            }
            "gaussian_bump" => {
                want(3)?;
                Family::GaussianBump {
                    center: params[0],
                    width: params[1],
                    amplitude: params[2],
                }
            }
            "sine" => {
                want(2)?;
                Family::Sine {
                    freq: params[0],
                    amplitude: params[1],
                }
            }
            "exp_decay" => {
                want(2)?;
                Family::ExpDecay {
                    amplitude: params[0],
                    rate: params[1],
                }
            }
            "smooth_bump_control" => {
                want(2)?;
                Family::SmoothBumpControl {
                    center: params[0],
                    width: params[1],
                }
            }
            other => return Err(Error::Family(format!("unknown family '{other}'"))),
        };
        Ok(family)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Family::Zero => 0.0,
            Family::Constant(c) => c,
            Family::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let d = (x - center) / width;
                amplitude * (-0.5 * d * d).exp()
            }
            Family::Sine { freq, amplitude } => {
                amplitude * (2.0 * std::f64::consts::PI * freq * x).sin()
            }
            Family::ExpDecay { amplitude, rate } => amplitude * (-rate * x).exp(),
            Family::SmoothBumpControl { center, width } => {
                let rho = (x - center) / width;
                if rho.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - rho * rho).powi(4)
                }
            }
        }
    }

    /// Samples the family on the requested interval of `grid`.
    pub fn sample(&self, grid: &GridSpec, domain: Domain) -> Result<Vec<f64>> {
        let len = domain.len(grid);
        if let Family::SmoothBumpControl { center, width } = *self {
            let end = grid.node(len - 1);
            if !(width > 0.0 && center - width >= 0.0 && center + width <= end) {
                return Err(Error::Family(format!(
                    "bump [{}, {}] is not inside [0, {end}]",
                    center - width,
                    center + width
                )));
            }
        }
        let values: Vec<f64> = (0..len).map(|i| self.eval(grid.node(i))).collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Family(format!(
                "{self:?} is not finite at sample {k}"
            )));
        }
        Ok(values)
    }
}

/// A named `(q, K)` pair used by the convergence and consistency studies.
#[derive(Debug, Clone, PartialEq)]
pub struct TestProblem {
    pub name: &'static str,
    pub q: Family,
    pub kernel: Family,
}

/// Problems on `T = 1` with smooth data; the first is the reference problem.
pub fn catalogue() -> Vec<TestProblem> {
    let bump = Family::GaussianBump {
        center: 0.5,
        width: 0.1,
        amplitude: 1.0,
    };
    vec![
        TestProblem {
            name: "gaussian_memory",
            q: bump.clone(),
            kernel: Family::ExpDecay {
                amplitude: 1.0,
                rate: 1.0,
            },
        },
        TestProblem {
            name: "sine_constant_memory",
            q: Family::Sine {
                freq: 1.0,
                amplitude: 2.0,
            },
            kernel: Family::Constant(0.5),
        },
        TestProblem {
            name: "gaussian_classical",
            q: bump,
            kernel: Family::Zero,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn trapezoid_basics() {
        assert_eq!(trapezoid(&[0.0, 0.0, 0.0], 0.1).unwrap(), 0.0);
        assert_abs_diff_eq!(trapezoid(&[1.0; 4], 0.5).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(trapezoid(&[3.0], 0.5).unwrap(), 0.0);
        assert!(matches!(trapezoid(&[], 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn trapezoid_of_square() {
        let n = 100;
        let h = 1.0 / n as f64;
        let s: Vec<f64> = (0..=n).map(|i| (i as f64 * h).powi(2)).collect();
        // exact error of the rule on t^2 is h^2 / 6
        assert_abs_diff_eq!(
            trapezoid(&s, h).unwrap(),
            1.0 / 3.0 + h * h / 6.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(trapezoid(&s, h).unwrap(), 0.333350, epsilon = 1e-6);
    }

    #[test]
    fn trapezoid_second_order() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let s: Vec<f64> = (0..=n).map(|i| (i as f64 * h).exp()).collect();
            (trapezoid(&s, h).unwrap() - (1f64.exp() - 1.0)).abs()
        };
        let ratio = err(40) / err(80);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn convolution_cases() {
        let z = causal_convolution(&[0.0; 5], &[1.0; 5], 0.1).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        let ones = causal_convolution(&[1.0; 6], &[1.0; 6], 0.1).unwrap();
        for (k, v) in ones.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.1 * k as f64, epsilon = 1e-14);
        }

        let n = 100;
        let h = 0.01;
        let a: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let out = causal_convolution(&a, &vec![1.0; n + 1], h).unwrap();
        assert_abs_diff_eq!(out[n], 0.5, epsilon = 1e-4);

        assert!(causal_convolution(&[1.0; 3], &[1.0; 4], 0.1).is_err());
    }

    #[test]
    fn families() {
        let grid = GridSpec::new(1.0, 10).unwrap();
        let z = CoefficientField::from_family(grid, &Family::Zero).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let c = CoefficientField::from_family(grid, &Family::parse("constant", &[2.0]).unwrap())
            .unwrap();
        assert_eq!(c.values(), &[2.0; 11]);
        let k = Family::parse("exp_decay", &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(k.eval(1.0), 0.367879, epsilon = 1e-6);
        let kern = MemoryKernel::from_family(grid, &k).unwrap();
        assert_eq!(kern.values().len(), 21);

        assert!(matches!(
            Family::parse("lorentzian", &[]),
            Err(Error::Family(_))
        ));
        assert!(matches!(
            Family::parse("sine", &[1.0]),
            Err(Error::Family(_))
        ));
        let blowup = Family::parse("exp_decay", &[1.0, -1e4]).unwrap();
        assert!(matches!(
            blowup.sample(&grid, Domain::Full),
            Err(Error::Family(_))
        ));
    }

    #[test]
    fn bump_control_is_admissible_and_contained() {
        let grid = GridSpec::new(1.0, 20).unwrap();
        let fam = Family::parse("smooth_bump_control", &[0.5, 0.25]).unwrap();
        let f = ControlSignal::from_family(grid, &fam, Domain::Half).unwrap();
        assert!(f.is_admissible());
        assert_eq!(f.values()[0], 0.0);
        assert_eq!(f.values()[10], 1.0);
        let outside = Family::parse("smooth_bump_control", &[0.1, 0.25]).unwrap();
        assert!(ControlSignal::from_family(grid, &outside, Domain::Half).is_err());
    }

    #[test]
    fn grid_contract() {
        assert!(GridSpec::new(1.0, 4).is_err());
        assert!(GridSpec::new(0.0, 16).is_err());
        let g = GridSpec::new(2.0, 16).unwrap();
        assert_eq!(g.h(), 0.125);
        assert_eq!(g.n2(), 32);
    }

    #[test]
    fn triangular_field_shapes() {
        let g = GridSpec::new(1.0, 8).unwrap();
        let w = TriangularField::characteristic(g, KernelKind::Duhamel);
        assert_eq!(w.row_end(0), 16);
        assert_eq!(w.row_end(8), 8);
        assert!(w.contains(3, 13) && !w.contains(3, 14));
        assert_eq!(w.get(5, 2), 0.0);
        let z = TriangularField::square(g, KernelKind::Inverse);
        assert_eq!(z.row_end(0), 8);
        assert_eq!(z.iter().count(), 45);
    }

    proptest! {
        #[test]
        fn trapezoid_is_linear(
            a in proptest::collection::vec(-10.0f64..10.0, 17),
            b in proptest::collection::vec(-10.0f64..10.0, 17),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let h = 0.0625;
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let lhs = trapezoid(&mix, h).unwrap();
            let rhs = alpha * trapezoid(&a, h).unwrap() + beta * trapezoid(&b, h).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn convolution_nearly_commutes(c1 in 0.1f64..3.0, c2 in 0.1f64..3.0) {
            let conv_gap = |n: usize| {
                let h = 1.0 / n as f64;
                let a: Vec<f64> = (0..=n).map(|i| (c1 * i as f64 * h).sin()).collect();
                let b: Vec<f64> = (0..=n).map(|i| (-c2 * i as f64 * h).exp()).collect();
                let ab = causal_convolution(&a, &b, h).unwrap();
                let ba = causal_convolution(&b, &a, h).unwrap();
                ab.iter().zip(&ba).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            };
            // the trapezoid rule is symmetric under s -> t - s, so the gap is
            // pure rounding; it must in any case sit below C h^2
            prop_assert!(conv_gap(64) <= 1e-2 / 4096.0);
        }
    }
}
