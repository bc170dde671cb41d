//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines stay in order.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use memwave_cli::commands::{convergence, reconstruct};
use memwave_cli::{DataPath, ExperimentConfig, Noise};
use memwave_core::{
    apply_response, catalogue, connecting_form_from_interior, connecting_kernel_from_response,
    connecting_kernel_from_w, cumulative_trapezoid, fd_boundary_trace, fd_forward,
    operator_identity_residual, response_kernel, solve_gl_all, solve_goursat, z_from_w,
    CoefficientField, ControlSignal, Domain, Family, GridSpec, MemoryKernel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn log2_ratio(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn in_ratio_band(coarse: f64, fine: f64) -> bool {
    (3.0..=5.0).contains(&(coarse / fine))
}

fn fields(
    grid: GridSpec,
    q: &Family,
    k: &Family,
) -> Result<(CoefficientField, MemoryKernel), String> {
    Ok((
        CoefficientField::from_family(grid, q).map_err(e)?,
        MemoryKernel::from_family(grid, k).map_err(e)?,
    ))
}

fn gaussian() -> Family {
    Family::GaussianBump {
        center: 0.5,
        width: 0.1,
        amplitude: 1.0,
    }
}

fn exp_decay() -> Family {
    Family::ExpDecay {
        amplitude: 1.0,
        rate: 1.0,
    }
}

fn config(cells: usize, path: DataPath) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"T": 1.0, "N": {cells}, "q_family": "gaussian_bump", "q_params": [0.5, 0.1, 1.0],
            "K_family": "exp_decay", "K_params": [1.0, 1.0]}}"#
    ))
    .map(|mut c| {
        c.path = path;
        c
    })
    .expect("valid config")
}

fn criterion_1() -> Outcome {
    let grid = GridSpec::new(1.0, 64).map_err(e)?;
    let q = CoefficientField::zero(grid);
    let k = MemoryKernel::zero(grid);
    let sol = solve_goursat(&q, &k, &grid).map_err(e)?;
    let r = response_kernel(&sol).map_err(e)?;
    let c_r = connecting_kernel_from_response(&r, &k, &grid).map_err(e)?;
    let c_w = connecting_kernel_from_w(&sol);
    let gl = solve_gl_all(&c_r, 0.0).map_err(e)?;
    let worst = [
        sol.w.max_abs(),
        r.values().iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        c_r.max_abs(),
        c_w.max_abs(),
        gl.z.max_abs(),
        gl.q_hat
            .values()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs())),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    ensure(
        worst <= 1e-8,
        format!("max |w, r, c_T, z, q_hat| = {worst:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let grid = GridSpec::new(1.0, 128).map_err(e)?;
    let small = 0.01;
    let (q, k) = fields(grid, &Family::Zero, &Family::Constant(small))?;
    let w = solve_goursat(&q, &k, &grid).map_err(e)?.w;
    let memory = w
        .iter()
        .map(|(i, j, v)| (v + 0.5 * small * grid.node(i) * (grid.node(j) - grid.node(i))).abs())
        .fold(0.0, f64::max);
    let (q, k) = fields(grid, &Family::Constant(small), &Family::Zero)?;
    let w = solve_goursat(&q, &k, &grid).map_err(e)?.w;
    let potential = w
        .iter()
        .map(|(i, _, v)| (v + 0.5 * small * grid.node(i)).abs())
        .fold(0.0, f64::max);
    let bound = 5.0 * small * small;
    ensure(
        memory <= bound && potential <= bound,
        format!("memory {memory:.2e}, potential {potential:.2e}, bound {bound:.0e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut errs = Vec::new();
    for n in [64, 128, 256] {
        let grid = GridSpec::new(1.0, n).map_err(e)?;
        let (q, k) = fields(grid, &gaussian(), &exp_decay())?;
        let r = response_kernel(&solve_goursat(&q, &k, &grid).map_err(e)?).map_err(e)?;
        let f = ControlSignal::from_family(
            grid,
            &Family::SmoothBumpControl {
                center: 0.4,
                width: 0.3,
            },
            Domain::Full,
        )
        .map_err(e)?;
        let via_kernel = apply_response(&r, &f).map_err(e)?;
        let trace = fd_boundary_trace(&fd_forward(&q, &k, &f, grid.n2()).map_err(e)?);
        errs.push(sup_diff(&via_kernel, &trace));
    }
    let orders = [log2_ratio(errs[0], errs[1]), log2_ratio(errs[1], errs[2])];
    ensure(
        orders.iter().all(|p| (1.5..=2.5).contains(p)),
        format!("errors {errs:.3?}, orders {orders:.2?}"),
    )
}

fn criterion_4() -> Outcome {
    let grid = GridSpec::new(1.0, 64).map_err(e)?;
    let (q, k) = fields(grid, &gaussian(), &exp_decay())?;
    let sol = solve_goursat(&q, &k, &grid).map_err(e)?;
    let r = response_kernel(&sol).map_err(e)?;
    let c_r = connecting_kernel_from_response(&r, &k, &grid).map_err(e)?;
    let c_w = connecting_kernel_from_w(&sol);
    let tol = 5e-3 * (1.0 + c_w.max_abs());
    let gap = c_r.max_diff(&c_w);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut form_gap = 0.0_f64;
    for _ in 0..10 {
        let mut control = || {
            let center = rng.random_range(0.3..0.7);
            let width = rng.random_range(0.15..f64::min(center, 1.0 - center) - 0.02);
            ControlSignal::from_family(
                grid,
                &Family::SmoothBumpControl { center, width },
                Domain::Half,
            )
        };
        let f = control().map_err(e)?;
        let g = control().map_err(e)?;
        let oracle = connecting_form_from_interior(&q, &k, &f, &g).map_err(e)?;
        for c in [&c_r, &c_w] {
            form_gap = form_gap.max((c.connecting_form(f.values(), g.values()) - oracle).abs());
        }
    }
    ensure(
        gap <= tol && form_gap <= tol,
        format!("kernel gap {gap:.2e}, form gap {form_gap:.2e}, tolerance {tol:.2e}"),
    )
}

fn diagonal_defect(q: &CoefficientField, diag: &[f64]) -> f64 {
    let half = cumulative_trapezoid(q.values(), q.grid().h());
    diag.iter()
        .zip(&half)
        .map(|(z, c)| (z - 0.5 * c).abs())
        .fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for problem in catalogue()
        .into_iter()
        .filter(|p| p.name != "gaussian_classical")
    {
        let mut defects = Vec::new();
        for n in [64, 128] {
            let grid = GridSpec::new(1.0, n).map_err(e)?;
            let (q, k) = fields(grid, &problem.q, &problem.kernel)?;
            let c = connecting_kernel_from_w(&solve_goursat(&q, &k, &grid).map_err(e)?);
            let gl = solve_gl_all(&c, 0.0).map_err(e)?;
            let defect = diagonal_defect(&q, &gl.diag);
            ok &= defect <= grid.h() * grid.h();
            defects.push(defect);
        }
        ok &= in_ratio_band(defects[0], defects[1]);
        lines.push(format!(
            "{}: {:.2e} -> {:.2e} (ratio {:.2})",
            problem.name,
            defects[0],
            defects[1],
            defects[0] / defects[1]
        ));
    }
    ensure(ok, lines.join("; "))
}

fn criterion_6() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for problem in catalogue()
        .into_iter()
        .filter(|p| p.name != "gaussian_classical")
    {
        let mut res = Vec::new();
        for n in [64, 128] {
            let grid = GridSpec::new(1.0, n).map_err(e)?;
            let (q, k) = fields(grid, &problem.q, &problem.kernel)?;
            let sol = solve_goursat(&q, &k, &grid).map_err(e)?;
            let c = connecting_kernel_from_w(&sol);
            let v = operator_identity_residual(&c, &z_from_w(&sol).map_err(e)?).map_err(e)?;
            ok &= v <= grid.h() * grid.h();
            res.push(v);
        }
        ok &= in_ratio_band(res[0], res[1]);
        lines.push(format!(
            "{}: {:.2e} -> {:.2e} (ratio {:.2})",
            problem.name,
            res[0],
            res[1],
            res[0] / res[1]
        ));
    }
    ensure(ok, lines.join("; "))
}

fn criterion_7() -> Outcome {
    let oracle = config(256, DataPath::WOracle);
    let fine = reconstruct(&oracle, None).map_err(e)?;
    let fine_err = fine.report.errors.expect("errors").l2_relative;
    let ladder = [32, 64, 128];
    let w_errs: Vec<f64> = convergence(&oracle, &ladder)
        .map_err(e)?
        .iter()
        .map(|r| r.error)
        .collect();
    let r_errs: Vec<f64> = convergence(&config(64, DataPath::Response), &ladder)
        .map_err(e)?
        .iter()
        .map(|r| r.error)
        .collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|p| p[1] < p[0]);
    ensure(
        fine_err <= 0.02 && r_errs[1] <= 0.10 && decreasing(&w_errs) && decreasing(&r_errs),
        format!(
            "oracle N=256 {fine_err:.2e}; oracle ladder {w_errs:.3?}; response ladder {r_errs:.3?}"
        ),
    )
}

fn memwave(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_memwave"))
        .args(args)
        .output()
        .map_err(e)
}

fn run_ok(args: &[&str]) -> Result<(), String> {
    let out = memwave(args)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "memwave {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn noisy_config(dir: &Path) -> Result<std::path::PathBuf, String> {
    let mut cfg = config(64, DataPath::Response);
    cfg.noise = Noise::Gaussian;
    cfg.noise_sigma = 1e-4;
    cfg.noise_seed = 11;
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(&cfg).map_err(e)?).map_err(e)?;
    Ok(path)
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e)?;
    let cfg = noisy_config(tmp.path())?;
    let cfg = cfg.to_str().expect("utf-8 path");
    let outputs = ["response.csv", "cT.csv", "q_hat.csv", "report.json"];
    let mut runs = Vec::new();
    // Same output directory for both runs, since the report echoes it.
    let out = tmp.path().join("run");
    let out = out.to_str().expect("utf-8 path");
    for threads in ["1", "4"] {
        let common = ["--config", cfg, "--out", out, "--threads", threads];
        run_ok(&[&["synth"][..], &common].concat())?;
        run_ok(&[&["reconstruct"][..], &common].concat())?;
        let bytes: Vec<Vec<u8>> = outputs
            .iter()
            .map(|f| std::fs::read(Path::new(out).join(f)))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        runs.push(bytes);
    }
    if runs[0] != runs[1] {
        return Err("outputs differ between 1 and 4 threads".into());
    }

    // A single gross outlier in the middle of the response record.
    let good = Path::new(out).join("response.csv");
    let text = std::fs::read_to_string(&good).map_err(e)?;
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mid = 1 + (lines.len() - 1) / 2;
    let t = lines[mid].split(',').next().expect("t column").to_string();
    lines[mid] = format!("{t},1000");
    let bad = tmp.path().join("corrupt.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").map_err(e)?;
    let out = tmp.path().join("fault");
    let result = memwave(&[
        "verify",
        "--config",
        cfg,
        "--out",
        out.to_str().expect("utf-8 path"),
        "--response",
        bad.to_str().expect("utf-8 path"),
    ])?;
    let said = format!(
        "{}{}",
        String::from_utf8_lossy(&result.stdout),
        String::from_utf8_lossy(&result.stderr)
    );
    let named = said.contains("operator_identity");
    ensure(
        !result.status.success() && named,
        format!(
            "threads 1 and 4 byte-identical; corrupted verify exit {:?}, names operator_identity: {named}",
            result.status.code()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 trivial reduction", Duration::from_secs(5), criterion_1),
        (
            "2 perturbative Goursat",
            Duration::from_secs(10),
            criterion_2,
        ),
        ("3 two-path response", Duration::from_secs(120), criterion_3),
        (
            "4 three-way connecting kernel",
            Duration::from_secs(300),
            criterion_4,
        ),
        ("5 diagonal law", Duration::from_secs(120), criterion_5),
        ("6 operator identity", Duration::from_secs(60), criterion_6),
        (
            "7 end-to-end reconstruction",
            Duration::from_secs(600),
            criterion_7,
        ),
        (
            "8 determinism and fault",
            Duration::from_secs(600),
            criterion_8,
        ),
    ];
    let mut failures = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (ok, msg) = match outcome {
            Ok(m) => (took <= limit, m),
            Err(m) => (false, m),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} criterion {name}: {msg} [{:.2} s, limit {} s]",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
