//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs as a plain binary (`harness = false`).

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ddmhe_core::analysis::{
    concentration_check, decay_rate_fit, epsilon0, error_bound_constants, estimate_pi_bounds,
    learning_errors, min_singular_check, n0_turning_point, sample_complexity_n0,
};
use ddmhe_core::estimators::{fit_ddmhe, oracle_online_solve, run_estimation, HorizonEstimator};
use ddmhe_core::lti::{build_stacked_operators, role_rng, sample_noise, NoiseRole};
use ddmhe_core::numerics::{pinv, spectral_norm};
use ddmhe_core::offline::{collect_offline, CollectionPlan};
use ddmhe_core::{LtiSystem, NoiseKind, NoiseSpec};
use ddmhe_harness::config::{AlphaSetting, ExperimentConfig};
use ddmhe_harness::experiment::{
    align_by_time, collect, collection_seed, fit_pair, online_seed, online_trajectory, run_cell,
};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Result<Outcome, Box<dyn std::error::Error>>;

fn gauss(seed: u64, role: NoiseRole, dim: usize) -> DVector<f64> {
    sample_noise(NoiseKind::Gaussian, 1.0, dim, &mut role_rng(seed, role)).unwrap()
}

fn gauss_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(
        rows,
        cols,
        gauss(seed, NoiseRole::Excitation, rows * cols).as_slice(),
    )
}

fn sea_noise(sigma: f64) -> NoiseSpec {
    NoiseSpec {
        sigma_w: sigma,
        sigma_v: sigma,
        sigma_chi: 0.01,
        sigma_u: 10.0,
        sigma_x0: 1.0,
        ..NoiseSpec::zero()
    }
}

fn noiseless_cfg() -> ExperimentConfig {
    ExperimentConfig {
        n_samples: 50,
        sigma_w: 0.0,
        sigma_v: 0.0,
        sigma_chi: 0.0,
        ..Default::default()
    }
}

/// Observable system with `‖A‖ ≤ 0.95` and `n ≤ 3`, `m, p ≤ 2`.
fn random_system(seed: u64) -> LtiSystem {
    for attempt in 0u64.. {
        let s = seed * 7919 + attempt;
        let n = 1 + (s % 3) as usize;
        let m = 1 + (s / 3 % 2) as usize;
        let p = 1 + (s / 6 % 2) as usize;
        let mut a = gauss_matrix(s, n, n);
        let norm = spectral_norm(&a).unwrap();
        if norm > 0.95 {
            a *= 0.95 / norm;
        }
        let b = gauss_matrix(s + 1_000_000, n, m);
        let c = gauss_matrix(s + 2_000_000, p, n);
        let sys = LtiSystem::new(a, b, c).unwrap();
        if sys.is_observable() {
            return sys;
        }
    }
    unreachable!()
}

fn noiseless_exactness() -> Result<Outcome, Box<dyn std::error::Error>> {
    let sys = LtiSystem::sea();
    let cfg = ExperimentConfig {
        alpha: AlphaSetting::Fixed(1e-6),
        ..noiseless_cfg()
    };
    let ds = collect(&sys, &cfg, cfg.n_samples, &cfg.noise_spec(), cfg.seed)?;
    let pair = fit_pair(&sys, &ds, &cfg)?;
    let e = learning_errors(&pair.ddmhe.learned, &sys)?;
    let delta = e.delta_g.max(e.delta_h).max(e.delta_phi);
    let traj = online_trajectory(&sys, &cfg, &cfg.noise_spec(), online_seed(cfg.seed, 0))?;
    let est = run_estimation(&pair.ddmhe, &traj, &DVector::zeros(sys.n()))?;
    let (truth, xhat) = align_by_time(&traj, &est, cfg.horizon);
    let worst = (2 * cfg.horizon..truth.len())
        .map(|t| (&truth[t] - &xhat[t]).norm())
        .fold(0.0, f64::max);
    Ok(outcome(
        delta <= 1e-8 && worst <= 1e-6,
        format!(
            "max learning error {delta:.2e} (<= 1e-8), max error for t >= 2L {worst:.2e} (<= 1e-6)"
        ),
    ))
}

fn oracle_equivalence() -> Result<Outcome, Box<dyn std::error::Error>> {
    let noise = NoiseSpec {
        sigma_w: 0.05,
        sigma_v: 0.1,
        sigma_chi: 0.02,
        sigma_u: 1.0,
        sigma_x0: 1.0,
        ..NoiseSpec::zero()
    };
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let sys = random_system(seed);
        let l = (sys.n().max(sys.m()).max(sys.p()) + (seed as usize % 2)).min(4);
        let segments = 4 * (sys.n() + l * sys.m());
        let ds = collect_offline(&sys, &CollectionPlan::new(segments, l), &noise, seed)?;
        let alpha = 0.1 + (seed % 7) as f64;
        let params = fit_ddmhe(&ds, alpha, 0.05, 0.1)?;
        let xbar = gauss(seed, NoiseRole::InitialState, sys.n());
        let u = gauss(seed, NoiseRole::Excitation, l * sys.m());
        let y = gauss(seed, NoiseRole::Measurement, (l + 1) * sys.p());
        let closed = params.gains().estimate(&xbar, &u, &y);
        let lo = &params.learned;
        let oracle = oracle_online_solve(
            &lo.gstar, &lo.hstar, &lo.fstar, &xbar, &u, &y, alpha, 0.05, 0.1,
        )?;
        worst = worst.max((&closed - &oracle).norm() / oracle.norm().max(1e-12));
    }
    Ok(outcome(
        worst <= 1e-6,
        format!("100 instances, worst relative gap {worst:.2e} (<= 1e-6)"),
    ))
}

fn exact_data_equivalence() -> Result<Outcome, Box<dyn std::error::Error>> {
    let sys = LtiSystem::sea();
    let cfg = noiseless_cfg();
    let online = sea_noise(0.002);
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let ds = collect(
            &sys,
            &cfg,
            cfg.n_samples,
            &cfg.noise_spec(),
            collection_seed(seed, 0),
        )?;
        let pair = fit_pair(&sys, &ds, &cfg)?;
        let traj = online_trajectory(&sys, &cfg, &online, online_seed(seed, 0))?;
        let prior = DVector::zeros(sys.n());
        let dd = run_estimation(&pair.ddmhe, &traj, &prior)?;
        let mb = run_estimation(&pair.mbmhe, &traj, &prior)?;
        for (a, b) in dd.iter().zip(&mb) {
            worst = worst.max((&a.xhat - &b.xhat).norm());
        }
    }
    Ok(outcome(
        worst <= 1e-8,
        format!("10 seeds, max |ddmhe - mbmhe| {worst:.2e} (<= 1e-8)"),
    ))
}

fn ultimate_bound_check() -> Result<Outcome, Box<dyn std::error::Error>> {
    let sys = LtiSystem::sea();
    let cfg = ExperimentConfig {
        trials: 20,
        ..Default::default()
    };
    let noise = cfg.noise_spec();
    let trajs = (0..cfg.trials)
        .map(|j| online_trajectory(&sys, &cfg, &noise, online_seed(cfg.seed, j)))
        .collect::<Result<Vec<_>, _>>()?;
    let (pi1, pi2) = estimate_pi_bounds(&trajs)?;

    let mut max_c1 = 0.0f64;
    let mut min_bound = f64::INFINITY;
    let mut tail_sum = 0.0;
    for (j, traj) in trajs.iter().enumerate() {
        let ds = collect(
            &sys,
            &cfg,
            cfg.n_samples,
            &noise,
            collection_seed(cfg.seed, j),
        )?;
        let pair = fit_pair(&sys, &ds, &cfg)?;
        let e = learning_errors(&pair.ddmhe.learned, &sys)?;
        let eps = e.delta_g.max(e.delta_h).max(e.delta_phi);
        let th = error_bound_constants(
            &pair.ddmhe,
            eps,
            pi1,
            pi2,
            noise.sigma_w,
            noise.sigma_w.max(noise.sigma_v),
        )?;
        max_c1 = max_c1.max(th.c1);
        min_bound = min_bound.min(th.ultimate_bound.unwrap_or(f64::NEG_INFINITY));
        let est = run_estimation(&pair.ddmhe, traj, &DVector::zeros(sys.n()))?;
        let tail: Vec<f64> = est
            .iter()
            .rev()
            .take(50)
            .map(|x| (&x.xhat - &traj.states[x.k(cfg.horizon)]).norm())
            .collect();
        tail_sum += tail.iter().sum::<f64>() / tail.len() as f64;
    }
    let tail_mean = tail_sum / cfg.trials as f64;
    Ok(outcome(
        max_c1 < 1.0 && tail_mean <= min_bound,
        format!("max c1 {max_c1:.4} (< 1), tail mean error {tail_mean:.4} <= smallest bound {min_bound:.4}"),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn sample_complexity_decay() -> Result<Outcome, Box<dyn std::error::Error>> {
    let sys = LtiSystem::sea();
    let cfg = ExperimentConfig::default();
    let mut gaps = Vec::new();
    let mut med_g = std::collections::BTreeMap::new();
    for n in (1..=19).map(|i| 50 * i) {
        let cell = run_cell(&sys, &cfg, n, 0.002)?;
        med_g.insert(
            n,
            median(
                cell.trials
                    .iter()
                    .map(|t| t.errors.unwrap().delta_g)
                    .collect(),
            ),
        );
        gaps.push((n as f64, cell.mean_gap()));
    }
    let ratio = med_g[&800] / med_g[&200];
    let fit = decay_rate_fit(&gaps)?;
    Ok(outcome(
        ratio <= 0.55 && (-1.3..=-0.2).contains(&fit.slope) && fit.r_squared >= 0.5,
        format!(
            "median dG ratio N=800/N=200 {ratio:.3} (<= 0.55), gap slope {:.3} in [-1.3, -0.2], r2 {:.3} (>= 0.5)",
            fit.slope, fit.r_squared
        ),
    ))
}

fn show(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(" < ")
}

fn noise_monotonicity() -> Result<Outcome, Box<dyn std::error::Error>> {
    let sys = LtiSystem::sea();
    let cfg = ExperimentConfig::default();
    let cells = [0.002, 0.01, 0.05].map(|s| run_cell(&sys, &cfg, 500, s));
    let mut dd = Vec::new();
    let mut mb = Vec::new();
    for c in cells {
        let c = c?;
        dd.push(c.amse(true));
        mb.push(c.amse(false));
    }
    let inc = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    Ok(outcome(
        inc(&dd) && inc(&mb),
        format!(
            "AMSE ddmhe {}, mbmhe {}, strictly increasing",
            show(&dd),
            show(&mb)
        ),
    ))
}

fn concentration_bounds() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut rates = Vec::new();
    let mut pass = true;
    for theta in [0.05, 0.1] {
        let l1 = concentration_check(NoiseKind::Gaussian, 24, 22, 500, 1.0, 0.5, theta, 1000, 11)?;
        let l2 = min_singular_check(NoiseKind::Gaussian, 24, 500, 2.0, theta, 1000, 12)?;
        pass &= l1 <= theta && l2 <= theta;
        rates.push(format!(
            "theta {theta}: product bound {l1:.3}, min singular bound {l2:.3}"
        ));
    }
    Ok(outcome(
        pass,
        format!("failure rates over 1000 trials, {}", rates.join("; ")),
    ))
}

fn moore_penrose_ok(m: &DMatrix<f64>) -> Result<bool, Box<dyn std::error::Error>> {
    let p = pinv(m, 0.0)?;
    let scale = m.norm().max(1.0) * p.norm().max(1.0);
    let tol = 1e-9 * scale * scale;
    Ok((m * &p * m - m).norm() <= tol
        && (&p * m * &p - &p).norm() <= tol
        && ((m * &p).transpose() - m * &p).norm() <= tol
        && ((&p * m).transpose() - &p * m).norm() <= tol)
}

fn formula_spot_values() -> Result<Outcome, Box<dyn std::error::Error>> {
    let e0 = epsilon0(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), 1, 1, 1)?;
    let e0_ok = (e0 - (2f64.sqrt() - 1.0)).abs() <= 4.0 * f64::EPSILON;

    let sys = LtiSystem::sea();
    let noise = sea_noise(0.002);
    let l = 10;
    let star = n0_turning_point(&sys, l)?;
    let eps0 = epsilon0(&build_stacked_operators(&sys, l)?.g, l, sys.p(), sys.n())?;
    let thetas = [0.2, 0.1, 0.05, 0.01, 0.001];
    let n0 = |e: f64, t: f64| sample_complexity_n0(e, t, &sys, l, &noise).map(|s| s.n0);
    let mut grid_ok = true;
    for (below, e) in (1..=5).flat_map(|i| {
        [
            (true, star * i as f64 / 5.0),
            (false, star + (eps0 - star) * i as f64 / 6.0),
        ]
    }) {
        for (j, &t) in thetas.iter().enumerate() {
            let here = n0(e, t)?;
            if j + 1 < thetas.len() {
                grid_ok &= n0(e, thetas[j + 1])? > here;
            }
            // shrinking ε raises N₀ below the turning point and lowers it above
            let smaller = n0(e * 0.99, t)?;
            grid_ok &= if below {
                smaller > here
            } else {
                smaller < here
            };
        }
    }

    let mut mp_ok = true;
    for seed in 0..40u64 {
        let rows = 1 + (seed % 13) as usize;
        let cols = 1 + (seed * 7 % 17) as usize;
        mp_ok &= moore_penrose_ok(&gauss_matrix(seed, rows, cols))?;
        let r = 1 + (seed % 3) as usize;
        let low = gauss_matrix(seed + 100, rows + 3, r) * gauss_matrix(seed + 200, r, cols + 3);
        mp_ok &= moore_penrose_ok(&low)?;
    }
    mp_ok &= moore_penrose_ok(&DMatrix::zeros(3, 4))?;

    Ok(outcome(
        e0_ok && grid_ok && mp_ok,
        format!("eps0([1]) = {e0:.17} exact: {e0_ok}, N0 grid monotone: {grid_ok}, Moore-Penrose suite: {mp_ok}"),
    ))
}

fn dir_contents(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files = std::fs::read_dir(dir)?
        .map(|e| {
            let e = e?;
            Ok((
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path())?,
            ))
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    files.sort();
    Ok(files)
}

fn reproducibility() -> Result<Outcome, Box<dyn std::error::Error>> {
    let tmp = std::env::temp_dir().join(format!("ddmhe-acceptance-{}", std::process::id()));
    let mut dirs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.join(run);
        let _ = std::fs::remove_dir_all(&out);
        let status = Command::new(env!("CARGO_BIN_EXE_ddmhe"))
            .args(["bench-sea", "--seed", "7", "--out"])
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()?;
        if !status.success() {
            return Ok(outcome(false, format!("bench-sea exited with {status}")));
        }
        dirs.push(dir_contents(&out)?);
    }
    let _ = std::fs::remove_dir_all(&tmp);
    let same = dirs[0] == dirs[1];
    Ok(outcome(
        same && !dirs[0].is_empty(),
        format!("{} files, byte-identical: {same}", dirs[0].len()),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 9] = [
        (
            "noiseless exactness",
            Duration::from_secs(1),
            noiseless_exactness,
        ),
        (
            "closed form matches oracle",
            Duration::from_secs(5),
            oracle_equivalence,
        ),
        (
            "ddmhe equals mbmhe on exact data",
            Duration::from_secs(2),
            exact_data_equivalence,
        ),
        (
            "ultimate error bound holds",
            Duration::from_secs(30),
            ultimate_bound_check,
        ),
        (
            "sample complexity decay",
            Duration::from_secs(300),
            sample_complexity_decay,
        ),
        (
            "noise monotonicity",
            Duration::from_secs(120),
            noise_monotonicity,
        ),
        (
            "concentration inequalities",
            Duration::from_secs(30),
            concentration_bounds,
        ),
        (
            "formula spot values",
            Duration::from_secs(1),
            formula_spot_values,
        ),
        (
            "bench-sea reproducibility",
            Duration::from_secs(600),
            reproducibility,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && took <= limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {detail} [{:.2}s, limit {}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
