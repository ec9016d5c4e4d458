//! The CLI subcommands. Each writes its files under an output directory and
//! returns the lines it wants printed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddmhe_core::analysis::{
    decay_rate_fit, epsilon0, error_bound_constants, estimate_pi_bounds, learning_errors,
    metric_rows_to_csv, mse, parse_metric_rows, sample_complexity_n0,
    sample_complexity_n0_surrogate, BoundReport, DecayFit, MetricRow,
};
use ddmhe_core::estimators::{learn_ddmhe, run_estimation};
use ddmhe_core::lti::build_stacked_operators;
use ddmhe_core::offline::{excitation_rank, load_dataset, save_dataset};
use ddmhe_core::{LtiSystem, OfflineDataset};
use nalgebra::DVector;

use crate::config::ExperimentConfig;
use crate::experiment::{
    align_by_time, build_system, collect, fit_pair, online_seed, online_trajectory, run_sweep,
    CellResult,
};

pub const DATASET_FILE: &str = "dataset.txt";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const GAPS_FILE: &str = "gaps.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const BOUNDS_FILE: &str = "bounds.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const PLOT_AMSE_FILE: &str = "plot_amse.csv";
pub const PLOT_GAP_FILE: &str = "plot_gap.csv";

pub const GAPS_HEADER: &str = "N,sigma,amse_ddmhe,amse_mbmhe,mean_gap,median_delta_G";
pub const PLOT_AMSE_HEADER: &str = "sigma,N,amse_ddmhe,amse_mbmhe";
pub const PLOT_GAP_HEADER: &str = "sigma,N,gap,fit";
pub const TRACE_HEADER: &str = "k,truth,ddmhe,mbmhe";

/// Sweep grid used by `bench-sea` when the config gives none.
pub fn bench_sweep_n() -> Vec<usize> {
    (1..=19).map(|i| 50 * i).collect()
}
pub const BENCH_SWEEP_SIGMA: [f64; 3] = [0.002, 0.01, 0.05];

fn write(out: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn dataset_for(
    sys: &LtiSystem,
    cfg: &ExperimentConfig,
    dataset: Option<&Path>,
) -> Result<OfflineDataset> {
    let ds = match dataset {
        Some(p) => load_dataset(p).with_context(|| format!("loading {}", p.display()))?,
        None => collect(sys, cfg, cfg.n_samples, &cfg.noise_spec(), cfg.seed)?,
    };
    if (ds.n, ds.m, ds.p) != (sys.n(), sys.m(), sys.p()) {
        bail!(
            "dataset dimensions (n, m, p) = ({}, {}, {}) do not match system ({}, {}, {})",
            ds.n,
            ds.m,
            ds.p,
            sys.n(),
            sys.m(),
            sys.p()
        );
    }
    Ok(ds)
}

pub fn cmd_collect(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let sys = build_system(&cfg.system)?;
    let ds = collect(&sys, cfg, cfg.n_samples, &cfg.noise_spec(), cfg.seed)?;
    let (rank, full) = excitation_rank(&ds, 0.0)?;
    let path = out.join(DATASET_FILE);
    fs::create_dir_all(out)?;
    save_dataset(&ds, &path)?;
    Ok(vec![
        format!(
            "wrote {} ({} segments, L = {})",
            path.display(),
            ds.len(),
            ds.horizon
        ),
        format!(
            "persistent excitation: {full} (rank {rank} of {})",
            ds.n + ds.up.nrows()
        ),
    ])
}

pub fn cmd_estimate(
    cfg: &ExperimentConfig,
    dataset: Option<&Path>,
    out: &Path,
) -> Result<Vec<String>> {
    let sys = build_system(&cfg.system)?;
    let ds = dataset_for(&sys, cfg, dataset)?;
    let pair = fit_pair(&sys, &ds, cfg)?;
    let traj = online_trajectory(&sys, cfg, &cfg.noise_spec(), online_seed(cfg.seed, 0))?;
    let prior = DVector::zeros(sys.n());
    let dd = run_estimation(&pair.ddmhe, &traj, &prior)?;
    let mb = run_estimation(&pair.mbmhe, &traj, &prior)?;
    let l = cfg.horizon;

    let n = sys.n();
    let mut csv = String::from("t,k");
    for prefix in ["x", "ddmhe", "mbmhe"] {
        for i in 1..=n {
            write!(csv, ",{prefix}{i}")?;
        }
    }
    csv.push_str(",err_ddmhe,err_mbmhe\n");
    for (d, m) in dd.iter().zip(&mb) {
        let k = d.k(l);
        let x = &traj.states[k];
        write!(csv, "{},{k}", d.t)?;
        for v in x.iter().chain(d.xhat.iter()).chain(m.xhat.iter()) {
            write!(csv, ",{v}")?;
        }
        writeln!(csv, ",{},{}", (&d.xhat - x).norm(), (&m.xhat - x).norm())?;
    }
    let path = write(out, ESTIMATES_FILE, &csv)?;

    let (truth, xd) = align_by_time(&traj, &dd, l);
    let (_, xm) = align_by_time(&traj, &mb, l);
    Ok(vec![
        format!("wrote {} ({} rows)", path.display(), dd.len()),
        format!(
            "alpha = {}, c1 = {}",
            pair.ddmhe.weights.alpha,
            pair.ddmhe.contraction()
        ),
        format!("mse ddmhe = {}", mse(&truth, &xd, cfg.mse_lo, cfg.mse_hi)?),
        format!("mse mbmhe = {}", mse(&truth, &xm, cfg.mse_lo, cfg.mse_hi)?),
    ])
}

fn gaps_csv(cells: &[CellResult]) -> String {
    let mut s = format!("{GAPS_HEADER}\n");
    for c in cells {
        let med = c
            .median_delta_g()
            .map_or_else(|| "na".to_string(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{med}",
            c.n_samples,
            c.sigma,
            c.amse(true),
            c.amse(false),
            c.mean_gap()
        );
    }
    s
}

/// `(σ, [(N, gap)])` groups in first-seen σ order.
fn gap_series(rows: &[(usize, f64, f64)]) -> Vec<(f64, Vec<(f64, f64)>)> {
    let mut out: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for &(n, sigma, gap) in rows {
        match out.iter_mut().find(|(s, _)| *s == sigma) {
            Some((_, pts)) => pts.push((n as f64, gap)),
            None => out.push((sigma, vec![(n as f64, gap)])),
        }
    }
    out
}

fn fit_or_none(points: &[(f64, f64)]) -> Option<DecayFit> {
    decay_rate_fit(points).ok()
}

fn summary_text(cells: &[CellResult]) -> String {
    let rows: Vec<_> = cells
        .iter()
        .map(|c| (c.n_samples, c.sigma, c.mean_gap()))
        .collect();
    let mut s = String::new();
    for (sigma, pts) in gap_series(&rows) {
        match fit_or_none(&pts) {
            Some(f) => {
                let _ = writeln!(
                    s,
                    "sigma={sigma} slope={} intercept={} r2={}",
                    f.slope, f.intercept, f.r_squared
                );
            }
            None => {
                let _ = writeln!(s, "sigma={sigma} slope=na intercept=na r2=na");
            }
        }
    }
    s
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let sys = build_system(&cfg.system)?;
    let cells = run_sweep(&sys, cfg)?;
    let rows: Vec<MetricRow> = cells
        .iter()
        .flat_map(|c| c.trials.iter().flat_map(|t| t.metric_rows()))
        .collect();
    let results = write(out, RESULTS_FILE, &metric_rows_to_csv(&rows))?;
    write(out, GAPS_FILE, &gaps_csv(&cells))?;
    let summary = summary_text(&cells);
    write(out, SUMMARY_FILE, &summary)?;
    let mut lines = vec![format!(
        "wrote {} ({} rows, {} cells)",
        results.display(),
        rows.len(),
        cells.len()
    )];
    lines.extend(summary.lines().map(|l| format!("gap decay: {l}")));
    Ok(lines)
}

pub fn cmd_bounds(
    cfg: &ExperimentConfig,
    dataset: Option<&Path>,
    out: &Path,
) -> Result<Vec<String>> {
    let sys = build_system(&cfg.system)?;
    let ds = dataset_for(&sys, cfg, dataset)?;
    let learned = learn_ddmhe(&ds)?;
    let (n, p, l) = (ds.n, ds.p, ds.horizon);

    let g = if cfg.truth {
        build_stacked_operators(&sys, l)?.g
    } else {
        learned.gstar.clone()
    };
    let eps = cfg.eps.unwrap_or(0.5 * epsilon0(&g, l, p, n)?);
    let sc = if cfg.truth {
        sample_complexity_n0(eps, cfg.theta, &sys, l, &ds.noise)?
    } else {
        sample_complexity_n0_surrogate(eps, cfg.theta, &learned, &ds.noise)?
    };

    let pair = fit_pair(&sys, &ds, cfg)?;
    let (pi1, pi2) = match (cfg.pi1, cfg.pi2) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let noise = cfg.noise_spec();
            let trajs = (0..cfg.trials)
                .map(|j| online_trajectory(&sys, cfg, &noise, online_seed(cfg.seed, j)))
                .collect::<Result<Vec<_>>>()?;
            let (e1, e2) = estimate_pi_bounds(&trajs)?;
            (a.unwrap_or(e1), b.unwrap_or(e2))
        }
    };
    let errors = if cfg.truth {
        Some(learning_errors(&learned, &sys)?)
    } else {
        None
    };
    // with the plant known, the realized learning error replaces the target ε
    let eps_thm = errors.map_or(eps, |e| e.delta_g.max(e.delta_h).max(e.delta_phi));
    let th = error_bound_constants(
        &pair.ddmhe,
        eps_thm,
        pi1,
        pi2,
        cfg.sigma_w,
        cfg.sigma_w.max(cfg.sigma_v),
    )?;

    let mut report = BoundReport {
        n_samples: Some(ds.len()),
        ..Default::default()
    }
    .with_sample_complexity(&sc)
    .with_error_bound(&th);
    report.alpha = Some(pair.ddmhe.weights.alpha);
    report.alpha_guaranteed = pair.alpha_choice.map(|c| c.guaranteed);
    report.c1m = Some(pair.mbmhe.contraction());
    report.pi1 = Some(pi1);
    report.pi2 = Some(pi2);
    if let Some(e) = &errors {
        report = report.with_learning_errors(e);
    }
    let text = report.to_text();
    let path = write(out, BOUNDS_FILE, &text)?;
    let mut lines = vec![format!("wrote {}", path.display())];
    lines.extend(text.lines().map(str::to_string));
    Ok(lines)
}

/// Input files recognised by `plotdata`.
enum PlotInput {
    Results(Vec<MetricRow>),
    Gaps(Vec<(usize, f64, f64)>),
    Estimates { n: usize, rows: Vec<Vec<f64>> },
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(ddmhe_core::Error::Parse {
        line,
        msg: format!("{}: {msg}", path.display()),
    })
}

fn read_plot_input(path: &Path) -> Result<PlotInput> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().next().unwrap_or("").trim();
    if header == ddmhe_core::analysis::METRIC_HEADER {
        return Ok(PlotInput::Results(parse_metric_rows(&text)?));
    }
    let numbers = |line: &str, i: usize| -> Result<Vec<f64>> {
        line.split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, i + 1, e))
            })
            .collect()
    };
    if header == GAPS_HEADER {
        let mut rows = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(parse_err(path, i + 1, "expected 6 fields"));
            }
            let v = numbers(&f[..5].join(","), i)?;
            rows.push((v[0] as usize, v[1], v[4]));
        }
        return Ok(PlotInput::Gaps(rows));
    }
    if header.starts_with("t,k,") {
        let cols = header.split(',').count();
        if cols < 7 || (cols - 4) % 3 != 0 {
            return Err(parse_err(
                path,
                1,
                "estimates header has the wrong number of columns",
            ));
        }
        let n = (cols - 4) / 3;
        let mut rows = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let v = numbers(line, i)?;
            if v.len() != cols {
                return Err(parse_err(path, i + 1, format!("expected {cols} fields")));
            }
            rows.push(v);
        }
        return Ok(PlotInput::Estimates { n, rows });
    }
    Err(parse_err(
        path,
        1,
        format!("unrecognised header {header:?}"),
    ))
}

fn plot_amse(rows: &[MetricRow]) -> String {
    // (σ, N) → (sum dd, count dd, sum mb, count mb), σ keyed by its bits for ordering
    let mut cells: BTreeMap<(u64, usize), [f64; 4]> = BTreeMap::new();
    for r in rows {
        let c = cells.entry((r.sigma_w.to_bits(), r.n_samples)).or_default();
        let i = if r.method == "ddmhe" { 0 } else { 2 };
        c[i] += r.mse;
        c[i + 1] += 1.0;
    }
    let mut s = format!("{PLOT_AMSE_HEADER}\n");
    let mean = |sum: f64, k: f64| {
        if k > 0.0 {
            (sum / k).to_string()
        } else {
            "na".into()
        }
    };
    for ((sigma, n), c) in cells {
        let _ = writeln!(
            s,
            "{},{n},{},{}",
            f64::from_bits(sigma),
            mean(c[0], c[1]),
            mean(c[2], c[3])
        );
    }
    s
}

fn plot_gap(rows: &[(usize, f64, f64)]) -> String {
    let mut s = format!("{PLOT_GAP_HEADER}\n");
    for (sigma, pts) in gap_series(rows) {
        let fit = fit_or_none(&pts);
        for (n, gap) in pts {
            let f = fit.map_or_else(|| "na".to_string(), |f| f.predict(n).to_string());
            let _ = writeln!(s, "{sigma},{n},{gap},{f}");
        }
    }
    s
}

pub fn cmd_plotdata(inputs: &[PathBuf], out: &Path) -> Result<Vec<String>> {
    if inputs.is_empty() {
        bail!("plotdata needs at least one --input file");
    }
    let mut lines = Vec::new();
    for input in inputs {
        match read_plot_input(input)? {
            PlotInput::Results(rows) => {
                lines.push(format!(
                    "wrote {}",
                    write(out, PLOT_AMSE_FILE, &plot_amse(&rows))?.display()
                ));
            }
            PlotInput::Gaps(rows) => {
                lines.push(format!(
                    "wrote {}",
                    write(out, PLOT_GAP_FILE, &plot_gap(&rows))?.display()
                ));
            }
            PlotInput::Estimates { n, rows } => {
                for i in 0..n {
                    let mut s = format!("{TRACE_HEADER}\n");
                    for r in &rows {
                        let _ = writeln!(
                            s,
                            "{},{},{},{}",
                            r[1],
                            r[2 + i],
                            r[2 + n + i],
                            r[2 + 2 * n + i]
                        );
                    }
                    let name = format!("plot_trace_x{}.csv", i + 1);
                    lines.push(format!("wrote {}", write(out, &name, &s)?.display()));
                }
            }
        }
    }
    Ok(lines)
}

/// The full SEA pipeline: dataset, one online run, bounds, the sweep and
/// all plot files, under one directory.
pub fn cmd_bench_sea(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let mut cfg = cfg.clone();
    if cfg.sweep_n.is_empty() {
        cfg.sweep_n = bench_sweep_n();
    }
    if cfg.sweep_sigma.is_empty() {
        cfg.sweep_sigma = BENCH_SWEEP_SIGMA.to_vec();
    }
    write(out, CONFIG_FILE, &cfg.to_text())?;
    let mut lines = cmd_collect(&cfg, out)?;
    let ds = out.join(DATASET_FILE);
    lines.extend(cmd_estimate(&cfg, Some(&ds), out)?);
    lines.extend(cmd_bounds(&cfg, Some(&ds), out)?);
    lines.extend(cmd_sweep(&cfg, out)?);
    let inputs = [
        out.join(RESULTS_FILE),
        out.join(GAPS_FILE),
        out.join(ESTIMATES_FILE),
    ];
    lines.extend(cmd_plotdata(&inputs, out)?);
    Ok(lines)
}
