//! Online trajectories, per-trial runs and Monte Carlo cells.

use std::f64::consts::FRAC_PI_2;

use anyhow::{Context, Result};
use ddmhe_core::analysis::{
    choose_alpha, learning_errors, mse, AlphaChoice, LearningErrors, MetricRow,
};
use ddmhe_core::estimators::{
    fit_mbmhe, learn_ddmhe, run_estimation, DdmheParams, Estimate, MbmheParams, Weights,
};
use ddmhe_core::lti::{role_rng, sample_noise, simulate, NoiseRole};
use ddmhe_core::offline::{collect_offline, CollectionPlan};
use ddmhe_core::{LtiSystem, NoiseKind, NoiseSpec, OfflineDataset, Trajectory};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{AlphaSetting, ExperimentConfig, SystemChoice};

pub fn build_system(choice: &SystemChoice) -> Result<LtiSystem> {
    Ok(match choice {
        SystemChoice::Sea => LtiSystem::sea(),
        SystemChoice::Scalar => LtiSystem::scalar_integrator(),
        SystemChoice::File(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading system file {}", path.display()))?;
            LtiSystem::from_text(&text)?
        }
    })
}

/// Seed for trial `j`'s offline collection.
pub fn collection_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(1000 * trial as u64)
}

/// Seed for trial `j`'s online run, independent of its collection.
pub fn online_seed(base: u64, trial: usize) -> u64 {
    collection_seed(base, trial).wrapping_add(500)
}

pub fn collection_plan(cfg: &ExperimentConfig, segments: usize) -> CollectionPlan {
    CollectionPlan {
        gap: cfg.gap(),
        mode: cfg.collection_mode,
        ..CollectionPlan::new(segments, cfg.horizon)
    }
}

pub fn collect(
    sys: &LtiSystem,
    cfg: &ExperimentConfig,
    segments: usize,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<OfflineDataset> {
    Ok(collect_offline(
        sys,
        &collection_plan(cfg, segments),
        noise,
        seed,
    )?)
}

/// `u_k = amp · sin(freq·k + jπ/2)` for input component `j`, `k = 0..T−1`.
pub fn online_inputs(cfg: &ExperimentConfig, m: usize) -> Vec<DVector<f64>> {
    (0..cfg.horizon_t)
        .map(|k| {
            DVector::from_fn(m, |j, _| {
                cfg.excitation_amp * (cfg.excitation_freq * k as f64 + j as f64 * FRAC_PI_2).sin()
            })
        })
        .collect()
}

/// Sinusoidally driven run from `x₀ ~ N(0, I)` with the config's process and
/// measurement noise.
pub fn online_trajectory(
    sys: &LtiSystem,
    cfg: &ExperimentConfig,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Trajectory> {
    let x0 = sample_noise(
        NoiseKind::Gaussian,
        1.0,
        sys.n(),
        &mut role_rng(seed, NoiseRole::InitialState),
    )?;
    Ok(simulate(
        sys,
        &x0,
        &online_inputs(cfg, sys.m()),
        noise,
        seed,
    )?)
}

/// Estimator-side `(σ_ω, σ_ν)`: the recorded levels, or 1 where a level is 0.
pub fn tuning_sigmas(noise: &NoiseSpec) -> (f64, f64) {
    let pick = |s: f64| if s > 0.0 { s } else { 1.0 };
    (pick(noise.sigma_w), pick(noise.sigma_v))
}

pub struct FittedPair {
    pub ddmhe: DdmheParams,
    pub mbmhe: MbmheParams,
    /// Present when `alpha = auto`.
    pub alpha_choice: Option<AlphaChoice>,
}

/// DDMHE from `ds` and MBMHE from `sys`, sharing `α`, `σ_ω`, `σ_ν`.
pub fn fit_pair(
    sys: &LtiSystem,
    ds: &OfflineDataset,
    cfg: &ExperimentConfig,
) -> Result<FittedPair> {
    let learned = learn_ddmhe(ds)?;
    let (sw, sv) = tuning_sigmas(&ds.noise);
    let (alpha, alpha_choice) = match cfg.alpha {
        AlphaSetting::Fixed(a) => (a, None),
        AlphaSetting::Auto => {
            let c = choose_alpha(&learned, sw, sv, cfg.alpha_safety)?;
            (c.alpha, Some(c))
        }
    };
    let ddmhe = DdmheParams::new(learned, Weights::new(alpha, sw, sv)?)?;
    let mbmhe = fit_mbmhe(sys, ds.horizon, alpha, sw, sv)?;
    Ok(FittedPair {
        ddmhe,
        mbmhe,
        alpha_choice,
    })
}

/// Estimates and truth re-indexed by estimation time `t`, so that slot `t`
/// holds `x̂_{t−L|t}` and `x_{t−L}`. Slots before `L` are zero.
pub fn align_by_time(
    traj: &Trajectory,
    est: &[Estimate],
    horizon: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = traj.states[0].len();
    let len = est.last().map_or(0, |e| e.t + 1);
    let mut truth = vec![DVector::zeros(n); len];
    let mut xhat = vec![DVector::zeros(n); len];
    for e in est {
        truth[e.t] = traj.states[e.k(horizon)].clone();
        xhat[e.t] = e.xhat.clone();
    }
    (truth, xhat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub n_samples: usize,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub mse_ddmhe: f64,
    pub mse_mbmhe: f64,
    /// Mean `‖x̂ − x̂ᵐ‖₂` over the MSE window.
    pub gap: f64,
    /// Mean `‖e‖₂` over the last 50 estimates (or all, if fewer).
    pub tail_error: f64,
    pub errors: Option<LearningErrors>,
    pub alpha: f64,
    pub c1: f64,
}

impl TrialOutcome {
    pub fn metric_rows(&self) -> [MetricRow; 2] {
        let row = |method: &str, mse| MetricRow {
            method: method.into(),
            trial: self.trial,
            n_samples: self.n_samples,
            sigma_w: self.sigma_w,
            sigma_v: self.sigma_v,
            mse,
        };
        [row("ddmhe", self.mse_ddmhe), row("mbmhe", self.mse_mbmhe)]
    }
}

pub const TAIL: usize = 50;

/// One Monte Carlo repetition: fresh dataset, fresh online run, both estimators.
pub fn run_trial(
    sys: &LtiSystem,
    cfg: &ExperimentConfig,
    segments: usize,
    noise: &NoiseSpec,
    trial: usize,
) -> Result<TrialOutcome> {
    let ds = collect(sys, cfg, segments, noise, collection_seed(cfg.seed, trial))?;
    let pair = fit_pair(sys, &ds, cfg)?;
    let traj = online_trajectory(sys, cfg, noise, online_seed(cfg.seed, trial))?;
    let prior = DVector::zeros(sys.n());
    let dd = run_estimation(&pair.ddmhe, &traj, &prior)?;
    let mb = run_estimation(&pair.mbmhe, &traj, &prior)?;
    let (truth, xd) = align_by_time(&traj, &dd, cfg.horizon);
    let (_, xm) = align_by_time(&traj, &mb, cfg.horizon);

    let window = cfg.mse_lo..=cfg.mse_hi;
    let gap = window
        .clone()
        .map(|t| (&xd[t] - &xm[t]).norm())
        .sum::<f64>()
        / window.count() as f64;
    let tail: Vec<f64> = dd
        .iter()
        .rev()
        .take(TAIL)
        .map(|e| (&e.xhat - &traj.states[e.k(cfg.horizon)]).norm())
        .collect();
    Ok(TrialOutcome {
        trial,
        n_samples: segments,
        sigma_w: noise.sigma_w,
        sigma_v: noise.sigma_v,
        mse_ddmhe: mse(&truth, &xd, cfg.mse_lo, cfg.mse_hi)?,
        mse_mbmhe: mse(&truth, &xm, cfg.mse_lo, cfg.mse_hi)?,
        gap,
        tail_error: tail.iter().sum::<f64>() / tail.len() as f64,
        errors: if cfg.truth {
            Some(learning_errors(&pair.ddmhe.learned, sys)?)
        } else {
            None
        },
        alpha: pair.ddmhe.weights.alpha,
        c1: pair.ddmhe.contraction(),
    })
}

/// One `(N, σ)` grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n_samples: usize,
    pub sigma: f64,
    pub trials: Vec<TrialOutcome>,
}

impl CellResult {
    pub fn amse(&self, ddmhe: bool) -> f64 {
        let sum: f64 = self
            .trials
            .iter()
            .map(|t| if ddmhe { t.mse_ddmhe } else { t.mse_mbmhe })
            .sum();
        sum / self.trials.len() as f64
    }

    pub fn mean_gap(&self) -> f64 {
        self.trials.iter().map(|t| t.gap).sum::<f64>() / self.trials.len() as f64
    }

    pub fn median_delta_g(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .trials
            .iter()
            .map(|t| t.errors.map(|e| e.delta_g))
            .collect::<Option<_>>()?;
        v.sort_by(f64::total_cmp);
        let k = v.len();
        Some(if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        })
    }
}

/// Runs `cfg.trials` repetitions at `N = segments` with `σ_ω = σ_ν = sigma`.
/// Trials run in parallel; results come back in trial order.
pub fn run_cell(
    sys: &LtiSystem,
    cfg: &ExperimentConfig,
    segments: usize,
    sigma: f64,
) -> Result<CellResult> {
    let noise = NoiseSpec {
        sigma_w: sigma,
        sigma_v: sigma,
        ..cfg.noise_spec()
    };
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|j| {
            run_trial(sys, cfg, segments, &noise, j)
                .with_context(|| format!("N = {segments}, sigma = {sigma}, trial {j}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        n_samples: segments,
        sigma,
        trials,
    })
}

/// The sweep grid: `sweep_N × sweep_sigma`, each falling back to the single
/// configured value when empty. `N` varies slowest.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<(usize, f64)> {
    let ns = if cfg.sweep_n.is_empty() {
        vec![cfg.n_samples]
    } else {
        cfg.sweep_n.clone()
    };
    let sigmas = if cfg.sweep_sigma.is_empty() {
        vec![cfg.sigma_w]
    } else {
        cfg.sweep_sigma.clone()
    };
    ns.iter()
        .flat_map(|&n| sigmas.iter().map(move |&s| (n, s)))
        .collect()
}

pub fn run_sweep(sys: &LtiSystem, cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    sweep_cells(cfg)
        .into_iter()
        .map(|(n, s)| run_cell(sys, cfg, n, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            trials: 2,
            n_samples: 60,
            ..Default::default()
        }
    }

    #[test]
    fn inputs_are_sine_and_cosine() {
        let u = online_inputs(&small_cfg(), 2);
        assert_eq!(u.len(), 100);
        assert_eq!(u[0][0], 0.0);
        assert!((u[0][1] - 5.0).abs() < 1e-15);
        assert!((u[3][0] - 5.0 * 0.6f64.sin()).abs() < 1e-15);
        assert!((u[3][1] - 5.0 * 0.6f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn seeds_are_disjoint() {
        assert_eq!(collection_seed(7, 2), 2007);
        assert_eq!(online_seed(7, 2), 2507);
    }

    #[test]
    fn cell_is_deterministic_and_ordered() {
        let sys = LtiSystem::sea();
        let a = run_cell(&sys, &small_cfg(), 60, 0.01).unwrap();
        let b = run_cell(&sys, &small_cfg(), 60, 0.01).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.trials.iter().map(|t| t.trial).collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert!(a.trials.iter().all(|t| t.c1 < 1.0 && t.mse_ddmhe >= 0.0));
    }

    #[test]
    fn sweep_grid_order() {
        let cfg = ExperimentConfig {
            sweep_n: vec![50, 100],
            sweep_sigma: vec![0.1, 0.2],
            ..small_cfg()
        };
        assert_eq!(
            sweep_cells(&cfg),
            vec![(50, 0.1), (50, 0.2), (100, 0.1), (100, 0.2)]
        );
        assert_eq!(sweep_cells(&small_cfg()), vec![(60, 0.002)]);
    }

    #[test]
    fn tuning_sigma_fallback() {
        assert_eq!(tuning_sigmas(&NoiseSpec::zero()), (1.0, 1.0));
        let n = NoiseSpec {
            sigma_w: 0.3,
            ..NoiseSpec::zero()
        };
        assert_eq!(tuning_sigmas(&n), (0.3, 1.0));
    }
}
