//! Finite-sample constants, error-bound calculators and Monte Carlo checks.
//!
//! Everything that compares against the true plant ([`learning_errors`],
//! [`sample_complexity_n0`]) is a simulation diagnostic. The `_surrogate`
//! variants substitute learned quantities plus `ε` for the unknown norms.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::estimators::{DdmheParams, LearnedOperators};
use crate::lti::{
    build_stacked_operators, sample_noise, LtiSystem, NoiseKind, NoiseSpec, Trajectory,
};
use crate::numerics::{block, min_eig_sym, norm2, rank, singular_values};

/// `ε₀ = √(‖Φ₁‖² + λ_min(Φ₁ᵀΦ₁)) − ‖Φ₁‖` with `Φ₁ = G(1:Lp; 1:n)`.
pub fn epsilon0(g: &DMatrix<f64>, horizon: usize, p: usize, n: usize) -> Result<f64> {
    let phi1 = block(g, 1, horizon * p, 1, n)?;
    epsilon0_of(&phi1)
}

fn epsilon0_of(phi1: &DMatrix<f64>) -> Result<f64> {
    let n = phi1.ncols();
    if rank(phi1, 0.0)? < n {
        return Err(Error::Degenerate(format!(
            "Φ₁ ({}×{n}) lacks full column rank",
            phi1.nrows()
        )));
    }
    let norm = norm2(phi1);
    let lmin = min_eig_sym(&(phi1.transpose() * phi1))?;
    // same value as √(a² + b) − a, without cancellation for tiny b
    let eps0 = lmin / ((norm * norm + lmin).sqrt() + norm);
    if eps0 > 0.0 {
        Ok(eps0)
    } else {
        Err(Error::Degenerate(format!(
            "λ_min(Φ₁ᵀΦ₁) = {lmin:e} is not positive"
        )))
    }
}

/// Where the plant-dependent norms in `N₀` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormSource {
    Truth,
    Surrogate,
}

impl fmt::Display for NormSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormSource::Truth => "truth",
            NormSource::Surrogate => "surrogate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleComplexity {
    pub eps: f64,
    pub theta: f64,
    pub eps0: f64,
    pub n0: f64,
    pub m0: f64,
    pub m1: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub source: NormSource,
}

/// Norms entering `M₀` and `M₁`.
struct PlantNorms<'a> {
    phi1: &'a DMatrix<f64>,
    /// `‖A‖ + ‖B‖`
    ab: f64,
    f: f64,
    g: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "theta must lie in (0, 1), got {theta}"
        )))
    }
}

fn n0_from_norms(
    eps: f64,
    theta: f64,
    horizon: usize,
    norms: &PlantNorms<'_>,
    noise: &NoiseSpec,
    source: NormSource,
) -> Result<SampleComplexity> {
    check_theta(theta)?;
    noise.validate()?;
    let eps0 = epsilon0_of(norms.phi1)?;
    if !(eps > 0.0 && eps < eps0) {
        return Err(Error::Domain(format!(
            "eps must lie in (0, eps0 = {eps0}), got {eps}"
        )));
    }
    let (sigma_max, sigma_min) = (noise.sigma_max(), noise.sigma_min());
    if sigma_min <= 0.0 {
        return Err(Error::Domain(
            "sigma_min = min(sigma_u, sigma_x0) must be positive".into(),
        ));
    }
    let l = horizon as f64;
    let m0 = 48.0 * l * sigma_max.powi(2) / sigma_min.powi(2) * (norms.f + norms.g + 1.0);
    let phi_norm = norm2(norms.phi1);
    let lmin = min_eig_sym(&(norms.phi1.transpose() * norms.phi1))?;
    let m1 = (norms.ab + 2.0) / (lmin - eps * eps - 2.0 * eps * phi_norm).sqrt();
    let l2 = 16.0 * l * l;
    let n0 = l2 + (l2 + (m1 * m1 + 1.0) * m0 * m0 / (eps * eps)) * (324.0 / theta).ln();
    Ok(SampleComplexity {
        eps,
        theta,
        eps0,
        n0,
        m0,
        m1,
        sigma_max,
        sigma_min,
        source,
    })
}

/// `N₀(ε, θ)` from the true plant.
pub fn sample_complexity_n0(
    eps: f64,
    theta: f64,
    sys: &LtiSystem,
    horizon: usize,
    noise: &NoiseSpec,
) -> Result<SampleComplexity> {
    let ops = build_stacked_operators(sys, horizon)?;
    let phi1 = block(&ops.g, 1, horizon * sys.p(), 1, sys.n())?;
    let norms = PlantNorms {
        phi1: &phi1,
        ab: norm2(sys.a()) + norm2(sys.b()),
        f: norm2(&ops.f),
        g: norm2(&ops.g),
    };
    n0_from_norms(eps, theta, horizon, &norms, noise, NormSource::Truth)
}

/// `N₀(ε, θ)` with `‖A‖+‖B‖ → ‖Φ*,₁†[Φ*,₂, Φ*,₃]‖+ε`, `‖G‖ → ‖G*‖+ε`,
/// `‖F‖ → ‖F*‖+√L·ε` and `Φ₁ → Φ*,₁`.
pub fn sample_complexity_n0_surrogate(
    eps: f64,
    theta: f64,
    learned: &LearnedOperators,
    noise: &NoiseSpec,
) -> Result<SampleComplexity> {
    let l = learned.horizon;
    let ab = prior_map(learned);
    let norms = PlantNorms {
        phi1: &learned.phi1,
        ab: norm2(&ab) + eps,
        f: norm2(&learned.fstar) + (l as f64).sqrt() * eps,
        g: norm2(&learned.gstar) + eps,
    };
    n0_from_norms(eps, theta, l, &norms, noise, NormSource::Surrogate)
}

/// The `ε` in `(0, ε₀)` at which `N₀` is smallest for the true plant.
///
/// `N₀` decreases in `ε` only up to this point: the `M₁` denominator
/// `λ_min(Φ₁ᵀΦ₁) − ε² − 2ε‖Φ₁‖` vanishes at `ε₀`, so `N₀` grows without
/// bound again as `ε → ε₀`.
pub fn n0_turning_point(sys: &LtiSystem, horizon: usize) -> Result<f64> {
    let ops = build_stacked_operators(sys, horizon)?;
    let phi1 = block(&ops.g, 1, horizon * sys.p(), 1, sys.n())?;
    turning_point(&phi1, norm2(sys.a()) + norm2(sys.b()))
}

// With D(ε) = λ − ε² − 2aε and K = (‖A‖+‖B‖+2)², the sign of dN₀/dε is
// the sign of −q(ε), q(ε) = K(2λ − 4ε² − 6aε) + 2D². q falls strictly on
// (0, ε₀) from q(0) > 0 to q(ε₀) < 0, so it has exactly one root.
fn turning_point(phi1: &DMatrix<f64>, ab: f64) -> Result<f64> {
    let eps0 = epsilon0_of(phi1)?;
    let a = norm2(phi1);
    let lmin = min_eig_sym(&(phi1.transpose() * phi1))?;
    let k = (ab + 2.0).powi(2);
    let q = |e: f64| {
        let d = lmin - e * e - 2.0 * a * e;
        k * (2.0 * lmin - 4.0 * e * e - 6.0 * a * e) + 2.0 * d * d
    };
    let (mut lo, mut hi) = (0.0, eps0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn prior_map(learned: &LearnedOperators) -> DMatrix<f64> {
    let (n, m) = (learned.n(), learned.m());
    let mut ab = DMatrix::zeros(n, n + m);
    ab.columns_mut(0, n).copy_from(&learned.astar);
    ab.columns_mut(n, m).copy_from(&learned.bstar);
    ab
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningErrors {
    pub delta_phi: f64,
    pub delta_g: f64,
    pub delta_h: f64,
}

/// `‖Φ*,₁†[Φ*,₂, Φ*,₃] − [A, B]‖`, `‖G* − G‖`, `‖H* − H‖`.
pub fn learning_errors(learned: &LearnedOperators, sys: &LtiSystem) -> Result<LearningErrors> {
    let l = learned.horizon;
    if learned.n() != sys.n() || learned.m() != sys.m() || learned.p() != sys.p() {
        return Err(invalid(
            "learned operators and system have different dimensions",
        ));
    }
    let ops = build_stacked_operators(sys, l)?;
    let mut ab = DMatrix::zeros(sys.n(), sys.n() + sys.m());
    ab.columns_mut(0, sys.n()).copy_from(sys.a());
    ab.columns_mut(sys.n(), sys.m()).copy_from(sys.b());
    Ok(LearningErrors {
        delta_phi: norm2(&(prior_map(learned) - ab)),
        delta_g: norm2(&(&learned.gstar - &ops.g)),
        delta_h: norm2(&(&learned.hstar - &ops.h)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBound {
    pub c1: f64,
    pub c2: f64,
    /// `c₂ / (1 − c₁)`, only when `c₁ < 1`.
    pub ultimate_bound: Option<f64>,
}

impl ErrorBound {
    pub fn contracts(&self) -> bool {
        self.ultimate_bound.is_some()
    }
}

/// `c₁`, `c₂` and the ultimate bound on `E‖e‖`.
///
/// `sigma_w` and `sigma_max` are the actual noise levels, which need not
/// match the weights the estimator was tuned with.
pub fn error_bound_constants(
    params: &DdmheParams,
    eps: f64,
    pi1: f64,
    pi2: f64,
    sigma_w: f64,
    sigma_max: f64,
) -> Result<ErrorBound> {
    for (name, v) in [
        ("eps", eps),
        ("pi1", pi1),
        ("pi2", pi2),
        ("sigma_w", sigma_w),
        ("sigma_max", sigma_max),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    let learned = &params.learned;
    let (n, p, l) = (
        learned.n() as f64,
        learned.p() as f64,
        learned.horizon as f64,
    );
    let a1 = params.weights.alpha1();
    let c1 = params.contraction();
    let fterm = (l.sqrt() * eps + norm2(&learned.fstar)).powi(2) * l * n + 2.0 * (l + 1.0) * p;
    let c2 = (a1 * sigma_w * n.sqrt()
        + sigma_max * fterm.sqrt()
        + eps * (a1 + norm2(params.gamma())) * (pi1.sqrt() + pi2.sqrt()))
        * norm2(params.lambda());
    let ultimate_bound = (c1 < 1.0).then(|| c2 / (1.0 - c1));
    Ok(ErrorBound {
        c1,
        c2,
        ultimate_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaChoice {
    pub alpha: f64,
    /// False when no `α` can be certified; `alpha` is then the default 1.
    pub guaranteed: bool,
    /// `‖Φ*,₁† Φ*,₂‖₂`
    pub transition_norm: f64,
    /// `λ_min(Γ* G*)`
    pub info_floor: f64,
}

/// Picks `α` so that `c₁ < 1`.
pub fn choose_alpha(
    learned: &LearnedOperators,
    sigma_w: f64,
    sigma_v: f64,
    safety: f64,
) -> Result<AlphaChoice> {
    if !(sigma_w > 0.0 && sigma_v > 0.0) {
        return Err(invalid("sigma_w and sigma_v must be positive"));
    }
    let info_floor = learned.information_floor((sigma_v / sigma_w).powi(2))?;
    alpha_rule(norm2(learned.transition()), info_floor, sigma_v, safety)
}

/// The selection rule on precomputed scalars.
pub fn alpha_rule(
    transition_norm: f64,
    info_floor: f64,
    sigma_v: f64,
    safety: f64,
) -> Result<AlphaChoice> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(invalid(format!(
            "safety factor must lie in (0, 1), got {safety}"
        )));
    }
    if transition_norm <= 1.0 {
        return Ok(AlphaChoice {
            alpha: 1.0,
            guaranteed: true,
            transition_norm,
            info_floor,
        });
    }
    if info_floor <= 0.0 {
        return Ok(AlphaChoice {
            alpha: 1.0,
            guaranteed: false,
            transition_norm,
            info_floor,
        });
    }
    let alpha = safety * info_floor / ((transition_norm - 1.0) * sigma_v * sigma_v);
    Ok(AlphaChoice {
        alpha,
        guaranteed: true,
        transition_norm,
        info_floor,
    })
}

/// Mean of `‖truth_k − est_k‖²` over `k_lo..=k_hi`.
pub fn mse(truth: &[DVector<f64>], est: &[DVector<f64>], k_lo: usize, k_hi: usize) -> Result<f64> {
    if k_lo > k_hi || k_hi >= truth.len() || k_hi >= est.len() {
        return Err(invalid(format!(
            "window [{k_lo}, {k_hi}] outside sequences of length {} and {}",
            truth.len(),
            est.len()
        )));
    }
    let mut total = 0.0;
    for k in k_lo..=k_hi {
        if truth[k].len() != est[k].len() {
            return Err(invalid(format!("dimension mismatch at k = {k}")));
        }
        total += (&truth[k] - &est[k]).norm_squared();
    }
    Ok(total / (k_hi - k_lo + 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub trial: usize,
    pub n_samples: usize,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub mse: f64,
}

pub const METRIC_HEADER: &str = "method,trial,N,sigma_w,sigma_v,mse";

impl MetricRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.method, self.trial, self.n_samples, self.sigma_w, self.sigma_v, self.mse
        )
    }
}

pub fn metric_rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRIC_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_metric_rows(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRIC_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {METRIC_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 6 fields, found {}", f.len()),
            });
        }
        let bad = |field: &str| Error::Parse {
            line: line_no,
            msg: format!("bad {field} field"),
        };
        rows.push(MetricRow {
            method: f[0].to_string(),
            trial: f[1].parse().map_err(|_| bad("trial"))?,
            n_samples: f[2].parse().map_err(|_| bad("N"))?,
            sigma_w: f[3].parse().map_err(|_| bad("sigma_w"))?,
            sigma_v: f[4].parse().map_err(|_| bad("sigma_v"))?,
            mse: f[5].parse().map_err(|_| bad("mse"))?,
        });
    }
    Ok(rows)
}

pub fn amse(rows: &[MetricRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(invalid("AMSE of an empty collection"));
    }
    Ok(rows.iter().map(|r| r.mse).sum::<f64>() / rows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl DecayFit {
    /// `exp(intercept) · N^slope`
    pub fn predict(&self, n: f64) -> f64 {
        self.intercept.exp() * n.powf(self.slope)
    }
}

/// OLS fit of `log(gap)` against `log(N)`.
pub fn decay_rate_fit(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(invalid(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, g)) = points.iter().find(|&&(n, g)| !(n > 0.0 && g > 0.0)) {
        return Err(invalid(format!(
            "N and gap must be positive, got ({n}, {g})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("all N values are equal"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot <= f64::EPSILON * k * my.abs().max(1.0) {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
    })
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn random_matrix(
    kind: NoiseKind,
    sigma: f64,
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let v = sample_noise(kind, sigma, rows * cols, rng)?;
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Fraction of trials violating `‖ΦΨᵀ‖ ≤ 4σ_φσ_ψ√(N(m₁+m₂)log(9/θ))` for
/// `Φ ∈ ℝ^{m₁×N}`, `Ψ ∈ ℝ^{m₂×N}` with i.i.d. entries.
#[allow(clippy::too_many_arguments)]
pub fn concentration_check(
    kind: NoiseKind,
    m1: usize,
    m2: usize,
    samples: usize,
    sigma_phi: f64,
    sigma_psi: f64,
    theta: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_theta(theta)?;
    let (dim, nf) = ((m1 + m2) as f64, samples as f64);
    if nf < 2.0 * dim * (1.0 / theta).ln() {
        return Err(Error::Domain(format!(
            "N = {samples} below 2(m1+m2)log(1/theta)"
        )));
    }
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    let bound = 4.0 * sigma_phi * sigma_psi * (nf * dim * (9.0 / theta).ln()).sqrt();
    let mut failures = 0usize;
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let phi = random_matrix(kind, sigma_phi, m1, samples, &mut rng)?;
        let psi = random_matrix(kind, sigma_psi, m2, samples, &mut rng)?;
        if norm2(&(phi * psi.transpose())) > bound {
            failures += 1;
        }
    }
    Ok(failures as f64 / trials as f64)
}

/// Fraction of trials violating `λ_min^{1/2}(ΦΦᵀ) ≥ σ(√N − √m − √(2log(1/θ)))`.
pub fn min_singular_check(
    kind: NoiseKind,
    m: usize,
    samples: usize,
    sigma: f64,
    theta: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_theta(theta)?;
    if trials == 0 || m == 0 {
        return Err(invalid("trials and m must be positive"));
    }
    let bound =
        sigma * ((samples as f64).sqrt() - (m as f64).sqrt() - (2.0 * (1.0 / theta).ln()).sqrt());
    let mut failures = 0usize;
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let phi = random_matrix(kind, sigma, m, samples, &mut rng)?;
        let smin = if m > samples {
            0.0
        } else {
            singular_values(&phi)?.last().copied().unwrap_or(0.0)
        };
        if smin < bound {
            failures += 1;
        }
    }
    Ok(failures as f64 / trials as f64)
}

/// Empirical `(π₁, π₂)`: the largest over `k` of the mean `‖x_k‖²` and
/// `‖u_k‖²` across trajectories.
pub fn estimate_pi_bounds(trajectories: &[Trajectory]) -> Result<(f64, f64)> {
    if trajectories.is_empty() {
        return Err(invalid("no trajectories"));
    }
    fn peak_mean(seqs: Vec<&[DVector<f64>]>) -> f64 {
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        (0..len)
            .map(|k| {
                let vals: Vec<f64> = seqs
                    .iter()
                    .filter_map(|s| s.get(k))
                    .map(|v| v.norm_squared())
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .fold(0.0, f64::max)
    }
    Ok((
        peak_mean(trajectories.iter().map(|t| t.states.as_slice()).collect()),
        peak_mean(trajectories.iter().map(|t| t.inputs.as_slice()).collect()),
    ))
}

/// Flat report of every computed constant. Absent values print as `na`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundReport {
    pub eps: Option<f64>,
    pub theta: Option<f64>,
    pub eps0: Option<f64>,
    pub n0: Option<f64>,
    pub m0: Option<f64>,
    pub m1: Option<f64>,
    pub n0_source: Option<NormSource>,
    pub n_samples: Option<usize>,
    pub meets_n0: Option<bool>,
    pub sigma_max: Option<f64>,
    pub sigma_min: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_guaranteed: Option<bool>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c1m: Option<f64>,
    pub contracts: Option<bool>,
    pub ultimate_bound: Option<f64>,
    pub delta_g: Option<f64>,
    pub delta_h: Option<f64>,
    pub delta_phi: Option<f64>,
    pub pi1: Option<f64>,
    pub pi2: Option<f64>,
}

/// Keys of [`BoundReport::to_text`], in output order.
pub const BOUND_KEYS: [&str; 23] = [
    "eps",
    "theta",
    "eps0",
    "N0",
    "M0",
    "M1",
    "N0_source",
    "N",
    "meets_N0",
    "sigma_max",
    "sigma_min",
    "alpha",
    "alpha_guaranteed",
    "c1",
    "c2",
    "c1m",
    "contracts",
    "ultimate_bound",
    "delta_G",
    "delta_H",
    "delta_Phi",
    "pi1",
    "pi2",
];

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "na".to_string(), T::to_string)
}

impl BoundReport {
    pub fn with_sample_complexity(mut self, sc: &SampleComplexity) -> Self {
        self.eps = Some(sc.eps);
        self.theta = Some(sc.theta);
        self.eps0 = Some(sc.eps0);
        self.n0 = Some(sc.n0);
        self.m0 = Some(sc.m0);
        self.m1 = Some(sc.m1);
        self.n0_source = Some(sc.source);
        self.sigma_max = Some(sc.sigma_max);
        self.sigma_min = Some(sc.sigma_min);
        if let Some(n) = self.n_samples {
            self.meets_n0 = Some(n as f64 >= sc.n0);
        }
        self
    }

    pub fn with_error_bound(mut self, t: &ErrorBound) -> Self {
        self.c1 = Some(t.c1);
        self.c2 = Some(t.c2);
        self.contracts = Some(t.contracts());
        self.ultimate_bound = t.ultimate_bound;
        self
    }

    pub fn with_learning_errors(mut self, e: &LearningErrors) -> Self {
        self.delta_g = Some(e.delta_g);
        self.delta_h = Some(e.delta_h);
        self.delta_phi = Some(e.delta_phi);
        self
    }

    fn values(&self) -> [String; 23] {
        [
            show(&self.eps),
            show(&self.theta),
            show(&self.eps0),
            show(&self.n0),
            show(&self.m0),
            show(&self.m1),
            show(&self.n0_source),
            show(&self.n_samples),
            show(&self.meets_n0),
            show(&self.sigma_max),
            show(&self.sigma_min),
            show(&self.alpha),
            show(&self.alpha_guaranteed),
            show(&self.c1),
            show(&self.c2),
            show(&self.c1m),
            show(&self.contracts),
            show(&self.ultimate_bound),
            show(&self.delta_g),
            show(&self.delta_h),
            show(&self.delta_phi),
            show(&self.pi1),
            show(&self.pi2),
        ]
    }

    pub fn to_text(&self) -> String {
        BOUND_KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seen = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            if !BOUND_KEYS.contains(&k.trim()) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown key {k:?}"),
                });
            }
            seen.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        fn get<T: std::str::FromStr>(
            seen: &std::collections::BTreeMap<String, (usize, String)>,
            key: &str,
        ) -> Result<Option<T>> {
            match seen.get(key) {
                None => Err(Error::Parse {
                    line: 0,
                    msg: format!("missing key {key}"),
                }),
                Some((_, v)) if v == "na" => Ok(None),
                Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Parse {
                    line: *line,
                    msg: format!("bad value for {key}: {v:?}"),
                }),
            }
        }
        let source = match get::<String>(&seen, "N0_source")?.as_deref() {
            None => None,
            Some("truth") => Some(NormSource::Truth),
            Some("surrogate") => Some(NormSource::Surrogate),
            Some(other) => {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("bad N0_source {other:?}"),
                })
            }
        };
        Ok(Self {
            eps: get(&seen, "eps")?,
            theta: get(&seen, "theta")?,
            eps0: get(&seen, "eps0")?,
            n0: get(&seen, "N0")?,
            m0: get(&seen, "M0")?,
            m1: get(&seen, "M1")?,
            n0_source: source,
            n_samples: get(&seen, "N")?,
            meets_n0: get(&seen, "meets_N0")?,
            sigma_max: get(&seen, "sigma_max")?,
            sigma_min: get(&seen, "sigma_min")?,
            alpha: get(&seen, "alpha")?,
            alpha_guaranteed: get(&seen, "alpha_guaranteed")?,
            c1: get(&seen, "c1")?,
            c2: get(&seen, "c2")?,
            c1m: get(&seen, "c1m")?,
            contracts: get(&seen, "contracts")?,
            ultimate_bound: get(&seen, "ultimate_bound")?,
            delta_g: get(&seen, "delta_G")?,
            delta_h: get(&seen, "delta_H")?,
            delta_phi: get(&seen, "delta_Phi")?,
            pi1: get(&seen, "pi1")?,
            pi2: get(&seen, "pi2")?,
        })
    }
}
