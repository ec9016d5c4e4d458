//! Moving horizon estimators.
//!
//! Both estimators share the same recursion; they differ only in where the
//! horizon operators come from:
//!
//! ```text
//! x̂ = Λ [α₁ x̄ + Γ (y_window − H u_window)]
//! x̄⁺ = A x̂ + B u_oldest
//! Γ = α₂ Gᵀ (α₂ I + F Fᵀ)⁻¹,   Λ = (α₁ I + Γ G)⁻¹
//! α₁ = α σ_ν²,   α₂ = σ_ν² / σ_ω²
//! ```
//!
//! [`ddmhe`] learns `G, H, F, A, B` from an [`OfflineDataset`](crate::offline::OfflineDataset);
//! [`mbmhe`] takes them from the true plant. [`oracle`] solves the same
//! online least-squares problem numerically for cross-checking.

pub mod ddmhe;
pub mod mbmhe;
pub mod oracle;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::lti::Trajectory;
use crate::numerics::{spd_inverse, spd_solve, symmetrize};

pub use ddmhe::{fit_ddmhe, learn_ddmhe, DdmheParams, LearnedOperators};
pub use mbmhe::{fit_mbmhe, MbmheParams};
pub use oracle::oracle_online_solve;

/// Weights derived from `α`, `σ_ω`, `σ_ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub alpha: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
}

impl Weights {
    pub fn new(alpha: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("sigma_w", sigma_w), ("sigma_v", sigma_v)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self {
            alpha,
            sigma_w,
            sigma_v,
        })
    }

    /// `α σ_ν²`
    pub fn alpha1(&self) -> f64 {
        self.alpha * self.sigma_v * self.sigma_v
    }

    /// `σ_ν² / σ_ω²`
    pub fn alpha2(&self) -> f64 {
        (self.sigma_v / self.sigma_w).powi(2)
    }
}

/// `Γ = α₂ Gᵀ (α₂ I + F Fᵀ)⁻¹`, independent of `α`.
pub fn window_gain(g: &DMatrix<f64>, f: &DMatrix<f64>, alpha2: f64) -> Result<DMatrix<f64>> {
    let rows = g.nrows();
    let s = DMatrix::identity(rows, rows) * alpha2 + f * f.transpose();
    // S symmetric, so Γᵀ = α₂ S⁻¹ G
    Ok(spd_solve(&s, &(g * alpha2), "α₂I + FFᵀ")?.transpose())
}

/// `Γ G`, symmetrised.
pub fn information_matrix(gamma: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(gamma * g))
}

/// Gains and prior map used by one step of the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct MheGains {
    pub h: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub alpha1: f64,
    pub horizon: usize,
}

impl MheGains {
    pub(crate) fn build(
        g: &DMatrix<f64>,
        h: &DMatrix<f64>,
        f: &DMatrix<f64>,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        weights: &Weights,
        horizon: usize,
    ) -> Result<Self> {
        let gamma = window_gain(g, f, weights.alpha2())?;
        let n = g.ncols();
        let info = DMatrix::identity(n, n) * weights.alpha1() + information_matrix(&gamma, g);
        let lambda = spd_inverse(&info, "α₁I + ΓG")?;
        Ok(Self {
            h: h.clone(),
            gamma,
            lambda,
            a: a.clone(),
            b: b.clone(),
            alpha1: weights.alpha1(),
            horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.gamma.ncols() / (self.horizon + 1)
    }

    /// Window-start estimate from stacked windows and prior.
    pub fn estimate(
        &self,
        xbar: &DVector<f64>,
        u_window: &DVector<f64>,
        y_window: &DVector<f64>,
    ) -> DVector<f64> {
        let innovation = y_window - &self.h * u_window;
        &self.lambda * (xbar * self.alpha1 + &self.gamma * innovation)
    }

    /// Prior for the next window start.
    pub fn propagate(&self, xhat: &DVector<f64>, u_oldest: &DVector<f64>) -> DVector<f64> {
        &self.a * xhat + &self.b * u_oldest
    }
}

/// Anything that runs the sliding-window recursion.
pub trait HorizonEstimator {
    fn gains(&self) -> &MheGains;

    /// Pushes `(u_{t−1}, y_t)` into the windows and, once they are full,
    /// returns `x̂_{t−L|t}` and updates the prior.
    fn step(
        &self,
        state: &mut EstimatorState,
        y_t: &DVector<f64>,
        u_prev: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let gains = self.gains();
        if y_t.len() != gains.p() || u_prev.len() != gains.m() {
            return Err(invalid("measurement or input dimension mismatch"));
        }
        state.push(u_prev.clone(), y_t.clone());
        if !state.is_full() {
            return Err(Error::State(format!(
                "window holds {} inputs and {} outputs, need {} and {}",
                state.u_window.len(),
                state.y_window.len(),
                state.horizon,
                state.horizon + 1
            )));
        }
        let xhat = gains.estimate(
            &state.xbar,
            &state.stacked_inputs(),
            &state.stacked_outputs(),
        );
        state.xbar = gains.propagate(&xhat, &state.u_window[0]);
        Ok(xhat)
    }
}

/// Prior estimate plus the sliding `u` and `y` windows.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub xbar: DVector<f64>,
    pub u_window: VecDeque<DVector<f64>>,
    pub y_window: VecDeque<DVector<f64>>,
    /// Time index of the newest output in the window.
    pub t: usize,
    pub horizon: usize,
}

impl EstimatorState {
    /// Fresh state holding only `y₀`; `xbar` is the prior for `x₀`.
    pub fn new(xbar: DVector<f64>, y0: DVector<f64>, horizon: usize) -> Self {
        Self {
            xbar,
            u_window: VecDeque::new(),
            y_window: VecDeque::from([y0]),
            t: 0,
            horizon,
        }
    }

    /// State with full windows, ready for the next step.
    pub fn with_windows(
        xbar: DVector<f64>,
        inputs: Vec<DVector<f64>>,
        outputs: Vec<DVector<f64>>,
        t: usize,
    ) -> Result<Self> {
        let horizon = inputs.len();
        if outputs.len() != horizon + 1 || horizon == 0 {
            return Err(Error::State(format!(
                "need L inputs and L+1 outputs, got {} and {}",
                inputs.len(),
                outputs.len()
            )));
        }
        Ok(Self {
            xbar,
            u_window: inputs.into(),
            y_window: outputs.into(),
            t,
            horizon,
        })
    }

    pub fn is_full(&self) -> bool {
        self.u_window.len() == self.horizon && self.y_window.len() == self.horizon + 1
    }

    fn push(&mut self, u: DVector<f64>, y: DVector<f64>) {
        self.u_window.push_back(u);
        self.y_window.push_back(y);
        if self.u_window.len() > self.horizon {
            self.u_window.pop_front();
        }
        if self.y_window.len() > self.horizon + 1 {
            self.y_window.pop_front();
        }
        self.t += 1;
    }

    pub fn stacked_inputs(&self) -> DVector<f64> {
        stack(self.u_window.iter())
    }

    pub fn stacked_outputs(&self) -> DVector<f64> {
        stack(self.y_window.iter())
    }
}

fn stack<'a>(parts: impl Iterator<Item = &'a DVector<f64>> + Clone) -> DVector<f64> {
    let len = parts.clone().map(|v| v.len()).sum();
    DVector::from_iterator(len, parts.flat_map(|v| v.iter().copied()))
}

/// One estimate `x̂_{t−L|t}`, labelled by the time `t` it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub t: usize,
    pub xhat: DVector<f64>,
}

impl Estimate {
    /// Index of the estimated state, `t − L`.
    pub fn k(&self, horizon: usize) -> usize {
        self.t - horizon
    }
}

/// Runs the recursion over a whole trajectory, producing estimates for
/// `t = L..=T` starting from the prior `xbar_init` for `x₀`.
pub fn run_estimation<E: HorizonEstimator + ?Sized>(
    estimator: &E,
    traj: &Trajectory,
    xbar_init: &DVector<f64>,
) -> Result<Vec<Estimate>> {
    let horizon = estimator.gains().horizon;
    if traj.outputs.len() < horizon + 1 || traj.inputs.len() + 1 != traj.outputs.len() {
        return Err(invalid(format!(
            "trajectory with {} outputs is shorter than the window L + 1 = {}",
            traj.outputs.len(),
            horizon + 1
        )));
    }
    if xbar_init.len() != estimator.gains().n() {
        return Err(invalid("prior dimension mismatch"));
    }
    let mut state = EstimatorState::new(xbar_init.clone(), traj.outputs[0].clone(), horizon);
    let mut out = Vec::with_capacity(traj.inputs.len() + 1 - horizon);
    for t in 1..traj.outputs.len() {
        if t < horizon {
            state.push(traj.inputs[t - 1].clone(), traj.outputs[t].clone());
            continue;
        }
        let xhat = estimator.step(&mut state, &traj.outputs[t], &traj.inputs[t - 1])?;
        out.push(Estimate { t, xhat });
    }
    Ok(out)
}
