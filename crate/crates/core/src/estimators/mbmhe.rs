//! Model-based MHE: the same recursion driven by the true plant operators.

use nalgebra::DMatrix;

use super::{HorizonEstimator, MheGains, Weights};
use crate::error::{Error, Result};
use crate::lti::{build_stacked_operators, LtiSystem, StackedOperators};
use crate::numerics::norm2;

#[derive(Debug, Clone, PartialEq)]
pub struct MbmheParams {
    pub ops: StackedOperators,
    pub weights: Weights,
    pub gains: MheGains,
}

impl MbmheParams {
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gains.gamma
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.gains.lambda
    }

    /// `α σ_ν² ‖Λ A‖₂`.
    pub fn contraction(&self) -> f64 {
        self.weights.alpha1() * norm2(&(&self.gains.lambda * &self.gains.a))
    }
}

impl HorizonEstimator for MbmheParams {
    fn gains(&self) -> &MheGains {
        &self.gains
    }
}

pub fn fit_mbmhe(
    sys: &LtiSystem,
    horizon: usize,
    alpha: f64,
    sigma_w: f64,
    sigma_v: f64,
) -> Result<MbmheParams> {
    let weights = Weights::new(alpha, sigma_w, sigma_v)?;
    if !sys.is_observable() {
        return Err(Error::Assumption {
            assumption: "(C, A) observable",
            detail: "observability matrix is rank deficient".into(),
        });
    }
    if horizon < sys.n() {
        return Err(Error::Assumption {
            assumption: "horizon length L >= n",
            detail: format!("L = {horizon}, n = {}", sys.n()),
        });
    }
    let ops = build_stacked_operators(sys, horizon)?;
    let gains = MheGains::build(&ops.g, &ops.h, &ops.f, sys.a(), sys.b(), &weights, horizon)?;
    Ok(MbmheParams {
        ops,
        weights,
        gains,
    })
}
