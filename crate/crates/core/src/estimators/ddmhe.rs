//! Data-driven moving horizon estimator.
//!
//! The horizon operators are learned from offline segments by one
//! least-squares fit, `[G*, H*] = Yᵖ [X̄₀ᵖ; Uᵖ]†`. The process-noise operator
//! `F*` and the one-step prior map `[A*, B*]` are then read off the block
//! structure of `G*` and `H*`, so the plant matrices are never identified
//! explicitly.

use std::path::Path;

use nalgebra::DMatrix;

use super::{information_matrix, window_gain, HorizonEstimator, MheGains, Weights};
use crate::error::{Error, Result};
use crate::numerics::{min_eig_sym, norm2, pinv, rank};
use crate::offline::{excitation_rank, OfflineDataset};
use crate::textio::LabeledFile;

/// Everything the fit learns before the weights are chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedOperators {
    pub gstar: DMatrix<f64>,
    pub hstar: DMatrix<f64>,
    pub fstar: DMatrix<f64>,
    /// `G*(1:Lp; 1:n)`
    pub phi1: DMatrix<f64>,
    /// `G*(p+1:Lp+p; 1:n)`
    pub phi2: DMatrix<f64>,
    /// `H*(p+1:Lp+p; 1:m)`
    pub phi3: DMatrix<f64>,
    pub astar: DMatrix<f64>,
    pub bstar: DMatrix<f64>,
    pub cstar: DMatrix<f64>,
    pub horizon: usize,
}

impl LearnedOperators {
    /// Derives `F*`, the `Φ*` blocks and `[A*, B*]`, `C*` from `G*`, `H*`.
    pub fn from_gh(
        gstar: DMatrix<f64>,
        hstar: DMatrix<f64>,
        n: usize,
        m: usize,
        p: usize,
        horizon: usize,
    ) -> Result<Self> {
        let l = horizon;
        if gstar.shape() != ((l + 1) * p, n) || hstar.shape() != ((l + 1) * p, l * m) {
            return Err(Error::Integrity(format!(
                "G* {:?} / H* {:?} inconsistent with (n, m, p, L) = ({n}, {m}, {p}, {l})",
                gstar.shape(),
                hstar.shape()
            )));
        }
        let fstar = process_noise_operator(&gstar, n, p, l);
        let phi1 = gstar.rows(0, l * p).into_owned();
        let phi2 = gstar.rows(p, l * p).into_owned();
        let phi3 = hstar.view((p, 0), (l * p, m)).into_owned();

        if rank(&phi1, 0.0)? < n {
            return Err(Error::Degenerate(format!(
                "learned observability block G*(1:Lp; 1:n) lacks full column rank {n}"
            )));
        }
        let mut rhs = DMatrix::zeros(l * p, n + m);
        rhs.columns_mut(0, n).copy_from(&phi2);
        rhs.columns_mut(n, m).copy_from(&phi3);
        let ab = pinv(&phi1, 0.0)? * rhs;
        let astar = ab.columns(0, n).into_owned();
        let bstar = ab.columns(n, m).into_owned();
        let cstar = gstar.rows(0, p).into_owned();
        Ok(Self {
            gstar,
            hstar,
            fstar,
            phi1,
            phi2,
            phi3,
            astar,
            bstar,
            cstar,
            horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.gstar.ncols()
    }
    pub fn m(&self) -> usize {
        self.bstar.ncols()
    }
    pub fn p(&self) -> usize {
        self.cstar.nrows()
    }

    /// `Φ*,₁† Φ*,₂`, the learned state-transition estimate.
    pub fn transition(&self) -> &DMatrix<f64> {
        &self.astar
    }

    /// `λ_min(Γ* G*)` for the given `α₂`; independent of `α`.
    pub fn information_floor(&self, alpha2: f64) -> Result<f64> {
        let gamma = window_gain(&self.gstar, &self.fstar, alpha2)?;
        min_eig_sym(&information_matrix(&gamma, &self.gstar))
    }
}

/// Block copy building `F*` from the top rows of `G*`: for `h = 1..L`,
/// `F*(hp+1 : Lp+p; hn−n+1 : hn) = G*(1 : Lp−hp+p; 1:n)`.
pub fn process_noise_operator(
    gstar: &DMatrix<f64>,
    n: usize,
    p: usize,
    horizon: usize,
) -> DMatrix<f64> {
    let l = horizon;
    let mut f = DMatrix::zeros((l + 1) * p, l * n);
    for h in 1..=l {
        let rows = (l + 1 - h) * p;
        f.view_mut((h * p, (h - 1) * n), (rows, n))
            .copy_from(&gstar.view((0, 0), (rows, n)));
    }
    f
}

/// Least-squares fit of `[G*, H*]` followed by the structural derivations.
pub fn learn_ddmhe(ds: &OfflineDataset) -> Result<LearnedOperators> {
    let (r, full) = excitation_rank(ds, 0.0)?;
    if !full {
        return Err(Error::Assumption {
            assumption: "persistent excitation: rank [X0bar; Up] = n + Lm",
            detail: format!("rank {r} < {}", ds.n + ds.up.nrows()),
        });
    }
    let gh = &ds.yp * pinv(&ds.regressor(), 0.0)?;
    let gstar = gh.columns(0, ds.n).into_owned();
    let hstar = gh.columns(ds.n, ds.up.nrows()).into_owned();
    LearnedOperators::from_gh(gstar, hstar, ds.n, ds.m, ds.p, ds.horizon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdmheParams {
    pub learned: LearnedOperators,
    pub weights: Weights,
    pub gains: MheGains,
}

impl DdmheParams {
    pub fn new(learned: LearnedOperators, weights: Weights) -> Result<Self> {
        let gains = MheGains::build(
            &learned.gstar,
            &learned.hstar,
            &learned.fstar,
            &learned.astar,
            &learned.bstar,
            &weights,
            learned.horizon,
        )?;
        Ok(Self {
            learned,
            weights,
            gains,
        })
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gains.gamma
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.gains.lambda
    }

    /// `α σ_ν² ‖Λ* Φ*,₁† Φ*,₂‖₂`.
    pub fn contraction(&self) -> f64 {
        self.weights.alpha1() * norm2(&(&self.gains.lambda * &self.learned.astar))
    }

    pub fn to_text(&self) -> String {
        let mut f = LabeledFile::default();
        f.set("alpha", self.weights.alpha);
        f.set("alpha1", self.weights.alpha1());
        f.set("alpha2", self.weights.alpha2());
        f.set("sigma_w", self.weights.sigma_w);
        f.set("sigma_v", self.weights.sigma_v);
        f.set("L", self.learned.horizon);
        let l = &self.learned;
        for (label, m) in [
            ("GSTAR", &l.gstar),
            ("HSTAR", &l.hstar),
            ("FSTAR", &l.fstar),
            ("GAMMA", &self.gains.gamma),
            ("LAMBDA", &self.gains.lambda),
            ("ASTAR", &l.astar),
            ("BSTAR", &l.bstar),
            ("CSTAR", &l.cstar),
        ] {
            f.push_block(label, m.clone());
        }
        f.render()
    }

    /// Reloads exported parameters. `G*` and `H*` plus the scalar header are
    /// authoritative; the derived blocks are recomputed and must agree with
    /// the stored ones.
    pub fn from_text(text: &str) -> Result<Self> {
        let f = LabeledFile::parse(text)?;
        let horizon: usize = f.get("L")?;
        let weights = Weights::new(f.get("alpha")?, f.get("sigma_w")?, f.get("sigma_v")?)?;
        let gstar = f.block("GSTAR")?.clone();
        let hstar = f.block("HSTAR")?.clone();
        let n = gstar.ncols();
        if horizon == 0 || gstar.nrows() % (horizon + 1) != 0 || hstar.ncols() % horizon != 0 {
            return Err(Error::Integrity(
                "GSTAR/HSTAR shapes inconsistent with L".into(),
            ));
        }
        let p = gstar.nrows() / (horizon + 1);
        let m = hstar.ncols() / horizon;
        let learned = LearnedOperators::from_gh(gstar, hstar, n, m, p, horizon)?;
        let params = Self::new(learned, weights)?;
        for (label, m) in [
            ("FSTAR", &params.learned.fstar),
            ("ASTAR", &params.learned.astar),
            ("BSTAR", &params.learned.bstar),
            ("CSTAR", &params.learned.cstar),
            ("GAMMA", &params.gains.gamma),
            ("LAMBDA", &params.gains.lambda),
        ] {
            let stored = f.block(label)?;
            let scale = m.amax().max(1.0);
            if stored.shape() != m.shape() || (stored - m).amax() > 1e-9 * scale {
                return Err(Error::Integrity(format!(
                    "{label} does not match GSTAR/HSTAR"
                )));
            }
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

impl HorizonEstimator for DdmheParams {
    fn gains(&self) -> &MheGains {
        &self.gains
    }
}

/// Learns the operators and builds the gains for weight `α`.
pub fn fit_ddmhe(
    ds: &OfflineDataset,
    alpha: f64,
    sigma_w: f64,
    sigma_v: f64,
) -> Result<DdmheParams> {
    let weights = Weights::new(alpha, sigma_w, sigma_v)?;
    DdmheParams::new(learn_ddmhe(ds)?, weights)
}
