//! Pre-collected offline data: `N` input–output segments of horizon `L`,
//! each with one noisy sample of its initial state.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::lti::{
    gaussian, role_rng, sample_noise, simulate_with, LtiSystem, NoiseRole, NoiseSpec,
};
use crate::numerics::rank;
use crate::textio::LabeledFile;

/// How segment initial states are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollectionMode {
    /// One long run; segments start every `gap` steps after a `gap`-step
    /// warm-up.
    Continuous,
    /// Every segment restarts from an independent `𝒩(0, σ_x̄₀² I)` state.
    #[default]
    Restart,
}

impl fmt::Display for CollectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollectionMode::Continuous => "continuous",
            CollectionMode::Restart => "restart",
        })
    }
}

impl FromStr for CollectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "continuous" => Ok(Self::Continuous),
            "restart" => Ok(Self::Restart),
            other => Err(invalid(format!("unknown collection mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    /// Noisy segment-initial states, `n × N`.
    pub x0bar: DMatrix<f64>,
    /// Stacked segment inputs, `Lm × N`.
    pub up: DMatrix<f64>,
    /// Stacked segment outputs, `(L+1)p × N`.
    pub yp: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
    pub noise: NoiseSpec,
}

impl OfflineDataset {
    /// Assembles a dataset, checking every shape against the metadata.
    pub fn new(
        x0bar: DMatrix<f64>,
        up: DMatrix<f64>,
        yp: DMatrix<f64>,
        horizon: usize,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let n = x0bar.nrows();
        let count = x0bar.ncols();
        if horizon == 0
            || !up.nrows().is_multiple_of(horizon)
            || !yp.nrows().is_multiple_of(horizon + 1)
        {
            return Err(Error::Integrity(format!(
                "block rows ({}, {}) not divisible by horizon {horizon}",
                up.nrows(),
                yp.nrows()
            )));
        }
        if up.ncols() != count || yp.ncols() != count {
            return Err(Error::Integrity(format!(
                "column counts differ: X0BAR {count}, UP {}, YP {}",
                up.ncols(),
                yp.ncols()
            )));
        }
        let m = up.nrows() / horizon;
        let p = yp.nrows() / (horizon + 1);
        Ok(Self {
            x0bar,
            up,
            yp,
            n,
            m,
            p,
            horizon,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.x0bar.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[X̄₀; U]`, the regressor of the least-squares fit.
    pub fn regressor(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n + self.up.nrows(), self.len());
        z.rows_mut(0, self.n).copy_from(&self.x0bar);
        z.rows_mut(self.n, self.up.nrows()).copy_from(&self.up);
        z
    }

    /// Column `i` (1-based) of each data matrix.
    pub fn segment_view(&self, i: usize) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        if i < 1 || i > self.len() {
            return Err(Error::Bounds(format!(
                "segment {i} outside 1..={}",
                self.len()
            )));
        }
        let c = i - 1;
        Ok((
            self.x0bar.column(c).into_owned(),
            self.up.column(c).into_owned(),
            self.yp.column(c).into_owned(),
        ))
    }

    pub fn to_text(&self) -> String {
        let mut f = LabeledFile::default();
        f.set("n", self.n);
        f.set("m", self.m);
        f.set("p", self.p);
        f.set("L", self.horizon);
        f.set("N", self.len());
        f.set("sigma_w", self.noise.sigma_w);
        f.set("sigma_v", self.noise.sigma_v);
        f.set("sigma_chi", self.noise.sigma_chi);
        f.set("sigma_u", self.noise.sigma_u);
        f.set("sigma_x0", self.noise.sigma_x0);
        f.set("kind", self.noise.kind);
        f.push_block("X0BAR", self.x0bar.clone());
        f.push_block("UP", self.up.clone());
        f.push_block("YP", self.yp.clone());
        f.render()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let f = LabeledFile::parse(text)?;
        let n: usize = f.get("n")?;
        let m: usize = f.get("m")?;
        let p: usize = f.get("p")?;
        let horizon: usize = f.get("L")?;
        let count: usize = f.get("N")?;
        let noise = NoiseSpec {
            kind: f.get_str("kind")?.parse()?,
            sigma_w: f.get("sigma_w")?,
            sigma_v: f.get("sigma_v")?,
            sigma_chi: f.get("sigma_chi")?,
            sigma_u: f.get("sigma_u")?,
            // absent in files written by hand; zero means "unknown"
            sigma_x0: if f.header.contains_key("sigma_x0") {
                f.get("sigma_x0")?
            } else {
                0.0
            },
        };
        let expect = [
            ("X0BAR", n, count),
            ("UP", horizon * m, count),
            ("YP", (horizon + 1) * p, count),
        ];
        for (label, rows, cols) in expect {
            let blk = f.block(label)?;
            if blk.shape() != (rows, cols) {
                return Err(Error::Integrity(format!(
                    "{label} is {}x{}, header implies {rows}x{cols}",
                    blk.nrows(),
                    blk.ncols()
                )));
            }
        }
        Self::new(
            f.block("X0BAR")?.clone(),
            f.block("UP")?.clone(),
            f.block("YP")?.clone(),
            horizon,
            noise,
        )
    }
}

pub fn save_dataset(ds: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ds.to_text())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    OfflineDataset::from_text(&std::fs::read_to_string(path)?)
}

/// Collection settings beyond the plant and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionPlan {
    pub segments: usize,
    pub horizon: usize,
    /// Spacing between segment starts in continuous mode.
    pub gap: usize,
    pub mode: CollectionMode,
}

impl CollectionPlan {
    pub fn new(segments: usize, horizon: usize) -> Self {
        Self {
            segments,
            horizon,
            gap: horizon + 1,
            mode: CollectionMode::Restart,
        }
    }
}

/// Simulates the plant under Gaussian excitation and records `N` segments.
pub fn collect_offline(
    sys: &LtiSystem,
    plan: &CollectionPlan,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<OfflineDataset> {
    noise.validate()?;
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let l = plan.horizon;
    if l < n.max(m).max(p) {
        return Err(Error::Assumption {
            assumption: "horizon length L >= max(n, m, p)",
            detail: format!("L = {l}, (n, m, p) = ({n}, {m}, {p})"),
        });
    }
    if plan.gap < l {
        return Err(Error::Assumption {
            assumption: "segment spacing >= L",
            detail: format!("gap = {} < L = {l}", plan.gap),
        });
    }
    if plan.segments < n + l * m {
        return Err(Error::Assumption {
            assumption: "persistent excitation (N >= n + Lm)",
            detail: format!("N = {} < n + Lm = {}", plan.segments, n + l * m),
        });
    }

    let mut w_rng = role_rng(seed, NoiseRole::Process);
    let mut v_rng = role_rng(seed, NoiseRole::Measurement);
    let mut u_rng = role_rng(seed, NoiseRole::Excitation);
    let mut x_rng = role_rng(seed, NoiseRole::InitialState);
    let mut chi_rng = role_rng(seed, NoiseRole::StateSample);

    let count = plan.segments;
    let mut x0bar = DMatrix::zeros(n, count);
    let mut up = DMatrix::zeros(l * m, count);
    let mut yp = DMatrix::zeros((l + 1) * p, count);

    let mut record =
        |i: usize, traj: &crate::lti::Trajectory, start: usize, chi_rng: &mut _| -> Result<()> {
            let chi = sample_noise(noise.kind, noise.sigma_chi, n, chi_rng)?;
            x0bar.set_column(i, &(&traj.states[start] + chi));
            for h in 0..l {
                up.view_mut((h * m, i), (m, 1))
                    .copy_from(&traj.inputs[start + h]);
            }
            for h in 0..=l {
                yp.view_mut((h * p, i), (p, 1))
                    .copy_from(&traj.outputs[start + h]);
            }
            Ok(())
        };

    match plan.mode {
        CollectionMode::Restart => {
            for i in 0..count {
                let x0 = gaussian(noise.sigma_x0, n, &mut x_rng);
                let inputs: Vec<_> = (0..l)
                    .map(|_| gaussian(noise.sigma_u, m, &mut u_rng))
                    .collect();
                let traj = simulate_with(sys, &x0, &inputs, noise, &mut w_rng, &mut v_rng)?;
                record(i, &traj, 0, &mut chi_rng)?;
            }
        }
        CollectionMode::Continuous => {
            // warm-up of `gap` steps, then segment i starts at gap·(i+1)
            let total = plan.gap * count + l;
            let inputs: Vec<_> = (0..total)
                .map(|_| gaussian(noise.sigma_u, m, &mut u_rng))
                .collect();
            let x0 = gaussian(noise.sigma_x0, n, &mut x_rng);
            let traj = simulate_with(sys, &x0, &inputs, noise, &mut w_rng, &mut v_rng)?;
            for i in 0..count {
                record(i, &traj, plan.gap * (i + 1), &mut chi_rng)?;
            }
        }
    }
    OfflineDataset::new(x0bar, up, yp, l, *noise)
}

/// Rank of `[X̄₀; U]` and whether it equals `n + Lm`.
pub fn excitation_rank(ds: &OfflineDataset, tol: f64) -> Result<(usize, bool)> {
    let r = rank(&ds.regressor(), tol)?;
    Ok((r, r == ds.n + ds.up.nrows()))
}

/// True when `[X̄₀; U]` has full row rank `n + Lm`.
pub fn check_persistent_excitation(ds: &OfflineDataset, tol: f64) -> bool {
    excitation_rank(ds, tol).is_ok_and(|(_, ok)| ok)
}
