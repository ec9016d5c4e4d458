//! Discrete LTI plant `x⁺ = A x + B u + ω`, `y = C x + ν`, its stacked
//! horizon operators, and seeded trajectory simulation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::numerics::{ensure_finite, rank};
use crate::textio::{write_matrix_csv, LabeledFile};

#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        ensure_finite(&c, "C")?;
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(invalid(format!(
                "inconsistent dimensions: A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Scalar integrator `A = B = C = 1`.
    pub fn scalar_integrator() -> Self {
        let one = DMatrix::from_element(1, 1, 1.0);
        Self::new(one.clone(), one.clone(), one).expect("valid")
    }

    /// Series-elastic-actuator robot joint discretised at 10 ms.
    /// State `[q̇, q, θ̇, θ]`, input `[τ_e, τ]`, output `[q, θ]`.
    pub fn sea() -> Self {
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            0.997, -0.033, 0.0,    0.033,
            0.010,  1.000, 0.0,    0.0,
            0.0,    0.049, 0.951, -0.049,
            0.0,    0.0,   0.010,  1.000,
        ]);
        #[rustfmt::skip]
        let b = DMatrix::from_row_slice(4, 2, &[
            0.033, 0.0,
            0.0,   0.0,
            0.0,   0.049,
            0.0,   0.0,
        ]);
        #[rustfmt::skip]
        let c = DMatrix::from_row_slice(2, 4, &[
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        Self::new(a, b, c).expect("valid")
    }

    /// `[C; CA; …; CA^{n−1}]`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        let mut out = DMatrix::zeros(n * p, n);
        let mut cak = self.c.clone();
        for k in 0..n {
            out.view_mut((k * p, 0), (p, n)).copy_from(&cak);
            cak = &cak * &self.a;
        }
        out
    }

    pub fn is_observable(&self) -> bool {
        rank(&self.observability_matrix(), 0.0).is_ok_and(|r| r == self.n())
    }

    /// Reads `A`, `B`, `C` blocks from a labeled matrix file.
    pub fn from_text(text: &str) -> Result<Self> {
        let f = LabeledFile::parse(text)?;
        Self::new(
            f.block("A")?.clone(),
            f.block("B")?.clone(),
            f.block("C")?.clone(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut f = LabeledFile::default();
        f.push_block("A", self.a.clone());
        f.push_block("B", self.b.clone());
        f.push_block("C", self.c.clone());
        f.render()
    }
}

/// Checks whether `(C, A)` is observable.
pub fn check_observability(sys: &LtiSystem) -> bool {
    sys.is_observable()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Uniform,
    Laplace,
    BernoulliSymmetric,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Uniform => "uniform",
            NoiseKind::Laplace => "laplace",
            NoiseKind::BernoulliSymmetric => "bernoulli-symmetric",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "uniform" => Ok(NoiseKind::Uniform),
            "laplace" => Ok(NoiseKind::Laplace),
            "bernoulli-symmetric" | "bernoulli" => Ok(NoiseKind::BernoulliSymmetric),
            other => Err(invalid(format!("unknown noise kind {other:?}"))),
        }
    }
}

/// Noise levels for every random source in an experiment.
///
/// `kind` applies to process, measurement and state-sample noise. Excitation
/// inputs and segment initial states are always Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub sigma_chi: f64,
    pub sigma_u: f64,
    pub sigma_x0: f64,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma_w: 0.0,
            sigma_v: 0.0,
            sigma_chi: 0.0,
            sigma_u: 0.0,
            sigma_x0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_w,
            self.sigma_v,
            self.sigma_chi,
            self.sigma_u,
            self.sigma_x0,
        ];
        if all.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid(format!(
                "noise sigmas must be finite and nonnegative: {self:?}"
            )));
        }
        Ok(())
    }

    /// `max{σ_ω, σ_ν, σ_u, σ_x̄₀, σ_χ}`.
    pub fn sigma_max(&self) -> f64 {
        [
            self.sigma_w,
            self.sigma_v,
            self.sigma_u,
            self.sigma_x0,
            self.sigma_chi,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// `min{σ_u, σ_x̄₀}`.
    pub fn sigma_min(&self) -> f64 {
        self.sigma_u.min(self.sigma_x0)
    }
}

/// Independent random sources. Each gets its own ChaCha stream so that
/// changing one noise level never perturbs the draws of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRole {
    Process = 1,
    Measurement = 2,
    StateSample = 3,
    Excitation = 4,
    InitialState = 5,
}

/// Generator for one (seed, role) pair.
pub fn role_rng(seed: u64, role: NoiseRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}

/// Zero-mean draw whose sub-Gaussian parameter (variance, for the unbounded
/// kinds) equals `sigma`.
pub fn sample_noise<R: Rng + ?Sized>(
    kind: NoiseKind,
    sigma: f64,
    dim: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(DVector::zeros(dim));
    }
    let draw = |rng: &mut R| -> f64 {
        match kind {
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseKind::Uniform => {
                // U(−δ/2, δ/2] with δ = 2√3σ
                let half = sigma * 3f64.sqrt();
                let u: f64 = rng.random();
                half - 2.0 * half * u
            }
            NoiseKind::Laplace => {
                let b = sigma / std::f64::consts::SQRT_2;
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
            NoiseKind::BernoulliSymmetric => {
                if rng.random::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
        }
    };
    Ok(DVector::from_iterator(dim, (0..dim).map(|_| draw(rng))))
}

/// Isotropic Gaussian draw `𝒩(0, σ²I)`.
pub(crate) fn gaussian<R: Rng + ?Sized>(sigma: f64, dim: usize, rng: &mut R) -> DVector<f64> {
    if sigma == 0.0 {
        return DVector::zeros(dim);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    DVector::from_iterator(dim, (0..dim).map(|_| normal.sample(rng)))
}

/// Horizon operators mapping window-start state, stacked inputs and stacked
/// process noise to the `L+1` stacked outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedOperators {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub horizon: usize,
}

pub fn build_stacked_operators(sys: &LtiSystem, horizon: usize) -> Result<StackedOperators> {
    if horizon < 1 {
        return Err(invalid("horizon must be at least 1"));
    }
    let (n, m, p, l) = (sys.n(), sys.m(), sys.p(), horizon);

    // C A^k for k = 0..=L
    let mut powers = Vec::with_capacity(l + 1);
    let mut cak = sys.c.clone();
    for _ in 0..=l {
        powers.push(cak.clone());
        cak = &cak * &sys.a;
    }

    let mut g = DMatrix::zeros((l + 1) * p, n);
    let mut f = DMatrix::zeros((l + 1) * p, l * n);
    for i in 0..=l {
        g.view_mut((i * p, 0), (p, n)).copy_from(&powers[i]);
        for j in 0..i {
            f.view_mut((i * p, j * n), (p, n))
                .copy_from(&powers[i - j - 1]);
        }
    }
    let mut blkdiag_b = DMatrix::zeros(l * n, l * m);
    for j in 0..l {
        blkdiag_b.view_mut((j * n, j * m), (n, m)).copy_from(&sys.b);
    }
    let h = &f * blkdiag_b;
    Ok(StackedOperators { g, h, f, horizon })
}

/// `G x + H u + F w + v` over one window.
pub fn horizon_output(
    ops: &StackedOperators,
    x_start: &DVector<f64>,
    u_window: &DVector<f64>,
    w_window: &DVector<f64>,
    v_window: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x_start.len() != ops.g.ncols()
        || u_window.len() != ops.h.ncols()
        || w_window.len() != ops.f.ncols()
        || v_window.len() != ops.g.nrows()
    {
        return Err(invalid(format!(
            "window dimensions ({}, {}, {}, {}) do not match operators ({}, {}, {}, {})",
            x_start.len(),
            u_window.len(),
            w_window.len(),
            v_window.len(),
            ops.g.ncols(),
            ops.h.ncols(),
            ops.f.ncols(),
            ops.g.nrows()
        )));
    }
    Ok(&ops.g * x_start + &ops.h * u_window + &ops.f * w_window + v_window)
}

/// A simulated run: `T+1` states and outputs, `T` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// CSV with columns `k,x_1..x_n,u_1..u_m,y_1..y_p`; inputs are blank on
    /// the last row.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let p = self.outputs.first().map_or(0, |y| y.len());
        let mut cols = vec!["k".to_string()];
        cols.extend((1..=n).map(|i| format!("x_{i}")));
        cols.extend((1..=m).map(|i| format!("u_{i}")));
        cols.extend((1..=p).map(|i| format!("y_{i}")));
        let mut out = cols.join(",");
        out.push('\n');
        for k in 0..self.states.len() {
            let mut row = vec![k.to_string()];
            row.extend(self.states[k].iter().map(|v| v.to_string()));
            match self.inputs.get(k) {
                Some(u) => row.extend(u.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            row.extend(self.outputs[k].iter().map(|v| v.to_string()));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty trajectory file".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let count = |prefix: &str| cols.iter().filter(|c| c.starts_with(prefix)).count();
        let (n, m, p) = (count("x_"), count("u_"), count("y_"));
        if cols.first() != Some(&"k") || cols.len() != 1 + n + m + p {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {header:?}"),
            });
        }
        let mut traj = Trajectory {
            states: vec![],
            inputs: vec![],
            outputs: vec![],
        };
        let parse = |s: &str, line: usize| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("{e} ({s:?})"),
            })
        };
        for (i, raw) in lines {
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {} fields", cols.len()),
                });
            }
            let x = fields[1..1 + n]
                .iter()
                .map(|s| parse(s, i + 1))
                .collect::<Result<Vec<_>>>()?;
            let ufields = &fields[1 + n..1 + n + m];
            let y = fields[1 + n + m..]
                .iter()
                .map(|s| parse(s, i + 1))
                .collect::<Result<Vec<_>>>()?;
            traj.states.push(DVector::from_vec(x));
            traj.outputs.push(DVector::from_vec(y));
            if ufields.iter().all(|s| s.trim().is_empty()) {
                continue;
            }
            let u = ufields
                .iter()
                .map(|s| parse(s, i + 1))
                .collect::<Result<Vec<_>>>()?;
            traj.inputs.push(DVector::from_vec(u));
        }
        if traj.inputs.len() + 1 != traj.states.len() {
            return Err(Error::Integrity(format!(
                "{} states but {} inputs",
                traj.states.len(),
                traj.inputs.len()
            )));
        }
        Ok(traj)
    }
}

/// Propagates the plant from `x0` under `inputs`. Process and measurement
/// noise come from the `seed` streams for those roles.
pub fn simulate(
    sys: &LtiSystem,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Trajectory> {
    noise.validate()?;
    if inputs.is_empty() {
        return Err(invalid("simulation needs at least one input"));
    }
    if x0.len() != sys.n() || inputs.iter().any(|u| u.len() != sys.m()) {
        return Err(invalid("initial state or input dimension mismatch"));
    }
    let mut w_rng = role_rng(seed, NoiseRole::Process);
    let mut v_rng = role_rng(seed, NoiseRole::Measurement);
    simulate_with(sys, x0, inputs, noise, &mut w_rng, &mut v_rng)
}

pub(crate) fn simulate_with<R: Rng + ?Sized>(
    sys: &LtiSystem,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    noise: &NoiseSpec,
    w_rng: &mut R,
    v_rng: &mut R,
) -> Result<Trajectory> {
    let t_len = inputs.len();
    let mut states = Vec::with_capacity(t_len + 1);
    let mut outputs = Vec::with_capacity(t_len + 1);
    let mut x = x0.clone();
    for u in inputs {
        outputs.push(&sys.c * &x + sample_noise(noise.kind, noise.sigma_v, sys.p(), v_rng)?);
        let next =
            &sys.a * &x + &sys.b * u + sample_noise(noise.kind, noise.sigma_w, sys.n(), w_rng)?;
        states.push(std::mem::replace(&mut x, next));
    }
    outputs.push(&sys.c * &x + sample_noise(noise.kind, noise.sigma_v, sys.p(), v_rng)?);
    states.push(x);
    Ok(Trajectory {
        states,
        inputs: inputs.to_vec(),
        outputs,
    })
}

/// Renders a matrix as bare CSV.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    write_matrix_csv(&mut s, m);
    s
}
