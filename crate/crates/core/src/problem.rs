//! Model definitions and a sampled audit of the structural hypotheses.
//!
//! Three drifts are provided:
//!
//! * `heat`: `A(v) = Δv` — linear, monotone with `K₂ = 0`;
//! * `burgers`: `A(v) = Δv + v·∂ₓv` on the Dirichlet interval;
//! * `ns2d`: `A(u) = νΔu − P_H[(u·∇)u] + f` on the periodic torus.
//!
//! The nonlinear terms are Galerkin projections computed pseudo-spectrally
//! on alias-free grids, so the discrete nonlinearities keep the exact energy
//! identities `⟨v·∂ₓv, v⟩ = 0` and `⟨(u·∇)u, u⟩ = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseOperator, SeedSpec, StreamDomain};
use crate::spaces::{Field, Field1D, Field2D, Grid2D, SineGrid};

/// `√(π² − 1)`, the interval value of `η`.
pub fn eta_interval() -> f64 {
    (PI * PI - 1.0).sqrt()
}

/// `√(2π² − 1)`, the square-domain value of `η`.
pub fn eta_square() -> f64 {
    (2.0 * PI * PI - 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Heat,
    Burgers,
    Ns2d,
}

impl ModelKind {
    pub fn is_locally_monotone(self) -> bool {
        !matches!(self, ModelKind::Heat)
    }

    pub fn is_2d(self) -> bool {
        matches!(self, ModelKind::Ns2d)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Heat => "heat",
            ModelKind::Burgers => "burgers",
            ModelKind::Ns2d => "ns2d",
        }
    }
}

/// Additive constant in the local monotonicity bound of the Burgers drift.
///
/// With `w = v₁ − v₂`, `2⟨A(v₁) − A(v₂), w⟩ ≤ −2‖w‖²_V + 2‖v₂‖_{L⁴}‖w‖_{L⁴}‖w‖_V`
/// and `‖w‖⁴_{L⁴} ≤ ‖w‖³_H‖w‖_V`, so Young's inequality leaves
/// `0.343‖v₂‖^{8/3}_{L⁴}‖w‖²_H`, which is below `(0.01 + ‖v₂‖⁴_{L⁴})‖w‖²_H`.
pub const BURGERS_K2_TILDE: f64 = 0.01;

/// Deterministic time profile `f̃(t) ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FSchedule {
    Constant { value: f64 },
    /// Piecewise-linear interpolation of `(times, values)`; constant
    /// extrapolation outside the knots.
    Piecewise { times: Vec<f64>, values: Vec<f64> },
}

impl FSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            FSchedule::Constant { value } => *value,
            FSchedule::Piecewise { times, values } => {
                if times.is_empty() {
                    return 0.0;
                }
                if t <= times[0] {
                    return values[0];
                }
                for w in 0..times.len() - 1 {
                    if t <= times[w + 1] {
                        let s = (t - times[w]) / (times[w + 1] - times[w]);
                        return values[w] + s * (values[w + 1] - values[w]);
                    }
                }
                values[values.len() - 1]
            }
        }
    }

    /// `∫₀^T f̃(s) ds` by the trapezoid rule (exact for this family).
    pub fn integral(&self, horizon: f64) -> f64 {
        match self {
            FSchedule::Constant { value } => value * horizon,
            FSchedule::Piecewise { times, .. } => {
                let mut knots: Vec<f64> = std::iter::once(0.0)
                    .chain(times.iter().copied().filter(|t| *t > 0.0 && *t < horizon))
                    .chain(std::iter::once(horizon))
                    .collect();
                knots.dedup();
                knots
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.at(w[0]) + self.at(w[1])))
                    .sum()
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            FSchedule::Constant { value } => value.is_finite() && *value >= 0.0,
            FSchedule::Piecewise { times, values } => {
                times.len() == values.len()
                    && !times.is_empty()
                    && times.windows(2).all(|w| w[1] > w[0])
                    && values.iter().all(|v| v.is_finite() && *v >= 0.0)
                    && times.iter().all(|t| t.is_finite())
            }
        }
    }
}

/// Structural constants of the coefficient hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub alpha: f64,
    pub theta: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "K3")]
    pub k3: f64,
    #[serde(rename = "K4")]
    pub k4: f64,
    pub beta: f64,
    #[serde(rename = "K2_tilde")]
    pub k2_tilde: f64,
    #[serde(rename = "K4_tilde")]
    pub k4_tilde: f64,
    pub eta: f64,
    #[serde(rename = "C_B")]
    pub c_b: f64,
    pub f_schedule: FSchedule,
    /// Burkholder–Davis–Gundy constant.
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "T")]
    pub horizon_t: f64,
}

impl AssumptionConstants {
    /// Constants for the heat drift with additive noise of budget `c_b`.
    pub fn heat(c_b: f64, horizon_t: f64) -> Self {
        Self {
            alpha: 2.0,
            theta: 1.5,
            k2: 0.0,
            k3: 0.0,
            k4: 1.0,
            beta: 0.0,
            k2_tilde: 0.0,
            k4_tilde: 2.0,
            eta: eta_interval(),
            c_b,
            f_schedule: FSchedule::Constant { value: c_b },
            c1: 2.0,
            horizon_t,
        }
    }

    pub fn burgers(c_b: f64, horizon_t: f64) -> Self {
        Self {
            alpha: 2.0,
            theta: 1.5,
            k2: 0.0,
            k3: 0.0,
            k4: 1.0,
            beta: 2.0,
            // absorbs the small-field range where ‖v‖^{8/3}_{L⁴} exceeds ‖v‖⁴_{L⁴}
            k2_tilde: BURGERS_K2_TILDE,
            k4_tilde: 2.0,
            eta: eta_interval(),
            c_b,
            f_schedule: FSchedule::Constant { value: c_b },
            c1: 2.0,
            horizon_t,
        }
    }

    /// `forcing_dual_sq` is `‖f‖²_{V*}` of the steady forcing.
    pub fn ns2d(c_b: f64, viscosity: f64, forcing_dual_sq: f64, horizon_t: f64) -> Self {
        Self {
            alpha: 2.0,
            theta: viscosity,
            k2: 0.0,
            k3: 0.0,
            k4: 1.0,
            beta: 2.0,
            k2_tilde: 0.0,
            k4_tilde: (3.0 * viscosity * viscosity).max(6.0),
            eta: eta_square(),
            c_b,
            f_schedule: FSchedule::Constant {
                value: forcing_dual_sq / viscosity + c_b,
            },
            c1: 2.0,
            horizon_t,
        }
    }

    pub fn f_integral(&self) -> f64 {
        self.f_schedule.integral(self.horizon_t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.alpha > 1.0) {
            bad.push("alpha must exceed 1");
        }
        if !(self.theta > 0.0) {
            bad.push("theta must be positive");
        }
        if !(self.beta >= 0.0) {
            bad.push("beta must be nonnegative");
        }
        if !(self.eta > 0.0) {
            bad.push("eta must be positive");
        }
        if !(self.c_b > 0.0) {
            bad.push("C_B must be positive");
        }
        if !(self.c1 > 0.0) {
            bad.push("C1 must be positive");
        }
        if !(self.horizon_t > 0.0) {
            bad.push("T must be positive");
        }
        if !self.f_schedule.is_valid() {
            bad.push("f_schedule must be nonnegative and finite");
        }
        for (name, v) in [
            ("K2", self.k2),
            ("K3", self.k3),
            ("K4", self.k4),
            ("K2_tilde", self.k2_tilde),
            ("K4_tilde", self.k4_tilde),
        ] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite")));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(bad.join("; ")))
        }
    }
}

/// `ρ(v) = scale·‖v‖⁴_{L⁴}` with growth exponent `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalRho {
    pub scale: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub constants: AssumptionConstants,
    /// Coefficient in front of `Δ` (1 for heat and Burgers, `ν` for ns2d).
    pub viscosity: f64,
    /// Steady divergence-free forcing (ns2d only).
    pub forcing: Option<Field2D>,
    pub noise: NoiseOperator,
    pub local_rho: LocalRho,
}

impl ModelSpec {
    pub fn heat(noise: NoiseOperator, horizon_t: f64) -> Self {
        let constants = AssumptionConstants::heat(noise.c_b(), horizon_t);
        Self {
            kind: ModelKind::Heat,
            constants,
            viscosity: 1.0,
            forcing: None,
            noise,
            local_rho: LocalRho {
                scale: 0.0,
                beta: 0.0,
            },
        }
    }

    pub fn burgers(noise: NoiseOperator, horizon_t: f64) -> Self {
        let constants = AssumptionConstants::burgers(noise.c_b(), horizon_t);
        Self {
            kind: ModelKind::Burgers,
            constants,
            viscosity: 1.0,
            forcing: None,
            noise,
            local_rho: LocalRho {
                scale: 1.0,
                beta: 2.0,
            },
        }
    }

    /// Navier–Stokes on the torus. The forcing is projected onto
    /// divergence-free fields.
    pub fn ns2d(
        noise: NoiseOperator,
        viscosity: f64,
        forcing: Option<Field2D>,
        horizon_t: f64,
    ) -> Self {
        let forcing = forcing.map(|f| f.helmholtz_project());
        let dual = forcing.as_ref().map_or(0.0, |f| f.norm_v_dual_sq());
        let constants = AssumptionConstants::ns2d(noise.c_b(), viscosity, dual, horizon_t);
        Self {
            kind: ModelKind::Ns2d,
            constants,
            viscosity,
            forcing,
            noise,
            // Young's inequality with ‖u‖²_{L⁴} ≤ √2‖u‖_H‖u‖_V gives
            // 2⟨F(u)−F(v), u−v⟩ ≤ 2ν‖u−v‖²_V + 27/(64ν³)‖v‖⁴_{L⁴}‖u−v‖²_H.
            local_rho: LocalRho {
                scale: 27.0 / (64.0 * viscosity.powi(3)),
                beta: 2.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if !(self.viscosity > 0.0) {
            return Err(Error::Parameter("viscosity must be positive".into()));
        }
        if self.forcing.is_some() && self.kind != ModelKind::Ns2d {
            return Err(Error::Parameter("forcing is only supported for ns2d".into()));
        }
        Ok(())
    }

    /// `ρ(v)` for the locally monotone models; zero for heat.
    pub fn rho(&self, v: &Field) -> f64 {
        if self.local_rho.scale == 0.0 {
            return 0.0;
        }
        self.local_rho.scale * l4_norm_pow4(v)
    }

    /// Checks that a field matches the model's geometry.
    pub fn check_field(&self, v: &Field) -> Result<()> {
        match (self.kind.is_2d(), v) {
            (false, Field::D1(_)) | (true, Field::D2(_)) => {}
            _ => {
                return Err(Error::Geometry(format!(
                    "{} model cannot act on this field",
                    self.kind.name()
                )))
            }
        }
        self.noise.check_geometry(v)
    }
}

/// `‖v‖⁴_{L⁴}` on an alias-free grid.
pub fn l4_norm_pow4(v: &Field) -> f64 {
    match v {
        Field::D1(f) => {
            let grid = SineGrid::new(f.n_modes(), 4 * f.n_modes());
            let vals = grid.values(f);
            let q: Vec<f64> = vals.iter().map(|x| x.powi(4)).collect();
            grid.integrate(&q)
        }
        Field::D2(f) => f.norm_l4().powi(4),
    }
}

// ---------------------------------------------------------------------------
// Drift evaluation
// ---------------------------------------------------------------------------

enum NonlinearGrid {
    None,
    Sine(SineGrid),
    Torus(Grid2D),
}

/// Evaluates `A(t, v)` with cached transform tables for one geometry.
pub struct DriftEvaluator<'a> {
    model: &'a ModelSpec,
    grid: NonlinearGrid,
}

impl<'a> DriftEvaluator<'a> {
    /// `dealias` selects an alias-free product grid; otherwise the product
    /// is collocated on as many points as there are modes.
    pub fn new(model: &'a ModelSpec, like: &Field, dealias: bool) -> Result<Self> {
        model.check_field(like)?;
        let grid = match (model.kind, like) {
            (ModelKind::Heat, _) => NonlinearGrid::None,
            (ModelKind::Burgers, Field::D1(f)) => {
                let n = f.n_modes();
                NonlinearGrid::Sine(SineGrid::new(n, if dealias { 2 * n } else { n }))
            }
            (ModelKind::Ns2d, Field::D2(f)) => {
                let k = f.cutoff();
                if dealias {
                    NonlinearGrid::Torus(Grid2D::for_products(k))
                } else {
                    NonlinearGrid::Torus(Grid2D::new(2 * k + 1))
                }
            }
            _ => unreachable!("geometry checked above"),
        };
        if let (Some(f), Field::D2(u)) = (&model.forcing, like) {
            if f.cutoff() != u.cutoff() {
                return Err(Error::Geometry("forcing cutoff differs from field cutoff".into()));
            }
        }
        Ok(Self { model, grid })
    }

    /// Nonlinear part of the drift (zero for heat).
    pub fn nonlinear(&self, v: &Field) -> Field {
        match (&self.grid, v) {
            (NonlinearGrid::None, _) => v.zeros_like(),
            (NonlinearGrid::Sine(g), Field::D1(f)) => Field::D1(burgers_term(g, f)),
            (NonlinearGrid::Torus(g), Field::D2(u)) => Field::D2(ns_term(g, u)),
            _ => unreachable!("geometry checked at construction"),
        }
    }

    /// Time-dependent forcing `f_t` (steady here).
    pub fn forcing(&self, _t: f64) -> Option<&Field2D> {
        self.model.forcing.as_ref()
    }

    /// Full drift `A(t, v)`.
    pub fn eval(&self, t: f64, v: &Field) -> Field {
        let mut out = self.nonlinear(v);
        let mut lin = match v {
            Field::D1(f) => Field::D1(f.laplacian()),
            Field::D2(f) => Field::D2(f.laplacian()),
        };
        if self.model.viscosity != 1.0 {
            lin = lin.scale(self.model.viscosity);
        }
        out = out.axpy(1.0, &lin).expect("same geometry");
        if let Some(f) = self.forcing(t) {
            out = out.axpy(1.0, &Field::D2(f.clone())).expect("same geometry");
        }
        out
    }
}

/// `P_N(v·∂ₓv)` on the sine grid.
fn burgers_term(grid: &SineGrid, v: &Field1D) -> Field1D {
    let vals = grid.values(v);
    let dvals = grid.derivative_values(v);
    let prod: Vec<f64> = vals.iter().zip(&dvals).map(|(a, b)| a * b).collect();
    grid.project(&prod)
}

/// `−P_H[(u·∇)u]` truncated to the field's cutoff.
fn ns_term(grid: &Grid2D, u: &Field2D) -> Field2D {
    let k = u.cutoff();
    let deriv = |c: &[Complex64], axis: usize| -> Vec<Complex64> {
        c.iter()
            .enumerate()
            .map(|(i, z)| {
                let (kx, ky) = u.wavevector(i);
                let kk = if axis == 0 { kx } else { ky } as f64;
                z * Complex64::new(0.0, 2.0 * PI * kk)
            })
            .collect()
    };
    let ux = grid.to_physical(u.ux(), k);
    let uy = grid.to_physical(u.uy(), k);
    let dxux = grid.to_physical(&deriv(u.ux(), 0), k);
    let dyux = grid.to_physical(&deriv(u.ux(), 1), k);
    let dxuy = grid.to_physical(&deriv(u.uy(), 0), k);
    let dyuy = grid.to_physical(&deriv(u.uy(), 1), k);
    let n = ux.len();
    let mut ax = vec![0.0; n];
    let mut ay = vec![0.0; n];
    for i in 0..n {
        ax[i] = ux[i] * dxux[i] + uy[i] * dyux[i];
        ay[i] = ux[i] * dxuy[i] + uy[i] * dyuy[i];
    }
    let mut adv = Field2D::zeros(k);
    {
        let (cx, cy) = adv.components_mut();
        cx.copy_from_slice(&grid.to_spectral(&ax, k));
        cy.copy_from_slice(&grid.to_spectral(&ay, k));
    }
    adv.symmetrize();
    let mut out = adv.helmholtz_project();
    out.scale_modes(|_| -1.0);
    out
}

/// `A(t, v)` for a model.
pub fn drift_eval(m: &ModelSpec, t: f64, v: &Field, dealias: bool) -> Result<Field> {
    v.validate()?;
    if let Field::D2(u) = v {
        if !u.is_divergence_free() {
            return Err(Error::InvalidField("ns2d drift requires a divergence-free field".into()));
        }
    }
    Ok(DriftEvaluator::new(m, v, dealias)?.eval(t, v))
}

// ---------------------------------------------------------------------------
// Hypothesis audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Hemicontinuity of `λ ↦ ⟨A(v₁ + λv₂), v⟩`.
    H1,
    /// Monotonicity.
    H2,
    /// Local monotonicity with penalty `ρ(v₂)`.
    H2Local,
    /// Coercivity.
    H3,
    /// Boundedness of `A`.
    H4,
    /// Growth of `A`.
    H4Growth,
    /// Uniform Hilbert–Schmidt bound.
    H5,
    /// `ρ(v) ≤ C(1 + ‖v‖^α_V)(1 + ‖v‖^β_H)`.
    RhoGrowth,
    /// `‖v‖⁴_{L⁴} ≤ c_L‖v‖²_H‖v‖²_V`.
    L4Interpolation,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H2Local => "H2'",
            Hypothesis::H3 => "H3",
            Hypothesis::H4 => "H4",
            Hypothesis::H4Growth => "H4'",
            Hypothesis::H5 => "H5",
            Hypothesis::RhoGrowth => "rho_growth",
            Hypothesis::L4Interpolation => "l4_interpolation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub hypothesis: String,
    pub passed: bool,
    /// Smallest observed `rhs − lhs` (negative on violation).
    pub worst_slack: f64,
    pub witness: Option<SeedSpec>,
    pub violations: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub model: ModelKind,
    pub n_samples: usize,
    pub seed: u64,
    pub resolution: usize,
    pub hypotheses: Vec<HypothesisReport>,
    pub passed: bool,
}

/// Relative tolerance absorbing round-off in `rhs − lhs`.
const AUDIT_REL_TOL: f64 = 1e-9;
/// Residual tolerance for the hemicontinuity check.
pub const H1_TOL: f64 = 1e-6;

#[derive(Clone, Copy)]
struct Observation {
    hypothesis: Hypothesis,
    slack: f64,
    scale: f64,
}

impl Observation {
    fn new(hypothesis: Hypothesis, lhs: f64, rhs: f64) -> Self {
        Self {
            hypothesis,
            slack: rhs - lhs,
            scale: lhs.abs().max(rhs.abs()).max(1.0),
        }
    }

    fn violated(&self) -> bool {
        self.slack < -AUDIT_REL_TOL * self.scale || !self.slack.is_finite()
    }
}

fn random_field<R: Rng + ?Sized>(m: &ModelSpec, resolution: usize, rng: &mut R) -> Field {
    let amp = 10f64.powf(rng.random_range(-1.0..1.0));
    match m.kind {
        ModelKind::Ns2d => Field::D2(Field2D::random(resolution, 1.5, true, rng)).scale(amp),
        _ => Field::D1(Field1D::random(resolution, 1.5, rng)).scale(amp),
    }
}

/// Continuity residual: largest deviation of midpoint values from the
/// local quadratic interpolant on the 101-point grid over `[−1, 1]`,
/// relative to `1 + max|f|`.
fn continuity_residual(f: impl Fn(f64) -> f64) -> f64 {
    let n = 101;
    let h = 2.0 / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| f(-1.0 + i as f64 * h)).collect();
    let scale = 1.0 + grid.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let mut worst = 0.0_f64;
    for i in 0..n - 1 {
        let mid = f(-1.0 + (i as f64 + 0.5) * h);
        // three-point stencil (i-1, i, i+1) or (i, i+1, i+2) at the left edge
        let interp = if i == 0 {
            0.375 * grid[0] + 0.75 * grid[1] - 0.125 * grid[2]
        } else {
            -0.125 * grid[i - 1] + 0.75 * grid[i] + 0.375 * grid[i + 1]
        };
        worst = worst.max((mid - interp).abs());
    }
    worst / scale
}

fn audit_sample(m: &ModelSpec, resolution: usize, seed: SeedSpec) -> Vec<Observation> {
    let mut rng = seed.stream(StreamDomain::Audit);
    let v1 = random_field(m, resolution, &mut rng);
    let v2 = if seed.replicate % 4 == 3 {
        // adversarial near-parallel pair
        let d = random_field(m, resolution, &mut rng);
        let eps = 1e-3 * v1.norm_h_sq().sqrt() / d.norm_h_sq().sqrt().max(f64::MIN_POSITIVE);
        v1.axpy(eps, &d).expect("same geometry")
    } else {
        random_field(m, resolution, &mut rng)
    };
    let probe = random_field(m, resolution, &mut rng);
    let t = rng.random_range(0.0..=m.constants.horizon_t);
    audit_pair(m, t, &v1, &v2, &probe)
}

fn audit_pair(m: &ModelSpec, t: f64, v1: &Field, v2: &Field, probe: &Field) -> Vec<Observation> {
    let c = &m.constants;
    let drift = DriftEvaluator::new(m, v1, true).expect("model geometry");
    let a1 = drift.eval(t, v1);
    let a2 = drift.eval(t, v2);
    let w = v1.sub(v2).expect("same geometry");
    let w_h = w.norm_h_sq();
    let f_t = c.f_schedule.at(t);
    let mut obs = Vec::with_capacity(8);

    let residual = continuity_residual(|lam| {
        let x = v1.axpy(lam, v2).expect("same geometry");
        drift.eval(t, &x).inner_h(probe).expect("same geometry")
    });
    obs.push(Observation {
        hypothesis: Hypothesis::H1,
        slack: H1_TOL - residual,
        scale: 1.0,
    });

    let mono_lhs = 2.0 * a1.sub(&a2).expect("same geometry").inner_h(&w).expect("same geometry")
        + m.noise.hs_distance(v1, v2).powi(2);
    if m.kind.is_locally_monotone() {
        obs.push(Observation::new(
            Hypothesis::H2Local,
            mono_lhs,
            (c.k2_tilde + m.rho(v2)) * w_h,
        ));
    } else {
        obs.push(Observation::new(Hypothesis::H2, mono_lhs, c.k2 * w_h));
    }

    for v in [v1, v2] {
        let a = if std::ptr::eq(v, v1) { &a1 } else { &a2 };
        let hs = m.noise.gain_at(v).powi(2) * m.noise.trace();
        let h_sq = v.norm_h_sq();
        let v_sq = v.norm_v_sq();
        let v_norm = v_sq.sqrt();
        let coerc_lhs = 2.0 * a.inner_h(v).expect("same geometry") + hs;
        let coerc_rhs = f_t - c.theta * v_norm.powf(c.alpha) + c.k3 * h_sq;
        obs.push(Observation::new(Hypothesis::H3, coerc_lhs, coerc_rhs));

        let dual = a.norm_v_dual_sq().sqrt();
        if m.kind.is_locally_monotone() {
            let p = c.alpha / (c.alpha - 1.0);
            let rhs = (f_t + c.k4_tilde * v_norm.powf(c.alpha)) * (1.0 + h_sq.sqrt().powf(c.beta));
            obs.push(Observation::new(Hypothesis::H4Growth, dual.powf(p), rhs));

            let rho = m.rho(v);
            let growth_c = m.local_rho.scale * interpolation_constant(m.kind);
            let rhs = growth_c * (1.0 + v_norm.powf(c.alpha)) * (1.0 + h_sq.sqrt().powf(m.local_rho.beta));
            obs.push(Observation::new(Hypothesis::RhoGrowth, rho, rhs));

            obs.push(Observation::new(
                Hypothesis::L4Interpolation,
                l4_norm_pow4(v),
                interpolation_constant(m.kind) * h_sq * v_sq,
            ));
        } else {
            let rhs = f_t.powf((c.alpha - 1.0) / c.alpha) + c.k4 * v_norm.powf(c.alpha - 1.0);
            obs.push(Observation::new(Hypothesis::H4, dual, rhs));
        }

        obs.push(Observation::new(Hypothesis::H5, hs, c.c_b));
    }
    obs
}

/// Constant in `‖v‖⁴_{L⁴} ≤ c‖v‖²_H‖v‖²_V`.
pub fn interpolation_constant(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Ns2d => 2.0,
        _ => 4.0,
    }
}

/// Samples `n_samples` seeded field pairs and checks every hypothesis that
/// applies to the model.
pub fn audit_hypotheses(
    m: &ModelSpec,
    n_samples: usize,
    seed: u64,
    resolution: usize,
) -> Result<AuditReport> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }
    m.validate()?;
    let like = match m.kind {
        ModelKind::Ns2d => Field::D2(Field2D::zeros(resolution)),
        _ => Field::D1(Field1D::zeros(resolution)),
    };
    m.check_field(&like)?;

    let per_sample: Vec<(SeedSpec, Vec<Observation>)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = SeedSpec::new(seed, i, 0);
            (s, audit_sample(m, resolution, s))
        })
        .collect();

    let mut order: Vec<Hypothesis> = Vec::new();
    for (_, obs) in &per_sample {
        for o in obs {
            if !order.contains(&o.hypothesis) {
                order.push(o.hypothesis);
            }
        }
    }
    let hypotheses: Vec<HypothesisReport> = order
        .into_iter()
        .map(|h| {
            let mut worst = f64::INFINITY;
            let mut witness = None;
            let mut violations = 0;
            let mut checked = 0;
            for (s, obs) in &per_sample {
                for o in obs.iter().filter(|o| o.hypothesis == h) {
                    checked += 1;
                    if o.violated() {
                        violations += 1;
                    }
                    if o.slack < worst || witness.is_none() {
                        worst = o.slack;
                        witness = Some(*s);
                    }
                }
            }
            HypothesisReport {
                hypothesis: h.label().to_string(),
                passed: violations == 0,
                worst_slack: worst,
                witness,
                violations,
                checked,
            }
        })
        .collect();
    let passed = hypotheses.iter().all(|h| h.passed);
    Ok(AuditReport {
        model: m.kind,
        n_samples,
        seed,
        resolution,
        hypotheses,
        passed,
    })
}

/// Monotone-difference terms for a single explicit pair; exposed for tests
/// and diagnostics. Returns `(2⟨A(v₁)−A(v₂), v₁−v₂⟩, ‖B(v₁)−B(v₂)‖²)`.
pub fn monotonicity_terms(m: &ModelSpec, v1: &Field, v2: &Field) -> Result<(f64, f64)> {
    let drift = DriftEvaluator::new(m, v1, true)?;
    let w = v1.sub(v2)?;
    let diff = drift.eval(0.0, v1).sub(&drift.eval(0.0, v2))?;
    Ok((2.0 * diff.inner_h(&w)?, m.noise.hs_distance(v1, v2).powi(2)))
}

// ---------------------------------------------------------------------------
// T₁ feasibility
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `θη − K₃`
    pub theta_eta_minus_k3: f64,
    pub margin_positive: bool,
    pub alpha_is_two: bool,
    /// Admissible `c` lies in `(0, c_max)`.
    pub c_max: f64,
    pub f_integral: f64,
    pub f_integrable: bool,
    pub feasible: bool,
}

pub fn t1_feasibility(c: &AssumptionConstants) -> FeasibilityReport {
    let margin = c.theta * c.eta - c.k3;
    let margin_positive = margin > 0.0;
    let alpha_is_two = c.alpha == 2.0;
    let c_max = if c.theta * c.eta > 0.0 {
        1.0 - c.k3 / (c.theta * c.eta)
    } else {
        f64::NAN
    };
    let f_integral = c.f_integral();
    let f_integrable = c.f_schedule.is_valid() && f_integral.is_finite();
    FeasibilityReport {
        theta_eta_minus_k3: margin,
        margin_positive,
        alpha_is_two,
        c_max,
        f_integral,
        f_integrable,
        feasible: margin_positive && alpha_is_two && f_integrable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn additive(n_w: usize) -> NoiseOperator {
        NoiseOperator::power_law(n_w, 1.0, 1.0, None).unwrap()
    }

    #[test]
    fn heat_drift_on_eigenfunction() {
        let m = ModelSpec::heat(additive(4), 1.0);
        let v: Field = Field1D::sine(16, 1, 1.0).into();
        let a = drift_eval(&m, 0.0, &v, true).unwrap();
        let expect = v.scale(-PI * PI);
        assert!(a.sub(&expect).unwrap().norm_h_sq().sqrt() < 1e-12);
    }

    #[test]
    fn burgers_drift_on_second_mode() {
        let m = ModelSpec::burgers(additive(4), 1.0);
        let n = 16;
        let v: Field = Field1D::sine(n, 2, 1.0).into();
        let a = drift_eval(&m, 0.0, &v, true).unwrap();
        // −4π² sin(2πx) + π sin(4πx)
        let expect = Field1D::sine(n, 2, -4.0 * PI * PI)
            .coeffs()
            .iter()
            .zip(Field1D::sine(n, 4, PI).coeffs())
            .map(|(a, b)| a + b)
            .collect::<Vec<_>>();
        for (got, want) in a.as_1d().unwrap().coeffs().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-11, "{got} vs {want}");
        }
        // pointwise check of the nonlinear term against the product formula
        let f = a.as_1d().unwrap();
        for x in [0.1, 0.33, 0.7] {
            let want = -4.0 * PI * PI * (2.0 * PI * x).sin() + PI * (4.0 * PI * x).sin();
            assert!((f.eval(x) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn taylor_green_nonlinearity_vanishes() {
        let nu = 0.05;
        let m = ModelSpec::ns2d(NoiseOperator::single_mode(2, 1.0).unwrap(), nu, None, 1.0);
        let tg = Field2D::taylor_green(8, 1.0);
        let a = drift_eval(&m, 0.0, &tg.clone().into(), true).unwrap();
        let expect = Field::D2(tg.laplacian()).scale(nu);
        assert!(a.sub(&expect).unwrap().norm_h_sq().sqrt() < 1e-10);
    }

    #[test]
    fn nonlinear_terms_are_energy_neutral() {
        let mb = ModelSpec::burgers(additive(4), 1.0);
        let mn = ModelSpec::ns2d(NoiseOperator::single_mode(2, 1.0).unwrap(), 0.1, None, 1.0);
        for i in 0..20 {
            let mut rng = SeedSpec::new(77, i, 0).stream(StreamDomain::Synthetic);
            let v: Field = Field1D::random(24, 1.0, &mut rng).into();
            let e = DriftEvaluator::new(&mb, &v, true).unwrap();
            assert!(e.nonlinear(&v).inner_h(&v).unwrap().abs() < 1e-10);

            let u: Field = Field2D::random(6, 1.0, true, &mut rng).into();
            let e = DriftEvaluator::new(&mn, &u, true).unwrap();
            assert!(e.nonlinear(&u).inner_h(&u).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn dealiased_and_collocated_products_agree_on_low_modes() {
        let m = ModelSpec::burgers(additive(4), 1.0);
        let n = 30;
        let mut rng = SeedSpec::new(1, 2, 3).stream(StreamDomain::Synthetic);
        let mut f = Field1D::random(n, 1.0, &mut rng);
        for c in f.coeffs_mut()[n / 3..].iter_mut() {
            *c = 0.0;
        }
        let v: Field = f.into();
        let a = DriftEvaluator::new(&m, &v, true).unwrap().nonlinear(&v);
        let b = DriftEvaluator::new(&m, &v, false).unwrap().nonlinear(&v);
        assert!(a.sub(&b).unwrap().norm_h_sq().sqrt() < 1e-10);
    }

    #[test]
    fn heat_monotonicity_slack_is_twice_v_norm() {
        let m = ModelSpec::heat(additive(4), 1.0);
        let mut rng = SeedSpec::new(4, 0, 0).stream(StreamDomain::Synthetic);
        let v1: Field = Field1D::random(12, 1.5, &mut rng).into();
        let v2: Field = Field1D::random(12, 1.5, &mut rng).into();
        let (drift, noise) = monotonicity_terms(&m, &v1, &v2).unwrap();
        let w = v1.sub(&v2).unwrap();
        assert_eq!(noise, 0.0);
        assert_relative_eq!(drift, -2.0 * w.norm_v_sq(), epsilon = 1e-10 * w.norm_v_sq());
        let (d0, n0) = monotonicity_terms(&m, &v1, &v1).unwrap();
        assert_eq!((d0, n0), (0.0, 0.0));
    }

    #[test]
    fn burgers_coercivity_on_first_mode() {
        let m = ModelSpec::burgers(additive(4), 1.0);
        let v: Field = Field1D::sine(16, 1, 1.0).into();
        let a = drift_eval(&m, 0.0, &v, true).unwrap();
        let lhs = 2.0 * a.inner_h(&v).unwrap() + m.noise.trace();
        assert_relative_eq!(lhs, -2.0 * v.norm_v_sq() + 1.0, epsilon = 1e-10);
        assert!(lhs <= 1.0 - 1.5 * v.norm_v_sq());
    }

    #[test]
    fn audits_pass_for_reference_models() {
        let heat = ModelSpec::heat(additive(8), 1.0);
        let r = audit_hypotheses(&heat, 40, 9, 16).unwrap();
        assert!(r.passed, "{r:#?}");
        let burgers = ModelSpec::burgers(additive(8), 1.0);
        let r = audit_hypotheses(&burgers, 40, 9, 16).unwrap();
        assert!(r.passed, "{r:#?}");
        let ns = ModelSpec::ns2d(NoiseOperator::power_law(8, 1.0, 0.01, None).unwrap(), 0.1, None, 1.0);
        let r = audit_hypotheses(&ns, 16, 9, 6).unwrap();
        assert!(r.passed, "{r:#?}");
    }

    #[test]
    fn audit_is_deterministic() {
        let m = ModelSpec::burgers(additive(8), 1.0);
        let a = audit_hypotheses(&m, 12, 5, 12).unwrap();
        let b = audit_hypotheses(&m, 12, 5, 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn audit_flags_wrong_constants() {
        let mut m = ModelSpec::heat(additive(8), 1.0);
        // θ larger than the true dissipation 2 breaks coercivity for large fields
        m.constants.theta = 3.0;
        let r = audit_hypotheses(&m, 20, 1, 16).unwrap();
        let h3 = r.hypotheses.iter().find(|h| h.hypothesis == "H3").unwrap();
        assert!(!h3.passed && h3.worst_slack < 0.0 && h3.witness.is_some());
        assert!(audit_hypotheses(&m, 0, 1, 16).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let mut c = AssumptionConstants::burgers(1.0, 1.0);
        let r = t1_feasibility(&c);
        assert!(r.feasible);
        assert_relative_eq!(r.c_max, 1.0);

        c.theta = 1.0;
        c.eta = 1.0;
        c.k3 = 2.0;
        let r = t1_feasibility(&c);
        assert!(!r.feasible);
        assert_relative_eq!(r.theta_eta_minus_k3, -1.0);

        let mut c = AssumptionConstants::burgers(1.0, 1.0);
        c.alpha = 3.0;
        assert!(!t1_feasibility(&c).feasible);
    }

    #[test]
    fn piecewise_schedule_integral() {
        let f = FSchedule::Piecewise {
            times: vec![0.0, 0.5, 1.0],
            values: vec![0.0, 1.0, 1.0],
        };
        assert_relative_eq!(f.integral(1.0), 0.75, epsilon = 1e-15);
        assert_relative_eq!(f.at(0.25), 0.5);
    }
}
