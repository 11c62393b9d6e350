//! Semi-implicit Euler–Maruyama time stepping.
//!
//! One step from `v` at time `t` reads, mode by mode,
//!
//! ```text
//! X_new = (v + dt·N(v) + dt·f + B(v)(ΔW + h·dt)) / (1 + dt·ν·λ_k)
//! ```
//!
//! where `N` is the nonlinear part of the drift, `f` the forcing, `λ_k` the
//! eigenvalue of `−Δ`, and `h` an optional deterministic shift.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::girsanov::ShiftFunction;
use crate::noise::{apply_noise, increment, SeedSpec};
use crate::problem::{DriftEvaluator, ModelSpec};
use crate::spaces::Field;
use crate::stats::trapezoid_uniform;

/// Time discretisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    /// Alias-free products when `true`, plain collocation otherwise.
    #[serde(default = "default_true")]
    pub dealias: bool,
    /// Keep every `snapshot_stride`-th state (the initial and final states
    /// are always kept). Per-step norms are kept regardless.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            dealias: true,
            snapshot_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            ..Self::default()
        }
    }

    /// Keep only the initial and final state.
    pub fn endpoints_only(mut self) -> Self {
        self.snapshot_stride = usize::MAX;
        self
    }

    /// Number of steps `T/dt`, which must be an integer.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Parameter(format!("T must be positive, got {}", self.t_final)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Parameter("snapshot_stride must be at least 1".into()));
        }
        let ratio = self.t_final / self.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Parameter(format!(
                "T/dt = {ratio} is not an integer number of steps"
            )));
        }
        Ok(n as usize)
    }

    /// Grid time of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// A simulated path with its running functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `t₀ = 0 < t₁ < … < t_M = T`.
    pub times: Vec<f64>,
    /// `‖X_{t_k}‖_H` for every grid point.
    pub h_norms: Vec<f64>,
    /// `‖X_{t_k}‖_V` for every grid point.
    pub v_norms: Vec<f64>,
    /// Running trapezoid value of `∫₀^{t_k} ‖X_s‖²_V ds`.
    pub v_energy: Vec<f64>,
    /// Running `max_{j ≤ k} ‖X_{t_j}‖_H`.
    pub sup_h_norm: Vec<f64>,
    /// Stored states and their step indices.
    pub states: Vec<Field>,
    pub state_steps: Vec<usize>,
}

impl Trajectory {
    pub(crate) fn start(x0: &Field, capacity: usize) -> Self {
        let h = x0.norm_h_sq().sqrt();
        let mut t = Self {
            times: Vec::with_capacity(capacity + 1),
            h_norms: Vec::with_capacity(capacity + 1),
            v_norms: Vec::with_capacity(capacity + 1),
            v_energy: Vec::with_capacity(capacity + 1),
            sup_h_norm: Vec::with_capacity(capacity + 1),
            states: vec![x0.clone()],
            state_steps: vec![0],
        };
        t.times.push(0.0);
        t.h_norms.push(h);
        t.v_norms.push(x0.norm_v_sq().sqrt());
        t.v_energy.push(0.0);
        t.sup_h_norm.push(h);
        t
    }

    pub(crate) fn push_state(&mut self, step: usize, state: &Field) {
        self.states.push(state.clone());
        self.state_steps.push(step);
    }

    pub(crate) fn record(&mut self, time: f64, dt: f64, state: &Field) {
        let h = state.norm_h_sq().sqrt();
        let v = state.norm_v_sq().sqrt();
        let prev_v = *self.v_norms.last().expect("initialised");
        let e = self.v_energy.last().expect("initialised") + 0.5 * dt * (prev_v * prev_v + v * v);
        let sup = self.sup_h_norm.last().expect("initialised").max(h);
        self.times.push(time);
        self.h_norms.push(h);
        self.v_norms.push(v);
        self.v_energy.push(e);
        self.sup_h_norm.push(sup);
    }

    /// Builds a trajectory from states on a uniform grid of step `dt`
    /// (every state stored).
    pub fn from_states(states: Vec<Field>, dt: f64) -> Self {
        let mut it = states.into_iter();
        let first = it.next().expect("at least one state");
        let mut t = Self::start(&first, 0);
        for (k, s) in it.enumerate() {
            t.record((k + 1) as f64 * dt, dt, &s);
            t.push_state(k + 1, &s);
        }
        t
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn initial_state(&self) -> &Field {
        &self.states[0]
    }

    pub fn final_state(&self) -> &Field {
        self.states.last().expect("at least the initial state")
    }

    /// `∫₀^T ‖X_s‖²_V ds`.
    pub fn total_v_energy(&self) -> f64 {
        *self.v_energy.last().expect("initialised")
    }

    /// `sup_t ‖X_t‖_H`.
    pub fn sup_h(&self) -> f64 {
        *self.sup_h_norm.last().expect("initialised")
    }

    /// Recomputes `∫‖X‖²_V` from the stored per-step norms.
    pub fn recompute_v_energy(&self) -> f64 {
        let sq: Vec<f64> = self.v_norms.iter().map(|v| v * v).collect();
        let dt = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 0.0 };
        trapezoid_uniform(&sq, dt)
    }

    /// CSV with columns `time,norm_h,norm_v`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,norm_h,norm_v")?;
        for ((t, h), v) in self.times.iter().zip(&self.h_norms).zip(&self.v_norms) {
            writeln!(out, "{t:.12e},{h:.17e},{v:.17e}")?;
        }
        Ok(())
    }

    /// Raw little-endian dump: for each stored snapshot the step index (u64)
    /// followed by the coefficients (f64; real and imaginary parts
    /// interleaved for the torus).
    pub fn write_state_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, s) in self.state_steps.iter().zip(&self.states) {
            out.write_all(&(*k as u64).to_le_bytes())?;
            out.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Reusable stepping context for one model and discretisation.
pub struct Stepper<'a> {
    model: &'a ModelSpec,
    cfg: &'a SolverConfig,
    drift: DriftEvaluator<'a>,
    noisy: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ModelSpec, cfg: &'a SolverConfig, like: &Field) -> Result<Self> {
        model.validate()?;
        cfg.n_steps()?;
        let drift = DriftEvaluator::new(model, like, cfg.dealias)?;
        Ok(Self {
            model,
            cfg,
            drift,
            noisy: model.noise.trace() > 0.0,
        })
    }

    /// Advances `v` from `t` by one step. `shift` is `h` on `[t, t + dt)`.
    /// `step_index` and `replicate` label a divergence error.
    pub fn advance(
        &self,
        v: &Field,
        t: f64,
        dw: &[f64],
        shift: Option<&[f64]>,
        step_index: usize,
        replicate: u64,
    ) -> Result<Field> {
        let dt = self.cfg.dt;
        let n = self.model.noise.truncation();
        if dw.len() != n {
            return Err(Error::Parameter(format!(
                "increment has {} coordinates, noise has {n}",
                dw.len()
            )));
        }
        let mut rhs = v.axpy(dt, &self.drift.nonlinear(v))?;
        if let Some(f) = self.drift.forcing(t) {
            rhs = rhs.axpy(dt, &Field::D2(f.clone()))?;
        }
        let mut w: Vec<f64> = dw.to_vec();
        if let Some(h) = shift {
            if h.len() != n {
                return Err(Error::Parameter(format!(
                    "shift has {} coordinates, noise has {n}",
                    h.len()
                )));
            }
            for (wi, hi) in w.iter_mut().zip(h) {
                *wi += hi * dt;
            }
        }
        if self.noisy {
            rhs = rhs.axpy(1.0, &apply_noise(&self.model.noise, v, &w)?)?;
        }
        let nu = self.model.viscosity;
        rhs.scale_by_eigenvalue(|lam| 1.0 / (1.0 + dt * nu * lam));
        if !rhs.is_finite() {
            return Err(Error::Divergence {
                step: step_index,
                replicate,
            });
        }
        Ok(rhs)
    }
}

/// One step of the scheme.
pub fn step(
    m: &ModelSpec,
    cfg: &SolverConfig,
    v: &Field,
    t: f64,
    dw: &[f64],
    shift: Option<&[f64]>,
) -> Result<Field> {
    v.validate()?;
    Stepper::new(m, cfg, v)?.advance(v, t, dw, shift, 0, 0)
}

/// Integrates from `x0` over `[0, T]` with increments drawn from the
/// stream `(seed.experiment_seed, seed.replicate, k)` for step `k`.
pub fn solve(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    seed: SeedSpec,
    shift: Option<&ShiftFunction>,
) -> Result<Trajectory> {
    x0.validate()?;
    let n = cfg.n_steps()?;
    let stepper = Stepper::new(m, cfg, x0)?;
    let n_w = m.noise.truncation();
    let mut traj = Trajectory::start(x0, n);
    let mut v = x0.clone();
    for k in 0..n {
        let t = cfg.time(k);
        let dw = increment(n_w, cfg.dt, seed.with_step(k as u64));
        let h = shift.map(|s| s.on_interval(k, cfg.dt, n_w));
        v = stepper.advance(&v, t, &dw, h.as_deref(), k, seed.replicate)?;
        traj.record(cfg.time(k + 1), cfg.dt, &v);
        if (k + 1) % cfg.snapshot_stride == 0 || k + 1 == n {
            traj.push_state(k + 1, &v);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseOperator;
    use crate::spaces::{Field1D, Field2D};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn silent(n_w: usize) -> NoiseOperator {
        NoiseOperator::new(vec![0.0; n_w], None, 1.0).unwrap()
    }

    #[test]
    fn step_count_must_be_integral() {
        assert_eq!(SolverConfig::new(1e-3, 1.0).n_steps().unwrap(), 1000);
        assert_eq!(SolverConfig::new(0.1, 1.0).n_steps().unwrap(), 10);
        assert!(SolverConfig::new(0.3, 1.0).n_steps().is_err());
        assert!(SolverConfig::new(-0.1, 1.0).n_steps().is_err());
    }

    #[test]
    fn implicit_step_on_first_mode() {
        let m = ModelSpec::heat(silent(4), 1.0);
        let cfg = SolverConfig::new(0.01, 1.0);
        let v: Field = Field1D::basis(8, 1).into();
        let out = step(&m, &cfg, &v, 0.0, &[0.0; 4], None).unwrap();
        let c = out.as_1d().unwrap().coeffs()[0];
        assert_relative_eq!(c, 1.0 / (1.0 + PI * PI * 0.01), epsilon = 1e-15);
    }

    #[test]
    fn ten_coarse_steps_of_heat() {
        let m = ModelSpec::heat(silent(4), 1.0);
        let cfg = SolverConfig::new(0.1, 1.0);
        let x0: Field = Field1D::basis(8, 1).into();
        let tr = solve(&m, &cfg, &x0, SeedSpec::new(0, 0, 0), None).unwrap();
        let c = tr.final_state().as_1d().unwrap().coeffs()[0];
        assert_relative_eq!(c, (1.0 + 0.1 * PI * PI).powi(-10), epsilon = 1e-14);
        // exact value of (1 + 0.1π²)^{-10}
        assert!((c - 0.0010425761721485818).abs() < 1e-15);
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let m = ModelSpec::burgers(silent(4), 1.0);
        let cfg = SolverConfig::new(0.01, 1.0);
        let x0: Field = Field1D::zeros(16).into();
        let tr = solve(&m, &cfg, &x0, SeedSpec::new(3, 0, 0), None).unwrap();
        assert!(tr.states.iter().all(|s| s.norm_h_sq() == 0.0));
        assert_eq!(tr.total_v_energy(), 0.0);
        assert_eq!(tr.states.len(), 101);
        assert_eq!(tr.initial_state(), &x0);
    }

    #[test]
    fn burgers_energy_strictly_decreases() {
        let m = ModelSpec::burgers(silent(4), 0.2);
        let cfg = SolverConfig::new(1e-3, 0.2);
        let x0: Field = Field1D::sine(32, 1, 1.0).into();
        let tr = solve(&m, &cfg, &x0, SeedSpec::new(0, 0, 0), None).unwrap();
        assert!(tr.h_norms.windows(2).all(|w| w[1] < w[0]));

        // dt/16 reference agrees at first order
        let fine = SolverConfig::new(1e-3 / 16.0, 0.2).endpoints_only();
        let tf = solve(&m, &fine, &x0, SeedSpec::new(0, 0, 0), None).unwrap();
        let gap = tr.final_state().sub(tf.final_state()).unwrap().norm_h_sq().sqrt();
        assert!(gap < 1e-2 * tf.sup_h(), "gap {gap}");
    }

    #[test]
    fn v_energy_matches_post_hoc_quadrature() {
        let noise = NoiseOperator::power_law(8, 1.0, 1.0, None).unwrap();
        let m = ModelSpec::burgers(noise, 0.5);
        let cfg = SolverConfig::new(1e-3, 0.5);
        let x0: Field = Field1D::sine(16, 1, 0.5).into();
        let tr = solve(&m, &cfg, &x0, SeedSpec::new(11, 2, 0), None).unwrap();
        let e = tr.total_v_energy();
        assert!((e - tr.recompute_v_energy()).abs() <= 1e-12 * e.max(1.0));
        assert!(tr.v_energy.windows(2).all(|w| w[1] >= w[0]));
        assert!(tr.sup_h_norm.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn solve_is_deterministic_and_seed_sensitive() {
        let noise = NoiseOperator::power_law(8, 1.0, 1.0, None).unwrap();
        let m = ModelSpec::heat(noise, 0.1);
        let cfg = SolverConfig::new(1e-3, 0.1);
        let x0: Field = Field1D::zeros(16).into();
        let a = solve(&m, &cfg, &x0, SeedSpec::new(5, 1, 0), None).unwrap();
        let b = solve(&m, &cfg, &x0, SeedSpec::new(5, 1, 0), None).unwrap();
        let c = solve(&m, &cfg, &x0, SeedSpec::new(5, 2, 0), None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.final_state(), c.final_state());
    }

    #[test]
    fn snapshot_stride_keeps_endpoints() {
        let m = ModelSpec::heat(silent(2), 1.0);
        let mut cfg = SolverConfig::new(0.1, 1.0);
        cfg.snapshot_stride = 3;
        let x0: Field = Field1D::basis(4, 1).into();
        let tr = solve(&m, &cfg, &x0, SeedSpec::new(0, 0, 0), None).unwrap();
        assert_eq!(tr.state_steps, vec![0, 3, 6, 9, 10]);
        assert_eq!(tr.times.len(), 11);
    }

    #[test]
    fn divergence_reports_step() {
        // an explicit nonlinearity with a huge step blows up
        let m = ModelSpec::burgers(silent(2), 1000.0);
        let cfg = SolverConfig::new(1.0, 1000.0);
        let x0: Field = Field1D::new((1..=16).map(|k| 1e3 / k as f64).collect()).unwrap().into();
        match solve(&m, &cfg, &x0, SeedSpec::new(0, 7, 0), None) {
            Err(Error::Divergence { replicate, .. }) => assert_eq!(replicate, 7),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn csv_and_dump_shapes() {
        let m = ModelSpec::heat(silent(2), 1.0);
        let cfg = SolverConfig::new(0.5, 1.0);
        let x0: Field = Field1D::basis(4, 1).into();
        let tr = solve(&m, &cfg, &x0, SeedSpec::new(0, 0, 0), None).unwrap();
        let mut csv = Vec::new();
        tr.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("time,norm_h,norm_v\n"));
        let mut dump = Vec::new();
        tr.write_state_dump(&mut dump).unwrap();
        assert_eq!(dump.len(), 3 * (8 + 4 * 8));
    }

    #[test]
    fn taylor_green_decay_short_run() {
        let nu = 0.05;
        let m = ModelSpec::ns2d(NoiseOperator::new(vec![0.0; 2], None, 1.0).unwrap(), nu, None, 0.1);
        let cfg = SolverConfig::new(1e-3, 0.1).endpoints_only();
        let x0: Field = Field2D::taylor_green(8, 1.0).into();
        let tr = solve(&m, &cfg, &x0, SeedSpec::new(0, 0, 0), None).unwrap();
        let ratio = tr.final_state().norm_h_sq().sqrt() / x0.norm_h_sq().sqrt();
        let exact = (-8.0 * PI * PI * nu * 0.1).exp();
        assert!((ratio / exact - 1.0).abs() < 0.01, "{ratio} vs {exact}");
    }
}
