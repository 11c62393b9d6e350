//! JSON experiment configuration and report generation.
//!
//! A single JSON document describes the model, the discretisation, the
//! noise, the shift, the functionals and the statistical grids. Every report
//! echoes the fully resolved configuration together with its SHA-256 hash;
//! the wall-clock time is confined to the `timestamp` key so that reruns are
//! byte-identical elsewhere.

use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::concentration::{
    bobkov_gotze_check, exp_moment_from_energies, gaussian_tail_check, moment_report, simulate_ensemble,
    t2_chain_from_pairs, Ensemble, FunctionalSpec, Verdict,
};
use crate::constants::{
    admissible_ranges, ccr_constant, gaussian_moment_pair, t1_constant, t2_constant, T1ConstantQuery,
    T2ConstantQuery,
};
use crate::error::{Error, Result};
use crate::girsanov::{contraction_from_pairs, coupled_ensemble, normalization_report, shift_entropy, ShiftFunction};
use crate::noise::{Clamp, NoiseOperator, SeedSpec, StreamDomain};
use crate::problem::{
    audit_hypotheses, interpolation_constant, l4_norm_pow4, t1_feasibility, DriftEvaluator, FSchedule, ModelKind,
    ModelSpec,
};
use crate::solver::{solve, SolverConfig};
use crate::spaces::{poincare_audit, Field, Field1D, Field2D, Grid2D, SineGrid};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero,
    /// `amplitude·sin(mode·πx)` on the interval.
    Sine { mode: usize, amplitude: f64 },
    /// Taylor–Green vortex on the torus.
    TaylorGreen { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    /// `f = amplitude·(sin(2π·mode·y), 0)`.
    Kolmogorov { mode: usize, amplitude: f64 },
}

/// Optional overrides of the model's default structural constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(rename = "K2", skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(rename = "K3", skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
    #[serde(rename = "K4", skip_serializing_if = "Option::is_none")]
    pub k4: Option<f64>,
    #[serde(rename = "K2_tilde", skip_serializing_if = "Option::is_none")]
    pub k2_tilde: Option<f64>,
    #[serde(rename = "K4_tilde", skip_serializing_if = "Option::is_none")]
    pub k4_tilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(rename = "C1", skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_schedule: Option<FSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of sine modes (interval models).
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// Spectral cutoff `K` (torus model).
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    /// `ν` for ns2d; ignored by the interval models.
    #[serde(default = "default_viscosity")]
    pub viscosity: f64,
    #[serde(default)]
    pub forcing: Option<ForcingConfig>,
    #[serde(default = "default_x0")]
    pub x0: InitialCondition,
    #[serde(default)]
    pub constants: ConstantOverrides,
}

fn default_n_modes() -> usize {
    32
}
fn default_cutoff() -> usize {
    16
}
fn default_viscosity() -> f64 {
    0.1
}
fn default_x0() -> InitialCondition {
    InitialCondition::Zero
}

/// Gains: `"k^-a"` (power law), `"single_mode"`, or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsConfig {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_gains")]
    pub gains: GainsConfig,
    #[serde(rename = "C_B")]
    pub c_b: f64,
    #[serde(rename = "N_W")]
    pub n_w: usize,
    /// `[g_min, g_max]` or `null` for additive noise.
    #[serde(default)]
    pub clamp: Option<[f64; 2]>,
}

fn default_gains() -> GainsConfig {
    GainsConfig::Named("k^-1".into())
}

impl NoiseConfig {
    pub fn build(&self) -> Result<NoiseOperator> {
        let clamp = self.clamp.map(|[g_min, g_max]| Clamp { g_min, g_max });
        match &self.gains {
            GainsConfig::Explicit(g) => {
                if g.len() != self.n_w {
                    return Err(Error::Config(format!(
                        "noise.gains has {} entries but N_W = {}",
                        g.len(),
                        self.n_w
                    )));
                }
                NoiseOperator::new(g.clone(), clamp, self.c_b)
            }
            GainsConfig::Named(name) if name == "single_mode" => {
                if clamp.is_some() {
                    return Err(Error::Config("single_mode gains take no clamp".into()));
                }
                NoiseOperator::single_mode(self.n_w, self.c_b)
            }
            GainsConfig::Named(name) => {
                let exponent = name
                    .strip_prefix("k^-")
                    .and_then(|e| e.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "noise.gains must be \"k^-<a>\", \"single_mode\" or a list, got {name:?}"
                        ))
                    })?;
                NoiseOperator::power_law(self.n_w, exponent, self.c_b, clamp)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub h: ShiftFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_audit_samples")]
    pub n_samples: usize,
    /// Modes (interval) or cutoff (torus) of the sampled fields.
    #[serde(default = "default_audit_resolution")]
    pub resolution: usize,
}

fn default_audit_samples() -> usize {
    200
}
fn default_audit_resolution() -> usize {
    16
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            n_samples: default_audit_samples(),
            resolution: default_audit_resolution(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub noise: NoiseConfig,
    #[serde(default = "default_shift")]
    pub shift: ShiftConfig,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<FunctionalSpec>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub experiment_seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// `c` of the exponential estimate.
    #[serde(default = "default_c")]
    pub c: f64,
    /// `λ₀`; defaults to half the smaller admissible bound.
    #[serde(default)]
    pub lambda0: Option<f64>,
    /// Moment order for `simulate`.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Number of per-replicate trajectory CSVs to write.
    #[serde(default = "default_trajectory_files")]
    pub trajectory_files: usize,
    /// Also write raw binary state dumps alongside trajectory CSVs.
    #[serde(default)]
    pub dump_states: bool,
    #[serde(default)]
    pub audit: AuditConfig,
    /// Random fields per inequality suite.
    #[serde(default = "default_inequality_samples")]
    pub inequality_samples: usize,
}

fn default_shift() -> ShiftConfig {
    ShiftConfig {
        h: ShiftFunction::unit_first_mode(),
    }
}
fn default_functionals() -> Vec<FunctionalSpec> {
    vec![
        FunctionalSpec::l2_v_path_norm(),
        FunctionalSpec::sup_h_norm(),
        FunctionalSpec::terminal_h_norm(),
    ]
}
fn default_lambda_grid() -> Vec<f64> {
    vec![-1.0, -0.5, -0.1, 0.1, 0.5, 1.0]
}
fn default_r_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.5, 1.0]
}
fn default_replicates() -> usize {
    256
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}
fn default_c() -> f64 {
    0.5
}
fn default_p() -> f64 {
    2.0
}
fn default_trajectory_files() -> usize {
    4
}
fn default_inequality_samples() -> usize {
    1000
}

impl ExperimentConfig {
    /// Parses a JSON document, reporting every offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Semantic validation; collects all problems into one error.
    pub fn check(&self) -> Result<()> {
        let mut bad = Vec::new();
        if let Err(e) = self.solver.n_steps() {
            bad.push(format!("solver: {e}"));
        }
        if self.replicates < 2 {
            bad.push("replicates: must be at least 2".to_string());
        }
        match self.model.kind {
            ModelKind::Ns2d => {
                if self.model.cutoff == 0 {
                    bad.push("model.cutoff: must be positive".into());
                }
                if !(self.model.viscosity > 0.0) {
                    bad.push("model.viscosity: must be positive".into());
                }
                if matches!(self.model.x0, InitialCondition::Sine { .. }) {
                    bad.push("model.x0: sine initial data is for interval models".into());
                }
            }
            _ => {
                if self.model.n_modes == 0 {
                    bad.push("model.n_modes: must be positive".into());
                }
                if self.model.forcing.is_some() {
                    bad.push("model.forcing: only ns2d takes a forcing".into());
                }
                match self.model.x0 {
                    InitialCondition::TaylorGreen { .. } => {
                        bad.push("model.x0: taylor_green initial data is for ns2d".into())
                    }
                    InitialCondition::Sine { mode, .. } if mode == 0 || mode > self.model.n_modes => {
                        bad.push(format!("model.x0.mode: must lie in 1..={}", self.model.n_modes))
                    }
                    _ => {}
                }
            }
        }
        if let Err(e) = self.noise.build() {
            bad.push(format!("noise: {e}"));
        }
        if let Err(e) = self.shift.h.validate(self.noise.n_w) {
            bad.push(format!("shift.h: {e}"));
        }
        for (i, f) in self.functionals.iter().enumerate() {
            if let Err(e) = f.validate() {
                bad.push(format!("functionals[{i}]: {e}"));
            }
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            bad.push("c: must lie in (0, 1)".into());
        }
        if !(self.p > 0.0) {
            bad.push("p: must be positive".into());
        }
        if self.r_grid.iter().any(|r| !(*r >= 0.0)) {
            bad.push("r_grid: radii must be nonnegative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Builds the model, applying constant overrides.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let noise = self.noise.build()?;
        let t = self.solver.t_final;
        let mut m = match self.model.kind {
            ModelKind::Heat => ModelSpec::heat(noise, t),
            ModelKind::Burgers => ModelSpec::burgers(noise, t),
            ModelKind::Ns2d => {
                let forcing = self.model.forcing.as_ref().map(|f| match f {
                    ForcingConfig::Kolmogorov { mode, amplitude } => {
                        let (m, a) = (*mode as f64, *amplitude);
                        Field2D::from_physical(self.model.cutoff, move |_, y| (a * (2.0 * PI * m * y).sin(), 0.0))
                    }
                });
                ModelSpec::ns2d(noise, self.model.viscosity, forcing, t)
            }
        };
        let o = &self.model.constants;
        let c = &mut m.constants;
        macro_rules! apply {
            ($($field:ident),*) => { $( if let Some(v) = o.$field { c.$field = v; } )* };
        }
        apply!(theta, k2, k3, k4, k2_tilde, k4_tilde, beta, eta, c1);
        if let Some(f) = &o.f_schedule {
            c.f_schedule = f.clone();
        }
        m.validate()?;
        Ok(m)
    }

    pub fn initial_condition(&self) -> Field {
        match (&self.model.x0, self.model.kind) {
            (InitialCondition::Zero, ModelKind::Ns2d) => Field2D::zeros(self.model.cutoff).into(),
            (InitialCondition::Zero, _) => Field1D::zeros(self.model.n_modes).into(),
            (InitialCondition::Sine { mode, amplitude }, _) => {
                Field1D::sine(self.model.n_modes, *mode, *amplitude).into()
            }
            (InitialCondition::TaylorGreen { amplitude }, _) => {
                Field2D::taylor_green(self.model.cutoff, *amplitude).into()
            }
        }
    }

    /// `λ₀` in use: explicit, or half of the smaller admissible bound.
    pub fn lambda0(&self, m: &ModelSpec) -> Result<f64> {
        if let Some(l) = self.lambda0 {
            return Ok(l);
        }
        let k = &m.constants;
        Ok(admissible_ranges(k.theta, k.eta, k.k3, k.c_b, self.c)?.lambda0_max() / 2.0)
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Reference configuration for a model at desk scale.
pub fn reference_config(kind: ModelKind) -> ExperimentConfig {
    let text = match kind {
        ModelKind::Heat => include_str!("../../../configs/heat.json"),
        ModelKind::Burgers => include_str!("../../../configs/burgers.json"),
        ModelKind::Ns2d => include_str!("../../../configs/ns2d.json"),
    };
    ExperimentConfig::from_json(text).expect("reference configs are valid")
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Audit,
    Constants,
    Simulate,
    VerifyT2,
    VerifyT1,
    Inequalities,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Audit => "audit",
            Subcommand::Constants => "constants",
            Subcommand::Simulate => "simulate",
            Subcommand::VerifyT2 => "verify-t2",
            Subcommand::VerifyT1 => "verify-t1",
            Subcommand::Inequalities => "inequalities",
        }
    }
}

impl std::str::FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "audit" => Subcommand::Audit,
            "constants" => Subcommand::Constants,
            "simulate" => Subcommand::Simulate,
            "verify-t2" => Subcommand::VerifyT2,
            "verify-t1" => Subcommand::VerifyT1,
            "inequalities" => Subcommand::Inequalities,
            other => return Err(Error::Config(format!("unknown subcommand {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedVerdict {
    pub name: String,
    pub verdict: Verdict,
}

/// Key holding the wall-clock time; excluded from reproducibility checks.
pub const TIMESTAMP_KEY: &str = "timestamp";

/// Outcome of one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Deterministic report body (no timestamp).
    pub report: Value,
    pub verdicts: Vec<NamedVerdict>,
    /// CSV files relative to the output directory.
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn failures(&self) -> usize {
        self.verdicts.iter().filter(|v| v.verdict.is_fail()).count()
    }

    /// The report with the timestamp attached.
    pub fn report_with_timestamp(&self) -> Value {
        let mut r = self.report.clone();
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        r[TIMESTAMP_KEY] = json!(secs);
        r
    }

    /// Writes `report.json` and all CSV files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(&self.report_with_timestamp()).expect("report serialises");
        fs::write(&path, text + "\n")?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(path)
    }
}

fn verdict(name: impl Into<String>, v: Verdict) -> NamedVerdict {
    NamedVerdict {
        name: name.into(),
        verdict: v,
    }
}

fn pass_if(b: bool) -> Verdict {
    if b {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Runs a subcommand; reports and CSV contents are deterministic given the
/// configuration, independent of the worker count.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.check()?;
    let m = cfg.model_spec()?;
    let (results, verdicts, files) = match sub {
        Subcommand::Audit => run_audit(cfg, &m)?,
        Subcommand::Constants => run_constants(cfg, &m)?,
        Subcommand::Simulate => run_simulate(cfg, &m)?,
        Subcommand::VerifyT2 => run_verify_t2(cfg, &m)?,
        Subcommand::VerifyT1 => run_verify_t1(cfg, &m)?,
        Subcommand::Inequalities => run_inequalities(cfg, &m)?,
    };
    let failures = verdicts.iter().filter(|v: &&NamedVerdict| v.verdict.is_fail()).count();
    let report = json!({
        "subcommand": sub.name(),
        "config": cfg,
        "config_hash": cfg.hash(),
        "experiment_seed": cfg.experiment_seed,
        "model_constants": m.constants,
        "results": results,
        "verdicts": verdicts,
        "failures": failures,
    });
    Ok(RunOutput {
        report,
        verdicts,
        files,
    })
}

type Parts = (Value, Vec<NamedVerdict>, Vec<(String, Vec<u8>)>);

fn run_audit(cfg: &ExperimentConfig, m: &ModelSpec) -> Result<Parts> {
    let audit = audit_hypotheses(m, cfg.audit.n_samples, cfg.experiment_seed, cfg.audit.resolution)?;
    let feasibility = t1_feasibility(&m.constants);
    let mut verdicts: Vec<NamedVerdict> = audit
        .hypotheses
        .iter()
        .map(|h| verdict(format!("audit.{}", h.hypothesis), pass_if(h.passed)))
        .collect();
    let suite = inequality_suites(m.kind, cfg.audit.n_samples, cfg.experiment_seed, cfg.audit.resolution);
    verdicts.extend(suite.iter().map(|s| verdict(format!("inequality.{}", s.name), pass_if(s.violations == 0))));
    Ok((
        json!({ "audit": audit, "feasibility": feasibility, "inequality_suites": suite }),
        verdicts,
        Vec::new(),
    ))
}

fn run_constants(cfg: &ExperimentConfig, m: &ModelSpec) -> Result<Parts> {
    let k = &m.constants;
    let x0 = cfg.initial_condition();
    let t2 = t2_constant(&T2ConstantQuery::new(k.horizon_t, k.k2, k.c_b, k.c1))?;
    let mut warnings = t2.warnings.clone();
    let feasibility = t1_feasibility(k);
    let (ranges, t1, pair, d) = match admissible_ranges(k.theta, k.eta, k.k3, k.c_b, cfg.c) {
        Ok(ranges) => {
            let lambda0 = cfg.lambda0(m)?;
            let x0_sq = x0.norm_h_sq();
            let f_int = k.f_integral();
            let t1 = t1_constant(&T1ConstantQuery {
                lambda0,
                c: cfg.c,
                theta: k.theta,
                f_tilde_integral: f_int,
                mu_moment: (lambda0 * x0_sq).exp(),
            })?;
            let (a, b) = gaussian_moment_pair(cfg.c, lambda0, k.theta, f_int, x0_sq)?;
            let d = ccr_constant(a, b)?;
            if lambda0 >= ranges.lambda0_max_lemma {
                warnings.push(format!(
                    "lambda0 = {lambda0} exceeds the exponential-estimate bound {}",
                    ranges.lambda0_max_lemma
                ));
            }
            (
                Some(ranges),
                Some(json!({ "value": t1, "lambda0": lambda0, "c": cfg.c })),
                Some(json!({ "a": a, "b": b })),
                Some(d),
            )
        }
        Err(e) => {
            warnings.push(format!("T1 constants unavailable: {e}"));
            (None, None, None, None)
        }
    };
    let results = json!({
        "C_T2": t2.value,
        "argmin": { "eps1": t2.eps1, "eps2": t2.eps2 },
        "C1": k.c1,
        "C_T1": t1,
        "gaussian_moment_pair": pair,
        "D": d,
        "ranges": ranges,
        "feasibility": feasibility,
        "warnings": warnings,
    });
    Ok((results, Vec::new(), Vec::new()))
}

fn ensemble_csv(ensembles: &[Ensemble]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, e) in ensembles.iter().enumerate() {
        e.write_csv(&mut out, i == 0).expect("in-memory write");
    }
    if ensembles.is_empty() {
        out.extend_from_slice(b"replicate,seed,functional,value\n");
    }
    out
}

fn trajectory_files(cfg: &ExperimentConfig, m: &ModelSpec, x0: &Field) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for r in 0..cfg.trajectory_files.min(cfg.replicates) as u64 {
        let traj = solve(m, &cfg.solver, x0, SeedSpec::new(cfg.experiment_seed, r, 0), None)?;
        let mut csv = Vec::new();
        traj.write_csv(BufWriter::new(&mut csv))?;
        files.push((format!("trajectory_{r}.csv"), csv));
        if cfg.dump_states {
            let mut bin = Vec::new();
            traj.write_state_dump(BufWriter::new(&mut bin))?;
            files.push((format!("trajectory_{r}.bin"), bin));
        }
    }
    Ok(files)
}

fn run_simulate(cfg: &ExperimentConfig, m: &ModelSpec) -> Result<Parts> {
    let x0 = cfg.initial_condition();
    let (trajs, seeds) = simulate_ensemble(m, &cfg.solver, &x0, cfg.replicates, cfg.experiment_seed)?;
    let moments = moment_report(&trajs, cfg.p)?;
    let ensembles = cfg
        .functionals
        .iter()
        .map(|f| Ensemble::from_trajectories(f.clone(), &trajs, seeds.clone()))
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<Value> = ensembles
        .iter()
        .map(|e| json!({ "functional": e.functional.name(), "mean": crate::stats::mean_estimate(&e.values) }))
        .collect();
    let mut files = vec![("ensemble.csv".to_string(), ensemble_csv(&ensembles))];
    files.extend(trajectory_files(cfg, m, &x0)?);
    let verdicts = vec![verdict("moments.finite", pass_if(moments.finite))];
    Ok((json!({ "moments": moments, "functionals": summaries }), verdicts, files))
}

fn run_verify_t2(cfg: &ExperimentConfig, m: &ModelSpec) -> Result<Parts> {
    let x0 = cfg.initial_condition();
    let h = &cfg.shift.h;
    let n_w = m.noise.truncation();
    let entropy = shift_entropy(h, &cfg.solver, n_w)?;
    let pairs = coupled_ensemble(m, &cfg.solver, &x0, h, cfg.replicates, cfg.experiment_seed)?;
    let contraction = contraction_from_pairs(m, &pairs, entropy)?;
    let mut verdicts = vec![verdict("contraction", contraction.verdict)];
    let mut chains = Vec::new();
    let mut ensembles = Vec::new();
    let seeds: Vec<SeedSpec> = pairs.iter().map(|p| p.seed).collect();
    for f in cfg.functionals.iter().filter(|f| f.metric == crate::concentration::PathMetric::UniformH) {
        let chain = t2_chain_from_pairs(m, f, &pairs, entropy)?;
        verdicts.push(verdict(format!("t2_chain.{}", f.name()), chain.verdict));
        if let Some(d) = chain.coupling_domination {
            verdicts.push(verdict(format!("coupling_domination.{}", f.name()), d));
        }
        chains.push(chain);
        let shifted: Vec<_> = pairs.iter().map(|p| p.x_traj.clone()).collect();
        ensembles.push(Ensemble::from_trajectories(f.clone(), &shifted, seeds.clone())?);
    }
    let log_rn: Vec<f64> = pairs.iter().map(|p| p.log_rn).collect();
    let log_rn_mean = crate::stats::mean_estimate(&log_rn);
    let normalization = normalization_report(h, &cfg.solver, n_w, cfg.replicates, cfg.experiment_seed)?;
    verdicts.push(verdict("girsanov.normalization", normalization.normalization_verdict));
    verdicts.push(verdict("girsanov.entropy", normalization.entropy_verdict));
    let files = vec![("ensemble.csv".to_string(), ensemble_csv(&ensembles))];
    Ok((
        json!({
            "entropy": entropy,
            "contraction": contraction,
            "t2_chain": chains,
            "log_rn_shifted": log_rn_mean,
            "normalization": normalization,
        }),
        verdicts,
        files,
    ))
}

fn run_verify_t1(cfg: &ExperimentConfig, m: &ModelSpec) -> Result<Parts> {
    let x0 = cfg.initial_condition();
    let k = &m.constants;
    let lambda0 = cfg.lambda0(m)?;
    let (trajs, seeds) = simulate_ensemble(m, &cfg.solver, &x0, cfg.replicates, cfg.experiment_seed)?;
    let energies: Vec<f64> = trajs.iter().map(|t| t.total_v_energy()).collect();
    let exp_moment = exp_moment_from_energies(m, &x0, cfg.c, lambda0, &energies)?;
    let c_t1 = t1_constant(&T1ConstantQuery {
        lambda0,
        c: cfg.c,
        theta: k.theta,
        f_tilde_integral: k.f_integral(),
        mu_moment: (lambda0 * x0.norm_h_sq()).exp(),
    })?;
    let mut verdicts = vec![verdict("exp_moment", exp_moment.verdict)];
    let mut bg = Vec::new();
    let mut tails = Vec::new();
    let mut ensembles = Vec::new();
    for f in &cfg.functionals {
        let e = Ensemble::from_trajectories(f.clone(), &trajs, seeds.clone())?;
        let b = bobkov_gotze_check(&e, c_t1, &cfg.lambda_grid)?;
        let t = gaussian_tail_check(&e, c_t1, &cfg.r_grid)?;
        verdicts.push(verdict(format!("bobkov_gotze.{}", f.name()), b.verdict));
        verdicts.push(verdict(format!("gaussian_tail.{}", f.name()), t.verdict));
        bg.push(b);
        tails.push(t);
        ensembles.push(e);
    }
    let files = vec![("ensemble.csv".to_string(), ensemble_csv(&ensembles))];
    Ok((
        json!({
            "lambda0": lambda0,
            "C_T1": c_t1,
            "exp_moment": exp_moment,
            "bobkov_gotze": bg,
            "gaussian_tail": tails,
        }),
        verdicts,
        files,
    ))
}

fn run_inequalities(cfg: &ExperimentConfig, m: &ModelSpec) -> Result<Parts> {
    let suites = inequality_suites(m.kind, cfg.inequality_samples, cfg.experiment_seed, cfg.audit.resolution);
    let mut verdicts: Vec<NamedVerdict> = suites
        .iter()
        .map(|s| verdict(format!("inequality.{}", s.name), pass_if(s.violations == 0)))
        .collect();
    let tg = taylor_green_suite(cfg.model.cutoff.max(2), cfg.model.viscosity)?;
    verdicts.push(verdict("taylor_green.nonlinearity", pass_if(tg.nonlinearity <= 1e-10)));
    verdicts.push(verdict("taylor_green.decay", pass_if(tg.decay_relative_error <= 0.01)));
    Ok((json!({ "suites": suites, "taylor_green": tg }), verdicts, Vec::new()))
}

// ---------------------------------------------------------------------------
// Inequality suites
// ---------------------------------------------------------------------------

/// Outcome of one seeded property suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Worst value of the suite's statistic (a ratio or an absolute error).
    pub worst: f64,
    pub tolerance: f64,
}

fn suite(name: &str, tolerance: f64, values: impl Iterator<Item = (f64, bool)>) -> SuiteResult {
    let mut samples = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (v, ok) in values {
        samples += 1;
        if !ok {
            violations += 1;
        }
        worst = worst.max(v);
    }
    SuiteResult {
        name: name.into(),
        samples,
        violations,
        worst,
        tolerance,
    }
}

/// Seeded random fields with log-uniform amplitudes.
fn random_fields_1d(n: usize, samples: usize, seed: u64) -> Vec<Field1D> {
    use rand::Rng;
    (0..samples as u64)
        .map(|i| {
            let mut rng = SeedSpec::new(seed, i, 1).stream(StreamDomain::Synthetic);
            let amp = 10f64.powf(rng.random_range(-2.0..2.0));
            let decay = rng.random_range(0.0..2.0);
            let f = Field1D::random(n, decay, &mut rng);
            Field1D::new(f.coeffs().iter().map(|c| c * amp).collect()).expect("finite")
        })
        .collect()
}

fn random_fields_2d(cutoff: usize, samples: usize, seed: u64) -> Vec<Field2D> {
    use rand::Rng;
    (0..samples as u64)
        .map(|i| {
            let mut rng = SeedSpec::new(seed, i, 2).stream(StreamDomain::Synthetic);
            let amp = 10f64.powf(rng.random_range(-2.0..2.0));
            let decay = rng.random_range(0.0..2.0);
            let mut f = Field2D::random(cutoff, decay, true, &mut rng);
            f.scale_modes(|_| amp);
            f
        })
        .collect()
}

/// Poincaré, L⁴ interpolation, Parseval and energy-neutrality suites on
/// `samples` seeded random fields of the model's geometry.
pub fn inequality_suites(kind: ModelKind, samples: usize, seed: u64, resolution: usize) -> Vec<SuiteResult> {
    let n = resolution.max(2);
    let mut out = Vec::new();
    if kind.is_2d() {
        let fields = random_fields_2d(n, samples, seed);
        let eta = crate::problem::eta_square();
        let c_l = interpolation_constant(kind);
        out.push(suite(
            "poincare_square",
            0.0,
            fields.iter().map(|f| {
                let r = poincare_audit(&Field::D2(f.clone()), eta).expect("nonzero field");
                (eta - r.ratio, r.passes)
            }),
        ));
        out.push(suite(
            "l4_interpolation_torus",
            0.0,
            fields.iter().map(|f| {
                let lhs = f.norm_l4().powi(4);
                let rhs = c_l * f.norm_h_sq() * f.norm_v_sq();
                (lhs / rhs, lhs <= rhs)
            }),
        ));
        let grid = Grid2D::for_products(n);
        out.push(suite(
            "parseval_torus",
            1e-12,
            fields.iter().map(|f| {
                let (gx, gy) = f.to_grid(&grid);
                let mm = (grid.size() * grid.size()) as f64;
                let phys = crate::stats::compensated_sum(gx.iter().chain(&gy).map(|v| v * v)) / mm;
                let err = (phys - f.norm_h_sq()).abs() / f.norm_h_sq();
                (err, err <= 1e-12)
            }),
        ));
        let noise = NoiseOperator::single_mode(1, 1.0).expect("valid");
        let model = ModelSpec::ns2d(noise, 1.0, None, 1.0);
        let like = Field::D2(Field2D::zeros(n));
        let drift = DriftEvaluator::new(&model, &like, true).expect("geometry");
        out.push(suite(
            "energy_neutrality_ns",
            1e-10,
            fields.iter().map(|f| {
                let u = Field::D2(f.clone());
                let e = drift.nonlinear(&u).inner_h(&u).expect("geometry").abs() / u.norm_h_sq().powf(1.5).max(1.0);
                (e, e <= 1e-10)
            }),
        ));
    } else {
        let fields = random_fields_1d(n, samples, seed);
        let eta = crate::problem::eta_interval();
        out.push(suite(
            "poincare_interval",
            0.0,
            fields.iter().map(|f| {
                let r = poincare_audit(&Field::D1(f.clone()), eta).expect("nonzero field");
                (eta - r.ratio, r.passes)
            }),
        ));
        out.push(suite(
            "l4_interpolation_interval",
            0.0,
            fields.iter().map(|f| {
                let lhs = l4_norm_pow4(&Field::D1(f.clone()));
                let rhs = 4.0 * f.norm_h_sq() * f.norm_v_sq();
                (lhs / rhs, lhs <= rhs)
            }),
        ));
        let grid = SineGrid::new(n, 4 * n);
        out.push(suite(
            "parseval_interval",
            1e-12,
            fields.iter().map(|f| {
                let vals = grid.values(f);
                let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
                let err = (grid.integrate(&sq) - f.norm_h_sq()).abs() / f.norm_h_sq();
                (err, err <= 1e-12)
            }),
        ));
        let noise = NoiseOperator::single_mode(1, 1.0).expect("valid");
        let model = ModelSpec::burgers(noise, 1.0);
        let like = Field::D1(Field1D::zeros(n));
        let drift = DriftEvaluator::new(&model, &like, true).expect("geometry");
        out.push(suite(
            "energy_neutrality_burgers",
            1e-10,
            fields.iter().map(|f| {
                let v = Field::D1(f.clone());
                let e = drift.nonlinear(&v).inner_h(&v).expect("geometry").abs() / v.norm_h_sq().powf(1.5).max(1.0);
                (e, e <= 1e-10)
            }),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorGreenResult {
    pub cutoff: usize,
    pub viscosity: f64,
    /// `‖P_H[(u·∇)u]‖_H` for the vortex.
    pub nonlinearity: f64,
    pub t_final: f64,
    pub decay_observed: f64,
    pub decay_exact: f64,
    pub decay_relative_error: f64,
}

/// Taylor–Green checks: vanishing projected advection and `e^{−8π²νt}`
/// energy decay under the zero-noise scheme.
pub fn taylor_green_suite(cutoff: usize, viscosity: f64) -> Result<TaylorGreenResult> {
    let noise = NoiseOperator::new(vec![0.0], None, 1.0)?;
    let t_final = 0.1;
    let m = ModelSpec::ns2d(noise, viscosity, None, t_final);
    let tg: Field = Field2D::taylor_green(cutoff, 1.0).into();
    let drift = DriftEvaluator::new(&m, &tg, true)?;
    let nonlinearity = drift.nonlinear(&tg).norm_h_sq().sqrt();
    let cfg = SolverConfig::new(1e-3, t_final).endpoints_only();
    let traj = solve(&m, &cfg, &tg, SeedSpec::new(0, 0, 0), None)?;
    let decay_observed = traj.final_state().norm_h_sq().sqrt() / tg.norm_h_sq().sqrt();
    let decay_exact = (-8.0 * PI * PI * viscosity * t_final).exp();
    Ok(TaylorGreenResult {
        cutoff,
        viscosity,
        nonlinearity,
        t_final,
        decay_observed,
        decay_exact,
        decay_relative_error: (decay_observed / decay_exact - 1.0).abs(),
    })
}
