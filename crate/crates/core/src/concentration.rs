//! Monte Carlo checks of concentration inequalities.
//!
//! Every check returns a report with a three-state [`Verdict`]:
//! `Pass` when the one-sided inequality holds with 3 standard errors to
//! spare, `Fail` when it is violated by more than 3 standard errors, and
//! `Inconclusive` otherwise.

pub mod wasserstein;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{admissible_ranges, t2_constant, T2Constant, T2ConstantQuery};
use crate::error::{Error, Result};
use crate::girsanov::{collect_ordered, coupled_ensemble, shift_entropy, CoupledPair, ShiftFunction};
use crate::noise::SeedSpec;
use crate::problem::ModelSpec;
use crate::solver::{solve, SolverConfig, Trajectory};
use crate::spaces::Field;
use crate::stats::{compensated_sum, mean, mean_estimate, variance, wilson_interval, MeanEstimate};

pub use wasserstein::{w2_small_cloud, w2_sorted_1d};

/// Number of standard errors used by every verdict.
pub const Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// Verdict for `E ≤ bound` given an estimate of `E`.
    pub fn one_sided(est: &MeanEstimate, bound: f64) -> Self {
        Self::from_interval(est.lower(Z), est.upper(Z), bound)
    }

    /// Verdict for `value ≤ bound` given a confidence interval `[lo, hi]`.
    pub fn from_interval(lo: f64, hi: f64, bound: f64) -> Self {
        if hi <= bound {
            Verdict::Pass
        } else if lo > bound {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }

    /// The least favourable of several verdicts.
    pub fn worst<I: IntoIterator<Item = Verdict>>(it: I) -> Verdict {
        it.into_iter().max().unwrap_or(Verdict::Pass)
    }
}

// ---------------------------------------------------------------------------
// Functionals
// ---------------------------------------------------------------------------

/// Path metric with respect to which a functional is Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMetric {
    /// `(∫₀^T ‖u − v‖²_V dt)^{1/2}` (trapezoid on the step grid).
    L2VPath,
    /// `max_k ‖u_{t_k} − v_{t_k}‖_H`.
    UniformH,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `‖u‖_{L²([0,T];V)}`.
    L2VPathNorm,
    /// `sup_t ‖u_t‖_H`.
    SupHNorm,
    /// `‖u_T‖_H`.
    TerminalHNorm,
    /// `⟨g, u_T⟩_H` for a coefficient vector `g` of an interval field.
    LinearProbe { g: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub lipschitz_constant: f64,
    pub metric: PathMetric,
}

impl FunctionalSpec {
    pub fn l2_v_path_norm() -> Self {
        Self {
            kind: FunctionalKind::L2VPathNorm,
            lipschitz_constant: 1.0,
            metric: PathMetric::L2VPath,
        }
    }

    pub fn sup_h_norm() -> Self {
        Self {
            kind: FunctionalKind::SupHNorm,
            lipschitz_constant: 1.0,
            metric: PathMetric::UniformH,
        }
    }

    pub fn terminal_h_norm() -> Self {
        Self {
            kind: FunctionalKind::TerminalHNorm,
            lipschitz_constant: 1.0,
            metric: PathMetric::UniformH,
        }
    }

    pub fn linear_probe(g: Vec<f64>) -> Self {
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        Self {
            kind: FunctionalKind::LinearProbe { g },
            lipschitz_constant: norm,
            metric: PathMetric::UniformH,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FunctionalKind::L2VPathNorm => "l2_V_path_norm",
            FunctionalKind::SupHNorm => "sup_H_norm",
            FunctionalKind::TerminalHNorm => "terminal_H_norm",
            FunctionalKind::LinearProbe { .. } => "linear_probe",
        }
    }

    /// Checks that the declared constant is valid for the declared metric.
    pub fn validate(&self) -> Result<()> {
        let natural = match (&self.kind, self.metric) {
            (FunctionalKind::L2VPathNorm, PathMetric::L2VPath) => 1.0,
            (FunctionalKind::SupHNorm | FunctionalKind::TerminalHNorm, PathMetric::UniformH) => 1.0,
            (FunctionalKind::LinearProbe { g }, PathMetric::UniformH) => {
                g.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
            (kind, metric) => {
                return Err(Error::Parameter(format!(
                    "{kind:?} is not Lipschitz with respect to {metric:?}"
                )))
            }
        };
        if !(self.lipschitz_constant >= natural * (1.0 - 1e-12)) || !self.lipschitz_constant.is_finite() {
            return Err(Error::Parameter(format!(
                "declared Lipschitz constant {} is below the valid constant {natural}",
                self.lipschitz_constant
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        Ok(match &self.kind {
            FunctionalKind::L2VPathNorm => traj.total_v_energy().sqrt(),
            FunctionalKind::SupHNorm => traj.sup_h(),
            FunctionalKind::TerminalHNorm => *traj.h_norms.last().expect("nonempty"),
            FunctionalKind::LinearProbe { g } => match traj.final_state() {
                Field::D1(f) => g.iter().zip(f.coeffs()).map(|(a, b)| a * b).sum(),
                Field::D2(_) => {
                    return Err(Error::Geometry("linear probes act on interval fields".into()))
                }
            },
        })
    }
}

/// Distance between two trajectories on the same step grid; the stored
/// states must cover every step.
pub fn path_distance(metric: PathMetric, a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.state_steps != b.state_steps || a.times != b.times {
        return Err(Error::Geometry("trajectories use different grids".into()));
    }
    if a.states.len() != a.times.len() {
        return Err(Error::Parameter("path distances need every state stored".into()));
    }
    let diffs: Vec<Field> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| x.sub(y))
        .collect::<Result<_>>()?;
    Ok(match metric {
        PathMetric::UniformH => diffs
            .iter()
            .map(|d| d.norm_h_sq().sqrt())
            .fold(0.0, f64::max),
        PathMetric::L2VPath => {
            let dt = if a.times.len() > 1 { a.times[1] - a.times[0] } else { 0.0 };
            let sq: Vec<f64> = diffs.iter().map(|d| d.norm_v_sq()).collect();
            crate::stats::trapezoid_uniform(&sq, dt).sqrt()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzAudit {
    pub functional: String,
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed `|F(u) − F(v)| / d(u, v)`.
    pub max_ratio: f64,
}

/// Checks `|F(u) − F(v)| ≤ L·d(u, v)` on the given trajectory pairs.
pub fn lipschitz_audit(spec: &FunctionalSpec, pairs: &[(Trajectory, Trajectory)]) -> Result<LipschitzAudit> {
    spec.validate()?;
    let mut violations = 0;
    let mut max_ratio = 0.0_f64;
    for (a, b) in pairs {
        let lhs = (spec.evaluate(a)? - spec.evaluate(b)?).abs();
        let d = path_distance(spec.metric, a, b)?;
        if lhs > spec.lipschitz_constant * d * (1.0 + 1e-12) + 1e-14 {
            violations += 1;
        }
        if d > 0.0 {
            max_ratio = max_ratio.max(lhs / d);
        }
    }
    Ok(LipschitzAudit {
        functional: spec.name().to_string(),
        pairs: pairs.len(),
        violations,
        max_ratio,
    })
}

// ---------------------------------------------------------------------------
// Ensembles and exponential moments
// ---------------------------------------------------------------------------

/// Functional values of independent replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub values: Vec<f64>,
    pub seeds: Vec<SeedSpec>,
    pub functional: FunctionalSpec,
}

impl Ensemble {
    pub fn new(values: Vec<f64>, seeds: Vec<SeedSpec>, functional: FunctionalSpec) -> Result<Self> {
        if values.len() != seeds.len() {
            return Err(Error::Parameter(format!(
                "{} values but {} seeds",
                values.len(),
                seeds.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("ensemble values must be finite".into()));
        }
        Ok(Self {
            values,
            seeds,
            functional,
        })
    }

    /// Synthetic ensemble (e.g. Gaussian controls) with seeds
    /// `(experiment_seed, i, 0)`.
    pub fn synthetic(values: Vec<f64>, experiment_seed: u64, functional: FunctionalSpec) -> Result<Self> {
        let seeds = (0..values.len() as u64)
            .map(|i| SeedSpec::new(experiment_seed, i, 0))
            .collect();
        Self::new(values, seeds, functional)
    }

    pub fn from_trajectories(
        functional: FunctionalSpec,
        trajectories: &[Trajectory],
        seeds: Vec<SeedSpec>,
    ) -> Result<Self> {
        let values = trajectories
            .iter()
            .map(|t| functional.evaluate(t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values, seeds, functional)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows `replicate,seed,functional,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "replicate,seed,functional,value")?;
        }
        for (s, v) in self.seeds.iter().zip(&self.values) {
            writeln!(
                out,
                "{},{},{},{:.17e}",
                s.replicate,
                s.experiment_seed,
                self.functional.name(),
                v
            )?;
        }
        Ok(())
    }
}

/// `(1/M)Σ exp(λ(vᵢ − v̄))` with a jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpMoment {
    pub estimate: f64,
    pub stderr: f64,
    /// Set when the stabilised exponent exceeds the overflow threshold.
    pub infinite: bool,
}

/// Largest exponent accepted after max-subtraction.
pub const EXP_LIMIT: f64 = 700.0;

fn centered_mean(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo
    } else {
        mean(values)
    }
}

/// Centred empirical exponential moment of raw values.
pub fn exp_moment_values(values: &[f64], lambda: f64) -> Result<ExpMoment> {
    let m = values.len();
    if m < 2 {
        return Err(Error::Parameter("at least 2 values are required".into()));
    }
    if lambda == 0.0 {
        return Ok(ExpMoment {
            estimate: 1.0,
            stderr: 0.0,
            infinite: false,
        });
    }
    let mf = m as f64;
    let mu = centered_mean(values);
    let total = compensated_sum(values.iter().copied());
    let shift = values
        .iter()
        .map(|v| lambda * (v - mu))
        .fold(f64::NEG_INFINITY, f64::max);
    if shift > EXP_LIMIT {
        return Ok(ExpMoment {
            estimate: f64::INFINITY,
            stderr: f64::INFINITY,
            infinite: true,
        });
    }
    // w_i = exp(λ(v_i − v̄) − shift) ∈ (0, 1]
    let w: Vec<f64> = values.iter().map(|v| (lambda * (v - mu) - shift).exp()).collect();
    let w_sum = compensated_sum(w.iter().copied());
    let estimate = shift.exp() * w_sum / mf;
    // leave-one-out: mean without i is v̄₋ᵢ = (S − vᵢ)/(M − 1) and
    // Σ_{j≠i} exp(λ(v_j − v̄₋ᵢ)) = exp(λ(v̄ − v̄₋ᵢ) + shift)·(W − wᵢ)
    let loo: Vec<f64> = values
        .iter()
        .zip(&w)
        .map(|(v, wi)| {
            let mu_i = (total - v) / (mf - 1.0);
            (lambda * (mu - mu_i) + shift).exp() * (w_sum - wi).max(0.0) / (mf - 1.0)
        })
        .collect();
    let loo_mean = mean(&loo);
    let ss = compensated_sum(loo.iter().map(|x| (x - loo_mean).powi(2)));
    let stderr = ((mf - 1.0) / mf * ss).sqrt();
    let infinite = !estimate.is_finite();
    Ok(ExpMoment {
        estimate,
        stderr,
        infinite,
    })
}

pub fn exp_moment_empirical(e: &Ensemble, lambda: f64) -> Result<ExpMoment> {
    exp_moment_values(&e.values, lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub infinite: bool,
    pub bound: f64,
    pub margin: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BobkovGotzeReport {
    pub functional: String,
    pub lipschitz_constant: f64,
    pub c: f64,
    pub replicates: usize,
    pub rows: Vec<LambdaRow>,
    pub verdict: Verdict,
}

/// `E[e^{λ(F − EF)}] ≤ exp(Cλ²‖F‖²_Lip/2)` on a grid of `λ`.
pub fn bobkov_gotze_check(e: &Ensemble, c: f64, lambda_grid: &[f64]) -> Result<BobkovGotzeReport> {
    if !(c > 0.0) {
        return Err(Error::Parameter("C must be positive".into()));
    }
    let l = e.functional.lipschitz_constant;
    let rows = lambda_grid
        .iter()
        .map(|&lambda| {
            let em = exp_moment_empirical(e, lambda)?;
            let bound = (c * lambda * lambda * l * l / 2.0).exp();
            let verdict = if em.infinite {
                Verdict::Fail
            } else {
                Verdict::from_interval(em.estimate - Z * em.stderr, em.estimate + Z * em.stderr, bound)
            };
            Ok(LambdaRow {
                lambda,
                estimate: em.estimate,
                stderr: em.stderr,
                infinite: em.infinite,
                bound,
                margin: bound - (em.estimate + Z * em.stderr),
                verdict,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BobkovGotzeReport {
        functional: e.functional.name().to_string(),
        lipschitz_constant: l,
        c,
        replicates: e.len(),
        verdict: Verdict::worst(rows.iter().map(|r| r.verdict)),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub r: f64,
    pub exceedances: usize,
    pub empirical: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub functional: String,
    pub c: f64,
    pub replicates: usize,
    pub rows: Vec<TailRow>,
    pub verdict: Verdict,
}

/// `P(F − EF ≥ r) ≤ exp(−r²/(2C‖F‖²_Lip))` with Wilson intervals.
pub fn gaussian_tail_check(e: &Ensemble, c: f64, r_grid: &[f64]) -> Result<TailReport> {
    if !(c > 0.0) {
        return Err(Error::Parameter("C must be positive".into()));
    }
    if e.len() < 2 {
        return Err(Error::Parameter("at least 2 values are required".into()));
    }
    let mu = centered_mean(&e.values);
    let l = e.functional.lipschitz_constant;
    let rows: Vec<TailRow> = r_grid
        .iter()
        .map(|&r| {
            let k = e.values.iter().filter(|v| **v - mu >= r).count();
            let (lo, hi) = wilson_interval(k, e.len(), Z);
            let bound = (-r * r / (2.0 * c * l * l)).exp();
            TailRow {
                r,
                exceedances: k,
                empirical: k as f64 / e.len() as f64,
                wilson_low: lo,
                wilson_high: hi,
                bound,
                verdict: Verdict::from_interval(lo, hi, bound),
            }
        })
        .collect();
    Ok(TailReport {
        functional: e.functional.name().to_string(),
        c,
        replicates: e.len(),
        verdict: Verdict::worst(rows.iter().map(|r| r.verdict)),
        rows,
    })
}

// ---------------------------------------------------------------------------
// SPDE ensembles
// ---------------------------------------------------------------------------

/// Simulates `replicates` trajectories keeping only endpoint states.
pub fn simulate_ensemble(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    replicates: usize,
    experiment_seed: u64,
) -> Result<(Vec<Trajectory>, Vec<SeedSpec>)> {
    let mut lean = cfg.clone();
    lean.snapshot_stride = usize::MAX;
    let seeds: Vec<SeedSpec> = (0..replicates as u64)
        .map(|r| SeedSpec::new(experiment_seed, r, 0))
        .collect();
    let trajs = collect_ordered(seeds.par_iter().map(|s| solve(m, &lean, x0, *s, None)))?;
    Ok((trajs, seeds))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpMomentReport {
    pub model: String,
    pub c: f64,
    pub lambda0: f64,
    pub theta: f64,
    pub lambda0_max_lemma: f64,
    pub replicates: usize,
    /// `E[exp(cλ₀θ∫‖X‖²_V ds)]`.
    pub estimate: MeanEstimate,
    pub infinite: bool,
    /// `exp(λ₀∫f̃)·exp(λ₀‖x₀‖²_H)`.
    pub bound: f64,
    pub margin: f64,
    pub verdict: Verdict,
}

/// Exponential estimate from V-energies of an existing ensemble.
pub fn exp_moment_from_energies(
    m: &ModelSpec,
    x0: &Field,
    c: f64,
    lambda0: f64,
    energies: &[f64],
) -> Result<ExpMomentReport> {
    let k = &m.constants;
    let ranges = admissible_ranges(k.theta, k.eta, k.k3, k.c_b, c)?;
    if !(lambda0 > 0.0 && lambda0 < ranges.lambda0_max_lemma) {
        return Err(Error::Parameter(format!(
            "lambda0 = {lambda0} must lie in (0, {})",
            ranges.lambda0_max_lemma
        )));
    }
    if energies.len() < 2 {
        return Err(Error::Parameter("at least 2 replicates are required".into()));
    }
    let a = c * lambda0 * k.theta;
    let infinite = energies.iter().any(|e| a * e > EXP_LIMIT);
    let samples: Vec<f64> = energies.iter().map(|e| (a * e).exp()).collect();
    let estimate = mean_estimate(&samples);
    let bound = (lambda0 * k.f_integral()).exp() * (lambda0 * x0.norm_h_sq()).exp();
    let verdict = if infinite {
        Verdict::Fail
    } else {
        Verdict::one_sided(&estimate, bound)
    };
    Ok(ExpMomentReport {
        model: m.kind.name().to_string(),
        c,
        lambda0,
        theta: k.theta,
        lambda0_max_lemma: ranges.lambda0_max_lemma,
        replicates: energies.len(),
        margin: bound - estimate.upper(Z),
        estimate,
        infinite,
        bound,
        verdict,
    })
}

pub fn exp_moment_check(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    c: f64,
    lambda0: f64,
    replicates: usize,
    experiment_seed: u64,
) -> Result<ExpMomentReport> {
    let (trajs, _) = simulate_ensemble(m, cfg, x0, replicates, experiment_seed)?;
    let energies: Vec<f64> = trajs.iter().map(|t| t.total_v_energy()).collect();
    exp_moment_from_energies(m, x0, c, lambda0, &energies)
}

// ---------------------------------------------------------------------------
// T₂ chain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct T2ChainReport {
    pub functional: String,
    pub replicates: usize,
    /// `H(Q|P) = ½∫‖h‖²`.
    pub entropy: f64,
    pub c_t2: T2Constant,
    /// `W₂` between the functional ensembles under the shifted and
    /// unshifted laws.
    pub w2: f64,
    pub w2_stderr: f64,
    /// `‖F‖_Lip·√(2·C·H)`.
    pub bound: f64,
    pub margin: f64,
    pub verdict: Verdict,
    /// `√(E sup‖X − Y‖²_H)` and its standard error; dominates `w2` for
    /// functionals that are 1-Lipschitz in the uniform metric.
    pub coupling_rms_gap: f64,
    pub coupling_rms_gap_stderr: f64,
    pub coupling_domination: Option<Verdict>,
}

/// Combined standard error of a difference of two sample means.
pub fn combined_stderr(a: &[f64], b: &[f64]) -> f64 {
    (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt()
}

pub fn t2_chain_from_pairs(
    m: &ModelSpec,
    functional: &FunctionalSpec,
    pairs: &[CoupledPair],
    entropy: f64,
) -> Result<T2ChainReport> {
    functional.validate()?;
    if pairs.len() < 2 {
        return Err(Error::Parameter("at least 2 replicates are required".into()));
    }
    let k = &m.constants;
    let c_t2 = t2_constant(&T2ConstantQuery::new(k.horizon_t, k.k2, k.c_b, k.c1))?;
    let shifted = pairs
        .iter()
        .map(|p| functional.evaluate(&p.x_traj))
        .collect::<Result<Vec<_>>>()?;
    let unshifted = pairs
        .iter()
        .map(|p| functional.evaluate(&p.y_traj))
        .collect::<Result<Vec<_>>>()?;
    let w2 = w2_sorted_1d(&shifted, &unshifted)?;
    let se = combined_stderr(&shifted, &unshifted);
    let bound = functional.lipschitz_constant * (2.0 * c_t2.value * entropy).sqrt();
    // The empirical W₂ is biased upwards, so the tolerance acts on the
    // bound side: pass iff w2 ≤ bound + Z·se.
    let verdict = if w2 <= bound + Z * se {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    let gaps: Vec<f64> = pairs.iter().map(|p| p.sup_gap_sq).collect();
    let gap = mean_estimate(&gaps);
    let rms = gap.mean.sqrt();
    // delta method for √mean
    let rms_se = if rms > 0.0 { gap.stderr / (2.0 * rms) } else { 0.0 };
    let coupling_domination = (functional.metric == PathMetric::UniformH).then(|| {
        let dominating = functional.lipschitz_constant * (rms + Z * rms_se);
        if w2 <= dominating + 1e-12 {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    });
    Ok(T2ChainReport {
        functional: functional.name().to_string(),
        replicates: pairs.len(),
        entropy,
        c_t2,
        w2,
        w2_stderr: se,
        margin: bound - w2,
        bound,
        verdict,
        coupling_rms_gap: rms,
        coupling_rms_gap_stderr: rms_se,
        coupling_domination,
    })
}

pub fn t2_chain_check(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    h: &ShiftFunction,
    functional: &FunctionalSpec,
    replicates: usize,
    experiment_seed: u64,
) -> Result<T2ChainReport> {
    let entropy = shift_entropy(h, cfg, m.noise.truncation())?;
    let pairs = coupled_ensemble(m, cfg, x0, h, replicates, experiment_seed)?;
    t2_chain_from_pairs(m, functional, &pairs, entropy)
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub replicates: usize,
    pub p: f64,
    /// `E[sup_t ‖X_t‖^p_H]`.
    pub sup_h_moment: MeanEstimate,
    /// `E[∫₀^T ‖X_t‖²_V dt]`.
    pub v_energy: MeanEstimate,
    pub finite: bool,
}

pub fn moment_report(trajectories: &[Trajectory], p: f64) -> Result<MomentReport> {
    if trajectories.len() < 2 {
        return Err(Error::Parameter("at least 2 trajectories are required".into()));
    }
    if !(p > 0.0) {
        return Err(Error::Parameter("p must be positive".into()));
    }
    let sup: Vec<f64> = trajectories.iter().map(|t| t.sup_h().powf(p)).collect();
    let energy: Vec<f64> = trajectories.iter().map(|t| t.total_v_energy()).collect();
    let sup_h_moment = mean_estimate(&sup);
    let v_energy = mean_estimate(&energy);
    let finite = [sup_h_moment.mean, sup_h_moment.stderr, v_energy.mean, v_energy.stderr]
        .iter()
        .all(|x| x.is_finite());
    Ok(MomentReport {
        replicates: trajectories.len(),
        p,
        sup_h_moment,
        v_energy,
        finite,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub coarse: MomentReport,
    pub fine: MomentReport,
    /// `fine / coarse` for `E sup‖X‖^p_H`.
    pub sup_ratio: f64,
    pub energy_ratio: f64,
    /// Both ratios within `[1/2, 2]`.
    pub stable: bool,
}

/// Moments at `dt` and `dt/2` with independent replicate streams.
pub fn moment_refinement(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    replicates: usize,
    experiment_seed: u64,
    p: f64,
) -> Result<RefinementReport> {
    let (coarse_t, _) = simulate_ensemble(m, cfg, x0, replicates, experiment_seed)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.dt = cfg.dt / 2.0;
    let (fine_t, _) = simulate_ensemble(m, &fine_cfg, x0, replicates, experiment_seed)?;
    let coarse = moment_report(&coarse_t, p)?;
    let fine = moment_report(&fine_t, p)?;
    let ratio = |a: f64, b: f64| if a == 0.0 && b == 0.0 { 1.0 } else { b / a };
    let sup_ratio = ratio(coarse.sup_h_moment.mean, fine.sup_h_moment.mean);
    let energy_ratio = ratio(coarse.v_energy.mean, fine.v_energy.mean);
    let within = |r: f64| (0.5..=2.0).contains(&r);
    Ok(RefinementReport {
        stable: within(sup_ratio) && within(energy_ratio) && coarse.finite && fine.finite,
        coarse,
        fine,
        sup_ratio,
        energy_ratio,
    })
}
