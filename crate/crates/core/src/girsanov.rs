//! Drift-shifted coupling and the pathwise Radon–Nikodym density.
//!
//! For a deterministic shift `h: [0, T] → U`, the process
//! `W̃_t = W_t − ∫₀^t h(s) ds` is a cylindrical Wiener process under the
//! measure `dQ = M_T dP` with `log M_T = ∫⟨h, dW⟩ − ½∫‖h‖²ds`. Driving
//!
//! * `X` by `dW̃ + h dt` (the original equation under `Q`), and
//! * `Y` by `dW̃` (the unshifted equation)
//!
//! with the same increments produces a coupling whose squared uniform
//! distance controls `W₂²` between the two path laws. With `h` fixed the
//! relative entropy `H(Q|P) = ½∫‖h‖²ds` is known exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::Verdict;
use crate::constants::{t2_constant, T2Constant, T2ConstantQuery};
use crate::error::{Error, Result};
use crate::noise::{increment, SeedSpec};
use crate::problem::ModelSpec;
use crate::solver::{SolverConfig, Stepper, Trajectory};
use crate::spaces::Field;
use crate::stats::{compensated_sum, mean_estimate, MeanEstimate};

/// Deterministic shift, piecewise constant on the step grid.
///
/// Mode indices are 1-based coordinates of `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftFunction {
    /// `h ≡ 0`.
    Zero,
    /// `h ≡ amplitude·(1, …, 1)/√N_W`, so `‖h‖_U = amplitude`.
    Constant { amplitude: f64 },
    /// `h ≡ amplitude·e_{mode_index}`.
    Mode {
        #[serde(default = "first_mode")]
        mode_index: usize,
        amplitude: f64,
    },
    /// `h(t) = amplitude·t·e_{mode_index}`, sampled at interval midpoints.
    Ramp {
        #[serde(default = "first_mode")]
        mode_index: usize,
        amplitude: f64,
    },
    /// Explicit values on consecutive intervals of the step grid;
    /// `values[k]` acts on `[t_k, t_{k+1})` and the last row is held.
    Values { values: Vec<Vec<f64>> },
}

fn first_mode() -> usize {
    1
}

impl ShiftFunction {
    /// `h ≡ e₁`.
    pub fn unit_first_mode() -> Self {
        ShiftFunction::Mode {
            mode_index: 1,
            amplitude: 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ShiftFunction::Zero => true,
            ShiftFunction::Constant { amplitude }
            | ShiftFunction::Mode { amplitude, .. }
            | ShiftFunction::Ramp { amplitude, .. } => *amplitude == 0.0,
            ShiftFunction::Values { values } => values.iter().flatten().all(|v| *v == 0.0),
        }
    }

    /// Scales the shift by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            ShiftFunction::Zero => ShiftFunction::Zero,
            ShiftFunction::Constant { amplitude } => ShiftFunction::Constant {
                amplitude: amplitude * factor,
            },
            ShiftFunction::Mode {
                mode_index,
                amplitude,
            } => ShiftFunction::Mode {
                mode_index: *mode_index,
                amplitude: amplitude * factor,
            },
            ShiftFunction::Ramp {
                mode_index,
                amplitude,
            } => ShiftFunction::Ramp {
                mode_index: *mode_index,
                amplitude: amplitude * factor,
            },
            ShiftFunction::Values { values } => ShiftFunction::Values {
                values: values
                    .iter()
                    .map(|r| r.iter().map(|v| v * factor).collect())
                    .collect(),
            },
        }
    }

    /// Checks the shift against a noise truncation `N_W`.
    pub fn validate(&self, n_w: usize) -> Result<()> {
        let check_mode = |mode_index: usize, amplitude: f64| {
            if mode_index == 0 || mode_index > n_w {
                return Err(Error::Parameter(format!(
                    "shift mode_index {mode_index} outside 1..={n_w}"
                )));
            }
            if !amplitude.is_finite() {
                return Err(Error::Parameter("shift amplitude must be finite".into()));
            }
            Ok(())
        };
        match self {
            ShiftFunction::Zero => Ok(()),
            ShiftFunction::Constant { amplitude } => check_mode(1, *amplitude),
            ShiftFunction::Mode {
                mode_index,
                amplitude,
            }
            | ShiftFunction::Ramp {
                mode_index,
                amplitude,
            } => check_mode(*mode_index, *amplitude),
            ShiftFunction::Values { values } => {
                if values.is_empty() {
                    return Err(Error::Parameter("shift values must not be empty".into()));
                }
                for row in values {
                    if row.len() != n_w {
                        return Err(Error::Parameter(format!(
                            "shift rows must have {n_w} coordinates, got {}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Parameter("shift values must be finite".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Value of `h` on `[k·dt, (k+1)·dt)` as a vector of `N_W` coordinates.
    pub fn on_interval(&self, k: usize, dt: f64, n_w: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_w];
        match self {
            ShiftFunction::Zero => {}
            ShiftFunction::Constant { amplitude } => {
                let v = amplitude / (n_w as f64).sqrt();
                out.iter_mut().for_each(|o| *o = v);
            }
            ShiftFunction::Mode {
                mode_index,
                amplitude,
            } => {
                if let Some(o) = out.get_mut(mode_index.wrapping_sub(1)) {
                    *o = *amplitude;
                }
            }
            ShiftFunction::Ramp {
                mode_index,
                amplitude,
            } => {
                if let Some(o) = out.get_mut(mode_index.wrapping_sub(1)) {
                    *o = amplitude * (k as f64 + 0.5) * dt;
                }
            }
            ShiftFunction::Values { values } => {
                let row = &values[k.min(values.len() - 1)];
                for (o, v) in out.iter_mut().zip(row) {
                    *o = *v;
                }
            }
        }
        out
    }
}

/// `½∫₀^T ‖h(s)‖²_U ds` for the piecewise-constant shift on the step grid
/// of `cfg`. This equals `H(Q|P)` exactly for the discretised law.
pub fn shift_entropy(h: &ShiftFunction, cfg: &SolverConfig, n_w: usize) -> Result<f64> {
    h.validate(n_w)?;
    let n = cfg.n_steps()?;
    Ok(0.5
        * cfg.dt
        * compensated_sum((0..n).map(|k| {
            h.on_interval(k, cfg.dt, n_w)
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
        })))
}

/// Shifted (`x_traj`) and unshifted (`y_traj`) trajectories driven by the
/// same increments.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub x_traj: Trajectory,
    pub y_traj: Trajectory,
    /// `sup_t ‖X_t − Y_t‖²_H` over the step grid.
    pub sup_gap_sq: f64,
    /// `‖X_T − Y_T‖_H`.
    pub terminal_gap: f64,
    /// `Σ⟨h_k, ΔW_k⟩ − ½∫‖h‖²` with `ΔW_k = ΔW̃_k + h_k dt`, i.e. `log M_T`
    /// along the simulated path.
    pub log_rn: f64,
    pub seed: SeedSpec,
}

pub fn coupled_solve(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    h: &ShiftFunction,
    seed: SeedSpec,
) -> Result<CoupledPair> {
    x0.validate()?;
    let n_w = m.noise.truncation();
    h.validate(n_w)?;
    let n = cfg.n_steps()?;
    let stepper = Stepper::new(m, cfg, x0)?;
    let mut x_traj = Trajectory::start(x0, n);
    let mut y_traj = Trajectory::start(x0, n);
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut sup_gap_sq = 0.0_f64;
    let mut rn_terms = Vec::with_capacity(n);
    for k in 0..n {
        let t = cfg.time(k);
        let dw = increment(n_w, cfg.dt, seed.with_step(k as u64));
        let hk = h.on_interval(k, cfg.dt, n_w);
        x = stepper.advance(&x, t, &dw, Some(&hk), k, seed.replicate)?;
        y = stepper.advance(&y, t, &dw, None, k, seed.replicate)?;
        let t1 = cfg.time(k + 1);
        x_traj.record(t1, cfg.dt, &x);
        y_traj.record(t1, cfg.dt, &y);
        sup_gap_sq = sup_gap_sq.max(x.sub(&y)?.norm_h_sq());
        let hh: f64 = hk.iter().map(|v| v * v).sum();
        let hw: f64 = hk.iter().zip(&dw).map(|(a, b)| a * b).sum();
        // ⟨h, ΔW̃ + h dt⟩ − ½‖h‖² dt
        rn_terms.push(hw + 0.5 * hh * cfg.dt);
        if (k + 1) % cfg.snapshot_stride == 0 || k + 1 == n {
            x_traj.push_state(k + 1, &x);
            y_traj.push_state(k + 1, &y);
        }
    }
    let terminal_gap = x.sub(&y)?.norm_h_sq().sqrt();
    Ok(CoupledPair {
        x_traj,
        y_traj,
        sup_gap_sq,
        terminal_gap,
        log_rn: compensated_sum(rn_terms),
        seed,
    })
}

/// `log M_T` of a coupled pair.
pub fn log_radon_nikodym(pair: &CoupledPair) -> f64 {
    pair.log_rn
}

/// `log M_T = Σ⟨h_k, ΔW_k⟩ − ½∫‖h‖²` with the sampled increments taken as
/// the reference Brownian motion (the law `P`).
pub fn log_rn_reference(h: &ShiftFunction, cfg: &SolverConfig, n_w: usize, seed: SeedSpec) -> Result<f64> {
    h.validate(n_w)?;
    let n = cfg.n_steps()?;
    Ok(compensated_sum((0..n).map(|k| {
        let dw = increment(n_w, cfg.dt, seed.with_step(k as u64));
        let hk = h.on_interval(k, cfg.dt, n_w);
        let hh: f64 = hk.iter().map(|v| v * v).sum();
        let hw: f64 = hk.iter().zip(&dw).map(|(a, b)| a * b).sum();
        hw - 0.5 * hh * cfg.dt
    })))
}

/// Monte Carlo checks of `E_P[M_T] = 1` and `E_Q[log M_T] = H(Q|P)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub replicates: usize,
    pub entropy: f64,
    /// Empirical `E_P[M_T]`.
    pub mean_m: MeanEstimate,
    /// Empirical `E_Q[log M_T]`.
    pub mean_log_m_shifted: MeanEstimate,
    pub normalization_verdict: Verdict,
    pub entropy_verdict: Verdict,
}

/// Two-sided 3-standard-error agreement of an estimate with a target.
fn agreement(est: &MeanEstimate, target: f64) -> Verdict {
    if (est.mean - target).abs() <= 3.0 * est.stderr {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

pub fn normalization_report(
    h: &ShiftFunction,
    cfg: &SolverConfig,
    n_w: usize,
    replicates: usize,
    experiment_seed: u64,
) -> Result<NormalizationReport> {
    if replicates < 2 {
        return Err(Error::Parameter("at least 2 replicates are required".into()));
    }
    let entropy = shift_entropy(h, cfg, n_w)?;
    let under_p: Vec<f64> = collect_ordered((0..replicates).into_par_iter().map(|r| {
        let r = r as u64;
        log_rn_reference(h, cfg, n_w, SeedSpec::new(experiment_seed, r, 0)).map(f64::exp)
    }))?;
    // Under Q, ΔW = ΔW̃ + h dt with ΔW̃ the sampled (Q-Brownian) increments.
    let under_q: Vec<f64> = collect_ordered((0..replicates).into_par_iter().map(|r| {
        let r = r as u64;
        let seed = SeedSpec::new(experiment_seed, r, 0);
        log_rn_reference(h, cfg, n_w, seed).map(|l| l + 2.0 * entropy)
    }))?;
    let mean_m = mean_estimate(&under_p);
    let mean_log = mean_estimate(&under_q);
    Ok(NormalizationReport {
        replicates,
        entropy,
        normalization_verdict: agreement(&mean_m, 1.0),
        entropy_verdict: agreement(&mean_log, entropy),
        mean_m,
        mean_log_m_shifted: mean_log,
    })
}

/// Collects parallel results in replicate order, surfacing the first error
/// by replicate index.
pub(crate) fn collect_ordered<T: Send>(
    it: impl IndexedParallelIterator<Item = Result<T>>,
) -> Result<Vec<T>> {
    let all: Vec<Result<T>> = it.collect();
    all.into_iter().collect()
}

/// Simulates `replicates` coupled pairs with seeds `(seed, r, ·)`.
pub fn coupled_ensemble(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    h: &ShiftFunction,
    replicates: usize,
    experiment_seed: u64,
) -> Result<Vec<CoupledPair>> {
    let mut lean = cfg.clone();
    lean.snapshot_stride = usize::MAX;
    collect_ordered(
        (0..replicates)
            .into_par_iter()
            .map(|r| coupled_solve(m, &lean, x0, h, SeedSpec::new(experiment_seed, r as u64, 0))),
    )
}

/// Monte Carlo estimate of `E^Q[sup_t ‖X_t − Y_t‖²_H]` against
/// `C(T, K₂, C_B)·∫‖h‖²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub replicates: usize,
    pub estimate: MeanEstimate,
    /// `∫₀^T ‖h‖²_U ds = 2·H(Q|P)`.
    pub integral_h_sq: f64,
    pub c_t2: T2Constant,
    pub bound: f64,
    /// `bound − (estimate + 3·stderr)`.
    pub margin: f64,
    pub verdict: Verdict,
}

pub fn contraction_from_pairs(
    m: &ModelSpec,
    pairs: &[CoupledPair],
    entropy: f64,
) -> Result<ContractionReport> {
    if pairs.len() < 2 {
        return Err(Error::Parameter("at least 2 replicates are required".into()));
    }
    let c = &m.constants;
    let c_t2 = t2_constant(&T2ConstantQuery::new(c.horizon_t, c.k2, c.c_b, c.c1))?;
    let gaps: Vec<f64> = pairs.iter().map(|p| p.sup_gap_sq).collect();
    let estimate = mean_estimate(&gaps);
    let integral_h_sq = 2.0 * entropy;
    let bound = c_t2.value * integral_h_sq;
    let verdict = Verdict::one_sided(&estimate, bound);
    Ok(ContractionReport {
        replicates: pairs.len(),
        margin: bound - estimate.upper(3.0),
        estimate,
        integral_h_sq,
        c_t2,
        bound,
        verdict,
    })
}

pub fn contraction_report(
    m: &ModelSpec,
    cfg: &SolverConfig,
    x0: &Field,
    h: &ShiftFunction,
    replicates: usize,
    experiment_seed: u64,
) -> Result<ContractionReport> {
    if replicates < 2 {
        return Err(Error::Parameter("at least 2 replicates are required".into()));
    }
    let entropy = shift_entropy(h, cfg, m.noise.truncation())?;
    let pairs = coupled_ensemble(m, cfg, x0, h, replicates, experiment_seed)?;
    contraction_from_pairs(m, &pairs, entropy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseOperator;
    use crate::spaces::Field1D;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn heat_single_mode(t: f64) -> ModelSpec {
        ModelSpec::heat(NoiseOperator::single_mode(8, 1.0).unwrap(), t)
    }

    #[test]
    fn entropy_examples() {
        let cfg = SolverConfig::new(1e-3, 1.0);
        assert_eq!(shift_entropy(&ShiftFunction::Zero, &cfg, 4).unwrap(), 0.0);
        let unit = shift_entropy(&ShiftFunction::unit_first_mode(), &cfg, 4).unwrap();
        assert_relative_eq!(unit, 0.5, max_relative = 1e-12);
        let c = shift_entropy(&ShiftFunction::Constant { amplitude: 1.0 }, &cfg, 4).unwrap();
        assert_relative_eq!(c, 0.5, max_relative = 1e-12);
        let ramp = ShiftFunction::Ramp {
            mode_index: 1,
            amplitude: 1.0,
        };
        let e = shift_entropy(&ramp, &cfg, 4).unwrap();
        assert!((e - 1.0 / 6.0).abs() < 1e-6, "{e}");
        assert!(ShiftFunction::Mode { mode_index: 5, amplitude: 1.0 }.validate(4).is_err());
        assert!(ShiftFunction::Mode { mode_index: 0, amplitude: 1.0 }.validate(4).is_err());
    }

    #[test]
    fn shift_json_shape() {
        let h: ShiftFunction =
            serde_json::from_str(r#"{"type":"mode","mode_index":2,"amplitude":0.5}"#).unwrap();
        assert_eq!(
            h,
            ShiftFunction::Mode {
                mode_index: 2,
                amplitude: 0.5
            }
        );
        let r: ShiftFunction = serde_json::from_str(r#"{"type":"ramp","amplitude":1.0}"#).unwrap();
        assert_eq!(r.on_interval(0, 0.5, 2), vec![0.25, 0.0]);
    }

    #[test]
    fn zero_shift_gives_identical_legs() {
        let m = ModelSpec::burgers(NoiseOperator::power_law(8, 1.0, 1.0, None).unwrap(), 0.2);
        let cfg = SolverConfig::new(1e-3, 0.2);
        let x0: Field = Field1D::sine(16, 1, 0.5).into();
        let p = coupled_solve(&m, &cfg, &x0, &ShiftFunction::Zero, SeedSpec::new(1, 0, 0)).unwrap();
        assert_eq!(p.sup_gap_sq, 0.0);
        assert_eq!(p.x_traj, p.y_traj);
        assert_eq!(log_radon_nikodym(&p), 0.0);
    }

    #[test]
    fn heat_gap_matches_ode() {
        let m = heat_single_mode(1.0);
        let cfg = SolverConfig::new(2.5e-4, 1.0);
        let x0: Field = Field1D::zeros(32).into();
        let p = coupled_solve(&m, &cfg, &x0, &ShiftFunction::unit_first_mode(), SeedSpec::new(2, 0, 0))
            .unwrap();
        let oracle = ((1.0 - (-PI * PI).exp()) / (PI * PI)).powi(2);
        assert!((oracle - 0.01024).abs() < 5e-5);
        assert!((p.sup_gap_sq / oracle - 1.0).abs() < 0.01, "{} vs {oracle}", p.sup_gap_sq);
    }

    #[test]
    fn heat_gap_is_linear_in_shift() {
        let m = heat_single_mode(1.0);
        let cfg = SolverConfig::new(1e-2, 1.0);
        let x0: Field = Field1D::zeros(8).into();
        let h = ShiftFunction::unit_first_mode();
        let a = coupled_solve(&m, &cfg, &x0, &h, SeedSpec::new(3, 0, 0)).unwrap();
        let b = coupled_solve(&m, &cfg, &x0, &h.scaled(2.0), SeedSpec::new(3, 0, 0)).unwrap();
        assert!((b.terminal_gap - 2.0 * a.terminal_gap).abs() < 1e-10);
    }

    #[test]
    fn contraction_zero_shift_passes() {
        let m = heat_single_mode(0.1);
        let cfg = SolverConfig::new(1e-2, 0.1);
        let x0: Field = Field1D::zeros(8).into();
        let r = contraction_report(&m, &cfg, &x0, &ShiftFunction::Zero, 4, 0).unwrap();
        assert_eq!(r.estimate.mean, 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn contraction_heat_bound_is_four() {
        let m = heat_single_mode(1.0);
        let cfg = SolverConfig::new(1e-2, 1.0);
        let x0: Field = Field1D::zeros(8).into();
        let r = contraction_report(&m, &cfg, &x0, &ShiftFunction::unit_first_mode(), 8, 0).unwrap();
        assert_relative_eq!(r.bound, 4.0, max_relative = 1e-4);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.estimate.mean < 0.02);
    }

    #[test]
    fn log_rn_under_reference_has_unit_mean_exponential() {
        let cfg = SolverConfig::new(1e-2, 1.0);
        let r = normalization_report(&ShiftFunction::unit_first_mode(), &cfg, 4, 2000, 9).unwrap();
        assert_eq!(r.normalization_verdict, Verdict::Pass, "{r:?}");
        assert_eq!(r.entropy_verdict, Verdict::Pass, "{r:?}");
    }
}
