//! Truncated cylindrical Wiener noise and diagonal Hilbert–Schmidt operators.
//!
//! `U` is identified with `ℝ^{N_W}`; coordinate `j` drives the `j`-th real
//! orthonormal basis function of `H`:
//!
//! * interval: `e_{j+1}(x) = √2·sin((j+1)πx)`;
//! * torus: the divergence-free modes `√2·cos(2πk·x)·k⊥/|k|` and
//!   `√2·sin(2πk·x)·k⊥/|k|`, enumerated over the upper half-plane by
//!   increasing `|k|²`.
//!
//! Random streams are counter-based: the ChaCha key is built directly from
//! `(experiment_seed, replicate, step, domain)`, so any stream can be
//! regenerated without replaying its predecessors.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{Field, Field1D, Field2D};

/// Identifies one counter-based random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub experiment_seed: u64,
    pub replicate: u64,
    pub step: u64,
}

/// Separates the streams used for different purposes under the same
/// `(seed, replicate, step)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamDomain {
    Increment = 0x5749_454e_4552,
    Audit = 0x4155_4449_54,
    Synthetic = 0x5359_4e54,
}

impl SeedSpec {
    pub fn new(experiment_seed: u64, replicate: u64, step: u64) -> Self {
        Self {
            experiment_seed,
            replicate,
            step,
        }
    }

    pub fn with_step(self, step: u64) -> Self {
        Self { step, ..self }
    }

    pub fn with_replicate(self, replicate: u64) -> Self {
        Self { replicate, ..self }
    }

    pub fn stream(&self, domain: StreamDomain) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.experiment_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replicate.to_le_bytes());
        key[16..24].copy_from_slice(&self.step.to_le_bytes());
        key[24..32].copy_from_slice(&(domain as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// Bounded scalar gain `g(r) = g_min + (g_max − g_min)/(1 + r²)` applied
/// as a function of `r = ‖v‖_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    pub g_min: f64,
    pub g_max: f64,
}

impl Clamp {
    pub fn gain(&self, r: f64) -> f64 {
        self.g_min + (self.g_max - self.g_min) / (1.0 + r * r)
    }

    /// Global Lipschitz constant of `gain`: `(g_max − g_min)·3√3/8`.
    pub fn lipschitz(&self) -> f64 {
        (self.g_max - self.g_min) * 3.0 * 3.0_f64.sqrt() / 8.0
    }
}

/// `B(v) = g(‖v‖_H)·diag(b_1, …, b_{N_W})` mapping `U → H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseOperator {
    gains: Vec<f64>,
    clamp: Option<Clamp>,
    c_b: f64,
}

impl NoiseOperator {
    /// Builds an operator and checks `Σ b_k²·g_max² ≤ C_B`.
    pub fn new(gains: Vec<f64>, clamp: Option<Clamp>, c_b: f64) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Parameter("noise needs at least one mode".into()));
        }
        if gains.iter().any(|g| !g.is_finite()) || !(c_b > 0.0) || !c_b.is_finite() {
            return Err(Error::Parameter("noise gains and C_B must be finite, C_B > 0".into()));
        }
        if let Some(c) = clamp {
            if !(c.g_min >= 0.0 && c.g_min <= c.g_max && c.g_max > 0.0) {
                return Err(Error::Parameter(format!(
                    "clamp must satisfy 0 ≤ g_min ≤ g_max, g_max > 0 (got {c:?})"
                )));
            }
        }
        let op = Self { gains, clamp, c_b };
        let hs_max = op.trace() * op.g_max().powi(2);
        if hs_max > c_b * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "Hilbert–Schmidt bound violated: Σb²·g_max² = {hs_max} > C_B = {c_b}"
            )));
        }
        Ok(op)
    }

    /// Gains `b_k ∝ k^{-exponent}` normalised so that `Σ b_k²·g_max² = C_B`.
    pub fn power_law(n_w: usize, exponent: f64, c_b: f64, clamp: Option<Clamp>) -> Result<Self> {
        if n_w == 0 {
            return Err(Error::Parameter("N_W must be positive".into()));
        }
        let raw: Vec<f64> = (1..=n_w).map(|k| (k as f64).powf(-exponent)).collect();
        let g_max = clamp.map_or(1.0, |c| c.g_max);
        let norm = (c_b / (raw.iter().map(|b| b * b).sum::<f64>() * g_max * g_max)).sqrt();
        Self::new(raw.into_iter().map(|b| b * norm).collect(), clamp, c_b)
    }

    /// Additive noise acting on the first basis function only, `b_1 = √C_B`.
    pub fn single_mode(n_w: usize, c_b: f64) -> Result<Self> {
        if n_w == 0 {
            return Err(Error::Parameter("N_W must be positive".into()));
        }
        let mut gains = vec![0.0; n_w];
        gains[0] = c_b.sqrt();
        Self::new(gains, None, c_b)
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn truncation(&self) -> usize {
        self.gains.len()
    }

    pub fn clamp(&self) -> Option<Clamp> {
        self.clamp
    }

    pub fn c_b(&self) -> f64 {
        self.c_b
    }

    pub fn is_additive(&self) -> bool {
        self.clamp.is_none()
    }

    fn g_max(&self) -> f64 {
        self.clamp.map_or(1.0, |c| c.g_max)
    }

    /// `Σ b_k²`.
    pub fn trace(&self) -> f64 {
        self.gains.iter().map(|b| b * b).sum()
    }

    pub fn gain_at(&self, v: &Field) -> f64 {
        match self.clamp {
            None => 1.0,
            Some(c) => c.gain(v.norm_h_sq().sqrt()),
        }
    }

    /// Lipschitz constant of `v ↦ B(v)` from `H` to `L₂(U;H)`.
    pub fn lipschitz(&self) -> f64 {
        self.clamp.map_or(0.0, |c| c.lipschitz() * self.trace().sqrt())
    }

    /// `‖B(v₁) − B(v₂)‖_{L₂(U;H)}`.
    pub fn hs_distance(&self, v1: &Field, v2: &Field) -> f64 {
        (self.gain_at(v1) - self.gain_at(v2)).abs() * self.trace().sqrt()
    }

    /// Checks that the operator fits the discretisation of `v`.
    pub fn check_geometry(&self, v: &Field) -> Result<()> {
        let capacity = match v {
            Field::D1(f) => f.n_modes(),
            Field::D2(f) => torus_modes(f.cutoff()).len() * 2,
        };
        if self.truncation() > capacity {
            return Err(Error::Geometry(format!(
                "N_W = {} exceeds the {} available basis functions",
                self.truncation(),
                capacity
            )));
        }
        Ok(())
    }
}

/// Upper half-plane wavevectors with `|k_x|, |k_y| ≤ cutoff`, ordered by
/// `(|k|², k_x, k_y)`.
pub fn torus_modes(cutoff: usize) -> Vec<(i64, i64)> {
    let k = cutoff as i64;
    let mut modes: Vec<(i64, i64)> = (-k..=k)
        .flat_map(|kx| (-k..=k).map(move |ky| (kx, ky)))
        .filter(|&(kx, ky)| ky > 0 || (ky == 0 && kx > 0))
        .collect();
    modes.sort_by_key(|&(kx, ky)| (kx * kx + ky * ky, kx, ky));
    modes
}

/// Coefficient of `U`-coordinate `j` on the torus: returns the wavevector and
/// the complex coefficient pair placed at `+k` (its conjugate sits at `−k`).
fn torus_basis(modes: &[(i64, i64)], j: usize) -> ((i64, i64), (Complex64, Complex64)) {
    let (kx, ky) = modes[j / 2];
    let norm = ((kx * kx + ky * ky) as f64).sqrt();
    let (tx, ty) = (-(ky as f64) / norm, kx as f64 / norm);
    // √2 cos θ → (1/√2) at ±k ; √2 sin θ → (−i/√2) at +k
    let c = if j % 2 == 0 {
        Complex64::new(1.0 / SQRT_2, 0.0)
    } else {
        Complex64::new(0.0, -1.0 / SQRT_2)
    };
    ((kx, ky), (c * tx, c * ty))
}

/// Embeds a vector of `U` coordinates as a field with the geometry of `like`
/// (no gains applied).
pub fn embed(like: &Field, w: &[f64]) -> Result<Field> {
    match like {
        Field::D1(f) => {
            if w.len() > f.n_modes() {
                return Err(Error::Geometry("more U coordinates than modes".into()));
            }
            let mut out = Field1D::zeros(f.n_modes());
            out.coeffs_mut()[..w.len()].copy_from_slice(w);
            Ok(Field::D1(out))
        }
        Field::D2(f) => {
            let modes = torus_modes(f.cutoff());
            if w.len() > 2 * modes.len() {
                return Err(Error::Geometry("more U coordinates than modes".into()));
            }
            let mut out = Field2D::zeros(f.cutoff());
            for (j, wj) in w.iter().enumerate() {
                if *wj == 0.0 {
                    continue;
                }
                let ((kx, ky), (cx, cy)) = torus_basis(&modes, j);
                let (ox, oy) = out.get(kx, ky);
                out.set_mode(kx, ky, (ox + cx * *wj, oy + cy * *wj));
            }
            Ok(Field::D2(out))
        }
    }
}

/// Gaussian increment with `N_W` independent `N(0, dt)` coordinates.
pub fn sample_increment(op: &NoiseOperator, dt: f64, seed: SeedSpec) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    Ok(increment(op.truncation(), dt, seed))
}

pub(crate) fn increment(n_w: usize, dt: f64, seed: SeedSpec) -> Vec<f64> {
    let mut rng = seed.stream(StreamDomain::Increment);
    let sd = dt.sqrt();
    (0..n_w)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd
        })
        .collect()
}

/// `‖B(v)‖_{L₂(U;H)} = g(‖v‖_H)·√(Σ b_k²)`.
pub fn hs_norm(op: &NoiseOperator, v: &Field) -> Result<f64> {
    v.validate()?;
    Ok(op.gain_at(v) * op.trace().sqrt())
}

/// `B(v)·w` for an increment or shift vector `w ∈ U`.
pub fn apply_noise(op: &NoiseOperator, v: &Field, w: &[f64]) -> Result<Field> {
    if w.len() != op.truncation() {
        return Err(Error::Parameter(format!(
            "expected {} noise coordinates, got {}",
            op.truncation(),
            w.len()
        )));
    }
    let g = op.gain_at(v);
    let scaled: Vec<f64> = w.iter().zip(&op.gains).map(|(wi, b)| g * b * wi).collect();
    embed(v, &scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    trait ScaleTo {
        fn scale_to(self, norm: f64) -> Self;
    }

    impl ScaleTo for Field1D {
        fn scale_to(self, norm: f64) -> Self {
            let n = self.norm_h_sq().sqrt();
            let c: Vec<f64> = self.coeffs().iter().map(|x| x * norm / n).collect();
            Field1D::new(c).unwrap()
        }
    }

    #[test]
    fn same_seed_same_increment() {
        let op = NoiseOperator::power_law(8, 1.0, 1.0, None).unwrap();
        let s = SeedSpec::new(7, 3, 11);
        assert_eq!(
            sample_increment(&op, 1e-3, s).unwrap(),
            sample_increment(&op, 1e-3, s).unwrap()
        );
        assert_ne!(
            sample_increment(&op, 1e-3, s).unwrap(),
            sample_increment(&op, 1e-3, s.with_step(12)).unwrap()
        );
    }

    #[test]
    fn nonpositive_dt_is_rejected() {
        let op = NoiseOperator::single_mode(2, 1.0).unwrap();
        assert!(sample_increment(&op, 0.0, SeedSpec::new(0, 0, 0)).is_err());
        assert!(sample_increment(&op, -1.0, SeedSpec::new(0, 0, 0)).is_err());
    }

    #[test]
    fn increment_variance_is_dt() {
        let dt = 1e-3;
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| increment(1, dt, SeedSpec::new(1, i, 0))[0])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        // var(X²) = 2 dt² for Gaussian X
        let se = (2.0_f64).sqrt() * dt / (n as f64).sqrt();
        assert!((var - dt).abs() < 3.0 * se, "var {var} vs dt {dt}");
    }

    #[test]
    fn disjoint_streams_are_uncorrelated() {
        let n = 10_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let a = increment(1, 1.0, SeedSpec::new(5, i, 0))[0];
            let b = increment(1, 1.0, SeedSpec::new(5, i, 1))[0];
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!(rho.abs() < 0.05, "correlation {rho}");
    }

    #[test]
    fn hs_norm_examples() {
        let v: Field = Field1D::sine(4, 1, 3.0).into();
        let op = NoiseOperator::new(vec![1.0, 0.0, 0.0], None, 1.0).unwrap();
        assert_eq!(hs_norm(&op, &v).unwrap(), 1.0);
        let op = NoiseOperator::new(vec![1.0, 1.0], None, 2.0).unwrap();
        assert_relative_eq!(hs_norm(&op, &v).unwrap(), 2.0_f64.sqrt());
    }

    #[test]
    fn clamped_hs_norm_respects_budget() {
        let c_b = 0.7;
        let op = NoiseOperator::power_law(
            6,
            1.0,
            c_b,
            Some(Clamp {
                g_min: 0.5,
                g_max: 1.0,
            }),
        )
        .unwrap();
        assert_relative_eq!(op.trace(), c_b, epsilon = 1e-12);
        let mut rng = SeedSpec::new(2, 0, 0).stream(StreamDomain::Audit);
        for _ in 0..1000 {
            let scale: f64 = rng.random_range(0.0..5.0);
            let v: Field = Field1D::random(6, 1.0, &mut rng).scale_to(scale).into();
            assert!(hs_norm(&op, &v).unwrap() <= c_b.sqrt() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn hs_bound_violation_is_rejected() {
        assert!(NoiseOperator::new(vec![1.0, 1.0], None, 1.0).is_err());
    }

    #[test]
    fn apply_noise_examples() {
        let op = NoiseOperator::power_law(4, 1.0, 1.0, None).unwrap();
        let v: Field = Field1D::zeros(8).into();
        assert_eq!(apply_noise(&op, &v, &[0.0; 4]).unwrap().norm_h_sq(), 0.0);
        let e1 = apply_noise(&op, &v, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e1.as_1d().unwrap().coeffs()[0], op.gains()[0]);
        assert!(apply_noise(&op, &v, &[1.0]).is_err());

        let mut rng = SeedSpec::new(9, 0, 0).stream(StreamDomain::Audit);
        let w1: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
        let w2: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let lhs = apply_noise(&op, &v, &sum).unwrap();
        let rhs = apply_noise(&op, &v, &w1)
            .unwrap()
            .axpy(1.0, &apply_noise(&op, &v, &w2).unwrap())
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().norm_h_sq().sqrt() < 1e-12);
    }

    #[test]
    fn torus_basis_is_orthonormal_and_divergence_free() {
        let like: Field = Field2D::zeros(3).into();
        let n = 12;
        let fields: Vec<Field> = (0..n)
            .map(|j| {
                let mut w = vec![0.0; n];
                w[j] = 1.0;
                embed(&like, &w).unwrap()
            })
            .collect();
        for (i, a) in fields.iter().enumerate() {
            assert!(a.as_2d().unwrap().is_divergence_free());
            a.validate().unwrap();
            for (j, b) in fields.iter().enumerate() {
                let ip = a.inner_h(b).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-14, "<{i},{j}> = {ip}");
            }
        }
    }
}
