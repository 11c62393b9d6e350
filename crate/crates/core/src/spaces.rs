//! Finite spectral representations of `V ⊂ H ⊂ V*`.
//!
//! Two geometries are supported:
//!
//! * the unit interval with homogeneous Dirichlet conditions, expanded in the
//!   sine basis `e_k(x) = √2·sin(kπx)`, which is orthonormal in `H = L²(0,1)`;
//! * the periodic unit torus, where a vector field is stored through its
//!   complex Fourier coefficients `û(k)` for `k ∈ [-K, K]²`, `k ≠ 0`.
//!
//! In both cases `‖·‖_H` is the ℓ² norm of the coefficients (Parseval) and
//! `‖·‖_V` weights coefficient `k` by the square root of the Dirichlet
//! Laplacian eigenvalue: `kπ` on the interval and `2π|k|` on the torus.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking Hermitian symmetry and divergence.
pub const SYMMETRY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// 1-D Dirichlet sine fields
// ---------------------------------------------------------------------------

/// A field on `[0,1]` with zero boundary values, `v = Σ c_k e_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field1D {
    coeffs: Vec<f64>,
}

impl Field1D {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidField("at least one mode is required".into()));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidField(format!("coefficient {} is not finite", i + 1)));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(n_modes: usize) -> Self {
        assert!(n_modes > 0, "n_modes must be positive");
        Self {
            coeffs: vec![0.0; n_modes],
        }
    }

    /// The orthonormal basis element `e_mode` (1-based).
    pub fn basis(n_modes: usize, mode: usize) -> Self {
        assert!(mode >= 1 && mode <= n_modes, "mode {mode} outside 1..={n_modes}");
        let mut f = Self::zeros(n_modes);
        f.coeffs[mode - 1] = 1.0;
        f
    }

    /// `amplitude · sin(mode·π·x)`.
    pub fn sine(n_modes: usize, mode: usize, amplitude: f64) -> Self {
        let mut f = Self::basis(n_modes, mode);
        f.coeffs[mode - 1] = amplitude / SQRT_2;
        f
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Wavenumber `kπ` of the 0-based coefficient index.
    #[inline]
    pub fn wavenumber(index: usize) -> f64 {
        (index + 1) as f64 * PI
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidField(format!("coefficient {} is not finite", i + 1)));
        }
        Ok(())
    }

    /// Point evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * SQRT_2 * (Self::wavenumber(i) * x).sin())
            .sum()
    }

    /// Point evaluation of `∂ₓv`.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = Self::wavenumber(i);
                c * SQRT_2 * w * (w * x).cos()
            })
            .sum()
    }

    pub fn norm_h_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn norm_v_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = Self::wavenumber(i);
                w * w * c * c
            })
            .sum()
    }

    pub fn norm_v_dual_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = Self::wavenumber(i);
                c * c / (w * w)
            })
            .sum()
    }

    pub fn inner_h(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn laplacian(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = Self::wavenumber(i);
                -w * w * c
            })
            .collect();
        Self { coeffs }
    }

    /// Random field with coefficient envelope `k^{-decay}`.
    pub fn random<R: Rng + ?Sized>(n_modes: usize, decay: f64, rng: &mut R) -> Self {
        let coeffs = (1..=n_modes)
            .map(|k| {
                let z: f64 = rng.sample(StandardNormal);
                z * (k as f64).powf(-decay)
            })
            .collect();
        Self { coeffs }
    }
}

/// Quadrature rule for physical-space integrals on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Trapezoid rule on the uniform grid `x_j = j/n`, `j = 0..=n`.
    UniformTrapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadrature {
    pub n_points: usize,
    pub rule: QuadratureRule,
}

impl Quadrature {
    pub fn new(n_points: usize) -> Self {
        Self {
            n_points,
            rule: QuadratureRule::UniformTrapezoid,
        }
    }

    /// The minimal anti-aliased rule for `n_modes` modes.
    pub fn for_modes(n_modes: usize) -> Self {
        Self::new(4 * n_modes)
    }

    pub fn check(&self, n_modes: usize) -> Result<()> {
        let required = 4 * n_modes;
        if self.n_points < required {
            return Err(Error::Resolution {
                n_points: self.n_points,
                n_modes,
                required,
            });
        }
        Ok(())
    }
}

/// Precomputed synthesis/analysis tables for the sine basis on a uniform
/// trapezoid grid with `n_points` intervals.
///
/// The trapezoid rule on this grid integrates `cos(mπx)` exactly for
/// `m < 2·n_points`, so projections of products are alias-free whenever the
/// product's highest frequency stays below that bound.
#[derive(Debug, Clone)]
pub struct SineGrid {
    n_modes: usize,
    n_points: usize,
    // row-major [point][mode]
    sin_table: Vec<f64>,
    dsin_table: Vec<f64>,
    weights: Vec<f64>,
}

impl SineGrid {
    pub fn new(n_modes: usize, n_points: usize) -> Self {
        assert!(n_modes > 0 && n_points > 0);
        let np = n_points + 1;
        let mut sin_table = Vec::with_capacity(np * n_modes);
        let mut dsin_table = Vec::with_capacity(np * n_modes);
        for j in 0..np {
            let x = j as f64 / n_points as f64;
            for i in 0..n_modes {
                let w = Field1D::wavenumber(i);
                sin_table.push(SQRT_2 * (w * x).sin());
                dsin_table.push(SQRT_2 * w * (w * x).cos());
            }
        }
        let h = 1.0 / n_points as f64;
        let mut weights = vec![h; np];
        weights[0] = 0.5 * h;
        weights[n_points] = 0.5 * h;
        Self {
            n_modes,
            n_points,
            sin_table,
            dsin_table,
            weights,
        }
    }

    pub fn from_quadrature(n_modes: usize, q: &Quadrature) -> Result<Self> {
        q.check(n_modes)?;
        Ok(Self::new(n_modes, q.n_points))
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    fn synth(&self, table: &[f64], coeffs: &[f64]) -> Vec<f64> {
        let n = self.n_modes;
        table
            .chunks_exact(n)
            .map(|row| row.iter().zip(coeffs).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Grid values of `v`.
    pub fn values(&self, v: &Field1D) -> Vec<f64> {
        debug_assert_eq!(v.n_modes(), self.n_modes);
        self.synth(&self.sin_table, v.coeffs())
    }

    /// Grid values of `∂ₓv`.
    pub fn derivative_values(&self, v: &Field1D) -> Vec<f64> {
        debug_assert_eq!(v.n_modes(), self.n_modes);
        self.synth(&self.dsin_table, v.coeffs())
    }

    /// `L²` projection of grid values onto the sine modes.
    pub fn project(&self, g: &[f64]) -> Field1D {
        let n = self.n_modes;
        let mut coeffs = vec![0.0; n];
        for ((row, gj), wj) in self.sin_table.chunks_exact(n).zip(g).zip(&self.weights) {
            let s = gj * wj;
            for (c, e) in coeffs.iter_mut().zip(row) {
                *c += s * e;
            }
        }
        Field1D { coeffs }
    }

    /// Trapezoid integral of grid values.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        g.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }
}

// ---------------------------------------------------------------------------
// 2-D periodic vector fields
// ---------------------------------------------------------------------------

/// A real mean-zero vector field on the unit torus,
/// `u(x) = Σ_k û(k) e^{2πi k·x}` with `û(−k) = conj(û(k))`.
///
/// Coefficients are stored densely for `k ∈ [-K, K]²` (the zero mode is kept
/// at zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    cutoff: usize,
    ux: Vec<Complex64>,
    uy: Vec<Complex64>,
}

impl Field2D {
    pub fn zeros(cutoff: usize) -> Self {
        assert!(cutoff > 0, "cutoff must be positive");
        let n = (2 * cutoff + 1) * (2 * cutoff + 1);
        Self {
            cutoff,
            ux: vec![Complex64::new(0.0, 0.0); n],
            uy: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_components(cutoff: usize, ux: Vec<Complex64>, uy: Vec<Complex64>) -> Result<Self> {
        let n = (2 * cutoff + 1) * (2 * cutoff + 1);
        if cutoff == 0 || ux.len() != n || uy.len() != n {
            return Err(Error::InvalidField(format!(
                "expected {n} coefficients per component for cutoff {cutoff}"
            )));
        }
        let f = Self { cutoff, ux, uy };
        f.validate()?;
        Ok(f)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    #[inline]
    pub fn index(&self, kx: i64, ky: i64) -> usize {
        let k = self.cutoff as i64;
        debug_assert!(kx.abs() <= k && ky.abs() <= k);
        ((kx + k) as usize) * self.side() + (ky + k) as usize
    }

    /// Wavevector of a storage index.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> (i64, i64) {
        let k = self.cutoff as i64;
        let s = self.side();
        ((idx / s) as i64 - k, (idx % s) as i64 - k)
    }

    pub fn get(&self, kx: i64, ky: i64) -> (Complex64, Complex64) {
        let i = self.index(kx, ky);
        (self.ux[i], self.uy[i])
    }

    /// Sets `û(k)` and its Hermitian partner `û(−k)`.
    pub fn set_mode(&mut self, kx: i64, ky: i64, value: (Complex64, Complex64)) {
        assert!(kx != 0 || ky != 0, "the mean mode is fixed at zero");
        let i = self.index(kx, ky);
        let j = self.index(-kx, -ky);
        self.ux[i] = value.0;
        self.uy[i] = value.1;
        self.ux[j] = value.0.conj();
        self.uy[j] = value.1.conj();
    }

    pub fn ux(&self) -> &[Complex64] {
        &self.ux
    }

    pub fn uy(&self) -> &[Complex64] {
        &self.uy
    }

    pub fn components_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        (&mut self.ux, &mut self.uy)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .ux
            .iter()
            .chain(&self.uy)
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::InvalidField("non-finite Fourier coefficient".into()));
        }
        let zero = self.index(0, 0);
        if self.ux[zero].norm() > 0.0 || self.uy[zero].norm() > 0.0 {
            return Err(Error::InvalidField("mean mode must vanish".into()));
        }
        let scale = 1.0 + self.norm_h();
        if self.hermitian_defect() > SYMMETRY_TOL * scale {
            return Err(Error::InvalidField("coefficients are not Hermitian-symmetric".into()));
        }
        Ok(())
    }

    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.ux.len() {
            let (kx, ky) = self.wavevector(i);
            let j = self.index(-kx, -ky);
            worst = worst
                .max((self.ux[i] - self.ux[j].conj()).norm())
                .max((self.uy[i] - self.uy[j].conj()).norm());
        }
        worst
    }

    /// Largest `|k·û(k)|` over all modes.
    pub fn divergence_defect(&self) -> f64 {
        (0..self.ux.len())
            .map(|i| {
                let (kx, ky) = self.wavevector(i);
                (self.ux[i] * kx as f64 + self.uy[i] * ky as f64).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_defect() <= SYMMETRY_TOL * (1.0 + self.norm_h())
    }

    fn weighted_sum(&self, weight: impl Fn(f64) -> f64) -> f64 {
        (0..self.ux.len())
            .map(|i| {
                let (kx, ky) = self.wavevector(i);
                let k2 = (kx * kx + ky * ky) as f64;
                if k2 == 0.0 {
                    0.0
                } else {
                    weight(k2) * (self.ux[i].norm_sqr() + self.uy[i].norm_sqr())
                }
            })
            .sum()
    }

    pub fn norm_h_sq(&self) -> f64 {
        self.weighted_sum(|_| 1.0)
    }

    pub fn norm_h(&self) -> f64 {
        self.norm_h_sq().sqrt()
    }

    pub fn norm_v_sq(&self) -> f64 {
        self.weighted_sum(|k2| 4.0 * PI * PI * k2)
    }

    pub fn norm_v_dual_sq(&self) -> f64 {
        self.weighted_sum(|k2| 1.0 / (4.0 * PI * PI * k2))
    }

    pub fn inner_h(&self, other: &Self) -> f64 {
        self.ux
            .iter()
            .zip(&other.ux)
            .chain(self.uy.iter().zip(&other.uy))
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    /// Multiplies every coefficient by `factor(|k|²)`.
    pub fn scale_modes(&mut self, factor: impl Fn(f64) -> f64) {
        for i in 0..self.ux.len() {
            let (kx, ky) = self.wavevector(i);
            let f = factor((kx * kx + ky * ky) as f64);
            self.ux[i] *= f;
            self.uy[i] *= f;
        }
        let zero = self.index(0, 0);
        self.ux[zero] = Complex64::new(0.0, 0.0);
        self.uy[zero] = Complex64::new(0.0, 0.0);
    }

    pub fn laplacian(&self) -> Self {
        let mut out = self.clone();
        out.scale_modes(|k2| -4.0 * PI * PI * k2);
        out
    }

    /// Leray–Helmholtz projection onto divergence-free fields.
    pub fn helmholtz_project(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.ux.len() {
            let (kx, ky) = out.wavevector(i);
            let k2 = (kx * kx + ky * ky) as f64;
            if k2 == 0.0 {
                continue;
            }
            let (kx, ky) = (kx as f64, ky as f64);
            let dot = out.ux[i] * kx + out.uy[i] * ky;
            out.ux[i] -= dot * (kx / k2);
            out.uy[i] -= dot * (ky / k2);
        }
        out
    }

    /// Replaces every coefficient by the Hermitian average
    /// `½(û(k) + conj(û(−k)))`, removing round-off asymmetry.
    pub fn symmetrize(&mut self) {
        let n = self.ux.len();
        for i in 0..n {
            let (kx, ky) = self.wavevector(i);
            let j = self.index(-kx, -ky);
            if j < i {
                continue;
            }
            let ax = 0.5 * (self.ux[i] + self.ux[j].conj());
            let ay = 0.5 * (self.uy[i] + self.uy[j].conj());
            self.ux[i] = ax;
            self.uy[i] = ay;
            self.ux[j] = ax.conj();
            self.uy[j] = ay.conj();
        }
        let zero = self.index(0, 0);
        self.ux[zero] = Complex64::new(0.0, 0.0);
        self.uy[zero] = Complex64::new(0.0, 0.0);
    }

    /// Samples a physical vector field on a grid and keeps the modes up to
    /// `cutoff`. Exact for trigonometric polynomials of that degree.
    pub fn from_physical(cutoff: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let grid = Grid2D::for_products(cutoff);
        let m = grid.size();
        let mut gx = vec![0.0; m * m];
        let mut gy = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let (a, b) = f(i as f64 / m as f64, j as f64 / m as f64);
                gx[i * m + j] = a;
                gy[i * m + j] = b;
            }
        }
        let mut out = Self::zeros(cutoff);
        out.ux = grid.to_spectral(&gx, cutoff);
        out.uy = grid.to_spectral(&gy, cutoff);
        out.symmetrize();
        out
    }

    /// Taylor–Green vortex `A·(sin 2πx cos 2πy, −cos 2πx sin 2πy)`.
    pub fn taylor_green(cutoff: usize, amplitude: f64) -> Self {
        let mut f = Self::zeros(cutoff);
        // sin(a)cos(b) = ¼i⁻¹ Σ over (±1,±1) with signs; written out per mode.
        let q = Complex64::new(0.0, -0.25 * amplitude);
        // ux = A sin(2πx)cos(2πy): coefficient at (sx, sy) is sx·(−i/4)·A
        // uy = −A cos(2πx)sin(2πy): coefficient at (sx, sy) is −sy·(−i/4)·A
        for (sx, sy) in [(1_i64, 1_i64), (1, -1)] {
            f.set_mode(sx, sy, (q * sx as f64, -q * sy as f64));
        }
        f
    }

    /// Random field with envelope `|k|^{-decay}`; projected onto
    /// divergence-free fields when `divergence_free` is set.
    pub fn random<R: Rng + ?Sized>(
        cutoff: usize,
        decay: f64,
        divergence_free: bool,
        rng: &mut R,
    ) -> Self {
        let mut f = Self::zeros(cutoff);
        let k = cutoff as i64;
        for kx in -k..=k {
            for ky in -k..=k {
                if !(ky > 0 || (ky == 0 && kx > 0)) {
                    continue;
                }
                let amp = ((kx * kx + ky * ky) as f64).powf(-0.5 * decay) / SQRT_2;
                let mut draw = || {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * amp
                };
                let a = draw();
                let b = draw();
                f.set_mode(kx, ky, (a, b));
            }
        }
        if divergence_free {
            f.helmholtz_project()
        } else {
            f
        }
    }

    /// Physical grid values of both components on an `m × m` grid.
    pub fn to_grid(&self, grid: &Grid2D) -> (Vec<f64>, Vec<f64>) {
        (
            grid.to_physical(&self.ux, self.cutoff),
            grid.to_physical(&self.uy, self.cutoff),
        )
    }

    /// `(∫|u|⁴)^{1/4}` evaluated on an alias-free grid.
    pub fn norm_l4(&self) -> f64 {
        let grid = Grid2D::new(fft_size(4 * self.cutoff + 1));
        let (gx, gy) = self.to_grid(&grid);
        let m = grid.size();
        let s: f64 = gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| {
                let r = a * a + b * b;
                r * r
            })
            .sum();
        (s / (m * m) as f64).powf(0.25)
    }
}

/// Smallest integer `≥ min` of the form `2^a·3^b`.
pub fn fft_size(min: usize) -> usize {
    let mut best = usize::MAX;
    let mut p3 = 1usize;
    while p3 < 2 * min.max(1) {
        let mut v = p3;
        while v < min {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

/// Uniform `m × m` grid on the torus with cached FFT plans.
#[derive(Clone)]
pub struct Grid2D {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid2D").field("m", &self.m).finish()
    }
}

impl Grid2D {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    /// Grid on which quadratic products of fields with the given cutoff are
    /// alias-free after truncation back to the cutoff (`m > 3K`).
    pub fn for_products(cutoff: usize) -> Self {
        Self::new(fft_size(3 * cutoff + 1))
    }

    pub fn size(&self) -> usize {
        self.m
    }

    fn transform_2d(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        fft.process(data);
        transpose(data, m);
        fft.process(data);
        transpose(data, m);
    }

    /// Inverse transform of spectral coefficients with the given cutoff.
    pub fn to_physical(&self, coeffs: &[Complex64], cutoff: usize) -> Vec<f64> {
        let m = self.m;
        let k = cutoff as i64;
        let side = 2 * cutoff + 1;
        assert!(m >= side, "grid too small for cutoff");
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for (idx, c) in coeffs.iter().enumerate() {
            let kx = (idx / side) as i64 - k;
            let ky = (idx % side) as i64 - k;
            let ix = kx.rem_euclid(m as i64) as usize;
            let iy = ky.rem_euclid(m as i64) as usize;
            buf[ix * m + iy] = *c;
        }
        self.transform_2d(&mut buf, &self.inverse);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Forward transform of real grid values, truncated to `cutoff`.
    pub fn to_spectral(&self, values: &[f64], cutoff: usize) -> Vec<Complex64> {
        let m = self.m;
        let k = cutoff as i64;
        let side = 2 * cutoff + 1;
        let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.transform_2d(&mut buf, &self.forward);
        let norm = 1.0 / (m * m) as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); side * side];
        for (idx, o) in out.iter_mut().enumerate() {
            let kx = (idx / side) as i64 - k;
            let ky = (idx % side) as i64 - k;
            if kx == 0 && ky == 0 {
                continue;
            }
            let ix = kx.rem_euclid(m as i64) as usize;
            let iy = ky.rem_euclid(m as i64) as usize;
            *o = buf[ix * m + iy] * norm;
        }
        out
    }
}

fn transpose(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

// ---------------------------------------------------------------------------
// Geometry-agnostic field
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    D1(Field1D),
    D2(Field2D),
}

impl From<Field1D> for Field {
    fn from(f: Field1D) -> Self {
        Field::D1(f)
    }
}

impl From<Field2D> for Field {
    fn from(f: Field2D) -> Self {
        Field::D2(f)
    }
}

impl Field {
    pub fn validate(&self) -> Result<()> {
        match self {
            Field::D1(f) => f.validate(),
            Field::D2(f) => f.validate(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Field::D1(f) => Field::D1(Field1D::zeros(f.n_modes())),
            Field::D2(f) => Field::D2(Field2D::zeros(f.cutoff())),
        }
    }

    pub fn as_1d(&self) -> Option<&Field1D> {
        match self {
            Field::D1(f) => Some(f),
            Field::D2(_) => None,
        }
    }

    pub fn as_2d(&self) -> Option<&Field2D> {
        match self {
            Field::D2(f) => Some(f),
            Field::D1(_) => None,
        }
    }

    pub fn norm_h_sq(&self) -> f64 {
        match self {
            Field::D1(f) => f.norm_h_sq(),
            Field::D2(f) => f.norm_h_sq(),
        }
    }

    pub fn norm_v_sq(&self) -> f64 {
        match self {
            Field::D1(f) => f.norm_v_sq(),
            Field::D2(f) => f.norm_v_sq(),
        }
    }

    pub fn norm_v_dual_sq(&self) -> f64 {
        match self {
            Field::D1(f) => f.norm_v_dual_sq(),
            Field::D2(f) => f.norm_v_dual_sq(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Field::D1(f) => f.coeffs().iter().all(|c| c.is_finite()),
            Field::D2(f) => f
                .ux()
                .iter()
                .chain(f.uy())
                .all(|c| c.re.is_finite() && c.im.is_finite()),
        }
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        match (self, other) {
            (Field::D1(a), Field::D1(b)) => a.n_modes() == b.n_modes(),
            (Field::D2(a), Field::D2(b)) => a.cutoff() == b.cutoff(),
            _ => false,
        }
    }

    fn check_geometry(&self, other: &Self) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::Geometry("fields live on different discretisations".into()))
        }
    }

    pub fn inner_h(&self, other: &Self) -> Result<f64> {
        self.check_geometry(other)?;
        Ok(match (self, other) {
            (Field::D1(a), Field::D1(b)) => a.inner_h(b),
            (Field::D2(a), Field::D2(b)) => a.inner_h(b),
            _ => unreachable!(),
        })
    }

    /// `self + factor·other`.
    pub fn axpy(&self, factor: f64, other: &Self) -> Result<Self> {
        self.check_geometry(other)?;
        Ok(match (self, other) {
            (Field::D1(a), Field::D1(b)) => Field::D1(Field1D {
                coeffs: a
                    .coeffs
                    .iter()
                    .zip(&b.coeffs)
                    .map(|(x, y)| x + factor * y)
                    .collect(),
            }),
            (Field::D2(a), Field::D2(b)) => {
                let mut out = a.clone();
                for (o, y) in out.ux.iter_mut().zip(&b.ux) {
                    *o += y * factor;
                }
                for (o, y) in out.uy.iter_mut().zip(&b.uy) {
                    *o += y * factor;
                }
                Field::D2(out)
            }
            _ => unreachable!(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, factor: f64) -> Self {
        match self {
            Field::D1(a) => Field::D1(Field1D {
                coeffs: a.coeffs.iter().map(|c| c * factor).collect(),
            }),
            Field::D2(a) => {
                let mut out = a.clone();
                out.scale_modes(|_| factor);
                Field::D2(out)
            }
        }
    }

    /// Multiplies mode coefficients by `factor(λ)` where `λ` is the
    /// Dirichlet-Laplacian eigenvalue of the mode.
    pub fn scale_by_eigenvalue(&mut self, factor: impl Fn(f64) -> f64) {
        match self {
            Field::D1(a) => {
                for (i, c) in a.coeffs.iter_mut().enumerate() {
                    let w = Field1D::wavenumber(i);
                    *c *= factor(w * w);
                }
            }
            Field::D2(a) => a.scale_modes(|k2| factor(4.0 * PI * PI * k2)),
        }
    }

    /// Flat little-endian dump of the coefficients.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            Field::D1(a) => a.coeffs.iter().flat_map(|c| c.to_le_bytes()).collect(),
            Field::D2(a) => a
                .ux
                .iter()
                .chain(&a.uy)
                .flat_map(|c| c.re.to_le_bytes().into_iter().chain(c.im.to_le_bytes()))
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

pub fn norm_h(v: &Field) -> Result<f64> {
    v.validate()?;
    Ok(v.norm_h_sq().sqrt())
}

pub fn norm_v(v: &Field) -> Result<f64> {
    v.validate()?;
    Ok(v.norm_v_sq().sqrt())
}

/// `(∫₀¹ v⁴ dx)^{1/4}` by trapezoid quadrature.
pub fn norm_l4(v: &Field1D, q: &Quadrature) -> Result<f64> {
    v.validate()?;
    let grid = SineGrid::from_quadrature(v.n_modes(), q)?;
    let vals = grid.values(v);
    let quartic: Vec<f64> = vals.iter().map(|x| x.powi(4)).collect();
    Ok(grid.integrate(&quartic).max(0.0).powf(0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareAudit {
    /// `‖v‖²_V / ‖v‖²_H`
    pub ratio: f64,
    pub eta: f64,
    pub passes: bool,
}

/// Checks `‖v‖²_V ≥ η‖v‖²_H`.
pub fn poincare_audit(v: &Field, eta: f64) -> Result<PoincareAudit> {
    v.validate()?;
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!("eta must be positive, got {eta}")));
    }
    let h = v.norm_h_sq();
    if h == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let ratio = v.norm_v_sq() / h;
    Ok(PoincareAudit {
        ratio,
        eta,
        passes: ratio >= eta,
    })
}

pub fn helmholtz_project(u: &Field2D) -> Result<Field2D> {
    u.validate()?;
    Ok(u.helmholtz_project())
}

pub fn laplacian_apply(v: &Field) -> Result<Field> {
    v.validate()?;
    Ok(match v {
        Field::D1(f) => Field::D1(f.laplacian()),
        Field::D2(f) => Field::D2(f.laplacian()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent midpoint-rule quadrature of a function on [0,1].
    fn midpoint(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        (0..n).map(|i| f((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
    }

    #[test]
    fn norm_h_examples() {
        let zero: Field = Field1D::zeros(8).into();
        assert_eq!(norm_h(&zero).unwrap(), 0.0);
        let s: Field = Field1D::sine(8, 1, 1.0).into();
        let oracle = midpoint(|x| (PI * x).sin().powi(2), 4096).sqrt();
        assert_relative_eq!(norm_h(&s).unwrap(), oracle, epsilon = 1e-10);
        assert_relative_eq!(norm_h(&s).unwrap(), 0.5_f64.sqrt(), epsilon = 1e-15);
        let e1: Field = Field1D::basis(8, 1).into();
        assert_eq!(norm_h(&e1).unwrap(), 1.0);
    }

    #[test]
    fn norm_v_examples() {
        let zero: Field = Field1D::zeros(4).into();
        assert_eq!(norm_v(&zero).unwrap(), 0.0);
        let s1: Field = Field1D::sine(4, 1, 1.0).into();
        let oracle = midpoint(|x| (PI * (PI * x).cos()).powi(2), 4096).sqrt();
        assert_relative_eq!(norm_v(&s1).unwrap(), oracle, epsilon = 1e-10);
        assert_relative_eq!(norm_v(&s1).unwrap(), 2.221_441_469_079_183, epsilon = 1e-12);
        let s2: Field = Field1D::sine(4, 2, 1.0).into();
        assert_relative_eq!(norm_v(&s2).unwrap(), 4.442_882_938_158_366, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(
            Field1D::new(vec![1.0, f64::NAN]),
            Err(Error::InvalidField(_))
        ));
        let mut f = Field1D::zeros(3);
        f.coeffs_mut()[1] = f64::INFINITY;
        assert!(norm_h(&Field::D1(f)).is_err());
    }

    #[test]
    fn l4_examples() {
        let q = Quadrature::for_modes(8);
        assert_eq!(norm_l4(&Field1D::zeros(8), &q).unwrap(), 0.0);
        let s = Field1D::sine(8, 1, 1.0);
        // ∫ sin⁴(πx) = 3/8
        assert_relative_eq!(norm_l4(&s, &q).unwrap(), 0.375_f64.powf(0.25), epsilon = 1e-14);
        let s2 = Field1D::sine(8, 1, 2.0);
        assert_relative_eq!(
            norm_l4(&s2, &q).unwrap(),
            2.0 * norm_l4(&s, &q).unwrap(),
            epsilon = 1e-14
        );
        assert!(matches!(
            norm_l4(&s, &Quadrature::new(16)),
            Err(Error::Resolution { required: 32, .. })
        ));
    }

    #[test]
    fn poincare_examples() {
        let eta = (PI * PI - 1.0).sqrt();
        let a = poincare_audit(&Field1D::sine(8, 1, 1.0).into(), eta).unwrap();
        assert_relative_eq!(a.ratio, PI * PI, epsilon = 1e-12);
        assert!(a.passes);
        let b = poincare_audit(&Field1D::sine(8, 2, 1.0).into(), eta).unwrap();
        assert_relative_eq!(b.ratio, 4.0 * PI * PI, epsilon = 1e-12);
        assert!(b.passes);
        let mut f = Field2D::zeros(4);
        f.set_mode(1, 0, (Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.1)));
        let c = poincare_audit(&f.into(), (2.0 * PI * PI - 1.0).sqrt()).unwrap();
        assert_relative_eq!(c.ratio, 4.0 * PI * PI, epsilon = 1e-12);
        assert!(c.passes);
        assert_eq!(
            poincare_audit(&Field1D::zeros(3).into(), 1.0),
            Err(Error::UndefinedRatio)
        );
    }

    #[test]
    fn laplacian_eigenfunctions_and_linearity() {
        let s1 = Field1D::sine(6, 1, 1.0);
        assert_relative_eq!(s1.laplacian().coeffs()[0], -PI * PI * s1.coeffs()[0]);
        let s2 = Field1D::sine(6, 2, 1.0);
        assert_relative_eq!(s2.laplacian().coeffs()[1], -4.0 * PI * PI * s2.coeffs()[1]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Field = Field1D::random(6, 1.0, &mut rng).into();
        let b: Field = Field1D::random(6, 1.0, &mut rng).into();
        let lhs = laplacian_apply(&a.axpy(2.5, &b).unwrap()).unwrap();
        let rhs = laplacian_apply(&a)
            .unwrap()
            .axpy(2.5, &laplacian_apply(&b).unwrap())
            .unwrap();
        let d = lhs.sub(&rhs).unwrap().norm_h_sq().sqrt();
        assert!(d < 1e-12 * (1.0 + rhs.norm_h_sq().sqrt()));
    }

    #[test]
    fn sine_grid_matches_pointwise_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = Field1D::random(10, 1.0, &mut rng);
        let g = SineGrid::new(10, 40);
        let vals = g.values(&f);
        let dvals = g.derivative_values(&f);
        for j in [0, 7, 20, 40] {
            let x = j as f64 / 40.0;
            assert_relative_eq!(vals[j], f.eval(x), epsilon = 1e-12);
            assert_relative_eq!(dvals[j], f.eval_derivative(x), epsilon = 1e-11);
        }
        let back = g.project(&vals);
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn helmholtz_examples() {
        // gradient of φ = cos(2π(x + 2y)) is killed
        let grad = Field2D::from_physical(4, |x, y| {
            let s = -(2.0 * PI * (x + 2.0 * y)).sin() * 2.0 * PI;
            (s, 2.0 * s)
        });
        assert!(grad.helmholtz_project().norm_h() < 1e-12);

        // divergence-free fields are fixed points
        let tg = Field2D::taylor_green(4, 1.0);
        assert!(tg.is_divergence_free());
        assert_eq!(tg.helmholtz_project(), tg);

        // (sin 2πy + ∂ₓφ, ∂_yφ) with φ = sin(2πx)·sin(2πy) → (sin 2πy, 0)
        let u = Field2D::from_physical(4, |x, y| {
            let tp = 2.0 * PI;
            (
                (tp * y).sin() + tp * (tp * x).cos() * (tp * y).sin(),
                tp * (tp * x).sin() * (tp * y).cos(),
            )
        });
        let expect = Field2D::from_physical(4, |_, y| ((2.0 * PI * y).sin(), 0.0));
        let got = u.helmholtz_project();
        let diff = Field::D2(got).sub(&Field::D2(expect)).unwrap();
        assert!(diff.norm_h_sq().sqrt() < 1e-12);
    }

    #[test]
    fn taylor_green_matches_physical_samples() {
        let tg = Field2D::taylor_green(3, 1.0);
        let sampled = Field2D::from_physical(3, |x, y| {
            let tp = 2.0 * PI;
            (
                (tp * x).sin() * (tp * y).cos(),
                -(tp * x).cos() * (tp * y).sin(),
            )
        });
        let d = Field::D2(tg.clone()).sub(&Field::D2(sampled)).unwrap();
        assert!(d.norm_h_sq().sqrt() < 1e-13);
        assert_relative_eq!(tg.norm_h_sq(), 0.5, epsilon = 1e-14);
        // |k|² = 2 for every active mode
        assert_relative_eq!(tg.norm_v_sq(), 8.0 * PI * PI * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fft_sizes_are_smooth_and_large_enough() {
        for n in 1..200 {
            let s = fft_size(n);
            assert!(s >= n);
            let mut r = s;
            while r % 2 == 0 {
                r /= 2;
            }
            while r % 3 == 0 {
                r /= 3;
            }
            assert_eq!(r, 1);
        }
        assert_eq!(fft_size(97), 108);
    }
}
