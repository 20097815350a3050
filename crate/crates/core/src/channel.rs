//! Spatial correlation, path loss, phase noise and channel sampling.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};
use crate::linalg::{self, CMat, CVec, ZERO};
use crate::ris::{Pbm, Side};

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// A Hermitian positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(CMat);

impl CorrelationMatrix {
    /// Accepts `m` if it is square, Hermitian and PSD up to a small tolerance.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(param("correlation matrix must be square and non-empty"));
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if linalg::max_hermitian_deviation(&m) > HERMITIAN_TOL * scale {
            return Err(domain("correlation matrix is not Hermitian"));
        }
        let (vals, _) = linalg::hermitian_eigen(&m);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(0.0, f64::max);
        if min < -PSD_TOL * max.max(f64::MIN_POSITIVE) {
            return Err(domain(format!("correlation matrix has eigenvalue {min:e} < 0")));
        }
        Ok(CorrelationMatrix(linalg::hermitian_part(&m)))
    }

    pub fn identity(n: usize) -> Self {
        CorrelationMatrix(CMat::identity(n, n))
    }

    pub fn scaled_identity(n: usize, r: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(param("scale must be non-negative"));
        }
        Ok(CorrelationMatrix(CMat::identity(n, n).scale(r)))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace_re(&self.0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigen(&self.0).0
    }

    pub fn scale(&self, c: f64) -> CorrelationMatrix {
        CorrelationMatrix(self.0.scale(c))
    }
}

/// BS array correlation from P equally spaced angles on a ULA with
/// normalized spacing `omega`:
/// a(φ) = P^{-1/2} [exp(-i2πω n sin φ)]_{n=0}^{M-1}, φ_p = -π/2 + (p-1)π/P.
pub fn build_bs_correlation(m: usize, angles: usize, omega: f64) -> Result<CorrelationMatrix> {
    if m < 2 {
        return Err(param("antenna count must be at least 2"));
    }
    if angles == 0 || angles > m {
        return Err(param(format!("angle count must be in 1..={m}, got {angles}")));
    }
    if !(omega > 0.0) {
        return Err(param("antenna spacing must be positive"));
    }
    let scale = 1.0 / (angles as f64).sqrt();
    let a = CMat::from_fn(m, angles, |n, p| {
        let phi = -PI / 2.0 + p as f64 * PI / angles as f64;
        Complex64::from_polar(scale, -2.0 * PI * omega * n as f64 * phi.sin())
    });
    Ok(CorrelationMatrix(linalg::hermitian_part(&(&a * a.adjoint()))))
}

/// Normalized sinc, sin(πx)/(πx).
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Isotropic-scattering correlation of an n_h × n_v planar surface,
/// R[l,m] = sinc(2‖u_l − u_m‖/λ) with elements in row-major order.
pub fn build_ris_correlation(
    n_h: usize,
    n_v: usize,
    d_h: f64,
    d_v: f64,
    wavelength: f64,
) -> Result<CorrelationMatrix> {
    if n_h == 0 || n_v == 0 {
        return Err(param("surface must have at least one element"));
    }
    if !(d_h > 0.0 && d_v > 0.0 && wavelength > 0.0) {
        return Err(param("element spacing and wavelength must be positive"));
    }
    let n = n_h * n_v;
    let pos = |i: usize| ((i % n_h) as f64 * d_h, (i / n_h) as f64 * d_v);
    let r = CMat::from_fn(n, n, |l, m| {
        let (xl, yl) = pos(l);
        let (xm, ym) = pos(m);
        let dist = (xl - xm).hypot(yl - ym);
        Complex64::new(sinc(2.0 * dist / wavelength), 0.0)
    });
    Ok(CorrelationMatrix(r))
}

/// Distance-based attenuation `area · d^{-α}`.
pub fn path_loss(distance: f64, exponent: f64, area: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(domain("distance must be positive"));
    }
    if !(exponent > 0.0 && area > 0.0) {
        return Err(param("path-loss exponent and area must be positive"));
    }
    Ok(area * distance.powf(-exponent))
}

/// Distribution of the per-element phase error of the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PhaseNoiseModel {
    None,
    Uniform,
    VonMises { concentration: f64 },
}

impl PhaseNoiseModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PhaseNoiseModel::None => 0.0,
            PhaseNoiseModel::Uniform => rng.random_range(-PI..PI),
            PhaseNoiseModel::VonMises { concentration } => sample_von_mises(concentration, rng),
        }
    }
}

/// Characteristic function at 1, m = E[e^{iθ̃}].
pub fn phase_noise_cf(model: &PhaseNoiseModel) -> Result<f64> {
    match *model {
        PhaseNoiseModel::None => Ok(1.0),
        PhaseNoiseModel::Uniform => Ok(0.0),
        PhaseNoiseModel::VonMises { concentration } => bessel_ratio(concentration),
    }
}

const SERIES_TERMS: usize = 200;
const SERIES_TOL: f64 = 1e-12;
const SERIES_LIMIT: f64 = 100.0;

/// I₁(κ)/I₀(κ) for κ ≥ 0.
pub fn bessel_ratio(kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(domain(format!("von Mises concentration must be finite and >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(0.0);
    }
    if kappa > SERIES_LIMIT {
        return Ok(bessel_ratio_cf(kappa));
    }
    let q = kappa * kappa / 4.0;
    let (mut t0, mut t1) = (1.0, kappa / 2.0);
    let (mut s0, mut s1) = (t0, t1);
    for j in 1..=SERIES_TERMS {
        let jf = j as f64;
        t0 *= q / (jf * jf);
        t1 *= q / (jf * (jf + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 < SERIES_TOL * s0 && t1 < SERIES_TOL * s1 {
            return Ok(s1 / s0);
        }
    }
    Err(Error::NonConvergence {
        solver: "bessel series",
        iterations: SERIES_TERMS,
        residual: t0 / s0,
    })
}

// Backward evaluation of I_{ν+1}/I_ν = 1 / (2(ν+1)/x + I_{ν+2}/I_{ν+1}).
fn bessel_ratio_cf(x: f64) -> f64 {
    let depth = (2.0 * x) as usize + 200;
    let mut r = 0.0;
    for nu in (0..depth).rev() {
        r = 1.0 / (2.0 * (nu as f64 + 1.0) / x + r);
    }
    r
}

/// Best–Fisher rejection sampler, mean direction 0.
fn sample_von_mises<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return rng.random_range(-PI..PI);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let theta = f.clamp(-1.0, 1.0).acos();
            return if u3 > 0.5 { theta } else { -theta };
        }
    }
}

/// R̃ = m²R + (1 − m²)I.
pub fn effective_ris_correlation(r: &CorrelationMatrix, m: f64) -> Result<CorrelationMatrix> {
    if !(0.0..=1.0).contains(&m) {
        return Err(domain(format!("characteristic function value {m} outside [0,1]")));
    }
    let n = r.dim();
    let out = r.matrix().scale(m * m) + CMat::identity(n, n).scale(1.0 - m * m);
    Ok(CorrelationMatrix(out))
}

/// Positions in the plane; users are tagged with the half-space they are in.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGeometry {
    pub bs: [f64; 2],
    pub ris: [f64; 2],
    pub users: Vec<([f64; 2], Side)>,
}

impl SystemGeometry {
    /// Reflection users on the line y = y_R − d0/2, transmission users on
    /// y = y_R + d0/2, each group spread evenly over x ∈ [x_R − d0/2, x_R + d0/2].
    pub fn linear_layout(bs: [f64; 2], ris: [f64; 2], d0: f64, k_t: usize, k_r: usize) -> Self {
        let spread = |k: usize, y: f64| -> Vec<[f64; 2]> {
            (0..k)
                .map(|i| {
                    let frac = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
                    [ris[0] - d0 / 2.0 + frac * d0, y]
                })
                .collect()
        };
        let mut users: Vec<([f64; 2], Side)> = spread(k_t, ris[1] + d0 / 2.0)
            .into_iter()
            .map(|p| (p, Side::Transmission))
            .collect();
        users.extend(spread(k_r, ris[1] - d0 / 2.0).into_iter().map(|p| (p, Side::Reflection)));
        SystemGeometry { bs, ris, users }
    }

    pub fn bs_ris_distance(&self) -> f64 {
        dist(self.bs, self.ris)
    }

    pub fn ris_user_distance(&self, k: usize) -> f64 {
        dist(self.ris, self.users[k].0)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Second-order statistics of the cascaded channels, plus cached
/// factorizations used repeatedly by the optimizer and the samplers.
#[derive(Debug, Clone)]
pub struct ChannelStatistics {
    pub r_bs: CorrelationMatrix,
    pub r_ris: CorrelationMatrix,
    pub r_ris_tilde: CorrelationMatrix,
    pub phase_noise: PhaseNoiseModel,
    pub cf: f64,
    /// BS–surface attenuation β̃.
    pub beta_bs_ris: f64,
    /// Surface–user attenuations β̃_k.
    pub beta_ue: Vec<f64>,
    pub sides: Vec<Side>,
    pub noise_power: f64,
    bs_eigenvalues: Vec<f64>,
    r_bs_sqrt: CMat,
    r_ris_sqrt: CMat,
    kernel: CMat,
}

impl ChannelStatistics {
    pub fn new(
        r_bs: CorrelationMatrix,
        r_ris: CorrelationMatrix,
        phase_noise: PhaseNoiseModel,
        beta_bs_ris: f64,
        beta_ue: Vec<f64>,
        sides: Vec<Side>,
        noise_power: f64,
    ) -> Result<Self> {
        if beta_ue.len() != sides.len() || beta_ue.is_empty() {
            return Err(param("need one attenuation and one side per user"));
        }
        if !(beta_bs_ris > 0.0) || beta_ue.iter().any(|b| !(*b > 0.0)) {
            return Err(param("attenuations must be positive"));
        }
        if !(noise_power > 0.0) {
            return Err(param("noise power must be positive"));
        }
        let cf = phase_noise_cf(&phase_noise)?;
        let r_ris_tilde = effective_ris_correlation(&r_ris, cf)?;
        let n = r_ris.dim();
        let (a, b) = (r_ris.matrix(), r_ris_tilde.matrix());
        let kernel = CMat::from_fn(n, n, |i, j| a[(i, j)] * b[(j, i)]);
        Ok(ChannelStatistics {
            bs_eigenvalues: r_bs.eigenvalues(),
            r_bs_sqrt: linalg::psd_sqrt(r_bs.matrix()),
            r_ris_sqrt: linalg::psd_sqrt(r_ris.matrix()),
            r_bs,
            r_ris,
            r_ris_tilde,
            phase_noise,
            cf,
            beta_bs_ris,
            beta_ue,
            sides,
            noise_power,
            kernel,
        })
    }

    pub fn m(&self) -> usize {
        self.r_bs.dim()
    }

    pub fn n(&self) -> usize {
        self.r_ris.dim()
    }

    pub fn k(&self) -> usize {
        self.sides.len()
    }

    /// Large-scale SNR factor ρ_k = β̃ β̃_k / σ².
    pub fn rho(&self, k: usize) -> f64 {
        self.beta_bs_ris * self.beta_ue[k] / self.noise_power
    }

    pub fn users_on(&self, side: Side) -> impl Iterator<Item = usize> + '_ {
        self.sides.iter().enumerate().filter(move |(_, s)| **s == side).map(|(k, _)| k)
    }

    pub fn bs_eigenvalues(&self) -> &[f64] {
        &self.bs_eigenvalues
    }

    /// B = R_RIS ∘ R̃ᵀ, so that tr(R_RIS Φ R̃ Φᴴ) = φᴴBφ.
    pub fn kernel(&self) -> &CMat {
        &self.kernel
    }

    /// t(φ) = tr(R_RIS Φ R̃ Φᴴ) for Φ = diag(φ).
    pub fn trace_factor(&self, phi: &CVec) -> f64 {
        let bphi = &self.kernel * phi;
        phi.dotc(&bphi).re
    }

    /// R_k = ρ_k · tr(R_RIS Φ R̃ Φᴴ) · R_BS, with Φ a diagonal N×N matrix.
    pub fn cascaded_covariance(&self, phi: &CMat, k: usize) -> Result<CorrelationMatrix> {
        let n = self.n();
        if phi.nrows() != n || phi.ncols() != n {
            return Err(param(format!("beamforming matrix must be {n}×{n}")));
        }
        if k >= self.k() {
            return Err(param(format!("user index {k} out of range")));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && phi[(i, j)] != ZERO {
                    return Err(param("beamforming matrix must be diagonal"));
                }
            }
        }
        let t = self.trace_factor(&phi.diagonal());
        Ok(self.r_bs.scale(self.rho(k) * t))
    }
}

/// How channel realizations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// h_k = R_k^{1/2} z with z ~ CN(0, I).
    GaussianEquivalent,
    /// Explicit product of the BS–surface channel, surface response with
    /// phase noise, and the surface–user channel.
    Cascaded,
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng))
}

/// One draw of all user channels, seeded.
pub fn sample_channels(
    stats: &ChannelStatistics,
    pbm: &Pbm,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<CVec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_channels_with(stats, pbm, mode, &mut rng)
}

pub fn sample_channels_with<R: Rng + ?Sized>(
    stats: &ChannelStatistics,
    pbm: &Pbm,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Vec<CVec>> {
    let (m, n) = (stats.m(), stats.n());
    if pbm.n() != n {
        return Err(param(format!("beamforming vector has {} elements, expected {n}", pbm.n())));
    }
    let phi = [pbm.coefficients(Side::Transmission), pbm.coefficients(Side::Reflection)];
    let phi_of = |s: Side| &phi[s as usize];
    match mode {
        SamplingMode::GaussianEquivalent => {
            let t = [
                stats.trace_factor(phi_of(Side::Transmission)),
                stats.trace_factor(phi_of(Side::Reflection)),
            ];
            Ok((0..stats.k())
                .map(|k| {
                    let scale = (stats.rho(k) * t[stats.sides[k] as usize]).max(0.0).sqrt();
                    let z = complex_normal_vector(m, rng);
                    (&stats.r_bs_sqrt * z).scale(scale)
                })
                .collect())
        }
        SamplingMode::Cascaded => {
            let d = CMat::from_fn(m, n, |_, _| complex_normal(rng));
            let g = (&stats.r_bs_sqrt * d * &stats.r_ris_sqrt).scale(stats.beta_bs_ris.sqrt());
            let noise: Vec<Complex64> = (0..n)
                .map(|_| Complex64::from_polar(1.0, stats.phase_noise.sample(rng)))
                .collect();
            let sigma = stats.noise_power.sqrt();
            Ok((0..stats.k())
                .map(|k| {
                    let c = complex_normal_vector(n, rng);
                    let mut q = (&stats.r_ris_sqrt * c).scale(stats.beta_ue[k].sqrt());
                    let p = phi_of(stats.sides[k]);
                    for i in 0..n {
                        q[i] *= p[i] * noise[i];
                    }
                    (&g * q).unscale(sigma)
                })
                .collect())
        }
    }
}

/// Sample covariance (1/S) Σ h hᴴ, used by the statistical checks.
pub fn sample_covariance(samples: &[CVec]) -> CMat {
    let m = samples.first().map_or(0, |h| h.len());
    let mut acc = CMat::zeros(m, m);
    for h in samples {
        acc += h * h.adjoint();
    }
    acc.unscale(samples.len().max(1) as f64)
}

/// Real symmetric view of a real-valued Hermitian matrix, mostly for display.
pub fn real_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.re)
}
