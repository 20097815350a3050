//! Max-min weighted SINR precoding with transceiver hardware impairments.
//!
//! Distortion noise at user k is modeled as κ̄ times the power it receives,
//! so user k sees the interference-plus-distortion term
//! Σ_{i≠k} (1+κ̄) p_i |h_kᴴf_i|² + κ̄ p_k |h_kᴴf_k|² + 1.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};
use crate::linalg::{self, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HwiParams {
    pub kappa_bs: f64,
    pub kappa_ue: f64,
}

impl HwiParams {
    pub fn new(kappa_bs: f64, kappa_ue: f64) -> Result<Self> {
        if !(kappa_bs >= 0.0 && kappa_ue >= 0.0) || !kappa_bs.is_finite() || !kappa_ue.is_finite() {
            return Err(param("impairment levels must be finite and non-negative"));
        }
        Ok(HwiParams { kappa_bs, kappa_ue })
    }

    pub fn ideal() -> Self {
        HwiParams::default()
    }

    /// κ̄ = κ_BS² + κ_UE².
    pub fn kappa_bar(&self) -> f64 {
        self.kappa_bs * self.kappa_bs + self.kappa_ue * self.kappa_ue
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerConstraint {
    pub weights: Vec<f64>,
    pub p_max: f64,
}

impl PowerConstraint {
    pub fn new(weights: Vec<f64>, p_max: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(param("power weights must be positive"));
        }
        if !(p_max > 0.0) || !p_max.is_finite() {
            return Err(param("power budget must be positive"));
        }
        Ok(PowerConstraint { weights, p_max })
    }

    pub fn uniform(k: usize, p_max: f64) -> Result<Self> {
        PowerConstraint::new(vec![1.0; k], p_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorityVector(Vec<f64>);

impl PriorityVector {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(param("priorities must be positive"));
        }
        Ok(PriorityVector(a))
    }

    pub fn ones(k: usize) -> Self {
        PriorityVector(vec![1.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OlpOptions {
    fn default() -> Self {
        OlpOptions { tol: 1e-9, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct OlpSolution {
    pub precoders: Vec<CVec>,
    pub powers: Vec<f64>,
    pub delta_star: f64,
    pub xi_star: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn check_inputs(h: &[CVec], pc: &PowerConstraint, a: &PriorityVector) -> Result<usize> {
    let k = h.len();
    if k == 0 {
        return Err(param("need at least one user"));
    }
    let m = h[0].len();
    if h.iter().any(|v| v.len() != m) {
        return Err(param("all channels must have the same dimension"));
    }
    if pc.weights.len() != k || a.as_slice().len() != k {
        return Err(param(format!("weights and priorities must have length {k}")));
    }
    if let Some(i) = h.iter().position(|v| linalg::norm_sqr(v) == 0.0) {
        return Err(domain(format!("channel of user {i} is zero")));
    }
    if h.iter().any(|v| v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(domain("channel has non-finite entries"));
    }
    if k > m {
        log::warn!("{k} users exceed {m} antennas; the balanced SINR will be small");
    }
    Ok(k)
}

/// Per-user solves against A_k = w_k I + Σ_{i≠k} c_i h_i h_iᴴ, done in the
/// K-dimensional Gram space:
/// A⁻¹ = (I − H C^{1/2} (w I + C^{1/2} HᴴH C^{1/2})⁻¹ C^{1/2} Hᴴ)/w.
struct GramSolver {
    gram: CMat,
}

impl GramSolver {
    fn new(h: &[CVec]) -> Self {
        let k = h.len();
        GramSolver {
            gram: CMat::from_fn(k, k, |i, j| h[i].dotc(&h[j])),
        }
    }

    /// Coefficients y (length K, y_k = 1) with A_k⁻¹h_k = (Σ_i y_i h_i)/w, and
    /// e = h_kᴴA_k⁻¹h_k.
    fn solve(&self, k: usize, c: &[f64], w: f64) -> Result<(Vec<Complex64>, f64)> {
        let n = c.len();
        let others: Vec<usize> = (0..n).filter(|&i| i != k).collect();
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        y[k] = Complex64::new(1.0, 0.0);
        let gkk = self.gram[(k, k)].re;
        if others.is_empty() {
            return Ok((y, gkk / w));
        }
        let s: Vec<f64> = others.iter().map(|&i| c[i].sqrt()).collect();
        let d = others.len();
        let mut sys = CMat::from_fn(d, d, |a, b| {
            self.gram[(others[a], others[b])] * (s[a] * s[b])
        });
        for a in 0..d {
            sys[(a, a)] += w;
        }
        let rhs = CVec::from_fn(d, |a, _| self.gram[(others[a], k)] * s[a]);
        let sol = sys
            .cholesky()
            .ok_or_else(|| Error::Degenerate("interference Gram system not positive definite".into()))?
            .solve(&rhs);
        let mut e = gkk;
        for a in 0..d {
            e -= (rhs[a].conj() * sol[a]).re;
            y[others[a]] = -sol[a] * s[a];
        }
        Ok((y, e.max(0.0) / w))
    }
}

/// Anderson mixing for the ξ fixed point. The plain iteration slows down
/// sharply as the impairment ceiling is approached; mixing over the last few
/// residuals keeps the iteration count flat. Falls back to the plain update
/// whenever the mixed point leaves the positive orthant.
struct Anderson {
    depth: usize,
    xs: Vec<DVector<f64>>,
    gs: Vec<DVector<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson { depth, xs: Vec::new(), gs: Vec::new() }
    }

    fn next(&mut self, x: &[f64], fx: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let g = DVector::from_column_slice(fx) - &xv;
        self.xs.push(xv.clone());
        self.gs.push(g.clone());
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let plain: Vec<f64> = fx.to_vec();
        let m = self.xs.len() - 1;
        if m == 0 {
            return plain;
        }
        let n = x.len();
        let dg = DMatrix::from_fn(n, m, |r, c| self.gs[c + 1][r] - self.gs[c][r]);
        let dx = DMatrix::from_fn(n, m, |r, c| self.xs[c + 1][r] - self.xs[c][r]);
        let Ok(gamma) = dg.clone().svd(true, true).solve(&g, 1e-12) else {
            return plain;
        };
        let mixed = &xv + &g - (dx + dg) * gamma;
        if mixed.iter().all(|v| v.is_finite() && *v > 0.0) {
            mixed.iter().copied().collect()
        } else {
            self.xs.clear();
            self.gs.clear();
            plain
        }
    }
}

/// Solves the coupled fixed point for the dual variables ξ, the balanced
/// weighted SINR δ*, the MVDR-form precoders and the downlink powers.
pub fn solve_olp(
    h: &[CVec],
    hwi: &HwiParams,
    pc: &PowerConstraint,
    a: &PriorityVector,
    opts: &OlpOptions,
) -> Result<OlpSolution> {
    let k = check_inputs(h, pc, a)?;
    let kb = hwi.kappa_bar();
    let pri = a.as_slice();
    let w = &pc.weights;
    let gram = GramSolver::new(h);

    let mut xi: Vec<f64> = w.iter().map(|wk| pc.p_max / (k as f64 * wk)).collect();
    let mut q = vec![0.0; k];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut accel = Anderson::new(4);

    while iterations < opts.max_iter {
        iterations += 1;
        let c: Vec<f64> = xi.iter().map(|x| (kb + 1.0) * x).collect();
        for i in 0..k {
            let (_, e) = gram.solve(i, &c, w[i])?;
            q[i] = e / (1.0 + kb * xi[i] * e);
        }
        if q.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Degenerate("user effectively nulled by interference".into()));
        }
        let delta = pc.p_max / (0..k).map(|i| pri[i] / q[i]).sum::<f64>();
        let target: Vec<f64> = (0..k).map(|i| pri[i] * delta / q[i]).collect();
        residual = (0..k)
            .map(|i| ((target[i] - xi[i]) / xi[i]).abs())
            .fold(0.0, f64::max);
        if residual < opts.tol {
            break;
        }
        xi = accel.next(&xi, &target);
    }
    if !(residual < opts.tol) {
        return Err(Error::NonConvergence {
            solver: "olp fixed point",
            iterations,
            residual,
        });
    }

    // Recompute q and δ at the final ξ so that δ*, ξ* and f are consistent.
    let c: Vec<f64> = xi.iter().map(|x| (kb + 1.0) * x).collect();
    let mut precoders = Vec::with_capacity(k);
    for i in 0..k {
        let (y, e) = gram.solve(i, &c, w[i])?;
        q[i] = e / (1.0 + kb * xi[i] * e);
        let mut f = CVec::zeros(h[0].len());
        for (j, yj) in y.iter().enumerate() {
            f.axpy(*yj, &h[j], Complex64::new(1.0, 0.0));
        }
        let norm = f.norm();
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!("precoder of user {i} vanished")));
        }
        precoders.push(f.unscale(norm));
    }
    let delta = pc.p_max / (0..k).map(|i| pri[i] / q[i]).sum::<f64>();
    let powers = compute_power_allocation(h, &precoders, delta, hwi, a)?;

    Ok(OlpSolution {
        precoders,
        powers,
        delta_star: delta,
        xi_star: xi,
        iterations,
        residual,
    })
}

/// C_ki = |h_kᴴ f_i|².
pub fn coupling_matrix(h: &[CVec], precoders: &[CVec]) -> DMatrix<f64> {
    let k = h.len();
    DMatrix::from_fn(k, k, |r, c| h[r].dotc(&precoders[c]).norm_sqr())
}

/// Interference matrix T with T_ki = (1+κ̄)C_ki for i ≠ k and T_kk = κ̄C_kk.
pub fn interference_matrix(coupling: &DMatrix<f64>, kappa_bar: f64) -> DMatrix<f64> {
    DMatrix::from_fn(coupling.nrows(), coupling.ncols(), |r, c| {
        if r == c {
            kappa_bar * coupling[(r, c)]
        } else {
            (1.0 + kappa_bar) * coupling[(r, c)]
        }
    })
}

/// p = δ(I − δDT)⁻¹D1 with D = diag(a_k/C_kk).
pub fn compute_power_allocation(
    h: &[CVec],
    precoders: &[CVec],
    delta_star: f64,
    hwi: &HwiParams,
    a: &PriorityVector,
) -> Result<Vec<f64>> {
    let k = h.len();
    if precoders.len() != k || a.as_slice().len() != k {
        return Err(param("channel, precoder and priority counts differ"));
    }
    if !(delta_star > 0.0) {
        return Err(param("target SINR must be positive"));
    }
    let cm = coupling_matrix(h, precoders);
    let t = interference_matrix(&cm, hwi.kappa_bar());
    let d = DVector::from_fn(k, |i, _| a.as_slice()[i] / cm[(i, i)]);
    if d.iter().any(|v| !v.is_finite()) {
        return Err(domain("precoder orthogonal to its own channel"));
    }
    let dt = DMatrix::from_fn(k, k, |r, c| delta_star * d[r] * t[(r, c)]);
    let radius = linalg::spectral_radius(&dt);
    if radius >= 1.0 {
        return Err(Error::Infeasible(radius));
    }
    let lhs = DMatrix::identity(k, k) - dt;
    let p = lhs
        .lu()
        .solve(&d.scale(delta_star))
        .ok_or(Error::Infeasible(radius))?;
    if p.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Infeasible(radius));
    }
    Ok(p.iter().copied().collect())
}

/// Per-user SINR under the impairment model.
pub fn evaluate_sinr(h: &[CVec], precoders: &[CVec], p: &[f64], hwi: &HwiParams) -> Vec<f64> {
    let kb = hwi.kappa_bar();
    let k = h.len();
    (0..k)
        .map(|r| {
            let gains: Vec<f64> = (0..k).map(|c| h[r].dotc(&precoders[c]).norm_sqr()).collect();
            let mut denom = 1.0 + kb * p[r] * gains[r];
            for c in (0..k).filter(|&c| c != r) {
                denom += (1.0 + kb) * p[c] * gains[c];
            }
            p[r] * gains[r] / denom
        })
        .collect()
}

/// Same quantity assembled from the interference matrix: γ = p∘diag(C) / (Tp + 1).
pub fn evaluate_sinr_matrix(h: &[CVec], precoders: &[CVec], p: &[f64], hwi: &HwiParams) -> Vec<f64> {
    let cm = coupling_matrix(h, precoders);
    let t = interference_matrix(&cm, hwi.kappa_bar());
    let pv = DVector::from_column_slice(p);
    let denom = t * &pv;
    (0..p.len()).map(|i| p[i] * cm[(i, i)] / (denom[i] + 1.0)).collect()
}

pub fn min_weighted_sinr(gamma: &[f64], a: &[f64]) -> f64 {
    gamma
        .iter()
        .zip(a)
        .map(|(g, a)| g / a)
        .fold(f64::INFINITY, f64::min)
}
