//! Large-system deterministic equivalent of the balanced SINR.
//!
//! For a common user covariance R with eigenvalues λ_i, the equivalent δ̄
//! solves δ = F(δ) = Σ_i λ_i / (A(δ) λ_i + B(δ)), where the interference
//! coefficient A and the noise coefficient B depend on the chosen form.

use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal_vector, CorrelationMatrix};
use crate::error::{domain, param, Error, Result};
use crate::linalg;
use crate::olp::{self, HwiParams, OlpOptions, PowerConstraint, PriorityVector};
use crate::par;

/// Which fixed-point equation is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeForm {
    /// A = (κ̄+1)K/(1+δ), B = ηw/(1−κ̄δ): the limit of the precoder in
    /// [`crate::olp`], where a user's own distortion inflates its noise.
    #[default]
    SelfDistortion,
    /// A = (κ̄+1)K/(1+δ) + κ̄, B = ηw.
    AdditiveDistortion,
    /// A = ((κ̄+1)K + κ̄)/(1+δ), B = ηw.
    PooledDistortion,
}

#[derive(Debug, Clone)]
pub struct DeInput {
    pub r: CorrelationMatrix,
    pub k_users: usize,
    pub kappa_bar: f64,
    pub powers: Vec<f64>,
    pub p_max: f64,
    pub weights: Vec<f64>,
    pub form: DeForm,
}

impl DeInput {
    /// Equal powers P_max/K and unit weights.
    pub fn equal_powers(r: CorrelationMatrix, k_users: usize, kappa_bar: f64, p_max: f64) -> Self {
        DeInput {
            r,
            k_users,
            kappa_bar,
            powers: vec![p_max / k_users as f64; k_users],
            p_max,
            weights: vec![1.0; k_users],
            form: DeForm::default(),
        }
    }

    pub fn coefficients(&self) -> Result<DeCoefficients> {
        DeCoefficients::new(self.k_users, self.kappa_bar, &self.powers, self.p_max, &self.weights, self.form)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DeOptions {
    fn default() -> Self {
        DeOptions { tol: 1e-10, max_iter: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub delta_bar: f64,
    pub xi_bar: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// η = (1/K) Σ_j 1/p_j; equals K/P_max at equal powers.
pub fn eta(powers: &[f64]) -> Result<f64> {
    if powers.is_empty() || powers.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(domain("powers must be positive"));
    }
    Ok(powers.iter().map(|p| 1.0 / p).sum::<f64>() / powers.len() as f64)
}

/// ξ̄_k = (P_max/p_k) / Σ_j (1/p_j).
pub fn de_xi(p: &[f64], p_max: f64) -> Result<Vec<f64>> {
    if p.is_empty() || p.iter().any(|x| !(*x > 0.0)) {
        return Err(domain("powers must be positive"));
    }
    let inv: f64 = p.iter().map(|x| 1.0 / x).sum();
    Ok(p.iter().map(|x| p_max / x / inv).collect())
}

/// Scalar parameters of the fixed point, independent of R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeCoefficients {
    /// (κ̄+1)K
    pub interference: f64,
    pub kappa_bar: f64,
    /// η·w̄
    pub noise: f64,
    pub form: DeForm,
}

/// Value and partial derivatives of F at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DePartials {
    pub value: f64,
    /// ∂F/∂δ
    pub d_delta: f64,
    /// ∂F/∂c where the eigenvalues are λ_i = c·u_i.
    pub d_scale: f64,
}

impl DeCoefficients {
    pub fn new(
        k_users: usize,
        kappa_bar: f64,
        powers: &[f64],
        p_max: f64,
        weights: &[f64],
        form: DeForm,
    ) -> Result<Self> {
        if k_users == 0 {
            return Err(param("need at least one user"));
        }
        if !(kappa_bar >= 0.0) || !kappa_bar.is_finite() {
            return Err(param("impairment level must be finite and non-negative"));
        }
        if powers.len() != k_users || weights.len() != k_users {
            return Err(param(format!("powers and weights must have length {k_users}")));
        }
        if !(p_max > 0.0) {
            return Err(param("power budget must be positive"));
        }
        let w = weights[0];
        if !(w > 0.0) || weights.iter().any(|x| (x - w).abs() > 1e-12 * w) {
            return Err(param("the equivalent is defined for a common positive weight only"));
        }
        let total: f64 = powers.iter().sum();
        if total > p_max * (1.0 + 1e-9) {
            log::warn!("powers sum to {total} which exceeds the budget {p_max}");
        }
        Ok(DeCoefficients {
            interference: (kappa_bar + 1.0) * k_users as f64,
            kappa_bar,
            noise: eta(powers)? * w,
            form,
        })
    }

    /// (A, B, A', B') at δ.
    fn terms(&self, delta: f64) -> (f64, f64, f64, f64) {
        let inv = 1.0 / (1.0 + delta);
        let (a, kb, nz) = (self.interference, self.kappa_bar, self.noise);
        match self.form {
            DeForm::SelfDistortion => {
                let s = 1.0 - kb * delta;
                (a * inv, nz / s, -a * inv * inv, nz * kb / (s * s))
            }
            DeForm::AdditiveDistortion => (a * inv + kb, nz, -a * inv * inv, 0.0),
            DeForm::PooledDistortion => ((a + kb) * inv, nz, -(a + kb) * inv * inv, 0.0),
        }
    }

    pub fn rhs(&self, eig: &[f64], delta: f64) -> f64 {
        let (a, b, _, _) = self.terms(delta);
        if !b.is_finite() || b <= 0.0 {
            return 0.0;
        }
        eig.iter().map(|&l| l / (a * l + b)).sum()
    }

    /// F and its partial derivatives at δ for eigenvalues λ_i = scale·u_i.
    pub fn partials(&self, unit: &[f64], scale: f64, delta: f64) -> DePartials {
        let (a, b, da, db) = self.terms(delta);
        let mut out = DePartials { value: 0.0, d_delta: 0.0, d_scale: 0.0 };
        for &u in unit {
            let l = scale * u;
            let d = a * l + b;
            out.value += l / d;
            out.d_delta -= l * (da * l + db) / (d * d);
            out.d_scale += u * b / (d * d);
        }
        out
    }

    /// Right end of a bracket containing the root.
    pub fn upper_bound(&self, eig: &[f64]) -> f64 {
        let tr: f64 = eig.iter().sum();
        let hi = tr / self.noise;
        if self.form == DeForm::SelfDistortion && self.kappa_bar > 0.0 {
            hi.min(1.0 / self.kappa_bar)
        } else {
            hi
        }
    }

    /// Solves δ = F(δ) given the eigenvalues of R. Returns (δ, iterations, residual).
    pub fn solve(&self, eig: &[f64], opts: &DeOptions) -> Result<(f64, usize, f64)> {
        if eig.iter().any(|l| !l.is_finite()) {
            return Err(domain("covariance has non-finite eigenvalues"));
        }
        let eig: Vec<f64> = eig.iter().map(|l| l.max(0.0)).collect();
        let tr: f64 = eig.iter().sum();
        if tr == 0.0 {
            return Ok((0.0, 0, 0.0));
        }
        let hi = self.upper_bound(&eig);
        let inside = |d: f64| d > 0.0 && d < hi && d.is_finite();
        let mut iterations = 0;

        let mut delta = if 1.0 < hi { 1.0 } else { hi / 2.0 };
        let mut damping = 1.0;
        let mut last_gap = f64::INFINITY;
        let mut converged = false;
        while iterations < opts.max_iter && damping >= 1.0 / 64.0 {
            iterations += 1;
            let gap = self.rhs(&eig, delta) - delta;
            if gap.abs() <= opts.tol * delta {
                converged = true;
                break;
            }
            if gap.abs() >= last_gap {
                damping *= 0.5;
            }
            last_gap = gap.abs();
            let next = delta + damping * gap;
            if !inside(next) {
                break;
            }
            delta = next;
        }

        if !converged {
            // g(δ) = δ − F(δ) is negative at 0 and non-negative at `hi`.
            let (mut lo, mut up) = (0.0, hi);
            for _ in 0..400 {
                iterations += 1;
                let mid = 0.5 * (lo + up);
                if mid - self.rhs(&eig, mid) < 0.0 {
                    lo = mid;
                } else {
                    up = mid;
                }
                if up - lo <= opts.tol * 1e-2 * up {
                    break;
                }
            }
            delta = 0.5 * (lo + up);
        }

        // Newton polish; the fixed-point tolerance alone leaves δ too coarse for
        // derivative checks.
        for _ in 0..4 {
            let p = self.partials(&eig, 1.0, delta);
            let g = delta - p.value;
            let slope = 1.0 - p.d_delta;
            if g == 0.0 || slope <= 0.0 {
                break;
            }
            let next = delta - g / slope;
            if !inside(next) || (next - self.rhs(&eig, next)).abs() >= g.abs() {
                break;
            }
            delta = next;
        }

        let residual = (delta - self.rhs(&eig, delta)).abs() / delta;
        if !(residual <= opts.tol.max(1e-14)) {
            return Err(Error::NonConvergence {
                solver: "deterministic equivalent",
                iterations,
                residual,
            });
        }
        Ok((delta, iterations, residual))
    }
}

pub fn solve_de_delta(input: &DeInput, opts: &DeOptions) -> Result<DeResult> {
    if input.r.dim() == 0 {
        return Err(param("covariance must be non-empty"));
    }
    let coef = input.coefficients()?;
    let (delta_bar, iterations, residual) = coef.solve(&input.r.eigenvalues(), opts)?;
    Ok(DeResult {
        delta_bar,
        xi_bar: de_xi(&input.powers, input.p_max)?,
        iterations,
        residual,
    })
}

/// Outcome of comparing the equivalent with Monte-Carlo optimal precoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DeValidation {
    pub delta_bar: f64,
    pub mean_delta_star: f64,
    pub std_delta_star: f64,
    pub relative_gap: f64,
    pub n_realizations: usize,
}

/// Draws `n_realizations` sets of K channels h_k ~ CN(0, R), solves the
/// optimal precoder on each and compares the mean balanced SINR with δ̄.
pub fn de_validate_against_mc(
    input: &DeInput,
    opts: &DeOptions,
    n_realizations: usize,
    seed: u64,
) -> Result<DeValidation> {
    if n_realizations == 0 {
        return Err(param("need at least one realization"));
    }
    let de = solve_de_delta(input, opts)?;
    let root = linalg::psd_sqrt(input.r.matrix());
    let m = input.r.dim();
    let k = input.k_users;
    let hwi = HwiParams::new(input.kappa_bar.sqrt(), 0.0)?;
    let pc = PowerConstraint::new(input.weights.clone(), input.p_max)?;
    let a = PriorityVector::ones(k);
    let olp_opts = OlpOptions::default();

    let draws = par::map_indexed(n_realizations, |i| {
        let mut rng = par::stream_rng(seed, i as u64);
        let h: Vec<_> = (0..k).map(|_| &root * complex_normal_vector(m, &mut rng)).collect();
        olp::solve_olp(&h, &hwi, &pc, &a, &olp_opts)
            .map(|s| s.delta_star)
            .map_err(|e| Error::Realization { index: i, source: Box::new(e) })
    });
    let values = draws.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&values);
    Ok(DeValidation {
        delta_bar: de.delta_bar,
        mean_delta_star: mean,
        std_delta_star: std,
        relative_gap: (mean - de.delta_bar).abs() / de.delta_bar,
        n_realizations,
    })
}

/// Mean and (population) standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_bs_correlation;
    use proptest::prelude::*;

    fn coef(k: usize, kb: f64, p_max: f64, form: DeForm) -> DeCoefficients {
        let p = vec![p_max / k as f64; k];
        DeCoefficients::new(k, kb, &p, p_max, &vec![1.0; k], form).unwrap()
    }

    #[test]
    fn xi_reference_values() {
        assert_eq!(de_xi(&[1.0, 2.0], 3.0).unwrap(), vec![2.0, 1.0]);
        assert_eq!(de_xi(&[0.7], 5.0).unwrap(), vec![5.0]);
        let xi = de_xi(&[2.5; 4], 10.0).unwrap();
        assert!(xi.iter().all(|x| (x - 2.5).abs() < 1e-15));
        assert!(de_xi(&[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn xi_identity() {
        let p = [0.3, 1.1, 2.0, 0.05];
        let p_max = 4.0;
        let xi = de_xi(&p, p_max).unwrap();
        let lhs: f64 = xi.iter().map(|x| 1.0 / x).sum();
        let rhs = p.iter().sum::<f64>() / p_max * p.iter().map(|x| 1.0 / x).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn zero_covariance_gives_zero() {
        let input = DeInput::equal_powers(CorrelationMatrix::scaled_identity(4, 0.0).unwrap(), 2, 0.1, 1.0);
        assert_eq!(solve_de_delta(&input, &DeOptions::default()).unwrap().delta_bar, 0.0);
    }

    #[test]
    fn heterogeneous_weights_rejected() {
        let mut input = DeInput::equal_powers(CorrelationMatrix::identity(4), 2, 0.0, 1.0);
        input.weights = vec![1.0, 2.0];
        assert!(matches!(solve_de_delta(&input, &DeOptions::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn ideal_hardware_forms_coincide() {
        let r = build_bs_correlation(16, 8, 0.3).unwrap().scale(3.0);
        let eig = r.eigenvalues();
        let vals: Vec<f64> = [DeForm::SelfDistortion, DeForm::AdditiveDistortion, DeForm::PooledDistortion]
            .iter()
            .map(|&f| coef(4, 0.0, 2.0, f).solve(&eig, &DeOptions::default()).unwrap().0)
            .collect();
        assert!((vals[0] - vals[1]).abs() < 1e-12 * vals[0]);
        assert!((vals[0] - vals[2]).abs() < 1e-12 * vals[0]);
    }

    #[test]
    fn matrix_trace_form_agrees_with_eigen_form() {
        // tr R (A R + B I)⁻¹ evaluated directly with a matrix inverse
        let r = build_bs_correlation(8, 4, 0.3).unwrap().scale(2.0);
        for form in [DeForm::SelfDistortion, DeForm::AdditiveDistortion, DeForm::PooledDistortion] {
            let c = coef(3, 0.04, 5.0, form);
            let (d, _, _) = c.solve(&r.eigenvalues(), &DeOptions::default()).unwrap();
            let (a, b, _, _) = c.terms(d);
            let n = r.dim();
            let inv = (r.matrix().scale(a) + linalg::CMat::identity(n, n).scale(b))
                .try_inverse()
                .unwrap();
            let direct = linalg::trace_re(&(r.matrix() * inv));
            assert!((direct - d).abs() < 1e-10 * d, "{form:?}");
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let r = build_bs_correlation(12, 6, 0.3).unwrap().scale(4.0);
        let eig = r.eigenvalues();
        for form in [DeForm::SelfDistortion, DeForm::AdditiveDistortion, DeForm::PooledDistortion] {
            let c = coef(4, 0.03, 3.0, form);
            let d = 0.8;
            let p = c.partials(&eig, 1.0, d);
            let h = 1e-6;
            let fd = (c.rhs(&eig, d + h) - c.rhs(&eig, d - h)) / (2.0 * h);
            assert!((fd - p.d_delta).abs() < 1e-7 * p.d_delta.abs().max(1.0));
            let up: Vec<f64> = eig.iter().map(|l| l * (1.0 + h)).collect();
            let dn: Vec<f64> = eig.iter().map(|l| l * (1.0 - h)).collect();
            let fd = (c.rhs(&up, d) - c.rhs(&dn, d)) / (2.0 * h);
            assert!((fd - p.d_scale).abs() < 1e-7 * p.d_scale.abs().max(1.0));
        }
    }

    #[test]
    fn bisection_fallback_agrees() {
        let r = build_bs_correlation(16, 8, 0.3).unwrap().scale(50.0);
        let c = coef(4, 0.01, 10.0, DeForm::SelfDistortion);
        let eig = r.eigenvalues();
        let full = c.solve(&eig, &DeOptions::default()).unwrap().0;
        let forced = c.solve(&eig, &DeOptions { tol: 1e-10, max_iter: 1 }).unwrap().0;
        assert!((full - forced).abs() < 1e-10 * full);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_in_impairment_noise_and_scale(
            scale in 0.1f64..100.0,
            kb in 0.0f64..0.1,
            p_max in 0.1f64..100.0,
        ) {
            let r = build_bs_correlation(8, 4, 0.3).unwrap().scale(scale);
            let eig = r.eigenvalues();
            let opts = DeOptions::default();
            let base = coef(3, kb, p_max, DeForm::SelfDistortion).solve(&eig, &opts).unwrap().0;
            let more_hwi = coef(3, kb + 0.01, p_max, DeForm::SelfDistortion).solve(&eig, &opts).unwrap().0;
            let less_power = coef(3, kb, p_max * 0.9, DeForm::SelfDistortion).solve(&eig, &opts).unwrap().0;
            let bigger: Vec<f64> = eig.iter().map(|l| 1.2 * l).collect();
            let stronger = coef(3, kb, p_max, DeForm::SelfDistortion).solve(&bigger, &opts).unwrap().0;
            prop_assert!(more_hwi < base);
            prop_assert!(less_power < base);
            prop_assert!(stronger > base);
            let resid = (base - coef(3, kb, p_max, DeForm::SelfDistortion).rhs(&eig, base)).abs();
            prop_assert!(resid <= 1e-10 * base);
        }
    }
}
