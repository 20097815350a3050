use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use starris_core::channel::{
    build_bs_correlation, build_ris_correlation, sample_channels, ChannelStatistics, CorrelationMatrix,
    PhaseNoiseModel, SamplingMode,
};
use starris_core::de::{solve_de_delta, DeCoefficients, DeForm, DeInput, DeOptions};
use starris_core::linalg::CVec;
use starris_core::olp::{evaluate_sinr, solve_olp, HwiParams, OlpOptions, PowerConstraint, PriorityVector};
use starris_core::pgam::{gradients, objective, ObjectiveContext};
use starris_core::ris::{Pbm, Side};

fn small_stats(noise: PhaseNoiseModel) -> ChannelStatistics {
    ChannelStatistics::new(
        build_bs_correlation(8, 4, 0.3).unwrap(),
        build_ris_correlation(4, 2, 0.25, 0.25, 1.0).unwrap(),
        noise,
        1.0,
        vec![2.0, 3.5],
        vec![Side::Transmission, Side::Reflection],
        1.0,
    )
    .unwrap()
}

fn tight_context(st: &ChannelStatistics, kappa: f64) -> ObjectiveContext<'_> {
    let hwi = HwiParams::new(kappa, kappa).unwrap();
    ObjectiveContext::new(
        st,
        &hwi,
        vec![0.05, 0.05],
        0.1,
        vec![1.0, 1.0],
        DeForm::default(),
        DeOptions { tol: 1e-15, max_iter: 5000 },
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn gradients_match_central_differences() {
    let st = small_stats(PhaseNoiseModel::VonMises { concentration: 2.0 });
    let ctx = tight_context(&st, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let pbm = Pbm::random(8, &mut rng);
        let g = gradients(&pbm, &ctx).unwrap();
        let off = match g.active {
            Side::Transmission => 0,
            Side::Reflection => 8,
        };
        let base_t = pbm.stacked_theta();
        let base_b = pbm.stacked_beta();
        let eval = |t: &[Complex64], b: &[f64]| objective(&Pbm::from_stacked(t, b).unwrap(), &ctx).unwrap();
        for i in off..off + 8 {
            // real and imaginary parts of θ, unconstrained
            for (unit, analytic) in [
                (Complex64::new(1.0, 0.0), 2.0 * g.grad_theta_raw[i].re),
                (Complex64::new(0.0, 1.0), 2.0 * g.grad_theta_raw[i].im),
            ] {
                let (mut tp, mut tm) = (base_t.clone(), base_t.clone());
                tp[i] += unit * h;
                tm[i] -= unit * h;
                let fd = (eval(&tp, &base_b) - eval(&tm, &base_b)) / (2.0 * h);
                worst = worst.max(rel(fd, analytic));
            }
            // phase angle: the tangent gradient is i·s·θ with s = ½ ∂δ̄/∂φ
            let (mut tp, mut tm) = (base_t.clone(), base_t.clone());
            tp[i] *= Complex64::from_polar(1.0, h);
            tm[i] *= Complex64::from_polar(1.0, -h);
            let fd = (eval(&tp, &base_b) - eval(&tm, &base_b)) / (2.0 * h);
            let s = (g.grad_theta[i] * base_t[i].conj()).im;
            worst = worst.max(rel(fd, 2.0 * s));
            let (mut bp, mut bm) = (base_b.clone(), base_b.clone());
            bp[i] += h;
            bm[i] -= h;
            let fd = (eval(&base_t, &bp) - eval(&base_t, &bm)) / (2.0 * h);
            worst = worst.max(rel(fd, g.grad_beta[i]));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

/// Max-min SINR at κ̄ = 0 by bisection on the target, with uplink powers
/// from the standard interference-function iteration.
fn bisection_max_min(h: &[CVec], p_max: f64) -> f64 {
    let m = h[0].len();
    let k = h.len();
    let feasible = |gamma: f64| {
        let mut q = vec![0.0; k];
        for _ in 0..5000 {
            let next: Vec<f64> = (0..k)
                .map(|i| {
                    let mut s = DMatrix::<Complex64>::identity(m, m);
                    for j in (0..k).filter(|&j| j != i) {
                        s += (&h[j] * h[j].adjoint()).scale(q[j]);
                    }
                    let inv = s.try_inverse().unwrap();
                    gamma / h[i].dotc(&(inv * &h[i])).re
                })
                .collect();
            let total: f64 = next.iter().sum();
            if total > p_max {
                return false;
            }
            let change = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            q = next;
            if change <= 1e-15 * total {
                break;
            }
        }
        true
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while feasible(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn ideal_hardware_matches_bisection() {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h: Vec<CVec> = (0..2)
            .map(|_| CVec::from_fn(4, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
            .collect();
        let pc = PowerConstraint::uniform(2, 10.0).unwrap();
        let sol = solve_olp(&h, &HwiParams::ideal(), &pc, &PriorityVector::ones(2), &OlpOptions::default()).unwrap();
        worst = worst.max(rel(sol.delta_star, bisection_max_min(&h, 10.0)));
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn balanced_solution_spends_budget() {
    let st = ChannelStatistics::new(
        build_bs_correlation(16, 6, 0.3).unwrap(),
        build_ris_correlation(4, 4, 0.25, 0.25, 1.0).unwrap(),
        PhaseNoiseModel::VonMises { concentration: 2.0 },
        1.0,
        vec![1.0, 0.6, 1.4, 0.9],
        vec![Side::Transmission, Side::Transmission, Side::Reflection, Side::Reflection],
        1.0,
    )
    .unwrap();
    let pbm = Pbm::uniform_split(16);
    let hwi = HwiParams::new(0.05, 0.08).unwrap();
    let pc = PowerConstraint::new(vec![1.0, 1.0, 1.0, 1.0], 20.0).unwrap();
    let a = PriorityVector::new(vec![1.0, 2.0, 1.0, 0.5]).unwrap();
    for seed in 0..100 {
        let h = sample_channels(&st, &pbm, SamplingMode::GaussianEquivalent, seed).unwrap();
        let sol = solve_olp(&h, &hwi, &pc, &a, &OlpOptions::default()).unwrap();
        let gamma = evaluate_sinr(&h, &sol.precoders, &sol.powers, &hwi);
        let ratios: Vec<f64> = gamma.iter().zip(a.as_slice()).map(|(g, a)| g / a).collect();
        let mean = ratios.iter().sum::<f64>() / 4.0;
        let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(sd / sol.delta_star <= 1e-6, "seed {seed}: spread {:e}", sd / sol.delta_star);
        let spent: f64 = sol.powers.iter().sum();
        assert!(rel(spent, 20.0) <= 1e-8, "seed {seed}: spent {spent}");
    }
}

#[test]
fn scaled_identity_matches_quadratic_root() {
    let (n, k, r) = (16usize, 4usize, 0.8);
    for kb in [0.0, 0.01, 0.05, 0.1, 0.2] {
        for eta in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let powers = vec![1.0 / eta; k];
            let p_max = k as f64 / eta;
            let input = DeInput {
                r: CorrelationMatrix::scaled_identity(n, r).unwrap(),
                k_users: k,
                kappa_bar: kb,
                powers: powers.clone(),
                p_max,
                weights: vec![1.0; k],
                form: DeForm::SelfDistortion,
            };
            let got = solve_de_delta(&input, &DeOptions { tol: 1e-14, max_iter: 10_000 }).unwrap().delta_bar;
            // δ = N r / ((κ̄+1)K r/(1+δ) + η/(1−κ̄δ)), cleared of denominators
            let (nf, kf) = (n as f64, k as f64);
            let a = eta - (kb + 1.0) * kf * kb * r + nf * r * kb;
            let b = (kb + 1.0) * kf * r + eta - nf * r * (1.0 - kb);
            let c = -nf * r;
            let want = if a.abs() < 1e-15 {
                -c / b
            } else {
                let disc = (b * b - 4.0 * a * c).sqrt();
                [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)]
                    .into_iter()
                    .find(|x| *x > 0.0 && (kb == 0.0 || *x < 1.0 / kb))
                    .unwrap()
            };
            assert!(rel(got, want) <= 1e-10, "κ̄={kb} η={eta}: {got} vs {want}");
            let coef = DeCoefficients::new(k, kb, &powers, p_max, &[1.0; 4], DeForm::SelfDistortion).unwrap();
            let eig = vec![r; n];
            assert!(rel(coef.rhs(&eig, got), got) <= 1e-12);
        }
    }
}

#[test]
fn uniform_phase_noise_makes_phases_irrelevant() {
    let st = small_stats(PhaseNoiseModel::Uniform);
    let ctx = tight_context(&st, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = Pbm::random(8, &mut rng);
    let reference = objective(&base, &ctx).unwrap();
    for _ in 0..10 {
        let mut p = Pbm::random(8, &mut rng);
        p.beta_t = base.beta_t.clone();
        p.beta_r = base.beta_r.clone();
        let v = objective(&p, &ctx).unwrap();
        assert!((v - reference).abs() <= 1e-12 * reference, "{v} vs {reference}");
        let g = gradients(&p, &ctx).unwrap();
        assert!(g.grad_theta.iter().all(|z| z.norm() == 0.0));
    }
}
