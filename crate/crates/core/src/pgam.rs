//! Statistical beamforming of the surface: projected gradient ascent on the
//! deterministic-equivalent balanced SINR.
//!
//! Users on side s share the covariance R_s = ρ_s t_s R_BS with
//! t_s = φ_sᴴ B φ_s and ρ_s the weakest large-scale gain on that side. The
//! objective is the smaller of the per-side equivalents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelStatistics;
use crate::de::{DeCoefficients, DeForm, DeInput, DeOptions};
use crate::error::{param, Error, Result};
use crate::linalg::CVec;
use crate::olp::HwiParams;
use crate::par;
use crate::ris::{self, ms_round, project_beta, project_theta, Pbm, Protocol, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgamConfig {
    pub mu_init: f64,
    pub kappa_step: f64,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub max_shrinks: usize,
}

impl Default for PgamConfig {
    fn default() -> Self {
        PgamConfig {
            mu_init: 1.0,
            kappa_step: 0.5,
            tol: 1e-5,
            max_iter: 200,
            n_restarts: 5,
            max_shrinks: 60,
        }
    }
}

impl PgamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_init > 0.0) {
            return Err(param("mu_init must be positive"));
        }
        if !(self.kappa_step > 0.0 && self.kappa_step < 1.0) {
            return Err(param("kappa_step must lie in (0, 1)"));
        }
        if !(self.tol >= 0.0) || self.max_iter == 0 || self.n_restarts == 0 {
            return Err(param("tol must be >= 0, max_iter and n_restarts >= 1"));
        }
        Ok(())
    }
}

/// Which variables the ascent may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variables {
    All,
    /// Amplitudes stay fixed (mode-switching polish, conventional surface).
    PhasesOnly,
}

/// Everything needed to evaluate the objective besides the surface state.
#[derive(Debug, Clone)]
pub struct ObjectiveContext<'a> {
    stats: &'a ChannelStatistics,
    coef: DeCoefficients,
    de_opts: DeOptions,
    side_rho: [Option<f64>; 2],
    powers: Vec<f64>,
    p_max: f64,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub delta_bar: f64,
    pub per_side: [Option<f64>; 2],
    pub active: Side,
}

/// Gradients of the objective at a point. Phase gradients are Wirtinger
/// derivatives ∂δ̄/∂θ*; `grad_theta` keeps only the part tangent to the unit
/// circle, `grad_theta_raw` is the unconstrained derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub grad_theta: Vec<Complex64>,
    pub grad_theta_raw: Vec<Complex64>,
    pub grad_beta: Vec<f64>,
    pub objective: f64,
    pub active: Side,
}

#[derive(Debug, Clone)]
struct SideGradient {
    side: Side,
    delta: f64,
    theta_raw: Vec<Complex64>,
    theta: Vec<Complex64>,
    beta: Vec<f64>,
}

impl<'a> ObjectiveContext<'a> {
    pub fn new(
        stats: &'a ChannelStatistics,
        hwi: &HwiParams,
        powers: Vec<f64>,
        p_max: f64,
        weights: Vec<f64>,
        form: DeForm,
        de_opts: DeOptions,
    ) -> Result<Self> {
        let k = stats.k();
        let coef = DeCoefficients::new(k, hwi.kappa_bar(), &powers, p_max, &weights, form)?;
        let side_rho = Side::BOTH.map(|s| {
            stats
                .users_on(s)
                .map(|k| stats.rho(k))
                .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))))
        });
        Ok(ObjectiveContext { stats, coef, de_opts, side_rho, powers, p_max, weights })
    }

    /// Equal powers P_max/K, unit weights, default equivalent form.
    pub fn equal_powers(stats: &'a ChannelStatistics, hwi: &HwiParams, p_max: f64) -> Result<Self> {
        let k = stats.k();
        ObjectiveContext::new(
            stats,
            hwi,
            vec![p_max / k as f64; k],
            p_max,
            vec![1.0; k],
            DeForm::default(),
            DeOptions::default(),
        )
    }

    pub fn stats(&self) -> &ChannelStatistics {
        self.stats
    }

    pub fn side_rho(&self, side: Side) -> Option<f64> {
        self.side_rho[side as usize]
    }

    fn unit_eigenvalues(&self, side: Side) -> Option<Vec<f64>> {
        let rho = self.side_rho(side)?;
        Some(self.stats.bs_eigenvalues().iter().map(|m| rho * m.max(0.0)).collect())
    }

    /// Equivalent input for one side at this surface state.
    pub fn de_input(&self, pbm: &Pbm, side: Side) -> Result<DeInput> {
        let rho = self
            .side_rho(side)
            .ok_or_else(|| param(format!("no users on side {}", side.tag())))?;
        let t = self.stats.trace_factor(&pbm.coefficients(side)).max(0.0);
        Ok(DeInput {
            r: self.stats.r_bs.scale(rho * t),
            k_users: self.stats.k(),
            kappa_bar: self.coef.kappa_bar,
            powers: self.powers.clone(),
            p_max: self.p_max,
            weights: self.weights.clone(),
            form: self.coef.form,
        })
    }

    fn check(&self, pbm: &Pbm) -> Result<()> {
        if pbm.n() != self.stats.n() {
            return Err(param(format!(
                "surface state has {} elements, statistics have {}",
                pbm.n(),
                self.stats.n()
            )));
        }
        Ok(())
    }

    fn side_value(&self, pbm: &Pbm, side: Side) -> Result<Option<(f64, f64, CVec, Vec<f64>)>> {
        let Some(unit) = self.unit_eigenvalues(side) else {
            return Ok(None);
        };
        let phi = pbm.coefficients(side);
        let bphi = self.stats.kernel() * &phi;
        let t = phi.dotc(&bphi).re.max(0.0);
        let eig: Vec<f64> = unit.iter().map(|u| u * t).collect();
        let (delta, _, _) = self.coef.solve(&eig, &self.de_opts)?;
        Ok(Some((delta, t, bphi, unit)))
    }

    pub fn evaluate(&self, pbm: &Pbm) -> Result<Evaluation> {
        self.check(pbm)?;
        let mut per_side = [None, None];
        for side in Side::BOTH {
            per_side[side as usize] = self.side_value(pbm, side)?.map(|v| v.0);
        }
        // ties go to the transmission side
        let (active, delta_bar) = match per_side {
            [Some(t), Some(r)] if r < t => (Side::Reflection, r),
            [Some(t), _] => (Side::Transmission, t),
            [None, Some(r)] => (Side::Reflection, r),
            [None, None] => return Err(param("no users")),
        };
        Ok(Evaluation { delta_bar, per_side, active })
    }

    fn side_gradient(&self, pbm: &Pbm, side: Side) -> Result<Option<SideGradient>> {
        let Some((delta, t, bphi, unit)) = self.side_value(pbm, side)? else {
            return Ok(None);
        };
        let p = self.coef.partials(&unit, t, delta);
        let slope = 1.0 - p.d_delta;
        if slope.abs() < 1e-14 {
            return Err(Error::Degenerate(format!(
                "implicit derivative undefined on side {} (1 - dF/dδ = {slope:e})",
                side.tag()
            )));
        }
        let dd_dt = p.d_scale / slope;
        let theta = pbm.theta(side);
        let beta = pbm.beta(side);
        let n = pbm.n();
        let mut g = SideGradient {
            side,
            delta,
            theta_raw: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            beta: Vec::with_capacity(n),
        };
        for i in 0..n {
            let raw = bphi[i] * (dd_dt * beta[i]);
            // the diagonal of the kernel is real and drops out of the phase
            // derivative; leaving it out keeps that derivative exactly zero
            // when the kernel is diagonal
            let off_diag = bphi[i] - self.stats.kernel()[(i, i)] * (theta[i] * beta[i]);
            let along = dd_dt * beta[i] * (off_diag * theta[i].conj()).im;
            g.theta_raw.push(raw);
            g.theta.push(Complex64::new(0.0, along) * theta[i]);
            g.beta.push(2.0 * dd_dt * (theta[i].conj() * bphi[i]).re);
        }
        Ok(Some(g))
    }
}

/// Objective δ̄ at a surface state.
pub fn objective(pbm: &Pbm, ctx: &ObjectiveContext<'_>) -> Result<f64> {
    Ok(ctx.evaluate(pbm)?.delta_bar)
}

/// Gradient of the active side's equivalent. Components of the other side are zero.
pub fn gradients(pbm: &Pbm, ctx: &ObjectiveContext<'_>) -> Result<GradientBundle> {
    let eval = ctx.evaluate(pbm)?;
    let n = pbm.n();
    let zero = Complex64::new(0.0, 0.0);
    let mut out = GradientBundle {
        grad_theta: vec![zero; 2 * n],
        grad_theta_raw: vec![zero; 2 * n],
        grad_beta: vec![0.0; 2 * n],
        objective: eval.delta_bar,
        active: eval.active,
    };
    if let Some(g) = ctx.side_gradient(pbm, eval.active)? {
        let off = offset(eval.active, n);
        out.grad_theta[off..off + n].copy_from_slice(&g.theta);
        out.grad_theta_raw[off..off + n].copy_from_slice(&g.theta_raw);
        out.grad_beta[off..off + n].copy_from_slice(&g.beta);
    }
    Ok(out)
}

fn offset(side: Side, n: usize) -> usize {
    match side {
        Side::Transmission => 0,
        Side::Reflection => n,
    }
}

/// Search direction in stacked coordinates.
#[derive(Debug, Clone)]
struct Direction {
    theta: Vec<Complex64>,
    beta: Vec<f64>,
}

impl Direction {
    fn from_bundle(g: &GradientBundle) -> Self {
        Direction { theta: g.grad_theta.clone(), beta: g.grad_beta.clone() }
    }

    fn is_zero(&self) -> bool {
        self.theta.iter().all(|z| z.norm_sqr() == 0.0) && self.beta.iter().all(|b| *b == 0.0)
    }
}

impl Direction {
    fn dot(&self, other: &Direction) -> f64 {
        let th: f64 = self.theta.iter().zip(&other.theta).map(|(a, b)| (a.conj() * b).re).sum();
        let be: f64 = self.beta.iter().zip(&other.beta).map(|(a, b)| a * b).sum();
        2.0 * th + be
    }

    fn axpy(&mut self, w: f64, other: &Direction) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += b * w;
        }
        for (a, b) in self.beta.iter_mut().zip(&other.beta) {
            *a += b * w;
        }
    }
}

/// One side's gradient in stacked coordinates. The amplitude part is taken
/// along the circle β_t² + β_r² = 1, so raising one side's amplitude shows
/// up as the loss it causes on the other side.
fn stacked(g: &SideGradient, pbm: &Pbm, vars: Variables) -> Direction {
    let n = pbm.n();
    let zero = Complex64::new(0.0, 0.0);
    let mut d = Direction { theta: vec![zero; 2 * n], beta: vec![0.0; 2 * n] };
    let off = offset(g.side, n);
    d.theta[off..off + n].copy_from_slice(&g.theta);
    if vars == Variables::All {
        for i in 0..n {
            let (bt, br) = (pbm.beta_t[i], pbm.beta_r[i]);
            let norm = bt * bt + br * br;
            // tangent (−β_r, β_t); coefficient of the side's raw slope on it
            let c = match g.side {
                Side::Transmission => -br * g.beta[i],
                Side::Reflection => bt * g.beta[i],
            } / norm;
            d.beta[i] = -br * c;
            d.beta[n + i] = bt * c;
        }
    }
    d
}

/// Step direction for the max-min of the side objectives at step size μ.
/// With one side it is that side's gradient. With two, d = λ g_t + (1−λ) g_r
/// with λ chosen to maximize the linearized minimum after a step of length
/// μ; far from a tie this is the lower side's gradient.
fn direction(sides: &[SideGradient], pbm: &Pbm, mu: f64, vars: Variables) -> Direction {
    let dirs: Vec<Direction> = sides.iter().map(|g| stacked(g, pbm, vars)).collect();
    match dirs.as_slice() {
        [] => {
            let n = pbm.n();
            Direction { theta: vec![Complex64::new(0.0, 0.0); 2 * n], beta: vec![0.0; 2 * n] }
        }
        [d] => d.clone(),
        [a, b] => {
            let (aa, bb, ab) = (a.dot(a), b.dot(b), a.dot(b));
            let (da, db) = (sides[0].delta, sides[1].delta);
            // linearized side values after the step, as functions of λ
            let lin = |lam: f64| {
                let va = da + mu * (lam * aa + (1.0 - lam) * ab);
                let vb = db + mu * (lam * ab + (1.0 - lam) * bb);
                va.min(vb)
            };
            let curv = aa + bb - 2.0 * ab;
            let mut lam = if curv > 0.0 { ((db - da + mu * (bb - ab)) / (mu * curv)).clamp(0.0, 1.0) } else { 1.0 };
            for end in [0.0, 1.0] {
                if lin(end) > lin(lam) {
                    lam = end;
                }
            }
            let mut d = a.clone();
            for v in d.theta.iter_mut() {
                *v *= lam;
            }
            for v in d.beta.iter_mut() {
                *v *= lam;
            }
            d.axpy(1.0 - lam, b);
            d
        }
        _ => unreachable!("at most two sides"),
    }
}

fn surrogate(value: f64, current: &Pbm, candidate: &Pbm, dir: &Direction, mu: f64) -> f64 {
    let (t0, t1) = (current.stacked_theta(), candidate.stacked_theta());
    let (b0, b1) = (current.stacked_beta(), candidate.stacked_beta());
    let mut q = value;
    for i in 0..t0.len() {
        let dt = t1[i] - t0[i];
        let db = b1[i] - b0[i];
        q += (dir.theta[i].conj() * dt).re - dt.norm_sqr() / mu;
        q += dir.beta[i] * db - db * db / mu;
    }
    q
}

/// Q_μ = δ̄ + Re⟨∇_θ, Δθ⟩ − ‖Δθ‖²/μ + ⟨∇_β, Δβ⟩ − ‖Δβ‖²/μ.
pub fn quadratic_surrogate(current: &Pbm, candidate: &Pbm, grads: &GradientBundle, mu: f64) -> f64 {
    surrogate(grads.objective, current, candidate, &Direction::from_bundle(grads), mu)
}

fn step(pbm: &Pbm, dir: &Direction, mu: f64, vars: Variables) -> Pbm {
    let theta: Vec<Complex64> = pbm
        .stacked_theta()
        .iter()
        .zip(&dir.theta)
        .map(|(t, g)| t + g * mu)
        .collect();
    let beta = match vars {
        Variables::All => {
            let raw: Vec<f64> = pbm.stacked_beta().iter().zip(&dir.beta).map(|(b, g)| b + mu * g).collect();
            project_beta(&raw)
        }
        Variables::PhasesOnly => pbm.stacked_beta(),
    };
    Pbm::from_stacked(&project_theta(&theta), &beta).expect("stacked vectors keep their shape")
}

/// One projected gradient step of length μ.
pub fn pgam_step(pbm: &Pbm, grads: &GradientBundle, mu: f64) -> Pbm {
    step(pbm, &Direction::from_bundle(grads), mu, Variables::All)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub mu: f64,
    pub delta_bar: f64,
}

#[derive(Debug, Clone)]
pub struct PgamRun {
    pub pbm: Pbm,
    pub delta_bar: f64,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn run_pgam(init: &Pbm, config: &PgamConfig, ctx: &ObjectiveContext<'_>) -> Result<PgamRun> {
    run_pgam_with(init, config, ctx, Variables::All)
}

pub fn run_pgam_with(
    init: &Pbm,
    config: &PgamConfig,
    ctx: &ObjectiveContext<'_>,
    vars: Variables,
) -> Result<PgamRun> {
    config.validate()?;
    let mut canonical = init.clone();
    canonical.absorb_signs();
    let violations = ris::validate(&canonical, Protocol::Es);
    if let Some(v) = violations.first() {
        return Err(param(format!("initial surface state infeasible: {v}")));
    }
    let mut pbm = init.clone();
    let mut current = objective(&pbm, ctx)?;
    let mut mu = config.mu_init;
    let mut trace = vec![TraceRecord { iteration: 0, mu, delta_bar: current }];
    let mut converged = false;
    let mut iterations = 0;

    'outer: for it in 1..=config.max_iter {
        iterations = it;
        let mut sides = Vec::with_capacity(2);
        for side in Side::BOTH {
            let g = ctx
                .side_gradient(&pbm, side)
                .map_err(|e| Error::Degenerate(format!("iteration {it}: {e}")))?;
            sides.extend(g);
        }
        let mut shrinks = 0;
        let (next, value) = loop {
            let dir = direction(&sides, &pbm, mu, vars);
            if dir.is_zero() {
                converged = true;
                break 'outer;
            }
            let cand = step(&pbm, &dir, mu, vars);
            let value = objective(&cand, ctx)?;
            if value > surrogate(current, &pbm, &cand, &dir, mu) && value >= current {
                break (cand, value);
            }
            shrinks += 1;
            if shrinks > config.max_shrinks {
                // A step this short only moves the objective by rounding noise.
                if (value - current).abs() <= 1e-12 * current.abs() {
                    converged = true;
                    break 'outer;
                }
                return Err(Error::Stall { iteration: it, shrinks });
            }
            mu *= config.kappa_step;
        };
        let change = value - current;
        pbm = next;
        current = value;
        trace.push(TraceRecord { iteration: it, mu, delta_bar: current });
        if change <= config.tol * current.abs() {
            converged = true;
            break;
        }
    }
    pbm.absorb_signs();
    Ok(PgamRun { pbm, delta_bar: current, trace, iterations, converged })
}

/// Results of independent restarts; `best` indexes the highest objective.
#[derive(Debug)]
pub struct MultiStart {
    pub runs: Vec<Result<PgamRun>>,
    pub best: usize,
}

impl MultiStart {
    pub fn best_run(&self) -> &PgamRun {
        self.runs[self.best].as_ref().expect("best index points at a successful run")
    }

    /// max − min of the final objectives over successful restarts.
    pub fn spread(&self) -> f64 {
        let vals: Vec<f64> = self.runs.iter().flatten().map(|r| r.delta_bar).collect();
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

fn collect_best(runs: Vec<Result<PgamRun>>) -> Result<MultiStart> {
    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|r| (i, r.delta_bar)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((i, v)),
        });
    match best {
        Some((best, _)) => Ok(MultiStart { runs, best }),
        None => {
            let attempts = runs.len();
            let first = runs
                .into_iter()
                .find_map(|r| r.err())
                .unwrap_or_else(|| param("no restarts requested"));
            Err(Error::AllRestartsFailed { attempts, first: Box::new(first) })
        }
    }
}

/// Random restarts, restart r drawing its initial point from stream r of `seed`.
pub fn multi_start(config: &PgamConfig, ctx: &ObjectiveContext<'_>, seed: u64) -> Result<MultiStart> {
    config.validate()?;
    let n = ctx.stats().n();
    let runs = par::map_indexed(config.n_restarts, |r| {
        let mut rng = par::stream_rng(seed, r as u64);
        run_pgam(&Pbm::random(n, &mut rng), config, ctx)
    });
    collect_best(runs)
}

/// Conventional reflect-only surface: β_r = 1, β_t = 0, phases optimized.
pub fn optimize_conventional(
    config: &PgamConfig,
    ctx: &ObjectiveContext<'_>,
    seed: u64,
) -> Result<MultiStart> {
    config.validate()?;
    let n = ctx.stats().n();
    let runs = par::map_indexed(config.n_restarts, |r| {
        let mut rng = par::stream_rng(seed, r as u64);
        let mut init = Pbm::random(n, &mut rng);
        init.beta_t = vec![0.0; n];
        init.beta_r = vec![1.0; n];
        run_pgam_with(&init, config, ctx, Variables::PhasesOnly)
    });
    collect_best(runs)
}

#[derive(Debug)]
pub struct MsOutcome {
    pub pbm: Pbm,
    pub delta_bar: f64,
    pub es: MultiStart,
    pub polish: Option<PgamRun>,
}

/// Binary amplitudes from an energy-splitting state. Elements are ranked by
/// how strongly they lean towards transmission and the first n go to the
/// transmission side, n chosen to maximize the objective. Plain rounding is
/// one of the candidates and wins ties, so the result is never worse than it.
pub fn ms_assign(pbm: &Pbm, ctx: &ObjectiveContext<'_>) -> Result<(Pbm, f64)> {
    let mut best = ms_round(pbm);
    let mut best_val = objective(&best, ctx)?;
    let n = pbm.n();
    let lean: Vec<f64> = (0..n).map(|i| pbm.beta_t[i].powi(2) - pbm.beta_r[i].powi(2)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lean[b].total_cmp(&lean[a]));
    for n_t in 0..=n {
        let mut cand = pbm.clone();
        for (rank, &i) in order.iter().enumerate() {
            let transmit = rank < n_t;
            cand.beta_t[i] = if transmit { 1.0 } else { 0.0 };
            cand.beta_r[i] = if transmit { 0.0 } else { 1.0 };
        }
        let v = objective(&cand, ctx)?;
        if v > best_val {
            best = cand;
            best_val = v;
        }
    }
    Ok((best, best_val))
}

/// Mode-switching state from an energy-splitting one, optionally followed by
/// a phase-only ascent.
pub fn ms_from_es(
    es_pbm: &Pbm,
    config: &PgamConfig,
    ctx: &ObjectiveContext<'_>,
    polish: bool,
) -> Result<(Pbm, f64, Option<PgamRun>)> {
    let (rounded, v) = ms_assign(es_pbm, ctx)?;
    if polish {
        let run = run_pgam_with(&rounded, config, ctx, Variables::PhasesOnly)?;
        Ok((run.pbm.clone(), run.delta_bar, Some(run)))
    } else {
        Ok((rounded, v, None))
    }
}

/// Energy-splitting restarts, rounded to binary amplitudes.
pub fn optimize_ms(
    config: &PgamConfig,
    ctx: &ObjectiveContext<'_>,
    seed: u64,
    polish: bool,
) -> Result<MsOutcome> {
    let es = multi_start(config, ctx, seed)?;
    let (pbm, delta_bar, polish) = ms_from_es(&es.best_run().pbm, config, ctx, polish)?;
    Ok(MsOutcome { pbm, delta_bar, es, polish })
}
