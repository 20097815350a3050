//! Seeded Monte-Carlo experiments: parameter sweeps, validation of the
//! deterministic equivalent and protocol comparisons.

use std::time::Instant;

use crate::channel::sample_channels_with;
use crate::config::{grid_for, Design, SweepVariable, SystemConfig};
use crate::de::{de_validate_against_mc, mean_std, DeValidation};
use crate::error::{param, Error, Result};
use crate::olp::{self, OlpOptions};
use crate::par;
use crate::pgam::{
    ms_from_es, multi_start, optimize_conventional, optimize_ms, run_pgam, run_pgam_with, MultiStart,
    ObjectiveContext, PgamConfig, Variables,
};
use crate::ris::{Pbm, Side};
use crate::units::rate_bits;

/// Seed for auxiliary task `index` (optimizer restarts, per-point designs),
/// kept apart from the realization streams.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    use rand::Rng;
    par::stream_rng(seed, (1 << 63) | index as u64).random()
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub base: SystemConfig,
    pub n_realizations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub value: f64,
    pub delta_bar: f64,
    pub mean_delta_star: f64,
    pub std_delta_star: f64,
    pub min_rate_bits: f64,
    pub runtime_s: f64,
}

#[derive(Debug)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<(f64, Error)>,
}

/// Surface design together with the restarts that produced it.
#[derive(Debug)]
pub struct SurfaceDesign {
    pub pbm: Pbm,
    pub delta_bar: f64,
    pub restarts: MultiStart,
}

pub fn design_surface(config: &SystemConfig, ctx: &ObjectiveContext<'_>, seed: u64) -> Result<SurfaceDesign> {
    let pg = &config.pgam;
    match config.optimizer.protocol {
        Design::Es => {
            let ms = multi_start(pg, ctx, seed)?;
            let best = ms.best_run();
            Ok(SurfaceDesign { pbm: best.pbm.clone(), delta_bar: best.delta_bar, restarts: ms })
        }
        Design::Ms => {
            let out = optimize_ms(pg, ctx, seed, config.optimizer.ms_polish)?;
            Ok(SurfaceDesign { pbm: out.pbm, delta_bar: out.delta_bar, restarts: out.es })
        }
        Design::Conventional => {
            let ms = optimize_conventional(pg, ctx, seed)?;
            let best = ms.best_run();
            Ok(SurfaceDesign { pbm: best.pbm.clone(), delta_bar: best.delta_bar, restarts: ms })
        }
    }
}

/// Balanced SINR of the optimal precoder over `n` channel draws at a fixed
/// surface state. Realization r of point `point` uses its own stream.
pub fn sample_delta_star(
    config: &SystemConfig,
    stats: &crate::channel::ChannelStatistics,
    pbm: &Pbm,
    n: usize,
    seed: u64,
    point: usize,
) -> Result<Vec<f64>> {
    let hwi = config.hwi()?;
    let pc = config.power_constraint()?;
    let a = config.priorities()?;
    let opts = OlpOptions::default();
    let mode = config.run.sampling;
    par::map_indexed(n, |r| {
        let mut rng = par::stream_rng(seed, par::task_stream(point, r));
        sample_channels_with(stats, pbm, mode, &mut rng)
            .and_then(|h| {
                // a user the surface does not serve caps the minimum at zero
                if h.iter().any(|hk| hk.iter().all(|z| z.norm_sqr() == 0.0)) {
                    return Ok(0.0);
                }
                olp::solve_olp(&h, &hwi, &pc, &a, &opts).map(|s| s.delta_star)
            })
            .map_err(|e| Error::Realization { index: r, source: Box::new(e) })
    })
    .into_iter()
    .collect()
}

fn sweep_point(spec: &SweepSpec, index: usize) -> Result<SweepRecord> {
    let start = Instant::now();
    let value = spec.values[index];
    let config = spec.base.with_variable(spec.variable, value)?;
    let stats = config.statistics()?;
    let ctx = config.objective_context(&stats)?;
    let design = design_surface(&config, &ctx, derive_seed(spec.seed, index))?;
    let draws = sample_delta_star(&config, &stats, &design.pbm, spec.n_realizations, spec.seed, index)?;
    let (mean, std) = mean_std(&draws);
    Ok(SweepRecord {
        value,
        delta_bar: design.delta_bar,
        mean_delta_star: mean,
        std_delta_star: std,
        min_rate_bits: rate_bits(design.delta_bar),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs every sweep point; failing points are reported and skipped.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    if spec.values.is_empty() {
        return Err(param("sweep needs at least one value"));
    }
    if spec.n_realizations == 0 {
        return Err(param("sweep needs at least one realization"));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for i in 0..spec.values.len() {
        match sweep_point(spec, i) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("sweep point {}={} failed: {e}", spec.variable, spec.values[i]);
                failures.push((spec.values[i], e));
            }
        }
    }
    Ok(SweepReport { records, failures })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub size: usize,
    pub side: Side,
    pub validation: DeValidation,
}

/// Compares the equivalent with Monte-Carlo at M = N = size for each size,
/// using the default surface state (equal split, zero phases) and the
/// covariance of the weaker side.
pub fn validate_de(base: &SystemConfig, sizes: &[usize], n_realizations: usize, seed: u64) -> Result<Vec<GapRow>> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let mut cfg = base.clone();
            cfg.array.antennas = size;
            let (h, v) = grid_for(size);
            cfg.surface.n_h = h;
            cfg.surface.n_v = v;
            let stats = cfg.statistics()?;
            let ctx = cfg.objective_context(&stats)?;
            let pbm = Pbm::uniform_split(cfg.n());
            let side = ctx.evaluate(&pbm)?.active;
            let input = ctx.de_input(&pbm, side)?;
            let validation = de_validate_against_mc(&input, &cfg.de_options(), n_realizations, derive_seed(seed, i))?;
            Ok(GapRow { size, side, validation })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ProtocolComparison {
    pub es: f64,
    pub ms: f64,
    pub conventional: f64,
    pub es_pbm: Pbm,
    pub ms_pbm: Pbm,
    pub conventional_pbm: Pbm,
}

/// Optimizes all three designs on the same statistics. Each design is also
/// started from the others' optima, so a design with a larger feasible set
/// never ends below one with a smaller set because of a poor local optimum.
pub fn compare_protocols(config: &SystemConfig, seed: u64) -> Result<ProtocolComparison> {
    let stats = config.statistics()?;
    let ctx = config.objective_context(&stats)?;
    compare_protocols_in(&ctx, &config.pgam, config.optimizer.ms_polish, seed)
}

pub fn compare_protocols_in(
    ctx: &ObjectiveContext<'_>,
    pg: &PgamConfig,
    ms_polish: bool,
    seed: u64,
) -> Result<ProtocolComparison> {
    let es0 = multi_start(pg, ctx, derive_seed(seed, 0))?;
    let es0 = es0.best_run().clone();

    let (ms_pbm, ms, _) = ms_from_es(&es0.pbm, pg, ctx, ms_polish)?;

    let conv0 = optimize_conventional(pg, ctx, derive_seed(seed, 1))?;
    let mut conv_best = conv0.best_run().clone();
    let mut es_best = es0;
    for start in [&ms_pbm, &conv_best.pbm.clone()] {
        let run = run_pgam(start, pg, ctx)?;
        if run.delta_bar > es_best.delta_bar {
            es_best = run;
        }
    }
    // alternate warm starts until neither design improves on the other's optimum
    for _ in 0..4 {
        let mut warm = es_best.pbm.clone();
        warm.beta_t = vec![0.0; warm.n()];
        warm.beta_r = vec![1.0; warm.n()];
        let conv = run_pgam_with(&warm, pg, ctx, Variables::PhasesOnly)?;
        if conv.delta_bar <= conv_best.delta_bar {
            break;
        }
        conv_best = conv;
        let es = run_pgam(&conv_best.pbm, pg, ctx)?;
        if es.delta_bar <= es_best.delta_bar {
            break;
        }
        es_best = es;
    }

    Ok(ProtocolComparison {
        es: es_best.delta_bar,
        ms,
        conventional: conv_best.delta_bar,
        es_pbm: es_best.pbm,
        ms_pbm,
        conventional_pbm: conv_best.pbm,
    })
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// A monotone trend holds if there are at least 4 points and the rank
/// correlation has the expected sign with magnitude at least 0.8.
pub fn trend_holds(x: &[f64], y: &[f64], increasing: bool) -> bool {
    if x.len() < 4 || x.len() != y.len() {
        return false;
    }
    let rho = spearman(x, y);
    if increasing {
        rho >= 0.8
    } else {
        rho <= -0.8
    }
}
