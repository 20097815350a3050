//! Subcommand bodies. Each returns the files it wrote; the caller owns the
//! manifest.

use std::path::Path;

use starris_core::config::{Design, SweepVariable, SystemConfig};
use starris_core::de::de_xi;
use starris_core::montecarlo::{compare_protocols, run_sweep, validate_de, SweepSpec};
use starris_core::pgam::{multi_start, optimize_conventional, optimize_ms, MultiStart};
use starris_core::ris::{self, Pbm, Protocol, Side};
use starris_core::units::rate_bits;

use crate::output::{num, CommandRecord, Outputs, Table};
use crate::CliError;

/// Result of a subcommand: written files, per-point failures, and whether a
/// validation bound was exceeded.
#[derive(Default)]
pub struct Report {
    pub outputs: Outputs,
    pub failures: Vec<String>,
    pub bound_exceeded: Option<String>,
}

pub fn run(command: &CommandRecord, config: &SystemConfig, out: &Path) -> Result<Report, CliError> {
    match command {
        CommandRecord::De { pbm } => cmd_de(config, pbm.as_deref(), out),
        CommandRecord::Pgam => cmd_pgam(config, out),
        CommandRecord::Sweep { var, values } => cmd_sweep(config, var, values, out),
        CommandRecord::Validate => cmd_validate(config, out),
        CommandRecord::Compare => cmd_compare(config, out),
    }
}

fn header(table: &mut Table, command: &str, config: &SystemConfig) {
    table
        .comment(format!("starris {command} {}", env!("CARGO_PKG_VERSION")))
        .comment(format!(
            "M={} N={} K_t={} K_r={} P_max_dBm={} kappa_bs={} kappa_ue={} protocol={} seed={}",
            config.m(),
            config.n(),
            config.geometry.k_t,
            config.geometry.k_r,
            config.power.p_max_dbm,
            config.impairments.kappa_bs,
            config.impairments.kappa_ue,
            config.optimizer.protocol,
            config.run.seed
        ));
}

fn cmd_de(config: &SystemConfig, pbm_text: Option<&str>, out: &Path) -> Result<Report, CliError> {
    let stats = config.statistics()?;
    let ctx = config.objective_context(&stats)?;
    let pbm = match pbm_text {
        Some(text) => Pbm::from_record(text)?,
        None => Pbm::uniform_split(config.n()),
    };
    let eval = ctx.evaluate(&pbm)?;
    let k = config.k();
    let xi = de_xi(&vec![config.p_max_w() / k as f64; k], config.p_max_w())?;

    let mut t = Table::new(&["user", "side", "delta_bar", "xi_bar", "min_rate_bits"]);
    header(&mut t, "de", config);
    t.comment(if pbm_text.is_some() { "surface: from record" } else { "surface: equal split, zero phases" });
    t.comment("delta_bar is the equivalent of the user's side; the system value is the minimum over sides");
    for user in 0..k {
        let side = stats.sides[user];
        let d = eval.per_side[side as usize].expect("a side with users has a value");
        t.row(vec![user.to_string(), side.tag().to_string(), num(d), num(xi[user]), num(rate_bits(d))]);
    }
    println!("delta_bar = {} (active side {}), min rate {:.4} bit/s/Hz", eval.delta_bar, eval.active.tag(), rate_bits(eval.delta_bar));
    for side in Side::BOTH {
        if let Some(v) = eval.per_side[side as usize] {
            println!("  side {}: {v}", side.tag());
        }
    }
    println!("xi_bar = {xi:?}");
    let mut report = Report::default();
    report.outputs.write(out, "de.csv", &t.render())?;
    Ok(report)
}

fn trace_table(config: &SystemConfig, run: &starris_core::pgam::PgamRun, restart: usize) -> Table {
    let mut t = Table::new(&["iteration", "mu", "delta_bar"]);
    header(&mut t, "pgam", config);
    t.comment(format!("restart {restart}; mu is the step size in effect after the iteration"));
    for r in &run.trace {
        t.row(vec![r.iteration.to_string(), num(r.mu), num(r.delta_bar)]);
    }
    t
}

fn write_restarts(ms: &MultiStart, config: &SystemConfig, report: &mut Report, out: &Path) -> Result<(), CliError> {
    let mut summary = Table::new(&["restart", "status", "delta_bar", "iterations", "converged"]);
    header(&mut summary, "pgam", config);
    for (i, run) in ms.runs.iter().enumerate() {
        match run {
            Ok(run) => {
                report.outputs.write(out, &format!("trace_restart_{i}.csv"), &trace_table(config, run, i).render())?;
                summary.row(vec![
                    i.to_string(),
                    "ok".into(),
                    num(run.delta_bar),
                    run.iterations.to_string(),
                    run.converged.to_string(),
                ]);
            }
            Err(e) => {
                report.failures.push(format!("restart {i}: {e}"));
                summary.row(vec![i.to_string(), "failed".into(), String::new(), String::new(), String::new()]);
            }
        }
    }
    report.outputs.write(out, "restarts.csv", &summary.render())?;
    Ok(())
}

fn cmd_pgam(config: &SystemConfig, out: &Path) -> Result<Report, CliError> {
    let stats = config.statistics()?;
    let ctx = config.objective_context(&stats)?;
    let seed = config.run.seed;
    let mut report = Report::default();
    let (winner, value, restarts, protocol) = match config.optimizer.protocol {
        Design::Es => {
            let ms = multi_start(&config.pgam, &ctx, seed)?;
            let best = ms.best_run();
            (best.pbm.clone(), best.delta_bar, ms, Protocol::Es)
        }
        Design::Ms => {
            let o = optimize_ms(&config.pgam, &ctx, seed, config.optimizer.ms_polish)?;
            if let Some(p) = &o.polish {
                report.outputs.write(out, "trace_polish.csv", &trace_table(config, p, o.es.runs.len()).render())?;
            }
            (o.pbm, o.delta_bar, o.es, Protocol::Ms)
        }
        Design::Conventional => {
            let ms = optimize_conventional(&config.pgam, &ctx, seed)?;
            let best = ms.best_run();
            (best.pbm.clone(), best.delta_bar, ms, Protocol::Es)
        }
    };
    write_restarts(&restarts, config, &mut report, out)?;
    if let Some(v) = ris::validate(&winner, protocol).first() {
        return Err(CliError::Solver(format!("optimized surface state is infeasible: {v}")));
    }
    report.outputs.write(out, "winner.pbm", &winner.to_record())?;
    println!(
        "protocol {}: delta_bar = {value}, min rate {:.4} bit/s/Hz; restart spread {}",
        config.optimizer.protocol,
        rate_bits(value),
        restarts.spread()
    );
    Ok(report)
}

fn cmd_sweep(config: &SystemConfig, var: &str, values: &[f64], out: &Path) -> Result<Report, CliError> {
    let variable: SweepVariable = var.parse().map_err(|e: starris_core::Error| CliError::Usage(e.to_string()))?;
    let spec = SweepSpec {
        variable,
        values: values.to_vec(),
        base: config.clone(),
        n_realizations: config.run.realizations,
        seed: config.run.seed,
    };
    let sweep = run_sweep(&spec)?;
    let mut t = Table::new(&["value", "delta_bar", "mean_delta_star", "std_delta_star", "min_rate_bits"]);
    header(&mut t, "sweep", config);
    t.comment(format!("value = {variable}; delta_bar = equivalent at the optimized surface"));
    t.comment(format!(
        "mean/std_delta_star over {} realizations of the optimal precoder; min_rate_bits = log2(1 + delta_bar)",
        config.run.realizations
    ));
    for r in &sweep.records {
        t.row(vec![num(r.value), num(r.delta_bar), num(r.mean_delta_star), num(r.std_delta_star), num(r.min_rate_bits)]);
        println!("{variable} = {}: delta_bar {} ({:.2}s)", r.value, r.delta_bar, r.runtime_s);
    }
    let mut report = Report::default();
    for (v, e) in &sweep.failures {
        eprintln!("{variable} = {v}: failed: {e}");
        t.comment(format!("failed point {variable}={v}: {e}"));
        report.failures.push(format!("{variable}={v}: {e}"));
    }
    report.outputs.write(out, "sweep.csv", &t.render())?;
    Ok(report)
}

fn cmd_validate(config: &SystemConfig, out: &Path) -> Result<Report, CliError> {
    let rows = validate_de(config, &config.run.validate_sizes, config.run.realizations, config.run.seed)?;
    let bound = config.run.gap_bound;
    let mut t = Table::new(&[
        "size",
        "side",
        "delta_bar",
        "mean_delta_star",
        "std_delta_star",
        "relative_gap",
        "realizations",
        "within_bound",
    ]);
    header(&mut t, "validate", config);
    t.comment(format!("M = N = size; relative_gap = |mean_delta_star - delta_bar| / delta_bar; bound {bound}"));
    println!("{:>6} {:>4} {:>14} {:>14} {:>10}", "size", "side", "delta_bar", "mc_mean", "gap");
    let mut worst: Option<(usize, f64)> = None;
    for r in &rows {
        let v = &r.validation;
        let ok = v.relative_gap <= bound;
        if !ok && worst.is_none_or(|(_, g)| v.relative_gap > g) {
            worst = Some((r.size, v.relative_gap));
        }
        println!("{:>6} {:>4} {:>14.6} {:>14.6} {:>10.4}", r.size, r.side.tag(), v.delta_bar, v.mean_delta_star, v.relative_gap);
        t.row(vec![
            r.size.to_string(),
            r.side.tag().to_string(),
            num(v.delta_bar),
            num(v.mean_delta_star),
            num(v.std_delta_star),
            num(v.relative_gap),
            v.n_realizations.to_string(),
            ok.to_string(),
        ]);
    }
    let mut report = Report::default();
    report.outputs.write(out, "validate.csv", &t.render())?;
    if let Some((size, gap)) = worst {
        report.bound_exceeded = Some(format!("gap {gap} at size {size} exceeds bound {bound}"));
    }
    Ok(report)
}

fn cmd_compare(config: &SystemConfig, out: &Path) -> Result<Report, CliError> {
    let c = compare_protocols(config, config.run.seed)?;
    let mut t = Table::new(&["protocol", "delta_bar", "min_rate_bits"]);
    header(&mut t, "compare", config);
    t.comment("conventional = reflect-only surface with optimized phases");
    let mut report = Report::default();
    for (name, v, pbm) in [
        ("es", c.es, &c.es_pbm),
        ("ms", c.ms, &c.ms_pbm),
        ("conventional", c.conventional, &c.conventional_pbm),
    ] {
        t.row(vec![name.into(), num(v), num(rate_bits(v))]);
        println!("{name:>12}: delta_bar {v}, min rate {:.4} bit/s/Hz", rate_bits(v));
        report.outputs.write(out, &format!("{name}.pbm"), &pbm.to_record())?;
    }
    report.outputs.write(out, "compare.csv", &t.render())?;
    Ok(report)
}

/// Parses a comma-separated list of numbers, requiring strictly increasing values.
pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("`{s}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one number".into()));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Usage("--values must be strictly increasing".into()));
    }
    Ok(values)
}
