//! Browser bindings. Each entry point takes a TOML configuration (empty for
//! the defaults) and returns plain numbers so the page needs no glue beyond
//! the generated module.

use starris_core::config::SystemConfig;
use starris_core::montecarlo::compare_protocols;
use starris_core::pgam::multi_start;
use starris_core::ris::{Pbm, Side};
use starris_core::units::rate_bits;
use wasm_bindgen::prelude::*;

fn parse(config: &str) -> Result<SystemConfig, String> {
    let c = SystemConfig::from_toml_str(config).map_err(|e| e.to_string())?;
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

/// `[delta_bar, rate, delta_t, delta_r]` at the equal split; a side without
/// users reports NaN.
pub fn equal_split_values(config: &str) -> Result<Vec<f64>, String> {
    let c = parse(config)?;
    let stats = c.statistics().map_err(|e| e.to_string())?;
    let ctx = c.objective_context(&stats).map_err(|e| e.to_string())?;
    let e = ctx.evaluate(&Pbm::uniform_split(c.n())).map_err(|e| e.to_string())?;
    let side = |s: Side| e.per_side[s as usize].unwrap_or(f64::NAN);
    Ok(vec![e.delta_bar, rate_bits(e.delta_bar), side(Side::Transmission), side(Side::Reflection)])
}

#[wasm_bindgen]
pub struct Optimized {
    delta_bar: f64,
    spread: f64,
    trace: Vec<f64>,
    beta_t: Vec<f64>,
}

#[wasm_bindgen]
impl Optimized {
    #[wasm_bindgen(getter)]
    pub fn delta_bar(&self) -> f64 {
        self.delta_bar
    }

    #[wasm_bindgen(getter)]
    pub fn rate(&self) -> f64 {
        rate_bits(self.delta_bar)
    }

    /// max - min over restarts.
    #[wasm_bindgen(getter)]
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// Objective per iteration of the winning restart.
    #[wasm_bindgen(getter)]
    pub fn trace(&self) -> Vec<f64> {
        self.trace.clone()
    }

    /// Transmission amplitude per element; reflection is sqrt(1 - b^2).
    #[wasm_bindgen(getter)]
    pub fn beta_t(&self) -> Vec<f64> {
        self.beta_t.clone()
    }
}

pub fn optimize_surface(config: &str, seed: u64) -> Result<Optimized, String> {
    let c = parse(config)?;
    let stats = c.statistics().map_err(|e| e.to_string())?;
    let ctx = c.objective_context(&stats).map_err(|e| e.to_string())?;
    let ms = multi_start(&c.pgam, &ctx, seed).map_err(|e| e.to_string())?;
    let best = ms.best_run();
    Ok(Optimized {
        delta_bar: best.delta_bar,
        spread: ms.spread(),
        trace: best.trace.iter().map(|r| r.delta_bar).collect(),
        beta_t: best.pbm.beta_t.clone(),
    })
}

/// `[energy splitting, mode switching, reflect-only]` optimized values.
pub fn compare_values(config: &str, seed: u64) -> Result<Vec<f64>, String> {
    let c = parse(config)?;
    let cmp = compare_protocols(&c, seed).map_err(|e| e.to_string())?;
    Ok(vec![cmp.es, cmp.ms, cmp.conventional])
}

#[wasm_bindgen]
pub fn equal_split(config: &str) -> Result<Vec<f64>, JsError> {
    equal_split_values(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn optimize(config: &str, seed: u64) -> Result<Optimized, JsError> {
    optimize_surface(config, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(config: &str, seed: u64) -> Result<Vec<f64>, JsError> {
    compare_values(config, seed).map_err(|e| JsError::new(&e))
}
