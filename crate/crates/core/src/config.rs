//! Experiment configuration. One TOML document with a section per concern;
//! every field has a default so partial files are accepted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{
    build_bs_correlation, build_ris_correlation, path_loss, ChannelStatistics, PhaseNoiseModel,
    SamplingMode, SystemGeometry,
};
use crate::de::{DeForm, DeOptions};
use crate::error::{Error, Result};
use crate::olp::{HwiParams, PowerConstraint, PriorityVector};
use crate::pgam::{ObjectiveContext, PgamConfig};
use crate::units;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub array: ArrayConfig,
    pub surface: SurfaceConfig,
    pub geometry: GeometryConfig,
    pub propagation: PropagationConfig,
    pub power: PowerConfig,
    pub impairments: ImpairmentConfig,
    pub optimizer: OptimizerConfig,
    pub pgam: PgamConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub antennas: usize,
    /// Number of angles P spanning the BS correlation; half the antennas if unset.
    pub angles: Option<usize>,
    /// Antenna spacing in wavelengths.
    pub spacing: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig { antennas: 64, angles: None, spacing: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub n_h: usize,
    pub n_v: usize,
    /// Element width and height in wavelengths.
    pub element_size: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig { n_h: 8, n_v: 8, element_size: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub bs: [f64; 2],
    pub ris: [f64; 2],
    pub d0: f64,
    pub k_t: usize,
    pub k_r: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { bs: [0.0, 0.0], ris: [50.0, 10.0], d0: 20.0, k_t: 2, k_r: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub carrier_hz: f64,
    pub alpha_t: f64,
    pub alpha_r: f64,
    pub alpha_bs_ris: f64,
    pub bandwidth_hz: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            carrier_hz: 3e9,
            alpha_t: 3.0,
            alpha_r: 2.5,
            alpha_bs_ris: 2.2,
            bandwidth_hz: 200e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub p_max_dbm: f64,
    /// Per-user power weights; all ones if unset.
    pub weights: Option<Vec<f64>>,
    /// Per-user SINR priorities; all ones if unset.
    pub priorities: Option<Vec<f64>>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig { p_max_dbm: 20.0, weights: None, priorities: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseNoiseKind {
    None,
    Uniform,
    VonMises,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentConfig {
    pub kappa_bs: f64,
    pub kappa_ue: f64,
    pub phase_noise: PhaseNoiseKind,
    pub phase_noise_kappa: f64,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        ImpairmentConfig {
            kappa_bs: 0.0,
            kappa_ue: 0.0,
            phase_noise: PhaseNoiseKind::VonMises,
            phase_noise_kappa: 2.0,
        }
    }
}

/// How the surface is designed for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Es,
    Ms,
    /// Reflect-only surface with optimized phases.
    Conventional,
}

impl FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "es" => Ok(Design::Es),
            "ms" => Ok(Design::Ms),
            "conventional" => Ok(Design::Conventional),
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Es => "es",
            Design::Ms => "ms",
            Design::Conventional => "conventional",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub protocol: Design,
    /// Phase-only ascent after rounding to mode switching.
    pub ms_polish: bool,
    pub de_form: DeForm,
    pub de_tol: f64,
    pub de_max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            protocol: Design::Es,
            ms_polish: false,
            de_form: DeForm::default(),
            de_tol: 1e-10,
            de_max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub realizations: usize,
    pub sampling: SamplingMode,
    /// Array sizes (M = N) used by the validation experiment.
    pub validate_sizes: Vec<usize>,
    /// Largest acceptable relative gap between the equivalent and Monte-Carlo.
    pub gap_bound: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            realizations: 1000,
            sampling: SamplingMode::GaussianEquivalent,
            validate_sizes: vec![16, 32, 64],
            gap_bound: 0.10,
        }
    }
}

/// Quantities a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    N,
    M,
    PmaxDb,
    KappaBs,
    KappaUe,
    PhaseNoiseKappa,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::N => "N",
            SweepVariable::M => "M",
            SweepVariable::PmaxDb => "P_max_dB",
            SweepVariable::KappaBs => "kappa_bs",
            SweepVariable::KappaUe => "kappa_ue",
            SweepVariable::PhaseNoiseKappa => "phase_noise_kappa",
        }
    }
}

impl FromStr for SweepVariable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(SweepVariable::N),
            "M" | "m" => Ok(SweepVariable::M),
            "P_max_dB" | "p_max_db" | "pmax" | "p_max_dbm" => Ok(SweepVariable::PmaxDb),
            "kappa_bs" => Ok(SweepVariable::KappaBs),
            "kappa_ue" => Ok(SweepVariable::KappaUe),
            "phase_noise_kappa" => Ok(SweepVariable::PhaseNoiseKappa),
            other => Err(Error::Config(format!(
                "unknown sweep variable `{other}` (expected N, M, P_max_dB, kappa_bs, kappa_ue or phase_noise_kappa)"
            ))),
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Factor n into n_h × n_v with n_v the largest divisor not above √n.
pub fn grid_for(n: usize) -> (usize, usize) {
    let mut n_v = (n as f64).sqrt().floor() as usize;
    while n_v > 1 && n % n_v != 0 {
        n_v -= 1;
    }
    let n_v = n_v.max(1);
    (n / n_v, n_v)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Error::Config(m);
        if self.array.antennas < 2 {
            return Err(cfg_err("array.antennas must be at least 2".into()));
        }
        let p = self.angles();
        if p == 0 || p > self.array.antennas {
            return Err(cfg_err(format!("array.angles must be in 1..={}", self.array.antennas)));
        }
        positive("array.spacing", self.array.spacing)?;
        if self.surface.n_h == 0 || self.surface.n_v == 0 {
            return Err(cfg_err("surface.n_h and surface.n_v must be at least 1".into()));
        }
        positive("surface.element_size", self.surface.element_size)?;
        if self.k() == 0 {
            return Err(cfg_err("geometry.k_t + geometry.k_r must be at least 1".into()));
        }
        positive("geometry.d0", self.geometry.d0)?;
        positive("propagation.carrier_hz", self.propagation.carrier_hz)?;
        positive("propagation.alpha_t", self.propagation.alpha_t)?;
        positive("propagation.alpha_r", self.propagation.alpha_r)?;
        positive("propagation.alpha_bs_ris", self.propagation.alpha_bs_ris)?;
        positive("propagation.bandwidth_hz", self.propagation.bandwidth_hz)?;
        if !self.power.p_max_dbm.is_finite() {
            return Err(cfg_err("power.p_max_dbm must be finite".into()));
        }
        for (name, v) in [("power.weights", &self.power.weights), ("power.priorities", &self.power.priorities)] {
            if let Some(v) = v {
                if v.len() != self.k() {
                    return Err(cfg_err(format!("{name} must have {} entries", self.k())));
                }
                for x in v {
                    positive(name, *x)?;
                }
            }
        }
        for (name, v) in [
            ("impairments.kappa_bs", self.impairments.kappa_bs),
            ("impairments.kappa_ue", self.impairments.kappa_ue),
            ("impairments.phase_noise_kappa", self.impairments.phase_noise_kappa),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(cfg_err(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        positive("optimizer.de_tol", self.optimizer.de_tol)?;
        self.pgam.validate().map_err(|e| cfg_err(format!("pgam: {e}")))?;
        if self.run.realizations == 0 {
            return Err(cfg_err("run.realizations must be at least 1".into()));
        }
        if self.run.validate_sizes.iter().any(|&s| s < 2) {
            return Err(cfg_err("run.validate_sizes entries must be at least 2".into()));
        }
        positive("run.gap_bound", self.run.gap_bound)?;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.array.antennas
    }

    pub fn n(&self) -> usize {
        self.surface.n_h * self.surface.n_v
    }

    pub fn k(&self) -> usize {
        self.geometry.k_t + self.geometry.k_r
    }

    pub fn angles(&self) -> usize {
        self.array.angles.unwrap_or((self.array.antennas / 2).max(1))
    }

    pub fn wavelength(&self) -> f64 {
        units::wavelength(self.propagation.carrier_hz)
    }

    pub fn element_area(&self) -> f64 {
        let d = self.surface.element_size * self.wavelength();
        d * d
    }

    pub fn noise_power_w(&self) -> f64 {
        units::dbm_to_watts(units::noise_power_dbm(self.propagation.bandwidth_hz))
    }

    pub fn p_max_w(&self) -> f64 {
        units::dbm_to_watts(self.power.p_max_dbm)
    }

    pub fn hwi(&self) -> Result<HwiParams> {
        HwiParams::new(self.impairments.kappa_bs, self.impairments.kappa_ue)
    }

    pub fn phase_noise(&self) -> PhaseNoiseModel {
        match self.impairments.phase_noise {
            PhaseNoiseKind::None => PhaseNoiseModel::None,
            PhaseNoiseKind::Uniform => PhaseNoiseModel::Uniform,
            PhaseNoiseKind::VonMises => PhaseNoiseModel::VonMises {
                concentration: self.impairments.phase_noise_kappa,
            },
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.power.weights.clone().unwrap_or_else(|| vec![1.0; self.k()])
    }

    pub fn priorities(&self) -> Result<PriorityVector> {
        match &self.power.priorities {
            Some(a) => PriorityVector::new(a.clone()),
            None => Ok(PriorityVector::ones(self.k())),
        }
    }

    pub fn power_constraint(&self) -> Result<PowerConstraint> {
        PowerConstraint::new(self.weights(), self.p_max_w())
    }

    pub fn de_options(&self) -> DeOptions {
        DeOptions { tol: self.optimizer.de_tol, max_iter: self.optimizer.de_max_iter }
    }

    pub fn geometry(&self) -> SystemGeometry {
        let g = &self.geometry;
        SystemGeometry::linear_layout(g.bs, g.ris, g.d0, g.k_t, g.k_r)
    }

    pub fn statistics(&self) -> Result<ChannelStatistics> {
        self.validate()?;
        let geo = self.geometry();
        let area = self.element_area();
        let d = self.surface.element_size * self.wavelength();
        let r_bs = build_bs_correlation(self.m(), self.angles(), self.array.spacing)?;
        let r_ris = build_ris_correlation(self.surface.n_h, self.surface.n_v, d, d, self.wavelength())?;
        let beta_bs_ris = path_loss(geo.bs_ris_distance(), self.propagation.alpha_bs_ris, area)?;
        let mut beta_ue = Vec::with_capacity(self.k());
        let mut sides = Vec::with_capacity(self.k());
        for (k, (_, side)) in geo.users.iter().enumerate() {
            let alpha = match side {
                crate::ris::Side::Transmission => self.propagation.alpha_t,
                crate::ris::Side::Reflection => self.propagation.alpha_r,
            };
            beta_ue.push(path_loss(geo.ris_user_distance(k), alpha, area)?);
            sides.push(*side);
        }
        ChannelStatistics::new(r_bs, r_ris, self.phase_noise(), beta_bs_ris, beta_ue, sides, self.noise_power_w())
    }

    /// Objective context with equal powers P_max/K for the equivalent.
    pub fn objective_context<'a>(&self, stats: &'a ChannelStatistics) -> Result<ObjectiveContext<'a>> {
        let k = self.k();
        let p_max = self.p_max_w();
        ObjectiveContext::new(
            stats,
            &self.hwi()?,
            vec![p_max / k as f64; k],
            p_max,
            self.weights(),
            self.optimizer.de_form,
            self.de_options(),
        )
    }

    /// Copy of this configuration with one swept quantity replaced.
    pub fn with_variable(&self, var: SweepVariable, value: f64) -> Result<SystemConfig> {
        let mut cfg = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{var} must be a positive integer, got {value}")))
            }
        };
        match var {
            SweepVariable::N => {
                let (h, v) = grid_for(count(value)?);
                cfg.surface.n_h = h;
                cfg.surface.n_v = v;
            }
            SweepVariable::M => cfg.array.antennas = count(value)?,
            SweepVariable::PmaxDb => cfg.power.p_max_dbm = value,
            SweepVariable::KappaBs => cfg.impairments.kappa_bs = value,
            SweepVariable::KappaUe => cfg.impairments.kappa_ue = value,
            SweepVariable::PhaseNoiseKappa => {
                cfg.impairments.phase_noise = PhaseNoiseKind::VonMises;
                cfg.impairments.phase_noise_kappa = value;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = SystemConfig::default();
        cfg.validate().unwrap();
        let back = SystemConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.angles(), 32);
        assert_eq!(cfg.n(), 64);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = SystemConfig::from_toml_str("[array]\nantennas = 16\n\n[geometry]\nk_t = 1\n").unwrap();
        assert_eq!(cfg.m(), 16);
        assert_eq!(cfg.angles(), 8);
        assert_eq!(cfg.k(), 3);
        assert_eq!(cfg.surface, SurfaceConfig::default());
    }

    #[test]
    fn unknown_field_is_reported() {
        let err = SystemConfig::from_toml_str("[array]\nantenas = 16\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("antenas"), "{msg}");
    }

    #[test]
    fn invalid_values_are_reported() {
        assert!(SystemConfig::from_toml_str("[geometry]\nk_t = 0\nk_r = 0\n").is_err());
        assert!(SystemConfig::from_toml_str("[power]\nweights = [1.0, 2.0]\n").is_err());
        assert!(SystemConfig::from_toml_str("[impairments]\nkappa_bs = -0.1\n").is_err());
        assert!(SystemConfig::from_toml_str("[pgam]\nkappa_step = 1.5\n").is_err());
    }

    #[test]
    fn noise_floor_for_200khz() {
        let cfg = SystemConfig::default();
        let dbm = units::watts_to_dbm(cfg.noise_power_w());
        assert!((dbm - (-174.0 + 10.0 * 200e3f64.log10())).abs() < 1e-9);
    }

    #[test]
    fn grid_factorization() {
        assert_eq!(grid_for(64), (8, 8));
        assert_eq!(grid_for(32), (8, 4));
        assert_eq!(grid_for(16), (4, 4));
        assert_eq!(grid_for(7), (7, 1));
    }

    #[test]
    fn sweep_variable_substitution() {
        let cfg = SystemConfig::default();
        let c = cfg.with_variable(SweepVariable::N, 32.0).unwrap();
        assert_eq!(c.n(), 32);
        let c = cfg.with_variable(SweepVariable::M, 16.0).unwrap();
        assert_eq!((c.m(), c.angles()), (16, 8));
        assert!(cfg.with_variable(SweepVariable::M, 16.5).is_err());
        assert_eq!("kappa_bs".parse::<SweepVariable>().unwrap(), SweepVariable::KappaBs);
        assert!("nope".parse::<SweepVariable>().is_err());
    }

    #[test]
    fn statistics_follow_geometry() {
        let cfg = SystemConfig::default();
        let st = cfg.statistics().unwrap();
        assert_eq!((st.m(), st.n(), st.k()), (64, 64, 4));
        // transmission users are further away and have the larger exponent
        let t: Vec<usize> = st.users_on(crate::ris::Side::Transmission).collect();
        let r: Vec<usize> = st.users_on(crate::ris::Side::Reflection).collect();
        assert!(st.rho(t[0]) < st.rho(r[0]));
    }
}
