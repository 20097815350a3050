//! Passive beamforming matrices of a STAR-RIS and their feasible sets.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{from_phase, CMat, CVec, ONE};

/// Which half-space a user is in relative to the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[serde(alias = "t")]
    Transmission,
    #[serde(alias = "r")]
    Reflection,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Transmission, Side::Reflection];

    pub fn tag(self) -> char {
        match self {
            Side::Transmission => 't',
            Side::Reflection => 'r',
        }
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" | "transmission" => Ok(Side::Transmission),
            "r" | "reflection" => Ok(Side::Reflection),
            other => Err(param(format!("unknown side `{other}`"))),
        }
    }
}

/// Operating protocol of the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Energy splitting: every element serves both sides.
    Es,
    /// Mode switching: every element is fully transmitting or fully reflecting.
    Ms,
}

const UNIT_TOL: f64 = 1e-9;

/// Phase shifts and amplitudes for both sides. Index n refers to element n
/// in row-major order over the surface grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Pbm {
    pub theta_t: Vec<Complex64>,
    pub theta_r: Vec<Complex64>,
    pub beta_t: Vec<f64>,
    pub beta_r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Length,
    PhaseModulus { side: Side, index: usize, modulus: f64 },
    Amplitude { side: Side, index: usize, value: f64 },
    Energy { index: usize, sum: f64 },
    NotBinary { index: usize },
}

impl Pbm {
    /// All phases 0, amplitudes 1/√2 on both sides.
    pub fn uniform_split(n: usize) -> Self {
        Pbm {
            theta_t: vec![ONE; n],
            theta_r: vec![ONE; n],
            beta_t: vec![FRAC_1_SQRT_2; n],
            beta_r: vec![FRAC_1_SQRT_2; n],
        }
    }

    /// Every element fully dedicated to `side`.
    pub fn single_side(n: usize, side: Side) -> Self {
        let (bt, br) = match side {
            Side::Transmission => (1.0, 0.0),
            Side::Reflection => (0.0, 1.0),
        };
        Pbm {
            theta_t: vec![ONE; n],
            theta_r: vec![ONE; n],
            beta_t: vec![bt; n],
            beta_r: vec![br; n],
        }
    }

    /// Uniform phases on both sides and amplitudes (cos ψ, sin ψ), ψ ~ U[0, π/2].
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let theta_t = (0..n).map(|_| from_phase(rng.random_range(0.0..2.0 * PI))).collect();
        let theta_r = (0..n).map(|_| from_phase(rng.random_range(0.0..2.0 * PI))).collect();
        let psi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=FRAC_PI_2)).collect();
        Pbm {
            theta_t,
            theta_r,
            beta_t: psi.iter().map(|p| p.cos()).collect(),
            beta_r: psi.iter().map(|p| p.sin()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.theta_t.len()
    }

    pub fn theta(&self, side: Side) -> &[Complex64] {
        match side {
            Side::Transmission => &self.theta_t,
            Side::Reflection => &self.theta_r,
        }
    }

    pub fn beta(&self, side: Side) -> &[f64] {
        match side {
            Side::Transmission => &self.beta_t,
            Side::Reflection => &self.beta_r,
        }
    }

    /// Diagonal entries β_n θ_n of the beamforming matrix for `side`.
    pub fn coefficients(&self, side: Side) -> CVec {
        let th = self.theta(side);
        let b = self.beta(side);
        CVec::from_iterator(self.n(), th.iter().zip(b).map(|(t, &b)| t * b))
    }

    /// Moves negative amplitudes' signs into the phases; β_n θ_n is unchanged.
    pub fn absorb_signs(&mut self) {
        for (b, t) in self
            .beta_t
            .iter_mut()
            .zip(self.theta_t.iter_mut())
            .chain(self.beta_r.iter_mut().zip(self.theta_r.iter_mut()))
        {
            if *b < 0.0 {
                *b = -*b;
                *t = -*t;
            }
        }
    }

    /// Stacked phases [θ_t; θ_r] (length 2N).
    pub fn stacked_theta(&self) -> Vec<Complex64> {
        [self.theta_t.as_slice(), self.theta_r.as_slice()].concat()
    }

    /// Stacked amplitudes [β_t; β_r] (length 2N).
    pub fn stacked_beta(&self) -> Vec<f64> {
        [self.beta_t.as_slice(), self.beta_r.as_slice()].concat()
    }

    pub fn from_stacked(theta: &[Complex64], beta: &[f64]) -> Result<Self> {
        if theta.len() != beta.len() || theta.len() % 2 != 0 {
            return Err(param("stacked phase/amplitude vectors must have equal even length"));
        }
        let n = theta.len() / 2;
        Ok(Pbm {
            theta_t: theta[..n].to_vec(),
            theta_r: theta[n..].to_vec(),
            beta_t: beta[..n].to_vec(),
            beta_r: beta[n..].to_vec(),
        })
    }

    /// Plain-text record, one line per (side, element):
    /// `side,index,beta,theta_re,theta_im`.
    pub fn to_record(&self) -> String {
        let mut out = String::from("side,index,beta,theta_re,theta_im\n");
        for side in Side::BOTH {
            for (i, (t, b)) in self.theta(side).iter().zip(self.beta(side)).enumerate() {
                out.push_str(&format!("{},{},{:e},{:e},{:e}\n", side.tag(), i, b, t.re, t.im));
            }
        }
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut rows: Vec<(Side, usize, f64, Complex64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("side,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(param(format!("line {}: expected 5 fields", lineno + 1)));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| param(format!("line {}: {e}", lineno + 1)))
            };
            let side: Side = fields[0].parse()?;
            let index: usize = fields[1]
                .parse()
                .map_err(|e| param(format!("line {}: {e}", lineno + 1)))?;
            rows.push((side, index, num(fields[2])?, Complex64::new(num(fields[3])?, num(fields[4])?)));
        }
        let n = rows.len() / 2;
        if rows.len() != 2 * n || n == 0 {
            return Err(param("record must list every element on both sides"));
        }
        let mut pbm = Pbm::uniform_split(n);
        let mut seen = vec![[false; 2]; n];
        for (side, i, b, t) in rows {
            if i >= n {
                return Err(param(format!("element index {i} out of range")));
            }
            let slot = side as usize;
            if seen[i][slot] {
                return Err(param(format!("element {i} listed twice for side {}", side.tag())));
            }
            seen[i][slot] = true;
            match side {
                Side::Transmission => {
                    pbm.theta_t[i] = t;
                    pbm.beta_t[i] = b;
                }
                Side::Reflection => {
                    pbm.theta_r[i] = t;
                    pbm.beta_r[i] = b;
                }
            }
        }
        Ok(pbm)
    }
}

/// Diagonal N×N matrix diag(β_{n}θ_{n}) for one side.
pub fn pbm_matrix(pbm: &Pbm, side: Side) -> CMat {
    CMat::from_diagonal(&pbm.coefficients(side))
}

/// Element-wise projection onto the unit circle. Zero entries map to 1.
pub fn project_theta(theta: &[Complex64]) -> Vec<Complex64> {
    theta
        .iter()
        .map(|z| {
            let r = z.norm();
            if r > 0.0 && r.is_finite() {
                z / r
            } else {
                ONE
            }
        })
        .collect()
}

/// Pairwise projection of stacked amplitudes [β_t; β_r] onto the unit energy
/// circle β_t² + β_r² = 1. A zero pair maps to (1/√2, 1/√2).
pub fn project_beta(beta: &[f64]) -> Vec<f64> {
    let n = beta.len() / 2;
    let mut out = beta.to_vec();
    for i in 0..n {
        let (a, b) = (beta[i], beta[i + n]);
        let r = a.hypot(b);
        if r > 0.0 && r.is_finite() {
            out[i] = a / r;
            out[i + n] = b / r;
        } else {
            out[i] = FRAC_1_SQRT_2;
            out[i + n] = FRAC_1_SQRT_2;
        }
    }
    out
}

/// Round energy-splitting amplitudes to mode switching; phases are kept.
pub fn ms_round(pbm: &Pbm) -> Pbm {
    let mut out = pbm.clone();
    for i in 0..pbm.n() {
        let transmit = pbm.beta_t[i] * pbm.beta_t[i] >= pbm.beta_r[i] * pbm.beta_r[i];
        out.beta_t[i] = if transmit { 1.0 } else { 0.0 };
        out.beta_r[i] = if transmit { 0.0 } else { 1.0 };
    }
    out
}

pub fn validate(pbm: &Pbm, protocol: Protocol) -> Vec<Violation> {
    let n = pbm.n();
    if [pbm.theta_r.len(), pbm.beta_t.len(), pbm.beta_r.len()]
        .iter()
        .any(|&l| l != n)
    {
        return vec![Violation::Length];
    }
    let mut out = Vec::new();
    for side in Side::BOTH {
        for (index, z) in pbm.theta(side).iter().enumerate() {
            let modulus = z.norm();
            if (modulus - 1.0).abs() > UNIT_TOL {
                out.push(Violation::PhaseModulus { side, index, modulus });
            }
        }
        for (index, &value) in pbm.beta(side).iter().enumerate() {
            if !(-UNIT_TOL..=1.0 + UNIT_TOL).contains(&value) {
                out.push(Violation::Amplitude { side, index, value });
            }
        }
    }
    for index in 0..n {
        let (bt, br) = (pbm.beta_t[index], pbm.beta_r[index]);
        let sum = bt * bt + br * br;
        if (sum - 1.0).abs() > UNIT_TOL {
            out.push(Violation::Energy { index, sum });
        }
        if protocol == Protocol::Ms {
            let binary = |b: f64| b.abs() <= UNIT_TOL || (b - 1.0).abs() <= UNIT_TOL;
            if !(binary(bt) && binary(br)) {
                out.push(Violation::NotBinary { index });
            }
        }
    }
    out
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Length => write!(f, "per-side vectors have different lengths"),
            Violation::PhaseModulus { side, index, modulus } => {
                write!(f, "|theta_{}[{index}]| = {modulus}", side.tag())
            }
            Violation::Amplitude { side, index, value } => {
                write!(f, "beta_{}[{index}] = {value} outside [0,1]", side.tag())
            }
            Violation::Energy { index, sum } => {
                write!(f, "element {index}: beta_t^2 + beta_r^2 = {sum}")
            }
            Violation::NotBinary { index } => write!(f, "element {index}: amplitudes not binary"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arb_complex() -> impl Strategy<Value = Complex64> {
        (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b)| Complex64::new(a, b))
    }

    proptest! {
        #[test]
        fn theta_projection_is_unit_and_idempotent(v in prop::collection::vec(arb_complex(), 1..20)) {
            let p = project_theta(&v);
            for z in &p {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
            let pp = project_theta(&p);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn theta_projection_keeps_argument(z in arb_complex()) {
            prop_assume!(z.norm() > 1e-6);
            let p = project_theta(&[z])[0];
            prop_assert!((p.arg() - z.arg()).abs() < 1e-12);
        }

        #[test]
        fn beta_projection_pairs_on_circle(v in prop::collection::vec(-3.0f64..3.0, 1..12)) {
            let stacked = [v.clone(), v.iter().rev().copied().collect()].concat();
            let p = project_beta(&stacked);
            let n = v.len();
            for i in 0..n {
                prop_assert!((p[i].powi(2) + p[i + n].powi(2) - 1.0).abs() < 1e-12);
            }
            let pp = project_beta(&p);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn random_init_is_feasible(seed in any::<u64>(), n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pbm = Pbm::random(n, &mut rng);
            prop_assert!(validate(&pbm, Protocol::Es).is_empty());
            prop_assert!(validate(&ms_round(&pbm), Protocol::Ms).is_empty());
        }

        #[test]
        fn record_round_trip(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pbm = Pbm::random(n, &mut rng);
            let back = Pbm::from_record(&pbm.to_record()).unwrap();
            prop_assert_eq!(back, pbm);
        }
    }

    #[test]
    fn sign_absorption_keeps_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pbm = Pbm::random(6, &mut rng);
        pbm.beta_t[1] = -pbm.beta_t[1];
        pbm.beta_r[4] = -pbm.beta_r[4];
        let before = [pbm.coefficients(Side::Transmission), pbm.coefficients(Side::Reflection)];
        pbm.absorb_signs();
        assert!(validate(&pbm, Protocol::Es).is_empty());
        assert_eq!(before[0], pbm.coefficients(Side::Transmission));
        assert_eq!(before[1], pbm.coefficients(Side::Reflection));
    }

    #[test]
    fn zero_inputs_map_to_defaults() {
        assert_eq!(project_theta(&[Complex64::new(0.0, 0.0)])[0], ONE);
        let p = project_beta(&[0.0, 0.0]);
        assert_eq!(p, vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    }

    #[test]
    fn ms_round_picks_larger_amplitude() {
        let mut pbm = Pbm::uniform_split(3);
        pbm.beta_t = vec![0.9, 0.1, FRAC_1_SQRT_2];
        pbm.beta_r = vec![(1.0f64 - 0.81).sqrt(), (1.0f64 - 0.01).sqrt(), FRAC_1_SQRT_2];
        let ms = ms_round(&pbm);
        assert_eq!(ms.beta_t, vec![1.0, 0.0, 1.0]);
        assert_eq!(ms.beta_r, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn validate_reports_violations() {
        let mut pbm = Pbm::uniform_split(2);
        pbm.theta_r[1] = Complex64::new(2.0, 0.0);
        pbm.beta_t[0] = 0.1;
        let v = validate(&pbm, Protocol::Ms);
        assert!(v.iter().any(|x| matches!(x, Violation::PhaseModulus { index: 1, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::Energy { index: 0, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NotBinary { .. })));
        assert!(validate(&Pbm::uniform_split(2), Protocol::Es).is_empty());
    }

    #[test]
    fn matrix_is_diagonal_product() {
        let mut pbm = Pbm::uniform_split(2);
        pbm.theta_t[1] = Complex64::new(0.0, 1.0);
        let m = pbm_matrix(&pbm, Side::Transmission);
        assert!((m[(1, 1)] - Complex64::new(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert_eq!(m[(0, 1)], Complex64::new(0.0, 0.0));
    }
}
