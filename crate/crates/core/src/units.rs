//! Unit conversions. Every dB/dBm/watt conversion in the crate goes through here.

/// Thermal noise floor at room temperature, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// Noise power in dBm over `bandwidth_hz`: -174 + 10 log10(B).
pub fn noise_power_dbm(bandwidth_hz: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + linear_to_db(bandwidth_hz)
}

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Spectral efficiency in bit/s/Hz for a given SINR.
pub fn rate_bits(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_points() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((noise_power_dbm(200e3) - (-174.0 + 53.010_299_956_639_81)).abs() < 1e-12);
        assert_eq!(rate_bits(1.0), 1.0);
        assert_eq!(rate_bits(3.0), 2.0);
    }

    proptest! {
        #[test]
        fn dbm_round_trip(x in -200.0f64..100.0) {
            prop_assert!((watts_to_dbm(dbm_to_watts(x)) - x).abs() < 1e-12);
        }

        #[test]
        fn db_round_trip(x in -150.0f64..150.0) {
            prop_assert!((linear_to_db(db_to_linear(x)) - x).abs() < 1e-12);
        }
    }
}
