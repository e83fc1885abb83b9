//! Physical constants shared across modules. Everything runs at 1064 nm.

/// Planck constant, J s (2019 SI exact value).
pub const PLANCK_J_S: f64 = 6.62607015e-34;

/// Speed of light, m/s (exact).
pub const SPEED_OF_LIGHT_M_S: f64 = 2.99792458e8;

/// Elementary charge, C (2019 SI exact value).
pub const ELEMENTARY_CHARGE_C: f64 = 1.602176634e-19;

/// Nd:YAG wavelength, m.
pub const WAVELENGTH_M: f64 = 1.064e-6;

/// Energy of one 1064 nm photon, J.
pub fn photon_energy_j() -> f64 {
    PLANCK_J_S * SPEED_OF_LIGHT_M_S / WAVELENGTH_M
}

/// Unity-quantum-efficiency responsivity at 1064 nm, A/W.
pub fn max_responsivity_a_w() -> f64 {
    ELEMENTARY_CHARGE_C / photon_energy_j()
}

/// Phase picked up per metre of surface displacement by retro-reflected
/// scatter (double pass), rad/m.
pub fn retro_phase_rad_per_m() -> f64 {
    4.0 * std::f64::consts::PI / WAVELENGTH_M
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn photon_energy_matches_hand_value() {
        assert!((photon_energy_j() - 1.8674e-19).abs() < 1e-22);
    }

    #[test]
    fn max_responsivity_near_0_86() {
        let r = max_responsivity_a_w();
        assert!(r > 0.85 && r < 0.87, "got {r}");
    }
}
