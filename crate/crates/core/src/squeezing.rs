//! Squeezed-vacuum source model: below-threshold OPO quadrature variances,
//! the detection efficiency chain, and the signal-port PSD they imply.
//!
//! The variance formula is the standard below-threshold OPO model; it is an
//! external assumption of the toolkit rather than something measured here,
//! so downstream comparisons treat it with a couple of dB of slack.

use crate::error::{Error, Result};
use crate::noise::NoisePsd;

/// Operating point of the optical parametric oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpoParams {
    /// Pump power over threshold power, in [0, 1).
    pub pump_ratio: f64,
    /// Cavity linewidth (FWHM). `None` treats the cavity as infinitely
    /// broad, making audio-band predictions frequency-flat.
    pub cavity_linewidth_hz: Option<f64>,
    /// RMS homodyne phase jitter mixing the two quadratures.
    pub phase_noise_rms_rad: f64,
}

impl OpoParams {
    pub fn new(
        pump_ratio: f64,
        cavity_linewidth_hz: Option<f64>,
        phase_noise_rms_rad: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&pump_ratio) {
            return Err(Error::Domain(format!(
                "pump_ratio must be in [0, 1) (below threshold), got {pump_ratio}"
            )));
        }
        if let Some(lw) = cavity_linewidth_hz {
            if !(lw > 0.0) {
                return Err(Error::Domain(format!(
                    "cavity linewidth must be positive, got {lw}"
                )));
            }
        }
        if !(phase_noise_rms_rad >= 0.0) {
            return Err(Error::Domain(format!(
                "phase noise rms must be >= 0, got {phase_noise_rms_rad}"
            )));
        }
        Ok(OpoParams {
            pump_ratio,
            cavity_linewidth_hz,
            phase_noise_rms_rad,
        })
    }
}

/// Losses between the OPO output coupler and the recorded photocurrent.
/// Visibility enters squared (mode-matching efficiency).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyChain {
    pub escape: f64,
    pub propagation: f64,
    pub visibility: f64,
    pub quantum_efficiency: f64,
}

impl EfficiencyChain {
    pub fn new(
        escape: f64,
        propagation: f64,
        visibility: f64,
        quantum_efficiency: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("escape", escape),
            ("propagation", propagation),
            ("visibility", visibility),
            ("quantum_efficiency", quantum_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain(format!(
                    "efficiency `{name}` must be in (0, 1], got {v}"
                )));
            }
        }
        Ok(EfficiencyChain {
            escape,
            propagation,
            visibility,
            quantum_efficiency,
        })
    }
}

/// Total detection efficiency of the chain.
pub fn total_efficiency(chain: &EfficiencyChain) -> f64 {
    chain.escape * chain.propagation * chain.visibility.powi(2) * chain.quantum_efficiency
}

/// Squeezed and anti-squeezed quadrature variances at Fourier frequency
/// `f_hz`, shot-relative linear units.
///
/// With `x = sqrt(pump_ratio)` and `Ω = f / (linewidth/2)`:
/// `V∓ = 1 ∓ η 4x / ((1 ± x)² + Ω²)`, then phase jitter θ mixes the pair:
/// `V_meas = V cos²θ + V_opposite sin²θ`.
pub fn opo_variances(opo: &OpoParams, eta_tot: f64, f_hz: f64) -> (f64, f64) {
    let x = opo.pump_ratio.sqrt();
    let omega = match opo.cavity_linewidth_hz {
        Some(lw) => f_hz / (lw / 2.0),
        None => 0.0,
    };
    let raw_sq = 1.0 - eta_tot * 4.0 * x / ((1.0 + x).powi(2) + omega * omega);
    let raw_anti = 1.0 + eta_tot * 4.0 * x / ((1.0 - x).powi(2) + omega * omega);
    let theta = opo.phase_noise_rms_rad;
    let (c2, s2) = (theta.cos().powi(2), theta.sin().powi(2));
    (
        raw_sq * c2 + raw_anti * s2,
        raw_anti * c2 + raw_sq * s2,
    )
}

/// Shot-relative PSD of the homodyne signal port at a quadrature angle
/// measured from the squeezed quadrature (0 = squeezing, π/2 =
/// anti-squeezing). Flat below the cavity linewidth, relaxing to vacuum
/// above it.
pub fn squeezed_signal_psd(
    opo: &OpoParams,
    chain: &EfficiencyChain,
    quadrature_angle_rad: f64,
) -> Result<NoisePsd> {
    if !(0.0..std::f64::consts::PI).contains(&quadrature_angle_rad) {
        return Err(Error::Domain(format!(
            "quadrature angle must be in [0, pi), got {quadrature_angle_rad}"
        )));
    }
    let eta = total_efficiency(chain);
    let x = opo.pump_ratio.sqrt();
    // weight on the squeezed-quadrature Lorentzian after composing the
    // detection angle with the phase-jitter average
    let theta = opo.phase_noise_rms_rad;
    let (ct, st) = (theta.cos().powi(2), theta.sin().powi(2));
    let (ca, sa) = (
        quadrature_angle_rad.cos().powi(2),
        quadrature_angle_rad.sin().powi(2),
    );
    let w_sq = ca * ct + sa * st;
    let w_anti = 1.0 - w_sq;

    let amp_sq = eta * 4.0 * x / (1.0 + x).powi(2);
    let amp_anti = eta * 4.0 * x / (1.0 - x).powi(2);

    Ok(match opo.cavity_linewidth_hz {
        None => {
            let v = 1.0 - w_sq * amp_sq + w_anti * amp_anti;
            NoisePsd::white(v)
        }
        Some(lw) => {
            let half = lw / 2.0;
            NoisePsd::Composite(vec![
                NoisePsd::white(1.0),
                NoisePsd::Lorentzian {
                    amplitude: -w_sq * amp_sq,
                    corner_hz: half * (1.0 + x),
                },
                NoisePsd::Lorentzian {
                    amplitude: w_anti * amp_anti,
                    corner_hz: half * (1.0 - x),
                },
            ])
        }
    })
}
