//! Detector electronics: the two subtraction topologies, transimpedance
//! conversion to volts, resistor flicker noise, and dark noise.
//!
//! Flicker noise scales with the square of the DC current through the gain
//! resistor, which is what makes the current-subtracting design quiet: its
//! single resistor only ever carries the residual of the subtraction.

use crate::consts::{max_responsivity_a_w, ELEMENTARY_CHARGE_C};
use crate::error::{Error, Result};
use crate::fields::Topology;
use crate::noise::{substream_seed, synthesize_colored_noise, NoisePsd, TimeSeries};

/// Gain-resistor technology, ordered by flicker level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResistorType {
    Carbon,
    /// MELF / metal-film, low flicker.
    MetalFilm,
}

/// Flicker level relative to the squared DC voltage across the resistor:
/// `S_v(f) = k · V_dc² / f`.
///
/// The carbon value is anchored so the 1/f term crosses the shot floor near
/// 100 Hz on a balanced variable-gain detector at 1.3 mW LO; metal film
/// sits 30 dB lower, which keeps its flicker at least 10 dB below shot at
/// 1 Hz for the same LO.
pub fn flicker_coefficient(resistor: ResistorType) -> f64 {
    const CARBON: f64 = 6.32e-14;
    match resistor {
        ResistorType::Carbon => CARBON,
        ResistorType::MetalFilm => CARBON * 1e-3,
    }
}

/// A balanced photodetector's electronics.
#[derive(Debug, Clone)]
pub struct DetectorDesign {
    pub topology: Topology,
    /// Transimpedance gains, V/A. Equal for the current-subtracting design.
    pub g1: f64,
    pub g2: f64,
    pub resistor_type: ResistorType,
    /// Output-referred dark noise, V²/Hz.
    pub dark: NoisePsd,
    /// Photodiode responsivity, A/W.
    pub responsivity_a_w: f64,
}

impl DetectorDesign {
    pub fn variable_gain(
        g1: f64,
        g2: f64,
        resistor_type: ResistorType,
        responsivity_a_w: f64,
        dark: Option<NoisePsd>,
    ) -> Result<Self> {
        Self::build(Topology::VariableGain, g1, g2, resistor_type, responsivity_a_w, dark)
    }

    pub fn current_subtracting(
        g: f64,
        resistor_type: ResistorType,
        responsivity_a_w: f64,
        dark: Option<NoisePsd>,
    ) -> Result<Self> {
        Self::build(Topology::CurrentSubtracting, g, g, resistor_type, responsivity_a_w, dark)
    }

    fn build(
        topology: Topology,
        g1: f64,
        g2: f64,
        resistor_type: ResistorType,
        responsivity_a_w: f64,
        dark: Option<NoisePsd>,
    ) -> Result<Self> {
        if !(g1 > 0.0 && g2 > 0.0) {
            return Err(Error::Domain(format!(
                "gains must be positive, got {g1}, {g2}"
            )));
        }
        let r_max = max_responsivity_a_w();
        if !(responsivity_a_w > 0.0 && responsivity_a_w <= r_max) {
            return Err(Error::Domain(format!(
                "responsivity must be in (0, {r_max:.4}] A/W at 1064 nm, got {responsivity_a_w}"
            )));
        }
        let dark = dark.unwrap_or_else(|| default_dark(g1, responsivity_a_w));
        Ok(DetectorDesign {
            topology,
            g1,
            g2,
            resistor_type,
            dark,
            responsivity_a_w,
        })
    }

    /// Differential shot-noise floor at the output for a given LO power,
    /// assuming a balanced split, V²/Hz.
    pub fn shot_floor_v2_hz(&self, lo_power_w: f64) -> f64 {
        let i_total = self.responsivity_a_w * lo_power_w;
        2.0 * ELEMENTARY_CHARGE_C * i_total * self.g1 * self.g2
    }

    /// Output-referred flicker PSD for the given per-diode DC currents.
    pub fn flicker_psd(&self, i_dc1_a: f64, i_dc2_a: f64) -> NoisePsd {
        let k = flicker_coefficient(self.resistor_type);
        let level = match self.topology {
            // one 1/f source per gain stage, each scaled by its stage's DC
            Topology::VariableGain => {
                k * ((self.g1 * i_dc1_a).powi(2) + (self.g2 * i_dc2_a).powi(2))
            }
            // the single resistor carries only the residual current
            Topology::CurrentSubtracting => {
                k * (self.g1 * (i_dc1_a - i_dc2_a)).powi(2)
            }
        };
        NoisePsd::one_over_f(level, 1.0)
    }
}

/// Default dark noise: white floor with a 1/f corner at 30 Hz, floor set
/// 20 dB below the shot level at 1 mW LO.
pub fn default_dark(gain: f64, responsivity_a_w: f64) -> NoisePsd {
    let shot_1mw = 2.0 * ELEMENTARY_CHARGE_C * responsivity_a_w * 1e-3 * gain * gain;
    let floor = 0.01 * shot_1mw;
    NoisePsd::Composite(vec![
        NoisePsd::white(floor),
        NoisePsd::one_over_f(floor, 30.0),
    ])
}

/// Output of the detector: the subtracted voltage record and the per-diode
/// DC monitor voltages.
#[derive(Debug, Clone)]
pub struct DetectorOutput {
    pub differential: TimeSeries,
    pub dc1_v: f64,
    pub dc2_v: f64,
}

/// Convert per-diode photocurrent records to the subtracted output voltage,
/// injecting flicker per topology and dark noise after the subtraction.
pub fn detector_output(
    design: &DetectorDesign,
    i1: &TimeSeries,
    i2: &TimeSeries,
    seed: u64,
) -> Result<DetectorOutput> {
    if i1.len() != i2.len() || i1.sample_rate_hz() != i2.sample_rate_hz() {
        return Err(Error::InvalidInput(format!(
            "photocurrent records disagree: {} samples at {} Hz vs {} samples at {} Hz",
            i1.len(),
            i1.sample_rate_hz(),
            i2.len(),
            i2.sample_rate_hz()
        )));
    }
    let fs = i1.sample_rate_hz();
    let duration = i1.len() as f64 / fs;
    let (idc1, idc2) = (i1.mean(), i2.mean());

    let mut v: Vec<f64> = i1
        .samples()
        .iter()
        .zip(i2.samples())
        .map(|(&a, &b)| design.g1 * a - design.g2 * b)
        .collect();

    // flicker per topology
    match design.topology {
        Topology::VariableGain => {
            let k = flicker_coefficient(design.resistor_type);
            for (stage, vdc) in [(1u64, design.g1 * idc1), (2u64, design.g2 * idc2)] {
                let psd = NoisePsd::one_over_f(k * vdc * vdc, 1.0);
                let fl = synthesize_colored_noise(&psd, duration, fs, substream_seed(seed, stage))?;
                for (o, s) in v.iter_mut().zip(fl.samples()) {
                    *o += s;
                }
            }
        }
        Topology::CurrentSubtracting => {
            let psd = design.flicker_psd(idc1, idc2);
            let fl = synthesize_colored_noise(&psd, duration, fs, substream_seed(seed, 1))?;
            for (o, s) in v.iter_mut().zip(fl.samples()) {
                *o += s;
            }
        }
    }

    // dark noise is additive after the subtraction in both designs
    let dark = synthesize_colored_noise(&design.dark, duration, fs, substream_seed(seed, 3))?;
    for (o, s) in v.iter_mut().zip(dark.samples()) {
        *o += s;
    }

    Ok(DetectorOutput {
        differential: TimeSeries::new(v, fs, seed)?,
        dc1_v: design.g1 * idc1,
        dc2_v: design.g2 * idc2,
    })
}

/// Shot-to-dark clearance in dB at a reference frequency (1 kHz unless
/// stated otherwise).
pub fn dark_clearance_db(design: &DetectorDesign, lo_power_w: f64) -> Result<f64> {
    dark_clearance_db_at(design, lo_power_w, 1000.0)
}

pub fn dark_clearance_db_at(
    design: &DetectorDesign,
    lo_power_w: f64,
    reference_hz: f64,
) -> Result<f64> {
    if !(lo_power_w > 0.0) {
        return Err(Error::Domain(format!(
            "LO power must be positive, got {lo_power_w}"
        )));
    }
    let shot = design.shot_floor_v2_hz(lo_power_w);
    let dark = design.dark.value_at(reference_hz)?;
    Ok(10.0 * (shot / dark).log10())
}
