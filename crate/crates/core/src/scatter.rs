//! Parasitic interferometers: light backscattered at S inside a detector
//! arm, forward-scattered again at one of four locations, beating with the
//! local oscillator. Where the forward scatter happens fixes how the fringe
//! appears on the two diodes:
//!
//! * location 1 (`Arm1`) — one diode only, immune to subtraction;
//! * locations 2–3 (`LoPathPreBs`, `LoPathPreMc`) — common to both diodes,
//!   suppressed by the CMRR (location 3 is additionally filtered by the
//!   modecleaner);
//! * location 4 (`SignalPort`) — anti-correlated on the two diodes, which
//!   the subtraction adds up at full strength.
//!
//! The cyclic-averaging diagnostic drives the scattered-light phase with an
//! integer-cycle triangle ramp, relocating the fringe noise to the dither
//! frequency and its harmonics.

use crate::consts::{photon_energy_j, retro_phase_rad_per_m};
use crate::error::{Error, Result};
use crate::noise::{substream_seed, synthesize_colored_noise, NoisePsd, TimeSeries};
use crate::spectral::{welch_psd, SpectrumBin, SpectrumTrace, TraceUnits};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Forward-scatter locations 1–4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardLocation {
    Arm1,
    LoPathPreBs,
    LoPathPreMc,
    SignalPort,
}

impl ForwardLocation {
    /// Per-diode weights of the fringe beat.
    pub fn signature(&self) -> (f64, f64) {
        match self {
            ForwardLocation::Arm1 => (1.0, 0.0),
            ForwardLocation::LoPathPreBs | ForwardLocation::LoPathPreMc => (1.0, 1.0),
            ForwardLocation::SignalPort => (1.0, -1.0),
        }
    }

    pub fn is_common_mode(&self) -> bool {
        matches!(
            self,
            ForwardLocation::LoPathPreBs | ForwardLocation::LoPathPreMc
        )
    }
}

/// One parasitic interferometer.
#[derive(Debug, Clone)]
pub struct ScatterPath {
    /// Scattered power as a fraction of the power at S.
    pub power_fraction: f64,
    pub location: ForwardLocation,
    /// Displacement PSD of the scattering surface, m²/Hz.
    pub displacement_psd: NoisePsd,
    /// Operating-point fringe phase; `None` draws uniform [0, 2π) per seed.
    pub static_phase_rad: Option<f64>,
}

impl ScatterPath {
    pub fn new(
        power_fraction: f64,
        location: ForwardLocation,
        displacement_psd: NoisePsd,
        static_phase_rad: Option<f64>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&power_fraction) {
            return Err(Error::Domain(format!(
                "scattered power fraction must be in [0, 1), got {power_fraction}"
            )));
        }
        Ok(ScatterPath {
            power_fraction,
            location,
            displacement_psd,
            static_phase_rad,
        })
    }

    /// Generic vibrating-surface spectrum: 1/f² below a 50 Hz corner over
    /// a white floor 40 dB down. The level swings the fringe through many
    /// cycles at low frequency while the phase stays quiet within one
    /// period of a sub-kHz dither.
    pub fn default_displacement_psd() -> NoisePsd {
        Self::displacement_psd_with(1e-17, 50.0, 2.0)
    }

    /// Power-law displacement with value `knee_level` m²/Hz at `corner_hz`,
    /// falling with the given exponent onto a white floor 40 dB below the
    /// knee. Resonant mounts roll off faster than the generic 1/f².
    pub fn displacement_psd_with(knee_level: f64, corner_hz: f64, exponent: f64) -> NoisePsd {
        NoisePsd::Composite(vec![
            NoisePsd::white(knee_level * 1e-4),
            NoisePsd::OneOverF {
                level: knee_level,
                reference_hz: corner_hz,
                exponent,
            },
        ])
    }

    fn resolve_static_phase(&self, seed: u64) -> f64 {
        self.static_phase_rad.unwrap_or_else(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 0x5eed));
            rng.random_range(0.0..std::f64::consts::TAU)
        })
    }
}

/// Triangle PZT drive sweeping the scattered-light phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherDrive {
    pub frequency_hz: f64,
    /// Peak-to-peak sweep in fringe cycles; integers average the fringe out.
    pub cycles: f64,
    pub enabled: bool,
}

impl DitherDrive {
    /// Dither phase at time `t`: a triangle ramp of peak-to-peak amplitude
    /// 2π·cycles.
    pub fn phase_at(&self, t_s: f64) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        let u = (self.frequency_hz * t_s).rem_euclid(1.0);
        let tri = 1.0 - 4.0 * (u - 0.5).abs();
        std::f64::consts::PI * self.cycles * tri
    }
}

/// Add the dither ramp to a phase trajectory in place.
pub fn apply_dither(phase: &mut [f64], sample_rate_hz: f64, dither: &DitherDrive) {
    if !dither.enabled {
        return;
    }
    for (i, p) in phase.iter_mut().enumerate() {
        *p += dither.phase_at(i as f64 / sample_rate_hz);
    }
}

/// Fringe power swing on the two diodes for a given total beat phase:
/// ΔP = 2 sqrt(P_lo P_sc) cos(φ), distributed per the location signature.
/// Valid in the linearized regime P_sc ≤ 0.01 P_lo.
pub fn fringe_intensity(
    path: &ScatterPath,
    lo_power_w: f64,
    phase_rad: f64,
) -> Result<(f64, f64)> {
    let p_sc = path.power_fraction * lo_power_w;
    if p_sc > 0.01 * lo_power_w {
        return Err(Error::Linearization {
            p_sc_w: p_sc,
            p_lo_w: lo_power_w,
        });
    }
    let beat = 2.0 * (lo_power_w * p_sc).sqrt() * phase_rad.cos();
    let (s1, s2) = path.location.signature();
    Ok((s1 * beat, s2 * beat))
}

/// Stochastic phase trajectory of the scattered field: retro-reflection
/// phase 4π/λ per metre of surface displacement, plus the static fringe
/// phase and the dither ramp.
pub fn phase_series(
    path: &ScatterPath,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
    dither: Option<&DitherDrive>,
) -> Result<Vec<f64>> {
    let displacement =
        synthesize_colored_noise(&path.displacement_psd, duration_s, sample_rate_hz, seed)?;
    let phi0 = path.resolve_static_phase(seed);
    let k = retro_phase_rad_per_m();
    let mut phase: Vec<f64> = displacement.samples().iter().map(|d| phi0 + k * d).collect();
    if let Some(d) = dither {
        apply_dither(&mut phase, sample_rate_hz, d);
    }
    Ok(phase)
}

/// Beat records for both diodes.
pub struct BeatSeries {
    pub diode1: TimeSeries,
    pub diode2: TimeSeries,
}

/// Time-domain fringe beat on both diodes, W.
pub fn beat_series(
    path: &ScatterPath,
    lo_power_w: f64,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
    dither: Option<&DitherDrive>,
) -> Result<BeatSeries> {
    let phase = phase_series(path, duration_s, sample_rate_hz, seed, dither)?;
    let p_sc = path.power_fraction * lo_power_w;
    if p_sc > 0.01 * lo_power_w {
        return Err(Error::Linearization {
            p_sc_w: p_sc,
            p_lo_w: lo_power_w,
        });
    }
    let amp = 2.0 * (lo_power_w * p_sc).sqrt();
    let (s1, s2) = path.location.signature();
    let beat: Vec<f64> = phase.iter().map(|p| amp * p.cos()).collect();
    let d2: Vec<f64> = beat.iter().map(|b| s2 * b).collect();
    let d1: Vec<f64> = beat.iter().map(|b| s1 * b).collect();
    Ok(BeatSeries {
        diode1: TimeSeries::new(d1, sample_rate_hz, seed)?,
        diode2: TimeSeries::new(d2, sample_rate_hz, seed)?,
    })
}

/// Shot-relative scatter spectra of one path.
pub struct ScatterAnalysis {
    /// Fringe PSD as one diode sees it, relative to the LO shot floor.
    pub single_diode: SpectrumTrace,
    /// Fringe PSD in the subtracted output with unit gains and the given
    /// common-mode leakage.
    pub differential: SpectrumTrace,
}

/// Monte-Carlo scatter spectrum: synthesize the phase, beat it against the
/// LO, apply the correlation signature and the subtraction, and estimate
/// the PSD. `cmrr_db` sets the residual common-mode leakage of the
/// subtraction (None = perfectly balanced).
#[allow(clippy::too_many_arguments)]
pub fn scatter_psd(
    path: &ScatterPath,
    lo_power_w: f64,
    span_hz: f64,
    lines: usize,
    averages: u32,
    seed: u64,
    dither: Option<&DitherDrive>,
    cmrr_db: Option<f64>,
) -> Result<ScatterAnalysis> {
    let fs = 4.0 * span_hz;
    let n_seg = 4 * lines;
    let samples = n_seg * (averages as usize + 1) / 2 + 2;
    let duration = samples as f64 / fs;
    let beats = beat_series(path, lo_power_w, duration, fs, seed, dither)?;
    // unit gains with the CMRR-equivalent mismatch applied to diode 2
    let leakage = cmrr_db.map(|c| 10f64.powf(-c / 20.0)).unwrap_or(0.0);
    let diff: Vec<f64> = beats
        .diode1
        .samples()
        .iter()
        .zip(beats.diode2.samples())
        .map(|(&a, &b)| a - b * (1.0 - leakage))
        .collect();

    let shot_floor = 2.0 * photon_energy_j() * lo_power_w; // W²/Hz
    let to_rel = |trace: SpectrumTrace| -> Result<SpectrumTrace> {
        let bins = trace
            .bins
            .iter()
            .map(|b| SpectrumBin {
                value: 10.0 * (b.value / shot_floor).max(1e-40).log10(),
                ..*b
            })
            .collect();
        SpectrumTrace::new(TraceUnits::ShotRelativeDb, bins)
    };

    let single = welch_psd(&beats.diode1, span_hz, lines, averages)?;
    let diff_trace = welch_psd(
        &TimeSeries::new(diff, fs, seed)?,
        span_hz,
        lines,
        averages,
    )?;
    Ok(ScatterAnalysis {
        single_diode: to_rel(single)?,
        differential: to_rel(diff_trace)?,
    })
}

/// Sweep the dither amplitude and report the residual band power below
/// `low_band_hz` in the differential output (linear, shot-relative).
/// The minimum lands at integer fringe cycles.
#[allow(clippy::too_many_arguments)]
pub fn dither_amplitude_scan(
    path: &ScatterPath,
    lo_power_w: f64,
    dither_frequency_hz: f64,
    amplitudes: &[f64],
    span_hz: f64,
    lines: usize,
    averages: u32,
    seed: u64,
    low_band_hz: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    if amplitudes.len() < 2 {
        return Err(Error::InvalidInput(
            "amplitude scan needs at least 2 amplitudes".into(),
        ));
    }
    let mut out = Vec::with_capacity(amplitudes.len());
    for &cycles in amplitudes {
        let dither = DitherDrive {
            frequency_hz: dither_frequency_hz,
            cycles,
            enabled: true,
        };
        let analysis = scatter_psd(
            path,
            lo_power_w,
            span_hz,
            lines,
            averages,
            seed,
            Some(&dither),
            None,
        )?;
        let linear: f64 = analysis
            .differential
            .bins
            .iter()
            .filter(|b| b.frequency_hz >= low_band_hz.0 && b.frequency_hz <= low_band_hz.1)
            .map(|b| 10f64.powf(b.value / 10.0) * b.rbw_hz)
            .sum();
        out.push((cycles, linear));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_path(location: ForwardLocation) -> ScatterPath {
        ScatterPath::new(
            1e-9,
            location,
            ScatterPath::default_displacement_psd(),
            None,
        )
        .unwrap()
    }

    const P_LO: f64 = 1.9e-3;

    #[test]
    fn zero_scatter_is_silent() {
        let path = ScatterPath::new(
            0.0,
            ForwardLocation::Arm1,
            NoisePsd::white(0.0),
            Some(0.3),
        )
        .unwrap();
        let (d1, d2) = fringe_intensity(&path, P_LO, 1.234).unwrap();
        assert_eq!((d1, d2), (0.0, 0.0));
    }

    #[test]
    fn static_fringe_is_constant() {
        let path = ScatterPath::new(1e-8, ForwardLocation::Arm1, NoisePsd::white(0.0), Some(0.7))
            .unwrap();
        let want = 2.0 * (P_LO * 1e-8 * P_LO).sqrt() * 0.7f64.cos();
        let (d1, d2) = fringe_intensity(&path, P_LO, 0.7).unwrap();
        assert!((d1 - want).abs() < 1e-18 * want.abs().max(1.0));
        assert_eq!(d2, 0.0);
        // whole series constant when the surface is still and no dither runs
        let beats = beat_series(&path, P_LO, 0.1, 1000.0, 4, None).unwrap();
        let first = beats.diode1.samples()[0];
        assert!(beats.diode1.samples().iter().all(|&b| (b - first).abs() < 1e-20));
    }

    #[test]
    fn oversized_scatter_rejected() {
        let path = ScatterPath::new(0.02, ForwardLocation::Arm1, NoisePsd::white(0.0), Some(0.0))
            .unwrap();
        assert!(matches!(
            fringe_intensity(&path, P_LO, 0.0),
            Err(Error::Linearization { .. })
        ));
    }

    #[test]
    fn correlation_signs_by_location() {
        for (loc, want) in [
            (ForwardLocation::LoPathPreBs, 1.0),
            (ForwardLocation::LoPathPreMc, 1.0),
            (ForwardLocation::SignalPort, -1.0),
        ] {
            let beats = beat_series(&test_path(loc), P_LO, 2.0, 4000.0, 9, None).unwrap();
            let d1 = beats.diode1.samples();
            let d2 = beats.diode2.samples();
            let m1 = beats.diode1.mean();
            let m2 = beats.diode2.mean();
            let cov: f64 = d1
                .iter()
                .zip(d2)
                .map(|(a, b)| (a - m1) * (b - m2))
                .sum::<f64>();
            let corr = cov
                / (d1.iter().map(|a| (a - m1).powi(2)).sum::<f64>()
                    * d2.iter().map(|b| (b - m2).powi(2)).sum::<f64>())
                .sqrt();
            assert!((corr - want).abs() < 1e-9, "{loc:?}: corr {corr}");
        }
        // location 1 leaves diode 2 dark
        let beats = beat_series(&test_path(ForwardLocation::Arm1), P_LO, 2.0, 4000.0, 9, None)
            .unwrap();
        assert!(beats.diode2.samples().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn signal_port_is_6_db_above_arm1_in_the_difference() {
        let seed = 31;
        let arm1 = scatter_psd(
            &test_path(ForwardLocation::Arm1),
            P_LO,
            800.0,
            200,
            300,
            seed,
            None,
            None,
        )
        .unwrap();
        let sig = scatter_psd(
            &test_path(ForwardLocation::SignalPort),
            P_LO,
            800.0,
            200,
            300,
            seed,
            None,
            None,
        )
        .unwrap();
        // same phase realization: the band ratio is exactly the signature
        let band = |t: &SpectrumTrace| -> f64 {
            t.bins
                .iter()
                .filter(|b| b.frequency_hz >= 4.0 && b.frequency_hz <= 200.0)
                .map(|b| 10f64.powf(b.value / 10.0) * b.rbw_hz)
                .sum()
        };
        let ratio_db = 10.0 * (band(&sig.differential) / band(&arm1.differential)).log10();
        assert!((ratio_db - 6.02).abs() < 0.1, "got {ratio_db} dB");
        // and arm-1 scatter shows up at full strength: differential equals
        // the single-diode spectrum
        let r = 10.0 * (band(&arm1.differential) / band(&arm1.single_diode)).log10();
        assert!(r.abs() < 0.05, "arm1 diff vs single: {r} dB");
    }

    #[test]
    fn common_mode_is_suppressed_by_the_cmrr() {
        let seed = 32;
        let analysis = scatter_psd(
            &test_path(ForwardLocation::LoPathPreBs),
            P_LO,
            800.0,
            200,
            300,
            seed,
            None,
            Some(80.0),
        )
        .unwrap();
        let band = |t: &SpectrumTrace| -> f64 {
            t.bins
                .iter()
                .filter(|b| b.frequency_hz >= 4.0 && b.frequency_hz <= 200.0)
                .map(|b| 10f64.powf(b.value / 10.0) * b.rbw_hz)
                .sum()
        };
        let suppression =
            10.0 * (band(&analysis.single_diode) / band(&analysis.differential)).log10();
        assert!((suppression - 80.0).abs() < 0.1, "got {suppression} dB");
    }

    #[test]
    fn common_mode_budget_inequality() {
        // with an 80 dB CMRR the differential residual stays below the shot
        // floor as long as the single-diode fringe is less than 80 dB above
        // shot
        let seed = 33;
        let analysis = scatter_psd(
            &test_path(ForwardLocation::LoPathPreBs),
            P_LO,
            800.0,
            200,
            300,
            seed,
            None,
            Some(80.0),
        )
        .unwrap();
        for (s, d) in analysis
            .single_diode
            .bins
            .iter()
            .zip(&analysis.differential.bins)
        {
            if s.value < 80.0 {
                assert!(
                    d.value < 0.0,
                    "{} Hz: single {} dB, diff {} dB",
                    s.frequency_hz,
                    s.value,
                    d.value
                );
            }
        }
    }

    fn low_band_power(trace: &SpectrumTrace, f1: f64, f2: f64) -> f64 {
        trace
            .bins
            .iter()
            .filter(|b| b.frequency_hz >= f1 && b.frequency_hz <= f2)
            .map(|b| 10f64.powf(b.value / 10.0) * b.rbw_hz)
            .sum()
    }

    #[test]
    fn integer_dither_relocates_fringe_noise() {
        let path = test_path(ForwardLocation::SignalPort);
        let seed = 40;
        // fs = 4 * span = 16 * 750: triangle harmonics fold back onto the
        // harmonic grid instead of dressing the low band
        let span = 3000.0;
        let lines = 1200; // rbw 2.5 Hz puts 750 and 1500 on bin centers
        let averages = 300;
        let undithered =
            scatter_psd(&path, P_LO, span, lines, averages, seed, None, None).unwrap();
        let dither = DitherDrive {
            frequency_hz: 750.0,
            cycles: 1.0,
            enabled: true,
        };
        let dithered =
            scatter_psd(&path, P_LO, span, lines, averages, seed, Some(&dither), None).unwrap();

        // low band drops hard
        let before = low_band_power(&undithered.differential, 5.0, 300.0);
        let after = low_band_power(&dithered.differential, 5.0, 300.0);
        assert!(
            10.0 * (before / after).log10() > 15.0,
            "only {} dB of relocation",
            10.0 * (before / after).log10()
        );

        // peaks at the dither frequency and its harmonic
        let value_at = |t: &SpectrumTrace, f: f64| -> f64 {
            t.bins
                .iter()
                .find(|b| (b.frequency_hz - f).abs() < 1e-6)
                .map(|b| b.value)
                .unwrap()
        };
        let peak_750 = value_at(&dithered.differential, 750.0);
        let peak_1500 = value_at(&dithered.differential, 1500.0);
        let nearby = value_at(&dithered.differential, 600.0);
        assert!(peak_750 > nearby + 20.0, "750 Hz peak {peak_750} vs {nearby}");
        assert!(peak_1500 > nearby + 10.0, "1500 Hz peak {peak_1500}");
    }

    #[test]
    fn zero_amplitude_dither_changes_nothing() {
        let path = test_path(ForwardLocation::SignalPort);
        let seed = 41;
        let none = scatter_psd(&path, P_LO, 800.0, 200, 100, seed, None, None).unwrap();
        let zero = DitherDrive {
            frequency_hz: 750.0,
            cycles: 0.0,
            enabled: true,
        };
        let with_zero =
            scatter_psd(&path, P_LO, 800.0, 200, 100, seed, Some(&zero), None).unwrap();
        assert_eq!(none.differential.bins, with_zero.differential.bins);
    }

    #[test]
    fn half_integer_dither_is_worse_than_integer() {
        let path = test_path(ForwardLocation::SignalPort);
        let scan = dither_amplitude_scan(
            &path,
            P_LO,
            750.0,
            &[0.5, 1.0, 1.5, 2.0],
            3000.0,
            1200,
            150,
            42,
            (5.0, 300.0),
        )
        .unwrap();
        // local minima at the integer amplitudes
        assert!(scan[1].1 < scan[0].1, "{scan:?}");
        assert!(scan[1].1 < scan[2].1, "{scan:?}");
        assert!(scan[3].1 < scan[2].1, "{scan:?}");
    }

    #[test]
    fn fine_scan_has_minimum_at_one_cycle() {
        let path = test_path(ForwardLocation::SignalPort);
        let amplitudes: Vec<f64> = (0..=10).map(|i| 0.8 + 0.04 * i as f64).collect();
        let scan = dither_amplitude_scan(
            &path,
            P_LO,
            750.0,
            &amplitudes,
            3000.0,
            1200,
            150,
            43,
            (5.0, 300.0),
        )
        .unwrap();
        let (best, _) = scan
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!((best - 1.0).abs() <= 0.05, "minimum at {best}");
    }

    #[test]
    fn dither_conserves_band_integrated_power() {
        // noise is relocated, not removed: full-band power matches within 1 %.
        // A fast-wandering fringe and a two-minute record keep the sample
        // variance of the undithered fringe inside that bound.
        let path = ScatterPath::new(
            1e-9,
            ForwardLocation::SignalPort,
            ScatterPath::displacement_psd_with(1e-16, 50.0, 2.0),
            None,
        )
        .unwrap();
        let seed = 44;
        let full_span = 6000.0; // up to Nyquist of fs = 24000
        let scan = |dither: Option<&DitherDrive>| -> f64 {
            let analysis =
                scatter_psd(&path, P_LO, full_span, 1200, 2400, seed, dither, None).unwrap();
            low_band_power(&analysis.differential, 0.0, full_span)
        };
        let dither = DitherDrive {
            frequency_hz: 750.0,
            cycles: 1.0,
            enabled: true,
        };
        let before = scan(None);
        let after = scan(Some(&dither));
        assert!(
            (after - before).abs() / before < 0.01,
            "power changed by {:.3} %",
            100.0 * (after - before).abs() / before
        );
    }
}
