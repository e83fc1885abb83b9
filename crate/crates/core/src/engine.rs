//! Experiment orchestration: resolve a scenario into detector hardware plus
//! noise sources, then run the fast analytic budget or the time-domain
//! Monte-Carlo pipeline.
//!
//! Both paths produce the same stitched spectrum grid, so they can be
//! compared bin by bin. The Monte-Carlo path acquires each span separately
//! at four times its edge frequency, the way a spectrum analyzer sweeps its
//! windows; every stochastic element draws from its own substream of the
//! master seed, so results are identical across runs and worker counts.

use rayon::prelude::*;

use crate::consts::ELEMENTARY_CHARGE_C;
use crate::electronics::{dark_clearance_db, detector_output, DetectorDesign};
use crate::error::{Error, Result};
use crate::fields::{
    cmrr_db, derive_coefficients, optimize_balance, subtract_output, BalanceAdjustment,
    CouplingCoefficients, DifferentialCoefficients, HomodyneOptics, LocalOscillator, Port,
    Topology,
};
use crate::noise::{
    sample_dust_events, substream_seed, synthesize_colored_noise, NoisePsd, TimeSeries,
};
use crate::pointing::{
    modecleaner_filter, pointing_coefficient, response, BeamProfile, JitterProcess,
    ModecleanerCavity, PhotodiodeMap,
};
use crate::scatter::{beat_series, ForwardLocation};
use crate::scenario::{
    AutoOr, DustLocation, JitterLocation, OutputKind, ScenarioConfig, SourcePortKind,
};
use crate::spectral::{
    analytic_budget, normalize_to_shot, stitch_spans, welch_psd, BudgetSource, SpanSegment,
    SpectrumTrace,
};
use crate::squeezing::{
    opo_variances, squeezed_signal_psd, total_efficiency, EfficiencyChain, OpoParams,
};

/// Per-diode DC voltage records, the oscilloscope view of the detector.
#[derive(Debug, Clone)]
pub struct DcMonitor {
    pub v1: TimeSeries,
    pub v2: TimeSeries,
    pub vdiff: TimeSeries,
}

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    /// Raw traces in V²/Hz, keyed by output name.
    pub traces: Vec<(String, SpectrumTrace)>,
    /// Shot-relative versions (present when a shot trace was requested).
    pub normalized: Vec<(String, SpectrumTrace)>,
    pub dc_monitor: Option<DcMonitor>,
    pub scalars: Vec<(String, f64)>,
}

impl RunReport {
    pub fn trace(&self, name: &str) -> Option<&SpectrumTrace> {
        self.traces
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn normalized_trace(&self, name: &str) -> Option<&SpectrumTrace> {
        self.normalized
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// Write one CSV per trace plus `report.csv` with the scalars into
    /// `dir`.
    pub fn write_csv<P: AsRef<std::path::Path>>(&self, dir: P) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, trace) in &self.traces {
            let file = format!("{name}.csv");
            trace.write_csv_file(dir.join(&file))?;
            written.push(file);
        }
        for (name, trace) in &self.normalized {
            let file = format!("{name}_rel.csv");
            trace.write_csv_file(dir.join(&file))?;
            written.push(file);
        }
        if let Some(monitor) = &self.dc_monitor {
            use std::io::Write;
            let file = "dc_monitor.csv".to_string();
            let mut f = std::fs::File::create(dir.join(&file))?;
            writeln!(f, "time_s,v1_v,v2_v,vdiff_v")?;
            let fs = monitor.v1.sample_rate_hz();
            for i in 0..monitor.v1.len() {
                writeln!(
                    f,
                    "{},{},{},{}",
                    i as f64 / fs,
                    monitor.v1.samples()[i],
                    monitor.v2.samples()[i],
                    monitor.vdiff.samples()[i]
                )?;
            }
            written.push(file);
        }
        if !self.scalars.is_empty() {
            use std::io::Write;
            let file = "report.csv".to_string();
            let mut f = std::fs::File::create(dir.join(&file))?;
            writeln!(f, "name,value")?;
            for (name, value) in &self.scalars {
                writeln!(f, "{name},{value}")?;
            }
            written.push(file);
        }
        Ok(written)
    }
}

/// Jitter coupling after map and cavity resolution.
#[derive(Debug, Clone)]
struct ResolvedJitter {
    /// Residual beam displacement after the modecleaner, m²/Hz.
    residual_psd: NoisePsd,
    /// Jitter power the cavity converted to common intensity noise,
    /// relative-intensity units, 1/Hz.
    converted_rel_psd: NoisePsd,
    /// Relative pointing gradients (dR/dx)/R of the two diodes, 1/m.
    p1: f64,
    p2: f64,
}

/// A scenario resolved into concrete hardware.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub power_w: f64,
    pub optics: HomodyneOptics,
    pub g1: f64,
    pub g2: f64,
    pub design: DetectorDesign,
    pub coeffs: CouplingCoefficients,
    pub diff: DifferentialCoefficients,
    pub cmrr_db: f64,
    pub clearance_db: f64,
    /// sqrt(2 q R P): scales an α-normalized quadrature coefficient into a
    /// photocurrent amplitude, A.
    pub volt_scale: f64,
    jitter: Option<ResolvedJitter>,
}

impl ResolvedScenario {
    /// Differential shot floor at the output, V²/Hz.
    pub fn shot_floor_v2_hz(&self) -> f64 {
        self.diff.shot_floor() * self.volt_scale * self.volt_scale
    }
}

/// The balance parameter the scenario implies (for the `cmrr` diagnostic).
pub fn balance_parameter(config: &ScenarioConfig) -> Result<BalanceAdjustment> {
    let resolved = resolve(config)?;
    optimize_balance(&resolved.optics, config.homodyne.topology)
}

/// Resolve balance, gains, coefficients, electronics and jitter coupling.
pub fn resolve(config: &ScenarioConfig) -> Result<ResolvedScenario> {
    let h = &config.homodyne;
    let p = config.laser.power_w;
    let lo = LocalOscillator::unit_amplitude();

    // splitting ratio: explicit, or the current-subtracting null
    let mut eta_bs = match (h.eta_bs, h.topology) {
        (AutoOr::Value(v), _) => v,
        (AutoOr::Auto, Topology::VariableGain) => 0.5,
        (AutoOr::Auto, Topology::CurrentSubtracting) => {
            match optimize_balance(
                &HomodyneOptics::new(0.5, h.eta_l, h.eta_pd1, h.eta_pd2)?,
                Topology::CurrentSubtracting,
            )? {
                BalanceAdjustment::SplitRatio(bs) => bs,
                BalanceAdjustment::GainRatio(_) => unreachable!(),
            }
        }
    };

    let mut optics = HomodyneOptics::new(eta_bs, h.eta_l, h.eta_pd1, h.eta_pd2)?;
    let g1 = h.gain;
    let mut g2 = match h.topology {
        Topology::CurrentSubtracting => g1,
        Topology::VariableGain => match h.gain2 {
            AutoOr::Value(v) => v,
            AutoOr::Auto => match optimize_balance(&optics, Topology::VariableGain)? {
                BalanceAdjustment::GainRatio(r) => g1 * r,
                BalanceAdjustment::SplitRatio(_) => unreachable!(),
            },
        },
    };

    // detune the perfect balance to a target CMRR
    if let Some(target) = h.target_cmrr_db {
        let eps = 10f64.powf(-target / 20.0);
        match h.topology {
            Topology::VariableGain => {
                let c = derive_coefficients(&lo, &optics)?;
                g2 = g1 * c.diode1.lo * (1.0 - eps) / c.diode2.lo;
            }
            Topology::CurrentSubtracting => {
                eta_bs = h.eta_pd2 / (h.eta_pd1 * (1.0 - h.eta_l) * (1.0 - eps) + h.eta_pd2);
                optics = HomodyneOptics::new(eta_bs, h.eta_l, h.eta_pd1, h.eta_pd2)?;
            }
        }
    }

    let coeffs = derive_coefficients(&lo, &optics)?;
    let diff = subtract_output(&coeffs, g1, g2, h.topology)?;

    // dark model: white floor (default 20 dB below shot at 1 mW) with a
    // 1/f corner; both overridable per scenario
    let dark_floor = config.electronics.dark_white_v2_hz.unwrap_or(
        0.01 * 2.0
            * ELEMENTARY_CHARGE_C
            * config.electronics.responsivity_a_w
            * 1e-3
            * g1
            * g1,
    );
    let dark = Some(NoisePsd::Composite(vec![
        NoisePsd::white(dark_floor),
        NoisePsd::one_over_f(dark_floor, config.electronics.dark_corner_hz),
    ]));
    let design = match h.topology {
        Topology::VariableGain => DetectorDesign::variable_gain(
            g1,
            g2,
            config.electronics.resistor_type,
            config.electronics.responsivity_a_w,
            dark,
        )?,
        Topology::CurrentSubtracting => DetectorDesign::current_subtracting(
            g1,
            config.electronics.resistor_type,
            config.electronics.responsivity_a_w,
            dark,
        )?,
    };

    let jitter = match &config.jitter {
        None => None,
        Some(j) => {
            let load = |file: &Option<String>, seed: u64| -> Result<PhotodiodeMap> {
                match file {
                    Some(path) => PhotodiodeMap::from_file(path),
                    None => PhotodiodeMap::synthetic(
                        j.map_cells,
                        j.map_cells,
                        j.map_pitch_m,
                        0.95,
                        j.map_ripple,
                        j.map_correlation_m,
                        seed,
                    ),
                }
            };
            let map1 = load(&j.map_file1, j.map_seed1)?;
            let map2 = load(&j.map_file2, j.map_seed2)?;
            let beam = BeamProfile::new(j.waist_m, 0.0, 0.0, p)?;
            let rel_gradient = |map: &PhotodiodeMap| -> Result<f64> {
                let r = response(map, &beam)?;
                let (gx, _) = pointing_coefficient(map, &beam)?;
                Ok(gx / r)
            };
            let p1 = rel_gradient(&map1)?;
            let p2 = rel_gradient(&map2)?;

            let process = JitterProcess {
                displacement_psd: j.displacement_psd(),
            };
            let mc_active = config
                .modecleaner
                .as_ref()
                .map(|m| m.enabled)
                .unwrap_or(false);
            let (residual, converted) =
                if mc_active && j.location == JitterLocation::BeforeModecleaner {
                    let m = config.modecleaner.as_ref().unwrap();
                    let cavity = ModecleanerCavity::new(m.linewidth_hz, m.hom_suppression)?;
                    modecleaner_filter(&process, &cavity)
                } else {
                    (process.displacement_psd.clone(), NoisePsd::white(0.0))
                };
            Some(ResolvedJitter {
                residual_psd: residual,
                converted_rel_psd: converted.scaled(1.0 / (j.waist_m * j.waist_m)),
                p1,
                p2,
            })
        }
    };

    let cmrr = cmrr_db(&diff, &coeffs)?;
    let clearance = dark_clearance_db(&design, p)?;
    let volt_scale =
        (2.0 * ELEMENTARY_CHARGE_C * config.electronics.responsivity_a_w * p).sqrt();

    Ok(ResolvedScenario {
        power_w: p,
        optics,
        g1,
        g2,
        design,
        coeffs,
        diff,
        cmrr_db: cmrr,
        clearance_db: clearance,
        volt_scale,
        jitter,
    })
}

fn opo_params(config: &ScenarioConfig) -> Result<Option<(OpoParams, EfficiencyChain)>> {
    match &config.opo {
        None => Ok(None),
        Some(o) => {
            let params = OpoParams::new(o.pump_ratio, o.linewidth_hz, o.phase_noise_rms_rad)?;
            let chain = EfficiencyChain::new(
                o.escape,
                o.propagation,
                o.visibility,
                o.quantum_efficiency,
            )?;
            Ok(Some((params, chain)))
        }
    }
}

/// Signal-port quadrature PSD for a given output kind (shot-relative).
///
/// The chain's quantum efficiency is stripped here: the photodiode loss is
/// already modeled by the field algebra's eta_pd vacuum admixture, and
/// applying it twice would overstate the squeezing degradation.
fn signal_psd_for(config: &ScenarioConfig, kind: OutputKind) -> Result<NoisePsd> {
    let opo = opo_params(config)?;
    let angle_for = |angle: f64| -> Result<NoisePsd> {
        match &opo {
            Some((params, chain)) => {
                let injected = EfficiencyChain {
                    quantum_efficiency: 1.0,
                    ..*chain
                };
                squeezed_signal_psd(params, &injected, angle)
            }
            None => Ok(NoisePsd::white(1.0)),
        }
    };
    match kind {
        OutputKind::Squeezing => angle_for(0.0),
        OutputKind::AntiSqueezing => angle_for(std::f64::consts::FRAC_PI_2),
        OutputKind::Output => {
            if opo.is_some() {
                angle_for(config.opo.as_ref().unwrap().quadrature_angle_rad)
            } else if let Some(named) = config
                .noise_sources
                .iter()
                .find(|s| s.port == SourcePortKind::Signal)
            {
                Ok(named.psd.clone())
            } else {
                Ok(NoisePsd::white(1.0))
            }
        }
        _ => Ok(NoisePsd::white(1.0)),
    }
}

/// LO quadrature PSD (shot-relative): laser RIN, a named source, or vacuum.
fn lo_psd(config: &ScenarioConfig) -> NoisePsd {
    if let Some(rin) = &config.laser.rin {
        return rin.psd();
    }
    if let Some(named) = config
        .noise_sources
        .iter()
        .find(|s| s.port == SourcePortKind::LoIntensity)
    {
        return named.psd.clone();
    }
    NoisePsd::white(1.0)
}

fn scale_diff(diff: &DifferentialCoefficients, k: f64) -> DifferentialCoefficients {
    DifferentialCoefficients {
        lo: diff.lo * k,
        signal: diff.signal * k,
        v0: diff.v0 * k,
        v1: diff.v1 * k,
        v2: diff.v2 * k,
        ..*diff
    }
}

fn zero_diff(diff: &DifferentialCoefficients) -> DifferentialCoefficients {
    scale_diff(diff, 0.0)
}

/// Additive electronic + jitter budget terms shared by all bright outputs.
fn additive_sources(resolved: &ResolvedScenario, config: &ScenarioConfig) -> Vec<BudgetSource> {
    let mut out = Vec::new();
    let r = resolved.design.responsivity_a_w;
    let p = resolved.power_w;
    let i1 = r * p * resolved.coeffs.diode1.dc;
    let i2 = r * p * resolved.coeffs.diode2.dc;
    out.push(BudgetSource::Additive(
        "flicker".into(),
        resolved.design.flicker_psd(i1, i2),
    ));
    out.push(BudgetSource::Additive(
        "dark".into(),
        resolved.design.dark.clone(),
    ));
    for named in &config.noise_sources {
        if named.port == SourcePortKind::Additive {
            out.push(BudgetSource::Additive(
                named.name.clone(),
                named.psd.clone(),
            ));
        }
    }
    if let Some(j) = &resolved.jitter {
        let dc_gain1 = resolved.g1 * resolved.coeffs.diode1.dc;
        let dc_gain2 = resolved.g2 * resolved.coeffs.diode2.dc;
        // uncommon pointing term: per-diode relative gradients do not cancel
        let k_res = (r * p * (dc_gain1 * j.p1 - dc_gain2 * j.p2)).powi(2);
        out.push(BudgetSource::Additive(
            "jitter_residual".into(),
            j.residual_psd.clone().scaled(k_res),
        ));
        // converted intensity noise is common, suppressed like the LO port
        let k_conv = (r * p * (dc_gain1 - dc_gain2)).powi(2);
        out.push(BudgetSource::Additive(
            "jitter_converted".into(),
            j.converted_rel_psd.clone().scaled(k_conv),
        ));
    }
    out
}

/// Analytic budget run: stationary sources only.
pub fn run_budget(config: &ScenarioConfig) -> Result<RunReport> {
    if let Some(dust) = &config.dust {
        if dust.process.rate_hz > 0.0 {
            return Err(Error::InvalidInput(
                "budget path handles stationary sources only; remove [dust] or use `simulate`"
                    .into(),
            ));
        }
    }
    if let Some(path) = config.scatter_paths.iter().find(|s| s.path.power_fraction > 0.0) {
        return Err(Error::InvalidInput(format!(
            "budget path handles stationary sources only; remove [scatter.{}] or use `simulate`",
            path.name
        )));
    }
    if config.analysis.outputs.contains(&OutputKind::DcMonitor) {
        return Err(Error::InvalidInput(
            "dc_monitor output requires the Monte-Carlo path (`simulate` or `dust-monitor`)"
                .into(),
        ));
    }

    let resolved = resolve(config)?;
    let plan = &config.analysis.spans;
    let volt_diff = scale_diff(&resolved.diff, resolved.volt_scale);
    let additive = additive_sources(&resolved, config);

    let mut traces = Vec::new();
    for &kind in &config.analysis.outputs {
        let trace = match kind {
            OutputKind::Dark => analytic_budget(
                &zero_diff(&volt_diff),
                &[BudgetSource::Additive(
                    "dark".into(),
                    resolved.design.dark.clone(),
                )],
                plan,
            )?,
            OutputKind::SingleDiode => {
                // diode-1 voltage spectrum: its own port couplings plus dark
                let d1 = &resolved.coeffs.diode1;
                let k = resolved.volt_scale * resolved.g1;
                let single = DifferentialCoefficients {
                    lo: d1.lo * k,
                    signal: d1.signal * k,
                    v0: d1.v0 * k,
                    v1: d1.v1 * k,
                    v2: d1.v2 * k,
                    ..resolved.diff
                };
                let mut sources = vec![
                    BudgetSource::Quadrature(Port::LoIntensity, lo_psd(config)),
                    BudgetSource::Additive("dark".into(), resolved.design.dark.clone()),
                ];
                sources.push(BudgetSource::Quadrature(
                    Port::Signal,
                    signal_psd_for(config, kind)?,
                ));
                analytic_budget(&single, &sources, plan)?
            }
            _ => {
                let mut sources = vec![
                    BudgetSource::Quadrature(Port::LoIntensity, lo_psd(config)),
                    BudgetSource::Quadrature(Port::Signal, signal_psd_for(config, kind)?),
                ];
                sources.extend(additive.iter().cloned().map(|s| match s {
                    BudgetSource::Additive(n, p) => BudgetSource::Additive(n, p),
                    q => q,
                }));
                analytic_budget(&volt_diff, &sources, plan)?
            }
        };
        traces.push((kind.name().to_string(), trace));
    }

    let mut report = RunReport {
        traces,
        ..Default::default()
    };
    attach_normalized(&mut report, false)?;
    attach_scalars(&mut report, &resolved, config)?;
    Ok(report)
}

/// One Monte-Carlo span acquisition for one output kind.
fn simulate_span(
    resolved: &ResolvedScenario,
    config: &ScenarioConfig,
    kind: OutputKind,
    seg: &SpanSegment,
    out_idx: usize,
    span_idx: usize,
) -> Result<SpectrumTrace> {
    let fs = 4.0 * seg.span_hz;
    let n_seg = 4 * seg.lines;
    let n = n_seg * (seg.averages as usize + 1) / 2;
    let duration = n as f64 / fs;
    let master = config.analysis.seed;
    let base = ((out_idx as u64) << 32) | ((span_idx as u64) << 16);
    let stream = |element: u64| substream_seed(master, base | element);

    let r = resolved.design.responsivity_a_w;
    let p_nominal = resolved.power_w;
    let s_amp = resolved.volt_scale; // sqrt(2 q R P), A per unit quadrature

    let dark_run = kind == OutputKind::Dark;

    // dust traces
    let dust_arm1 = match &config.dust {
        Some(d)
            if !dark_run && d.location == DustLocation::Arm1 && d.process.rate_hz > 0.0 =>
        {
            Some(sample_dust_events(&d.process, duration, fs, stream(6))?)
        }
        _ => None,
    };
    let dust_common = match &config.dust {
        Some(d)
            if !dark_run && d.location == DustLocation::Common && d.process.rate_hz > 0.0 =>
        {
            Some(sample_dust_events(&d.process, duration, fs, stream(6))?)
        }
        _ => None,
    };

    // quadrature port records (skip ports with identically zero coupling)
    let synth = |psd: &NoisePsd, element: u64| -> Result<Vec<f64>> {
        Ok(synthesize_colored_noise(psd, duration, fs, stream(element))?
            .samples()
            .to_vec())
    };
    let zeros = vec![0.0f64; n];
    let x_lo;
    let x_sig;
    let x_v0;
    let x_v1;
    let x_v2;
    if dark_run {
        x_lo = zeros.clone();
        x_sig = zeros.clone();
        x_v0 = zeros.clone();
        x_v1 = zeros.clone();
        x_v2 = zeros.clone();
    } else {
        x_lo = synth(&lo_psd(config), 1)?;
        x_sig = synth(&signal_psd_for(config, kind)?, 2)?;
        x_v0 = if resolved.optics.eta_l > 0.0 || dust_arm1.is_some() {
            synth(&NoisePsd::white(1.0), 3)?
        } else {
            zeros.clone()
        };
        x_v1 = if resolved.optics.eta_pd1 < 1.0 {
            synth(&NoisePsd::white(1.0), 4)?
        } else {
            zeros.clone()
        };
        x_v2 = if resolved.optics.eta_pd2 < 1.0 {
            synth(&NoisePsd::white(1.0), 5)?
        } else {
            zeros.clone()
        };
    }

    // jitter records
    let (jit_d, jit_rc, jp1, jp2) = match (&resolved.jitter, dark_run) {
        (Some(j), false) => {
            let d = synth(&j.residual_psd, 7)?;
            let rc = if matches!(j.converted_rel_psd, NoisePsd::Scaled { ref inner, .. }
                if matches!(**inner, NoisePsd::White { level } if level == 0.0))
            {
                zeros.clone()
            } else {
                synth(&j.converted_rel_psd, 8)?
            };
            (d, rc, j.p1, j.p2)
        }
        _ => (zeros.clone(), zeros.clone(), 0.0, 0.0),
    };

    // scatter beats, W, routed by location
    let mut beat1 = vec![0.0f64; n];
    let mut beat2 = vec![0.0f64; n];
    let mut beat_common = vec![0.0f64; n];
    if !dark_run {
        for (i, s) in config.scatter_paths.iter().enumerate() {
            if s.path.power_fraction <= 0.0 {
                continue;
            }
            let dither = match (&config.dither, s.dithered) {
                (Some(d), true) => Some(*d),
                _ => None,
            };
            let beats = beat_series(
                &s.path,
                p_nominal,
                duration,
                fs,
                stream(0x40 + i as u64),
                dither.as_ref(),
            )?;
            match s.path.location {
                ForwardLocation::Arm1 => {
                    for (o, b) in beat1.iter_mut().zip(beats.diode1.samples()) {
                        *o += b;
                    }
                }
                ForwardLocation::SignalPort => {
                    for (o, b) in beat1.iter_mut().zip(beats.diode1.samples()) {
                        *o += b;
                    }
                    for (o, b) in beat2.iter_mut().zip(beats.diode2.samples()) {
                        *o += b;
                    }
                }
                ForwardLocation::LoPathPreBs | ForwardLocation::LoPathPreMc => {
                    // common beat; pre-modecleaner scatter gets the cavity pole
                    let mc_pole = match (&config.modecleaner, s.path.location) {
                        (Some(m), ForwardLocation::LoPathPreMc) if m.enabled => {
                            Some(m.linewidth_hz / 2.0)
                        }
                        _ => None,
                    };
                    match mc_pole {
                        Some(pole) => {
                            let a = (-std::f64::consts::TAU * pole / fs).exp();
                            let mut y = 0.0;
                            for (o, b) in beat_common.iter_mut().zip(beats.diode1.samples()) {
                                y = a * y + (1.0 - a) * b;
                                *o += y;
                            }
                        }
                        None => {
                            for (o, b) in beat_common.iter_mut().zip(beats.diode1.samples()) {
                                *o += b;
                            }
                        }
                    }
                }
            }
        }
    }

    // assemble photocurrents
    let static_l = resolved.optics.eta_l;
    let time_varying = dust_arm1.is_some() || dust_common.is_some();
    let mut i1 = vec![0.0f64; n];
    let mut i2 = vec![0.0f64; n];
    if !dark_run {
        let lo = LocalOscillator::unit_amplitude();
        let mut c = resolved.coeffs;
        for t in 0..n {
            if time_varying {
                let eta_l = (static_l
                    + dust_arm1.as_ref().map(|d| d.samples()[t]).unwrap_or(0.0))
                .min(1.0 - 1e-9);
                let optics = HomodyneOptics {
                    eta_l,
                    ..resolved.optics
                };
                c = derive_coefficients(&lo, &optics)?;
            }
            let p_t = p_nominal
                * (1.0 - dust_common.as_ref().map(|d| d.samples()[t]).unwrap_or(0.0));
            let env1 = (1.0 + jit_rc[t]) * (1.0 + jp1 * jit_d[t]);
            let env2 = (1.0 + jit_rc[t]) * (1.0 + jp2 * jit_d[t]);
            let quad1 = c.diode1.lo * x_lo[t]
                + c.diode1.signal * x_sig[t]
                + c.diode1.v0 * x_v0[t]
                + c.diode1.v1 * x_v1[t];
            let quad2 = c.diode2.lo * x_lo[t]
                + c.diode2.signal * x_sig[t]
                + c.diode2.v2 * x_v2[t];
            // photocurrent: DC response + quadrature fluctuations + beats;
            // common beats couple through each diode's DC response so the
            // subtraction cancels them to the configured CMRR
            i1[t] = r * p_t * c.diode1.dc * env1
                + s_amp * quad1
                + r * (beat1[t] + c.diode1.dc * beat_common[t]);
            i2[t] = r * p_t * c.diode2.dc * env2
                + s_amp * quad2
                + r * (beat2[t] + c.diode2.dc * beat_common[t]);
        }
    }

    let i1 = TimeSeries::new(i1, fs, master)?;
    let i2 = TimeSeries::new(i2, fs, master)?;

    let v = if kind == OutputKind::SingleDiode {
        // diode-1 voltage with dark noise (flicker belongs to the
        // subtracted channel's gain stages; stage 1 applies for the
        // variable-gain design)
        let mut v: Vec<f64> = i1.samples().iter().map(|&a| resolved.g1 * a).collect();
        if resolved.design.topology == Topology::VariableGain {
            let vdc = resolved.g1 * i1.mean();
            let k = crate::electronics::flicker_coefficient(resolved.design.resistor_type);
            let fl = synthesize_colored_noise(
                &NoisePsd::one_over_f(k * vdc * vdc, 1.0),
                duration,
                fs,
                stream(10),
            )?;
            for (o, s) in v.iter_mut().zip(fl.samples()) {
                *o += s;
            }
        }
        let dark = synthesize_colored_noise(&resolved.design.dark, duration, fs, stream(9))?;
        for (o, s) in v.iter_mut().zip(dark.samples()) {
            *o += s;
        }
        TimeSeries::new(v, fs, master)?
    } else {
        detector_output(&resolved.design, &i1, &i2, stream(9))?.differential
    };

    welch_psd(&v, seg.span_hz, seg.lines, seg.averages)
}

/// DC-coupled oscilloscope view of the two diodes.
fn simulate_dc_monitor(
    resolved: &ResolvedScenario,
    config: &ScenarioConfig,
) -> Result<DcMonitor> {
    let fs = config.analysis.monitor_rate_hz;
    let duration = config.analysis.monitor_duration_s;
    let n = (duration * fs).round() as usize;
    let master = config.analysis.seed;

    let (dust_arm1, dust_common) = match &config.dust {
        Some(d) if d.process.rate_hz > 0.0 => {
            let trace = sample_dust_events(
                &d.process,
                duration,
                fs,
                substream_seed(master, 0x600),
            )?;
            match d.location {
                DustLocation::Arm1 => (Some(trace), None),
                DustLocation::Common => (None, Some(trace)),
            }
        }
        _ => (None, None),
    };

    let r = resolved.design.responsivity_a_w;
    let p = resolved.power_w;
    let lo = LocalOscillator::unit_amplitude();
    let static_l = resolved.optics.eta_l;
    let mut v1 = vec![0.0f64; n];
    let mut v2 = vec![0.0f64; n];
    let mut vd = vec![0.0f64; n];
    let mut c = resolved.coeffs;
    for t in 0..n {
        if let Some(d) = &dust_arm1 {
            let optics = HomodyneOptics {
                eta_l: (static_l + d.samples()[t]).min(1.0 - 1e-9),
                ..resolved.optics
            };
            c = derive_coefficients(&lo, &optics)?;
        }
        let p_t = p * (1.0 - dust_common.as_ref().map(|d| d.samples()[t]).unwrap_or(0.0));
        let i1 = r * p_t * c.diode1.dc;
        let i2 = r * p_t * c.diode2.dc;
        v1[t] = resolved.g1 * i1;
        v2[t] = resolved.g2 * i2;
        vd[t] = resolved.g1 * i1 - resolved.g2 * i2;
    }
    Ok(DcMonitor {
        v1: TimeSeries::new(v1, fs, master)?,
        v2: TimeSeries::new(v2, fs, master)?,
        vdiff: TimeSeries::new(vd, fs, master)?,
    })
}

/// Time-domain run covering transients, scatter and dither.
pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<RunReport> {
    let resolved = resolve(config)?;
    let spectral_outputs: Vec<OutputKind> = config
        .analysis
        .outputs
        .iter()
        .copied()
        .filter(|k| *k != OutputKind::DcMonitor)
        .collect();

    // every (output, span) acquisition is independent; collect in fixed
    // order so worker count cannot change the result
    let mut tasks = Vec::new();
    for (oi, &kind) in spectral_outputs.iter().enumerate() {
        for (si, seg) in config.analysis.spans.segments.iter().enumerate() {
            tasks.push((oi, si, kind, *seg));
        }
    }
    let results: Result<Vec<((usize, usize), SpectrumTrace)>> = tasks
        .par_iter()
        .map(|&(oi, si, kind, seg)| {
            simulate_span(&resolved, config, kind, &seg, oi, si).map(|t| ((oi, si), t))
        })
        .collect();
    let mut results = results?;
    results.sort_by_key(|&((oi, si), _)| (oi, si));

    let mut traces = Vec::new();
    for (oi, &kind) in spectral_outputs.iter().enumerate() {
        let spans: Vec<SpectrumTrace> = results
            .iter()
            .filter(|((o, _), _)| *o == oi)
            .map(|(_, t)| t.clone())
            .collect();
        traces.push((kind.name().to_string(), stitch_spans(&spans)?));
    }

    let dc_monitor = if config.analysis.outputs.contains(&OutputKind::DcMonitor) {
        Some(simulate_dc_monitor(&resolved, config)?)
    } else {
        None
    };

    let mut report = RunReport {
        traces,
        dc_monitor,
        ..Default::default()
    };
    attach_normalized(&mut report, true)?;
    attach_scalars(&mut report, &resolved, config)?;
    Ok(report)
}

/// Add shot-relative versions of every trace when a shot reference exists.
fn attach_normalized(report: &mut RunReport, smooth_shot: bool) -> Result<()> {
    let Some(shot) = report.trace("shot").cloned() else {
        return Ok(());
    };
    let mut normalized = Vec::new();
    for (name, trace) in &report.traces {
        if name == "shot" || name == "single_diode" {
            continue;
        }
        normalized.push((name.clone(), normalize_to_shot(trace, &shot, smooth_shot)?));
    }
    report.normalized = normalized;
    Ok(())
}

fn attach_scalars(
    report: &mut RunReport,
    resolved: &ResolvedScenario,
    config: &ScenarioConfig,
) -> Result<()> {
    let mut scalars = vec![
        ("cmrr_db".to_string(), resolved.cmrr_db),
        ("dark_clearance_db".to_string(), resolved.clearance_db),
        ("shot_floor_v2_hz".to_string(), resolved.shot_floor_v2_hz()),
        ("dc1_v".to_string(), {
            resolved.g1 * resolved.design.responsivity_a_w * resolved.power_w
                * resolved.coeffs.diode1.dc
        }),
        ("dc2_v".to_string(), {
            resolved.g2 * resolved.design.responsivity_a_w * resolved.power_w
                * resolved.coeffs.diode2.dc
        }),
    ];
    if let Some((opo, chain)) = opo_params(config)? {
        let eta = total_efficiency(&chain);
        let (v_sq, v_anti) = opo_variances(&opo, eta, 100.0);
        scalars.push(("eta_total".to_string(), eta));
        scalars.push(("predicted_squeezing_db".to_string(), 10.0 * v_sq.log10()));
        scalars.push((
            "predicted_anti_squeezing_db".to_string(),
            10.0 * v_anti.log10(),
        ));
    }
    let band = config.analysis.squeeze_band_hz;
    if let Some(rel) = report.normalized_trace("squeezing") {
        // mean of the linear ratio over the band, reported in dB
        let linear: Vec<f64> = rel
            .bins
            .iter()
            .filter(|b| b.frequency_hz >= band.0 && b.frequency_hz <= band.1)
            .map(|b| 10f64.powf(b.value / 10.0))
            .collect();
        if !linear.is_empty() {
            let mean = linear.iter().sum::<f64>() / linear.len() as f64;
            scalars.push((
                format!("mean_squeezing_db_{}_{}", band.0, band.1),
                10.0 * mean.log10(),
            ));
        }
    }
    if let Some(rel) = report.normalized_trace("anti_squeezing") {
        let linear: Vec<f64> = rel
            .bins
            .iter()
            .filter(|b| b.frequency_hz >= band.0 && b.frequency_hz <= band.1)
            .map(|b| 10f64.powf(b.value / 10.0))
            .collect();
        if !linear.is_empty() {
            let mean = linear.iter().sum::<f64>() / linear.len() as f64;
            scalars.push((
                format!("mean_anti_squeezing_db_{}_{}", band.0, band.1),
                10.0 * mean.log10(),
            ));
        }
    }
    report.scalars = scalars;
    Ok(())
}

/// Predicted squeezing levels for the `squeeze-predict` diagnostic.
pub struct SqueezePrediction {
    pub eta_total: f64,
    pub squeezing_db: f64,
    pub anti_squeezing_db: f64,
    pub dark_corrected_squeezing_db: f64,
}

pub fn squeeze_predict(config: &ScenarioConfig) -> Result<SqueezePrediction> {
    let Some((opo, chain)) = opo_params(config)? else {
        return Err(Error::InvalidInput(
            "squeeze-predict needs an [opo] section".into(),
        ));
    };
    let resolved = resolve(config)?;
    let eta = total_efficiency(&chain);
    let (v_sq, v_anti) = opo_variances(&opo, eta, 100.0);
    // what the detector would record on top of its dark noise, and the
    // level after correcting that dark contribution away
    let v_dark = 10f64.powf(-resolved.clearance_db / 10.0);
    let measured = v_sq + v_dark;
    let corrected = crate::spectral::dark_correct_linear(measured, v_dark)?;
    Ok(SqueezePrediction {
        eta_total: eta,
        squeezing_db: 10.0 * measured.log10(),
        anti_squeezing_db: 10.0 * (v_anti + v_dark).log10(),
        dark_corrected_squeezing_db: 10.0 * corrected.log10(),
    })
}
