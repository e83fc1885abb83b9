//! Scenario files: INI-style named sections with `key = value` lines and
//! `#` comments, one file per experimental configuration. Parsing is
//! strict by default (unknown keys are errors); a lenient mode downgrades
//! them to warnings.

use std::collections::BTreeMap;
use std::path::Path;

use crate::electronics::ResistorType;
use crate::error::{Error, Result};
use crate::fields::Topology;
use crate::noise::{DustEventProcess, NoisePsd, PulseShape, SampleDist};
use crate::scatter::{DitherDrive, ForwardLocation, ScatterPath};
use crate::spectral::SpanPlan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RinConfig {
    pub db_above_shot: f64,
    pub anchor_hz: f64,
    pub corner_hz: f64,
}

impl RinConfig {
    pub fn psd(&self) -> NoisePsd {
        NoisePsd::rin_anchored(self.db_above_shot, self.anchor_hz, self.corner_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserConfig {
    pub power_w: f64,
    pub rin: Option<RinConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModecleanerConfig {
    pub enabled: bool,
    pub linewidth_hz: f64,
    pub hom_suppression: f64,
}

/// A value that is either fixed or left to the balancing optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoOr {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneConfig {
    pub topology: Topology,
    pub eta_bs: AutoOr,
    pub eta_pd1: f64,
    pub eta_pd2: f64,
    pub eta_l: f64,
    /// Transimpedance gain of stage 1 (and the single stage for the
    /// current-subtracting design), V/A.
    pub gain: f64,
    /// Stage-2 gain for the variable-gain design.
    pub gain2: AutoOr,
    /// Detune the balance to hit this CMRR exactly.
    pub target_cmrr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectronicsConfig {
    pub resistor_type: ResistorType,
    pub responsivity_a_w: f64,
    /// Override of the default dark model: white floor in V²/Hz plus a 1/f
    /// corner.
    pub dark_white_v2_hz: Option<f64>,
    pub dark_corner_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpoConfig {
    pub pump_ratio: f64,
    pub linewidth_hz: Option<f64>,
    pub phase_noise_rms_rad: f64,
    pub escape: f64,
    pub propagation: f64,
    pub visibility: f64,
    pub quantum_efficiency: f64,
    /// Quadrature angle for the as-configured output, rad from the
    /// squeezed quadrature.
    pub quadrature_angle_rad: f64,
}

/// Where a named stationary noise source couples in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePortKind {
    LoIntensity,
    Signal,
    Additive,
}

#[derive(Debug, Clone)]
pub struct NamedNoise {
    pub name: String,
    pub port: SourcePortKind,
    pub psd: NoisePsd,
}

#[derive(Debug, Clone)]
pub struct NamedScatter {
    pub name: String,
    pub path: ScatterPath,
    pub dithered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DustLocation {
    Arm1,
    Common,
}

#[derive(Debug, Clone)]
pub struct DustConfig {
    pub process: DustEventProcess,
    pub location: DustLocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JitterLocation {
    BeforeModecleaner,
    AfterModecleaner,
}

#[derive(Debug, Clone)]
pub struct JitterConfig {
    pub location: JitterLocation,
    pub displacement_white_m2_hz: f64,
    pub corner_hz: f64,
    /// Beam waist on the photodiodes (sets jitter-to-intensity scale and
    /// the overlap with the efficiency maps).
    pub waist_m: f64,
    pub map_file1: Option<String>,
    pub map_file2: Option<String>,
    pub map_seed1: u64,
    pub map_seed2: u64,
    pub map_ripple: f64,
    pub map_correlation_m: f64,
    pub map_pitch_m: f64,
    pub map_cells: usize,
}

impl JitterConfig {
    pub fn displacement_psd(&self) -> NoisePsd {
        NoisePsd::Composite(vec![
            NoisePsd::white(self.displacement_white_m2_hz),
            NoisePsd::OneOverF {
                level: self.displacement_white_m2_hz,
                reference_hz: self.corner_hz,
                exponent: 2.0,
            },
        ])
    }
}

/// Spectral and time-domain products a run can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Signal port in vacuum; every other configured noise source active.
    Shot,
    /// No light on the diodes.
    Dark,
    /// Squeezed quadrature on the signal port.
    Squeezing,
    /// Anti-squeezed quadrature.
    AntiSqueezing,
    /// As configured (squeezed at the configured angle if an OPO block is
    /// present, vacuum otherwise).
    Output,
    /// Voltage spectrum of diode 1 alone.
    SingleDiode,
    /// Per-diode DC voltages against time.
    DcMonitor,
}

impl OutputKind {
    pub fn name(&self) -> &'static str {
        match self {
            OutputKind::Shot => "shot",
            OutputKind::Dark => "dark",
            OutputKind::Squeezing => "squeezing",
            OutputKind::AntiSqueezing => "anti_squeezing",
            OutputKind::Output => "output",
            OutputKind::SingleDiode => "single_diode",
            OutputKind::DcMonitor => "dc_monitor",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub spans: SpanPlan,
    pub seed: u64,
    pub outputs: Vec<OutputKind>,
    pub squeeze_band_hz: (f64, f64),
    pub monitor_duration_s: f64,
    pub monitor_rate_hz: f64,
}

/// Full experiment description.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub laser: LaserConfig,
    pub modecleaner: Option<ModecleanerConfig>,
    pub homodyne: HomodyneConfig,
    pub electronics: ElectronicsConfig,
    pub opo: Option<OpoConfig>,
    pub noise_sources: Vec<NamedNoise>,
    pub scatter_paths: Vec<NamedScatter>,
    pub dither: Option<DitherDrive>,
    pub dust: Option<DustConfig>,
    pub jitter: Option<JitterConfig>,
    pub analysis: AnalysisConfig,
}

// ---------------------------------------------------------------------------
// raw INI layer

#[derive(Debug)]
struct RawSection {
    line: usize,
    entries: Vec<(String, String, usize)>,
}

fn split_sections(text: &str) -> Result<BTreeMap<String, RawSection>> {
    let mut sections: BTreeMap<String, RawSection> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                });
            }
            let name = line[1..line.len() - 1].trim().to_string();
            if name.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty section name".into(),
                });
            }
            if sections.contains_key(&name) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate section `[{name}]`"),
                });
            }
            sections.insert(
                name.clone(),
                RawSection {
                    line: line_no,
                    entries: Vec::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let section = current.as_ref().ok_or(Error::Parse {
            line: line_no,
            message: "key outside any [section]".into(),
        })?;
        sections.get_mut(section).unwrap().entries.push((
            key.trim().to_string(),
            value.trim().to_string(),
            line_no,
        ));
    }
    Ok(sections)
}

/// Typed accessor over one section's keys that tracks which were consumed.
struct SectionReader<'a> {
    section: String,
    entries: &'a [(String, String, usize)],
    consumed: Vec<bool>,
}

impl<'a> SectionReader<'a> {
    fn new(section: &str, raw: &'a RawSection) -> Self {
        SectionReader {
            section: section.to_string(),
            entries: &raw.entries,
            consumed: vec![false; raw.entries.len()],
        }
    }

    fn qualified(&self, key: &str) -> String {
        format!("{}.{}", self.section, key)
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        for (i, (k, v, _)) in self.entries.iter().enumerate() {
            if k == key {
                self.consumed[i] = true;
                return Some(v);
            }
        }
        None
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|e| Error::Validation {
                key: self.qualified(key),
                message: format!("not a number (`{v}`): {e}"),
            }),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn f64_required(&mut self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Error::Validation {
            key: self.qualified(key),
            message: "required key is missing".into(),
        })
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse::<u64>().map_err(|e| Error::Validation {
                key: self.qualified(key),
                message: format!("not an unsigned integer (`{v}`): {e}"),
            }),
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true") | Some("yes") | Some("on") => Ok(true),
            Some("false") | Some("no") | Some("off") => Ok(false),
            Some(v) => Err(Error::Validation {
                key: self.qualified(key),
                message: format!("expected true/false, got `{v}`"),
            }),
        }
    }

    fn auto_or(&mut self, key: &str, default: AutoOr) -> Result<AutoOr> {
        match self.raw(key) {
            None => Ok(default),
            Some("auto") => Ok(AutoOr::Auto),
            Some(v) => v
                .parse::<f64>()
                .map(AutoOr::Value)
                .map_err(|e| Error::Validation {
                    key: self.qualified(key),
                    message: format!("expected `auto` or a number, got `{v}`: {e}"),
                }),
        }
    }

    fn leftover_keys(&self) -> Vec<(String, usize)> {
        self.entries
            .iter()
            .zip(&self.consumed)
            .filter(|(_, &c)| !c)
            .map(|((k, _, line), _)| (self.qualified(k), *line))
            .collect()
    }
}

fn check_range(key: &str, value: f64, lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Result<f64> {
    let lo_ok = if lo_open { value > lo } else { value >= lo };
    let hi_ok = if hi_open { value < hi } else { value <= hi };
    if !(lo_ok && hi_ok && value.is_finite()) {
        let lb = if lo_open { "(" } else { "[" };
        let hb = if hi_open { ")" } else { "]" };
        return Err(Error::Validation {
            key: key.to_string(),
            message: format!("value {value} outside allowed range {lb}{lo}, {hi}{hb}"),
        });
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// section parsers

fn parse_laser(reader: &mut SectionReader) -> Result<LaserConfig> {
    let power_w = check_range(
        &reader.qualified("power_w"),
        reader.f64_required("power_w")?,
        0.0,
        f64::INFINITY,
        true,
        true,
    )?;
    let rin = match reader.f64("rin_db_above_shot")? {
        None => None,
        Some(db) => Some(RinConfig {
            db_above_shot: check_range(&reader.qualified("rin_db_above_shot"), db, 0.0, 200.0, false, false)?,
            anchor_hz: reader.f64_or("rin_anchor_hz", 10.0)?,
            corner_hz: check_range(
                &reader.qualified("rin_corner_hz"),
                reader.f64_or("rin_corner_hz", 1000.0)?,
                0.0,
                f64::INFINITY,
                true,
                true,
            )?,
        }),
    };
    Ok(LaserConfig { power_w, rin })
}

fn parse_modecleaner(reader: &mut SectionReader) -> Result<ModecleanerConfig> {
    Ok(ModecleanerConfig {
        enabled: reader.bool_or("enabled", true)?,
        linewidth_hz: check_range(
            &reader.qualified("linewidth_hz"),
            reader.f64_or("linewidth_hz", 4.7e6)?,
            0.0,
            f64::INFINITY,
            true,
            true,
        )?,
        hom_suppression: check_range(
            &reader.qualified("hom_suppression"),
            reader.f64_or("hom_suppression", 1e4)?,
            1.0,
            f64::INFINITY,
            false,
            true,
        )?,
    })
}

fn parse_homodyne(reader: &mut SectionReader) -> Result<HomodyneConfig> {
    let topology = match reader.raw("topology") {
        None | Some("current_subtracting") => Topology::CurrentSubtracting,
        Some("variable_gain") => Topology::VariableGain,
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("topology"),
                message: format!(
                    "expected `variable_gain` or `current_subtracting`, got `{v}`"
                ),
            })
        }
    };
    let eta_bs = reader.auto_or("eta_bs", AutoOr::Auto)?;
    if let AutoOr::Value(v) = eta_bs {
        check_range(&reader.qualified("eta_bs"), v, 0.0, 1.0, true, true)?;
    }
    let eta_pd1 = check_range(
        &reader.qualified("eta_pd1"),
        reader.f64_or("eta_pd1", 0.99)?,
        0.0,
        1.0,
        true,
        false,
    )?;
    let eta_pd2 = check_range(
        &reader.qualified("eta_pd2"),
        reader.f64_or("eta_pd2", 0.99)?,
        0.0,
        1.0,
        true,
        false,
    )?;
    let eta_l = check_range(
        &reader.qualified("eta_l"),
        reader.f64_or("eta_l", 0.0)?,
        0.0,
        1.0,
        false,
        false,
    )?;
    let gain = check_range(
        &reader.qualified("gain"),
        reader.f64_or("gain", 20_000.0)?,
        0.0,
        f64::INFINITY,
        true,
        true,
    )?;
    let gain2 = reader.auto_or("gain2", AutoOr::Auto)?;
    if let AutoOr::Value(v) = gain2 {
        check_range(&reader.qualified("gain2"), v, 0.0, f64::INFINITY, true, true)?;
    }
    let target_cmrr_db = reader.f64("target_cmrr_db")?;
    if let Some(c) = target_cmrr_db {
        check_range(&reader.qualified("target_cmrr_db"), c, 0.0, 300.0, true, false)?;
    }
    Ok(HomodyneConfig {
        topology,
        eta_bs,
        eta_pd1,
        eta_pd2,
        eta_l,
        gain,
        gain2,
        target_cmrr_db,
    })
}

fn parse_electronics(reader: &mut SectionReader) -> Result<ElectronicsConfig> {
    let resistor_type = match reader.raw("resistor_type") {
        None | Some("metal_film") => ResistorType::MetalFilm,
        Some("carbon") => ResistorType::Carbon,
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("resistor_type"),
                message: format!("expected `carbon` or `metal_film`, got `{v}`"),
            })
        }
    };
    let responsivity = check_range(
        &reader.qualified("responsivity_a_w"),
        reader.f64_or("responsivity_a_w", 0.78)?,
        0.0,
        crate::consts::max_responsivity_a_w(),
        true,
        false,
    )?;
    let dark_white = reader.f64("dark_white_v2_hz")?;
    if let Some(d) = dark_white {
        check_range(&reader.qualified("dark_white_v2_hz"), d, 0.0, f64::INFINITY, true, true)?;
    }
    Ok(ElectronicsConfig {
        resistor_type,
        responsivity_a_w: responsivity,
        dark_white_v2_hz: dark_white,
        dark_corner_hz: reader.f64_or("dark_corner_hz", 30.0)?,
    })
}

fn parse_opo(reader: &mut SectionReader) -> Result<OpoConfig> {
    Ok(OpoConfig {
        pump_ratio: check_range(
            &reader.qualified("pump_ratio"),
            reader.f64_or("pump_ratio", 0.65)?,
            0.0,
            1.0,
            false,
            true,
        )?,
        linewidth_hz: match reader.raw("linewidth_hz") {
            None => Some(1e7),
            Some("none") => None,
            Some(v) => Some(v.parse::<f64>().map_err(|e| Error::Validation {
                key: reader.qualified("linewidth_hz"),
                message: format!("bad linewidth `{v}`: {e}"),
            })?),
        },
        phase_noise_rms_rad: check_range(
            &reader.qualified("phase_noise_rms_rad"),
            reader.f64_or("phase_noise_rms_rad", 0.0)?,
            0.0,
            1.0,
            false,
            true,
        )?,
        escape: check_range(
            &reader.qualified("escape"),
            reader.f64_or("escape", 0.985)?,
            0.0,
            1.0,
            true,
            false,
        )?,
        propagation: check_range(
            &reader.qualified("propagation"),
            reader.f64_or("propagation", 0.993)?,
            0.0,
            1.0,
            true,
            false,
        )?,
        visibility: check_range(
            &reader.qualified("visibility"),
            reader.f64_or("visibility", 0.994)?,
            0.0,
            1.0,
            true,
            false,
        )?,
        quantum_efficiency: check_range(
            &reader.qualified("quantum_efficiency"),
            reader.f64_or("quantum_efficiency", 0.99)?,
            0.0,
            1.0,
            true,
            false,
        )?,
        quadrature_angle_rad: check_range(
            &reader.qualified("quadrature_angle_rad"),
            reader.f64_or("quadrature_angle_rad", 0.0)?,
            0.0,
            std::f64::consts::PI,
            false,
            true,
        )?,
    })
}

fn parse_noise_source(name: &str, reader: &mut SectionReader) -> Result<NamedNoise> {
    let port = match reader.raw("port") {
        Some("lo_intensity") => SourcePortKind::LoIntensity,
        Some("signal") => SourcePortKind::Signal,
        Some("additive") | None => SourcePortKind::Additive,
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("port"),
                message: format!(
                    "source must map to a port: lo_intensity, signal or additive; got `{v}`"
                ),
            })
        }
    };
    let psd = match reader.raw("kind") {
        Some("white") | None => NoisePsd::white(check_range(
            &reader.qualified("level"),
            reader.f64_required("level")?,
            0.0,
            f64::INFINITY,
            false,
            true,
        )?),
        Some("one_over_f") => NoisePsd::OneOverF {
            level: check_range(
                &reader.qualified("level"),
                reader.f64_required("level")?,
                0.0,
                f64::INFINITY,
                false,
                true,
            )?,
            reference_hz: reader.f64_or("reference_hz", 1.0)?,
            exponent: reader.f64_or("exponent", 1.0)?,
        },
        Some("rin") => NoisePsd::rin_anchored(
            reader.f64_required("db_above_shot")?,
            reader.f64_or("anchor_hz", 10.0)?,
            reader.f64_or("corner_hz", 1000.0)?,
        ),
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("kind"),
                message: format!("expected white, one_over_f or rin, got `{v}`"),
            })
        }
    };
    Ok(NamedNoise {
        name: name.to_string(),
        port,
        psd,
    })
}

fn parse_scatter(name: &str, reader: &mut SectionReader) -> Result<NamedScatter> {
    let location = match reader.raw("location") {
        Some("arm1") => ForwardLocation::Arm1,
        Some("lo_path_pre_bs") => ForwardLocation::LoPathPreBs,
        Some("lo_path_pre_mc") => ForwardLocation::LoPathPreMc,
        Some("signal_port") | None => ForwardLocation::SignalPort,
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("location"),
                message: format!(
                    "expected arm1, lo_path_pre_bs, lo_path_pre_mc or signal_port, got `{v}`"
                ),
            })
        }
    };
    let fraction = check_range(
        &reader.qualified("power_fraction"),
        reader.f64_required("power_fraction")?,
        0.0,
        1.0,
        false,
        true,
    )?;
    // an optional Faraday isolator attenuates the backscatter
    let isolation_db = reader.f64_or("isolation_db", 0.0)?;
    let effective = fraction * 10f64.powf(-isolation_db / 10.0);
    let knee = reader.f64_or("displacement_level_m2_hz", 1e-17)?;
    let corner = reader.f64_or("displacement_corner_hz", 50.0)?;
    let exponent = reader.f64_or("displacement_exponent", 2.0)?;
    let displacement = ScatterPath::displacement_psd_with(knee, corner, exponent);
    let static_phase = match reader.raw("static_phase_rad") {
        None | Some("auto") => None,
        Some(v) => Some(v.parse::<f64>().map_err(|e| Error::Validation {
            key: reader.qualified("static_phase_rad"),
            message: format!("expected `auto` or radians, got `{v}`: {e}"),
        })?),
    };
    Ok(NamedScatter {
        name: name.to_string(),
        path: ScatterPath::new(effective, location, displacement, static_phase)?,
        dithered: reader.bool_or("dithered", true)?,
    })
}

fn parse_dither(reader: &mut SectionReader) -> Result<DitherDrive> {
    Ok(DitherDrive {
        frequency_hz: check_range(
            &reader.qualified("frequency_hz"),
            reader.f64_or("frequency_hz", 750.0)?,
            0.0,
            f64::INFINITY,
            true,
            true,
        )?,
        cycles: check_range(
            &reader.qualified("cycles"),
            reader.f64_or("cycles", 1.0)?,
            0.0,
            1000.0,
            false,
            false,
        )?,
        enabled: reader.bool_or("enabled", true)?,
    })
}

fn parse_dust(reader: &mut SectionReader) -> Result<DustConfig> {
    let location = match reader.raw("location") {
        Some("arm1") | None => DustLocation::Arm1,
        Some("common") => DustLocation::Common,
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("location"),
                message: format!("expected arm1 or common, got `{v}`"),
            })
        }
    };
    let rate = check_range(
        &reader.qualified("rate_hz"),
        reader.f64_or("rate_hz", 0.2)?,
        0.0,
        f64::INFINITY,
        false,
        true,
    )?;
    let depth_min = reader.f64_or("depth_min", 1e-3)?;
    let depth_max = reader.f64_or("depth_max", 1.2e-2)?;
    check_range(&reader.qualified("depth_max"), depth_max, depth_min, 1.0, false, true)?;
    let dur_min = reader.f64_or("duration_min_s", 0.01)?;
    let dur_max = reader.f64_or("duration_max_s", 0.5)?;
    let pulse = match reader.raw("pulse") {
        Some("raised_cosine") | None => PulseShape::RaisedCosine,
        Some("rectangular") => PulseShape::Rectangular,
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("pulse"),
                message: format!("expected raised_cosine or rectangular, got `{v}`"),
            })
        }
    };
    Ok(DustConfig {
        process: DustEventProcess {
            rate_hz: rate,
            depth: if depth_min == depth_max {
                SampleDist::Fixed(depth_min)
            } else {
                SampleDist::LogUniform {
                    lo: depth_min,
                    hi: depth_max,
                }
            },
            duration: if dur_min == dur_max {
                SampleDist::Fixed(dur_min)
            } else {
                SampleDist::LogUniform {
                    lo: dur_min,
                    hi: dur_max,
                }
            },
            pulse,
        },
        location,
    })
}

fn parse_jitter(reader: &mut SectionReader) -> Result<JitterConfig> {
    let location = match reader.raw("location") {
        Some("before_modecleaner") | None => JitterLocation::BeforeModecleaner,
        Some("after_modecleaner") => JitterLocation::AfterModecleaner,
        Some(v) => {
            return Err(Error::Validation {
                key: reader.qualified("location"),
                message: format!("expected before_modecleaner or after_modecleaner, got `{v}`"),
            })
        }
    };
    Ok(JitterConfig {
        location,
        displacement_white_m2_hz: check_range(
            &reader.qualified("displacement_white_m2_hz"),
            reader.f64_or("displacement_white_m2_hz", 1e-14)?,
            0.0,
            f64::INFINITY,
            false,
            true,
        )?,
        corner_hz: reader.f64_or("corner_hz", 100.0)?,
        waist_m: check_range(
            &reader.qualified("waist_m"),
            reader.f64_or("waist_m", 3e-4)?,
            0.0,
            f64::INFINITY,
            true,
            true,
        )?,
        map_file1: reader.raw("map_file1").map(str::to_string),
        map_file2: reader.raw("map_file2").map(str::to_string),
        map_seed1: reader.u64_or("map_seed1", 1001)?,
        map_seed2: reader.u64_or("map_seed2", 1002)?,
        map_ripple: reader.f64_or("map_ripple", 0.005)?,
        map_correlation_m: reader.f64_or("map_correlation_m", 1e-4)?,
        map_pitch_m: reader.f64_or("map_pitch_m", 25e-6)?,
        map_cells: reader.u64_or("map_cells", 128)? as usize,
    })
}

fn parse_analysis(reader: &mut SectionReader) -> Result<AnalysisConfig> {
    let spans_text = reader.raw("spans").ok_or_else(|| Error::Validation {
        key: reader.qualified("spans"),
        message: "required key is missing (format: span:lines:averages, ...)".into(),
    })?;
    let spans = SpanPlan::parse(spans_text).map_err(|e| Error::Validation {
        key: reader.qualified("spans"),
        message: e.to_string(),
    })?;
    let outputs = match reader.raw("outputs") {
        None => vec![OutputKind::Output],
        Some(list) => {
            let mut out = Vec::new();
            for item in list.split(',') {
                let item = item.trim();
                if item.is_empty() {
                    continue;
                }
                out.push(match item {
                    "shot" => OutputKind::Shot,
                    "dark" => OutputKind::Dark,
                    "squeezing" => OutputKind::Squeezing,
                    "anti_squeezing" => OutputKind::AntiSqueezing,
                    "output" => OutputKind::Output,
                    "single_diode" => OutputKind::SingleDiode,
                    "dc_monitor" => OutputKind::DcMonitor,
                    v => {
                        return Err(Error::Validation {
                            key: reader.qualified("outputs"),
                            message: format!("unknown output `{v}`"),
                        })
                    }
                });
            }
            if out.is_empty() {
                return Err(Error::Validation {
                    key: reader.qualified("outputs"),
                    message: "no outputs requested".into(),
                });
            }
            out
        }
    };
    let band = match reader.raw("squeeze_band_hz") {
        None => (1600.0, 6400.0),
        Some(v) => {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::Validation {
                    key: reader.qualified("squeeze_band_hz"),
                    message: format!("expected `f1, f2`, got `{v}`"),
                });
            }
            let f1 = parts[0].parse::<f64>().map_err(|e| Error::Validation {
                key: reader.qualified("squeeze_band_hz"),
                message: e.to_string(),
            })?;
            let f2 = parts[1].parse::<f64>().map_err(|e| Error::Validation {
                key: reader.qualified("squeeze_band_hz"),
                message: e.to_string(),
            })?;
            (f1, f2)
        }
    };
    Ok(AnalysisConfig {
        spans,
        seed: reader.u64_or("seed", 1)?,
        outputs,
        squeeze_band_hz: band,
        monitor_duration_s: check_range(
            &reader.qualified("monitor_duration_s"),
            reader.f64_or("monitor_duration_s", 20.0)?,
            0.0,
            f64::INFINITY,
            true,
            true,
        )?,
        monitor_rate_hz: check_range(
            &reader.qualified("monitor_rate_hz"),
            reader.f64_or("monitor_rate_hz", 2000.0)?,
            0.0,
            f64::INFINITY,
            true,
            true,
        )?,
    })
}

// ---------------------------------------------------------------------------

/// Parse a scenario from text. Returns the config and any warnings
/// (non-empty only in lenient mode).
pub fn parse_scenario_str(text: &str, strict: bool) -> Result<(ScenarioConfig, Vec<String>)> {
    let sections = split_sections(text)?;
    let mut warnings = Vec::new();
    let get = |name: &str| -> Option<&RawSection> { sections.get(name) };

    let laser_raw = get("laser").ok_or_else(|| Error::Validation {
        key: "laser".into(),
        message: "missing required [laser] section".into(),
    })?;
    let mut laser_reader = SectionReader::new("laser", laser_raw);
    let laser = parse_laser(&mut laser_reader)?;

    let homodyne_raw = get("homodyne").ok_or_else(|| Error::Validation {
        key: "homodyne".into(),
        message: "missing required [homodyne] section".into(),
    })?;
    let mut homodyne_reader = SectionReader::new("homodyne", homodyne_raw);
    let homodyne = parse_homodyne(&mut homodyne_reader)?;

    let analysis_raw = get("analysis").ok_or_else(|| Error::Validation {
        key: "analysis".into(),
        message: "missing required [analysis] section".into(),
    })?;
    let mut analysis_reader = SectionReader::new("analysis", analysis_raw);
    let analysis = parse_analysis(&mut analysis_reader)?;

    let mut readers: Vec<SectionReader> =
        vec![laser_reader, homodyne_reader, analysis_reader];

    let mut modecleaner = None;
    if let Some(raw) = get("modecleaner") {
        let mut r = SectionReader::new("modecleaner", raw);
        modecleaner = Some(parse_modecleaner(&mut r)?);
        readers.push(r);
    }
    let electronics = match get("electronics") {
        Some(raw) => {
            let mut r = SectionReader::new("electronics", raw);
            let e = parse_electronics(&mut r)?;
            readers.push(r);
            e
        }
        None => ElectronicsConfig {
            resistor_type: ResistorType::MetalFilm,
            responsivity_a_w: 0.78,
            dark_white_v2_hz: None,
            dark_corner_hz: 30.0,
        },
    };
    let mut opo = None;
    if let Some(raw) = get("opo") {
        let mut r = SectionReader::new("opo", raw);
        opo = Some(parse_opo(&mut r)?);
        readers.push(r);
    }
    let mut dither = None;
    if let Some(raw) = get("dither") {
        let mut r = SectionReader::new("dither", raw);
        dither = Some(parse_dither(&mut r)?);
        readers.push(r);
    }
    let mut dust = None;
    if let Some(raw) = get("dust") {
        let mut r = SectionReader::new("dust", raw);
        dust = Some(parse_dust(&mut r)?);
        readers.push(r);
    }
    let mut jitter = None;
    if let Some(raw) = get("jitter") {
        let mut r = SectionReader::new("jitter", raw);
        jitter = Some(parse_jitter(&mut r)?);
        readers.push(r);
    }

    // named sections
    let mut noise_sources = Vec::new();
    let mut scatter_paths = Vec::new();
    for (name, raw) in &sections {
        if let Some(short) = name.strip_prefix("noise.") {
            let mut r = SectionReader::new(name, raw);
            noise_sources.push(parse_noise_source(short, &mut r)?);
            readers.push(r);
        } else if let Some(short) = name.strip_prefix("scatter.") {
            let mut r = SectionReader::new(name, raw);
            scatter_paths.push(parse_scatter(short, &mut r)?);
            readers.push(r);
        }
    }

    // unknown sections
    let known_names = [
        "laser",
        "homodyne",
        "analysis",
        "modecleaner",
        "electronics",
        "opo",
        "dither",
        "dust",
        "jitter",
    ];
    for (name, raw) in &sections {
        let recognized = known_names.contains(&name.as_str())
            || name.starts_with("noise.")
            || name.starts_with("scatter.");
        if !recognized {
            let msg = format!("unknown section `[{name}]` at line {}", raw.line);
            if strict {
                return Err(Error::Parse {
                    line: raw.line,
                    message: msg,
                });
            }
            warnings.push(msg);
        }
    }
    // unknown keys
    for reader in &readers {
        for (key, line) in reader.leftover_keys() {
            let msg = format!("unknown key `{key}` at line {line}");
            if strict {
                return Err(Error::Parse { line, message: msg });
            }
            warnings.push(msg);
        }
    }

    // cross-section constraints
    if laser.rin.is_some()
        && noise_sources
            .iter()
            .any(|s| s.port == SourcePortKind::LoIntensity)
    {
        return Err(Error::Validation {
            key: "laser.rin_db_above_shot".into(),
            message: "laser RIN and a named lo_intensity source both map to the LO port".into(),
        });
    }
    Ok((
        ScenarioConfig {
            laser,
            modecleaner,
            homodyne,
            electronics,
            opo,
            noise_sources,
            scatter_paths,
            dither,
            dust,
            jitter,
            analysis,
        },
        warnings,
    ))
}

/// Parse a scenario file.
pub fn parse_scenario<P: AsRef<Path>>(path: P, strict: bool) -> Result<(ScenarioConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text, strict)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[laser]
power_w = 1e-3

[homodyne]
topology = current_subtracting

[analysis]
spans = 800:800:100
";

    #[test]
    fn minimal_config_fills_defaults() {
        let (cfg, warnings) = parse_scenario_str(MINIMAL, true).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.laser.power_w, 1e-3);
        assert_eq!(cfg.homodyne.eta_pd1, 0.99);
        assert_eq!(cfg.homodyne.gain, 20_000.0);
        assert_eq!(cfg.electronics.resistor_type, ResistorType::MetalFilm);
        assert_eq!(cfg.electronics.responsivity_a_w, 0.78);
        assert!(cfg.modecleaner.is_none());
        assert!(cfg.opo.is_none());
        assert_eq!(cfg.analysis.outputs, vec![OutputKind::Output]);
        assert_eq!(cfg.analysis.seed, 1);
    }

    #[test]
    fn out_of_range_eta_bs_names_the_key() {
        let text = MINIMAL.replace(
            "topology = current_subtracting",
            "topology = current_subtracting\neta_bs = 1.2",
        );
        match parse_scenario_str(&text, true).unwrap_err() {
            Error::Validation { key, message } => {
                assert_eq!(key, "homodyne.eta_bs");
                assert!(message.contains("(0, 1)"), "{message}");
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_strict_error_lenient_warning() {
        let text = MINIMAL.replace("power_w = 1e-3", "power_w = 1e-3\nwattage = 3");
        let err = parse_scenario_str(&text, true).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
        let (_, warnings) = parse_scenario_str(&text, false).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("laser.wattage"));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "[laser]\npower_w = 1e-3\nnot a key value line\n";
        match parse_scenario_str(text, true).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn named_sections_parse() {
        let text = "
[laser]
power_w = 1.9e-3

[homodyne]
topology = current_subtracting
target_cmrr_db = 80

[noise.acoustic]
port = additive
kind = one_over_f
level = 1e-12

[scatter.bench]
location = signal_port
power_fraction = 1e-9
static_phase_rad = 0.4

[dither]
frequency_hz = 750
cycles = 1.0

[analysis]
spans = 800:800:100, 6400:800:100
outputs = shot, dark
seed = 7
";
        let (cfg, _) = parse_scenario_str(text, true).unwrap();
        assert_eq!(cfg.noise_sources.len(), 1);
        assert_eq!(cfg.noise_sources[0].name, "acoustic");
        assert_eq!(cfg.scatter_paths.len(), 1);
        assert_eq!(cfg.scatter_paths[0].path.static_phase_rad, Some(0.4));
        assert_eq!(cfg.dither.unwrap().frequency_hz, 750.0);
        assert_eq!(cfg.homodyne.target_cmrr_db, Some(80.0));
        assert_eq!(cfg.analysis.outputs.len(), 2);
        assert_eq!(cfg.analysis.seed, 7);
    }

    #[test]
    fn isolator_attenuates_backscatter() {
        let text = "
[laser]
power_w = 1.9e-3

[homodyne]

[scatter.s]
location = signal_port
power_fraction = 1e-6
isolation_db = 22

[analysis]
spans = 800:800:100
";
        let (cfg, _) = parse_scenario_str(text, true).unwrap();
        let got = cfg.scatter_paths[0].path.power_fraction;
        let want = 1e-6 * 10f64.powf(-2.2);
        assert!((got - want).abs() < 1e-18, "{got} vs {want}");
    }
}
