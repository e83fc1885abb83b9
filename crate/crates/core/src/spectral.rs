//! Spectrum-analyzer emulation: Welch PSD estimation with RMS averaging,
//! multi-span stitching, shot-noise normalization, dark-noise correction,
//! and the analytic noise-budget composer that cross-checks the Monte-Carlo
//! path.
//!
//! "RMS averaging" is realized the way a spectrum analyzer's RMS detector
//! works: power spectra of successive Hann-windowed segments (50 % overlap)
//! are averaged. One-sided normalization is fixed so the band-integrated
//! PSD of white noise equals its variance.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fields::{DifferentialCoefficients, Port, ALL_PORTS};
use crate::noise::{NoisePsd, TimeSeries};

/// Units of a spectrum trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceUnits {
    V2PerHz,
    ShotRelativeDb,
}

impl fmt::Display for TraceUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceUnits::V2PerHz => write!(f, "V2_per_Hz"),
            TraceUnits::ShotRelativeDb => write!(f, "shot_relative_db"),
        }
    }
}

impl std::str::FromStr for TraceUnits {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V2_per_Hz" => Ok(TraceUnits::V2PerHz),
            "shot_relative_db" => Ok(TraceUnits::ShotRelativeDb),
            other => Err(Error::InvalidInput(format!("unknown trace units `{other}`"))),
        }
    }
}

/// One frequency bin of a PSD estimate. Stitched traces mix resolution
/// bandwidths, so each bin carries its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBin {
    pub frequency_hz: f64,
    pub value: f64,
    pub rbw_hz: f64,
    pub averages: u32,
}

/// Frequency-binned PSD estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTrace {
    pub units: TraceUnits,
    pub bins: Vec<SpectrumBin>,
    /// Frequencies where stitched spans meet.
    pub seams: Vec<f64>,
}

impl SpectrumTrace {
    pub fn new(units: TraceUnits, bins: Vec<SpectrumBin>) -> Result<Self> {
        let trace = SpectrumTrace {
            units,
            bins,
            seams: Vec::new(),
        };
        trace.validate()?;
        Ok(trace)
    }

    fn validate(&self) -> Result<()> {
        for w in self.bins.windows(2) {
            if !(w[1].frequency_hz > w[0].frequency_hz) {
                return Err(Error::InvalidInput(format!(
                    "bin frequencies must be strictly increasing ({} then {})",
                    w[0].frequency_hz, w[1].frequency_hz
                )));
            }
        }
        for b in &self.bins {
            if !(b.rbw_hz > 0.0) || !b.value.is_finite() || !b.frequency_hz.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "bad bin: f={} value={} rbw={}",
                    b.frequency_hz, b.value, b.rbw_hz
                )));
            }
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.frequency_hz).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.value).collect()
    }

    /// The common RBW, if the trace has not been stitched from several.
    pub fn uniform_rbw_hz(&self) -> Option<f64> {
        let first = self.bins.first()?.rbw_hz;
        self.bins
            .iter()
            .all(|b| b.rbw_hz == first)
            .then_some(first)
    }

    pub fn max_frequency_hz(&self) -> f64 {
        self.bins.last().map(|b| b.frequency_hz).unwrap_or(0.0)
    }

    /// Mean value over `[f1, f2]` (inclusive).
    pub fn band_mean(&self, f1_hz: f64, f2_hz: f64) -> Result<f64> {
        let sel: Vec<f64> = self
            .bins
            .iter()
            .filter(|b| b.frequency_hz >= f1_hz && b.frequency_hz <= f2_hz)
            .map(|b| b.value)
            .collect();
        if sel.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no bins inside [{f1_hz}, {f2_hz}] Hz"
            )));
        }
        Ok(sel.iter().sum::<f64>() / sel.len() as f64)
    }

    /// Integrated power over `[f1, f2]` using each bin's own width.
    /// Only meaningful for linear-power units.
    pub fn band_power(&self, f1_hz: f64, f2_hz: f64) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.frequency_hz >= f1_hz && b.frequency_hz <= f2_hz)
            .map(|b| b.value * b.rbw_hz)
            .sum()
    }

    /// Serialize as CSV: `frequency_hz,value,units,rbw_hz,averages`, one row
    /// per bin, LF line endings. Float formatting is shortest-roundtrip, so
    /// a reload reproduces the trace exactly.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frequency_hz,value,units,rbw_hz,averages")?;
        for b in &self.bins {
            writeln!(
                w,
                "{},{},{},{},{}",
                b.frequency_hz, b.value, self.units, b.rbw_hz, b.averages
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.to_csv(&mut f)
    }

    /// Parse a trace from CSV. Seam frequencies are rebuilt from RBW
    /// transitions between consecutive bins.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty CSV".into()))??;
        if header.trim() != "frequency_hz,value,units,rbw_hz,averages" {
            return Err(Error::InvalidInput(format!("unexpected CSV header `{header}`")));
        }
        let mut units: Option<TraceUnits> = None;
        let mut bins = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::InvalidInput(format!(
                    "CSV row {} has {} fields, expected 5",
                    i + 2,
                    parts.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("row {}: bad {what}: {e}", i + 2)))
            };
            let u: TraceUnits = parts[2].parse()?;
            match units {
                None => units = Some(u),
                Some(prev) if prev != u => {
                    return Err(Error::InvalidInput("mixed units in one trace".into()))
                }
                _ => {}
            }
            bins.push(SpectrumBin {
                frequency_hz: parse(parts[0], "frequency")?,
                value: parse(parts[1], "value")?,
                rbw_hz: parse(parts[3], "rbw")?,
                averages: parts[4].parse().map_err(|e| {
                    Error::InvalidInput(format!("row {}: bad averages: {e}", i + 2))
                })?,
            });
        }
        let units = units.ok_or_else(|| Error::InvalidInput("CSV has no data rows".into()))?;
        let mut trace = SpectrumTrace::new(units, bins)?;
        trace.seams = trace
            .bins
            .windows(2)
            .filter(|w| w[0].rbw_hz != w[1].rbw_hz)
            .map(|w| w[0].frequency_hz)
            .collect();
        Ok(trace)
    }

    pub fn read_csv_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        SpectrumTrace::from_csv(std::fs::File::open(path)?)
    }
}

/// One acquisition of a multi-span measurement plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanSegment {
    /// Upper frequency edge of the span.
    pub span_hz: f64,
    /// FFT lines; RBW = span / lines.
    pub lines: usize,
    pub averages: u32,
}

impl SpanSegment {
    pub fn rbw_hz(&self) -> f64 {
        self.span_hz / self.lines as f64
    }
}

/// Multi-span measurement plan, finest span first.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPlan {
    pub segments: Vec<SpanSegment>,
}

impl SpanPlan {
    pub fn new(segments: Vec<SpanSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("span plan needs at least one span".into()));
        }
        for s in &segments {
            if s.lines < 2 {
                return Err(Error::InvalidInput(format!(
                    "span {} Hz: lines must be >= 2, got {}",
                    s.span_hz, s.lines
                )));
            }
            if !(s.span_hz > 0.0) || s.averages == 0 {
                return Err(Error::InvalidInput(format!(
                    "span {} Hz: bad span or averages",
                    s.span_hz
                )));
            }
        }
        for w in segments.windows(2) {
            if !(w[1].span_hz > w[0].span_hz) {
                return Err(Error::InvalidInput(format!(
                    "spans must be strictly increasing ({} then {})",
                    w[0].span_hz, w[1].span_hz
                )));
            }
        }
        Ok(SpanPlan { segments })
    }

    /// Parse `"span:lines:averages, span:lines:averages, ..."`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for item in text.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let parts: Vec<&str> = item.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "span entry `{item}` must be span:lines:averages"
                )));
            }
            segments.push(SpanSegment {
                span_hz: parts[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad span in `{item}`: {e}")))?,
                lines: parts[1]
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad lines in `{item}`: {e}")))?,
                averages: parts[2]
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad averages in `{item}`: {e}")))?,
            });
        }
        SpanPlan::new(segments)
    }

    pub fn max_span_hz(&self) -> f64 {
        self.segments.last().map(|s| s.span_hz).unwrap_or(0.0)
    }
}

/// Welch PSD estimate of `series` over `[0, span]` with `lines` FFT lines
/// and exactly `averages` RMS-averaged segments at 50 % overlap.
///
/// The series sample rate must be an integer multiple of the RBW and at
/// least 2 × span.
pub fn welch_psd(
    series: &TimeSeries,
    span_hz: f64,
    lines: usize,
    averages: u32,
) -> Result<SpectrumTrace> {
    if lines < 2 || averages == 0 || !(span_hz > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad welch request: span={span_hz}, lines={lines}, averages={averages}"
        )));
    }
    let fs = series.sample_rate_hz();
    if span_hz > fs / 2.0 {
        return Err(Error::InvalidInput(format!(
            "span {span_hz} Hz exceeds Nyquist {} Hz",
            fs / 2.0
        )));
    }
    let rbw = span_hz / lines as f64;
    let n_f = fs / rbw;
    let n = n_f.round() as usize;
    if n < 4 || (n_f - n as f64).abs() > 1e-6 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "sample rate {fs} Hz is not an even integer multiple of RBW {rbw} Hz"
        )));
    }
    let hop = n / 2;
    let needed = n + (averages as usize - 1) * hop;
    if series.len() < needed {
        return Err(Error::InsufficientData {
            required_s: needed as f64 / fs,
            got_s: series.len() as f64 / fs,
            averages,
            rbw_hz: rbw,
        });
    }

    let window: Vec<f64> = (0..n)
        .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()))
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let samples = series.samples();
    let n_bins = lines + 1; // DC through the span edge

    // accumulate periodograms in fixed segment order; per-segment mean
    // removal keeps slow drift from leaking into the lowest bins
    let mut acc = vec![0.0f64; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for seg in 0..averages as usize {
        let start = seg * hop;
        let seg_mean =
            samples[start..start + n].iter().sum::<f64>() / n as f64;
        for j in 0..n {
            buf[j] = Complex::new((samples[start + j] - seg_mean) * window[j], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
    }

    let one_sided = 2.0 / (fs * win_power);
    let edge = 1.0 / (fs * win_power);
    let bins = (0..n_bins)
        .map(|k| {
            let scale = if k == 0 || k == n / 2 { edge } else { one_sided };
            SpectrumBin {
                frequency_hz: k as f64 * rbw,
                value: acc[k] / averages as f64 * scale,
                rbw_hz: rbw,
                averages,
            }
        })
        .collect();
    SpectrumTrace::new(TraceUnits::V2PerHz, bins)
}

/// Piece multiple spans into one composite trace.
///
/// Traces must be sorted by span. Each frequency is taken from the
/// finest-RBW trace covering it; the DC bin and the first bin of every span
/// are discarded (window leakage from DC). Seam frequencies are recorded in
/// the result.
pub fn stitch_spans(traces: &[SpectrumTrace]) -> Result<SpectrumTrace> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("no traces to stitch".into()));
    }
    let units = traces[0].units;
    if traces.iter().any(|t| t.units != units) {
        return Err(Error::InvalidInput("cannot stitch traces with mixed units".into()));
    }
    for w in traces.windows(2) {
        if !(w[1].max_frequency_hz() > w[0].max_frequency_hz()) {
            return Err(Error::InvalidInput(
                "traces must be sorted by increasing span".into(),
            ));
        }
    }

    let mut bins: Vec<SpectrumBin> = Vec::new();
    // carry seams of already-stitched inputs so stitching is idempotent
    let mut seams: Vec<f64> = traces.iter().flat_map(|t| t.seams.iter().copied()).collect();
    let mut prev_edge = 0.0f64;
    for (i, trace) in traces.iter().enumerate() {
        // drop DC and the first bin of the span
        let kept: Vec<&SpectrumBin> = trace
            .bins
            .iter()
            .filter(|b| (b.frequency_hz / b.rbw_hz).round() >= 2.0)
            .collect();
        let first_kept = match kept.first() {
            Some(b) => b.frequency_hz,
            None => continue,
        };
        // a trace whose first usable bin sits above the previous edge by
        // more than one of its own bins leaves a hole
        if i > 0 && first_kept > prev_edge + 1.5 * kept[0].rbw_hz {
            return Err(Error::SpanGap {
                from_hz: prev_edge,
                to_hz: first_kept,
            });
        }
        let selected: Vec<SpectrumBin> = kept
            .into_iter()
            .filter(|b| b.frequency_hz > prev_edge + 1e-9 * b.rbw_hz)
            .copied()
            .collect();
        if selected.is_empty() {
            continue;
        }
        if i > 0 && !bins.is_empty() {
            seams.push(prev_edge);
        }
        prev_edge = trace.max_frequency_hz();
        bins.extend(selected);
    }
    seams.sort_by(|a, b| a.partial_cmp(b).unwrap());
    seams.dedup();
    let mut out = SpectrumTrace::new(units, bins)?;
    out.seams = seams;
    Ok(out)
}

/// Express `measured` relative to `shot` in dB per bin. With `smooth_shot`
/// the shot trace is replaced by its broadband mean before division, which
/// removes estimator noise from the reference.
pub fn normalize_to_shot(
    measured: &SpectrumTrace,
    shot: &SpectrumTrace,
    smooth_shot: bool,
) -> Result<SpectrumTrace> {
    if measured.bins.len() != shot.bins.len() {
        return Err(Error::InvalidInput(format!(
            "bin count mismatch: {} vs {}",
            measured.bins.len(),
            shot.bins.len()
        )));
    }
    if measured.units != TraceUnits::V2PerHz || shot.units != TraceUnits::V2PerHz {
        return Err(Error::InvalidInput(
            "normalize_to_shot expects linear-power traces".into(),
        ));
    }
    let shot_mean = shot.bins.iter().map(|b| b.value).sum::<f64>() / shot.bins.len() as f64;
    let mut bins = Vec::with_capacity(measured.bins.len());
    for (m, s) in measured.bins.iter().zip(&shot.bins) {
        if (m.frequency_hz - s.frequency_hz).abs() > 1e-9 * m.frequency_hz.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "bin frequency mismatch: {} vs {}",
                m.frequency_hz, s.frequency_hz
            )));
        }
        let reference = if smooth_shot { shot_mean } else { s.value };
        if !(reference > 0.0) || !(m.value > 0.0) {
            return Err(Error::Domain(format!(
                "cannot normalize non-positive PSD at {} Hz",
                m.frequency_hz
            )));
        }
        bins.push(SpectrumBin {
            frequency_hz: m.frequency_hz,
            value: 10.0 * (m.value / reference).log10(),
            rbw_hz: m.rbw_hz,
            averages: m.averages,
        });
    }
    let mut out = SpectrumTrace::new(TraceUnits::ShotRelativeDb, bins)?;
    out.seams = measured.seams.clone();
    Ok(out)
}

/// Inverse of [`normalize_to_shot`] with the same flag.
pub fn denormalize_from_shot(
    normalized: &SpectrumTrace,
    shot: &SpectrumTrace,
    smooth_shot: bool,
) -> Result<SpectrumTrace> {
    if normalized.bins.len() != shot.bins.len() {
        return Err(Error::InvalidInput("bin count mismatch".into()));
    }
    if normalized.units != TraceUnits::ShotRelativeDb {
        return Err(Error::InvalidInput("expected a shot-relative trace".into()));
    }
    let shot_mean = shot.bins.iter().map(|b| b.value).sum::<f64>() / shot.bins.len() as f64;
    let bins = normalized
        .bins
        .iter()
        .zip(&shot.bins)
        .map(|(n, s)| {
            let reference = if smooth_shot { shot_mean } else { s.value };
            SpectrumBin {
                frequency_hz: n.frequency_hz,
                value: 10f64.powf(n.value / 10.0) * reference,
                rbw_hz: n.rbw_hz,
                averages: n.averages,
            }
        })
        .collect();
    let mut out = SpectrumTrace::new(TraceUnits::V2PerHz, bins)?;
    out.seams = normalized.seams.clone();
    Ok(out)
}

/// Remove the additive dark-noise contribution from a shot-relative level:
/// `V_corr = (V_meas - V_dark) / (1 - V_dark)` in linear units.
pub fn dark_correct_linear(v_meas: f64, v_dark: f64) -> Result<f64> {
    if !(v_dark >= 0.0) || v_dark >= v_meas {
        return Err(Error::Domain(format!(
            "dark level {v_dark} must be in [0, measured {v_meas})"
        )));
    }
    if v_dark >= 1.0 {
        return Err(Error::Domain(format!(
            "dark level {v_dark} is not below the shot level"
        )));
    }
    Ok((v_meas - v_dark) / (1.0 - v_dark))
}

/// dB-in, dB-out wrapper for [`dark_correct_linear`].
pub fn dark_correct_db(measured_db: f64, dark_db: f64) -> Result<f64> {
    let v = dark_correct_linear(10f64.powf(measured_db / 10.0), 10f64.powf(dark_db / 10.0))?;
    Ok(10.0 * v.log10())
}

/// Dark level (shot-relative linear) consistent with a measured/corrected
/// pair under the correction formula.
pub fn solve_dark_level(measured_db: f64, corrected_db: f64) -> Result<f64> {
    let v_m = 10f64.powf(measured_db / 10.0);
    let v_c = 10f64.powf(corrected_db / 10.0);
    if v_c >= v_m {
        return Err(Error::Domain(
            "corrected level must lie below the measured level".into(),
        ));
    }
    Ok((v_m - v_c) / (1.0 - v_c))
}

/// A noise source routed into the subtracted output.
#[derive(Debug, Clone)]
pub enum BudgetSource {
    /// Quadrature PSD entering one of the field ports (shot-relative;
    /// vacuum = 1).
    Quadrature(Port, NoisePsd),
    /// PSD added directly to the output in output units (electronic noise,
    /// already-converted jitter, ...). The label names the contribution.
    Additive(String, NoisePsd),
}

/// Compose the differential output PSD analytically:
/// `PSD(f) = Σ coeff² × source PSD(f) + additive terms`, evaluated on the
/// stitched grid of `plan`. Ports without an explicit source contribute the
/// flat vacuum floor.
pub fn analytic_budget(
    diff: &DifferentialCoefficients,
    sources: &[BudgetSource],
    plan: &SpanPlan,
) -> Result<SpectrumTrace> {
    let mut port_psd: Vec<(Port, Option<&NoisePsd>)> =
        ALL_PORTS.iter().map(|&p| (p, None)).collect();
    let mut additive: Vec<&NoisePsd> = Vec::new();
    for src in sources {
        match src {
            BudgetSource::Quadrature(port, psd) => {
                let slot = port_psd.iter_mut().find(|(p, _)| p == port).unwrap();
                if slot.1.is_some() {
                    return Err(Error::InvalidInput(format!(
                        "port {port:?} mapped by more than one source"
                    )));
                }
                slot.1 = Some(psd);
            }
            BudgetSource::Additive(_, psd) => additive.push(psd),
        }
    }

    let value_at = |f: f64| -> f64 {
        let mut total = 0.0;
        for &(port, psd) in &port_psd {
            let c = diff.port(port);
            let s = match psd {
                Some(p) => p.value_unchecked(f),
                None => 1.0,
            };
            total += c * c * s;
        }
        for psd in &additive {
            total += psd.value_unchecked(f);
        }
        total
    };

    let mut traces = Vec::with_capacity(plan.segments.len());
    for seg in &plan.segments {
        let rbw = seg.rbw_hz();
        let bins = (0..=seg.lines)
            .map(|k| {
                let f = k as f64 * rbw;
                SpectrumBin {
                    frequency_hz: f,
                    // the DC bin is discarded by stitching; evaluate off-DC
                    value: value_at(if k == 0 { rbw * 0.5 } else { f }),
                    rbw_hz: rbw,
                    averages: seg.averages,
                }
            })
            .collect();
        traces.push(SpectrumTrace::new(TraceUnits::V2PerHz, bins)?);
    }
    stitch_spans(&traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{derive_coefficients, subtract_output, HomodyneOptics, LocalOscillator, Topology};
    use crate::noise::synthesize_colored_noise;

    fn white_series(level: f64, fs: f64, duration: f64, seed: u64) -> TimeSeries {
        synthesize_colored_noise(&NoisePsd::white(level), duration, fs, seed).unwrap()
    }

    #[test]
    fn white_noise_level_is_one_over_span() {
        // unit-variance white noise sampled at fs = 2*span has PSD 1/span
        let span = 512.0;
        let fs = 2.0 * span;
        let level = 2.0 / fs; // unit variance
        let series = white_series(level, fs, 300.0, 17);
        assert!((series.variance() - 1.0).abs() < 0.05);
        let trace = welch_psd(&series, span, 256, 200).unwrap();
        let mean = trace.band_mean(4.0, span - 4.0).unwrap();
        let db = 10.0 * (mean * span).log10();
        assert!(db.abs() < 0.2, "mean level off by {db} dB");
    }

    #[test]
    fn sine_band_power_recovers_amplitude() {
        let fs = 4096.0;
        let n = 1 << 16;
        let amp = 1.7;
        let f0 = 200.0; // exactly on a bin for rbw 4 Hz
        let samples: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin())
            .collect();
        let series = TimeSeries::new(samples, fs, 0).unwrap();
        let trace = welch_psd(&series, 1024.0, 256, 20).unwrap();
        let power = trace.band_power(f0 - 10.0, f0 + 10.0);
        let want = amp * amp / 2.0;
        assert!(
            (power - want).abs() / want < 0.01,
            "band power {power} vs {want}"
        );
    }

    #[test]
    fn zero_input_gives_zero_bins() {
        let series = TimeSeries::new(vec![0.0; 4096], 1024.0, 0).unwrap();
        let trace = welch_psd(&series, 256.0, 128, 4).unwrap();
        assert!(trace.bins.iter().all(|b| b.value == 0.0));
    }

    #[test]
    fn insufficient_data_reports_required_duration() {
        let series = white_series(1.0, 1024.0, 1.0, 3);
        let err = welch_psd(&series, 256.0, 256, 100).unwrap_err();
        match err {
            Error::InsufficientData { required_s, .. } => {
                // N = 1024, hop = 512: (1024 + 99*512)/1024 s
                let want = (1024.0 + 99.0 * 512.0) / 1024.0;
                assert!((required_s - want).abs() < 1e-9, "{required_s} vs {want}");
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn welch_rejects_spans_beyond_nyquist() {
        let series = white_series(1.0, 1000.0, 2.0, 3);
        assert!(welch_psd(&series, 600.0, 100, 1).is_err());
    }

    #[test]
    fn stitch_single_trace_is_identity_minus_dc_bins() {
        let series = white_series(1.0, 4096.0, 10.0, 5);
        let trace = welch_psd(&series, 1024.0, 512, 10).unwrap();
        let stitched = stitch_spans(std::slice::from_ref(&trace)).unwrap();
        assert_eq!(stitched.bins.len(), trace.bins.len() - 2);
        assert_eq!(stitched.bins[0].frequency_hz, 2.0 * trace.bins[1].rbw_hz);
        assert!(stitched.seams.is_empty());
    }

    #[test]
    fn stitch_is_idempotent() {
        let series = white_series(1.0, 4096.0, 40.0, 5);
        let t1 = welch_psd(&series, 256.0, 128, 10).unwrap();
        let t2 = welch_psd(&series, 1024.0, 128, 10).unwrap();
        let once = stitch_spans(&[t1, t2]).unwrap();
        let twice = stitch_spans(std::slice::from_ref(&once)).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn nine_span_plan_stitches_flat() {
        // the composite runs from 62.5 mHz resolution at the bottom to 64 Hz
        // bins at the top and stays flat for synthetic flat noise
        let plan = SpanPlan::parse(
            "12.5:200:40, 50:200:40, 200:200:40, 400:200:40, 800:200:40, \
             1600:400:40, 3200:200:40, 6400:200:40, 12800:200:40",
        )
        .unwrap();
        let mut traces = Vec::new();
        for (i, seg) in plan.segments.iter().enumerate() {
            let fs = 4.0 * seg.span_hz;
            let n = (4 * seg.lines) * (seg.averages as usize + 1) / 2;
            let series = white_series(2.0, fs, n as f64 / fs + 1.0 / fs, 100 + i as u64);
            traces.push(welch_psd(&series, seg.span_hz, seg.lines, seg.averages).unwrap());
        }
        let rbws: Vec<f64> = traces.iter().map(|t| t.uniform_rbw_hz().unwrap()).collect();
        assert_eq!(rbws[0], 0.0625);
        assert_eq!(*rbws.last().unwrap(), 64.0);

        let composite = stitch_spans(&traces).unwrap();
        assert_eq!(composite.seams.len(), 8);
        assert!(composite.bins[0].frequency_hz <= 0.5);
        // flat within estimator variance: 40 averages -> sigma ~ 0.16,
        // worst of ~1100 bins stays within ~5 sigma
        for b in &composite.bins {
            let db = 10.0 * (b.value / 2.0).log10();
            assert!(db.abs() < 3.0, "{} Hz off by {db} dB", b.frequency_hz);
        }
        let mean = composite.band_mean(0.1, 12800.0).unwrap();
        assert!((10.0 * (mean / 2.0).log10()).abs() < 0.1);
    }

    #[test]
    fn gap_between_spans_is_an_error() {
        let a = SpectrumTrace::new(
            TraceUnits::V2PerHz,
            (0..=100)
                .map(|k| SpectrumBin {
                    frequency_hz: k as f64,
                    value: 1.0,
                    rbw_hz: 1.0,
                    averages: 1,
                })
                .collect(),
        )
        .unwrap();
        let b = SpectrumTrace::new(
            TraceUnits::V2PerHz,
            (500..=1000)
                .map(|k| SpectrumBin {
                    frequency_hz: k as f64,
                    value: 1.0,
                    rbw_hz: 1.0,
                    averages: 1,
                })
                .collect(),
        )
        .unwrap();
        match stitch_spans(&[a, b]).unwrap_err() {
            Error::SpanGap { from_hz, to_hz } => {
                assert_eq!(from_hz, 100.0);
                assert_eq!(to_hz, 500.0);
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn normalize_examples() {
        let series = white_series(1.0, 4096.0, 10.0, 5);
        let shot = welch_psd(&series, 1024.0, 256, 10).unwrap();
        // measured = shot -> 0 dB everywhere
        let zero = normalize_to_shot(&shot, &shot, false).unwrap();
        assert!(zero.bins.iter().all(|b| b.value.abs() < 1e-12));
        // measured = dark 20 dB below -> -20 dB
        let mut dark = shot.clone();
        for b in &mut dark.bins {
            b.value *= 0.01;
        }
        let rel = normalize_to_shot(&dark, &shot, false).unwrap();
        assert!(rel.bins.iter().all(|b| (b.value + 20.0).abs() < 1e-9));
    }

    #[test]
    fn normalize_then_denormalize_is_identity() {
        let series = white_series(1.0, 4096.0, 10.0, 5);
        let shot = welch_psd(&series, 1024.0, 256, 10).unwrap();
        let other = white_series(3.0, 4096.0, 10.0, 6);
        let measured = welch_psd(&other, 1024.0, 256, 10).unwrap();
        for smooth in [false, true] {
            let rel = normalize_to_shot(&measured, &shot, smooth).unwrap();
            let back = denormalize_from_shot(&rel, &shot, smooth).unwrap();
            for (m, b) in measured.bins.iter().zip(&back.bins) {
                assert!((m.value - b.value).abs() < 1e-12 * m.value.abs());
            }
        }
    }

    #[test]
    fn dark_correct_identity_and_errors() {
        // no dark: identity
        let v = dark_correct_linear(0.0692, 0.0).unwrap();
        assert!((v - 0.0692).abs() < 1e-15);
        // measured equal to dark: domain error
        assert!(dark_correct_linear(0.01, 0.01).is_err());
        assert!(dark_correct_db(-20.0, -20.0).is_err());
    }

    #[test]
    fn dark_correct_round_trips_the_measured_pair() {
        // clearance solved from the -11.6 / -11.9 dB pair, then verified
        let v_dark = solve_dark_level(-11.6, -11.9).unwrap();
        let clearance_db = -10.0 * v_dark.log10();
        assert!((clearance_db - 23.07).abs() < 0.05, "clearance {clearance_db}");
        let corrected = dark_correct_db(-11.6, 10.0 * v_dark.log10()).unwrap();
        assert!((corrected + 11.9).abs() < 1e-9, "corrected {corrected}");
    }

    fn balanced_diff() -> DifferentialCoefficients {
        let lo = LocalOscillator::unit_amplitude();
        let o = HomodyneOptics::new(0.5, 0.0, 1.0, 1.0).unwrap();
        let c = derive_coefficients(&lo, &o).unwrap();
        subtract_output(&c, 1.0, 1.0, Topology::VariableGain).unwrap()
    }

    fn small_plan() -> SpanPlan {
        SpanPlan::parse("800:100:10, 6400:100:10").unwrap()
    }

    #[test]
    fn budget_vacuum_only_is_flat_shot_floor() {
        let diff = balanced_diff();
        let trace = analytic_budget(&diff, &[], &small_plan()).unwrap();
        let floor = diff.shot_floor();
        assert!((floor - 1.0).abs() < 1e-12);
        assert!(trace.bins.iter().all(|b| (b.value - floor).abs() < 1e-12));
    }

    #[test]
    fn budget_rin_suppressed_by_cmrr() {
        // RIN 40 dB above shot with an 80 dB CMRR leaves the residual at
        // least 40 dB below shot and the output flat
        let lo = LocalOscillator::unit_amplitude();
        let o = HomodyneOptics::new(0.5, 0.0, 1.0, 1.0).unwrap();
        let c = derive_coefficients(&lo, &o).unwrap();
        let eps = 10f64.powf(-80.0 / 20.0);
        let g2 = c.diode1.lo * (1.0 - eps) / c.diode2.lo;
        let diff = subtract_output(&c, 1.0, g2, Topology::VariableGain).unwrap();

        let rin = NoisePsd::rin_anchored(40.0, 10.0, 1000.0);
        let sources = [BudgetSource::Quadrature(Port::LoIntensity, rin)];
        let trace = analytic_budget(&diff, &sources, &small_plan()).unwrap();
        let floor = diff.shot_floor();
        for b in &trace.bins {
            let classical = b.value - floor;
            assert!(
                classical <= floor * 1e-4,
                "classical residual at {} Hz is only {} dB below shot",
                b.frequency_hz,
                -10.0 * (classical / floor).log10()
            );
        }
    }

    #[test]
    fn budget_is_linear_in_each_source() {
        let diff = balanced_diff();
        let plan = small_plan();
        let rin1 = NoisePsd::rin_anchored(30.0, 10.0, 1000.0);
        let t1 = analytic_budget(
            &diff,
            &[BudgetSource::Quadrature(Port::LoIntensity, rin1.clone())],
            &plan,
        )
        .unwrap();
        let t2 = analytic_budget(
            &diff,
            &[BudgetSource::Quadrature(Port::LoIntensity, rin1.scaled(2.0))],
            &plan,
        )
        .unwrap();
        let base = analytic_budget(&diff, &[], &plan).unwrap();
        for ((a, b), z) in t1.bins.iter().zip(&t2.bins).zip(&base.bins) {
            let excess1 = a.value - z.value;
            let excess2 = b.value - z.value;
            assert!((excess2 - 2.0 * excess1).abs() < 1e-9 * excess1.abs().max(1e-30));
        }
    }

    #[test]
    fn budget_rejects_duplicate_port() {
        let diff = balanced_diff();
        let sources = [
            BudgetSource::Quadrature(Port::Signal, NoisePsd::white(0.5)),
            BudgetSource::Quadrature(Port::Signal, NoisePsd::white(0.7)),
        ];
        assert!(analytic_budget(&diff, &sources, &small_plan()).is_err());
    }

    #[test]
    fn doubling_averages_halves_estimator_variance() {
        // variance of bin estimates, averaged over bins and 100 trials
        let span = 256.0;
        let fs = 1024.0;
        let (lines, a1, a2) = (64, 8u32, 16u32);
        let bins_lo = 5;
        let bins_hi = 60;
        let mean_var = |averages: u32, seed0: u64| -> f64 {
            let n = fs as usize / (span as usize / lines) * (averages as usize + 1) / 2;
            let trials: Vec<Vec<f64>> = (0..100)
                .map(|t| {
                    let s = white_series(1.0, fs, n as f64 / fs + 0.01, seed0 + t);
                    welch_psd(&s, span, lines, averages).unwrap().values()
                })
                .collect();
            let mut acc = 0.0;
            for k in bins_lo..bins_hi {
                let vals: Vec<f64> = trials.iter().map(|t| t[k]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                acc += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            }
            acc / (bins_hi - bins_lo) as f64
        };
        let v1 = mean_var(a1, 1000);
        let v2 = mean_var(a2, 5000);
        let ratio = v1 / v2;
        assert!((ratio - 2.0).abs() < 0.4, "variance ratio {ratio}, expected 2");
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let series = white_series(1.0, 4096.0, 10.0, 5);
        let t1 = welch_psd(&series, 256.0, 128, 10).unwrap();
        let t2 = welch_psd(&series, 1024.0, 128, 10).unwrap();
        let stitched = stitch_spans(&[t1, t2]).unwrap();
        let mut buf = Vec::new();
        stitched.to_csv(&mut buf).unwrap();
        let back = SpectrumTrace::from_csv(&buf[..]).unwrap();
        assert_eq!(stitched.bins, back.bins);
        assert_eq!(stitched.units, back.units);
        assert_eq!(stitched.seams, back.seams);
    }

    #[test]
    fn span_plan_validation() {
        assert!(SpanPlan::parse("800:800:200, 400:800:200").is_err());
        assert!(SpanPlan::parse("800:1:200").is_err());
        assert!(SpanPlan::parse("").is_err());
        let ok = SpanPlan::parse("800:800:200, 6400:800:200").unwrap();
        assert_eq!(ok.segments.len(), 2);
        assert_eq!(ok.max_span_hz(), 6400.0);
    }
}
