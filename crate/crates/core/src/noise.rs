//! Parametric noise models and time-domain generators.
//!
//! Every stationary source in the simulator is described by a [`NoisePsd`],
//! a one-sided power spectral density that can be evaluated at any positive
//! frequency, integrated over a band, and realized as a Gaussian time series
//! with [`synthesize_colored_noise`]. Dust-induced loss transients are a
//! separate, non-stationary process ([`DustEventProcess`]).
//!
//! Conventions: one-sided PSDs throughout; all dB values are power dB
//! (10 log10 of PSD ratios).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// One-sided power spectral density model of a stationary noise source.
///
/// Levels are in units²/Hz of whatever quantity the source describes
/// (volts, metres, shot-relative quadrature power, ...).
#[derive(Debug, Clone, PartialEq)]
pub enum NoisePsd {
    /// Flat spectrum.
    White { level: f64 },
    /// `level * (reference_hz / f)^exponent`. Exponent 1 is flicker.
    OneOverF {
        level: f64,
        reference_hz: f64,
        exponent: f64,
    },
    /// Relative-intensity-noise shape: a plateau at low frequency decaying
    /// first-order to a flat floor above the corner.
    Rin {
        plateau: f64,
        corner_hz: f64,
        floor: f64,
    },
    /// Single-pole bump or dip: `amplitude / (1 + (f/corner)^2)`. The
    /// amplitude may be negative when part of a composite whose total stays
    /// non-negative (used for squeezed-quadrature spectra).
    Lorentzian { amplitude: f64, corner_hz: f64 },
    /// `gain * inner(f) / (1 + (f/pole)^2)` — a cavity-transmitted residue.
    LowPassed {
        inner: Box<NoisePsd>,
        pole_hz: f64,
        gain: f64,
    },
    /// `inner(f) * (1 - gain / (1 + (f/pole)^2))` — the power the low-pass
    /// rejected. Requires `gain <= 1`.
    LowPassComplement {
        inner: Box<NoisePsd>,
        pole_hz: f64,
        gain: f64,
    },
    /// `factor * inner(f)`.
    Scaled { inner: Box<NoisePsd>, factor: f64 },
    /// Sum of components.
    Composite(Vec<NoisePsd>),
}

impl NoisePsd {
    pub fn white(level: f64) -> Self {
        NoisePsd::White { level }
    }

    /// Flicker-style spectrum with exponent 1.
    pub fn one_over_f(level: f64, reference_hz: f64) -> Self {
        NoisePsd::OneOverF {
            level,
            reference_hz,
            exponent: 1.0,
        }
    }

    /// RIN model anchored so that the value at `anchor_hz` sits exactly
    /// `db_above_floor` dB above the flat floor (floor = 1 in shot-relative
    /// units).
    pub fn rin_anchored(db_above_floor: f64, anchor_hz: f64, corner_hz: f64) -> Self {
        let floor = 1.0;
        let target = floor * 10f64.powf(db_above_floor / 10.0);
        let plateau = (target - floor) * (1.0 + (anchor_hz / corner_hz).powi(2));
        NoisePsd::Rin {
            plateau,
            corner_hz,
            floor,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        NoisePsd::Scaled {
            inner: Box::new(self),
            factor,
        }
    }

    /// Evaluate the PSD at `f_hz`. Errors for `f_hz <= 0`.
    pub fn value_at(&self, f_hz: f64) -> Result<f64> {
        if !(f_hz > 0.0) {
            return Err(Error::Domain(format!(
                "PSD evaluation requires f > 0, got {f_hz}"
            )));
        }
        Ok(self.value_unchecked(f_hz))
    }

    pub(crate) fn value_unchecked(&self, f: f64) -> f64 {
        match self {
            NoisePsd::White { level } => *level,
            NoisePsd::OneOverF {
                level,
                reference_hz,
                exponent,
            } => level * (reference_hz / f).powf(*exponent),
            NoisePsd::Rin {
                plateau,
                corner_hz,
                floor,
            } => floor + plateau / (1.0 + (f / corner_hz).powi(2)),
            NoisePsd::Lorentzian {
                amplitude,
                corner_hz,
            } => amplitude / (1.0 + (f / corner_hz).powi(2)),
            NoisePsd::LowPassed {
                inner,
                pole_hz,
                gain,
            } => gain * inner.value_unchecked(f) / (1.0 + (f / pole_hz).powi(2)),
            NoisePsd::LowPassComplement {
                inner,
                pole_hz,
                gain,
            } => inner.value_unchecked(f) * (1.0 - gain / (1.0 + (f / pole_hz).powi(2))),
            NoisePsd::Scaled { inner, factor } => factor * inner.value_unchecked(f),
            NoisePsd::Composite(parts) => parts.iter().map(|p| p.value_unchecked(f)).sum(),
        }
    }

    /// Integrated power over `[f1, f2]`, closed-form where available and
    /// log-spaced Simpson quadrature otherwise.
    pub fn band_power(&self, f1_hz: f64, f2_hz: f64) -> Result<f64> {
        if !(f1_hz > 0.0) || !(f2_hz > f1_hz) {
            return Err(Error::Domain(format!(
                "band must satisfy 0 < f1 < f2, got [{f1_hz}, {f2_hz}]"
            )));
        }
        Ok(self.band_power_inner(f1_hz, f2_hz))
    }

    fn band_power_inner(&self, f1: f64, f2: f64) -> f64 {
        match self {
            NoisePsd::White { level } => level * (f2 - f1),
            NoisePsd::OneOverF {
                level,
                reference_hz,
                exponent,
            } => {
                let e = *exponent;
                let scale = level * reference_hz.powf(e);
                if (e - 1.0).abs() < 1e-12 {
                    scale * (f2 / f1).ln()
                } else {
                    scale * (f2.powf(1.0 - e) - f1.powf(1.0 - e)) / (1.0 - e)
                }
            }
            NoisePsd::Rin {
                plateau,
                corner_hz,
                floor,
            } => {
                floor * (f2 - f1)
                    + plateau * corner_hz * ((f2 / corner_hz).atan() - (f1 / corner_hz).atan())
            }
            NoisePsd::Lorentzian {
                amplitude,
                corner_hz,
            } => amplitude * corner_hz * ((f2 / corner_hz).atan() - (f1 / corner_hz).atan()),
            NoisePsd::Scaled { inner, factor } => factor * inner.band_power_inner(f1, f2),
            NoisePsd::Composite(parts) => {
                parts.iter().map(|p| p.band_power_inner(f1, f2)).sum()
            }
            _ => integrate_log_simpson(|f| self.value_unchecked(f), f1, f2),
        }
    }
}

/// Simpson quadrature on a log-frequency grid; adequate for the smooth
/// single-pole shapes that lack closed forms.
fn integrate_log_simpson(psd: impl Fn(f64) -> f64, f1: f64, f2: f64) -> f64 {
    let decades = (f2 / f1).log10().max(1e-3);
    let mut panels = ((decades * 64.0).ceil() as usize).clamp(64, 4096);
    panels += panels % 2; // composite Simpson needs an even panel count
    let (u1, u2) = (f1.ln(), f2.ln());
    let h = (u2 - u1) / panels as f64;
    // integrand in log space: S(e^u) * e^u
    let g = |u: f64| {
        let f = u.exp();
        psd(f) * f
    };
    let mut acc = g(u1) + g(u2);
    for i in 1..panels {
        let w = if i % 2 == 0 { 2.0 } else { 4.0 };
        acc += w * g(u1 + i as f64 * h);
    }
    acc * h / 3.0
}

/// Uniformly sampled real-valued record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    /// Generation provenance.
    pub seed: u64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, seed: u64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "time series needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::Domain(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !samples.iter().all(|s| s.is_finite()) {
            return Err(Error::InvalidInput("time series contains non-finite samples".into()));
        }
        Ok(TimeSeries {
            samples,
            sample_rate_hz,
            seed,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / self.samples.len() as f64
    }
}

/// Mixes a 64-bit stream id into a master seed (splitmix64 round), giving
/// every generator in a run its own deterministic substream.
pub fn substream_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Generate a Gaussian time series whose one-sided PSD matches `model`.
///
/// Frequency-domain synthesis: each positive-frequency bin gets an
/// independent complex Gaussian amplitude scaled to the target PSD, the DC
/// bin is zeroed, and an inverse FFT produces the record. Deterministic for
/// a fixed seed.
pub fn synthesize_colored_noise(
    model: &NoisePsd,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if !(sample_rate_hz > 0.0) || !(duration_s > 0.0) {
        return Err(Error::Domain(
            "duration and sample rate must be positive".into(),
        ));
    }
    let mut n = (duration_s * sample_rate_hz).round() as usize;
    n += n % 2; // even length keeps the Nyquist bin well-defined
    if n < 16 {
        return Err(Error::InvalidInput(format!(
            "duration * rate must give at least 16 samples, got {n}"
        )));
    }
    let fs = sample_rate_hz;
    let df = fs / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];

    for k in 1..n / 2 {
        let f = k as f64 * df;
        let s = model.value_unchecked(f).max(0.0);
        let scale = (s * fs * n as f64 / 4.0).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        spectrum[k] = Complex::new(a * scale, b * scale);
        spectrum[n - k] = spectrum[k].conj();
    }
    // Nyquist bin is real; its one-sided power is not halved.
    let s_nyq = model.value_unchecked(fs / 2.0).max(0.0);
    let a: f64 = rng.sample(StandardNormal);
    spectrum[n / 2] = Complex::new(a * (s_nyq * fs * n as f64).sqrt(), 0.0);

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    ifft.process(&mut spectrum);

    let inv_n = 1.0 / n as f64;
    let samples: Vec<f64> = spectrum.iter().map(|c| c.re * inv_n).collect();
    TimeSeries::new(samples, fs, seed)
}

/// Scalar sampling distribution for event parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleDist {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl SampleDist {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            SampleDist::Fixed(v) => v,
            SampleDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            SampleDist::LogUniform { lo, hi } => {
                (rng.random_range(lo.ln()..=hi.ln())).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseShape {
    RaisedCosine,
    Rectangular,
}

/// Poisson process of dust transits through one homodyne arm. Each event
/// momentarily raises the arm loss by its depth.
#[derive(Debug, Clone)]
pub struct DustEventProcess {
    pub rate_hz: f64,
    pub depth: SampleDist,
    pub duration: SampleDist,
    pub pulse: PulseShape,
}

impl Default for DustEventProcess {
    /// Event durations are drawn log-uniform over 10–500 ms so event energy
    /// sits at the sub-100 Hz frequencies characteristic of particle
    /// transits; depths span the observed 0.1–1.2 % range.
    fn default() -> Self {
        DustEventProcess {
            rate_hz: 0.2,
            depth: SampleDist::LogUniform {
                lo: 1e-3,
                hi: 1.2e-2,
            },
            duration: SampleDist::LogUniform { lo: 0.01, hi: 0.5 },
            pulse: PulseShape::RaisedCosine,
        }
    }
}

/// Loss traces stay strictly below full extinction.
const MAX_LOSS: f64 = 1.0 - 1e-9;

/// Sample a time-dependent loss trace η_l(t): baseline 0, each event adds
/// its pulse, overlaps sum and clamp below 1.
pub fn sample_dust_events(
    proc: &DustEventProcess,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if !(duration_s > 0.0) || !(sample_rate_hz > 0.0) {
        return Err(Error::Domain(
            "duration and sample rate must be positive".into(),
        ));
    }
    let n = ((duration_s * sample_rate_hz).round() as usize).max(2);
    let mut trace = vec![0.0f64; n];
    if proc.rate_hz > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = proc.rate_hz * duration_s;
        let n_events = Poisson::new(lambda)
            .map_err(|e| Error::Domain(format!("bad dust rate: {e}")))?
            .sample(&mut rng) as usize;
        for _ in 0..n_events {
            let t0 = rng.random_range(0.0..duration_s);
            let depth = proc.depth.sample(&mut rng);
            let dur = proc.duration.sample(&mut rng).max(2.0 / sample_rate_hz);
            add_pulse(&mut trace, sample_rate_hz, t0, depth, dur, proc.pulse);
        }
        for s in &mut trace {
            *s = s.min(MAX_LOSS);
        }
    }
    TimeSeries::new(trace, sample_rate_hz, seed)
}

/// Deposit a single dust pulse; exposed for scripted event tests.
pub fn add_pulse(
    trace: &mut [f64],
    sample_rate_hz: f64,
    t0_s: f64,
    depth: f64,
    duration_s: f64,
    pulse: PulseShape,
) {
    let i0 = (t0_s * sample_rate_hz).floor().max(0.0) as usize;
    let i1 = (((t0_s + duration_s) * sample_rate_hz).ceil() as usize).min(trace.len());
    for i in i0..i1 {
        let t = i as f64 / sample_rate_hz - t0_s;
        if t < 0.0 || t > duration_s {
            continue;
        }
        let v = match pulse {
            PulseShape::Rectangular => depth,
            PulseShape::RaisedCosine => {
                depth * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t / duration_s).cos())
            }
        };
        trace[i] = (trace[i] + v).min(MAX_LOSS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_psd_is_flat() {
        let m = NoisePsd::white(1.0);
        for f in [0.1, 1.0, 42.0, 1e6] {
            assert_eq!(m.value_at(f).unwrap(), 1.0);
        }
    }

    #[test]
    fn psd_rejects_nonpositive_frequency() {
        let m = NoisePsd::white(1.0);
        assert!(m.value_at(0.0).is_err());
        assert!(m.value_at(-1.0).is_err());
    }

    #[test]
    fn one_over_f_rises_20_db_per_decade() {
        // level chosen so the value at 1 kHz equals the shot floor (1.0);
        // at 10 Hz the 1/f law puts it 20 dB above.
        let m = NoisePsd::one_over_f(1.0, 1000.0);
        let at_1k = m.value_at(1000.0).unwrap();
        let at_10 = m.value_at(10.0).unwrap();
        assert!((at_1k - 1.0).abs() < 1e-12);
        let db = 10.0 * (at_10 / at_1k).log10();
        assert!((db - 20.0).abs() < 1e-9, "got {db} dB");
    }

    #[test]
    fn rin_anchor_is_exact() {
        // LO intensity noise 40 dB above shot at 10 Hz (0.65 uW field).
        let m = NoisePsd::rin_anchored(40.0, 10.0, 1000.0);
        let ratio = m.value_at(10.0).unwrap() / 1.0;
        assert!((ratio - 1e4).abs() / 1e4 < 1e-12, "got {ratio}");
        // decays towards the floor above the corner
        let hi = m.value_at(1e5).unwrap();
        assert!(hi < 2.0, "got {hi}");
    }

    #[test]
    fn band_power_matches_quadrature() {
        let models = [
            NoisePsd::white(0.3),
            NoisePsd::one_over_f(2.0, 100.0),
            NoisePsd::OneOverF {
                level: 1.5,
                reference_hz: 50.0,
                exponent: 2.0,
            },
            NoisePsd::Rin {
                plateau: 100.0,
                corner_hz: 30.0,
                floor: 1.0,
            },
            NoisePsd::Composite(vec![
                NoisePsd::white(0.1),
                NoisePsd::Lorentzian {
                    amplitude: 5.0,
                    corner_hz: 80.0,
                },
            ]),
        ];
        for m in &models {
            let closed = m.band_power(0.5, 2000.0).unwrap();
            let numeric = integrate_log_simpson(|f| m.value_unchecked(f), 0.5, 2000.0);
            assert!(
                (closed - numeric).abs() / numeric.abs() < 1e-6,
                "{m:?}: {closed} vs {numeric}"
            );
            assert!(closed.is_finite());
        }
    }

    #[test]
    fn band_power_finite_on_any_band() {
        let m = NoisePsd::Composite(vec![
            NoisePsd::one_over_f(1.0, 1.0),
            NoisePsd::white(1e-3),
        ]);
        for (f1, f2) in [(1e-4, 1e-2), (0.1, 10.0), (100.0, 1e7)] {
            assert!(m.band_power(f1, f2).unwrap().is_finite());
        }
    }

    #[test]
    fn white_noise_variance_matches_parseval() {
        // White level L over [0, fs/2] integrates to L * fs / 2.
        let fs = 4096.0;
        let level = 0.25;
        let ts =
            synthesize_colored_noise(&NoisePsd::white(level), 64.0, fs, 7).unwrap();
        let expected = level * fs / 2.0;
        let got = ts.variance();
        let db = 10.0 * (got / expected).log10();
        assert!(db.abs() < 0.2, "variance off by {db} dB");
    }

    #[test]
    fn one_over_f_synthesis_slope() {
        let fs = 8192.0;
        let ts = synthesize_colored_noise(&NoisePsd::one_over_f(1.0, 1.0), 64.0, fs, 3).unwrap();
        // crude periodogram slope check between 1 Hz and 1 kHz via octave-band powers
        let n = ts.len();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut buf: Vec<Complex<f64>> =
            ts.samples().iter().map(|&x| Complex::new(x, 0.0)).collect();
        fft.process(&mut buf);
        let df = fs / n as f64;
        // log-log regression on octave-averaged powers
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut f_lo = 1.0;
        while f_lo < 1000.0 {
            let f_hi = f_lo * 2.0;
            let (k_lo, k_hi) = ((f_lo / df) as usize, (f_hi / df) as usize);
            let mean_p: f64 = buf[k_lo..k_hi].iter().map(|c| c.norm_sqr()).sum::<f64>()
                / (k_hi - k_lo) as f64;
            xs.push(((f_lo * f_hi).sqrt()).ln());
            ys.push(mean_p.ln());
            f_lo = f_hi;
        }
        let nn = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / nn;
        let my = ys.iter().sum::<f64>() / nn;
        let slope: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.1, "log-log slope {slope}");
    }

    #[test]
    fn synthesis_is_deterministic() {
        let m = NoisePsd::one_over_f(0.5, 10.0);
        let a = synthesize_colored_noise(&m, 2.0, 1024.0, 99).unwrap();
        let b = synthesize_colored_noise(&m, 2.0, 1024.0, 99).unwrap();
        assert_eq!(a.samples(), b.samples());
        let c = synthesize_colored_noise(&m, 2.0, 1024.0, 100).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn synthesis_rejects_tiny_records() {
        let err = synthesize_colored_noise(&NoisePsd::white(1.0), 0.001, 1000.0, 1);
        assert!(err.is_err());
    }

    #[test]
    fn stationarity_of_disjoint_halves() {
        let fs = 2048.0;
        let m = NoisePsd::Composite(vec![
            NoisePsd::white(1.0),
            NoisePsd::one_over_f(5.0, 1.0),
        ]);
        let ts = synthesize_colored_noise(&m, 128.0, fs, 11).unwrap();
        let n = ts.len();
        let first = &ts.samples()[..n / 2];
        let second = &ts.samples()[n / 2..];
        let var = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64
        };
        let (v1, v2) = (var(first), var(second));
        // variance-of-variance for Gaussian data ~ 2 v^2 / n_eff; colored data
        // has fewer effective samples, so allow a generous 5 sigma with
        // n_eff = n / 64.
        let sigma = (2.0 / (n as f64 / 64.0)).sqrt() * v1;
        assert!(
            (v1 - v2).abs() < 5.0 * sigma,
            "halves disagree: {v1} vs {v2} (sigma {sigma})"
        );
    }

    #[test]
    fn dust_rate_zero_is_silent() {
        let proc = DustEventProcess {
            rate_hz: 0.0,
            ..Default::default()
        };
        let ts = sample_dust_events(&proc, 5.0, 1000.0, 1).unwrap();
        assert!(ts.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_event_peak_equals_depth() {
        // A 1.2 % depth event on a 5.7 V DC channel dips by 0.068 V ~ 0.07 V;
        // a typical 0.18 % event dips by 0.010 V.
        let fs = 2000.0;
        let mut trace = vec![0.0; 2000];
        add_pulse(&mut trace, fs, 0.3, 0.012, 0.2, PulseShape::RaisedCosine);
        let peak = trace.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 0.012).abs() < 1e-6);
        let dip_v = 5.7 * peak;
        assert!((dip_v - 0.07).abs() < 0.005, "got {dip_v} V");

        let mut trace = vec![0.0; 2000];
        add_pulse(&mut trace, fs, 0.3, 0.0018, 0.2, PulseShape::RaisedCosine);
        let dip_v = 5.7 * trace.iter().cloned().fold(0.0, f64::max);
        assert!((dip_v - 0.010).abs() < 0.001, "got {dip_v} V");
    }

    #[test]
    fn dust_trace_bounded() {
        let proc = DustEventProcess {
            rate_hz: 50.0,
            depth: SampleDist::Fixed(0.4),
            duration: SampleDist::Fixed(0.5),
            pulse: PulseShape::Rectangular,
        };
        let ts = sample_dust_events(&proc, 10.0, 500.0, 21).unwrap();
        assert!(ts.samples().iter().all(|&s| (0.0..1.0).contains(&s)));
        // heavy overlap must actually hit the clamp for this to test anything
        assert!(ts.samples().iter().any(|&s| s > 0.9));
    }

    #[test]
    fn dust_sampling_is_deterministic() {
        let proc = DustEventProcess::default();
        let a = sample_dust_events(&proc, 30.0, 1000.0, 5).unwrap();
        let b = sample_dust_events(&proc, 30.0, 1000.0, 5).unwrap();
        assert_eq!(a.samples(), b.samples());
    }
}
