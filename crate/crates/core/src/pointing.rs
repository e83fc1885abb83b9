//! Beam-pointing coupling: spatially non-uniform photodiode efficiency
//! turns beam jitter into photocurrent noise, and the modecleaner cavity
//! turns jitter into common-mode intensity noise that the subtraction can
//! remove.
//!
//! The photodiode surface is a sampled efficiency grid; a Gaussian beam
//! probes it through an overlap integral. Per-cell Gaussian weights use
//! exact erf differences, so the quadrature is exact for the
//! piecewise-constant map.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::noise::NoisePsd;

/// Quantum efficiency sampled on a rectangular grid covering the active
/// area, centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotodiodeMap {
    rows: usize,
    cols: usize,
    pitch_m: f64,
    pub nominal: f64,
    /// Row-major efficiencies.
    eta: Vec<f64>,
}

impl PhotodiodeMap {
    pub fn new(rows: usize, cols: usize, pitch_m: f64, nominal: f64, eta: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidInput(format!(
                "map needs at least 2x2 cells, got {rows}x{cols}"
            )));
        }
        if eta.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "map data length {} does not match {rows}x{cols}",
                eta.len()
            )));
        }
        if !(pitch_m > 0.0) {
            return Err(Error::Domain(format!("pitch must be positive, got {pitch_m}")));
        }
        if !eta.iter().all(|&e| (0.0..=1.0).contains(&e)) {
            return Err(Error::Domain(
                "map efficiencies must all lie in [0, 1]".into(),
            ));
        }
        Ok(PhotodiodeMap {
            rows,
            cols,
            pitch_m,
            nominal,
            eta,
        })
    }

    pub fn uniform(rows: usize, cols: usize, pitch_m: f64, eta: f64) -> Result<Self> {
        PhotodiodeMap::new(rows, cols, pitch_m, eta, vec![eta; rows * cols])
    }

    /// η(x, y) = η₀ (1 + γ x), clamped into [0, 1].
    pub fn linear_gradient(
        rows: usize,
        cols: usize,
        pitch_m: f64,
        eta0: f64,
        gamma_per_m: f64,
    ) -> Result<Self> {
        let mut eta = Vec::with_capacity(rows * cols);
        for _i in 0..rows {
            for j in 0..cols {
                let x = (j as f64 + 0.5 - cols as f64 / 2.0) * pitch_m;
                eta.push((eta0 * (1.0 + gamma_per_m * x)).clamp(0.0, 1.0));
            }
        }
        PhotodiodeMap::new(rows, cols, pitch_m, eta0, eta)
    }

    /// Smoothed-white-noise inhomogeneity with the given rms ripple and
    /// correlation length; stands in for unmeasured real surfaces.
    pub fn synthetic(
        rows: usize,
        cols: usize,
        pitch_m: f64,
        nominal: f64,
        ripple_rms: f64,
        correlation_length_m: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid: Vec<f64> = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        // separable Gaussian smoothing
        let sigma_cells = (correlation_length_m / pitch_m).max(1e-6);
        let half = (4.0 * sigma_cells).ceil() as isize;
        let kernel: Vec<f64> = (-half..=half)
            .map(|k| (-0.5 * (k as f64 / sigma_cells).powi(2)).exp())
            .collect();
        let ksum: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / ksum).collect();
        let convolve = |src: &[f64], stride: usize, len: usize, line0: usize| -> Vec<f64> {
            (0..len)
                .map(|i| {
                    kernel
                        .iter()
                        .enumerate()
                        .map(|(kk, &w)| {
                            let off = kk as isize - half;
                            let idx = (i as isize + off).clamp(0, len as isize - 1) as usize;
                            w * src[line0 + idx * stride]
                        })
                        .sum()
                })
                .collect()
        };
        // rows then columns
        let mut tmp = vec![0.0; rows * cols];
        for r in 0..rows {
            let line = convolve(&grid, 1, cols, r * cols);
            tmp[r * cols..(r + 1) * cols].copy_from_slice(&line);
        }
        for c in 0..cols {
            let line = convolve(&tmp, cols, rows, c);
            for (r, v) in line.iter().enumerate() {
                grid[r * cols + c] = *v;
            }
        }
        let mean = grid.iter().sum::<f64>() / grid.len() as f64;
        let rms = (grid.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / grid.len() as f64)
            .sqrt()
            .max(1e-300);
        let eta: Vec<f64> = grid
            .iter()
            .map(|g| (nominal + (g - mean) / rms * ripple_rms).clamp(0.0, 1.0))
            .collect();
        PhotodiodeMap::new(rows, cols, pitch_m, nominal, eta)
    }

    /// Zero out a disc of the surface (a dead region).
    pub fn with_dead_disc(mut self, center_x_m: f64, center_y_m: f64, radius_m: f64) -> Self {
        for i in 0..self.rows {
            for j in 0..self.cols {
                let x = (j as f64 + 0.5 - self.cols as f64 / 2.0) * self.pitch_m;
                let y = (i as f64 + 0.5 - self.rows as f64 / 2.0) * self.pitch_m;
                if (x - center_x_m).hypot(y - center_y_m) <= radius_m {
                    self.eta[i * self.cols + j] = 0.0;
                }
            }
        }
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pitch_m(&self) -> f64 {
        self.pitch_m
    }

    pub fn eta_at(&self, row: usize, col: usize) -> f64 {
        self.eta[row * self.cols + col]
    }

    /// Half-extent of the active area in x and y.
    pub fn half_extent_m(&self) -> (f64, f64) {
        (
            self.cols as f64 * self.pitch_m / 2.0,
            self.rows as f64 * self.pitch_m / 2.0,
        )
    }

    /// Plain-text format: header `rows cols pitch_m`, then row-major values.
    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.rows, self.cols, self.pitch_m)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| format!("{}", self.eta[r * self.cols + c]))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn to_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.to_writer(std::fs::File::create(path)?)
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty map file".into()))??;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 {
            return Err(Error::InvalidInput(
                "map header must be `rows cols pitch_m`".into(),
            ));
        }
        let rows: usize = head[0]
            .parse()
            .map_err(|e| Error::InvalidInput(format!("bad rows: {e}")))?;
        let cols: usize = head[1]
            .parse()
            .map_err(|e| Error::InvalidInput(format!("bad cols: {e}")))?;
        let pitch: f64 = head[2]
            .parse()
            .map_err(|e| Error::InvalidInput(format!("bad pitch: {e}")))?;
        let mut eta = Vec::with_capacity(rows * cols);
        for line in lines {
            for tok in line?.split_whitespace() {
                eta.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad efficiency value: {e}")))?,
                );
            }
        }
        let nominal = eta.iter().sum::<f64>() / eta.len().max(1) as f64;
        PhotodiodeMap::new(rows, cols, pitch, nominal, eta)
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        PhotodiodeMap::from_reader(std::fs::File::open(path)?)
    }
}

/// Gaussian beam hitting the diode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamProfile {
    pub waist_m: f64,
    pub center_x_m: f64,
    pub center_y_m: f64,
    pub power_w: f64,
}

impl BeamProfile {
    pub fn new(waist_m: f64, center_x_m: f64, center_y_m: f64, power_w: f64) -> Result<Self> {
        if !(waist_m > 0.0) {
            return Err(Error::Domain(format!("waist must be positive, got {waist_m}")));
        }
        Ok(BeamProfile {
            waist_m,
            center_x_m,
            center_y_m,
            power_w,
        })
    }
}

/// Per-axis integrals of the normalized Gaussian intensity over the cell
/// edges; the 2-D cell weight is the product.
fn axis_weights(n: usize, pitch: f64, center: f64, waist: f64) -> Vec<f64> {
    let s = std::f64::consts::SQRT_2 / waist;
    let edge = |k: usize| (k as f64 - n as f64 / 2.0) * pitch;
    let mut erfs = Vec::with_capacity(n + 1);
    for k in 0..=n {
        erfs.push(libm::erf(s * (edge(k) - center)));
    }
    (0..n).map(|k| 0.5 * (erfs[k + 1] - erfs[k])).collect()
}

/// Fraction of the beam power inside the active area.
pub fn geometric_overlap(map: &PhotodiodeMap, beam: &BeamProfile) -> f64 {
    let (hx, hy) = map.half_extent_m();
    let s = std::f64::consts::SQRT_2 / beam.waist_m;
    let ox = 0.5 * (libm::erf(s * (hx - beam.center_x_m)) - libm::erf(s * (-hx - beam.center_x_m)));
    let oy = 0.5 * (libm::erf(s * (hy - beam.center_y_m)) - libm::erf(s * (-hy - beam.center_y_m)));
    ox * oy
}

const MIN_OVERLAP: f64 = 0.99;

/// Effective quantum efficiency: ∫ η(x,y) |u(x−x₀, y−y₀)|² dx dy.
///
/// Errors if less than 99 % of the beam power lands on the active area.
pub fn response(map: &PhotodiodeMap, beam: &BeamProfile) -> Result<f64> {
    let overlap = geometric_overlap(map, beam);
    if overlap < MIN_OVERLAP {
        return Err(Error::BeamClipped { overlap });
    }
    let wx = axis_weights(map.cols, map.pitch_m, beam.center_x_m, beam.waist_m);
    let wy = axis_weights(map.rows, map.pitch_m, beam.center_y_m, beam.waist_m);
    let mut total = 0.0;
    for (i, wyi) in wy.iter().enumerate() {
        if *wyi == 0.0 {
            continue;
        }
        let row = &map.eta[i * map.cols..(i + 1) * map.cols];
        let line: f64 = row.iter().zip(&wx).map(|(e, w)| e * w).sum();
        total += wyi * line;
    }
    Ok(total)
}

/// Sensitivity of the effective efficiency to beam translation, 1/m per
/// axis, by central finite difference with step waist/100.
pub fn pointing_coefficient(map: &PhotodiodeMap, beam: &BeamProfile) -> Result<(f64, f64)> {
    let h = beam.waist_m / 100.0;
    let shifted = |dx: f64, dy: f64| BeamProfile {
        center_x_m: beam.center_x_m + dx,
        center_y_m: beam.center_y_m + dy,
        ..*beam
    };
    let gx = (response(map, &shifted(h, 0.0))? - response(map, &shifted(-h, 0.0))?) / (2.0 * h);
    let gy = (response(map, &shifted(0.0, h))? - response(map, &shifted(0.0, -h))?) / (2.0 * h);
    Ok((gx, gy))
}

/// Displacement noise of the beam axis.
#[derive(Debug, Clone)]
pub struct JitterProcess {
    /// One-sided displacement PSD, m²/Hz.
    pub displacement_psd: NoisePsd,
}

/// Spatial-mode filter cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModecleanerCavity {
    pub linewidth_hz: f64,
    /// Power suppression of higher-order modes; 1 disables the cavity.
    pub hom_suppression: f64,
}

impl ModecleanerCavity {
    pub fn new(linewidth_hz: f64, hom_suppression: f64) -> Result<Self> {
        if !(linewidth_hz > 0.0) {
            return Err(Error::Domain(format!(
                "linewidth must be positive, got {linewidth_hz}"
            )));
        }
        if !(hom_suppression >= 1.0) {
            return Err(Error::Domain(format!(
                "hom_suppression must be >= 1, got {hom_suppression}"
            )));
        }
        Ok(ModecleanerCavity {
            linewidth_hz,
            hom_suppression,
        })
    }
}

/// Split jitter at the cavity: the transmitted residue is attenuated by the
/// higher-order-mode suppression and low-passed at half the linewidth; the
/// rejected power reappears as intensity noise on the transmitted beam,
/// common to both homodyne arms. The pair conserves the input power
/// band-for-band.
///
/// Returns `(residual jitter PSD, converted common intensity PSD)`, both in
/// displacement units; divide the converted part by the beam waist squared
/// for relative intensity.
pub fn modecleaner_filter(
    jitter: &JitterProcess,
    cavity: &ModecleanerCavity,
) -> (NoisePsd, NoisePsd) {
    if cavity.hom_suppression == 1.0 {
        // no cavity: jitter passes unchanged, nothing is converted
        return (jitter.displacement_psd.clone(), NoisePsd::white(0.0));
    }
    let pole = cavity.linewidth_hz / 2.0;
    let gain = 1.0 / cavity.hom_suppression;
    let residual = NoisePsd::LowPassed {
        inner: Box::new(jitter.displacement_psd.clone()),
        pole_hz: pole,
        gain,
    };
    let converted = NoisePsd::LowPassComplement {
        inner: Box::new(jitter.displacement_psd.clone()),
        pole_hz: pole,
        gain,
    };
    (residual, converted)
}
