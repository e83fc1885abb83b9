//! Linearized two-port homodyne field algebra: effective fields on the two
//! photodiodes, photocurrent coupling coefficients, subtraction, CMRR, and
//! balancing.
//!
//! A bright local oscillator `A = α + δa` and a zero-mean signal field
//! `B = δb` interfere on a beamsplitter of power splitting ratio η_bs. One
//! arm carries an extra loss η_l; each diode has quantum efficiency η_d.
//! Vacuum enters through every loss port (V0 for the arm loss, V1/V2 for
//! the diode inefficiencies). Linearizing F†F of each effective field gives
//! one DC term and one coefficient per fluctuation port; those coefficients
//! are the currency of the whole noise budget.
//!
//! Coefficients are computed by expanding the effective fields directly
//! rather than transcribing printed photocurrent formulas; the signal-port
//! term comes out proportional to (1 − η_l), not sqrt(1 − η_l).
//!
//! DC terms are stored α²-normalized and fluctuation coefficients carry one
//! factor of α, so shot-noise consistency reads Σ coeff² = dc · α².

use crate::consts::photon_energy_j;
use crate::error::{Error, Result};
use crate::squeezing::OpoParams;

/// Local oscillator: a bright carrier at 1064 nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOscillator {
    /// Carrier amplitude α in sqrt(photons/s).
    pub amplitude_alpha: f64,
    pub power_w: f64,
}

impl LocalOscillator {
    pub fn from_power(power_w: f64) -> Result<Self> {
        if !(power_w >= 0.0) {
            return Err(Error::Domain(format!(
                "LO power must be >= 0, got {power_w}"
            )));
        }
        Ok(LocalOscillator {
            amplitude_alpha: (power_w / photon_energy_j()).sqrt(),
            power_w,
        })
    }

    /// α = 1: keeps the algebra unit-free for tests and budgets.
    pub fn unit_amplitude() -> Self {
        LocalOscillator {
            amplitude_alpha: 1.0,
            power_w: photon_energy_j(),
        }
    }
}

/// What enters the signal port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalField {
    Vacuum,
    Squeezed(OpoParams),
}

impl SignalField {
    /// The signal field never carries a coherent amplitude.
    pub fn coherent_amplitude(&self) -> f64 {
        0.0
    }
}

/// Static optical parameters of the homodyne detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneOptics {
    /// Beamsplitter power splitting ratio, strictly inside (0, 1).
    pub eta_bs: f64,
    /// Loss in arm 1 (between beamsplitter and diode 1), [0, 1].
    pub eta_l: f64,
    /// Diode quantum efficiencies at the current beam position, (0, 1].
    pub eta_pd1: f64,
    pub eta_pd2: f64,
}

impl HomodyneOptics {
    pub fn new(eta_bs: f64, eta_l: f64, eta_pd1: f64, eta_pd2: f64) -> Result<Self> {
        if !(eta_bs > 0.0 && eta_bs < 1.0) {
            return Err(Error::Domain(format!(
                "eta_bs must be in (0, 1); both outputs are required, got {eta_bs}"
            )));
        }
        if !(0.0..=1.0).contains(&eta_l) {
            return Err(Error::Domain(format!(
                "eta_l must be in [0, 1], got {eta_l}"
            )));
        }
        for (name, v) in [("eta_pd1", eta_pd1), ("eta_pd2", eta_pd2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain(format!(
                    "{name} must be in (0, 1], got {v}"
                )));
            }
        }
        Ok(HomodyneOptics {
            eta_bs,
            eta_l,
            eta_pd1,
            eta_pd2,
        })
    }
}

/// Fluctuation ports feeding the photocurrents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    /// Amplitude quadrature of the local oscillator, δX_a+.
    LoIntensity,
    /// Signal-field quadrature, δX_b+.
    Signal,
    /// Vacuum entering through the arm-1 loss.
    Vacuum0,
    /// Vacuum entering through diode 1 inefficiency.
    Vacuum1,
    /// Vacuum entering through diode 2 inefficiency.
    Vacuum2,
}

pub const ALL_PORTS: [Port; 5] = [
    Port::LoIntensity,
    Port::Signal,
    Port::Vacuum0,
    Port::Vacuum1,
    Port::Vacuum2,
];

/// Linearized response of one photodiode: mean photocurrent plus one
/// coefficient per fluctuation quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiodeCoefficients {
    /// Mean photocurrent, α²-normalized.
    pub dc: f64,
    pub lo: f64,
    pub signal: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
}

impl DiodeCoefficients {
    pub fn port(&self, port: Port) -> f64 {
        match port {
            Port::LoIntensity => self.lo,
            Port::Signal => self.signal,
            Port::Vacuum0 => self.v0,
            Port::Vacuum1 => self.v1,
            Port::Vacuum2 => self.v2,
        }
    }

    /// Σ coeff² over all ports; equals dc·α² for a valid decomposition.
    pub fn sum_squared(&self) -> f64 {
        ALL_PORTS.iter().map(|&p| self.port(p).powi(2)).sum()
    }
}

/// Coupling coefficients for both diodes of the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCoefficients {
    pub alpha: f64,
    pub diode1: DiodeCoefficients,
    pub diode2: DiodeCoefficients,
}

/// Effective field on a diode: carrier amplitude plus the amplitude each
/// fluctuation port contributes.
struct EffectiveField {
    mean: f64,
    ports: [(Port, f64); 4],
}

impl EffectiveField {
    /// Squaring the field and keeping first order in the fluctuations gives
    /// dc = mean² and coefficient = mean × port amplitude.
    fn linearize(&self, alpha: f64) -> DiodeCoefficients {
        let mut c = DiodeCoefficients {
            dc: (self.mean / alpha).powi(2),
            ..Default::default()
        };
        for &(port, k) in &self.ports {
            let coeff = self.mean * k;
            match port {
                Port::LoIntensity => c.lo = coeff,
                Port::Signal => c.signal = coeff,
                Port::Vacuum0 => c.v0 = coeff,
                Port::Vacuum1 => c.v1 = coeff,
                Port::Vacuum2 => c.v2 = coeff,
            }
        }
        c
    }
}

/// Linearized photocurrent coefficients of both diodes for the given LO and
/// optics.
pub fn derive_coefficients(
    lo: &LocalOscillator,
    optics: &HomodyneOptics,
) -> Result<CouplingCoefficients> {
    // revalidate: callers may have mutated the struct fields directly
    let optics = HomodyneOptics::new(optics.eta_bs, optics.eta_l, optics.eta_pd1, optics.eta_pd2)?;
    let a = lo.amplitude_alpha;
    let (bs, l, e1, e2) = (optics.eta_bs, optics.eta_l, optics.eta_pd1, optics.eta_pd2);

    // F1 = sqrt(e1) (sqrt(1-l)(sqrt(bs) A + sqrt(1-bs) B) + sqrt(l) V0) + sqrt(1-e1) V1
    let f1 = EffectiveField {
        mean: (e1 * bs * (1.0 - l)).sqrt() * a,
        ports: [
            (Port::LoIntensity, (e1 * bs * (1.0 - l)).sqrt()),
            (Port::Signal, (e1 * (1.0 - bs) * (1.0 - l)).sqrt()),
            (Port::Vacuum0, (e1 * l).sqrt()),
            (Port::Vacuum1, (1.0 - e1).sqrt()),
        ],
    };
    // F2 = sqrt(e2) (sqrt(bs) B - sqrt(1-bs) A) + sqrt(1-e2) V2
    let f2 = EffectiveField {
        mean: -(e2 * (1.0 - bs)).sqrt() * a,
        ports: [
            (Port::LoIntensity, -(e2 * (1.0 - bs)).sqrt()),
            (Port::Signal, (e2 * bs).sqrt()),
            (Port::Vacuum2, (1.0 - e2).sqrt()),
            (Port::Vacuum0, 0.0),
        ],
    };

    Ok(CouplingCoefficients {
        alpha: a,
        diode1: f1.linearize(a),
        diode2: f2.linearize(a),
    })
}

/// Electronic subtraction topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Separate transimpedance stages g1, g2, then an electronic subtractor.
    VariableGain,
    /// Photocurrents subtracted before any gain, single stage g.
    CurrentSubtracting,
}

/// Differential channel after photocurrent subtraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentialCoefficients {
    pub alpha: f64,
    pub g1: f64,
    pub g2: f64,
    pub topology: Topology,
    pub lo: f64,
    pub signal: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
}

impl DifferentialCoefficients {
    pub fn port(&self, port: Port) -> f64 {
        match port {
            Port::LoIntensity => self.lo,
            Port::Signal => self.signal,
            Port::Vacuum0 => self.v0,
            Port::Vacuum1 => self.v1,
            Port::Vacuum2 => self.v2,
        }
    }

    /// Flat vacuum floor of the subtracted channel: Σ coeff² over all ports
    /// with every quadrature at the vacuum level.
    pub fn shot_floor(&self) -> f64 {
        ALL_PORTS.iter().map(|&p| self.port(p).powi(2)).sum()
    }
}

/// Subtract the two photocurrents with gains g1, g2. The opposite signs of
/// the per-diode signal terms make the signal coefficients add.
pub fn subtract_output(
    coeffs: &CouplingCoefficients,
    g1: f64,
    g2: f64,
    topology: Topology,
) -> Result<DifferentialCoefficients> {
    if !(g1 > 0.0 && g2 > 0.0) {
        return Err(Error::Domain(format!(
            "gains must be positive, got g1={g1}, g2={g2}"
        )));
    }
    if topology == Topology::CurrentSubtracting && g1 != g2 {
        return Err(Error::InvalidInput(format!(
            "current-subtracting design has a single gain; got g1={g1} != g2={g2}"
        )));
    }
    let diff = |p: Port| g1 * coeffs.diode1.port(p) - g2 * coeffs.diode2.port(p);
    Ok(DifferentialCoefficients {
        alpha: coeffs.alpha,
        g1,
        g2,
        topology,
        lo: diff(Port::LoIntensity),
        signal: diff(Port::Signal),
        v0: diff(Port::Vacuum0),
        v1: diff(Port::Vacuum1),
        v2: diff(Port::Vacuum2),
    })
}

/// Common-mode rejection ratio in dB, referenced to the single-diode
/// response: 20 log10(|g1 · c_lo of reference diode 1| / |differential c_lo|).
///
/// Referencing to a baseline (unperturbed) single-diode response makes a
/// 1 % single-arm loss from a balanced state cost exactly 40 dB. A perfectly
/// nulled differential coefficient returns `f64::INFINITY`.
pub fn cmrr_db(
    diff: &DifferentialCoefficients,
    single_diode_ref: &CouplingCoefficients,
) -> Result<f64> {
    let reference = diff.g1 * single_diode_ref.diode1.lo;
    if reference == 0.0 {
        return Err(Error::Domain(
            "reference single-diode LO coefficient is zero".into(),
        ));
    }
    if diff.lo == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (reference.abs() / diff.lo.abs()).log10())
}

/// The parameter that nulls the differential LO coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BalanceAdjustment {
    /// Gain ratio g2/g1 for the variable-gain design.
    GainRatio(f64),
    /// Beamsplitter splitting ratio for the current-subtracting design.
    SplitRatio(f64),
}

/// Unique balance point for fixed diode efficiencies: either the gain ratio
/// (variable-gain) or the splitting ratio (current-subtracting, tuned with
/// the half-wave plate).
pub fn optimize_balance(optics: &HomodyneOptics, topology: Topology) -> Result<BalanceAdjustment> {
    let (bs, l, e1, e2) = (optics.eta_bs, optics.eta_l, optics.eta_pd1, optics.eta_pd2);
    match topology {
        Topology::VariableGain => {
            Ok(BalanceAdjustment::GainRatio(e1 * bs * (1.0 - l) / (e2 * (1.0 - bs))))
        }
        Topology::CurrentSubtracting => {
            let bs_opt = e2 / (e1 * (1.0 - l) + e2);
            if !(bs_opt > 0.0 && bs_opt < 1.0) {
                return Err(Error::Infeasible(format!(
                    "required eta_bs = {bs_opt} is outside (0, 1)"
                )));
            }
            Ok(BalanceAdjustment::SplitRatio(bs_opt))
        }
    }
}
