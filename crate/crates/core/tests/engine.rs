//! End-to-end engine behavior on small scenarios: noise routing through
//! the chain, budget/Monte-Carlo parity, and report plumbing.

use homodyne::engine::{run_budget, run_monte_carlo};
use homodyne::error::Error;
use homodyne::scenario::parse_scenario_str;
use homodyne::spectral::SpectrumTrace;

fn config(text: &str) -> homodyne::scenario::ScenarioConfig {
    parse_scenario_str(text, true).unwrap().0
}

fn band_mean_rel_db(trace: &SpectrumTrace, floor: f64, f1: f64, f2: f64) -> f64 {
    let sel: Vec<f64> = trace
        .bins
        .iter()
        .filter(|b| b.frequency_hz >= f1 && b.frequency_hz <= f2)
        .map(|b| b.value / floor)
        .collect();
    assert!(!sel.is_empty());
    10.0 * (sel.iter().sum::<f64>() / sel.len() as f64).log10()
}

#[test]
fn jitter_before_modecleaner_is_harmless_after_is_not() {
    let base = "
[laser]
power_w = 1.3e-3

[homodyne]
topology = current_subtracting
eta_bs = auto

[modecleaner]
enabled = true
hom_suppression = 1e4

[jitter]
location = LOCATION
displacement_white_m2_hz = 3e-18
corner_hz = 100
waist_m = 3e-4

[analysis]
spans = 1600:400:150
outputs = shot
seed = 61
";
    let run = |location: &str| {
        let cfg = config(&base.replace("LOCATION", location));
        let resolved = homodyne::engine::resolve(&cfg).unwrap();
        let report = run_monte_carlo(&cfg).unwrap();
        let trace = report.trace("shot").unwrap().clone();
        band_mean_rel_db(&trace, resolved.shot_floor_v2_hz(), 10.0, 300.0)
    };
    let before = run("before_modecleaner");
    let after = run("after_modecleaner");
    assert!(
        before.abs() < 1.0,
        "jitter upstream of the modecleaner blew out the spectrum: {before} dB"
    );
    assert!(
        after > 3.0,
        "jitter downstream of the modecleaner should blow out the spectrum, got {after} dB"
    );
}

#[test]
fn dust_in_arm1_dips_the_difference_common_dust_does_not() {
    let base = "
[laser]
power_w = 682e-6

[homodyne]
topology = current_subtracting
eta_bs = auto
gain = 21650

[dust]
rate_hz = 0.3
depth_min = 0.004
depth_max = 0.012
location = LOCATION

[analysis]
spans = 800:200:10
outputs = dc_monitor
monitor_duration_s = 20
monitor_rate_hz = 2000
seed = 62
";
    let run = |location: &str| {
        let cfg = config(&base.replace("LOCATION", location));
        let report = run_monte_carlo(&cfg).unwrap();
        let m = report.dc_monitor.unwrap();
        let v1_dip = m.v1.samples()[0]
            - m.v1.samples().iter().cloned().fold(f64::INFINITY, f64::min);
        let vdiff_excursion = m
            .vdiff
            .samples()
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        (v1_dip, vdiff_excursion)
    };
    let (arm_dip, arm_diff) = run("arm1");
    assert!(arm_dip > 0.01, "no dust dips on the diode-1 monitor: {arm_dip} V");
    assert!(
        arm_diff > 0.01,
        "arm-1 dust must unbalance the subtraction: {arm_diff} V"
    );
    let (common_dip, common_diff) = run("common");
    assert!(
        common_dip > 0.01,
        "common dust still dips the per-diode voltage: {common_dip} V"
    );
    assert!(
        common_diff < 1e-6,
        "common-path dust must cancel in the subtracted output, got {common_diff} V"
    );
}

#[test]
fn budget_rejects_transient_sources() {
    let with_dust = config(
        "
[laser]
power_w = 1e-3

[homodyne]
topology = current_subtracting

[dust]
rate_hz = 0.2

[analysis]
spans = 800:200:50
outputs = shot
",
    );
    match run_budget(&with_dust).unwrap_err() {
        Error::InvalidInput(msg) => assert!(msg.contains("dust"), "{msg}"),
        other => panic!("wrong error {other:?}"),
    }
    let with_scatter = config(
        "
[laser]
power_w = 1e-3

[homodyne]
topology = current_subtracting

[scatter.bench]
location = signal_port
power_fraction = 1e-12

[analysis]
spans = 800:200:50
outputs = shot
",
    );
    match run_budget(&with_scatter).unwrap_err() {
        Error::InvalidInput(msg) => assert!(msg.contains("scatter.bench"), "{msg}"),
        other => panic!("wrong error {other:?}"),
    }
}

#[test]
fn single_diode_sees_rin_that_the_subtraction_removes() {
    // the 0.65 uW field on one diode carries intensity noise 40 dB above
    // its shot level at 10 Hz; the balanced subtraction removes it.
    // The anchor refers to the full LO, so the diode share costs
    // 10 log10(eta_pd1 * eta_bs) ~ 3.05 dB.
    let cfg = config(
        "
[laser]
power_w = 1.3131e-6
rin_db_above_shot = 43.054
rin_anchor_hz = 10
rin_corner_hz = 1000

[homodyne]
topology = current_subtracting
eta_bs = auto

[analysis]
spans = 800:200:200
outputs = single_diode, shot
seed = 63
",
    );
    let resolved = homodyne::engine::resolve(&cfg).unwrap();
    let report = run_monte_carlo(&cfg).unwrap();

    // single-diode shot floor: 2 q I1 g1^2
    let single_floor = 2.0
        * homodyne::consts::ELEMENTARY_CHARGE_C
        * resolved.design.responsivity_a_w
        * resolved.power_w
        * resolved.coeffs.diode1.dc
        * resolved.g1
        * resolved.g1;
    let single = report.trace("single_diode").unwrap();
    let excess = band_mean_rel_db(single, single_floor, 8.0, 16.0);
    assert!(
        (excess - 40.0).abs() < 1.5,
        "single-diode RIN excess at 10 Hz: {excess} dB"
    );

    // the subtraction removes the same relative RIN; checked at 1 mW where
    // shot clears the electronics floor
    let balanced = config(
        "
[laser]
power_w = 1e-3
rin_db_above_shot = 43.054
rin_anchor_hz = 10
rin_corner_hz = 1000

[homodyne]
topology = current_subtracting
eta_bs = auto

[analysis]
spans = 800:200:200
outputs = shot
seed = 63
",
    );
    let resolved = homodyne::engine::resolve(&balanced).unwrap();
    let report = run_monte_carlo(&balanced).unwrap();
    let shot = report.trace("shot").unwrap();
    let residual = band_mean_rel_db(shot, resolved.shot_floor_v2_hz(), 8.0, 16.0);
    assert!(
        residual.abs() < 0.5,
        "balanced output should sit at the shot floor, got {residual} dB"
    );
}

#[test]
fn budget_and_monte_carlo_agree_on_stationary_sources() {
    let cfg = config(
        "
[laser]
power_w = 1e-3
rin_db_above_shot = 40

[homodyne]
topology = variable_gain
eta_bs = 0.5
eta_pd1 = 0.99
eta_pd2 = 0.98
gain = 20000
gain2 = auto
target_cmrr_db = 80

[electronics]
resistor_type = metal_film

[opo]
pump_ratio = 0.65
phase_noise_rms_rad = 0.011

[analysis]
spans = 800:200:1500
outputs = output
seed = 64
",
    );
    let budget = run_budget(&cfg).unwrap();
    let mc = run_monte_carlo(&cfg).unwrap();
    let b = budget.trace("output").unwrap();
    let m = mc.trace("output").unwrap();
    assert_eq!(b.bins.len(), m.bins.len());
    let mut worst: f64 = 0.0;
    for (bb, mb) in b.bins.iter().zip(&m.bins) {
        assert_eq!(bb.frequency_hz, mb.frequency_hz);
        worst = worst.max((10.0 * (mb.value / bb.value).log10()).abs());
    }
    assert!(worst < 0.5, "worst per-bin disagreement {worst} dB");
}

#[test]
fn report_csv_round_trips() {
    let cfg = config(
        "
[laser]
power_w = 1e-3

[homodyne]
topology = current_subtracting

[analysis]
spans = 800:200:50, 6400:200:50
outputs = shot, dark
seed = 65
",
    );
    let report = run_monte_carlo(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = report.write_csv(dir.path()).unwrap();
    assert!(written.contains(&"shot.csv".to_string()));
    assert!(written.contains(&"dark_rel.csv".to_string()));
    let back = SpectrumTrace::read_csv_file(dir.path().join("shot.csv")).unwrap();
    assert_eq!(back, *report.trace("shot").unwrap());
}

#[test]
fn identical_seeds_give_identical_reports() {
    let text = "
[laser]
power_w = 1.9e-3

[homodyne]
topology = current_subtracting

[scatter.s]
location = signal_port
power_fraction = 1e-12

[analysis]
spans = 800:200:60
outputs = shot
seed = 66
";
    let a = run_monte_carlo(&config(text)).unwrap();
    let b = run_monte_carlo(&config(text)).unwrap();
    assert_eq!(a.trace("shot").unwrap(), b.trace("shot").unwrap());
    // a different seed must not
    let c = run_monte_carlo(&config(&text.replace("seed = 66", "seed = 67"))).unwrap();
    assert_ne!(a.trace("shot").unwrap(), c.trace("shot").unwrap());
}
