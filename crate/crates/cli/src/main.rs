//! Command-line front end: scenario-driven noise budgets, Monte-Carlo
//! runs, and the balancing/dither diagnostics.
//!
//! Exit codes: 0 success, 1 configuration (parse/validation) error,
//! 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use homodyne::engine::{self, RunReport};
use homodyne::error::Error;
use homodyne::fields::BalanceAdjustment;
use homodyne::scatter::dither_amplitude_scan;
use homodyne::scenario::{parse_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "homodyne",
    about = "Balanced homodyne detection simulator and noise-budget tool",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario file.
    scn: PathBuf,
    /// Directory for CSV output (one file per trace).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output format.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Downgrade unknown config keys from errors to warnings.
    #[arg(long)]
    lenient: bool,
    /// Worker threads for the Monte-Carlo path (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic noise budget (stationary sources only).
    Budget(CommonArgs),
    /// Time-domain Monte-Carlo run (transients, scatter, dither).
    Simulate(CommonArgs),
    /// Report the common-mode rejection and the balance point.
    Cmrr(CommonArgs),
    /// Sweep the dither amplitude and report residual low-band power.
    DitherScan {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated dither amplitudes in fringe cycles.
        #[arg(long, value_delimiter = ',', required = true)]
        cycles: Vec<f64>,
    },
    /// Predicted squeezing levels from the OPO and efficiency chain.
    SqueezePredict(CommonArgs),
    /// DC monitor run (dust transients on the oscilloscope).
    DustMonitor(CommonArgs),
}

fn load(common: &CommonArgs) -> Result<ScenarioConfig, Error> {
    if common.format != "csv" {
        return Err(Error::Validation {
            key: "--format".into(),
            message: format!("only `csv` is supported, got `{}`", common.format),
        });
    }
    let (mut config, warnings) = parse_scenario(&common.scn, !common.lenient)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = common.seed {
        config.analysis.seed = seed;
    }
    Ok(config)
}

fn init_workers(common: &CommonArgs) -> Result<(), Error> {
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn emit_report(report: &RunReport, common: &CommonArgs) -> Result<(), Error> {
    for (name, value) in &report.scalars {
        println!("{name} = {value}");
    }
    for (name, trace) in &report.traces {
        println!(
            "trace {name}: {} bins, {:.3} Hz to {:.4e} Hz",
            trace.bins.len(),
            trace.bins.first().map(|b| b.frequency_hz).unwrap_or(0.0),
            trace.max_frequency_hz()
        );
    }
    if report.dc_monitor.is_some() {
        println!("trace dc_monitor: time series");
    }
    if let Some(dir) = &common.out {
        let written = report.write_csv(dir)?;
        for file in written {
            println!("wrote {}", dir.join(file).display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Budget(common) => {
            let config = load(&common)?;
            init_workers(&common)?;
            let report = engine::run_budget(&config)?;
            emit_report(&report, &common)
        }
        Command::Simulate(common) => {
            let config = load(&common)?;
            init_workers(&common)?;
            let report = engine::run_monte_carlo(&config)?;
            emit_report(&report, &common)
        }
        Command::Cmrr(common) => {
            let config = load(&common)?;
            let resolved = engine::resolve(&config)?;
            println!("cmrr_db = {}", resolved.cmrr_db);
            println!("dark_clearance_db = {}", resolved.clearance_db);
            match engine::balance_parameter(&config)? {
                BalanceAdjustment::GainRatio(r) => println!("balance_gain_ratio = {r}"),
                BalanceAdjustment::SplitRatio(bs) => println!("balance_eta_bs = {bs}"),
            }
            if let Some(dir) = &common.out {
                use std::io::Write;
                std::fs::create_dir_all(dir)?;
                let mut f = std::fs::File::create(dir.join("report.csv"))?;
                writeln!(f, "name,value")?;
                writeln!(f, "cmrr_db,{}", resolved.cmrr_db)?;
                writeln!(f, "dark_clearance_db,{}", resolved.clearance_db)?;
            }
            Ok(())
        }
        Command::DitherScan { common, cycles } => {
            let config = load(&common)?;
            let scatter = config
                .scatter_paths
                .iter()
                .find(|s| s.dithered && s.path.power_fraction > 0.0)
                .ok_or_else(|| {
                    Error::InvalidInput(
                        "dither-scan needs a dithered [scatter.*] section with nonzero power"
                            .into(),
                    )
                })?;
            let frequency = config
                .dither
                .map(|d| d.frequency_hz)
                .unwrap_or(750.0);
            let seg = *config.analysis.spans.segments.last().unwrap();
            let scan = dither_amplitude_scan(
                &scatter.path,
                config.laser.power_w,
                frequency,
                &cycles,
                seg.span_hz,
                seg.lines,
                seg.averages,
                config.analysis.seed,
                (2.0 * seg.rbw_hz(), frequency / 2.0),
            )?;
            println!("cycles,residual_low_band_power");
            for (c, p) in &scan {
                println!("{c},{p}");
            }
            let best = scan
                .iter()
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            println!("minimum_at_cycles = {}", best.0);
            if let Some(dir) = &common.out {
                use std::io::Write;
                std::fs::create_dir_all(dir)?;
                let mut f = std::fs::File::create(dir.join("dither_scan.csv"))?;
                writeln!(f, "cycles,residual_low_band_power")?;
                for (c, p) in &scan {
                    writeln!(f, "{c},{p}")?;
                }
            }
            Ok(())
        }
        Command::SqueezePredict(common) => {
            let config = load(&common)?;
            let prediction = engine::squeeze_predict(&config)?;
            println!("eta_total = {}", prediction.eta_total);
            println!("squeezing_db = {}", prediction.squeezing_db);
            println!("anti_squeezing_db = {}", prediction.anti_squeezing_db);
            println!(
                "dark_corrected_squeezing_db = {}",
                prediction.dark_corrected_squeezing_db
            );
            if let Some(dir) = &common.out {
                use std::io::Write;
                std::fs::create_dir_all(dir)?;
                let mut f = std::fs::File::create(dir.join("squeeze_predict.csv"))?;
                writeln!(f, "name,value")?;
                writeln!(f, "eta_total,{}", prediction.eta_total)?;
                writeln!(f, "squeezing_db,{}", prediction.squeezing_db)?;
                writeln!(f, "anti_squeezing_db,{}", prediction.anti_squeezing_db)?;
                writeln!(
                    f,
                    "dark_corrected_squeezing_db,{}",
                    prediction.dark_corrected_squeezing_db
                )?;
            }
            Ok(())
        }
        Command::DustMonitor(common) => {
            let mut config = load(&common)?;
            init_workers(&common)?;
            // a monitor run regardless of what the scenario's outputs say
            config.analysis.outputs = vec![homodyne::scenario::OutputKind::DcMonitor];
            let report = engine::run_monte_carlo(&config)?;
            if let Some(m) = &report.dc_monitor {
                let min_diff = m
                    .vdiff
                    .samples()
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                let max_dip = m.v1.samples().iter().cloned().fold(f64::INFINITY, f64::min);
                println!("dc1_v = {}", m.v1.samples()[0]);
                println!("dc2_v = {}", m.v2.samples()[0]);
                println!("deepest_v1_v = {max_dip}");
                println!("min_vdiff_v = {min_diff}");
            }
            emit_report(&report, &common)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
