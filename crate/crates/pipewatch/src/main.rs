use clap::{Parser, Subcommand};
use pipewatch::error::Error;
use pipewatch::eval::{report_from_run_dir, run_pipeline, RunConfig};
use pipewatch::preprocess::stl_decompose;
use pipewatch::scenario::{LabeledStream, Scenario};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pipewatch",
    about = "Streaming fault detection for water distribution networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the labeled pressure stream (and its anomaly-free
    /// historical companion) for a scenario.
    Generate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's rng seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// STL-decompose one sensor column of a stream file into a
    /// trend/seasonal/residual cache.
    Decompose {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value_t = 336)]
        period: usize,
        #[arg(long)]
        out: PathBuf,
        /// Sensor column to decompose; defaults to the first.
        #[arg(long)]
        sensor: Option<String>,
    },
    /// Run the full detection pipeline over a scenario.
    Detect {
        #[arg(long)]
        scenario: PathBuf,
        /// Run configuration; omitted means published defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sensor detection table with downstream/upstream tags from a
    /// finished `detect` run.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Pipe the tags are computed against; defaults to the scenario's
        /// first blockage event.
        #[arg(long)]
        blocked_pipe: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for configuration problems, 2 for runtime failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidScenario(_)
        | Error::InvalidNetwork(_)
        | Error::UnknownPipe(_)
        | Error::UnknownNode(_)
        | Error::Json(_)
        | Error::SeriesTooShort { .. } => 1,
        Error::AtStep { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn run(cli: Cli) -> pipewatch::Result<()> {
    match cli.command {
        Command::Generate { scenario, out, seed } => generate(&scenario, &out, seed),
        Command::Decompose {
            stream,
            period,
            out,
            sensor,
        } => decompose(&stream, period, &out, sensor.as_deref()),
        Command::Detect {
            scenario,
            config,
            out,
        } => detect(&scenario, config.as_deref(), &out),
        Command::Report { run, blocked_pipe } => report(&run, blocked_pipe.as_deref()),
    }
}

/// Input files that fail to load are configuration problems, not runtime
/// failures.
fn config_stage(e: Error) -> Error {
    match e {
        Error::Io(e) => Error::InvalidConfig(e.to_string()),
        other => other,
    }
}

fn generate(scenario_path: &Path, out: &Path, seed: Option<u64>) -> pipewatch::Result<()> {
    let mut scenario = Scenario::from_json_file(scenario_path).map_err(config_stage)?;
    if let Some(seed) = seed {
        scenario.rng_seed = seed;
    }
    let network = scenario.load_network(scenario_path).map_err(config_stage)?;
    let live = scenario.generate(&network)?;
    let historical = scenario.generate_historical(&network)?;
    std::fs::create_dir_all(out)?;
    live.write_csv_file(out.join("stream.csv"))?;
    historical.write_csv_file(out.join("historical.csv"))?;
    std::fs::write(out.join("scenario.json"), scenario.to_json_string()?)?;
    println!(
        "wrote {} steps x {} sensors to {}",
        live.len(),
        live.sensor_ids.len(),
        out.display()
    );
    Ok(())
}

fn decompose(
    stream_path: &Path,
    period: usize,
    out: &Path,
    sensor: Option<&str>,
) -> pipewatch::Result<()> {
    let stream = LabeledStream::read_csv_file(stream_path).map_err(config_stage)?;
    let idx = match sensor {
        Some(id) => stream
            .sensor_index(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))?,
        None => 0,
    };
    let series = stream.column(idx);
    let decomposition = stl_decompose(&series, period)?;
    decomposition.write_csv_file(out)?;
    println!(
        "decomposed sensor {} ({} steps, period {period}) into {}",
        stream.sensor_ids[idx],
        series.len(),
        out.display()
    );
    Ok(())
}

fn detect(scenario: &Path, config: Option<&Path>, out: &Path) -> pipewatch::Result<()> {
    let mut cfg = match config {
        Some(path) => RunConfig::from_json_file(path).map_err(config_stage)?,
        None => RunConfig::new(String::new()),
    };
    if !scenario.exists() {
        return Err(Error::InvalidConfig(format!(
            "scenario file {} not found",
            scenario.display()
        )));
    }
    cfg.scenario = scenario.to_string_lossy().into_owned();
    let artifacts = run_pipeline(&cfg, Path::new(""), Some(out))?;
    for sensor in &artifacts.sensors {
        let s = &sensor.summary;
        println!(
            "{}: G(blockage) {}  alarms {:?}  retrains {:?}",
            s.sensor_id,
            s.mean_gmean_blockage
                .map(|g| format!("{g:.3}"))
                .unwrap_or_else(|| "n/a".into()),
            s.drift_alarm_steps,
            s.retrain_steps
        );
    }
    println!("run artifacts in {}", out.display());
    Ok(())
}

fn report(run_dir: &Path, blocked_pipe: Option<&str>) -> pipewatch::Result<()> {
    let rows = report_from_run_dir(run_dir, blocked_pipe)?;
    println!("{:<10} {:<12} {:>6} {:>6}", "sensor", "tag", "TP", "FP");
    for r in &rows {
        println!(
            "{:<10} {:<12} {:>6} {:>6}",
            r.sensor_id, r.tag, r.true_positives, r.false_positives
        );
    }
    let mut csv = String::from("sensor,tag,true_positives,false_positives\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.sensor_id, r.tag, r.true_positives, r.false_positives
        ));
    }
    std::fs::write(run_dir.join("report.csv"), csv)?;
    Ok(())
}
