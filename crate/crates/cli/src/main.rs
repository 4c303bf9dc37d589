use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use timebin::analysis::ChshSettings;
use timebin::error::ValidationError;
use timebin::experiments::{
    run_car_sweep, run_chsh, run_fringe, CarMode, CarSweep, ChshCampaign, Counting, FringePoint,
    FringeSweep,
};
use timebin::montecarlo::{generate_run, write_stream_text, RunConfig};
use timebin::planner::{plan, with_detector_efficiency, Criterion};
use timebin::report;
use timebin::scenario::sha256_hex;
use timebin::{ExperimentScenario, ValidatedScenario};

const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_IO: u8 = 5;

const MANIFEST: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(
    name = "timebin",
    version,
    about = "Time-bin entanglement distribution simulator"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct GlobalOpts {
    /// Scenario TOML file or built-in name (paper-300km, paper-car)
    #[arg(long, global = true, default_value = "paper-300km")]
    scenario: String,
    /// Master seed; defaults to the scenario's seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use closed-form expectations instead of sampling
    #[arg(long, global = true)]
    analytic: bool,
    /// Measurement time: per point, per setting, or per run
    #[arg(long, global = true)]
    hours: Option<f64>,
    /// Coincidence window override
    #[arg(long = "window-ps", global = true)]
    window_ps: Option<f64>,
    /// Follow the coincidence peak chunk by chunk
    #[arg(long, global = true, overrides_with = "no_track")]
    track: bool,
    /// Count in a fixed window at zero delay
    #[arg(long = "no-track", global = true, overrides_with = "track")]
    no_track: bool,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
enum Command {
    /// Sweep the idler analyzer temperature and fit the two-photon fringe
    Fringe {
        #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
        start: f64,
        #[arg(long, default_value_t = 16.5, allow_hyphen_values = true)]
        stop: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Run the sixteen-setting CHSH campaign
    Chsh {
        #[arg(long = "theta-s0", default_value_t = 0.0, allow_hyphen_values = true)]
        theta_s0: f64,
        #[arg(long = "theta-i0", default_value_t = 0.0, allow_hyphen_values = true)]
        theta_i0: f64,
    },
    /// Coincidence-to-accidental ratio versus mean pair number
    CarSweep {
        /// Comma-separated mean pair numbers
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1e-8,3e-8,1e-7,3e-7,1e-6"
        )]
        mu: Vec<f64>,
        /// Unmatched slots counted on each side of the matched one
        #[arg(long = "side-slots", default_value_t = 2000)]
        side_slots: usize,
    },
    /// Rate, campaign length and reach versus distance
    Plan {
        /// Comma-separated total fiber lengths in km [default: 300,400]
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        distances: Option<Vec<f64>>,
        /// Reach criterion on visibility [default: 0.71]
        #[arg(long = "min-visibility", conflicts_with = "min_car")]
        min_visibility: Option<f64>,
        /// Reach criterion on coincidence-to-accidental ratio
        #[arg(long = "min-car")]
        min_car: Option<f64>,
        /// Replace both detectors with units of this efficiency
        #[arg(long = "upgrade-efficiency")]
        upgrade_efficiency: Option<f64>,
        #[arg(long = "counts-per-setting", default_value_t = 100.0)]
        counts_per_setting: f64,
        #[arg(long = "settings", default_value_t = 16)]
        n_settings: usize,
    },
    /// Write raw detector click streams
    Simulate {
        #[arg(long = "theta-s", default_value_t = 0.0, allow_hyphen_values = true)]
        theta_s: f64,
        #[arg(long = "theta-i", default_value_t = 0.0, allow_hyphen_values = true)]
        theta_i: f64,
    },
    /// Re-run a recorded command and check that its outputs are identical
    Replay { manifest: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fringe { .. } => "fringe",
            Command::Chsh { .. } => "chsh",
            Command::CarSweep { .. } => "car-sweep",
            Command::Plan { .. } => "plan",
            Command::Simulate { .. } => "simulate",
            Command::Replay { .. } => "replay",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OutputRecord {
    path: String,
    sha256: String,
    bytes: u64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunManifest {
    version: String,
    command: String,
    argv: Vec<String>,
    seed: u64,
    scenario_sha256: String,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    outputs: Vec<OutputRecord>,
    global: GlobalOpts,
    invocation: Command,
    scenario: ExperimentScenario,
}

struct Outputs {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            records: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.records.push(OutputRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn prepare_scenario(
    global: &GlobalOpts,
    mut scenario: ExperimentScenario,
) -> Result<ValidatedScenario> {
    if let Some(w) = global.window_ps {
        scenario.tia.window_ps = w;
    }
    Ok(scenario.validate()?)
}

fn counting(global: &GlobalOpts, s: &ValidatedScenario) -> Counting {
    let mut c = Counting::for_scenario(s);
    if global.track {
        c.track = true;
    }
    if global.no_track {
        c.track = false;
    }
    c
}

/// Executes `command` against an already loaded scenario, writing into `out`.
fn execute(
    global: &GlobalOpts,
    command: &Command,
    scenario: &ExperimentScenario,
    out_dir: &Path,
    argv: Vec<String>,
) -> Result<RunManifest> {
    let started = now_ms();
    let s = prepare_scenario(global, scenario.clone())?;
    let seed = global.seed.unwrap_or(s.seed);
    let mut out = Outputs::new(out_dir)?;

    match command {
        Command::Fringe { start, stop, step } => {
            let sweep = FringeSweep {
                start_c: *start,
                stop_c: *stop,
                step_c: *step,
                hours_per_point: global.hours.unwrap_or(1.0),
                seed,
                analytic: global.analytic,
            };
            let mut done: Vec<FringePoint> = Vec::new();
            match run_fringe(&s, &sweep, counting(global, &s), |p| done.push(p.clone())) {
                Ok(run) => {
                    out.write("fringe.csv", report::fringe_csv(&run).as_bytes())?;
                    out.write_json("fringe.json", &run)?;
                    println!(
                        "V = {:.4} ± {:.4} (unclamped {:.4}), expected {:.4}",
                        run.fit.v, run.fit.sigma_v, run.fit.v_unclamped, run.expected_visibility
                    );
                }
                Err(e) => {
                    let mut text = String::from(report::FRINGE_HEADER);
                    for p in &done {
                        text.push_str(&format!(
                            "{:.4},{:.6},{},\n",
                            p.temperature_c,
                            p.phase_rad,
                            report::fmt_count(p.window_counts)
                        ));
                    }
                    text.push_str(&format!("# incomplete: {e}\n"));
                    out.write("fringe.csv", text.as_bytes())?;
                    return Err(e.into());
                }
            }
        }
        Command::Chsh { theta_s0, theta_i0 } => {
            let campaign = ChshCampaign {
                settings: ChshSettings::new(*theta_s0, *theta_i0),
                hours_per_setting: global.hours.unwrap_or(1.0),
                seed,
                analytic: global.analytic,
            };
            let run = run_chsh(&s, &campaign, counting(global, &s))?;
            out.write("chsh_counts.csv", report::chsh_counts_csv(&run).as_bytes())?;
            out.write_json("chsh.json", &run)?;
            print!("{}", report::chsh_summary(&run));
        }
        Command::CarSweep { mu, side_slots } => {
            let sweep = CarSweep {
                mu_grid: mu.clone(),
                mode: if global.analytic {
                    CarMode::Analytic
                } else {
                    CarMode::MonteCarlo
                },
                hours: global.hours.unwrap_or(s.duration_s / 3600.0),
                seed,
                side_slots: *side_slots,
            };
            let points = run_car_sweep(&s, &sweep)?;
            out.write("car.csv", report::car_csv(&points).as_bytes())?;
            out.write_json("car.json", &points)?;
            for p in &points {
                match p.car_montecarlo {
                    Some(c) => println!(
                        "mu = {:e}: CAR {:.4e} (model {:.4e})",
                        p.mu, c, p.car_analytic
                    ),
                    None => println!("mu = {:e}: CAR {:.4e}", p.mu, p.car_analytic),
                }
            }
        }
        Command::Plan {
            distances,
            min_visibility,
            min_car,
            upgrade_efficiency,
            counts_per_setting,
            n_settings,
        } => {
            let planned = match upgrade_efficiency {
                Some(e) => with_detector_efficiency(&s, *e).validate()?,
                None => s.clone(),
            };
            let criterion = match (min_visibility, min_car) {
                (_, Some(c)) => Criterion::MinCar(*c),
                (Some(v), None) => Criterion::MinVisibility(*v),
                (None, None) => Criterion::MinVisibility(0.71),
            };
            let distances = distances.clone().unwrap_or_else(|| vec![300.0, 400.0]);
            let r = plan(
                &planned,
                &distances,
                criterion,
                *counts_per_setting,
                *n_settings,
            );
            let table = report::plan_table(&r);
            out.write("plan.csv", report::plan_csv(&r).as_bytes())?;
            out.write("plan.txt", table.as_bytes())?;
            out.write_json("plan.json", &r)?;
            print!("{table}");
        }
        Command::Simulate { theta_s, theta_i } => {
            let hours = global.hours.unwrap_or(s.duration_s / 3600.0);
            let cfg = RunConfig::new(*theta_s, *theta_i, hours * 3600.0, seed);
            let streams = generate_run(&s, &cfg)?;
            let hash = s.content_hash();
            for stream in [&streams.signal, &streams.idler] {
                let mut buf = BufWriter::new(Vec::new());
                write_stream_text(&mut buf, stream, &hash, seed)?;
                let bytes = buf.into_inner().context("flushing stream buffer")?;
                out.write(&format!("{}.txt", stream.channel().name()), &bytes)?;
            }
            println!(
                "signal {} events, idler {} events",
                streams.signal.len(),
                streams.idler.len()
            );
        }
        Command::Replay { .. } => bail!("replay cannot be nested"),
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.name().to_string(),
        argv,
        seed,
        scenario_sha256: s.content_hash(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs: out.records,
        global: global.clone(),
        invocation: command.clone(),
        scenario: scenario.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = out_dir.join(MANIFEST);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

fn replay(manifest_path: &Path, out_override: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let recorded: RunManifest = serde_json::from_str(&text).map_err(|e| timebin::Error::Parse {
        what: manifest_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let out_dir = match out_override {
        Some(d) => d.to_path_buf(),
        None => manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join("replay"),
    };
    let fresh = execute(
        &recorded.global,
        &recorded.invocation,
        &recorded.scenario,
        &out_dir,
        recorded.argv.clone(),
    )?;
    let mut mismatches = Vec::new();
    for old in &recorded.outputs {
        match fresh.outputs.iter().find(|n| n.path == old.path) {
            Some(new) if new.sha256 == old.sha256 => {}
            Some(_) => mismatches.push(format!("{} differs", old.path)),
            None => mismatches.push(format!("{} missing", old.path)),
        }
    }
    if !mismatches.is_empty() {
        bail!("replay mismatch: {}", mismatches.join(", "));
    }
    println!(
        "replay reproduced {} output files in {}",
        recorded.outputs.len(),
        out_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, cli.global.out.as_deref());
    }
    let scenario = ExperimentScenario::load(&cli.global.scenario)
        .with_context(|| format!("loading scenario {}", cli.global.scenario))?;
    let out_dir = cli
        .global
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    let argv = std::env::args().skip(1).collect();
    execute(&cli.global, &cli.command, &scenario, &out_dir, argv)?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ValidationError>().is_some() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<timebin::Error>() {
            return match e {
                timebin::Error::Validation(_) | timebin::Error::Parse { .. } => EXIT_VALIDATION,
                timebin::Error::Io(_) => EXIT_IO,
                _ => EXIT_RUNTIME,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
