use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mvmot::metrics::evaluate;
use mvmot::simulator::{corner_rig, RigSpec, Scenario, Simulator};
use mvmot::skeleton::KeypointConvention;
use mvmot_cli::config::{Overrides, RunConfig};
use mvmot_cli::experiments;
use mvmot_cli::formats::{self, CalibrationFile, ScenarioFile, ScheduleFile};
use mvmot_cli::report::{self, ReportFormat};

#[derive(Parser)]
#[command(name = "mvmot", version, about = "Online multi-camera 3D tracking and pose estimation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (tracker and metric settings)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Assignment cost threshold
    #[arg(long, global = true)]
    tau_c: Option<f64>,
    /// Ground-plane gating distance in meters
    #[arg(long, global = true)]
    tau_g: Option<f64>,
    #[arg(long, global = true)]
    max_misses: Option<u32>,
    /// Mean-shift bandwidth for births, meters
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// Keypoint count: 15, 18 or 25
    #[arg(long, global = true, value_parser = parse_keypoints)]
    keypoints: Option<KeypointConvention>,
    #[arg(long, global = true, value_enum, default_value_t)]
    report: ReportFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Write the calibration of a four-camera corner rig
    Rig {
        #[arg(long)]
        out: PathBuf,
        /// JSON rig geometry; defaults to a 10 m square
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Render a scenario into detections, calibration and ground truth
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Fraction of detections removed after rendering
        #[arg(long)]
        deletion_rate: Option<f64>,
    },
    /// Track a detection file and write trajectories
    Track {
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score estimated trajectories against ground truth
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Write an SVG plot of OSPA(2) over time
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Track one scenario under several assignment cost thresholds
    SweepTau {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
    },
    /// Compare a camera schedule against the all-cameras baseline
    Reconfig {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Pose error under random detection deletion
    Ablate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.3, 0.5])]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 25)]
        runs: usize,
    },
}

fn parse_keypoints(s: &str) -> Result<KeypointConvention, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    KeypointConvention::from_count(n).map_err(|e| e.to_string())
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => formats::read_json::<RunConfig>(path)?,
            None => RunConfig::default(),
        };
        let config = base.apply(&Overrides {
            seed: self.seed,
            tau_c: self.tau_c,
            tau_g: self.tau_g,
            max_misses: self.max_misses,
            bandwidth: self.bandwidth,
            keypoints: self.keypoints,
        });
        config.validate()?;
        Ok(config)
    }
}

fn load_scenario(path: &Path, config: &RunConfig) -> Result<Scenario> {
    let file: ScenarioFile = formats::read_json(path)?;
    formats::check_version(file.version)?;
    let mut scenario = file.scenario;
    if let Some(seed) = config.seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = cli.common.run_config()?;
    let format = cli.common.report;
    match cli.command {
        Command::Rig { out, spec } => {
            let spec = match spec {
                Some(p) => formats::read_json::<RigSpec>(&p)?,
                None => RigSpec::default(),
            };
            write(&out, &formats::to_json(&CalibrationFile::new(corner_rig(&spec)?)))?;
        }
        Command::Simulate { scenario, out_dir, deletion_rate } => {
            let scenario = load_scenario(&scenario, &config)?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let keypoints = scenario.keypoints.count();
            let calibration = CalibrationFile::new(scenario.cameras.clone());
            let seed = scenario.seed;
            let sim = Simulator::new(scenario)?;
            let detections = experiments::render_all(&sim, deletion_rate.map(|r| (r, seed)));
            write(&out_dir.join("detections.csv"), &formats::write_detections(&detections))?;
            write(&out_dir.join("calibration.json"), &formats::to_json(&calibration))?;
            write(&out_dir.join("ground_truth.csv"), &formats::write_trajectories(sim.ground_truth(), keypoints))?;
        }
        Command::Track { calibration, detections, out } => {
            let calibration: CalibrationFile = formats::read_json(&calibration)?;
            formats::check_version(calibration.version)?;
            let cameras = calibration.cameras()?;
            let text = formats::read_to_string(&detections)?;
            let detections =
                formats::parse_detections(&text).with_context(|| format!("reading {}", detections.display()))?;
            let run = experiments::track_detections(&detections, &cameras, &config.tracker)?;
            write(&out, &formats::write_trajectories(&run.estimates, config.tracker.keypoints.count()))?;
            eprintln!("tracked {} frames at {:.1} FPS*", run.frames, run.fps());
        }
        Command::Evaluate { gt, est, plot } => {
            let parse = |p: &Path| -> Result<_> {
                let text = formats::read_to_string(p)?;
                formats::parse_trajectories(&text).with_context(|| format!("reading {}", p.display()))
            };
            let result = evaluate(&parse(&gt)?, &parse(&est)?, &config.metrics)?;
            print!("{}", report::metrics(&result, format));
            if let Some(p) = plot {
                write(&p, &report::svg_plot("OSPA(2) over time", "OSPA(2)", &[("estimate", &result.ospa2_series)]))?;
            }
        }
        Command::SweepTau { scenario, grid } => {
            let scenario = load_scenario(&scenario, &config)?;
            let rows = experiments::sweep_tau(&scenario, &config.tracker, &config.metrics, &grid)?;
            print!("{}", report::sweep(&rows, format));
        }
        Command::Reconfig { scenario, schedule, plot } => {
            let scenario = load_scenario(&scenario, &config)?;
            let schedule: ScheduleFile = formats::read_json(&schedule)?;
            formats::check_version(schedule.version)?;
            let result = experiments::reconfig(&scenario, &schedule, &config.tracker, &config.metrics)?;
            print!("{}", report::reconfig(&result, format));
            if let Some(p) = plot {
                let series = [("all cameras", result.baseline.as_slice()), ("scheduled", result.reconfigured.as_slice())];
                write(&p, &report::svg_plot("OSPA(2) under camera reconfiguration", "OSPA(2)", &series))?;
            }
        }
        Command::Ablate { scenario, rates, runs } => {
            let scenario = load_scenario(&scenario, &config)?;
            let rows = experiments::ablate(&scenario, &config.tracker, &config.metrics, &rates, runs)?;
            print!("{}", report::ablation(&rows, format));
        }
    }
    Ok(())
}
