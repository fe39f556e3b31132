//! `nearlight`: metric scale from near-light photometry, from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 degenerate or unsolvable data,
//! 4 solver did not converge (the report is still written).

mod commands;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nearlight_core::experiment::{Ablation, SweepConfig};
use nearlight_core::simulator::SimulationSpec;
use nearlight_core::{EstimatorConfig, LinearSolver, TwoViewConfig};

use commands::*;
use units::parse_length;

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Degenerate(String),
    NotConverged(String),
}

impl From<nearlight_core::Error> for Failure {
    fn from(e: nearlight_core::Error) -> Self {
        if e.is_degenerate() {
            Failure::Degenerate(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::NotConverged(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Degenerate(m) | Failure::NotConverged(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "nearlight", version, about = "Metric scale for monocular reconstructions from near-light photometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with known scale.
    Simulate(SimulateOpts),
    /// Estimate the metric scale of a reconstruction.
    Estimate(EstimateOpts),
    /// Mean scale error over simulated trials at several viewing distances.
    Sweep(SweepOpts),
    /// Closed-form scale from one point seen from two views along the axis.
    Twoview(TwoViewOpts),
    /// Longest metric distance between a set of points.
    Measure(MeasureOpts),
    /// Compare an estimate against one with ground truth substituted in.
    Ablate(AblateOpts),
}

#[derive(Args)]
struct SimulateOpts {
    /// plane, cap, hemisphere or relief.
    #[arg(long, default_value = "plane")]
    surface: String,
    /// Viewing distance of the first camera, e.g. `5mm`.
    #[arg(long, value_parser = parse_length, default_value = "5mm")]
    distance: f64,
    #[arg(long, default_value_t = 4)]
    views: usize,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// Side of the square surface patch; defaults to twice the distance.
    #[arg(long, value_parser = parse_length)]
    extent: Option<f64>,
    /// Cap radius (relief: wavelength).
    #[arg(long, value_parser = parse_length)]
    radius: Option<f64>,
    /// Cap height (relief: amplitude).
    #[arg(long, value_parser = parse_length)]
    height: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda_gt: f64,
    /// Pixel noise standard deviation in gray levels out of 255.
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
    /// Gaussian geometry corruption, as a fraction of the patch extent.
    #[arg(long, default_value_t = 0.0)]
    geometry_noise: f64,
    #[arg(long)]
    gamma: Option<f64>,
    /// Fraction of observations replaced by specular highlights.
    #[arg(long, default_value_t = 0.0)]
    specular: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start from a spec file (or a ground_truth.json) instead of the flags above.
    #[arg(long, conflicts_with_all = ["surface", "distance", "views", "points", "extent", "radius", "height", "lambda_gt", "noise", "geometry_noise", "gamma", "specular", "seed"])]
    spec: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

impl SimulateOpts {
    fn resolve(self) -> Result<SimulateArgs, Failure> {
        if let Some(path) = &self.spec {
            return Ok(SimulateArgs {
                spec: load_spec(path)?,
                output: self.output,
            });
        }
        let surface = surface_named(&self.surface, self.distance, self.radius, self.height)?;
        let mut spec = SimulationSpec::endoscope(surface, self.distance, self.seed);
        spec.trajectory.n_views = self.views;
        spec.scene.n_points = self.points;
        if let Some(extent) = self.extent {
            spec.scene.extent = extent;
        }
        spec.lambda_gt = self.lambda_gt;
        spec.noise_sigma = self.noise / 255.0;
        spec.geometry_noise = self.geometry_noise;
        if let Some(g) = self.gamma {
            spec.gamma = g;
        }
        spec.specular_fraction = self.specular;
        Ok(SimulateArgs {
            spec,
            output: self.output,
        })
    }
}

#[derive(Args)]
struct SolverOpts {
    /// Estimator config JSON (or a report.json carrying one); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_samples: Option<usize>,
    /// Huber threshold in gray levels out of 255.
    #[arg(long)]
    huber: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// schur or dense.
    #[arg(long, value_parser = solver_named)]
    solver: Option<LinearSolver>,
    /// Neighbors per normal fit.
    #[arg(long)]
    neighbors: Option<usize>,
}

impl SolverOpts {
    fn resolve(&self) -> Result<EstimatorConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => load_estimator_config(path)?,
            None => EstimatorConfig::default(),
        };
        if let Some(v) = self.grid_min {
            cfg.init.lambda_min = v;
        }
        if let Some(v) = self.grid_max {
            cfg.init.lambda_max = v;
        }
        if let Some(v) = self.grid_samples {
            cfg.init.samples = v;
        }
        if let Some(v) = self.huber {
            cfg.loss.epsilon = v / 255.0;
        }
        if let Some(v) = self.max_iterations {
            cfg.solver.max_iterations = v;
        }
        if let Some(v) = self.solver {
            cfg.solver.linear_solver = v;
        }
        if let Some(v) = self.neighbors {
            cfg.normals.p = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct EstimateOpts {
    /// Directory with cameras.txt, images.txt, points3D.txt and usually
    /// observations.csv and calibration.json.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Also write the initialization cost profile as profile.csv.
    #[arg(long)]
    dump_profile: bool,
    #[command(flatten)]
    solver: SolverOpts,
    /// Output directory for report.json and albedos.csv.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SweepOpts {
    /// Comma-separated distances; defaults to 3mm through 20mm in 1 mm steps.
    #[arg(long, value_delimiter = ',', value_parser = parse_length)]
    distances: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pixel noise in gray levels out of 255.
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    geometry_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_gt: f64,
    #[command(flatten)]
    solver: SolverOpts,
    /// CSV output; the resolved config and per-trial results go next to it as JSON.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TwoViewOpts {
    /// Camera-light baseline, e.g. `3mm`.
    #[arg(long, value_parser = parse_length)]
    b: f64,
    /// Point depth in the first view, reconstruction units.
    #[arg(long, allow_negative_numbers = true)]
    z: f64,
    /// Axial camera translation between the views, reconstruction units.
    #[arg(long, allow_negative_numbers = true)]
    t: f64,
    #[arg(long)]
    i1: f64,
    #[arg(long)]
    i2: f64,
}

#[derive(Args)]
struct MeasureOpts {
    /// Estimation report providing the scale.
    #[arg(long, conflicts_with = "lambda")]
    report: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Directory with the sparse model the point ids refer to.
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated point ids.
    #[arg(long, value_delimiter = ',')]
    points: Vec<u64>,
    /// File with whitespace- or comma-separated point ids.
    #[arg(long)]
    points_file: Option<PathBuf>,
}

#[derive(Args)]
struct AblateOpts {
    /// Simulated dataset directory (with ground-truth sidecars).
    #[arg(short, long)]
    input: PathBuf,
    /// gt-normals, gt-gains, gt-poses or no-init; repeatable.
    #[arg(long, value_parser = |s: &str| s.parse::<Ablation>().map_err(|e| e.to_string()))]
    which: Vec<Ablation>,
    #[arg(long)]
    gt_normals: bool,
    #[arg(long)]
    gt_gains: bool,
    #[arg(long)]
    gt_poses: bool,
    #[arg(long)]
    no_init: bool,
    #[command(flatten)]
    solver: SolverOpts,
    /// Comparison CSV; the resolved config goes next to it as JSON.
    #[arg(short, long)]
    output: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(o) => simulate_cmd(o.resolve()?),
        Command::Estimate(o) => {
            let config = o.solver.resolve()?;
            estimate_cmd(EstimateArgs {
                input: o.input,
                calibration: o.calibration,
                observations: o.observations,
                config,
                output: o.output,
                dump_profile: o.dump_profile,
            })
        }
        Command::Sweep(o) => {
            let config = SweepConfig {
                distances: if o.distances.is_empty() {
                    (3..=20).map(|mm| mm as f64 * 1e-3).collect()
                } else {
                    o.distances
                },
                trials: o.trials,
                seed: o.seed,
                noise_sigma: o.noise / 255.0,
                geometry_noise: o.geometry_noise,
                lambda_gt: o.lambda_gt,
                ablations: Vec::new(),
                estimator: o.solver.resolve()?,
            };
            sweep_cmd(SweepArgs {
                config,
                output: o.output,
            })
        }
        Command::Twoview(o) => twoview_cmd(TwoViewConfig {
            b: o.b,
            z: o.z,
            t: o.t,
            i1: o.i1,
            i2: o.i2,
        }),
        Command::Measure(o) => measure_cmd(MeasureArgs {
            report: o.report,
            lambda: o.lambda,
            model: o.model,
            points: o.points,
            points_file: o.points_file,
        }),
        Command::Ablate(o) => {
            let mut ablations = o.which;
            for (on, a) in [
                (o.gt_normals, Ablation::GtNormals),
                (o.gt_gains, Ablation::GtGains),
                (o.gt_poses, Ablation::GtPoses),
                (o.no_init, Ablation::NoInit),
            ] {
                if on {
                    ablations.push(a);
                }
            }
            ablate_cmd(AblateArgs {
                input: o.input,
                ablations,
                config: o.solver.resolve()?,
                output: o.output,
            })
        }
    }
}

fn main() -> ExitCode {
    // clap reports usage errors (unknown flags included) with exit code 2.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
