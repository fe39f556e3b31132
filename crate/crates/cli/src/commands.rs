use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nearlight_core::estimator::EstimationReport;
use nearlight_core::experiment::{injection_for, scale_error, sweep, Ablation, SweepConfig};
use nearlight_core::recon_io::{
    parse_calibration, parse_observations, parse_report, read_sparse_model_dir, write_albedo_csv, write_profile_csv,
    write_report,
};
use nearlight_core::simulator::{simulate, Dataset, SimulationSpec, Surface, CALIBRATION_FILE, OBSERVATIONS_FILE};
use nearlight_core::{
    estimate, measure_diameter, solve_two_view_scale, CalibrationRig, EstimatorConfig, Injection, LinearSolver,
    ObservationSet, Reconstruction, TwoViewConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::units::parse_id_list;
use crate::Failure;

pub const REPORT_FILE: &str = "report.json";
pub const ALBEDO_FILE: &str = "albedos.csv";
pub const PROFILE_FILE: &str = "profile.csv";

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| input(format!("{}: {e}", path.display())))?);
    serde_json::to_writer_pretty(&mut f, value).map_err(input)?;
    writeln!(f).map_err(input)?;
    f.flush().map_err(input)
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let f = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| input(format!("{}: {e}", path.display())))
}

/// Companion JSON for a CSV artifact: `sweep.csv` pairs with `sweep.json`.
pub fn companion(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub struct SimulateArgs {
    pub spec: SimulationSpec,
    pub output: PathBuf,
}

pub fn simulate_cmd(args: SimulateArgs) -> Result<(), Failure> {
    let ds = simulate(&args.spec)?;
    ds.write(&args.output)?;
    println!(
        "wrote {} points, {} views, {} observations to {}",
        ds.recon.points.len(),
        ds.recon.poses.len(),
        ds.observations.len(),
        args.output.display()
    );
    Ok(())
}

/// Simulation spec from a file holding either a bare spec or a ground-truth
/// sidecar with an embedded one.
pub fn load_spec(path: &Path) -> Result<SimulationSpec, Failure> {
    let mut v = read_json(path)?;
    if let Some(config) = v.get_mut("config") {
        v = config.take();
    }
    serde_json::from_value(v).map_err(|e| input(format!("{}: not a simulation spec: {e}", path.display())))
}

/// Estimator config from a file holding either a bare config or a report
/// with an embedded one.
pub fn load_estimator_config(path: &Path) -> Result<EstimatorConfig, Failure> {
    let v = read_json(path)?;
    let v = match v.get("config").and_then(|c| c.get("estimator")) {
        Some(inner) => inner.clone(),
        None => v,
    };
    serde_json::from_value(v).map_err(|e| input(format!("{}: not an estimator config: {e}", path.display())))
}

pub fn surface_named(name: &str, distance: f64, radius: Option<f64>, height: Option<f64>) -> Result<Surface, Failure> {
    match name {
        "plane" => Ok(Surface::Plane),
        "cap" | "sphere-cap" => {
            let radius = radius.unwrap_or(0.3 * distance);
            let height = height.unwrap_or(0.5 * radius);
            Ok(Surface::SphereCap { radius, height })
        }
        "hemisphere" => {
            let radius = radius.unwrap_or(0.5 * distance);
            Ok(Surface::SphereCap { radius, height: radius })
        }
        "relief" => Ok(Surface::SinusoidalRelief {
            amplitude: height.unwrap_or(0.1 * distance),
            wavelength: radius.unwrap_or(2.0 * distance),
        }),
        other => Err(input(format!("unknown surface '{other}' (expected plane, cap, hemisphere or relief)"))),
    }
}

pub struct EstimateArgs {
    pub input: PathBuf,
    pub calibration: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub config: EstimatorConfig,
    pub output: PathBuf,
    pub dump_profile: bool,
}

fn load_inputs(
    dir: &Path,
    calibration: Option<&Path>,
    observations: Option<&Path>,
) -> Result<(Reconstruction, CalibrationRig, ObservationSet), Failure> {
    let recon = read_sparse_model_dir(dir)?;
    let obs_path = observations.map(Path::to_path_buf).unwrap_or_else(|| dir.join(OBSERVATIONS_FILE));
    let cal_path = calibration.map(Path::to_path_buf).unwrap_or_else(|| dir.join(CALIBRATION_FILE));
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| input(format!("{}: {e}", p.display())));
    let observations = parse_observations(open(&obs_path)?)?;
    let rig = parse_calibration(open(&cal_path)?)?;
    Ok((recon, rig, observations))
}

fn write_report_files(report: &EstimationReport, config: Value, dir: &Path, dump_profile: bool) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(input)?;
    write_report(report, Some(config), BufWriter::new(File::create(dir.join(REPORT_FILE)).map_err(input)?))?;
    write_albedo_csv(report, BufWriter::new(File::create(dir.join(ALBEDO_FILE)).map_err(input)?))?;
    if dump_profile {
        let profile = report
            .residual_profile
            .as_deref()
            .ok_or_else(|| input("no initialization profile to dump (initialization was skipped)"))?;
        write_profile_csv(profile, BufWriter::new(File::create(dir.join(PROFILE_FILE)).map_err(input)?))?;
    }
    Ok(())
}

pub fn estimate_cmd(args: EstimateArgs) -> Result<(), Failure> {
    let (recon, rig, obs) = load_inputs(&args.input, args.calibration.as_deref(), args.observations.as_deref())?;
    let report = estimate(&recon, &rig, &obs, &args.config, &Injection::default())?;
    let config = json!({
        "command": "estimate",
        "input": args.input,
        "calibration": args.calibration,
        "observations": args.observations,
        "estimator": args.config,
    });
    write_report_files(&report, config, &args.output, args.dump_profile)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("lambda {:e}", report.lambda_hat);
    if !report.converged {
        return Err(Failure::NotConverged(format!(
            "solver stopped after {} iterations without meeting a tolerance",
            report.iterations
        )));
    }
    Ok(())
}

pub struct SweepArgs {
    pub config: SweepConfig,
    pub output: PathBuf,
}

pub fn sweep_cmd(args: SweepArgs) -> Result<(), Failure> {
    let rows = sweep(&args.config)?;
    let mut w = csv_writer(&args.output)?;
    w.write_record(["distance_mm", "mean_err_pct", "std_err_pct"]).map_err(input)?;
    for r in &rows {
        w.write_record([
            format!("{:.3}", r.distance * 1e3),
            format!("{}", r.mean_error * 100.0),
            format!("{}", r.std_error * 100.0),
        ])
        .map_err(input)?;
    }
    w.flush().map_err(input)?;
    write_json(
        &companion(&args.output),
        &json!({ "command": "sweep", "config": args.config, "rows": rows }),
    )?;
    for r in &rows {
        println!("{:>6.1} mm  {:>7.3}% +- {:.3}%", r.distance * 1e3, r.mean_error * 100.0, r.std_error * 100.0);
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(input)?;
    }
    csv::Writer::from_path(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

pub fn twoview_cmd(cfg: TwoViewConfig) -> Result<(), Failure> {
    let roots = solve_two_view_scale(&cfg)?;
    for r in roots {
        println!("{r:e}");
    }
    Ok(())
}

pub struct MeasureArgs {
    pub report: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub model: PathBuf,
    pub points: Vec<u64>,
    pub points_file: Option<PathBuf>,
}

pub fn measure_cmd(args: MeasureArgs) -> Result<(), Failure> {
    let lambda = match (args.lambda, &args.report) {
        (Some(l), None) => l,
        (None, Some(path)) => {
            let f = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            parse_report(BufReader::new(f))?.lambda
        }
        _ => return Err(input("give exactly one of --report or --lambda")),
    };
    let mut ids = args.points;
    if let Some(path) = &args.points_file {
        let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        ids.extend(parse_id_list(&text).map_err(input)?);
    }
    let recon = read_sparse_model_dir(&args.model)?;
    // Too few ids is a usage problem here, not an unsolvable dataset.
    let d = measure_diameter(&ids, &recon, lambda).map_err(input)?;
    println!("{d:.3e} m");
    Ok(())
}

pub struct AblateArgs {
    pub input: PathBuf,
    pub ablations: Vec<Ablation>,
    pub config: EstimatorConfig,
    pub output: PathBuf,
}

pub fn ablate_cmd(mut args: AblateArgs) -> Result<(), Failure> {
    if args.ablations.is_empty() {
        return Err(input("nothing to ablate: pass --which or one of the --gt-*/--no-init flags"));
    }
    args.ablations.sort();
    args.ablations.dedup();
    let ds = Dataset::read(&args.input)?;
    let label = args.ablations.iter().map(|a| a.name()).collect::<Vec<_>>().join("+");
    let mut w = csv_writer(&args.output)?;
    w.write_record(["variant", "lambda_hat", "lambda_gt", "error_pct", "iterations", "converged"])
        .map_err(input)?;
    let mut rows = Vec::new();
    for (name, ablations) in [("baseline".to_string(), Vec::new()), (label, args.ablations.clone())] {
        let injection = injection_for(&ds, &ablations)?;
        let report = estimate(&ds.recon, &ds.rig, &ds.observations, &args.config, &injection)?;
        let error = scale_error(&report, &ds);
        w.write_record([
            name.clone(),
            format!("{:e}", report.lambda_hat),
            format!("{:e}", ds.truth.lambda_gt),
            format!("{}", error * 100.0),
            report.iterations.to_string(),
            report.converged.to_string(),
        ])
        .map_err(input)?;
        println!("{name:<24} error {:.4}%", error * 100.0);
        rows.push(json!({ "variant": name, "lambda_hat": report.lambda_hat, "error": error, "converged": report.converged }));
    }
    w.flush().map_err(input)?;
    write_json(
        &companion(&args.output),
        &json!({
            "command": "ablate",
            "input": args.input,
            "ablations": args.ablations,
            "estimator": args.config,
            "rows": rows,
        }),
    )
}

pub fn solver_named(name: &str) -> Result<LinearSolver, String> {
    match name {
        "schur" => Ok(LinearSolver::Schur),
        "dense" => Ok(LinearSolver::Dense),
        other => Err(format!("unknown solver '{other}' (expected schur or dense)")),
    }
}
