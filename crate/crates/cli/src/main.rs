//! Command-line front-end: synthetic scene generation, pairwise
//! registration, odometry over a scan directory, and trajectory evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence
//! (register only).

use clap::{Parser, Subcommand};
use doppler_odom::eval::{relative_pose_errors, summarize};
use doppler_odom::geometry::Pose;
use doppler_odom::io::config::{load_config, load_scene_spec};
use doppler_odom::io::ply::{read_doppler_ply, write_doppler_ply};
use doppler_odom::io::report::write_csv;
use doppler_odom::io::tum::{read_tum, write_tum};
use doppler_odom::pipeline::{run_odometry, PipelineConfig};
use doppler_odom::register::{register, source_from_scan};
use doppler_odom::scan::estimate_normals;
use doppler_odom::synth::{generate_sequence, preset, standard_scenes};
use nalgebra_quat_parse::parse_tum_pose;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

// Small local helper namespace; keeps quaternion parsing near its one use.
mod nalgebra_quat_parse {
    use doppler_odom::geometry::{Pose, Rot3, Vec3};

    /// Parses a TUM pose line `t tx ty tz qx qy qz qw` (timestamp ignored).
    pub fn parse_tum_pose(line: &str) -> Result<Pose, String> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        if vals.len() != 8 {
            return Err(format!("expected 8 fields, got {}", vals.len()));
        }
        let q = nalgebra::Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(format!("quaternion norm {} is not unit", q.norm()));
        }
        Ok(Pose::new(
            Rot3::from_quaternion(&nalgebra::UnitQuaternion::from_quaternion(q)),
            Vec3::new(vals[1], vals[2], vals[3]),
        ))
    }
}

#[derive(Parser)]
#[command(name = "doppler-odom", version, about = "Doppler-aware point-cloud registration and odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scan sequence plus ground truth
    Synth {
        /// Scene preset name or path to a TOML scene spec
        scene: String,
        /// Output directory for <nanoseconds>.ply scans and gt.tum
        #[arg(long)]
        out: PathBuf,
        /// Override the scene seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Register a source scan onto a target scan and print the transform
    Register {
        source: PathBuf,
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Initial pose as a TUM line: "t tx ty tz qx qy qz qw"
        #[arg(long)]
        init: Option<String>,
        /// Stage ablations; only `dr` applies to pairwise registration
        #[arg(long)]
        ablate: Vec<String>,
    },
    /// Run odometry over a directory of PLY scans
    Odom {
        scan_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output trajectory (TUM format)
        #[arg(long)]
        out: PathBuf,
        /// Disable stages: vf, dpp, dr (repeatable)
        #[arg(long)]
        ablate: Vec<String>,
        /// Optional per-frame statistics CSV
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Compare an estimated trajectory against ground truth
    Eval {
        est: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Data(String),
    NonConverged,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NonConverged => 3,
        }
    }
}

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn load_config_or_default(path: &Option<PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => load_config(p).map_err(data_err),
        None => Ok(PipelineConfig::default()),
    }
}

fn run_synth(scene: &str, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec = if Path::new(scene).is_file() {
        load_scene_spec(Path::new(scene)).map_err(data_err)?
    } else {
        preset(scene).map_err(|e| {
            CliError::Usage(format!(
                "{e}; presets: {}",
                standard_scenes().join(", ")
            ))
        })?
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    std::fs::create_dir_all(out).map_err(data_err)?;
    let (scans, truth) = generate_sequence(&spec).map_err(data_err)?;
    for scan in &scans {
        let ns = (scan.timestamp * 1e9).round() as u128;
        let path = out.join(format!("{ns:019}.ply"));
        write_doppler_ply(scan, &path, true).map_err(data_err)?;
    }
    write_tum(&truth.trajectory(), &out.join("gt.tum")).map_err(data_err)?;
    println!(
        "wrote {} scans and gt.tum to {}",
        scans.len(),
        out.display()
    );
    Ok(())
}

fn run_register(
    source: &Path,
    target: &Path,
    config: &Option<PathBuf>,
    init: &Option<String>,
    ablate: &[String],
) -> Result<(), CliError> {
    let mut config = load_config_or_default(config)?;
    for a in ablate {
        match a.as_str() {
            "dr" => config.pipeline.enable_dr = false,
            other => {
                return Err(CliError::Usage(format!(
                    "--ablate {other} does not apply to register (only dr)"
                )))
            }
        }
    }
    let init_pose = match init {
        Some(line) => parse_tum_pose(line).map_err(CliError::Usage)?,
        None => Pose::identity(),
    };
    let src_scan = read_doppler_ply(source, &config.scan).map_err(data_err)?;
    let tgt_scan = read_doppler_ply(target, &config.scan).map_err(data_err)?;
    if src_scan.is_empty() || tgt_scan.is_empty() {
        return Err(CliError::Data("empty scan after ingestion".into()));
    }
    let src_ds = doppler_odom::scan::voxel_downsample(&src_scan, config.scan.voxel_size);
    let tgt_ds = doppler_odom::scan::voxel_downsample(&tgt_scan, config.scan.voxel_size);
    let normals = estimate_normals(&tgt_ds, config.scan.normal_k, config.scan.normal_radius);
    let mut params = config.registration.clone();
    if !config.pipeline.enable_dr {
        params.lambda_v = 0.0;
    }
    let result = register(
        &source_from_scan(&src_ds),
        &tgt_ds,
        &normals,
        &init_pose,
        &params,
    )
    .map_err(data_err)?;

    let q = result.pose.rotation.to_quaternion();
    let qv = q.as_vector();
    println!(
        "translation={} {} {}",
        result.pose.translation.x, result.pose.translation.y, result.pose.translation.z
    );
    println!("quaternion={} {} {} {}", qv[0], qv[1], qv[2], qv[3]);
    println!("iterations={}", result.iterations);
    println!("converged={}", result.converged);
    println!("correspondences={}", result.correspondence_count);
    println!("final_cost={}", result.final_cost);
    println!("rms_geometry={}", result.rms_geometry);
    println!("rms_doppler={}", result.rms_doppler);
    if !result.converged {
        return Err(CliError::NonConverged);
    }
    Ok(())
}

fn run_odom(
    scan_dir: &Path,
    config: &Option<PathBuf>,
    out: &Path,
    ablate: &[String],
    stats_out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let mut config = load_config_or_default(config)?;
    for a in ablate {
        match a.as_str() {
            "vf" => config.pipeline.enable_vf = false,
            "dpp" => config.pipeline.enable_dpp = false,
            "dr" => config.pipeline.enable_dr = false,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown --ablate value '{other}' (expected vf, dpp, or dr)"
                )))
            }
        }
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scan_dir)
        .map_err(data_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ply"))
        .collect();
    paths.sort();
    let mut scans = Vec::with_capacity(paths.len());
    for path in &paths {
        match read_doppler_ply(path, &config.scan) {
            Ok(scan) => scans.push(scan),
            Err(e) => eprintln!("skipping unreadable scan {}: {e}", path.display()),
        }
    }
    let (trajectory, stats) = run_odometry(&scans, &config).map_err(data_err)?;
    write_tum(&trajectory, out).map_err(data_err)?;
    if let Some(stats_path) = stats_out {
        let mut text = String::from(
            "timestamp,iterations,converged,correspondences,dynamic_points,clusters_retained,seconds\n",
        );
        for s in &stats {
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.timestamp,
                s.iterations,
                s.converged,
                s.correspondences,
                s.dynamic_points,
                s.clusters_retained,
                s.timings.total()
            ));
        }
        std::fs::write(stats_path, text).map_err(data_err)?;
    }
    let converged = stats.iter().filter(|s| s.converged).count();
    println!(
        "odometry over {} scans: {}/{} frames converged, trajectory -> {}",
        scans.len(),
        converged,
        stats.len(),
        out.display()
    );
    Ok(())
}

fn run_eval(est: &Path, gt: &Path, out: &Path) -> Result<(), CliError> {
    let est_traj = read_tum(est).map_err(data_err)?;
    let gt_traj = read_tum(gt).map_err(data_err)?;
    let errors = relative_pose_errors(&est_traj, &gt_traj, 1e-3).map_err(data_err)?;
    let report = summarize(errors, &[], &[], 0.0);
    write_csv(&report, out).map_err(data_err)?;
    println!("frames={}", report.frames.len());
    println!("mean_rte_m={}", report.mean_rte);
    println!("median_rte_m={}", report.median_rte);
    println!("rmse_rte_m={}", report.rmse_rte);
    println!("mean_rre_deg={}", report.mean_rre_deg);
    println!("median_rre_deg={}", report.median_rre_deg);
    println!("rmse_rre_deg={}", report.rmse_rre_deg);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth { scene, out, seed } => run_synth(scene, out, *seed),
        Command::Register {
            source,
            target,
            config,
            init,
            ablate,
        } => run_register(source, target, config, init, ablate),
        Command::Odom {
            scan_dir,
            config,
            out,
            ablate,
            stats,
        } => run_odom(scan_dir, config, out, ablate, stats),
        Command::Eval { est, gt, out } => run_eval(est, gt, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap already formats help/version output
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(msg) => eprintln!("usage error: {msg}"),
                CliError::Data(msg) => eprintln!("error: {msg}"),
                CliError::NonConverged => eprintln!("registration did not converge"),
            }
            ExitCode::from(err.code())
        }
    }
}
