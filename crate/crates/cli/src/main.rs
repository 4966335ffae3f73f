use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dbdm::bench::{corrupt_map, run_compare, run_sequence, MapperKind};
use dbdm::depth_image::generate_depth_image;
use dbdm::scanlog::{load_scan_log, save_scan_log};
use dbdm::scene::{
    load_scene, load_trajectory, random_room, save_scene, save_trajectory, simulate_sequence, RoomSpec, ScanPattern,
};
use dbdm::types::INFLATION_CUBE;
use dbdm::{Error, MapConfig, ProjectionAxis, RayMode, Vector};

#[derive(Parser)]
#[command(name = "dbdm", version, about = "Boundary occupancy mapping benchmarks")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scan log and write per-scan statistics as CSV.
    Run(RunArgs),
    /// Run both mappers on a scan log and report voxel state mismatches.
    Compare(CompareArgs),
    /// Simulate a scan log from a scene and a trajectory.
    Gen(GenArgs),
    /// Write a random furnished room and a trajectory through it.
    GenScene(GenSceneArgs),
}

#[derive(Args)]
struct MapArgs {
    /// Voxel edge length in meters.
    #[arg(long, default_value_t = 0.25)]
    resolution: f64,
    /// Sensing range in meters.
    #[arg(long, default_value_t = 20.0)]
    range: f64,
    /// Depth-image pixel size in radians [default: one degree].
    #[arg(long)]
    psi: Option<f64>,
    /// Projected voxel diameter in voxel edges.
    #[arg(long, default_value_t = INFLATION_CUBE)]
    inflation: f64,
    #[arg(long, value_enum, default_value_t = Axis::Z)]
    axis: Axis,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

impl MapArgs {
    fn config(&self) -> MapConfig {
        MapConfig {
            resolution: self.resolution,
            range: self.range,
            psi: self.psi.unwrap_or(MapConfig::default().psi),
            inflation: self.inflation,
            projection_axis: match self.axis {
                Axis::X => ProjectionAxis::X,
                Axis::Y => ProjectionAxis::Y,
                Axis::Z => ProjectionAxis::Z,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MapperArg {
    Dense,
    Boundary,
}

#[derive(Clone, Copy, ValueEnum)]
enum RaysArg {
    /// One ray per depth-image pixel.
    Pixel,
    /// One ray per raw return (dense mapper only).
    Point,
}

#[derive(Args)]
struct RunArgs {
    scanlog: PathBuf,
    #[command(flatten)]
    map: MapArgs,
    #[arg(long, value_enum, default_value_t = MapperArg::Boundary)]
    mapper: MapperArg,
    #[arg(long, value_enum, default_value_t = RaysArg::Pixel)]
    rays: RaysArg,
    /// Write the final map here.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the depth image of the last scan here, as PGM.
    #[arg(long)]
    depth_pgm: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    scanlog: PathBuf,
    #[command(flatten)]
    map: MapArgs,
    /// Write the final boundary map here.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Tamper with the boundary map before comparing.
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    n_azimuth: usize,
    #[arg(long, default_value_t = 32)]
    n_elevation: usize,
    /// Elevation span in degrees, centered on the horizon.
    #[arg(long, default_value_t = 45.0)]
    elevation_span: f64,
    #[arg(long, default_value_t = 20.0)]
    max_range: f64,
}

#[derive(Args)]
struct GenSceneArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, default_value_t = 10)]
    scans: usize,
    /// Inner room size in meters.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], default_values_t = [30.0, 30.0, 10.0])]
    size: Vec<f64>,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn export(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> anyhow::Result<()> {
    let mut out = create(path)?;
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let scans = load_scan_log(&args.scanlog)?;
    let kind = match args.mapper {
        MapperArg::Dense => MapperKind::Dense,
        MapperArg::Boundary => MapperKind::Boundary,
    };
    let rays = match args.rays {
        RaysArg::Pixel => RayMode::PerPixel,
        RaysArg::Point => RayMode::PerPoint,
    };
    let config = args.map.config();
    let (mapper, summary) = run_sequence(&scans, kind, config, rays)?;
    match &args.csv {
        Some(path) => export(path, |out| summary.write_csv(out))?,
        None => summary.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &args.export {
        export(path, |out| mapper.export(out))?;
    }
    if let (Some(path), Some(last)) = (&args.depth_pgm, scans.last()) {
        let image = generate_depth_image(&last.filtered(&config), config.psi);
        export(path, |out| image.write_pgm(out, config.range))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let scans = load_scan_log(&args.scanlog)?;
    let config = args.map.config();
    let (mut report, mut mapper, grid) = run_compare(&scans, config)?;
    if args.corrupt {
        if let Some(key) = corrupt_map(mapper.map_mut()) {
            eprintln!("corrupted record {key}");
        }
        report = dbdm::bench::compare_maps(&grid, mapper.map())?;
    }
    report.write(io::stdout().lock())?;
    if let Some(path) = &args.export {
        export(path, |out| mapper.map().export(out))?;
    }
    Ok(if report.is_match() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<ExitCode> {
    let scene = load_scene(&args.scene)?;
    let poses = load_trajectory(&args.trajectory)?;
    let pattern = ScanPattern {
        n_azimuth: args.n_azimuth,
        n_elevation: args.n_elevation,
        elevation_span: args.elevation_span.to_radians(),
        max_range: args.max_range,
    };
    pattern.validate()?;
    let scans = simulate_sequence(&scene, &poses, &pattern)?;
    save_scan_log(&args.out, &scans)?;
    eprintln!("{} frames; pattern spacing {} rad (use as --psi)", scans.len(), pattern.angular_spacing());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_scene(args: GenSceneArgs) -> anyhow::Result<ExitCode> {
    let spec = RoomSpec { size: Vector::new(args.size[0], args.size[1], args.size[2]), scans: args.scans, ..Default::default() };
    if !(spec.size.x > 8.5 && spec.size.y > 8.5 && spec.size.z > 2.5) {
        return Err(Error::InvalidConfig("room must exceed 8.5 × 8.5 × 2.5 m".into()).into());
    }
    let (scene, poses) = random_room(&spec, args.seed);
    save_scene(&args.scene, &scene)?;
    save_trajectory(&args.trajectory, &poses)?;
    Ok(ExitCode::SUCCESS)
}

/// Input and configuration problems exit with 2, everything else with 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Parse { .. }
            | Error::EmptyInput { .. }
            | Error::Io { .. }
            | Error::InvalidConfig(_)
            | Error::InvalidPattern(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Gen(args) => cmd_gen(args),
        Command::GenScene(args) => cmd_gen_scene(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
