use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fvv_cli::{load_config, orbit_reference, parse_size, parse_vec3, run_pipeline, run_stage, OrbitRequest, Overrides, RenderRequest, Stage, StageError, StageOptions};

#[derive(Parser)]
#[command(name = "fvv", version, about = "Occlusion-aware billboard free-viewpoint pipeline")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene into frames and calibration.
    Synth(Common),
    /// Background models and silhouettes.
    Segment(Common),
    /// Visual hull, labeling and noise filtering.
    Carve(Common),
    /// Marching-cubes mesh per object.
    Mesh(Common),
    /// Depth and label maps per camera.
    Viewmaps(Common),
    /// Textured billboards per camera and object.
    Billboards(Common),
    /// Write the scene directory (scene.json plus textures).
    Export(Common),
    /// Render a virtual view of the exported scene.
    Render(RenderArgs),
    /// Run segment through export.
    Pipeline(Common),
    /// Check a config file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Emit the reference camera for each pose of a horizontal orbit.
    OrbitReference(OrbitArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    frame: Option<u32>,
    /// Output directory, overriding `paths.output`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    tau: Option<u32>,
    #[arg(long)]
    t_min: Option<u64>,
    #[arg(long)]
    t_max: Option<u64>,
    #[arg(long)]
    depth_eps: Option<f64>,
    #[arg(long)]
    min_observing: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            output: self.output.clone(),
            voxel_size: self.voxel_size,
            tau: self.tau,
            t_min: self.t_min,
            t_max: self.t_max,
            depth_eps: self.depth_eps,
            min_observing: self.min_observing,
        }
    }
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    /// Viewpoint `x,y,z` in meters.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    view: Option<[f64; 3]>,
    /// Look-at point `x,y,z` in meters.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    lookat: Option<[f64; 3]>,
    /// Vertical field of view in degrees.
    #[arg(long)]
    fov: Option<f64>,
    /// Image size `WxH`.
    #[arg(long, value_parser = parse_size)]
    size: Option<(u32, u32)>,
    /// PNG path; defaults to `renders/f<N>.png` in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OrbitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,1")]
    center: [f64; 3],
    #[arg(long, default_value_t = 40.0)]
    radius: f64,
    #[arg(long, default_value_t = 10.0)]
    height: f64,
    #[arg(long, default_value_t = 360)]
    steps: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (stage, common, opts) = match cli.command {
        Command::Validate { config } => {
            load_config(&config, &Overrides::default()).map_err(StageError::Config)?;
            println!("{}: ok", config.display());
            return Ok(());
        }
        Command::OrbitReference(a) => {
            let cfg = load_config(&a.common.config, &a.common.overrides()).map_err(StageError::Config)?;
            let req = OrbitRequest {
                center: a.center,
                radius: a.radius,
                height: a.height,
                steps: a.steps,
                output: a.out,
            };
            let (path, samples) = orbit_reference(&cfg, &req)?;
            println!("{} samples written to {}", samples.len(), path.display());
            return Ok(());
        }
        Command::Pipeline(c) => {
            let cfg = load_config(&c.config, &c.overrides()).map_err(StageError::Config)?;
            let opts = StageOptions { frame: c.frame, ..Default::default() };
            for r in run_pipeline(&cfg, &opts)? {
                println!("{}: {:.0} ms", r.stage, r.wall_ms);
            }
            return Ok(());
        }
        Command::Render(r) => {
            let opts = StageOptions {
                frame: r.common.frame,
                render: RenderRequest {
                    view: r.view,
                    look_at: r.lookat,
                    fov_deg: r.fov,
                    size: r.size,
                    output: r.out,
                },
            };
            (Stage::Render, r.common, opts)
        }
        Command::Synth(c) => (Stage::Synth, c, StageOptions::default()),
        Command::Segment(c) => (Stage::Segment, c, StageOptions::default()),
        Command::Carve(c) => (Stage::Carve, c, StageOptions::default()),
        Command::Mesh(c) => (Stage::Mesh, c, StageOptions::default()),
        Command::Viewmaps(c) => (Stage::Viewmaps, c, StageOptions::default()),
        Command::Billboards(c) => (Stage::Billboards, c, StageOptions::default()),
        Command::Export(c) => (Stage::Export, c, StageOptions::default()),
    };
    let opts = StageOptions { frame: common.frame, ..opts };
    let cfg = load_config(&common.config, &common.overrides()).map_err(StageError::Config)?;
    let report = run_stage(stage, &cfg, &opts).with_context(|| format!("stage {stage} failed"))?;
    println!("{stage}: {} output files in {:.0} ms", report.outputs.len(), report.wall_ms);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<StageError>()).map_or(StageError::EXIT_INTERNAL, StageError::exit_code);
            ExitCode::from(code)
        }
    }
}
