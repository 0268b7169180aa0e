use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deformcap::deform::Lambdas;
use deformcap::object_pose::InitDistribution;
use deformcap::pipeline::{self, PipelineConfig, SequenceInputs};
use deformcap::synth::{self, Scenario};
use deformcap::Error;

#[derive(Parser)]
#[command(name = "deformcap", version, about = "Multi-view reconstruction of hands pressing deformable objects")]
struct Cli {
    /// Write the rasterized label plane of every frame and view as PGM into this directory.
    #[arg(long, global = true, value_name = "DIR")]
    dump_render: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence with ground truth.
    Synth {
        #[arg(long, default_value = "press")]
        scenario: Scenario,
        #[arg(long, default_value_t = 11)]
        frames: usize,
        #[arg(long, default_value_t = 8)]
        views: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hand tracking: triangulation, model fit and smoothing.
    HandTrack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        conf_thresh: Option<f64>,
        #[arg(long)]
        smooth_alpha: Option<f64>,
    },
    /// Rigid object pose by genetic search.
    ObjectPose {
        #[command(flatten)]
        common: Common,
        /// Hand stage output used for occlusion.
        #[arg(long)]
        hand: Option<PathBuf>,
        #[command(flatten)]
        ga: GaArgs,
    },
    /// Non-rigid deformation of the posed template.
    Deform {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        objpose: PathBuf,
        #[arg(long)]
        hand: Option<PathBuf>,
        #[command(flatten)]
        deform: DeformArgs,
    },
    /// Per-vertex displacement maps between posed template and deformed mesh.
    ContactMap {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        objpose: PathBuf,
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a run directory against a sequence manifest.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Sequence manifest; its ground truth is used when present.
        #[arg(long)]
        gt: PathBuf,
        /// Output path; `.csv` writes CSV, anything else JSON.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        voxel_mm: f64,
    },
    /// Full pipeline over a sequence.
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        ga: GaArgs,
        #[command(flatten)]
        deform: DeformArgs,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON pipeline configuration; command-line options take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init: Option<InitDistribution>,
}

#[derive(Args)]
struct DeformArgs {
    /// Term weights cont,silh,temp,rigid,reg.
    #[arg(long, value_parser = parse_lambdas)]
    lambdas: Option<Lambdas>,
    #[arg(long)]
    node_spacing: Option<f64>,
}

fn parse_lambdas(s: &str) -> Result<Lambdas, String> {
    Lambdas::parse(s).ok_or_else(|| "expected 5 comma-separated non-negative weights".to_string())
}

impl GaArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let ga = &mut cfg.object_pose;
        if let Some(p) = self.pop {
            ga.population_size = p;
        }
        if let Some(i) = self.iters {
            ga.iterations = i;
        }
        if let Some(s) = self.seed {
            ga.seed = s;
        }
        if let Some(i) = self.init {
            ga.init = i;
        }
    }
}

impl DeformArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(l) = self.lambdas {
            cfg.deform.lambdas = l;
        }
        if let Some(s) = self.node_spacing {
            cfg.deform.node_spacing = s;
        }
    }
}

fn load_config(path: Option<&Path>, overrides: impl FnOnce(&mut PipelineConfig)) -> deformcap::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    overrides(&mut cfg);
    cfg.validate()?;
    eprintln!("effective configuration:\n{}", cfg.to_json());
    Ok(cfg)
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn dump(cli_dump: &Option<PathBuf>, manifest: &Path, run_dir: &Path) -> deformcap::Result<()> {
    if let Some(dir) = cli_dump {
        let inputs = SequenceInputs::load(manifest)?;
        let n = pipeline::dump_renders(&inputs, run_dir, dir)?;
        log::info!("wrote {n} label images to {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> deformcap::Result<()> {
    match cli.command {
        Command::Synth {
            scenario,
            frames,
            views,
            seed,
            fps,
            out,
        } => {
            init_logging("info");
            let path = match scenario {
                Scenario::Table1 => synth::write_table1(&synth::make_table1(seed), &out)?,
                Scenario::Press => synth::write_scene(&synth::make_press_sequence(frames, views, seed), &out, fps)?,
                Scenario::Orbit => synth::write_scene(&synth::make_orbit_sequence(frames, views, seed), &out, fps)?,
            };
            println!("{}", path.display());
        }
        Command::HandTrack {
            common,
            conf_thresh,
            smooth_alpha,
        } => {
            let cfg = load_config(common.config.as_deref(), |c| {
                if let Some(t) = conf_thresh {
                    c.hand.conf_threshold = t;
                }
                if let Some(a) = smooth_alpha {
                    c.hand_smoothing_alpha = a;
                }
            })?;
            init_logging(&cfg.log_level);
            let inputs = SequenceInputs::load(&common.manifest)?;
            pipeline::run_hand_stage(&inputs, &cfg, &common.out)?;
            dump(&cli.dump_render, &common.manifest, &common.out)?;
        }
        Command::ObjectPose { common, hand, ga } => {
            let cfg = load_config(common.config.as_deref(), |c| ga.apply(c))?;
            init_logging(&cfg.log_level);
            let inputs = SequenceInputs::load(&common.manifest)?;
            pipeline::run_object_stage(&inputs, hand.as_deref(), &cfg, &common.out)?;
            dump(&cli.dump_render, &common.manifest, &common.out)?;
        }
        Command::Deform {
            common,
            objpose,
            hand,
            deform,
        } => {
            let cfg = load_config(common.config.as_deref(), |c| deform.apply(c))?;
            init_logging(&cfg.log_level);
            let inputs = SequenceInputs::load(&common.manifest)?;
            pipeline::run_deform_stage(&inputs, &objpose, hand.as_deref(), &cfg, &common.out)?;
            dump(&cli.dump_render, &common.manifest, &common.out)?;
        }
        Command::ContactMap {
            manifest,
            objpose,
            meshes,
            out,
        } => {
            init_logging("info");
            let inputs = SequenceInputs::load(&manifest)?;
            pipeline::run_contact_stage(&inputs, &objpose, &meshes, &out)?;
        }
        Command::Eval {
            pred,
            gt,
            report,
            voxel_mm,
        } => {
            init_logging("info");
            let inputs = SequenceInputs::load(&gt)?;
            let r = pipeline::evaluate_run(&inputs, &pred, voxel_mm)?;
            r.save(&report)?;
            println!("{}", serde_json::to_string_pretty(&r.aggregate).expect("metrics serialize"));
        }
        Command::Pipeline {
            manifest,
            config,
            out,
            resume,
            ga,
            deform,
        } => {
            let cfg = load_config(config.as_deref(), |c| {
                ga.apply(c);
                deform.apply(c);
                if let Some(o) = &out {
                    c.output_dir = Some(o.clone());
                }
            })?;
            init_logging(&cfg.log_level);
            let out = cfg
                .output_dir
                .clone()
                .ok_or_else(|| Error::InvalidConfig("no output directory (--out or output_dir)".into()))?;
            let inputs = SequenceInputs::load(&manifest)?;
            let summary = pipeline::run_pipeline(&inputs, &cfg, &out, resume)?;
            println!("{}", serde_json::to_string_pretty(&summary.report.aggregate).expect("metrics serialize"));
            dump(&cli.dump_render, &manifest, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
