//! The `mbgs` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mbgs_core::optimize::{check_gradients, fit_sequence_from, FitOptions, LossConfig, SceneObjective, ScaledGradient, STRICT_TOLERANCE};
use mbgs_core::render::render_points;
use mbgs_core::scene::{PaintOptions, Scene, SceneCheckpoint};
use mbgs_core::skinning::PaintMode;

use crate::animate::{self, DEFAULT_RADIUS_PX};
use crate::error::{Error, Result};
use crate::formats::{self, GraphSpec};
use crate::frames::{splats_from_cloud, Dataset};
use crate::image::{write_image, ImageFormat};
use crate::init::{init_graph, InitOptions};
use crate::synth::{self, SynthKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "mbgs", version, about = "Motion-graph splat scenes: graph init, fitting, animation, rendering and editing")]
pub struct Cli {
    /// Seed for every stochastic choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Softmax,
    Normalized,
}

impl From<ModeArg> for PaintMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Softmax => PaintMode::SoftmaxOfKernel,
            ModeArg::Normalized => PaintMode::NormalizedKernel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Png,
    Ppm,
}

impl From<FormatArg> for ImageFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Png => ImageFormat::Png,
            FormatArg::Ppm => ImageFormat::Ppm,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct LossArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda_data: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_canon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_kp: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_mask: f64,
    /// Keep the kernel radii fixed.
    #[arg(long)]
    pub fix_gamma: bool,
    /// Keep tree link lengths fixed.
    #[arg(long)]
    pub fix_phi: bool,
    /// Keep the canonical parameters fixed.
    #[arg(long)]
    pub fix_canonical: bool,
}

impl LossArgs {
    pub fn config(&self) -> LossConfig {
        LossConfig {
            lambda_data: self.lambda_data,
            lambda_canonical: self.lambda_canon,
            lambda_keypoint: self.lambda_kp,
            lambda_mask: self.lambda_mask,
            learn_gamma: !self.fix_gamma,
            learn_phi: !self.fix_phi,
            learn_canonical: !self.fix_canonical,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PaintArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Softmax)]
    pub mode: ModeArg,
    /// Keep only the k largest weights of every splat.
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Initialize a motion graph from a dataset's canonical frame.
    InitGraph {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Joint count of a deformable graph.
        #[arg(long, default_value_t = 32)]
        joints: usize,
        /// Nearest neighbours linked per deformable joint.
        #[arg(long, default_value_t = 4)]
        knn: usize,
        /// Skeleton fitting steps for kinematic trees.
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
    },
    /// Fit graph parameters of every frame to a dataset.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        /// Graph spec to bind; ignored when resuming from --checkpoint.
        #[arg(long, required_unless_present = "checkpoint")]
        graph: Option<PathBuf>,
        /// Resume from an earlier checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[command(flatten)]
        loss: LossArgs,
        #[command(flatten)]
        paint: PaintArgs,
        /// Footprint of projected splats in the mask term, in pixels.
        #[arg(long, default_value_t = DEFAULT_RADIUS_PX)]
        radius: f64,
        /// Refuse to fit unless the gradient check passes.
        #[arg(long)]
        strict: bool,
    },
    /// Render a keyframe animation.
    Animate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        keyframes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = DEFAULT_RADIUS_PX)]
        radius: f64,
        #[arg(long, value_enum, default_value_t = FormatArg::Png)]
        format: FormatArg,
    },
    /// Render one fitted frame; the image format follows the extension.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RADIUS_PX)]
        radius: f64,
    },
    /// Compare analytic gradients with central differences.
    CheckGrad {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, required_unless_present = "checkpoint")]
        graph: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        loss: LossArgs,
        #[command(flatten)]
        paint: PaintArgs,
        #[arg(long, default_value_t = DEFAULT_RADIUS_PX)]
        radius: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Double the analytic gradient, to confirm the check catches it.
        #[arg(long, hide = true)]
        sabotage: bool,
    },
    /// Serve scenes to editors.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Checkpoint to expose; repeat for several scenes.
        #[arg(long = "scene", required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long, default_value = "exports")]
        export_dir: PathBuf,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA }, message: e.to_string() }
    }
}

impl From<mbgs_core::Error> for Failure {
    fn from(e: mbgs_core::Error) -> Self {
        Error::Core(e).into()
    }
}

fn bind_dataset(ds: &Dataset, graph_path: &PathBuf, paint: &PaintArgs) -> Result<SceneCheckpoint> {
    let (graph, theta) = formats::load_graph_spec(graph_path)?;
    let splats = splats_from_cloud(ds.frames.canonical());
    let mut scene = Scene::bind(
        splats,
        graph,
        theta,
        ds.frames.frames.len(),
        ds.frames.canonical_index,
        PaintOptions { gammas: None, mode: paint.mode.into(), top_k: paint.top_k },
    )?;
    if let Some(m) = &ds.masks {
        let instances = m.first().map_or(0, |m| m.instances);
        scene.instance_count = scene.instance_count.max(instances);
    }
    Ok(SceneCheckpoint::unfitted(scene, LossConfig::default(), ds.camera)?)
}

fn load_or_bind(ds: &Dataset, graph: &Option<PathBuf>, checkpoint: &Option<PathBuf>, paint: &PaintArgs) -> Result<SceneCheckpoint> {
    match (checkpoint, graph) {
        (Some(c), _) => formats::load_checkpoint(c),
        (None, Some(g)) => bind_dataset(ds, g, paint),
        (None, None) => Err(Error::Invalid("either --graph or --checkpoint is required".into())),
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let say = |out: &mut dyn Write, s: String| {
        let _ = writeln!(out, "{s}");
    };
    match cli.command {
        Command::InitGraph { manifest, out: path, joints, knn, iters, lr } => {
            let ds = Dataset::load(&manifest)?;
            let (graph, theta) = init_graph(&ds, &InitOptions { joints, knn, tree_iters: iters, tree_lr: lr })?;
            formats::write_json(&path, &GraphSpec::new(&graph, &theta))?;
            say(
                out,
                format!(
                    "initialized a {}-joint, {}-link graph",
                    graph.topology.joint_count(),
                    graph.topology.link_count()
                ),
            );
            say(out, format!("wrote {}", path.display()));
        }
        Command::Fit { manifest, graph, checkpoint, out: path, iters, lr, loss, paint, radius, strict } => {
            let ds = Dataset::load(&manifest)?;
            let start = load_or_bind(&ds, &graph, &checkpoint, &paint)?;
            let obs = ds.observations(radius);
            let cfg = loss.config();
            cfg.validate()?;
            let opts = FitOptions { iters, lr, seed: cli.seed, strict };
            let fitted = fit_sequence_from(&start.scene, &obs, &cfg, &opts, &start.initial_joints)?;
            formats::save_checkpoint(&path, &fitted)?;
            let first = fitted.history.first().copied().unwrap_or(f64::NAN);
            let last = fitted.history.last().copied().unwrap_or(f64::NAN);
            say(out, format!("initial loss {first:.6e}"));
            say(out, format!("final loss {last:.6e}"));
            say(out, format!("wrote {}", path.display()));
        }
        Command::Animate { checkpoint, keyframes, out: dir, frames, radius, format } => {
            let c = formats::load_checkpoint(&checkpoint)?;
            let camera = c.camera.ok_or_else(|| Error::format(&checkpoint, "the checkpoint has no camera"))?;
            let track = formats::load_keyframes(&keyframes, &c.scene.graph.topology)?;
            let written = animate::export_animation(&c.scene, &camera, &track, frames, radius, format.into(), &dir)?;
            say(out, format!("rendered {frames} frames"));
            for p in written {
                say(out, format!("wrote {}", p.display()));
            }
        }
        Command::Render { checkpoint, frame, out: path, radius } => {
            let c = formats::load_checkpoint(&checkpoint)?;
            let camera = c.camera.ok_or_else(|| Error::format(&checkpoint, "the checkpoint has no camera"))?;
            ImageFormat::from_path(&path)?;
            let splats = c.scene.deform_frame(frame)?;
            write_image(&path, &render_points(&splats, &camera, radius))?;
            say(out, format!("wrote {}", path.display()));
        }
        Command::CheckGrad { manifest, graph, checkpoint, loss, paint, radius, step, sabotage } => {
            let ds = Dataset::load(&manifest)?;
            let start = load_or_bind(&ds, &graph, &checkpoint, &paint)?;
            let obs = ds.observations(radius);
            let cfg = loss.config();
            cfg.validate()?;
            let objective = SceneObjective::new(&start.scene, &obs, &cfg, &start.initial_joints)?;
            let params = objective.gather(objective.initial_params());
            let report = if sabotage {
                check_gradients(&ScaledGradient { inner: &objective, factor: 2.0 }, &params, step)?
            } else {
                check_gradients(&objective, &params, step)?
            };
            say(out, format!("parameters {}", params.len()));
            say(out, format!("skipped {}", report.skipped.len()));
            say(out, format!("max relative error {:.3e} (parameter {})", report.max_relative_error, report.worst_index));
            if !(report.max_relative_error <= STRICT_TOLERANCE) {
                return Err(Failure {
                    code: EXIT_NUMERICAL,
                    message: format!("gradient check failed: {:.3e} > {STRICT_TOLERANCE:e}", report.max_relative_error),
                });
            }
            say(out, "gradient check passed".into());
        }
        Command::Serve { port, host, scenes, export_dir } => {
            let addr = format!("{host}:{port}");
            let threads = crate::server::thread_count();
            let server = std::sync::Arc::new(crate::server::Server::new(&scenes, export_dir)?);
            let listener = std::net::TcpListener::bind(&addr)
                .map_err(|e| Failure { code: EXIT_DATA, message: format!("cannot bind {addr}: {e}") })?;
            let local = listener.local_addr().map_err(|e| Failure { code: EXIT_DATA, message: e.to_string() })?;
            say(out, format!("listening on {local} with {threads} worker threads"));
            let _ = out.flush();
            server.serve(listener, threads).map_err(|e| Failure { code: EXIT_DATA, message: e.to_string() })?;
        }
        Command::Synth { kind, out: dir } => {
            let o = synth::generate(kind, &dir, cli.seed)?;
            say(out, format!("wrote {}", o.manifest.display()));
            say(out, format!("wrote {}", o.graph.display()));
            if let Some(t) = o.truth {
                say(out, format!("wrote {}", t.display()));
            }
        }
    }
    Ok(())
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
