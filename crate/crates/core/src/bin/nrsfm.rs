use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nrsfm::conic::{self, ir, SolveStatus, SolverSettings};
use nrsfm::eval::evaluate;
use nrsfm::graph::E3Mode;
use nrsfm::io::{per_frame_csv, CloudFormat, GeneratorMode, ResultFile, SceneFile};
use nrsfm::reconstruct::{self, Completion, Method, ReconstructionConfig};
use nrsfm::synth::{self, FoldMode, GeneratorConfig, Lemma1Config, NoiseModel};
use nrsfm::{tol, Error};

#[derive(Parser)]
#[command(name = "nrsfm", version, about = "Convex non-rigid structure-from-motion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene file.
    Generate(GenerateArgs),
    /// Reconstruct a scene with one of the convex programs.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstruction with ground truth.
    Evaluate(EvaluateArgs),
    /// Sample the area-compensation discriminants.
    Lemma1(Lemma1Args),
    /// Solve a program stored in the conic text format.
    ConicSolve(ConicSolveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Iso,
    Equi,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum FoldArg {
    Random,
    Aligned,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Ply,
    Csv,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "iso")]
    mode: ModeArg,
    #[arg(long, default_value_t = 4)]
    ma: usize,
    #[arg(long, default_value_t = 4)]
    mb: usize,
    #[arg(long, default_value_t = 4)]
    frames: usize,
    /// Pixel noise multiplier.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    noise_model: NoiseArg,
    #[arg(long, default_value_t = 0.0)]
    chi_e: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    knn: usize,
    #[arg(long)]
    depth_ratio: Option<f64>,
    #[arg(long)]
    max_bend: Option<f64>,
    #[arg(long, value_enum, default_value = "random")]
    folds: FoldArg,
    /// Fraction of points hidden in every image but the first.
    #[arg(long, default_value_t = 0.0)]
    hide: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReconstructArgs {
    #[arg(long)]
    method: Method,
    #[arg(long = "in")]
    input: PathBuf,
    /// Result JSON path; cloud files are written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    lambda_i: f64,
    #[arg(long, default_value_t = 10.0)]
    lambda_e: f64,
    /// Neighbour count; when given (or with --e3-cap) the graph is rebuilt
    /// from the first image instead of taken from the scene.
    #[arg(long)]
    knn: Option<usize>,
    /// Cap on triangles per edge (all closed triangles when omitted).
    #[arg(long)]
    e3_cap: Option<usize>,
    /// Complete hidden points from `s` pseudo-neighbours.
    #[arg(long, value_name = "S")]
    complete_missing: Option<usize>,
    #[arg(long, value_enum, default_value = "ply")]
    format: FormatArg,
    #[arg(long, default_value_t = tol::SOLVER_TOL)]
    tol: f64,
    #[arg(long, default_value_t = tol::SOLVER_MAX_ITER)]
    max_iter: usize,
    /// Also write the assembled program in the conic text format.
    #[arg(long)]
    export_program: Option<PathBuf>,
    #[arg(long)]
    verbose: bool,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    recon: PathBuf,
    /// Scene file carrying the ground-truth clouds.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-frame RMS table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct Lemma1Args {
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.1)]
    h1_max: f64,
    #[arg(long, default_value_t = 0.1)]
    h2_max: f64,
    #[arg(long, default_value_t = 0.6)]
    edge_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ConicSolveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = tol::SOLVER_TOL)]
    tol: f64,
    #[arg(long, default_value_t = tol::SOLVER_MAX_ITER)]
    max_iter: usize,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Generation(_) => 3,
            Error::Solver(_) => 4,
            Error::Incompatible(_) => 5,
            Error::Io(_) => 1,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> CmdResult {
    let defaults = GeneratorConfig::default();
    let cfg = GeneratorConfig {
        m_a: a.ma,
        m_b: a.mb,
        n: a.frames,
        x_sigma: a.noise,
        chi_e: a.chi_e,
        seed: a.seed,
        noise: match a.noise_model {
            NoiseArg::Uniform => NoiseModel::Uniform,
            NoiseArg::Gaussian => NoiseModel::Gaussian,
        },
        knn: a.knn,
        depth_ratio: a.depth_ratio.unwrap_or(defaults.depth_ratio),
        max_bend: a.max_bend.unwrap_or(defaults.max_bend),
        fold_mode: match a.folds {
            FoldArg::Random => FoldMode::Random,
            FoldArg::Aligned => FoldMode::GraphAligned,
        },
        hide_fraction: a.hide,
        ..defaults
    };
    cfg.validate()?;
    let (scene, mode) = match a.mode {
        ModeArg::Iso => (synth::generate_isometric(&cfg, None)?, GeneratorMode::Iso),
        ModeArg::Equi => (synth::generate_equiareal(&cfg, None)?, GeneratorMode::Equi),
    };
    let file = SceneFile::from_scene(&scene, mode);
    emit(a.out.as_deref(), &file.to_json()?)?;
    Ok(())
}

fn reconstruct_cmd(a: ReconstructArgs) -> CmdResult {
    let scene = SceneFile::read(&a.input)?;
    let obs = scene.observations()?;
    let mut cfg = ReconstructionConfig::new(a.method);
    cfg.lambda_i = a.lambda_i;
    cfg.lambda_e = a.lambda_e;
    if let Some(k) = a.knn {
        cfg.knn = k;
    }
    if let Some(c) = a.e3_cap {
        cfg.e3_mode = E3Mode::PerEdgeCap(c);
    }
    if let Some(s) = a.complete_missing {
        cfg.completion = Completion::PseudoNeighbors(s);
    }
    cfg.solver = SolverSettings { tol: a.tol, max_iter: a.max_iter, verbose: a.verbose, ..SolverSettings::default() };
    cfg.validate()?;
    let graph = match (a.knn, scene.graph()?) {
        (None, Some(g)) if a.e3_cap.is_none() => g,
        _ => reconstruct::graph_for(&obs, &cfg)?,
    };
    let (prog, lay) = reconstruct::build_program(&obs, &graph, &cfg)?;
    if let Some(p) = &a.export_program {
        ir::export_program(&prog, p)?;
    }
    let backend = conic::backend::from_env();
    let sol = backend.solve(&prog, &cfg.solver)?;
    let rec = reconstruct::extract_points(&sol, &lay, &obs, &backend.name(), &prog)?;
    let metrics = match scene.ground_truth() {
        Some(gt) => {
            let mask = obs.visibility.clone();
            Some(evaluate(&rec.clouds, &gt, Some(&mask), Some((&rec.graph, &rec.geodesics, rec.areas.as_deref())))?)
        }
        None => None,
    };
    let format = match a.format {
        FormatArg::Ply => CloudFormat::Ply,
        FormatArg::Csv => CloudFormat::Csv,
    };
    match &a.out {
        Some(p) => {
            ResultFile::write(&rec, metrics, format, p)?;
        }
        None => {
            let v = serde_json::json!({ "reconstruction": rec, "metrics": metrics });
            println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
        }
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CmdResult {
    let res = ResultFile::read(&a.recon)?;
    let clouds = res.load_clouds(&a.recon)?;
    let scene = SceneFile::read(&a.gt)?;
    let gt = scene
        .ground_truth()
        .ok_or_else(|| Error::InvalidInput("scene has no ground-truth clouds".into()))?;
    if gt.len() != clouds.len() || gt.iter().zip(&clouds).any(|(g, c)| g.len() != c.len()) {
        return Err(Error::InvalidInput("reconstruction and ground truth differ in shape".into()).into());
    }
    let graph = res.graph()?;
    let report = evaluate(&clouds, &gt, Some(&scene.visibility), Some((&graph, &res.geodesics, res.areas.as_deref())))?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"))?;
    if let Some(p) = &a.csv {
        fs::write(p, per_frame_csv(&report)).map_err(Error::from)?;
    }
    Ok(())
}

fn lemma1_cmd(a: Lemma1Args) -> CmdResult {
    let cfg = Lemma1Config {
        samples: a.samples,
        h1_max: a.h1_max,
        h2_max: a.h2_max,
        edge_scale: a.edge_scale,
        seed: a.seed,
    };
    let rep = synth::lemma1_sample(&cfg)?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&rep).map_err(Error::from)? + "\n"))?;
    Ok(())
}

fn conic_solve(a: ConicSolveArgs) -> CmdResult {
    let prog = ir::import_program(&a.input)?;
    let settings = SolverSettings { tol: a.tol, max_iter: a.max_iter, ..SolverSettings::default() };
    let backend = conic::backend::from_env();
    let sol = backend.solve(&prog, &settings)?;
    emit(a.out.as_deref(), &ir::solution_to_string(&sol))?;
    if sol.status != SolveStatus::Optimal {
        return Err(Failure { code: 4, msg: format!("solver finished with status {:?}: {}", sol.status, sol.message) });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Reconstruct(a) => reconstruct_cmd(a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Lemma1(a) => lemma1_cmd(a),
        Cmd::ConicSolve(a) => conic_solve(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
