//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::alpha::{estimate_alpha_detailed, AlphaEstimate, Method, MethodParams, SolverConfig};
use crate::bench::{run_benchmark, write_synthetic_dataset, BenchmarkConfig};
use crate::error::{Error, Result};
use crate::foreground::{estimate_foreground_cf, estimate_foreground_ml, ForegroundMethod, ForegroundResult, CF_REG, ML_REG, ML_SWEEPS};
use crate::image::{load_image, save_image, stack_images, AlphaMatte, ColorMode, Image, Trimap};
use crate::solver::PreconditionerKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIMENSION: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;
pub const EXIT_INPUT: i32 = 6;
pub const EXIT_EMPTY_DATASET: i32 = 7;
pub const EXIT_ALL_FAILED: i32 = 8;
pub const EXIT_INTERNAL: i32 = 1;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotFound(_) | Error::Io { .. } | Error::Decode(_) | Error::Encode(_) | Error::Csv(_) => EXIT_IO,
        Error::DimensionMismatch(_) => EXIT_DIMENSION,
        Error::Breakdown { .. } | Error::NotFactorizable { .. } | Error::FillLimitExceeded { .. } => EXIT_SOLVER,
        Error::UnsupportedBitDepth(_)
        | Error::InvalidChannels(_)
        | Error::InvalidImage(_)
        | Error::InvalidParameter(_)
        | Error::NoKnownPixels
        | Error::EmptyMask => EXIT_INPUT,
        Error::EmptyDataset(_) => EXIT_EMPTY_DATASET,
        Error::AllCasesFailed(_) => EXIT_ALL_FAILED,
        Error::Benchmark(_) => EXIT_INTERNAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "matting", version, about = "Alpha matting, foreground estimation and solver benchmarks")]
pub struct Cli {
    /// Worker threads for the solver (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate an alpha matte from an image and a trimap.
    Alpha {
        image: PathBuf,
        trimap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        alpha: AlphaArgs,
    },
    /// Estimate foreground (and optionally background) colors from an image and its alpha matte.
    Foreground {
        image: PathBuf,
        alpha: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the estimated background here.
        #[arg(long)]
        background_out: Option<PathBuf>,
        #[command(flatten)]
        fg: ForegroundArgs,
    },
    /// Alpha, then foreground, then an RGBA cutout.
    Cutout {
        image: PathBuf,
        trimap: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        alpha: AlphaArgs,
        #[command(flatten)]
        fg: ForegroundArgs,
    },
    /// Benchmark methods and preconditioners on a directory of cases.
    Bench {
        dataset: PathBuf,
        /// CSV report path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "method", value_delimiter = ',', default_value = "cf")]
        methods: Vec<Method>,
        #[arg(long = "precond", value_delimiter = ',', default_value = "jacobi,ichol")]
        preconds: Vec<PreconditionerKind>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Absolute CG tolerance (default: 1e-7 times the known-pixel count).
        #[arg(long)]
        atol: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        /// Run cases concurrently (each case still solves on one thread).
        #[arg(long)]
        parallel: bool,
    },
    /// Write synthetic composites with ground truth.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[arg(long, default_value = "cf")]
    pub method: Method,
    /// Preconditioner (default: ichol, or jacobi for lkm).
    #[arg(long)]
    pub precond: Option<PreconditionerKind>,
    #[arg(long, default_value_t = crate::alpha::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Absolute CG tolerance (default: 1e-7 times the known-pixel count).
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// kNN neighbor counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub knn_k: Option<Vec<usize>>,
    /// kNN spatial weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub knn_weights: Option<Vec<f64>>,
}

impl AlphaArgs {
    fn params(&self) -> MethodParams {
        let mut p = MethodParams::new(self.method);
        p.lambda = self.lambda;
        if let Some(e) = self.eps {
            p.eps = e;
        }
        if let Some(r) = self.radius {
            p.radius = r;
        }
        if let Some(s) = self.sigma {
            p.sigma = s;
        }
        if let Some(k) = &self.knn_k {
            p.k_list = k.clone();
        }
        if let Some(w) = &self.knn_weights {
            p.distance_weights = w.clone();
        }
        p
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            preconditioner: self.precond,
            atol: self.atol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ForegroundArgs {
    #[arg(long, default_value = "ml")]
    pub fg_method: ForegroundMethod,
    /// Smoothness weight (default: 1e-5 for cf, 0.005 for ml).
    #[arg(long)]
    pub fg_reg: Option<f64>,
    #[arg(long, default_value_t = ML_SWEEPS)]
    pub fg_sweeps: usize,
}

impl ForegroundArgs {
    fn run(&self, image: &Image, alpha: &AlphaMatte) -> Result<ForegroundResult> {
        match self.fg_method {
            ForegroundMethod::Cf => estimate_foreground_cf(image, alpha, self.fg_reg.unwrap_or(CF_REG), &SolverConfig::default()),
            ForegroundMethod::Ml => estimate_foreground_ml(image, alpha, self.fg_reg.unwrap_or(ML_REG), self.fg_sweeps),
        }
    }
}

fn report_json(command: &str, est: &AlphaEstimate, out: &Path) -> serde_json::Value {
    let r = &est.report;
    json!({
        "command": command,
        "width": est.matte.width(),
        "height": est.matte.height(),
        "preconditioner": est.preconditioner,
        "iterations": r.iterations,
        "residual_norm": r.residual_norm,
        "tolerance": r.tolerance,
        "atol": r.atol,
        "rtol": r.rtol,
        "converged": r.converged,
        "num_known": est.num_known,
        "build_s": est.times.build_s,
        "setup_s": est.times.setup_s,
        "solve_s": est.times.solve_s,
        "peak_bytes": r.peak_bytes,
        "output": out.display().to_string(),
    })
}

fn load_inputs(image: &Path, trimap: &Path) -> Result<(Image, Trimap)> {
    let img = load_image(image, ColorMode::Rgb)?;
    let tri = Trimap::from_image(&load_image(trimap, ColorMode::Gray)?)?;
    Ok((img, tri))
}

fn alpha_step(image: &Path, trimap: &Path, args: &AlphaArgs) -> Result<(Image, AlphaEstimate)> {
    let (img, tri) = load_inputs(image, trimap)?;
    let est = estimate_alpha_detailed(&img, &tri, &args.params(), &args.solver())?;
    if !est.report.converged {
        eprintln!(
            "warning: CG hit the iteration cap ({}) with residual {:e} above {:e}",
            est.report.iterations, est.report.residual_norm, est.report.tolerance
        );
    }
    Ok((img, est))
}

/// Runs one parsed command, returning the JSON lines to print.
pub fn execute(cli: &Cli) -> Result<Vec<serde_json::Value>> {
    match &cli.command {
        Command::Alpha { image, trimap, out, alpha } => {
            let (_, est) = alpha_step(image, trimap, alpha)?;
            save_image(out, &est.matte.to_image())?;
            let mut v = report_json("alpha", &est, out);
            v["method"] = json!(alpha.method);
            Ok(vec![v])
        }
        Command::Foreground { image, alpha, out, background_out, fg } => {
            let img = load_image(image, ColorMode::Rgb)?;
            let matte = AlphaMatte::from_image(&load_image(alpha, ColorMode::Gray)?)?;
            let t = std::time::Instant::now();
            let res = fg.run(&img, &matte)?;
            let elapsed = t.elapsed().as_secs_f64();
            save_image(out, &res.foreground)?;
            if let Some(b) = background_out {
                save_image(b, &res.background)?;
            }
            Ok(vec![json!({
                "command": "foreground",
                "fg_method": fg.fg_method.name(),
                "width": img.width(),
                "height": img.height(),
                "wall_time_s": elapsed,
                "output": out.display().to_string(),
            })])
        }
        Command::Cutout { image, trimap, out, alpha, fg } => {
            let (img, est) = alpha_step(image, trimap, alpha)?;
            let t = std::time::Instant::now();
            let res = fg.run(&img, &est.matte)?;
            let fg_s = t.elapsed().as_secs_f64();
            save_image(out, &stack_images(&res.foreground, &est.matte)?)?;
            let mut v = report_json("cutout", &est, out);
            v["method"] = json!(alpha.method);
            v["fg_method"] = json!(fg.fg_method.name());
            v["foreground_s"] = json!(fg_s);
            Ok(vec![v])
        }
        Command::Bench { dataset, out, methods, preconds, lambda, atol, max_iter, parallel } => {
            let config = BenchmarkConfig {
                methods: methods.clone(),
                preconditioners: preconds.clone(),
                lambda: *lambda,
                solver: SolverConfig {
                    atol: *atol,
                    max_iter: *max_iter,
                    ..SolverConfig::default()
                },
                parallel: *parallel,
            };
            let summary = run_benchmark(dataset, &config, Some(out))?;
            for f in &summary.failures {
                eprintln!("warning: {} failed: {}", f.case, f.error);
            }
            let mut lines: Vec<serde_json::Value> = summary
                .runs
                .iter()
                .map(|r| {
                    let mut v = serde_json::to_value(r).expect("serializable run");
                    v["kind"] = json!("run");
                    v
                })
                .collect();
            lines.extend(summary.means().iter().map(|m| {
                let mut v = serde_json::to_value(m).expect("serializable mean");
                v["kind"] = json!("mean");
                v
            }));
            lines.push(json!({
                "kind": "summary",
                "runs": summary.runs.len(),
                "failures": summary.failures.len(),
                "csv": out.display().to_string(),
            }));
            Ok(lines)
        }
        Command::Synth { dir, count, width, height, seed } => {
            let cases = write_synthetic_dataset(dir, *count, *width, *height, *seed)?;
            Ok(cases
                .iter()
                .map(|c| json!({ "command": "synth", "case": c.name, "image": c.image.display().to_string() }))
                .collect())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not configure {t} threads: {e}");
        }
    }
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
