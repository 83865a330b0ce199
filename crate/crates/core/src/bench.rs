//! Benchmark harness over a directory of matting cases, and a synthetic case
//! generator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::{estimate_alpha_detailed, Method, MethodParams, SolverConfig};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, AlphaMatte, ColorMode, Image, Trimap};
use crate::solver::PreconditionerKind;

pub const IMAGE_FILE: &str = "image.png";
pub const TRIMAP_FILE: &str = "trimap.png";
pub const GT_ALPHA_FILE: &str = "gt_alpha.png";
pub const CSV_HEADER: &str = "case,method,preconditioner,mse,iterations,time_s,peak_bytes";

/// Mean of `(estimate − truth)²` over the masked pixels.
pub fn compute_mse(estimate: &AlphaMatte, truth: &AlphaMatte, mask: &[bool]) -> Result<f64> {
    let n = estimate.values().len();
    if (estimate.width(), estimate.height()) != (truth.width(), truth.height()) || mask.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "estimate {}x{}, truth {}x{}, mask of {}",
            estimate.width(),
            estimate.height(),
            truth.width(),
            truth.height(),
            mask.len()
        )));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for ((e, t), &m) in estimate.values().iter().zip(truth.values()).zip(mask) {
        if m {
            sum += (e - t) * (e - t);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub name: String,
    pub image: PathBuf,
    pub trimap: PathBuf,
    pub gt_alpha: Option<PathBuf>,
}

impl BenchmarkCase {
    /// Reads a case directory holding `image.png`, `trimap.png` and
    /// optionally `gt_alpha.png`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let image = dir.join(IMAGE_FILE);
        let trimap = dir.join(TRIMAP_FILE);
        for p in [&image, &trimap] {
            if !p.is_file() {
                return Err(Error::NotFound(p.clone()));
            }
        }
        let gt = dir.join(GT_ALPHA_FILE);
        Ok(BenchmarkCase {
            name: dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
            image,
            trimap,
            gt_alpha: gt.is_file().then_some(gt),
        })
    }

    pub fn load(&self) -> Result<LoadedCase> {
        let image = load_image(&self.image, ColorMode::Rgb)?;
        let trimap = Trimap::from_image(&load_image(&self.trimap, ColorMode::Gray)?)?;
        let truth = match &self.gt_alpha {
            Some(p) => Some(AlphaMatte::from_image(&load_image(p, ColorMode::Gray)?)?),
            None => None,
        };
        let dims = (image.width(), image.height());
        let mismatch = (trimap.width(), trimap.height()) != dims
            || truth.as_ref().is_some_and(|t| (t.width(), t.height()) != dims);
        if mismatch {
            return Err(Error::DimensionMismatch(format!("case '{}' files differ in size", self.name)));
        }
        Ok(LoadedCase { image, trimap, truth })
    }
}

#[derive(Clone, Debug)]
pub struct LoadedCase {
    pub image: Image,
    pub trimap: Trimap,
    pub truth: Option<AlphaMatte>,
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub case: String,
    pub method: Method,
    pub preconditioner: PreconditionerKind,
    /// Unknown-region MSE, present when ground truth exists.
    pub mse: Option<f64>,
    pub iterations: usize,
    /// Preconditioner setup plus CG solve.
    pub time_s: f64,
    pub peak_bytes: usize,
}

pub fn write_records(path: &Path, records: &[BenchmarkRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<BenchmarkRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// A record plus the details the CSV leaves out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    #[serde(flatten)]
    pub record: BenchmarkRecord,
    /// Laplacian construction and constraint assembly.
    pub build_s: f64,
    pub setup_s: f64,
    pub solve_s: f64,
    pub converged: bool,
    pub atol: f64,
    pub num_known: usize,
    pub residual_norm: f64,
}

/// Per (method, preconditioner) averages over the successful cases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigMean {
    pub method: Method,
    pub preconditioner: PreconditionerKind,
    pub cases: usize,
    pub mean_mse: Option<f64>,
    pub mean_iterations: f64,
    pub mean_time_s: f64,
    pub mean_build_s: f64,
    pub mean_peak_bytes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub case: String,
    pub method: Option<Method>,
    pub preconditioner: Option<PreconditionerKind>,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub runs: Vec<BenchmarkRun>,
    pub failures: Vec<Failure>,
}

impl BenchmarkSummary {
    pub fn records(&self) -> Vec<BenchmarkRecord> {
        self.runs.iter().map(|r| r.record.clone()).collect()
    }

    pub fn means(&self) -> Vec<ConfigMean> {
        let mut keys: Vec<(Method, PreconditionerKind)> = Vec::new();
        for r in &self.runs {
            let k = (r.record.method, r.record.preconditioner);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(method, preconditioner)| {
                let runs: Vec<_> = self
                    .runs
                    .iter()
                    .filter(|r| r.record.method == method && r.record.preconditioner == preconditioner)
                    .collect();
                let n = runs.len() as f64;
                let mean = |f: &dyn Fn(&BenchmarkRun) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
                let mses: Vec<f64> = runs.iter().filter_map(|r| r.record.mse).collect();
                ConfigMean {
                    method,
                    preconditioner,
                    cases: runs.len(),
                    mean_mse: (!mses.is_empty()).then(|| mses.iter().sum::<f64>() / mses.len() as f64),
                    mean_iterations: mean(&|r| r.record.iterations as f64),
                    mean_time_s: mean(&|r| r.record.time_s),
                    mean_build_s: mean(&|r| r.build_s),
                    mean_peak_bytes: mean(&|r| r.record.peak_bytes as f64),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub preconditioners: Vec<PreconditionerKind>,
    /// Overrides the default constraint weight of every method.
    pub lambda: Option<f64>,
    /// Base solver settings; the preconditioner field is replaced per run.
    pub solver: SolverConfig,
    /// Runs cases concurrently; each case still solves on one thread.
    pub parallel: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            methods: vec![Method::Cf],
            preconditioners: vec![PreconditionerKind::Jacobi, PreconditionerKind::Ichol],
            lambda: None,
            solver: SolverConfig::default(),
            parallel: false,
        }
    }
}

/// Case directories of `dataset_dir`, sorted by name.
pub fn discover_cases(dataset_dir: &Path) -> Result<(Vec<BenchmarkCase>, Vec<Failure>)> {
    let entries = fs::read_dir(dataset_dir).map_err(|e| Error::io(dataset_dir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::EmptyDataset(dataset_dir.to_path_buf()));
    }
    let mut cases = Vec::new();
    let mut skipped = Vec::new();
    for d in dirs {
        match BenchmarkCase::from_dir(&d) {
            Ok(c) => cases.push(c),
            Err(e) => {
                log::warn!("skipping {}: {e}", d.display());
                skipped.push(Failure {
                    case: d.display().to_string(),
                    method: None,
                    preconditioner: None,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok((cases, skipped))
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Benchmark(format!("could not build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every method × preconditioner on one loaded case.
pub fn run_case(name: &str, case: &LoadedCase, config: &BenchmarkConfig) -> (Vec<BenchmarkRun>, Vec<Failure>) {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let masks = case.trimap.split();
    for &method in &config.methods {
        let mut params = MethodParams::new(method);
        if let Some(l) = config.lambda {
            params.lambda = l;
        }
        for &kind in &config.preconditioners {
            let fail = |e: &Error| Failure {
                case: name.to_string(),
                method: Some(method),
                preconditioner: Some(kind),
                error: e.to_string(),
            };
            let solver = SolverConfig {
                preconditioner: Some(kind),
                ..config.solver.clone()
            };
            let est = match estimate_alpha_detailed(&case.image, &case.trimap, &params, &solver) {
                Ok(est) => est,
                Err(e) => {
                    log::warn!("{name} {method}/{kind}: {e}");
                    failures.push(fail(&e));
                    continue;
                }
            };
            let mse = match &case.truth {
                Some(t) => match compute_mse(&est.matte, t, &masks.is_unknown) {
                    Ok(m) => Some(m),
                    Err(Error::EmptyMask) => None,
                    Err(e) => {
                        failures.push(fail(&e));
                        continue;
                    }
                },
                None => None,
            };
            runs.push(BenchmarkRun {
                record: BenchmarkRecord {
                    case: name.to_string(),
                    method,
                    preconditioner: kind,
                    mse,
                    iterations: est.report.iterations,
                    time_s: est.times.setup_s + est.times.solve_s,
                    peak_bytes: est.report.peak_bytes,
                },
                build_s: est.times.build_s,
                setup_s: est.times.setup_s,
                solve_s: est.times.solve_s,
                converged: est.report.converged,
                atol: est.report.atol,
                num_known: est.num_known,
                residual_norm: est.report.residual_norm,
            });
        }
    }
    (runs, failures)
}

/// Benchmarks every case directory of `dataset_dir` and optionally writes
/// the CSV report.
pub fn run_benchmark(dataset_dir: &Path, config: &BenchmarkConfig, out_csv: Option<&Path>) -> Result<BenchmarkSummary> {
    let (cases, mut failures) = discover_cases(dataset_dir)?;
    let total = cases.len() + failures.len();
    let one = |case: &BenchmarkCase| -> Result<(Vec<BenchmarkRun>, Vec<Failure>)> {
        match case.load() {
            Ok(loaded) => single_thread(|| run_case(&case.name, &loaded, config)),
            Err(e) => {
                log::warn!("skipping case {}: {e}", case.name);
                Ok((
                    Vec::new(),
                    vec![Failure {
                        case: case.name.clone(),
                        method: None,
                        preconditioner: None,
                        error: e.to_string(),
                    }],
                ))
            }
        }
    };
    let results: Vec<_> = if config.parallel {
        cases.par_iter().map(one).collect::<Result<_>>()?
    } else {
        cases.iter().map(one).collect::<Result<_>>()?
    };
    let mut runs = Vec::new();
    for (r, f) in results {
        runs.extend(r);
        failures.extend(f);
    }
    if runs.is_empty() {
        return Err(Error::AllCasesFailed(total));
    }
    let summary = BenchmarkSummary { runs, failures };
    if let Some(path) = out_csv {
        write_records(path, &summary.records())?;
    }
    Ok(summary)
}

/// A generated composite with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCase {
    pub image: Image,
    pub trimap: Trimap,
    pub alpha: AlphaMatte,
    pub foreground: Image,
    pub background: Image,
}

pub const SYNTH_MIN_SIDE: usize = 16;
const KNOWN_LOW: f64 = 0.02;
const KNOWN_HIGH: f64 = 0.98;
const ERODE: usize = 2;

/// Smooth color field: a base color plus a few low-frequency cosines.
fn color_field(rng: &mut ChaCha8Rng, base: [f64; 3], w: usize, h: usize) -> Vec<[f64; 3]> {
    let waves: Vec<[f64; 4]> = (0..9)
        .map(|_| {
            [
                rng.random_range(0.5..2.5) * std::f64::consts::TAU / w as f64,
                rng.random_range(0.5..2.5) * std::f64::consts::TAU / h as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.02..0.05),
            ]
        })
        .collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let mut px = base;
            for (c, chunk) in waves.chunks(3).enumerate() {
                for wv in chunk {
                    px[c] += wv[3] * (wv[0] * x + wv[1] * y + wv[2]).cos();
                }
            }
            px.map(|v| v.clamp(0.0, 1.0))
        })
        .collect()
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Generates a composite `I = αF + (1−α)B` of two smooth random color fields
/// under a smooth blob-shaped matte. The trimap marks `α ≤ 0.02` and
/// `α ≥ 0.98` as known, shrunk by two pixels, and the rest unknown.
pub fn make_synthetic_case(width: usize, height: usize, seed: u64) -> Result<SyntheticCase> {
    if width < SYNTH_MIN_SIDE || height < SYNTH_MIN_SIDE {
        return Err(Error::InvalidParameter(format!(
            "synthetic cases need both sides >= {SYNTH_MIN_SIDE}, got {width}x{height}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fbase, bbase) = loop {
        let f: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.15..0.85));
        let b: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.15..0.85));
        let d2: f64 = f.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        if d2 >= 0.16 {
            break (f, b);
        }
    };
    let fg = color_field(&mut rng, fbase, width, height);
    let bg = color_field(&mut rng, bbase, width, height);

    let side = width.min(height) as f64;
    let (radius, band) = (0.3 * side + 1.0, 0.2 * side);
    let cx = width as f64 * rng.random_range(0.45..0.55);
    let cy = height as f64 * rng.random_range(0.45..0.55);
    let lobes = rng.random_range(2..5) as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let alpha: Vec<f64> = (0..width * height)
        .map(|i| {
            let (dx, dy) = ((i % width) as f64 + 0.5 - cx, (i / width) as f64 + 0.5 - cy);
            let r = radius * (1.0 + 0.08 * (lobes * dy.atan2(dx) + phase).sin());
            smoothstep((r + 0.5 * band - dx.hypot(dy)) / band)
        })
        .collect();

    let composite: Vec<f64> = (0..width * height * 3)
        .map(|k| {
            let (i, c) = (k / 3, k % 3);
            alpha[i] * fg[i][c] + (1.0 - alpha[i]) * bg[i][c]
        })
        .collect();

    let label: Vec<i8> = alpha
        .iter()
        .map(|&a| if a >= KNOWN_HIGH { 1 } else if a <= KNOWN_LOW { -1 } else { 0 })
        .collect();
    let tri: Vec<f64> = (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let l = label[i];
            let keep = l != 0
                && (y.saturating_sub(ERODE)..=(y + ERODE).min(height - 1)).all(|yy| {
                    (x.saturating_sub(ERODE)..=(x + ERODE).min(width - 1)).all(|xx| label[yy * width + xx] == l)
                });
            match (keep, l) {
                (true, 1) => 1.0,
                (true, _) => 0.0,
                _ => 0.5,
            }
        })
        .collect();

    let flat = |v: &[[f64; 3]]| v.iter().flatten().copied().collect::<Vec<_>>();
    Ok(SyntheticCase {
        image: Image::new(width, height, 3, composite)?,
        trimap: Trimap::new(width, height, tri)?,
        alpha: AlphaMatte::new(width, height, alpha)?,
        foreground: Image::new(width, height, 3, flat(&fg))?,
        background: Image::new(width, height, 3, flat(&bg))?,
    })
}

impl SyntheticCase {
    /// Writes `image.png`, `trimap.png`, `gt_alpha.png`, `gt_fg.png` and
    /// `gt_bg.png` into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<BenchmarkCase> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_image(dir.join(IMAGE_FILE), &self.image)?;
        save_image(dir.join(TRIMAP_FILE), &self.trimap.to_image())?;
        save_image(dir.join(GT_ALPHA_FILE), &self.alpha.to_image())?;
        save_image(dir.join("gt_fg.png"), &self.foreground)?;
        save_image(dir.join("gt_bg.png"), &self.background)?;
        BenchmarkCase::from_dir(dir)
    }

    pub fn to_loaded(&self) -> LoadedCase {
        LoadedCase {
            image: self.image.clone(),
            trimap: self.trimap.clone(),
            truth: Some(self.alpha.clone()),
        }
    }
}

/// Writes `count` synthetic cases named `synth_000`, `synth_001`, … with
/// seeds `seed, seed + 1, …`.
pub fn write_synthetic_dataset(dir: &Path, count: usize, width: usize, height: usize, seed: u64) -> Result<Vec<BenchmarkCase>> {
    (0..count)
        .map(|k| make_synthetic_case(width, height, seed + k as u64)?.write_to(&dir.join(format!("synth_{k:03}"))))
        .collect()
}
