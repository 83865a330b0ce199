//! Alpha estimation: Laplacian + soft trimap constraints, solved by CG.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{AlphaMatte, Image, Trimap, TrimapMasks};
use crate::laplacian::{cf_laplacian, knn_laplacian, lbdm_laplacian, lkm_operator, rw_laplacian, LkmOperator};
use crate::operator::{LinearOperator, ShiftedOperator};
use crate::solver::{
    cg_solve, ichol_decompose, jacobi_preconditioner, vcycle_build, CgConfig, IcholFactor, Identity, Jacobi,
    Preconditioner, PreconditionerKind, SolveReport, VcycleHierarchy,
};
use crate::sparse::SparseMatrix;

pub const DEFAULT_LAMBDA: f64 = 100.0;
pub const DEFAULT_EPS: f64 = 1e-7;
/// Known-pixel scale of the default absolute tolerance.
pub const ATOL_PER_KNOWN: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cf,
    Knn,
    Rw,
    Lbdm,
    Lkm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cf, Method::Knn, Method::Rw, Method::Lbdm, Method::Lkm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cf => "cf",
            Method::Knn => "knn",
            Method::Rw => "rw",
            Method::Lbdm => "lbdm",
            Method::Lkm => "lkm",
        }
    }

    /// Whether the method yields an explicit sparse matrix.
    pub fn is_assembled(self) -> bool {
        self != Method::Lkm
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}' (cf, knn, rw, lbdm, lkm)"))
    }
}

/// Laplacian choice and its parameters. Only the fields used by `method`
/// matter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub method: Method,
    /// Window regularizer for cf, lbdm and lkm.
    pub eps: f64,
    /// Window radius (cf, lbdm, lkm) or neighborhood radius (rw).
    pub radius: usize,
    /// Color scale of the random-walk weights.
    pub sigma: f64,
    pub k_list: Vec<usize>,
    pub distance_weights: Vec<f64>,
    pub lambda: f64,
}

impl MethodParams {
    pub fn new(method: Method) -> Self {
        MethodParams {
            method,
            eps: DEFAULT_EPS,
            radius: 1,
            sigma: 0.033 * 3f64.sqrt(),
            k_list: vec![20, 10],
            distance_weights: vec![2.0, 0.1],
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams::new(Method::Cf)
    }
}

/// A matting Laplacian in either representation.
#[derive(Clone, Debug)]
pub enum Laplacian {
    Matrix(SparseMatrix),
    MatrixFree(LkmOperator),
}

impl Laplacian {
    pub fn dim(&self) -> usize {
        match self {
            Laplacian::Matrix(m) => m.dim(),
            Laplacian::MatrixFree(op) => op.dim(),
        }
    }
}

pub fn build_laplacian(image: &Image, params: &MethodParams) -> Result<Laplacian> {
    Ok(match params.method {
        Method::Cf => Laplacian::Matrix(cf_laplacian(image, params.eps, params.radius)?),
        Method::Knn => Laplacian::Matrix(knn_laplacian(image, &params.k_list, &params.distance_weights)?),
        Method::Rw => Laplacian::Matrix(rw_laplacian(image, params.sigma, params.radius)?),
        Method::Lbdm => Laplacian::Matrix(lbdm_laplacian(image, params.eps, params.radius)?),
        Method::Lkm => Laplacian::MatrixFree(lkm_operator(image, params.eps, params.radius)?),
    })
}

/// System matrix `L + λC` in the representation of its Laplacian.
#[derive(Clone, Debug)]
pub enum SystemOperator {
    Matrix(SparseMatrix),
    MatrixFree(ShiftedOperator<LkmOperator>),
}

impl SystemOperator {
    pub fn as_matrix(&self) -> Option<&SparseMatrix> {
        match self {
            SystemOperator::Matrix(m) => Some(m),
            SystemOperator::MatrixFree(_) => None,
        }
    }

    fn as_operator(&self) -> &dyn LinearOperator {
        match self {
            SystemOperator::Matrix(m) => m,
            SystemOperator::MatrixFree(op) => op,
        }
    }
}

impl LinearOperator for SystemOperator {
    fn dim(&self) -> usize {
        self.as_operator().dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.as_operator().apply(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        self.as_operator().diagonal()
    }

    fn heap_bytes(&self) -> usize {
        self.as_operator().heap_bytes()
    }
}

#[derive(Clone, Debug)]
pub struct MattingSystem {
    pub a: SystemOperator,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub masks: TrimapMasks,
}

/// Adds the soft constraints: `A = L + λC`, `b = λ c_f`, where `C` selects
/// the known pixels and `c_f` the known-foreground ones.
pub fn make_linear_system(laplacian: Laplacian, trimap: &Trimap, lambda: f64) -> Result<MattingSystem> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if laplacian.dim() != trimap.num_pixels() {
        return Err(Error::DimensionMismatch(format!(
            "Laplacian has dimension {}, trimap has {} pixels",
            laplacian.dim(),
            trimap.num_pixels()
        )));
    }
    let masks = trimap.split();
    if masks.num_known() == 0 {
        return Err(Error::NoKnownPixels);
    }
    let shift: Vec<f64> = masks.is_known.iter().map(|&k| if k { lambda } else { 0.0 }).collect();
    let b = masks.is_fg.iter().map(|&f| if f { lambda } else { 0.0 }).collect();
    let a = match laplacian {
        Laplacian::Matrix(l) => SystemOperator::Matrix(l.add_diagonal(&shift)),
        Laplacian::MatrixFree(op) => SystemOperator::MatrixFree(ShiftedOperator::new(op, shift)),
    };
    Ok(MattingSystem { a, b, lambda, masks })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// `None` picks ichol for assembled systems and Jacobi for matrix-free.
    pub preconditioner: Option<PreconditionerKind>,
    /// `None` means `1e-7 · |known|`.
    pub atol: Option<f64>,
    pub rtol: f64,
    pub max_iter: usize,
    pub ichol_threshold: f64,
    pub ichol_initial_shift: f64,
    pub ichol_max_nnz: Option<usize>,
    pub vcycle_sweeps: usize,
    pub vcycle_omega: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            preconditioner: None,
            atol: None,
            rtol: 0.0,
            max_iter: 10_000,
            ichol_threshold: 1e-4,
            ichol_initial_shift: 0.0,
            ichol_max_nnz: None,
            vcycle_sweeps: 1,
            vcycle_omega: 0.8,
        }
    }
}

impl SolverConfig {
    pub fn with_preconditioner(kind: PreconditionerKind) -> Self {
        SolverConfig {
            preconditioner: Some(kind),
            ..SolverConfig::default()
        }
    }

    pub fn resolve_preconditioner(&self, assembled: bool) -> PreconditionerKind {
        self.preconditioner.unwrap_or(if assembled {
            PreconditionerKind::Ichol
        } else {
            PreconditionerKind::Jacobi
        })
    }

    pub fn resolve_atol(&self, num_known: usize) -> f64 {
        self.atol.unwrap_or(ATOL_PER_KNOWN * num_known as f64)
    }
}

/// Any of the supported preconditioners, built for one system.
#[derive(Clone, Debug)]
pub enum AnyPreconditioner {
    None,
    Jacobi(Jacobi),
    Ichol(IcholFactor),
    Vcycle(VcycleHierarchy),
}

impl AnyPreconditioner {
    pub fn kind(&self) -> PreconditionerKind {
        match self {
            AnyPreconditioner::None => PreconditionerKind::None,
            AnyPreconditioner::Jacobi(_) => PreconditionerKind::Jacobi,
            AnyPreconditioner::Ichol(_) => PreconditionerKind::Ichol,
            AnyPreconditioner::Vcycle(_) => PreconditionerKind::Vcycle,
        }
    }

    fn inner(&self) -> &dyn Preconditioner {
        match self {
            AnyPreconditioner::None => &Identity,
            AnyPreconditioner::Jacobi(p) => p,
            AnyPreconditioner::Ichol(p) => p,
            AnyPreconditioner::Vcycle(p) => p,
        }
    }
}

impl Preconditioner for AnyPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.inner().apply(r, z)
    }

    fn heap_bytes(&self) -> usize {
        self.inner().heap_bytes()
    }
}

/// Builds the configured preconditioner for `a`; `grid_shape` is the
/// `(height, width)` pixel grid the unknowns live on.
pub fn build_preconditioner(
    a: &SystemOperator,
    grid_shape: (usize, usize),
    config: &SolverConfig,
) -> Result<AnyPreconditioner> {
    let kind = config.resolve_preconditioner(a.as_matrix().is_some());
    let need_matrix = || {
        a.as_matrix().ok_or_else(|| {
            Error::InvalidParameter(format!("preconditioner '{kind}' needs an assembled matrix; use none or jacobi"))
        })
    };
    Ok(match kind {
        PreconditionerKind::None => AnyPreconditioner::None,
        PreconditionerKind::Jacobi => AnyPreconditioner::Jacobi(jacobi_preconditioner(&a.diagonal())?),
        PreconditionerKind::Ichol => AnyPreconditioner::Ichol(ichol_decompose(
            need_matrix()?,
            config.ichol_threshold,
            config.ichol_initial_shift,
            config.ichol_max_nnz,
        )?),
        PreconditionerKind::Vcycle => AnyPreconditioner::Vcycle(vcycle_build(
            need_matrix()?,
            grid_shape,
            config.vcycle_sweeps,
            config.vcycle_sweeps,
            config.vcycle_omega,
        )?),
    })
}

/// Wall-clock seconds of the three pipeline phases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    /// Laplacian construction and constraint assembly.
    pub build_s: f64,
    /// Preconditioner construction.
    pub setup_s: f64,
    pub solve_s: f64,
}

#[derive(Clone, Debug)]
pub struct AlphaEstimate {
    pub matte: AlphaMatte,
    pub report: SolveReport,
    pub preconditioner: PreconditionerKind,
    pub times: PhaseTimes,
    pub num_known: usize,
}

/// Solves an assembled system with the configured preconditioner and
/// tolerances.
pub fn solve_system(
    system: &MattingSystem,
    grid_shape: (usize, usize),
    config: &SolverConfig,
) -> Result<(SolveReport, PreconditionerKind, f64)> {
    let setup = Instant::now();
    let precond = build_preconditioner(&system.a, grid_shape, config)?;
    let setup_s = setup.elapsed().as_secs_f64();
    let cg = CgConfig {
        atol: config.resolve_atol(system.masks.num_known()),
        rtol: config.rtol,
        max_iter: config.max_iter,
    };
    let report = cg_solve(&system.a, &system.b, None, &precond, &cg)?;
    Ok((report, precond.kind(), setup_s))
}

/// Full pipeline with phase timings.
pub fn estimate_alpha_detailed(
    image: &Image,
    trimap: &Trimap,
    params: &MethodParams,
    config: &SolverConfig,
) -> Result<AlphaEstimate> {
    let (w, h) = (image.width(), image.height());
    if (trimap.width(), trimap.height()) != (w, h) {
        return Err(Error::DimensionMismatch(format!(
            "image is {w}x{h}, trimap is {}x{}",
            trimap.width(),
            trimap.height()
        )));
    }
    let build = Instant::now();
    let laplacian = build_laplacian(image, params)?;
    let system = make_linear_system(laplacian, trimap, params.lambda)?;
    let build_s = build.elapsed().as_secs_f64();
    let (report, preconditioner, setup_s) = solve_system(&system, (h, w), config)?;
    if !report.converged {
        log::warn!(
            "CG stopped at the iteration cap ({}) with residual {:e} > {:e}",
            report.iterations,
            report.residual_norm,
            report.tolerance
        );
    }
    let matte = AlphaMatte::from_solution(w, h, report.solution.clone())?;
    Ok(AlphaEstimate {
        matte,
        times: PhaseTimes {
            build_s,
            setup_s,
            solve_s: report.wall_time_s,
        },
        report,
        preconditioner,
        num_known: system.masks.num_known(),
    })
}

/// Estimates the alpha matte; the solution is clamped to `[0, 1]`.
pub fn estimate_alpha(
    image: &Image,
    trimap: &Trimap,
    params: &MethodParams,
    config: &SolverConfig,
) -> Result<(AlphaMatte, SolveReport)> {
    let est = estimate_alpha_detailed(image, trimap, params, config)?;
    Ok((est.matte, est.report))
}
