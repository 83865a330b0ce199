//! Foreground and background color estimation from an image and its matte.

use crate::alpha::{AnyPreconditioner, SolverConfig};
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, resize_samples, AlphaMatte, Image};
use crate::solver::{cg_solve, ichol_decompose, jacobi_preconditioner, CgConfig, PreconditionerKind};
use crate::sparse::SparseMatrix;

/// Floor added to the gradient weights of the closed-form method.
pub const CF_REG: f64 = 1e-5;
/// Smoothness weight of the multi-level method.
pub const ML_REG: f64 = 0.005;
pub const ML_SWEEPS: usize = 2;
/// Offset keeping the multi-level smoothness weights positive.
pub const ML_EPS: f64 = 1e-3;
/// Relative CG tolerance used when the config sets neither tolerance.
const CF_RTOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ForegroundResult {
    pub foreground: Image,
    pub background: Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForegroundMethod {
    Cf,
    Ml,
}

impl ForegroundMethod {
    pub fn name(self) -> &'static str {
        match self {
            ForegroundMethod::Cf => "cf",
            ForegroundMethod::Ml => "ml",
        }
    }
}

impl std::str::FromStr for ForegroundMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cf" => Ok(ForegroundMethod::Cf),
            "ml" => Ok(ForegroundMethod::Ml),
            _ => Err(format!("unknown foreground method '{s}' (cf, ml)")),
        }
    }
}

fn check_inputs(image: &Image, alpha: &AlphaMatte) -> Result<()> {
    image.require_channels(3, "foreground estimation")?;
    if (image.width(), image.height()) != (alpha.width(), alpha.height()) {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, alpha is {}x{}",
            image.width(),
            image.height(),
            alpha.width(),
            alpha.height()
        )));
    }
    Ok(())
}

fn split_planes(width: usize, height: usize, fg: &[[f64; 3]], bg: &[[f64; 3]]) -> ForegroundResult {
    let pack = |v: &[[f64; 3]]| Image::from_clamped(width, height, 3, v.iter().flatten().copied().collect());
    ForegroundResult {
        foreground: pack(fg),
        background: pack(bg),
    }
}

/// Closed-form estimate. Per channel, minimizes the compositing residual
/// `Σ (αF + (1−α)B − I)²` plus gradient penalties on `F` and `B` weighted by
/// `|∂α| + reg` (forward differences). Unknowns are interleaved as
/// `(F_i, B_i)`, so the system matrix has 2×2 diagonal blocks; it is shared by
/// the three channels.
pub fn estimate_foreground_cf(
    image: &Image,
    alpha: &AlphaMatte,
    reg: f64,
    config: &SolverConfig,
) -> Result<ForegroundResult> {
    check_inputs(image, alpha)?;
    if !(reg.is_finite() && reg > 0.0) {
        return Err(Error::InvalidParameter(format!("reg must be positive, got {reg}")));
    }
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let a = alpha.values();
    let mut trip = Vec::with_capacity(16 * n);
    for i in 0..n {
        let (ai, bi) = (a[i], 1.0 - a[i]);
        trip.push((2 * i, 2 * i, ai * ai));
        trip.push((2 * i, 2 * i + 1, ai * bi));
        trip.push((2 * i + 1, 2 * i, ai * bi));
        trip.push((2 * i + 1, 2 * i + 1, bi * bi));
    }
    let mut edge = |i: usize, j: usize| {
        let wt = (a[j] - a[i]).abs() + reg;
        for off in 0..2 {
            let (p, q) = (2 * i + off, 2 * j + off);
            trip.extend([(p, p, wt), (q, q, wt), (p, q, -wt), (q, p, -wt)]);
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edge(i, i + 1);
            }
            if y + 1 < h {
                edge(i, i + w);
            }
        }
    }
    let m = SparseMatrix::from_triplets(2 * n, &trip)?;

    let kind = config.resolve_preconditioner(true);
    let precond = match kind {
        PreconditionerKind::None => AnyPreconditioner::None,
        PreconditionerKind::Jacobi => AnyPreconditioner::Jacobi(jacobi_preconditioner(&m.diagonal())?),
        PreconditionerKind::Ichol => AnyPreconditioner::Ichol(ichol_decompose(
            &m,
            config.ichol_threshold,
            config.ichol_initial_shift,
            config.ichol_max_nnz,
        )?),
        PreconditionerKind::Vcycle => {
            return Err(Error::InvalidParameter(
                "the foreground system is not a pixel grid; use none, jacobi or ichol".into(),
            ))
        }
    };
    let rtol = if config.atol.is_none() && config.rtol == 0.0 { CF_RTOL } else { config.rtol };
    let cg = CgConfig {
        atol: config.atol.unwrap_or(0.0),
        rtol,
        max_iter: config.max_iter,
    };

    let mut fg = vec![[0.0; 3]; n];
    let mut bg = vec![[0.0; 3]; n];
    for c in 0..3 {
        let mut rhs = vec![0.0; 2 * n];
        for i in 0..n {
            let v = image.pixel(i)[c];
            rhs[2 * i] = a[i] * v;
            rhs[2 * i + 1] = (1.0 - a[i]) * v;
        }
        let report = cg_solve(&m, &rhs, None, &precond, &cg)?;
        if !report.converged {
            log::warn!("foreground CG for channel {c} stopped at the iteration cap");
        }
        for i in 0..n {
            fg[i][c] = report.solution[2 * i];
            bg[i][c] = report.solution[2 * i + 1];
        }
    }
    Ok(split_planes(w, h, &fg, &bg))
}

/// Level sizes `(width, height)` from `1×1` to full resolution, doubling each
/// axis and capping at the full size.
pub fn ml_level_sizes(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut sizes = vec![(1, 1)];
    while *sizes.last().unwrap() != (width, height) {
        let (w, h) = *sizes.last().unwrap();
        sizes.push(((2 * w).min(width), (2 * h).min(height)));
    }
    sizes
}

fn to_pixels(image: &Image) -> Vec<[f64; 3]> {
    (0..image.num_pixels())
        .map(|i| {
            let p = image.pixel(i);
            [p[0], p[1], p[2]]
        })
        .collect()
}

fn resize_pixels(px: &[[f64; 3]], from: (usize, usize), to: (usize, usize)) -> Result<Vec<[f64; 3]>> {
    let flat: Vec<f64> = px.iter().flatten().copied().collect();
    let out = resize_samples(&flat, from.0, from.1, 3, to.0, to.1)?;
    Ok(out.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect())
}

/// Multi-level estimate, coarse to fine. Each level starts from the
/// upsampled previous result and runs `sweeps_per_level` Gauss–Seidel sweeps
/// in raster order; pixel `i` solves the 2×2 system minimizing
/// `(α_i F_i + (1−α_i) B_i − I_i)² + reg Σ_{j∈N4(i)} ω^F_ij (F_i−F_j)² + ω^B_ij (B_i−B_j)²`
/// with `ω^F_ij = 1 − (α_i+α_j)/2 + ε` and `ω^B_ij = (α_i+α_j)/2 + ε`.
/// The 1×1 level takes `F = B = I`. Values are clamped only at the end.
pub fn estimate_foreground_ml(
    image: &Image,
    alpha: &AlphaMatte,
    reg: f64,
    sweeps_per_level: usize,
) -> Result<ForegroundResult> {
    check_inputs(image, alpha)?;
    if !(reg.is_finite() && reg > 0.0) {
        return Err(Error::InvalidParameter(format!("reg must be positive, got {reg}")));
    }
    let (width, height) = (image.width(), image.height());
    let alpha_img = alpha.to_image();
    let sizes = ml_level_sizes(width, height);

    let mut prev = (1, 1);
    let mut fg: Vec<[f64; 3]> = Vec::new();
    let mut bg: Vec<[f64; 3]> = Vec::new();
    for &(w, h) in &sizes {
        let level_img = to_pixels(&if (w, h) == (width, height) {
            image.clone()
        } else {
            resize_bilinear(image, w, h)?
        });
        let level_alpha = if (w, h) == (width, height) {
            alpha.values().to_vec()
        } else {
            resize_bilinear(&alpha_img, w, h)?.into_data()
        };
        if fg.is_empty() {
            fg = level_img.clone();
            bg = level_img.clone();
        } else {
            fg = resize_pixels(&fg, prev, (w, h))?;
            bg = resize_pixels(&bg, prev, (w, h))?;
        }
        if w * h > 1 {
            for _ in 0..sweeps_per_level {
                sweep(w, h, &level_img, &level_alpha, reg, &mut fg, &mut bg);
            }
        }
        prev = (w, h);
    }
    Ok(split_planes(width, height, &fg, &bg))
}

fn sweep(w: usize, h: usize, img: &[[f64; 3]], alpha: &[f64], reg: f64, fg: &mut [[f64; 3]], bg: &mut [[f64; 3]]) {
    let mut neighbors = [0usize; 4];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut count = 0;
            if x > 0 {
                neighbors[count] = i - 1;
                count += 1;
            }
            if x + 1 < w {
                neighbors[count] = i + 1;
                count += 1;
            }
            if y > 0 {
                neighbors[count] = i - w;
                count += 1;
            }
            if y + 1 < h {
                neighbors[count] = i + w;
                count += 1;
            }
            let (ai, bi) = (alpha[i], 1.0 - alpha[i]);
            let (mut wf, mut wb) = (0.0, 0.0);
            let mut sf = [0.0; 3];
            let mut sb = [0.0; 3];
            for &j in &neighbors[..count] {
                let mean = 0.5 * (ai + alpha[j]);
                let (of, ob) = (reg * (1.0 - mean + ML_EPS), reg * (mean + ML_EPS));
                wf += of;
                wb += ob;
                for c in 0..3 {
                    sf[c] += of * fg[j][c];
                    sb[c] += ob * bg[j][c];
                }
            }
            let (m00, m01, m11) = (ai * ai + wf, ai * bi, bi * bi + wb);
            let det = m00 * m11 - m01 * m01;
            debug_assert!(det >= (ML_EPS * reg).powi(2) * (1.0 - 1e-9), "singular 2x2 system at {i}");
            for c in 0..3 {
                let r0 = ai * img[i][c] + sf[c];
                let r1 = bi * img[i][c] + sb[c];
                fg[i][c] = (m11 * r0 - m01 * r1) / det;
                bg[i][c] = (m00 * r1 - m01 * r0) / det;
            }
        }
    }
}
