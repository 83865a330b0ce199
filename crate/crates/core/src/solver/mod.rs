//! Preconditioned conjugate gradients and its preconditioners.

mod cg;
mod ichol;
mod jacobi;
mod vcycle;

pub use cg::{cg_solve, CgConfig};
pub use ichol::{ichol_apply, ichol_decompose, IcholFactor};
pub use jacobi::{jacobi_preconditioner, Jacobi};
pub use vcycle::{vcycle_apply, vcycle_build, VcycleHierarchy};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Symmetric positive definite approximation of `A⁻¹`.
pub trait Preconditioner: Sync {
    /// Writes `M r` into `z`.
    fn apply(&self, r: &[f64], z: &mut [f64]);

    fn heap_bytes(&self) -> usize {
        0
    }
}

/// `M = Id`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl<T: Preconditioner + ?Sized> Preconditioner for &T {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        (**self).apply(r, z)
    }
    fn heap_bytes(&self) -> usize {
        (**self).heap_bytes()
    }
}

impl<T: Preconditioner + ?Sized> Preconditioner for Box<T> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        (**self).apply(r, z)
    }
    fn heap_bytes(&self) -> usize {
        (**self).heap_bytes()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerKind {
    None,
    Jacobi,
    Ichol,
    Vcycle,
}

impl PreconditionerKind {
    pub const ALL: [PreconditionerKind; 4] = [
        PreconditionerKind::None,
        PreconditionerKind::Jacobi,
        PreconditionerKind::Ichol,
        PreconditionerKind::Vcycle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PreconditionerKind::None => "none",
            PreconditionerKind::Jacobi => "jacobi",
            PreconditionerKind::Ichol => "ichol",
            PreconditionerKind::Vcycle => "vcycle",
        }
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreconditionerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PreconditionerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown preconditioner '{s}' (none, jacobi, ichol, vcycle)"))
    }
}

/// Outcome of one CG solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Explicitly recomputed `‖b − A x‖₂` at return.
    pub residual_norm: f64,
    /// Effective stopping threshold `max(atol, rtol·‖b‖)`.
    pub tolerance: f64,
    pub atol: f64,
    pub rtol: f64,
    /// False when the iteration cap was reached first.
    pub converged: bool,
    pub wall_time_s: f64,
    /// Solver-owned bytes: operator, preconditioner and work vectors.
    pub peak_bytes: usize,
}
