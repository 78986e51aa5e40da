//! Interval-by-interval synthesis of the sparse observer-controller
//! network: constraint assembly, feasibility solves, link pruning, gain
//! recovery, and the switching schedule driver.

mod assemble;
mod gains;
mod run;
mod sparsify;

pub use assemble::{
    assemble_relaxation, assemble_stability_problem, decay_matrices, CertificateSet,
    StabilityProblem, CHAIN_RELAX,
};
pub use gains::{
    certificate_from_entry, dwell_time_floor, recover_gains, switching_time, GainSet,
};
pub use run::{run_compare, run_design, CompareRow, DesignAbort, DesignRun};
pub use sparsify::{
    sparsify, sparsify_exhaustive, sparsify_linear_search, sparsify_threshold, IterationContext,
    SparsifyOutcome, SparsifyReport, Variant, ALPHA_ZERO_TOL, EXHAUSTIVE_MAX_LINKS,
};

use crate::linalg::SymMatrix;
use crate::lmi::LmiError;
use crate::model::ModelError;
use std::fmt;

/// Certificates carried from one interval to the next.
#[derive(Clone, Debug)]
pub struct CertPair {
    pub z: Vec<SymMatrix>,
    pub phat: Vec<SymMatrix>,
}

/// Errors raised while designing.
#[derive(Debug, Clone)]
pub enum DesignError {
    Model(ModelError),
    Lmi(LmiError),
    /// The synthesis problem is infeasible with every candidate link
    /// active; the certified upper bound on the attainable margin is
    /// attached.
    Infeasible {
        k: usize,
        t_k: f64,
        certified_slack: f64,
    },
    /// A solver-produced certificate failed a recovery-side sanity check.
    Certificate(String),
    /// The exhaustive strategy refuses adjacencies this large.
    AdjacencyTooLarge { links: usize, max: usize },
    BadInput(String),
}

impl fmt::Display for DesignError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignError::Model(e) => write!(f, "model error: {e}"),
            DesignError::Lmi(e) => write!(f, "solver error: {e}"),
            DesignError::Infeasible {
                k,
                t_k,
                certified_slack,
            } => write!(
                f,
                "design infeasible at interval {k} (t = {t_k:.6}); certified margin bound {certified_slack:.3e}"
            ),
            DesignError::Certificate(msg) => write!(f, "certificate error: {msg}"),
            DesignError::AdjacencyTooLarge { links, max } => write!(
                f,
                "exhaustive search refused: {links} candidate links exceed the guard of {max} (2^{links} solves)"
            ),
            DesignError::BadInput(msg) => write!(f, "bad input: {msg}"),
        }
    }
}

impl std::error::Error for DesignError {}

impl From<ModelError> for DesignError {
    fn from(e: ModelError) -> Self {
        DesignError::Model(e)
    }
}

impl From<LmiError> for DesignError {
    fn from(e: LmiError) -> Self {
        DesignError::Lmi(e)
    }
}
