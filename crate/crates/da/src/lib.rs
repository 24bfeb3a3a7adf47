//! Assimilation engines over an abstract forward model: an ensemble smoother
//! with multiple data assimilation, a randomized maximum likelihood
//! optimizer, and the surrogate-hybrid variants of both that reserve the
//! high-fidelity model for the prior and posterior evaluations.

pub mod diagnostics;
pub mod esmda;
pub mod forward_model;
pub mod rml;

pub use diagnostics::{misfit_summary, DaDiagnostics, MemberMisfit, PhaseTimings};
pub use esmda::{esmda_update, perturb_observations, run_esmda, run_sh_esmda, EsmdaConfig};
pub use forward_model::{CountingForward, ForwardModel, ParameterVector};
pub use rml::{rml_cost, run_rml, run_sh_rml, CmmOperator, RmlConfig};

#[derive(Debug, thiserror::Error)]
pub enum DaError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("forward model failed on member {member}: {source}")]
    Forward {
        member: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error("forward model does not provide input gradients; use a surrogate-backed model")]
    GradientUnavailable,

    #[error("observation mismatch: {0}")]
    ObsMismatch(String),

    #[error(transparent)]
    Core(#[from] gcs_core::CoreError),
}
