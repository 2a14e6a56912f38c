//! Parameter learning for acyclic probabilistic logic programs from complete data.
//!
//! The pipeline is parse -> ground -> head groups -> sufficient statistics ->
//! fit. [`mle`] maximizes the likelihood directly (closed form where the
//! observed configurations allow it, projected gradient otherwise); [`em`] is
//! the latent-auxiliary EM baseline it is compared against in [`bench`].

pub mod bench;
pub mod data;
pub mod em;
pub mod exec;
pub mod ground;
pub mod groups;
pub mod learn;
pub mod mle;
pub mod parser;
pub mod programs;
pub mod rational;
pub mod stats;
pub mod syntax;

pub use data::{forward_sample, parse_interpretations, InterpretationSet};
pub use em::{desugar, fit_em, DesugaredProgram, EmOptions, EmTrace};
pub use exec::Exec;
pub use ground::{ground, GroundProgram};
pub use groups::{head_groups, HeadGroup};
pub use mle::{closed_form, fit_direct, gradient_fit, log_likelihood, FitResult, GroupModel, Method};
pub use parser::parse_program;
pub use stats::{sufficient_stats, SufficientStats};
pub use syntax::Program;

/// Any failure along the learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] parser::ParseError),
    #[error(transparent)]
    Ground(#[from] ground::GroundError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Fit(#[from] mle::FitError),
}

impl Error {
    /// True when the data contradict the program for every parameter value.
    pub fn is_inconsistency(&self) -> bool {
        matches!(self, Error::Fit(mle::FitError::Inconsistent { .. }))
    }
}
