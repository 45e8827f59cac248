#![doc = include_str!("../README.md")]

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod model;
pub mod numeric;
mod serde_nan;
pub mod simulation;
pub mod tuning;

pub use error::{Error, ErrorCategory, Result};
pub use estimation::{fit, fit_with, EstimatorKind, FitOptions, FitResult};
pub use model::{LinkKind, ModelSpec, Theta};

/// Guide chapters, compiled as doc-tests so the snippets stay current.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/smle.md")]
    mod smle {}
    #[doc = include_str!("../../../book/src/mdpde.md")]
    mod mdpde {}
    #[doc = include_str!("../../../book/src/tuning.md")]
    mod tuning {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
