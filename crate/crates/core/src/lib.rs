//! Grid-sampled machinery for Lipschitz regularization: extension operators,
//! an equivariant Lipschitz filter on tori, local perturbations that encode
//! data into local Lipschitz moduli, and local sections of linear torus
//! actions.
//!
//! Everything operates node-to-node on uniform grids; no interpolation. All
//! types are immutable after construction, so shared read access across
//! threads is safe.

pub mod dynamics;
pub mod error;
pub mod filter;
pub mod grid;
pub mod lipcore;
pub mod perturb;

pub use error::{Error, Result};

/// Every fenced Rust block in the guide (`book/`) compiles and runs as a
/// doc-test, so the book cannot drift out of sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/extension.md")]
    mod extension {}
    #[doc = include_str!("../../../book/src/filter.md")]
    mod filter {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/actions.md")]
    mod actions {}
    #[doc = include_str!("../../../book/src/sections.md")]
    mod sections {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
