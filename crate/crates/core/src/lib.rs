//! Critical exponential tilts of multitype Bienaymé–Galton–Watson offspring
//! laws, with exact enumeration, conditioned sampling and Kesten-type limit
//! trees for checking them.

pub mod critical;
pub mod error;
pub mod exact;
pub mod harness;
pub mod pgf;
pub mod tilting;
pub mod trees;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/tilting.md")]
    mod tilting {}
    #[doc = include_str!("../../../book/src/critical.md")]
    mod critical {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/equivalence.md")]
    mod equivalence {}
    #[doc = include_str!("../../../book/src/local_limit.md")]
    mod local_limit {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
