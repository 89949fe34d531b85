//! Model files, equivalence certificates, local-limit experiments and the
//! command-line front end.

pub mod cli;
pub mod equivalence;
pub mod local_limit;
pub mod model_file;

pub use equivalence::{certify_equivalence, compare_families, EquivalenceReport};
pub use local_limit::{local_limit_experiment, LocalLimitOptions, LocalLimitReport};
pub use model_file::ModelFile;
