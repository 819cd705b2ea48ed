//! One module per subcommand.

pub mod bruna_chapman;
pub mod continuum;
pub mod control;
pub mod edp;
pub mod identity;
pub mod invariant;
pub mod isometry;
pub mod mapping;
pub mod rate;
pub mod steady;
