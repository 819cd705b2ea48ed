//! The guide in `book/`, one module per chapter, so that `cargo test` runs
//! every listing as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/compression.md")]
pub mod compression {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/limit-equation.md")]
pub mod limit_equation {}
#[doc = include_str!("../../../book/src/free-energy.md")]
pub mod free_energy {}
#[doc = include_str!("../../../book/src/paths.md")]
pub mod paths {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
