//! The guide in `book/`, compiled so that its Rust snippets run as
//! doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/delay-lines.md")]
pub mod delay_lines {}

#[doc = include_str!("../../../book/src/operator-maps.md")]
pub mod operator_maps {}

#[doc = include_str!("../../../book/src/predictor.md")]
pub mod predictor {}

#[doc = include_str!("../../../book/src/observer.md")]
pub mod observer {}

#[doc = include_str!("../../../book/src/wave.md")]
pub mod wave {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/acceptance.md")]
pub mod acceptance {}
