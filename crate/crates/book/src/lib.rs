//! The guide in `book/`, compiled as doc comments so `cargo test` runs
//! every snippet against the current API. One module per chapter keeps
//! failures traceable to their file.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}
#[doc = include_str!("../../../book/src/rims.md")]
pub mod rims {}
#[doc = include_str!("../../../book/src/bagging_ellipse.md")]
pub mod bagging_ellipse {}
#[doc = include_str!("../../../book/src/planning.md")]
pub mod planning {}
#[doc = include_str!("../../../book/src/servoing.md")]
pub mod servoing {}
#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}
#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
