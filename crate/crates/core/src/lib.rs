// `!(x > 0.0)` also rejects NaN, which is the point of every such check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod extraction;
pub mod generation;
pub mod geometry;
pub mod harness;
pub mod optim;
pub mod planning;
pub mod servo;
pub mod sim;
pub mod soi;
