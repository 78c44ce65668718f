#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod numerics;
pub mod plant;
pub mod realization;
pub mod lqr_core;
pub mod deepo;
pub mod harness;
