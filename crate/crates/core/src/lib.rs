#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod degrade;
pub mod evalkit;
pub mod generator;
pub mod overlay;
pub mod reason;
pub mod trajectory;
pub mod vlm;
pub mod volume;
