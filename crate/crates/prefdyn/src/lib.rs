#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dpo;
pub mod dynamics;
pub mod ingest;
pub mod ipo;
pub mod model;
pub mod sampling_design;
pub mod structure;
pub mod sweep;
pub mod synth;
