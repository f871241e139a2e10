#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blood;
pub mod config;
pub mod error;
pub mod levelset;
pub mod phantom;
pub mod pipeline;
pub mod seeds;
pub mod skeleton;
pub mod vec3;
pub mod vesselness;
pub mod volume;

pub use error::{Error, Result};
