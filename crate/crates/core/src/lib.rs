//! Numerical companion for the Atlas model and its Stefan free boundary limit.

pub mod atlas;
pub mod boundary;
pub mod error;
pub mod heat;
pub mod initial;
pub mod mass_profile;
pub mod mild;
pub mod rng;
pub mod special;
pub mod splitting;
pub mod verify;

pub use error::{Error, Result};
