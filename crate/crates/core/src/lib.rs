#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod camera;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod keyframe;
pub mod optimize;
pub mod render;
pub mod scene;
pub mod scalar;
pub mod skinning;

pub use error::{Error, Result};
