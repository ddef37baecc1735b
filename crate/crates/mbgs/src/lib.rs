//! File formats, dataset loading, rendering output, the command line and the
//! edit server, built on [`mbgs_core`].

pub use mbgs_core as core;

pub mod animate;
pub mod cli;
pub mod error;
pub mod formats;
pub mod frames;
pub mod fsio;
pub mod image;
pub mod init;
pub mod ply;
pub mod server;
pub mod synth;

pub use error::{Error, Result};
