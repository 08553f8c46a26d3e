//! Speech feature extraction, a small neural-network stack, and the
//! dysarthria detection, severity, translation and evaluation pipelines
//! built on them.

pub mod audio_io;
pub mod dsp;
pub mod features;
pub mod interpret;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod synthetic;
pub mod train;
