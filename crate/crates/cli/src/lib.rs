//! Configuration, pipeline stages and file output for the `upscale` binary.

pub mod config;
pub mod output;
pub mod pipeline;
