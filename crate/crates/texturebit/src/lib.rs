//! IO, file formats, threading and the CLI for the texturebit pipeline.
//! The algorithms live in `texturebit-core`; this crate wires them to PNG
//! files, checkpoint files on disk, worker threads and subcommands.

pub mod commands;
pub mod files;
pub mod parallel;
pub mod pngio;
pub mod training;

pub use texturebit_core as core;
