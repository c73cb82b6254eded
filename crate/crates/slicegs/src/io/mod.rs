//! On-disk formats.

pub mod checkpoint;
pub mod config;
pub mod csvlog;
pub mod images;
pub mod kv;
pub mod palette;
pub mod volume;
