//! Core data model for instruction-driven segmentation dataset tooling.
//!
//! This crate holds the pure, I/O-light building blocks shared by the rest of
//! the workspace: raster images and categorical masks with sliding-window
//! tiling, connected-component instance extraction, the geometric mask
//! filtering rules, segmentation evaluation metrics, and the progressive task
//! sampling schedule. Everything here is deterministic given explicit seeds
//! and safe to use across threads.

pub mod filter;
pub mod instance;
pub mod metrics;
pub mod raster;
pub mod schedule;
pub mod task;

pub use filter::{FilterConfig, FilterStage, FilterVerdict, RejectReason};
pub use instance::InstanceRegion;
pub use metrics::BinaryMask;
pub use raster::{CategoricalMask, CategoryTaxonomy, Patch, RasterImage};
pub use schedule::SamplingSchedule;
pub use task::Task;
