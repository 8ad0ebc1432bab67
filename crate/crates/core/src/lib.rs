//! Multi-modal clinical records rendered as images, classified by a
//! late-fusion vision/text transformer.
//!
//! Pipeline: [`ingest`] parses inputs and builds the cohort, [`encode`]
//! rasterizes each modality, [`text`] serializes and tokenizes metadata,
//! [`model`] trains the fusion classifier, [`metrics`] scores it and tests
//! significance, [`explain`] turns attention into saliency overlays.
//! [`synth`] generates cohorts with planted signals and [`pipeline`] wires
//! everything together for the `modimg` CLI.

pub mod catalog;
pub mod config;
pub mod encode;
pub mod error;
pub mod explain;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
