//! The on-bus node: ingest, reorder, clean, annotate, summarize, ship.
//!
//! ```text
//!  replay file ─┐                                                 ┌──────────┐
//!               ├─► ingest ──► reorder ──► clean ──► analytics ──►│  uplink  ├──► hub
//!  socket ──────┘   thread      buffer    (per trip)  fold        │ FIFO+retry│
//!                                                                 └──────────┘
//! ```

pub mod boundary;
pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod reorder;
pub mod uplink;

pub use config::EdgeConfig;
pub use pipeline::{run_pipeline, EdgeProcessor, MessageSink, PipelineMetrics};
pub use uplink::{Uplink, UplinkStats};
