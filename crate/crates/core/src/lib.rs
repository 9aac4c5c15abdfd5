//! Edge analytics for transit AVL (automatic vehicle location) telemetry.
//!
//! The crate is split the same way the deployment is:
//!
//! * [`model`] and [`geo`] hold the shared domain types, haversine distance and
//!   the move/stop classifier.
//! * [`preprocess`] repairs raw telemetry records (redundant columns, bad values,
//!   missing fields, duplicates, missing cadence slots).
//! * [`analytics`] folds clean tuples into per-trip and per-day summaries.
//! * [`edge`] is the on-bus pipeline: ingest, reorder, clean, annotate, detect
//!   trip/day boundaries and ship summaries upstream with store-and-forward.
//! * [`hub`] receives summaries, persists them in an append-only log and builds
//!   the operational reports.
//! * [`fixtures`] generates deterministic synthetic feeds with ground truth and
//!   injects faults into them.

pub mod analytics;
pub mod avl_csv;
pub mod config;
pub mod edge;
pub mod fixtures;
pub mod geo;
pub mod hub;
pub mod model;
pub mod preprocess;
pub mod wire;

pub use geo::{classify_motion, great_circle_distance, EARTH_RADIUS_M, STOP_MOVE_THRESHOLD_M};
pub use model::{
    AvlTuple, DailySummary, Daypart, DaypartSummary, GeoPoint, MotionAnnotation, MotionLabel,
    TripSummary,
};
