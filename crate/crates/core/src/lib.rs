//! An open construction engine and benchmark harness: language-driven agents
//! (or scripted transcripts) assemble 3D machines from a fixed module catalog
//! under geometric and physical constraints, and desk-scale task protocols
//! evaluate the results.
//!
//! The crate is organized around the construction state. [`catalog`] defines
//! the immutable module space, [`geometry`] the pose algebra and collision
//! kernel, [`scene`] the live state, [`actions`] the validated action space,
//! [`control`] key bindings and timed sequences, [`describe`] the natural-
//! language projection, [`evaluate`] the task evaluators and metrics,
//! [`workflow`] the agentic construction pipeline, and [`interface`] all I/O
//! (native documents, machine-file export, the tool server, and reports).

pub mod actions;
pub mod catalog;
pub mod config;
pub mod control;
pub mod describe;
pub mod evaluate;
pub mod geometry;
pub mod interface;
pub mod scene;
pub mod task;
pub mod workflow;

pub use actions::{Action, ActionCategory, ActionResult, EngineError, EngineSession, ErrorCode};
pub use catalog::{load_catalog, load_full_catalog, Catalog};
pub use config::EngineConfig;
pub use scene::{Phase, Scene};
