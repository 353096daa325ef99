//! Engine-wide tunables with documented defaults.

use serde::{Deserialize, Serialize};

/// Constraint-check configuration. The defaults are the documented engine
/// surrogates; none of them come from measured game behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Half-extent shrink applied to both boxes in every overlap test, so
    /// flush face-to-face attachment never reports as collision.
    pub contact_tolerance: f64,
    /// Connector endpoints allowed per face, in addition to at most one
    /// attachment.
    pub max_connectors_per_face: u32,
    /// Maximum distance between the two faces a brace or winch joins.
    pub connector_max_span: f64,
    /// When true, removing a block also removes blocks mounted on it.
    pub remove_cascade: bool,
    /// When true, the starting block rejects translation.
    pub starting_block_immovable: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            contact_tolerance: 1e-6,
            max_connectors_per_face: 1,
            connector_max_span: 10.0,
            remove_cascade: false,
            starting_block_immovable: true,
        }
    }
}
