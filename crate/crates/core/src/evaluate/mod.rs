//! Desk-scale surrogate evaluators and metrics.
//!
//! The evaluators here preserve the decision structure of the benchmark
//! (indicator + threshold -> success) with documented simplified physics; they
//! do not reproduce the sandbox game's rigid-body engine. All functions are
//! pure over scene snapshots, so independent samples can run in parallel.

mod lift;
mod support;
mod transport;

pub use lift::{simulate_lift, LiftOutcome};
pub use support::{evaluate_support, SupportOutcome, SupportParams};
pub use transport::{simulate_transport, TransportError, TransportOutcome};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::control::{ControlKey, ControlState};
use crate::geometry::{sphere_obb_intersects, Vec3};
use crate::scene::{block_features, BlockId, Scene};

/// Default trajectory sampling period (25 Hz).
pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.04;

/// Gravity: one weight unit per mass unit, consistent with recoil quoted in
/// mass units at normal gravity.
pub const GRAVITY: f64 = 1.0;

/// Uniformly sampled positions of tracked blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_period: f64,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub positions: Vec<(BlockId, Vec3)>,
}

/// Accumulated LLM usage for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostCounters {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub llm_requests: u64,
}

impl CostCounters {
    pub fn add(&mut self, other: CostCounters) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.llm_requests += other.llm_requests;
    }
}

/// Per-run evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task_id: String,
    pub level: u8,
    /// Blocks plus connectors, excluding the starting block.
    pub parts: u32,
    pub success: bool,
    /// Task-specific scalar: displacement, load, TWR, or height.
    pub indicator: f64,
    pub cost: CostCounters,
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("cannot aggregate an empty record list")]
    EmptyInput,
    #[error("records mix tasks: {0} and {1}")]
    MixedTasks(String, String),
}

/// Aggregate over n samples of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub task_id: String,
    pub level: u8,
    pub samples: usize,
    pub successes: usize,
    /// Percentage in [0, 100].
    pub success_rate: f64,
    pub mean_parts: f64,
    pub mean_indicator: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_requests: f64,
}

/// Success rate and means over a homogeneous batch of records.
pub fn aggregate(records: &[MetricsRecord]) -> Result<AggregateSummary, AggregateError> {
    let first = records.first().ok_or(AggregateError::EmptyInput)?;
    let key = (first.task_id.clone(), first.level);
    for r in records {
        if (r.task_id.clone(), r.level) != key {
            return Err(AggregateError::MixedTasks(
                format!("{}-lv{}", key.0, key.1),
                format!("{}-lv{}", r.task_id, r.level),
            ));
        }
    }
    let n = records.len() as f64;
    let successes = records.iter().filter(|r| r.success).count();
    Ok(AggregateSummary {
        task_id: first.task_id.clone(),
        level: first.level,
        samples: records.len(),
        successes,
        success_rate: successes as f64 / n * 100.0,
        mean_parts: records.iter().map(|r| r.parts as f64).sum::<f64>() / n,
        mean_indicator: records.iter().map(|r| r.indicator).sum::<f64>() / n,
        mean_input_tokens: records
            .iter()
            .map(|r| r.cost.input_tokens as f64)
            .sum::<f64>()
            / n,
        mean_output_tokens: records
            .iter()
            .map(|r| r.cost.output_tokens as f64)
            .sum::<f64>()
            / n,
        mean_requests: records
            .iter()
            .map(|r| r.cost.llm_requests as f64)
            .sum::<f64>()
            / n,
    })
}

/// Total machine mass: catalog masses summed over blocks and connectors.
pub fn total_mass(catalog: &Catalog, scene: &Scene) -> f64 {
    let block_mass: f64 = scene
        .blocks()
        .filter_map(|b| catalog.block_spec(&b.type_id).ok())
        .map(|s| s.mass)
        .sum();
    let connector_mass: f64 = scene
        .connectors()
        .filter_map(|c| catalog.block_spec(&c.type_id).ok())
        .map(|s| s.mass)
        .sum();
    block_mass + connector_mass
}

/// Cannons whose end-cap regions intersect any torch heat sphere. The middle
/// third of the body is excluded: the body narrows there and a small heat
/// source cannot reach it.
pub fn heated_cannons(catalog: &Catalog, scene: &Scene) -> BTreeSet<BlockId> {
    let mut spheres: Vec<(Vec3, f64)> = Vec::new();
    for block in scene.blocks() {
        if let Ok(spec) = catalog.block_spec(&block.type_id) {
            spheres.extend(block_features(spec, block).heat_spheres);
        }
    }
    let mut heated = BTreeSet::new();
    if spheres.is_empty() {
        return heated;
    }
    for block in scene.blocks() {
        let spec = match catalog.block_spec(&block.type_id) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let Some(jet) = block_features(spec, block).jet else {
            continue;
        };
        let hit = spheres.iter().any(|(center, radius)| {
            jet.end_caps
                .iter()
                .any(|cap| sphere_obb_intersects(*center, *radius, cap))
        });
        if hit {
            heated.insert(block.block_id);
        }
    }
    heated
}

/// Net cannon thrust and thrust-to-weight ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustReport {
    pub net_thrust: Vec3,
    /// |vertical net thrust| / total weight at unit gravity.
    pub twr: f64,
    pub heated: BTreeSet<BlockId>,
}

/// Per-cannon thrust is recoil_force, multiplied by the steam factor when the
/// cannon is heated, acting opposite the jet direction.
pub fn thrust_and_twr(catalog: &Catalog, scene: &Scene) -> ThrustReport {
    let heated = heated_cannons(catalog, scene);
    let mut net = Vec3::ZERO;
    for block in scene.blocks() {
        let spec = match catalog.block_spec(&block.type_id) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let Some(jet) = block_features(spec, block).jet else {
            continue;
        };
        let magnitude = if heated.contains(&block.block_id) {
            jet.recoil_force * jet.steam_multiplier
        } else {
            jet.recoil_force
        };
        net = net + (-jet.direction) * magnitude;
    }
    let mass = total_mass(catalog, scene);
    let twr = if mass > 0.0 {
        net.z.abs() / (mass * GRAVITY)
    } else {
        0.0
    };
    ThrustReport {
        net_thrust: net,
        twr,
        heated,
    }
}

/// Control state that presses and holds the fire key of every cannon for the
/// whole window, as the launch protocol prescribes.
pub fn synthesize_fire_controls(catalog: &Catalog, scene: &Scene) -> ControlState {
    let mut controls = ControlState::default();
    let key = ControlKey::Alpha(1);
    let mut any = false;
    for block in scene.blocks() {
        let has_fire = catalog
            .block_spec(&block.type_id)
            .map(|s| s.control_actions.iter().any(|a| a == "fire"))
            .unwrap_or(false);
        if has_fire {
            controls
                .bind_key(key, "fire", block.block_id, |_, _| true)
                .expect("fresh binding");
            any = true;
        }
    }
    if any {
        controls
            .add_control_sequence(
                0.0,
                key,
                crate::control::CONTROL_WINDOW_SECONDS,
                "continuous burn",
            )
            .expect("bound key");
    }
    controls
}
