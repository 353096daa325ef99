//! Task configuration: the nine shipped task assets (three categories, three
//! levels each) plus the glue that evaluates a finished scene against a task.
//!
//! Task prompts ship verbatim as data. Every success threshold is an explicit
//! config field; the stock values for Transport distance, Lift elevation, and
//! Support load are engine defaults because the benchmark never publishes its
//! numeric cutoffs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::config::EngineConfig;
use crate::control::ControlState;
use crate::evaluate::{
    self, evaluate_support, simulate_lift, simulate_transport, CostCounters, MetricsRecord,
    SupportParams, TransportError,
};
use crate::scene::Scene;

pub const TASK_SCHEMA_VERSION: u32 = 1;

/// The nine shipped task documents, keyed by asset name.
pub const SHIPPED_TASKS: [(&str, &str); 9] = [
    (
        "transport_lv1",
        include_str!("../assets/tasks/transport_lv1.toml"),
    ),
    (
        "transport_lv2",
        include_str!("../assets/tasks/transport_lv2.toml"),
    ),
    (
        "transport_lv3",
        include_str!("../assets/tasks/transport_lv3.toml"),
    ),
    (
        "support_lv1",
        include_str!("../assets/tasks/support_lv1.toml"),
    ),
    (
        "support_lv2",
        include_str!("../assets/tasks/support_lv2.toml"),
    ),
    (
        "support_lv3",
        include_str!("../assets/tasks/support_lv3.toml"),
    ),
    ("lift_lv1", include_str!("../assets/tasks/lift_lv1.toml")),
    ("lift_lv2", include_str!("../assets/tasks/lift_lv2.toml")),
    ("lift_lv3", include_str!("../assets/tasks/lift_lv3.toml")),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("task config parse error: {0}")]
    Parse(String),
    #[error("task config missing required field '{0}'")]
    MissingField(String),
    #[error("task config invalid: {0}")]
    Invalid(String),
    #[error("unknown task '{0}'; shipped tasks: transport_lv1..3, support_lv1..3, lift_lv1..3")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Transport,
    Support,
    Lift,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Transport => "transport",
            TaskKind::Support => "support",
            TaskKind::Lift => "lift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// success iff indicator > threshold
    Gt,
    /// success iff indicator >= threshold
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub indicator: f64,
    pub comparison: Comparison,
}

impl Threshold {
    /// Monotone in the indicator by construction.
    pub fn success(&self, indicator: f64) -> bool {
        match self.comparison {
            Comparison::Gt => indicator > self.indicator,
            Comparison::Ge => indicator >= self.indicator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub duration: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportTask {
    pub start: [f64; 2],
    pub target: [f64; 2],
    pub displacement_subject: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportTask {
    pub gap_width: f64,
    pub terrain_height: f64,
    pub init_position: [f64; 3],
    pub min_bearing: f64,
    pub deck_tolerance: f64,
    pub attachment_strength: f64,
    pub brace_strength: f64,
    pub winch_strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftIndicator {
    Twr,
    MaxHeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftTask {
    pub gravity: f64,
    pub indicator: LiftIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cargo {
    pub size: [f64; 3],
    pub mass: f64,
    pub drop_position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub version: u32,
    pub task_id: TaskKind,
    pub level: u8,
    pub name: String,
    pub requires_control: bool,
    pub max_substructures: u32,
    pub prompt: String,
    pub protocol: Protocol,
    pub thresholds: Option<Threshold>,
    #[serde(default)]
    pub transport: Option<TransportTask>,
    #[serde(default)]
    pub support: Option<SupportTask>,
    #[serde(default)]
    pub lift: Option<LiftTask>,
    #[serde(default)]
    pub cargo: Option<Cargo>,
}

impl TaskConfig {
    pub fn parse(document: &str) -> Result<TaskConfig, ConfigError> {
        let config: TaskConfig =
            toml::from_str(document).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Load a shipped task by asset name ("transport_lv1", ...).
    pub fn load_named(name: &str) -> Result<TaskConfig, ConfigError> {
        let doc = SHIPPED_TASKS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, d)| *d)
            .ok_or_else(|| ConfigError::UnknownTask(name.to_string()))?;
        TaskConfig::parse(doc)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.version != TASK_SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported task version {} (supported: {TASK_SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.thresholds.is_none() {
            return Err(ConfigError::MissingField("thresholds.indicator".into()));
        }
        if self.protocol.duration <= 0.0 || self.protocol.dt <= 0.0 {
            return Err(ConfigError::Invalid(
                "protocol duration and dt must be > 0".into(),
            ));
        }
        match self.task_id {
            TaskKind::Transport if self.transport.is_none() => {
                Err(ConfigError::MissingField("transport".into()))
            }
            TaskKind::Support if self.support.is_none() => {
                Err(ConfigError::MissingField("support".into()))
            }
            TaskKind::Lift if self.lift.is_none() => Err(ConfigError::MissingField("lift".into())),
            _ => Ok(()),
        }
    }

    pub fn thresholds(&self) -> &Threshold {
        self.thresholds.as_ref().expect("validated at parse")
    }

    fn support_params(&self) -> SupportParams {
        let s = self.support.as_ref().expect("validated at parse");
        SupportParams {
            gap_width: s.gap_width,
            min_bearing: s.min_bearing,
            deck_tolerance: s.deck_tolerance,
            cargo_footprint: self
                .cargo
                .as_ref()
                .map(|c| [c.size[0], c.size[1]])
                .unwrap_or([2.5, 2.5]),
            attachment_strength: s.attachment_strength,
            brace_strength: s.brace_strength,
            winch_strength: s.winch_strength,
        }
    }

    /// Evaluate one finished scene under this task's protocol, producing the
    /// per-run record. `controls` defaults to the scene's own control state.
    pub fn evaluate_scene(
        &self,
        catalog: &Catalog,
        engine_config: &EngineConfig,
        scene: &Scene,
        controls: Option<&ControlState>,
        cost: CostCounters,
    ) -> MetricsRecord {
        let controls = controls.unwrap_or(&scene.control);
        let (indicator, forced_failure) = match self.task_id {
            TaskKind::Transport => {
                match simulate_transport(
                    catalog,
                    engine_config,
                    scene,
                    controls,
                    self.protocol.duration,
                    self.protocol.dt,
                ) {
                    Ok(outcome) => (outcome.max_displacement, false),
                    Err(TransportError::NoControls) => (0.0, true),
                }
            }
            TaskKind::Support => {
                let outcome = evaluate_support(catalog, scene, &self.support_params());
                (outcome.load_capacity, false)
            }
            TaskKind::Lift => {
                let lift = self.lift.as_ref().expect("validated at parse");
                match lift.indicator {
                    LiftIndicator::Twr => (evaluate::thrust_and_twr(catalog, scene).twr, false),
                    LiftIndicator::MaxHeight => {
                        // The launch protocol presses and holds the firing key
                        // for the whole window.
                        let fire = evaluate::synthesize_fire_controls(catalog, scene);
                        let outcome = simulate_lift(
                            catalog,
                            scene,
                            &fire,
                            self.protocol.duration,
                            self.protocol.dt,
                            lift.gravity,
                        );
                        (outcome.max_height, false)
                    }
                }
            }
        };
        let success = !forced_failure && self.thresholds().success(indicator);
        MetricsRecord {
            task_id: self.task_id.as_str().to_string(),
            level: self.level,
            parts: scene.part_count(false) as u32,
            success,
            indicator,
            cost,
        }
    }
}
