//! The validated action space: Build, Refine, Assemble, Control, and Query
//! operations mapping agent requests to scene mutations or taxonomized errors.
//!
//! Every operation is atomic: on any error the scene is unchanged (checks run
//! against candidate state before anything is committed). Actions against one
//! session are strictly serialized and the trajectory log is append-only.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::catalog::{Catalog, Mounting};
use crate::config::EngineConfig;
use crate::control::ControlKey;
use crate::describe;
use crate::geometry::{Obb, Pose, Quat, Vec3};
use crate::scene::{
    block_features, BlockId, ConnectorId, MergeError, Mount, Phase, PlacedBlock, Scene,
    STARTING_BLOCK_ID,
};

/// The five operator categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionCategory {
    Build,
    Refine,
    Assemble,
    Control,
    Query,
}

impl ActionCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionCategory::Build => "build",
            ActionCategory::Refine => "refine",
            ActionCategory::Assemble => "assemble",
            ActionCategory::Control => "control",
            ActionCategory::Query => "query",
        }
    }
}

/// Failure taxonomy. Each code renders through a fixed prose template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    OverlapConflict,
    FaceOccupied,
    InvalidFace,
    ExcessConnection,
    UnknownBlock,
    UnknownBlockType,
    StartingBlockProtected,
    ConnectorSpanExceeded,
    PhaseViolation,
    MalformedArguments,
}

/// A taxonomized engine failure plus the context needed to render its prose.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineError {
    pub code: ErrorCode,
    pub context: BTreeMap<&'static str, String>,
}

impl EngineError {
    pub fn new(code: ErrorCode) -> Self {
        EngineError {
            code,
            context: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &'static str, value: impl ToString) -> Self {
        self.context.insert(key, value.to_string());
        self
    }

    pub fn message(&self) -> String {
        describe::error_message(self.code, &self.context)
    }
}

impl std::fmt::Display for EngineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message())
    }
}

impl std::error::Error for EngineError {}

fn malformed(op: &str, detail: impl ToString) -> EngineError {
    EngineError::new(ErrorCode::MalformedArguments)
        .with("op", op)
        .with("detail", detail)
}

/// One typed request from the action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ActionCategory>,
    pub name: String,
    #[serde(default)]
    pub arguments: serde_json::Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Action {
    pub fn new(name: &str) -> Self {
        Action {
            category: None,
            name: name.to_string(),
            arguments: serde_json::Map::new(),
            note: None,
        }
    }

    pub fn arg(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.arguments.insert(key.to_string(), value.into());
        self
    }
}

/// Ids created or removed by an accepted action.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub created_blocks: Vec<BlockId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_blocks: Vec<BlockId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub created_connectors: Vec<ConnectorId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_connectors: Vec<ConnectorId>,
}

/// Outcome of one action: success prose or taxonomized failure prose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub ok: bool,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorCode>,
    #[serde(default)]
    pub state_delta: StateDelta,
}

impl ActionResult {
    fn success(description: String, state_delta: StateDelta) -> Self {
        ActionResult {
            ok: true,
            description,
            error: None,
            state_delta,
        }
    }

    fn failure(err: &EngineError) -> Self {
        ActionResult {
            ok: false,
            description: err.message(),
            error: Some(err.code),
            state_delta: StateDelta::default(),
        }
    }
}

/// One line of the replayable trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub action: Action,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorCode>,
    pub description: String,
}

/// Registered operation names by category.
pub const OPERATIONS: &[(&str, ActionCategory)] = &[
    ("start", ActionCategory::Build),
    ("attach_block_to", ActionCategory::Build),
    ("connect_blocks", ActionCategory::Build),
    ("remove_block", ActionCategory::Build),
    ("reset", ActionCategory::Build),
    ("twist_block", ActionCategory::Refine),
    ("translate_block", ActionCategory::Refine),
    ("flip_block", ActionCategory::Refine),
    ("save_substructure", ActionCategory::Assemble),
    ("enter_assemble_phase", ActionCategory::Assemble),
    ("merge_substructure", ActionCategory::Assemble),
    ("finalize", ActionCategory::Assemble),
    ("bind_key", ActionCategory::Control),
    ("add_control_sequence", ActionCategory::Control),
    ("get_machine_summary", ActionCategory::Query),
    ("get_block_detail", ActionCategory::Query),
    ("review_control_config", ActionCategory::Query),
    ("list_free_faces", ActionCategory::Query),
];

pub fn operation_category(name: &str) -> Option<ActionCategory> {
    OPERATIONS.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
}

/// One construction session: a live scene, saved substructures for assembly,
/// and the append-only trajectory log.
#[derive(Debug, Clone)]
pub struct EngineSession {
    pub catalog: Arc<Catalog>,
    pub config: EngineConfig,
    pub scene: Option<Scene>,
    pub substructures: BTreeMap<String, Scene>,
    pub log: Vec<LogEntry>,
}

impl EngineSession {
    pub fn new(catalog: Arc<Catalog>, config: EngineConfig) -> Self {
        EngineSession {
            catalog,
            config,
            scene: None,
            substructures: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    /// Digest over the live scene and saved substructures; excludes the log.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"session-v1");
        match &self.scene {
            None => h.update([0u8]),
            Some(s) => {
                h.update([1u8]);
                h.update(s.state_hash().as_bytes());
            }
        }
        for (name, sub) in &self.substructures {
            h.update(name.as_bytes());
            h.update(sub.state_hash().as_bytes());
        }
        crate::catalog::hex(&h.finalize())
    }

    /// Hash of the live scene alone.
    pub fn scene_hash(&self) -> Option<String> {
        self.scene.as_ref().map(|s| s.state_hash())
    }

    /// Dispatch one action, append the (action, result) pair to the trajectory
    /// log, and return the result. Errors leave all state unchanged.
    pub fn apply(&mut self, action: &Action) -> ActionResult {
        let result = match self.dispatch(action) {
            Ok((description, delta)) => ActionResult::success(description, delta),
            Err(err) => ActionResult::failure(&err),
        };
        self.log.push(LogEntry {
            action: action.clone(),
            ok: result.ok,
            error: result.error,
            description: result.description.clone(),
        });
        result
    }

    fn dispatch(&mut self, action: &Action) -> Result<(String, StateDelta), EngineError> {
        let registered = operation_category(&action.name)
            .ok_or_else(|| malformed(&action.name, "unknown operation name"))?;
        if let Some(given) = action.category {
            if given != registered {
                return Err(malformed(
                    &action.name,
                    format!(
                        "operation belongs to category '{}', not '{}'",
                        registered.as_str(),
                        given.as_str()
                    ),
                ));
            }
        }
        let args = Args {
            op: &action.name,
            map: &action.arguments,
            note: action.note.as_deref(),
        };
        match action.name.as_str() {
            "start" => self.op_start(&args),
            "attach_block_to" => self.op_attach(&args),
            "connect_blocks" => self.op_connect(&args),
            "remove_block" => self.op_remove(&args),
            "reset" => self.op_reset(),
            "twist_block" => self.op_twist(&args),
            "translate_block" => self.op_translate(&args),
            "flip_block" => self.op_flip(&args),
            "save_substructure" => self.op_save_substructure(&args),
            "enter_assemble_phase" => self.op_enter_assemble(),
            "merge_substructure" => self.op_merge(&args),
            "finalize" => self.op_finalize(),
            "bind_key" => self.op_bind_key(&args),
            "add_control_sequence" => self.op_add_sequence(&args),
            "get_machine_summary" => self.op_summary(),
            "get_block_detail" => self.op_block_detail(&args),
            "review_control_config" => self.op_review_control(),
            "list_free_faces" => self.op_list_free_faces(&args),
            _ => unreachable!("registered above"),
        }
    }

    fn scene_ref(&self, op: &str) -> Result<&Scene, EngineError> {
        self.scene.as_ref().ok_or_else(|| {
            EngineError::new(ErrorCode::PhaseViolation)
                .with("op", op)
                .with("phase", "none")
                .with("detail", " No machine has been started; call start first.")
        })
    }

    fn require_phase(&self, op: &str, allowed: &[Phase]) -> Result<&Scene, EngineError> {
        let scene = self.scene_ref(op)?;
        if !allowed.contains(&scene.phase) {
            return Err(EngineError::new(ErrorCode::PhaseViolation)
                .with("op", op)
                .with("phase", scene.phase.as_str()));
        }
        Ok(scene)
    }

    fn resolve(&self, op: &str, reference: &str) -> Result<BlockId, EngineError> {
        let scene = self.scene_ref(op)?;
        scene.resolve_block(reference).map_err(|candidates| {
            let mut err = EngineError::new(ErrorCode::UnknownBlock).with("query", reference);
            if candidates.is_empty() {
                err = err.with("candidates", "");
            } else {
                let ids: Vec<String> = candidates.iter().map(|c| format!("#{c}")).collect();
                err = err.with(
                    "candidates",
                    format!(" Ambiguous note; candidates: {}.", ids.join(", ")),
                );
            }
            err
        })
    }

    // -- build ---------------------------------------------------------------

    fn op_start(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        if let Some(scene) = &self.scene {
            return Err(EngineError::new(ErrorCode::PhaseViolation)
                .with("op", "start")
                .with("phase", scene.phase.as_str())
                .with(
                    "detail",
                    " A machine is already started; use reset to discard it.",
                ));
        }
        let shift = args.vec3_or("init_shift", Vec3::ZERO)?;
        let rotation = args.triple_or("init_rotation", [0.0; 3])?;
        let note = args.note_arg();
        let scene = Scene::start(&self.catalog, shift, rotation, &note);
        let free = scene
            .free_faces(&self.catalog, &self.config, STARTING_BLOCK_ID)
            .map(|f| f.len())
            .unwrap_or(0);
        let description = format!(
            "Started a new machine. StartingBlock is block #0 at {} with {} attachable face(s).",
            describe::fmt_vec(scene.block(STARTING_BLOCK_ID).unwrap().pose.position),
            free
        );
        self.scene = Some(scene);
        Ok((
            description,
            StateDelta {
                created_blocks: vec![STARTING_BLOCK_ID],
                ..Default::default()
            },
        ))
    }

    fn op_attach(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        self.require_phase("attach_block_to", &[Phase::Build, Phase::Assemble])?;
        let base_ref = args.block_ref("base_block")?;
        let base_id = self.resolve("attach_block_to", &base_ref)?;
        let face_id = args.str("face")?;
        let type_id = args.str("new_block")?;
        let pointing = args.opt_str("pointing");
        let note = args.note_arg();

        let catalog = self.catalog.clone();
        let spec = catalog
            .block_spec(&type_id)
            .map_err(|_| EngineError::new(ErrorCode::UnknownBlockType).with("type", &type_id))?;
        if type_id == crate::scene::STARTING_BLOCK_TYPE {
            return Err(EngineError::new(ErrorCode::StartingBlockProtected)
                .with("detail", " It cannot be attached as a new block."));
        }
        if spec.is_connector() {
            return Err(malformed(
                "attach_block_to",
                format!(
                    "'{type_id}' is a connector; use connect_blocks to place it between two faces"
                ),
            ));
        }

        let scene = self.scene.as_ref().unwrap();
        let base = scene.block(base_id).unwrap();
        let base_spec = catalog
            .block_spec(&base.type_id)
            .expect("placed type known");
        let face_spec = base_spec.face(&face_id).ok_or_else(|| {
            EngineError::new(ErrorCode::InvalidFace)
                .with("face", &face_id)
                .with("block", base_id)
                .with("detail", " The face does not exist on this block.")
        })?;
        if !face_spec.attachable {
            return Err(EngineError::new(ErrorCode::InvalidFace)
                .with("face", &face_id)
                .with("block", base_id));
        }
        if let Some(used) = scene.face_use(base_id, &face_id) {
            if let Some(other) = used.attachment {
                return Err(EngineError::new(ErrorCode::FaceOccupied)
                    .with("face", &face_id)
                    .with("block", base_id)
                    .with("occupant", format!("block #{other}")));
            }
            if !used.connectors.is_empty() {
                return Err(EngineError::new(ErrorCode::FaceOccupied)
                    .with("face", &face_id)
                    .with("block", base_id)
                    .with("occupant", format!("connector #{}", used.connectors[0])));
            }
        }

        let frame = scene
            .face_frame(&catalog, base_id, &face_id)
            .expect("face exists");
        let normal = frame.world_normal.normalized().expect("unit face normal");
        let pointing_dir = match &pointing {
            None => None,
            Some(word) => Some(describe::parse_compass(word).ok_or_else(|| {
                malformed(
                    "attach_block_to",
                    format!("unknown pointing direction '{word}'"),
                )
            })?),
        };

        let placement = compute_placement(spec, frame.world_center, normal, pointing_dir)
            .map_err(|detail| malformed("attach_block_to", detail))?;

        let scene = self.scene.as_mut().unwrap();
        let new_id = scene.peek_next_block_id();
        let candidate = PlacedBlock {
            block_id: new_id,
            type_id: type_id.clone(),
            pose: placement.pose,
            note: note.clone(),
            mounted_on: Some(Mount {
                parent: base_id,
                parent_face: face_id.clone(),
                child_face: placement.child_face.clone(),
                mount_dir_local: placement.mount_dir_local,
                offset: Vec3::ZERO,
            }),
            reversed: false,
        };
        let volumes = Scene::block_volumes(spec, &candidate);
        if let Some(other) = scene.collides_with(&catalog, &self.config, &volumes, &[]) {
            return Err(EngineError::new(ErrorCode::OverlapConflict)
                .with("a", other)
                .with("b", format!("{new_id} (new {type_id})")));
        }

        let id = scene.allocate_block_id();
        debug_assert_eq!(id, new_id);
        scene.insert_block(candidate.clone());

        let mut description = format!(
            "Attached {} as block #{}{} to face '{}' of block #{}. Center at {}.",
            type_id,
            id,
            if note.is_empty() {
                String::new()
            } else {
                format!(" ('{note}')")
            },
            face_id,
            base_id,
            describe::fmt_vec(placement.pose.position)
        );
        let features = block_features(spec, &candidate);
        if let Some(wheel) = &features.wheel {
            description.push_str(&format!(
                " Wheel axis {}; spin_forward rolls {}.",
                describe::compass_word(wheel.axis),
                match wheel.roll_direction {
                    Some(d) => describe::compass_word(d),
                    None => "nowhere (axis vertical)".to_string(),
                }
            ));
        }
        if let Some(jet) = &features.jet {
            description.push_str(&format!(
                " Jet direction {}; inlet at {}, outlet at {}.",
                describe::compass_word(jet.direction),
                describe::fmt_vec(jet.inlet),
                describe::fmt_vec(jet.outlet)
            ));
        }
        for (center, radius) in &features.heat_spheres {
            description.push_str(&format!(
                " Heating sphere radius {radius} centered at {}.",
                describe::fmt_vec(*center)
            ));
        }
        Ok((
            description,
            StateDelta {
                created_blocks: vec![id],
                ..Default::default()
            },
        ))
    }

    fn op_connect(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        self.require_phase("connect_blocks", &[Phase::Build, Phase::Assemble])?;
        let a_ref = args.block_ref("block_a")?;
        let b_ref = args.block_ref("block_b")?;
        let a_id = self.resolve("connect_blocks", &a_ref)?;
        let b_id = self.resolve("connect_blocks", &b_ref)?;
        let face_a = args.str("face_a")?;
        let face_b = args.str("face_b")?;
        let type_id = args.str("connector")?;
        let note = args.note_arg();

        let catalog = self.catalog.clone();
        let spec = catalog
            .block_spec(&type_id)
            .map_err(|_| EngineError::new(ErrorCode::UnknownBlockType).with("type", &type_id))?;
        let kind = spec.physical.connector_kind.ok_or_else(|| {
            malformed(
                "connect_blocks",
                format!("'{type_id}' is not a connector type"),
            )
        })?;
        if a_id == b_id && face_a == face_b {
            return Err(malformed(
                "connect_blocks",
                "connector endpoints must be two distinct faces",
            ));
        }

        let scene = self.scene.as_ref().unwrap();
        let mut frames = Vec::new();
        for (id, face) in [(a_id, &face_a), (b_id, &face_b)] {
            let block = scene.block(id).unwrap();
            let block_spec = catalog
                .block_spec(&block.type_id)
                .expect("placed type known");
            let face_spec = block_spec.face(face).ok_or_else(|| {
                EngineError::new(ErrorCode::InvalidFace)
                    .with("face", face)
                    .with("block", id)
                    .with("detail", " The face does not exist on this block.")
            })?;
            if !face_spec.attachable {
                return Err(EngineError::new(ErrorCode::InvalidFace)
                    .with("face", face)
                    .with("block", id)
                    .with("detail", " Connectors require an attachable face."));
            }
            if let Some(used) = scene.face_use(id, face) {
                if let Some(other) = used.attachment {
                    return Err(EngineError::new(ErrorCode::FaceOccupied)
                        .with("face", face)
                        .with("block", id)
                        .with("occupant", format!("block #{other}")));
                }
                if used.connectors.len() as u32 >= self.config.max_connectors_per_face {
                    return Err(EngineError::new(ErrorCode::ExcessConnection)
                        .with("face", face)
                        .with("block", id)
                        .with("count", used.connectors.len())
                        .with("cap", self.config.max_connectors_per_face));
                }
            }
            frames.push(scene.face_frame(&catalog, id, face).expect("face exists"));
        }
        let span = (frames[0].world_center - frames[1].world_center).norm();
        if span > self.config.connector_max_span {
            return Err(EngineError::new(ErrorCode::ConnectorSpanExceeded)
                .with("span", format!("{span:.3}"))
                .with("max", self.config.connector_max_span));
        }

        let scene = self.scene.as_mut().unwrap();
        let id = scene.insert_connector(
            kind,
            &type_id,
            (a_id, face_a.clone()),
            (b_id, face_b.clone()),
            &note,
        );
        let description = format!(
            "Connected block #{a_id} face '{face_a}' and block #{b_id} face '{face_b}' with {} #{id} (span {span:.3}).",
            kind.as_str()
        );
        Ok((
            description,
            StateDelta {
                created_connectors: vec![id],
                ..Default::default()
            },
        ))
    }

    fn op_remove(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        self.require_phase("remove_block", &[Phase::Build, Phase::Assemble])?;
        let block_ref = args.block_ref("block")?;
        let id = self.resolve("remove_block", &block_ref)?;
        if id == STARTING_BLOCK_ID {
            return Err(EngineError::new(ErrorCode::StartingBlockProtected).with("detail", ""));
        }
        let scene = self.scene.as_ref().unwrap();
        let dependents = scene.dependents(id);
        if !dependents.is_empty() && !self.config.remove_cascade {
            let ids: Vec<String> = dependents.iter().map(|d| format!("#{d}")).collect();
            return Err(EngineError::new(ErrorCode::PhaseViolation)
                .with("op", "remove_block")
                .with("phase", scene.phase.as_str())
                .with(
                    "detail",
                    format!(
                        " Block #{id} still carries mounted block(s) {}; remove them first (cascade removal is disabled).",
                        ids.join(", ")
                    ),
                ));
        }

        let scene = self.scene.as_mut().unwrap();
        let mut to_remove = vec![id];
        if self.config.remove_cascade {
            // Depth-first over the mount tree.
            let mut stack = dependents;
            while let Some(next) = stack.pop() {
                stack.extend(scene.dependents(next));
                to_remove.push(next);
            }
        }
        let mut removed_blocks = Vec::new();
        let mut removed_connectors = Vec::new();
        for rid in to_remove.iter().rev() {
            let before: Vec<ConnectorId> = scene.connectors().map(|c| c.connector_id).collect();
            if scene.remove_block_raw(*rid).is_some() {
                removed_blocks.push(*rid);
            }
            let after: Vec<ConnectorId> = scene.connectors().map(|c| c.connector_id).collect();
            removed_connectors.extend(before.into_iter().filter(|c| !after.contains(c)));
        }
        removed_blocks.sort_unstable();
        let description = format!(
            "Removed block(s) {} and {} connector(s). The machine now has {} block(s).",
            removed_blocks
                .iter()
                .map(|b| format!("#{b}"))
                .collect::<Vec<_>>()
                .join(", "),
            removed_connectors.len(),
            scene.block_count()
        );
        Ok((
            description,
            StateDelta {
                removed_blocks,
                removed_connectors,
                ..Default::default()
            },
        ))
    }

    fn op_reset(&mut self) -> Result<(String, StateDelta), EngineError> {
        let removed: Vec<BlockId> = self
            .scene
            .as_ref()
            .map(|s| s.blocks().map(|b| b.block_id).collect())
            .unwrap_or_default();
        self.scene = None;
        Ok((
            "Construction state reset; no machine is active. Use start to begin a new build."
                .to_string(),
            StateDelta {
                removed_blocks: removed,
                ..Default::default()
            },
        ))
    }

    // -- refine ---------------------------------------------------------------

    fn op_twist(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        self.require_phase(
            "twist_block",
            &[Phase::Build, Phase::Refine, Phase::Assemble],
        )?;
        let block_ref = args.block_ref("block")?;
        let id = self.resolve("twist_block", &block_ref)?;
        let angle_deg = args.f64("angle")?;

        let catalog = self.catalog.clone();
        let scene = self.scene.as_ref().unwrap();
        let block = scene.block(id).unwrap();
        let mount = block.mounted_on.clone().ok_or_else(|| {
            EngineError::new(ErrorCode::InvalidFace)
                .with("face", "(mounting)")
                .with("block", id)
                .with("detail", " The block is not mounted on any face, so it has no rooted surface to twist about.")
        })?;
        let frame = scene
            .face_frame(&catalog, mount.parent, &mount.parent_face)
            .ok_or_else(|| {
                EngineError::new(ErrorCode::InvalidFace)
                    .with("face", &mount.parent_face)
                    .with("block", mount.parent)
            })?;
        let axis = frame.world_normal;
        // Positive angles follow the right-hand rule about the outward normal,
        // i.e. clockwise when looking along the normal away from the parent.
        let rot = Quat::from_axis_angle(axis, angle_deg.to_radians());
        let pivot = frame.world_center;
        let new_pose = Pose::new(
            pivot + rot.rotate(block.pose.position - pivot),
            (rot * block.pose.orientation).normalized(),
        );

        let spec = catalog
            .block_spec(&block.type_id)
            .expect("placed type known");
        let mut candidate = block.clone();
        candidate.pose = new_pose;
        let volumes = Scene::block_volumes(spec, &candidate);
        if let Some(other) = scene.collides_with(&catalog, &self.config, &volumes, &[id]) {
            return Err(EngineError::new(ErrorCode::OverlapConflict)
                .with("a", other)
                .with("b", id));
        }
        self.scene.as_mut().unwrap().set_block_pose(id, new_pose);
        Ok((
            format!(
                "Twisted block #{id} by {angle_deg}° clockwise about its mounting normal ({}).",
                describe::compass_word(axis)
            ),
            StateDelta::default(),
        ))
    }

    fn op_translate(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        self.require_phase(
            "translate_block",
            &[Phase::Build, Phase::Refine, Phase::Assemble],
        )?;
        let block_ref = args.block_ref("block")?;
        let id = self.resolve("translate_block", &block_ref)?;
        let shift = args.vec3("shift")?;
        if id == STARTING_BLOCK_ID && self.config.starting_block_immovable {
            return Err(EngineError::new(ErrorCode::StartingBlockProtected)
                .with("detail", " The starting block is configured immovable."));
        }

        let catalog = self.catalog.clone();
        let scene = self.scene.as_ref().unwrap();
        let block = scene.block(id).unwrap();
        let spec = catalog
            .block_spec(&block.type_id)
            .expect("placed type known");
        let mut candidate = block.clone();
        candidate.pose.position = candidate.pose.position + shift;
        let volumes = Scene::block_volumes(spec, &candidate);
        if let Some(other) = scene.collides_with(&catalog, &self.config, &volumes, &[id]) {
            return Err(EngineError::new(ErrorCode::OverlapConflict)
                .with("a", other)
                .with("b", id));
        }
        // Connector spans must stay valid with the block at its new pose.
        for conn in scene.connectors() {
            let touches = conn.endpoint_a.0 == id || conn.endpoint_b.0 == id;
            if !touches {
                continue;
            }
            let endpoint_center = |endpoint: &(BlockId, String)| -> Vec3 {
                if endpoint.0 == id {
                    let face = spec.face(&endpoint.1).expect("ledgered face exists");
                    candidate.pose.apply(face.center())
                } else {
                    scene
                        .face_frame(&catalog, endpoint.0, &endpoint.1)
                        .expect("ledgered face exists")
                        .world_center
                }
            };
            let span =
                (endpoint_center(&conn.endpoint_a) - endpoint_center(&conn.endpoint_b)).norm();
            if span > self.config.connector_max_span {
                return Err(EngineError::new(ErrorCode::ConnectorSpanExceeded)
                    .with("span", format!("{span:.3}"))
                    .with("max", self.config.connector_max_span));
            }
        }

        let scene = self.scene.as_mut().unwrap();
        scene.set_block_pose(id, candidate.pose);
        scene.record_translation(id, shift);
        Ok((
            format!(
                "Translated block #{id} by {} to {}.",
                describe::fmt_vec(shift),
                describe::fmt_vec(candidate.pose.position)
            ),
            StateDelta::default(),
        ))
    }

    fn op_flip(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        self.require_phase(
            "flip_block",
            &[Phase::Build, Phase::Refine, Phase::Assemble],
        )?;
        let block_ref = args.block_ref("block")?;
        let id = self.resolve("flip_block", &block_ref)?;
        let catalog = self.catalog.clone();
        let scene = self.scene.as_ref().unwrap();
        let block = scene.block(id).unwrap();
        let spec = catalog
            .block_spec(&block.type_id)
            .expect("placed type known");
        if !spec.reversible {
            return Err(EngineError::new(ErrorCode::InvalidFace)
                .with("face", "(functional axis)")
                .with("block", id)
                .with(
                    "detail",
                    format!(" {} has no reversible functional direction.", block.type_id),
                ));
        }
        let reversed = !block.reversed;
        let scene = self.scene.as_mut().unwrap();
        scene.set_block_reversed(id, reversed);
        let block = scene.block(id).unwrap().clone();
        let features = block_features(spec, &block);
        let mut description = format!("Flipped block #{id}; functional direction reversed.");
        if let Some(wheel) = &features.wheel {
            description.push_str(&format!(
                " spin_forward now rolls {}.",
                match wheel.roll_direction {
                    Some(d) => describe::compass_word(d),
                    None => "nowhere (axis vertical)".to_string(),
                }
            ));
        }
        if let Some(jet) = &features.jet {
            description.push_str(&format!(
                " Jet direction now {}; inlet at {}, outlet at {}.",
                describe::compass_word(jet.direction),
                describe::fmt_vec(jet.inlet),
                describe::fmt_vec(jet.outlet)
            ));
        }
        Ok((description, StateDelta::default()))
    }

    // -- assemble --------------------------------------------------------------

    fn op_save_substructure(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        let name = args.str("name")?;
        let scene = self.require_phase("save_substructure", &[Phase::Finalized])?;
        if self.substructures.contains_key(&name) {
            return Err(malformed(
                "save_substructure",
                format!("substructure '{name}' already exists"),
            ));
        }
        let blocks = scene.block_count();
        let saved = self.scene.take().unwrap();
        self.substructures.insert(name.clone(), saved);
        Ok((
            format!(
                "Saved the finalized machine ({blocks} block(s)) as substructure '{name}'. The construction space is now empty; use start to begin the next build."
            ),
            StateDelta::default(),
        ))
    }

    fn op_enter_assemble(&mut self) -> Result<(String, StateDelta), EngineError> {
        let scene = self.scene_ref("enter_assemble_phase")?;
        let phase = scene.phase;
        let scene = self.scene.as_mut().unwrap();
        scene.advance_phase(Phase::Assemble).map_err(|_| {
            EngineError::new(ErrorCode::PhaseViolation)
                .with("op", "enter_assemble_phase")
                .with("phase", phase.as_str())
                .with("detail", " The phase order is build -> refine -> assemble -> finalized and never moves backward.")
        })?;
        Ok((
            "Entered the assemble phase; saved substructures may now be merged.".to_string(),
            StateDelta::default(),
        ))
    }

    fn op_merge(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        let name = args.str("substructure")?;
        let base_ref = args.block_ref("base_block")?;
        let base_face = args.str("base_face")?;
        let sub_block = args.u32("sub_block")?;
        let sub_face = args.str("sub_face")?;
        let base_id = self.resolve("merge_substructure", &base_ref)?;
        let sub = self.substructures.get(&name).cloned().ok_or_else(|| {
            malformed(
                "merge_substructure",
                format!("unknown substructure '{name}'"),
            )
        })?;
        let catalog = self.catalog.clone();
        let config = self.config.clone();
        let scene = self.scene.as_mut().ok_or_else(|| {
            EngineError::new(ErrorCode::PhaseViolation)
                .with("op", "merge_substructure")
                .with("phase", "none")
                .with("detail", " No machine has been started; call start first.")
        })?;
        let phase = scene.phase;
        let created = scene
            .merge_substructure(
                &catalog, &config, &sub, base_id, &base_face, sub_block, &sub_face,
            )
            .map_err(|e| match e {
                MergeError::Phase(p) => EngineError::new(ErrorCode::PhaseViolation)
                    .with("op", "merge_substructure")
                    .with("phase", p.as_str())
                    .with("detail", " Merging requires the assemble phase."),
                MergeError::SubNotFinalized(p) => EngineError::new(ErrorCode::PhaseViolation)
                    .with("op", "merge_substructure")
                    .with("phase", phase.as_str())
                    .with(
                        "detail",
                        format!(
                            " Substructure '{name}' is in phase '{}', not finalized.",
                            p.as_str()
                        ),
                    ),
                MergeError::BadBaseFace => EngineError::new(ErrorCode::InvalidFace)
                    .with("face", &base_face)
                    .with("block", base_id),
                MergeError::BadAnchorFace => EngineError::new(ErrorCode::InvalidFace)
                    .with("face", &sub_face)
                    .with("block", format!("{sub_block} (in substructure '{name}')")),
                MergeError::FaceOccupied { on_sub: false } => {
                    EngineError::new(ErrorCode::FaceOccupied)
                        .with("face", &base_face)
                        .with("block", base_id)
                        .with("occupant", "an existing attachment or connector")
                }
                MergeError::FaceOccupied { on_sub: true } => {
                    EngineError::new(ErrorCode::FaceOccupied)
                        .with("face", &sub_face)
                        .with("block", format!("{sub_block} (in substructure '{name}')"))
                        .with("occupant", "an existing attachment or connector")
                }
                MergeError::Overlap(a, b) => EngineError::new(ErrorCode::OverlapConflict)
                    .with("a", a)
                    .with("b", b),
            })?;
        let description = format!(
            "Merged substructure '{name}' ({} block(s)) onto face '{base_face}' of block #{base_id}; new block ids {}.",
            created.len(),
            created.iter().map(|c| format!("#{c}")).collect::<Vec<_>>().join(", ")
        );
        Ok((
            description,
            StateDelta {
                created_blocks: created,
                ..Default::default()
            },
        ))
    }

    fn op_finalize(&mut self) -> Result<(String, StateDelta), EngineError> {
        let scene = self.scene_ref("finalize")?;
        let phase = scene.phase;
        if phase == Phase::Finalized {
            return Err(EngineError::new(ErrorCode::PhaseViolation)
                .with("op", "finalize")
                .with("phase", phase.as_str())
                .with("detail", " The machine is already finalized."));
        }
        let scene = self.scene.as_mut().unwrap();
        scene.advance_phase(Phase::Finalized).expect("forward move");
        let parts = scene.part_count(false);
        Ok((
            format!("Machine finalized with {parts} part(s) (excluding the starting block). It is now ready for export and evaluation."),
            StateDelta::default(),
        ))
    }

    // -- control -----------------------------------------------------------------

    fn op_bind_key(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        let key_name = args.str("key")?;
        let action_name = args.str("action")?;
        let block_ref = args.block_ref("block_id")?;
        let id = self.resolve("bind_key", &block_ref)?;
        let key = ControlKey::parse(&key_name).map_err(|e| malformed("bind_key", e.to_string()))?;
        let catalog = self.catalog.clone();
        let scene = self.scene.as_mut().unwrap();
        let has = scene
            .block(id)
            .and_then(|b| catalog.block_spec(&b.type_id).ok())
            .map(|s| s.control_actions.contains(&action_name))
            .unwrap_or(false);
        scene
            .control
            .bind_key(key, &action_name, id, |_, _| has)
            .map_err(|e| malformed("bind_key", e.to_string()))?;
        Ok((
            format!(
                "Bound key {} to action '{}' on block #{}.",
                key.name(),
                action_name,
                id
            ),
            StateDelta::default(),
        ))
    }

    fn op_add_sequence(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        let time = args.f64("time")?;
        let key_name = args.str("key")?;
        let hold_for = args.f64("hold_for")?;
        let motion_note = args.opt_str("motion_note").unwrap_or_default();
        let key = ControlKey::parse(&key_name)
            .map_err(|e| malformed("add_control_sequence", e.to_string()))?;
        self.scene_ref("add_control_sequence")?;
        let scene = self.scene.as_mut().unwrap();
        let entry = scene
            .control
            .add_control_sequence(time, key, hold_for, &motion_note)
            .map_err(|e| malformed("add_control_sequence", e.to_string()))?;
        let beyond = entry.beyond_window;
        let window = scene.control.window_seconds();
        let mut description = format!(
            "Control sequence entry added: at {time}s press {} for {hold_for}s.",
            key.name()
        );
        if beyond {
            description.push_str(&format!(
                " Warning: the entry starts at or beyond the {window}-second simulation window and will be ignored."
            ));
        }
        Ok((description, StateDelta::default()))
    }

    // -- query -----------------------------------------------------------------

    fn op_summary(&mut self) -> Result<(String, StateDelta), EngineError> {
        let scene = self.scene_ref("get_machine_summary")?;
        Ok((
            describe::machine_summary(&self.catalog, &self.config, scene),
            StateDelta::default(),
        ))
    }

    fn op_block_detail(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        let block_ref = args.block_ref("block")?;
        let id = self.resolve("get_block_detail", &block_ref)?;
        let scene = self.scene_ref("get_block_detail")?;
        let text = describe::block_detail(&self.catalog, &self.config, scene, id)
            .expect("resolved block exists");
        Ok((text, StateDelta::default()))
    }

    fn op_review_control(&mut self) -> Result<(String, StateDelta), EngineError> {
        let scene = self.scene_ref("review_control_config")?;
        Ok((scene.control.review(), StateDelta::default()))
    }

    fn op_list_free_faces(&mut self, args: &Args) -> Result<(String, StateDelta), EngineError> {
        let block_ref = args.block_ref("block")?;
        let id = self.resolve("list_free_faces", &block_ref)?;
        let scene = self.scene_ref("list_free_faces")?;
        let free = scene
            .free_faces(&self.catalog, &self.config, id)
            .expect("resolved block exists");
        let text = if free.is_empty() {
            format!("Block #{id} has no free attachable faces.")
        } else {
            format!("Block #{id} free faces: {}.", free.join(", "))
        };
        Ok((text, StateDelta::default()))
    }
}

/// Result of placement computation for an attach.
struct Placement {
    pose: Pose,
    child_face: Option<String>,
    mount_dir_local: Vec3,
}

/// Compute the pose of a new block mated flush on a target face.
fn compute_placement(
    spec: &crate::catalog::BlockSpec,
    face_center: Vec3,
    normal: Vec3,
    pointing: Option<Vec3>,
) -> Result<Placement, String> {
    match &spec.mounting {
        Mounting::Cube => {
            // Trial identity orientation; snap the face whose outward normal is
            // closest to anti-parallel with the target normal.
            let target = -normal;
            let best = spec
                .attachable_faces()
                .max_by(|a, b| {
                    a.normal()
                        .dot(target)
                        .partial_cmp(&b.normal().dot(target))
                        .unwrap()
                })
                .ok_or_else(|| format!("{} has no attachable faces to mount with", spec.type_id))?;
            let snap = Quat::rotation_between(best.normal(), target);
            let orientation = snap.normalized();
            let position = face_center - orientation.rotate(best.center());
            Ok(Placement {
                pose: Pose::new(position, orientation),
                child_face: Some(best.face_id.clone()),
                mount_dir_local: best.normal(),
            })
        }
        Mounting::Hub { face } => {
            let hub = spec.face(face).expect("validated at catalog load");
            let orientation = Quat::rotation_between(hub.normal(), -normal).normalized();
            let position = face_center - orientation.rotate(hub.center());
            Ok(Placement {
                pose: Pose::new(position, orientation),
                child_face: Some(face.clone()),
                mount_dir_local: hub.normal(),
            })
        }
        Mounting::Offset { offset } => {
            let p = pointing.unwrap_or(normal);
            let dot = p.dot(normal);
            let orientation;
            let position;
            if dot.abs() < 1e-9 {
                // Side mount: local x toward the body from the face, local z
                // along the pointing axis.
                orientation = Quat::from_basis_xz(normal, p);
                position = face_center + normal * *offset;
            } else if (dot - 1.0).abs() < 1e-9 || (dot + 1.0).abs() < 1e-9 {
                orientation = Quat::rotation_between(Vec3::Z, p).normalized();
                position = match spec.jet_span {
                    // Butt mount for jet bodies: the near end cap sits flush on
                    // the face.
                    Some(span) => {
                        if dot > 0.0 {
                            face_center - normal * span[0]
                        } else {
                            face_center + normal * span[1]
                        }
                    }
                    None => face_center + normal * *offset,
                };
            } else {
                return Err(
                    "pointing must be parallel or perpendicular to the target face normal".into(),
                );
            }
            let mount_dir_local = orientation.inverse().rotate(-normal);
            Ok(Placement {
                pose: Pose::new(position, orientation),
                child_face: None,
                mount_dir_local,
            })
        }
        Mounting::None => Err(format!("{} cannot be attached", spec.type_id)),
    }
}

/// Typed argument extraction with MalformedArguments errors.
struct Args<'a> {
    op: &'a str,
    map: &'a serde_json::Map<String, Value>,
    note: Option<&'a str>,
}

impl<'a> Args<'a> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.map.get(key)
    }

    fn str(&self, key: &str) -> Result<String, EngineError> {
        match self.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(malformed(
                self.op,
                format!("argument '{key}' must be a string, got {other}"),
            )),
            None => Err(malformed(
                self.op,
                format!("missing required argument '{key}'"),
            )),
        }
    }

    fn opt_str(&self, key: &str) -> Option<String> {
        match self.get(key) {
            Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
            _ => None,
        }
    }

    /// A block reference: JSON number or string (numeric id or note text).
    fn block_ref(&self, key: &str) -> Result<String, EngineError> {
        match self.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(other) => Err(malformed(
                self.op,
                format!("argument '{key}' must be a block id or note string, got {other}"),
            )),
            None => Err(malformed(
                self.op,
                format!("missing required argument '{key}'"),
            )),
        }
    }

    fn f64(&self, key: &str) -> Result<f64, EngineError> {
        match self.get(key) {
            Some(Value::Number(n)) => n.as_f64().ok_or_else(|| {
                malformed(self.op, format!("argument '{key}' is not a finite number"))
            }),
            Some(other) => Err(malformed(
                self.op,
                format!("argument '{key}' must be a number, got {other}"),
            )),
            None => Err(malformed(
                self.op,
                format!("missing required argument '{key}'"),
            )),
        }
    }

    fn u32(&self, key: &str) -> Result<u32, EngineError> {
        let v = self.f64(key)?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(malformed(
                self.op,
                format!("argument '{key}' must be a non-negative integer"),
            ));
        }
        Ok(v as u32)
    }

    fn triple(&self, key: &str) -> Result<[f64; 3], EngineError> {
        match self.get(key) {
            Some(Value::Array(items)) if items.len() == 3 => {
                let mut out = [0.0; 3];
                for (i, item) in items.iter().enumerate() {
                    out[i] = item.as_f64().ok_or_else(|| {
                        malformed(self.op, format!("argument '{key}[{i}]' must be a number"))
                    })?;
                }
                Ok(out)
            }
            Some(other) => Err(malformed(
                self.op,
                format!("argument '{key}' must be a 3-element array, got {other}"),
            )),
            None => Err(malformed(
                self.op,
                format!("missing required argument '{key}'"),
            )),
        }
    }

    fn triple_or(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3], EngineError> {
        if self.get(key).is_none() {
            return Ok(default);
        }
        self.triple(key)
    }

    fn vec3(&self, key: &str) -> Result<Vec3, EngineError> {
        Ok(Vec3::from_array(self.triple(key)?))
    }

    fn vec3_or(&self, key: &str, default: Vec3) -> Result<Vec3, EngineError> {
        if self.get(key).is_none() {
            return Ok(default);
        }
        self.vec3(key)
    }

    /// The note argument, falling back to the action-level note.
    fn note_arg(&self) -> String {
        self.opt_str("note")
            .or_else(|| self.note.map(str::to_string))
            .unwrap_or_default()
    }
}

/// Obb list for a not-yet-inserted block (convenience for tests).
pub fn candidate_volumes(catalog: &Catalog, block: &PlacedBlock) -> Vec<Obb> {
    catalog
        .block_spec(&block.type_id)
        .map(|spec| Scene::block_volumes(spec, block))
        .unwrap_or_default()
}
