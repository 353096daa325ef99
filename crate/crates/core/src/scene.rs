//! The live construction state: placed blocks with poses, the face-occupancy
//! ledger, connectors, and control bindings, plus deterministic hashing and
//! substructure merging.
//!
//! A scene is a single-writer value: mutations go through the action layer and
//! are serialized; read-only queries may run between mutations. Scenes can be
//! cloned cheaply enough to implement all-or-nothing candidate validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{BlockSpec, Catalog, ConnectorKind, Mounting};
use crate::config::EngineConfig;
use crate::control::ControlState;
use crate::geometry::{self, FaceFrame, Obb, Pose, Quat, Vec3};

pub type BlockId = u32;
pub type ConnectorId = u32;

/// The starting block's fixed id.
pub const STARTING_BLOCK_ID: BlockId = 0;
/// Catalog type of the starting block.
pub const STARTING_BLOCK_TYPE: &str = "StartingBlock";

/// Build phases in their fixed forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Build,
    Refine,
    Assemble,
    Finalized,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Build => "build",
            Phase::Refine => "refine",
            Phase::Assemble => "assemble",
            Phase::Finalized => "finalized",
        }
    }
}

/// Attachment record of a mounted block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mount {
    pub parent: BlockId,
    pub parent_face: String,
    /// The child's consumed face, when the child has faces at all.
    pub child_face: Option<String>,
    /// Direction from the child's body center toward its mounting face, in the
    /// child's local frame. Drives attachment-derived geometry (torch support).
    pub mount_dir_local: Vec3,
    /// Accumulated translation applied after mounting (micro-adjustments).
    pub offset: Vec3,
}

/// One placed module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedBlock {
    pub block_id: BlockId,
    pub type_id: String,
    pub pose: Pose,
    #[serde(default)]
    pub note: String,
    pub mounted_on: Option<Mount>,
    /// Functional direction reversed by flip_block.
    #[serde(default)]
    pub reversed: bool,
}

impl PlacedBlock {
    /// The block's functional axis (wheel rotation axis, torch shaft, cannon
    /// jet) in the world frame, before reversal.
    pub fn functional_axis(&self) -> Vec3 {
        self.pose.rotate(Vec3::Z)
    }
}

/// A brace or winch joining two block faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    pub connector_id: ConnectorId,
    pub kind: ConnectorKind,
    pub type_id: String,
    pub endpoint_a: (BlockId, String),
    pub endpoint_b: (BlockId, String),
    #[serde(default)]
    pub note: String,
}

/// Occupancy record of one face.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaceUse {
    /// The other block of an attachment through this face (child when this is
    /// the host face, parent when this is the consumed mount face).
    pub attachment: Option<BlockId>,
    pub connectors: Vec<ConnectorId>,
}

impl FaceUse {
    pub fn is_empty(&self) -> bool {
        self.attachment.is_none() && self.connectors.is_empty()
    }
}

/// The construction state triple: placed modules, their poses, and controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub catalog_hash: String,
    blocks: BTreeMap<BlockId, PlacedBlock>,
    connectors: BTreeMap<ConnectorId, Connector>,
    #[serde(skip)]
    ledger: BTreeMap<(BlockId, String), FaceUse>,
    pub control: ControlState,
    pub phase: Phase,
    next_block_id: BlockId,
    next_connector_id: ConnectorId,
}

impl Scene {
    /// Create a scene holding exactly one starting block at the given offset
    /// and rotation (Euler degrees, applied as Rz·Ry·Rx).
    pub fn start(
        catalog: &Catalog,
        init_shift: Vec3,
        init_rotation_deg: [f64; 3],
        note: &str,
    ) -> Scene {
        let pose = Pose::new(
            init_shift,
            Quat::from_euler_deg(
                init_rotation_deg[0],
                init_rotation_deg[1],
                init_rotation_deg[2],
            ),
        );
        let start = PlacedBlock {
            block_id: STARTING_BLOCK_ID,
            type_id: STARTING_BLOCK_TYPE.to_string(),
            pose,
            note: note.to_string(),
            mounted_on: None,
            reversed: false,
        };
        let mut blocks = BTreeMap::new();
        blocks.insert(STARTING_BLOCK_ID, start);
        Scene {
            catalog_hash: catalog.content_hash().to_string(),
            blocks,
            connectors: BTreeMap::new(),
            ledger: BTreeMap::new(),
            control: ControlState::default(),
            phase: Phase::Build,
            next_block_id: 1,
            next_connector_id: 0,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &PlacedBlock> {
        self.blocks.values()
    }

    pub fn block(&self, id: BlockId) -> Option<&PlacedBlock> {
        self.blocks.get(&id)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn connectors(&self) -> impl Iterator<Item = &Connector> {
        self.connectors.values()
    }

    pub fn connector(&self, id: ConnectorId) -> Option<&Connector> {
        self.connectors.get(&id)
    }

    pub fn face_use(&self, block: BlockId, face: &str) -> Option<&FaceUse> {
        self.ledger.get(&(block, face.to_string()))
    }

    pub fn ledger(&self) -> &BTreeMap<(BlockId, String), FaceUse> {
        &self.ledger
    }

    /// Placed blocks plus connectors; the starting block is excluded unless
    /// `include_start` is set.
    pub fn part_count(&self, include_start: bool) -> usize {
        let mut count = self.blocks.len() + self.connectors.len();
        if !include_start && self.blocks.contains_key(&STARTING_BLOCK_ID) {
            count -= 1;
        }
        count
    }

    /// Attachable faces of `block_id` with no attachment and connector
    /// headroom, in catalog declaration order.
    pub fn free_faces(
        &self,
        catalog: &Catalog,
        config: &EngineConfig,
        block_id: BlockId,
    ) -> Option<Vec<String>> {
        let block = self.blocks.get(&block_id)?;
        let spec = catalog.block_spec(&block.type_id).ok()?;
        let mut free = Vec::new();
        for face in spec.attachable_faces() {
            let used = self.ledger.get(&(block_id, face.face_id.clone()));
            let ok = match used {
                None => true,
                Some(u) => {
                    u.attachment.is_none()
                        && (u.connectors.len() as u32) < config.max_connectors_per_face
                }
            };
            if ok {
                free.push(face.face_id.clone());
            }
        }
        Some(free)
    }

    /// World frame of one face of a placed block.
    pub fn face_frame(
        &self,
        catalog: &Catalog,
        block_id: BlockId,
        face_id: &str,
    ) -> Option<FaceFrame> {
        let block = self.blocks.get(&block_id)?;
        let spec = catalog.block_spec(&block.type_id).ok()?;
        let face = spec.face(face_id)?;
        Some(geometry::face_world_frame(
            block.pose,
            face_id,
            face.center(),
            face.normal(),
        ))
    }

    /// Resolve a block reference that is either a numeric id or a unique note
    /// substring. Returns `Err(candidates)` listing matches when ambiguous or
    /// empty when nothing matches.
    pub fn resolve_block(&self, reference: &str) -> Result<BlockId, Vec<BlockId>> {
        if let Ok(id) = reference.trim().parse::<BlockId>() {
            if self.blocks.contains_key(&id) {
                return Ok(id);
            }
            return Err(Vec::new());
        }
        let needle = reference.to_lowercase();
        let matches: Vec<BlockId> = self
            .blocks
            .values()
            .filter(|b| !b.note.is_empty() && b.note.to_lowercase().contains(&needle))
            .map(|b| b.block_id)
            .collect();
        if matches.len() == 1 {
            Ok(matches[0])
        } else {
            Err(matches)
        }
    }

    // -- mutation primitives (used by the action layer) ---------------------

    pub fn allocate_block_id(&mut self) -> BlockId {
        let id = self.next_block_id;
        self.next_block_id += 1;
        id
    }

    /// The id the next allocation will return, without consuming it.
    pub fn peek_next_block_id(&self) -> BlockId {
        self.next_block_id
    }

    pub fn insert_block(&mut self, block: PlacedBlock) {
        if let Some(mount) = &block.mounted_on {
            self.ledger
                .entry((mount.parent, mount.parent_face.clone()))
                .or_default()
                .attachment = Some(block.block_id);
            if let Some(child_face) = &mount.child_face {
                self.ledger
                    .entry((block.block_id, child_face.clone()))
                    .or_default()
                    .attachment = Some(mount.parent);
            }
        }
        self.blocks.insert(block.block_id, block);
    }

    pub fn insert_connector(
        &mut self,
        kind: ConnectorKind,
        type_id: &str,
        a: (BlockId, String),
        b: (BlockId, String),
        note: &str,
    ) -> ConnectorId {
        let id = self.next_connector_id;
        self.next_connector_id += 1;
        self.ledger
            .entry(a.clone())
            .or_default()
            .connectors
            .push(id);
        self.ledger
            .entry(b.clone())
            .or_default()
            .connectors
            .push(id);
        self.connectors.insert(
            id,
            Connector {
                connector_id: id,
                kind,
                type_id: type_id.to_string(),
                endpoint_a: a,
                endpoint_b: b,
                note: note.to_string(),
            },
        );
        id
    }

    /// Blocks mounted directly on `id`.
    pub fn dependents(&self, id: BlockId) -> Vec<BlockId> {
        self.blocks
            .values()
            .filter(|b| b.mounted_on.as_ref().is_some_and(|m| m.parent == id))
            .map(|b| b.block_id)
            .collect()
    }

    /// Remove one block plus its connectors, freeing ledger entries. The
    /// caller is responsible for dependency policy.
    pub fn remove_block_raw(&mut self, id: BlockId) -> Option<PlacedBlock> {
        let block = self.blocks.remove(&id)?;
        if let Some(mount) = &block.mounted_on {
            if let Some(entry) = self
                .ledger
                .get_mut(&(mount.parent, mount.parent_face.clone()))
            {
                entry.attachment = None;
            }
        }
        let owned: Vec<ConnectorId> = self
            .connectors
            .values()
            .filter(|c| c.endpoint_a.0 == id || c.endpoint_b.0 == id)
            .map(|c| c.connector_id)
            .collect();
        for cid in owned {
            self.remove_connector_raw(cid);
        }
        self.ledger.retain(|(bid, _), _| *bid != id);
        self.prune_ledger();
        Some(block)
    }

    pub fn remove_connector_raw(&mut self, id: ConnectorId) -> Option<Connector> {
        let conn = self.connectors.remove(&id)?;
        for endpoint in [&conn.endpoint_a, &conn.endpoint_b] {
            if let Some(entry) = self.ledger.get_mut(endpoint) {
                entry.connectors.retain(|c| *c != id);
            }
        }
        self.prune_ledger();
        Some(conn)
    }

    fn prune_ledger(&mut self) {
        self.ledger.retain(|_, u| !u.is_empty());
    }

    pub fn set_block_pose(&mut self, id: BlockId, pose: Pose) {
        if let Some(b) = self.blocks.get_mut(&id) {
            b.pose = pose;
        }
    }

    pub fn set_block_reversed(&mut self, id: BlockId, reversed: bool) {
        if let Some(b) = self.blocks.get_mut(&id) {
            b.reversed = reversed;
        }
    }

    pub fn record_translation(&mut self, id: BlockId, shift: Vec3) {
        if let Some(b) = self.blocks.get_mut(&id) {
            if let Some(m) = &mut b.mounted_on {
                m.offset = m.offset + shift;
            }
        }
    }

    /// Rebuild the face ledger from blocks and connectors (after import).
    pub fn rebuild_ledger(&mut self) {
        self.ledger.clear();
        let mounts: Vec<(BlockId, Mount)> = self
            .blocks
            .values()
            .filter_map(|b| b.mounted_on.clone().map(|m| (b.block_id, m)))
            .collect();
        for (child, mount) in mounts {
            self.ledger
                .entry((mount.parent, mount.parent_face.clone()))
                .or_default()
                .attachment = Some(child);
            if let Some(face) = &mount.child_face {
                self.ledger
                    .entry((child, face.clone()))
                    .or_default()
                    .attachment = Some(mount.parent);
            }
        }
        let endpoints: Vec<(ConnectorId, (BlockId, String), (BlockId, String))> = self
            .connectors
            .values()
            .map(|c| (c.connector_id, c.endpoint_a.clone(), c.endpoint_b.clone()))
            .collect();
        for (cid, a, b) in endpoints {
            self.ledger.entry(a).or_default().connectors.push(cid);
            self.ledger.entry(b).or_default().connectors.push(cid);
        }
    }

    // -- geometry ------------------------------------------------------------

    /// Collision volumes of one placed block.
    pub fn block_volumes(spec: &BlockSpec, block: &PlacedBlock) -> Vec<Obb> {
        match &spec.mounting {
            Mounting::Cube | Mounting::None if !spec.is_connector() => {
                vec![Obb::new(
                    block.pose.position,
                    Vec3::new(
                        spec.shape[0] / 2.0,
                        spec.shape[1] / 2.0,
                        spec.shape[2] / 2.0,
                    ),
                    block.pose.orientation,
                )]
            }
            Mounting::Hub { .. } => {
                vec![Obb::new(
                    block.pose.position,
                    Vec3::new(
                        spec.shape[0] / 2.0,
                        spec.shape[1] / 2.0,
                        spec.shape[2] / 2.0,
                    ),
                    block.pose.orientation,
                )]
            }
            Mounting::Offset { offset } => {
                if let (Some(body), Some(span)) = (spec.body_extents, spec.jet_span) {
                    // Jet-axis body (water cannon): one box spanning the
                    // described body along local z.
                    let mid = (span[0] + span[1]) / 2.0;
                    let center = block.pose.apply(Vec3::new(0.0, 0.0, mid));
                    vec![Obb::new(
                        center,
                        Vec3::new(body[1] / 2.0, body[2] / 2.0, body[0] / 2.0),
                        block.pose.orientation,
                    )]
                } else {
                    // Support-plus-shaft body (torch). The support runs from
                    // the mounting face to the body center; the shaft runs
                    // along local z. Cross-section from the catalog shape.
                    let cross = spec.shape[1].min(spec.shape[2]) / 2.0;
                    let shaft_len = spec.shape[0] - offset;
                    let mount_dir = block
                        .mounted_on
                        .as_ref()
                        .and_then(|m| m.mount_dir_local.normalized())
                        .unwrap_or(-Vec3::Z);
                    let support = Obb::new(
                        block.pose.apply(mount_dir * (offset / 2.0)),
                        Vec3::new(offset / 2.0, cross, cross),
                        (block.pose.orientation * Quat::rotation_between(Vec3::X, mount_dir))
                            .normalized(),
                    );
                    let shaft = Obb::new(
                        block.pose.apply(Vec3::new(0.0, 0.0, shaft_len / 2.0)),
                        Vec3::new(cross, cross, shaft_len / 2.0),
                        block.pose.orientation,
                    );
                    vec![support, shaft]
                }
            }
            _ => Vec::new(),
        }
    }

    /// All collision volumes in the scene, tagged with their block id.
    pub fn all_volumes(&self, catalog: &Catalog) -> Vec<(BlockId, Obb)> {
        let mut out = Vec::new();
        for block in self.blocks.values() {
            if let Ok(spec) = catalog.block_spec(&block.type_id) {
                for v in Self::block_volumes(spec, block) {
                    out.push((block.block_id, v));
                }
            }
        }
        out
    }

    /// First colliding pair among all distinct blocks, if any.
    pub fn find_overlap(
        &self,
        catalog: &Catalog,
        config: &EngineConfig,
    ) -> Option<(BlockId, BlockId)> {
        let volumes = self.all_volumes(catalog);
        for i in 0..volumes.len() {
            for j in (i + 1)..volumes.len() {
                if volumes[i].0 == volumes[j].0 {
                    continue;
                }
                if geometry::obb_overlap(&volumes[i].1, &volumes[j].1, config.contact_tolerance) {
                    return Some((
                        volumes[i].0.min(volumes[j].0),
                        volumes[i].0.max(volumes[j].0),
                    ));
                }
            }
        }
        None
    }

    /// Collision check of candidate volumes against every block except those
    /// in `exclude`.
    pub fn collides_with(
        &self,
        catalog: &Catalog,
        config: &EngineConfig,
        candidate: &[Obb],
        exclude: &[BlockId],
    ) -> Option<BlockId> {
        for block in self.blocks.values() {
            if exclude.contains(&block.block_id) {
                continue;
            }
            let spec = match catalog.block_spec(&block.type_id) {
                Ok(s) => s,
                Err(_) => continue,
            };
            for existing in Self::block_volumes(spec, block) {
                for c in candidate {
                    if geometry::obb_overlap(&existing, c, config.contact_tolerance) {
                        return Some(block.block_id);
                    }
                }
            }
        }
        None
    }

    // -- hashing -------------------------------------------------------------

    /// Deterministic digest of the scene content. Insertion history, the id
    /// counters, and the trajectory log are excluded; everything observable
    /// (blocks, poses, notes, connectors, controls, phase) is included.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"scene-v1");
        h.update(self.catalog_hash.as_bytes());
        h.update([self.phase as u8]);
        h.update((self.blocks.len() as u64).to_le_bytes());
        for block in self.blocks.values() {
            h.update(block.block_id.to_le_bytes());
            hash_str(&mut h, &block.type_id);
            hash_pose(&mut h, &block.pose);
            hash_str(&mut h, &block.note);
            h.update([block.reversed as u8]);
            match &block.mounted_on {
                None => h.update([0u8]),
                Some(m) => {
                    h.update([1u8]);
                    h.update(m.parent.to_le_bytes());
                    hash_str(&mut h, &m.parent_face);
                    match &m.child_face {
                        None => h.update([0u8]),
                        Some(f) => {
                            h.update([1u8]);
                            hash_str(&mut h, f);
                        }
                    }
                    hash_vec(&mut h, m.mount_dir_local);
                    hash_vec(&mut h, m.offset);
                }
            }
        }
        h.update((self.connectors.len() as u64).to_le_bytes());
        for conn in self.connectors.values() {
            h.update(conn.connector_id.to_le_bytes());
            hash_str(&mut h, conn.kind.as_str());
            hash_str(&mut h, &conn.type_id);
            conn_endpoint(&mut h, &conn.endpoint_a);
            conn_endpoint(&mut h, &conn.endpoint_b);
            hash_str(&mut h, &conn.note);
        }
        let mut bindings: Vec<String> = self
            .control
            .bindings
            .iter()
            .map(|b| format!("{}|{}|{}", b.key.name(), b.action, b.block_id))
            .collect();
        bindings.sort();
        h.update((bindings.len() as u64).to_le_bytes());
        for b in bindings {
            hash_str(&mut h, &b);
        }
        h.update((self.control.sequence.len() as u64).to_le_bytes());
        for e in &self.control.sequence {
            h.update(e.time.to_bits().to_le_bytes());
            hash_str(&mut h, &e.key.name());
            h.update(e.hold_for.to_bits().to_le_bytes());
            hash_str(&mut h, &e.motion_note);
        }
        crate::catalog::hex(&h.finalize())
    }

    /// Merge a finalized substructure so `sub_anchor_face` mates flush onto
    /// `base_face`. All-or-nothing: on error the scene is unchanged. Returns
    /// the ids assigned to the merged blocks.
    pub fn merge_substructure(
        &mut self,
        catalog: &Catalog,
        config: &EngineConfig,
        sub: &Scene,
        base_block: BlockId,
        base_face: &str,
        sub_anchor_block: BlockId,
        sub_anchor_face: &str,
    ) -> Result<Vec<BlockId>, MergeError> {
        if self.phase != Phase::Assemble {
            return Err(MergeError::Phase(self.phase));
        }
        if sub.phase != Phase::Finalized {
            return Err(MergeError::SubNotFinalized(sub.phase));
        }
        let base_frame = self
            .face_frame(catalog, base_block, base_face)
            .ok_or(MergeError::BadBaseFace)?;
        let base_spec = catalog
            .block_spec(
                &self
                    .blocks
                    .get(&base_block)
                    .ok_or(MergeError::BadBaseFace)?
                    .type_id,
            )
            .map_err(|_| MergeError::BadBaseFace)?;
        let base_face_spec = base_spec.face(base_face).ok_or(MergeError::BadBaseFace)?;
        if !base_face_spec.attachable {
            return Err(MergeError::BadBaseFace);
        }
        if self
            .face_use(base_block, base_face)
            .is_some_and(|u| !u.is_empty())
        {
            return Err(MergeError::FaceOccupied { on_sub: false });
        }
        let anchor_frame = sub
            .face_frame(catalog, sub_anchor_block, sub_anchor_face)
            .ok_or(MergeError::BadAnchorFace)?;
        if sub
            .face_use(sub_anchor_block, sub_anchor_face)
            .is_some_and(|u| !u.is_empty())
        {
            return Err(MergeError::FaceOccupied { on_sub: true });
        }

        // Rigid map taking the anchor face onto the base face, normals
        // anti-parallel, centers coincident.
        let rot = Quat::rotation_between(anchor_frame.world_normal, -base_frame.world_normal);
        let map = |p: Vec3| base_frame.world_center + rot.rotate(p - anchor_frame.world_center);

        let mut candidate = self.clone();
        let mut id_map: BTreeMap<BlockId, BlockId> = BTreeMap::new();
        let mut created = Vec::new();
        for sub_block in sub.blocks.values() {
            let new_id = candidate.allocate_block_id();
            id_map.insert(sub_block.block_id, new_id);
            created.push(new_id);
        }
        for sub_block in sub.blocks.values() {
            let new_id = id_map[&sub_block.block_id];
            let new_pose = Pose::new(
                map(sub_block.pose.position),
                (rot * sub_block.pose.orientation).normalized(),
            );
            let mounted_on = if sub_block.block_id == sub_anchor_block {
                Some(Mount {
                    parent: base_block,
                    parent_face: base_face.to_string(),
                    child_face: Some(sub_anchor_face.to_string()),
                    mount_dir_local: sub_block
                        .pose
                        .orientation
                        .inverse()
                        .rotate(anchor_frame.world_normal),
                    offset: Vec3::ZERO,
                })
            } else {
                sub_block.mounted_on.as_ref().map(|m| Mount {
                    parent: id_map.get(&m.parent).copied().unwrap_or(m.parent),
                    parent_face: m.parent_face.clone(),
                    child_face: m.child_face.clone(),
                    mount_dir_local: m.mount_dir_local,
                    offset: m.offset,
                })
            };
            candidate.insert_block(PlacedBlock {
                block_id: new_id,
                type_id: sub_block.type_id.clone(),
                pose: new_pose,
                note: sub_block.note.clone(),
                mounted_on,
                reversed: sub_block.reversed,
            });
        }
        for conn in sub.connectors.values() {
            let a = (id_map[&conn.endpoint_a.0], conn.endpoint_a.1.clone());
            let b = (id_map[&conn.endpoint_b.0], conn.endpoint_b.1.clone());
            candidate.insert_connector(conn.kind, &conn.type_id, a, b, &conn.note);
        }
        // Bindings carry over with remapped ids; the sub's sequence does not
        // (control sequencing happens on the assembled machine).
        for binding in &sub.control.bindings {
            let remapped = crate::control::KeyBinding {
                key: binding.key,
                action: binding.action.clone(),
                block_id: id_map[&binding.block_id],
            };
            if !candidate.control.bindings.contains(&remapped) {
                candidate.control.bindings.push(remapped);
            }
        }

        if let Some(pair) = candidate.find_overlap(catalog, config) {
            return Err(MergeError::Overlap(pair.0, pair.1));
        }
        *self = candidate;
        Ok(created)
    }

    /// Move the phase forward. Backward transitions are rejected.
    pub fn advance_phase(&mut self, target: Phase) -> Result<(), Phase> {
        if target <= self.phase {
            return Err(self.phase);
        }
        self.phase = target;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergeError {
    Phase(Phase),
    SubNotFinalized(Phase),
    BadBaseFace,
    BadAnchorFace,
    FaceOccupied { on_sub: bool },
    Overlap(BlockId, BlockId),
}

/// Wheel kinematics derived from pose and reversal state.
#[derive(Debug, Clone, PartialEq)]
pub struct WheelInfo {
    /// Rotation axis (unit, world frame).
    pub axis: Vec3,
    /// Horizontal direction spin_forward rolls toward; `None` when the axis is
    /// vertical and the wheel cannot roll effectively.
    pub roll_direction: Option<Vec3>,
    pub rpm: f64,
    pub radius: f64,
}

/// Cannon jet geometry derived from pose and reversal state.
#[derive(Debug, Clone, PartialEq)]
pub struct JetInfo {
    /// Direction the jet exits (unit, world frame). Thrust acts opposite.
    pub direction: Vec3,
    pub inlet: Vec3,
    pub outlet: Vec3,
    pub recoil_force: f64,
    pub steam_multiplier: f64,
    /// The two end-cap heating regions (outer thirds of the body).
    pub end_caps: Vec<Obb>,
}

/// Functional facts of one placed block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockFeatures {
    pub wheel: Option<WheelInfo>,
    pub jet: Option<JetInfo>,
    /// (world center, radius) of each heat source.
    pub heat_spheres: Vec<(Vec3, f64)>,
}

/// Derive functional geometry from a placed block's pose, reversal flag, and
/// catalog constants.
pub fn block_features(spec: &BlockSpec, block: &PlacedBlock) -> BlockFeatures {
    let mut features = BlockFeatures::default();
    let axis = block.functional_axis();

    if let Some(rpm) = spec.physical.wheel_rpm {
        let sign = if block.reversed { -1.0 } else { 1.0 };
        let roll = Vec3::Z.cross(axis).normalized().map(|d| d * sign);
        features.wheel = Some(WheelInfo {
            axis,
            roll_direction: roll,
            rpm,
            radius: spec.shape[0] / 2.0,
        });
    }

    if let (Some(recoil), Some(span)) = (spec.physical.recoil_force, spec.jet_span) {
        let (inlet_off, outlet_off) = if block.reversed {
            (span[1], span[0])
        } else {
            (span[0], span[1])
        };
        let direction = if block.reversed { -axis } else { axis };
        let body = spec.body_extents.unwrap_or(spec.shape);
        let length = body[0];
        let third = length / 3.0;
        let lo = span[0];
        let hi = span[1];
        let cross = Vec3::new(body[1] / 2.0, body[2] / 2.0, third / 2.0);
        let cap = |center_z: f64| {
            Obb::new(
                block.pose.apply(Vec3::new(0.0, 0.0, center_z)),
                cross,
                block.pose.orientation,
            )
        };
        features.jet = Some(JetInfo {
            direction,
            inlet: block.pose.apply(Vec3::new(0.0, 0.0, inlet_off)),
            outlet: block.pose.apply(Vec3::new(0.0, 0.0, outlet_off)),
            recoil_force: recoil,
            steam_multiplier: spec.physical.steam_multiplier.unwrap_or(1.0),
            end_caps: vec![cap(lo + third / 2.0), cap(hi - third / 2.0)],
        });
    }

    if let (Some(radius), Some(offsets)) = (spec.physical.heat_radius, &spec.physical.heat_offsets)
    {
        for off in offsets {
            features
                .heat_spheres
                .push((block.pose.apply(Vec3::from_array(*off)), radius));
        }
    }

    features
}

fn hash_str(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

fn hash_vec(h: &mut Sha256, v: Vec3) {
    h.update(v.x.to_bits().to_le_bytes());
    h.update(v.y.to_bits().to_le_bytes());
    h.update(v.z.to_bits().to_le_bytes());
}

fn hash_pose(h: &mut Sha256, p: &Pose) {
    hash_vec(h, p.position);
    let q = p.orientation.canonicalized();
    for c in q.to_array() {
        h.update(c.to_bits().to_le_bytes());
    }
}

fn conn_endpoint(h: &mut Sha256, e: &(BlockId, String)) {
    h.update(e.0.to_le_bytes());
    hash_str(h, &e.1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::load_catalog;

    fn catalog() -> Catalog {
        load_catalog(crate::catalog::DEFAULT_CATALOG_TOML).unwrap()
    }

    #[test]
    fn start_places_one_block_with_six_free_faces() {
        let cat = catalog();
        let cfg = EngineConfig::default();
        let scene = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "");
        assert_eq!(scene.block_count(), 1);
        assert_eq!(scene.phase, Phase::Build);
        let free = scene.free_faces(&cat, &cfg, STARTING_BLOCK_ID).unwrap();
        assert_eq!(free.len(), 6);
    }

    #[test]
    fn start_supports_initial_shift() {
        let cat = catalog();
        let scene = Scene::start(
            &cat,
            Vec3::new(0.0, 0.0, 7.0),
            [0.0; 3],
            "support placement",
        );
        assert_eq!(scene.block(0).unwrap().pose.position.z, 7.0);
    }

    #[test]
    fn two_fresh_scenes_hash_identically() {
        let cat = catalog();
        let a = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "base");
        let b = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "base");
        assert_eq!(a.state_hash(), b.state_hash());

        let c = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "different note");
        assert_ne!(a.state_hash(), c.state_hash());
    }

    #[test]
    fn part_count_conventions() {
        let cat = catalog();
        let scene = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "");
        assert_eq!(scene.part_count(false), 0);
        assert_eq!(scene.part_count(true), 1);
    }

    #[test]
    fn phase_only_moves_forward() {
        let cat = catalog();
        let mut scene = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "");
        scene.advance_phase(Phase::Assemble).unwrap();
        assert!(scene.advance_phase(Phase::Build).is_err());
        scene.advance_phase(Phase::Finalized).unwrap();
        assert_eq!(scene.phase, Phase::Finalized);
    }

    #[test]
    fn resolve_block_by_note() {
        let cat = catalog();
        let mut scene = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "the base block");
        let id = scene.allocate_block_id();
        scene.insert_block(PlacedBlock {
            block_id: id,
            type_id: "SmallWoodenBlock".into(),
            pose: Pose::from_translation(Vec3::new(0.0, 0.0, 1.0)),
            note: "roof beam".into(),
            mounted_on: Some(Mount {
                parent: 0,
                parent_face: "top".into(),
                child_face: Some("bottom".into()),
                mount_dir_local: -Vec3::Z,
                offset: Vec3::ZERO,
            }),
            reversed: false,
        });
        assert_eq!(scene.resolve_block("roof"), Ok(id));
        assert_eq!(scene.resolve_block("1"), Ok(id));
        assert_eq!(scene.resolve_block("99"), Err(vec![]));
        // Ambiguous substring matches both notes.
        assert!(scene.resolve_block("b").is_err());
    }

    #[test]
    fn ledger_tracks_attachment_both_sides() {
        let cat = catalog();
        let cfg = EngineConfig::default();
        let mut scene = Scene::start(&cat, Vec3::ZERO, [0.0; 3], "");
        let id = scene.allocate_block_id();
        scene.insert_block(PlacedBlock {
            block_id: id,
            type_id: "SmallWoodenBlock".into(),
            pose: Pose::from_translation(Vec3::new(0.0, 0.0, 1.0)),
            note: String::new(),
            mounted_on: Some(Mount {
                parent: 0,
                parent_face: "top".into(),
                child_face: Some("bottom".into()),
                mount_dir_local: -Vec3::Z,
                offset: Vec3::ZERO,
            }),
            reversed: false,
        });
        let free = scene.free_faces(&cat, &cfg, 0).unwrap();
        assert_eq!(free.len(), 5);
        assert!(!free.contains(&"top".to_string()));
        let child_free = scene.free_faces(&cat, &cfg, id).unwrap();
        assert_eq!(child_free.len(), 5);
        assert!(!child_free.contains(&"bottom".to_string()));

        scene.remove_block_raw(id);
        assert_eq!(scene.free_faces(&cat, &cfg, 0).unwrap().len(), 6);
    }
}
