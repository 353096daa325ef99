//! The immutable module catalog: per-type geometry, attachable faces, mass,
//! functional constants, and control actions, loaded from a versioned TOML
//! document. Immutable after load and safe to share across threads.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Vec3;

/// The default catalog document shipped with the engine.
pub const DEFAULT_CATALOG_TOML: &str = include_str!("../assets/catalog.toml");

/// Supported document schema version.
pub const CATALOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("catalog validation error for '{type_id}' field '{field}': {message}")]
    Validation {
        type_id: String,
        field: String,
        message: String,
    },
    #[error("unknown block type '{0}'")]
    UnknownBlockType(String),
}

/// How a block type mates onto a target face during attachment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mounting {
    /// Face-aligned cube: the face opposite the attach direction is consumed.
    Cube,
    /// A single named face mates the target; local z is the functional axis.
    Hub { face: String },
    /// No attachable faces; body center placed `offset` units out along the
    /// target normal, oriented by a pointing direction.
    Offset { offset: f64 },
    /// Never attached directly (starting block, connectors).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorKind {
    Brace,
    Winch,
}

impl ConnectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectorKind::Brace => "brace",
            ConnectorKind::Winch => "winch",
        }
    }
}

/// Optional per-type physical and functional constants.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Constant wheel speed in revolutions per minute.
    pub wheel_rpm: Option<f64>,
    /// Recoil force in mass units at normal gravity.
    pub recoil_force: Option<f64>,
    /// Steam-mode thrust multiplier; only meaningful with `recoil_force`.
    pub steam_multiplier: Option<f64>,
    /// Radius of the heating sphere.
    pub heat_radius: Option<f64>,
    /// Local offsets of heat sources relative to the body center, expressed in
    /// the block's functional frame (z = pointing axis).
    pub heat_offsets: Option<Vec<[f64; 3]>>,
    pub connector_kind: Option<ConnectorKind>,
}

/// One labeled attachment site on a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub face_id: String,
    pub local_center: [f64; 3],
    pub local_normal: [f64; 3],
    pub attachable: bool,
}

impl FaceSpec {
    pub fn center(&self) -> Vec3 {
        Vec3::from_array(self.local_center)
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::from_array(self.local_normal)
    }
}

/// Immutable catalog entry for one block type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub type_id: String,
    /// Extent triple [x, y, z] in the block's local frame.
    pub shape: [f64; 3],
    pub mass: f64,
    pub mounting: Mounting,
    #[serde(default)]
    pub faces: Vec<FaceSpec>,
    #[serde(default)]
    pub physical: PhysicalParams,
    #[serde(default)]
    pub control_actions: Vec<String>,
    /// Whether flip_block may reverse the block's functional direction.
    #[serde(default)]
    pub reversible: bool,
    /// Collision/heating body extents when they differ from `shape`.
    #[serde(default)]
    pub body_extents: Option<[f64; 3]>,
    /// [inlet, outlet] end-cap offsets along the jet axis from the body center.
    #[serde(default)]
    pub jet_span: Option<[f64; 2]>,
    pub description: String,
}

impl BlockSpec {
    pub fn is_connector(&self) -> bool {
        self.physical.connector_kind.is_some()
    }

    pub fn face(&self, face_id: &str) -> Option<&FaceSpec> {
        self.faces.iter().find(|f| f.face_id == face_id)
    }

    pub fn attachable_faces(&self) -> impl Iterator<Item = &FaceSpec> {
        self.faces.iter().filter(|f| f.attachable)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDocument {
    version: u32,
    #[serde(default)]
    name: Option<String>,
    blocks: Vec<BlockSpec>,
}

/// Read-only block catalog keyed by `type_id`.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub name: String,
    pub version: u32,
    blocks: BTreeMap<String, BlockSpec>,
    content_hash: String,
}

impl Catalog {
    /// Load and validate the default shipped catalog.
    pub fn default_catalog() -> Arc<Catalog> {
        Arc::new(load_catalog(DEFAULT_CATALOG_TOML).expect("shipped catalog must be valid"))
    }

    pub fn block_spec(&self, type_id: &str) -> Result<&BlockSpec, CatalogError> {
        self.blocks
            .get(type_id)
            .ok_or_else(|| CatalogError::UnknownBlockType(type_id.to_string()))
    }

    pub fn contains(&self, type_id: &str) -> bool {
        self.blocks.contains_key(type_id)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockSpec> {
        self.blocks.values()
    }

    /// Hash of the canonical parsed content; stable across loads of identical
    /// documents regardless of formatting.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    /// Serialize the catalog back to a document that parses to an equal catalog.
    pub fn to_document(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            version: u32,
            name: &'a str,
            blocks: Vec<&'a BlockSpec>,
        }
        let doc = Doc {
            version: self.version,
            name: &self.name,
            blocks: self.blocks.values().collect(),
        };
        toml::to_string(&doc).expect("catalog serializes")
    }

    /// Deterministic prose summary of a block type: shape, mass, face labels,
    /// control actions, and functional constants.
    pub fn describe_block_type(&self, type_id: &str) -> Result<String, CatalogError> {
        let spec = self.block_spec(type_id)?;
        let mut out = String::new();
        out.push_str(&format!(
            "{}: shape [{}, {}, {}], mass {} units.",
            spec.type_id,
            trim_num(spec.shape[0]),
            trim_num(spec.shape[1]),
            trim_num(spec.shape[2]),
            trim_num(spec.mass)
        ));
        if spec.faces.is_empty() {
            out.push_str(" No attachable faces.");
        } else {
            let labels: Vec<&str> = spec.faces.iter().map(|f| f.face_id.as_str()).collect();
            out.push_str(&format!(
                " Faces: {} ({} attachable).",
                labels.join(", "),
                spec.attachable_faces().count()
            ));
        }
        if !spec.control_actions.is_empty() {
            out.push_str(&format!(
                " Control actions: {}.",
                spec.control_actions.join(", ")
            ));
        }
        let p = &spec.physical;
        if let Some(rpm) = p.wheel_rpm {
            out.push_str(&format!(
                " Rotates at a constant speed of {} rpm.",
                trim_num(rpm)
            ));
        }
        if let Some(recoil) = p.recoil_force {
            out.push_str(&format!(
                " Generates constant recoil force of {} units of mass at normal gravity.",
                trim_num(recoil)
            ));
        }
        if let Some(mult) = p.steam_multiplier {
            out.push_str(&format!(
                " Steam mode when heated delivers {} times the regular recoil force.",
                trim_num(mult)
            ));
        }
        if let Some(r) = p.heat_radius {
            out.push_str(&format!(" Heating sphere radius {}.", trim_num(r)));
        }
        if let Some(kind) = p.connector_kind {
            out.push_str(&format!(" Connector kind: {}.", kind.as_str()));
        }
        out.push(' ');
        out.push_str(&spec.description);
        Ok(out)
    }

    /// One combined description of every block type, for prompt assembly.
    pub fn describe_all(&self) -> String {
        let mut out = String::new();
        for type_id in self.blocks.keys() {
            out.push_str("- ");
            out.push_str(&self.describe_block_type(type_id).expect("known type"));
            out.push('\n');
        }
        out
    }
}

fn trim_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v}");
        s
    }
}

/// Parse, validate, and freeze a catalog document.
pub fn load_catalog(document: &str) -> Result<Catalog, CatalogError> {
    if document.trim().is_empty() {
        return Err(CatalogError::Parse("empty document".to_string()));
    }
    let doc: CatalogDocument =
        toml::from_str(document).map_err(|e| CatalogError::Parse(e.to_string()))?;
    if doc.version != CATALOG_SCHEMA_VERSION {
        return Err(CatalogError::Parse(format!(
            "unsupported catalog version {} (supported: {})",
            doc.version, CATALOG_SCHEMA_VERSION
        )));
    }

    let mut blocks = BTreeMap::new();
    for spec in doc.blocks {
        validate_spec(&spec)?;
        let type_id = spec.type_id.clone();
        if blocks.insert(type_id.clone(), spec).is_some() {
            return Err(CatalogError::Validation {
                type_id,
                field: "type_id".into(),
                message: "duplicate block type".into(),
            });
        }
    }

    let mut catalog = Catalog {
        name: doc.name.unwrap_or_else(|| "unnamed".to_string()),
        version: doc.version,
        blocks,
        content_hash: String::new(),
    };
    catalog.content_hash = canonical_hash(&catalog);
    Ok(catalog)
}

fn canonical_hash(catalog: &Catalog) -> String {
    let mut hasher = Sha256::new();
    hasher.update(catalog.version.to_le_bytes());
    hasher.update(catalog.name.as_bytes());
    for spec in catalog.blocks.values() {
        let canon = serde_json::to_vec(spec).expect("spec serializes");
        hasher.update((canon.len() as u64).to_le_bytes());
        hasher.update(&canon);
    }
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn validate_spec(spec: &BlockSpec) -> Result<(), CatalogError> {
    let fail = |field: &str, message: String| CatalogError::Validation {
        type_id: spec.type_id.clone(),
        field: field.to_string(),
        message,
    };

    if spec.type_id.is_empty() {
        return Err(fail("type_id", "must not be empty".into()));
    }
    for (i, extent) in spec.shape.iter().enumerate() {
        if *extent <= 0.0 {
            return Err(fail(
                "shape",
                format!("extent [{i}] must be > 0, got {extent}"),
            ));
        }
    }
    if spec.mass <= 0.0 {
        return Err(fail("mass", format!("must be > 0, got {}", spec.mass)));
    }

    let mut seen = std::collections::BTreeSet::new();
    for face in &spec.faces {
        if !seen.insert(face.face_id.clone()) {
            return Err(fail(
                "faces",
                format!("duplicate face id '{}'", face.face_id),
            ));
        }
        let n = face.normal();
        if (n.norm() - 1.0).abs() > 1e-9 {
            return Err(fail(
                "faces",
                format!("face '{}' normal must be unit length", face.face_id),
            ));
        }
        // Center must lie on the local boundary box and the normal must point
        // outward: nudging the center along the normal leaves the box.
        let he = Vec3::new(
            spec.shape[0] / 2.0,
            spec.shape[1] / 2.0,
            spec.shape[2] / 2.0,
        );
        let c = face.center();
        let on_boundary = (c.x.abs() - he.x).abs() < 1e-9
            || (c.y.abs() - he.y).abs() < 1e-9
            || (c.z.abs() - he.z).abs() < 1e-9;
        if !on_boundary {
            return Err(fail(
                "faces",
                format!(
                    "face '{}' center is not on the block boundary",
                    face.face_id
                ),
            ));
        }
        let nudged = c + n * 1e-6;
        let outside = nudged.x.abs() > he.x || nudged.y.abs() > he.y || nudged.z.abs() > he.z;
        if !outside {
            return Err(fail(
                "faces",
                format!("face '{}' normal does not point outward", face.face_id),
            ));
        }
    }

    let mut seen_actions = std::collections::BTreeSet::new();
    for action in &spec.control_actions {
        if !seen_actions.insert(action.clone()) {
            return Err(fail(
                "control_actions",
                format!("duplicate action '{action}'"),
            ));
        }
    }

    let p = &spec.physical;
    for (name, value) in [
        ("wheel_rpm", p.wheel_rpm),
        ("recoil_force", p.recoil_force),
        ("steam_multiplier", p.steam_multiplier),
        ("heat_radius", p.heat_radius),
    ] {
        if let Some(v) = value {
            if v <= 0.0 {
                return Err(fail(name, format!("must be > 0, got {v}")));
            }
        }
    }
    if p.steam_multiplier.is_some() && p.recoil_force.is_none() {
        return Err(fail(
            "steam_multiplier",
            "present only when recoil_force is present".into(),
        ));
    }
    if let Mounting::Hub { face } = &spec.mounting {
        if spec.face(face).is_none() {
            return Err(fail("mounting", format!("hub face '{face}' not declared")));
        }
    }
    if let Mounting::Offset { offset } = &spec.mounting {
        if *offset <= 0.0 {
            return Err(fail(
                "mounting",
                format!("offset must be > 0, got {offset}"),
            ));
        }
    }
    Ok(())
}

/// Names of the block types the default catalog must contain.
pub const REQUIRED_TYPES: [&str; 7] = [
    "StartingBlock",
    "SmallWoodenBlock",
    "PoweredWheel",
    "WaterCannon",
    "Torch",
    "Brace",
    "Winch",
];

/// Load a catalog and require the full default module roster.
pub fn load_full_catalog(document: &str) -> Result<Catalog, CatalogError> {
    let catalog = load_catalog(document)?;
    for required in REQUIRED_TYPES {
        if !catalog.contains(required) {
            return Err(CatalogError::Validation {
                type_id: required.to_string(),
                field: "blocks".into(),
                message: "required block type missing".into(),
            });
        }
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_loads_with_paper_constants() {
        let catalog = load_full_catalog(DEFAULT_CATALOG_TOML).unwrap();

        let wheel = catalog.block_spec("PoweredWheel").unwrap();
        assert_eq!(wheel.shape, [2.0, 2.0, 0.5]);
        assert_eq!(wheel.mass, 1.0);
        assert_eq!(wheel.physical.wheel_rpm, Some(100.0));

        let start = catalog.block_spec("StartingBlock").unwrap();
        assert_eq!(start.shape, [1.0, 1.0, 1.0]);
        assert_eq!(start.mass, 0.25);
        assert_eq!(start.faces.len(), 6);

        let torch = catalog.block_spec("Torch").unwrap();
        assert_eq!(torch.shape, [1.5, 0.5, 0.5]);
        assert_eq!(torch.mass, 1.0);
        assert_eq!(torch.physical.heat_radius, Some(0.3));
        assert!(torch.faces.is_empty());

        let cannon = catalog.block_spec("WaterCannon").unwrap();
        assert_eq!(cannon.mass, 1.5);
        assert_eq!(cannon.physical.recoil_force, Some(1.6));
        assert_eq!(cannon.physical.steam_multiplier, Some(8.6));
        assert_eq!(cannon.body_extents, Some([1.75, 1.0, 1.0]));

        let brace = catalog.block_spec("Brace").unwrap();
        assert_eq!(brace.mass, 0.5);
        assert_eq!(brace.physical.connector_kind, Some(ConnectorKind::Brace));

        let winch = catalog.block_spec("Winch").unwrap();
        assert_eq!(winch.mass, 0.4);
    }

    #[test]
    fn empty_document_is_parse_error() {
        match load_catalog("") {
            Err(CatalogError::Parse(_)) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_type_errors() {
        let catalog = load_catalog(DEFAULT_CATALOG_TOML).unwrap();
        assert!(matches!(
            catalog.block_spec("Teleporter"),
            Err(CatalogError::UnknownBlockType(_))
        ));
    }

    #[test]
    fn describe_is_deterministic_and_mentions_constants() {
        let catalog = load_catalog(DEFAULT_CATALOG_TOML).unwrap();
        let a = catalog.describe_block_type("WaterCannon").unwrap();
        let b = catalog.describe_block_type("WaterCannon").unwrap();
        assert_eq!(a, b);
        assert!(a.contains("8.6"));
        assert!(a.to_lowercase().contains("steam"));

        let small = catalog.describe_block_type("SmallWoodenBlock").unwrap();
        assert!(small.contains("[1, 1, 1]"));
        assert!(small.contains("0.3"));
    }

    #[test]
    fn content_hash_stable_across_reload_and_roundtrip() {
        let a = load_catalog(DEFAULT_CATALOG_TOML).unwrap();
        let b = load_catalog(DEFAULT_CATALOG_TOML).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());

        let round = load_catalog(&a.to_document()).unwrap();
        assert_eq!(a.content_hash(), round.content_hash());
        assert_eq!(a.blocks.len(), round.blocks.len());
    }

    #[test]
    fn attachable_normals_point_outward() {
        let catalog = load_catalog(DEFAULT_CATALOG_TOML).unwrap();
        for spec in catalog.blocks() {
            let he = Vec3::new(
                spec.shape[0] / 2.0,
                spec.shape[1] / 2.0,
                spec.shape[2] / 2.0,
            );
            for face in spec.attachable_faces() {
                let probe = face.center() + face.normal() * 1e-6;
                assert!(
                    probe.x.abs() > he.x || probe.y.abs() > he.y || probe.z.abs() > he.z,
                    "{} face {} normal not outward",
                    spec.type_id,
                    face.face_id
                );
            }
        }
    }

    #[test]
    fn bad_normal_rejected() {
        let doc = r#"
version = 1
[[blocks]]
type_id = "Bad"
shape = [1.0, 1.0, 1.0]
mass = 1.0
mounting = { kind = "cube" }
description = "bad"
faces = [{ face_id = "top", local_center = [0.0, 0.0, 0.5], local_normal = [0.0, 0.0, 2.0], attachable = true }]
"#;
        assert!(matches!(
            load_catalog(doc),
            Err(CatalogError::Validation { .. })
        ));
    }
}
