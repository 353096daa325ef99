//! Versioned native scene document: lossless JSON round-trip of the scene
//! plus the replayable trajectory log.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{EngineSession, LogEntry};
use crate::catalog::Catalog;
use crate::scene::Scene;

pub const NATIVE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NativeError {
    #[error("native document parse error: {0}")]
    Parse(String),
    #[error("unsupported native format version {0} (supported: {NATIVE_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("catalog mismatch: document was built against catalog {document}, loaded catalog is {loaded}")]
    CatalogMismatch { document: String, loaded: String },
    #[error("no active scene to export")]
    NoScene,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NativeSceneDocument {
    pub format_version: u32,
    pub catalog_hash: String,
    pub scene: Scene,
    #[serde(default)]
    pub trajectory_log: Vec<LogEntry>,
}

/// Export the session's live scene and trajectory log.
pub fn export_native(session: &EngineSession) -> Result<NativeSceneDocument, NativeError> {
    let scene = session.scene.as_ref().ok_or(NativeError::NoScene)?;
    Ok(NativeSceneDocument {
        format_version: NATIVE_FORMAT_VERSION,
        catalog_hash: scene.catalog_hash.clone(),
        scene: scene.clone(),
        trajectory_log: session.log.clone(),
    })
}

/// Deterministic JSON encoding: identical scenes produce byte-identical text.
pub fn export_native_json(session: &EngineSession) -> Result<String, NativeError> {
    let doc = export_native(session)?;
    serde_json::to_string_pretty(&doc).map_err(|e| NativeError::Parse(e.to_string()))
}

/// Parse and validate a native document against the loaded catalog, returning
/// the scene (with its ledger rebuilt) and the trajectory log.
pub fn import_native(catalog: &Catalog, json: &str) -> Result<(Scene, Vec<LogEntry>), NativeError> {
    let doc: NativeSceneDocument =
        serde_json::from_str(json).map_err(|e| NativeError::Parse(e.to_string()))?;
    if doc.format_version != NATIVE_FORMAT_VERSION {
        return Err(NativeError::UnsupportedVersion(doc.format_version));
    }
    if doc.catalog_hash != catalog.content_hash() {
        return Err(NativeError::CatalogMismatch {
            document: doc.catalog_hash,
            loaded: catalog.content_hash().to_string(),
        });
    }
    let mut scene = doc.scene;
    scene.rebuild_ledger();
    Ok((scene, doc.trajectory_log))
}
