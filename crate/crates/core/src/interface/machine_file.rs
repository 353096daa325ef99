//! Best-effort machine-file exporter.
//!
//! Emits an XML document following the community-documented sandbox machine
//! schema where known (Machine/Blocks/Block/Transform with position,
//! quaternion rotation, and scale). Numeric block ids beyond the starting
//! block are not verifiable against the closed game and are left to the
//! id table below; everything we cannot verify is emitted under the
//! `mb:` extension namespace. Bit-exact game compatibility is a non-goal.

use std::fmt::Write as _;

use thiserror::Error;

use crate::scene::{Phase, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum MachineFileError {
    #[error("machine export requires a finalized scene (current phase: {0})")]
    UnfinalizedScene(String),
}

/// Community numeric ids for the machine schema. Only the starting block's id
/// is well established; -1 marks types an importing tool must map itself.
pub const MACHINE_BLOCK_IDS: &[(&str, i32)] = &[
    ("StartingBlock", 0),
    ("SmallWoodenBlock", -1),
    ("PoweredWheel", -1),
    ("Torch", -1),
    ("WaterCannon", -1),
];

fn machine_block_id(type_id: &str) -> i32 {
    MACHINE_BLOCK_IDS
        .iter()
        .find(|(t, _)| *t == type_id)
        .map(|(_, id)| *id)
        .unwrap_or(-1)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn num(v: f64) -> String {
    // Full round-trip precision, stable formatting.
    format!("{v}")
}

/// Deterministic GUID-shaped identifier derived from the scene hash and the
/// block id, so identical scenes export identical files.
fn block_guid(scene_hash: &str, block_id: u32) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(scene_hash.as_bytes());
    h.update(block_id.to_le_bytes());
    let bytes = h.finalize();
    let hex = crate::catalog::hex(&bytes[..16]);
    format!(
        "{}-{}-{}-{}-{}",
        &hex[0..8],
        &hex[8..12],
        &hex[12..16],
        &hex[16..20],
        &hex[20..32]
    )
}

/// Serialize a finalized scene to the machine-file markup document.
pub fn export_machine_file(scene: &Scene, name: &str) -> Result<String, MachineFileError> {
    if scene.phase != Phase::Finalized {
        return Err(MachineFileError::UnfinalizedScene(
            scene.phase.as_str().to_string(),
        ));
    }
    let scene_hash = scene.state_hash();
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    let _ = writeln!(
        out,
        "<Machine version=\"1\" name=\"{}\" xmlns:mb=\"urn:mechabench:machine-ext\" mb:catalogHash=\"{}\">",
        xml_escape(name),
        scene.catalog_hash
    );
    out.push_str("  <Global>\n");
    out.push_str("    <Position x=\"0\" y=\"0\" z=\"0\" />\n");
    out.push_str("    <Rotation x=\"0\" y=\"0\" z=\"0\" w=\"1\" />\n");
    out.push_str("  </Global>\n");
    out.push_str("  <Blocks>\n");
    for block in scene.blocks() {
        let q = block.pose.orientation.canonicalized();
        let p = block.pose.position;
        let _ = writeln!(
            out,
            "    <Block id=\"{}\" guid=\"{}\" mb:typeName=\"{}\">",
            machine_block_id(&block.type_id),
            block_guid(&scene_hash, block.block_id),
            xml_escape(&block.type_id)
        );
        out.push_str("      <Transform>\n");
        let _ = writeln!(
            out,
            "        <Position x=\"{}\" y=\"{}\" z=\"{}\" />",
            num(p.x),
            num(p.y),
            num(p.z)
        );
        let _ = writeln!(
            out,
            "        <Rotation x=\"{}\" y=\"{}\" z=\"{}\" w=\"{}\" />",
            num(q.x),
            num(q.y),
            num(q.z),
            num(q.w)
        );
        out.push_str("        <Scale x=\"1\" y=\"1\" z=\"1\" />\n");
        out.push_str("      </Transform>\n");
        let bindings: Vec<_> = scene
            .control
            .bindings
            .iter()
            .filter(|b| b.block_id == block.block_id)
            .collect();
        if !block.note.is_empty() || block.reversed || !bindings.is_empty() {
            let _ = writeln!(
                out,
                "      <mb:Extension blockId=\"{}\" note=\"{}\" reversed=\"{}\">",
                block.block_id,
                xml_escape(&block.note),
                block.reversed
            );
            for binding in bindings {
                let _ = writeln!(
                    out,
                    "        <mb:KeyBinding key=\"{}\" action=\"{}\" />",
                    binding.key.name(),
                    xml_escape(&binding.action)
                );
            }
            out.push_str("      </mb:Extension>\n");
        }
        out.push_str("    </Block>\n");
    }
    out.push_str("  </Blocks>\n");
    if scene.connectors().count() > 0 {
        out.push_str("  <mb:Connectors>\n");
        for conn in scene.connectors() {
            let _ = writeln!(
                out,
                "    <mb:Connector id=\"{}\" kind=\"{}\" aBlock=\"{}\" aFace=\"{}\" bBlock=\"{}\" bFace=\"{}\" />",
                conn.connector_id,
                conn.kind.as_str(),
                conn.endpoint_a.0,
                xml_escape(&conn.endpoint_a.1),
                conn.endpoint_b.0,
                xml_escape(&conn.endpoint_b.1)
            );
        }
        out.push_str("  </mb:Connectors>\n");
    }
    if !scene.control.sequence.is_empty() {
        out.push_str("  <mb:ControlSequence>\n");
        for entry in &scene.control.sequence {
            let _ = writeln!(
                out,
                "    <mb:Entry time=\"{}\" key=\"{}\" holdFor=\"{}\" />",
                num(entry.time),
                entry.key.name(),
                num(entry.hold_for)
            );
        }
        out.push_str("  </mb:ControlSequence>\n");
    }
    out.push_str("</Machine>\n");
    Ok(out)
}
