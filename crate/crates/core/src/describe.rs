//! Natural-language projection of state for agent consumption: machine
//! summaries, per-block detail, control narration, and error prose.
//!
//! All output is deterministic: identical scenes yield byte-identical text.
//! Positions print with fixed 3-decimal precision so golden files stay stable
//! and agents can parse them back.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::actions::ErrorCode;
use crate::catalog::Catalog;
use crate::config::EngineConfig;
use crate::evaluate;
use crate::geometry::Vec3;
use crate::scene::{block_features, BlockId, Scene};

const TEMPLATES_TOML: &str = include_str!("../assets/templates.toml");

fn error_templates() -> &'static BTreeMap<String, String> {
    static TEMPLATES: OnceLock<BTreeMap<String, String>> = OnceLock::new();
    TEMPLATES.get_or_init(|| {
        #[derive(serde::Deserialize)]
        struct Doc {
            errors: BTreeMap<String, String>,
        }
        let doc: Doc = toml::from_str(TEMPLATES_TOML).expect("templates asset parses");
        doc.errors
    })
}

/// Fixed 3-decimal vector formatting: `[x.xxx, y.yyy, z.zzz]`.
pub fn fmt_vec(v: Vec3) -> String {
    format!(
        "[{:.3}, {:.3}, {:.3}]",
        fix_zero(v.x),
        fix_zero(v.y),
        fix_zero(v.z)
    )
}

fn fix_zero(v: f64) -> f64 {
    // Avoid "-0.000" in output.
    if v.abs() < 0.5e-3 {
        0.0
    } else {
        v
    }
}

/// Compass word for an axis-aligned unit direction, or the formatted vector.
pub fn compass_word(dir: Vec3) -> String {
    const EPS: f64 = 1e-6;
    let named = [
        (Vec3::X, "east"),
        (-Vec3::X, "west"),
        (Vec3::Y, "north"),
        (-Vec3::Y, "south"),
        (Vec3::Z, "up"),
        (-Vec3::Z, "down"),
    ];
    for (axis, word) in named {
        if (dir - axis).norm() < EPS {
            return word.to_string();
        }
    }
    fmt_vec(dir)
}

/// Parse a compass word to a world unit direction.
pub fn parse_compass(word: &str) -> Option<Vec3> {
    match word.trim().to_lowercase().as_str() {
        "east" => Some(Vec3::X),
        "west" => Some(-Vec3::X),
        "north" => Some(Vec3::Y),
        "south" => Some(-Vec3::Y),
        "up" | "top" | "upward" | "upwards" | "sky" => Some(Vec3::Z),
        "down" | "bottom" | "downward" | "downwards" | "ground" => Some(-Vec3::Z),
        _ => None,
    }
}

/// Render the fixed template for an error code, filling `{placeholders}` from
/// the context map. Unknown placeholders render empty.
pub fn error_message(code: ErrorCode, context: &BTreeMap<&'static str, String>) -> String {
    let key = match code {
        ErrorCode::OverlapConflict => "overlap_conflict",
        ErrorCode::FaceOccupied => "face_occupied",
        ErrorCode::InvalidFace => "invalid_face",
        ErrorCode::ExcessConnection => "excess_connection",
        ErrorCode::UnknownBlock => "unknown_block",
        ErrorCode::UnknownBlockType => "unknown_block_type",
        ErrorCode::StartingBlockProtected => "starting_block_protected",
        ErrorCode::ConnectorSpanExceeded => "connector_span_exceeded",
        ErrorCode::PhaseViolation => "phase_violation",
        ErrorCode::MalformedArguments => "malformed_arguments",
    };
    let template = error_templates()
        .get(key)
        .cloned()
        .unwrap_or_else(|| format!("Action rejected: {key}."));
    fill_template(&template, context)
}

fn fill_template(template: &str, context: &BTreeMap<&'static str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        rest = &rest[open + 1..];
        match rest.find('}') {
            Some(close) => {
                let key = &rest[..close];
                if let Some(value) = context.get(key) {
                    out.push_str(value);
                }
                rest = &rest[close + 1..];
            }
            None => {
                out.push('{');
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Deterministic prose summary of the whole machine: block count, one line per
/// block, connectors, and control availability.
pub fn machine_summary(catalog: &Catalog, config: &EngineConfig, scene: &Scene) -> String {
    let heated = evaluate::heated_cannons(catalog, scene);
    let mut out = String::new();
    out.push_str(&format!(
        "Machine summary: {} block(s), {} connector(s), phase {}.\n",
        scene.block_count(),
        scene.connectors().count(),
        scene.phase.as_str()
    ));
    for block in scene.blocks() {
        let spec = match catalog.block_spec(&block.type_id) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let note = if block.note.is_empty() {
            String::new()
        } else {
            format!(" ('{}')", block.note)
        };
        let free = scene
            .free_faces(catalog, config, block.block_id)
            .map(|f| f.len())
            .unwrap_or(0);
        let mut line = format!(
            "Block #{}: {}{} at {}",
            block.block_id,
            block.type_id,
            note,
            fmt_vec(block.pose.position)
        );
        let features = block_features(spec, block);
        if let Some(wheel) = &features.wheel {
            line.push_str(&format!(
                ", axis {}, spin_forward rolls {}",
                compass_word(wheel.axis),
                match wheel.roll_direction {
                    Some(d) => compass_word(d),
                    None => "nowhere (axis vertical)".to_string(),
                }
            ));
        }
        if let Some(jet) = &features.jet {
            let steam = if heated.contains(&block.block_id) {
                ", heated (steam mode)"
            } else {
                ""
            };
            line.push_str(&format!(", jets {}{}", compass_word(jet.direction), steam));
        }
        if !features.heat_spheres.is_empty() {
            let (c, r) = features.heat_spheres[0];
            line.push_str(&format!(", heating sphere radius {r} at {}", fmt_vec(c)));
        }
        line.push_str(&format!(", {free} free face(s).\n"));
        out.push_str(&line);
    }
    for conn in scene.connectors() {
        out.push_str(&format!(
            "Connector #{}: {} between #{}:{} and #{}:{}.\n",
            conn.connector_id,
            conn.kind.as_str(),
            conn.endpoint_a.0,
            conn.endpoint_a.1,
            conn.endpoint_b.0,
            conn.endpoint_b.1
        ));
    }
    let controllable: usize = scene
        .blocks()
        .filter_map(|b| catalog.block_spec(&b.type_id).ok())
        .map(|s| s.control_actions.len())
        .sum();
    out.push_str(&format!(
        "Controls: {} bindable action(s), {} binding(s), {} sequence entr{}.\n",
        controllable,
        scene.control.bindings.len(),
        scene.control.sequence.len(),
        if scene.control.sequence.len() == 1 {
            "y"
        } else {
            "ies"
        }
    ));
    out
}

/// Detailed prose for one block: pose, per-face status, functional facts.
pub fn block_detail(
    catalog: &Catalog,
    _config: &EngineConfig,
    scene: &Scene,
    block_id: BlockId,
) -> Option<String> {
    let block = scene.block(block_id)?;
    let spec = catalog.block_spec(&block.type_id).ok()?;
    let mut out = String::new();
    out.push_str(&format!(
        "Block #{}: {}{} at {}.\n",
        block.block_id,
        block.type_id,
        if block.note.is_empty() {
            String::new()
        } else {
            format!(" ('{}')", block.note)
        },
        fmt_vec(block.pose.position)
    ));
    if let Some(mount) = &block.mounted_on {
        out.push_str(&format!(
            "Mounted on block #{} face '{}'{}.\n",
            mount.parent,
            mount.parent_face,
            if mount.offset.norm() > 1e-12 {
                format!(" with translation offset {}", fmt_vec(mount.offset))
            } else {
                String::new()
            }
        ));
    }
    if spec.faces.is_empty() {
        out.push_str("No attachable faces for further attachment or connection.\n");
    } else {
        for face in &spec.faces {
            let frame = scene.face_frame(catalog, block_id, &face.face_id)?;
            let status = match scene.face_use(block_id, &face.face_id) {
                Some(u) if u.attachment.is_some() => {
                    format!("occupied by block #{}", u.attachment.unwrap())
                }
                Some(u) if !u.connectors.is_empty() => {
                    let ids: Vec<String> = u.connectors.iter().map(|c| format!("#{c}")).collect();
                    format!("used by connector(s) {}", ids.join(", "))
                }
                _ => {
                    if face.attachable {
                        "free".to_string()
                    } else {
                        "not attachable".to_string()
                    }
                }
            };
            out.push_str(&format!(
                "Face '{}': center {}, normal {}, {}.\n",
                face.face_id,
                fmt_vec(frame.world_center),
                compass_word(frame.world_normal),
                status
            ));
        }
    }
    let features = block_features(spec, block);
    if let Some(wheel) = &features.wheel {
        out.push_str(&format!(
            "Wheel axis {} ; spin_forward rolls {}, spin_backward rolls {}.\n",
            compass_word(wheel.axis),
            match wheel.roll_direction {
                Some(d) => compass_word(d),
                None => "nowhere (axis vertical)".to_string(),
            },
            match wheel.roll_direction {
                Some(d) => compass_word(-d),
                None => "nowhere (axis vertical)".to_string(),
            }
        ));
    }
    if let Some(jet) = &features.jet {
        out.push_str(&format!(
            "Jet direction {} ; inlet at {}, outlet at {}.\n",
            compass_word(jet.direction),
            fmt_vec(jet.inlet),
            fmt_vec(jet.outlet)
        ));
        if evaluate::heated_cannons(catalog, scene).contains(&block_id) {
            out.push_str("Steam mode: this cannon is heated and will fire steam instead of water, delivering the multiplied recoil force.\n");
        } else {
            out.push_str("Not heated: fires water at the regular recoil force.\n");
        }
    }
    for (center, radius) in &features.heat_spheres {
        out.push_str(&format!(
            "Heating sphere: radius {radius} centered at {}.\n",
            fmt_vec(*center)
        ));
    }
    Some(out)
}
