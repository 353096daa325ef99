//! Key bindings and the timed open-loop control sequence.
//!
//! Keys are level-triggered: a key is active over [time, time + hold_for),
//! clipped at the 30 s simulation window. Entries may overlap; the active
//! action set is a union.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::BlockId;

/// Length of the simulation window in seconds. Entries beyond it are retained
/// but inert.
pub const CONTROL_WINDOW_SECONDS: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("illegal key '{0}': must be one of UpArrow, DownArrow, LeftArrow, RightArrow, Alpha0-9, Keypad0-9")]
    IllegalKey(String),
    #[error("block #{block} has no control action '{action}'")]
    UnknownAction { block: BlockId, action: String },
    #[error("duplicate binding: {key} -> {action} on block #{block}")]
    DuplicateBinding {
        key: String,
        action: String,
        block: BlockId,
    },
    #[error("key '{0}' is not bound to any action")]
    UnboundKey(String),
    #[error("hold_for must be > 0, got {0}")]
    NonPositiveHold(f64),
    #[error("time must be >= 0, got {0}")]
    NegativeTime(f64),
}

/// The legal control key set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControlKey {
    UpArrow,
    DownArrow,
    LeftArrow,
    RightArrow,
    Alpha(u8),
    Keypad(u8),
}

impl ControlKey {
    /// Parse a key name like "Alpha3" or "UpArrow".
    pub fn parse(s: &str) -> Result<ControlKey, ControlError> {
        match s {
            "UpArrow" => return Ok(ControlKey::UpArrow),
            "DownArrow" => return Ok(ControlKey::DownArrow),
            "LeftArrow" => return Ok(ControlKey::LeftArrow),
            "RightArrow" => return Ok(ControlKey::RightArrow),
            _ => {}
        }
        for (prefix, ctor) in [
            ("Alpha", ControlKey::Alpha as fn(u8) -> ControlKey),
            ("Keypad", ControlKey::Keypad as fn(u8) -> ControlKey),
        ] {
            if let Some(rest) = s.strip_prefix(prefix) {
                if rest.len() == 1 {
                    if let Some(d) = rest.chars().next().and_then(|c| c.to_digit(10)) {
                        return Ok(ctor(d as u8));
                    }
                }
            }
        }
        Err(ControlError::IllegalKey(s.to_string()))
    }

    pub fn name(&self) -> String {
        match self {
            ControlKey::UpArrow => "UpArrow".to_string(),
            ControlKey::DownArrow => "DownArrow".to_string(),
            ControlKey::LeftArrow => "LeftArrow".to_string(),
            ControlKey::RightArrow => "RightArrow".to_string(),
            ControlKey::Alpha(d) => format!("Alpha{d}"),
            ControlKey::Keypad(d) => format!("Keypad{d}"),
        }
    }
}

/// One key-to-action binding. Many-to-many: one key may drive several actions
/// and one action may listen to several keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyBinding {
    pub key: ControlKey,
    pub action: String,
    pub block_id: BlockId,
}

/// One timeline item: press `key` at `time`, hold it for `hold_for` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequenceEntry {
    pub time: f64,
    pub key: ControlKey,
    pub hold_for: f64,
    #[serde(default)]
    pub motion_note: String,
    /// Set when the entry starts at or beyond the window and can never fire.
    #[serde(default)]
    pub beyond_window: bool,
}

impl ControlSequenceEntry {
    /// Effective active interval clipped to the window, if any.
    pub fn effective_interval(&self) -> Option<(f64, f64)> {
        if self.time >= CONTROL_WINDOW_SECONDS {
            return None;
        }
        let end = (self.time + self.hold_for).min(CONTROL_WINDOW_SECONDS);
        Some((self.time, end))
    }
}

/// Bindings plus the time-sorted control sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlState {
    pub bindings: Vec<KeyBinding>,
    pub sequence: Vec<ControlSequenceEntry>,
}

impl ControlState {
    pub fn window_seconds(&self) -> f64 {
        CONTROL_WINDOW_SECONDS
    }

    /// Add a binding after validating the key, the action's existence through
    /// `has_action`, and uniqueness of the exact triple.
    pub fn bind_key(
        &mut self,
        key: ControlKey,
        action: &str,
        block_id: BlockId,
        has_action: impl Fn(BlockId, &str) -> bool,
    ) -> Result<(), ControlError> {
        if !has_action(block_id, action) {
            return Err(ControlError::UnknownAction {
                block: block_id,
                action: action.to_string(),
            });
        }
        let binding = KeyBinding {
            key,
            action: action.to_string(),
            block_id,
        };
        if self.bindings.contains(&binding) {
            return Err(ControlError::DuplicateBinding {
                key: key.name(),
                action: action.to_string(),
                block: block_id,
            });
        }
        self.bindings.push(binding);
        Ok(())
    }

    pub fn is_bound(&self, key: ControlKey) -> bool {
        self.bindings.iter().any(|b| b.key == key)
    }

    /// Insert a sequence entry, keeping the list sorted by time. Entries fully
    /// beyond the window are accepted but flagged inert.
    pub fn add_control_sequence(
        &mut self,
        time: f64,
        key: ControlKey,
        hold_for: f64,
        motion_note: &str,
    ) -> Result<&ControlSequenceEntry, ControlError> {
        if !self.is_bound(key) {
            return Err(ControlError::UnboundKey(key.name()));
        }
        if !hold_for.is_finite() || hold_for <= 0.0 {
            return Err(ControlError::NonPositiveHold(hold_for));
        }
        if !time.is_finite() || time < 0.0 {
            return Err(ControlError::NegativeTime(time));
        }
        let entry = ControlSequenceEntry {
            time,
            key,
            hold_for,
            motion_note: motion_note.to_string(),
            beyond_window: time >= CONTROL_WINDOW_SECONDS,
        };
        let idx = self.sequence.partition_point(|e| e.time <= time);
        self.sequence.insert(idx, entry);
        Ok(&self.sequence[idx])
    }

    /// Keys held at time `t` (seconds), honoring window clipping.
    pub fn keys_at(&self, t: f64) -> BTreeSet<ControlKey> {
        let mut keys = BTreeSet::new();
        for entry in &self.sequence {
            if let Some((start, end)) = entry.effective_interval() {
                if t >= start && t < end {
                    keys.insert(entry.key);
                }
            }
        }
        keys
    }

    /// Set of (block, action) pairs driven at time `t`, mapped through the
    /// bindings. Overlapping holds of the same pair collapse (set semantics).
    pub fn active_actions_at(&self, t: f64) -> BTreeSet<(BlockId, String)> {
        let keys = self.keys_at(t);
        let mut active = BTreeSet::new();
        for binding in &self.bindings {
            if keys.contains(&binding.key) {
                active.insert((binding.block_id, binding.action.clone()));
            }
        }
        active
    }

    /// Deterministic prose listing of bindings and sequence.
    pub fn review(&self) -> String {
        let mut out = String::new();
        if self.bindings.is_empty() {
            out.push_str("Control config: no bindings.\n");
        } else {
            out.push_str(&format!(
                "Control config: {} binding(s).\n",
                self.bindings.len()
            ));
            for b in &self.bindings {
                out.push_str(&format!(
                    "  {} -> {} on block #{}\n",
                    b.key.name(),
                    b.action,
                    b.block_id
                ));
            }
        }
        if self.sequence.is_empty() {
            out.push_str("Control sequence: empty.\n");
        } else {
            out.push_str(&format!(
                "Control sequence ({} entries, {}-second window):\n",
                self.sequence.len(),
                CONTROL_WINDOW_SECONDS
            ));
            for e in &self.sequence {
                out.push_str(&format!(
                    "  at {:.3}s press {} for {:.3}s{}{}\n",
                    e.time,
                    e.key.name(),
                    e.hold_for,
                    if e.beyond_window {
                        " [beyond window, inert]"
                    } else {
                        ""
                    },
                    if e.motion_note.is_empty() {
                        String::new()
                    } else {
                        format!(" -- {}", e.motion_note)
                    }
                ));
            }
        }
        out
    }
}
