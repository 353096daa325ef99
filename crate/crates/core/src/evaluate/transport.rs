//! Planar kinematic transport surrogate.
//!
//! The machine is treated as one rigid body moving in the ground plane. Each
//! ground-contacting wheel imposes its rim velocity at its contact point along
//! its rolling direction (zero when unpowered: powered wheels auto-brake). Per
//! step we solve the damped least-squares planar twist (v, omega) minimizing
//! slip over all contacts and integrate it.

use thiserror::Error;

use crate::catalog::Catalog;
use crate::config::EngineConfig;
use crate::control::ControlState;
use crate::geometry::Vec3;
use crate::scene::{block_features, BlockId, Scene};

use super::{Trajectory, TrajectorySample};

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("invalid or missing controls: the machine has no key bindings or no control sequence")]
    NoControls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportOutcome {
    pub trajectory: Trajectory,
    /// Peak planar distance of the body reference point from its start.
    pub max_displacement: f64,
    /// No wheel touched the ground with a rollable axis; displacement is zero.
    pub no_ground_wheels: bool,
}

struct GroundWheel {
    block_id: BlockId,
    /// Contact point relative to the body reference, at t = 0.
    contact: [f64; 2],
    /// Unit rolling direction of spin_forward, at t = 0.
    roll_dir: [f64; 2],
    rim_speed: f64,
}

/// Axis counts as horizontal within this many degrees.
const AXIS_TILT_LIMIT_DEG: f64 = 5.0;

pub fn simulate_transport(
    catalog: &Catalog,
    config: &EngineConfig,
    scene: &Scene,
    controls: &ControlState,
    duration: f64,
    dt: f64,
) -> Result<TransportOutcome, TransportError> {
    if controls.bindings.is_empty() || controls.sequence.is_empty() {
        return Err(TransportError::NoControls);
    }
    let duration = duration.min(crate::control::CONTROL_WINDOW_SECONDS);

    // Settle: drop the machine so its lowest collision point rests at z = 0.
    let volumes = scene.all_volumes(catalog);
    let z_offset = -volumes
        .iter()
        .map(|(_, v)| v.min_z())
        .fold(f64::INFINITY, f64::min);
    let z_offset = if z_offset.is_finite() { z_offset } else { 0.0 };

    let tilt_limit = (AXIS_TILT_LIMIT_DEG * std::f64::consts::PI / 180.0).sin();
    let contact_eps = config.contact_tolerance.max(1e-9);

    let mut wheels = Vec::new();
    for block in scene.blocks() {
        let spec = match catalog.block_spec(&block.type_id) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let Some(wheel) = block_features(spec, block).wheel else {
            continue;
        };
        if wheel.axis.z.abs() > tilt_limit {
            continue;
        }
        let Some(roll) = wheel.roll_direction else {
            continue;
        };
        let rim_low = block.pose.position.z + z_offset
            - wheel.radius * (1.0 - wheel.axis.z * wheel.axis.z).sqrt();
        if rim_low.abs() > contact_eps {
            continue;
        }
        // Contact point sits below the hub; in the plane it projects onto the
        // hub position.
        wheels.push(GroundWheel {
            block_id: block.block_id,
            contact: [block.pose.position.x, block.pose.position.y],
            roll_dir: [roll.x, roll.y],
            rim_speed: wheel.rpm * 2.0 * std::f64::consts::PI * wheel.radius / 60.0,
        });
    }

    let block_positions: Vec<(BlockId, Vec3)> = scene
        .blocks()
        .map(|b| (b.block_id, b.pose.position + Vec3::new(0.0, 0.0, z_offset)))
        .collect();

    if wheels.is_empty() {
        let trajectory = Trajectory {
            sample_period: dt,
            samples: vec![TrajectorySample {
                time: 0.0,
                positions: block_positions,
            }],
        };
        return Ok(TransportOutcome {
            trajectory,
            max_displacement: 0.0,
            no_ground_wheels: true,
        });
    }

    // Body reference: centroid of contact points.
    let n = wheels.len() as f64;
    let ref0 = [
        wheels.iter().map(|w| w.contact[0]).sum::<f64>() / n,
        wheels.iter().map(|w| w.contact[1]).sum::<f64>() / n,
    ];

    let mut translation = [0.0f64, 0.0];
    let mut heading = 0.0f64;
    let mut max_displacement = 0.0f64;
    let mut samples = Vec::new();

    let steps = (duration / dt).round() as usize;
    let rot = |theta: f64, p: [f64; 2]| -> [f64; 2] {
        let (s, c) = theta.sin_cos();
        [c * p[0] - s * p[1], s * p[0] + c * p[1]]
    };

    for step in 0..=steps {
        let t = step as f64 * dt;
        let body_pos = |local: [f64; 2]| -> [f64; 2] {
            let r = rot(heading, [local[0] - ref0[0], local[1] - ref0[1]]);
            [
                ref0[0] + r[0] + translation[0],
                ref0[1] + r[1] + translation[1],
            ]
        };

        samples.push(TrajectorySample {
            time: t,
            positions: block_positions
                .iter()
                .map(|(id, p)| {
                    let xy = body_pos([p.x, p.y]);
                    (*id, Vec3::new(xy[0], xy[1], p.z))
                })
                .collect(),
        });
        max_displacement = max_displacement
            .max((translation[0] * translation[0] + translation[1] * translation[1]).sqrt());
        if step == steps {
            break;
        }

        let active = controls.active_actions_at(t);

        // Damped least squares for the planar twist.
        let damping = 1e-9;
        let mut a00 = damping;
        let mut a11 = damping;
        let mut a22 = damping;
        let mut a02 = 0.0;
        let mut a12 = 0.0;
        let mut b0 = 0.0;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for wheel in &wheels {
            let contact = body_pos(wheel.contact);
            let center = [ref0[0] + translation[0], ref0[1] + translation[1]];
            let r = [contact[0] - center[0], contact[1] - center[1]];
            let jr = [-r[1], r[0]];
            let roll = rot(heading, wheel.roll_dir);
            let forward = active.contains(&(wheel.block_id, "spin_forward".to_string()));
            let backward = active.contains(&(wheel.block_id, "spin_backward".to_string()));
            let sign = (forward as i8 - backward as i8) as f64;
            let target = [
                roll[0] * wheel.rim_speed * sign,
                roll[1] * wheel.rim_speed * sign,
            ];

            a00 += 1.0;
            a11 += 1.0;
            a02 += jr[0];
            a12 += jr[1];
            a22 += jr[0] * jr[0] + jr[1] * jr[1];
            b0 += target[0];
            b1 += target[1];
            b2 += jr[0] * target[0] + jr[1] * target[1];
        }
        // Solve the symmetric 3x3 system [a00 0 a02; 0 a11 a12; a02 a12 a22].
        let det = a00 * (a11 * a22 - a12 * a12) - a02 * (a11 * a02);
        let (vx, vy, omega) = if det.abs() < 1e-15 {
            (0.0, 0.0, 0.0)
        } else {
            let inv00 = (a11 * a22 - a12 * a12) / det;
            let inv01 = (a02 * a12) / det;
            let inv02 = (-a11 * a02) / det;
            let inv11 = (a00 * a22 - a02 * a02) / det;
            let inv12 = (-a00 * a12) / det;
            let inv22 = (a00 * a11) / det;
            (
                inv00 * b0 + inv01 * b1 + inv02 * b2,
                inv01 * b0 + inv11 * b1 + inv12 * b2,
                inv02 * b0 + inv12 * b1 + inv22 * b2,
            )
        };

        translation[0] += vx * dt;
        translation[1] += vy * dt;
        heading += omega * dt;
    }

    Ok(TransportOutcome {
        trajectory: Trajectory {
            sample_period: dt,
            samples,
        },
        max_displacement,
        no_ground_wheels: false,
    })
}
