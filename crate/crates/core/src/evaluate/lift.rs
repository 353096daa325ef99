//! Point-mass ballistic lift surrogate.
//!
//! Net thrust of the actively firing cannons is applied at the mass center
//! under constant gravity; the ground blocks downward motion until net
//! vertical force turns positive. Integration is exact for piecewise-constant
//! acceleration (x += v dt + a dt^2 / 2), so constant burns match the closed
//! form to rounding error.

use crate::catalog::Catalog;
use crate::control::ControlState;
use crate::geometry::Vec3;
use crate::scene::{block_features, BlockId, Scene};

use super::{heated_cannons, total_mass, Trajectory, TrajectorySample};

#[derive(Debug, Clone, PartialEq)]
pub struct LiftOutcome {
    pub trajectory: Trajectory,
    /// Peak altitude gained over the start position.
    pub max_height: f64,
    /// Peak horizontal distance from the launch axis, for the
    /// trajectory-deviation metric.
    pub lateral_drift: f64,
}

pub fn simulate_lift(
    catalog: &Catalog,
    scene: &Scene,
    controls: &ControlState,
    duration: f64,
    dt: f64,
    gravity: f64,
) -> LiftOutcome {
    let duration = duration.min(crate::control::CONTROL_WINDOW_SECONDS);
    let mass = total_mass(catalog, scene).max(1e-12);
    let heated = heated_cannons(catalog, scene);

    // Heating status is sampled once at launch: this surrogate does not model
    // torch/cannon separation during flight.
    let cannons: Vec<(BlockId, Vec3)> = scene
        .blocks()
        .filter_map(|block| {
            let spec = catalog.block_spec(&block.type_id).ok()?;
            let jet = block_features(spec, block).jet?;
            let magnitude = if heated.contains(&block.block_id) {
                jet.recoil_force * jet.steam_multiplier
            } else {
                jet.recoil_force
            };
            Some((block.block_id, -jet.direction * magnitude))
        })
        .collect();

    let block_positions: Vec<(BlockId, Vec3)> = scene
        .blocks()
        .map(|b| (b.block_id, b.pose.position))
        .collect();

    let mut offset = Vec3::ZERO;
    let mut velocity = Vec3::ZERO;
    let mut max_height = 0.0f64;
    let mut lateral_drift = 0.0f64;
    let mut samples = Vec::new();
    let grounded_at_start = true;
    let mut airborne = !grounded_at_start;

    let steps = (duration / dt).round() as usize;
    for step in 0..=steps {
        let t = step as f64 * dt;
        samples.push(TrajectorySample {
            time: t,
            positions: block_positions
                .iter()
                .map(|(id, p)| (*id, *p + offset))
                .collect(),
        });
        max_height = max_height.max(offset.z);
        lateral_drift = lateral_drift.max(offset.norm_xy());
        if step == steps {
            break;
        }

        let active = controls.active_actions_at(t);
        let mut thrust = Vec3::ZERO;
        for (id, vector) in &cannons {
            if active.contains(&(*id, "fire".to_string())) {
                thrust = thrust + *vector;
            }
        }
        let mut accel = thrust * (1.0 / mass) - Vec3::new(0.0, 0.0, gravity);

        if !airborne {
            if accel.z > 0.0 {
                airborne = true;
            } else {
                // Resting on the ground: normal force cancels everything.
                accel = Vec3::ZERO;
                velocity = Vec3::ZERO;
            }
        }
        offset = offset + velocity * dt + accel * (0.5 * dt * dt);
        velocity = velocity + accel * dt;
        if airborne && offset.z <= 0.0 && velocity.z <= 0.0 {
            // Touched back down.
            offset.z = 0.0;
            velocity = Vec3::ZERO;
            airborne = false;
        }
    }

    LiftOutcome {
        trajectory: Trajectory {
            sample_period: dt,
            samples,
        },
        max_height,
        lateral_drift,
    }
}
