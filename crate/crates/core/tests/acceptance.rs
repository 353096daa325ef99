//! Acceptance suite: one test per criterion. Each prints a pass/fail line and
//! enforces its runtime budget; tolerances are pinned in the assertions.

use std::time::{Duration, Instant};

use mechabench::actions::{Action, EngineSession, ErrorCode};
use mechabench::catalog::{load_full_catalog, Catalog, DEFAULT_CATALOG_TOML};
use mechabench::config::EngineConfig;
use mechabench::control::ControlKey;
use mechabench::evaluate::{
    self, aggregate, simulate_lift, simulate_transport, synthesize_fire_controls, thrust_and_twr,
    GRAVITY,
};
use mechabench::geometry::{obb_overlap, Obb, Quat, Vec3};
use mechabench::interface::{
    export_machine_file, export_native_json, import_native, run_bench, serve_tools, SessionRegistry,
};
use mechabench::scene::{Phase, Scene};
use mechabench::task::TaskConfig;
use mechabench::workflow::{
    run_workflow, EntityKind, FailureReason, ScriptSpec, ScriptedBackend, TokenUsage,
    WorkflowBudgets, WorkflowPhase,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs one criterion body, printing its pass/fail line and enforcing the
/// stated runtime budget.
fn criterion(name: &str, budget: Duration, body: impl FnOnce()) {
    struct Guard<'a> {
        name: &'a str,
        done: bool,
    }
    impl Drop for Guard<'_> {
        fn drop(&mut self) {
            if !self.done {
                println!("[FAIL] {}", self.name);
            }
        }
    }
    let mut guard = Guard { name, done: false };
    let start = Instant::now();
    body();
    let elapsed = start.elapsed();
    guard.done = true;
    println!("[PASS] {name} ({elapsed:?}, budget {budget:?})");
    assert!(
        elapsed < budget,
        "{name} exceeded its {budget:?} budget: {elapsed:?}"
    );
}

fn session() -> EngineSession {
    EngineSession::new(Catalog::default_catalog(), EngineConfig::default())
}

fn attach(base: u32, face: &str, block: &str) -> Action {
    Action::new("attach_block_to")
        .arg("base_block", base)
        .arg("face", face)
        .arg("new_block", block)
}

/// start + cannon jetting down + torch heating its upper end cap.
fn heated_engine() -> EngineSession {
    let mut s = session();
    assert!(s.apply(&Action::new("start")).ok);
    assert!(
        s.apply(&attach(0, "east", "WaterCannon").arg("pointing", "down"))
            .ok
    );
    assert!(
        s.apply(&attach(0, "top", "Torch").arg("pointing", "east"))
            .ok
    );
    s
}

/// Same mass, flame pointing away: never heats.
fn unheated_engine() -> EngineSession {
    let mut s = session();
    assert!(s.apply(&Action::new("start")).ok);
    assert!(
        s.apply(&attach(0, "east", "WaterCannon").arg("pointing", "down"))
            .ok
    );
    assert!(s.apply(&attach(0, "top", "Torch").arg("pointing", "up")).ok);
    s
}

#[test]
fn criterion_01_catalog_fidelity() {
    criterion(
        "criterion 1: catalog fidelity",
        Duration::from_secs(1),
        || {
            let catalog = load_full_catalog(DEFAULT_CATALOG_TOML).unwrap();

            let wheel = catalog.block_spec("PoweredWheel").unwrap();
            assert_eq!(wheel.shape, [2.0, 2.0, 0.5]);
            assert_eq!(wheel.mass, 1.0);
            assert_eq!(wheel.physical.wheel_rpm, Some(100.0));

            let small = catalog.block_spec("SmallWoodenBlock").unwrap();
            assert_eq!(small.shape, [1.0, 1.0, 1.0]);
            assert_eq!(small.mass, 0.3);

            let torch = catalog.block_spec("Torch").unwrap();
            assert_eq!(torch.mass, 1.0);
            assert_eq!(torch.physical.heat_radius, Some(0.3));

            let cannon = catalog.block_spec("WaterCannon").unwrap();
            assert_eq!(cannon.mass, 1.5);
            assert_eq!(cannon.physical.recoil_force, Some(1.6));
            assert_eq!(cannon.physical.steam_multiplier, Some(8.6));

            assert_eq!(catalog.block_spec("Brace").unwrap().mass, 0.5);
            assert_eq!(catalog.block_spec("Winch").unwrap().mass, 0.4);

            let start = catalog.block_spec("StartingBlock").unwrap();
            assert_eq!(start.shape, [1.0, 1.0, 1.0]);
            assert_eq!(start.mass, 0.25);
        },
    );
}

#[test]
fn criterion_02_paper_worked_examples() {
    criterion(
        "criterion 2: attach worked examples",
        Duration::from_secs(1),
        || {
            const TOL: f64 = 1e-9;
            let close = |a: Vec3, b: Vec3| (a - b).norm() <= TOL;

            let mut s = session();
            assert!(s.apply(&Action::new("start")).ok);
            assert!(
                s.apply(&attach(0, "east", "Torch").arg("pointing", "up"))
                    .ok
            );
            let scene = s.scene.as_ref().unwrap();
            let spec = s.catalog.block_spec("Torch").unwrap();
            let features = mechabench::scene::block_features(spec, scene.block(1).unwrap());
            let (heat, radius) = features.heat_spheres[0];
            assert!(
                close(heat, Vec3::new(1.0, 0.0, 1.0)),
                "heat sphere at {heat:?}"
            );
            assert_eq!(radius, 0.3);

            let mut s = session();
            assert!(s.apply(&Action::new("start")).ok);
            assert!(
                s.apply(&attach(0, "east", "WaterCannon").arg("pointing", "down"))
                    .ok
            );
            let scene = s.scene.as_ref().unwrap();
            assert!(close(
                scene.block(1).unwrap().pose.position,
                Vec3::new(1.0, 0.0, 0.0)
            ));
            let spec = s.catalog.block_spec("WaterCannon").unwrap();
            let jet = mechabench::scene::block_features(spec, scene.block(1).unwrap())
                .jet
                .unwrap();
            assert!(
                close(jet.inlet, Vec3::new(1.0, 0.0, 0.75)),
                "inlet {:?}",
                jet.inlet
            );
            assert!(
                close(jet.outlet, Vec3::new(1.0, 0.0, -1.0)),
                "outlet {:?}",
                jet.outlet
            );
        },
    );
}

/// Minimal exact rational arithmetic for the TWR identity.
#[derive(Clone, Copy, PartialEq, Debug)]
struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    fn new(num: i128, den: i128) -> Self {
        assert!(den != 0);
        let g = gcd(num.abs(), den.abs()).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Ratio {
            num: sign * num / g,
            den: sign * den / g,
        }
    }
    fn mul(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.num, self.den * o.den)
    }
    fn div(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den, self.den * o.num)
    }
    fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn criterion_03_twr_analytic() {
    criterion(
        "criterion 3: TWR analytic rational check",
        Duration::from_secs(1),
        || {
            // Catalog decimals as exact fractions.
            let recoil = Ratio::new(16, 10); // 1.6
            let steam = Ratio::new(86, 10); // 8.6
            let mass = Ratio::new(25, 100) // 0.25
                .add(Ratio::new(15, 10)) // 1.5
                .add(Ratio::new(1, 1)); // 1.0
            assert_eq!(mass, Ratio::new(11, 4), "masses sum to 2.75 exactly");

            let thrust = recoil.mul(steam);
            assert_eq!(thrust, Ratio::new(1376, 100), "1.6 x 8.6 = 13.76 exactly");
            let twr = thrust.div(mass);
            assert_eq!(twr, Ratio::new(1376, 275), "TWR = 13.76 / 2.75 exactly");

            // Engine agreement at double precision.
            let s = heated_engine();
            let catalog = s.catalog.clone();
            let report = thrust_and_twr(&catalog, s.scene.as_ref().unwrap());
            assert!(
                (report.twr - twr.to_f64()).abs() < 1e-12,
                "engine TWR {} vs rational {}",
                report.twr,
                twr.to_f64()
            );
            assert!(report.twr > 1.0, "heated engine succeeds under TWR > 1");

            let s = unheated_engine();
            let report = thrust_and_twr(&catalog, s.scene.as_ref().unwrap());
            let unheated = recoil.div(mass);
            assert!((report.twr - unheated.to_f64()).abs() < 1e-12);
            assert!(report.twr <= 1.0, "unheated engine fails under TWR > 1");
        },
    );
}

// Independent rotation-matrix membership oracle for criterion 4.
fn quat_to_matrix(q: Quat) -> [[f64; 3]; 3] {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn mat_apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat_apply_transpose(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

/// Signed separation margin: smallest over the 15 candidate axes of
/// (projected spans minus center distance), normalized. Negative means
/// separated by at least that much.
fn sat_margin(a: &Obb, b: &Obb) -> f64 {
    let ra = quat_to_matrix(a.orientation);
    let rb = quat_to_matrix(b.orientation);
    let axes_a = [
        [ra[0][0], ra[1][0], ra[2][0]],
        [ra[0][1], ra[1][1], ra[2][1]],
        [ra[0][2], ra[1][2], ra[2][2]],
    ];
    let axes_b = [
        [rb[0][0], rb[1][0], rb[2][0]],
        [rb[0][1], rb[1][1], rb[2][1]],
        [rb[0][2], rb[1][2], rb[2][2]],
    ];
    let t = [
        b.center.x - a.center.x,
        b.center.y - a.center.y,
        b.center.z - a.center.z,
    ];
    let ea = [a.half_extents.x, a.half_extents.y, a.half_extents.z];
    let eb = [b.half_extents.x, b.half_extents.y, b.half_extents.z];

    let dot = |u: [f64; 3], v: [f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cross = |u: [f64; 3], v: [f64; 3]| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };

    let mut candidates: Vec<[f64; 3]> = Vec::with_capacity(15);
    candidates.extend_from_slice(&axes_a);
    candidates.extend_from_slice(&axes_b);
    for u in axes_a {
        for v in axes_b {
            candidates.push(cross(u, v));
        }
    }

    let mut margin = f64::INFINITY;
    for axis in candidates {
        let len = dot(axis, axis).sqrt();
        if len < 1e-9 {
            continue;
        }
        let unit = [axis[0] / len, axis[1] / len, axis[2] / len];
        let span_a: f64 = (0..3).map(|i| ea[i] * dot(axes_a[i], unit).abs()).sum();
        let span_b: f64 = (0..3).map(|i| eb[i] * dot(axes_b[i], unit).abs()).sum();
        margin = margin.min(span_a + span_b - dot(t, unit).abs());
    }
    margin
}

#[test]
fn criterion_04_geometry_oracle() {
    criterion(
        "criterion 4: OBB vs Monte-Carlo oracle",
        Duration::from_secs(60),
        || {
            // Pairs whose |margin| is below this band are within the sampling
            // resolution of a 1e5-point oracle and are excluded.
            const BAND: f64 = 0.05;
            const SAMPLES: usize = 100_000;

            let mut rng = ChaCha8Rng::seed_from_u64(0x0bb0);
            let mut tested = 0usize;
            let mut agree = 0usize;
            let mut produced = 0usize;
            while tested < 1000 && produced < 20_000 {
                produced += 1;
                let rand_box = |rng: &mut ChaCha8Rng| {
                    let center = Vec3::new(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    );
                    let he = Vec3::new(
                        rng.gen_range(0.3..1.5),
                        rng.gen_range(0.3..1.5),
                        rng.gen_range(0.3..1.5),
                    );
                    let axis = Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    );
                    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                    Obb::new(
                        center,
                        he,
                        Quat::from_axis_angle(
                            if axis.norm() < 1e-6 { Vec3::Z } else { axis },
                            angle,
                        ),
                    )
                };
                let a = rand_box(&mut rng);
                let b = rand_box(&mut rng);
                if sat_margin(&a, &b).abs() < BAND {
                    continue;
                }
                tested += 1;

                let decision = obb_overlap(&a, &b, 0.0);

                // Monte-Carlo membership: sample points of A, test inside B
                // through an independent rotation-matrix path.
                let ma = quat_to_matrix(a.orientation);
                let mb = quat_to_matrix(b.orientation);
                let mut mc_hit = false;
                for _ in 0..SAMPLES {
                    let local = [
                        rng.gen_range(-1.0..1.0) * a.half_extents.x,
                        rng.gen_range(-1.0..1.0) * a.half_extents.y,
                        rng.gen_range(-1.0..1.0) * a.half_extents.z,
                    ];
                    let w = mat_apply(&ma, local);
                    let world = [w[0] + a.center.x, w[1] + a.center.y, w[2] + a.center.z];
                    let rel = [
                        world[0] - b.center.x,
                        world[1] - b.center.y,
                        world[2] - b.center.z,
                    ];
                    let lb = mat_apply_transpose(&mb, rel);
                    if lb[0].abs() <= b.half_extents.x
                        && lb[1].abs() <= b.half_extents.y
                        && lb[2].abs() <= b.half_extents.z
                    {
                        mc_hit = true;
                        break;
                    }
                }
                if decision == mc_hit {
                    agree += 1;
                }
            }
            assert_eq!(
                tested, 1000,
                "could not produce 1000 pairs outside the band"
            );
            let rate = agree as f64 / tested as f64;
            assert!(
                rate >= 0.999,
                "agreement {rate} below 99.9% ({agree}/{tested})"
            );
        },
    );
}

#[test]
fn criterion_05_error_taxonomy_coverage() {
    criterion(
        "criterion 5: error taxonomy coverage",
        Duration::from_secs(5),
        || {
            // Each fixture triggers its code and leaves the state hash unchanged.
            let check = |code: ErrorCode,
                         build: &dyn Fn(&mut EngineSession),
                         trigger: &dyn Fn(&mut EngineSession) -> Action| {
                let mut s = session();
                assert!(s.apply(&Action::new("start")).ok);
                build(&mut s);
                let action = trigger(&mut s);
                let before = s.state_hash();
                let result = s.apply(&action);
                assert_eq!(
                    result.error,
                    Some(code),
                    "expected {code:?}: {}",
                    result.description
                );
                assert_eq!(s.state_hash(), before, "{code:?} was not atomic");
            };

            check(
                ErrorCode::OverlapConflict,
                &|s| {
                    assert!(
                        s.apply(&attach(0, "east", "WaterCannon").arg("pointing", "down"))
                            .ok
                    );
                },
                &|_| attach(0, "top", "WaterCannon").arg("pointing", "east"),
            );
            check(
                ErrorCode::FaceOccupied,
                &|s| {
                    assert!(s.apply(&attach(0, "top", "SmallWoodenBlock")).ok);
                },
                &|_| attach(0, "top", "SmallWoodenBlock"),
            );
            check(ErrorCode::InvalidFace, &|_| {}, &|_| {
                attach(0, "roof", "SmallWoodenBlock")
            });
            check(
                ErrorCode::ExcessConnection,
                &|s| {
                    assert!(s.apply(&attach(0, "east", "SmallWoodenBlock")).ok);
                    assert!(s.apply(&attach(0, "west", "SmallWoodenBlock")).ok);
                    assert!(
                        s.apply(
                            &Action::new("connect_blocks")
                                .arg("block_a", 1u32)
                                .arg("face_a", "top")
                                .arg("block_b", 2u32)
                                .arg("face_b", "top")
                                .arg("connector", "Brace")
                        )
                        .ok
                    );
                },
                &|_| {
                    Action::new("connect_blocks")
                        .arg("block_a", 1u32)
                        .arg("face_a", "top")
                        .arg("block_b", 2u32)
                        .arg("face_b", "top")
                        .arg("connector", "Brace")
                },
            );
            check(ErrorCode::StartingBlockProtected, &|_| {}, &|_| {
                Action::new("remove_block").arg("block", 0u32)
            });
        },
    );
}

/// Random accepted-action trajectory generator shared by criterion 6.
fn random_trajectory(seed: u64, accepted_target: usize) -> EngineSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = session();
    assert!(s.apply(&Action::new("start")).ok);
    let faces = ["top", "bottom", "north", "south", "east", "west"];
    let cube_heavy = [
        "SmallWoodenBlock",
        "SmallWoodenBlock",
        "SmallWoodenBlock",
        "PoweredWheel",
        "Torch",
        "WaterCannon",
    ];
    let mut accepted = 1usize; // start counts as the first accepted action
    let mut attempts = 0usize;
    while accepted < accepted_target && attempts < 5000 {
        attempts += 1;
        let max_id = s.scene.as_ref().unwrap().peek_like_max();
        let action = match rng.gen_range(0..10) {
            0..=5 => attach(
                rng.gen_range(0..max_id),
                faces[rng.gen_range(0..faces.len())],
                cube_heavy[rng.gen_range(0..cube_heavy.len())],
            )
            .arg("note", format!("part {accepted}")),
            6 => Action::new("twist_block")
                .arg("block", rng.gen_range(0..max_id))
                .arg("angle", [90.0, 180.0, -90.0][rng.gen_range(0..3)]),
            7 => Action::new("translate_block")
                .arg("block", rng.gen_range(0..max_id))
                .arg(
                    "shift",
                    vec![
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(0.0..0.3),
                    ],
                ),
            8 => Action::new("remove_block").arg("block", rng.gen_range(0..max_id)),
            _ => Action::new("connect_blocks")
                .arg("block_a", rng.gen_range(0..max_id))
                .arg("face_a", faces[rng.gen_range(0..faces.len())])
                .arg("block_b", rng.gen_range(0..max_id))
                .arg("face_b", faces[rng.gen_range(0..faces.len())])
                .arg("connector", ["Brace", "Winch"][rng.gen_range(0..2)]),
        };
        if s.apply(&action).ok {
            accepted += 1;
        }
    }
    s
}

trait MaxId {
    fn peek_like_max(&self) -> u32;
}
impl MaxId for Scene {
    fn peek_like_max(&self) -> u32 {
        self.peek_next_block_id().max(1)
    }
}

#[test]
fn criterion_06_replay_determinism() {
    criterion(
        "criterion 6: replay determinism over 100 seeds",
        Duration::from_secs(30),
        || {
            let catalog = Catalog::default_catalog();
            for seed in 0..100u64 {
                let original = random_trajectory(seed, 100);
                let original_hash = original.scene_hash().unwrap();
                let json = export_native_json(&original).unwrap();
                let (imported, log) = import_native(&catalog, &json).unwrap();
                assert_eq!(
                    imported.state_hash(),
                    original_hash,
                    "import mismatch at seed {seed}"
                );

                let mut replayed = session();
                for entry in &log {
                    replayed.apply(&entry.action);
                }
                assert_eq!(
                    replayed.scene_hash().as_deref(),
                    Some(original_hash.as_str()),
                    "replay mismatch at seed {seed}"
                );
            }
        },
    );
}

#[test]
fn criterion_07_control_semantics() {
    criterion(
        "criterion 7: control semantics",
        Duration::from_secs(1),
        || {
            let mut s = session();
            assert!(s.apply(&Action::new("start")).ok);
            assert!(s.apply(&attach(0, "east", "PoweredWheel")).ok);
            assert!(
                s.apply(
                    &Action::new("bind_key")
                        .arg("key", "Alpha1")
                        .arg("action", "spin_forward")
                        .arg("block_id", 1u32)
                )
                .ok
            );
            // The worked example: { "time": 1.0, "key": "Alpha1", "hold_for": 1.0 }.
            assert!(
                s.apply(
                    &Action::new("add_control_sequence")
                        .arg("time", 1.0)
                        .arg("key", "Alpha1")
                        .arg("hold_for", 1.0)
                )
                .ok
            );
            let control = &s.scene.as_ref().unwrap().control;
            assert!(control.active_actions_at(0.5).is_empty());
            assert_eq!(control.active_actions_at(1.0).len(), 1);
            assert_eq!(control.active_actions_at(1.99).len(), 1);
            assert!(control.active_actions_at(2.0).is_empty());

            // Beyond-window entries install but stay inert.
            let r = s.apply(
                &Action::new("add_control_sequence")
                    .arg("time", 31.0)
                    .arg("key", "Alpha1")
                    .arg("hold_for", 2.0),
            );
            assert!(r.ok);
            assert!(r.description.contains("Warning"));
            let control = &s.scene.as_ref().unwrap().control;
            assert_eq!(control.sequence.len(), 2);
            assert!(control.sequence[1].beyond_window);
            assert!(control.active_actions_at(31.5).is_empty());
        },
    );
}

fn four_wheel_vehicle() -> EngineSession {
    let mut s = session();
    assert!(
        s.apply(&Action::new("start").arg("init_shift", vec![0.0, 0.0, 1.0]))
            .ok
    );
    assert!(s.apply(&attach(0, "north", "SmallWoodenBlock")).ok);
    assert!(s.apply(&attach(0, "south", "SmallWoodenBlock")).ok);
    for block in [1u32, 2] {
        for face in ["east", "west"] {
            assert!(s.apply(&attach(block, face, "PoweredWheel")).ok);
        }
    }
    s
}

#[test]
fn criterion_08_transport_surrogate() {
    criterion(
        "criterion 8: transport surrogate",
        Duration::from_secs(10),
        || {
            let rim_speed = 100.0 * 2.0 * std::f64::consts::PI * 1.0 / 60.0;
            let hold = 3.0;

            // Straight drive: east wheels forward, west wheels backward roll the
            // same way; displacement matches rim_speed x hold within 1%.
            let mut s = four_wheel_vehicle();
            let catalog = s.catalog.clone();
            let sides: Vec<(u32, bool)> = s
                .scene
                .as_ref()
                .unwrap()
                .blocks()
                .filter(|b| b.type_id == "PoweredWheel")
                .map(|b| (b.block_id, b.pose.position.x > 0.0))
                .collect();
            for (id, east) in sides {
                let action = if east {
                    "spin_forward"
                } else {
                    "spin_backward"
                };
                assert!(
                    s.apply(
                        &Action::new("bind_key")
                            .arg("key", "Alpha1")
                            .arg("action", action)
                            .arg("block_id", id)
                    )
                    .ok
                );
            }
            assert!(
                s.apply(
                    &Action::new("add_control_sequence")
                        .arg("time", 0.0)
                        .arg("key", "Alpha1")
                        .arg("hold_for", hold)
                )
                .ok
            );
            let scene = s.scene.as_ref().unwrap();
            let coarse =
                simulate_transport(&catalog, &s.config, scene, &scene.control, 10.0, 0.04).unwrap();
            let expected = rim_speed * hold;
            assert!(
                (coarse.max_displacement - expected).abs() / expected < 0.01,
                "straight drive {} vs {expected}",
                coarse.max_displacement
            );
            let fine =
                simulate_transport(&catalog, &s.config, scene, &scene.control, 10.0, 0.02).unwrap();
            assert!(
                (coarse.max_displacement - fine.max_displacement).abs() / fine.max_displacement
                    < 0.01,
                "dt sensitivity: {} vs {}",
                coarse.max_displacement,
                fine.max_displacement
            );

            // Opposite wheel commands spin in place.
            let mut s = four_wheel_vehicle();
            for id in [3u32, 4, 5, 6] {
                assert!(
                    s.apply(
                        &Action::new("bind_key")
                            .arg("key", "Alpha1")
                            .arg("action", "spin_forward")
                            .arg("block_id", id)
                    )
                    .ok
                );
            }
            assert!(
                s.apply(
                    &Action::new("add_control_sequence")
                        .arg("time", 0.0)
                        .arg("key", "Alpha1")
                        .arg("hold_for", hold)
                )
                .ok
            );
            let scene = s.scene.as_ref().unwrap();
            let spin =
                simulate_transport(&catalog, &s.config, scene, &scene.control, 10.0, 0.04).unwrap();
            assert!(
                spin.max_displacement < 0.1,
                "spin displacement {}",
                spin.max_displacement
            );
        },
    );
}

#[test]
fn criterion_09_lift_surrogate() {
    criterion(
        "criterion 9: lift surrogate",
        Duration::from_secs(5),
        || {
            let s = heated_engine();
            let catalog = s.catalog.clone();
            let scene = s.scene.as_ref().unwrap();
            let twr = thrust_and_twr(&catalog, scene).twr;
            let controls = synthesize_fire_controls(&catalog, scene);
            let duration = 30.0;
            let outcome = simulate_lift(&catalog, scene, &controls, duration, 0.04, GRAVITY);
            let closed_form = 0.5 * (twr - 1.0) * GRAVITY * duration * duration;
            let rel = (outcome.max_height - closed_form).abs() / closed_form;
            assert!(
                rel < 0.001,
                "lift height {} vs closed form {closed_form}",
                outcome.max_height
            );

            let s = unheated_engine();
            let scene = s.scene.as_ref().unwrap();
            assert!(thrust_and_twr(&catalog, scene).twr <= 1.0);
            let controls = synthesize_fire_controls(&catalog, scene);
            let outcome = simulate_lift(&catalog, scene, &controls, duration, 0.04, GRAVITY);
            assert_eq!(outcome.max_height, 0.0, "TWR <= 1 never leaves the ground");
        },
    );
}

fn tool_call(tool: &str, arguments: &str) -> String {
    format!("```json\n{{\"tool\": \"{tool}\", \"arguments\": {arguments}}}\n```")
}

fn plan_message() -> String {
    "<building_plan><overall_structure><description>tower</description></overall_structure></building_plan>".to_string()
}

fn four_block_backend() -> ScriptedBackend {
    let mut backend = ScriptedBackend::new();
    backend.push(EntityKind::Planner, plan_message());
    backend.push(EntityKind::Drafter, "three cubes stacked on the base");
    backend.push(EntityKind::Reviewer, "Verified. TERMINATE");
    for instruction in [
        "Initialize the starting block.",
        "Attach a small block on top of block 0.",
        "Attach a small block on top of block 1.",
        "Attach a small block on top of block 2.",
        "Review the structure.",
        "Matches the blueprint. TERMINATE",
    ] {
        backend.push(EntityKind::Guidance, instruction);
    }
    backend.push(EntityKind::Builder, tool_call("start", "{}"));
    for base in 0..3 {
        backend.push(
            EntityKind::Builder,
            tool_call(
                "attach_block_to",
                &format!("{{\"base_block\": {base}, \"face\": \"top\", \"new_block\": \"SmallWoodenBlock\"}}"),
            ),
        );
    }
    backend.push(EntityKind::Builder, tool_call("get_machine_summary", "{}"));
    backend
}

#[test]
fn criterion_10_workflow_determinism() {
    criterion(
        "criterion 10: workflow determinism",
        Duration::from_secs(10),
        || {
            let task = TaskConfig::load_named("lift_lv1").unwrap();
            let run_once = || {
                let mut backend = four_block_backend();
                let mut sess = session();
                let run = run_workflow(
                    task.clone(),
                    &mut backend,
                    &mut sess,
                    WorkflowBudgets::default(),
                );
                assert_eq!(run.phase, WorkflowPhase::Done, "{:?}", run.failure_detail);
                let scene = sess.scene.as_ref().unwrap();
                assert_eq!(scene.block_count(), 4, "finalized 4-block scene");
                assert_eq!(scene.phase, Phase::Finalized);
                let machine_file = export_machine_file(scene, "acceptance").unwrap();
                assert!(machine_file.contains("<Machine"));
                (run.transcript_hash(), scene.state_hash())
            };
            let (t1, s1) = run_once();
            let (t2, s2) = run_once();
            assert_eq!(t1, t2, "transcript hash reproduces");
            assert_eq!(s1, s2, "state hash reproduces");

            // Never-approving reviewer exhausts the loop budget.
            let mut backend = ScriptedBackend::new();
            backend.push(EntityKind::Planner, plan_message());
            for i in 0..5 {
                backend.push(EntityKind::Drafter, format!("draft {i}"));
                backend.push(EntityKind::Reviewer, "not good enough");
            }
            let mut sess = session();
            let run = run_workflow(
                task.clone(),
                &mut backend,
                &mut sess,
                WorkflowBudgets::default(),
            );
            assert_eq!(run.phase, WorkflowPhase::Failed);
            assert_eq!(run.failure_reason, Some(FailureReason::Budget));
            assert!(run.failure_detail.as_deref().unwrap().contains("budget"));

            // Budget math: approval on round 3 of cap 5 leaves 6 entity messages
            // in the draft-review exchange.
            let mut backend = ScriptedBackend::new();
            backend.push(EntityKind::Planner, plan_message());
            for i in 0..3 {
                backend.push(EntityKind::Drafter, format!("draft {i}"));
                backend.push(
                    EntityKind::Reviewer,
                    if i == 2 { "ok. TERMINATE" } else { "revise" },
                );
            }
            backend.push(EntityKind::Guidance, "Start.");
            backend.push(EntityKind::Builder, tool_call("start", "{}"));
            backend.push(EntityKind::Guidance, "Done. TERMINATE");
            let mut sess = session();
            let run = run_workflow(task, &mut backend, &mut sess, WorkflowBudgets::default());
            assert_eq!(run.phase, WorkflowPhase::Done, "{:?}", run.failure_detail);
            let dr_messages = run
                .transcript
                .iter()
                .filter(|m| {
                    matches!(
                        m.speaker,
                        mechabench::workflow::Speaker::Entity(EntityKind::Drafter)
                            | mechabench::workflow::Speaker::Entity(EntityKind::Reviewer)
                    )
                })
                .count();
            assert_eq!(dr_messages, 6);
        },
    );
}

#[test]
fn criterion_11_bench_aggregation() {
    criterion(
        "criterion 11: bench aggregation over 64 samples",
        Duration::from_secs(60),
        || {
            let task = TaskConfig::load_named("lift_lv1").unwrap();

            // 20 heated (successful) engines, 44 unheated (failing) ones; every
            // run builds start + cannon + torch = 2 parts beyond the start.
            let engine_spec = |torch_pointing: &str| -> ScriptSpec {
                ScriptSpec {
                planner: vec![plan_message()],
                drafter: vec!["one cannon and one torch".into()],
                reviewer: vec!["TERMINATE".into()],
                guidance: vec![
                    "Start.".into(),
                    "Attach the cannon east, jetting down.".into(),
                    "Attach the torch on top.".into(),
                    "Done. TERMINATE".into(),
                ],
                builder: vec![
                    tool_call("start", "{}"),
                    tool_call(
                        "attach_block_to",
                        "{\"base_block\": 0, \"face\": \"east\", \"new_block\": \"WaterCannon\", \"pointing\": \"down\"}",
                    ),
                    tool_call(
                        "attach_block_to",
                        &format!(
                            "{{\"base_block\": 0, \"face\": \"top\", \"new_block\": \"Torch\", \"pointing\": \"{torch_pointing}\"}}"
                        ),
                    ),
                ],
                controller: vec![],
                usage: Some(TokenUsage { input_tokens: 100, output_tokens: 20 }),
            }
            };
            let mut specs = Vec::new();
            for i in 0..64 {
                // Sample i uses specs[i % 64]: exactly 20 heated scripts.
                specs.push(if i < 20 {
                    engine_spec("east")
                } else {
                    engine_spec("up")
                });
            }
            let outcome = run_bench(
                &task,
                &specs,
                64,
                Catalog::default_catalog(),
                &EngineConfig::default(),
                WorkflowBudgets::default(),
            )
            .unwrap();
            assert_eq!(outcome.records.len(), 64);
            assert_eq!(outcome.summary.successes, 20);
            assert!((outcome.summary.success_rate - 31.25).abs() < 1e-12);
            assert!(
                (outcome.summary.mean_parts - 2.0).abs() < 1e-12,
                "scripted builds have 2 parts"
            );
            assert!(outcome.summary.mean_requests > 0.0);

            // Cross-check through the aggregation entry point.
            let summary = aggregate(&outcome.records).unwrap();
            assert_eq!(summary.success_rate, outcome.summary.success_rate);
        },
    );
}

#[test]
fn criterion_12_tool_server_fuzz() {
    criterion(
        "criterion 12: tool-server fuzz",
        Duration::from_secs(60),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
            let mut input = String::new();
            let faces = [
                "top", "bottom", "north", "south", "east", "west", "A", "lid",
            ];
            let types = [
                "SmallWoodenBlock",
                "PoweredWheel",
                "Torch",
                "WaterCannon",
                "Brace",
                "Ghost",
            ];
            let sessions = ["alpha", "beta", "gamma"];
            for i in 0..1000 {
                match rng.gen_range(0..10) {
                    // Malformed JSON.
                    0 => input.push_str("¡¡¡ total garbage {{{\n"),
                    1 => input.push_str("{\"id\": 1, \"action\": \n"),
                    2 => {
                        // Valid JSON, wrong shape.
                        input.push_str("{\"id\": [1,2], \"action\": 42}\n");
                    }
                    // Valid-shaped requests, arbitrary content.
                    _ => {
                        let session = sessions[rng.gen_range(0..sessions.len())];
                        let action = match rng.gen_range(0..6) {
                        0 => "{\"name\": \"start\"}".to_string(),
                        1 => format!(
                            "{{\"name\": \"attach_block_to\", \"arguments\": {{\"base_block\": {}, \"face\": \"{}\", \"new_block\": \"{}\"}}}}",
                            rng.gen_range(0..20),
                            faces[rng.gen_range(0..faces.len())],
                            types[rng.gen_range(0..types.len())]
                        ),
                        2 => format!(
                            "{{\"name\": \"remove_block\", \"arguments\": {{\"block\": {}}}}}",
                            rng.gen_range(0..20)
                        ),
                        3 => format!(
                            "{{\"name\": \"twist_block\", \"arguments\": {{\"block\": {}, \"angle\": {}}}}}",
                            rng.gen_range(0..20),
                            rng.gen_range(-720.0..720.0)
                        ),
                        4 => "{\"name\": \"get_machine_summary\"}".to_string(),
                        _ => format!(
                            "{{\"name\": \"bind_key\", \"arguments\": {{\"key\": \"Alpha{}\", \"action\": \"spin_forward\", \"block_id\": {}}}}}",
                            rng.gen_range(0..12),
                            rng.gen_range(0..20)
                        ),
                    };
                        input.push_str(&format!(
                            "{{\"id\": {i}, \"session\": \"{session}\", \"action\": {action}}}\n"
                        ));
                    }
                }
            }

            let mut output = Vec::new();
            let mut registry =
                SessionRegistry::new(Catalog::default_catalog(), EngineConfig::default());
            let stats = serve_tools(input.as_bytes(), &mut output, &mut registry).unwrap();
            assert_eq!(stats.requests, 1000, "server answered every line");
            let responses = std::str::from_utf8(&output).unwrap().trim().lines().count();
            assert_eq!(responses, 1000, "one response per request");

            // Post-hoc invariants on every surviving session.
            let catalog = Catalog::default_catalog();
            let config = EngineConfig::default();
            for (name, sess) in registry.sessions() {
                let Some(scene) = &sess.scene else { continue };
                assert!(
                    scene.find_overlap(&catalog, &config).is_none(),
                    "session {name} contains overlapping blocks"
                );
                // Ledger soundness: the live ledger equals one rebuilt from the
                // blocks and connectors.
                let mut rebuilt = scene.clone();
                rebuilt.rebuild_ledger();
                assert_eq!(
                    scene.ledger(),
                    rebuilt.ledger(),
                    "session {name} ledger out of sync"
                );
                // Every attachment's parent face appears exactly once.
                let mut seen = std::collections::BTreeSet::new();
                for block in scene.blocks() {
                    if let Some(mount) = &block.mounted_on {
                        assert!(
                            seen.insert((mount.parent, mount.parent_face.clone())),
                            "two blocks share one parent face in session {name}"
                        );
                    }
                }
            }
        },
    );
}
