//! Pose algebra and the collision kernel.
//!
//! World frame convention: positive x points east, positive y points north,
//! positive z points upward. All lengths are engine units, all angles radians
//! unless a function says otherwise. Everything here is a pure function over
//! value types and safe to use from any thread.

use serde::{Deserialize, Serialize};

/// Tolerance used for unit-length and associativity checks.
pub const UNIT_EPS: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Vec3
// ---------------------------------------------------------------------------

/// A point or direction in 3-space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };
    pub const X: Vec3 = Vec3 {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: Vec3 = Vec3 {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction. Returns `None` for near-zero input.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self * (1.0 / n))
        }
    }

    pub fn scaled(self, s: f64) -> Vec3 {
        self * s
    }

    /// Horizontal (xy) length.
    pub fn norm_xy(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

// ---------------------------------------------------------------------------
// Quat
// ---------------------------------------------------------------------------

/// Unit quaternion (w, x, y, z) encoding a rotation.
///
/// Rotation by a positive angle about an axis follows the right-hand rule,
/// which appears clockwise to an observer looking along the axis direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = axis.normalized().unwrap_or(Vec3::Z);
        let half = angle * 0.5;
        let s = half.sin();
        Quat {
            w: half.cos(),
            x: axis.x * s,
            y: axis.y * s,
            z: axis.z * s,
        }
    }

    /// Euler angles in degrees applied as Rz(z)·Ry(y)·Rx(x).
    pub fn from_euler_deg(rx: f64, ry: f64, rz: f64) -> Self {
        let qx = Quat::from_axis_angle(Vec3::X, rx.to_radians());
        let qy = Quat::from_axis_angle(Vec3::Y, ry.to_radians());
        let qz = Quat::from_axis_angle(Vec3::Z, rz.to_radians());
        (qz * qy * qx).normalized()
    }

    /// Minimal-arc rotation taking unit vector `from` onto unit vector `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Self {
        let d = from.dot(to);
        if d > 1.0 - 1e-12 {
            return Quat::IDENTITY;
        }
        if d < -1.0 + 1e-12 {
            // Antiparallel: rotate half a turn about any axis orthogonal to `from`.
            let ortho = if from.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
            let axis = from.cross(ortho).normalized().unwrap_or(Vec3::Z);
            return Quat::from_axis_angle(axis, std::f64::consts::PI);
        }
        let axis = from.cross(to);
        let q = Quat::new(1.0 + d, axis.x, axis.y, axis.z);
        q.normalized()
    }

    /// Rotation from an orthonormal right-handed basis given as images of the
    /// local x and z axes.
    pub fn from_basis_xz(x_axis: Vec3, z_axis: Vec3) -> Self {
        let y_axis = z_axis.cross(x_axis);
        // Columns of the rotation matrix.
        let (m00, m10, m20) = (x_axis.x, x_axis.y, x_axis.z);
        let (m01, m11, m21) = (y_axis.x, y_axis.y, y_axis.z);
        let (m02, m12, m22) = (z_axis.x, z_axis.y, z_axis.z);
        let trace = m00 + m11 + m22;
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s)
        } else if m00 > m11 && m00 > m22 {
            let s = (1.0 + m00 - m11 - m22).sqrt() * 2.0;
            Quat::new((m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s)
        } else if m11 > m22 {
            let s = (1.0 + m11 - m00 - m22).sqrt() * 2.0;
            Quat::new((m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s)
        } else {
            let s = (1.0 + m22 - m00 - m11).sqrt() * 2.0;
            Quat::new((m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s)
        };
        q.normalized()
    }

    pub fn normalized(self) -> Quat {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        if n < 1e-12 {
            return Quat::IDENTITY;
        }
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Inverse, assuming unit length.
    pub fn inverse(self) -> Quat {
        self.conjugate()
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u×v) + 2(u×(u×v)) with u the vector part.
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Canonical representative for serialization and hashing: w >= 0, with a
    /// fixed sign tie-break at w == 0.
    pub fn canonicalized(self) -> Quat {
        let q = self.normalized();
        let flip = if q.w.abs() > 1e-12 {
            q.w < 0.0
        } else if q.x.abs() > 1e-12 {
            q.x < 0.0
        } else if q.y.abs() > 1e-12 {
            q.y < 0.0
        } else {
            q.z < 0.0
        };
        if flip {
            Quat::new(-q.w, -q.x, -q.y, -q.z)
        } else {
            q
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

impl std::ops::Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: Vec3::ZERO,
        orientation: Quat::IDENTITY,
    };

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Pose {
            position,
            orientation: Quat::IDENTITY,
        }
    }

    /// Apply this transform to a point.
    pub fn apply(self, p: Vec3) -> Vec3 {
        self.position + self.orientation.rotate(p)
    }

    /// Rotate a direction (ignores translation).
    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.orientation.rotate(v)
    }

    pub fn inverse(self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: inv.rotate(-self.position),
            orientation: inv,
        }
    }

    /// `true` when the orientation is unit length within [`UNIT_EPS`].
    pub fn is_valid(self) -> bool {
        (self.orientation.norm() - 1.0).abs() <= UNIT_EPS
            && self.position.x.is_finite()
            && self.position.y.is_finite()
            && self.position.z.is_finite()
    }
}

/// Rigid composition: the child pose expressed in the parent's frame, mapped
/// to the world frame of the parent.
pub fn compose(parent: Pose, child_relative: Pose) -> Pose {
    Pose {
        position: parent.apply(child_relative.position),
        orientation: (parent.orientation * child_relative.orientation).normalized(),
    }
}

// ---------------------------------------------------------------------------
// Faces
// ---------------------------------------------------------------------------

/// A face expressed in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceFrame {
    pub face_id: String,
    pub world_center: Vec3,
    pub world_normal: Vec3,
}

/// Map a face's local center/normal through the owning block's pose.
pub fn face_world_frame(
    block_pose: Pose,
    face_id: &str,
    local_center: Vec3,
    local_normal: Vec3,
) -> FaceFrame {
    FaceFrame {
        face_id: face_id.to_string(),
        world_center: block_pose.apply(local_center),
        world_normal: block_pose.rotate(local_normal),
    }
}

// ---------------------------------------------------------------------------
// Oriented bounding boxes
// ---------------------------------------------------------------------------

/// Oriented box: center, positive half extents, orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub orientation: Quat,
}

impl Obb {
    pub fn new(center: Vec3, half_extents: Vec3, orientation: Quat) -> Self {
        Obb {
            center,
            half_extents,
            orientation,
        }
    }

    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Self {
        Obb::new(center, half_extents, Quat::IDENTITY)
    }

    fn axes(&self) -> [Vec3; 3] {
        [
            self.orientation.rotate(Vec3::X),
            self.orientation.rotate(Vec3::Y),
            self.orientation.rotate(Vec3::Z),
        ]
    }

    /// Lowest world-z over the box's corners.
    pub fn min_z(&self) -> f64 {
        let ax = self.axes();
        let he = self.half_extents;
        self.center.z - ax[0].z.abs() * he.x - ax[1].z.abs() * he.y - ax[2].z.abs() * he.z
    }

    /// Extent interval of the box projected on `dir` (world frame).
    pub fn projected_interval(&self, dir: Vec3) -> (f64, f64) {
        let ax = self.axes();
        let c = self.center.dot(dir);
        let r = ax[0].dot(dir).abs() * self.half_extents.x
            + ax[1].dot(dir).abs() * self.half_extents.y
            + ax[2].dot(dir).abs() * self.half_extents.z;
        (c - r, c + r)
    }

    /// Point-membership test (closed box).
    pub fn contains(&self, p: Vec3) -> bool {
        let local = self.orientation.inverse().rotate(p - self.center);
        local.x.abs() <= self.half_extents.x
            && local.y.abs() <= self.half_extents.y
            && local.z.abs() <= self.half_extents.z
    }
}

/// Separating-axis overlap decision between two boxes whose half extents are
/// each shrunk by `contact_tolerance`, so flush face contact does not count
/// as overlap. Returns `true` iff the shrunk interiors intersect.
pub fn obb_overlap(a: &Obb, b: &Obb, contact_tolerance: f64) -> bool {
    let ea = Vec3::new(
        a.half_extents.x - contact_tolerance,
        a.half_extents.y - contact_tolerance,
        a.half_extents.z - contact_tolerance,
    );
    let eb = Vec3::new(
        b.half_extents.x - contact_tolerance,
        b.half_extents.y - contact_tolerance,
        b.half_extents.z - contact_tolerance,
    );
    if ea.x <= 0.0 || ea.y <= 0.0 || ea.z <= 0.0 || eb.x <= 0.0 || eb.y <= 0.0 || eb.z <= 0.0 {
        return false;
    }

    let axes_a = a.axes();
    let axes_b = b.axes();
    let t = b.center - a.center;

    let ra = [ea.x, ea.y, ea.z];
    let rb = [eb.x, eb.y, eb.z];

    let separated = |axis: Vec3| -> bool {
        let len_sq = axis.norm_sq();
        if len_sq < 1e-12 {
            // Degenerate cross product of near-parallel edges; not a separating
            // axis candidate.
            return false;
        }
        let dist = t.dot(axis).abs();
        let span_a: f64 = (0..3).map(|i| ra[i] * axes_a[i].dot(axis).abs()).sum();
        let span_b: f64 = (0..3).map(|i| rb[i] * axes_b[i].dot(axis).abs()).sum();
        dist >= span_a + span_b
    };

    for axis in axes_a {
        if separated(axis) {
            return false;
        }
    }
    for axis in axes_b {
        if separated(axis) {
            return false;
        }
    }
    for aa in axes_a {
        for bb in axes_b {
            if separated(aa.cross(bb)) {
                return false;
            }
        }
    }
    true
}

/// Minimum distance from `p` to the closed box (0 when inside).
pub fn point_obb_distance(p: Vec3, box_: &Obb) -> f64 {
    let local = box_.orientation.inverse().rotate(p - box_.center);
    let dx = (local.x.abs() - box_.half_extents.x).max(0.0);
    let dy = (local.y.abs() - box_.half_extents.y).max(0.0);
    let dz = (local.z.abs() - box_.half_extents.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Sphere/box intersection: true iff the minimum distance from the sphere
/// center to the box is at most `radius`.
pub fn sphere_obb_intersects(center: Vec3, radius: f64, box_: &Obb) -> bool {
    point_obb_distance(center, box_) <= radius
}
