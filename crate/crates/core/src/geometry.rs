//! Cubic-satellite thruster layout and the control-allocation matrix.
//!
//! Twenty-four unidirectional thrusters sit at the cube vertices, four per
//! face, one per face corner. A single pair of face angles (azimuth `theta`,
//! elevation `phi`) orients every thruster relative to its face frame. Each
//! thruster contributes one column `[d; r x d]` to the 6xN allocation matrix,
//! where `d` is the body-frame thrust direction and `r` the mounting position.
//!
//! Numbering: faces 1..6 have outward normals `+X, +Y, -X, -Y, +Z, -Z`.
//! Thruster ids are `(face - 1) * 4 + corner`.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FACES: usize = 6;
pub const CORNERS_PER_FACE: usize = 4;
pub const THRUSTER_COUNT: usize = FACES * CORNERS_PER_FACE;

/// Outward normal of each face, in body axes.
const FACE_NORMALS: [[f64; 3]; FACES] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

/// Body-frame vertex (as signs of `L/2`) hosting each face corner.
const CORNER_VERTICES: [[[f64; 3]; CORNERS_PER_FACE]; FACES] = [
    [[1., 1., 1.], [1., -1., 1.], [1., -1., -1.], [1., 1., -1.]],
    [[1., 1., 1.], [1., 1., -1.], [-1., 1., -1.], [-1., 1., 1.]],
    [[-1., 1., -1.], [-1., -1., -1.], [-1., -1., 1.], [-1., 1., 1.]],
    [[-1., -1., 1.], [-1., -1., -1.], [1., -1., -1.], [1., -1., 1.]],
    [[-1., -1., 1.], [-1., 1., 1.], [1., 1., 1.], [1., -1., 1.]],
    [[-1., -1., -1.], [-1., 1., -1.], [1., 1., -1.], [1., -1., -1.]],
];

/// Trig round-off below this is snapped to zero so that axis-aligned layouts
/// produce exactly sparse allocation columns.
const SNAP: f64 = 1e-15;

/// Orientation of a thruster relative to its face frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceAngles {
    /// Face azimuth, radians in `[0, 2pi)`.
    pub theta: f64,
    /// Face elevation, radians in `[0, pi/2]`.
    pub phi: f64,
}

impl FaceAngles {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        let angles = FaceAngles { theta, phi };
        angles.validate()?;
        Ok(angles)
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// All thrusters perpendicular to their faces, exhausting outward.
    pub fn perpendicular() -> Self {
        FaceAngles {
            theta: 0.0,
            phi: FRAC_PI_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && (0.0..TAU).contains(&self.theta)) {
            return Err(Error::domain(format!(
                "face azimuth {} outside [0, 2pi)",
                self.theta
            )));
        }
        // Allow the usual degree-conversion round-off at the pi/2 end.
        if !(self.phi.is_finite() && self.phi >= 0.0 && self.phi <= FRAC_PI_2 + 1e-12) {
            return Err(Error::domain(format!(
                "face elevation {} outside [0, pi/2]",
                self.phi
            )));
        }
        Ok(())
    }
}

impl Default for FaceAngles {
    fn default() -> Self {
        Self::perpendicular()
    }
}

fn snap(v: f64) -> f64 {
    if v.abs() < SNAP {
        0.0
    } else {
        v
    }
}

/// Unit thrust direction in the face frame.
pub fn thrust_direction(angles: FaceAngles) -> Vector3<f64> {
    let (st, ct) = angles.theta.sin_cos();
    let (sp, cp) = angles.phi.sin_cos();
    Vector3::new(snap(-cp * ct), snap(-cp * st), snap(-sp))
}

pub fn thruster_id(face: usize, corner: usize) -> Result<usize> {
    if !(1..=FACES).contains(&face) {
        return Err(Error::domain(format!("face {face} outside 1..=6")));
    }
    if !(1..=CORNERS_PER_FACE).contains(&corner) {
        return Err(Error::domain(format!("corner {corner} outside 1..=4")));
    }
    Ok((face - 1) * CORNERS_PER_FACE + corner)
}

pub fn id_to_face_corner(id: usize) -> Result<(usize, usize)> {
    if !(1..=THRUSTER_COUNT).contains(&id) {
        return Err(Error::domain(format!("thruster id {id} outside 1..=24")));
    }
    Ok(((id - 1) / CORNERS_PER_FACE + 1, (id - 1) % CORNERS_PER_FACE + 1))
}

/// Cube body with its face frames and corner mounting points.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeGeometry {
    pub side_length: f64,
    /// Face frame to body frame; column 3 is the outward normal.
    pub face_rotations: [Matrix3<f64>; FACES],
    /// Corner offsets in face-local `(x, y)`, metres, per face.
    pub corner_offsets: [[Vector2<f64>; CORNERS_PER_FACE]; FACES],
}

impl CubeGeometry {
    pub fn new(side_length: f64) -> Result<Self> {
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::domain(format!(
                "side length {side_length} must be positive"
            )));
        }
        let half = side_length / 2.0;
        let mut face_rotations = [Matrix3::zeros(); FACES];
        let mut corner_offsets = [[Vector2::zeros(); CORNERS_PER_FACE]; FACES];
        for face in 0..FACES {
            let frame = face_frame(Vector3::from(FACE_NORMALS[face]));
            for corner in 0..CORNERS_PER_FACE {
                let vertex = Vector3::from(CORNER_VERTICES[face][corner]);
                corner_offsets[face][corner] = Vector2::new(
                    half * vertex.dot(&frame.column(0)),
                    half * vertex.dot(&frame.column(1)),
                );
            }
            face_rotations[face] = frame;
        }
        Ok(CubeGeometry {
            side_length,
            face_rotations,
            corner_offsets,
        })
    }

    pub fn outward_normal(&self, face: usize) -> Vector3<f64> {
        self.face_rotations[face - 1].column(2).into_owned()
    }

    /// Body-frame mounting point of a face corner (1-based indices).
    pub fn corner_position(&self, face: usize, corner: usize) -> Vector3<f64> {
        let offset = self.corner_offsets[face - 1][corner - 1];
        self.face_rotations[face - 1]
            * Vector3::new(offset.x, offset.y, self.side_length / 2.0)
    }
}

/// Right-handed face frame: z is the outward normal, x the first positive body
/// axis orthogonal to it, y completes the triad.
fn face_frame(normal: Vector3<f64>) -> Matrix3<f64> {
    let x = (0..3)
        .map(|i| Vector3::ith(i, 1.0))
        .find(|axis: &Vector3<f64>| axis.dot(&normal) == 0.0)
        .expect("a unit axis is orthogonal to every face normal");
    let y = normal.cross(&x);
    Matrix3::from_columns(&[x, y, normal])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thruster {
    pub id: usize,
    pub face: usize,
    pub corner: usize,
    /// Body-frame mounting point, metres.
    pub position: Vector3<f64>,
    /// Body-frame unit force direction.
    pub direction: Vector3<f64>,
    #[serde(skip, default)]
    pub angles: FaceAngles,
}

impl Thruster {
    pub fn torque_arm(&self) -> Vector3<f64> {
        self.position.cross(&self.direction)
    }

    pub fn column(&self) -> Vector6<f64> {
        let t = self.torque_arm();
        Vector6::new(
            self.direction.x,
            self.direction.y,
            self.direction.z,
            t.x,
            t.y,
            t.z,
        )
    }
}

/// All 24 thrusters with one shared orientation, ids ascending.
pub fn build_layout(geom: &CubeGeometry, angles: FaceAngles) -> Vec<Thruster> {
    let local = thrust_direction(angles);
    let mut thrusters = Vec::with_capacity(THRUSTER_COUNT);
    for face in 1..=FACES {
        let direction = (geom.face_rotations[face - 1] * local).map(snap);
        for corner in 1..=CORNERS_PER_FACE {
            thrusters.push(Thruster {
                id: (face - 1) * CORNERS_PER_FACE + corner,
                face,
                corner,
                position: geom.corner_position(face, corner),
                direction,
                angles,
            });
        }
    }
    thrusters
}

/// Force and torque on the body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Wrench {
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
        }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Wrench {
            force: Vector3::new(v[0], v[1], v[2]),
            torque: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

/// 6xN map from thruster magnitudes to body wrench. Rows 1-3 are force
/// directions, rows 4-6 torque arms.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMatrix {
    columns: Vec<Vector6<f64>>,
    thruster_ids: Vec<usize>,
}

impl AllocationMatrix {
    pub fn columns(&self) -> &[Vector6<f64>] {
        &self.columns
    }

    pub fn thruster_ids(&self) -> &[usize] {
        &self.thruster_ids
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6, self.columns.len(), |r, c| self.columns[c][r])
    }

    pub fn apply(&self, magnitudes: &[f64]) -> Vector6<f64> {
        self.columns
            .iter()
            .zip(magnitudes)
            .fold(Vector6::zeros(), |acc, (col, &f)| acc + col * f)
    }
}

/// Allocation matrix of a thruster subset, columns in ascending id order.
pub fn allocation_matrix(thrusters: &[Thruster]) -> Result<AllocationMatrix> {
    if thrusters.is_empty() {
        return Err(Error::domain("allocation matrix needs at least one thruster"));
    }
    let mut sorted: Vec<&Thruster> = thrusters.iter().collect();
    sorted.sort_by_key(|t| t.id);
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::domain(format!("duplicate thruster id {}", w[0].id)));
    }
    Ok(AllocationMatrix {
        columns: sorted.iter().map(|t| t.column()).collect(),
        thruster_ids: sorted.iter().map(|t| t.id).collect(),
    })
}

/// Body wrench produced by firing `thrusters` at `magnitudes` newtons.
pub fn wrench_of(thrusters: &[Thruster], magnitudes: &[f64]) -> Result<Wrench> {
    if thrusters.len() != magnitudes.len() {
        return Err(Error::domain(format!(
            "{} thrusters but {} magnitudes",
            thrusters.len(),
            magnitudes.len()
        )));
    }
    if let Some(bad) = magnitudes.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::domain(format!("thrust magnitude {bad} is negative")));
    }
    let total = thrusters
        .iter()
        .zip(magnitudes)
        .fold(Vector6::zeros(), |acc, (t, &f)| acc + t.column() * f);
    Ok(Wrench::from_vector(&total))
}

/// Full layout plus the parameters it was built from. This is the structure
/// written to and read from layout files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub side_length: f64,
    pub angles: FaceAngles,
    pub thrusters: Vec<Thruster>,
}

impl Layout {
    pub fn new(side_length: f64, angles: FaceAngles) -> Result<Self> {
        angles.validate()?;
        let geom = CubeGeometry::new(side_length)?;
        Ok(Layout {
            side_length,
            angles,
            thrusters: build_layout(&geom, angles),
        })
    }

    /// Thrusters with the given ids, ascending.
    pub fn select(&self, ids: &[usize]) -> Result<Vec<Thruster>> {
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::domain(format!("duplicate thruster id {}", w[0])));
        }
        sorted
            .iter()
            .map(|&id| {
                self.thrusters
                    .iter()
                    .find(|t| t.id == id)
                    .cloned()
                    .ok_or_else(|| Error::domain(format!("unknown thruster id {id}")))
            })
            .collect()
    }

    pub fn allocation(&self, ids: &[usize]) -> Result<AllocationMatrix> {
        allocation_matrix(&self.select(ids)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    /// Parses a layout file; thruster angles are restored from the header.
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let mut layout: Layout = serde_json::from_str(text)?;
        for t in &mut layout.thrusters {
            t.angles = layout.angles;
        }
        Ok(layout)
    }
}

pub mod symmetry {
    //! The 48 symmetries of the cube as signed permutation matrices, and
    //! their action on thruster layouts.

    use super::*;

    pub fn cube_symmetries() -> Vec<Matrix3<f64>> {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut out = Vec::with_capacity(48);
        for perm in PERMS {
            for signs in 0..8u8 {
                let mut m = Matrix3::zeros();
                for (row, &col) in perm.iter().enumerate() {
                    m[(row, col)] = if signs & (1 << row) != 0 { -1.0 } else { 1.0 };
                }
                out.push(m);
            }
        }
        out
    }

    /// Image of a wrench column under a body symmetry. Torque is an axial
    /// vector, so reflections flip its sign.
    pub fn transform_column(g: &Matrix3<f64>, col: &Vector6<f64>) -> Vector6<f64> {
        let f = g * Vector3::new(col[0], col[1], col[2]);
        let t = g * Vector3::new(col[3], col[4], col[5]) * g.determinant();
        Vector6::new(f.x, f.y, f.z, t.x, t.y, t.z)
    }

    /// Thruster id permutation induced by `g`, or `None` when the layout is
    /// not invariant under it. Entry `k` is the image of id `k + 1`.
    pub fn id_permutation(layout: &Layout, g: &Matrix3<f64>) -> Option<Vec<usize>> {
        layout
            .thrusters
            .iter()
            .map(|t| {
                let pos = g * t.position;
                let dir = g * t.direction;
                layout
                    .thrusters
                    .iter()
                    .find(|u| (u.position - pos).norm() < 1e-12 && (u.direction - dir).norm() < 1e-12)
                    .map(|u| u.id)
            })
            .collect()
    }

    /// Whether some cube symmetry carries the wrench map of `a` onto that of
    /// `b` (same multiset of allocation columns).
    pub fn equivalent_under_symmetry(layout: &Layout, a: &[usize], b: &[usize]) -> Option<Matrix3<f64>> {
        if a.len() != b.len() {
            return None;
        }
        let cols_a: Vec<Vector6<f64>> = layout.select(a).ok()?.iter().map(|t| t.column()).collect();
        let cols_b: Vec<Vector6<f64>> = layout.select(b).ok()?.iter().map(|t| t.column()).collect();
        cube_symmetries().into_iter().find(|g| {
            let mut used = vec![false; cols_b.len()];
            cols_a.iter().all(|ca| {
                let image = transform_column(g, ca);
                match cols_b
                    .iter()
                    .enumerate()
                    .position(|(j, cb)| !used[j] && (cb - image).norm() < 1e-12)
                {
                    Some(j) => {
                        used[j] = true;
                        true
                    }
                    None => false,
                }
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn default_layout() -> Layout {
        Layout::new(0.5, FaceAngles::perpendicular()).unwrap()
    }

    #[test]
    fn direction_examples() {
        assert_eq!(
            thrust_direction(FaceAngles::new(0.0, FRAC_PI_2).unwrap()),
            Vector3::new(0.0, 0.0, -1.0)
        );
        assert_eq!(
            thrust_direction(FaceAngles::new(0.0, 0.0).unwrap()),
            Vector3::new(-1.0, 0.0, 0.0)
        );
        let d = thrust_direction(FaceAngles::new(FRAC_PI_2, PI / 4.0).unwrap());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(d, Vector3::new(0.0, -h, -h), epsilon = 1e-15);
        assert_relative_eq!(d.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn angle_domain() {
        assert!(FaceAngles::new(-0.1, 0.0).is_err());
        assert!(FaceAngles::new(TAU, 0.0).is_err());
        assert!(FaceAngles::new(0.0, 2.0).is_err());
        assert!(FaceAngles::from_degrees(0.0, 90.0).is_ok());
    }

    #[test]
    fn id_examples() {
        assert_eq!(thruster_id(3, 4).unwrap(), 12);
        assert_eq!(id_to_face_corner(15).unwrap(), (4, 3));
        assert_eq!(thruster_id(1, 1).unwrap(), 1);
        assert!(thruster_id(7, 1).is_err());
        assert!(thruster_id(1, 0).is_err());
        assert!(id_to_face_corner(25).is_err());
        assert!(id_to_face_corner(0).is_err());
        for id in 1..=24 {
            let (f, c) = id_to_face_corner(id).unwrap();
            assert_eq!(thruster_id(f, c).unwrap(), id);
        }
    }

    #[test]
    fn face_frames_are_rotations() {
        let geom = CubeGeometry::new(0.5).unwrap();
        let mut normals = Vec::new();
        for c in &geom.face_rotations {
            assert_relative_eq!(c.transpose() * c, Matrix3::identity(), epsilon = 1e-12);
            assert_relative_eq!(c.determinant(), 1.0, epsilon = 1e-12);
            normals.push(c.column(2).into_owned());
        }
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let n = Vector3::ith(axis, sign);
                assert_eq!(normals.iter().filter(|m| **m == n).count(), 1);
            }
        }
        for face in &geom.corner_offsets {
            for off in face {
                assert_eq!(off.x.abs(), 0.25);
                assert_eq!(off.y.abs(), 0.25);
            }
        }
    }

    #[test]
    fn layout_positions_and_directions() {
        let layout = default_layout();
        assert_eq!(layout.thrusters.len(), 24);
        let mut vertex_count = std::collections::HashMap::new();
        for (k, t) in layout.thrusters.iter().enumerate() {
            assert_eq!(t.id, k + 1);
            assert_eq!(t.id, (t.face - 1) * 4 + t.corner);
            assert_relative_eq!(t.direction.norm(), 1.0, epsilon = 1e-12);
            for p in t.position.iter() {
                assert!(*p == 0.25 || *p == -0.25);
            }
            // inward normal
            let geom = CubeGeometry::new(0.5).unwrap();
            assert_eq!(t.direction, -geom.outward_normal(t.face));
            let key: Vec<i8> = t.position.iter().map(|p| p.signum() as i8).collect();
            *vertex_count.entry(key).or_insert(0) += 1;
        }
        assert_eq!(vertex_count.len(), 8);
        assert!(vertex_count.values().all(|&c| c == 3));
    }

    #[test]
    fn force_rows_are_signed_unit_vectors() {
        let h = default_layout().allocation(&(1..=24).collect::<Vec<_>>()).unwrap();
        for col in h.columns() {
            let nz: Vec<f64> = col.iter().take(3).copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert!(nz[0] == 1.0 || nz[0] == -1.0);
        }
    }

    #[test]
    fn torque_rows_match_cross_product() {
        let layout = default_layout();
        let h = layout.allocation(&(1..=24).collect::<Vec<_>>()).unwrap();
        for (t, col) in layout.thrusters.iter().zip(h.columns()) {
            let c = t.position.cross(&t.direction);
            for i in 0..3 {
                assert!((col[3 + i] - c[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn allocation_rejects_duplicates() {
        let layout = default_layout();
        let mut ts = layout.select(&[1, 2]).unwrap();
        ts.push(ts[0].clone());
        assert!(allocation_matrix(&ts).is_err());
        assert!(allocation_matrix(&[]).is_err());
        assert!(layout.select(&[3, 3]).is_err());
        assert!(layout.select(&[25]).is_err());
    }

    #[test]
    fn allocation_sorts_ids() {
        let layout = default_layout();
        let h = layout.allocation(&[9, 2, 17]).unwrap();
        assert_eq!(h.thruster_ids(), &[2, 9, 17]);
        assert_eq!(h.to_matrix().ncols(), 3);
    }

    #[test]
    fn zero_magnitudes_give_zero_wrench() {
        let layout = default_layout();
        let w = wrench_of(&layout.thrusters, &[0.0; 24]).unwrap();
        assert_eq!(w, Wrench::zero());
    }

    #[test]
    fn negative_magnitude_rejected() {
        let layout = default_layout();
        let ts = layout.select(&[1, 2]).unwrap();
        assert!(wrench_of(&ts, &[1.0, -0.5]).is_err());
        assert!(wrench_of(&ts, &[1.0]).is_err());
    }

    #[test]
    fn one_face_equal_firing_is_pure_force() {
        let layout = default_layout();
        let geom = CubeGeometry::new(0.5).unwrap();
        for face in 1..=6 {
            let ids: Vec<usize> = (1..=4).map(|c| thruster_id(face, c).unwrap()).collect();
            let w = wrench_of(&layout.select(&ids).unwrap(), &[0.25; 4]).unwrap();
            assert_relative_eq!(w.force, -geom.outward_normal(face), epsilon = 1e-15);
            assert_relative_eq!(w.torque, Vector3::zeros(), epsilon = 1e-15);
        }
    }

    #[test]
    fn opposite_face_couple_is_pure_torque() {
        // Two thrusters on +Y at z = +L/2 push -Y, two on -Y at z = -L/2 push
        // +Y. Each gives torque r x d with |r_z| = 0.25, so four at 1 N form a
        // pure 1 N m couple about X: 4 * 0.25 * 1 = 1.
        let layout = default_layout();
        let pick = |face: usize, z: f64| -> Vec<usize> {
            layout
                .thrusters
                .iter()
                .filter(|t| t.face == face && t.position.z == z)
                .map(|t| t.id)
                .collect()
        };
        let mut ids = pick(2, 0.25);
        ids.extend(pick(4, -0.25));
        assert_eq!(ids.len(), 4);
        let ts = layout.select(&ids).unwrap();
        let w = wrench_of(&ts, &[1.0; 4]).unwrap();
        // hand evaluation: (+Y face, r=(x,.25,.25), d=(0,-1,0)) -> r x d = (.25, 0, -x)
        // (-Y face, r=(x,-.25,-.25), d=(0,1,0)) -> r x d = (.25, 0, x); x terms cancel pairwise
        assert_relative_eq!(w.force, Vector3::zeros(), epsilon = 1e-15);
        assert_relative_eq!(w.torque, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn uniform_firing_cancels() {
        let layout = default_layout();
        let w = wrench_of(&layout.thrusters, &[0.7; 24]).unwrap();
        assert_relative_eq!(w.to_vector(), Vector6::zeros(), epsilon = 1e-14);
    }

    #[test]
    fn layout_json_round_trip() {
        let layout = default_layout();
        let text = layout.to_json();
        let back = Layout::from_json(&text).unwrap();
        assert_eq!(back, layout);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["angles"]["theta"].is_number());
        assert_eq!(v["thrusters"].as_array().unwrap().len(), 24);
        assert!(v["thrusters"][0]["position"].is_array());
    }

    #[test]
    fn every_cube_symmetry_permutes_the_default_layout() {
        let layout = default_layout();
        let syms = symmetry::cube_symmetries();
        assert_eq!(syms.len(), 48);
        for g in &syms {
            assert_relative_eq!(g.transpose() * g, Matrix3::identity());
            let perm = symmetry::id_permutation(&layout, g).expect("layout is symmetric");
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (1..=24).collect::<Vec<_>>());
        }
    }
}
