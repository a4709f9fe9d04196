//! Dual six-joint manipulators with ghost (preview-before-commit) support.
//!
//! Collision checks use a chain of bounding spheres per arm. Occupied grid
//! cells are treated as columns from the floor up to [`OBSTACLE_HEIGHT_M`].

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::grid::{Cell, GridMap};
use super::Pose;

pub type Joints = [f64; 6];

pub const JOINT_LIMIT: f64 = PI;
pub const LINK_RADIUS_M: f64 = 0.08;
pub const GHOST_STEPS: usize = 20;
pub const OBSTACLE_HEIGHT_M: f64 = 2.0;

/// Chassis deck: x, y half extents and top height in the platform frame.
const DECK: (f64, f64, f64) = (0.5, 0.35, 0.45);
/// Arm mounting points in the platform frame.
const MOUNTS: [(f64, f64, f64); 2] = [(0.15, 0.12, DECK.2), (0.15, -0.12, DECK.2)];
const SHOULDER_HEIGHT: f64 = 0.089;
const UPPER_ARM: f64 = 0.425;
const FOREARM: f64 = 0.392;
const WRIST: f64 = 0.0947;
const TOOL: f64 = 0.0823;

pub const HOME: Joints = [0.0, FRAC_PI_2, -FRAC_PI_2, 0.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostFlags {
    pub joint_limit_violation: bool,
    pub self_collision: bool,
    pub environment_collision: bool,
}

impl GhostFlags {
    pub fn any(&self) -> bool {
        self.joint_limit_violation || self.self_collision || self.environment_collision
    }

    fn merge(&mut self, other: GhostFlags) {
        self.joint_limit_violation |= other.joint_limit_violation;
        self.self_collision |= other.self_collision;
        self.environment_collision |= other.environment_collision;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostPreview {
    pub arm: usize,
    pub target: Joints,
    pub trajectory: Vec<Joints>,
    pub flags: GhostFlags,
}

/// Sphere centres of one arm in the platform frame, base to tool.
pub fn arm_spheres(arm: usize, q: &Joints) -> Vec<[f64; 3]> {
    let (mx, my, mz) = MOUNTS[arm];
    let (sy, cy) = q[0].sin_cos();
    // planar chain in the arm's vertical plane: (reach, height)
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0), (0.0, SHOULDER_HEIGHT)];
    let mut angle = q[1];
    let mut cur = (0.0, SHOULDER_HEIGHT);
    for (i, len) in [UPPER_ARM, FOREARM, WRIST, TOOL].into_iter().enumerate() {
        if i == 1 {
            angle += q[2];
        } else if i == 2 {
            angle += q[3];
        }
        let next = (cur.0 + len * angle.cos(), cur.1 + len * angle.sin());
        if len > 0.2 {
            pts.push(((cur.0 + next.0) / 2.0, (cur.1 + next.1) / 2.0));
        }
        pts.push(next);
        cur = next;
    }
    pts.into_iter()
        .map(|(r, h)| [mx + r * cy, my + r * sy, mz + h])
        .collect()
}

fn to_world(pose: &Pose, p: [f64; 3]) -> [f64; 3] {
    let (s, c) = pose.theta.sin_cos();
    [
        pose.x + c * p[0] - s * p[1],
        pose.y + s * p[0] + c * p[1],
        p[2],
    ]
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn box_distance(p: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let mut d2 = 0.0;
    for i in 0..3 {
        let v = if p[i] < lo[i] {
            lo[i] - p[i]
        } else if p[i] > hi[i] {
            p[i] - hi[i]
        } else {
            0.0
        };
        d2 += v * v;
    }
    d2.sqrt()
}

pub fn exceeds_limits(q: &Joints) -> bool {
    q.iter().any(|v| !v.is_finite() || v.abs() > JOINT_LIMIT)
}

/// Self-collision: inter-arm sphere overlap, or an arm sphere (beyond the
/// shoulder) intersecting the chassis deck.
pub fn self_collides(arm: usize, q: &Joints, other: &Joints) -> bool {
    let mine = arm_spheres(arm, q);
    let theirs = arm_spheres(1 - arm, other);
    let touch = (2.0 * LINK_RADIUS_M).powi(2);
    if mine.iter().any(|a| theirs.iter().any(|b| dist2(*a, *b) < touch)) {
        return true;
    }
    let lo = [-DECK.0, -DECK.1, 0.0];
    let hi = [DECK.0, DECK.1, DECK.2];
    mine.iter()
        .skip(2)
        .any(|p| box_distance(*p, lo, hi) < LINK_RADIUS_M)
}

/// True when any sphere of the arm overlaps an occupied cell column.
pub fn environment_collides(arm: usize, q: &Joints, pose: &Pose, map: &GridMap) -> bool {
    let res = map.resolution_m;
    for p in arm_spheres(arm, q) {
        let w = to_world(pose, p);
        let lo = map.cell_at(w[0] - LINK_RADIUS_M, w[1] - LINK_RADIUS_M);
        let hi = map.cell_at(w[0] + LINK_RADIUS_M, w[1] + LINK_RADIUS_M);
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                if !map.is_occupied(Cell(cx, cy)) {
                    continue;
                }
                let clo = [cx as f64 * res, cy as f64 * res, 0.0];
                let chi = [(cx + 1) as f64 * res, (cy + 1) as f64 * res, OBSTACLE_HEIGHT_M];
                if box_distance(w, clo, chi) < LINK_RADIUS_M {
                    return true;
                }
            }
        }
    }
    false
}

/// Joint-space linear interpolation from `from` to `to` in [`GHOST_STEPS`] steps.
pub fn interpolate(from: &Joints, to: &Joints) -> Vec<Joints> {
    (1..=GHOST_STEPS)
        .map(|k| {
            let s = k as f64 / GHOST_STEPS as f64;
            let mut q = [0.0; 6];
            for i in 0..6 {
                q[i] = from[i] + (to[i] - from[i]) * s;
            }
            q
        })
        .collect()
}

/// Evaluates every pose of a ghost trajectory.
pub fn check_trajectory(
    arm: usize,
    trajectory: &[Joints],
    other: &Joints,
    pose: &Pose,
    map: &GridMap,
) -> GhostFlags {
    let mut flags = GhostFlags::default();
    for q in trajectory {
        let joint_limit_violation = exceeds_limits(q);
        flags.merge(GhostFlags {
            joint_limit_violation,
            // geometry of out-of-range poses is still checked
            self_collision: self_collides(arm, q, other),
            environment_collision: environment_collides(arm, q, pose, map),
        });
    }
    flags
}
