//! Deterministic stepped simulation of the inspection platform.
//!
//! The platform follows a planned cell path at a commanded speed while
//! battery, motor thermal and compute load models evolve at a fixed step.
//! Scheduled fault injections modify those models at exact sim-times.

pub mod arms;
pub mod grid;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::reasoner::TelemetryFrame;
pub use arms::{GhostFlags, GhostPreview, Joints};
pub use grid::{plan_path, Cell, GridMap, Path};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("cell {0:?} is occupied or inside the inflation radius")]
    CellOccupied(Cell),
    #[error("no path from {from:?} to {to:?}")]
    Unreachable { from: Cell, to: Cell },
    #[error("step duration must be positive")]
    ZeroStep,
    #[error("injection at {at} ms is before current sim-time {now} ms")]
    PastTimestamp { at: u64, now: u64 },
    #[error("injection magnitude must be positive and finite")]
    InvalidMagnitude,
    #[error("arm index {0} is not 0 or 1")]
    InvalidArm(usize),
    #[error("ghost rejected: {0:?}")]
    GhostRejected(GhostFlags),
    #[error("no ghost pending")]
    NoGhost,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformState {
    pub pose: Pose,
    pub soc: f64,
    pub motor_temps: [f64; 2],
    pub cpu: f64,
    pub ram: f64,
    pub arms: [Joints; 2],
    pub pan_tilt: (f64, f64),
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveCommand {
    Drive,
    Idle,
    ScanPose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "kebab-case")]
pub enum FaultEffect {
    MotorHeatRate,
    CpuLoad,
    RamLoad,
    BatteryDrainRate,
    ObstacleAppear { cell: Cell },
}

/// A scheduled perturbation of the platform models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub at_ms: u64,
    #[serde(flatten)]
    pub effect: FaultEffect,
    pub magnitude: f64,
}

/// Model constants. Defaults are documented in the README.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub speed_mps: f64,
    /// Motor load per m/s of platform speed.
    pub load_per_mps: f64,
    pub drain_idle: f64,
    pub drain_per_mps: f64,
    pub drain_per_load: f64,
    pub ambient_c: f64,
    pub thermal_gain_c: f64,
    pub thermal_tau_s: f64,
    pub cpu_base: f64,
    pub ram_base: f64,
    pub noise_sigma: f64,
    pub inflation_cells: i32,
    pub initial_soc: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            speed_mps: 1.0,
            load_per_mps: 0.5,
            drain_idle: 0.001,
            drain_per_mps: 0.01,
            drain_per_load: 0.005,
            ambient_c: 25.0,
            thermal_gain_c: 60.0,
            thermal_tau_s: 20.0,
            cpu_base: 35.0,
            ram_base: 40.0,
            noise_sigma: 1.0,
            inflation_cells: 1,
            initial_soc: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub frame: TelemetryFrame,
    /// Set when motion halted for an obstacle inside the stop distance.
    pub collision: Option<Cell>,
    /// True once the active path has been fully traversed.
    pub arrived: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Modifiers {
    heat_rate: f64,
    drain_rate: f64,
    cpu_delta: f64,
    ram_delta: f64,
}

/// Single-owner platform simulator.
#[derive(Debug, Clone)]
pub struct PlatformSim {
    map: GridMap,
    config: SimConfig,
    state: PlatformState,
    t_ms: u64,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    path: VecDeque<Cell>,
    goal: Option<Cell>,
    pending: Vec<FaultInjection>,
    mods: Modifiers,
    ghosts: [Option<GhostPreview>; 2],
}

impl PlatformSim {
    pub fn new(map: GridMap, config: SimConfig, seed: u64) -> Self {
        let (x, y) = map.center(map.base);
        let state = PlatformState {
            pose: Pose { x, y, theta: 0.0 },
            soc: config.initial_soc.clamp(0.0, 100.0),
            motor_temps: [config.ambient_c; 2],
            cpu: config.cpu_base,
            ram: config.ram_base,
            arms: [arms::HOME; 2],
            pan_tilt: (0.0, 0.0),
            speed: 0.0,
        };
        Self {
            noise: Normal::new(0.0, config.noise_sigma.max(0.0)).expect("finite sigma"),
            map,
            config,
            state,
            t_ms: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            path: VecDeque::new(),
            goal: None,
            pending: Vec::new(),
            mods: Modifiers {
                heat_rate: 1.0,
                drain_rate: 1.0,
                cpu_delta: 0.0,
                ram_delta: 0.0,
            },
            ghosts: [None, None],
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.t_ms
    }

    pub fn state(&self) -> &PlatformState {
        &self.state
    }

    pub fn state_mut_for_test(&mut self) -> &mut PlatformState {
        &mut self.state
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn current_cell(&self) -> Cell {
        self.map.cell_at(self.state.pose.x, self.state.pose.y)
    }

    pub fn remaining_path(&self) -> impl Iterator<Item = &Cell> {
        self.path.iter()
    }

    /// Plans from the current cell to `goal` and makes it the active path.
    pub fn set_goal(&mut self, goal: Cell) -> Result<Path, SimError> {
        let path = plan_path(&self.map, self.current_cell(), goal, self.config.inflation_cells)?;
        self.path = path.cells.iter().skip(1).copied().collect();
        self.goal = Some(goal);
        Ok(path)
    }

    /// Replans toward the active goal, e.g. after an obstacle appeared.
    pub fn replan(&mut self) -> Result<Option<Path>, SimError> {
        match self.goal {
            Some(g) => self.set_goal(g).map(Some),
            None => Ok(None),
        }
    }

    pub fn clear_goal(&mut self) {
        self.path.clear();
        self.goal = None;
    }

    /// Schedules a fault injection.
    pub fn inject(&mut self, f: FaultInjection) -> Result<(), SimError> {
        if f.at_ms < self.t_ms {
            return Err(SimError::PastTimestamp {
                at: f.at_ms,
                now: self.t_ms,
            });
        }
        if !(f.magnitude > 0.0 && f.magnitude.is_finite()) {
            return Err(SimError::InvalidMagnitude);
        }
        // stable insert keeps declaration order among equal timestamps
        let idx = self.pending.partition_point(|p| p.at_ms <= f.at_ms);
        self.pending.insert(idx, f);
        Ok(())
    }

    fn apply_due(&mut self) {
        let due = self.pending.partition_point(|p| p.at_ms <= self.t_ms);
        for f in self.pending.drain(..due).collect::<Vec<_>>() {
            match f.effect {
                FaultEffect::MotorHeatRate => self.mods.heat_rate *= f.magnitude,
                FaultEffect::BatteryDrainRate => self.mods.drain_rate *= f.magnitude,
                FaultEffect::CpuLoad => self.mods.cpu_delta += f.magnitude,
                FaultEffect::RamLoad => self.mods.ram_delta += f.magnitude,
                FaultEffect::ObstacleAppear { cell } => {
                    // an obstacle cannot spawn under the platform itself
                    if self.map.in_bounds(cell) && cell != self.current_cell() {
                        self.map.occupied.insert(cell);
                    }
                }
            }
        }
    }

    /// Advances the simulation by `dt_ms` and returns the new telemetry.
    pub fn step(&mut self, dt_ms: u64, command: DriveCommand) -> Result<StepOutcome, SimError> {
        if dt_ms == 0 {
            return Err(SimError::ZeroStep);
        }
        self.apply_due();
        let dt = dt_ms as f64 / 1000.0;

        let mut collision = None;
        let mut travelled = 0.0;
        if command == DriveCommand::Drive {
            let mut budget = self.config.speed_mps * dt;
            while budget > 1e-12 {
                let Some(&next) = self.path.front() else { break };
                if self.map.is_occupied(next) {
                    collision = Some(next);
                    break;
                }
                let (tx, ty) = self.map.center(next);
                let (dx, dy) = (tx - self.state.pose.x, ty - self.state.pose.y);
                let d = dx.hypot(dy);
                if d > 1e-12 {
                    self.state.pose.theta = dy.atan2(dx);
                }
                if d <= budget {
                    self.state.pose.x = tx;
                    self.state.pose.y = ty;
                    budget -= d;
                    travelled += d;
                    self.path.pop_front();
                } else {
                    self.state.pose.x += dx / d * budget;
                    self.state.pose.y += dy / d * budget;
                    travelled += budget;
                    budget = 0.0;
                }
            }
        }
        if command == DriveCommand::ScanPose {
            self.state.pan_tilt = (0.0, -0.35);
        }
        let speed = travelled / dt;
        self.state.speed = speed;

        let c = &self.config;
        let load = c.load_per_mps * speed;
        let motor_load_sum = load * self.state.motor_temps.len() as f64;
        let drain = (c.drain_idle + c.drain_per_mps * speed + c.drain_per_load * motor_load_sum)
            * self.mods.drain_rate;
        self.state.soc = (self.state.soc - drain * dt).max(0.0);

        let target = c.ambient_c + c.thermal_gain_c * load * self.mods.heat_rate;
        let alpha = 1.0 - (-dt / c.thermal_tau_s).exp();
        for t in &mut self.state.motor_temps {
            *t += (target - *t) * alpha;
        }

        let cpu_noise = self.noise.sample(&mut self.rng);
        let ram_noise = self.noise.sample(&mut self.rng);
        self.state.cpu = (c.cpu_base + self.mods.cpu_delta + cpu_noise).clamp(0.0, 100.0);
        self.state.ram = (c.ram_base + self.mods.ram_delta + ram_noise).clamp(0.0, 100.0);

        self.t_ms += dt_ms;
        let arrived = self.goal.is_some() && self.path.is_empty();
        Ok(StepOutcome {
            frame: self.frame(load),
            collision,
            arrived,
        })
    }

    fn frame(&self, load: f64) -> TelemetryFrame {
        let s = &self.state;
        let temp = s.motor_temps.iter().copied().fold(f64::MIN, f64::max);
        TelemetryFrame::new(self.t_ms)
            .with("battery.soc", s.soc)
            .with("motor.temperature", temp)
            .with("motor.current", 2.0 + 20.0 * load)
            .with("compute.cpu", s.cpu)
            .with("compute.ram", s.ram)
            .with("platform.speed", s.speed)
    }

    /// Stores a preview target for `arm` and reports its trajectory and flags.
    pub fn set_ghost(&mut self, arm: usize, joints: Joints) -> Result<GhostPreview, SimError> {
        if arm > 1 {
            return Err(SimError::InvalidArm(arm));
        }
        let preview = self.preview(arm, joints);
        self.ghosts[arm] = Some(preview.clone());
        Ok(preview)
    }

    fn preview(&self, arm: usize, joints: Joints) -> GhostPreview {
        let trajectory = arms::interpolate(&self.state.arms[arm], &joints);
        let other = self.ghosts[1 - arm]
            .as_ref()
            .map(|g| g.target)
            .unwrap_or(self.state.arms[1 - arm]);
        let flags = arms::check_trajectory(arm, &trajectory, &other, &self.state.pose, &self.map);
        GhostPreview {
            arm,
            target: joints,
            trajectory,
            flags,
        }
    }

    pub fn ghost(&self, arm: usize) -> Option<&GhostPreview> {
        self.ghosts.get(arm).and_then(|g| g.as_ref())
    }

    /// Applies all pending ghosts if none is flagged. On rejection the
    /// committed arms are untouched and the ghosts stay pending.
    pub fn commit_ghost(&mut self) -> Result<[Joints; 2], SimError> {
        if self.ghosts.iter().all(Option::is_none) {
            return Err(SimError::NoGhost);
        }
        // flags are re-evaluated against the current pose and map
        let mut flags = GhostFlags::default();
        for arm in 0..2 {
            if let Some(g) = &self.ghosts[arm] {
                let f = self.preview(arm, g.target).flags;
                flags.joint_limit_violation |= f.joint_limit_violation;
                flags.self_collision |= f.self_collision;
                flags.environment_collision |= f.environment_collision;
            }
        }
        if flags.any() {
            return Err(SimError::GhostRejected(flags));
        }
        for arm in 0..2 {
            if let Some(g) = self.ghosts[arm].take() {
                self.state.arms[arm] = g.target;
            }
        }
        Ok(self.state.arms)
    }

    pub fn discard_ghosts(&mut self) {
        self.ghosts = [None, None];
    }
}
