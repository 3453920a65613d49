//! Kinematic manipulation suite: a point end-effector and one sliding handle.
//!
//! Each object (window, drawer) has a single joint in `[0, 1]` that linearly
//! interpolates its handle between the closed and open positions. Engaging the
//! handle (positive actuation inside the grasp radius) drives the joint toward
//! the side the spec's goal lies on.

mod spec;

use rand::Rng;

pub use spec::{dist, norm, sub};
pub use spec::{
    module_specs, parse_task_spec, render_task_spec, EnvConstants, ModuleSpec, TaskName, TaskSpec,
    Vec3, DEFAULT_EPISODE_LENGTH, DEFAULT_SUCCESS_RADIUS,
};

use crate::error::{usage, Result};

pub const OBS_DIM: usize = 9;
pub const ACTION_DIM: usize = 4;

/// `[ee_pos, handle_pos, goal_pos]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

/// `(dx, dy, dz, actuation)` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action(pub [f64; ACTION_DIM]);

impl Action {
    pub fn zero() -> Self {
        Action([0.0; ACTION_DIM])
    }

    pub fn clipped(self) -> Self {
        let mut a = self.0;
        for v in &mut a {
            *v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        }
        Action(a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub ee_pos: Vec3,
    pub handle_pos: Vec3,
    pub joint_value: f64,
    pub goal_joint: f64,
    pub step_index: usize,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_state: Observation,
    /// Episode ended (success or time limit).
    pub done: bool,
    pub success: bool,
}

impl Transition {
    /// Whether the value of `next_state` should be cut from the bootstrap target.
    /// Success is always terminal; a time-limit end only when `timeout_terminal`.
    pub fn terminal(&self, timeout_terminal: bool) -> bool {
        self.success || (self.done && timeout_terminal)
    }
}

fn clip_box(p: Vec3, lo: Vec3, hi: Vec3) -> Vec3 {
    [
        p[0].clamp(lo[0], hi[0]),
        p[1].clamp(lo[1], hi[1]),
        p[2].clamp(lo[2], hi[2]),
    ]
}

pub fn observe(state: &EnvState, spec: &TaskSpec) -> Observation {
    let goal = spec.handle_at(state.goal_joint);
    let lim = spec.constants.obs_clip;
    let mut o = [0.0; OBS_DIM];
    o[..3].copy_from_slice(&state.ee_pos);
    o[3..6].copy_from_slice(&state.handle_pos);
    o[6..].copy_from_slice(&goal);
    for v in &mut o {
        *v = v.clamp(-lim, lim);
    }
    Observation(o)
}

/// Samples an initial state.
pub fn reset<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> (EnvState, Observation) {
    let c = &spec.constants;
    let half = 0.5 * c.start_cube_size;
    let mut ee = [0.0; 3];
    for (k, e) in ee.iter_mut().enumerate() {
        *e = c.start_center[k] + rng.random_range(-half..=half);
    }
    let jitter = if c.joint_jitter > 0.0 {
        rng.random_range(-c.joint_jitter..=c.joint_jitter)
    } else {
        0.0
    };
    let joint = (spec.initial_joint + jitter).clamp(0.0, 1.0);
    let handle = spec.handle_at(joint);
    if spec.name == TaskName::PullLever {
        ee = handle;
    }
    let state = EnvState {
        ee_pos: clip_box(ee, c.workspace_min, c.workspace_max),
        handle_pos: handle,
        joint_value: joint,
        goal_joint: spec.goal_joint,
        step_index: 0,
        done: false,
    };
    let obs = observe(&state, spec);
    (state, obs)
}

/// Whether the scope's goal is met in `state`.
pub fn success(state: &EnvState, spec: &TaskSpec) -> bool {
    let goal = spec.handle_at(state.goal_joint);
    let d = if spec.name == TaskName::Reach {
        dist(state.ee_pos, goal)
    } else {
        dist(state.handle_pos, goal)
    };
    d < spec.success_radius
}

/// Dense distance-shaped reward of being in `state`.
pub fn reward(state: &EnvState, _action: &Action, spec: &TaskSpec) -> f64 {
    let goal = spec.handle_at(state.goal_joint);
    match spec.name {
        TaskName::Reach => -dist(state.ee_pos, goal),
        TaskName::PullLever => -(state.joint_value - state.goal_joint).abs(),
        _ => {
            let c = &spec.constants;
            let bonus = if success(state, spec) {
                c.success_bonus
            } else {
                0.0
            };
            -dist(state.ee_pos, state.handle_pos)
                - c.joint_error_coef * (state.joint_value - state.goal_joint).abs()
                + bonus
        }
    }
}

/// Advances one step. Reward and success are evaluated on the resulting state.
pub fn step(state: &EnvState, action: &Action, spec: &TaskSpec) -> Result<(EnvState, Transition)> {
    if state.done || state.step_index >= spec.episode_length {
        return usage("step called on a finished episode");
    }
    let c = &spec.constants;
    let a = action.clipped();
    let before = observe(state, spec);
    let mut ee = state.ee_pos;
    for k in 0..3 {
        ee[k] += c.step_size * a.0[k];
    }
    let ee = clip_box(ee, c.workspace_min, c.workspace_max);
    let mut joint = state.joint_value;
    let drive = match spec.goal_joint.partial_cmp(&spec.initial_joint) {
        Some(std::cmp::Ordering::Greater) => 1.0,
        Some(std::cmp::Ordering::Less) => -1.0,
        _ => 0.0,
    };
    if a.0[3] > 0.0 && drive != 0.0 && dist(ee, state.handle_pos) <= c.grasp_radius {
        joint = (joint + drive * c.joint_gain * a.0[3]).clamp(0.0, 1.0);
    }
    let mut next = EnvState {
        ee_pos: ee,
        handle_pos: spec.handle_at(joint),
        joint_value: joint,
        goal_joint: state.goal_joint,
        step_index: state.step_index + 1,
        done: false,
    };
    let r = reward(&next, &a, spec);
    let ok = success(&next, spec);
    next.done = ok || next.step_index >= spec.episode_length;
    let t = Transition {
        state: before,
        action: a,
        reward: r,
        next_state: observe(&next, spec),
        done: next.done,
        success: ok,
    };
    Ok((next, t))
}

/// Hand-written controller: move onto the handle, then actuate while tracking it
/// toward the goal. Used as a solvability oracle.
pub fn scripted_action(state: &EnvState, spec: &TaskSpec) -> Action {
    let c = &spec.constants;
    let goal = spec.handle_at(state.goal_joint);
    let target = if spec.name == TaskName::Reach {
        goal
    } else {
        state.handle_pos
    };
    let to = sub(target, state.ee_pos);
    let engaged = spec.name != TaskName::Reach && norm(to) <= c.grasp_radius;
    let mut lead = [0.0; 3];
    if engaged {
        // follow the handle as it slides
        let ahead = sub(goal, state.handle_pos);
        let n = norm(ahead).max(1e-12);
        let v = (c.joint_gain * spec.travel()).min(n);
        lead = [ahead[0] / n * v, ahead[1] / n * v, ahead[2] / n * v];
    }
    let mut a = [0.0; ACTION_DIM];
    for k in 0..3 {
        a[k] = ((to[k] + lead[k]) / c.step_size).clamp(-1.0, 1.0);
    }
    a[3] = if engaged { 1.0 } else { -1.0 };
    Action(a)
}
