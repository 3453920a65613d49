use std::fmt;
use std::str::FromStr;

use crate::error::{config, usage, Error, Result};

pub type Vec3 = [f64; 3];

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

pub(crate) fn lerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Tasks and modules of the manipulation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskName {
    Reach,
    PullLever,
    OpenWindow,
    CloseWindow,
    OpenDrawer,
    CloseDrawer,
}

impl TaskName {
    pub const ALL: [TaskName; 6] = [
        TaskName::Reach,
        TaskName::PullLever,
        TaskName::OpenWindow,
        TaskName::CloseWindow,
        TaskName::OpenDrawer,
        TaskName::CloseDrawer,
    ];

    pub const TASKS: [TaskName; 4] = [
        TaskName::OpenWindow,
        TaskName::CloseWindow,
        TaskName::OpenDrawer,
        TaskName::CloseDrawer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Reach => "reach",
            TaskName::PullLever => "pull-lever",
            TaskName::OpenWindow => "open-window",
            TaskName::CloseWindow => "close-window",
            TaskName::OpenDrawer => "open-drawer",
            TaskName::CloseDrawer => "close-drawer",
        }
    }

    pub fn is_module(self) -> bool {
        matches!(self, TaskName::Reach | TaskName::PullLever)
    }

    fn is_window(self) -> bool {
        matches!(self, TaskName::OpenWindow | TaskName::CloseWindow)
    }

    fn opens(self) -> bool {
        matches!(self, TaskName::OpenWindow | TaskName::OpenDrawer)
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

/// Shared kinematics, shaping and bounds. Every field can be overridden from a
/// task config file.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConstants {
    /// Maximum end-effector translation per step (m).
    pub step_size: f64,
    /// Joint displacement per step at full actuation.
    pub joint_gain: f64,
    pub grasp_radius: f64,
    /// Weight `c` of the joint error in the task reward.
    pub joint_error_coef: f64,
    /// Bonus `B` paid on success in the task reward.
    pub success_bonus: f64,
    pub workspace_min: Vec3,
    pub workspace_max: Vec3,
    pub start_center: Vec3,
    /// Edge length of the start cube (m).
    pub start_cube_size: f64,
    pub joint_jitter: f64,
    pub obs_clip: f64,
}

impl Default for EnvConstants {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            joint_gain: 0.04,
            grasp_radius: 0.05,
            joint_error_coef: 2.0,
            success_bonus: 10.0,
            workspace_min: [-0.5, 0.2, 0.0],
            workspace_max: [0.5, 1.0, 0.5],
            start_center: [0.0, 0.5, 0.2],
            start_cube_size: 0.2,
            joint_jitter: 0.02,
            obs_clip: 200.0,
        }
    }
}

/// Declarative description of a task or module.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: TaskName,
    /// Task a module was derived from; `None` for tasks and free-standing modules.
    pub parent: Option<TaskName>,
    pub closed_handle_pos: Vec3,
    pub open_handle_pos: Vec3,
    pub initial_joint: f64,
    pub goal_joint: f64,
    pub episode_length: usize,
    pub success_radius: f64,
    pub constants: EnvConstants,
    pub module_sequence: Vec<ModuleSpec>,
}

/// Modules are task specs with a module name and no sub-modules.
pub type ModuleSpec = TaskSpec;

pub const DEFAULT_EPISODE_LENGTH: usize = 150;
pub const DEFAULT_SUCCESS_RADIUS: f64 = 0.08;

const WINDOW_CLOSED: Vec3 = [-0.1, 0.85, 0.3];
const WINDOW_OPEN: Vec3 = [0.1, 0.85, 0.3];
const DRAWER_CLOSED: Vec3 = [0.0, 0.9, 0.1];
const DRAWER_OPEN: Vec3 = [0.0, 0.7, 0.1];

impl TaskSpec {
    /// Default spec for a name. Free-standing modules use the window geometry
    /// (reach the closed handle, pull it open).
    pub fn standard(name: TaskName) -> Self {
        let (closed, open) = match name {
            TaskName::OpenDrawer | TaskName::CloseDrawer => (DRAWER_CLOSED, DRAWER_OPEN),
            _ => (WINDOW_CLOSED, WINDOW_OPEN),
        };
        let (initial_joint, goal_joint) = match name {
            TaskName::Reach => (0.0, 0.0),
            TaskName::PullLever => (0.0, 1.0),
            n if n.opens() => (0.0, 1.0),
            _ => (1.0, 0.0),
        };
        let mut spec = Self {
            name,
            parent: None,
            closed_handle_pos: closed,
            open_handle_pos: open,
            initial_joint,
            goal_joint,
            episode_length: DEFAULT_EPISODE_LENGTH,
            success_radius: DEFAULT_SUCCESS_RADIUS,
            constants: EnvConstants::default(),
            module_sequence: Vec::new(),
        };
        debug_assert!(!name.is_window() || closed == WINDOW_CLOSED);
        spec.rebuild_modules();
        spec
    }

    /// Regenerates `module_sequence` from the task geometry.
    pub fn rebuild_modules(&mut self) {
        self.module_sequence = if self.name.is_module() {
            Vec::new()
        } else {
            let mut reach = self.derived_module(TaskName::Reach);
            reach.goal_joint = self.initial_joint;
            let pull = self.derived_module(TaskName::PullLever);
            vec![reach, pull]
        };
    }

    fn derived_module(&self, name: TaskName) -> ModuleSpec {
        Self {
            name,
            parent: Some(self.name),
            module_sequence: Vec::new(),
            ..self.clone()
        }
    }

    /// Unit slide direction from closed to open.
    pub fn axis(&self) -> Vec3 {
        let d = sub(self.open_handle_pos, self.closed_handle_pos);
        let n = norm(d);
        [d[0] / n, d[1] / n, d[2] / n]
    }

    pub fn travel(&self) -> f64 {
        dist(self.open_handle_pos, self.closed_handle_pos)
    }

    pub fn handle_at(&self, joint: f64) -> Vec3 {
        lerp(self.closed_handle_pos, self.open_handle_pos, joint)
    }

    pub fn goal_pos(&self) -> Vec3 {
        self.handle_at(self.goal_joint)
    }

    /// Scope label: `open-window` for a task, `open-window/reach` for a derived module.
    pub fn label(&self) -> String {
        match self.parent {
            Some(p) => format!("{p}/{}", self.name),
            None => self.name.to_string(),
        }
    }

    pub fn is_module(&self) -> bool {
        self.name.is_module()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.constants;
        let unit = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                config(format!("{what} = {v} outside [0, 1]"))
            }
        };
        unit(self.initial_joint, "initial_joint")?;
        unit(self.goal_joint, "goal_joint")?;
        if self.episode_length == 0 {
            return config("episode_length must be positive");
        }
        if self.travel() <= 0.0 || !self.travel().is_finite() {
            return config("open and closed handle positions must differ");
        }
        let positive = [
            ("success_radius", self.success_radius),
            ("step_size", c.step_size),
            ("joint_gain", c.joint_gain),
            ("grasp_radius", c.grasp_radius),
            ("start_cube_size", c.start_cube_size),
            ("obs_clip", c.obs_clip),
        ];
        for (what, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return config(format!("{what} must be positive, got {v}"));
            }
        }
        if c.joint_jitter < 0.0 || c.joint_error_coef < 0.0 {
            return config("joint_jitter and joint_error_coef must be nonnegative");
        }
        for k in 0..3 {
            if c.workspace_min[k] >= c.workspace_max[k] {
                return config(format!("workspace box is empty along axis {k}"));
            }
        }
        if !self.is_module() {
            let opening = self.goal_joint > self.initial_joint;
            if matches!(self.name, TaskName::OpenWindow | TaskName::OpenDrawer) != opening {
                return config(format!(
                    "{} must move the joint {}",
                    self.name,
                    if self.name.opens() { "open" } else { "closed" }
                ));
            }
        }
        Ok(())
    }
}

/// Ordered module decomposition of a full task.
pub fn module_specs(task: &TaskSpec) -> Result<Vec<ModuleSpec>> {
    if task.is_module() {
        return usage(format!("{} is a module and has no modules", task.name));
    }
    Ok(task.module_sequence.clone())
}

fn parse_vec3(key: &str, v: &str) -> Result<Vec3> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return config(format!("{key}: expected x,y,z, got `{v}`"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(key, p)?;
    }
    Ok(out)
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: `{v}` is not a finite number")))
}

/// Parses `key=value` lines (blank lines and `#` comments ignored). `name` is
/// required and selects the defaults every other key overrides.
pub fn parse_task_spec(text: &str) -> Result<TaskSpec> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let name: TaskName = pairs
        .iter()
        .find(|(k, _)| k == "name")
        .ok_or_else(|| Error::Config("task config needs a `name` key".into()))?
        .1
        .parse()?;
    let mut spec = TaskSpec::standard(name);
    let mut axis = None;
    for (k, v) in &pairs {
        let c = &mut spec.constants;
        match k.as_str() {
            "name" => {}
            "axis" => axis = Some(parse_vec3(k, v)?),
            "closed_handle_pos" => spec.closed_handle_pos = parse_vec3(k, v)?,
            "open_handle_pos" => spec.open_handle_pos = parse_vec3(k, v)?,
            "initial_joint" => spec.initial_joint = parse_f64(k, v)?,
            "goal_joint" => spec.goal_joint = parse_f64(k, v)?,
            "episode_length" => {
                spec.episode_length = v
                    .parse()
                    .map_err(|_| Error::Config(format!("episode_length: `{v}`")))?
            }
            "success_radius" => spec.success_radius = parse_f64(k, v)?,
            "step_size" => c.step_size = parse_f64(k, v)?,
            "joint_gain" => c.joint_gain = parse_f64(k, v)?,
            "grasp_radius" => c.grasp_radius = parse_f64(k, v)?,
            "joint_error_coef" => c.joint_error_coef = parse_f64(k, v)?,
            "success_bonus" => c.success_bonus = parse_f64(k, v)?,
            "workspace_min" => c.workspace_min = parse_vec3(k, v)?,
            "workspace_max" => c.workspace_max = parse_vec3(k, v)?,
            "start_center" => c.start_center = parse_vec3(k, v)?,
            "start_cube_size" => c.start_cube_size = parse_f64(k, v)?,
            "joint_jitter" => c.joint_jitter = parse_f64(k, v)?,
            "obs_clip" => c.obs_clip = parse_f64(k, v)?,
            other => return config(format!("unknown task config key `{other}`")),
        }
    }
    spec.validate()?;
    if let Some(a) = axis {
        let derived = spec.axis();
        let an = norm(a);
        if an == 0.0 || (0..3).any(|i| (a[i] / an - derived[i]).abs() > 1e-9) {
            return config(format!(
                "axis {a:?} disagrees with handle positions (direction {derived:?})"
            ));
        }
    }
    spec.rebuild_modules();
    Ok(spec)
}

/// Renders a spec in the format accepted by [`parse_task_spec`].
pub fn render_task_spec(spec: &TaskSpec) -> String {
    let v3 = |v: Vec3| format!("{},{},{}", v[0], v[1], v[2]);
    let c = &spec.constants;
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    line("name", spec.name.to_string());
    line("axis", v3(spec.axis()));
    line("closed_handle_pos", v3(spec.closed_handle_pos));
    line("open_handle_pos", v3(spec.open_handle_pos));
    line("initial_joint", spec.initial_joint.to_string());
    line("goal_joint", spec.goal_joint.to_string());
    line("episode_length", spec.episode_length.to_string());
    line("success_radius", spec.success_radius.to_string());
    line("step_size", c.step_size.to_string());
    line("joint_gain", c.joint_gain.to_string());
    line("grasp_radius", c.grasp_radius.to_string());
    line("joint_error_coef", c.joint_error_coef.to_string());
    line("success_bonus", c.success_bonus.to_string());
    line("workspace_min", v3(c.workspace_min));
    line("workspace_max", v3(c.workspace_max));
    line("start_center", v3(c.start_center));
    line("start_cube_size", c.start_cube_size.to_string());
    line("joint_jitter", c.joint_jitter.to_string());
    line("obs_clip", c.obs_clip.to_string());
    s
}
