use hasac_core::env::{self, dist, Action, EnvState, TaskName, TaskSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn any_scope() -> impl Strategy<Value = TaskSpec> {
    (0..TaskName::ALL.len(), 0..3usize).prop_map(|(i, m)| {
        let task = TaskSpec::standard(TaskName::ALL[i]);
        match (task.is_module(), m) {
            (false, 1 | 2) => task.module_sequence[m - 1].clone(),
            _ => task,
        }
    })
}

fn any_action() -> impl Strategy<Value = Action> {
    prop::array::uniform4(-1.5f64..1.5).prop_map(Action)
}

fn on_segment(spec: &TaskSpec, s: &EnvState) -> bool {
    dist(s.handle_pos, spec.handle_at(s.joint_value)) < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rollouts_stay_in_bounds(spec in any_scope(), seed in any::<u64>(), actions in prop::collection::vec(any_action(), 1..60)) {
        let c = spec.constants.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, _) = env::reset(&spec, &mut rng);
        for a in &actions {
            if s.done { break; }
            let (n, t) = env::step(&s, a, &spec).unwrap();
            for k in 0..3 {
                prop_assert!(n.ee_pos[k] >= c.workspace_min[k] && n.ee_pos[k] <= c.workspace_max[k]);
            }
            prop_assert!((0.0..=1.0).contains(&n.joint_value));
            prop_assert!(on_segment(&spec, &n));
            prop_assert!(t.action.0.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(t.reward.is_finite());
            prop_assert!(t.state.0.iter().chain(&t.next_state.0).all(|v| v.is_finite()));
            if t.success {
                // success implies the joint is near the goal (the reach module never moves it)
                let travel = spec.travel();
                prop_assert!(spec.name == TaskName::Reach
                    || (n.joint_value - n.goal_joint).abs() < spec.success_radius / travel);
                prop_assert!(t.done);
            }
            prop_assert_eq!(n.step_index, s.step_index + 1);
            s = n;
        }
    }

    #[test]
    fn step_is_a_pure_function(spec in any_scope(), seed in any::<u64>(), a in any_action()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, _) = env::reset(&spec, &mut rng);
        let x = env::step(&s, &a, &spec).unwrap();
        let y = env::step(&s, &a, &spec).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn reset_is_seed_deterministic(spec in any_scope(), seed in any::<u64>()) {
        let a = env::reset(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = env::reset(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn reach_reward_improves_toward_goal(seed in any::<u64>(), frac in 0.05f64..0.95) {
        let spec = TaskSpec::standard(TaskName::OpenWindow).module_sequence[0].clone();
        let (s, _) = env::reset(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let goal = spec.handle_at(s.goal_joint);
        let closer = EnvState {
            ee_pos: std::array::from_fn(|k| s.ee_pos[k] + frac * (goal[k] - s.ee_pos[k])),
            ..s
        };
        prop_assert!(env::reward(&closer, &Action::zero(), &spec) > env::reward(&s, &Action::zero(), &spec));
    }

    #[test]
    fn task_reward_improves_with_joint_progress(seed in any::<u64>(), name in 0..4usize, delta in 0.01f64..0.3) {
        let spec = TaskSpec::standard(TaskName::TASKS[name]);
        let (s, _) = env::reset(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let toward = (s.goal_joint - s.joint_value).signum();
        let j = (s.joint_value + toward * delta).clamp(0.0, 1.0);
        // keep the end effector at the same offset from the handle
        let h = spec.handle_at(j);
        let moved = EnvState {
            ee_pos: std::array::from_fn(|k| s.ee_pos[k] + h[k] - s.handle_pos[k]),
            handle_pos: h,
            joint_value: j,
            ..s
        };
        prop_assert!(env::reward(&moved, &Action::zero(), &spec) > env::reward(&s, &Action::zero(), &spec) - 1e-12);
    }
}

#[test]
fn reset_positions_fill_the_start_cube_uniformly() {
    // chi-square over the 8 octants of the start cube
    let spec = TaskSpec::standard(TaskName::OpenDrawer);
    let c = &spec.constants;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 8000;
    let mut counts = [0usize; 8];
    for _ in 0..n {
        let (s, _) = env::reset(&spec, &mut rng);
        let mut idx = 0;
        for k in 0..3 {
            let off = s.ee_pos[k] - c.start_center[k];
            assert!(off.abs() <= 0.5 * c.start_cube_size + 1e-12);
            if off > 0.0 {
                idx |= 1 << k;
            }
        }
        counts[idx] += 1;
    }
    let e = n as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    // 7 degrees of freedom, p = 0.001
    assert!(chi2 < 24.32, "chi2 = {chi2}, counts = {counts:?}");
}

#[test]
fn reset_joint_jitter_is_bounded_and_nonzero() {
    for name in TaskName::TASKS {
        let spec = TaskSpec::standard(name);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut moved = false;
        for _ in 0..200 {
            let (s, _) = env::reset(&spec, &mut rng);
            assert!(
                (s.joint_value - spec.initial_joint).abs() <= spec.constants.joint_jitter + 1e-15
            );
            moved |= s.joint_value != spec.initial_joint;
        }
        assert!(moved, "{name}: joint never jittered");
    }
}

#[test]
fn pull_lever_starts_at_the_handle() {
    let spec = TaskSpec::standard(TaskName::CloseDrawer).module_sequence[1].clone();
    let (s, obs) = env::reset(&spec, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(s.ee_pos, s.handle_pos);
    assert_eq!(&obs.0[..3], &obs.0[3..6]);
}

#[test]
fn episodes_time_out_at_the_horizon() {
    let spec = TaskSpec::standard(TaskName::OpenWindow);
    let (mut s, _) = env::reset(&spec, &mut ChaCha8Rng::seed_from_u64(0));
    let mut steps = 0;
    while !s.done {
        let (n, t) = env::step(&s, &Action::zero(), &spec).unwrap();
        assert!(!t.success);
        s = n;
        steps += 1;
    }
    assert_eq!(steps, spec.episode_length);
}
