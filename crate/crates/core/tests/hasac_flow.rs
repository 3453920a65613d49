use hasac_core::checkpoint::Checkpoint;
use hasac_core::env::{TaskName, TaskSpec};
use hasac_core::hasac::{
    module_checkpoint_path, parse_curriculum, run_hasac, run_sac, transfer_init, CurriculumSpec,
    HyperActor,
};
use hasac_core::nn::{AdamState, Policy};
use hasac_core::rng::SeedTree;
use hasac_core::sac::init_policy;
use hasac_core::train::{RoutingSpec, TrainConfig};

fn tiny_cfg() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.hp.hidden = vec![8];
    cfg.hp.batch_size = 8;
    cfg.hp.warmup_steps = 30;
    cfg.hp.test_rollouts = 2;
    cfg.transfer_warmup_steps = 10;
    cfg
}

fn tiny_curriculum(tasks: &[TaskName]) -> CurriculumSpec {
    let mut c = CurriculumSpec::new(tasks, 2, 3);
    for e in &mut c.entries {
        e.task.episode_length = 20;
        e.task.rebuild_modules();
    }
    c
}

#[test]
fn curriculum_produces_module_and_task_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cur = tiny_curriculum(&[TaskName::OpenWindow, TaskName::CloseDrawer]);
    let out = run_hasac(&cur, &tiny_cfg(), 5, Some(dir.path())).unwrap();
    assert_eq!(out.tasks.len(), 2);
    for (t, e) in out.tasks.iter().zip(&cur.entries) {
        assert_eq!(t.modules.len(), 2);
        assert_eq!(t.task.curve.len(), 3);
        assert!(t.modules.iter().all(|m| m.curve.len() == 2));
        assert_eq!(t.task.curve.label.scope, e.task.name.as_str());
        assert_eq!(
            t.modules[0].curve.label.scope,
            format!("{}/reach", e.task.name)
        );
        assert!(t.checkpoint.as_ref().unwrap().exists());
    }
    // one hyper step per gradient step of every task scope
    assert_eq!(
        out.task_hyper.opt.step_count as usize,
        out.task_gradient_steps()
    );
    assert!(out.task_gradient_steps() > 0);
}

#[test]
fn module_hyper_actor_accumulates_across_modules_and_is_checkpointed() {
    let dir = tempfile::tempdir().unwrap();
    let cur = tiny_curriculum(&[TaskName::OpenDrawer]);
    let out = run_hasac(&cur, &tiny_cfg(), 1, Some(dir.path())).unwrap();
    let t = &out.tasks[0];
    let module_steps: usize = t.modules.iter().map(|m| m.gradient_steps).sum();
    assert_eq!(t.module_hyper.opt.step_count as usize, module_steps);

    let path = module_checkpoint_path(dir.path(), TaskName::OpenDrawer);
    let ck = Checkpoint::load(&path).unwrap();
    let like = init_policy(&[8], &SeedTree::new(0)).unwrap();
    let back = HyperActor::from_checkpoint(&ck, "hyper-module", &like).unwrap();
    assert_eq!(back, t.module_hyper);

    let wrong = init_policy(&[9], &SeedTree::new(0)).unwrap();
    assert!(HyperActor::from_checkpoint(&ck, "hyper-module", &wrong).is_err());
}

#[test]
fn runs_are_deterministic() {
    let cur = tiny_curriculum(&[TaskName::CloseWindow]);
    let a = run_hasac(&cur, &tiny_cfg(), 9, None).unwrap();
    let b = run_hasac(&cur, &tiny_cfg(), 9, None).unwrap();
    assert_eq!(a.task_hyper, b.task_hyper);
    assert_eq!(a.tasks[0].task.curve, b.tasks[0].task.curve);
    let c = run_hasac(&cur, &tiny_cfg(), 10, None).unwrap();
    assert_ne!(a.tasks[0].task.curve, c.tasks[0].task.curve);
}

#[test]
fn ablated_hasac_reproduces_sac_task_curves() {
    let mut cfg = tiny_cfg();
    cfg.hyper_updates = false;
    let mut cur = tiny_curriculum(&[TaskName::OpenWindow, TaskName::CloseWindow]);
    cur.module_routing = RoutingSpec::plain();
    cur.task_routing = RoutingSpec::plain();
    let h = run_hasac(&cur, &cfg, 3, None).unwrap();
    let s = run_sac(&cur, &cfg, 3).unwrap();
    for (ht, st) in h.tasks.iter().zip(&s) {
        assert_eq!(ht.task.curve.points(), st.curve.points());
        assert_eq!(ht.task.eval, st.eval);
    }
}

#[test]
fn transfer_copies_parameters_and_resets_the_optimizer() {
    let seeds = SeedTree::new(2);
    let mut source = HyperActor::new(&[6], &seeds.child("src")).unwrap();
    source.opt.step_count = 17;
    let mut local = init_policy(&[6], &seeds.child("dst")).unwrap();
    let mut opt = AdamState::new(&local.net);
    opt.step_count = 4;
    transfer_init(&mut local, &mut opt, &source).unwrap();
    assert_eq!(local, source.policy);
    assert_eq!(opt, AdamState::new(&local.net));

    let mut other: Policy = init_policy(&[7], &seeds).unwrap();
    let mut other_opt = AdamState::new(&other.net);
    assert!(transfer_init(&mut other, &mut other_opt, &source).is_err());
}

#[test]
fn curriculum_files_parse_with_overrides() {
    let text = "# order matters\nopen-window\nclose-drawer task_episodes=7  # short\n";
    let c = parse_curriculum(text, 3, 4).unwrap();
    assert_eq!(c.entries.len(), 2);
    assert_eq!(c.entries[0].task, TaskSpec::standard(TaskName::OpenWindow));
    assert_eq!(
        (c.entries[1].module_episodes, c.entries[1].task_episodes),
        (3, 7)
    );
    for bad in [
        "",
        "reach\n",
        "open-window speed=2\n",
        "nope\n",
        "open-window task_episodes=x\n",
    ] {
        assert!(parse_curriculum(bad, 3, 4).is_err(), "{bad:?}");
    }
}
