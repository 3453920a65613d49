use std::time::{Duration, Instant};

use hasac_core::env::{ACTION_DIM, OBS_DIM};
use hasac_core::hasac::{hyper_update, HyperActor};
use hasac_core::nn::{adam_step, Mlp};
use hasac_core::rng::SeedTree;
use hasac_core::sac::{
    actor_loss_and_grads, critic_loss_and_grads, draw_noise, value_loss_and_grads, AgentParams,
    Batch, QTargetMode, SacHyperparams,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{check, OrFail, Outcome};

const INSTANCES: u64 = 100;
const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Instances with a hidden pre-activation this close to the ReLU kink are
/// redrawn: a central difference straddling the kink is not a derivative.
const KINK_MARGIN: f64 = 1e-3;

struct Instance {
    hp: SacHyperparams,
    params: AgentParams,
    batch: Batch,
    noise: Array2<f64>,
}

fn instance(k: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfd00 + k);
    let hidden = match k % 3 {
        0 => vec![4],
        1 => vec![6, 5],
        _ => vec![8],
    };
    let hp = SacHyperparams {
        hidden: hidden.clone(),
        alpha: rng.random_range(0.01..0.5),
        action_l2_coef: rng.random_range(0.0..1.0),
        gamma: rng.random_range(0.9..0.999),
        q_target_mode: QTargetMode::ValueTarget,
        ..SacHyperparams::default()
    };
    let mut params = AgentParams::new(&hidden, &SeedTree::new(k)).unwrap();
    // a target that has drifted from the online value net
    let drift = Mlp::new(&params.value.sizes(), &mut rng).unwrap();
    params.value_target.add_scaled(&drift, 0.1);
    let n = rng.random_range(3..9);
    let batch = Batch {
        states: Array2::from_shape_simple_fn((n, OBS_DIM), || rng.sample(StandardNormal)),
        actions: Array2::from_shape_simple_fn((n, ACTION_DIM), || rng.random_range(-0.95..0.95)),
        rewards: Array1::from_shape_simple_fn(n, || rng.random_range(-2.0..1.0)),
        next_states: Array2::from_shape_simple_fn((n, OBS_DIM), || rng.sample(StandardNormal)),
        continues: Array1::from_shape_simple_fn(n, || f64::from(u8::from(rng.random_bool(0.8)))),
    };
    let noise = draw_noise(n, &mut rng);
    Instance {
        hp,
        params,
        batch,
        noise,
    }
}

fn min_hidden_preactivation(net: &Mlp, input: &Array2<f64>) -> f64 {
    let layers = net.layers();
    let mut x = input.clone();
    let mut closest = f64::INFINITY;
    for layer in &layers[..layers.len() - 1] {
        let z = x.dot(&layer.weights) + &layer.bias;
        closest = z.iter().fold(closest, |m, v| m.min(v.abs()));
        x = z.mapv(|v| v.max(0.0));
    }
    closest
}

fn near_kink(i: &Instance) -> bool {
    let b = &i.batch;
    let sa = ndarray::concatenate![ndarray::Axis(1), b.states, b.actions];
    let p = &i.params;
    [
        min_hidden_preactivation(&p.q1, &sa),
        min_hidden_preactivation(&p.q2, &sa),
        min_hidden_preactivation(&p.value, &b.states),
        min_hidden_preactivation(&p.policy.net, &b.states),
    ]
    .iter()
    .any(|&m| m < KINK_MARGIN)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error between `analytic` and central differences of `f` around `net`.
fn rel_error(net: &Mlp, analytic: &Mlp, f: impl Fn(&Mlp) -> f64) -> f64 {
    let base = net.to_flat();
    let mut probe = net.clone();
    let mut fd = vec![0.0; base.len()];
    let mut x = base.clone();
    for i in 0..base.len() {
        x[i] = base[i] + H;
        probe.set_flat(&x).unwrap();
        let up = f(&probe);
        x[i] = base[i] - H;
        probe.set_flat(&x).unwrap();
        let down = f(&probe);
        x[i] = base[i];
        fd[i] = (up - down) / (2.0 * H);
    }
    let an = analytic.to_flat();
    let diff: Vec<f64> = fd.iter().zip(&an).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&fd).max(norm(&an)).max(1e-12)
}

fn critic(i: &Instance) -> f64 {
    let g = critic_loss_and_grads(&i.batch, &i.params, &i.hp, None).unwrap();
    let e1 = rel_error(&i.params.q1, &g.grads[0], |q| {
        let mut p = i.params.clone();
        p.q1 = q.clone();
        critic_loss_and_grads(&i.batch, &p, &i.hp, None)
            .unwrap()
            .losses[0]
    });
    let e2 = rel_error(&i.params.q2, &g.grads[1], |q| {
        let mut p = i.params.clone();
        p.q2 = q.clone();
        critic_loss_and_grads(&i.batch, &p, &i.hp, None)
            .unwrap()
            .losses[1]
    });
    e1.max(e2)
}

fn value(i: &Instance) -> f64 {
    let (_, g) = value_loss_and_grads(&i.batch, &i.params, &i.hp, i.noise.view()).unwrap();
    rel_error(&i.params.value, &g, |v| {
        let mut p = i.params.clone();
        p.value = v.clone();
        value_loss_and_grads(&i.batch, &p, &i.hp, i.noise.view())
            .unwrap()
            .0
    })
}

fn actor(i: &Instance) -> f64 {
    let p = &i.params;
    let g = actor_loss_and_grads(&i.batch, &p.policy, &p.q1, &p.q2, &i.hp, i.noise.view()).unwrap();
    rel_error(&p.policy.net, &g.grads, |net| {
        let mut pol = p.policy.clone();
        pol.net = net.clone();
        actor_loss_and_grads(&i.batch, &pol, &p.q1, &p.q2, &i.hp, i.noise.view())
            .unwrap()
            .loss
    })
}

/// Finite differences of the hyper-actor's loss, and the update itself equal
/// to one Adam step on those analytic gradients.
fn hyper(i: &Instance, k: u64) -> Result<f64, String> {
    let p = &i.params;
    let mut hyper = HyperActor::new(&i.hp.hidden, &SeedTree::new(k).child("hyper")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(k);
    let noise = draw_noise(i.batch.len(), &mut rng.clone());
    let g =
        actor_loss_and_grads(&i.batch, &hyper.policy, &p.q1, &p.q2, &i.hp, noise.view()).unwrap();
    let err = rel_error(&hyper.policy.net, &g.grads, |net| {
        let mut pol = hyper.policy.clone();
        pol.net = net.clone();
        actor_loss_and_grads(&i.batch, &pol, &p.q1, &p.q2, &i.hp, noise.view())
            .unwrap()
            .loss
    });
    let mut expect = hyper.clone();
    adam_step(
        &mut expect.policy.net,
        &g.grads,
        &mut expect.opt,
        i.hp.lr_policy,
    )
    .unwrap();
    let loss = hyper_update(&mut hyper, &i.batch, &p.q1, &p.q2, &i.hp, &mut rng)
        .or_fail("hyper_update")?;
    if loss.to_bits() != g.loss.to_bits() || hyper != expect {
        return Err(format!(
            "instance {k}: hyper_update differs from adam on the analytic gradient"
        ));
    }
    Ok(err)
}

pub fn criterion() -> Outcome {
    let t = Instant::now();
    let mut worst = [0.0f64; 4];
    let (mut k, mut used, mut redrawn) = (0, 0, 0);
    while used < INSTANCES {
        let i = instance(k);
        k += 1;
        if near_kink(&i) {
            redrawn += 1;
            continue;
        }
        used += 1;
        let errs = [critic(&i), value(&i), actor(&i), hyper(&i, k - 1)?];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let secs = t.elapsed();
    let detail = format!(
        "{INSTANCES} instances ({redrawn} redrawn near a relu kink), max rel err critic {:.2e} value {:.2e} actor {:.2e} hyper {:.2e} (tol {TOL:e}), {:.1}s",
        worst[0],
        worst[1],
        worst[2],
        worst[3],
        secs.as_secs_f64()
    );
    check(
        worst.iter().all(|&w| w <= TOL) && secs < Duration::from_secs(120),
        detail,
    )
}
