use hasac_core::env::{Action, Observation, Transition};
use hasac_core::nn::{polyak_update, squashed_log_density, Mlp};
use hasac_core::replay::{push_routed, sample_union, EliteReplayBuffer, ReplayBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{check, OrFail, Outcome};

/// Midpoint rule over (-1, 1) on a grid of means and log standard deviations.
/// Wider distributions push mass against the endpoints, where a 10^4-point
/// midpoint rule stops resolving the density, so the grid stays at sigma <= 1.
pub fn density_normalizes() -> Outcome {
    const N: usize = 10_000;
    let h = 2.0 / N as f64;
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
    for mu in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        for ls in [-3.0, -1.5, -0.5, 0.0] {
            let total: f64 = (0..N)
                .map(|k| squashed_log_density(-1.0 + (k as f64 + 0.5) * h, mu, ls).exp() * h)
                .sum();
            let err = (total - 1.0).abs();
            if err >= worst.0 {
                worst = (err, mu, ls);
            }
        }
    }
    check(
        worst.0 <= 1e-3,
        format!(
            "20 (mu, log sigma) pairs, worst |integral - 1| = {:.2e} at ({}, {})",
            worst.0, worst.1, worst.2
        ),
    )
}

pub fn polyak_law() -> Outcome {
    let mut worst = 0.0f64;
    for (k, tau) in [0.005, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let source = Mlp::new(&[9, 16, 16, 1], &mut rng).or_fail("init")?;
        let mut target = Mlp::new(&[9, 16, 16, 1], &mut rng).or_fail("init")?;
        let d0 = target.distance(&source);
        for n in 1..=200 {
            polyak_update(&mut target, &source, tau).or_fail("polyak")?;
            let expect = (1.0 - tau).powi(n) * d0;
            worst = worst.max((target.distance(&source) - expect).abs());
        }
    }
    check(
        worst <= 1e-10,
        format!("200 steps each for tau 0.005/0.5/1.0, max deviation {worst:.2e}"),
    )
}

fn tr(reward: f64) -> Transition {
    Transition {
        state: Observation([reward; 9]),
        action: Action::zero(),
        reward,
        next_state: Observation([0.0; 9]),
        done: false,
        success: false,
    }
}

/// Several random cases of 10^5 transitions each, with thresholds placed
/// across the reward range.
pub fn routing() -> Outcome {
    const N: usize = 100_000;
    const BATCH: usize = 256;
    const DRAWS: usize = 400;
    let mut worst_z = 0.0f64;
    for case in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x2000 + case);
        let zeta = rng.random_range(-2.5..0.5);
        let ef = [0.1, 0.25, 0.5, 0.75, 0.9][case as usize];
        let mut d = ReplayBuffer::new(N);
        let mut de = EliteReplayBuffer::new(N, zeta);
        let mut elite = 0usize;
        for _ in 0..N {
            let r = rng.random_range(-3.0..1.0);
            let went = push_routed(tr(r), zeta, &mut d, &mut de);
            if went != (r > zeta) {
                return Err(format!(
                    "case {case}: reward {r} vs zeta {zeta} routed to elite = {went}"
                ));
            }
            elite += usize::from(went);
        }
        if d.len() + de.len() != N || de.len() != elite {
            return Err(format!(
                "case {case}: counts d {} + de {} vs {N} ({elite} elite)",
                d.len(),
                de.len()
            ));
        }
        if !de.buffer().iter().all(|t| t.reward > zeta) || !d.iter().all(|t| t.reward <= zeta) {
            return Err(format!("case {case}: buffer holds a mis-routed transition"));
        }
        let mut hits = 0usize;
        for _ in 0..DRAWS {
            let b = sample_union(&d, &de, BATCH, ef, &mut rng).or_fail("sample_union")?;
            if b.len() != BATCH {
                return Err(format!("case {case}: batch of {}", b.len()));
            }
            hits += b.iter().filter(|t| t.reward > zeta).count();
        }
        let m = (DRAWS * BATCH) as f64;
        let sigma = (ef * (1.0 - ef) / m).sqrt();
        worst_z = worst_z.max((hits as f64 / m - ef).abs() / sigma);
    }
    check(
        worst_z <= 3.0,
        format!("5 x 10^5 transitions routed exactly, union elite share within {worst_z:.2} sigma"),
    )
}
