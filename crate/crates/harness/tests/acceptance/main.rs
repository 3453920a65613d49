//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails. `ACCEPTANCE_ONLY=1,4,9` runs a subset.

mod fixtures;
mod gradients;
mod numerics;
mod training;

use std::time::Instant;

pub type Outcome = Result<String, String>;

/// `?` for anything printable.
pub trait OrFail<T> {
    fn or_fail(self, what: &str) -> Result<T, String>;
}

impl<T, E: std::fmt::Display> OrFail<T> for Result<T, E> {
    fn or_fail(self, what: &str) -> Result<T, String> {
        self.map_err(|e| format!("{what}: {e}"))
    }
}

pub fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (
            1,
            "gradient suite vs central differences",
            gradients::criterion,
        ),
        (
            2,
            "squashed gaussian density normalizes",
            numerics::density_normalizes,
        ),
        (3, "polyak contraction law", numerics::polyak_law),
        (4, "replay routing and union sampling", numerics::routing),
        (5, "sac learns reach", training::sac_reach),
        (6, "hasac beats sac on the curriculum", training::curriculum),
        (7, "ablated hasac is bitwise sac", training::ablation),
        (
            8,
            "determinism and checkpoint round trip",
            training::determinism,
        ),
        (9, "metrics oracle and reward table", fixtures::criterion),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let res = f();
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS [{n}] {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{n}] {name} ({secs:.1}s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
