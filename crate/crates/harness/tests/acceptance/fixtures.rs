use std::collections::BTreeMap;

use hasac_core::metrics::{
    jumpstart, reward_table_header, summary_stats, time_to_threshold, transfer_ratio, CurveLabel,
    TrainingCurve,
};
use hasac_harness::compare::{compare_runs, LoadedRun, SeedData};

use crate::{check, OrFail, Outcome};

fn curve(scope: &str, alg: &str, returns: &[f64]) -> TrainingCurve {
    let label = CurveLabel {
        scope: scope.into(),
        algorithm: alg.into(),
        seed: 0,
    };
    TrainingCurve::from_returns(label, returns, &[]).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

/// Four returns with the given min, max, mean and population std: the two
/// free values solve `a + b = 4m - lo - hi`, `a^2 + b^2 = 4(s^2 + m^2) - lo^2 - hi^2`.
fn four_point(mean: f64, std: f64, hi: f64, lo: f64) -> [f64; 4] {
    let s = 4.0 * mean - lo - hi;
    let q = 4.0 * (std * std + mean * mean) - lo * lo - hi * hi;
    let r = (2.0 * q - s * s).sqrt();
    [lo, hi, 0.5 * (s + r), 0.5 * (s - r)]
}

fn table_fixture() -> Result<String, String> {
    const SCALE: f64 = 1e6;
    let rows = [
        ("SAC", [0.4105, 0.2192, 0.7211, 0.1041]),
        ("HSAC", [1.1048, 0.4519, 1.5587, 0.5028]),
    ];
    let runs: Vec<LoadedRun> = rows
        .iter()
        .map(|(name, [m, s, hi, lo])| {
            let returns = four_point(*m, *s, *hi, *lo).map(|v| v * SCALE);
            let seed = SeedData {
                tasks: vec![curve("close-drawer", name, &returns)],
                eval_success: BTreeMap::new(),
            };
            LoadedRun {
                name: name.to_string(),
                seeds: BTreeMap::from([(0, seed)]),
            }
        })
        .collect();
    let text = compare_runs(&runs, SCALE).or_fail("compare")?.render();
    let expect = [
        reward_table_header(SCALE),
        "| SAC | 0.4105 | 0.2192 | 0.7211 | 0.1041 |".to_string(),
        "| HSAC | 1.1048 | 0.4519 | 1.5587 | 0.5028 |".to_string(),
    ];
    if reward_table_header(SCALE) != "| x10^6 | Mean | STD | Max Reward | Min Reward |" {
        return Err(format!("header {}", reward_table_header(SCALE)));
    }
    for line in &expect {
        if !text.lines().any(|l| l == line) {
            return Err(format!("rendered table lacks `{line}`:\n{text}"));
        }
    }
    Ok("reward table rows reproduced to four decimals".into())
}

pub fn criterion() -> Outcome {
    let base = curve("t", "sac", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let tr = curve("t", "hasac", &[4.0, 4.0, 5.0, 7.0, 8.0, 9.0]);
    let mut bad = Vec::new();
    let mut expect = |what: &str, got: f64, want: f64| {
        if !close(got, want) {
            bad.push(format!("{what}: {got} != {want}"));
        }
    };

    // first three episodes: 13/3 against 6/3
    expect(
        "jumpstart",
        jumpstart(&tr, &base, 3).or_fail("jumpstart")?,
        7.0 / 3.0,
    );
    expect(
        "jumpstart self",
        jumpstart(&base, &base, 6).or_fail("jumpstart")?,
        0.0,
    );
    // totals 37 and 21
    expect(
        "transfer_ratio",
        transfer_ratio(&tr, &base).or_fail("ratio")?,
        16.0 / 21.0,
    );
    let neg = curve("t", "sac", &[-4.0, -3.0, -2.0, -1.0]);
    // (-6 - -10) / |-10|
    expect(
        "transfer_ratio negative baseline",
        transfer_ratio(&curve("t", "hasac", &[-3.0, -2.0, -1.0, 0.0]), &neg).or_fail("ratio")?,
        0.4,
    );
    let st = summary_stats(&base).or_fail("summary")?;
    expect("mean", st.mean, 3.5);
    expect("std", st.std, (35.0f64 / 12.0).sqrt());
    expect("max", st.max, 6.0);
    expect("min", st.min, 1.0);

    // window-2 averages of the transfer curve: 4, 4.5, 6, 7.5, 8.5
    let ttt = [
        (time_to_threshold(&tr, 6.5, 2), Some(4)),
        (time_to_threshold(&tr, 6.0, 2), Some(3)),
        (time_to_threshold(&tr, 4.0, 1), Some(0)),
        (time_to_threshold(&tr, 9.5, 2), None),
        // window longer than the curve: the whole-curve mean 37/6
        (time_to_threshold(&tr, 6.0, 50), Some(5)),
        (time_to_threshold(&tr, 6.5, 50), None),
    ];
    for (k, (got, want)) in ttt.iter().enumerate() {
        if got != want {
            bad.push(format!("time_to_threshold case {k}: {got:?} != {want:?}"));
        }
    }

    let table = table_fixture();
    match (bad.is_empty(), table) {
        (true, Ok(t)) => check(
            true,
            format!("jumpstart, transfer_ratio, summary_stats, time_to_threshold match; {t}"),
        ),
        (_, Err(e)) => Err(e),
        (false, _) => Err(bad.join("; ")),
    }
}
