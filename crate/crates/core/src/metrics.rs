//! Learning-curve bookkeeping and transfer metrics.
//!
//! Window defaults: jumpstart compares the first 10 episodes, asymptotic
//! performance averages the last 50, and threshold crossings use a trailing
//! 10-episode moving average.

use std::fmt;

use crate::error::{usage, Error, Result};

pub const DEFAULT_JUMPSTART_HEAD: usize = 10;
pub const DEFAULT_ASYMPTOTE_TAIL: usize = 50;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub ret: f64,
    pub success: bool,
    /// Cumulative environment steps at the end of the episode.
    pub env_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CurveLabel {
    pub scope: String,
    pub algorithm: String,
    pub seed: u64,
}

impl fmt::Display for CurveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{} seed {}]", self.scope, self.algorithm, self.seed)
    }
}

/// Per-episode training record of one scope.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurve {
    pub label: CurveLabel,
    points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn new(label: CurveLabel) -> Self {
        Self {
            label,
            points: Vec::new(),
        }
    }

    /// Appends a point; episodes must strictly increase and env steps never decrease.
    pub fn push(&mut self, p: CurvePoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if p.episode <= last.episode {
                return usage(format!(
                    "{}: episode {} does not follow {}",
                    self.label, p.episode, last.episode
                ));
            }
            if p.env_steps < last.env_steps {
                return usage(format!("{}: env_steps went backwards", self.label));
            }
        }
        if !p.ret.is_finite() {
            return Err(Error::Numeric(format!("{}: non-finite return", self.label)));
        }
        self.points.push(p);
        Ok(())
    }

    pub fn from_points(
        label: CurveLabel,
        points: impl IntoIterator<Item = CurvePoint>,
    ) -> Result<Self> {
        let mut c = Self::new(label);
        for p in points {
            c.push(p)?;
        }
        Ok(c)
    }

    /// Synthetic curve with episodes 0.. and one env step per episode.
    pub fn from_returns(label: CurveLabel, returns: &[f64], successes: &[bool]) -> Result<Self> {
        Self::from_points(
            label,
            returns.iter().enumerate().map(|(i, &r)| CurvePoint {
                episode: i,
                ret: r,
                success: successes.get(i).copied().unwrap_or(false),
                env_steps: i + 1,
            }),
        )
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn returns(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.ret)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn nonempty(c: &TrainingCurve) -> Result<()> {
    if c.is_empty() {
        usage(format!("{}: empty curve", c.label))
    } else {
        Ok(())
    }
}

/// Fraction of successful episodes among the trailing `window` (whole curve when `None`).
pub fn success_rate(curve: &TrainingCurve, window: Option<usize>) -> Result<f64> {
    nonempty(curve)?;
    let w = window.unwrap_or(curve.len());
    if w == 0 || w > curve.len() {
        return usage(format!(
            "success window {w} invalid for {} episodes",
            curve.len()
        ));
    }
    let tail = &curve.points[curve.len() - w..];
    Ok(tail.iter().filter(|p| p.success).count() as f64 / w as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

pub fn summary_of(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return usage("summary of an empty sample");
    }
    let m = mean(values.iter().copied());
    let var = mean(values.iter().map(|v| (v - m) * (v - m)));
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SummaryStats {
        // rounding can push the mean a hair outside [min, max] on near-constant data
        mean: m.clamp(min, max),
        std: var.sqrt(),
        max,
        min,
    })
}

pub fn summary_stats(curve: &TrainingCurve) -> Result<SummaryStats> {
    summary_of(&curve.returns().collect::<Vec<_>>())
}

/// Mean return of the first `head` episodes of `transfer` minus that of `baseline`.
pub fn jumpstart(transfer: &TrainingCurve, baseline: &TrainingCurve, head: usize) -> Result<f64> {
    nonempty(transfer)?;
    nonempty(baseline)?;
    if head == 0 || head > transfer.len() || head > baseline.len() {
        return usage(format!(
            "jumpstart head {head} exceeds curve lengths {} / {}",
            transfer.len(),
            baseline.len()
        ));
    }
    let h = |c: &TrainingCurve| mean(c.points[..head].iter().map(|p| p.ret));
    Ok(h(transfer) - h(baseline))
}

/// Mean return over the trailing `tail` episodes.
pub fn asymptotic_performance(curve: &TrainingCurve, tail: usize) -> Result<f64> {
    nonempty(curve)?;
    if tail == 0 || tail > curve.len() {
        return usage(format!("tail {tail} invalid for {} episodes", curve.len()));
    }
    Ok(mean(
        curve.points[curve.len() - tail..].iter().map(|p| p.ret),
    ))
}

pub fn total_reward(curve: &TrainingCurve) -> f64 {
    curve.returns().sum()
}

/// Episode index at which the trailing moving average of returns first reaches
/// `threshold`. The average is defined once `window` episodes exist (the whole
/// curve when it is shorter than the window).
pub fn time_to_threshold(curve: &TrainingCurve, threshold: f64, window: usize) -> Option<usize> {
    if curve.is_empty() {
        return None;
    }
    let w = window.clamp(1, curve.len());
    let mut sum: f64 = curve.points[..w - 1].iter().map(|p| p.ret).sum();
    for i in (w - 1)..curve.len() {
        sum += curve.points[i].ret;
        if i >= w {
            sum -= curve.points[i - w].ret;
        }
        if sum / w as f64 >= threshold {
            return Some(curve.points[i].episode);
        }
    }
    None
}

/// Relative change in total reward against the baseline.
pub fn transfer_ratio(transfer: &TrainingCurve, baseline: &TrainingCurve) -> Result<f64> {
    let base = total_reward(baseline);
    if base == 0.0 {
        return usage(format!("{}: baseline total reward is zero", baseline.label));
    }
    Ok((total_reward(transfer) - base) / base.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricWindows {
    pub jumpstart_head: usize,
    pub asymptote_tail: usize,
    pub smoothing_window: usize,
    /// Threshold for the crossing time; defaults to the baseline's asymptotic
    /// performance when a baseline is supplied.
    pub threshold: Option<f64>,
}

impl Default for MetricWindows {
    fn default() -> Self {
        Self {
            jumpstart_head: DEFAULT_JUMPSTART_HEAD,
            asymptote_tail: DEFAULT_ASYMPTOTE_TAIL,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub stats: SummaryStats,
    pub success_rate: f64,
    pub asymptotic_performance: f64,
    pub total_reward: f64,
    pub time_to_threshold: Option<usize>,
    pub jumpstart: Option<f64>,
    pub transfer_ratio: Option<f64>,
}

/// Windows shrink to the curve lengths so short runs still report.
pub fn report(
    curve: &TrainingCurve,
    baseline: Option<&TrainingCurve>,
    windows: &MetricWindows,
) -> Result<MetricsReport> {
    nonempty(curve)?;
    let tail = windows.asymptote_tail.min(curve.len());
    let (jump, ratio, threshold) = match baseline {
        Some(b) => {
            nonempty(b)?;
            let head = windows.jumpstart_head.min(curve.len()).min(b.len());
            let th = windows.threshold.unwrap_or(asymptotic_performance(
                b,
                windows.asymptote_tail.min(b.len()),
            )?);
            (
                Some(jumpstart(curve, b, head)?),
                transfer_ratio(curve, b).ok(),
                Some(th),
            )
        }
        None => (None, None, windows.threshold),
    };
    Ok(MetricsReport {
        stats: summary_stats(curve)?,
        success_rate: success_rate(curve, None)?,
        asymptotic_performance: asymptotic_performance(curve, tail)?,
        total_reward: total_reward(curve),
        time_to_threshold: threshold
            .and_then(|t| time_to_threshold(curve, t, windows.smoothing_window)),
        jumpstart: jump,
        transfer_ratio: ratio,
    })
}

/// One row of the reward comparison table: `| label | mean | std | max | min |`
/// with values divided by `scale` and printed to four decimals.
pub fn format_reward_row(label: &str, stats: &SummaryStats, scale: f64) -> String {
    format!(
        "| {label} | {:.4} | {:.4} | {:.4} | {:.4} |",
        stats.mean / scale,
        stats.std / scale,
        stats.max / scale,
        stats.min / scale
    )
}

pub fn reward_table_header(scale: f64) -> String {
    let exp = scale.log10().round() as i32;
    let tag = if exp == 0 {
        "reward".to_string()
    } else {
        format!("x10^{exp}")
    };
    format!("| {tag} | Mean | STD | Max Reward | Min Reward |")
}
