//! `plot`: static SVG learning curves and success-rate bars from run directories.
//! The SVG is written by hand with fixed number formatting, so regenerating
//! from unchanged CSVs reproduces the files byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::compare::{load_run, LoadedRun};
use crate::run::median;
use crate::Result;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str, y_lo: f64, y_hi: f64) {
    let (x0, y0, x1, y1) = (MARGIN_L, H - MARGIN_B, W - MARGIN_R, MARGIN_T);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
    );
    for (v, y) in [(y_lo, y0), (y_hi, y1)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(s: &mut String, names: &[String]) {
    for (k, n) in names.iter().enumerate() {
        let y = MARGIN_T + 14.0 * k as f64 + 6.0;
        let x = W - MARGIN_R - 180.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 9.0,
            COLORS[k % COLORS.len()],
            x + 14.0,
            y,
            escape(n)
        );
    }
}

/// Mean return per episode over all seeds having the scope.
fn mean_curve(run: &LoadedRun, scope: &str) -> Vec<f64> {
    let curves: Vec<_> = run
        .seeds
        .values()
        .filter_map(|s| s.tasks.iter().find(|c| c.label.scope == scope))
        .collect();
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| curves.iter().map(|c| c.points()[i].ret).sum::<f64>() / curves.len() as f64)
        .collect()
}

pub fn reward_svg(scope: &str, runs: &[LoadedRun]) -> String {
    let series: Vec<Vec<f64>> = runs.iter().map(|r| mean_curve(r, scope)).collect();
    let all = series.iter().flatten().copied();
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let n = series.iter().map(Vec::len).max().unwrap_or(1).max(2);
    let mut s = header(&format!("{scope}: return per episode"));
    axes(&mut s, "episode", "return", lo, hi);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
        W - MARGIN_R,
        H - MARGIN_B + 16.0,
        n - 1
    );
    for (k, v) in series.iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (i, y) in v.iter().enumerate() {
            let px = MARGIN_L + (W - MARGIN_L - MARGIN_R) * i as f64 / (n - 1) as f64;
            let py = H - MARGIN_B - (H - MARGIN_T - MARGIN_B) * (y - lo) / (hi - lo);
            let _ = write!(d, "{}{px:.2},{py:.2}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            COLORS[k % COLORS.len()]
        );
    }
    legend(
        &mut s,
        &runs.iter().map(|r| r.name.clone()).collect::<Vec<_>>(),
    );
    s.push_str("</svg>\n");
    s
}

pub fn success_svg(scopes: &[String], runs: &[LoadedRun]) -> String {
    let mut s = header("final evaluation success rate (median over seeds)");
    axes(&mut s, "task", "success rate", 0.0, 1.0);
    let groups = scopes.len().max(1) as f64;
    let gw = (W - MARGIN_L - MARGIN_R) / groups;
    let bw = gw * 0.8 / runs.len().max(1) as f64;
    let plot_h = H - MARGIN_T - MARGIN_B;
    for (g, scope) in scopes.iter().enumerate() {
        let gx = MARGIN_L + gw * g as f64 + gw * 0.1;
        for (k, r) in runs.iter().enumerate() {
            let mut v: Vec<f64> = r
                .seeds
                .values()
                .filter_map(|sd| sd.eval_success.get(scope).copied())
                .collect();
            let m = if v.is_empty() { 0.0 } else { median(&mut v) };
            let h = plot_h * m.clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{h:.2}" fill="{}"/>"#,
                gx + bw * k as f64,
                H - MARGIN_B - h,
                COLORS[k % COLORS.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + gw * 0.4,
            H - MARGIN_B + 16.0,
            escape(scope)
        );
    }
    legend(
        &mut s,
        &runs.iter().map(|r| r.name.clone()).collect::<Vec<_>>(),
    );
    s.push_str("</svg>\n");
    s
}

/// Writes one reward plot per task plus the success chart. An empty run list
/// writes nothing.
pub fn emit_plots(dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if dirs.is_empty() {
        return Ok(Vec::new());
    }
    let runs = dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>>>()?;
    let mut scopes: Vec<String> = Vec::new();
    for r in &runs {
        for sc in r.task_scopes() {
            if !scopes.contains(&sc) {
                scopes.push(sc);
            }
        }
    }
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for scope in &scopes {
        let path = out.join(format!("reward.{}.svg", scope.replace('/', ".")));
        std::fs::write(&path, reward_svg(scope, &runs))?;
        written.push(path);
    }
    let path = out.join("success.svg");
    std::fs::write(&path, success_svg(&scopes, &runs))?;
    written.push(path);
    Ok(written)
}
