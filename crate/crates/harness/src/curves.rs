//! Curve CSV files: `episode,return,success,env_steps,scope,algorithm,seed`.
//! Floats are written as the shortest decimal that round-trips.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use hasac_core::metrics::{CurveLabel, CurvePoint, TrainingCurve};

use crate::{HarnessError, Result};

pub const HEADER: [&str; 7] = [
    "episode",
    "return",
    "success",
    "env_steps",
    "scope",
    "algorithm",
    "seed",
];

/// File name for a scope's curve: `open-window/reach` -> `open-window.reach.csv`.
pub fn file_name(scope: &str) -> String {
    format!("{}.csv", scope.replace('/', "."))
}

pub fn write_curve<W: Write>(curve: &TrainingCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    let l = &curve.label;
    for p in curve.points() {
        w.write_record([
            p.episode.to_string(),
            p.ret.to_string(),
            u8::from(p.success).to_string(),
            p.env_steps.to_string(),
            l.scope.clone(),
            l.algorithm.clone(),
            l.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_curve(curve: &TrainingCurve, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(file_name(&curve.label.scope));
    let mut buf = Vec::new();
    write_curve(curve, &mut buf)?;
    std::fs::write(&path, buf)?;
    Ok(path)
}

fn bad(path: &str, line: u64, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Data(format!("{path}:{line}: {msg}"))
}

pub fn read_curve<R: Read>(input: R, origin: &str) -> Result<TrainingCurve> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(HarnessError::Data(format!(
            "{origin}: unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut label: Option<CurveLabel> = None;
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<&str> { Ok(&rec[i]) };
        let episode = num(0)?.parse().map_err(|e| bad(origin, line, e))?;
        let ret: f64 = num(1)?.parse().map_err(|e| bad(origin, line, e))?;
        let success = match num(2)? {
            "0" => false,
            "1" => true,
            other => return Err(bad(origin, line, format!("success `{other}` is not 0/1"))),
        };
        let env_steps = num(3)?.parse().map_err(|e| bad(origin, line, e))?;
        let this = CurveLabel {
            scope: rec[4].to_string(),
            algorithm: rec[5].to_string(),
            seed: rec[6].parse().map_err(|e| bad(origin, line, e))?,
        };
        match &label {
            None => label = Some(this),
            Some(l) if *l != this => {
                return Err(bad(origin, line, "label columns change within one curve"));
            }
            _ => {}
        }
        points.push(CurvePoint {
            episode,
            ret,
            success,
            env_steps,
        });
    }
    let label = label.ok_or_else(|| HarnessError::Data(format!("{origin}: no rows")))?;
    TrainingCurve::from_points(label, points)
        .map_err(|e| HarnessError::Data(format!("{origin}: {e}")))
}

pub fn load_curve(path: &Path) -> Result<TrainingCurve> {
    let f = std::fs::File::open(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    read_curve(f, &path.display().to_string())
}

/// Every curve CSV in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<TrainingCurve>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_curve(p)).collect()
}
