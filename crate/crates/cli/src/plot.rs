//! Long-format plot data: `series,x,y,seed`, per-seed rows followed by
//! `median`, `q25` and `q75` series with an empty seed column.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use optac_core::stats::{median, quantile};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("no input rows")]
    Empty,
    #[error("{file}: column `{column}` not found")]
    MissingColumn { file: String, column: String },
    #[error("{file}, line {line}: {message}")]
    BadRow { file: String, line: usize, message: String },
}

pub const HEADER: &str = "series,x,y,seed";

/// One seed's curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub seed: String,
    pub points: Vec<(f64, f64)>,
}

fn columns(header: &str) -> Vec<&str> {
    header.split(',').map(str::trim).collect()
}

fn column(cols: &[&str], name: &str, file: &str) -> Result<usize, PlotError> {
    cols.iter().position(|c| *c == name).ok_or_else(|| PlotError::MissingColumn {
        file: file.to_string(),
        column: name.to_string(),
    })
}

fn number(field: Option<&str>, file: &str, line: usize) -> Result<f64, PlotError> {
    let raw = field.unwrap_or("");
    raw.trim().parse().map_err(|_| PlotError::BadRow {
        file: file.to_string(),
        line,
        message: format!("`{raw}` is not a number"),
    })
}

/// Reads `(x_column, y_column)` from one metrics CSV; empty `y` cells are skipped.
pub fn read_curve(text: &str, file: &str, seed: String, x: &str, y: &str) -> Result<Curve, PlotError> {
    let mut lines = text.lines();
    let header = columns(lines.next().ok_or(PlotError::Empty)?);
    let (xi, yi) = (column(&header, x, file)?, column(&header, y, file)?);
    let mut points = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.get(yi).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        points.push((number(fields.get(xi).copied(), file, n + 2)?, number(fields.get(yi).copied(), file, n + 2)?));
    }
    Ok(Curve { seed, points })
}

/// Per-seed rows and, per `x`, the median and quartiles over the seeds that have it.
pub fn emit(series: &str, curves: &[Curve]) -> Result<String, PlotError> {
    if curves.iter().all(|c| c.points.is_empty()) {
        return Err(PlotError::Empty);
    }
    let mut out = String::from(HEADER);
    out.push('\n');
    let mut by_x: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for c in curves {
        for &(x, y) in &c.points {
            let _ = writeln!(out, "{series},{x},{y},{}", c.seed);
            by_x.entry(order_key(x)).or_insert((x, Vec::new())).1.push(y);
        }
    }
    for (name, q) in [("median", 0.5), ("q25", 0.25), ("q75", 0.75)] {
        for (x, ys) in by_x.values() {
            let v = if q == 0.5 { median(ys) } else { quantile(ys, q) };
            let _ = writeln!(out, "{name},{x},{},", v.expect("nonempty"));
        }
    }
    Ok(out)
}

// total order on finite floats that agrees with numeric order
fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 { !bits } else { bits | 1 << 63 }
}

/// Metrics files under `dir` named `seed_<n>.csv`, ordered by seed.
pub fn seed_files(dir: &Path) -> std::io::Result<Vec<(u64, PathBuf)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("seed_")?.strip_suffix(".csv")?.parse().ok());
        if let Some(seed) = seed {
            files.push((seed, path));
        }
    }
    files.sort();
    Ok(files)
}

/// `(series, x, y, seed)` rows from a cRFF error table: one series per axis.
pub fn crff_curves(text: &str, file: &str) -> Result<BTreeMap<String, Vec<Curve>>, PlotError> {
    let mut lines = text.lines();
    let header = columns(lines.next().ok_or(PlotError::Empty)?);
    let idx = |n: &str| column(&header, n, file);
    let (ai, wi, di, ni, ei, si) = (idx("axis")?, idx("W")?, idx("d")?, idx("N")?, idx("max_err")?, idx("seed")?);
    let mut series: BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let axis = f.get(ai).copied().unwrap_or("");
        let xi = match axis {
            "W" => wi,
            "d" => di,
            "N" => ni,
            other => {
                return Err(PlotError::BadRow {
                    file: file.to_string(),
                    line: n + 2,
                    message: format!("unknown axis `{other}`"),
                })
            }
        };
        let point = (number(f.get(xi).copied(), file, n + 2)?, number(f.get(ei).copied(), file, n + 2)?);
        let seed = f.get(si).copied().unwrap_or("").to_string();
        series
            .entry(format!("max_err_{axis}"))
            .or_default()
            .entry(seed)
            .or_default()
            .push(point);
    }
    Ok(series
        .into_iter()
        .map(|(name, by_seed)| {
            let curves = by_seed.into_iter().map(|(seed, points)| Curve { seed, points }).collect();
            (name, curves)
        })
        .collect())
}

/// Whether a series never rises by more than `tolerance` (relative) between
/// consecutive points.
pub fn decreasing_with_blips(ys: &[f64], tolerance: f64) -> bool {
    ys.windows(2).all(|w| w[1] <= w[0] * (1.0 + tolerance))
}

/// The median series of an emitted plot CSV.
pub fn median_series(csv: &str) -> Vec<(f64, f64)> {
    csv.lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f.first() == Some(&"median")).then(|| (f[1].parse().ok(), f[2].parse().ok()))
        })
        .filter_map(|(x, y)| Some((x?, y?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_seed_is_identity() {
        let c = read_curve("k,gap\n0,0.5\n1,0.25\n", "m.csv", "3".into(), "k", "gap").unwrap();
        let out = emit("gap", &[c]).unwrap();
        let rows: Vec<&str> = out.lines().collect();
        assert_eq!(rows[0], HEADER);
        assert_eq!(&rows[1..3], ["gap,0,0.5,3", "gap,1,0.25,3"]);
        assert_eq!(median_series(&out), vec![(0.0, 0.5), (1.0, 0.25)]);
    }

    #[test]
    fn median_has_one_row_per_x() {
        let curves: Vec<Curve> = (0..10)
            .map(|s| Curve {
                seed: s.to_string(),
                points: (0..5).map(|k| (k as f64, (s + k) as f64)).collect(),
            })
            .collect();
        let out = emit("gap", &curves).unwrap();
        let m = median_series(&out);
        assert_eq!(m.len(), 5);
        assert_eq!(m[0], (0.0, 4.5));
        assert_eq!(out.lines().filter(|l| l.starts_with("q25,")).count(), 5);
    }

    #[test]
    fn negative_x_sorts_numerically() {
        let c = Curve {
            seed: "0".into(),
            points: vec![(1.0, 1.0), (-2.0, 2.0), (0.0, 3.0)],
        };
        let xs: Vec<f64> = median_series(&emit("s", &[c]).unwrap()).iter().map(|p| p.0).collect();
        assert_eq!(xs, vec![-2.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(emit("gap", &[]), Err(PlotError::Empty));
        let c = read_curve("k,gap\n", "m.csv", "0".into(), "k", "gap").unwrap();
        assert_eq!(emit("gap", &[c]), Err(PlotError::Empty));
    }

    #[test]
    fn missing_column_and_bad_rows() {
        assert!(matches!(read_curve("k,gap\n", "m.csv", "0".into(), "k", "nope"), Err(PlotError::MissingColumn { .. })));
        let err = read_curve("k,gap\n0,x\n", "m.csv", "0".into(), "k", "gap").unwrap_err();
        assert!(matches!(err, PlotError::BadRow { line: 2, .. }));
    }

    #[test]
    fn blank_cells_are_skipped() {
        let c = read_curve("k,h\n0,\n1,0.5\n", "m.csv", "0".into(), "k", "h").unwrap();
        assert_eq!(c.points, vec![(1.0, 0.5)]);
    }

    #[test]
    fn crff_table_splits_by_axis() {
        let text = "axis,W,d,N,max_err,mean_err,seed\nW,1,64,100,0.5,0.1,0\nW,2,64,100,0.25,0.1,0\nd,8,16,100,0.4,0.1,0\n";
        let s = crff_curves(text, "e.csv").unwrap();
        assert_eq!(s["max_err_W"][0].points, vec![(1.0, 0.5), (2.0, 0.25)]);
        assert_eq!(s["max_err_d"][0].points, vec![(16.0, 0.4)]);
    }

    #[test]
    fn blips() {
        assert!(decreasing_with_blips(&[1.0, 0.9, 0.94, 0.5], 0.05));
        assert!(!decreasing_with_blips(&[1.0, 0.9, 0.96], 0.05));
    }
}
