//! Long-format CSV panels: one row per `(t, series, u)` cell with header
//! `t,series,u,value`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use hdfts::{CurvePanel, Grid};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Relative tolerance on the spacing of the abscissae.
pub const GRID_SPACING_TOL: f64 = 1e-9;

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    t: i64,
    series: String,
    u: f64,
    value: String,
}

/// A panel with the labels it was read with. The curves live on `[0, 1]`;
/// `u` keeps the original abscissae for writing back.
#[derive(Clone, Debug)]
pub struct LabeledPanel {
    pub panel: CurvePanel,
    pub times: Vec<i64>,
    pub series: Vec<String>,
    pub u: Vec<f64>,
}

impl LabeledPanel {
    /// Labels `0..n`, `0..p` and the grid points themselves.
    pub fn unlabeled(panel: CurvePanel) -> Self {
        LabeledPanel {
            times: (0..panel.n() as i64).collect(),
            series: (0..panel.p()).map(|j| j.to_string()).collect(),
            u: panel.grid().points().to_vec(),
            panel,
        }
    }

    /// Same labels with the data replaced.
    pub fn with_panel(&self, panel: CurvePanel) -> Self {
        LabeledPanel { panel, ..self.clone() }
    }
}

fn parse_value(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a long-format panel. Rows may come in any order; times are sorted
/// numerically and series keep their order of first appearance.
pub fn load_panel(path: &Path) -> Result<LabeledPanel> {
    let csv_err = |message: String| CliError::Csv { path: path.to_path_buf(), message };
    let ragged = |message: String| CliError::RaggedLattice { path: path.to_path_buf(), message };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => csv_err(format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "series", "u", "value"] {
        return Err(csv_err(format!("expected header t,series,u,value, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }

    let mut cells: Vec<(i64, usize, f64, f64)> = Vec::new();
    let mut series: Vec<String> = Vec::new();
    let mut series_index: HashMap<String, usize> = HashMap::new();
    for (idx, record) in reader.deserialize::<Row>().enumerate() {
        let line = idx + 2;
        let row = record.map_err(|e| csv_err(format!("line {line}: {e}")))?;
        let value = parse_value(&row.value).ok_or(CliError::NonFiniteValue { path: path.to_path_buf(), line })?;
        if !row.u.is_finite() {
            return Err(CliError::NonFiniteValue { path: path.to_path_buf(), line });
        }
        let j = *series_index.entry(row.series.clone()).or_insert_with(|| {
            series.push(row.series.clone());
            series.len() - 1
        });
        cells.push((row.t, j, row.u, value));
    }
    if cells.is_empty() {
        return Err(ragged("no data rows".into()));
    }

    let mut times: Vec<i64> = cells.iter().map(|c| c.0).collect();
    times.sort_unstable();
    times.dedup();
    let mut u: Vec<f64> = cells.iter().map(|c| c.2).collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let (n, p, big_n) = (times.len(), series.len(), u.len());
    if cells.len() != n * p * big_n {
        return Err(ragged(format!(
            "{} rows for {n} times x {p} series x {big_n} abscissae",
            cells.len()
        )));
    }
    check_uniform(&u).map_err(|message| CliError::NonUniformGrid { path: path.to_path_buf(), message })?;
    let grid = Grid::uniform(big_n).map_err(|e| ragged(e.to_string()))?;

    let t_pos: BTreeMap<i64, usize> = times.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut data = DMatrix::from_element(n, p * big_n, f64::NAN);
    let mut seen = vec![false; n * p * big_n];
    for (t, j, x, value) in cells {
        let a = u.binary_search_by(|v| v.total_cmp(&x)).expect("abscissa collected above");
        let i = t_pos[&t];
        let slot = (i * p + j) * big_n + a;
        if seen[slot] {
            return Err(ragged(format!("duplicate cell t={t}, series={}, u={x}", series[j])));
        }
        seen[slot] = true;
        data[(i, j * big_n + a)] = value;
    }
    let panel = CurvePanel::new(grid, p, data)?;
    Ok(LabeledPanel { panel, times, series, u })
}

fn check_uniform(u: &[f64]) -> std::result::Result<(), String> {
    if u.len() < 2 {
        return Err(format!("need at least 2 abscissae, got {}", u.len()));
    }
    let h = (u[u.len() - 1] - u[0]) / (u.len() - 1) as f64;
    for (a, w) in u.windows(2).enumerate() {
        let step = w[1] - w[0];
        if (step - h).abs() > GRID_SPACING_TOL * h.abs() {
            return Err(format!("step {a} is {step}, expected {h}"));
        }
    }
    Ok(())
}

/// Writes `lp` in long format; `load_panel` reads it back bit for bit.
pub fn save_panel(path: &Path, lp: &LabeledPanel) -> Result<()> {
    let p = lp.panel.p();
    let big_n = lp.panel.n_points();
    if lp.times.len() != lp.panel.n() || lp.series.len() != p || lp.u.len() != big_n {
        return Err(CliError::Config("panel labels do not match its shape".into()));
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let wrap = |e: csv::Error| CliError::Csv { path: path.to_path_buf(), message: e.to_string() };
    writer.write_record(["t", "series", "u", "value"]).map_err(wrap)?;
    for (i, t) in lp.times.iter().enumerate() {
        for (j, s) in lp.series.iter().enumerate() {
            for (a, x) in lp.u.iter().enumerate() {
                let v = lp.panel.value(i, j, a);
                writer
                    .write_record([t.to_string(), s.clone(), x.to_string(), v.to_string()])
                    .map_err(wrap)?;
            }
        }
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn toy_lattice() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "toy.csv",
            "t,series,u,value\n2,a,0,4\n1,a,0,1\n1,a,0.5,2\n1,a,1,3\n2,a,0.5,5\n2,a,1,6\n",
        );
        let lp = load_panel(&path).unwrap();
        assert_eq!((lp.panel.n(), lp.panel.p(), lp.panel.n_points()), (2, 1, 3));
        assert_eq!(lp.times, vec![1, 2]);
        assert_eq!(lp.panel.curve_values(0, 0), vec![1.0, 2.0, 3.0]);
        assert_eq!(lp.panel.curve_values(1, 0), vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn validation_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = write(&dir, "m.csv", "t,series,u,value\n1,a,0,1\n1,a,1,2\n2,a,0,3\n");
        let e = load_panel(&missing).unwrap_err();
        assert!(matches!(e, CliError::RaggedLattice { .. }), "{e}");
        let dup = write(&dir, "d.csv", "t,series,u,value\n1,a,0,1\n1,a,0,2\n2,a,0,3\n2,a,1,3\n");
        assert!(matches!(load_panel(&dup).unwrap_err(), CliError::RaggedLattice { .. }));
        let uneven = write(&dir, "g.csv", "t,series,u,value\n1,a,0,1\n1,a,0.3,1\n1,a,1,1\n");
        assert!(matches!(load_panel(&uneven).unwrap_err(), CliError::NonUniformGrid { .. }));
        let nan = write(&dir, "n.csv", "t,series,u,value\n1,a,0,1\n1,a,1,NaN\n");
        let e = load_panel(&nan).unwrap_err();
        assert!(matches!(e, CliError::NonFiniteValue { line: 3, .. }), "{e}");
        let header = write(&dir, "h.csv", "time,series,u,value\n1,a,0,1\n");
        assert!(matches!(load_panel(&header).unwrap_err(), CliError::Csv { .. }));
        let codes = [
            CliError::RaggedLattice { path: missing.clone(), message: String::new() }.exit_code(),
            CliError::NonUniformGrid { path: missing.clone(), message: String::new() }.exit_code(),
            CliError::NonFiniteValue { path: missing, line: 1 }.exit_code(),
        ];
        assert!(codes[0] != codes[1] && codes[1] != codes[2] && codes[0] != codes[2]);
        assert!(matches!(load_panel(&dir.path().join("absent.csv")).unwrap_err(), CliError::Io { .. }));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let body = "t,series,u,value\n\
            1958,north,1,0.1\n1958,north,2,-3.25\n1958,north,3,1e-7\n\
            1958,south,1,2\n1958,south,2,0.30000000000000004\n1958,south,3,7\n\
            1959,north,1,-0\n1959,north,2,12345.678\n1959,north,3,5\n\
            1959,south,1,1\n1959,south,2,2\n1959,south,3,3\n";
        let path = write(&dir, "in.csv", body);
        let lp = load_panel(&path).unwrap();
        assert_eq!(lp.series, vec!["north", "south"]);
        let out = dir.path().join("out.csv");
        save_panel(&out, &lp).unwrap();
        let again = load_panel(&out).unwrap();
        assert_eq!(again.panel.data(), lp.panel.data());
        assert_eq!((again.times.clone(), again.series.clone(), again.u.clone()), (lp.times.clone(), lp.series.clone(), lp.u.clone()));
        let out2 = dir.path().join("out2.csv");
        save_panel(&out2, &again).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
    }
}
