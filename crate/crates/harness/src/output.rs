//! CSV files and atomic writes.

use std::io::Write;
use std::path::Path;

use flexbeam::plant::{format_sig17, Diagnostics, PlantState, Trajectory};
use nalgebra::DVector;

use crate::experiment::EpisodeOutcome;
use crate::HarnessError;

pub const NOT_SETTLED: &str = "not-settled";

/// Writes to a sibling temp file, then renames over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io_err = |e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io_err)
}

pub fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Inverse of [`trajectory_csv`]. The fallback flag is not stored and
/// reads back as `false`.
pub fn read_trajectory_csv(text: &str, controller: &str, dt: f64) -> Result<Trajectory<f64>, HarnessError> {
    let bad = |msg: String| HarnessError::Numeric(format!("trajectory CSV: {msg}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let n = count("W_");
    let m = count("V_");
    let diag = header.contains(&"qp_cost");
    let width = 1 + 2 * n + 2 * m + 1 + if diag { 3 } else { 0 };
    if header.len() != width || header[0] != "t" {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut traj = Trajectory {
        controller: controller.to_string(),
        dt,
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        readings: Vec::new(),
        disturbance: Vec::new(),
        diagnostics: Vec::new(),
        clipped: Vec::new(),
        final_state: None,
    };
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(bad(format!("row {} has {} columns", row + 2, cells.len())));
        }
        let num = |i: usize| -> Result<f64, HarnessError> {
            cells[i]
                .parse()
                .map_err(|_| bad(format!("row {}: cannot parse {:?}", row + 2, cells[i])))
        };
        let vec = |from: usize, len: usize| -> Result<DVector<f64>, HarnessError> {
            (from..from + len).map(num).collect::<Result<Vec<_>, _>>().map(DVector::from_vec)
        };
        let t = num(0)?;
        traj.times.push(t);
        traj.states.push(PlantState {
            coords: vec(1, n)?,
            rates: vec(1 + n, n)?,
            time: t,
        });
        traj.controls.push(vec(1 + 2 * n, m)?);
        traj.readings.push(vec(1 + 2 * n + m, m)?);
        traj.disturbance.push(num(1 + 2 * n + 2 * m)?);
        traj.clipped.push(false);
        let k = 2 + 2 * n + 2 * m;
        traj.diagnostics.push(if diag && !cells[k].is_empty() {
            Some(Diagnostics {
                cost: num(k)?,
                iterations: cells[k + 1].parse().map_err(|_| bad(format!("row {}: iterations", row + 2)))?,
                residual: num(k + 2)?,
                fallback: false,
            })
        } else {
            None
        });
    }
    Ok(traj)
}

pub fn metrics_header(modes: usize) -> Vec<String> {
    let mut h = vec!["controller".to_string(), "status".into(), "settling_time_2pct".into()];
    h.extend((1..=modes).map(|i| format!("rms_mode_{i}")));
    h.extend(
        [
            "rms_tip",
            "peak_tip",
            "control_energy",
            "fc_power_above_10hz",
            "amplitude_reduction",
            "max_kkt_residual",
            "stable",
            "tracking_mse",
            "train_mse",
            "val_mse",
            "test_mse",
        ]
        .map(String::from),
    );
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig17).unwrap_or_default()
}

pub fn metrics_row(o: &EpisodeOutcome) -> Vec<String> {
    let m = &o.metrics;
    let mut r = vec![
        o.label.clone(),
        if o.failure.is_some() { "diverged" } else { "ok" }.to_string(),
        m.settling_time.map(format_sig17).unwrap_or_else(|| NOT_SETTLED.into()),
    ];
    r.extend(m.rms_modal_amplitude.iter().map(|v| format_sig17(*v)));
    r.extend([
        format_sig17(m.rms_tip),
        format_sig17(m.peak_tip),
        format_sig17(m.control_energy),
        format_sig17(m.force_power_above_cutoff),
        opt(m.amplitude_reduction),
        opt(m.max_kkt_residual),
        m.stable.to_string(),
        opt(o.tracking_mse),
        opt(m.narx_mse.map(|x| x[0])),
        opt(m.narx_mse.map(|x| x[1])),
        opt(m.narx_mse.map(|x| x[2])),
    ]);
    r
}

pub fn metrics_csv(rows: &[&EpisodeOutcome]) -> String {
    let modes = rows.first().map_or(0, |o| o.metrics.rms_modal_amplitude.len());
    let mut s = metrics_header(modes).join(",");
    s.push('\n');
    for o in rows {
        s.push_str(&metrics_row(o).join(","));
        s.push('\n');
    }
    s
}

/// Orders by settling time; unsettled runs go last, ties keep input order.
pub fn rank_by_settling(rows: &mut [&EpisodeOutcome]) {
    rows.sort_by(|a, b| {
        let key = |o: &EpisodeOutcome| o.metrics.settling_time.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
}

/// Header plus one map per row, keyed by column name.
pub fn parse_csv_table(text: &str) -> Vec<std::collections::BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h.split(',').map(String::from).collect(),
        None => return Vec::new(),
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

pub fn tracking_csv(log: &[(f64, f64)]) -> String {
    let mut s = String::from("t,tracking_error\n");
    for (t, e) in log {
        s.push_str(&format!("{},{}\n", format_sig17(*t), format_sig17(*e)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        let leftovers = std::fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn table_parse() {
        let t = parse_csv_table("a,b\n1,\n3,4\n");
        assert_eq!(t.len(), 2);
        assert_eq!(t[0]["b"], "");
        assert_eq!(t[1]["a"], "3");
    }
}
