use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::Result;

/// One control period.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    /// True plant state at step `k`.
    pub x: DVector<f64>,
    /// Input reaching the plant: delayed feedback plus curvature feed-forward.
    pub u_applied: DVector<f64>,
    /// Feedback command computed at step `k`.
    pub u_computed: DVector<f64>,
    pub d_o: usize,
    pub d_i: usize,
    /// Observer state before the update at `k` (predictor controllers only).
    pub z_hat: Option<DVector<f64>>,
    /// Predicted state at the arrival time of `u_computed`.
    pub x_pred: Option<DVector<f64>>,
    /// Delayed, noisy measurement received at `k`.
    pub y_meas: DVector<f64>,
    pub rho_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogMeta {
    pub seed: u64,
    pub config_hash: String,
    pub controller: String,
    pub state_names: Vec<String>,
    /// State index of the lateral offset used by the metrics.
    pub offset_index: usize,
    /// State index of the heading error used by the metrics.
    pub heading_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub meta: LogMeta,
    pub records: Vec<StepRecord>,
    pub output_delays: Vec<usize>,
    pub input_delays: Vec<usize>,
}

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

fn push_vec(line: &mut String, v: &DVector<f64>) {
    for x in v.iter() {
        let _ = write!(line, ",{x}");
    }
}

fn push_opt(line: &mut String, v: Option<&DVector<f64>>, len: usize) {
    match v {
        Some(v) => push_vec(line, v),
        None => line.push_str(&",".repeat(len)),
    }
}

impl SimulationLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn dims(&self) -> (usize, usize, usize) {
        self.records.first().map_or((self.meta.state_names.len(), 1, 0), |r| {
            (r.x.len(), r.u_computed.len(), r.y_meas.len())
        })
    }

    pub fn csv_header(&self) -> String {
        let (n, m, p) = self.dims();
        let mut cols: Vec<String> = vec!["k".into(), "t".into()];
        cols.extend(self.meta.state_names.iter().cloned());
        if m == 1 {
            cols.push("u_applied".into());
            cols.push("u_computed".into());
        } else {
            cols.extend(indexed("u_applied", m));
            cols.extend(indexed("u_computed", m));
        }
        cols.push("d_O".into());
        cols.push("d_I".into());
        cols.extend(indexed("zhat", n));
        cols.extend(indexed("xpred", n));
        cols.extend(indexed("y_meas", p));
        cols.push("rho_ref".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let (n, _, _) = self.dims();
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.records {
            let mut line = format!("{},{}", r.k, r.t);
            push_vec(&mut line, &r.x);
            push_vec(&mut line, &r.u_applied);
            push_vec(&mut line, &r.u_computed);
            let _ = write!(line, ",{},{}", r.d_o, r.d_i);
            push_opt(&mut line, r.z_hat.as_ref(), n);
            push_opt(&mut line, r.x_pred.as_ref(), n);
            push_vec(&mut line, &r.y_meas);
            let _ = write!(line, ",{}", r.rho_ref);
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
