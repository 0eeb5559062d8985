use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mae,
    Accuracy,
}

/// `m[i][j]`: metric on task `j` after training through task `i` (0-based).
/// `random_init_ref[j]`: the metric on task `j` under the untrained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsMatrix {
    pub tasks: Vec<String>,
    pub m: Vec<Vec<Option<f64>>>,
    pub random_init_ref: Option<Vec<f64>>,
    pub kind: MetricKind,
}

const RANDOM_INIT_ROW: &str = "random_init";

impl MetricsMatrix {
    pub fn new(tasks: Vec<String>, kind: MetricKind) -> Self {
        let t = tasks.len();
        Self { tasks, m: vec![vec![None; t]; t], random_init_ref: None, kind }
    }

    /// Builds a complete matrix from rows.
    pub fn from_rows(rows: Vec<Vec<f64>>, random_init_ref: Option<Vec<f64>>, kind: MetricKind) -> Result<Self> {
        let t = rows.len();
        let tasks = (1..=t).map(|i| format!("task{i}")).collect();
        let mut mm = Self::new(tasks, kind);
        for (i, row) in rows.into_iter().enumerate() {
            ensure!(row.len() == t, "row {i} has {} entries, expected {t}", row.len());
            for (j, v) in row.into_iter().enumerate() {
                mm.set(i, j, v)?;
            }
        }
        if let Some(r) = random_init_ref {
            mm.set_random_init_ref(r)?;
        }
        Ok(mm)
    }

    pub fn size(&self) -> usize {
        self.tasks.len()
    }

    fn check_value(&self, v: f64) -> Result<()> {
        match self.kind {
            MetricKind::Mae => ensure!(v.is_finite() && v >= 0.0, "error metric must be finite and >= 0, got {v}"),
            MetricKind::Accuracy => ensure!((0.0..=100.0).contains(&v), "accuracy must lie in [0, 100], got {v}"),
        }
        Ok(())
    }

    pub fn set(&mut self, after: usize, task: usize, v: f64) -> Result<()> {
        let t = self.size();
        ensure!(after < t && task < t, "entry ({after}, {task}) outside a {t}x{t} matrix");
        self.check_value(v)?;
        self.m[after][task] = Some(v);
        Ok(())
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.m.get(after)?.get(task).copied().flatten()
    }

    pub fn set_random_init_ref(&mut self, r: Vec<f64>) -> Result<()> {
        ensure!(r.len() == self.size(), "reference vector has {} entries, expected {}", r.len(), self.size());
        for &v in &r {
            self.check_value(v)?;
        }
        self.random_init_ref = Some(r);
        Ok(())
    }

    fn need(&self, i: usize, j: usize) -> Result<f64> {
        self.get(i, j).ok_or_else(|| Error::InvalidArgument(format!("metrics matrix entry ({}, {}) is missing", i + 1, j + 1)))
    }

    /// Rows are after-task, columns eval-task; a final `random_init` row
    /// holds the reference vector when present. Missing entries are empty.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["after_task".to_string()];
        header.extend(self.tasks.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for (name, row) in self.tasks.iter().zip(&self.m) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|&v| fmt(v)));
            w.write_record(&rec).expect("in-memory write");
        }
        if let Some(r) = &self.random_init_ref {
            let mut rec = vec![RANDOM_INIT_ROW.to_string()];
            rec.extend(r.iter().map(|&v| fmt(Some(v))));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_str(text: &str, kind: MetricKind) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("metrics CSV: {msg}"));
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let tasks: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut mm = Self::new(tasks, kind);
        let mut row = 0;
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let values: Vec<Option<f64>> = rec
                .iter()
                .skip(1)
                .map(|s| if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|_| bad(format!("bad number `{s}`"))) })
                .collect::<Result<_>>()?;
            if rec.get(0) == Some(RANDOM_INIT_ROW) {
                mm.set_random_init_ref(values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())?;
                continue;
            }
            ensure!(row < mm.size(), "more rows than tasks");
            for (j, v) in values.into_iter().enumerate() {
                if let Some(v) = v {
                    mm.set(row, j, v)?;
                }
            }
            row += 1;
        }
        Ok(mm)
    }
}

/// Mean of the final row.
pub fn avg_mae(mm: &MetricsMatrix) -> Result<f64> {
    let t = mm.size();
    ensure!(t >= 1, "empty metrics matrix");
    let mut sum = 0.0;
    for j in 0..t {
        sum += mm.need(t - 1, j)?;
    }
    Ok(sum / t as f64)
}

/// `(1/(T-1)) * sum_{i<T} (M[i][i] - M[T][i])`; negative under forgetting
/// for error metrics.
pub fn bwt(mm: &MetricsMatrix) -> Result<f64> {
    let t = mm.size();
    ensure!(t >= 2, "backward transfer needs at least 2 tasks");
    let mut sum = 0.0;
    for i in 0..t - 1 {
        sum += mm.need(i, i)? - mm.need(t - 1, i)?;
    }
    Ok(sum / (t - 1) as f64)
}

/// `(1/(T-1)) * sum_{i>=2} (r[i] - M[i-1][i])`.
pub fn fwt(mm: &MetricsMatrix) -> Result<f64> {
    let t = mm.size();
    ensure!(t >= 2, "forward transfer needs at least 2 tasks");
    let r = mm
        .random_init_ref
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("forward transfer needs the random-init reference vector".into()))?;
    let mut sum = 0.0;
    for i in 1..t {
        sum += r[i] - mm.need(i - 1, i)?;
    }
    Ok(sum / (t - 1) as f64)
}
