use super::config::{ScenarioConfig, Segment};
use super::sim::RunLog;
use crate::error::{Error, Result};

fn label(vehicle: usize) -> String {
    if vehicle == 0 {
        "L".into()
    } else {
        format!("f{vehicle}")
    }
}

/// Flat per-step table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Per-step table of a run in the documented column order.
pub fn run_table(log: &RunLog) -> MetricTable {
    let n = log.records.first().map_or(0, |r| r.states.len());
    let mut columns = vec!["t".to_string()];
    for i in 0..n {
        for c in ["x", "y", "z", "yaw"] {
            columns.push(format!("veh{i}_{c}"));
        }
        for r in 1..=4 {
            columns.push(format!("veh{i}_rpm{r}"));
        }
    }
    for e in &log.edges {
        columns.push(format!("err_{}_{}", label(e.target), label(e.observer)));
    }
    for c in ["err_pos_L", "err_yaw_L", "objective", "kkt", "sqp_iters", "cpu_ms", "fallback", "fov_ok"] {
        columns.push(c.into());
    }
    let rows = log
        .records
        .iter()
        .map(|rec| {
            let mut row = vec![rec.t];
            for (s, rpm) in rec.states.iter().zip(&rec.rpm) {
                row.extend([s.position.x, s.position.y, s.position.z, s.yaw()]);
                row.extend(rpm);
            }
            row.extend(&rec.pair_errors);
            row.extend([
                rec.leader_position_error,
                rec.leader_yaw_error,
                rec.objective,
                rec.kkt,
                rec.sqp_iters as f64,
                rec.cpu_time * 1e3,
                f64::from(u8::from(rec.fallback)),
                f64::from(u8::from(rec.fov_ok)),
            ]);
            row
        })
        .collect();
    MetricTable { columns, rows }
}

/// Per-step mean and sample standard deviation of every metric over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    pub columns: Vec<String>,
    pub t: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

/// Mean and sample standard deviation; zero spread for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate_tables(tables: &[MetricTable]) -> Result<Aggregate> {
    let Some(first) = tables.first() else {
        return Err(Error::Aggregation("no runs to aggregate".into()));
    };
    for (k, t) in tables.iter().enumerate() {
        if t.rows.len() != first.rows.len() || t.columns != first.columns {
            return Err(Error::Aggregation(format!(
                "run {k} has {} steps and {} columns, run 0 has {} and {}",
                t.rows.len(),
                t.columns.len(),
                first.rows.len(),
                first.columns.len()
            )));
        }
    }
    let columns: Vec<String> = first.columns[1..].to_vec();
    let mut mean = Vec::with_capacity(first.rows.len());
    let mut std = Vec::with_capacity(first.rows.len());
    for step in 0..first.rows.len() {
        let (m, s): (Vec<f64>, Vec<f64>) = (1..first.columns.len())
            .map(|c| {
                let vals: Vec<f64> = tables.iter().map(|t| t.rows[step][c]).collect();
                mean_std(&vals)
            })
            .unzip();
        mean.push(m);
        std.push(s);
    }
    Ok(Aggregate { runs: tables.len(), columns, t: first.rows.iter().map(|r| r[0]).collect(), mean, std })
}

pub fn aggregate_runs(logs: &[RunLog]) -> Result<Aggregate> {
    aggregate_tables(&logs.iter().map(run_table).collect::<Vec<_>>())
}

/// Steady-state statistics of one segment over every run.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSummary {
    pub segment: Segment,
    /// Steady-state window, s.
    pub window: (f64, f64),
    pub samples: usize,
    /// Time- and run-averaged formation error norm per configured edge.
    pub mean_pair_errors: Vec<f64>,
    pub max_pair_errors: Vec<f64>,
    pub mean_leader_position_error: f64,
    pub mean_objective: f64,
    pub mean_cpu_ms: f64,
    pub max_cpu_ms: f64,
    pub fallback_rate: f64,
    pub max_rpm: f64,
    pub min_rpm: f64,
}

/// Window of `segment` after the settling time, or its second half if the
/// segment is shorter than that.
pub fn steady_window(cfg: &ScenarioConfig, segment: Segment) -> (f64, f64) {
    let start = cfg.schedule.start_of(segment);
    let end = cfg.schedule.end_of(segment);
    let skip = cfg.settle_time.min(0.5 * (end - start));
    (start + skip, end)
}

pub fn segment_summaries(cfg: &ScenarioConfig, logs: &[RunLog]) -> Result<Vec<SegmentSummary>> {
    if logs.is_empty() {
        return Err(Error::Aggregation("no runs to summarize".into()));
    }
    let mut out = Vec::new();
    for segment in Segment::ALL {
        if cfg.schedule.durations()[segment as usize] <= 0.0 {
            continue;
        }
        let (t0, t1) = steady_window(cfg, segment);
        let recs: Vec<_> =
            logs.iter().flat_map(|l| l.records.iter()).filter(|r| r.t >= t0 - 1e-9 && r.t < t1 - 1e-9).collect();
        if recs.is_empty() {
            continue;
        }
        let count = recs.len() as f64;
        let pairs = recs[0].pair_errors.len();
        let mut mean_pair = vec![0.0; pairs];
        let mut max_pair = vec![0.0_f64; pairs];
        for r in &recs {
            for (p, e) in r.pair_errors.iter().enumerate() {
                mean_pair[p] += e / count;
                max_pair[p] = max_pair[p].max(*e);
            }
        }
        let rpms = || recs.iter().flat_map(|r| r.rpm.iter().flatten().copied());
        out.push(SegmentSummary {
            segment,
            window: (t0, t1),
            samples: recs.len(),
            mean_pair_errors: mean_pair,
            max_pair_errors: max_pair,
            mean_leader_position_error: recs.iter().map(|r| r.leader_position_error).sum::<f64>() / count,
            mean_objective: recs.iter().map(|r| r.objective).sum::<f64>() / count,
            mean_cpu_ms: recs.iter().map(|r| r.cpu_time * 1e3).sum::<f64>() / count,
            max_cpu_ms: recs.iter().map(|r| r.cpu_time * 1e3).fold(0.0, f64::max),
            fallback_rate: recs.iter().filter(|r| r.fallback).count() as f64 / count,
            max_rpm: rpms().fold(f64::NEG_INFINITY, f64::max),
            min_rpm: rpms().fold(f64::INFINITY, f64::min),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(v: f64, rows: usize) -> MetricTable {
        MetricTable { columns: vec!["t".into(), "a".into()], rows: (0..rows).map(|k| vec![k as f64, v]).collect() }
    }

    #[test]
    fn single_run_has_zero_spread() {
        let agg = aggregate_tables(&[table(4.0, 3)]).unwrap();
        assert!(agg.std.iter().flatten().all(|s| *s == 0.0));
        assert_eq!(agg.mean[2], vec![4.0]);
    }

    #[test]
    fn two_constant_runs() {
        let agg = aggregate_tables(&[table(1.0, 2), table(3.0, 2)]).unwrap();
        assert_eq!(agg.mean[1][0], 2.0);
        assert!((agg.std[1][0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(aggregate_tables(&[table(1.0, 2), table(1.0, 3)]), Err(Error::Aggregation(_))));
        assert!(aggregate_tables(&[]).is_err());
    }
}
