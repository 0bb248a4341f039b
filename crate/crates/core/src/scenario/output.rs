//! CSV serialization. Numbers carry nine significant digits.

use super::stats::{Aggregate, MetricTable, SegmentSummary};
use crate::error::Result;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Shortest `%g`-style rendering with nine significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let m = if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
        format!("{m}e{exp}")
    }
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(format_number).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_table(path: &Path, table: &MetricTable) -> Result<()> {
    write_rows(path, &table.columns, table.rows.iter().cloned())
}

/// `t` followed by `mean_<metric>` and `std_<metric>` for every metric.
pub fn write_aggregate(path: &Path, agg: &Aggregate) -> Result<()> {
    let mut header = vec!["t".to_string()];
    for c in &agg.columns {
        header.push(format!("mean_{c}"));
        header.push(format!("std_{c}"));
    }
    let rows = (0..agg.t.len()).map(|k| {
        let mut row = vec![agg.t[k]];
        for (m, s) in agg.mean[k].iter().zip(&agg.std[k]) {
            row.push(*m);
            row.push(*s);
        }
        row
    });
    write_rows(path, &header, rows)
}

pub fn write_summary(path: &Path, summaries: &[SegmentSummary], pair_names: &[String]) -> Result<()> {
    let mut text = String::from("segment,window_start,window_end,samples");
    for p in pair_names {
        let _ = write!(text, ",mean_{p},max_{p}");
    }
    text.push_str(",mean_err_pos_L,mean_objective,mean_cpu_ms,max_cpu_ms,fallback_rate,min_rpm,max_rpm\n");
    for s in summaries {
        let _ = write!(
            text,
            "{},{},{},{}",
            s.segment.letter(),
            format_number(s.window.0),
            format_number(s.window.1),
            s.samples
        );
        for (m, x) in s.mean_pair_errors.iter().zip(&s.max_pair_errors) {
            let _ = write!(text, ",{},{}", format_number(*m), format_number(*x));
        }
        for v in [
            s.mean_leader_position_error,
            s.mean_objective,
            s.mean_cpu_ms,
            s.max_cpu_ms,
            s.fallback_rate,
            s.min_rpm,
            s.max_rpm,
        ] {
            let _ = write!(text, ",{}", format_number(v));
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
