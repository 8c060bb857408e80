//! Per-epoch training trace CSV.

use std::path::Path;

use uhdiqa_core::metrics::MetricsReport;
use uhdiqa_core::train::EpochRecord;

use crate::{IoError, Result};

pub fn to_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::from(EpochRecord::CSV_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, to_csv(trace)).map_err(|e| IoError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(EpochRecord::CSV_HEADER) {
        return Err(IoError::format(path, "unexpected trace header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || IoError::format(path, format!("trace row {}: `{line}`", i + 1));
            if f.len() != 8 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                lr: num(1)?,
                train_loss: num(2)?,
                val: MetricsReport { srcc: num(3)?, plcc: num(4)?, krcc: num(5)?, rmse: num(6)?, mae: num(7)? },
            })
        })
        .collect()
}
