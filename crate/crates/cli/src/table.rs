//! Multi-seed score tables written as CSV.

use std::fmt::Write as _;

use graphclust::Scores;

pub const HEADER: &str = "setting,seed,acc,nmi,ari";

/// Per-seed rows grouped by setting, in insertion order.
#[derive(Debug, Default)]
pub struct ScoreTable {
    groups: Vec<(String, Vec<(u64, Scores)>)>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ScoreTable {
    pub fn push(&mut self, setting: &str, seed: u64, scores: Scores) {
        match self.groups.iter_mut().find(|(s, _)| s == setting) {
            Some((_, rows)) => rows.push((seed, scores)),
            None => self.groups.push((setting.to_string(), vec![(seed, scores)])),
        }
    }

    /// CSV in percent: one row per seed, then `mean` and `std` rows per setting.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for (setting, rows) in &self.groups {
            for (seed, s) in rows {
                let _ = writeln!(out, "{setting},{seed},{},{},{}", 100.0 * s.acc, 100.0 * s.nmi, 100.0 * s.ari);
            }
            let column = |f: fn(&Scores) -> f64| mean_std(&rows.iter().map(|(_, s)| 100.0 * f(s)).collect::<Vec<_>>());
            let (acc, nmi, ari) = (column(|s| s.acc), column(|s| s.nmi), column(|s| s.ari));
            let _ = writeln!(out, "{setting},mean,{},{},{}", acc.0, nmi.0, ari.0);
            let _ = writeln!(out, "{setting},std,{},{},{}", acc.1, nmi.1, ari.1);
        }
        out
    }
}
