use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{config, Result};
use crate::pipeline::LossBreakdown;

pub const METRICS_HEADER: &str =
    "step,loss,supervised,unlabeled,premix,rotation,test_error,kl,fairness,confidence,mutual_information";

/// One evaluation interval. Losses are averaged over the steps since the
/// previous row; the rest is measured at `step` with the EMA weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub breakdown: LossBreakdown,
    pub test_error: f64,
    pub kl: f64,
    pub fairness: f64,
    pub confidence: f64,
    pub mutual_information: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}", self.step);
        let b = &self.breakdown;
        for v in [
            self.loss,
            b.supervised,
            b.unlabeled,
            b.premix,
            b.rotation,
            self.test_error,
            self.kl,
            self.fairness,
            self.confidence,
            self.mutual_information,
        ] {
            let _ = write!(s, ",{v:.9}");
        }
        s
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 11 {
            return Err(config(format!("metrics row has {} fields, expected 11", f.len())));
        }
        fn num<T: FromStr>(s: &str) -> Result<T> {
            s.parse().map_err(|_| config(format!("bad metrics value {s:?}")))
        }
        Ok(Self {
            step: num(f[0])?,
            loss: num(f[1])?,
            breakdown: LossBreakdown {
                supervised: num(f[2])?,
                unlabeled: num(f[3])?,
                premix: num(f[4])?,
                rotation: num(f[5])?,
            },
            test_error: num(f[6])?,
            kl: num(f[7])?,
            fairness: num(f[8])?,
            confidence: num(f[9])?,
            mutual_information: num(f[10])?,
        })
    }
}

/// Parses a metrics file written by training.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        _ => return Err(config("metrics file has an unexpected header")),
    }
    lines.filter(|l| !l.trim().is_empty()).map(MetricsRow::from_csv).collect()
}
