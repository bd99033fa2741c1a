use std::fmt::Write as _;

use super::SimError;
use crate::crypto::Pseudonym;

pub const METRICS_HEADER: &str =
    "t_s,total,observed,confirmed,proofs,proofs_confirmed,cv_rate,cp_rate";
pub const STATION_HEADER: &str =
    "key,pseudonym,proofs_sent,proofs_received,confirmations,recovery_failed,quota_dropped";

/// Counters for one tick. Rates are 0 when their denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickMetrics {
    pub time_ms: u64,
    pub total_vehicles: usize,
    pub observed_vehicles: usize,
    pub confirmed_vehicles: usize,
    pub proofs_generated: usize,
    pub proofs_confirmed: usize,
    pub confirmed_vehicle_rate: f64,
    pub confirmed_proof_rate: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl TickMetrics {
    pub fn new(
        time_ms: u64,
        total_vehicles: usize,
        observed_vehicles: usize,
        confirmed_vehicles: usize,
        proofs_generated: usize,
        proofs_confirmed: usize,
    ) -> Self {
        Self {
            time_ms,
            total_vehicles,
            observed_vehicles,
            confirmed_vehicles,
            proofs_generated,
            proofs_confirmed,
            confirmed_vehicle_rate: ratio(confirmed_vehicles, observed_vehicles),
            confirmed_proof_rate: ratio(proofs_confirmed, proofs_generated),
        }
    }

    pub fn t_s(&self) -> f64 {
        self.time_ms as f64 / 1000.0
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{}.{:03},{},{},{},{},{},{:.6},{:.6}",
            self.time_ms / 1000,
            self.time_ms % 1000,
            self.total_vehicles,
            self.observed_vehicles,
            self.confirmed_vehicles,
            self.proofs_generated,
            self.proofs_confirmed,
            self.confirmed_vehicle_rate,
            self.confirmed_proof_rate
        )
    }

    /// Reads a row written by [`to_csv_row`](Self::to_csv_row). Rates are
    /// recomputed from the counts.
    pub fn parse_csv_row(row: &str, line: usize) -> Result<Self, SimError> {
        let bad = |what: &str| SimError::Parse {
            line,
            context: format!("bad {what} in {row:?}"),
        };
        let f: Vec<&str> = row.trim().split(',').collect();
        if f.len() != 8 {
            return Err(bad("field count"));
        }
        let t: f64 = f[0].parse().map_err(|_| bad("t_s"))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(bad("t_s"));
        }
        let n = |i: usize, what: &str| f[i].parse::<usize>().map_err(|_| bad(what));
        Ok(Self::new(
            (t * 1000.0).round() as u64,
            n(1, "total")?,
            n(2, "observed")?,
            n(3, "confirmed")?,
            n(4, "proofs")?,
            n(5, "proofs_confirmed")?,
        ))
    }
}

pub fn metrics_csv(rows: &[TickMetrics]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<TickMetrics>, SimError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => {
            return Err(SimError::Parse {
                line: 1,
                context: format!("expected header {METRICS_HEADER:?}"),
            })
        }
    }
    lines
        .map(|(i, l)| TickMetrics::parse_csv_row(l, i + 1))
        .collect()
}

/// `(total, cp_rate)` for ticks that generated proofs, the input of the
/// logarithmic fit.
pub fn fit_points(rows: &[TickMetrics]) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.proofs_generated > 0 && r.total_vehicles > 0)
        .map(|r| (r.total_vehicles as f64, r.confirmed_proof_rate))
        .collect()
}

/// Ratio of summed counts over a run: confirmed proofs over generated proofs.
pub fn aggregate_proof_rate(rows: &[TickMetrics]) -> f64 {
    let confirmed = rows.iter().map(|r| r.proofs_confirmed).sum();
    let generated = rows.iter().map(|r| r.proofs_generated).sum();
    ratio(confirmed, generated)
}

/// Per-station totals over a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationSummary {
    pub key: String,
    pub pseudonym: Pseudonym,
    pub proofs_sent: u64,
    pub proofs_received: u64,
    pub confirmations: u64,
    pub recovery_failed: u64,
    pub quota_dropped: u64,
}

pub fn station_csv(rows: &[StationSummary]) -> String {
    let mut out = String::new();
    out.push_str(STATION_HEADER);
    out.push('\n');
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.key,
            s.pseudonym,
            s.proofs_sent,
            s.proofs_received,
            s.confirmations,
            s.recovery_failed,
            s.quota_dropped
        );
    }
    out
}
