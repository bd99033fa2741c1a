use std::fmt::Write as _;
use std::str::FromStr;

use super::SimError;
use crate::crypto::WorkFactor;
use crate::station::{VerifierConfig, DEFAULT_CADENCE_MS};

pub const DEFAULT_SEED: u64 = 1;

/// Simulator knobs. Defaults are the evaluation settings used for the
/// published figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub perception_m: f64,
    pub fov_deg: f64,
    pub comm_range_m: f64,
    pub comm_delay_ms: u64,
    pub cadence_ms: u64,
    pub wf: WorkFactor,
    pub seed: u64,
    pub verifier: VerifierConfig,
    /// 0 counts a vehicle as observed only on ticks it is seen; otherwise it
    /// stays observed for this long after its last sighting.
    pub observed_window_ms: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            perception_m: 65.0,
            fov_deg: 120.0,
            comm_range_m: 300.0,
            comm_delay_ms: 1,
            cadence_ms: DEFAULT_CADENCE_MS,
            wf: WorkFactor::ONE,
            seed: DEFAULT_SEED,
            verifier: VerifierConfig::default(),
            observed_window_ms: 0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), SimError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SimError::BadParams(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        positive("perception_m", self.perception_m)?;
        positive("fov_deg", self.fov_deg)?;
        positive("comm_range_m", self.comm_range_m)?;
        if self.fov_deg > 360.0 {
            return Err(SimError::BadParams(format!(
                "fov_deg must be at most 360, got {}",
                self.fov_deg
            )));
        }
        if self.comm_delay_ms == 0 {
            return Err(SimError::BadParams("comm_delay_ms must be positive".into()));
        }
        if self.cadence_ms == 0 {
            return Err(SimError::BadParams("cadence_ms must be positive".into()));
        }
        let v = &self.verifier;
        if v.quota_limit == 0 || v.ttl_ms == 0 || v.ttl_confirmed_ms == 0 {
            return Err(SimError::BadParams(
                "quota and ttl values must be positive".into(),
            ));
        }
        if v.confirm_threshold < 2 {
            return Err(SimError::BadParams(
                "confirm_threshold must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Sets one parameter by name. Accepts the snake_case field names and the
    /// long table names (`perception_distance`, `camera_sensing_angle`,
    /// `communication_range`, `communication_delay`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, SimError> {
            value
                .parse()
                .map_err(|_| SimError::BadParams(format!("{key}: cannot parse {value:?}")))
        }
        let key = key.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let value = value.trim();
        match key.as_str() {
            "perception_m" | "perception_distance" => self.perception_m = num(&key, value)?,
            "fov_deg" | "camera_sensing_angle" => self.fov_deg = num(&key, value)?,
            "comm_range_m" | "communication_range" => self.comm_range_m = num(&key, value)?,
            "comm_delay_ms" | "communication_delay" => self.comm_delay_ms = num(&key, value)?,
            "cadence_ms" => self.cadence_ms = num(&key, value)?,
            "wf" | "work_factor" => {
                self.wf = WorkFactor::new(num(&key, value)?)
                    .map_err(|e| SimError::BadParams(format!("{key}: {e}")))?
            }
            "seed" => self.seed = num(&key, value)?,
            "quota_limit" => self.verifier.quota_limit = num(&key, value)?,
            "ttl_ms" => self.verifier.ttl_ms = num(&key, value)?,
            "ttl_confirmed_ms" => self.verifier.ttl_confirmed_ms = num(&key, value)?,
            "confirm_threshold" => self.verifier.confirm_threshold = num(&key, value)?,
            "local_counts" => self.verifier.local_counts = num(&key, value)?,
            "observed_window_ms" => self.observed_window_ms = num(&key, value)?,
            _ => return Err(SimError::BadParams(format!("unknown parameter {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<Self, SimError> {
        let mut p = Self::default();
        p.apply_file(text)?;
        Ok(p)
    }

    pub fn apply_file(&mut self, text: &str) -> Result<(), SimError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SimError::Parse {
                line: idx + 1,
                context: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| SimError::Parse {
                line: idx + 1,
                context: e.to_string(),
            })?;
        }
        self.validate()
    }

    pub fn to_file(&self) -> String {
        let mut out = String::new();
        let v = &self.verifier;
        let _ = writeln!(out, "perception_m = {}", self.perception_m);
        let _ = writeln!(out, "fov_deg = {}", self.fov_deg);
        let _ = writeln!(out, "comm_range_m = {}", self.comm_range_m);
        let _ = writeln!(out, "comm_delay_ms = {}", self.comm_delay_ms);
        let _ = writeln!(out, "cadence_ms = {}", self.cadence_ms);
        let _ = writeln!(out, "wf = {}", self.wf.iterations());
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "quota_limit = {}", v.quota_limit);
        let _ = writeln!(out, "ttl_ms = {}", v.ttl_ms);
        let _ = writeln!(out, "ttl_confirmed_ms = {}", v.ttl_confirmed_ms);
        let _ = writeln!(out, "confirm_threshold = {}", v.confirm_threshold);
        let _ = writeln!(out, "local_counts = {}", v.local_counts);
        let _ = writeln!(out, "observed_window_ms = {}", self.observed_window_ms);
        out
    }
}
