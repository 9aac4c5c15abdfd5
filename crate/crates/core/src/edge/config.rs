use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveTime;
use chrono_tz::Tz;

use crate::config::{ConfigError, KeyValues};
use crate::model::parse_time_of_day;
use crate::preprocess::CleaningParams;

/// Runtime settings of one edge process.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConfig {
    pub stop_move_threshold_m: f64,
    pub cadence_s: i64,
    pub missing_slot_drop_threshold: u64,
    pub trip_idle_timeout_s: i64,
    pub reorder_window_s: i64,
    pub day_rollover: NaiveTime,
    pub timezone: Tz,
    pub hub_endpoint: String,
    pub uplink_buffer_capacity: usize,
    pub uplink_backoff_base_ms: u64,
    pub uplink_backoff_cap_ms: u64,
    /// How long to keep retrying queued messages once the source is exhausted.
    pub shutdown_drain_timeout_s: u64,
    pub alias_table: Option<PathBuf>,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            stop_move_threshold_m: 15.0,
            cadence_s: 5,
            missing_slot_drop_threshold: 100,
            trip_idle_timeout_s: 120,
            reorder_window_s: 15,
            day_rollover: NaiveTime::MIN,
            timezone: Tz::UTC,
            hub_endpoint: "127.0.0.1:7051".into(),
            uplink_buffer_capacity: 10_000,
            uplink_backoff_base_ms: 1_000,
            uplink_backoff_cap_ms: 60_000,
            shutdown_drain_timeout_s: 30,
            alias_table: None,
        }
    }
}

impl EdgeConfig {
    pub const KEYS: &'static [&'static str] = &[
        "stop_move_threshold_m",
        "cadence_s",
        "missing_slot_drop_threshold",
        "trip_idle_timeout_s",
        "reorder_window_s",
        "day_rollover",
        "timezone",
        "hub_endpoint",
        "uplink_buffer_capacity",
        "uplink_backoff_base_ms",
        "uplink_backoff_cap_ms",
        "shutdown_drain_timeout_s",
        "alias_table",
    ];

    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(Self::KEYS)?;
        let d = Self::default();
        let config = Self {
            stop_move_threshold_m: kv.typed_or("stop_move_threshold_m", d.stop_move_threshold_m)?,
            cadence_s: kv.typed_or("cadence_s", d.cadence_s)?,
            missing_slot_drop_threshold: kv.typed_or("missing_slot_drop_threshold", d.missing_slot_drop_threshold)?,
            trip_idle_timeout_s: kv.typed_or("trip_idle_timeout_s", d.trip_idle_timeout_s)?,
            reorder_window_s: kv.typed_or("reorder_window_s", d.reorder_window_s)?,
            day_rollover: kv
                .parse_with("day_rollover", |v| parse_time_of_day(v).ok_or_else(|| "expected HH:MM".to_string()))?
                .unwrap_or(d.day_rollover),
            timezone: kv.typed_or("timezone", d.timezone)?,
            hub_endpoint: kv.get("hub_endpoint").map_or(d.hub_endpoint, str::to_string),
            uplink_buffer_capacity: kv.typed_or("uplink_buffer_capacity", d.uplink_buffer_capacity)?,
            uplink_backoff_base_ms: kv.typed_or("uplink_backoff_base_ms", d.uplink_backoff_base_ms)?,
            uplink_backoff_cap_ms: kv.typed_or("uplink_backoff_cap_ms", d.uplink_backoff_cap_ms)?,
            shutdown_drain_timeout_s: kv.typed_or("shutdown_drain_timeout_s", d.shutdown_drain_timeout_s)?,
            alias_table: kv.get("alias_table").filter(|v| !v.is_empty()).map(PathBuf::from),
        };
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and applies `EDGETRANSIT_*` overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::load(path)?;
        kv.apply_process_env(Self::KEYS);
        Self::from_key_values(&kv)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.stop_move_threshold_m > 0.0) {
            return invalid("stop_move_threshold_m must be positive");
        }
        if self.cadence_s <= 0 || self.trip_idle_timeout_s <= 0 || self.reorder_window_s <= 0 {
            return invalid("cadence_s, trip_idle_timeout_s and reorder_window_s must be positive");
        }
        if self.missing_slot_drop_threshold == 0 || self.uplink_buffer_capacity == 0 {
            return invalid("missing_slot_drop_threshold and uplink_buffer_capacity must be positive");
        }
        if self.uplink_backoff_base_ms == 0 || self.uplink_backoff_cap_ms < self.uplink_backoff_base_ms {
            return invalid("uplink backoff base must be positive and not above the cap");
        }
        if self.reorder_window_s >= self.trip_idle_timeout_s {
            return invalid("reorder_window_s must be below trip_idle_timeout_s");
        }
        if self.hub_endpoint.rsplit_once(':').is_none_or(|(_, p)| p.parse::<u16>().is_err()) {
            return invalid("hub_endpoint must be host:port");
        }
        Ok(())
    }

    pub fn cleaning(&self) -> CleaningParams {
        CleaningParams {
            cadence_s: self.cadence_s,
            drop_threshold: self.missing_slot_drop_threshold,
        }
    }

    pub fn backoff_base(&self) -> Duration {
        Duration::from_millis(self.uplink_backoff_base_ms)
    }

    pub fn backoff_cap(&self) -> Duration {
        Duration::from_millis(self.uplink_backoff_cap_ms)
    }
}
