//! Uplink wire protocol: one JSON object per line in each direction.
//!
//! Edge to hub:
//!
//! ```text
//! {"type":"trip_summary","message_id":"<uuid>","schema_version":1,"payload":{...}}
//! ```
//!
//! Hub to edge, one reply per message: `{"ack":"<uuid>"}` or `{"err":"<uuid>"}`.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use uuid::Uuid;

use crate::model::{DailySummary, TripSummary};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRIP_SUMMARY: &str = "trip_summary";
pub const DAILY_SUMMARY: &str = "daily_summary";

/// Namespace for content-derived message ids.
const MESSAGE_NAMESPACE: Uuid = Uuid::from_u128(0x6d1f_52a4_8c3e_4b7a_9a0e_51ed_9e70_5151);

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type {kind:?}")]
    UnknownType { message_id: String, kind: String },
    #[error("unsupported schema version {version}")]
    UnsupportedVersion { message_id: String, version: u64 },
    #[error("invalid {kind} payload: {reason}")]
    BadPayload {
        message_id: String,
        kind: String,
        reason: String,
    },
}

impl WireError {
    /// Id to answer with a negative acknowledgment, if the message carried one.
    pub fn message_id(&self) -> Option<&str> {
        match self {
            WireError::Malformed(_) => None,
            WireError::UnknownType { message_id, .. }
            | WireError::UnsupportedVersion { message_id, .. }
            | WireError::BadPayload { message_id, .. } => Some(message_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    TripSummary(TripSummary),
    DailySummary(DailySummary),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::TripSummary(_) => TRIP_SUMMARY,
            Payload::DailySummary(_) => DAILY_SUMMARY,
        }
    }

    pub fn date(&self) -> NaiveDate {
        match self {
            Payload::TripSummary(s) => s.date,
            Payload::DailySummary(s) => s.date,
        }
    }

    fn to_value(&self) -> Value {
        match self {
            Payload::TripSummary(s) => serde_json::to_value(s),
            Payload::DailySummary(s) => serde_json::to_value(s),
        }
        .expect("summaries always serialize")
    }

    /// `{"type":..,"payload":..}` with no per-message fields; identical for
    /// identical summaries.
    pub fn canonical_line(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            #[serde(rename = "type")]
            kind: &'a str,
            payload: Value,
        }
        serde_json::to_string(&Canonical {
            kind: self.kind(),
            payload: self.to_value(),
        })
        .expect("summaries always serialize")
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    kind: String,
    message_id: String,
    schema_version: u64,
    payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub message_id: String,
    pub payload: Payload,
}

impl WireMessage {
    /// Wraps a payload under an id derived from its content, so a replay of
    /// the same feed produces the same ids and the hub absorbs it as duplicates.
    pub fn new(payload: Payload) -> Self {
        let id = Uuid::new_v5(&MESSAGE_NAMESPACE, payload.canonical_line().as_bytes());
        Self {
            message_id: id.to_string(),
            payload,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.payload.kind()
    }

    /// Serialized form without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(&Envelope {
            kind: self.kind().to_string(),
            message_id: self.message_id.clone(),
            schema_version: SCHEMA_VERSION as u64,
            payload: self.payload.to_value(),
        })
        .expect("summaries always serialize")
    }

    pub fn parse(line: &str) -> Result<Self, WireError> {
        let envelope: Envelope =
            serde_json::from_str(line.trim_end()).map_err(|e| WireError::Malformed(e.to_string()))?;
        let Envelope {
            kind,
            message_id,
            schema_version,
            payload,
        } = envelope;
        if message_id.is_empty() {
            return Err(WireError::Malformed("empty message_id".into()));
        }
        if schema_version != SCHEMA_VERSION as u64 {
            return Err(WireError::UnsupportedVersion {
                message_id,
                version: schema_version,
            });
        }
        let bad = |kind: &str, e: serde_json::Error| WireError::BadPayload {
            message_id: message_id.clone(),
            kind: kind.to_string(),
            reason: e.to_string(),
        };
        let payload = match kind.as_str() {
            TRIP_SUMMARY => Payload::TripSummary(serde_json::from_value(payload).map_err(|e| bad(&kind, e))?),
            DAILY_SUMMARY => Payload::DailySummary(serde_json::from_value(payload).map_err(|e| bad(&kind, e))?),
            _ => return Err(WireError::UnknownType { message_id, kind }),
        };
        Ok(Self { message_id, payload })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reply {
    Ack(String),
    Err(String),
}

impl Reply {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("replies always serialize")
    }

    pub fn parse(line: &str) -> Option<Reply> {
        serde_json::from_str(line.trim_end()).ok()
    }
}
