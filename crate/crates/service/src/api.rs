//! JSON bodies exchanged with the service.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;
use viderex_core::nav::FeedbackSettings;

/// Multipart field carrying the route manifest on upload.
pub const MANIFEST_PART: &str = "manifest";
/// Multipart field carrying one frame file; repeated in manifest order.
pub const FRAME_PART: &str = "frame";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub route_name: String,
    #[serde(flatten)]
    pub settings: FeedbackSettings,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: Uuid,
    pub route_name: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Uploaded {
    pub id: String,
    pub frame_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
