//! Versioned JSON report envelope shared by `eval` and `defend-detect`.

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct VersionedReport<T: Serialize> {
    pub schema_version: u32,
    pub config_fingerprint: String,
    #[serde(flatten)]
    pub body: T,
}

pub fn to_json<T: Serialize>(fingerprint: &str, body: T) -> String {
    let report =
        VersionedReport { schema_version: SCHEMA_VERSION, config_fingerprint: fingerprint.to_string(), body };
    serde_json::to_string_pretty(&report).expect("report serializes")
}
