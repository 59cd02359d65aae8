use std::time::Instant;

use serde::Serialize;

/// Provenance of one invocation, embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub params: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: &'static str,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn new<P: Serialize>(subcommand: &'static str, params: &P, seed: Option<u64>, started: Instant) -> Self {
        RunManifest {
            subcommand,
            params: serde_json::to_value(params).expect("arguments serialize"),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds: started.elapsed().as_secs_f64(),
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest serializes")
    }

    /// Single-line form used as a `#` comment at the top of CSV files.
    pub fn csv_comment(&self) -> String {
        format!(
            "# manifest: {}\n",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }
}
