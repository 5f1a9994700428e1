//! Run reports: the structured record a bench or inference run emits.
//! One JSON document per run, stable schema, rendering lives in the CLI.

use serde::{Deserialize, Serialize};

use crate::phe::OpCounters;
use crate::transport::ByteCounters;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub kind: String,
    pub client: OpCounters,
    pub server: OpCounters,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub network: String,
    pub backend: String,
    pub layers: Vec<LayerReport>,
    pub client_total: OpCounters,
    pub server_total: OpCounters,
    /// Byte tallies from the client's side of the channel.
    pub bytes: ByteCounters,
    pub wall_ms: f64,
    pub saturation_count: u64,
    /// Present when an oracle comparison was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_match: Option<bool>,
}

impl RunReport {
    /// Both parties' permutation counters; the protocol keeps these at
    /// exactly zero.
    pub fn perm_total(&self) -> u64 {
        self.client_total.perm + self.server_total.perm
    }

    /// Combined Mult / Add across both parties for one layer, the unit the
    /// complexity table counts in (ct+ct and ct+pt additions both count as
    /// Add).
    pub fn layer_mult_add(&self, layer: usize) -> (u64, u64) {
        let l = &self.layers[layer];
        let mult = l.client.mult_plain + l.server.mult_plain;
        let add = l.client.add_ct + l.client.add_plain + l.server.add_ct + l.server.add_plain;
        (mult, add)
    }
}

/// Aggregate of several runs (the bench command output).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub network: String,
    pub backend: String,
    pub trials: usize,
    pub runs: Vec<RunReport>,
    /// Per-layer (mult, add) totals observed, identical across trials.
    pub layer_mult_add: Vec<(u64, u64)>,
    /// Model-predicted per-layer (mult, add) totals.
    pub predicted_mult_add: Vec<(u64, u64)>,
    pub perm_total: u64,
    pub mean_wall_ms: f64,
    pub max_abs_error: f64,
    pub argmax_agreement: f64,
}
