//! Upload and broadcast byte accounting.

/// Bytes on the wire per parameter.
pub const BYTES_PER_PARAM: u64 = 4;
/// Bytes for one uploaded scalar loss.
pub const BYTES_PER_LOSS: u64 = 8;

/// Bytes moved in one round: `k` uploads (plus one loss each when
/// `with_loss`) and a broadcast to all `n_clients`.
pub fn round_bytes(n_clients: u64, sampled: u64, param_count: u64, with_loss: bool) -> u64 {
    let upload = sampled * param_count * BYTES_PER_PARAM + if with_loss { sampled * BYTES_PER_LOSS } else { 0 };
    upload + n_clients * param_count * BYTES_PER_PARAM
}

/// Cumulative bytes over `rounds` identical rounds.
pub fn comm_accounting(rounds: u64, n_clients: u64, sampled: u64, param_count: u64, with_loss: bool) -> u64 {
    rounds * round_bytes(n_clients, sampled, param_count, with_loss)
}

/// Running byte counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommMeter {
    total: u64,
}

impl CommMeter {
    pub fn record_round(&mut self, n_clients: u64, sampled: u64, param_count: u64, with_loss: bool) {
        self.total += round_bytes(n_clients, sampled, param_count, with_loss);
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}
