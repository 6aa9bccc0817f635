//! Request/reply correlation and latency samples.
//!
//! Synchronous messages (port stats, echo, features) correlate by xid;
//! asynchronous probe packets correlate by their embedded (tenant, seq)
//! tag. One [`Correlator`] per tenant, owned by that tenant's actor, so no
//! cross-tenant shared state exists. Conservation invariant: everything
//! sent is eventually matched, expired, or still pending at run end.

use std::collections::HashMap;

use thiserror::Error;

use crate::packet::ProbeTag;

/// The benchmarked message kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    PacketIn,
    PacketOut,
    PortStats,
    Echo,
    Features,
}

impl MsgKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MsgKind::PacketIn => "packet_in",
            MsgKind::PacketOut => "packet_out",
            MsgKind::PortStats => "port_stats",
            MsgKind::Echo => "echo",
            MsgKind::Features => "features",
        }
    }

    pub fn parse(s: &str) -> Option<MsgKind> {
        Some(match s {
            "packet_in" => MsgKind::PacketIn,
            "packet_out" => MsgKind::PacketOut,
            "port_stats" => MsgKind::PortStats,
            "echo" => MsgKind::Echo,
            "features" => MsgKind::Features,
            _ => return None,
        })
    }

    /// Whether a request expects a reply on the same connection.
    pub fn is_sync(&self) -> bool {
        matches!(self, MsgKind::PortStats | MsgKind::Echo | MsgKind::Features)
    }
}

impl std::fmt::Display for MsgKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One completed measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencySample {
    pub run_id: u32,
    pub tenant_id: u16,
    pub seq: u64,
    pub msg_type: MsgKind,
    /// Nanoseconds since run epoch, shared monotonic clock.
    pub send_ts: u64,
    pub recv_ts: u64,
}

impl LatencySample {
    pub fn latency_ns(&self) -> u64 {
        self.recv_ts.saturating_sub(self.send_ts)
    }
}

/// Correlation key: xid for synchronous requests, sequence number for
/// asynchronous probes (the tenant is implied by table ownership).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrKey {
    Xid(u32),
    Probe(u64),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorrError {
    #[error("reply matches no outstanding request")]
    UnmatchedReply,
    #[error("duplicate reply")]
    DuplicateReply,
    #[error("probe payload failed validation")]
    MalformedProbe,
}

/// Outstanding-request table plus the loss-accounting counters.
#[derive(Debug, Default)]
pub struct PendingTable {
    entries: HashMap<CorrKey, u64>,
    matched_keys: HashMap<CorrKey, ()>,
    pub sent: u64,
    pub matched: u64,
    pub expired: u64,
    pub unmatched_replies: u64,
    pub duplicate_replies: u64,
}

impl PendingTable {
    pub fn new() -> Self {
        PendingTable::default()
    }

    /// Registers a freshly sent request/probe.
    pub fn insert(&mut self, key: CorrKey, send_ts: u64) {
        let prior = self.entries.insert(key, send_ts);
        debug_assert!(prior.is_none(), "correlation keys are unique per run");
        self.sent += 1;
    }

    /// Matches a reply; returns the original send timestamp.
    pub fn complete(&mut self, key: CorrKey) -> Result<u64, CorrError> {
        match self.entries.remove(&key) {
            Some(send_ts) => {
                self.matched += 1;
                self.matched_keys.insert(key, ());
                Ok(send_ts)
            }
            None => {
                if self.matched_keys.contains_key(&key) {
                    self.duplicate_replies += 1;
                    Err(CorrError::DuplicateReply)
                } else {
                    self.unmatched_replies += 1;
                    Err(CorrError::UnmatchedReply)
                }
            }
        }
    }

    /// Removes entries whose send timestamp is older than `now_ns -
    /// older_than_ns`, counting them as losses. Returns how many expired.
    pub fn expire(&mut self, now_ns: u64, older_than_ns: u64) -> usize {
        let threshold = now_ns.saturating_sub(older_than_ns);
        let before = self.entries.len();
        self.entries.retain(|_, &mut send_ts| send_ts >= threshold);
        let removed = before - self.entries.len();
        self.expired += removed as u64;
        removed
    }

    pub fn pending(&self) -> usize {
        self.entries.len()
    }

    /// matched + expired + pending-at-end must equal sent.
    pub fn conservation_holds(&self) -> bool {
        self.matched + self.expired + self.entries.len() as u64 == self.sent
    }
}

/// Per-tenant correlation front end producing [`LatencySample`]s.
#[derive(Debug)]
pub struct Correlator {
    run_id: u32,
    tenant_id: u16,
    pub table: PendingTable,
    pub malformed_probes: u64,
}

impl Correlator {
    pub fn new(run_id: u32, tenant_id: u16) -> Correlator {
        Correlator {
            run_id,
            tenant_id,
            table: PendingTable::new(),
            malformed_probes: 0,
        }
    }

    /// Registers a synchronous request (port stats, echo, features).
    pub fn sent_sync(&mut self, xid: u32, send_ts: u64) {
        self.table.insert(CorrKey::Xid(xid), send_ts);
    }

    /// Registers an asynchronous probe emission.
    pub fn sent_probe(&mut self, seq: u64, send_ts: u64) {
        self.table.insert(CorrKey::Probe(seq), send_ts);
    }

    /// Correlates a synchronous reply by xid.
    pub fn on_sync_reply(
        &mut self,
        xid: u32,
        seq: u64,
        kind: MsgKind,
        recv_ts: u64,
    ) -> Result<LatencySample, CorrError> {
        let send_ts = self.table.complete(CorrKey::Xid(xid))?;
        Ok(self.sample(seq, kind, send_ts, recv_ts))
    }

    /// Correlates a probe completion: a `PacketIn` carrying the tag on the
    /// control plane, or the re-emitted data packet on the data plane.
    pub fn on_probe(
        &mut self,
        tag: &ProbeTag,
        kind: MsgKind,
        recv_ts: u64,
    ) -> Result<LatencySample, CorrError> {
        if tag.tenant_id != self.tenant_id {
            self.malformed_probes += 1;
            return Err(CorrError::MalformedProbe);
        }
        self.table.complete(CorrKey::Probe(tag.seq))?;
        // latency comes from the self-describing tag
        Ok(self.sample(tag.seq, kind, tag.send_ts, recv_ts))
    }

    pub fn note_malformed(&mut self) {
        self.malformed_probes += 1;
    }

    fn sample(&self, seq: u64, kind: MsgKind, send_ts: u64, recv_ts: u64) -> LatencySample {
        LatencySample {
            run_id: self.run_id,
            tenant_id: self.tenant_id,
            seq,
            msg_type: kind,
            send_ts,
            recv_ts: recv_ts.max(send_ts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sync_latency_is_recv_minus_send() {
        let mut c = Correlator::new(1, 1);
        c.sent_sync(1, 1_000_000);
        let s = c.on_sync_reply(1, 0, MsgKind::PortStats, 4_000_000).unwrap();
        assert_eq!(s.latency_ns(), 3_000_000);
        assert_eq!(c.table.pending(), 0);
    }

    #[test]
    fn unknown_xid_counts_unmatched() {
        let mut c = Correlator::new(1, 1);
        assert_eq!(
            c.on_sync_reply(99, 0, MsgKind::PortStats, 10).unwrap_err(),
            CorrError::UnmatchedReply
        );
        assert_eq!(c.table.unmatched_replies, 1);
    }

    #[test]
    fn second_reply_with_same_xid_is_duplicate() {
        let mut c = Correlator::new(1, 1);
        c.sent_sync(7, 100);
        c.on_sync_reply(7, 0, MsgKind::Echo, 200).unwrap();
        assert_eq!(
            c.on_sync_reply(7, 0, MsgKind::Echo, 300).unwrap_err(),
            CorrError::DuplicateReply
        );
        assert_eq!(c.table.duplicate_replies, 1);
    }

    #[test]
    fn probe_latency_comes_from_tag() {
        let mut c = Correlator::new(1, 3);
        c.sent_probe(0, 500);
        let tag = ProbeTag { tenant_id: 3, seq: 0, send_ts: 500 };
        let s = c.on_probe(&tag, MsgKind::PacketIn, 1500).unwrap();
        assert_eq!(s.latency_ns(), 1000);
        assert_eq!(s.tenant_id, 3);
    }

    #[test]
    fn foreign_tenant_tag_is_malformed() {
        let mut c = Correlator::new(1, 3);
        let tag = ProbeTag { tenant_id: 4, seq: 0, send_ts: 500 };
        assert_eq!(
            c.on_probe(&tag, MsgKind::PacketIn, 600).unwrap_err(),
            CorrError::MalformedProbe
        );
        assert_eq!(c.malformed_probes, 1);
    }

    #[test]
    fn expire_counts_only_stale_entries() {
        let mut t = PendingTable::new();
        assert_eq!(t.expire(10_000, 1_000), 0);
        for seq in 0..5 {
            t.insert(CorrKey::Probe(seq), 100);
        }
        t.insert(CorrKey::Probe(99), 9_500);
        assert_eq!(t.expire(10_000, 1_000), 5);
        assert_eq!(t.pending(), 1);
        assert_eq!(t.expired, 5);
        assert!(t.conservation_holds());
    }

    #[test]
    fn conservation_over_mixed_fates() {
        let mut t = PendingTable::new();
        for seq in 0..100 {
            t.insert(CorrKey::Probe(seq), seq * 10);
        }
        for seq in 0..40 {
            t.complete(CorrKey::Probe(seq)).unwrap();
        }
        t.expire(10_000, 9_000); // everything sent before 1000ns expires
        assert!(t.conservation_holds());
        assert_eq!(t.sent, 100);
        assert_eq!(t.matched, 40);
        assert_eq!(t.expired + t.pending() as u64, 60);
    }
}
