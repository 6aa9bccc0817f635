//! Behavioral hypervisor proxies.
//!
//! Two designs, mirroring the two families of network hypervisors the
//! benchmark compares:
//!
//! * [`fv`] forwards control messages byte-identically and demultiplexes
//!   upstream traffic by flowspace (per-tenant UDP source-port ranges).
//!   One sequential event loop serves every connection, so the proxy is
//!   single-threaded by construction.
//! * [`ovx`] rewrites data-packet addresses between per-tenant virtual and
//!   physical values on every `PacketOut`/`PacketIn` and answers port-stats
//!   requests from a cache refreshed by a background poller, shielding the
//!   switch from tenant stats demand. One actor per tenant connection.
//!
//! Both keep one upstream switch connection and N downstream tenant
//! connections; each tenant connects to its own listen port, which is how
//! a connection is bound to its slice.

pub mod fv;
pub mod ovx;

use std::collections::HashMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{MacAddr, TenantIdentity, TENANT_UDP_PORT_BASE};
use crate::scenario::HypervisorMode;

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse slice config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("slice config invalid: {0}")]
    InvalidSlices(String),
    #[error("upstream switch unreachable at {0}")]
    SwitchUnreachable(SocketAddr),
}

/// One tenant's slice: flowspace plus address mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceEntry {
    pub tenant_id: u16,
    pub udp_port_lo: u16,
    pub udp_port_hi: u16,
    pub phys_mac: String,
    pub virt_mac: String,
    pub phys_ip: Ipv4Addr,
    pub virt_ip: Ipv4Addr,
}

impl SliceEntry {
    pub fn identity(&self) -> Option<TenantIdentity> {
        Some(TenantIdentity {
            tenant_id: self.tenant_id,
            phys_mac: MacAddr::parse(&self.phys_mac)?,
            virt_mac: MacAddr::parse(&self.virt_mac)?,
            phys_ip: self.phys_ip,
            virt_ip: self.virt_ip,
            udp_src_port: self.udp_port_lo,
        })
    }
}

/// The proxy-side view of every tenant, loaded from the scenario's slice
/// file. Rules must be disjoint across tenants.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SliceConfig {
    pub tenants: Vec<SliceEntry>,
}

impl SliceConfig {
    pub fn from_identities(ids: &[TenantIdentity]) -> SliceConfig {
        SliceConfig {
            tenants: ids
                .iter()
                .map(|id| SliceEntry {
                    tenant_id: id.tenant_id,
                    udp_port_lo: id.udp_src_port,
                    udp_port_hi: id.udp_src_port,
                    phys_mac: id.phys_mac.to_string(),
                    virt_mac: id.virt_mac.to_string(),
                    phys_ip: id.phys_ip,
                    virt_ip: id.virt_ip,
                })
                .collect(),
        }
    }

    pub fn for_tenant_count(n: u16) -> SliceConfig {
        let ids: Vec<TenantIdentity> = (1..=n).map(TenantIdentity::for_tenant).collect();
        SliceConfig::from_identities(&ids)
    }

    pub fn load(path: &Path) -> Result<SliceConfig, ProxyError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SliceConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProxyError> {
        let text = toml::to_string_pretty(self).expect("slice config serializes");
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Checks slice disjointness: no UDP port, MAC, or tenant id owned twice.
    pub fn validate(&self) -> Result<(), ProxyError> {
        let mut ports: Vec<(u16, u16, u16)> = Vec::new();
        let mut macs: HashMap<String, u16> = HashMap::new();
        let mut ids: HashMap<u16, ()> = HashMap::new();
        for t in &self.tenants {
            if t.udp_port_lo > t.udp_port_hi {
                return Err(ProxyError::InvalidSlices(format!(
                    "tenant {}: empty port range",
                    t.tenant_id
                )));
            }
            if ids.insert(t.tenant_id, ()).is_some() {
                return Err(ProxyError::InvalidSlices(format!(
                    "tenant {} defined twice",
                    t.tenant_id
                )));
            }
            if t.identity().is_none() {
                return Err(ProxyError::InvalidSlices(format!(
                    "tenant {}: unparseable MAC address",
                    t.tenant_id
                )));
            }
            for &(lo, hi, other) in &ports {
                if t.udp_port_lo <= hi && lo <= t.udp_port_hi {
                    return Err(ProxyError::InvalidSlices(format!(
                        "tenants {other} and {} overlap on UDP ports",
                        t.tenant_id
                    )));
                }
            }
            ports.push((t.udp_port_lo, t.udp_port_hi, t.tenant_id));
            for mac in [&t.phys_mac, &t.virt_mac] {
                if let Some(other) = macs.insert(mac.clone(), t.tenant_id) {
                    return Err(ProxyError::InvalidSlices(format!(
                        "tenants {other} and {} share MAC {mac}",
                        t.tenant_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn tenant_by_udp_port(&self, port: u16) -> Option<u16> {
        self.tenants
            .iter()
            .find(|t| port >= t.udp_port_lo && port <= t.udp_port_hi)
            .map(|t| t.tenant_id)
    }

    pub fn tenant_by_phys_mac(&self, mac: MacAddr) -> Option<u16> {
        let s = mac.to_string();
        self.tenants
            .iter()
            .find(|t| t.phys_mac == s)
            .map(|t| t.tenant_id)
    }
}

/// Default identity scheme: tenant `t` owns exactly UDP source port
/// `20000 + t`.
pub fn default_port_for(tenant_id: u16) -> u16 {
    TENANT_UDP_PORT_BASE + tenant_id
}

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub mode: HypervisorMode,
    pub switch_addr: SocketAddr,
    pub slices: SliceConfig,
    /// Background stats poll rate (address-translation mode only).
    pub poll_rate_per_s: f64,
    /// Standard delayed ACKs on tenant-facing reads (link emulation).
    pub delayed_acks: bool,
}

#[derive(Debug, Default)]
pub struct ProxyCounters {
    pub forwarded_up: AtomicU64,
    pub forwarded_down: AtomicU64,
    pub no_matching_slice: AtomicU64,
    pub no_matching_tenant: AtomicU64,
    pub tenant_not_connected: AtomicU64,
    pub unknown_virtual_address: AtomicU64,
    pub stats_cache_hits: AtomicU64,
    pub stats_cache_cold: AtomicU64,
    pub stats_polls: AtomicU64,
    pub xid_remaps: AtomicU64,
    pub unmatched_upstream_replies: AtomicU64,
    pub unknown_frames: AtomicU64,
    pub tenant_connects: AtomicU64,
    pub tenant_disconnects: AtomicU64,
}

/// Snapshot written to the stats file on shutdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyStatsReport {
    pub mode: HypervisorMode,
    pub uptime_s: f64,
    pub poll_rate_per_s: f64,
    pub forwarded_up: u64,
    pub forwarded_down: u64,
    pub no_matching_slice: u64,
    pub no_matching_tenant: u64,
    pub tenant_not_connected: u64,
    pub unknown_virtual_address: u64,
    pub stats_cache_hits: u64,
    pub stats_cache_cold: u64,
    pub stats_polls: u64,
    pub xid_remaps: u64,
    pub unmatched_upstream_replies: u64,
    pub unknown_frames: u64,
    pub tenant_connects: u64,
    pub tenant_disconnects: u64,
}

pub(crate) struct ProxyShared {
    pub cfg: ProxyConfig,
    pub counters: ProxyCounters,
    pub stop: AtomicBool,
    pub started: std::time::Instant,
}

impl ProxyShared {
    pub fn new(cfg: ProxyConfig) -> Arc<ProxyShared> {
        Arc::new(ProxyShared {
            cfg,
            counters: ProxyCounters::default(),
            stop: AtomicBool::new(false),
            started: std::time::Instant::now(),
        })
    }

    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }
}

pub struct ProxyHandle {
    /// Tenant id to listen address; tenants dial their own port.
    pub tenant_ports: HashMap<u16, SocketAddr>,
    pub(crate) shared: Arc<ProxyShared>,
    pub(crate) threads: Vec<JoinHandle<()>>,
}

impl ProxyHandle {
    pub fn counters(&self) -> &ProxyCounters {
        &self.shared.counters
    }

    pub fn report(&self) -> ProxyStatsReport {
        let c = &self.shared.counters;
        ProxyStatsReport {
            mode: self.shared.cfg.mode,
            uptime_s: self.shared.started.elapsed().as_secs_f64(),
            poll_rate_per_s: self.shared.cfg.poll_rate_per_s,
            forwarded_up: c.forwarded_up.load(Ordering::Relaxed),
            forwarded_down: c.forwarded_down.load(Ordering::Relaxed),
            no_matching_slice: c.no_matching_slice.load(Ordering::Relaxed),
            no_matching_tenant: c.no_matching_tenant.load(Ordering::Relaxed),
            tenant_not_connected: c.tenant_not_connected.load(Ordering::Relaxed),
            unknown_virtual_address: c.unknown_virtual_address.load(Ordering::Relaxed),
            stats_cache_hits: c.stats_cache_hits.load(Ordering::Relaxed),
            stats_cache_cold: c.stats_cache_cold.load(Ordering::Relaxed),
            stats_polls: c.stats_polls.load(Ordering::Relaxed),
            xid_remaps: c.xid_remaps.load(Ordering::Relaxed),
            unmatched_upstream_replies: c.unmatched_upstream_replies.load(Ordering::Relaxed),
            unknown_frames: c.unknown_frames.load(Ordering::Relaxed),
            tenant_connects: c.tenant_connects.load(Ordering::Relaxed),
            tenant_disconnects: c.tenant_disconnects.load(Ordering::Relaxed),
        }
    }

    pub fn stop(mut self) -> ProxyStatsReport {
        self.shared.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self.report()
    }
}

/// Launches the configured proxy mode. Binds one listener per tenant (the
/// slice-to-controller binding) plus the upstream switch connection.
pub fn spawn(cfg: ProxyConfig) -> Result<ProxyHandle, ProxyError> {
    cfg.slices.validate()?;
    match cfg.mode {
        HypervisorMode::Fv => fv::spawn(cfg),
        HypervisorMode::Ovx => ovx::spawn(cfg),
        HypervisorMode::None => Err(ProxyError::InvalidSlices(
            "mode none means no proxy at all".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_config_round_trips_and_validates() {
        let cfg = SliceConfig::for_tenant_count(20);
        cfg.validate().unwrap();
        assert_eq!(cfg.tenants.len(), 20);
        assert_eq!(cfg.tenant_by_udp_port(20_003), Some(3));
        assert_eq!(cfg.tenant_by_udp_port(19_999), None);
        let mac = MacAddr([0x02, 0, 0, 0, 0, 7]);
        assert_eq!(cfg.tenant_by_phys_mac(mac), Some(7));
    }

    #[test]
    fn overlapping_slices_rejected() {
        let mut cfg = SliceConfig::for_tenant_count(2);
        cfg.tenants[1].udp_port_lo = cfg.tenants[0].udp_port_lo;
        cfg.tenants[1].udp_port_hi = cfg.tenants[0].udp_port_hi;
        assert!(matches!(cfg.validate(), Err(ProxyError::InvalidSlices(_))));
    }

    #[test]
    fn duplicate_macs_rejected() {
        let mut cfg = SliceConfig::for_tenant_count(2);
        cfg.tenants[1].phys_mac = cfg.tenants[0].phys_mac.clone();
        assert!(matches!(cfg.validate(), Err(ProxyError::InvalidSlices(_))));
    }

    #[test]
    fn slice_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slices.toml");
        let cfg = SliceConfig::for_tenant_count(4);
        cfg.save(&path).unwrap();
        let back = SliceConfig::load(&path).unwrap();
        assert_eq!(back.tenants.len(), 4);
        assert_eq!(back.tenant_by_udp_port(20_004), Some(4));
    }
}
