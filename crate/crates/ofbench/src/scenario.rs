//! Scenario configuration: what to benchmark, at which rates, through
//! which proxy, for how long.
//!
//! A scenario file (TOML) may list several values per axis (rate, tenant
//! count, no-delay flag, proxy mode); expansion produces the cartesian
//! product of resolved single points in a stable order. Bundled presets
//! cover the standard measurement matrix.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probe::MsgKind;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown preset {0:?}; try `list-presets`")]
    UnknownPreset(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field, reason: reason.into() }
}

/// Which proxy (if any) sits between the controllers and the switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HypervisorMode {
    None,
    Fv,
    Ovx,
}

impl HypervisorMode {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => HypervisorMode::None,
            "fv" => HypervisorMode::Fv,
            "ovx" => HypervisorMode::Ovx,
            _ => return None,
        })
    }
}

impl fmt::Display for HypervisorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HypervisorMode::None => "none",
            HypervisorMode::Fv => "fv",
            HypervisorMode::Ovx => "ovx",
        })
    }
}

/// Scalar or list, for sweepable axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![v.clone()],
            Axis::Many(vs) => vs.clone(),
        }
    }
}

/// Tenant axis: a count, a list, or an inclusive range with step.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TenantAxis {
    One(u16),
    Many(Vec<u16>),
    Range { from: u16, to: u16, #[serde(default = "default_step")] step: u16 },
}

fn default_step() -> u16 {
    2
}

impl TenantAxis {
    pub fn values(&self) -> Vec<u16> {
        match self {
            TenantAxis::One(n) => vec![*n],
            TenantAxis::Many(ns) => ns.clone(),
            TenantAxis::Range { from, to, step } => {
                let step = (*step).max(1);
                (*from..=*to).step_by(step as usize).collect()
            }
        }
    }
}

/// A scenario as written in a file: axes may hold several values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub id: Option<String>,
    pub msg_type: MsgKind,
    pub tenants: TenantAxis,
    pub rate: Axis<u32>,
    #[serde(default)]
    pub switch_only: bool,
    #[serde(default = "default_nodelay")]
    pub nodelay: Axis<bool>,
    #[serde(default = "default_hypervisor")]
    pub hypervisor: Axis<HypervisorMode>,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default = "default_duration")]
    pub duration_s: u32,
    #[serde(default = "default_trim")]
    pub trim_s: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub knobs: Knobs,
}

fn default_nodelay() -> Axis<bool> {
    Axis::One(false)
}

fn default_hypervisor() -> Axis<HypervisorMode> {
    Axis::One(HypervisorMode::None)
}

fn default_runs() -> u32 {
    10
}

fn default_duration() -> u32 {
    30
}

fn default_trim() -> u32 {
    5
}

fn default_seed() -> u64 {
    1
}

/// Emulation knobs with reproduction-grade defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    /// Bytes per emulated probe frame (headers + tag + padding).
    pub probe_frame_len: usize,
    /// Switch port-stats service capacity, requests/second.
    pub stats_capacity: u32,
    /// Bound on the switch's stats queue before it drops.
    pub stats_queue_bound: usize,
    /// Translation proxy's background stats poll rate, polls/second.
    pub poll_rate_per_s: f64,
    /// Delay ACKs on control-plane receivers so sender-side aggregation
    /// behaves like a real link instead of loopback.
    pub link_ack_emulation: bool,
    /// Pending entries older than this count as lost.
    pub expire_timeout_s: u32,
    /// After emission ends, wait at most this long for in-flight replies.
    pub drain_timeout_s: u32,
    /// Seconds between proxy CPU samples.
    pub cpu_sample_interval_s: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Knobs {
            probe_frame_len: crate::packet::DEFAULT_PROBE_FRAME_LEN,
            stats_capacity: 7_500,
            stats_queue_bound: 100_000,
            poll_rate_per_s: 1.0,
            link_ack_emulation: true,
            expire_timeout_s: 5,
            drain_timeout_s: 6,
            cpu_sample_interval_s: 1.0,
        }
    }
}

/// One fully resolved measurement point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedScenario {
    pub scenario_id: String,
    pub msg_type: MsgKind,
    pub tenants: u16,
    pub total_rate: u32,
    pub nodelay: bool,
    pub hypervisor: HypervisorMode,
    pub runs: u32,
    pub duration_s: u32,
    pub trim_s: u32,
    pub seed: u64,
    pub knobs: Knobs,
}

impl ResolvedScenario {
    pub fn switch_only(&self) -> bool {
        self.hypervisor == HypervisorMode::None
    }

    /// Per-tenant rates: integer split with the remainder assigned to the
    /// lowest tenant ids. Sums exactly to the total.
    pub fn per_tenant_rates(&self) -> Vec<u32> {
        split_rate(self.total_rate, self.tenants)
    }

    /// Short label used in output paths.
    pub fn label(&self) -> String {
        format!(
            "{}_{}_r{}_t{}_nd{}_{}",
            self.scenario_id,
            self.msg_type,
            self.total_rate,
            self.tenants,
            u8::from(self.nodelay),
            self.hypervisor
        )
    }
}

/// Integer rate split, remainder to the lowest tenant ids.
pub fn split_rate(total: u32, tenants: u16) -> Vec<u32> {
    let n = u32::from(tenants.max(1));
    let base = total / n;
    let rem = total % n;
    (0..n).map(|i| base + u32::from(i < rem)).collect()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let mut s: Scenario = toml::from_str(&text)?;
        if s.id.is_none() {
            s.id = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned());
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for n in self.tenants.values() {
            if n == 0 {
                return Err(invalid("tenants", "tenant count must be at least 1"));
            }
            if n > 2000 {
                return Err(invalid("tenants", format!("{n} tenants exceeds the identity space")));
            }
        }
        for r in self.rate.values() {
            if r == 0 {
                return Err(invalid("rate", "rate must be at least 1 msg/s"));
            }
        }
        if self.runs == 0 {
            return Err(invalid("runs", "at least one run required"));
        }
        if self.duration_s == 0 {
            return Err(invalid("duration_s", "duration must be at least 1s"));
        }
        if 2 * self.trim_s >= self.duration_s {
            return Err(invalid(
                "trim_s",
                format!(
                    "trimming {}s twice leaves nothing of a {}s run",
                    self.trim_s, self.duration_s
                ),
            ));
        }
        let hyps = self.hypervisor.values();
        if self.switch_only && hyps.iter().any(|h| *h != HypervisorMode::None) {
            return Err(invalid(
                "switch_only",
                "switch_only scenarios cannot name a hypervisor",
            ));
        }
        if self.knobs.stats_capacity == 0 {
            return Err(invalid("knobs.stats_capacity", "capacity must be positive"));
        }
        if self.knobs.poll_rate_per_s <= 0.0 {
            return Err(invalid("knobs.poll_rate_per_s", "poll rate must be positive"));
        }
        if self.knobs.probe_frame_len > 1400 {
            return Err(invalid("knobs.probe_frame_len", "probe frames above 1400 bytes are not supported"));
        }
        Ok(())
    }

    /// Expands the axes into resolved points, in a stable order:
    /// hypervisor, then rate, then tenants, then nodelay.
    pub fn expand(&self) -> Result<Vec<ResolvedScenario>, ScenarioError> {
        self.validate()?;
        let id = self.id.clone().unwrap_or_else(|| "scenario".to_string());
        let hyps = if self.switch_only {
            vec![HypervisorMode::None]
        } else {
            self.hypervisor.values()
        };
        let mut out = Vec::new();
        for hyp in &hyps {
            for rate in self.rate.values() {
                for tenants in self.tenants.values() {
                    for nodelay in self.nodelay.values() {
                        out.push(ResolvedScenario {
                            scenario_id: id.clone(),
                            msg_type: self.msg_type,
                            tenants,
                            total_rate: rate,
                            nodelay,
                            hypervisor: *hyp,
                            runs: self.runs,
                            duration_s: self.duration_s,
                            trim_s: self.trim_s,
                            seed: self.seed,
                            knobs: self.knobs.clone(),
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// The bundled measurement matrix, one preset per standard row.
pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let s = match name {
        // single tenant, asynchronous flow-setup path
        "t1-pktin" => Scenario {
            id: Some("t1-pktin".into()),
            msg_type: MsgKind::PacketIn,
            tenants: TenantAxis::One(1),
            rate: Axis::Many(vec![10_000, 20_000, 30_000, 40_000]),
            switch_only: false,
            nodelay: Axis::One(false),
            hypervisor: Axis::Many(vec![HypervisorMode::Fv, HypervisorMode::Ovx]),
            runs: 10,
            duration_s: 30,
            trim_s: 5,
            seed: default_seed(),
            knobs: Knobs::default(),
        },
        // single tenant, synchronous stats path
        "t2-portstats" => Scenario {
            id: Some("t2-portstats".into()),
            msg_type: MsgKind::PortStats,
            tenants: TenantAxis::One(1),
            rate: Axis::Many(vec![5_000, 6_000, 7_000, 8_000]),
            switch_only: false,
            nodelay: Axis::One(false),
            hypervisor: Axis::Many(vec![HypervisorMode::Fv, HypervisorMode::Ovx]),
            runs: 10,
            duration_s: 30,
            trim_s: 5,
            seed: default_seed(),
            knobs: Knobs::default(),
        },
        // multi tenant packet-in, with switch-only baseline
        "t3-pktin-mt" => Scenario {
            id: Some("t3-pktin-mt".into()),
            msg_type: MsgKind::PacketIn,
            tenants: TenantAxis::Range { from: 2, to: 20, step: 2 },
            rate: Axis::One(40_000),
            switch_only: false,
            nodelay: Axis::Many(vec![false, true]),
            hypervisor: Axis::Many(vec![
                HypervisorMode::None,
                HypervisorMode::Fv,
                HypervisorMode::Ovx,
            ]),
            runs: 10,
            duration_s: 30,
            trim_s: 5,
            seed: default_seed(),
            knobs: Knobs::default(),
        },
        // multi tenant packet-out, the controller-implementation study
        "t4-pktout" => Scenario {
            id: Some("t4-pktout".into()),
            msg_type: MsgKind::PacketOut,
            tenants: TenantAxis::Range { from: 2, to: 20, step: 2 },
            rate: Axis::One(60_000),
            switch_only: false,
            nodelay: Axis::Many(vec![false, true]),
            hypervisor: Axis::Many(vec![HypervisorMode::Fv, HypervisorMode::Ovx]),
            runs: 10,
            duration_s: 30,
            trim_s: 5,
            seed: default_seed(),
            knobs: Knobs::default(),
        },
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    Ok(s)
}

pub const PRESET_NAMES: [&str; 4] = ["t1-pktin", "t2-portstats", "t3-pktin-mt", "t4-pktout"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_t1_matches_the_matrix_row() {
        let s = preset("t1-pktin").unwrap();
        assert_eq!(s.msg_type, MsgKind::PacketIn);
        assert_eq!(s.tenants.values(), vec![1]);
        assert_eq!(s.rate.values(), vec![10_000, 20_000, 30_000, 40_000]);
        assert_eq!(s.nodelay.values(), vec![false]);
        assert_eq!(s.runs, 10);
        assert_eq!(s.duration_s, 30);
        let points = s.expand().unwrap();
        assert_eq!(points.len(), 2 * 4); // fv/ovx x 4 rates
    }

    #[test]
    fn preset_t4_spans_tenants_and_nodelay() {
        let s = preset("t4-pktout").unwrap();
        assert_eq!(s.msg_type, MsgKind::PacketOut);
        assert_eq!(s.rate.values(), vec![60_000]);
        assert_eq!(
            s.tenants.values(),
            vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20]
        );
        let points = s.expand().unwrap();
        assert_eq!(points.len(), 2 * 10 * 2); // fv/ovx x tenants x nodelay
    }

    #[test]
    fn preset_t3_includes_switch_only_baseline() {
        let s = preset("t3-pktin-mt").unwrap();
        let points = s.expand().unwrap();
        assert!(points.iter().any(|p| p.hypervisor == HypervisorMode::None));
        assert_eq!(points.len(), 3 * 10 * 2);
    }

    #[test]
    fn zero_tenants_rejected() {
        let mut s = preset("t1-pktin").unwrap();
        s.tenants = TenantAxis::One(0);
        assert!(matches!(
            s.validate(),
            Err(ScenarioError::Invalid { field: "tenants", .. })
        ));
    }

    #[test]
    fn rate_split_assigns_remainder_to_lowest_ids() {
        assert_eq!(split_rate(60_000, 20), vec![3_000; 20]);
        let r = split_rate(10, 3);
        assert_eq!(r, vec![4, 3, 3]);
        assert_eq!(r.iter().sum::<u32>(), 10);
        // the multi-tenant split from the standard matrix
        let r = split_rate(60_000, 7);
        assert_eq!(r.iter().sum::<u32>(), 60_000);
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn toml_round_trip_with_axes() {
        let text = r#"
            msg_type = "packet_out"
            tenants = { from = 2, to = 6, step = 2 }
            rate = [1000, 2000]
            nodelay = [false, true]
            hypervisor = "fv"
            runs = 2
            duration_s = 6
            trim_s = 1
        "#;
        let s: Scenario = toml::from_str(text).unwrap();
        let points = s.expand().unwrap();
        assert_eq!(points.len(), 2 * 3 * 2);
        assert!(points.iter().all(|p| p.hypervisor == HypervisorMode::Fv));
    }

    #[test]
    fn switch_only_conflicts_with_hypervisor() {
        let text = r#"
            msg_type = "packet_in"
            tenants = 1
            rate = 1000
            switch_only = true
            hypervisor = "ovx"
        "#;
        let s: Scenario = toml::from_str(text).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn expansion_is_deterministic() {
        let s = preset("t3-pktin-mt").unwrap();
        assert_eq!(s.expand().unwrap(), s.expand().unwrap());
    }
}
