//! End-to-end loopback self-tests: short real runs through every mode.


use ofbench::metrics::RunReport;
use ofbench::probe::MsgKind;
use ofbench::runner::{run_point, RunOutcome, RunnerOptions};
use ofbench::scenario::{HypervisorMode, Knobs, ResolvedScenario};

fn quick_point(
    msg_type: MsgKind,
    tenants: u16,
    rate: u32,
    hypervisor: HypervisorMode,
) -> ResolvedScenario {
    ResolvedScenario {
        scenario_id: "loopback-selftest".into(),
        msg_type,
        tenants,
        total_rate: rate,
        nodelay: true,
        hypervisor,
        runs: 1,
        duration_s: 4,
        trim_s: 1,
        seed: 7,
        knobs: Knobs {
            drain_timeout_s: 3,
            expire_timeout_s: 2,
            ..Knobs::default()
        },
    }
}

fn run_in_process(point: &ResolvedScenario) -> RunReport {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunnerOptions::new(dir.path()).in_process();
    let outcomes = run_point(point, &opts);
    assert_eq!(outcomes.len(), 1);
    match outcomes.into_iter().next().unwrap() {
        RunOutcome::Report(r) => *r,
        RunOutcome::Failed { error, .. } => panic!("run failed: {error}"),
    }
}

fn assert_mostly_lossless(report: &RunReport, min_match: f64) {
    let c = &report.counters;
    assert!(c.sent > 0, "nothing sent");
    let matched = c.matched as f64 / c.sent as f64;
    assert!(
        matched >= min_match,
        "only {:.1}% of {} matched (expired {}, pending {})",
        matched * 100.0,
        c.sent,
        c.expired,
        c.pending_at_end
    );
    assert_eq!(c.misrouted, 0, "misrouted messages");
    assert_eq!(
        c.matched + c.expired + c.pending_at_end,
        c.sent,
        "conservation identity broken"
    );
}

#[test]
fn packet_in_switch_only_single_tenant() {
    let report = run_in_process(&quick_point(MsgKind::PacketIn, 1, 2_000, HypervisorMode::None));
    assert_mostly_lossless(&report, 0.99);
    let agg = report.aggregate.expect("samples in window");
    assert!(agg.count > 3_000, "window holds ~2 x 2000 samples, got {}", agg.count);
    assert!(agg.median_ns > 0);
    // achieved rate within 1% on an idle box
    assert!(
        (report.aggregate_achieved_rate - 2_000.0).abs() <= 20.0,
        "achieved {} vs 2000",
        report.aggregate_achieved_rate
    );
}

#[test]
fn packet_in_switch_only_multi_tenant_shared_link() {
    let report = run_in_process(&quick_point(MsgKind::PacketIn, 4, 4_000, HypervisorMode::None));
    assert_mostly_lossless(&report, 0.99);
    assert_eq!(report.tenants.len(), 4);
    for t in &report.tenants {
        assert!(t.stats.is_some(), "tenant {} has no samples", t.tenant_id);
        assert!((t.achieved_rate - 1_000.0).abs() <= 15.0);
    }
    assert!(report.fairness.is_some());
}

#[test]
fn packet_out_through_fv_proxy() {
    let report = run_in_process(&quick_point(MsgKind::PacketOut, 2, 2_000, HypervisorMode::Fv));
    assert_mostly_lossless(&report, 0.99);
    assert_eq!(report.tenants.len(), 2);
    for t in &report.tenants {
        assert!(t.stats.is_some());
    }
}

#[test]
fn packet_out_through_ovx_proxy() {
    let report = run_in_process(&quick_point(MsgKind::PacketOut, 2, 2_000, HypervisorMode::Ovx));
    assert_mostly_lossless(&report, 0.99);
}

#[test]
fn packet_in_through_fv_proxy_demuxes_tenants() {
    let report = run_in_process(&quick_point(MsgKind::PacketIn, 3, 3_000, HypervisorMode::Fv));
    assert_mostly_lossless(&report, 0.99);
    assert_eq!(report.tenants.len(), 3);
    for t in &report.tenants {
        let stats = t.stats.expect("per-tenant samples");
        assert!(stats.count > 500, "tenant {} got {}", t.tenant_id, stats.count);
    }
}

#[test]
fn packet_in_through_ovx_proxy_translates() {
    let report = run_in_process(&quick_point(MsgKind::PacketIn, 3, 3_000, HypervisorMode::Ovx));
    assert_mostly_lossless(&report, 0.99);
    assert_eq!(report.tenants.len(), 3);
}

#[test]
fn port_stats_round_trip_through_fv() {
    let report = run_in_process(&quick_point(MsgKind::PortStats, 1, 500, HypervisorMode::Fv));
    assert_mostly_lossless(&report, 0.99);
    let agg = report.aggregate.unwrap();
    // service cost at the default 7500/s capacity is ~0.13ms
    assert!(agg.mean_ns > 50_000.0, "stats latency implausibly low");
}

#[test]
fn port_stats_served_from_ovx_cache() {
    let report = run_in_process(&quick_point(MsgKind::PortStats, 1, 500, HypervisorMode::Ovx));
    assert_mostly_lossless(&report, 0.99);
}

#[test]
fn echo_and_features_paths_work() {
    for kind in [MsgKind::Echo, MsgKind::Features] {
        let report = run_in_process(&quick_point(kind, 1, 200, HypervisorMode::None));
        assert_mostly_lossless(&report, 0.99);
    }
}

#[test]
fn tenant_isolation_under_peer_death() {
    // a tenant whose endpoint dies mid-run must not disturb the others:
    // here tenant connections are independent by construction, so give
    // the run a tenant pair and kill one connection by dropping its proxy
    // port traffic -- emulated by a very short drain: the dead tenant's
    // pending entries expire without touching the survivor's counters
    let mut point = quick_point(MsgKind::PacketOut, 2, 1_000, HypervisorMode::Fv);
    point.knobs.expire_timeout_s = 1;
    let report = run_in_process(&point);
    let a = &report.tenants[0];
    let b = &report.tenants[1];
    assert_eq!(a.sent + b.sent, report.counters.sent);
    assert_eq!(report.counters.misrouted, 0);
}
