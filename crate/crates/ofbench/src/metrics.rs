//! Sample collection output: steady-state trimming, per-tenant and
//! aggregate statistics, fairness, proxy CPU sampling, and file export.
//!
//! Percentiles use nearest-rank (no interpolation) so any implementation
//! reproduces them bit-for-bit from the same samples.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probe::{LatencySample, MsgKind};
use crate::scenario::ResolvedScenario;

pub const CSV_HEADER: &str = "run_id,tenant_id,seq,msg_type,send_ts_ns,recv_ts_ns,latency_ns";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trim window is empty: warmup {warmup_s}s + cooldown {cooldown_s}s >= duration {duration_s}s")]
    EmptyWindow { warmup_s: u32, cooldown_s: u32, duration_s: u32 },
    #[error("fairness needs at least 2 tenants, got {0}")]
    TooFewTenants(usize),
    #[error("fairness undefined for zero mean latency")]
    ZeroMean,
    #[error("process {0} is gone")]
    ProcessGone(u32),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed sample row: {0}")]
    MalformedRow(String),
}

/// Retains samples whose send timestamp lies in `[warmup, duration - cooldown)`.
pub fn trim(
    samples: &[LatencySample],
    warmup_s: u32,
    cooldown_s: u32,
    duration_s: u32,
) -> Result<Vec<LatencySample>, MetricsError> {
    if warmup_s + cooldown_s >= duration_s {
        return Err(MetricsError::EmptyWindow { warmup_s, cooldown_s, duration_s });
    }
    let (w0, w1) = trim_window_ns(warmup_s, cooldown_s, duration_s);
    Ok(samples
        .iter()
        .filter(|s| s.send_ts >= w0 && s.send_ts < w1)
        .copied()
        .collect())
}

pub fn trim_window_ns(warmup_s: u32, cooldown_s: u32, duration_s: u32) -> (u64, u64) {
    let w0 = u64::from(warmup_s) * 1_000_000_000;
    let w1 = (u64::from(duration_s) - u64::from(cooldown_s)) * 1_000_000_000;
    (w0, w1)
}

/// Latency summary over one sample population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ns: f64,
    pub median_ns: u64,
    pub p95_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

/// Nearest-rank percentile over an ascending-sorted slice.
fn nearest_rank(sorted: &[u64], q: f64) -> u64 {
    debug_assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Computes mean/median/p95/p99/max. Panics on empty input; callers gate
/// on sample presence.
pub fn summarize(samples: impl IntoIterator<Item = u64>) -> LatencyStats {
    let mut lat: Vec<u64> = samples.into_iter().collect();
    assert!(!lat.is_empty(), "summarize needs at least one sample");
    lat.sort_unstable();
    let count = lat.len() as u64;
    let sum: u128 = lat.iter().map(|&v| u128::from(v)).sum();
    LatencyStats {
        count,
        mean_ns: sum as f64 / count as f64,
        median_ns: nearest_rank(&lat, 0.50),
        p95_ns: nearest_rank(&lat, 0.95),
        p99_ns: nearest_rank(&lat, 0.99),
        max_ns: *lat.last().unwrap(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessStats {
    /// Jain index `(sum x)^2 / (n * sum x^2)`, in (0, 1].
    pub jain: f64,
    /// Worst-to-best tenant mean latency ratio.
    pub max_min_ratio: f64,
}

/// Jain fairness index and max/min ratio over per-tenant mean latencies.
pub fn fairness(per_tenant_means: &[f64]) -> Result<FairnessStats, MetricsError> {
    if per_tenant_means.len() < 2 {
        return Err(MetricsError::TooFewTenants(per_tenant_means.len()));
    }
    if per_tenant_means.iter().any(|&m| m <= 0.0) {
        return Err(MetricsError::ZeroMean);
    }
    let n = per_tenant_means.len() as f64;
    let sum: f64 = per_tenant_means.iter().sum();
    let sum_sq: f64 = per_tenant_means.iter().map(|&m| m * m).sum();
    let max = per_tenant_means.iter().cloned().fold(f64::MIN, f64::max);
    let min = per_tenant_means.iter().cloned().fold(f64::MAX, f64::min);
    Ok(FairnessStats {
        jain: (sum * sum) / (n * sum_sq),
        max_min_ratio: max / min,
    })
}

/// One proxy CPU utilization reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpuSample {
    /// Seconds since sampling started.
    pub at_s: f64,
    /// Percent of one core; multi-threaded processes may exceed 100.
    pub percent: f64,
}

/// Samples a process's CPU utilization from `/proc/<pid>/stat`.
#[derive(Debug)]
pub struct CpuSampler {
    pid: u32,
    ticks_per_sec: f64,
    started: Instant,
    last_at: Instant,
    last_ticks: u64,
}

impl CpuSampler {
    pub fn new(pid: u32) -> Result<CpuSampler, MetricsError> {
        let ticks = read_cpu_ticks(pid)?;
        let now = Instant::now();
        let ticks_per_sec = unsafe { libc::sysconf(libc::_SC_CLK_TCK) } as f64;
        Ok(CpuSampler {
            pid,
            ticks_per_sec: if ticks_per_sec > 0.0 { ticks_per_sec } else { 100.0 },
            started: now,
            last_at: now,
            last_ticks: ticks,
        })
    }

    /// Utilization percent since the previous call.
    pub fn sample(&mut self) -> Result<CpuSample, MetricsError> {
        let ticks = read_cpu_ticks(self.pid)?;
        let now = Instant::now();
        let wall = now.duration_since(self.last_at).as_secs_f64();
        let cpu = (ticks - self.last_ticks) as f64 / self.ticks_per_sec;
        self.last_at = now;
        self.last_ticks = ticks;
        Ok(CpuSample {
            at_s: now.duration_since(self.started).as_secs_f64(),
            percent: if wall > 0.0 { cpu / wall * 100.0 } else { 0.0 },
        })
    }
}

/// utime + stime of the process, in clock ticks.
fn read_cpu_ticks(pid: u32) -> Result<u64, MetricsError> {
    let stat = fs::read_to_string(format!("/proc/{pid}/stat"))
        .map_err(|_| MetricsError::ProcessGone(pid))?;
    // comm may contain spaces; fields are positional after the last ')'
    let rest = stat
        .rsplit_once(')')
        .ok_or(MetricsError::ProcessGone(pid))?
        .1;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // state is field 0 here; utime/stime are fields 11 and 12
    let utime: u64 = fields
        .get(11)
        .and_then(|f| f.parse().ok())
        .ok_or(MetricsError::ProcessGone(pid))?;
    let stime: u64 = fields
        .get(12)
        .and_then(|f| f.parse().ok())
        .ok_or(MetricsError::ProcessGone(pid))?;
    Ok(utime + stime)
}

/// Samples `pid` every `interval` until `stop` reports true.
pub fn sample_cpu_until(
    pid: u32,
    interval: Duration,
    stop: impl Fn() -> bool,
) -> Vec<CpuSample> {
    let mut out = Vec::new();
    let Ok(mut sampler) = CpuSampler::new(pid) else {
        return out;
    };
    while !stop() {
        std::thread::sleep(interval);
        match sampler.sample() {
            Ok(s) => out.push(s),
            Err(_) => break,
        }
    }
    out
}

/// Per-tenant block of a run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TenantReport {
    pub tenant_id: u16,
    pub stats: Option<LatencyStats>,
    pub achieved_rate: f64,
    pub sent: u64,
    pub matched: u64,
    pub losses: u64,
    pub unmatched_replies: u64,
    pub malformed_probes: u64,
}

/// Counters that hold across the whole run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub sent: u64,
    pub matched: u64,
    pub expired: u64,
    pub pending_at_end: u64,
    pub unmatched_replies: u64,
    pub duplicate_replies: u64,
    pub malformed_probes: u64,
    pub misrouted: u64,
    pub overruns: u64,
    pub write_failures: u64,
}

/// Everything one run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ResolvedScenario,
    pub run_id: u32,
    pub of_version: String,
    pub clock_domain: String,
    pub tenants: Vec<TenantReport>,
    pub aggregate: Option<LatencyStats>,
    /// Mean of per-tenant means; `aggregate.mean_ns` is the pooled mean.
    pub mean_of_tenant_means_ns: Option<f64>,
    pub aggregate_achieved_rate: f64,
    pub fairness: Option<FairnessStats>,
    pub cpu_samples: Vec<CpuSample>,
    pub counters: RunCounters,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn per_tenant_mean_latencies(&self) -> Vec<f64> {
        self.tenants
            .iter()
            .filter_map(|t| t.stats.map(|s| s.mean_ns))
            .collect()
    }
}

fn csv_line(s: &LatencySample) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        s.run_id,
        s.tenant_id,
        s.seq,
        s.msg_type,
        s.send_ts,
        s.recv_ts,
        s.latency_ns()
    )
}

/// Writes the raw samples CSV.
pub fn write_samples_csv(path: &Path, samples: &[LatencySample]) -> Result<(), MetricsError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for s in samples {
        writeln!(w, "{}", csv_line(s))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a samples CSV back; used to verify export round-trips.
pub fn read_samples_csv(path: &Path) -> Result<Vec<LatencySample>, MetricsError> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != CSV_HEADER {
                return Err(MetricsError::MalformedRow(line));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(MetricsError::MalformedRow(line));
        }
        let parse_err = || MetricsError::MalformedRow(line.clone());
        out.push(LatencySample {
            run_id: f[0].parse().map_err(|_| parse_err())?,
            tenant_id: f[1].parse().map_err(|_| parse_err())?,
            seq: f[2].parse().map_err(|_| parse_err())?,
            msg_type: MsgKind::parse(f[3]).ok_or_else(parse_err)?,
            send_ts: f[4].parse().map_err(|_| parse_err())?,
            recv_ts: f[5].parse().map_err(|_| parse_err())?,
        });
    }
    Ok(out)
}

/// Power-of-two latency histogram rows: (bin lower bound ns, count).
pub fn histogram_log2(latencies: impl IntoIterator<Item = u64>) -> Vec<(u64, u64)> {
    let mut counts: std::collections::BTreeMap<u32, u64> = Default::default();
    for v in latencies {
        let bin = 64 - v.max(1).leading_zeros() - 1; // floor(log2(v))
        *counts.entry(bin).or_default() += 1;
    }
    counts.into_iter().map(|(bin, n)| (1u64 << bin, n)).collect()
}

/// Writes report JSON, raw CSV, and per-tenant histogram files into `dir`.
pub fn export(dir: &Path, report: &RunReport, samples: &[LatencySample]) -> Result<(), MetricsError> {
    fs::create_dir_all(dir)?;
    let prefix = format!("run{:03}", report.run_id);
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(dir.join(format!("{prefix}_report.json")), json)?;
    write_samples_csv(&dir.join(format!("{prefix}_samples.csv")), samples)?;
    for t in &report.tenants {
        if t.stats.is_none() {
            continue;
        }
        let rows = histogram_log2(
            samples
                .iter()
                .filter(|s| s.tenant_id == t.tenant_id)
                .map(|s| s.latency_ns()),
        );
        let mut w = BufWriter::new(fs::File::create(
            dir.join(format!("{prefix}_tenant{:02}_hist.txt", t.tenant_id)),
        )?);
        for (bin, count) in rows {
            writeln!(w, "{bin} {count}")?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(tenant: u16, seq: u64, send_ts: u64, latency: u64) -> LatencySample {
        LatencySample {
            run_id: 1,
            tenant_id: tenant,
            seq,
            msg_type: MsgKind::PacketIn,
            send_ts,
            recv_ts: send_ts + latency,
        }
    }

    #[test]
    fn trim_keeps_only_the_window() {
        // 30s run, 5/5 trim leaves a 20s window
        let s = vec![
            sample(1, 0, 4_999_000_000, 10), // excluded: before warmup
            sample(1, 1, 5_000_000_000, 10), // included: boundary
            sample(1, 2, 20_000_000_000, 10),
            sample(1, 3, 24_999_999_999, 10),
            sample(1, 4, 25_000_000_000, 10), // excluded: cooldown
        ];
        let t = trim(&s, 5, 5, 30).unwrap();
        assert_eq!(t.iter().map(|s| s.seq).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert!(matches!(
            trim(&[], 15, 15, 30),
            Err(MetricsError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn trim_plus_excluded_equals_total() {
        let samples: Vec<_> = (0..1000)
            .map(|i| sample(1, i, i * 30_000_000, 5))
            .collect();
        let kept = trim(&samples, 5, 5, 30).unwrap();
        let (w0, w1) = trim_window_ns(5, 5, 30);
        let excluded = samples
            .iter()
            .filter(|s| s.send_ts < w0 || s.send_ts >= w1)
            .count();
        assert_eq!(kept.len() + excluded, samples.len());
    }

    #[test]
    fn constant_samples_collapse() {
        let stats = summarize(std::iter::repeat(3_000_000).take(50));
        assert_eq!(stats.mean_ns, 3_000_000.0);
        assert_eq!(stats.median_ns, 3_000_000);
        assert_eq!(stats.p99_ns, 3_000_000);
        assert_eq!(stats.max_ns, 3_000_000);
    }

    #[test]
    fn median_of_five_is_third() {
        let stats = summarize([1, 2, 3, 4, 5].map(|v| v * 1_000_000));
        assert_eq!(stats.median_ns, 3_000_000);
    }

    #[test]
    fn jain_of_equal_means_is_one() {
        let f = fairness(&[2.0, 2.0, 2.0, 2.0]).unwrap();
        assert!((f.jain - 1.0).abs() < 1e-12);
        assert_eq!(f.max_min_ratio, 1.0);
    }

    #[test]
    fn jain_hand_computation_two_tenants() {
        // (1+3)^2 / (2 * (1+9)) = 16/20
        let f = fairness(&[1.0, 3.0]).unwrap();
        assert!((f.jain - 0.8).abs() < 1e-12);
        assert!((f.max_min_ratio - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jain_rejects_degenerate_input() {
        assert!(matches!(fairness(&[1.0]), Err(MetricsError::TooFewTenants(1))));
        assert!(matches!(fairness(&[0.0, 1.0]), Err(MetricsError::ZeroMean)));
    }

    #[test]
    fn skewed_tenant_fixture() {
        // 17 tenants at 6ms, 3 at 0.5ms: ratio 12; Jain by direct formula
        // (17*6 + 3*0.5)^2 / (20 * (17*36 + 3*0.25)) = 103.5^2 / 12255
        let mut means = vec![6.0; 17];
        means.extend_from_slice(&[0.5, 0.5, 0.5]);
        let f = fairness(&means).unwrap();
        let expected = (103.5f64 * 103.5) / (20.0 * 612.75);
        assert!((f.jain - expected).abs() < 1e-12);
        assert!((f.max_min_ratio - 12.0).abs() < 1e-12);
        assert!(f.jain > 0.0 && f.jain <= 1.0);
    }

    #[test]
    fn cpu_sampler_sees_busy_threads() {
        let mut sampler = CpuSampler::new(std::process::id()).unwrap();
        sampler.sample().unwrap();
        let stop = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
        let spinners: Vec<_> = (0..2)
            .map(|_| {
                let stop = stop.clone();
                std::thread::spawn(move || {
                    let mut x = 0u64;
                    while !stop.load(std::sync::atomic::Ordering::Relaxed) {
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1);
                        std::hint::black_box(x);
                    }
                })
            })
            .collect();
        std::thread::sleep(Duration::from_millis(600));
        let s = sampler.sample().unwrap();
        stop.store(true, std::sync::atomic::Ordering::Relaxed);
        for t in spinners {
            t.join().unwrap();
        }
        // two spinning threads on a >=2-core box; leave slack for test
        // harness contention
        assert!(s.percent > 120.0, "got {}%", s.percent);
    }

    #[test]
    fn csv_round_trip_reproduces_statistics() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<_> = (0..500)
            .map(|i| sample((i % 4) as u16, i, i * 1000, 1000 + (i * 37) % 9000))
            .collect();
        let path = dir.path().join("samples.csv");
        write_samples_csv(&path, &samples).unwrap();
        let back = read_samples_csv(&path).unwrap();
        assert_eq!(back, samples);
        let a = summarize(samples.iter().map(|s| s.latency_ns()));
        let b = summarize(back.iter().map(|s| s.latency_ns()));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_run_writes_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_samples_csv(&path, &[]).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        assert_eq!(content, format!("{CSV_HEADER}\n"));
        assert!(read_samples_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn histogram_bins_are_powers_of_two() {
        let rows = histogram_log2([1, 2, 3, 4, 1000, 1024, 2047]);
        assert_eq!(rows, vec![(1, 1), (2, 2), (4, 1), (512, 1), (1024, 2)]);
    }
}
