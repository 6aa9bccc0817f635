//! Constant-rate message pacing at millisecond granularity.
//!
//! A [`RatePlan`] spreads `rate` emissions per second over millisecond
//! buckets by error accumulation, so bucket counts within any second differ
//! by at most one. The clocked runner emits each bucket at its boundary and
//! catches up (never drops) after scheduling overruns: total emissions
//! always equal `rate x duration`, which keeps comparisons at a fixed total
//! rate honest even on a loaded machine.

use std::time::{Duration, Instant};

/// Per-millisecond emission counts for a constant-rate run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatePlan {
    rate: u32,
    duration_s: u32,
    buckets: Vec<u32>,
}

impl RatePlan {
    /// Plans `rate` messages/second for `duration_s` seconds.
    /// Bucket `i` receives `floor((i+1)*rate/1000) - floor(i*rate/1000)`.
    pub fn new(rate: u32, duration_s: u32) -> RatePlan {
        assert!(rate >= 1, "rate must be at least 1/s");
        assert!(duration_s >= 1, "duration must be at least 1s");
        let rate64 = u64::from(rate);
        let n = duration_s as usize * 1000;
        let mut buckets = Vec::with_capacity(n);
        let mut prev = 0u64;
        for i in 0..n {
            let next = (i as u64 + 1) * rate64 / 1000;
            buckets.push((next - prev) as u32);
            prev = next;
        }
        RatePlan { rate, duration_s, buckets }
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn duration_s(&self) -> u32 {
        self.duration_s
    }

    pub fn buckets(&self) -> &[u32] {
        &self.buckets
    }

    /// Total planned emissions: `rate x duration`.
    pub fn total(&self) -> u64 {
        u64::from(self.rate) * u64::from(self.duration_s)
    }
}

/// What the clocked runner observed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PaceRecord {
    pub emitted: u64,
    /// Ticks that lagged their boundary by more than the warn threshold.
    pub overruns: u64,
    pub max_lag: Duration,
    /// Emissions per elapsed wall-clock second.
    pub per_second: Vec<u64>,
}

/// Pull-style pacing state, for callers that interleave emission with
/// other work (draining an inbox) while waiting for the next boundary.
#[derive(Debug)]
pub struct Pacer {
    plan: RatePlan,
    epoch: Instant,
    next_bucket: usize,
    overrun_warn: Duration,
    record: PaceRecord,
}

pub const DEFAULT_OVERRUN_WARN: Duration = Duration::from_millis(10);

impl Pacer {
    pub fn new(plan: RatePlan, epoch: Instant, overrun_warn: Duration) -> Pacer {
        Pacer {
            plan,
            epoch,
            next_bucket: 0,
            overrun_warn,
            record: PaceRecord::default(),
        }
    }

    /// Boundary instant of the next unemitted bucket, or `None` when done.
    pub fn next_deadline(&self) -> Option<Instant> {
        if self.next_bucket >= self.plan.buckets.len() {
            return None;
        }
        Some(self.epoch + Duration::from_millis(self.next_bucket as u64))
    }

    /// Number of emissions due at `now`: the sum of every bucket whose
    /// boundary has passed. Lagging buckets are merged, not dropped.
    pub fn take_due(&mut self, now: Instant) -> u32 {
        let elapsed_ms = now.saturating_duration_since(self.epoch).as_millis() as usize;
        let mut due = 0u32;
        let first = self.next_bucket;
        while self.next_bucket < self.plan.buckets.len() && self.next_bucket <= elapsed_ms {
            due += self.plan.buckets[self.next_bucket];
            self.next_bucket += 1;
        }
        if due > 0 {
            let lag = now.saturating_duration_since(self.epoch)
                - Duration::from_millis(first as u64);
            if lag > self.overrun_warn {
                self.record.overruns += 1;
                log::warn!("emission lagged its boundary by {lag:?}");
            }
            if lag > self.record.max_lag {
                self.record.max_lag = lag;
            }
            let sec = (now.saturating_duration_since(self.epoch)).as_secs() as usize;
            if self.record.per_second.len() <= sec {
                self.record.per_second.resize(sec + 1, 0);
            }
            self.record.per_second[sec] += u64::from(due);
            self.record.emitted += u64::from(due);
        }
        due
    }

    pub fn finished(&self) -> bool {
        self.next_bucket >= self.plan.buckets.len()
    }

    pub fn record(&self) -> &PaceRecord {
        &self.record
    }

    pub fn into_record(self) -> PaceRecord {
        self.record
    }
}

/// Runs a plan against the monotonic clock, calling `emit` once per
/// message. Blocks until the plan is exhausted.
pub fn run_clocked(plan: RatePlan, mut emit: impl FnMut(u64)) -> PaceRecord {
    let mut pacer = Pacer::new(plan, Instant::now(), DEFAULT_OVERRUN_WARN);
    let mut seq = 0u64;
    while let Some(deadline) = pacer.next_deadline() {
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
        let due = pacer.take_due(Instant::now());
        for _ in 0..due {
            emit(seq);
            seq += 1;
        }
    }
    pacer.into_record()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force bucket checks: exact sum per second, spread at most 1.
    fn check_plan(rate: u32, duration_s: u32) {
        let plan = RatePlan::new(rate, duration_s);
        assert_eq!(plan.buckets().len(), duration_s as usize * 1000);
        assert_eq!(
            plan.buckets().iter().map(|&b| u64::from(b)).sum::<u64>(),
            plan.total()
        );
        for sec in plan.buckets().chunks(1000) {
            assert_eq!(sec.iter().map(|&b| u64::from(b)).sum::<u64>(), u64::from(rate));
            let max = sec.iter().max().unwrap();
            let min = sec.iter().min().unwrap();
            assert!(max - min <= 1, "spread {} at rate {rate}", max - min);
        }
    }

    #[test]
    fn divisible_rate_fills_evenly() {
        let plan = RatePlan::new(10_000, 1);
        assert!(plan.buckets().iter().all(|&b| b == 10));
        let plan = RatePlan::new(40_000, 1);
        assert!(plan.buckets().iter().all(|&b| b == 40));
    }

    #[test]
    fn fractional_rate_alternates() {
        let plan = RatePlan::new(7_500, 1);
        assert!(plan.buckets().iter().all(|&b| b == 7 || b == 8));
        check_plan(7_500, 1);
    }

    #[test]
    fn assorted_rates_conserve_and_smooth() {
        for rate in [1, 3, 999, 1000, 1001, 5_000, 7_500, 39_999, 60_000] {
            check_plan(rate, 2);
        }
    }

    #[test]
    fn single_emission_plan() {
        let plan = RatePlan::new(1, 1);
        assert_eq!(plan.total(), 1);
        let record = run_clocked(plan, |_| {});
        assert_eq!(record.emitted, 1);
    }

    #[test]
    fn clocked_run_conserves_total() {
        let plan = RatePlan::new(1000, 1);
        let mut count = 0u64;
        let record = run_clocked(plan, |_| count += 1);
        assert_eq!(count, 1000);
        assert_eq!(record.emitted, 1000);
    }

    #[test]
    fn stall_mid_run_catches_up_without_drops() {
        // fault injection: stall the emitter for 5ms partway through
        let plan = RatePlan::new(2000, 1);
        let total = plan.total();
        let mut count = 0u64;
        let record = run_clocked(plan, |seq| {
            if seq == 500 {
                std::thread::sleep(Duration::from_millis(5));
            }
            count += 1;
        });
        assert_eq!(count, total);
        assert_eq!(record.emitted, total);
    }

    #[test]
    fn pacer_reports_catch_up_as_single_batch() {
        let plan = RatePlan::new(1000, 1);
        let epoch = Instant::now();
        let mut pacer = Pacer::new(plan, epoch, DEFAULT_OVERRUN_WARN);
        // pretend we wake up 10 buckets late
        let due = pacer.take_due(epoch + Duration::from_millis(10));
        assert_eq!(due, 11); // buckets 0..=10
        assert!(!pacer.finished());
    }
}
