//! High-rate OpenFlow 1.0 control-plane benchmark.
//!
//! The crate emulates every piece of a multi-tenant SDN measurement on one
//! machine: per-tenant controllers generating constant-rate OpenFlow
//! traffic, a data-plane injector/receiver pair, a minimal OpenFlow switch,
//! and two behavioral hypervisor proxies (transparent flowspace slicing vs.
//! address translation with stats caching). Latency is measured end to end
//! with a shared monotonic clock; runs trim to steady state and report
//! per-tenant statistics, fairness, and proxy CPU utilization.

pub mod codec;
pub mod collector;
pub mod dataplane;
pub mod metrics;
pub mod net;
pub mod pacer;
pub mod packet;
pub mod probe;
pub mod proxy;
pub mod runner;
pub mod scenario;
pub mod switch;
pub mod tenant;
