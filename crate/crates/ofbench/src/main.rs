//! Command-line entry point.
//!
//! `run`, `sweep`, `preset`, and `list-presets` drive measurements;
//! `switch` and `proxy` run the emulated components standalone (the
//! orchestrator launches them as child processes, but they work by hand
//! too: they print a JSON ready line and exit on stdin EOF).
//!
//! Log verbosity comes from `RUST_LOG` (error/warn/info/debug).

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ofbench::metrics::RunReport;
use ofbench::proxy::{self, ProxyConfig, SliceConfig};
use ofbench::runner::{self, ProxyReady, RunOutcome, RunnerOptions, SweepAxis, SwitchReady};
use ofbench::scenario::{self, Axis, HypervisorMode, Scenario, TenantAxis};
use ofbench::switch::{self, SwitchConfig};

#[derive(Parser)]
#[command(
    name = "ofbench",
    about = "OpenFlow 1.0 control-plane benchmark with emulated switch and hypervisor proxies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every point of a scenario file.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sweep one axis of a scenario, holding the others fixed.
    Sweep {
        scenario: PathBuf,
        /// Axis to iterate: rate | tenants.
        #[arg(long)]
        axis: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a bundled preset (see list-presets).
    Preset {
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the bundled presets.
    ListPresets,
    /// Run the switch emulator standalone.
    Switch(SwitchArgs),
    /// Run a hypervisor proxy standalone.
    Proxy(ProxyArgs),
}

#[derive(Args)]
struct Overrides {
    /// Output directory for reports, samples, and histograms.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run duration in seconds.
    #[arg(long)]
    duration: Option<u32>,
    /// Override warmup/cooldown trim in seconds.
    #[arg(long)]
    trim: Option<u32>,
    /// Override the no-delay flag (0 or 1).
    #[arg(long)]
    nodelay: Option<u8>,
    /// Override the hypervisor mode: none | fv | ovx.
    #[arg(long)]
    hypervisor: Option<String>,
    /// Override the total message rate (msgs/s).
    #[arg(long)]
    rate: Option<u32>,
    /// Override the tenant count.
    #[arg(long)]
    tenants: Option<u16>,
    /// Override the number of runs per point.
    #[arg(long)]
    runs: Option<u32>,
    /// Skip the raw per-sample CSV (reports and histograms only).
    #[arg(long)]
    no_raw: bool,
    /// Host switch and proxy inside this process instead of children.
    #[arg(long)]
    in_process: bool,
}

#[derive(Args)]
struct SwitchArgs {
    /// Control-plane listen address.
    #[arg(long, default_value = "127.0.0.1:0")]
    control: SocketAddr,
    /// Data-plane UDP bind address.
    #[arg(long, default_value = "127.0.0.1:0")]
    data: SocketAddr,
    #[arg(long, default_value_t = 0x00b00c5e00000001)]
    dpid: u64,
    /// Port-stats requests serviced per second.
    #[arg(long, default_value_t = 7500)]
    stats_capacity: u32,
    #[arg(long, default_value_t = 100_000)]
    stats_queue_bound: usize,
    /// Destination for packet bytes emitted from packet-out messages.
    #[arg(long)]
    packet_out_dest: Option<SocketAddr>,
    /// Write a stats JSON here on shutdown.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Disable delayed-ACK link emulation on the control connection.
    #[arg(long)]
    no_delayed_acks: bool,
}

#[derive(Args)]
struct ProxyArgs {
    /// Proxy flavor: fv (transparent flowspace) | ovx (address translation).
    #[arg(long)]
    mode: String,
    /// Upstream switch control endpoint.
    #[arg(long)]
    switch: SocketAddr,
    /// Slice configuration file (TOML).
    #[arg(long)]
    slices: PathBuf,
    /// Stats poll rate toward the switch (ovx mode), polls/s.
    #[arg(long, default_value_t = 1.0)]
    poll_rate: f64,
    #[arg(long)]
    stats_out: Option<PathBuf>,
    #[arg(long)]
    no_delayed_acks: bool,
}

// exit codes: 0 ok, 2 bad scenario/config, 3 component launch failed,
// 4 one or more runs failed, 1 anything else
const EXIT_BAD_SCENARIO: u8 = 2;
const EXIT_LAUNCH_FAILED: u8 = 3;
const EXIT_RUN_FAILED: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { scenario, overrides } => match Scenario::load(&scenario) {
            Ok(s) => execute(apply_overrides(s, &overrides), &overrides, None),
            Err(e) => fail_scenario(e),
        },
        Cmd::Sweep { scenario, axis, overrides } => {
            let Some(axis) = SweepAxis::parse(&axis) else {
                eprintln!("unknown sweep axis {axis:?}; use rate or tenants");
                return ExitCode::from(EXIT_BAD_SCENARIO);
            };
            match Scenario::load(&scenario) {
                Ok(s) => execute(apply_overrides(s, &overrides), &overrides, Some(axis)),
                Err(e) => fail_scenario(e),
            }
        }
        Cmd::Preset { name, overrides } => match scenario::preset(&name) {
            Ok(s) => execute(apply_overrides(s, &overrides), &overrides, None),
            Err(e) => fail_scenario(e),
        },
        Cmd::ListPresets => {
            for name in scenario::PRESET_NAMES {
                let s = scenario::preset(name).unwrap();
                println!(
                    "{name}: {} tenants={:?} rates={:?} nodelay={:?} hypervisors={:?} runs={} {}s",
                    s.msg_type,
                    s.tenants.values(),
                    s.rate.values(),
                    s.nodelay.values(),
                    s.hypervisor
                        .values()
                        .iter()
                        .map(|h| h.to_string())
                        .collect::<Vec<_>>(),
                    s.runs,
                    s.duration_s,
                );
            }
            ExitCode::SUCCESS
        }
        Cmd::Switch(args) => run_switch(args),
        Cmd::Proxy(args) => run_proxy(args),
    }
}

fn fail_scenario(e: scenario::ScenarioError) -> ExitCode {
    eprintln!("{e}");
    ExitCode::from(EXIT_BAD_SCENARIO)
}

fn apply_overrides(mut s: Scenario, o: &Overrides) -> Scenario {
    if let Some(seed) = o.seed {
        s.seed = seed;
    }
    if let Some(duration) = o.duration {
        s.duration_s = duration;
    }
    if let Some(trim) = o.trim {
        s.trim_s = trim;
    }
    if let Some(nodelay) = o.nodelay {
        s.nodelay = Axis::One(nodelay != 0);
    }
    if let Some(h) = &o.hypervisor {
        if let Some(mode) = HypervisorMode::parse(h) {
            s.hypervisor = Axis::One(mode);
            s.switch_only = mode == HypervisorMode::None;
        } else {
            eprintln!("ignoring unknown hypervisor {h:?}");
        }
    }
    if let Some(rate) = o.rate {
        s.rate = Axis::One(rate);
    }
    if let Some(tenants) = o.tenants {
        s.tenants = TenantAxis::One(tenants);
    }
    if let Some(runs) = o.runs {
        s.runs = runs;
    }
    s
}

fn execute(s: Scenario, o: &Overrides, axis: Option<SweepAxis>) -> ExitCode {
    if let Err(e) = s.validate() {
        return fail_scenario(e);
    }
    let mut opts = RunnerOptions::new(&o.out_dir);
    opts.export_raw = !o.no_raw;
    if o.in_process {
        opts = opts.in_process();
    }
    let result = match axis {
        Some(axis) => runner::sweep_scenario(&s, axis, &opts),
        None => runner::run_scenario(&s, &opts),
    };
    let all = match result {
        Ok(all) => all,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_LAUNCH_FAILED);
        }
    };
    let mut failed = 0usize;
    for (point, outcomes) in &all {
        for outcome in outcomes {
            match outcome {
                RunOutcome::Report(r) => print_run_line(point.label().as_str(), r),
                RunOutcome::Failed { run_id, error } => {
                    failed += 1;
                    println!("{} run {run_id}: FAILED: {error}", point.label());
                }
            }
        }
    }
    println!(
        "{} point(s), {} run(s), {} failed; reports in {}",
        all.len(),
        all.iter().map(|(_, o)| o.len()).sum::<usize>(),
        failed,
        o.out_dir.display()
    );
    if failed > 0 {
        ExitCode::from(EXIT_RUN_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn print_run_line(label: &str, r: &RunReport) {
    match &r.aggregate {
        Some(agg) => println!(
            "{label} run {}: {} samples, median {:.3} ms, mean {:.3} ms, p99 {:.3} ms, rate {:.0}/s",
            r.run_id,
            agg.count,
            agg.median_ns as f64 / 1e6,
            agg.mean_ns / 1e6,
            agg.p99_ns as f64 / 1e6,
            r.aggregate_achieved_rate,
        ),
        None => println!("{label} run {}: no samples in the trimmed window", r.run_id),
    }
}

fn run_switch(args: SwitchArgs) -> ExitCode {
    let cfg = SwitchConfig {
        control_bind: args.control,
        data_bind: args.data,
        datapath_id: args.dpid,
        stats_capacity: args.stats_capacity,
        stats_queue_bound: args.stats_queue_bound,
        packet_out_dest: args.packet_out_dest,
        delayed_acks: !args.no_delayed_acks,
    };
    let handle = match switch::spawn(cfg) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("switch launch failed: {e}");
            return ExitCode::from(EXIT_LAUNCH_FAILED);
        }
    };
    runner::announce_ready(&SwitchReady {
        control: handle.control_addr,
        data: handle.data_addr,
    });
    runner::wait_for_stdin_eof();
    let report = handle.stop();
    if let Some(path) = args.stats_out {
        if let Err(e) = std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap()) {
            eprintln!("cannot write stats file: {e}");
        }
    }
    ExitCode::SUCCESS
}

fn run_proxy(args: ProxyArgs) -> ExitCode {
    let Some(mode) = HypervisorMode::parse(&args.mode) else {
        eprintln!("unknown proxy mode {:?}; use fv or ovx", args.mode);
        return ExitCode::from(EXIT_BAD_SCENARIO);
    };
    let slices = match SliceConfig::load(&args.slices) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_BAD_SCENARIO);
        }
    };
    let handle = match proxy::spawn(ProxyConfig {
        mode,
        switch_addr: args.switch,
        slices,
        poll_rate_per_s: args.poll_rate,
        delayed_acks: !args.no_delayed_acks,
    }) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("proxy launch failed: {e}");
            return ExitCode::from(EXIT_LAUNCH_FAILED);
        }
    };
    runner::announce_ready(&ProxyReady {
        tenant_ports: handle.tenant_ports.clone(),
    });
    runner::wait_for_stdin_eof();
    let report = handle.stop();
    if let Some(path) = args.stats_out {
        if let Err(e) = std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap()) {
            eprintln!("cannot write stats file: {e}");
        }
    }
    ExitCode::SUCCESS
}
