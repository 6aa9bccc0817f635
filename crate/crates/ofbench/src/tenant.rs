//! Tenant controller emulation.
//!
//! Each tenant is a sequential actor owning its connection, its pacer, and
//! its correlation table. The actor interleaves paced emission with
//! draining an inbox fed by its connection reader and by the data-plane
//! receiver; completed samples stream to the collector. Nothing is shared
//! across tenants except one-way channels, so stalling or killing one
//! tenant cannot move another tenant's counters.
//!
//! In switch-only multi-tenant runs all tenants share the switch's single
//! control connection through a [`SharedLink`], which demultiplexes inbound
//! traffic by probe tag (asynchronous) or xid (synchronous).

use std::collections::HashMap;
use std::io::Write;
use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};
use thiserror::Error;

use crate::codec::{self, OfBody, OfMessage, NO_BUFFER, PORT_NONE};
use crate::net::{self, MsgReader, ReadBatch};
use crate::pacer::{PaceRecord, Pacer, RatePlan, DEFAULT_OVERRUN_WARN};
use crate::packet::{self, AddressSide, ProbeTag, TenantIdentity};
use crate::probe::{Correlator, LatencySample, MsgKind};
use crate::switch::DATA_PORT_NO;

#[derive(Debug, Error)]
pub enum TenantError {
    #[error("connect to {0} failed: {1}")]
    ConnectFailed(SocketAddr, std::io::Error),
    #[error("handshake with {0} timed out")]
    HandshakeTimeout(SocketAddr),
    #[error("write failed: {0}")]
    WriteFailed(std::io::Error),
    #[error("probe socket: {0}")]
    SendFailed(std::io::Error),
}

/// Events arriving at a tenant actor's inbox.
#[derive(Debug)]
pub enum TenantEvent {
    /// A control-plane message for this tenant, with its receive instant.
    Cp(OfMessage, Instant),
    /// A probe completion seen by the data-plane receiver.
    DpProbe(ProbeTag, Instant),
}

#[derive(Debug, Clone)]
pub struct TenantConfig {
    pub run_id: u32,
    pub tenant_id: u16,
    pub msg_type: MsgKind,
    pub rate: u32,
    pub duration_s: u32,
    pub nodelay: bool,
    pub identity: TenantIdentity,
    /// Which addresses the controller writes into its packets: virtual
    /// behind an address-translating proxy, physical otherwise.
    pub address_side: AddressSide,
    pub probe_frame_len: usize,
    /// Switch data port, target of packet-in probes.
    pub dp_target: SocketAddr,
    pub expire_timeout: Duration,
    pub drain_timeout: Duration,
    /// Steady-state window in ns since epoch, for achieved-rate accounting.
    pub window: (u64, u64),
    pub connect_timeout: Duration,
    pub echo_payload: Vec<u8>,
}

/// Everything a tenant reports after its run.
#[derive(Debug, Clone, Default)]
pub struct TenantCounters {
    pub sent: u64,
    pub sent_in_window: u64,
    pub matched: u64,
    pub expired: u64,
    pub pending_at_end: u64,
    pub unmatched_replies: u64,
    pub duplicate_replies: u64,
    pub malformed_probes: u64,
    pub misrouted: u64,
    pub unknown_msgs: u64,
    pub overruns: u64,
    pub max_lag_ns: u64,
    pub per_second: Vec<u64>,
}

#[derive(Debug)]
pub struct TenantOutcome {
    pub tenant_id: u16,
    pub counters: TenantCounters,
    pub error: Option<String>,
}

/// How the tenant reaches its control-plane peer.
pub enum CpAttachment {
    /// Dial a dedicated connection (proxy tenant port, or the switch).
    Dedicated(SocketAddr),
    /// Share the switch's one control connection with other tenants.
    Shared(Arc<SharedLink>),
}

/// One control connection multiplexed across every tenant, used when no
/// proxy sits in front of the switch.
pub struct SharedLink {
    writer: Mutex<TcpStream>,
    next_xid: AtomicU32,
    routes: Mutex<HashMap<u32, u16>>,
    inboxes: Mutex<HashMap<u16, Sender<TenantEvent>>>,
    stop: AtomicBool,
}

impl SharedLink {
    /// Connects the shared link and spawns its demultiplexing reader.
    pub fn open(
        addr: SocketAddr,
        timeout: Duration,
    ) -> std::io::Result<(Arc<SharedLink>, std::thread::JoinHandle<()>)> {
        let (stream, fbuf) = net::connect_openflow(&addr, timeout)?;
        stream.set_read_timeout(Some(Duration::from_millis(200)))?;
        let reader_stream = stream.try_clone()?;
        let link = Arc::new(SharedLink {
            writer: Mutex::new(stream),
            next_xid: AtomicU32::new(1),
            routes: Mutex::new(HashMap::new()),
            inboxes: Mutex::new(HashMap::new()),
            stop: AtomicBool::new(false),
        });
        let reader_link = link.clone();
        let handle = std::thread::Builder::new()
            .name("shared-cp-reader".into())
            .spawn(move || reader_link.read_loop(reader_stream, fbuf))
            .expect("spawn shared reader");
        Ok((link, handle))
    }

    pub fn register(&self, tenant_id: u16, inbox: Sender<TenantEvent>) {
        self.inboxes.lock().unwrap().insert(tenant_id, inbox);
    }

    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    fn alloc_xid(&self, tenant_id: u16) -> u32 {
        let xid = self.next_xid.fetch_add(1, Ordering::Relaxed);
        self.routes.lock().unwrap().insert(xid, tenant_id);
        xid
    }

    fn write(&self, bytes: &[u8]) -> std::io::Result<()> {
        self.writer.lock().unwrap().write_all(bytes)
    }

    fn read_loop(&self, stream: TcpStream, fbuf: codec::FrameBuffer) {
        let mut reader = MsgReader::new(stream, fbuf, false);
        while !self.stop.load(Ordering::Relaxed) {
            let batch = match reader.read_batch() {
                Ok(ReadBatch::Msgs(msgs)) => msgs,
                Ok(ReadBatch::Eof) => break,
                Err(ref e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut =>
                {
                    continue;
                }
                Err(_) => break,
            };
            for (msg, ts) in batch {
                self.demux(msg, ts);
            }
        }
    }

    fn demux(&self, msg: OfMessage, ts: Instant) {
        let tenant = match &msg.body {
            OfBody::PacketIn { packet, .. } => {
                packet::parse_probe(packet).ok().map(|tag| tag.tenant_id)
            }
            OfBody::EchoReply(_) | OfBody::FeaturesReply { .. } | OfBody::PortStatsReply { .. } => {
                self.routes.lock().unwrap().remove(&msg.xid)
            }
            OfBody::EchoRequest(payload) => {
                let reply = OfMessage::new(msg.xid, OfBody::EchoReply(payload.clone()));
                let _ = self.write(&codec::encode(&reply).unwrap());
                return;
            }
            _ => None,
        };
        if let Some(tenant_id) = tenant {
            let inboxes = self.inboxes.lock().unwrap();
            if let Some(tx) = inboxes.get(&tenant_id) {
                let _ = tx.send(TenantEvent::Cp(msg, ts));
            }
        }
    }
}

enum CpLink {
    Own { stream: TcpStream, next_xid: u32 },
    Shared { link: Arc<SharedLink> },
}

impl CpLink {
    fn alloc_xid(&mut self, tenant_id: u16) -> u32 {
        match self {
            CpLink::Own { next_xid, .. } => {
                let xid = *next_xid;
                *next_xid += 1;
                xid
            }
            CpLink::Shared { link } => link.alloc_xid(tenant_id),
        }
    }

    fn write(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        match self {
            CpLink::Own { stream, .. } => stream.write_all(bytes),
            CpLink::Shared { link } => link.write(bytes),
        }
    }
}

/// A started tenant: join for its outcome.
pub struct TenantHandle {
    pub tenant_id: u16,
    pub inbox_tx: Sender<TenantEvent>,
    thread: std::thread::JoinHandle<TenantOutcome>,
    reader: Option<std::thread::JoinHandle<()>>,
    stop: Arc<AtomicBool>,
}

impl TenantHandle {
    pub fn join(self) -> TenantOutcome {
        let outcome = self
            .thread
            .join()
            .unwrap_or_else(|_| panic_outcome(self.tenant_id));
        self.stop.store(true, Ordering::SeqCst);
        if let Some(r) = self.reader {
            let _ = r.join();
        }
        outcome
    }
}

fn panic_outcome(tenant_id: u16) -> TenantOutcome {
    TenantOutcome {
        tenant_id,
        counters: TenantCounters::default(),
        error: Some("tenant actor panicked".into()),
    }
}

/// Connects (or attaches), completes the handshake, and starts the
/// tenant's actor. Emission begins at `epoch`.
pub fn start_tenant(
    cfg: TenantConfig,
    attachment: CpAttachment,
    epoch: Instant,
    samples_tx: Sender<LatencySample>,
    inbox: (Sender<TenantEvent>, Receiver<TenantEvent>),
) -> Result<TenantHandle, TenantError> {
    let (inbox_tx, inbox_rx) = inbox;
    let stop = Arc::new(AtomicBool::new(false));

    let (link, reader) = match attachment {
        CpAttachment::Dedicated(addr) => {
            let (stream, fbuf) = net::connect_openflow(&addr, cfg.connect_timeout)
                .map_err(|e| match e.kind() {
                    std::io::ErrorKind::TimedOut | std::io::ErrorKind::UnexpectedEof => {
                        TenantError::HandshakeTimeout(addr)
                    }
                    _ => TenantError::ConnectFailed(addr, e),
                })?;
            // the no-delay choice under test applies from here on
            stream
                .set_nodelay(cfg.nodelay)
                .map_err(|e| TenantError::ConnectFailed(addr, e))?;
            stream
                .set_read_timeout(Some(Duration::from_millis(200)))
                .map_err(|e| TenantError::ConnectFailed(addr, e))?;
            let reader_stream = stream
                .try_clone()
                .map_err(|e| TenantError::ConnectFailed(addr, e))?;
            let reader_tx = inbox_tx.clone();
            let reader_stop = stop.clone();
            let tenant_id = cfg.tenant_id;
            let reader = std::thread::Builder::new()
                .name(format!("t{tenant_id}-cp-reader"))
                .spawn(move || cp_read_loop(reader_stream, fbuf, reader_tx, reader_stop))
                .expect("spawn cp reader");
            (CpLink::Own { stream, next_xid: 1 }, Some(reader))
        }
        CpAttachment::Shared(link) => {
            link.register(cfg.tenant_id, inbox_tx.clone());
            (CpLink::Shared { link }, None)
        }
    };

    let udp = if cfg.msg_type == MsgKind::PacketIn {
        let socket = UdpSocket::bind("127.0.0.1:0").map_err(TenantError::SendFailed)?;
        socket.connect(cfg.dp_target).map_err(TenantError::SendFailed)?;
        Some(socket)
    } else {
        None
    };

    let tenant_id = cfg.tenant_id;
    let actor_stop = stop.clone();
    let thread = std::thread::Builder::new()
        .name(format!("t{tenant_id}-actor"))
        .spawn(move || actor_loop(cfg, link, udp, epoch, samples_tx, inbox_rx, actor_stop))
        .expect("spawn tenant actor");

    Ok(TenantHandle { tenant_id, inbox_tx, thread, reader, stop })
}

fn cp_read_loop(
    stream: TcpStream,
    fbuf: codec::FrameBuffer,
    tx: Sender<TenantEvent>,
    stop: Arc<AtomicBool>,
) {
    let mut reader = MsgReader::new(stream, fbuf, false);
    while !stop.load(Ordering::Relaxed) {
        match reader.read_batch() {
            Ok(ReadBatch::Msgs(msgs)) => {
                for (msg, ts) in msgs {
                    if tx.send(TenantEvent::Cp(msg, ts)).is_err() {
                        return;
                    }
                }
            }
            Ok(ReadBatch::Eof) => return,
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut => {}
            Err(_) => return,
        }
    }
}

struct Actor {
    cfg: TenantConfig,
    link: CpLink,
    udp: Option<UdpSocket>,
    epoch: Instant,
    correlator: Correlator,
    samples_tx: Sender<LatencySample>,
    /// xid -> emission seq for synchronous kinds.
    sync_seqs: HashMap<u32, u64>,
    counters: TenantCounters,
    /// Reused per-tick encode buffer; one write per tick.
    tick_buf: Vec<u8>,
    write_error: Option<String>,
}

impl Actor {
    fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    fn instant_ns(&self, at: Instant) -> u64 {
        at.saturating_duration_since(self.epoch).as_nanos() as u64
    }

    /// Emits one tick's worth of messages and flushes them immediately.
    ///
    /// Probe injections leave as one batched datagram syscall. Control
    /// messages are encoded back to back and flushed with one write per
    /// tick: nothing waits beyond its generation instant, so the no-delay
    /// semantics hold at the tool's millisecond granularity, while the
    /// socket's no-delay flag still decides whether the kernel may merge
    /// segments across ticks.
    fn emit_due(&mut self, seq: &mut u64, due: u32) {
        if due == 0 {
            return;
        }
        if self.cfg.msg_type == MsgKind::PacketIn {
            let mut frames = Vec::with_capacity(due as usize);
            for _ in 0..due {
                let send_ts = self.now_ns();
                self.count_window(send_ts);
                let tag = ProbeTag { tenant_id: self.cfg.tenant_id, seq: *seq, send_ts };
                frames.push(packet::build_probe_frame(
                    &self.cfg.identity,
                    AddressSide::Physical,
                    &tag,
                    self.cfg.probe_frame_len,
                ));
                self.correlator.sent_probe(*seq, send_ts);
                *seq += 1;
            }
            if let Some(udp) = &self.udp {
                if let Err(e) = net::send_udp_batch(udp, &frames) {
                    self.fail(format!("probe send failed: {e}"));
                }
            }
            return;
        }
        let mut tick_buf = std::mem::take(&mut self.tick_buf);
        tick_buf.clear();
        for _ in 0..due {
            self.encode_one(*seq, &mut tick_buf);
            *seq += 1;
        }
        if let Err(e) = self.link.write(&tick_buf) {
            self.fail(format!("write failed: {e}"));
        }
        self.tick_buf = tick_buf;
    }

    fn count_window(&mut self, send_ts: u64) {
        let (w0, w1) = self.cfg.window;
        if send_ts >= w0 && send_ts < w1 {
            self.counters.sent_in_window += 1;
        }
    }

    fn encode_one(&mut self, seq: u64, out: &mut Vec<u8>) {
        let send_ts = self.now_ns();
        self.count_window(send_ts);
        let msg = match self.cfg.msg_type {
            MsgKind::PacketIn => unreachable!("probe injection is batched"),
            MsgKind::PacketOut => {
                let tag = ProbeTag { tenant_id: self.cfg.tenant_id, seq, send_ts };
                let frame = packet::build_probe_frame(
                    &self.cfg.identity,
                    self.cfg.address_side,
                    &tag,
                    self.cfg.probe_frame_len,
                );
                self.correlator.sent_probe(seq, send_ts);
                OfMessage::new(
                    self.link.alloc_xid(self.cfg.tenant_id),
                    OfBody::PacketOut {
                        buffer_id: NO_BUFFER,
                        in_port: PORT_NONE,
                        actions: vec![codec::Action::Output { port: DATA_PORT_NO, max_len: 0 }],
                        packet: frame,
                    },
                )
            }
            MsgKind::PortStats => {
                let xid = self.link.alloc_xid(self.cfg.tenant_id);
                self.sync_seqs.insert(xid, seq);
                self.correlator.sent_sync(xid, send_ts);
                OfMessage::new(xid, OfBody::PortStatsRequest { port_no: PORT_NONE })
            }
            MsgKind::Echo => {
                let xid = self.link.alloc_xid(self.cfg.tenant_id);
                self.sync_seqs.insert(xid, seq);
                self.correlator.sent_sync(xid, send_ts);
                OfMessage::new(xid, OfBody::EchoRequest(self.cfg.echo_payload.clone()))
            }
            MsgKind::Features => {
                let xid = self.link.alloc_xid(self.cfg.tenant_id);
                self.sync_seqs.insert(xid, seq);
                self.correlator.sent_sync(xid, send_ts);
                OfMessage::new(xid, OfBody::FeaturesRequest)
            }
        };
        codec::encode_into(&msg, out).expect("benchmark messages encode");
    }

    fn write_msg(&mut self, msg: &OfMessage) {
        let bytes = codec::encode(msg).expect("benchmark messages encode");
        if let Err(e) = self.link.write(&bytes) {
            self.fail(format!("write failed: {e}"));
        }
    }

    fn fail(&mut self, reason: String) {
        if self.write_error.is_none() {
            log::error!("tenant {}: {reason}", self.cfg.tenant_id);
            self.write_error = Some(reason);
        }
    }

    fn handle(&mut self, event: TenantEvent) {
        match event {
            TenantEvent::Cp(msg, at) => {
                let recv_ts = self.instant_ns(at);
                match msg.body {
                    OfBody::PacketIn { packet, .. } => match packet::parse_probe(&packet) {
                        Ok(tag) => self.probe_completion(tag, MsgKind::PacketIn, recv_ts),
                        Err(_) => self.correlator.note_malformed(),
                    },
                    OfBody::EchoReply(_) => self.sync_completion(msg.xid, MsgKind::Echo, recv_ts),
                    OfBody::FeaturesReply { .. } => {
                        self.sync_completion(msg.xid, MsgKind::Features, recv_ts)
                    }
                    OfBody::PortStatsReply { .. } => {
                        self.sync_completion(msg.xid, MsgKind::PortStats, recv_ts)
                    }
                    OfBody::EchoRequest(payload) => {
                        let reply = OfMessage::new(msg.xid, OfBody::EchoReply(payload));
                        self.write_msg(&reply);
                    }
                    OfBody::Hello => {}
                    _ => self.counters.unknown_msgs += 1,
                }
            }
            TenantEvent::DpProbe(tag, at) => {
                let recv_ts = self.instant_ns(at);
                self.probe_completion(tag, MsgKind::PacketOut, recv_ts);
            }
        }
    }

    fn probe_completion(&mut self, tag: ProbeTag, kind: MsgKind, recv_ts: u64) {
        if tag.tenant_id != self.cfg.tenant_id {
            // isolation violation: a message for someone else reached us
            self.counters.misrouted += 1;
            return;
        }
        if let Ok(sample) = self.correlator.on_probe(&tag, kind, recv_ts) {
            let _ = self.samples_tx.send(sample);
        }
    }

    fn sync_completion(&mut self, xid: u32, kind: MsgKind, recv_ts: u64) {
        let seq = self.sync_seqs.remove(&xid).unwrap_or(u64::from(xid));
        if let Ok(sample) = self.correlator.on_sync_reply(xid, seq, kind, recv_ts) {
            let _ = self.samples_tx.send(sample);
        }
    }

    fn expire(&mut self) {
        self.correlator
            .table
            .expire(self.now_ns(), self.cfg.expire_timeout.as_nanos() as u64);
    }

    fn finish(mut self, pace: PaceRecord) -> TenantOutcome {
        let t = &self.correlator.table;
        self.counters.sent = t.sent;
        self.counters.matched = t.matched;
        self.counters.expired = t.expired;
        self.counters.pending_at_end = t.pending() as u64;
        self.counters.unmatched_replies = t.unmatched_replies;
        self.counters.duplicate_replies = t.duplicate_replies;
        self.counters.malformed_probes = self.correlator.malformed_probes;
        self.counters.overruns = pace.overruns;
        self.counters.max_lag_ns = pace.max_lag.as_nanos() as u64;
        self.counters.per_second = pace.per_second;
        TenantOutcome {
            tenant_id: self.cfg.tenant_id,
            counters: self.counters,
            error: self.write_error,
        }
    }
}

fn actor_loop(
    cfg: TenantConfig,
    link: CpLink,
    udp: Option<UdpSocket>,
    epoch: Instant,
    samples_tx: Sender<LatencySample>,
    inbox: Receiver<TenantEvent>,
    stop: Arc<AtomicBool>,
) -> TenantOutcome {
    let run_id = cfg.run_id;
    let tenant_id = cfg.tenant_id;
    let plan = RatePlan::new(cfg.rate.max(1), cfg.duration_s);
    let emit_nothing = cfg.rate == 0;
    let drain_timeout = cfg.drain_timeout;
    let mut pacer = Pacer::new(plan, epoch, DEFAULT_OVERRUN_WARN);
    let mut actor = Actor {
        cfg,
        link,
        udp,
        epoch,
        correlator: Correlator::new(run_id, tenant_id),
        samples_tx,
        sync_seqs: HashMap::new(),
        counters: TenantCounters::default(),
        tick_buf: Vec::new(),
        write_error: None,
    };
    let mut seq = 0u64;
    let mut last_expiry = Instant::now();

    // emission phase: paced sends interleaved with inbox draining
    while let Some(deadline) = pacer.next_deadline() {
        if stop.load(Ordering::Relaxed) || actor.write_error.is_some() {
            break;
        }
        let now = Instant::now();
        if deadline > now {
            if let Some(event) = actor_recv(&inbox, deadline - now) {
                actor.handle(event);
                // keep draining inbox without re-parking, bounded so the
                // next tick cannot starve
                let mut burst = 0;
                while burst < 512 && Instant::now() < deadline {
                    match inbox.try_recv() {
                        Ok(event) => actor.handle(event),
                        Err(_) => break,
                    }
                    burst += 1;
                }
                continue;
            }
        }
        let due = pacer.take_due(Instant::now());
        if !emit_nothing {
            actor.emit_due(&mut seq, due);
        }
        if last_expiry.elapsed() > Duration::from_secs(1) {
            actor.expire();
            last_expiry = Instant::now();
        }
    }

    // drain phase: wait out in-flight replies
    let drain_deadline = Instant::now() + drain_timeout;
    while actor.correlator.table.pending() > 0 && Instant::now() < drain_deadline {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        if let Some(event) = actor_recv(&inbox, Duration::from_millis(50)) {
            actor.handle(event);
            // backlogged completions drain in batches
            while let Ok(event) = inbox.try_recv() {
                actor.handle(event);
            }
        }
        if last_expiry.elapsed() > Duration::from_secs(1) {
            actor.expire();
            last_expiry = Instant::now();
        }
    }
    // whatever is still outstanding at the end stays "pending": the
    // conservation identity covers matched, expired, and pending
    actor.finish(pacer.into_record())
}

fn actor_recv(inbox: &Receiver<TenantEvent>, wait: Duration) -> Option<TenantEvent> {
    inbox.recv_timeout(wait.min(Duration::from_millis(100))).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn connect_failure_is_reported() {
        // port 1 on loopback: nothing listens there
        let addr: SocketAddr = "127.0.0.1:1".parse().unwrap();
        let cfg = TenantConfig {
            run_id: 1,
            tenant_id: 1,
            msg_type: MsgKind::PacketOut,
            rate: 10,
            duration_s: 1,
            nodelay: true,
            identity: TenantIdentity::for_tenant(1),
            address_side: AddressSide::Physical,
            probe_frame_len: 64,
            dp_target: addr,
            expire_timeout: Duration::from_secs(1),
            drain_timeout: Duration::from_secs(1),
            window: (0, u64::MAX),
            connect_timeout: Duration::from_millis(300),
            echo_payload: vec![],
        };
        let (tx, rx) = crossbeam_channel::unbounded();
        let (stx, _srx) = crossbeam_channel::unbounded();
        let err = start_tenant(cfg, CpAttachment::Dedicated(addr), Instant::now(), stx, (tx, rx))
            .err()
            .expect("must fail");
        assert!(matches!(err, TenantError::ConnectFailed(..)));
    }
}
