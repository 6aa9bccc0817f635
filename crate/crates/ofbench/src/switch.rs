//! Minimal OpenFlow 1.0 switch emulator.
//!
//! Serves one control connection: answers features and echo, emits the
//! packet bytes of every `PacketOut` on its UDP data port, and wraps every
//! datagram arriving on the data port into a `PacketIn`. Port-stats
//! requests go through a deterministic service stage with a configurable
//! capacity; when requests arrive faster than the capacity, queueing delay
//! grows without bound, which reproduces how a real switch falls over
//! under high stats rates. The service model is an explicit stand-in for
//! real switch internals and is named in the stats report.

use std::io::Write;
use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::os::fd::AsRawFd;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender};
use serde::{Deserialize, Serialize};

use crate::codec::{self, OfBody, OfMessage, PortCounters, NO_BUFFER, REASON_NO_MATCH};
use crate::net::{self, MsgReader, ReadBatch};

pub const DATA_PORT_NO: u16 = 1;

#[derive(Debug, Clone)]
pub struct SwitchConfig {
    pub control_bind: SocketAddr,
    pub data_bind: SocketAddr,
    pub datapath_id: u64,
    /// Port-stats requests serviced per second.
    pub stats_capacity: u32,
    /// Stats requests queued beyond this bound are dropped.
    pub stats_queue_bound: usize,
    /// Where packet bytes of a `PacketOut` are emitted.
    pub packet_out_dest: Option<SocketAddr>,
    /// Standard delayed ACKs on the control connection (link emulation).
    pub delayed_acks: bool,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            control_bind: "127.0.0.1:0".parse().unwrap(),
            data_bind: "127.0.0.1:0".parse().unwrap(),
            datapath_id: 0x00b0_0c5e_0000_0001,
            stats_capacity: 7_500,
            stats_queue_bound: 100_000,
            packet_out_dest: None,
            delayed_acks: true,
        }
    }
}

#[derive(Debug, Default)]
pub struct SwitchCounters {
    pub stats_requests: AtomicU64,
    pub stats_replies: AtomicU64,
    pub stats_dropped: AtomicU64,
    pub packet_outs: AtomicU64,
    pub data_emitted: AtomicU64,
    pub data_emit_failures: AtomicU64,
    pub probes_received: AtomicU64,
    pub probe_bytes: AtomicU64,
    pub packet_ins_sent: AtomicU64,
    pub dropped_no_conn: AtomicU64,
    pub protocol_errors: AtomicU64,
}

/// Snapshot written to the stats file on shutdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchStatsReport {
    pub datapath_id: u64,
    pub uptime_s: f64,
    pub stats_capacity: u32,
    pub stats_service_model: String,
    pub stats_requests: u64,
    pub stats_replies: u64,
    pub stats_dropped: u64,
    /// Port-stats arrival rate over the whole uptime.
    pub stats_arrival_rate: f64,
    pub packet_outs: u64,
    pub data_emitted: u64,
    pub probes_received: u64,
    pub packet_ins_sent: u64,
    pub dropped_no_conn: u64,
    pub protocol_errors: u64,
}

struct Inner {
    cfg: SwitchConfig,
    counters: SwitchCounters,
    stop: AtomicBool,
    /// Writer channel of the current control connection.
    control_tx: Mutex<Option<Sender<Vec<u8>>>>,
    data_socket: UdpSocket,
    /// Separate emission socket, connected to the packet-out destination
    /// so batched sends need no per-datagram addressing.
    data_out: Option<UdpSocket>,
    /// Queue toward the data emitter actor.
    emit_tx: Sender<Vec<u8>>,
    started: Instant,
}

pub struct SwitchHandle {
    pub control_addr: SocketAddr,
    pub data_addr: SocketAddr,
    inner: Arc<Inner>,
    threads: Vec<JoinHandle<()>>,
}

/// Binds sockets and spawns the switch's actors: an accept loop, a data
/// port loop, and the stats service.
pub fn spawn(cfg: SwitchConfig) -> std::io::Result<SwitchHandle> {
    let listener = std::net::TcpListener::bind(cfg.control_bind)?;
    listener.set_nonblocking(true)?;
    let control_addr = listener.local_addr()?;
    let data_socket = UdpSocket::bind(cfg.data_bind)?;
    net::set_recv_buffer(data_socket.as_raw_fd(), 4 << 20);
    let data_addr = data_socket.local_addr()?;
    data_socket.set_read_timeout(Some(Duration::from_millis(100)))?;

    let data_out = match cfg.packet_out_dest {
        Some(dest) => {
            let s = UdpSocket::bind("127.0.0.1:0")?;
            s.connect(dest)?;
            Some(s)
        }
        None => None,
    };

    let (stats_tx, stats_rx) = bounded::<StatsJob>(cfg.stats_queue_bound);
    let (emit_tx, emit_rx) = crossbeam_channel::unbounded::<Vec<u8>>();
    let inner = Arc::new(Inner {
        cfg,
        counters: SwitchCounters::default(),
        stop: AtomicBool::new(false),
        control_tx: Mutex::new(None),
        data_socket,
        data_out,
        emit_tx,
        started: Instant::now(),
    });

    let mut threads = Vec::new();
    {
        let inner = inner.clone();
        threads.push(std::thread::spawn(move || accept_loop(inner, listener, stats_tx)));
    }
    {
        let inner = inner.clone();
        threads.push(std::thread::spawn(move || data_loop(inner)));
    }
    {
        let inner = inner.clone();
        threads.push(std::thread::spawn(move || stats_service_loop(inner, stats_rx)));
    }
    {
        let inner = inner.clone();
        threads.push(std::thread::spawn(move || data_emit_loop(inner, emit_rx)));
    }

    Ok(SwitchHandle { control_addr, data_addr, inner, threads })
}

impl SwitchHandle {
    pub fn counters(&self) -> &SwitchCounters {
        &self.inner.counters
    }

    pub fn report(&self) -> SwitchStatsReport {
        let c = &self.inner.counters;
        let uptime = self.inner.started.elapsed().as_secs_f64();
        SwitchStatsReport {
            datapath_id: self.inner.cfg.datapath_id,
            uptime_s: uptime,
            stats_capacity: self.inner.cfg.stats_capacity,
            stats_service_model: "deterministic-service-cost".into(),
            stats_requests: c.stats_requests.load(Ordering::Relaxed),
            stats_replies: c.stats_replies.load(Ordering::Relaxed),
            stats_dropped: c.stats_dropped.load(Ordering::Relaxed),
            stats_arrival_rate: c.stats_requests.load(Ordering::Relaxed) as f64 / uptime.max(1e-9),
            packet_outs: c.packet_outs.load(Ordering::Relaxed),
            data_emitted: c.data_emitted.load(Ordering::Relaxed),
            probes_received: c.probes_received.load(Ordering::Relaxed),
            packet_ins_sent: c.packet_ins_sent.load(Ordering::Relaxed),
            dropped_no_conn: c.dropped_no_conn.load(Ordering::Relaxed),
            protocol_errors: c.protocol_errors.load(Ordering::Relaxed),
        }
    }

    pub fn stop(self) -> SwitchStatsReport {
        let report = self.report();
        self.inner.stop.store(true, Ordering::SeqCst);
        self.inner.control_tx.lock().unwrap().take();
        for t in self.threads {
            let _ = t.join();
        }
        report
    }
}

struct StatsJob {
    xid: u32,
    port_no: u16,
}

fn stopped(inner: &Inner) -> bool {
    inner.stop.load(Ordering::Relaxed)
}

fn accept_loop(inner: Arc<Inner>, listener: std::net::TcpListener, stats_tx: Sender<StatsJob>) {
    while !stopped(&inner) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("control connection from {peer}");
                match net::accept_openflow(stream, Duration::from_secs(5)) {
                    Ok((stream, fbuf)) => {
                        // one control connection at a time; a newcomer
                        // replaces a dead predecessor
                        serve_control(&inner, stream, fbuf, &stats_tx);
                    }
                    Err(e) => log::warn!("handshake with {peer} failed: {e}"),
                }
            }
            Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

/// Reads the control connection until EOF or shutdown. Runs on the accept
/// thread: the switch serves one controller/proxy at a time.
fn serve_control(
    inner: &Arc<Inner>,
    stream: TcpStream,
    fbuf: codec::FrameBuffer,
    stats_tx: &Sender<StatsJob>,
) {
    let writer_stream = match stream.try_clone() {
        Ok(s) => s,
        Err(e) => {
            log::warn!("cannot clone control stream: {e}");
            return;
        }
    };
    let (tx, rx) = crossbeam_channel::unbounded::<Vec<u8>>();
    *inner.control_tx.lock().unwrap() = Some(tx.clone());
    let writer_inner = inner.clone();
    let writer = std::thread::spawn(move || write_loop(writer_inner, writer_stream, rx));

    stream
        .set_read_timeout(Some(Duration::from_millis(200)))
        .ok();
    let mut reader = MsgReader::new(stream, fbuf, inner.cfg.delayed_acks);

    'conn: while !stopped(inner) {
        let batch = match reader.read_batch() {
            Ok(ReadBatch::Msgs(msgs)) => msgs,
            Ok(ReadBatch::Eof) => break,
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(e) => {
                log::warn!("control read failed: {e}");
                break;
            }
        };
        for (msg, _ts) in batch {
            match msg.body {
                OfBody::FeaturesRequest => {
                    let reply = OfMessage::new(
                        msg.xid,
                        OfBody::FeaturesReply { datapath_id: inner.cfg.datapath_id },
                    );
                    if tx.send(codec::encode(&reply).unwrap()).is_err() {
                        break 'conn;
                    }
                }
                OfBody::EchoRequest(payload) => {
                    let reply = OfMessage::new(msg.xid, OfBody::EchoReply(payload));
                    if tx.send(codec::encode(&reply).unwrap()).is_err() {
                        break 'conn;
                    }
                }
                OfBody::PortStatsRequest { port_no } => {
                    inner.counters.stats_requests.fetch_add(1, Ordering::Relaxed);
                    let job = StatsJob { xid: msg.xid, port_no };
                    if stats_tx.try_send(job).is_err() {
                        inner.counters.stats_dropped.fetch_add(1, Ordering::Relaxed);
                    }
                }
                OfBody::PacketOut { packet, .. } => {
                    inner.counters.packet_outs.fetch_add(1, Ordering::Relaxed);
                    let _ = inner.emit_tx.send(packet);
                }
                OfBody::Hello => {}
                _ => {
                    inner.counters.protocol_errors.fetch_add(1, Ordering::Relaxed);
                    log::warn!("unexpected control message type {}", msg.msg_type());
                }
            }
        }
    }
    inner.control_tx.lock().unwrap().take();
    drop(tx);
    let _ = writer.join();
    log::info!("control connection closed");
}

/// Coalescing writer: drains the queue into one buffer per write so a
/// backlog becomes fewer, larger segments instead of per-message syscalls.
fn write_loop(inner: Arc<Inner>, mut stream: TcpStream, rx: Receiver<Vec<u8>>) {
    let mut buf = Vec::with_capacity(256 * 1024);
    loop {
        let first = match rx.recv_timeout(Duration::from_millis(200)) {
            Ok(b) => b,
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => {
                if stopped(&inner) {
                    return;
                }
                continue;
            }
            Err(crossbeam_channel::RecvTimeoutError::Disconnected) => return,
        };
        buf.clear();
        buf.extend_from_slice(&first);
        while buf.len() < 256 * 1024 {
            match rx.try_recv() {
                Ok(b) => buf.extend_from_slice(&b),
                Err(_) => break,
            }
        }
        if stream.write_all(&buf).is_err() {
            return;
        }
    }
}

/// Wraps every datagram arriving on the data port into a `PacketIn`.
/// Datagrams drain in batches; the per-message work is one encode plus a
/// channel send to the connection writer.
fn data_loop(inner: Arc<Inner>) {
    let mut rx = net::UdpBatchReceiver::new(64, 2048);
    while !stopped(&inner) {
        let n = match rx.recv(&inner.data_socket) {
            Ok(n) => n,
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(e) => {
                log::warn!("data port read failed: {e}");
                continue;
            }
        };
        let guard = inner.control_tx.lock().unwrap();
        for i in 0..n {
            let datagram = rx.datagram(i);
            inner.counters.probes_received.fetch_add(1, Ordering::Relaxed);
            inner
                .counters
                .probe_bytes
                .fetch_add(datagram.len() as u64, Ordering::Relaxed);
            let Some(tx) = guard.as_ref() else {
                inner.counters.dropped_no_conn.fetch_add(1, Ordering::Relaxed);
                continue;
            };
            let msg = OfMessage::new(
                0,
                OfBody::PacketIn {
                    buffer_id: NO_BUFFER,
                    total_len: datagram.len() as u16,
                    in_port: DATA_PORT_NO,
                    reason: REASON_NO_MATCH,
                    packet: datagram.to_vec(),
                },
            );
            if tx.send(codec::encode(&msg).unwrap()).is_ok() {
                inner.counters.packet_ins_sent.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

/// Drains queued packet-out bytes onto the data port in large batches;
/// one syscall covers up to 64 datagrams under load.
fn data_emit_loop(inner: Arc<Inner>, rx: Receiver<Vec<u8>>) {
    let mut frames: Vec<Vec<u8>> = Vec::with_capacity(64);
    loop {
        let first = match rx.recv_timeout(Duration::from_millis(200)) {
            Ok(f) => f,
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => {
                if stopped(&inner) {
                    return;
                }
                continue;
            }
            Err(crossbeam_channel::RecvTimeoutError::Disconnected) => return,
        };
        frames.clear();
        frames.push(first);
        while frames.len() < 64 {
            match rx.try_recv() {
                Ok(f) => frames.push(f),
                Err(_) => break,
            }
        }
        match &inner.data_out {
            Some(out) => match net::send_udp_batch(out, &frames) {
                Ok(n) => {
                    inner.counters.data_emitted.fetch_add(n as u64, Ordering::Relaxed);
                }
                Err(_) => {
                    inner
                        .counters
                        .data_emit_failures
                        .fetch_add(frames.len() as u64, Ordering::Relaxed);
                }
            },
            None => {
                inner
                    .counters
                    .data_emit_failures
                    .fetch_add(frames.len() as u64, Ordering::Relaxed);
            }
        }
    }
}

/// Deterministic single server: each request occupies the service stage
/// for `1/capacity` seconds, scheduled on absolute deadlines so sleep
/// jitter never erodes throughput. Replies keep request order.
fn stats_service_loop(inner: Arc<Inner>, rx: Receiver<StatsJob>) {
    let cost = Duration::from_secs_f64(1.0 / f64::from(inner.cfg.stats_capacity));
    let mut next_free = Instant::now();
    loop {
        let job = match rx.recv_timeout(Duration::from_millis(200)) {
            Ok(j) => j,
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => {
                if stopped(&inner) {
                    return;
                }
                next_free = Instant::now();
                continue;
            }
            Err(crossbeam_channel::RecvTimeoutError::Disconnected) => return,
        };
        let now = Instant::now();
        next_free = next_free.max(now) + cost;
        net::sleep_until(next_free);

        let c = &inner.counters;
        let counters = PortCounters {
            port_no: DATA_PORT_NO,
            rx_packets: c.probes_received.load(Ordering::Relaxed),
            tx_packets: c.data_emitted.load(Ordering::Relaxed),
            rx_bytes: c.probe_bytes.load(Ordering::Relaxed),
            tx_bytes: c.data_emitted.load(Ordering::Relaxed) * 64,
            ..Default::default()
        };
        let _ = job.port_no; // all-ports and single-port both report port 1
        let reply = OfMessage::new(job.xid, OfBody::PortStatsReply { ports: vec![counters] });
        let guard = inner.control_tx.lock().unwrap();
        if let Some(tx) = guard.as_ref() {
            if tx.send(codec::encode(&reply).unwrap()).is_ok() {
                c.stats_replies.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::FrameBuffer;
    use std::io::Read;

    fn recv_msgs(reader: &mut MsgReader, want: usize, timeout: Duration) -> Vec<OfMessage> {
        let deadline = Instant::now() + timeout;
        let mut out = Vec::new();
        while out.len() < want && Instant::now() < deadline {
            match reader.read_batch() {
                Ok(ReadBatch::Msgs(msgs)) => out.extend(msgs.into_iter().map(|(m, _)| m)),
                Ok(ReadBatch::Eof) => break,
                Err(ref e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(e) => panic!("read failed: {e}"),
            }
        }
        out
    }

    fn connect(handle: &SwitchHandle) -> MsgReader {
        let (stream, fbuf) =
            net::connect_openflow(&handle.control_addr, Duration::from_secs(2)).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_millis(100)))
            .unwrap();
        MsgReader::new(stream, fbuf, false)
    }

    fn send(reader: &MsgReader, msg: &OfMessage) {
        let bytes = codec::encode(msg).unwrap();
        let mut s = reader.stream().try_clone().unwrap();
        s.write_all(&bytes).unwrap();
    }

    #[test]
    fn features_request_gets_configured_dpid() {
        let handle = spawn(SwitchConfig { datapath_id: 0xabcd, ..Default::default() }).unwrap();
        let mut reader = connect(&handle);
        send(&reader, &OfMessage::new(5, OfBody::FeaturesRequest));
        let msgs = recv_msgs(&mut reader, 1, Duration::from_secs(2));
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].xid, 5);
        assert_eq!(msgs[0].body, OfBody::FeaturesReply { datapath_id: 0xabcd });
        handle.stop();
    }

    #[test]
    fn echo_reply_mirrors_xid_and_payload() {
        let handle = spawn(SwitchConfig::default()).unwrap();
        let mut reader = connect(&handle);
        send(&reader, &OfMessage::new(9, OfBody::EchoRequest(b"keep".to_vec())));
        let msgs = recv_msgs(&mut reader, 1, Duration::from_secs(2));
        assert_eq!(msgs[0], OfMessage::new(9, OfBody::EchoReply(b"keep".to_vec())));
        handle.stop();
    }

    #[test]
    fn packet_out_bytes_appear_on_data_port() {
        let sink = UdpSocket::bind("127.0.0.1:0").unwrap();
        sink.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        let handle = spawn(SwitchConfig {
            packet_out_dest: Some(sink.local_addr().unwrap()),
            ..Default::default()
        })
        .unwrap();
        let reader = connect(&handle);
        let packet: Vec<u8> = (0..64u8).collect();
        send(
            &reader,
            &OfMessage::new(
                1,
                OfBody::PacketOut {
                    buffer_id: NO_BUFFER,
                    in_port: codec::PORT_NONE,
                    actions: vec![codec::Action::Output { port: DATA_PORT_NO, max_len: 0 }],
                    packet: packet.clone(),
                },
            ),
        );
        let mut buf = [0u8; 1500];
        let (n, _) = sink.recv_from(&mut buf).unwrap();
        assert_eq!(&buf[..n], &packet[..]);
        handle.stop();
    }

    #[test]
    fn datagram_becomes_byte_identical_packet_in() {
        let handle = spawn(SwitchConfig::default()).unwrap();
        let mut reader = connect(&handle);
        let datagram: Vec<u8> = (0..100u8).map(|b| b.wrapping_mul(7)).collect();
        let probe = UdpSocket::bind("127.0.0.1:0").unwrap();
        probe.send_to(&datagram, handle.data_addr).unwrap();
        let msgs = recv_msgs(&mut reader, 1, Duration::from_secs(2));
        match &msgs[0].body {
            OfBody::PacketIn { packet, total_len, in_port, reason, buffer_id } => {
                assert_eq!(packet, &datagram);
                assert_eq!(*total_len as usize, datagram.len());
                assert_eq!(*in_port, DATA_PORT_NO);
                assert_eq!(*reason, REASON_NO_MATCH);
                assert_eq!(*buffer_id, NO_BUFFER);
            }
            other => panic!("expected PacketIn, got {other:?}"),
        }
        handle.stop();
    }

    #[test]
    fn datagram_without_connection_is_dropped_and_counted() {
        let handle = spawn(SwitchConfig::default()).unwrap();
        let probe = UdpSocket::bind("127.0.0.1:0").unwrap();
        probe.send_to(&[1, 2, 3], handle.data_addr).unwrap();
        let deadline = Instant::now() + Duration::from_secs(2);
        while handle.counters().dropped_no_conn.load(Ordering::Relaxed) == 0 {
            assert!(Instant::now() < deadline, "drop not counted");
            std::thread::sleep(Duration::from_millis(10));
        }
        let report = handle.stop();
        assert_eq!(report.dropped_no_conn, 1);
        assert_eq!(report.packet_ins_sent, 0);
    }

    #[test]
    fn stats_replies_preserve_request_order() {
        let handle = spawn(SwitchConfig { stats_capacity: 2_000, ..Default::default() }).unwrap();
        let mut reader = connect(&handle);
        for xid in 1..=20u32 {
            send(
                &reader,
                &OfMessage::new(xid, OfBody::PortStatsRequest { port_no: codec::PORT_NONE }),
            );
        }
        let msgs = recv_msgs(&mut reader, 20, Duration::from_secs(5));
        let xids: Vec<u32> = msgs.iter().map(|m| m.xid).collect();
        assert_eq!(xids, (1..=20).collect::<Vec<_>>());
        handle.stop();
    }

    #[test]
    fn stats_under_capacity_stay_bounded_near_service_cost() {
        // service at 1000/s, request at 200/s: sojourn must hover at the
        // 1ms service cost, far from queue growth
        let handle = spawn(SwitchConfig { stats_capacity: 1_000, ..Default::default() }).unwrap();
        let mut reader = connect(&handle);
        let mut sojourns = Vec::new();
        for xid in 1..=40u32 {
            let sent = Instant::now();
            send(
                &reader,
                &OfMessage::new(xid, OfBody::PortStatsRequest { port_no: codec::PORT_NONE }),
            );
            let msgs = recv_msgs(&mut reader, 1, Duration::from_secs(2));
            assert_eq!(msgs.len(), 1);
            sojourns.push(sent.elapsed());
            std::thread::sleep(Duration::from_millis(5));
        }
        let mean_ms = sojourns.iter().map(|d| d.as_secs_f64() * 1e3).sum::<f64>()
            / sojourns.len() as f64;
        assert!(
            (0.8..10.0).contains(&mean_ms),
            "mean sojourn {mean_ms:.3}ms not near the 1ms service cost"
        );
        handle.stop();
    }

    #[test]
    fn stats_queue_overflow_drops_and_counts() {
        let handle = spawn(SwitchConfig {
            stats_capacity: 100,
            stats_queue_bound: 10,
            ..Default::default()
        })
        .unwrap();
        let reader = connect(&handle);
        for xid in 0..200u32 {
            send(
                &reader,
                &OfMessage::new(xid, OfBody::PortStatsRequest { port_no: codec::PORT_NONE }),
            );
        }
        let deadline = Instant::now() + Duration::from_secs(3);
        while handle.counters().stats_dropped.load(Ordering::Relaxed) == 0
            && Instant::now() < deadline
        {
            std::thread::sleep(Duration::from_millis(20));
        }
        let report = handle.stop();
        assert!(report.stats_dropped > 0, "no drops recorded");
        assert_eq!(report.stats_requests, 200);
        drop(reader);
    }
}
