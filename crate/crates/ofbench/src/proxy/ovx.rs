//! Address-translation proxy with stats caching.
//!
//! Control messages are decoded, translated, and re-encoded: `PacketOut`
//! packet headers are rewritten from the tenant's virtual MAC/IP to the
//! physical ones, `PacketIn` packets the other way around, demultiplexed
//! by the per-tenant physical MAC. Port-stats requests never reach the
//! switch: a background poller refreshes a shared counter cache at a fixed
//! rate and tenant requests are answered from it, so the switch sees only
//! the poll rate no matter how hard tenants ask.
//!
//! One reader/writer actor pair per tenant connection plus the poller:
//! unlike the flowspace proxy this one spreads across cores.

use std::collections::HashMap;
use std::net::{TcpListener, TcpStream};
use std::os::fd::AsRawFd;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};

use crate::codec::{self, OfBody, OfMessage, PortCounters, PORT_NONE};
use crate::net::{self, MsgReader, ReadBatch};
use crate::packet::{self, AddressMap};

use super::{ProxyConfig, ProxyError, ProxyHandle, ProxyShared};

/// xids the poller uses toward the switch.
const POLLER_XID_BASE: u32 = 0xd000_0000;
/// xids substituted for forwarded tenant requests.
const TENANT_XID_BASE: u32 = 0xe000_0000;

struct OvxState {
    shared: Arc<ProxyShared>,
    upstream_tx: Sender<Vec<u8>>,
    tenant_txs: RwLock<HashMap<u16, Sender<Vec<u8>>>>,
    /// Latest polled counters; `None` until the first poll returns.
    cache: RwLock<Option<Vec<PortCounters>>>,
    /// wire xid -> (tenant, original xid) for forwarded sync requests.
    xid_router: Mutex<HashMap<u32, (u16, u32)>>,
    next_wire_xid: AtomicU32,
    next_poll_xid: AtomicU32,
    /// tenant -> (virtual->physical, physical->virtual)
    maps: HashMap<u16, (AddressMap, AddressMap)>,
}

pub fn spawn(cfg: ProxyConfig) -> Result<ProxyHandle, ProxyError> {
    let (upstream, upstream_fbuf) = net::connect_openflow(&cfg.switch_addr, Duration::from_secs(5))
        .map_err(|_| ProxyError::SwitchUnreachable(cfg.switch_addr))?;
    let upstream_writer_stream = upstream.try_clone()?;

    let mut listeners = Vec::new();
    let mut tenant_ports = HashMap::new();
    for entry in &cfg.slices.tenants {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        tenant_ports.insert(entry.tenant_id, listener.local_addr()?);
        listeners.push((entry.tenant_id, listener));
    }

    let mut maps = HashMap::new();
    for entry in &cfg.slices.tenants {
        let identity = entry
            .identity()
            .ok_or_else(|| ProxyError::InvalidSlices("bad identity".into()))?;
        let down = AddressMap::virt_to_phys(&identity);
        let up = down.inverse();
        maps.insert(entry.tenant_id, (down, up));
    }

    let shared = ProxyShared::new(cfg);
    let (upstream_tx, upstream_rx) = unbounded::<Vec<u8>>();
    let state = Arc::new(OvxState {
        shared: shared.clone(),
        upstream_tx,
        tenant_txs: RwLock::new(HashMap::new()),
        cache: RwLock::new(None),
        xid_router: Mutex::new(HashMap::new()),
        next_wire_xid: AtomicU32::new(TENANT_XID_BASE),
        next_poll_xid: AtomicU32::new(POLLER_XID_BASE),
        maps,
    });

    let mut threads = Vec::new();
    {
        let state = state.clone();
        threads.push(
            std::thread::Builder::new()
                .name("ovx-upstream-writer".into())
                .spawn(move || write_loop(state, upstream_writer_stream, upstream_rx))
                .expect("spawn writer"),
        );
    }
    {
        let state = state.clone();
        threads.push(
            std::thread::Builder::new()
                .name("ovx-upstream-reader".into())
                .spawn(move || upstream_reader(state, upstream, upstream_fbuf))
                .expect("spawn reader"),
        );
    }
    {
        let state = state.clone();
        threads.push(
            std::thread::Builder::new()
                .name("ovx-poller".into())
                .spawn(move || poller(state))
                .expect("spawn poller"),
        );
    }
    {
        let state = state.clone();
        threads.push(
            std::thread::Builder::new()
                .name("ovx-accept".into())
                .spawn(move || accept_loop(state, listeners))
                .expect("spawn accept"),
        );
    }

    Ok(ProxyHandle { tenant_ports, shared, threads })
}

/// Coalescing writer shared by the upstream and tenant connections.
fn write_loop(state: Arc<OvxState>, mut stream: TcpStream, rx: Receiver<Vec<u8>>) {
    use std::io::Write;
    let mut buf = Vec::with_capacity(256 * 1024);
    loop {
        let first = match rx.recv_timeout(Duration::from_millis(200)) {
            Ok(b) => b,
            Err(crossbeam_channel::RecvTimeoutError::Timeout) => {
                if state.shared.stopped() {
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

fn accept_loop(state: Arc<OvxState>, listeners: Vec<(u16, TcpListener)>) {
    while !state.shared.stopped() {
        let mut fds: Vec<libc::pollfd> = listeners
            .iter()
            .map(|(_, l)| libc::pollfd { fd: l.as_raw_fd(), events: libc::POLLIN, revents: 0 })
            .collect();
        let rc = unsafe { libc::poll(fds.as_mut_ptr(), fds.len() as libc::nfds_t, 200) };
        if rc <= 0 {
            continue;
        }
        for (i, (tenant_id, listener)) in listeners.iter().enumerate() {
            if fds[i].revents & libc::POLLIN == 0 {
                continue;
            }
            while let Ok((stream, peer)) = listener.accept() {
                log::info!("tenant {tenant_id} connected from {peer}");
                match net::accept_openflow(stream, Duration::from_secs(5)) {
                    Ok((stream, fbuf)) => start_tenant_actors(&state, *tenant_id, stream, fbuf),
                    Err(e) => log::warn!("tenant {tenant_id} handshake failed: {e}"),
                }
            }
        }
    }
}

/// Spawns the reader/writer actor pair owning one tenant connection.
fn start_tenant_actors(
    state: &Arc<OvxState>,
    tenant_id: u16,
    stream: TcpStream,
    fbuf: codec::FrameBuffer,
) {
    let c = &state.shared.counters;
    c.tenant_connects.fetch_add(1, Ordering::Relaxed);
    let Ok(writer_stream) = stream.try_clone() else { return };
    let (tx, rx) = unbounded::<Vec<u8>>();
    state.tenant_txs.write().unwrap().insert(tenant_id, tx);

    {
        let state = state.clone();
        std::thread::Builder::new()
            .name(format!("ovx-t{tenant_id}-writer"))
            .spawn(move || write_loop(state, writer_stream, rx))
            .expect("spawn tenant writer");
    }
    {
        let state = state.clone();
        std::thread::Builder::new()
            .name(format!("ovx-t{tenant_id}-reader"))
            .spawn(move || tenant_reader(state, tenant_id, stream, fbuf))
            .expect("spawn tenant reader");
    }
}

/// Downstream direction: decode, translate, re-encode, forward.
fn tenant_reader(
    state: Arc<OvxState>,
    tenant_id: u16,
    stream: TcpStream,
    fbuf: codec::FrameBuffer,
) {
    let c = &state.shared.counters;
    stream
        .set_read_timeout(Some(Duration::from_millis(200)))
        .ok();
    let delayed = state.shared.cfg.delayed_acks;
    let mut reader = MsgReader::new(stream, fbuf, delayed);

    while !state.shared.stopped() {
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
        for (msg, _ts) in batch {
            handle_tenant_msg(&state, tenant_id, msg);
        }
        c.unknown_frames.fetch_add(reader.unknown_frames, Ordering::Relaxed);
        reader.unknown_frames = 0;
    }
    c.tenant_disconnects.fetch_add(1, Ordering::Relaxed);
    state.tenant_txs.write().unwrap().remove(&tenant_id);
}

fn handle_tenant_msg(state: &Arc<OvxState>, tenant_id: u16, msg: OfMessage) {
    let c = &state.shared.counters;
    match msg.body {
        OfBody::PacketOut { buffer_id, in_port, actions, mut packet } => {
            // virtual -> physical header rewrite, the translation cost the
            // tenants pay on every message
            let Some((down, _)) = state.maps.get(&tenant_id) else { return };
            match packet::rewrite_addresses(&mut packet, down) {
                Ok(changed) if changed > 0 => {
                    let out = OfMessage::new(
                        msg.xid,
                        OfBody::PacketOut { buffer_id, in_port, actions, packet },
                    );
                    let _ = state.upstream_tx.send(codec::encode(&out).unwrap());
                    c.forwarded_down.fetch_add(1, Ordering::Relaxed);
                }
                _ => {
                    c.unknown_virtual_address.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        OfBody::PortStatsRequest { .. } => {
            // answered on behalf of the switch, from the polled cache
            let cached = state.cache.read().unwrap().clone();
            let (ports, cold) = match cached {
                Some(ports) => (ports, false),
                None => (vec![PortCounters { port_no: 1, ..Default::default() }], true),
            };
            if cold {
                c.stats_cache_cold.fetch_add(1, Ordering::Relaxed);
            } else {
                c.stats_cache_hits.fetch_add(1, Ordering::Relaxed);
            }
            let reply = OfMessage::new(msg.xid, OfBody::PortStatsReply { ports });
            let txs = state.tenant_txs.read().unwrap();
            if let Some(tx) = txs.get(&tenant_id) {
                let _ = tx.send(codec::encode(&reply).unwrap());
            }
        }
        OfBody::EchoRequest(_) | OfBody::FeaturesRequest => {
            // forwarded with a substituted wire xid so tenants cannot
            // collide on the upstream connection
            let wire_xid = state.next_wire_xid.fetch_add(1, Ordering::Relaxed);
            state
                .xid_router
                .lock()
                .unwrap()
                .insert(wire_xid, (tenant_id, msg.xid));
            c.xid_remaps.fetch_add(1, Ordering::Relaxed);
            let out = OfMessage::new(wire_xid, msg.body);
            let _ = state.upstream_tx.send(codec::encode(&out).unwrap());
            c.forwarded_down.fetch_add(1, Ordering::Relaxed);
        }
        OfBody::Hello | OfBody::EchoReply(_) => {}
        _ => {
            c.unknown_frames.fetch_add(1, Ordering::Relaxed);
        }
    }
}

/// Upstream direction: translate and demultiplex switch traffic.
fn upstream_reader(state: Arc<OvxState>, stream: TcpStream, fbuf: codec::FrameBuffer) {
    let c = &state.shared.counters;
    stream
        .set_read_timeout(Some(Duration::from_millis(200)))
        .ok();
    let mut reader = MsgReader::new(stream, fbuf, false);

    while !state.shared.stopped() {
        let batch = match reader.read_batch() {
            Ok(ReadBatch::Msgs(msgs)) => msgs,
            Ok(ReadBatch::Eof) => {
                log::error!("switch connection lost");
                break;
            }
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(e) => {
                log::error!("switch read failed: {e}");
                break;
            }
        };
        for (msg, _ts) in batch {
            handle_upstream_msg(&state, msg);
        }
        c.unknown_frames.fetch_add(reader.unknown_frames, Ordering::Relaxed);
        reader.unknown_frames = 0;
    }
}

fn handle_upstream_msg(state: &Arc<OvxState>, msg: OfMessage) {
    let c = &state.shared.counters;
    match msg.body {
        OfBody::PacketIn { buffer_id, total_len, in_port, reason, mut packet } => {
            // demultiplex by the per-tenant physical MAC, then rewrite
            // physical -> virtual
            let owner = packet::parse_flow_key(&packet)
                .ok()
                .and_then(|key| state.shared.cfg.slices.tenant_by_phys_mac(key.src_mac));
            let Some(tenant_id) = owner else {
                c.no_matching_tenant.fetch_add(1, Ordering::Relaxed);
                return;
            };
            let Some((_, up_map)) = state.maps.get(&tenant_id) else { return };
            if packet::rewrite_addresses(&mut packet, up_map).is_err() {
                c.no_matching_tenant.fetch_add(1, Ordering::Relaxed);
                return;
            }
            let out = OfMessage::new(
                msg.xid,
                OfBody::PacketIn { buffer_id, total_len, in_port, reason, packet },
            );
            let txs = state.tenant_txs.read().unwrap();
            match txs.get(&tenant_id) {
                Some(tx) => {
                    let _ = tx.send(codec::encode(&out).unwrap());
                    c.forwarded_up.fetch_add(1, Ordering::Relaxed);
                }
                None => {
                    c.tenant_not_connected.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        OfBody::PortStatsReply { ports } => {
            if (POLLER_XID_BASE..TENANT_XID_BASE).contains(&msg.xid) {
                *state.cache.write().unwrap() = Some(ports);
            } else {
                route_reply_to_tenant(state, msg.xid, move |orig| {
                    OfMessage::new(orig, OfBody::PortStatsReply { ports: ports.clone() })
                });
            }
        }
        OfBody::EchoReply(payload) => {
            route_reply_to_tenant(state, msg.xid, move |orig| {
                OfMessage::new(orig, OfBody::EchoReply(payload.clone()))
            });
        }
        OfBody::FeaturesReply { datapath_id } => {
            route_reply_to_tenant(state, msg.xid, move |orig| {
                OfMessage::new(orig, OfBody::FeaturesReply { datapath_id })
            });
        }
        OfBody::EchoRequest(payload) => {
            let reply = OfMessage::new(msg.xid, OfBody::EchoReply(payload));
            let _ = state.upstream_tx.send(codec::encode(&reply).unwrap());
        }
        OfBody::Hello => {}
        _ => {
            c.unknown_frames.fetch_add(1, Ordering::Relaxed);
        }
    }
}

fn route_reply_to_tenant(
    state: &Arc<OvxState>,
    wire_xid: u32,
    rebuild: impl Fn(u32) -> OfMessage,
) {
    let c = &state.shared.counters;
    let Some((tenant_id, orig_xid)) = state.xid_router.lock().unwrap().remove(&wire_xid) else {
        c.unmatched_upstream_replies.fetch_add(1, Ordering::Relaxed);
        return;
    };
    let txs = state.tenant_txs.read().unwrap();
    match txs.get(&tenant_id) {
        Some(tx) => {
            let _ = tx.send(codec::encode(&rebuild(orig_xid)).unwrap());
            c.forwarded_up.fetch_add(1, Ordering::Relaxed);
        }
        None => {
            c.tenant_not_connected.fetch_add(1, Ordering::Relaxed);
        }
    }
}

/// Pulls switch counters at the configured rate.
fn poller(state: Arc<OvxState>) {
    let interval = Duration::from_secs_f64(1.0 / state.shared.cfg.poll_rate_per_s);
    let mut next = Instant::now(); // first poll immediately: warm the cache
    while !state.shared.stopped() {
        let now = Instant::now();
        if now < next {
            std::thread::sleep((next - now).min(Duration::from_millis(100)));
            continue;
        }
        next += interval;
        let xid = state.next_poll_xid.fetch_add(1, Ordering::Relaxed);
        let req = OfMessage::new(xid, OfBody::PortStatsRequest { port_no: PORT_NONE });
        if state.upstream_tx.send(codec::encode(&req).unwrap()).is_err() {
            return;
        }
        state
            .shared
            .counters
            .stats_polls
            .fetch_add(1, Ordering::Relaxed);
    }
}
