//! Flowspace-slicing proxy: transparent forwarding, one event loop.
//!
//! Every control message passes through byte-identical. Upstream
//! `PacketIn`s are demultiplexed by the UDP source port of the embedded
//! data packet against the per-tenant flowspace rules. Transaction ids
//! pass through unmodified; a fresh xid is substituted only when two
//! tenants would collide on the wire, since one of them could otherwise
//! not be demultiplexed.
//!
//! The whole proxy is one sequential loop over all connections, so its CPU
//! budget is a single core by construction.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::os::fd::AsRawFd;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use crate::codec::{
    self, FrameBuffer, HEADER_LEN, TYPE_ECHO_REPLY, TYPE_ECHO_REQUEST, TYPE_FEATURES_REPLY,
    TYPE_FEATURES_REQUEST, TYPE_HELLO, TYPE_PACKET_IN, TYPE_STATS_REPLY, TYPE_STATS_REQUEST,
};
use crate::net;
use crate::packet;

use super::{ProxyConfig, ProxyError, ProxyHandle, ProxyShared};

/// Per-iteration read cap per connection, so one busy peer cannot starve
/// the rest of the loop.
const READ_SLICE: usize = 256 * 1024;

pub fn spawn(cfg: ProxyConfig) -> Result<ProxyHandle, ProxyError> {
    let (upstream, upstream_fbuf) = net::connect_openflow(&cfg.switch_addr, Duration::from_secs(5))
        .map_err(|_| ProxyError::SwitchUnreachable(cfg.switch_addr))?;
    upstream.set_nonblocking(true)?;

    let mut listeners = Vec::new();
    let mut tenant_ports = HashMap::new();
    for entry in &cfg.slices.tenants {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        tenant_ports.insert(entry.tenant_id, listener.local_addr()?);
        listeners.push((entry.tenant_id, listener));
    }

    let shared = ProxyShared::new(cfg);
    let loop_shared = shared.clone();
    let thread = std::thread::Builder::new()
        .name("fv-loop".into())
        .spawn(move || event_loop(loop_shared, upstream, upstream_fbuf, listeners))
        .expect("spawn fv loop");

    Ok(ProxyHandle { tenant_ports, shared, threads: vec![thread] })
}

struct Conn {
    stream: TcpStream,
    fbuf: FrameBuffer,
    out: Vec<u8>,
    out_pos: usize,
    closed: bool,
}

impl Conn {
    fn new(stream: TcpStream, fbuf: FrameBuffer) -> Conn {
        Conn { stream, fbuf, out: Vec::new(), out_pos: 0, closed: false }
    }

    fn queue(&mut self, bytes: &[u8]) {
        self.out.extend_from_slice(bytes);
    }

    fn has_backlog(&self) -> bool {
        self.out_pos < self.out.len()
    }

    /// Nonblocking write of any queued bytes.
    fn flush(&mut self) {
        while self.out_pos < self.out.len() {
            match self.stream.write(&self.out[self.out_pos..]) {
                Ok(0) => {
                    self.closed = true;
                    return;
                }
                Ok(n) => self.out_pos += n,
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => break,
                Err(ref e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => {
                    self.closed = true;
                    return;
                }
            }
        }
        if self.out_pos == self.out.len() {
            self.out.clear();
            self.out_pos = 0;
        } else if self.out_pos > 1 << 20 {
            self.out.drain(..self.out_pos);
            self.out_pos = 0;
        }
    }

    /// Nonblocking read into the frame buffer. Returns false on EOF/error.
    fn fill(&mut self, chunk: &mut [u8], delayed_acks: bool) -> bool {
        let mut total = 0;
        loop {
            match self.stream.read(chunk) {
                Ok(0) => return false,
                Ok(n) => {
                    self.fbuf.extend(&chunk[..n]);
                    if delayed_acks {
                        let _ = net::set_quickack(&self.stream, false);
                    }
                    total += n;
                    if total >= READ_SLICE {
                        return true;
                    }
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => return true,
                Err(ref e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(_) => return false,
            }
        }
    }
}

fn event_loop(
    shared: Arc<ProxyShared>,
    upstream: TcpStream,
    upstream_fbuf: FrameBuffer,
    listeners: Vec<(u16, TcpListener)>,
) {
    let c = &shared.counters;
    let mut up = Conn::new(upstream, upstream_fbuf);
    let mut tenants: HashMap<u16, Conn> = HashMap::new();
    // wire xid -> (tenant, original xid) for in-flight sync requests
    let mut pending: HashMap<u32, (u16, u32)> = HashMap::new();
    let mut fresh_xid: u32 = 0xf000_0000;
    let mut chunk = vec![0u8; READ_SLICE];

    while !shared.stopped() {
        // poll: upstream, listeners, tenant connections
        let mut fds: Vec<libc::pollfd> = Vec::with_capacity(1 + listeners.len() + tenants.len());
        fds.push(pollfd(&up.stream, up.has_backlog()));
        for (_, l) in &listeners {
            fds.push(libc::pollfd { fd: l.as_raw_fd(), events: libc::POLLIN, revents: 0 });
        }
        let tenant_order: Vec<u16> = tenants.keys().copied().collect();
        for id in &tenant_order {
            let conn = &tenants[id];
            fds.push(pollfd(&conn.stream, conn.has_backlog()));
        }

        let rc = unsafe { libc::poll(fds.as_mut_ptr(), fds.len() as libc::nfds_t, 200) };
        if rc < 0 {
            let err = std::io::Error::last_os_error();
            if err.kind() == std::io::ErrorKind::Interrupted {
                continue;
            }
            log::error!("poll failed: {err}");
            break;
        }
        if rc == 0 {
            continue;
        }

        // accept new tenant connections
        for (i, (tenant_id, listener)) in listeners.iter().enumerate() {
            if fds[1 + i].revents & libc::POLLIN == 0 {
                continue;
            }
            while let Ok((stream, peer)) = listener.accept() {
                log::info!("tenant {tenant_id} connected from {peer}");
                if stream.set_nonblocking(true).is_err() || stream.set_nodelay(true).is_err() {
                    continue;
                }
                let mut conn = Conn::new(stream, FrameBuffer::new());
                conn.queue(&codec::encode(&codec::OfMessage::new(0, codec::OfBody::Hello)).unwrap());
                c.tenant_connects.fetch_add(1, Ordering::Relaxed);
                tenants.insert(*tenant_id, conn);
            }
        }

        // upstream traffic
        let up_ready = fds[0].revents & (libc::POLLIN | libc::POLLERR | libc::POLLHUP) != 0;
        if up_ready {
            if !up.fill(&mut chunk, false) {
                log::error!("switch connection lost");
                break;
            }
            route_up(&shared, &mut up, &mut tenants, &mut pending);
        }

        // tenant traffic
        let base = 1 + listeners.len();
        for (j, tenant_id) in tenant_order.iter().enumerate() {
            let revents = fds[base + j].revents;
            if revents & (libc::POLLIN | libc::POLLERR | libc::POLLHUP) == 0 {
                continue;
            }
            let Some(conn) = tenants.get_mut(tenant_id) else { continue };
            if !conn.fill(&mut chunk, shared.cfg.delayed_acks) {
                conn.closed = true;
                continue;
            }
            route_down(&shared, *tenant_id, conn, &mut up, &mut pending, &mut fresh_xid);
        }

        // flush and sweep
        up.flush();
        if up.closed {
            log::error!("switch connection write failed");
            break;
        }
        let mut gone = Vec::new();
        for (id, conn) in tenants.iter_mut() {
            conn.flush();
            if conn.closed {
                gone.push(*id);
            }
        }
        for id in gone {
            log::info!("tenant {id} disconnected");
            c.tenant_disconnects.fetch_add(1, Ordering::Relaxed);
            tenants.remove(&id);
        }
    }
}

fn pollfd(stream: &TcpStream, want_write: bool) -> libc::pollfd {
    libc::pollfd {
        fd: stream.as_raw_fd(),
        events: libc::POLLIN | if want_write { libc::POLLOUT } else { 0 },
        revents: 0,
    }
}

/// Downstream direction: tenant to switch, bytes unchanged.
fn route_down(
    shared: &ProxyShared,
    tenant_id: u16,
    conn: &mut Conn,
    up: &mut Conn,
    pending: &mut HashMap<u32, (u16, u32)>,
    fresh_xid: &mut u32,
) {
    let c = &shared.counters;
    while let Some((header, raw)) = conn.fbuf.peek_complete() {
        let len = raw.len().max(HEADER_LEN);
        match header.msg_type {
            TYPE_HELLO => {} // handshake, not forwarded
            TYPE_ECHO_REQUEST | TYPE_FEATURES_REQUEST | TYPE_STATS_REQUEST => {
                // xids pass through unless another tenant already has this
                // one in flight
                let wire_xid = if pending.contains_key(&header.xid) {
                    *fresh_xid = fresh_xid.wrapping_add(1);
                    c.xid_remaps.fetch_add(1, Ordering::Relaxed);
                    *fresh_xid
                } else {
                    header.xid
                };
                pending.insert(wire_xid, (tenant_id, header.xid));
                let start = up.out.len();
                up.queue(raw);
                if wire_xid != header.xid {
                    up.out[start + 4..start + 8].copy_from_slice(&wire_xid.to_be_bytes());
                }
                c.forwarded_down.fetch_add(1, Ordering::Relaxed);
            }
            TYPE_ECHO_REPLY => {} // reply to a keepalive we never sent
            _ => {
                up.queue(raw);
                c.forwarded_down.fetch_add(1, Ordering::Relaxed);
            }
        }
        conn.fbuf.consume(len);
    }
}

/// Upstream direction: switch to the owning tenant, bytes unchanged.
fn route_up(
    shared: &ProxyShared,
    up: &mut Conn,
    tenants: &mut HashMap<u16, Conn>,
    pending: &mut HashMap<u32, (u16, u32)>,
) {
    let c = &shared.counters;
    loop {
        let Some((header, raw)) = up.fbuf.peek_complete() else { break };
        let len = raw.len().max(HEADER_LEN);
        match header.msg_type {
            TYPE_PACKET_IN => {
                // demultiplex by flowspace: UDP source port of the packet
                let owner = raw
                    .get(HEADER_LEN + 10..)
                    .and_then(|frame| packet::parse_flow_key(frame).ok())
                    .and_then(|key| shared.cfg.slices.tenant_by_udp_port(key.src_port));
                match owner {
                    Some(tenant_id) => match tenants.get_mut(&tenant_id) {
                        Some(conn) => {
                            conn.queue(raw);
                            c.forwarded_up.fetch_add(1, Ordering::Relaxed);
                        }
                        None => {
                            c.tenant_not_connected.fetch_add(1, Ordering::Relaxed);
                        }
                    },
                    None => {
                        c.no_matching_slice.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            TYPE_ECHO_REQUEST => {
                // switch-side keepalive: answer locally
                let reply = codec::OfMessage::new(
                    header.xid,
                    codec::OfBody::EchoReply(raw[HEADER_LEN..].to_vec()),
                );
                let bytes = codec::encode(&reply).unwrap();
                up.queue(&bytes);
            }
            TYPE_ECHO_REPLY | TYPE_FEATURES_REPLY | TYPE_STATS_REPLY => {
                match pending.remove(&header.xid) {
                    Some((tenant_id, orig_xid)) => match tenants.get_mut(&tenant_id) {
                        Some(conn) => {
                            let start = conn.out.len();
                            conn.queue(raw);
                            if orig_xid != header.xid {
                                conn.out[start + 4..start + 8]
                                    .copy_from_slice(&orig_xid.to_be_bytes());
                            }
                            c.forwarded_up.fetch_add(1, Ordering::Relaxed);
                        }
                        None => {
                            c.tenant_not_connected.fetch_add(1, Ordering::Relaxed);
                        }
                    },
                    None => {
                        c.unmatched_upstream_replies.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            TYPE_HELLO => {}
            _ => {
                // chatter the proxy does not model; cannot demux, so drop
                c.unknown_frames.fetch_add(1, Ordering::Relaxed);
            }
        }
        up.fbuf.consume(len);
    }
}
