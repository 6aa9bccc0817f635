//! Data-plane receiver: the sink for packets the switch emits.
//!
//! One UDP socket receives every data packet (they carry their tenant in
//! the probe tag); a single reader thread parses tags and forwards the
//! completion to the owning tenant's inbox. Injection happens inside the
//! tenant actors themselves, which own one UDP socket each.

use std::collections::HashMap;
use std::net::{SocketAddr, UdpSocket};
use std::os::fd::AsRawFd;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::Sender;

use crate::net;
use crate::packet;
use crate::tenant::TenantEvent;

#[derive(Debug, Default)]
pub struct DpCounters {
    pub datagrams: AtomicU64,
    pub malformed: AtomicU64,
    pub unknown_tenant: AtomicU64,
}

pub struct DpReceiver {
    pub addr: SocketAddr,
    pub counters: Arc<DpCounters>,
    stop: Arc<AtomicBool>,
    thread: std::thread::JoinHandle<()>,
}

impl DpReceiver {
    /// Binds the sink socket and starts the reader.
    pub fn spawn(inboxes: HashMap<u16, Sender<TenantEvent>>) -> std::io::Result<DpReceiver> {
        let socket = UdpSocket::bind("127.0.0.1:0")?;
        net::set_recv_buffer(socket.as_raw_fd(), 4 << 20);
        socket.set_read_timeout(Some(Duration::from_millis(100)))?;
        let addr = socket.local_addr()?;
        let counters = Arc::new(DpCounters::default());
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let counters = counters.clone();
            let stop = stop.clone();
            std::thread::Builder::new()
                .name("dp-receiver".into())
                .spawn(move || recv_loop(socket, inboxes, counters, stop))
                .expect("spawn dp receiver")
        };
        Ok(DpReceiver { addr, counters, stop, thread })
    }

    pub fn stop(self) -> Arc<DpCounters> {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.thread.join();
        self.counters
    }
}

fn recv_loop(
    socket: UdpSocket,
    inboxes: HashMap<u16, Sender<TenantEvent>>,
    counters: Arc<DpCounters>,
    stop: Arc<AtomicBool>,
) {
    let mut rx = net::UdpBatchReceiver::new(64, 2048);
    while !stop.load(Ordering::Relaxed) {
        let n = match rx.recv(&socket) {
            Ok(n) => n,
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(_) => break,
        };
        let recv_ts = Instant::now();
        for i in 0..n {
            counters.datagrams.fetch_add(1, Ordering::Relaxed);
            match packet::parse_probe(rx.datagram(i)) {
                Ok(tag) => match inboxes.get(&tag.tenant_id) {
                    Some(tx) => {
                        let _ = tx.send(TenantEvent::DpProbe(tag, recv_ts));
                    }
                    None => {
                        counters.unknown_tenant.fetch_add(1, Ordering::Relaxed);
                    }
                },
                Err(_) => {
                    counters.malformed.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{build_probe_frame, AddressSide, ProbeTag, TenantIdentity};

    #[test]
    fn probe_routes_to_owning_tenant_inbox() {
        let (tx, rx) = crossbeam_channel::unbounded();
        let mut inboxes = HashMap::new();
        inboxes.insert(3u16, tx);
        let receiver = DpReceiver::spawn(inboxes).unwrap();

        let id = TenantIdentity::for_tenant(3);
        let tag = ProbeTag { tenant_id: 3, seq: 7, send_ts: 1234 };
        let frame = build_probe_frame(&id, AddressSide::Physical, &tag, 64);
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        sock.send_to(&frame, receiver.addr).unwrap();

        match rx.recv_timeout(Duration::from_secs(2)).unwrap() {
            TenantEvent::DpProbe(got, _) => assert_eq!(got, tag),
            other => panic!("unexpected event {other:?}"),
        }
        receiver.stop();
    }

    #[test]
    fn non_probe_datagram_counted_and_dropped() {
        let receiver = DpReceiver::spawn(HashMap::new()).unwrap();
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        sock.send_to(b"not a probe", receiver.addr).unwrap();
        let deadline = Instant::now() + Duration::from_secs(2);
        while receiver.counters.malformed.load(Ordering::Relaxed) == 0 {
            assert!(Instant::now() < deadline, "malformed datagram not counted");
            std::thread::sleep(Duration::from_millis(10));
        }
        let counters = receiver.stop();
        assert_eq!(counters.malformed.load(Ordering::Relaxed), 1);
    }
}
