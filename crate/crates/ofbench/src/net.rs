//! Socket plumbing shared by the benchmark, switch, and proxies.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::os::fd::AsRawFd;
use std::time::{Duration, Instant};

use crate::codec::{self, Frame, FrameBuffer, OfBody, OfMessage};

/// Re-arms delayed ACKs on a control-plane receiver.
///
/// Loopback TCP acknowledges small segments almost immediately, which
/// defeats sender-side aggregation entirely; a real link does not behave
/// that way. Turning quickack off restores standard delayed-ACK behavior
/// so the no-delay comparison measures what it measures on real hardware.
/// The option is sticky only until the next state change, so receivers
/// call this after every read.
pub fn set_quickack(stream: &TcpStream, on: bool) -> io::Result<()> {
    let val: libc::c_int = i32::from(on);
    let rc = unsafe {
        libc::setsockopt(
            stream.as_raw_fd(),
            libc::IPPROTO_TCP,
            libc::TCP_QUICKACK,
            &val as *const _ as *const libc::c_void,
            std::mem::size_of::<libc::c_int>() as libc::socklen_t,
        )
    };
    if rc != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

/// Requests a larger receive buffer; silently capped by the kernel limit.
pub fn set_recv_buffer(fd: i32, bytes: usize) {
    let val: libc::c_int = bytes as libc::c_int;
    unsafe {
        libc::setsockopt(
            fd,
            libc::SOL_SOCKET,
            libc::SO_RCVBUF,
            &val as *const _ as *const libc::c_void,
            std::mem::size_of::<libc::c_int>() as libc::socklen_t,
        );
    }
}

pub fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        std::thread::sleep(deadline - now);
    }
}

/// Sends a batch of datagrams on a connected UDP socket with one
/// `sendmmsg` call. Per-datagram syscalls cannot sustain the rates this
/// tool generates. Returns how many datagrams the kernel accepted.
pub fn send_udp_batch(socket: &std::net::UdpSocket, packets: &[Vec<u8>]) -> io::Result<usize> {
    if packets.is_empty() {
        return Ok(0);
    }
    let mut iovecs: Vec<libc::iovec> = Vec::with_capacity(packets.len());
    let mut hdrs: Vec<libc::mmsghdr> = Vec::with_capacity(packets.len());
    for p in packets {
        iovecs.push(libc::iovec {
            iov_base: p.as_ptr() as *mut libc::c_void,
            iov_len: p.len(),
        });
    }
    for iov in iovecs.iter_mut() {
        let mut hdr: libc::mmsghdr = unsafe { std::mem::zeroed() };
        hdr.msg_hdr.msg_iov = iov as *mut libc::iovec;
        hdr.msg_hdr.msg_iovlen = 1;
        hdrs.push(hdr);
    }
    let mut sent = 0usize;
    while sent < hdrs.len() {
        let rc = unsafe {
            libc::sendmmsg(
                socket.as_raw_fd(),
                hdrs.as_mut_ptr().add(sent),
                (hdrs.len() - sent) as libc::c_uint,
                0,
            )
        };
        if rc < 0 {
            let err = io::Error::last_os_error();
            if err.kind() == io::ErrorKind::Interrupted {
                continue;
            }
            return Err(err);
        }
        sent += rc as usize;
    }
    Ok(sent)
}

/// Reusable `recvmmsg` state: drains up to a batch of datagrams per
/// syscall. Honors the socket's read timeout for the first datagram.
pub struct UdpBatchReceiver {
    bufs: Vec<Vec<u8>>,
    lens: Vec<usize>,
}

impl UdpBatchReceiver {
    pub fn new(batch: usize, buf_len: usize) -> UdpBatchReceiver {
        UdpBatchReceiver {
            bufs: (0..batch).map(|_| vec![0u8; buf_len]).collect(),
            lens: vec![0; batch],
        }
    }

    /// Blocks for the first datagram (honoring the socket's read timeout),
    /// then drains whatever else is already queued with one nonblocking
    /// `recvmmsg`. Returns the number received; datagrams are at
    /// [`UdpBatchReceiver::datagram`].
    pub fn recv(&mut self, socket: &std::net::UdpSocket) -> io::Result<usize> {
        match self.recv_queued(socket, 0) {
            Ok(n) if n > 0 => return Ok(n),
            Ok(_) => {}
            Err(ref e) if e.kind() == io::ErrorKind::WouldBlock => {}
            Err(e) => return Err(e),
        }
        // nothing queued: block for one (WouldBlock surfaces the timeout)
        let n = socket.recv(&mut self.bufs[0])?;
        self.lens[0] = n;
        match self.recv_queued(socket, 1) {
            Ok(m) => Ok(1 + m),
            Err(_) => Ok(1),
        }
    }

    /// Nonblocking `recvmmsg` into buffers starting at `offset`.
    fn recv_queued(&mut self, socket: &std::net::UdpSocket, offset: usize) -> io::Result<usize> {
        let slots = self.bufs.len() - offset;
        if slots == 0 {
            return Ok(0);
        }
        let mut iovecs: Vec<libc::iovec> = self.bufs[offset..]
            .iter_mut()
            .map(|b| libc::iovec {
                iov_base: b.as_mut_ptr() as *mut libc::c_void,
                iov_len: b.len(),
            })
            .collect();
        let mut hdrs: Vec<libc::mmsghdr> = Vec::with_capacity(slots);
        for iov in iovecs.iter_mut() {
            let mut hdr: libc::mmsghdr = unsafe { std::mem::zeroed() };
            hdr.msg_hdr.msg_iov = iov as *mut libc::iovec;
            hdr.msg_hdr.msg_iovlen = 1;
            hdrs.push(hdr);
        }
        let rc = unsafe {
            libc::recvmmsg(
                socket.as_raw_fd(),
                hdrs.as_mut_ptr(),
                slots as libc::c_uint,
                libc::MSG_DONTWAIT,
                std::ptr::null_mut(),
            )
        };
        if rc < 0 {
            return Err(io::Error::last_os_error());
        }
        let n = rc as usize;
        for i in 0..n {
            self.lens[offset + i] = hdrs[i].msg_len as usize;
        }
        Ok(n)
    }

    pub fn datagram(&self, i: usize) -> &[u8] {
        &self.bufs[i][..self.lens[i]]
    }
}

/// Connects with a timeout and completes the symmetric HELLO exchange:
/// send ours, wait for the peer's.
pub fn connect_openflow(
    addr: &SocketAddr,
    timeout: Duration,
) -> io::Result<(TcpStream, FrameBuffer)> {
    let stream = TcpStream::connect_timeout(addr, timeout)?;
    handshake(stream, timeout)
}

/// Server-side half of the HELLO exchange on an accepted connection.
pub fn accept_openflow(
    stream: TcpStream,
    timeout: Duration,
) -> io::Result<(TcpStream, FrameBuffer)> {
    handshake(stream, timeout)
}

fn handshake(mut stream: TcpStream, timeout: Duration) -> io::Result<(TcpStream, FrameBuffer)> {
    stream.set_nodelay(true)?;
    let hello = codec::encode(&OfMessage::new(0, OfBody::Hello)).expect("hello encodes");
    stream.write_all(&hello)?;

    stream.set_read_timeout(Some(timeout))?;
    let mut fbuf = FrameBuffer::new();
    let mut chunk = [0u8; 4096];
    let deadline = Instant::now() + timeout;
    loop {
        match fbuf.next_frame() {
            Ok(Some(Frame::Msg(msg))) if msg.body == OfBody::Hello => break,
            Ok(Some(_)) => continue, // pre-hello chatter: skip
            Ok(None) => {}
            Err(_) => continue,
        }
        if Instant::now() >= deadline {
            return Err(io::Error::new(io::ErrorKind::TimedOut, "hello timed out"));
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "peer closed before hello",
            ));
        }
        fbuf.extend(&chunk[..n]);
    }
    stream.set_read_timeout(None)?;
    Ok((stream, fbuf))
}

/// Blocking reader that frames OpenFlow messages from a TCP stream.
///
/// All messages framed out of one read share that read's timestamp: they
/// arrived in the same segment batch.
pub struct MsgReader {
    stream: TcpStream,
    fbuf: FrameBuffer,
    chunk: Vec<u8>,
    /// Re-arm delayed ACKs after every read (link ACK emulation).
    pub delayed_acks: bool,
    pub unknown_frames: u64,
    pub decode_errors: u64,
}

pub enum ReadBatch {
    Msgs(Vec<(OfMessage, Instant)>),
    Eof,
}

impl MsgReader {
    pub fn new(stream: TcpStream, fbuf: FrameBuffer, delayed_acks: bool) -> MsgReader {
        MsgReader {
            stream,
            fbuf,
            chunk: vec![0u8; 256 * 1024],
            delayed_acks,
            unknown_frames: 0,
            decode_errors: 0,
        }
    }

    /// Reads once and returns every complete message that produced.
    /// Blocks honor the stream's read timeout, surfacing `WouldBlock`.
    pub fn read_batch(&mut self) -> io::Result<ReadBatch> {
        // drain leftovers first: a previous read may have buffered more
        // than one message
        let pending = self.drain(Instant::now())?;
        if !pending.is_empty() {
            return Ok(ReadBatch::Msgs(pending));
        }
        let n = self.stream.read(&mut self.chunk)?;
        if n == 0 {
            return Ok(ReadBatch::Eof);
        }
        let recv_ts = Instant::now();
        if self.delayed_acks {
            let _ = set_quickack(&self.stream, false);
        }
        self.fbuf.extend(&self.chunk[..n]);
        Ok(ReadBatch::Msgs(self.drain(recv_ts)?))
    }

    fn drain(&mut self, recv_ts: Instant) -> io::Result<Vec<(OfMessage, Instant)>> {
        let mut out = Vec::new();
        loop {
            match self.fbuf.next_frame() {
                Ok(Some(Frame::Msg(msg))) => out.push((msg, recv_ts)),
                Ok(Some(Frame::Unknown { .. })) => self.unknown_frames += 1,
                Ok(None) => break,
                Err(_) => self.decode_errors += 1,
            }
        }
        Ok(out)
    }

    pub fn stream(&self) -> &TcpStream {
        &self.stream
    }
}

/// Binds an ephemeral listener on loopback.
pub fn loopback_listener() -> io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}

pub fn resolve(addr: &str) -> io::Result<SocketAddr> {
    addr.to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, format!("cannot resolve {addr}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_handshake_completes_both_sides() {
        let (listener, addr) = loopback_listener().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            accept_openflow(stream, Duration::from_secs(2)).unwrap()
        });
        let (client, _) = connect_openflow(&addr, Duration::from_secs(2)).unwrap();
        let (server_stream, _) = server.join().unwrap();
        assert!(client.nodelay().unwrap());
        assert!(server_stream.nodelay().unwrap());
    }

    #[test]
    fn reader_frames_across_segment_boundaries() {
        let (listener, addr) = loopback_listener().unwrap();
        let writer = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let a = codec::encode(&OfMessage::new(1, OfBody::EchoRequest(vec![1, 2, 3]))).unwrap();
            let b = codec::encode(&OfMessage::new(2, OfBody::FeaturesRequest)).unwrap();
            let mut joined = a.clone();
            joined.extend_from_slice(&b);
            // split mid-message to force reassembly
            stream.write_all(&joined[..a.len() + 3]).unwrap();
            stream.flush().unwrap();
            std::thread::sleep(Duration::from_millis(30));
            stream.write_all(&joined[a.len() + 3..]).unwrap();
        });
        let stream = TcpStream::connect(addr).unwrap();
        let mut reader = MsgReader::new(stream, FrameBuffer::new(), false);
        let mut got = Vec::new();
        while got.len() < 2 {
            match reader.read_batch().unwrap() {
                ReadBatch::Msgs(msgs) => got.extend(msgs.into_iter().map(|(m, _)| m.xid)),
                ReadBatch::Eof => break,
            }
        }
        writer.join().unwrap();
        assert_eq!(got, vec![1, 2]);
    }
}
