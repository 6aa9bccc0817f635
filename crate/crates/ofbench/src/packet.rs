//! Emulated data-plane packets.
//!
//! Probe packets are Ethernet/IPv4/UDP frames whose UDP payload starts with
//! a self-describing tag (magic, tenant id, sequence, send timestamp). The
//! tag lets the receiving side attribute and time a packet without per-flow
//! bookkeeping. Frames are carried as the payload of real UDP datagrams
//! between the benchmark and the switch emulator.
//!
//! Tenant identity scheme: tenant `t` sources packets from UDP port
//! `20000 + t` and MAC `02:00:00:00:hh:ll` (`hh:ll` = tenant id). The
//! address-translating proxy maps those physical addresses to per-tenant
//! virtual ones (`0a:...`, `10.1.x.y`).

use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

/// Identifies probe payloads among arbitrary data-plane traffic.
pub const PROBE_MAGIC: u32 = 0x5046_4228;
/// Encoded tag length: magic + tenant id + seq + send timestamp.
pub const PROBE_TAG_LEN: usize = 4 + 2 + 8 + 8;
/// Ethernet + IPv4 + UDP header bytes in the emulated frame.
pub const FRAME_HEADER_LEN: usize = 14 + 20 + 8;
/// Default probe frame size; headers plus tag fit exactly.
pub const DEFAULT_PROBE_FRAME_LEN: usize = 64;

/// First UDP source port of the per-tenant range.
pub const TENANT_UDP_PORT_BASE: u16 = 20000;
/// UDP destination port of every probe flow.
pub const PROBE_DST_PORT: u16 = 5000;

const ETHERTYPE_IPV4: u16 = 0x0800;
const IP_PROTO_UDP: u8 = 17;

/// Destination of probe flows on the physical side (the data-plane sink).
pub const SINK_MAC: MacAddr = MacAddr([0x02, 0x00, 0x00, 0x00, 0xff, 0xfe]);
pub const SINK_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 255, 254);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame too short for {0}")]
    TooShort(&'static str),
    #[error("not an IPv4/UDP frame")]
    NotUdp,
    #[error("probe magic mismatch")]
    BadMagic,
}

/// 48-bit Ethernet address, serialized in the usual colon notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl serde::Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MacAddr::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid MAC address {s:?}")))
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl MacAddr {
    pub fn parse(s: &str) -> Option<MacAddr> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for slot in &mut out {
            *slot = u8::from_str_radix(parts.next()?, 16).ok()?;
        }
        if parts.next().is_some() {
            return None;
        }
        Some(MacAddr(out))
    }
}

/// Fixed payload prefix embedded in every probe packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeTag {
    pub tenant_id: u16,
    pub seq: u64,
    /// Nanoseconds since the run epoch on the benchmark's monotonic clock.
    pub send_ts: u64,
}

impl ProbeTag {
    pub fn write(&self, out: &mut [u8]) {
        out[0..4].copy_from_slice(&PROBE_MAGIC.to_be_bytes());
        out[4..6].copy_from_slice(&self.tenant_id.to_be_bytes());
        out[6..14].copy_from_slice(&self.seq.to_be_bytes());
        out[14..22].copy_from_slice(&self.send_ts.to_be_bytes());
    }

    pub fn parse(payload: &[u8]) -> Result<ProbeTag, FrameError> {
        if payload.len() < PROBE_TAG_LEN {
            return Err(FrameError::TooShort("probe tag"));
        }
        let magic = u32::from_be_bytes(payload[0..4].try_into().unwrap());
        if magic != PROBE_MAGIC {
            return Err(FrameError::BadMagic);
        }
        Ok(ProbeTag {
            tenant_id: u16::from_be_bytes(payload[4..6].try_into().unwrap()),
            seq: u64::from_be_bytes(payload[6..14].try_into().unwrap()),
            send_ts: u64::from_be_bytes(payload[14..22].try_into().unwrap()),
        })
    }
}

/// Addresses and ports a tenant's probe flows carry.
///
/// The physical side is what the switch and the flowspace-slicing proxy
/// see; the virtual side is what the tenant's controller uses when an
/// address-translating proxy sits in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TenantIdentity {
    pub tenant_id: u16,
    pub phys_mac: MacAddr,
    pub virt_mac: MacAddr,
    pub phys_ip: Ipv4Addr,
    pub virt_ip: Ipv4Addr,
    pub udp_src_port: u16,
}

impl TenantIdentity {
    pub fn for_tenant(tenant_id: u16) -> TenantIdentity {
        let [hi, lo] = tenant_id.to_be_bytes();
        TenantIdentity {
            tenant_id,
            phys_mac: MacAddr([0x02, 0, 0, 0, hi, lo]),
            virt_mac: MacAddr([0x0a, 0, 0, 0, hi, lo]),
            phys_ip: Ipv4Addr::new(10, 0, hi, lo),
            virt_ip: Ipv4Addr::new(10, 1, hi, lo),
            udp_src_port: TENANT_UDP_PORT_BASE + tenant_id,
        }
    }

    /// Source addresses as seen on the chosen side.
    pub fn source(&self, side: AddressSide) -> (MacAddr, Ipv4Addr) {
        match side {
            AddressSide::Physical => (self.phys_mac, self.phys_ip),
            AddressSide::Virtual => (self.virt_mac, self.virt_ip),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressSide {
    Physical,
    Virtual,
}

/// Parsed view of a probe frame's headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowKey {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
}

/// Builds a probe frame of `frame_len` bytes for the given tenant side.
///
/// `frame_len` below headers-plus-tag is raised to the minimum; the tail is
/// zero padding. The IPv4 header checksum is valid; the UDP checksum is 0
/// (legal for IPv4, and keeps address rewriting a header-only operation).
pub fn build_probe_frame(
    identity: &TenantIdentity,
    side: AddressSide,
    tag: &ProbeTag,
    frame_len: usize,
) -> Vec<u8> {
    let len = frame_len.max(FRAME_HEADER_LEN + PROBE_TAG_LEN);
    let mut f = vec![0u8; len];
    let (src_mac, src_ip) = identity.source(side);

    // Ethernet
    f[0..6].copy_from_slice(&SINK_MAC.0);
    f[6..12].copy_from_slice(&src_mac.0);
    f[12..14].copy_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    // IPv4
    let ip_len = (len - 14) as u16;
    f[14] = 0x45; // version 4, ihl 5
    f[16..18].copy_from_slice(&ip_len.to_be_bytes());
    f[18..20].copy_from_slice(&(tag.seq as u16).to_be_bytes()); // identification
    f[22] = 64; // ttl
    f[23] = IP_PROTO_UDP;
    f[26..30].copy_from_slice(&src_ip.octets());
    f[30..34].copy_from_slice(&SINK_IP.octets());
    let csum = ipv4_checksum(&f[14..34]);
    f[24..26].copy_from_slice(&csum.to_be_bytes());

    // UDP, checksum 0
    let udp_len = (len - 34) as u16;
    f[34..36].copy_from_slice(&identity.udp_src_port.to_be_bytes());
    f[36..38].copy_from_slice(&PROBE_DST_PORT.to_be_bytes());
    f[38..40].copy_from_slice(&udp_len.to_be_bytes());

    tag.write(&mut f[42..]);
    f
}

/// Ones-complement sum over an IPv4 header with its checksum field zeroed
/// or excluded by the caller.
pub fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut i = 0;
    while i + 1 < header.len() {
        if i != 10 {
            // skip the checksum field itself
            sum += u32::from(u16::from_be_bytes([header[i], header[i + 1]]));
        }
        i += 2;
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Parses the Ethernet/IPv4/UDP headers of a frame.
pub fn parse_flow_key(frame: &[u8]) -> Result<FlowKey, FrameError> {
    if frame.len() < FRAME_HEADER_LEN {
        return Err(FrameError::TooShort("headers"));
    }
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    if ethertype != ETHERTYPE_IPV4 || frame[14] != 0x45 || frame[23] != IP_PROTO_UDP {
        return Err(FrameError::NotUdp);
    }
    Ok(FlowKey {
        dst_mac: MacAddr(frame[0..6].try_into().unwrap()),
        src_mac: MacAddr(frame[6..12].try_into().unwrap()),
        src_ip: Ipv4Addr::from(<[u8; 4]>::try_from(&frame[26..30]).unwrap()),
        dst_ip: Ipv4Addr::from(<[u8; 4]>::try_from(&frame[30..34]).unwrap()),
        src_port: u16::from_be_bytes([frame[34], frame[35]]),
        dst_port: u16::from_be_bytes([frame[36], frame[37]]),
    })
}

/// UDP payload of a probe frame.
pub fn udp_payload(frame: &[u8]) -> Result<&[u8], FrameError> {
    parse_flow_key(frame)?;
    Ok(&frame[FRAME_HEADER_LEN..])
}

/// Extracts the probe tag from a full frame.
pub fn parse_probe(frame: &[u8]) -> Result<ProbeTag, FrameError> {
    ProbeTag::parse(udp_payload(frame)?)
}

/// One direction of an address-translation table.
#[derive(Debug, Clone, Default)]
pub struct AddressMap {
    mac_pairs: Vec<(MacAddr, MacAddr)>,
    ip_pairs: Vec<(Ipv4Addr, Ipv4Addr)>,
}

impl AddressMap {
    /// Virtual→physical map for one tenant. [`AddressMap::inverse`] gives
    /// the physical→virtual direction.
    pub fn virt_to_phys(identity: &TenantIdentity) -> AddressMap {
        AddressMap {
            mac_pairs: vec![(identity.virt_mac, identity.phys_mac)],
            ip_pairs: vec![(identity.virt_ip, identity.phys_ip)],
        }
    }

    pub fn inverse(&self) -> AddressMap {
        AddressMap {
            mac_pairs: self.mac_pairs.iter().map(|&(a, b)| (b, a)).collect(),
            ip_pairs: self.ip_pairs.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    fn map_mac(&self, mac: MacAddr) -> Option<MacAddr> {
        self.mac_pairs.iter().find(|&&(from, _)| from == mac).map(|&(_, to)| to)
    }

    fn map_ip(&self, ip: Ipv4Addr) -> Option<Ipv4Addr> {
        self.ip_pairs.iter().find(|&&(from, _)| from == ip).map(|&(_, to)| to)
    }
}

/// Rewrites every mapped MAC/IP address in the frame headers, fixing the
/// IPv4 checksum. Returns how many address fields were rewritten.
pub fn rewrite_addresses(frame: &mut [u8], map: &AddressMap) -> Result<usize, FrameError> {
    let key = parse_flow_key(frame)?;
    let mut changed = 0;
    if let Some(mac) = map.map_mac(key.dst_mac) {
        frame[0..6].copy_from_slice(&mac.0);
        changed += 1;
    }
    if let Some(mac) = map.map_mac(key.src_mac) {
        frame[6..12].copy_from_slice(&mac.0);
        changed += 1;
    }
    let mut ip_changed = false;
    if let Some(ip) = map.map_ip(key.src_ip) {
        frame[26..30].copy_from_slice(&ip.octets());
        changed += 1;
        ip_changed = true;
    }
    if let Some(ip) = map.map_ip(key.dst_ip) {
        frame[30..34].copy_from_slice(&ip.octets());
        changed += 1;
        ip_changed = true;
    }
    if ip_changed {
        let csum = ipv4_checksum(&frame[14..34]);
        frame[24..26].copy_from_slice(&csum.to_be_bytes());
    }
    Ok(changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag() -> ProbeTag {
        ProbeTag { tenant_id: 3, seq: 12345, send_ts: 9_876_543_210 }
    }

    #[test]
    fn default_frame_is_exactly_64_bytes() {
        let id = TenantIdentity::for_tenant(3);
        let f = build_probe_frame(&id, AddressSide::Physical, &tag(), DEFAULT_PROBE_FRAME_LEN);
        assert_eq!(f.len(), 64);
        assert_eq!(FRAME_HEADER_LEN + PROBE_TAG_LEN, 64);
    }

    #[test]
    fn probe_round_trip_through_frame() {
        let id = TenantIdentity::for_tenant(3);
        let f = build_probe_frame(&id, AddressSide::Physical, &tag(), 128);
        assert_eq!(f.len(), 128);
        assert_eq!(parse_probe(&f).unwrap(), tag());
        let key = parse_flow_key(&f).unwrap();
        assert_eq!(key.src_port, TENANT_UDP_PORT_BASE + 3);
        assert_eq!(key.src_mac, MacAddr([0x02, 0, 0, 0, 0, 3]));
        assert_eq!(key.src_ip, Ipv4Addr::new(10, 0, 0, 3));
        assert_eq!(key.dst_ip, SINK_IP);
    }

    #[test]
    fn bad_magic_detected() {
        let id = TenantIdentity::for_tenant(1);
        let mut f = build_probe_frame(&id, AddressSide::Physical, &tag(), 64);
        f[42] ^= 0xff;
        assert_eq!(parse_probe(&f), Err(FrameError::BadMagic));
    }

    #[test]
    fn ip_checksum_verifies() {
        let id = TenantIdentity::for_tenant(7);
        let f = build_probe_frame(&id, AddressSide::Physical, &tag(), 64);
        // recomputing over the header including the stored checksum must
        // yield zero complement
        let mut sum: u32 = 0;
        for i in (14..34).step_by(2) {
            sum += u32::from(u16::from_be_bytes([f[i], f[i + 1]]));
        }
        while sum > 0xffff {
            sum = (sum & 0xffff) + (sum >> 16);
        }
        assert_eq!(sum, 0xffff);
    }

    #[test]
    fn rewrite_is_a_bijection() {
        let id = TenantIdentity::for_tenant(5);
        let original = build_probe_frame(&id, AddressSide::Virtual, &tag(), 64);
        let down = AddressMap::virt_to_phys(&id);

        let mut frame = original.clone();
        let changed = rewrite_addresses(&mut frame, &down).unwrap();
        assert_eq!(changed, 2); // src mac + src ip
        let key = parse_flow_key(&frame).unwrap();
        assert_eq!(key.src_mac, id.phys_mac);
        assert_eq!(key.src_ip, id.phys_ip);
        assert_ne!(frame, original);

        rewrite_addresses(&mut frame, &down.inverse()).unwrap();
        assert_eq!(frame, original);
    }

    #[test]
    fn unmapped_frame_untouched() {
        let id = TenantIdentity::for_tenant(5);
        let other = TenantIdentity::for_tenant(6);
        let mut f = build_probe_frame(&id, AddressSide::Physical, &tag(), 64);
        let before = f.clone();
        let changed = rewrite_addresses(&mut f, &AddressMap::virt_to_phys(&other)).unwrap();
        assert_eq!(changed, 0);
        assert_eq!(f, before);
    }

    #[test]
    fn mac_display_and_parse() {
        let mac = MacAddr([0x02, 0, 0, 0, 0, 0x14]);
        assert_eq!(mac.to_string(), "02:00:00:00:00:14");
        assert_eq!(MacAddr::parse("02:00:00:00:00:14"), Some(mac));
        assert_eq!(MacAddr::parse("gg:00:00:00:00:14"), None);
    }
}
