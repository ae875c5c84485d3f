//! Classic pcap reading/writing and Ethernet/IPv4/TCP/UDP/ICMP header decoding.
//!
//! Record framing follows the byte order announced by the file magic; every
//! field inside the packet itself is network order (big-endian) no matter how
//! the file was written.

use std::io::{self, Read, Write};
use std::net::Ipv4Addr;

use thiserror::Error;

/// Magic for microsecond pcap written in the reader's native order.
pub const PCAP_MAGIC: u32 = 0xa1b2_c3d4;
/// The same magic as seen when the writer used the opposite byte order.
pub const PCAP_MAGIC_SWAPPED: u32 = 0xd4c3_b2a1;
pub const LINKTYPE_ETHERNET: u32 = 1;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_IPV6: u16 = 0x86dd;

pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const ETHERNET_HEADER_LEN: usize = 14;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("BadMagic: 0x{0:08x} is not a classic microsecond pcap magic")]
    BadMagic(u32),
    #[error("Truncated: input ends inside {0}")]
    Truncated(&'static str),
    #[error("UnsupportedLinkType: {0} (only Ethernet, linktype 1, is accepted)")]
    UnsupportedLinkType(u32),
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("InvalidRecord: record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

/// The 24-byte pcap global header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapFileHeader {
    /// First four bytes of the file read big-endian: `PCAP_MAGIC` or `PCAP_MAGIC_SWAPPED`.
    pub magic: u32,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub linktype: u32,
}

impl PcapFileHeader {
    /// Header as produced by [`PcapWriter`] (little-endian framing).
    pub fn ethernet(snaplen: u32) -> Self {
        Self {
            magic: PCAP_MAGIC_SWAPPED,
            version_major: 2,
            version_minor: 4,
            thiszone: 0,
            sigfigs: 0,
            snaplen,
            linktype: LINKTYPE_ETHERNET,
        }
    }

    /// True when record framing is stored in the opposite byte order.
    pub fn is_swapped(&self) -> bool {
        self.magic == PCAP_MAGIC_SWAPPED
    }
}

/// One captured frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    /// Microseconds since the Unix epoch.
    pub timestamp_us: u64,
    pub captured_len: u32,
    pub original_len: u32,
    pub payload: Vec<u8>,
}

impl PacketRecord {
    pub fn new(timestamp_us: u64, payload: Vec<u8>) -> Self {
        let len = payload.len() as u32;
        Self { timestamp_us, captured_len: len, original_len: len, payload }
    }
}

#[derive(Clone, Copy)]
enum Order {
    Big,
    Little,
}

impl Order {
    fn u16(self, b: [u8; 2]) -> u16 {
        match self {
            Order::Big => u16::from_be_bytes(b),
            Order::Little => u16::from_le_bytes(b),
        }
    }

    fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            Order::Big => u32::from_be_bytes(b),
            Order::Little => u32::from_le_bytes(b),
        }
    }
}

/// Fills `buf` completely, or reports how many bytes were available before EOF.
fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Streaming reader over a classic pcap file. Yields records in file order.
pub struct PcapReader<R> {
    reader: R,
    header: PcapFileHeader,
    order: Order,
    index: usize,
    done: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut reader: R) -> Result<Self, CaptureError> {
        let mut buf = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut reader, &mut buf)?;
        if got < 4 {
            return Err(CaptureError::Truncated("pcap global header"));
        }
        // The magic is read as stored on disk; its byte pattern decides the order.
        let order = match [buf[0], buf[1], buf[2], buf[3]] {
            [0xa1, 0xb2, 0xc3, 0xd4] => Order::Big,
            [0xd4, 0xc3, 0xb2, 0xa1] => Order::Little,
            other => return Err(CaptureError::BadMagic(u32::from_be_bytes(other))),
        };
        if got < GLOBAL_HEADER_LEN {
            return Err(CaptureError::Truncated("pcap global header"));
        }
        let raw_magic = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]);
        let header = PcapFileHeader {
            // Little-endian files (the common case on x86) carry d4 c3 b2 a1 on disk.
            magic: if raw_magic == PCAP_MAGIC { PCAP_MAGIC } else { PCAP_MAGIC_SWAPPED },
            version_major: order.u16([buf[4], buf[5]]),
            version_minor: order.u16([buf[6], buf[7]]),
            thiszone: order.u32([buf[8], buf[9], buf[10], buf[11]]) as i32,
            sigfigs: order.u32([buf[12], buf[13], buf[14], buf[15]]),
            snaplen: order.u32([buf[16], buf[17], buf[18], buf[19]]),
            linktype: order.u32([buf[20], buf[21], buf[22], buf[23]]),
        };
        if header.linktype != LINKTYPE_ETHERNET {
            return Err(CaptureError::UnsupportedLinkType(header.linktype));
        }
        Ok(Self { reader, header, order, index: 0, done: false })
    }

    pub fn header(&self) -> &PcapFileHeader {
        &self.header
    }

    fn next_record(&mut self) -> Result<Option<PacketRecord>, CaptureError> {
        let mut rec = [0u8; RECORD_HEADER_LEN];
        match read_full(&mut self.reader, &mut rec)? {
            0 => return Ok(None),
            n if n < RECORD_HEADER_LEN => return Err(CaptureError::Truncated("record header")),
            _ => {}
        }
        let o = self.order;
        let ts_sec = o.u32([rec[0], rec[1], rec[2], rec[3]]);
        let ts_usec = o.u32([rec[4], rec[5], rec[6], rec[7]]);
        let incl_len = o.u32([rec[8], rec[9], rec[10], rec[11]]);
        let orig_len = o.u32([rec[12], rec[13], rec[14], rec[15]]);
        let index = self.index;
        if incl_len > orig_len {
            return Err(CaptureError::InvalidRecord {
                index,
                reason: format!("captured length {incl_len} exceeds original length {orig_len}"),
            });
        }
        if incl_len > self.header.snaplen {
            return Err(CaptureError::InvalidRecord {
                index,
                reason: format!("captured length {incl_len} exceeds snaplen {}", self.header.snaplen),
            });
        }
        if ts_usec >= 1_000_000 {
            return Err(CaptureError::InvalidRecord {
                index,
                reason: format!("ts_usec {ts_usec} is not below one second"),
            });
        }
        let mut payload = vec![0u8; incl_len as usize];
        if read_full(&mut self.reader, &mut payload)? < payload.len() {
            return Err(CaptureError::Truncated("record payload"));
        }
        self.index += 1;
        Ok(Some(PacketRecord {
            timestamp_us: u64::from(ts_sec) * 1_000_000 + u64::from(ts_usec),
            captured_len: incl_len,
            original_len: orig_len,
            payload,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketRecord, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a whole capture into memory.
pub fn read_pcap<R: Read>(reader: R) -> Result<(PcapFileHeader, Vec<PacketRecord>), CaptureError> {
    let mut pcap = PcapReader::new(reader)?;
    let header = *pcap.header();
    let records = pcap.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((header, records))
}

pub fn read_pcap_file(path: impl AsRef<std::path::Path>) -> Result<(PcapFileHeader, Vec<PacketRecord>), CaptureError> {
    let file = std::fs::File::open(path)?;
    read_pcap(io::BufReader::new(file))
}

/// Writes classic pcap in little-endian framing (disk magic d4 c3 b2 a1).
pub struct PcapWriter<W: Write> {
    writer: W,
    snaplen: u32,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut writer: W, snaplen: u32) -> io::Result<Self> {
        let h = PcapFileHeader::ethernet(snaplen);
        writer.write_all(&PCAP_MAGIC.to_le_bytes())?;
        writer.write_all(&h.version_major.to_le_bytes())?;
        writer.write_all(&h.version_minor.to_le_bytes())?;
        writer.write_all(&h.thiszone.to_le_bytes())?;
        writer.write_all(&h.sigfigs.to_le_bytes())?;
        writer.write_all(&h.snaplen.to_le_bytes())?;
        writer.write_all(&h.linktype.to_le_bytes())?;
        Ok(Self { writer, snaplen })
    }

    pub fn write_record(&mut self, record: &PacketRecord) -> io::Result<()> {
        if record.payload.len() as u32 != record.captured_len || record.captured_len > self.snaplen {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "record captured_len disagrees with payload or snaplen",
            ));
        }
        let ts_sec = u32::try_from(record.timestamp_us / 1_000_000)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "timestamp beyond 32-bit seconds"))?;
        let ts_usec = (record.timestamp_us % 1_000_000) as u32;
        self.writer.write_all(&ts_sec.to_le_bytes())?;
        self.writer.write_all(&ts_usec.to_le_bytes())?;
        self.writer.write_all(&record.captured_len.to_le_bytes())?;
        self.writer.write_all(&record.original_len.to_le_bytes())?;
        self.writer.write_all(&record.payload)
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.writer.flush()?;
        Ok(self.writer)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IpFlags {
    pub dont_fragment: bool,
    pub more_fragments: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Header {
    pub version: u8,
    pub header_len_bytes: u8,
    pub tos: u8,
    pub total_length: u16,
    pub identification: u16,
    pub flags: IpFlags,
    /// Offset in 8-byte units.
    pub fragment_offset: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    /// Raw option bytes, `header_len_bytes - 20` long.
    pub options: Vec<u8>,
}

impl Ipv4Header {
    pub fn is_fragment(&self) -> bool {
        self.flags.more_fragments || self.fragment_offset != 0
    }

    /// Payload length implied by `total_length`, saturating at zero.
    pub fn payload_len(&self) -> usize {
        usize::from(self.total_length).saturating_sub(usize::from(self.header_len_bytes))
    }

    /// Byte range `[start, end)` this datagram covers in the reassembled payload.
    pub fn fragment_range(&self) -> (u32, u32) {
        let start = u32::from(self.fragment_offset) * 8;
        (start, start + self.payload_len() as u32)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TcpFlags {
    pub fin: bool,
    pub syn: bool,
    pub rst: bool,
    pub psh: bool,
    pub ack: bool,
    pub urg: bool,
}

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;

    pub fn from_bits(bits: u8) -> Self {
        Self {
            fin: bits & Self::FIN != 0,
            syn: bits & Self::SYN != 0,
            rst: bits & Self::RST != 0,
            psh: bits & Self::PSH != 0,
            ack: bits & Self::ACK != 0,
            urg: bits & Self::URG != 0,
        }
    }

    pub fn bits(&self) -> u8 {
        let mut b = 0;
        for (set, bit) in [
            (self.fin, Self::FIN),
            (self.syn, Self::SYN),
            (self.rst, Self::RST),
            (self.psh, Self::PSH),
            (self.ack, Self::ACK),
            (self.urg, Self::URG),
        ] {
            if set {
                b |= bit;
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack_num: u32,
    pub header_len_bytes: u8,
    pub flags: TcpFlags,
    pub window: u16,
    pub urgent_ptr: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcmpHeader {
    pub icmp_type: u8,
    pub code: u8,
}

/// Decoded link, network and transport headers of one frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedHeaders {
    pub eth_dst: [u8; 6],
    pub eth_src: [u8; 6],
    /// Ethertype after at most one stripped 802.1Q tag.
    pub ethertype: u16,
    pub vlan_id: Option<u16>,
    pub ip: Option<Ipv4Header>,
    pub tcp: Option<TcpHeader>,
    pub udp: Option<UdpHeader>,
    pub icmp: Option<IcmpHeader>,
}

impl ParsedHeaders {
    /// TCP segment data length implied by the IP total length.
    pub fn tcp_payload_len(&self) -> Option<usize> {
        let ip = self.ip.as_ref()?;
        let tcp = self.tcp.as_ref()?;
        Some(ip.payload_len().saturating_sub(usize::from(tcp.header_len_bytes)))
    }
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a captured frame. Non-IPv4 frames come back with `ip` absent.
///
/// Transport headers are decoded only for unfragmented datagrams and first
/// fragments (offset 0); later fragments carry no transport header.
pub fn parse_headers(record: &PacketRecord) -> Result<ParsedHeaders, CaptureError> {
    parse_frame(&record.payload)
}

pub fn parse_frame(frame: &[u8]) -> Result<ParsedHeaders, CaptureError> {
    if frame.len() < ETHERNET_HEADER_LEN {
        return Err(CaptureError::Truncated("Ethernet header"));
    }
    let mut eth_dst = [0u8; 6];
    let mut eth_src = [0u8; 6];
    eth_dst.copy_from_slice(&frame[0..6]);
    eth_src.copy_from_slice(&frame[6..12]);
    let mut ethertype = be16(frame, 12);
    let mut at = ETHERNET_HEADER_LEN;
    let mut vlan_id = None;
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < at + 4 {
            return Err(CaptureError::Truncated("802.1Q tag"));
        }
        vlan_id = Some(be16(frame, at) & 0x0fff);
        ethertype = be16(frame, at + 2);
        at += 4;
    }
    let mut out = ParsedHeaders { eth_dst, eth_src, ethertype, vlan_id, ip: None, tcp: None, udp: None, icmp: None };
    if ethertype != ETHERTYPE_IPV4 {
        return Ok(out);
    }

    let ip_bytes = &frame[at..];
    if ip_bytes.is_empty() {
        return Err(CaptureError::Truncated("IPv4 header"));
    }
    let version = ip_bytes[0] >> 4;
    let header_len_bytes = (ip_bytes[0] & 0x0f) * 4;
    if version != 4 {
        return Err(CaptureError::MalformedHeader(format!("IP version {version} under ethertype 0x0800")));
    }
    if header_len_bytes < 20 {
        return Err(CaptureError::MalformedHeader(format!(
            "IPv4 header length {header_len_bytes} below the 20-byte minimum"
        )));
    }
    if ip_bytes.len() < usize::from(header_len_bytes) {
        return Err(CaptureError::Truncated("IPv4 header"));
    }
    let flags_frag = be16(ip_bytes, 6);
    let ip = Ipv4Header {
        version,
        header_len_bytes,
        tos: ip_bytes[1],
        total_length: be16(ip_bytes, 2),
        identification: be16(ip_bytes, 4),
        flags: IpFlags { dont_fragment: flags_frag & 0x4000 != 0, more_fragments: flags_frag & 0x2000 != 0 },
        fragment_offset: flags_frag & 0x1fff,
        ttl: ip_bytes[8],
        protocol: ip_bytes[9],
        checksum: be16(ip_bytes, 10),
        src: Ipv4Addr::from(be32(ip_bytes, 12)),
        dst: Ipv4Addr::from(be32(ip_bytes, 16)),
        options: ip_bytes[20..usize::from(header_len_bytes)].to_vec(),
    };
    let t = &ip_bytes[usize::from(header_len_bytes)..];
    let first_fragment = ip.fragment_offset == 0;
    let protocol = ip.protocol;
    out.ip = Some(ip);
    if !first_fragment {
        return Ok(out);
    }

    match protocol {
        IPPROTO_TCP => {
            if t.len() < 20 {
                return Err(CaptureError::Truncated("TCP header"));
            }
            let off_flags = be16(t, 12);
            let header_len = ((off_flags >> 12) as u8) * 4;
            out.tcp = Some(TcpHeader {
                src_port: be16(t, 0),
                dst_port: be16(t, 2),
                seq: be32(t, 4),
                ack_num: be32(t, 8),
                header_len_bytes: header_len,
                flags: TcpFlags::from_bits((off_flags & 0x3f) as u8),
                window: be16(t, 14),
                urgent_ptr: be16(t, 18),
            });
        }
        IPPROTO_UDP => {
            if t.len() < 8 {
                return Err(CaptureError::Truncated("UDP header"));
            }
            out.udp = Some(UdpHeader { src_port: be16(t, 0), dst_port: be16(t, 2), length: be16(t, 4) });
        }
        IPPROTO_ICMP => {
            if t.len() < 2 {
                return Err(CaptureError::Truncated("ICMP header"));
            }
            out.icmp = Some(IcmpHeader { icmp_type: t[0], code: t[1] });
        }
        _ => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eth(ethertype: u16) -> Vec<u8> {
        let mut f = vec![0xaa; 6];
        f.extend_from_slice(&[0xbb; 6]);
        f.extend_from_slice(&ethertype.to_be_bytes());
        f
    }

    fn ipv4(ihl_words: u8, protocol: u8, total_len: u16, flags_frag: u16) -> Vec<u8> {
        let mut h = vec![0x40 | ihl_words, 0];
        h.extend_from_slice(&total_len.to_be_bytes());
        h.extend_from_slice(&0x1234u16.to_be_bytes());
        h.extend_from_slice(&flags_frag.to_be_bytes());
        h.extend_from_slice(&[64, protocol, 0, 0]);
        h.extend_from_slice(&[10, 0, 0, 1]);
        h.extend_from_slice(&[10, 0, 0, 2]);
        h.resize(usize::from(ihl_words) * 4, 0);
        h
    }

    fn tcp(sport: u16, dport: u16, flags: u8) -> Vec<u8> {
        let mut t = Vec::new();
        t.extend_from_slice(&sport.to_be_bytes());
        t.extend_from_slice(&dport.to_be_bytes());
        t.extend_from_slice(&1000u32.to_be_bytes());
        t.extend_from_slice(&0u32.to_be_bytes());
        t.extend_from_slice(&(0x5000u16 | u16::from(flags)).to_be_bytes());
        t.extend_from_slice(&[0xff, 0xff, 0, 0, 0, 0]);
        t
    }

    fn global_header_le(magic_on_disk: [u8; 4], linktype: u32) -> Vec<u8> {
        let mut h = magic_on_disk.to_vec();
        h.extend_from_slice(&2u16.to_le_bytes());
        h.extend_from_slice(&4u16.to_le_bytes());
        h.extend_from_slice(&[0; 8]);
        h.extend_from_slice(&65535u32.to_le_bytes());
        h.extend_from_slice(&linktype.to_le_bytes());
        h
    }

    #[test]
    fn swapped_magic_is_accepted() {
        let (h, recs) = read_pcap(&global_header_le([0xd4, 0xc3, 0xb2, 0xa1], 1)[..]).unwrap();
        assert!(h.is_swapped());
        assert_eq!(h.snaplen, 65535);
        assert!(recs.is_empty());
    }

    #[test]
    fn big_endian_framing() {
        let mut f = vec![0xa1, 0xb2, 0xc3, 0xd4, 0, 2, 0, 4];
        f.extend_from_slice(&[0; 8]);
        f.extend_from_slice(&1500u32.to_be_bytes());
        f.extend_from_slice(&1u32.to_be_bytes());
        f.extend_from_slice(&7u32.to_be_bytes());
        f.extend_from_slice(&5u32.to_be_bytes());
        f.extend_from_slice(&3u32.to_be_bytes());
        f.extend_from_slice(&3u32.to_be_bytes());
        f.extend_from_slice(&[1, 2, 3]);
        let (h, recs) = read_pcap(&f[..]).unwrap();
        assert!(!h.is_swapped());
        assert_eq!(h.snaplen, 1500);
        assert_eq!(recs[0].timestamp_us, 7_000_005);
        assert_eq!(recs[0].payload, vec![1, 2, 3]);
    }

    #[test]
    fn rejects_bad_magic_and_nanosecond_magic() {
        let mut f = global_header_le([0x4d, 0x3c, 0xb2, 0xa1], 1);
        assert!(matches!(read_pcap(&f[..]), Err(CaptureError::BadMagic(_))));
        f[..4].copy_from_slice(b"\n\r\r\n");
        assert!(matches!(read_pcap(&f[..]), Err(CaptureError::BadMagic(_))));
    }

    #[test]
    fn rejects_non_ethernet_linktype() {
        let f = global_header_le([0xd4, 0xc3, 0xb2, 0xa1], 101);
        assert!(matches!(read_pcap(&f[..]), Err(CaptureError::UnsupportedLinkType(101))));
    }

    #[test]
    fn truncated_record() {
        let mut f = global_header_le([0xd4, 0xc3, 0xb2, 0xa1], 1);
        f.extend_from_slice(&[0; 8]);
        f.extend_from_slice(&10u32.to_le_bytes());
        f.extend_from_slice(&10u32.to_le_bytes());
        f.extend_from_slice(&[0; 4]);
        assert!(matches!(read_pcap(&f[..]), Err(CaptureError::Truncated("record payload"))));
        let g = global_header_le([0xd4, 0xc3, 0xb2, 0xa1], 1);
        assert!(matches!(read_pcap(&g[..10]), Err(CaptureError::Truncated(_))));
        let mut h = g.clone();
        h.extend_from_slice(&[0; 5]);
        assert!(matches!(read_pcap(&h[..]), Err(CaptureError::Truncated("record header"))));
    }

    #[test]
    fn syn_packet_decodes() {
        let mut frame = eth(ETHERTYPE_IPV4);
        frame.extend(ipv4(5, IPPROTO_TCP, 40, 0x4000));
        frame.extend(tcp(40000, 80, TcpFlags::SYN));
        assert_eq!(frame.len(), 54);
        let h = parse_frame(&frame).unwrap();
        let ip = h.ip.as_ref().unwrap();
        assert!(ip.flags.dont_fragment && !ip.flags.more_fragments);
        assert_eq!(ip.src, Ipv4Addr::new(10, 0, 0, 1));
        let t = h.tcp.as_ref().unwrap();
        assert!(t.flags.syn && !t.flags.ack);
        assert_eq!((t.src_port, t.dst_port), (40000, 80));
        assert!(h.udp.is_none() && h.icmp.is_none());
    }

    #[test]
    fn arp_has_no_ip() {
        let mut frame = eth(ETHERTYPE_ARP);
        frame.extend_from_slice(&[0; 28]);
        let h = parse_frame(&frame).unwrap();
        assert!(h.ip.is_none());
    }

    #[test]
    fn ipv6_has_no_ip() {
        let mut frame = eth(ETHERTYPE_IPV6);
        frame.extend_from_slice(&[0x60; 40]);
        assert!(parse_frame(&frame).unwrap().ip.is_none());
    }

    #[test]
    fn short_ihl_is_malformed() {
        let mut frame = eth(ETHERTYPE_IPV4);
        let mut ip = ipv4(5, IPPROTO_UDP, 28, 0);
        ip[0] = 0x44;
        frame.extend(ip);
        frame.extend_from_slice(&[0; 8]);
        assert!(matches!(parse_frame(&frame), Err(CaptureError::MalformedHeader(_))));
    }

    #[test]
    fn wrong_ip_version_is_malformed() {
        let mut frame = eth(ETHERTYPE_IPV4);
        let mut ip = ipv4(5, IPPROTO_UDP, 28, 0);
        ip[0] = 0x65;
        frame.extend(ip);
        assert!(matches!(parse_frame(&frame), Err(CaptureError::MalformedHeader(_))));
    }

    #[test]
    fn options_are_kept_raw() {
        let mut frame = eth(ETHERTYPE_IPV4);
        let mut ip = ipv4(7, IPPROTO_ICMP, 36, 0);
        ip[20..28].copy_from_slice(&[68, 8, 5, 0, 1, 2, 3, 4]);
        frame.extend(ip);
        frame.extend_from_slice(&[8, 0, 0, 0, 0, 0, 0, 0]);
        let h = parse_frame(&frame).unwrap();
        assert_eq!(h.ip.as_ref().unwrap().options, vec![68, 8, 5, 0, 1, 2, 3, 4]);
        assert_eq!(h.icmp.as_ref().unwrap().icmp_type, 8);
    }

    #[test]
    fn vlan_tag_is_skipped() {
        let mut frame = eth(ETHERTYPE_VLAN);
        frame.extend_from_slice(&[0x00, 0x2a, 0x08, 0x00]);
        frame.extend(ipv4(5, IPPROTO_UDP, 28, 0));
        frame.extend_from_slice(&[0, 53, 0, 53, 0, 8, 0, 0]);
        let h = parse_frame(&frame).unwrap();
        assert_eq!(h.vlan_id, Some(42));
        assert_eq!(h.udp.as_ref().unwrap().dst_port, 53);
    }

    #[test]
    fn truncated_transport() {
        let mut frame = eth(ETHERTYPE_IPV4);
        frame.extend(ipv4(5, IPPROTO_TCP, 40, 0));
        frame.extend_from_slice(&[0; 10]);
        assert!(matches!(parse_frame(&frame), Err(CaptureError::Truncated("TCP header"))));
    }

    #[test]
    fn later_fragment_has_no_transport() {
        let mut frame = eth(ETHERTYPE_IPV4);
        frame.extend(ipv4(5, IPPROTO_UDP, 36, 0x2001));
        frame.extend_from_slice(&[0xee; 16]);
        let h = parse_frame(&frame).unwrap();
        let ip = h.ip.as_ref().unwrap();
        assert!(ip.flags.more_fragments);
        assert_eq!(ip.fragment_offset, 1);
        assert_eq!(ip.fragment_range(), (8, 24));
        assert!(h.udp.is_none());
    }

    #[test]
    fn tcp_flag_bits_round_trip() {
        for bits in 0u8..64 {
            assert_eq!(TcpFlags::from_bits(bits).bits(), bits);
        }
    }

    #[test]
    fn writer_output_reads_back() {
        let recs = vec![
            PacketRecord::new(1_600_000_000_000_001, vec![1; 60]),
            PacketRecord::new(1_600_000_001_999_999, vec![2; 14]),
        ];
        let mut w = PcapWriter::new(Vec::new(), 65535).unwrap();
        for r in &recs {
            w.write_record(r).unwrap();
        }
        let bytes = w.into_inner().unwrap();
        assert_eq!(&bytes[..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        let (_, back) = read_pcap(&bytes[..]).unwrap();
        assert_eq!(back, recs);
    }
}
