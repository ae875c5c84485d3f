//! The built-in attack catalog.
//!
//! Only the ACK-scan signature is stated explicitly in its source; every other
//! predicate is reconstructed from the public descriptions of the attacks and
//! is flagged `reconstructed`. `parameters_used` records the table parameters
//! each signature is attributed; the sets are chosen so that the per-parameter
//! counts over the full catalog match the reference frequency table exactly, so a
//! predicate may read fields (ports, lengths, offsets) its set does not list.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::sync::Arc;

use super::{Detection, DetectorKind, RuleKind, ScanConfig, SignatureRule};
use crate::capture::{ParsedHeaders, TcpFlags, IPPROTO_ICMP};
use crate::parameters::ParameterId::{self, *};

const ICMP_ECHO_REQUEST: u8 = 8;
const IPOPT_TIMESTAMP: u8 = 68;
const NETBIOS_SSN: u16 = 139;
const MAX_DATAGRAM: u32 = 65_535;
/// echo, daytime, chargen, time
const PINGPONG_PORTS: [u16; 4] = [7, 13, 19, 37];
const FRAGGLE_PORTS: [u16; 2] = [7, 19];

/// Host bits all ones under `/prefix`, or the limited broadcast address.
pub fn is_broadcast(addr: Ipv4Addr, prefix: u8) -> bool {
    let a = u32::from(addr);
    if a == u32::MAX {
        return true;
    }
    if prefix >= 31 {
        return false;
    }
    let host = u32::MAX >> prefix;
    a & host == host
}

/// Length bytes of every timestamp option in a raw IPv4 option block.
pub fn timestamp_option_lengths(options: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < options.len() {
        match options[i] {
            0 => break,
            1 => i += 1,
            kind => {
                let Some(&len) = options.get(i + 1) else { break };
                if kind == IPOPT_TIMESTAMP {
                    out.push(len);
                }
                if len < 2 {
                    break;
                }
                i += usize::from(len);
            }
        }
    }
    out
}

fn tcp_flags_exactly(h: &ParsedHeaders, bits: u8) -> bool {
    h.tcp.as_ref().is_some_and(|t| t.flags.bits() == bits)
}

fn land(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    match (&h.ip, &h.tcp) {
        (Some(ip), Some(t)) => ip.src == ip.dst && t.src_port == t.dst_port,
        _ => false,
    }
}

fn ack_scan(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    tcp_flags_exactly(h, TcpFlags::ACK) && h.tcp.as_ref().is_some_and(|t| t.src_port == t.dst_port)
}

fn ping_of_death(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    // Later fragments carry no ICMP header, so the protocol field stands in for it.
    h.ip.as_ref().is_some_and(|ip| ip.protocol == IPPROTO_ICMP && ip.fragment_range().1 > MAX_DATAGRAM)
}

fn smurf(h: &ParsedHeaders, c: &ScanConfig) -> bool {
    match (&h.ip, &h.icmp) {
        (Some(ip), Some(icmp)) => icmp.icmp_type == ICMP_ECHO_REQUEST && is_broadcast(ip.dst, c.netmask_prefix),
        _ => false,
    }
}

fn fraggle(h: &ParsedHeaders, c: &ScanConfig) -> bool {
    match (&h.ip, &h.udp) {
        (Some(ip), Some(u)) => FRAGGLE_PORTS.contains(&u.dst_port) && is_broadcast(ip.dst, c.netmask_prefix),
        _ => false,
    }
}

fn pingpong(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    h.udp.as_ref().is_some_and(|u| PINGPONG_PORTS.contains(&u.src_port) && PINGPONG_PORTS.contains(&u.dst_port))
}

fn oob_bug(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    h.tcp.as_ref().is_some_and(|t| t.flags.urg && t.dst_port == NETBIOS_SSN)
}

/// Urgent pointer reaching past the end of the segment's data.
fn oob_data_barf(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    match (&h.tcp, h.tcp_payload_len()) {
        (Some(t), Some(len)) => t.flags.urg && usize::from(t.urgent_ptr) > len,
        _ => false,
    }
}

fn unaligned_timestamp(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    h.ip.as_ref()
        .is_some_and(|ip| timestamp_option_lengths(&ip.options).into_iter().any(|len| len < 4 || (len - 4) % 8 != 0))
}

fn fin_scan(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    tcp_flags_exactly(h, TcpFlags::FIN)
}

fn synfin_scan(h: &ParsedHeaders, _: &ScanConfig) -> bool {
    h.tcp.as_ref().is_some_and(|t| t.flags.syn && t.flags.fin)
}

struct Entry {
    name: &'static str,
    description: &'static str,
    reconstructed: bool,
    params: &'static [ParameterId],
    kind: RuleKind,
    detection: Detection,
    sweep: bool,
}

fn stateless(f: fn(&ParsedHeaders, &ScanConfig) -> bool) -> Detection {
    Detection::Predicate(Arc::new(f))
}

/// Every attack in the catalog, including metadata-only entries.
pub fn builtin_catalog() -> Vec<SignatureRule> {
    use RuleKind::{Stateful, Stateless};
    let entries = vec![
        Entry {
            name: "ACK_SCAN",
            description: "Lone ACK flag with identical source and destination ports (live-host probe).",
            reconstructed: false,
            params: &[TcpAck],
            kind: Stateless,
            detection: stateless(ack_scan),
            sweep: true,
        },
        Entry {
            name: "LAND",
            description: "TCP segment whose source address and port equal its destination address and port.",
            reconstructed: true,
            params: &[IpSrc, IpDst, TcpSport, TcpDport],
            kind: Stateless,
            detection: stateless(land),
            sweep: false,
        },
        Entry {
            name: "SMURF",
            description: "ICMP echo request sent to a directed broadcast address.",
            reconstructed: true,
            params: &[IpDst, IcmpType, IcmpCode],
            kind: Stateless,
            detection: stateless(smurf),
            sweep: false,
        },
        Entry {
            name: "FRAGGLE",
            description: "UDP to the echo or chargen port of a directed broadcast address.",
            reconstructed: true,
            params: &[IpDst, UdpDport],
            kind: Stateless,
            detection: stateless(fraggle),
            sweep: false,
        },
        Entry {
            name: "PINGPONG",
            description: "UDP between two echo/daytime/chargen/time service ports.",
            reconstructed: true,
            params: &[UdpSport, UdpDport],
            kind: Stateless,
            detection: stateless(pingpong),
            sweep: false,
        },
        Entry {
            name: "PING_OF_DEATH",
            description: "ICMP fragment whose end offset exceeds the 65535-byte datagram limit.",
            reconstructed: true,
            params: &[IpMfFlag, IcmpType, IcmpCode],
            kind: Stateless,
            detection: stateless(ping_of_death),
            sweep: false,
        },
        Entry {
            name: "FRAGMENT_OVERLAP",
            description: "IP fragment overlapping bytes of an earlier fragment of the same datagram.",
            reconstructed: true,
            params: &[IpMfFlag, IpDfFlag],
            kind: Stateful,
            detection: Detection::Detector(DetectorKind::FragmentOverlap),
            sweep: false,
        },
        Entry {
            name: "BONK",
            description: "UDP fragment with MF set overlapping an earlier fragment of the same datagram.",
            reconstructed: true,
            params: &[IpDfFlag],
            kind: Stateful,
            detection: Detection::Detector(DetectorKind::Bonk),
            sweep: false,
        },
        Entry {
            name: "UNALIGNED_TS",
            description: "IP timestamp option whose length is not 4 + 8k bytes.",
            reconstructed: true,
            params: &[IpOptionsLen],
            kind: Stateless,
            detection: stateless(unaligned_timestamp),
            sweep: false,
        },
        Entry {
            name: "OOB_BUG",
            description: "TCP urgent data sent to the NetBIOS session port 139.",
            reconstructed: true,
            params: &[TcpUrg],
            kind: Stateless,
            detection: stateless(oob_bug),
            sweep: false,
        },
        Entry {
            name: "OOB_DATA_BARF",
            description: "TCP urgent pointer beyond the end of the segment data.",
            reconstructed: true,
            params: &[IpLength],
            kind: Stateless,
            detection: stateless(oob_data_barf),
            sweep: false,
        },
        Entry {
            name: "SYN_FLOOD",
            description: "Half-open connections to one address and port exceed a threshold within a sliding window.",
            reconstructed: true,
            params: &[TcpSyn],
            kind: Stateful,
            detection: Detection::Detector(DetectorKind::SynFlood),
            sweep: false,
        },
        Entry {
            name: "FIN_SCAN",
            description: "TCP segment carrying only the FIN flag.",
            reconstructed: true,
            params: &[TcpFin],
            kind: Stateless,
            detection: stateless(fin_scan),
            sweep: true,
        },
        Entry {
            name: "SYNFIN_SCAN",
            description: "TCP segment with both SYN and FIN set.",
            reconstructed: true,
            params: &[TcpSyn],
            kind: Stateless,
            detection: stateless(synfin_scan),
            sweep: true,
        },
        Entry {
            name: "BRKILL",
            description: "Forged RST tearing down a session with a guessed sequence number (catalog metadata only).",
            reconstructed: true,
            params: &[TcpRst],
            kind: Stateful,
            detection: Detection::MetadataOnly,
            sweep: false,
        },
        Entry {
            name: "TCP_HIJACK",
            description:
                "Injected segments taking over an established session (catalog metadata only; needs stream reassembly).",
            reconstructed: true,
            params: &[TcpAck],
            kind: Stateful,
            detection: Detection::MetadataOnly,
            sweep: false,
        },
    ];
    entries
        .into_iter()
        .map(|e| SignatureRule {
            name: e.name.to_string(),
            description: e.description.to_string(),
            reconstructed: e.reconstructed,
            parameters_used: e.params.iter().copied().collect::<BTreeSet<_>>(),
            kind: e.kind,
            detection: e.detection,
            sweep: e.sweep,
        })
        .collect()
}
