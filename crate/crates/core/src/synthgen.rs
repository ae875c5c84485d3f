//! Deterministic synthetic captures: stationary benign background traffic
//! with attack episodes spliced in, plus a ground-truth manifest.
//!
//! Benign traffic is a Poisson packet process. Each arrival picks a protocol
//! by weight and either opens a new conversation or emits the next packet of
//! an open one, so TCP sessions appear as complete handshakes, a few
//! data-less ACKs and a FIN teardown. Checksums are written as zero.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{PacketRecord, PcapWriter, TcpFlags, IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("UnknownKind: {0:?} is not a catalog rule with a runtime detector")]
    UnknownKind(String),
    #[error("InvalidProfile: {0}")]
    InvalidProfile(String),
    #[error("InvalidEpisode: {0}")]
    InvalidEpisode(String),
    #[error("WriteFailure: {0}")]
    WriteFailure(#[from] io::Error),
}

/// Relative weights of the three benign protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMix {
    pub tcp: f64,
    pub udp: f64,
    pub icmp: f64,
}

impl Default for ProtocolMix {
    fn default() -> Self {
        Self { tcp: 0.7, udp: 0.2, icmp: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortModel {
    pub tcp_servers: Vec<u16>,
    pub udp_servers: Vec<u16>,
    /// Inclusive client port range.
    pub ephemeral: (u16, u16),
}

impl Default for PortModel {
    fn default() -> Self {
        Self { tcp_servers: vec![22, 25, 80, 443], udp_servers: vec![53, 123], ephemeral: (49_152, 65_535) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub seed: u64,
    pub duration_s: f64,
    /// Mean benign packets per second.
    pub rate: f64,
    pub protocol_mix: ProtocolMix,
    /// Benign hosts with their prefix length.
    pub address_pool: Vec<(Ipv4Addr, u8)>,
    pub ports: PortModel,
    /// Capture start, microseconds since the epoch.
    pub start_us: u64,
    /// Upper bound on concurrently open benign conversations.
    pub max_open: usize,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 10.0,
            rate: 50.0,
            protocol_mix: ProtocolMix::default(),
            address_pool: (1..=50).map(|h| (Ipv4Addr::new(10, 0, 0, h), 24)).collect(),
            ports: PortModel::default(),
            start_us: 1_600_000_000_000_000,
            max_open: 32,
        }
    }
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidProfile(m));
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        let m = self.protocol_mix;
        let w = [m.tcp, m.udp, m.icmp];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return bad(format!("protocol weights must be non-negative with a positive sum, got {w:?}"));
        }
        if self.address_pool.len() < 2 {
            return bad("address pool needs at least two hosts".into());
        }
        if self.address_pool.iter().any(|(_, p)| *p > 32) {
            return bad("prefix length above 32".into());
        }
        let (lo, hi) = self.ports.ephemeral;
        if lo > hi {
            return bad(format!("empty ephemeral range {lo}..={hi}"));
        }
        if self.ports.tcp_servers.is_empty() || self.ports.udp_servers.is_empty() {
            return bad("server port sets must be non-empty".into());
        }
        if self.max_open == 0 {
            return bad("max_open must be positive".into());
        }
        Ok(())
    }

    fn ts_us(&self, t_s: f64) -> u64 {
        self.start_us + (t_s * 1e6).round() as u64
    }
}

/// Attack kinds that can be injected: every catalog rule with a runtime detector.
pub const EPISODE_KINDS: [&str; 14] = [
    "ACK_SCAN",
    "LAND",
    "SMURF",
    "FRAGGLE",
    "PINGPONG",
    "PING_OF_DEATH",
    "FRAGMENT_OVERLAP",
    "BONK",
    "UNALIGNED_TS",
    "OOB_BUG",
    "OOB_DATA_BARF",
    "SYN_FLOOD",
    "FIN_SCAN",
    "SYNFIN_SCAN",
];

/// One injected attack.
///
/// Recognised params: `count` (instances, spaced evenly over the episode),
/// `rate` (SYN_FLOOD packets per second, replaces `count`), `target`
/// (victim address), `port` (victim port or first scanned port).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEpisode {
    pub kind: String,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl AttackEpisode {
    pub fn new(kind: &str, t_start: f64, t_end: f64) -> Self {
        Self { kind: kind.to_string(), t_start, t_end, params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    fn param<T: FromStr>(&self, key: &str, default: T) -> Result<T, SynthError> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| SynthError::InvalidEpisode(format!("{}: bad {key}={v:?}", self.kind))),
        }
    }
}

/// Parses `kind:start:end[:key=value,...]`.
impl FromStr for AttackEpisode {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SynthError::InvalidEpisode(format!("expected kind:start:end[:k=v,...], got {s:?}"));
        let mut parts = s.splitn(4, ':');
        let kind = parts.next().filter(|k| !k.is_empty()).ok_or_else(bad)?;
        let t_start = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let t_end = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let mut ep = AttackEpisode::new(&kind.to_ascii_uppercase(), t_start, t_end);
        if let Some(params) = parts.next().filter(|p| !p.is_empty()) {
            for kv in params.split(',') {
                let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                ep.params.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(ep)
    }
}

/// Ground truth for one attack packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub ts_us: u64,
    pub kind: String,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
}

pub fn write_manifest<W: Write>(out: W, manifest: &[ManifestEntry]) -> io::Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, manifest)?;
    out.write_all(b"\n")?;
    out.flush()
}

// ---------------------------------------------------------------- frames

#[derive(Debug, Clone)]
struct Datagram {
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: u8,
    id: u16,
    dont_fragment: bool,
    more_fragments: bool,
    /// 8-byte units.
    fragment_offset: u16,
    options: Vec<u8>,
    body: Vec<u8>,
}

impl Datagram {
    fn new(src: Ipv4Addr, dst: Ipv4Addr, protocol: u8, id: u16, body: Vec<u8>) -> Self {
        Self {
            src,
            dst,
            protocol,
            id,
            dont_fragment: false,
            more_fragments: false,
            fragment_offset: 0,
            options: Vec::new(),
            body,
        }
    }

    fn frame(&self) -> Vec<u8> {
        assert!(self.options.len().is_multiple_of(4) && self.options.len() <= 40);
        let hlen = 20 + self.options.len();
        let total = hlen + self.body.len();
        let mut f = Vec::with_capacity(14 + total);
        f.extend_from_slice(&mac(self.dst));
        f.extend_from_slice(&mac(self.src));
        f.extend_from_slice(&0x0800u16.to_be_bytes());
        f.push(0x40 | (hlen / 4) as u8);
        f.push(0);
        f.extend_from_slice(&(total as u16).to_be_bytes());
        f.extend_from_slice(&self.id.to_be_bytes());
        let frag =
            (u16::from(self.dont_fragment) << 14) | (u16::from(self.more_fragments) << 13) | self.fragment_offset;
        f.extend_from_slice(&frag.to_be_bytes());
        f.push(64);
        f.push(self.protocol);
        f.extend_from_slice(&[0, 0]);
        f.extend_from_slice(&self.src.octets());
        f.extend_from_slice(&self.dst.octets());
        f.extend_from_slice(&self.options);
        f.extend_from_slice(&self.body);
        f
    }
}

fn mac(addr: Ipv4Addr) -> [u8; 6] {
    let o = addr.octets();
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

struct Segment {
    sport: u16,
    dport: u16,
    seq: u32,
    ack: u32,
    flags: u8,
    urgent: u16,
    payload: Vec<u8>,
}

fn tcp_bytes(s: &Segment) -> Vec<u8> {
    let mut b = Vec::with_capacity(20 + s.payload.len());
    b.extend_from_slice(&s.sport.to_be_bytes());
    b.extend_from_slice(&s.dport.to_be_bytes());
    b.extend_from_slice(&s.seq.to_be_bytes());
    b.extend_from_slice(&s.ack.to_be_bytes());
    b.push(5 << 4);
    b.push(s.flags);
    b.extend_from_slice(&8_192u16.to_be_bytes());
    b.extend_from_slice(&[0, 0]);
    b.extend_from_slice(&s.urgent.to_be_bytes());
    b.extend_from_slice(&s.payload);
    b
}

fn udp_bytes(sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut b = Vec::with_capacity(8 + payload.len());
    b.extend_from_slice(&sport.to_be_bytes());
    b.extend_from_slice(&dport.to_be_bytes());
    b.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    b.extend_from_slice(&[0, 0]);
    b.extend_from_slice(payload);
    b
}

fn icmp_echo_bytes(icmp_type: u8, ident: u16, seq: u16, payload: &[u8]) -> Vec<u8> {
    let mut b = vec![icmp_type, 0, 0, 0];
    b.extend_from_slice(&ident.to_be_bytes());
    b.extend_from_slice(&seq.to_be_bytes());
    b.extend_from_slice(payload);
    b
}

fn syn(sport: u16, dport: u16, seq: u32) -> Vec<u8> {
    tcp_bytes(&Segment { sport, dport, seq, ack: 0, flags: TcpFlags::SYN, urgent: 0, payload: Vec::new() })
}

// ---------------------------------------------------------------- benign

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Proto {
    Tcp,
    Udp,
    Icmp,
}

struct Conversation {
    proto: Proto,
    client: Ipv4Addr,
    server: Ipv4Addr,
    cport: u16,
    sport: u16,
    /// (from client, tcp flags) per packet.
    script: Vec<(bool, u8)>,
    next: usize,
    cseq: u32,
    sseq: u32,
}

impl Conversation {
    fn open(proto: Proto, profile: &TrafficProfile, rng: &mut ChaCha8Rng) -> Self {
        let pool = &profile.address_pool;
        let ci = rng.random_range(0..pool.len());
        let mut si = rng.random_range(0..pool.len() - 1);
        if si >= ci {
            si += 1;
        }
        let (lo, hi) = profile.ports.ephemeral;
        let cport = rng.random_range(lo..=hi);
        let pick = |set: &[u16], rng: &mut ChaCha8Rng| set[rng.random_range(0..set.len())];
        let (sport, script) = match proto {
            Proto::Tcp => {
                use TcpFlags as F;
                let mut s = vec![(true, F::SYN), (false, F::SYN | F::ACK), (true, F::ACK)];
                for i in 0..rng.random_range(1..=10) {
                    s.push((i % 2 == 1, F::ACK));
                }
                s.extend([(true, F::FIN | F::ACK), (false, F::ACK), (false, F::FIN | F::ACK), (true, F::ACK)]);
                (pick(&profile.ports.tcp_servers, rng), s)
            }
            Proto::Udp => (pick(&profile.ports.udp_servers, rng), vec![(true, 0), (false, 0)]),
            Proto::Icmp => (rng.random(), vec![(true, 0), (false, 0)]),
        };
        Self {
            proto,
            client: pool[ci].0,
            server: pool[si].0,
            cport,
            sport,
            script,
            next: 0,
            cseq: rng.random(),
            sseq: rng.random(),
        }
    }

    fn done(&self) -> bool {
        self.next >= self.script.len()
    }

    fn emit(&mut self, ip_id: u16) -> Datagram {
        let (from_client, flags) = self.script[self.next];
        self.next += 1;
        let (src, dst) = if from_client { (self.client, self.server) } else { (self.server, self.client) };
        let (sp, dp) = if from_client { (self.cport, self.sport) } else { (self.sport, self.cport) };
        let mut d = match self.proto {
            Proto::Tcp => {
                let (seq, ack) = if from_client { (self.cseq, self.sseq) } else { (self.sseq, self.cseq) };
                let ack = if flags & TcpFlags::ACK != 0 { ack } else { 0 };
                if flags & (TcpFlags::SYN | TcpFlags::FIN) != 0 {
                    if from_client {
                        self.cseq = self.cseq.wrapping_add(1);
                    } else {
                        self.sseq = self.sseq.wrapping_add(1);
                    }
                }
                let body =
                    tcp_bytes(&Segment { sport: sp, dport: dp, seq, ack, flags, urgent: 0, payload: Vec::new() });
                Datagram::new(src, dst, IPPROTO_TCP, ip_id, body)
            }
            Proto::Udp => Datagram::new(src, dst, IPPROTO_UDP, ip_id, udp_bytes(sp, dp, &[0u8; 32])),
            Proto::Icmp => {
                let ty = if from_client { 8 } else { 0 };
                Datagram::new(src, dst, IPPROTO_ICMP, ip_id, icmp_echo_bytes(ty, self.sport, 1, &[0u8; 32]))
            }
        };
        d.dont_fragment = true;
        d
    }
}

fn benign(profile: &TrafficProfile, rng: &mut ChaCha8Rng) -> Vec<PacketRecord> {
    let m = profile.protocol_mix;
    let protos = [Proto::Tcp, Proto::Udp, Proto::Icmp];
    let choose = WeightedIndex::new([m.tcp, m.udp, m.icmp]).expect("validated weights");
    let gap = Exp::new(profile.rate).expect("validated rate");
    let mut open: Vec<Conversation> = Vec::new();
    let mut records = Vec::new();
    let mut ip_id: u16 = rng.random();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= profile.duration_s {
            break;
        }
        let proto = protos[choose.sample(rng)];
        let candidates: Vec<usize> = (0..open.len()).filter(|&i| open[i].proto == proto).collect();
        let start_new = candidates.is_empty() || (open.len() < profile.max_open && rng.random_bool(0.35));
        let idx = if start_new {
            open.push(Conversation::open(proto, profile, rng));
            open.len() - 1
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };
        ip_id = ip_id.wrapping_add(1);
        let frame = open[idx].emit(ip_id).frame();
        records.push(PacketRecord::new(profile.ts_us(t), frame));
        if open[idx].done() {
            open.remove(idx);
        }
    }
    records
}

// ---------------------------------------------------------------- attacks

fn broadcast_of(addr: Ipv4Addr, prefix: u8) -> Ipv4Addr {
    let host = if prefix >= 32 { 0 } else { u32::MAX >> prefix };
    Ipv4Addr::from(u32::from(addr) | host)
}

const ATTACKER: Ipv4Addr = Ipv4Addr::new(192, 0, 2, 66);

fn attack_packets(
    profile: &TrafficProfile,
    ep: &AttackEpisode,
    ordinal: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, Datagram)>, SynthError> {
    let kind = ep.kind.as_str();
    let pool = &profile.address_pool;
    let target: Ipv4Addr = ep.param("target", pool[0].0)?;
    let prefix = pool.iter().find(|(a, _)| *a == target).map_or(24, |(_, p)| *p);
    let span = ep.t_end - ep.t_start;
    let is_scan = matches!(kind, "ACK_SCAN" | "FIN_SCAN" | "SYNFIN_SCAN");
    let count: usize = if kind == "SYN_FLOOD" {
        let rate: f64 = ep.param("rate", 200.0)?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(SynthError::InvalidEpisode(format!("SYN_FLOOD: bad rate {rate}")));
        }
        ((rate * span).round() as usize).max(1)
    } else {
        ep.param("count", if is_scan { 25 } else { 5 })?
    };
    if count == 0 {
        return Err(SynthError::InvalidEpisode(format!("{kind}: count must be positive")));
    }
    let step = span / count as f64;
    // Fragment ids stay clear of the benign id sequence's typical neighbourhood.
    let frag_id = |i: usize| (0xF000u32 + (ordinal as u32 * 257 + i as u32) % 0x0FFF) as u16;
    let mut out = Vec::new();
    for i in 0..count {
        let t = ep.t_start + (i as f64 + 0.5) * step;
        let id = rng.random();
        match kind {
            "LAND" => {
                let port: u16 = ep.param("port", 139)?;
                out.push((t, Datagram::new(target, target, IPPROTO_TCP, id, syn(port, port, rng.random()))));
            }
            "ACK_SCAN" | "FIN_SCAN" | "SYNFIN_SCAN" => {
                let base: u16 = ep.param("port", 1)?;
                let port = base.wrapping_add(i as u16);
                let (flags, sport) = match kind {
                    "ACK_SCAN" => (TcpFlags::ACK, port),
                    "FIN_SCAN" => (TcpFlags::FIN, 40_000),
                    _ => (TcpFlags::SYN | TcpFlags::FIN, 40_000),
                };
                let body = tcp_bytes(&Segment {
                    sport,
                    dport: port,
                    seq: rng.random(),
                    ack: if kind == "ACK_SCAN" { rng.random() } else { 0 },
                    flags,
                    urgent: 0,
                    payload: Vec::new(),
                });
                out.push((t, Datagram::new(ATTACKER, target, IPPROTO_TCP, id, body)));
            }
            "SMURF" => {
                let body = icmp_echo_bytes(8, 0x5353, i as u16, &[0u8; 56]);
                out.push((t, Datagram::new(target, broadcast_of(target, prefix), IPPROTO_ICMP, id, body)));
            }
            "FRAGGLE" => {
                let dport = if i % 2 == 0 { 7 } else { 19 };
                let body = udp_bytes(rng.random_range(1_024..=65_535), dport, &[0u8; 32]);
                out.push((t, Datagram::new(target, broadcast_of(target, prefix), IPPROTO_UDP, id, body)));
            }
            "PINGPONG" => {
                let peer = pool.iter().map(|(a, _)| *a).find(|a| *a != target).expect("pool has two hosts");
                let body = udp_bytes(7, 19, &[0u8; 16]);
                out.push((t, Datagram::new(target, peer, IPPROTO_UDP, id, body)));
            }
            "PING_OF_DEATH" => {
                let mut d = Datagram::new(ATTACKER, target, IPPROTO_ICMP, frag_id(i), vec![0u8; 100]);
                d.fragment_offset = 8_189;
                out.push((t, d));
            }
            "FRAGMENT_OVERLAP" => {
                let id = frag_id(i);
                let seg = tcp_bytes(&Segment {
                    sport: 40_000,
                    dport: ep.param("port", 80)?,
                    seq: rng.random(),
                    ack: rng.random(),
                    flags: TcpFlags::PSH | TcpFlags::ACK,
                    urgent: 0,
                    payload: vec![0u8; 4],
                });
                let mut first = Datagram::new(ATTACKER, target, IPPROTO_TCP, id, seg);
                first.more_fragments = true;
                let mut second = Datagram::new(ATTACKER, target, IPPROTO_TCP, id, vec![0u8; 24]);
                second.fragment_offset = 1;
                out.push((t, first));
                out.push((t + step.min(1e-3) / 2.0, second));
            }
            "BONK" => {
                let id = frag_id(i);
                let mut first =
                    Datagram::new(ATTACKER, target, IPPROTO_UDP, id, udp_bytes(53, ep.param("port", 53)?, &[0u8; 28]));
                first.more_fragments = true;
                let mut second = Datagram::new(ATTACKER, target, IPPROTO_UDP, id, vec![0u8; 16]);
                second.more_fragments = true;
                second.fragment_offset = 1;
                out.push((t, first));
                out.push((t + step.min(1e-3) / 2.0, second));
            }
            "UNALIGNED_TS" => {
                let mut d =
                    Datagram::new(ATTACKER, target, IPPROTO_ICMP, id, icmp_echo_bytes(8, 0x7473, i as u16, &[0; 8]));
                let mut opt = vec![68, 10, 5, 0, 0, 0, 0, 0, 0, 0];
                opt.resize(12, 0);
                d.options = opt;
                out.push((t, d));
            }
            "OOB_BUG" | "OOB_DATA_BARF" => {
                let (dport, urgent, payload) = if kind == "OOB_BUG" {
                    (ep.param("port", 139)?, 3, vec![b'B'; 4])
                } else {
                    (ep.param("port", 80)?, 0xFFFF, Vec::new())
                };
                let body = tcp_bytes(&Segment {
                    sport: rng.random_range(1_024..=65_535),
                    dport,
                    seq: rng.random(),
                    ack: rng.random(),
                    flags: TcpFlags::URG | TcpFlags::ACK | TcpFlags::PSH,
                    urgent,
                    payload,
                });
                out.push((t, Datagram::new(ATTACKER, target, IPPROTO_TCP, id, body)));
            }
            "SYN_FLOOD" => {
                let src = Ipv4Addr::new(198, 18, (i >> 8) as u8, i as u8);
                let body = syn(rng.random_range(1_024..=65_535), ep.param("port", 80)?, rng.random());
                out.push((t, Datagram::new(src, target, IPPROTO_TCP, id, body)));
            }
            other => return Err(SynthError::UnknownKind(other.to_string())),
        }
    }
    Ok(out)
}

fn check_episode(profile: &TrafficProfile, ep: &AttackEpisode) -> Result<(), SynthError> {
    if !EPISODE_KINDS.contains(&ep.kind.as_str()) {
        return Err(SynthError::UnknownKind(ep.kind.clone()));
    }
    if !(ep.t_start >= 0.0 && ep.t_start < ep.t_end && ep.t_end <= profile.duration_s) {
        return Err(SynthError::InvalidEpisode(format!(
            "{}: need 0 <= start < end <= duration ({}), got {}..{}",
            ep.kind, profile.duration_s, ep.t_start, ep.t_end
        )));
    }
    const KNOWN: [&str; 4] = ["count", "rate", "target", "port"];
    if let Some(k) = ep.params.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(SynthError::InvalidEpisode(format!("{}: unknown param {k:?}", ep.kind)));
    }
    Ok(())
}

/// All packets in timestamp order, with the manifest of attack packets.
pub fn generate_records(
    profile: &TrafficProfile,
    episodes: &[AttackEpisode],
) -> Result<(Vec<PacketRecord>, Vec<ManifestEntry>), SynthError> {
    profile.validate()?;
    for ep in episodes {
        check_episode(profile, ep)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut records = benign(profile, &mut rng);
    let mut manifest = Vec::new();
    for (n, ep) in episodes.iter().enumerate() {
        for (t, d) in attack_packets(profile, ep, n, &mut rng)? {
            let ts = profile.ts_us(t);
            manifest.push(ManifestEntry { ts_us: ts, kind: ep.kind.clone(), src: d.src, dst: d.dst });
            records.push(PacketRecord::new(ts, d.frame()));
        }
    }
    records.sort_by_key(|r| r.timestamp_us);
    manifest.sort_by_key(|m| m.ts_us);
    Ok((records, manifest))
}

/// Writes the capture to `out` and returns the manifest.
pub fn generate<W: Write>(
    profile: &TrafficProfile,
    episodes: &[AttackEpisode],
    out: W,
) -> Result<Vec<ManifestEntry>, SynthError> {
    let (records, manifest) = generate_records(profile, episodes)?;
    let mut w = PcapWriter::new(out, 65_535)?;
    for r in &records {
        w.write_record(r)?;
    }
    w.into_inner()?;
    Ok(manifest)
}

pub fn generate_file(
    profile: &TrafficProfile,
    episodes: &[AttackEpisode],
    path: impl AsRef<Path>,
) -> Result<Vec<ManifestEntry>, SynthError> {
    let file = BufWriter::new(File::create(path)?);
    generate(profile, episodes, file)
}
