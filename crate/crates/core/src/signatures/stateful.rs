use std::collections::{HashMap, VecDeque};
use std::net::Ipv4Addr;
use std::num::NonZeroUsize;

use lru::LruCache;

use super::{Alert, Detection, DetectorKind, Predicate, ScanConfig, SignatureError, SignatureRule};
use crate::capture::{ParsedHeaders, IPPROTO_UDP};

type FlowKey = (Ipv4Addr, u16);

#[derive(Default)]
struct SynWindow {
    /// SYN arrivals still inside the window, oldest first.
    events: VecDeque<(u64, FlowKey)>,
    /// Unanswered SYN timestamps per initiating (src, sport).
    pending: HashMap<FlowKey, VecDeque<u64>>,
    open: usize,
    suppress_until: u64,
}

impl SynWindow {
    fn expire(&mut self, now: u64, window: u64) {
        while let Some(&(t, key)) = self.events.front() {
            if t + window > now {
                break;
            }
            self.events.pop_front();
            if let Some(q) = self.pending.get_mut(&key) {
                if q.front() == Some(&t) {
                    q.pop_front();
                    self.open -= 1;
                    if q.is_empty() {
                        self.pending.remove(&key);
                    }
                }
            }
        }
    }

    fn complete(&mut self, key: FlowKey) {
        if let Some(q) = self.pending.get_mut(&key) {
            q.pop_front();
            self.open -= 1;
            if q.is_empty() {
                self.pending.remove(&key);
            }
        }
    }
}

#[derive(Default)]
struct SweepWindow {
    events: VecDeque<(u64, u16)>,
    ports: HashMap<u16, usize>,
    suppress_until: u64,
}

impl SweepWindow {
    fn expire(&mut self, now: u64, window: u64) {
        while let Some(&(t, port)) = self.events.front() {
            if t + window > now {
                break;
            }
            self.events.pop_front();
            if let Some(c) = self.ports.get_mut(&port) {
                *c -= 1;
                if *c == 0 {
                    self.ports.remove(&port);
                }
            }
        }
    }
}

type FragmentKey = (Ipv4Addr, Ipv4Addr, u8, u16);

struct SweepRule {
    name: String,
    predicate: Predicate,
}

/// Ordered-stream state for the SYN-flood, fragment-overlap, bonk and
/// port-sweep detectors. One engine consumes one stream.
pub struct StatefulEngine {
    config: ScanConfig,
    syn_rule: Option<String>,
    overlap_rule: Option<String>,
    bonk_rule: Option<String>,
    sweep_rules: Vec<SweepRule>,
    syn: HashMap<FlowKey, SynWindow>,
    sweeps: HashMap<(usize, Ipv4Addr), SweepWindow>,
    fragments: LruCache<FragmentKey, Vec<(u32, u32)>>,
    latest: Option<u64>,
    next_prune: u64,
}

impl StatefulEngine {
    pub fn new(rules: &[SignatureRule], config: ScanConfig) -> Result<Self, SignatureError> {
        config.validate()?;
        let mut engine = StatefulEngine {
            config,
            syn_rule: None,
            overlap_rule: None,
            bonk_rule: None,
            sweep_rules: Vec::new(),
            syn: HashMap::new(),
            sweeps: HashMap::new(),
            fragments: LruCache::new(NonZeroUsize::new(config.fragment_capacity).expect("validated")),
            latest: None,
            next_prune: 0,
        };
        for r in rules {
            match &r.detection {
                Detection::Detector(DetectorKind::SynFlood) => engine.syn_rule = Some(r.name.clone()),
                Detection::Detector(DetectorKind::FragmentOverlap) => engine.overlap_rule = Some(r.name.clone()),
                Detection::Detector(DetectorKind::Bonk) => engine.bonk_rule = Some(r.name.clone()),
                Detection::Predicate(p) if r.sweep => {
                    engine.sweep_rules.push(SweepRule { name: r.name.clone(), predicate: p.clone() })
                }
                _ => {}
            }
        }
        Ok(engine)
    }

    /// Feeds one packet; returns the alerts it triggers.
    pub fn process(&mut self, ts_us: u64, h: &ParsedHeaders) -> Result<Vec<Alert>, SignatureError> {
        if let Some(latest) = self.latest {
            if ts_us + self.config.out_of_order_tolerance_us < latest {
                return Err(SignatureError::OutOfOrder { ts_us, latest_us: latest, regress_us: latest - ts_us });
            }
        }
        let now = self.latest.map_or(ts_us, |l| l.max(ts_us));
        self.latest = Some(now);
        self.prune(now);

        let mut alerts = Vec::new();
        let Some(ip) = &h.ip else {
            return Ok(alerts);
        };
        if self.syn_rule.is_some() {
            self.syn_flood(ts_us, h, &mut alerts);
        }
        if ip.is_fragment() && (self.overlap_rule.is_some() || self.bonk_rule.is_some()) {
            self.fragment(ts_us, h, &mut alerts);
        }
        if !self.sweep_rules.is_empty() {
            self.sweep(ts_us, h, &mut alerts);
        }
        Ok(alerts)
    }

    fn syn_flood(&mut self, ts: u64, h: &ParsedHeaders, alerts: &mut Vec<Alert>) {
        let (Some(ip), Some(tcp)) = (&h.ip, &h.tcp) else { return };
        let f = tcp.flags;
        let window = self.config.syn_window_us();
        if f.syn && !f.ack {
            let w = self.syn.entry((ip.dst, tcp.dst_port)).or_default();
            w.expire(ts, window);
            let key = (ip.src, tcp.src_port);
            w.events.push_back((ts, key));
            w.pending.entry(key).or_default().push_back(ts);
            w.open += 1;
            if w.open > self.config.syn_threshold && ts >= w.suppress_until {
                w.suppress_until = ts + window;
                alerts.push(Alert {
                    rule: self.syn_rule.clone().expect("checked by caller"),
                    ts_us: ts,
                    src: ip.src,
                    dst: ip.dst,
                    detail: format!(
                        "half_open={} threshold={} window_s={} dport={}",
                        w.open, self.config.syn_threshold, self.config.syn_window_s, tcp.dst_port
                    ),
                });
            }
        } else if f.ack && !f.syn && !f.rst {
            // Final ACK of a handshake travels client -> server.
            if let Some(w) = self.syn.get_mut(&(ip.dst, tcp.dst_port)) {
                w.expire(ts, window);
                w.complete((ip.src, tcp.src_port));
            }
        }
    }

    fn fragment(&mut self, ts: u64, h: &ParsedHeaders, alerts: &mut Vec<Alert>) {
        let ip = h.ip.as_ref().expect("checked by caller");
        let (start, end) = ip.fragment_range();
        let key = (ip.src, ip.dst, ip.protocol, ip.identification);
        let ranges = self.fragments.get_or_insert_mut(key, Vec::new);
        let overlaps = ranges.iter().find(|&&(s, e)| start < e && s < end).copied();
        ranges.push((start, end));
        let Some((s, e)) = overlaps else { return };
        let detail = format!("id={} bytes [{start},{end}) overlap [{s},{e})", ip.identification);
        if let Some(rule) = &self.overlap_rule {
            alerts.push(Alert { rule: rule.clone(), ts_us: ts, src: ip.src, dst: ip.dst, detail: detail.clone() });
        }
        if let Some(rule) = &self.bonk_rule {
            if ip.protocol == IPPROTO_UDP && ip.flags.more_fragments {
                alerts.push(Alert { rule: rule.clone(), ts_us: ts, src: ip.src, dst: ip.dst, detail });
            }
        }
    }

    fn sweep(&mut self, ts: u64, h: &ParsedHeaders, alerts: &mut Vec<Alert>) {
        let (Some(ip), Some(tcp)) = (&h.ip, &h.tcp) else { return };
        let window = self.config.scan_window_us();
        for (i, rule) in self.sweep_rules.iter().enumerate() {
            if !(rule.predicate)(h, &self.config) {
                continue;
            }
            let w = self.sweeps.entry((i, ip.src)).or_default();
            w.expire(ts, window);
            w.events.push_back((ts, tcp.dst_port));
            *w.ports.entry(tcp.dst_port).or_default() += 1;
            let distinct = w.ports.len();
            if distinct > self.config.scan_threshold && ts >= w.suppress_until {
                w.suppress_until = ts + window;
                alerts.push(Alert {
                    rule: rule.name.clone(),
                    ts_us: ts,
                    src: ip.src,
                    dst: ip.dst,
                    detail: format!("sweep distinct_dports={distinct} window_s={}", self.config.scan_window_s),
                });
            }
        }
    }

    /// Drops per-key state that has fully aged out.
    fn prune(&mut self, now: u64) {
        if now < self.next_prune {
            return;
        }
        let syn_w = self.config.syn_window_us();
        let scan_w = self.config.scan_window_us();
        self.syn.retain(|_, w| {
            w.expire(now, syn_w);
            !w.events.is_empty() || w.suppress_until > now
        });
        self.sweeps.retain(|_, w| {
            w.expire(now, scan_w);
            !w.events.is_empty() || w.suppress_until > now
        });
        self.next_prune = now + syn_w.max(scan_w);
    }
}

/// Stateful detector alerts over an ordered packet stream.
pub fn evaluate_stateful<'a, I>(
    rules: &[SignatureRule],
    config: &ScanConfig,
    packets: I,
) -> Result<Vec<Alert>, SignatureError>
where
    I: IntoIterator<Item = (u64, &'a ParsedHeaders)>,
{
    let mut engine = StatefulEngine::new(rules, *config)?;
    let mut alerts = Vec::new();
    for (ts, h) in packets {
        alerts.extend(engine.process(ts, h)?);
    }
    Ok(alerts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{IpFlags, Ipv4Header, TcpFlags, TcpHeader, IPPROTO_TCP};
    use crate::signatures::builtin_catalog;

    fn ip(src: [u8; 4], dst: [u8; 4], proto: u8) -> Ipv4Header {
        Ipv4Header {
            version: 4,
            header_len_bytes: 20,
            tos: 0,
            total_length: 40,
            identification: 0,
            flags: IpFlags::default(),
            fragment_offset: 0,
            ttl: 64,
            protocol: proto,
            checksum: 0,
            src: src.into(),
            dst: dst.into(),
            options: Vec::new(),
        }
    }

    fn tcp(src: [u8; 4], sport: u16, dst: [u8; 4], dport: u16, flags: u8) -> ParsedHeaders {
        ParsedHeaders {
            ethertype: 0x0800,
            ip: Some(ip(src, dst, IPPROTO_TCP)),
            tcp: Some(TcpHeader {
                src_port: sport,
                dst_port: dport,
                seq: 0,
                ack_num: 0,
                header_len_bytes: 20,
                flags: TcpFlags::from_bits(flags),
                window: 1024,
                urgent_ptr: 0,
            }),
            ..Default::default()
        }
    }

    fn fragment(proto: u8, offset_units: u16, len: u16, mf: bool) -> ParsedHeaders {
        let mut i = ip([10, 0, 0, 1], [10, 0, 0, 2], proto);
        i.identification = 77;
        i.fragment_offset = offset_units;
        i.total_length = 20 + len;
        i.flags.more_fragments = mf;
        ParsedHeaders { ethertype: 0x0800, ip: Some(i), ..Default::default() }
    }

    fn run(stream: &[(u64, ParsedHeaders)]) -> Vec<Alert> {
        evaluate_stateful(&builtin_catalog(), &ScanConfig::default(), stream.iter().map(|(t, h)| (*t, h))).unwrap()
    }

    #[test]
    fn syn_flood_fires_once() {
        let stream: Vec<_> = (0..200u32)
            .map(|i| {
                let src = [172, 16, (i >> 8) as u8, i as u8];
                (u64::from(i) * 5_000, tcp(src, 40_000, [10, 0, 0, 9], 80, TcpFlags::SYN))
            })
            .collect();
        let alerts = run(&stream);
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].rule, "SYN_FLOOD");
        // The 101st SYN crosses K = 100.
        assert_eq!(alerts[0].ts_us, 100 * 5_000);
    }

    #[test]
    fn completed_handshakes_cancel() {
        let mut stream = Vec::new();
        for i in 0..150u16 {
            let t = u64::from(i) * 10_000;
            let client = [10, 0, 0, 5];
            let server = [10, 0, 0, 9];
            stream.push((t, tcp(client, 50_000 + i, server, 80, TcpFlags::SYN)));
            stream.push((t + 1, tcp(server, 80, client, 50_000 + i, TcpFlags::SYN | TcpFlags::ACK)));
            stream.push((t + 2, tcp(client, 50_000 + i, server, 80, TcpFlags::ACK)));
        }
        assert!(run(&stream).is_empty());
    }

    #[test]
    fn flood_realerts_after_window() {
        let syn = |i: u64| tcp([172, 16, 0, (i % 250) as u8], (i % 60_000) as u16, [10, 0, 0, 9], 80, TcpFlags::SYN);
        // 200/s for 12 s: windows [0,5) [5,10) [10,12) each cross the threshold.
        let stream: Vec<_> = (0..2_400u64).map(|i| (i * 5_000, syn(i))).collect();
        let alerts = run(&stream);
        assert_eq!(alerts.len(), 3);
    }

    #[test]
    fn overlapping_fragments() {
        let stream = vec![(0, fragment(IPPROTO_TCP, 0, 24, true)), (10, fragment(IPPROTO_TCP, 1, 24, false))];
        let alerts = run(&stream);
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].rule, "FRAGMENT_OVERLAP");
        assert_eq!(alerts[0].ts_us, 10);
    }

    #[test]
    fn adjacent_fragments_do_not_overlap() {
        let stream = vec![(0, fragment(IPPROTO_TCP, 0, 24, true)), (10, fragment(IPPROTO_TCP, 3, 24, false))];
        assert!(run(&stream).is_empty());
    }

    #[test]
    fn bonk_needs_udp_with_mf() {
        let stream = vec![(0, fragment(IPPROTO_UDP, 0, 36, true)), (10, fragment(IPPROTO_UDP, 1, 16, true))];
        let mut names: Vec<_> = run(&stream).into_iter().map(|a| a.rule).collect();
        names.sort();
        assert_eq!(names, vec!["BONK", "FRAGMENT_OVERLAP"]);

        let stream = vec![(0, fragment(IPPROTO_UDP, 0, 36, true)), (10, fragment(IPPROTO_UDP, 1, 16, false))];
        let names: Vec<_> = run(&stream).into_iter().map(|a| a.rule).collect();
        assert_eq!(names, vec!["FRAGMENT_OVERLAP"]);
    }

    #[test]
    fn fragment_cache_is_bounded() {
        let cfg = ScanConfig { fragment_capacity: 1, ..ScanConfig::default() };
        let mut a = fragment(IPPROTO_TCP, 0, 24, true);
        let mut b = a.clone();
        b.ip.as_mut().unwrap().identification = 78;
        a.ip.as_mut().unwrap().identification = 77;
        let second_a = fragment(IPPROTO_TCP, 1, 24, false);
        let stream = [(0, &a), (1, &b), (2, &second_a)];
        // Datagram 77 was evicted by 78, so its overlap goes unseen.
        assert!(evaluate_stateful(&builtin_catalog(), &cfg, stream).unwrap().is_empty());
    }

    #[test]
    fn port_sweep_summary() {
        let stream: Vec<_> = (0..30u16)
            .map(|p| (u64::from(p) * 1_000, tcp([10, 0, 0, 66], 40_000, [10, 0, 0, 9], 1_000 + p, TcpFlags::FIN)))
            .collect();
        let alerts = run(&stream);
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].rule, "FIN_SCAN");
        assert_eq!(alerts[0].ts_us, 20_000);
        assert!(alerts[0].detail.contains("distinct_dports=21"));
    }

    #[test]
    fn out_of_order_rejected_beyond_tolerance() {
        let h = tcp([10, 0, 0, 1], 1, [10, 0, 0, 2], 2, TcpFlags::ACK);
        let mut e = StatefulEngine::new(&builtin_catalog(), ScanConfig::default()).unwrap();
        e.process(10_000, &h).unwrap();
        e.process(9_500, &h).unwrap();
        assert_eq!(
            e.process(8_000, &h),
            Err(SignatureError::OutOfOrder { ts_us: 8_000, latest_us: 10_000, regress_us: 2_000 })
        );
    }

    #[test]
    fn empty_stream_is_silent() {
        assert!(run(&[]).is_empty());
    }
}
