//! Static header parameters and their equal-interval time series.
//!
//! Only fields that survive end-to-end propagation are extractable. Fields a
//! router may rewrite (MAC addresses, TTL, checksums) are listed separately in
//! [`DynamicField`] and never become a [`ParameterId`].

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::ParsedHeaders;

#[derive(Debug, Error)]
pub enum ParameterError {
    #[error("InvalidTau: sampling interval must be a positive number of seconds of at least 1 us, got {0}")]
    InvalidTau(f64),
    #[error("UnknownParameter: {0}")]
    UnknownParameter(String),
    #[error("UnknownAggregator: {0}")]
    UnknownAggregator(String),
    #[error("BadSeriesCsv: {0}")]
    BadSeriesCsv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParameterId {
    IpProtocol,
    IpSrc,
    IpDst,
    IpLength,
    IpMfFlag,
    IpDfFlag,
    IpOptionsLen,
    IpFragOffset,
    IpId,
    TcpSport,
    TcpDport,
    TcpUrg,
    TcpRst,
    TcpAck,
    TcpSyn,
    TcpFin,
    TcpSeq,
    UdpSport,
    UdpDport,
    IcmpType,
    IcmpCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Staticity {
    Static,
    Dynamic,
}

/// Header fields that can change in transit and are excluded from analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicField {
    EthSrc,
    EthDst,
    Ttl,
    IpChecksum,
}

/// Any header field, extractable or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderField {
    Parameter(ParameterId),
    Excluded(DynamicField),
}

/// One row of the intrusion-signature parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRow {
    pub index: u8,
    pub protocol: &'static str,
    pub name: &'static str,
}

impl ParameterId {
    pub const ALL: [ParameterId; 21] = [
        ParameterId::IpProtocol,
        ParameterId::IpSrc,
        ParameterId::IpDst,
        ParameterId::IpLength,
        ParameterId::IpMfFlag,
        ParameterId::IpDfFlag,
        ParameterId::IpOptionsLen,
        ParameterId::IpFragOffset,
        ParameterId::IpId,
        ParameterId::TcpSport,
        ParameterId::TcpDport,
        ParameterId::TcpUrg,
        ParameterId::TcpRst,
        ParameterId::TcpAck,
        ParameterId::TcpSyn,
        ParameterId::TcpFin,
        ParameterId::TcpSeq,
        ParameterId::UdpSport,
        ParameterId::UdpDport,
        ParameterId::IcmpType,
        ParameterId::IcmpCode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParameterId::IpProtocol => "IP_PROTOCOL",
            ParameterId::IpSrc => "IP_SRC",
            ParameterId::IpDst => "IP_DST",
            ParameterId::IpLength => "IP_LENGTH",
            ParameterId::IpMfFlag => "IP_MF_FLAG",
            ParameterId::IpDfFlag => "IP_DF_FLAG",
            ParameterId::IpOptionsLen => "IP_OPTIONS_LEN",
            ParameterId::IpFragOffset => "IP_FRAG_OFFSET",
            ParameterId::IpId => "IP_ID",
            ParameterId::TcpSport => "TCP_SPORT",
            ParameterId::TcpDport => "TCP_DPORT",
            ParameterId::TcpUrg => "TCP_URG",
            ParameterId::TcpRst => "TCP_RST",
            ParameterId::TcpAck => "TCP_ACK",
            ParameterId::TcpSyn => "TCP_SYN",
            ParameterId::TcpFin => "TCP_FIN",
            ParameterId::TcpSeq => "TCP_SEQ",
            ParameterId::UdpSport => "UDP_SPORT",
            ParameterId::UdpDport => "UDP_DPORT",
            ParameterId::IcmpType => "ICMP_TYPE",
            ParameterId::IcmpCode => "ICMP_CODE",
        }
    }

    /// Position in the signature-parameter table, if the parameter appears there.
    pub fn table_row(self) -> Option<TableRow> {
        let (index, protocol, name) = match self {
            ParameterId::IpDst => (1, "IP", "Destination IP Address"),
            ParameterId::IpSrc => (2, "IP", "Source IP Address"),
            ParameterId::IpLength => (3, "IP", "Length"),
            ParameterId::IpMfFlag => (4, "IP", "More Fragment Flag"),
            ParameterId::IpDfFlag => (5, "IP", "Don't Fragment Flag"),
            ParameterId::IpOptionsLen => (6, "IP", "Options"),
            ParameterId::TcpSport => (7, "TCP", "Source Port"),
            ParameterId::TcpDport => (8, "TCP", "Destination Port"),
            ParameterId::TcpUrg => (9, "TCP", "Urgent Flag"),
            ParameterId::TcpRst => (10, "TCP", "RST Flag"),
            ParameterId::TcpAck => (11, "TCP", "ACK Flag"),
            ParameterId::TcpSyn => (12, "TCP", "SYN Flag"),
            ParameterId::TcpFin => (13, "TCP", "FIN Flag"),
            ParameterId::UdpDport => (14, "UDP", "Destination Port"),
            ParameterId::UdpSport => (15, "UDP", "Source Port"),
            ParameterId::IcmpType => (16, "ICMP", "Type"),
            ParameterId::IcmpCode => (17, "ICMP", "Code"),
            ParameterId::IpProtocol | ParameterId::IpFragOffset | ParameterId::IpId | ParameterId::TcpSeq => {
                return None
            }
        };
        Some(TableRow { index, protocol, name })
    }
}

impl fmt::Display for ParameterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParameterId {
    type Err = ParameterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase();
        ParameterId::ALL
            .into_iter()
            .find(|p| p.name() == wanted)
            .ok_or_else(|| ParameterError::UnknownParameter(s.to_string()))
    }
}

/// Every extractable parameter is static; that is what makes it extractable.
pub fn classify(_parameter: ParameterId) -> Staticity {
    Staticity::Static
}

pub fn classify_field(field: HeaderField) -> Staticity {
    match field {
        HeaderField::Parameter(p) => classify(p),
        HeaderField::Excluded(_) => Staticity::Dynamic,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Numeric value of `parameter` in one packet; `None` when its protocol is absent.
pub fn extract(headers: &ParsedHeaders, parameter: ParameterId) -> Option<f64> {
    use ParameterId::*;
    let ip = headers.ip.as_ref();
    let tcp = headers.tcp.as_ref();
    let udp = headers.udp.as_ref();
    let icmp = headers.icmp.as_ref();
    let v = match parameter {
        IpProtocol => f64::from(ip?.protocol),
        IpSrc => f64::from(u32::from(ip?.src)),
        IpDst => f64::from(u32::from(ip?.dst)),
        IpLength => f64::from(ip?.total_length),
        IpMfFlag => flag(ip?.flags.more_fragments),
        IpDfFlag => flag(ip?.flags.dont_fragment),
        IpOptionsLen => ip?.options.len() as f64,
        IpFragOffset => f64::from(ip?.fragment_offset),
        IpId => f64::from(ip?.identification),
        TcpSport => f64::from(tcp?.src_port),
        TcpDport => f64::from(tcp?.dst_port),
        TcpUrg => flag(tcp?.flags.urg),
        TcpRst => flag(tcp?.flags.rst),
        TcpAck => flag(tcp?.flags.ack),
        TcpSyn => flag(tcp?.flags.syn),
        TcpFin => flag(tcp?.flags.fin),
        TcpSeq => f64::from(tcp?.seq),
        UdpSport => f64::from(udp?.src_port),
        UdpDport => f64::from(udp?.dst_port),
        IcmpType => f64::from(icmp?.icmp_type),
        IcmpCode => f64::from(icmp?.code),
    };
    Some(v)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    /// Value of the latest packet in the bin.
    #[default]
    Last,
    Mean,
    /// Number of packets in the bin carrying the parameter.
    Count,
    Sum,
}

impl FromStr for Aggregator {
    type Err = ParameterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "last" => Ok(Aggregator::Last),
            "mean" => Ok(Aggregator::Mean),
            "count" => Ok(Aggregator::Count),
            "sum" => Ok(Aggregator::Sum),
            _ => Err(ParameterError::UnknownAggregator(s.to_string())),
        }
    }
}

/// Scalar series `s(n)`: bin `n` covers `[t0 + n*tau, t0 + (n+1)*tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSeries {
    pub parameter: Option<ParameterId>,
    pub tau_us: u64,
    pub t0_us: u64,
    pub aggregator: Aggregator,
    pub fill: f64,
    pub values: Vec<f64>,
}

impl ParameterSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tau_seconds(&self) -> f64 {
        self.tau_us as f64 / 1e6
    }

    pub fn bin_start_us(&self, n: usize) -> u64 {
        self.t0_us + n as u64 * self.tau_us
    }

    /// Writes `n,t_start_us,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "t_start_us", "value"])?;
        for (n, v) in self.values.iter().enumerate() {
            w.write_record([n.to_string(), self.bin_start_us(n).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One `{"n":..,"t_start_us":..,"value":..}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (n, v) in self.values.iter().enumerate() {
            let row = serde_json::json!({ "n": n, "t_start_us": self.bin_start_us(n), "value": v });
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Reads a series written by [`ParameterSeries::write_csv`]. The bin width
    /// is recovered from consecutive `t_start_us` values when there are two or more rows.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, ParameterError> {
        let bad = |m: String| ParameterError::BadSeriesCsv(m);
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let (Some(ti), Some(vi)) = (col("t_start_us"), col("value")) else {
            return Err(bad("expected columns n,t_start_us,value".into()));
        };
        let mut starts = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
            let t: u64 =
                field(ti).parse().map_err(|_| bad(format!("row {}: bad t_start_us {:?}", line + 1, field(ti))))?;
            let v: f64 = field(vi).parse().map_err(|_| bad(format!("row {}: bad value {:?}", line + 1, field(vi))))?;
            starts.push(t);
            values.push(v);
        }
        let tau_us = match starts.as_slice() {
            [a, b, ..] if b > a => b - a,
            [_, _, ..] => return Err(bad("t_start_us is not increasing".into())),
            _ => 1_000_000,
        };
        Ok(Self {
            parameter: None,
            tau_us,
            t0_us: starts.first().copied().unwrap_or(0),
            aggregator: Aggregator::Last,
            fill: 0.0,
            values,
        })
    }
}

pub fn tau_to_us(tau_seconds: f64) -> Result<u64, ParameterError> {
    if !tau_seconds.is_finite() || tau_seconds <= 0.0 {
        return Err(ParameterError::InvalidTau(tau_seconds));
    }
    let us = (tau_seconds * 1e6).round();
    if us < 1.0 || us > u64::MAX as f64 {
        return Err(ParameterError::InvalidTau(tau_seconds));
    }
    Ok(us as u64)
}

/// Bins `packets` into an equal-interval series.
///
/// `t0` is the earliest timestamp and the series has `(t_last - t0) / tau + 1`
/// bins, so the latest packet always lands in the final bin. Input order does
/// not matter: packets are ordered by (timestamp, value) before aggregation.
pub fn sample(
    packets: &[(u64, ParsedHeaders)],
    parameter: ParameterId,
    tau_seconds: f64,
    aggregator: Aggregator,
    fill: f64,
) -> Result<ParameterSeries, ParameterError> {
    let tau_us = tau_to_us(tau_seconds)?;
    let points: Vec<(u64, Option<f64>)> = packets.iter().map(|(ts, h)| (*ts, extract(h, parameter))).collect();
    Ok(sample_points(points, Some(parameter), tau_us, aggregator, fill))
}

/// Same as [`sample`] over already-extracted `(timestamp, value)` pairs.
pub fn sample_points(
    mut points: Vec<(u64, Option<f64>)>,
    parameter: Option<ParameterId>,
    tau_us: u64,
    aggregator: Aggregator,
    fill: f64,
) -> ParameterSeries {
    assert!(tau_us > 0, "tau_us must be positive");
    points.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| cmp_opt(a.1, b.1)));
    let mut series = ParameterSeries { parameter, tau_us, t0_us: 0, aggregator, fill, values: Vec::new() };
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return series;
    };
    let t0 = first.0;
    let n_bins = ((last.0 - t0) / tau_us + 1) as usize;
    series.t0_us = t0;

    let mut acc = vec![BinAcc::default(); n_bins];
    for (ts, value) in points {
        let Some(v) = value else { continue };
        let bin = ((ts - t0) / tau_us) as usize;
        acc[bin].push(v);
    }
    series.values = acc.iter().map(|b| b.finish(aggregator, fill)).collect();
    series
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BinAcc {
    count: u64,
    sum: f64,
    last: f64,
}

impl BinAcc {
    fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.last = v;
    }

    fn finish(&self, aggregator: Aggregator, fill: f64) -> f64 {
        if self.count == 0 {
            return fill;
        }
        match aggregator {
            Aggregator::Last => self.last,
            Aggregator::Mean => self.sum / self.count as f64,
            Aggregator::Count => self.count as f64,
            Aggregator::Sum => self.sum,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{IpFlags, Ipv4Header, TcpFlags, TcpHeader, UdpHeader};
    use std::net::Ipv4Addr;

    fn ip_packet(protocol: u8) -> ParsedHeaders {
        ParsedHeaders {
            eth_dst: [0; 6],
            eth_src: [0; 6],
            ethertype: 0x0800,
            vlan_id: None,
            ip: Some(Ipv4Header {
                version: 4,
                header_len_bytes: 20,
                tos: 0,
                total_length: 40,
                identification: 7,
                flags: IpFlags::default(),
                fragment_offset: 0,
                ttl: 64,
                protocol,
                checksum: 0,
                src: Ipv4Addr::new(10, 0, 0, 1),
                dst: Ipv4Addr::new(10, 0, 0, 2),
                options: vec![],
            }),
            tcp: None,
            udp: None,
            icmp: None,
        }
    }

    fn tcp_syn() -> ParsedHeaders {
        let mut h = ip_packet(6);
        h.tcp = Some(TcpHeader {
            src_port: 40000,
            dst_port: 80,
            seq: 1,
            ack_num: 0,
            header_len_bytes: 20,
            flags: TcpFlags::from_bits(TcpFlags::SYN),
            window: 1024,
            urgent_ptr: 0,
        });
        h
    }

    #[test]
    fn static_and_dynamic() {
        assert_eq!(classify(ParameterId::IpSrc), Staticity::Static);
        assert_eq!(classify(ParameterId::IpProtocol), Staticity::Static);
        assert_eq!(classify_field(HeaderField::Excluded(DynamicField::EthSrc)), Staticity::Dynamic);
        assert_eq!(classify_field(HeaderField::Excluded(DynamicField::Ttl)), Staticity::Dynamic);
        for p in ParameterId::ALL {
            assert_eq!(classify_field(HeaderField::Parameter(p)), Staticity::Static);
        }
    }

    #[test]
    fn table_rows_are_injective() {
        let mut rows: Vec<u8> = ParameterId::ALL.iter().filter_map(|p| p.table_row()).map(|r| r.index).collect();
        rows.sort();
        assert_eq!(rows, (1..=17).collect::<Vec<_>>());
    }

    #[test]
    fn names_round_trip() {
        for p in ParameterId::ALL {
            assert_eq!(p.name().parse::<ParameterId>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert!("MAC_SRC".parse::<ParameterId>().is_err());
    }

    #[test]
    fn extraction() {
        let syn = tcp_syn();
        assert_eq!(extract(&syn, ParameterId::TcpSyn), Some(1.0));
        assert_eq!(extract(&syn, ParameterId::TcpAck), Some(0.0));
        assert_eq!(extract(&syn, ParameterId::IpSrc), Some(167772161.0));
        let mut udp = ip_packet(17);
        udp.udp = Some(UdpHeader { src_port: 5000, dst_port: 53, length: 8 });
        assert_eq!(extract(&udp, ParameterId::TcpDport), None);
        assert_eq!(extract(&udp, ParameterId::UdpDport), Some(53.0));
    }

    fn three_packets() -> Vec<(u64, ParsedHeaders)> {
        vec![(100_000, ip_packet(6)), (200_000, ip_packet(17)), (7_000_000, ip_packet(6))]
    }

    #[test]
    fn sample_last_and_count() {
        let p = three_packets();
        let s = sample(&p, ParameterId::IpProtocol, 5.0, Aggregator::Last, 0.0).unwrap();
        assert_eq!(s.values, vec![17.0, 6.0]);
        assert_eq!(s.t0_us, 100_000);
        let c = sample(&p, ParameterId::IpProtocol, 5.0, Aggregator::Count, 0.0).unwrap();
        assert_eq!(c.values, vec![2.0, 1.0]);
        let m = sample(&p, ParameterId::IpProtocol, 5.0, Aggregator::Mean, 0.0).unwrap();
        assert_eq!(m.values, vec![11.5, 6.0]);
    }

    #[test]
    fn sample_empty_and_fill() {
        let s = sample(&[], ParameterId::IpProtocol, 5.0, Aggregator::Last, 0.0).unwrap();
        assert!(s.is_empty());
        let p = three_packets();
        let s = sample(&p, ParameterId::TcpSyn, 1.0, Aggregator::Sum, -1.0).unwrap();
        assert_eq!(s.len(), 7);
        assert!(s.values.iter().all(|v| *v == -1.0));
    }

    #[test]
    fn invalid_tau() {
        for tau in [0.0, -5.0, f64::NAN, 1e-9] {
            assert!(matches!(
                sample(&three_packets(), ParameterId::IpId, tau, Aggregator::Last, 0.0),
                Err(ParameterError::InvalidTau(_))
            ));
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = sample(&three_packets(), ParameterId::IpProtocol, 5.0, Aggregator::Last, 0.0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "n,t_start_us,value\n0,100000,17\n1,5100000,6\n");
        let back = ParameterSeries::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.tau_us, 5_000_000);
    }
}
