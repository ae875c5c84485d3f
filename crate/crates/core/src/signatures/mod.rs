//! Known-attack signatures over header parameters.
//!
//! A catalog is plain data: each [`SignatureRule`] names the parameters it
//! depends on and carries either a per-packet predicate, a reference to a
//! stateful detector, or nothing (catalog metadata only). New rules are added
//! by pushing entries onto the catalog vector.

mod catalog;
mod stateful;

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::ParsedHeaders;
use crate::parameters::ParameterId;

pub use catalog::{builtin_catalog, is_broadcast, timestamp_option_lengths};
pub use stateful::{evaluate_stateful, StatefulEngine};

#[derive(Debug, Error, PartialEq)]
pub enum SignatureError {
    #[error("OutOfOrder: timestamp {ts_us} regresses {regress_us} us behind {latest_us}")]
    OutOfOrder { ts_us: u64, latest_us: u64, regress_us: u64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleKind {
    Stateless,
    Stateful,
}

/// Stateful detectors the engine knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    SynFlood,
    FragmentOverlap,
    /// UDP fragment with MF set overlapping an earlier fragment of the same datagram.
    Bonk,
}

pub type Predicate = Arc<dyn Fn(&ParsedHeaders, &ScanConfig) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum Detection {
    Predicate(Predicate),
    Detector(DetectorKind),
    /// Listed for parameter accounting; no runtime detection.
    MetadataOnly,
}

impl fmt::Debug for Detection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detection::Predicate(_) => f.write_str("Predicate(..)"),
            Detection::Detector(k) => write!(f, "Detector({k:?})"),
            Detection::MetadataOnly => f.write_str("MetadataOnly"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SignatureRule {
    pub name: String,
    pub description: String,
    /// True when the rule was rebuilt from public attack write-ups rather than
    /// taken from an explicitly stated signature.
    pub reconstructed: bool,
    /// Table parameters attributed to this signature.
    pub parameters_used: BTreeSet<ParameterId>,
    pub kind: RuleKind,
    pub detection: Detection,
    /// Also raise one summary alert when a single source probes more than
    /// `scan_threshold` distinct destination ports within `scan_window_s`.
    pub sweep: bool,
}

impl SignatureRule {
    pub fn has_runtime(&self) -> bool {
        !matches!(self.detection, Detection::MetadataOnly)
    }
}

/// Thresholds and context shared by all rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Prefix length used to decide whether a destination is a broadcast address.
    pub netmask_prefix: u8,
    pub syn_threshold: usize,
    pub syn_window_s: f64,
    pub scan_threshold: usize,
    pub scan_window_s: f64,
    pub fragment_capacity: usize,
    pub out_of_order_tolerance_us: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            netmask_prefix: 24,
            syn_threshold: 100,
            syn_window_s: 5.0,
            scan_threshold: 20,
            scan_window_s: 5.0,
            fragment_capacity: 4096,
            out_of_order_tolerance_us: 1_000,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), SignatureError> {
        let bad = |m: String| Err(SignatureError::InvalidConfig(m));
        if self.netmask_prefix > 32 {
            return bad(format!("netmask prefix {} exceeds 32", self.netmask_prefix));
        }
        for (name, w) in [("syn window", self.syn_window_s), ("scan window", self.scan_window_s)] {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("{name} must be a positive number of seconds, got {w}"));
            }
        }
        if self.fragment_capacity == 0 {
            return bad("fragment cache capacity must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn syn_window_us(&self) -> u64 {
        (self.syn_window_s * 1e6).round() as u64
    }

    pub(crate) fn scan_window_us(&self) -> u64 {
        (self.scan_window_s * 1e6).round() as u64
    }
}

/// One rule firing. Serialized as a JSON line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Alert {
    pub rule: String,
    pub ts_us: u64,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub detail: String,
}

pub fn write_alerts_jsonl<W: Write>(mut out: W, alerts: &[Alert]) -> std::io::Result<()> {
    for a in alerts {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// `rule,ts_us,src,dst,detail` rows.
pub fn write_alerts_csv<W: Write>(out: W, alerts: &[Alert]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for a in alerts {
        w.serialize(a)?;
    }
    if alerts.is_empty() {
        w.write_record(["rule", "ts_us", "src", "dst", "detail"])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn describe(h: &ParsedHeaders) -> String {
    let Some(ip) = &h.ip else {
        return format!("ethertype=0x{:04x}", h.ethertype);
    };
    if let Some(t) = &h.tcp {
        format!("tcp {}->{} flags=0x{:02x}", t.src_port, t.dst_port, t.flags.bits())
    } else if let Some(u) = &h.udp {
        format!("udp {}->{}", u.src_port, u.dst_port)
    } else if let Some(i) = &h.icmp {
        format!("icmp type={} code={}", i.icmp_type, i.code)
    } else {
        format!("proto={} frag_off={} mf={}", ip.protocol, ip.fragment_offset, ip.flags.more_fragments as u8)
    }
}

/// Alerts from every predicate rule matching one packet.
pub fn evaluate_stateless(
    rules: &[SignatureRule],
    headers: &ParsedHeaders,
    ts_us: u64,
    config: &ScanConfig,
) -> Vec<Alert> {
    let Some(ip) = &headers.ip else {
        return Vec::new();
    };
    rules
        .iter()
        .filter_map(|r| match &r.detection {
            Detection::Predicate(p) if p(headers, config) => {
                Some(Alert { rule: r.name.clone(), ts_us, src: ip.src, dst: ip.dst, detail: describe(headers) })
            }
            _ => None,
        })
        .collect()
}

/// Stateless and stateful alerts over an ordered packet stream, in stream order.
pub fn scan_stream<'a, I>(
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
        let stateful = engine.process(ts, h)?;
        alerts.extend(evaluate_stateless(rules, h, ts, config));
        alerts.extend(stateful);
    }
    Ok(alerts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyRow {
    pub index: u8,
    pub protocol: &'static str,
    pub parameter: &'static str,
    #[serde(skip)]
    pub id: ParameterId,
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyTable {
    pub rows: Vec<FrequencyRow>,
}

impl FrequencyTable {
    pub fn get(&self, id: ParameterId) -> Option<usize> {
        self.rows.iter().find(|r| r.id == id).map(|r| r.frequency)
    }

    /// `Number,Protocol,Parameter,Frequency` rows in table order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["Number", "Protocol", "Parameter", "Frequency"])?;
        for r in &self.rows {
            w.write_record([r.index.to_string(), r.protocol.into(), r.parameter.into(), r.frequency.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How many catalog rules use each table parameter, metadata-only rules included.
pub fn frequency_table(catalog: &[SignatureRule]) -> FrequencyTable {
    let mut rows: Vec<FrequencyRow> = ParameterId::ALL
        .into_iter()
        .filter_map(|id| {
            id.table_row().map(|row| FrequencyRow {
                index: row.index,
                protocol: row.protocol,
                parameter: row.name,
                id,
                frequency: catalog.iter().filter(|r| r.parameters_used.contains(&id)).count(),
            })
        })
        .collect();
    rows.sort_by_key(|r| r.index);
    FrequencyTable { rows }
}
