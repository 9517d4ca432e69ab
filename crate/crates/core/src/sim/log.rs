//! Frame-log and metrics serialization.
//!
//! The frame log is JSON lines: one object per on-air frame with the
//! capture time, the raw bytes (hex), the decoded header fields when the
//! frame decodes cleanly, and the ground-truth station id as a sidecar
//! field that never appears in the on-air bytes. Metrics are a CSV with a
//! fixed column order.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::adversary::{Observation, TruthLink};
use crate::frame::FrameType;
use crate::mac::MacAddress;

/// One frame-log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoggedFrame {
    /// Microseconds since simulation start.
    pub t: u64,
    /// Raw on-air octets, hex-encoded; corruption and all.
    pub bytes: String,
    #[serde(rename = "type")]
    pub ftype: Option<FrameType>,
    pub addr1: Option<String>,
    pub addr2: Option<String>,
    pub addr3: Option<String>,
    pub sn: Option<u16>,
    pub pn: Option<u64>,
    pub len: usize,
    /// Ground truth: transmitting station id; None for AP or injected
    /// frames.
    pub station: Option<usize>,
}

impl LoggedFrame {
    pub fn new(t: u64, bytes: &[u8], station: Option<usize>) -> LoggedFrame {
        let decoded = crate::frame::decode_frame(bytes).ok();
        LoggedFrame {
            t,
            bytes: hex::encode(bytes),
            ftype: decoded.as_ref().map(|f| f.ftype),
            addr1: decoded.as_ref().map(|f| f.addr1.to_string()),
            addr2: decoded.as_ref().and_then(|f| f.addr2).map(|a| a.to_string()),
            addr3: decoded.as_ref().and_then(|f| f.addr3).map(|a| a.to_string()),
            sn: decoded.as_ref().and_then(|f| f.seq).map(|s| s.sn),
            pn: decoded.as_ref().and_then(|f| f.ccmp).map(|c| c.pn),
            len: bytes.len(),
            station,
        }
    }

    pub fn write_jsonl(&self, w: &mut dyn Write) -> io::Result<()> {
        serde_json::to_writer(&mut *w, self)?;
        w.write_all(b"\n")
    }

    /// The sniffer's view of this line: built from the bytes alone.
    pub fn observation(&self) -> Option<Observation> {
        let bytes = hex::decode(&self.bytes).ok()?;
        Observation::from_air(self.t, &bytes)
    }
}

/// Reads a JSONL frame log.
pub fn read_frame_log(r: impl io::Read) -> io::Result<Vec<LoggedFrame>> {
    let mut out = Vec::new();
    for line in io::BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LoggedFrame = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        out.push(entry);
    }
    Ok(out)
}

/// FCS-valid observations from a frame log, in capture order.
pub fn observations_from_log(entries: &[LoggedFrame]) -> Vec<Observation> {
    let mut obs: Vec<Observation> = entries.iter().filter_map(LoggedFrame::observation).collect();
    obs.sort_by_key(|o| o.t);
    obs
}

/// Reconstructs ground-truth address successions from the sidecar station
/// ids: per station, consecutive distinct transmitter addresses form the
/// true links. The base -> first-rerandomized hand-off at association is
/// skipped structurally: an address that never carried a data frame was a
/// handshake-only identity, not a rotated one.
pub fn truth_from_log(entries: &[LoggedFrame]) -> Vec<TruthLink> {
    use std::collections::BTreeMap;
    struct Gen {
        addr: MacAddress,
        first_t: u64,
        carried_data: bool,
    }
    let mut seq: BTreeMap<usize, Vec<Gen>> = BTreeMap::new();
    for e in entries {
        let (Some(station), Some(addr2)) = (e.station, e.addr2.as_deref()) else {
            continue;
        };
        let Ok(addr) = addr2.parse::<MacAddress>() else {
            continue;
        };
        let chain = seq.entry(station).or_default();
        if chain.last().map(|g| g.addr) != Some(addr) {
            chain.push(Gen {
                addr,
                first_t: e.t,
                carried_data: false,
            });
        }
        if e.ftype == Some(FrameType::Data) {
            chain.last_mut().unwrap().carried_data = true;
        }
    }
    let mut truth = Vec::new();
    for (station, chain) in seq {
        for pair in chain.windows(2) {
            if !pair[0].carried_data {
                continue;
            }
            truth.push(TruthLink {
                boundary: pair[1].first_t / 1_000_000,
                station,
                old: pair[0].addr,
                new: pair[1].addr,
            });
        }
    }
    truth.sort_by_key(|l| (l.boundary, l.station));
    truth
}

/// One metrics row per interval; the CSV columns follow the field order
/// exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub interval: u64,
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_retried: u64,
    pub acks: u64,
    pub rotations: u64,
    pub timing_accuracy: Option<f64>,
    pub sn_accuracy: Option<f64>,
    pub pn_accuracy: Option<f64>,
    pub anonymity_set: Option<usize>,
    pub nonce_reuse: u64,
}

pub const METRICS_HEADER: &str = "interval,frames_sent,frames_delivered,frames_retried,acks,rotations,timing_accuracy,sn_accuracy,pn_accuracy,anonymity_set,nonce_reuse";

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_metrics_csv(rows: &[MetricsRow], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.interval,
            r.frames_sent,
            r.frames_delivered,
            r.frames_retried,
            r.acks,
            r.rotations,
            opt_f64(r.timing_accuracy),
            opt_f64(r.sn_accuracy),
            opt_f64(r.pn_accuracy),
            r.anonymity_set.map(|n| n.to_string()).unwrap_or_default(),
            r.nonce_reuse,
        )?;
    }
    Ok(())
}
