//! The deterministic discrete-event runner.
//!
//! A single-threaded event loop drives association, traffic, rotation
//! boundaries, probe injection and expiry over a shared perfect channel.
//! Every random draw comes from seeded generators in a fixed order, so an
//! identical (config, seed) pair produces byte-identical frame logs.
//!
//! Time is integer microseconds. A MAC exchange (RTS/CTS, data, ACK,
//! retries) runs inside one event with SIFS-stepped timestamps; the
//! channel has no contention model beyond that turn-taking.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashSet};
use std::collections::BinaryHeap;
use std::io::{self, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{
    self, AnonymityReport, Boundary, LinkScore, Observation, TruthLink,
};
use crate::endpoint::{
    associate, AblationFlags, ApNode, AssocState, KeyOracle, NodeError, RandMode, Sender,
    StationNode,
};
use crate::frame::{encode_frame, Frame};
use crate::mac::MacAddress;
use crate::rerand::{Ptk, RerandError};
use crate::table::StationId;

use super::config::{Attack, ConfigError, ScenarioConfig};
use super::config::TrafficModel;
use super::log::{LoggedFrame, MetricsRow};

/// Short interframe space between the steps of one exchange.
pub const SIFS_US: u64 = 10;
/// How long a transmitter waits for a missing ACK before retrying.
pub const ACK_TIMEOUT_US: u64 = 1_000;
/// Retransmissions after the first attempt.
pub const RETRY_LIMIT: u32 = 4;
/// Data frame header + trailer octets around the payload.
pub const DATA_OVERHEAD_BYTES: usize = 36;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rerand(#[from] RerandError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<io::Error> for SimError {
    fn from(e: io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

/// What an injected probe aims at, resolved at injection time.
#[derive(Debug, Clone, Copy)]
pub enum ProbeTarget {
    /// The station's base address, as harvested from its handshake.
    BaseOf(usize),
    /// The station's live re-randomized address.
    RerandOf(usize),
    Addr(MacAddress),
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeSpec {
    pub t_us: u64,
    pub target: ProbeTarget,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeResult {
    pub t_us: u64,
    pub target: MacAddress,
    pub acked: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DisconnectSpec {
    pub t_us: u64,
    pub sta: usize,
    pub silent: bool,
}

/// An upper-layer delivery, in base-address view.
#[derive(Debug, Clone, Copy)]
pub struct Delivery {
    pub t: u64,
    pub src: MacAddress,
    pub dst: MacAddress,
    pub len: usize,
    pub station: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Counters {
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_retried: u64,
    pub frames_dropped: u64,
    /// Drop causes; they partition `frames_dropped`.
    pub drop_retry_exhausted: u64,
    pub drop_addr_mismatch: u64,
    pub drop_stale: u64,
    pub drop_anomalous_base: u64,
    pub rx_fcs_drops: u64,
    pub acks: u64,
    /// Station rotation events executed.
    pub rotations: u64,
    /// Boundary events executed (one per interval crossing).
    pub boundary_events: u64,
    pub expired_stations: u64,
    pub nonce_reuse: u64,
    /// Boundary events that had happened when the first PN reuse was seen.
    pub boundaries_at_first_reuse: Option<u64>,
}

/// Post-run linker evaluation.
#[derive(Debug, Clone, Default)]
pub struct LinkerScores {
    pub timing: Option<LinkScore>,
    pub sn: Option<LinkScore>,
    pub pn: Option<LinkScore>,
    pub anonymity: Option<AnonymityReport>,
    pub nonce_prune: Option<AnonymityReport>,
    pub wpa2: Option<LinkScore>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub counters: Counters,
    pub truth: Vec<TruthLink>,
    /// Boundaries with a full observation window inside the run.
    pub boundaries: Vec<Boundary>,
    pub observations: Option<Vec<Observation>>,
    pub deliveries: Option<Vec<Delivery>>,
    pub probe_results: Vec<ProbeResult>,
    pub scores: LinkerScores,
    pub ap_mac: MacAddress,
    /// Initial base address per station.
    pub initial_bases: Vec<MacAddress>,
    /// (base, PTK) pairs; only populated under `wpa2_mode`.
    pub station_keys: Vec<(MacAddress, Ptk)>,
    /// Handshake windows (start, end) in microseconds.
    pub assoc_windows: Vec<(u64, u64)>,
}

/// Per-run knobs that are not part of the scenario itself.
#[derive(Default)]
pub struct RunOptions<'a> {
    pub keep_observations: bool,
    pub keep_deliveries: bool,
    pub frame_writer: Option<&'a mut dyn Write>,
    pub probes: Vec<ProbeSpec>,
    pub disconnects: Vec<DisconnectSpec>,
}

#[derive(Debug, Clone)]
enum Event {
    Associate { sta: usize },
    Uplink { sta: usize },
    Downlink { sta: usize },
    Boundary { k: u64 },
    StationRotate { sta: usize, u: u64 },
    Probe { idx: usize },
    Disconnect { idx: usize },
    Expire,
}

struct Queued {
    t: u64,
    seq: u64,
    ev: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t, self.seq).cmp(&(other.t, other.seq))
    }
}

enum RxSide {
    Ap,
    Station(usize),
}

struct Simulation<'a> {
    cfg: ScenarioConfig,
    duration_us: u64,
    interval_us: u64,
    ap: ApNode,
    stations: Vec<StationNode>,
    sid: Vec<Option<StationId>>,
    oracle: KeyOracle<ChaCha8Rng>,
    base_rng: ChaCha8Rng,
    traffic_rng: Vec<ChaCha8Rng>,
    downlink_rng: Vec<ChaCha8Rng>,
    loss_rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
    payload_len: usize,

    writer: Option<&'a mut dyn Write>,
    keep_obs: bool,
    observations: Vec<Observation>,
    keep_deliv: bool,
    deliveries: Vec<Delivery>,
    counters: Counters,
    rows: BTreeMap<u64, MetricsRow>,
    truth: Vec<TruthLink>,
    boundaries: Vec<Boundary>,
    assoc_windows: Vec<(u64, u64)>,
    probes: Vec<ProbeSpec>,
    probe_results: Vec<ProbeResult>,
    disconnects: Vec<DisconnectSpec>,
    /// Seen PNs per (station, direction): 0 = uplink, 1 = downlink.
    pn_seen: Vec<[HashSet<u64>; 2]>,
    station_keys: Vec<(MacAddress, Ptk)>,
    initial_bases: Vec<MacAddress>,
    adversary_mac: MacAddress,
}

const AP_MAC: MacAddress = MacAddress([0x02, 0xA9, 0x00, 0x00, 0x00, 0x01]);
const ADVERSARY_MAC: MacAddress = MacAddress([0x06, 0xAD, 0x00, 0x00, 0x00, 0x01]);

impl<'a> Simulation<'a> {
    fn new(cfg: &ScenarioConfig, opts: RunOptions<'a>) -> Result<Simulation<'a>, SimError> {
        let params = cfg.params()?;
        let ablation = AblationFlags {
            no_sn_reset: cfg.no_sn_reset,
            no_pn_reset: cfg.no_pn_reset,
        };
        let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
        let oracle = KeyOracle::new(ChaCha8Rng::seed_from_u64(master.next_u64()));
        let mut base_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let traffic_rng: Vec<ChaCha8Rng> = (0..cfg.n_stations)
            .map(|_| ChaCha8Rng::seed_from_u64(master.next_u64()))
            .collect();
        let downlink_rng: Vec<ChaCha8Rng> = (0..cfg.n_stations)
            .map(|_| ChaCha8Rng::seed_from_u64(master.next_u64()))
            .collect();
        let loss_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let ap_nonce_seed = master.next_u64();

        let mut used: HashSet<MacAddress> = HashSet::new();
        used.insert(AP_MAC);
        used.insert(ADVERSARY_MAC);
        let mut stations = Vec::with_capacity(cfg.n_stations);
        let mut initial_bases = Vec::with_capacity(cfg.n_stations);
        for i in 0..cfg.n_stations {
            let base = fresh_mac(&mut base_rng, &mut used);
            initial_bases.push(base);
            let mut st = StationNode::new(
                i,
                base,
                cfg.mode,
                params,
                cfg.nonce_mode,
                master.next_u64(),
                ablation,
            );
            st.rts_threshold = cfg.rts_threshold;
            stations.push(st);
        }
        let ap = ApNode::new(
            AP_MAC,
            crate::table::DEFAULT_CAPACITY,
            params,
            cfg.mode,
            cfg.nonce_mode,
            ap_nonce_seed,
            ablation,
        );

        let duration_us = cfg.duration_secs * 1_000_000;
        let interval_us = cfg.interval_secs * 1_000_000;
        let payload_len = cfg.frame_len_bytes.saturating_sub(DATA_OVERHEAD_BYTES);

        let mut sim = Simulation {
            cfg: cfg.clone(),
            duration_us,
            interval_us,
            ap,
            sid: vec![None; stations.len()],
            stations,
            oracle,
            base_rng,
            traffic_rng,
            downlink_rng,
            loss_rng,
            queue: BinaryHeap::new(),
            next_seq: 0,
            payload_len,
            writer: opts.frame_writer,
            keep_obs: opts.keep_observations,
            observations: Vec::new(),
            keep_deliv: opts.keep_deliveries,
            deliveries: Vec::new(),
            counters: Counters::default(),
            rows: BTreeMap::new(),
            truth: Vec::new(),
            boundaries: Vec::new(),
            assoc_windows: Vec::new(),
            probes: opts.probes,
            probe_results: Vec::new(),
            disconnects: opts.disconnects,
            pn_seen: (0..cfg.n_stations)
                .map(|_| [HashSet::new(), HashSet::new()])
                .collect(),
            station_keys: Vec::new(),
            initial_bases,
            adversary_mac: ADVERSARY_MAC,
        };

        // Pre-seed one metrics row per interval.
        for u in 0..=cfg.duration_secs / cfg.interval_secs {
            sim.rows.entry(u).or_insert(MetricsRow {
                interval: u,
                ..Default::default()
            });
        }

        sim.schedule_initial_events();
        Ok(sim)
    }

    fn push(&mut self, t: u64, ev: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued { t, seq, ev }));
    }

    fn schedule_initial_events(&mut self) {
        for i in 0..self.stations.len() {
            self.push(10_000 + i as u64 * 5_000, Event::Associate { sta: i });
        }
        match self.cfg.mode {
            RandMode::SyncRuntime | RandMode::PerConnection => {
                let mut k = 1;
                while k * self.interval_us <= self.duration_us {
                    self.push(k * self.interval_us, Event::Boundary { k });
                    k += 1;
                }
            }
            RandMode::UnsyncRuntime => {
                let n = self.stations.len().max(1) as u64;
                for i in 0..self.stations.len() {
                    let offset = i as u64 * self.interval_us / n;
                    let mut k = 1;
                    while k * self.interval_us + offset <= self.duration_us {
                        self.push(
                            k * self.interval_us + offset,
                            Event::StationRotate { sta: i, u: k },
                        );
                        k += 1;
                    }
                }
            }
            RandMode::Off => {}
        }
        let mut t = self.interval_us;
        while t <= self.duration_us {
            self.push(t, Event::Expire);
            t += self.interval_us;
        }
        for idx in 0..self.probes.len() {
            self.push(self.probes[idx].t_us, Event::Probe { idx });
        }
        for idx in 0..self.disconnects.len() {
            self.push(self.disconnects[idx].t_us, Event::Disconnect { idx });
        }
    }

    fn interval_of(&self, t: u64) -> u64 {
        t / self.interval_us
    }

    fn row(&mut self, u: u64) -> &mut MetricsRow {
        self.rows.entry(u).or_insert(MetricsRow {
            interval: u,
            ..Default::default()
        })
    }

    /// Encodes a frame and applies the channel loss model: a corrupted
    /// transmission has one random bit flipped, so every receiver
    /// (including the sniffer) sees it fail the FCS.
    fn air_bytes(&mut self, frame: &Frame) -> Result<(Vec<u8>, bool), SimError> {
        let mut bytes = encode_frame(frame).map_err(NodeError::from)?;
        let mut corrupted = false;
        if self.cfg.loss_rate > 0.0 && self.loss_rng.gen::<f64>() < self.cfg.loss_rate {
            let bit = self.loss_rng.gen_range(0..bytes.len() * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
            corrupted = true;
        }
        Ok((bytes, corrupted))
    }

    fn log_air(&mut self, t: u64, bytes: &[u8], station: Option<usize>) -> Result<(), SimError> {
        if let Some(w) = self.writer.as_deref_mut() {
            LoggedFrame::new(t, bytes, station).write_jsonl(w)?;
        }
        if self.keep_obs {
            if let Some(obs) = Observation::from_air(t, bytes) {
                self.observations.push(obs);
            }
        }
        Ok(())
    }

    fn audit_pn(&mut self, sta: usize, direction: usize, pn: u64, t: u64) {
        if !self.pn_seen[sta][direction].insert(pn) {
            self.counters.nonce_reuse += 1;
            if self.counters.boundaries_at_first_reuse.is_none() {
                self.counters.boundaries_at_first_reuse = Some(self.counters.boundary_events);
            }
            let u = self.interval_of(t);
            self.row(u).nonce_reuse += 1;
        }
    }

    fn fresh_base(&mut self) -> MacAddress {
        let mut used: HashSet<MacAddress> =
            self.stations.iter().map(|s| s.base_mac()).collect();
        used.insert(AP_MAC);
        used.insert(self.adversary_mac);
        fresh_mac(&mut self.base_rng, &mut used)
    }

    fn run_events(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(q)) = self.queue.pop() {
            if q.t > self.duration_us {
                continue;
            }
            self.handle(q.t, q.ev)?;
        }
        Ok(())
    }

    fn handle(&mut self, t: u64, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::Associate { sta } => self.do_associate(t, sta),
            Event::Uplink { sta } => self.do_uplink(t, sta),
            Event::Downlink { sta } => self.do_downlink(t, sta),
            Event::Boundary { k } => self.do_boundary(t, k),
            Event::StationRotate { sta, u } => self.do_station_rotate(t, sta, u),
            Event::Probe { idx } => self.do_probe(t, idx),
            Event::Disconnect { idx } => self.do_disconnect(t, idx),
            Event::Expire => {
                let timeout = self.cfg.inactivity_timeout_secs() * 1_000_000;
                let n = self.ap.expire_inactive(t, timeout);
                self.counters.expired_stations += n as u64;
                Ok(())
            }
        }
    }

    fn do_associate(&mut self, t: u64, sta: usize) -> Result<(), SimError> {
        let t_epoch = t / 1_000_000;
        let ex = associate(
            &mut self.stations[sta],
            &mut self.ap,
            &mut self.oracle,
            t_epoch,
            t,
        )?;
        self.sid[sta] = Some(ex.station_id);
        if self.cfg.wpa2_mode {
            let rec = self.ap.table.get(ex.station_id).unwrap();
            self.station_keys.push((rec.base, rec.ptk));
        }
        let mut ft = t;
        for (sender, frame) in &ex.frames {
            let station = match sender {
                Sender::Station(i) => Some(*i),
                Sender::Ap => None,
            };
            let bytes = encode_frame(frame).map_err(NodeError::from)?;
            self.log_air(ft, &bytes, station)?;
            if frame.ftype == crate::frame::FrameType::Ack {
                self.counters.acks += 1;
                let u = self.interval_of(ft);
                self.row(u).acks += 1;
            }
            ft += SIFS_US;
        }
        self.assoc_windows.push((t, ft));
        self.schedule_uplink(t.max(ft), sta);
        self.schedule_downlink(t.max(ft), sta);
        Ok(())
    }

    fn next_gap_us(rng: &mut ChaCha8Rng, rate: f64, model: TrafficModel) -> Option<u64> {
        if rate <= 0.0 {
            return None;
        }
        let mean_us = 1_000_000.0 / rate;
        let gap = match model {
            TrafficModel::Poisson => {
                let u: f64 = rng.gen();
                -(1.0 - u).ln() * mean_us
            }
            TrafficModel::Constant => mean_us,
        };
        Some((gap as u64).max(1))
    }

    fn schedule_uplink(&mut self, now: u64, sta: usize) {
        let model = self.cfg.traffic_model;
        let rate = self.cfg.traffic_rate;
        if let Some(gap) = Self::next_gap_us(&mut self.traffic_rng[sta], rate, model) {
            let t = now + gap;
            if t <= self.duration_us {
                self.push(t, Event::Uplink { sta });
            }
        }
    }

    fn schedule_downlink(&mut self, now: u64, sta: usize) {
        let model = self.cfg.traffic_model;
        let rate = self.cfg.downlink_rate();
        if let Some(gap) = Self::next_gap_us(&mut self.downlink_rng[sta], rate, model) {
            let t = now + gap;
            if t <= self.duration_us {
                self.push(t, Event::Downlink { sta });
            }
        }
    }

    fn do_uplink(&mut self, t: u64, sta: usize) -> Result<(), SimError> {
        if self.stations[sta].assoc_state != AssocState::Associated {
            return Ok(());
        }
        let tx = self.stations[sta].build_data(vec![0u8; self.payload_len])?;
        let pn = tx.frame.ccmp.expect("data frame carries a PN").pn;
        self.audit_pn(sta, 0, pn, t);
        self.transact(t, tx.rts, tx.frame, Some(sta), RxSide::Ap)?;
        self.schedule_uplink(t, sta);
        Ok(())
    }

    fn do_downlink(&mut self, t: u64, sta: usize) -> Result<(), SimError> {
        let Some(id) = self.sid[sta] else {
            return Ok(());
        };
        if self.ap.table.get(id).is_none() {
            return Ok(());
        }
        let frame = self.ap.build_data_to(id, vec![0u8; self.payload_len])?;
        let pn = frame.ccmp.expect("data frame carries a PN").pn;
        self.audit_pn(sta, 1, pn, t);
        self.transact(t, None, frame, None, RxSide::Station(sta))?;
        self.schedule_downlink(t, sta);
        Ok(())
    }

    fn rx_accepts(&self, side: &RxSide, ra: MacAddress) -> bool {
        match side {
            RxSide::Ap => self.ap.accepts(ra),
            RxSide::Station(i) => self.stations[*i].accepts(ra),
        }
    }

    /// One MAC exchange with retries. Returns after the frame is ACKed or
    /// the retry budget is exhausted.
    fn transact(
        &mut self,
        t: u64,
        rts: Option<Frame>,
        data: Frame,
        sender_station: Option<usize>,
        receiver: RxSide,
    ) -> Result<(), SimError> {
        let u_start = self.interval_of(t);
        self.counters.frames_sent += 1;
        self.row(u_start).frames_sent += 1;

        let ta = data.addr2.expect("data frames carry a TA");
        let sn = data.seq.expect("data frames carry a SN").sn;
        let receiver_truth = match receiver {
            RxSide::Ap => None,
            RxSide::Station(i) => Some(i),
        };

        let mut tcur = t;
        let mut delivered = false;
        let mut acked = false;

        for attempt in 0..=RETRY_LIMIT {
            if attempt > 0 {
                self.counters.frames_retried += 1;
                let u = self.interval_of(tcur);
                self.row(u).frames_retried += 1;
            }

            if let Some(rts_frame) = &rts {
                let (bytes, corrupted) = self.air_bytes(rts_frame)?;
                self.log_air(tcur, &bytes, sender_station)?;
                tcur += SIFS_US;
                if corrupted || !self.rx_accepts(&receiver, rts_frame.addr1) {
                    self.counters.rx_fcs_drops += u64::from(corrupted);
                    tcur += ACK_TIMEOUT_US;
                    continue;
                }
                let cts = Frame::cts(rts_frame.addr2.expect("RTS carries a TA"), 0);
                let (bytes, corrupted) = self.air_bytes(&cts)?;
                self.log_air(tcur, &bytes, receiver_truth)?;
                tcur += SIFS_US;
                if corrupted {
                    self.counters.rx_fcs_drops += 1;
                    tcur += ACK_TIMEOUT_US;
                    continue;
                }
            }

            let (bytes, corrupted) = self.air_bytes(&data)?;
            self.log_air(tcur, &bytes, sender_station)?;
            tcur += SIFS_US;
            if corrupted {
                self.counters.rx_fcs_drops += 1;
                tcur += ACK_TIMEOUT_US;
                continue;
            }
            if !self.rx_accepts(&receiver, data.addr1) {
                tcur += ACK_TIMEOUT_US;
                continue;
            }

            // The receiver's hardware acknowledges; fresh frames go up the
            // stack, retransmissions are ACKed but not re-delivered.
            let fresh = match receiver {
                RxSide::Ap => self.ap.rx_dedupe.note(ta, sn),
                RxSide::Station(i) => self.stations[i].rx_dedupe.note(ta, sn),
            };
            if fresh && !delivered {
                delivered = self.deliver(tcur, &receiver, &data, sender_station)?;
            }
            if let RxSide::Station(i) = receiver {
                // The AP hears the station's ACK: activity for the
                // inactivity timer even on pure-downlink flows.
                if let Some(id) = self.sid[i] {
                    self.ap.table.touch(id, tcur);
                }
            }

            let ack = Frame::ack(ta, 0);
            let (ack_bytes, ack_corrupted) = self.air_bytes(&ack)?;
            self.log_air(tcur, &ack_bytes, receiver_truth)?;
            self.counters.acks += 1;
            let u = self.interval_of(tcur);
            self.row(u).acks += 1;
            tcur += SIFS_US;
            if ack_corrupted {
                self.counters.rx_fcs_drops += 1;
                tcur += ACK_TIMEOUT_US;
                continue;
            }
            acked = true;
            break;
        }

        if delivered {
            self.counters.frames_delivered += 1;
            self.row(u_start).frames_delivered += 1;
        } else {
            self.counters.frames_dropped += 1;
            if !acked {
                if self.rx_accepts(&receiver, data.addr1) {
                    self.counters.drop_retry_exhausted += 1;
                } else {
                    // Nothing on the air answers to this receiver address:
                    // the rotation outran the sender.
                    self.counters.drop_addr_mismatch += 1;
                }
            }
        }
        Ok(())
    }

    /// Hands a data frame to the receiver's upper stack. Returns false
    /// when the frame is dropped above the MAC (stale or anomalous SA).
    fn deliver(
        &mut self,
        t: u64,
        receiver: &RxSide,
        data: &Frame,
        sender_station: Option<usize>,
    ) -> Result<bool, SimError> {
        match receiver {
            RxSide::Ap => {
                let (converted, outcome) = self.ap.rx_frame(data.clone(), t);
                match outcome {
                    crate::table::RxOutcome::Converted(_) => {
                        if self.keep_deliv {
                            self.deliveries.push(Delivery {
                                t,
                                src: converted.addr2.expect("data frames carry a SA"),
                                dst: converted.addr1,
                                len: converted.payload.len(),
                                station: sender_station,
                            });
                        }
                        Ok(true)
                    }
                    crate::table::RxOutcome::Stale => {
                        self.counters.drop_stale += 1;
                        Ok(false)
                    }
                    crate::table::RxOutcome::AnomalousBase(_) => {
                        self.counters.drop_anomalous_base += 1;
                        Ok(false)
                    }
                    crate::table::RxOutcome::Unknown => Ok(false),
                }
            }
            RxSide::Station(i) => {
                let upper = self.stations[*i].rx_to_upper(data.clone());
                if self.keep_deliv {
                    self.deliveries.push(Delivery {
                        t,
                        src: upper.addr2.expect("data frames carry a SA"),
                        dst: upper.addr1,
                        len: upper.payload.len(),
                        station: Some(*i),
                    });
                }
                Ok(true)
            }
        }
    }

    fn record_rotation(&mut self, t: u64, sta: usize, u: u64, old: MacAddress, new: MacAddress) {
        self.counters.rotations += 1;
        self.row(u).rotations += 1;
        if t < self.duration_us {
            self.truth.push(TruthLink {
                boundary: u,
                station: sta,
                old,
                new,
            });
        }
    }

    fn do_boundary(&mut self, t: u64, k: u64) -> Result<(), SimError> {
        self.counters.boundary_events += 1;
        if t < self.duration_us {
            self.boundaries.push(Boundary { index: k, t });
        }
        match self.cfg.mode {
            RandMode::PerConnection => self.do_reconnect_boundary(t, k),
            _ => {
                self.ap.rotate_all(k)?;
                for i in 0..self.stations.len() {
                    let skew_us = self.cfg.skew_ms(i) * 1_000;
                    if skew_us == 0 {
                        if let Some((old, new)) = self.stations[i].rotate_to(k)? {
                            self.record_rotation(t, i, k, old, new);
                        }
                    } else {
                        self.push(t + skew_us, Event::StationRotate { sta: i, u: k });
                    }
                }
                Ok(())
            }
        }
    }

    fn do_station_rotate(&mut self, t: u64, sta: usize, u: u64) -> Result<(), SimError> {
        // In unsync mode each station's boundary also rotates its AP table
        // entry; in (skewed) sync mode the AP already rotated at the exact
        // boundary.
        if self.cfg.mode == RandMode::UnsyncRuntime {
            self.counters.boundary_events += 1;
            if t < self.duration_us {
                self.boundaries.push(Boundary { index: u, t });
            }
            if let Some(id) = self.sid[sta] {
                self.ap.rotate_station(id, u)?;
            }
        }
        if let Some((old, new)) = self.stations[sta].rotate_to(u)? {
            self.record_rotation(t, sta, u, old, new);
        }
        Ok(())
    }

    /// Forced-reconnect baseline: tear down and rebuild every connection
    /// with a fresh base address at the boundary.
    fn do_reconnect_boundary(&mut self, t: u64, k: u64) -> Result<(), SimError> {
        for i in 0..self.stations.len() {
            if self.stations[i].assoc_state != AssocState::Associated {
                continue;
            }
            let old_base = self.stations[i].base_mac();
            let mut ft = t + i as u64 * 500;
            if let Some(disassoc) = self.stations[i].disconnect(false)? {
                let bytes = encode_frame(&disassoc).map_err(NodeError::from)?;
                self.log_air(ft, &bytes, Some(i))?;
                ft += SIFS_US;
                let ack = Frame::ack(disassoc.addr2.expect("disassoc carries a TA"), 0);
                let bytes = encode_frame(&ack).map_err(NodeError::from)?;
                self.log_air(ft, &bytes, None)?;
                ft += SIFS_US;
            }
            if let Some(id) = self.sid[i].take() {
                self.ap.remove_station(id);
            }
            let new_base = self.fresh_base();
            self.stations[i].set_base(new_base);
            let t_epoch = ft / 1_000_000;
            let ex = associate(
                &mut self.stations[i],
                &mut self.ap,
                &mut self.oracle,
                t_epoch,
                ft,
            )?;
            self.sid[i] = Some(ex.station_id);
            let start = ft;
            for (sender, frame) in &ex.frames {
                let station = match sender {
                    Sender::Station(s) => Some(*s),
                    Sender::Ap => None,
                };
                let bytes = encode_frame(frame).map_err(NodeError::from)?;
                self.log_air(ft, &bytes, station)?;
                ft += SIFS_US;
            }
            self.assoc_windows.push((start, ft));
            self.record_rotation(t, i, k, old_base, new_base);
        }
        Ok(())
    }

    fn do_probe(&mut self, t: u64, idx: usize) -> Result<(), SimError> {
        let spec = self.probes[idx];
        let target = match spec.target {
            ProbeTarget::BaseOf(i) => self.stations[i].base_mac(),
            ProbeTarget::RerandOf(i) => self.stations[i].air_mac(),
            ProbeTarget::Addr(a) => a,
        };
        let probe = adversary::forge_probe(target, self.adversary_mac, self.ap.mac);
        let bytes = encode_frame(&probe).map_err(NodeError::from)?;
        self.log_air(t, &bytes, None)?;
        let mut acked = false;
        let responder = (0..self.stations.len()).find(|&i| self.stations[i].accepts(target));
        if let Some(i) = responder {
            let ack = Frame::ack(self.adversary_mac, 0);
            let ack_bytes = encode_frame(&ack).map_err(NodeError::from)?;
            self.log_air(t + SIFS_US, &ack_bytes, Some(i))?;
            self.counters.acks += 1;
            acked = true;
        } else if self.ap.accepts(target) {
            let ack = Frame::ack(self.adversary_mac, 0);
            let ack_bytes = encode_frame(&ack).map_err(NodeError::from)?;
            self.log_air(t + SIFS_US, &ack_bytes, None)?;
            self.counters.acks += 1;
            acked = true;
        }
        self.probe_results.push(ProbeResult {
            t_us: t,
            target,
            acked,
        });
        Ok(())
    }

    fn do_disconnect(&mut self, t: u64, idx: usize) -> Result<(), SimError> {
        let spec = self.disconnects[idx];
        if self.stations[spec.sta].assoc_state != AssocState::Associated {
            return Ok(());
        }
        if let Some(frame) = self.stations[spec.sta].disconnect(spec.silent)? {
            let bytes = encode_frame(&frame).map_err(NodeError::from)?;
            self.log_air(t, &bytes, Some(spec.sta))?;
            let ack = Frame::ack(frame.addr2.expect("disassoc carries a TA"), 0);
            let ack_bytes = encode_frame(&ack).map_err(NodeError::from)?;
            self.log_air(t + SIFS_US, &ack_bytes, None)?;
            self.counters.acks += 1;
            // A loud leave removes the station immediately.
            if let Some(id) = self.sid[spec.sta].take() {
                self.ap.remove_station(id);
            }
        }
        Ok(())
    }

    fn finish(mut self) -> RunOutput {
        self.observations.sort_by_key(|o| o.t);
        let window_us = self.interval_us / 2;
        let mut scores = LinkerScores::default();

        if self.keep_obs && !self.observations.is_empty() {
            for attack in self.cfg.adversaries.clone() {
                match attack {
                    Attack::Timing => {
                        let hyp = adversary::link_timing(&self.observations, window_us);
                        let score = adversary::score_linkage(&self.truth, &hyp);
                        for b in &score.per_boundary {
                            self.rows.entry(b.boundary).or_default().timing_accuracy =
                                Some(b.correct as f64 / b.total.max(1) as f64);
                        }
                        scores.timing = Some(score);
                    }
                    Attack::Sn => {
                        let hyp = adversary::link_sn(&self.observations, window_us);
                        let score = adversary::score_linkage(&self.truth, &hyp);
                        for b in &score.per_boundary {
                            self.rows.entry(b.boundary).or_default().sn_accuracy =
                                Some(b.correct as f64 / b.total.max(1) as f64);
                        }
                        scores.sn = Some(score);
                    }
                    Attack::Pn => {
                        let hyp = adversary::link_pn(&self.observations, window_us);
                        let score = adversary::score_linkage(&self.truth, &hyp);
                        for b in &score.per_boundary {
                            self.rows.entry(b.boundary).or_default().pn_accuracy =
                                Some(b.correct as f64 / b.total.max(1) as f64);
                        }
                        scores.pn = Some(score);
                    }
                    Attack::NoncePrune => {
                        scores.nonce_prune = Some(adversary::nonce_collision_prune(
                            &self.observations,
                            &self.boundaries,
                            window_us,
                        ));
                    }
                }
            }
            if !self.cfg.adversaries.is_empty() {
                let report =
                    adversary::anonymity_sets(&self.observations, &self.boundaries, window_us);
                for b in &report.boundaries {
                    let min = b.sets.iter().map(|&(_, n)| n).min();
                    self.rows.entry(b.index).or_default().anonymity_set = min;
                }
                scores.anonymity = Some(report);
            }
            if self.cfg.wpa2_mode && !self.station_keys.is_empty() {
                let hyp = adversary::link_with_keys(&self.station_keys, &self.boundaries);
                scores.wpa2 = Some(adversary::score_linkage(&self.truth, &hyp));
            }
        }

        // Interval ids were tracked relative to t=0; make the rows carry
        // their own index (pre-seeded rows already do).
        let metrics = self
            .rows
            .into_iter()
            .map(|(u, mut row)| {
                row.interval = u;
                row
            })
            .collect();

        RunOutput {
            metrics,
            counters: self.counters,
            truth: self.truth,
            boundaries: self.boundaries,
            observations: if self.keep_obs {
                Some(self.observations)
            } else {
                None
            },
            deliveries: if self.keep_deliv {
                Some(self.deliveries)
            } else {
                None
            },
            probe_results: self.probe_results,
            scores,
            ap_mac: AP_MAC,
            initial_bases: self.initial_bases,
            station_keys: self.station_keys,
            assoc_windows: self.assoc_windows,
        }
    }
}

fn fresh_mac(rng: &mut ChaCha8Rng, used: &mut HashSet<MacAddress>) -> MacAddress {
    loop {
        let mut octets = [0u8; 6];
        rng.fill_bytes(&mut octets);
        let mac = MacAddress(octets).with_randomized_bits();
        if used.insert(mac) {
            return mac;
        }
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig, opts: RunOptions<'_>) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(cfg, opts)?;
    sim.run_events()?;
    Ok(sim.finish())
}

/// One row of the nonce-wrap table: how long until the PN-H wraps for a
/// given interval length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WrapRow {
    pub interval_secs: u64,
    pub pn_low_bits: u8,
    pub pn_high_bits: u8,
    pub wrap_secs: u128,
    pub wrap_days: u128,
}

/// Computes the wrap table for a list of interval lengths.
pub fn wrap_table(
    frame_len_bits: u64,
    bitrate_bps: u64,
    intervals: &[u64],
) -> Result<Vec<WrapRow>, RerandError> {
    intervals
        .iter()
        .map(|&t| {
            let params = crate::rerand::choose_pn_split(bitrate_bps, t, frame_len_bits)?;
            let wrap = params.wrap_interval_secs();
            Ok(WrapRow {
                interval_secs: t,
                pn_low_bits: params.pn_low_bits(),
                pn_high_bits: params.pn_high_bits(),
                wrap_secs: wrap,
                wrap_days: wrap / 86_400,
            })
        })
        .collect()
}

pub fn write_wrap_csv(rows: &[WrapRow], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "T,l,h,wrap_seconds,wrap_days")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.interval_secs, r.pn_low_bits, r.pn_high_bits, r.wrap_secs, r.wrap_days
        )?;
    }
    Ok(())
}
