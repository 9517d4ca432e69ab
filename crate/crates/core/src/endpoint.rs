//! Station and AP protocol state machines.
//!
//! Stations associate with their base MAC address, then (in the runtime
//! modes) expose only per-interval re-randomized addresses on the air. The
//! receive path models the hardware address filter: a station acknowledges
//! frames destined to its currently accepted address and nothing else, so
//! probes at a harvested base address stay unanswered.

use rand::RngCore;

use crate::frame::{CcmpHeader, EncodeError, Frame, FrameType, SeqControl};
use crate::mac::MacAddress;
use crate::rerand::{
    interval_index, NonceMode, NonceState, Ptk, RerandContext, RerandError, RerandParams, SnState,
};
use crate::table::{MacTable, RxOutcome, StationId, TableError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NodeError {
    #[error("station not associated")]
    NotAssociated,
    #[error("station already associated")]
    AlreadyAssociated,
    #[error(transparent)]
    Rerand(#[from] RerandError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Address randomization policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandMode {
    /// No randomization at all; the base address is used on the air.
    Off,
    /// Forced-reconnect baseline: a fresh base address per connection,
    /// changed by tearing the connection down at every interval boundary.
    PerConnection,
    /// Runtime re-randomization with per-station phase offsets.
    UnsyncRuntime,
    /// Runtime re-randomization synchronized across all stations.
    SyncRuntime,
}

impl RandMode {
    /// Runtime modes rotate addresses in place; the others only ever put
    /// the base address on the air.
    pub fn is_runtime(self) -> bool {
        matches!(self, RandMode::UnsyncRuntime | RandMode::SyncRuntime)
    }
}

/// Which resets to skip at rotation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AblationFlags {
    pub no_sn_reset: bool,
    pub no_pn_reset: bool,
}

/// Issues one fresh uniformly random PTK per association. Stands in for
/// the SAE handshake: the secret reaches only the AP and the station,
/// never an eavesdropper.
pub struct KeyOracle<R: RngCore> {
    rng: R,
}

impl<R: RngCore> KeyOracle<R> {
    pub fn new(rng: R) -> Self {
        KeyOracle { rng }
    }

    pub fn issue(&mut self) -> Ptk {
        Ptk::from_rng(&mut self.rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocState {
    Idle,
    Associated,
}

/// Default RTS threshold: 2347 octets, effectively disabled given the
/// 2346-octet maximum frame size.
pub const DEFAULT_RTS_THRESHOLD: usize = 2347;

const DEDUPE_WINDOW: usize = 32;

/// Recent (TA, SN) cache; retransmissions are acknowledged again but not
/// re-delivered.
#[derive(Debug, Clone, Default)]
pub struct DedupeCache {
    recent: Vec<(MacAddress, u16)>,
}

impl DedupeCache {
    /// Records the pair; returns false when it was already present.
    pub fn note(&mut self, ta: MacAddress, sn: u16) -> bool {
        if self.recent.contains(&(ta, sn)) {
            return false;
        }
        if self.recent.len() == DEDUPE_WINDOW {
            self.recent.remove(0);
        }
        self.recent.push((ta, sn));
        true
    }

    /// SN streams restart at each rotation; stale pairs must not shadow
    /// the new interval's frames.
    pub fn clear(&mut self) {
        self.recent.clear();
    }
}

/// A mobile station.
pub struct StationNode {
    pub id: usize,
    base: MacAddress,
    pub mode: RandMode,
    params: RerandParams,
    nonce_mode: NonceMode,
    nonce_seed: u64,
    ablation: AblationFlags,
    pub rts_threshold: usize,
    pub assoc_state: AssocState,
    ctx: Option<RerandContext>,
    handshake_sn: SnState,
    pub rx_dedupe: DedupeCache,
    bssid: Option<MacAddress>,
}

impl StationNode {
    pub fn new(
        id: usize,
        base: MacAddress,
        mode: RandMode,
        params: RerandParams,
        nonce_mode: NonceMode,
        nonce_seed: u64,
        ablation: AblationFlags,
    ) -> StationNode {
        StationNode {
            id,
            base,
            mode,
            params,
            nonce_mode,
            nonce_seed,
            ablation,
            rts_threshold: DEFAULT_RTS_THRESHOLD,
            assoc_state: AssocState::Idle,
            ctx: None,
            handshake_sn: SnState::new(),
            rx_dedupe: DedupeCache::default(),
            bssid: None,
        }
    }

    pub fn base_mac(&self) -> MacAddress {
        self.base
    }

    /// Replaces the base address ahead of a fresh connection.
    pub fn set_base(&mut self, base: MacAddress) {
        assert_eq!(self.assoc_state, AssocState::Idle);
        self.base = base;
    }

    pub fn context(&self) -> Option<&RerandContext> {
        self.ctx.as_ref()
    }

    /// The address this station currently transmits with and — while
    /// associated — the only receiver address its hardware acknowledges.
    pub fn air_mac(&self) -> MacAddress {
        match (&self.ctx, self.mode.is_runtime()) {
            (Some(ctx), true) => ctx.current_mac(),
            _ => self.base,
        }
    }

    /// The hardware ACK filter: exactly one accepted receiver address. In
    /// the runtime modes that is the re-randomized address, never the base.
    pub fn accepted_ra(&self) -> MacAddress {
        self.air_mac()
    }

    pub fn accepts(&self, ra: MacAddress) -> bool {
        self.assoc_state == AssocState::Associated && ra == self.accepted_ra()
    }

    /// First two handshake frames, carrying the base address in clear.
    pub fn handshake_frames(&mut self, ap: MacAddress) -> Vec<Frame> {
        vec![
            Frame::management(
                FrameType::Auth,
                ap,
                self.base,
                ap,
                SeqControl {
                    sn: self.handshake_sn.next(),
                    frag: 0,
                },
                Vec::new(),
            ),
            Frame::management(
                FrameType::AssocReq,
                ap,
                self.base,
                ap,
                SeqControl {
                    sn: self.handshake_sn.next(),
                    frag: 0,
                },
                Vec::new(),
            ),
        ]
    }

    /// Installs the PTK and enters the current interval. Off and
    /// per-connection modes keep the base address on the air; their packet
    /// number free-runs from zero, which is safe because each connection
    /// has a fresh PTK.
    pub fn complete_association(
        &mut self,
        ap: MacAddress,
        ptk: Ptk,
        t_epoch_secs: u64,
    ) -> Result<(), NodeError> {
        if self.assoc_state == AssocState::Associated {
            return Err(NodeError::AlreadyAssociated);
        }
        let u = interval_index(t_epoch_secs, self.params.interval_secs())?;
        let nonce_mode = if self.mode.is_runtime() {
            self.nonce_mode
        } else {
            NonceMode::NaiveZero
        };
        self.ctx = Some(RerandContext::new(
            self.base,
            ptk,
            self.params,
            nonce_mode,
            self.nonce_seed,
            u,
        ));
        self.assoc_state = AssocState::Associated;
        self.bssid = Some(ap);
        self.handshake_sn.reset();
        self.rx_dedupe.clear();
        Ok(())
    }

    /// Rotates into interval `u`; returns (old, new) air addresses.
    /// No-op outside the runtime modes.
    pub fn rotate_to(&mut self, u: u64) -> Result<Option<(MacAddress, MacAddress)>, NodeError> {
        if !self.mode.is_runtime() || self.assoc_state != AssocState::Associated {
            return Ok(None);
        }
        let ablation = self.ablation;
        let ctx = self.ctx.as_mut().ok_or(NodeError::NotAssociated)?;
        let old = ctx.current_mac();
        ctx.advance_interval(u)?;
        if !ablation.no_sn_reset {
            ctx.sn.reset();
            self.rx_dedupe.clear();
        }
        if !ablation.no_pn_reset {
            ctx.nonce.reset(u);
        }
        Ok(Some((old, ctx.current_mac())))
    }

    /// Builds the next uplink data frame, preceded by an RTS when the
    /// encoded size exceeds the RTS threshold.
    pub fn build_data(&mut self, payload: Vec<u8>) -> Result<DataTx, NodeError> {
        if self.assoc_state != AssocState::Associated {
            return Err(NodeError::NotAssociated);
        }
        let air = self.air_mac();
        let ap = self.bssid.expect("associated station has a BSSID");
        let ctx = self.ctx.as_mut().ok_or(NodeError::NotAssociated)?;
        let pn = ctx.nonce.next()?;
        let sn = ctx.sn.next();
        let frame = Frame::data(
            ap,
            air,
            ap,
            SeqControl { sn, frag: 0 },
            CcmpHeader { pn, key_id: 0 },
            payload,
        );
        let rts = if frame.encoded_len()? > self.rts_threshold {
            Some(Frame::rts(ap, air, 0))
        } else {
            None
        };
        Ok(DataTx { rts, frame })
    }

    /// Tears the association down. A loud leave emits a Disassoc frame
    /// carrying the current on-air address; a silent one just stops.
    pub fn disconnect(&mut self, silent: bool) -> Result<Option<Frame>, NodeError> {
        if self.assoc_state != AssocState::Associated {
            return Err(NodeError::NotAssociated);
        }
        let frame = if silent {
            None
        } else {
            let air = self.air_mac();
            let ap = self.bssid.expect("associated station has a BSSID");
            let ctx = self.ctx.as_mut().ok_or(NodeError::NotAssociated)?;
            Some(Frame::management(
                FrameType::Disassoc,
                ap,
                air,
                ap,
                SeqControl {
                    sn: ctx.sn.next(),
                    frag: 0,
                },
                Vec::new(),
            ))
        };
        self.assoc_state = AssocState::Idle;
        self.ctx = None;
        self.bssid = None;
        Ok(frame)
    }

    /// Upper-layer view of a received frame: the station's own receiver
    /// address is mapped back to its base address.
    pub fn rx_to_upper(&self, mut frame: Frame) -> Frame {
        if frame.addr1 == self.air_mac() {
            frame.addr1 = self.base;
            frame.refresh_fcs();
        }
        frame
    }
}

/// An uplink transmission: optional RTS, then the data frame.
pub struct DataTx {
    pub rts: Option<Frame>,
    pub frame: Frame,
}

/// Per-station transmit state held by the AP.
struct ApTxState {
    sn: SnState,
    nonce: NonceState,
}

/// The access point. Its own address is static; stations are tracked in
/// the bidirectional conversion table.
pub struct ApNode {
    pub mac: MacAddress,
    pub table: MacTable,
    tx: std::collections::BTreeMap<StationId, ApTxState>,
    params: RerandParams,
    nonce_mode: NonceMode,
    nonce_seed: u64,
    ablation: AblationFlags,
    /// Conversion is bypassed in the Off / per-connection baselines.
    convert: bool,
    pub rx_dedupe: DedupeCache,
}

impl ApNode {
    pub fn new(
        mac: MacAddress,
        capacity: usize,
        params: RerandParams,
        mode: RandMode,
        nonce_mode: NonceMode,
        nonce_seed: u64,
        ablation: AblationFlags,
    ) -> ApNode {
        ApNode {
            mac,
            table: MacTable::new(capacity),
            tx: std::collections::BTreeMap::new(),
            params,
            nonce_mode,
            nonce_seed,
            ablation,
            convert: mode.is_runtime(),
            rx_dedupe: DedupeCache::default(),
        }
    }

    pub fn accepts(&self, ra: MacAddress) -> bool {
        ra == self.mac
    }

    /// Registers a station after a successful handshake and creates its
    /// transmit-side SN/PN state.
    pub fn admit_station(
        &mut self,
        base: MacAddress,
        ptk: Ptk,
        u: u64,
        now: u64,
    ) -> Result<StationId, NodeError> {
        let id = self.table.insert_station(base, ptk, u, now)?.id;
        let nonce_mode = if self.convert {
            self.nonce_mode
        } else {
            NonceMode::NaiveZero
        };
        self.tx.insert(
            id,
            ApTxState {
                sn: SnState::new(),
                nonce: NonceState::new(nonce_mode, self.params, self.nonce_seed ^ id.0 as u64, u),
            },
        );
        Ok(id)
    }

    pub fn remove_station(&mut self, id: StationId) {
        self.table.remove_station(id);
        self.tx.remove(&id);
    }

    fn reset_tx_state(tx: &mut ApTxState, u: u64, ablation: AblationFlags) {
        if !ablation.no_sn_reset {
            tx.sn.reset();
        }
        if !ablation.no_pn_reset {
            tx.nonce.reset(u);
        }
    }

    /// Interval boundary: re-derive every table entry and reset every
    /// per-station transmit state to the same values the stations use.
    pub fn rotate_all(&mut self, u: u64) -> Result<(), NodeError> {
        if !self.convert {
            return Ok(());
        }
        self.table.rotate_all(u)?;
        for tx in self.tx.values_mut() {
            Self::reset_tx_state(tx, u, self.ablation);
        }
        if !self.ablation.no_sn_reset {
            self.rx_dedupe.clear();
        }
        Ok(())
    }

    /// Per-station boundary for the unsynchronized baseline.
    pub fn rotate_station(&mut self, id: StationId, u: u64) -> Result<(), NodeError> {
        if !self.convert {
            return Ok(());
        }
        self.table.rotate_station(id, u)?;
        if let Some(tx) = self.tx.get_mut(&id) {
            Self::reset_tx_state(tx, u, self.ablation);
        }
        Ok(())
    }

    /// Builds a downlink data frame addressed to the station's base
    /// address, then converts DA through the table on the way out.
    pub fn build_data_to(&mut self, id: StationId, payload: Vec<u8>) -> Result<Frame, NodeError> {
        let base = self
            .table
            .get(id)
            .map(|r| r.base)
            .ok_or(NodeError::NotAssociated)?;
        let tx = self.tx.get_mut(&id).ok_or(NodeError::NotAssociated)?;
        let pn = tx.nonce.next()?;
        let sn = tx.sn.next();
        let frame = Frame::data(
            base,
            self.mac,
            self.mac,
            SeqControl { sn, frag: 0 },
            CcmpHeader { pn, key_id: 0 },
            payload,
        );
        Ok(if self.convert {
            self.table.tx_convert(frame)
        } else {
            frame
        })
    }

    /// Rx path: converts SA back to the base address for the upper stack.
    pub fn rx_frame(&mut self, frame: Frame, now: u64) -> (Frame, RxOutcome) {
        if !self.convert {
            if let Some(sa) = frame.addr2 {
                if let Some(rec) = self.table.lookup(sa) {
                    let id = rec.id;
                    self.table.touch(id, now);
                    return (frame, RxOutcome::Converted(id));
                }
            }
            return (frame, RxOutcome::Unknown);
        }
        self.table.rx_convert(frame, now)
    }

    pub fn build_assoc_resp(&mut self, station_base: MacAddress) -> Frame {
        Frame::management(
            FrameType::AssocResp,
            station_base,
            self.mac,
            self.mac,
            SeqControl::default(),
            Vec::new(),
        )
    }

    pub fn expire_inactive(&mut self, now: u64, timeout: u64) -> usize {
        let before: Vec<StationId> = self.table.records().map(|r| r.id).collect();
        let n = self.table.expire_inactive(now, timeout);
        for id in before {
            if self.table.get(id).is_none() {
                self.tx.remove(&id);
            }
        }
        n
    }
}

/// Sender tag for handshake frame sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sender {
    Station(usize),
    Ap,
}

/// The association exchange: management frames and their acknowledgments,
/// in on-air order.
pub struct AssocExchange {
    pub frames: Vec<(Sender, Frame)>,
    pub station_id: StationId,
}

/// Runs the full association: Auth and AssocReq from the station (base
/// address in clear), AssocResp from the AP, each acknowledged. The key
/// oracle issues the PTK, the AP installs the station in its table, and
/// the station enters the current interval.
pub fn associate<R: RngCore>(
    station: &mut StationNode,
    ap: &mut ApNode,
    oracle: &mut KeyOracle<R>,
    t_epoch_secs: u64,
    now: u64,
) -> Result<AssocExchange, NodeError> {
    if station.assoc_state == AssocState::Associated {
        return Err(NodeError::AlreadyAssociated);
    }
    let base = station.base_mac();
    let mut frames = Vec::with_capacity(6);
    for f in station.handshake_frames(ap.mac) {
        let ack = Frame::ack(f.addr2.unwrap(), 0);
        frames.push((Sender::Station(station.id), f));
        frames.push((Sender::Ap, ack));
    }
    let resp = ap.build_assoc_resp(base);
    let ack = Frame::ack(resp.addr2.unwrap(), 0);
    frames.push((Sender::Ap, resp));
    frames.push((Sender::Station(station.id), ack));

    let ptk = oracle.issue();
    let u = interval_index(t_epoch_secs, station.params.interval_secs())?;
    let station_id = ap.admit_station(base, ptk, u, now)?;
    station.complete_association(ap.mac, ptk, t_epoch_secs)?;
    Ok(AssocExchange { frames, station_id })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> RerandParams {
        RerandParams::new(30, 24, 24).unwrap()
    }

    fn ap_mac() -> MacAddress {
        MacAddress([0x02, 0xA9, 0, 0, 0, 0x01])
    }

    fn setup(mode: RandMode) -> (StationNode, ApNode, KeyOracle<ChaCha8Rng>) {
        let station = StationNode::new(
            0,
            MacAddress([0x02, 0, 0, 0, 0, 0x10]),
            mode,
            params(),
            NonceMode::Controlled,
            7,
            AblationFlags::default(),
        );
        let ap = ApNode::new(
            ap_mac(),
            512,
            params(),
            mode,
            NonceMode::Controlled,
            13,
            AblationFlags::default(),
        );
        let oracle = KeyOracle::new(ChaCha8Rng::seed_from_u64(3));
        (station, ap, oracle)
    }

    #[test]
    fn association_installs_both_sides() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        let ex = associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        assert_eq!(ex.frames.len(), 6);
        assert_eq!(ap.table.key_count(), 2);
        // Handshake carries the base in clear.
        assert_eq!(ex.frames[0].1.addr2, Some(sta.base_mac()));
        // Both sides agree on the on-air address.
        let rec = ap.table.get(ex.station_id).unwrap();
        assert_eq!(rec.rerand, sta.air_mac());
        assert_ne!(sta.air_mac(), sta.base_mac());
        // Re-association of the same base is rejected by the AP.
        let mut sta2 = StationNode::new(
            1,
            sta.base_mac(),
            RandMode::SyncRuntime,
            params(),
            NonceMode::Controlled,
            8,
            AblationFlags::default(),
        );
        assert!(matches!(
            associate(&mut sta2, &mut ap, &mut oracle, 100, 0),
            Err(NodeError::Table(TableError::DuplicateBase(_)))
        ));
    }

    #[test]
    fn ack_filter_never_contains_base_in_runtime() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        assert!(!sta.accepts(sta.base_mac()));
        assert!(sta.accepts(sta.air_mac()));
        // Off mode keeps the base accepted.
        let (mut sta, mut ap, mut oracle) = setup(RandMode::Off);
        associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        assert!(sta.accepts(sta.base_mac()));
    }

    #[test]
    fn first_frame_after_rotation_resets_counters() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        for _ in 0..5 {
            sta.build_data(vec![0; 10]).unwrap();
        }
        let u = sta.context().unwrap().current_interval();
        let (old, new) = sta.rotate_to(u + 1).unwrap().unwrap();
        assert_ne!(old, new);
        let tx = sta.build_data(vec![0; 10]).unwrap();
        assert_eq!(tx.frame.seq.unwrap().sn, 0);
        let pn = tx.frame.ccmp.unwrap().pn;
        assert_eq!(pn & 0x00FF_FFFF, 0); // PN-L back to zero
        assert_eq!(pn >> 24, (u + 1) % (1 << 24)); // PN-H tracks the interval
        assert_eq!(tx.frame.addr2, Some(new));
    }

    #[test]
    fn rts_threshold_gates_rts() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        sta.rts_threshold = 500;
        let tx = sta.build_data(vec![0; 600]).unwrap();
        let rts = tx.rts.expect("oversize frame wants RTS");
        assert_eq!(rts.ftype, FrameType::Rts);
        assert_eq!(rts.addr2, Some(sta.air_mac()));
        let tx = sta.build_data(vec![0; 100]).unwrap();
        assert!(tx.rts.is_none());
        sta.rts_threshold = DEFAULT_RTS_THRESHOLD;
        let tx = sta.build_data(vec![0; 600]).unwrap();
        assert!(tx.rts.is_none());
    }

    #[test]
    fn downlink_conversion_and_loopback() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        let ex = associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        let down = ap.build_data_to(ex.station_id, vec![1, 2, 3]).unwrap();
        // On-air DA is the re-randomized address, never the base.
        assert_eq!(down.addr1, sta.air_mac());
        assert!(sta.accepts(down.addr1));
        let upper = sta.rx_to_upper(down);
        assert_eq!(upper.addr1, sta.base_mac());
        // Uplink converts back to base at the AP.
        let tx = sta.build_data(vec![9]).unwrap();
        let (up, out) = ap.rx_frame(tx.frame, 5);
        assert_eq!(out, RxOutcome::Converted(ex.station_id));
        assert_eq!(up.addr2, Some(sta.base_mac()));
    }

    #[test]
    fn synchronized_rotation_keeps_sides_agreed() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        let ex = associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        let u = sta.context().unwrap().current_interval();
        ap.rotate_all(u + 1).unwrap();
        sta.rotate_to(u + 1).unwrap();
        assert_eq!(ap.table.get(ex.station_id).unwrap().rerand, sta.air_mac());
        // The previous on-air address is no longer accepted.
        let old = sta.base_mac();
        assert!(!sta.accepts(old));
    }

    #[test]
    fn ap_downlink_sn_resets_at_boundary() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        let ex = associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        for _ in 0..3 {
            ap.build_data_to(ex.station_id, vec![0]).unwrap();
        }
        let u = sta.context().unwrap().current_interval();
        ap.rotate_all(u + 1).unwrap();
        let f = ap.build_data_to(ex.station_id, vec![0]).unwrap();
        assert_eq!(f.seq.unwrap().sn, 0);
        assert_eq!(f.ccmp.unwrap().pn & 0x00FF_FFFF, 0);
    }

    #[test]
    fn loud_disconnect_emits_disassoc_with_rerand() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        associate(&mut sta, &mut ap, &mut oracle, 100, 0).unwrap();
        let air = sta.air_mac();
        let f = sta.disconnect(false).unwrap().unwrap();
        assert_eq!(f.ftype, FrameType::Disassoc);
        assert_eq!(f.addr2, Some(air));
        assert_eq!(sta.assoc_state, AssocState::Idle);
    }

    #[test]
    fn silent_disconnect_leaves_table_until_expiry() {
        let (mut sta, mut ap, mut oracle) = setup(RandMode::SyncRuntime);
        associate(&mut sta, &mut ap, &mut oracle, 100, 1_000).unwrap();
        assert!(sta.disconnect(true).unwrap().is_none());
        assert_eq!(ap.table.len(), 1);
        assert_eq!(ap.expire_inactive(10_000, 5_000), 1);
        assert_eq!(ap.table.key_count(), 0);
    }

    #[test]
    fn dedupe_suppresses_redelivery() {
        let mut cache = DedupeCache::default();
        let ta = MacAddress([2, 0, 0, 0, 0, 1]);
        assert!(cache.note(ta, 7));
        assert!(!cache.note(ta, 7));
        assert!(cache.note(ta, 8));
    }

    #[test]
    fn ablation_skips_selected_resets() {
        let mut sta = StationNode::new(
            0,
            MacAddress([0x02, 0, 0, 0, 0, 0x10]),
            RandMode::SyncRuntime,
            params(),
            NonceMode::Controlled,
            7,
            AblationFlags {
                no_sn_reset: true,
                no_pn_reset: false,
            },
        );
        sta.complete_association(ap_mac(), Ptk([1; 32]), 100).unwrap();
        for _ in 0..5 {
            sta.build_data(vec![]).unwrap();
        }
        let u = sta.context().unwrap().current_interval();
        sta.rotate_to(u + 1).unwrap();
        let tx = sta.build_data(vec![]).unwrap();
        assert_eq!(tx.frame.seq.unwrap().sn, 5); // SN kept counting
        assert_eq!(tx.frame.ccmp.unwrap().pn & 0x00FF_FFFF, 0); // PN still reset
    }
}
