//! AP-side bidirectional mapping between base and re-randomized addresses.
//!
//! Each connected station owns exactly two live keys: its base address and
//! its currently valid re-randomized address, both resolving to the same
//! record. Tx frames are converted base -> re-randomized on the DA/RA
//! field; Rx frames re-randomized -> base on the SA/TA field, so the upper
//! stack only ever sees base addresses.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::frame::Frame;
use crate::mac::MacAddress;
use crate::rerand::{derive_rerand_mac, salted_interval, Ptk};

pub const DEFAULT_CAPACITY: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StationId(pub u32);

#[derive(Debug, Clone)]
pub struct StationRecord {
    pub id: StationId,
    pub base: MacAddress,
    pub rerand: MacAddress,
    pub ptk: Ptk,
    pub last_seen: u64,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("table full: capacity {0} stations")]
    CapacityExceeded(usize),
    #[error("station with base address {0} already present")]
    DuplicateBase(MacAddress),
    #[error("derived address {0} collides even after salted retry")]
    DerivedAddressCollision(MacAddress),
    #[error("rotation index {requested} not greater than last rotation {last}")]
    RotationOrder { last: u64, requested: u64 },
}

/// Outcome of an Rx-side address lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxOutcome {
    /// SA/TA matched a current re-randomized key and was converted.
    Converted(StationId),
    /// SA/TA matched a key retired at the previous rotation; the frame is
    /// left unchanged and the upper stack will ignore it.
    Stale,
    /// SA/TA carried a station's base address, which must never appear on
    /// the air after the handshake.
    AnomalousBase(StationId),
    /// No match; frame passes through untouched.
    Unknown,
}

/// Bidirectional base <-> re-randomized address table.
#[derive(Debug, Clone)]
pub struct MacTable {
    records: BTreeMap<StationId, StationRecord>,
    index: HashMap<MacAddress, StationId>,
    /// Keys retired at the most recent rotation, kept one interval for the
    /// stale-reception metric.
    prev_rerand: HashMap<MacAddress, StationId>,
    capacity: usize,
    last_rotation: Option<u64>,
    next_id: u32,
    pub stale_rx: u64,
    pub anomalous_base_rx: u64,
}

impl Default for MacTable {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl MacTable {
    pub fn new(capacity: usize) -> MacTable {
        MacTable {
            records: BTreeMap::new(),
            index: HashMap::new(),
            prev_rerand: HashMap::new(),
            capacity,
            last_rotation: None,
            next_id: 0,
            stale_rx: 0,
            anomalous_base_rx: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of live index keys; always twice the station count.
    pub fn key_count(&self) -> usize {
        self.index.len()
    }

    pub fn get(&self, id: StationId) -> Option<&StationRecord> {
        self.records.get(&id)
    }

    pub fn lookup(&self, addr: MacAddress) -> Option<&StationRecord> {
        self.index.get(&addr).and_then(|id| self.records.get(id))
    }

    pub fn records(&self) -> impl Iterator<Item = &StationRecord> {
        self.records.values()
    }

    /// Derives the re-randomized key for interval `u`, applying the salted
    /// retry if the first candidate collides with any live key.
    fn derive_free_key(
        &self,
        base: MacAddress,
        ptk: &Ptk,
        u: u64,
    ) -> Result<MacAddress, TableError> {
        let candidate = derive_rerand_mac(base, ptk, u);
        if !self.index.contains_key(&candidate) {
            return Ok(candidate);
        }
        let retry = derive_rerand_mac(base, ptk, salted_interval(u));
        if !self.index.contains_key(&retry) {
            return Ok(retry);
        }
        Err(TableError::DerivedAddressCollision(retry))
    }

    /// Adds a station and installs both of its keys.
    pub fn insert_station(
        &mut self,
        base: MacAddress,
        ptk: Ptk,
        u: u64,
        now: u64,
    ) -> Result<&StationRecord, TableError> {
        if self.records.len() >= self.capacity {
            return Err(TableError::CapacityExceeded(self.capacity));
        }
        if self.index.contains_key(&base) {
            return Err(TableError::DuplicateBase(base));
        }
        let rerand = self.derive_free_key(base, &ptk, u)?;
        let id = StationId(self.next_id);
        self.next_id += 1;
        self.index.insert(base, id);
        self.index.insert(rerand, id);
        self.records.insert(
            id,
            StationRecord {
                id,
                base,
                rerand,
                ptk,
                last_seen: now,
                connected: true,
            },
        );
        Ok(&self.records[&id])
    }

    pub fn remove_station(&mut self, id: StationId) -> Option<StationRecord> {
        let rec = self.records.remove(&id)?;
        self.index.remove(&rec.base);
        self.index.remove(&rec.rerand);
        Some(rec)
    }

    /// Re-derives every station's key for interval `u`; base keys are
    /// untouched, old re-randomized keys are retired as a block.
    pub fn rotate_all(&mut self, u: u64) -> Result<(), TableError> {
        if let Some(last) = self.last_rotation {
            if u <= last {
                return Err(TableError::RotationOrder {
                    last,
                    requested: u,
                });
            }
        }
        self.last_rotation = Some(u);
        self.prev_rerand.clear();
        let ids: Vec<StationId> = self.records.keys().copied().collect();
        for id in &ids {
            let rec = &self.records[id];
            self.index.remove(&rec.rerand);
            self.prev_rerand.insert(rec.rerand, *id);
        }
        for id in ids {
            let (base, ptk) = {
                let rec = &self.records[&id];
                (rec.base, rec.ptk)
            };
            let rerand = self.derive_free_key(base, &ptk, u)?;
            self.index.insert(rerand, id);
            self.records.get_mut(&id).unwrap().rerand = rerand;
        }
        Ok(())
    }

    /// Rotates a single station's entry (unsynchronized baseline, where
    /// each station changes on its own schedule).
    pub fn rotate_station(&mut self, id: StationId, u: u64) -> Result<(), TableError> {
        let (base, ptk, old) = {
            let rec = match self.records.get(&id) {
                Some(r) => r,
                None => return Ok(()),
            };
            (rec.base, rec.ptk, rec.rerand)
        };
        self.index.remove(&old);
        self.prev_rerand.insert(old, id);
        let rerand = self.derive_free_key(base, &ptk, u)?;
        self.index.insert(rerand, id);
        self.records.get_mut(&id).unwrap().rerand = rerand;
        Ok(())
    }

    /// Tx path: DA/RA matching a base key becomes the current
    /// re-randomized address. Broadcast and unknown addresses pass through.
    /// The FCS is refreshed after the rewrite.
    pub fn tx_convert(&self, mut frame: Frame) -> Frame {
        if frame.addr1.is_broadcast() {
            return frame;
        }
        if let Some(rec) = self.lookup(frame.addr1) {
            if rec.base == frame.addr1 {
                frame.addr1 = rec.rerand;
                frame.refresh_fcs();
            }
        }
        frame
    }

    /// Rx path: SA/TA matching a current re-randomized key becomes the base
    /// address before the frame is handed to the upper stack.
    pub fn rx_convert(&mut self, mut frame: Frame, now: u64) -> (Frame, RxOutcome) {
        let Some(sa) = frame.addr2 else {
            return (frame, RxOutcome::Unknown);
        };
        if let Some(&id) = self.index.get(&sa) {
            let rec = self.records.get_mut(&id).unwrap();
            if rec.rerand == sa {
                frame.addr2 = Some(rec.base);
                frame.refresh_fcs();
                rec.last_seen = now;
                return (frame, RxOutcome::Converted(id));
            }
            // A live base key on the air is a protocol violation by the
            // sender; leave the frame alone and flag it.
            self.anomalous_base_rx += 1;
            return (frame, RxOutcome::AnomalousBase(id));
        }
        if self.prev_rerand.contains_key(&sa) {
            self.stale_rx += 1;
            return (frame, RxOutcome::Stale);
        }
        (frame, RxOutcome::Unknown)
    }

    pub fn touch(&mut self, id: StationId, now: u64) {
        if let Some(rec) = self.records.get_mut(&id) {
            rec.last_seen = now;
        }
    }

    /// Drops stations idle for longer than `timeout`; returns how many.
    pub fn expire_inactive(&mut self, now: u64, timeout: u64) -> usize {
        let expired: Vec<StationId> = self
            .records
            .values()
            .filter(|r| now.saturating_sub(r.last_seen) > timeout)
            .map(|r| r.id)
            .collect();
        let n = expired.len();
        for id in expired {
            self.remove_station(id);
        }
        n
    }

    /// One line per station: `base=<hex> rerand=<hex> last_seen=<t>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for rec in self.records.values() {
            let _ = writeln!(
                out,
                "base={} rerand={} last_seen={}",
                rec.base.to_hex(),
                rec.rerand.to_hex(),
                rec.last_seen
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{CcmpHeader, SeqControl};

    fn mk_base(i: u8) -> MacAddress {
        MacAddress([0x02, 0, 0, 0, 0, i])
    }

    fn filled(n: u8, u: u64) -> MacTable {
        let mut t = MacTable::default();
        for i in 0..n {
            t.insert_station(mk_base(i), Ptk([i; 32]), u, 0).unwrap();
        }
        t
    }

    #[test]
    fn insert_installs_two_keys() {
        let t = filled(1, 0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.key_count(), 2);
        let rec = t.lookup(mk_base(0)).unwrap();
        assert_eq!(t.lookup(rec.rerand).unwrap().id, rec.id);
    }

    #[test]
    fn duplicate_base_rejected() {
        let mut t = filled(1, 0);
        assert_eq!(
            t.insert_station(mk_base(0), Ptk([9; 32]), 0, 0).unwrap_err(),
            TableError::DuplicateBase(mk_base(0))
        );
    }

    #[test]
    fn capacity_limit() {
        let mut t = MacTable::new(2);
        t.insert_station(mk_base(0), Ptk([0; 32]), 0, 0).unwrap();
        t.insert_station(mk_base(1), Ptk([1; 32]), 0, 0).unwrap();
        assert_eq!(
            t.insert_station(mk_base(2), Ptk([2; 32]), 0, 0).unwrap_err(),
            TableError::CapacityExceeded(2)
        );
    }

    #[test]
    fn salted_retry_resolves_collision() {
        // Station B's derived key is forced to collide with station A's
        // base key by choosing A's base as B's derived address.
        let ptk = Ptk([7; 32]);
        let b_base = mk_base(1);
        let a_base = derive_rerand_mac(b_base, &ptk, 3);
        let mut t = MacTable::default();
        t.insert_station(a_base, Ptk([1; 32]), 3, 0).unwrap();
        let rec = t.insert_station(b_base, ptk, 3, 0).unwrap();
        assert_eq!(rec.rerand, derive_rerand_mac(b_base, &ptk, salted_interval(3)));
        assert_eq!(t.key_count(), 4);
    }

    #[test]
    fn rotate_all_replaces_rerand_keys() {
        let mut t = filled(5, 0);
        let before: Vec<MacAddress> = t.records().map(|r| r.rerand).collect();
        t.rotate_all(1).unwrap();
        assert_eq!(t.key_count(), 10);
        for (rec, old) in t.records().zip(&before) {
            assert_ne!(rec.rerand, *old);
            assert_eq!(rec.rerand, derive_rerand_mac(rec.base, &rec.ptk, 1));
            assert!(t.lookup(*old).is_none());
        }
        // Base keys survive.
        for i in 0..5 {
            assert!(t.lookup(mk_base(i)).is_some());
        }
        assert_eq!(
            t.rotate_all(1).unwrap_err(),
            TableError::RotationOrder { last: 1, requested: 1 }
        );
    }

    fn data_frame(addr1: MacAddress, addr2: MacAddress) -> Frame {
        Frame::data(
            addr1,
            addr2,
            MacAddress([0x02, 0xA0, 0, 0, 0, 0]),
            SeqControl::default(),
            CcmpHeader::default(),
            vec![0xEE; 8],
        )
    }

    #[test]
    fn tx_convert_matches_base() {
        let t = filled(1, 0);
        let rec = t.lookup(mk_base(0)).unwrap().clone();
        let ap = MacAddress([0x02, 0xA0, 0, 0, 0, 0]);
        let f = t.tx_convert(data_frame(rec.base, ap));
        assert_eq!(f.addr1, rec.rerand);
        // FCS refreshed over the converted header.
        let encoded = crate::frame::encode_frame(&f).unwrap();
        assert!(crate::frame::decode_frame(&encoded).is_ok());
    }

    #[test]
    fn tx_convert_passthrough() {
        let t = filled(1, 0);
        let ap = MacAddress([0x02, 0xA0, 0, 0, 0, 0]);
        let f = t.tx_convert(data_frame(MacAddress::BROADCAST, ap));
        assert_eq!(f.addr1, MacAddress::BROADCAST);
        let unknown = MacAddress([0x06, 9, 9, 9, 9, 9]);
        let f = t.tx_convert(data_frame(unknown, ap));
        assert_eq!(f.addr1, unknown);
    }

    #[test]
    fn rx_convert_cases() {
        let mut t = filled(1, 0);
        let rec = t.lookup(mk_base(0)).unwrap().clone();
        let ap = MacAddress([0x02, 0xA0, 0, 0, 0, 0]);

        let (f, out) = t.rx_convert(data_frame(ap, rec.rerand), 5);
        assert_eq!(out, RxOutcome::Converted(rec.id));
        assert_eq!(f.addr2, Some(rec.base));
        assert_eq!(t.get(rec.id).unwrap().last_seen, 5);

        let (f, out) = t.rx_convert(data_frame(ap, rec.base), 6);
        assert_eq!(out, RxOutcome::AnomalousBase(rec.id));
        assert_eq!(f.addr2, Some(rec.base));
        assert_eq!(t.anomalous_base_rx, 1);

        t.rotate_all(1).unwrap();
        let (f, out) = t.rx_convert(data_frame(ap, rec.rerand), 7);
        assert_eq!(out, RxOutcome::Stale);
        assert_eq!(f.addr2, Some(rec.rerand));
        assert_eq!(t.stale_rx, 1);

        let (_, out) = t.rx_convert(data_frame(ap, MacAddress([0x06, 1, 1, 1, 1, 1])), 8);
        assert_eq!(out, RxOutcome::Unknown);
    }

    #[test]
    fn loopback_identity() {
        let mut t = filled(1, 0);
        let rec = t.lookup(mk_base(0)).unwrap().clone();
        let ap = MacAddress([0x02, 0xA0, 0, 0, 0, 0]);
        // AP sends to the station's base; on-air carries rerand; the echo
        // with that rerand as SA converts back to the base.
        let down = t.tx_convert(data_frame(rec.base, ap));
        let echo = data_frame(ap, down.addr1);
        let (up, out) = t.rx_convert(echo, 1);
        assert_eq!(out, RxOutcome::Converted(rec.id));
        assert_eq!(up.addr2, Some(rec.base));
    }

    #[test]
    fn expiry() {
        let mut t = filled(2, 0);
        t.touch(StationId(0), 100);
        assert_eq!(t.expire_inactive(200, 150), 1); // station 1 idle since 0
        assert_eq!(t.len(), 1);
        assert_eq!(t.key_count(), 2);
        assert_eq!(t.expire_inactive(200, u64::MAX), 0);
        assert!(t.lookup(mk_base(0)).is_some());
    }

    #[test]
    fn dump_format() {
        let t = filled(1, 0);
        let rec = t.lookup(mk_base(0)).unwrap();
        let line = t.dump();
        assert_eq!(
            line.trim(),
            format!(
                "base={} rerand={} last_seen=0",
                rec.base.to_hex(),
                rec.rerand.to_hex()
            )
        );
    }
}
