//! Passive eavesdropper models: header-only observations, linkers that try
//! to map old addresses to new ones across rotations, and scoring against
//! the simulator's ground truth.
//!
//! All linkers consume nothing but FCS-valid frame headers. Payload bytes
//! never reach this module; [`Observation`] does not carry them.

use std::collections::{BTreeMap, HashSet};

use crate::frame::{decode_frame, Frame, FrameType, PN_MAX};
use crate::mac::MacAddress;
use crate::rerand::{derive_rerand_mac, Ptk};

/// One sniffed frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Observation {
    /// Capture time, microseconds.
    pub t: u64,
    pub ftype: FrameType,
    pub addr1: MacAddress,
    pub addr2: Option<MacAddress>,
    pub addr3: Option<MacAddress>,
    pub sn: Option<u16>,
    pub pn: Option<u64>,
    /// Total on-air length in octets.
    pub length: usize,
}

impl Observation {
    /// Builds an observation from on-air bytes; corrupt frames are as
    /// invisible to the sniffer as to any other receiver.
    pub fn from_air(t: u64, bytes: &[u8]) -> Option<Observation> {
        let frame = decode_frame(bytes).ok()?;
        Some(Self::from_frame(t, &frame, bytes.len()))
    }

    pub fn from_frame(t: u64, frame: &Frame, length: usize) -> Observation {
        Observation {
            t,
            ftype: frame.ftype,
            addr1: frame.addr1,
            addr2: frame.addr2,
            addr3: frame.addr3,
            sn: frame.seq.map(|s| s.sn),
            pn: frame.ccmp.map(|c| c.pn),
            length,
        }
    }
}

/// Everything the sniffer accumulates about one transmitter address over
/// its on-air lifetime.
#[derive(Debug, Clone, Copy)]
pub struct AddressActivity {
    pub addr: MacAddress,
    pub first_t: u64,
    pub last_t: u64,
    pub first_sn: Option<u16>,
    pub last_sn: Option<u16>,
    pub first_pn: Option<u64>,
    pub last_pn: Option<u64>,
    pub frames: usize,
}

/// The AP never hides: its address dominates the BSSID field.
pub fn infer_bssid(observations: &[Observation]) -> Option<MacAddress> {
    let mut counts: BTreeMap<MacAddress, usize> = BTreeMap::new();
    for obs in observations {
        if let Some(a3) = obs.addr3 {
            *counts.entry(a3).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by_key(|&(addr, n)| (n, std::cmp::Reverse(addr)))
        .map(|(addr, _)| addr)
}

/// Groups observations by transmitter (SA/TA) address, excluding the
/// inferred BSSID and broadcast. Returned in order of first appearance.
pub fn transmitter_activity(observations: &[Observation]) -> Vec<AddressActivity> {
    let bssid = infer_bssid(observations);
    let mut acts: BTreeMap<MacAddress, AddressActivity> = BTreeMap::new();
    for obs in observations {
        let Some(ta) = obs.addr2 else { continue };
        if ta.is_broadcast() || Some(ta) == bssid {
            continue;
        }
        let act = acts.entry(ta).or_insert(AddressActivity {
            addr: ta,
            first_t: obs.t,
            last_t: obs.t,
            first_sn: None,
            last_sn: None,
            first_pn: None,
            last_pn: None,
            frames: 0,
        });
        act.last_t = act.last_t.max(obs.t);
        act.frames += 1;
        if let Some(sn) = obs.sn {
            act.first_sn.get_or_insert(sn);
            act.last_sn = Some(sn);
        }
        if let Some(pn) = obs.pn {
            act.first_pn.get_or_insert(pn);
            act.last_pn = Some(pn);
        }
    }
    let mut out: Vec<AddressActivity> = acts.into_values().collect();
    out.sort_by_key(|a| (a.first_t, a.addr));
    out
}

/// One old -> new address link claimed by a linker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub old: MacAddress,
    pub new: MacAddress,
    pub confidence: f64,
}

/// A linker's inferred address-succession mapping; injective by
/// construction (each new address is claimed at most once).
#[derive(Debug, Clone, Default)]
pub struct LinkageHypothesis {
    pub links: Vec<Link>,
}

impl LinkageHypothesis {
    pub fn contains(&self, old: MacAddress, new: MacAddress) -> bool {
        self.links.iter().any(|l| l.old == old && l.new == new)
    }
}

fn candidate_indices(
    acts: &[AddressActivity],
    death: u64,
    window_us: u64,
    claimed: &HashSet<MacAddress>,
) -> Vec<usize> {
    acts.iter()
        .enumerate()
        .filter(|(_, b)| {
            b.first_t > death
                && b.first_t <= death.saturating_add(window_us)
                && !claimed.contains(&b.addr)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Indices of activities in the order their addresses disappear.
fn death_order(acts: &[AddressActivity]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..acts.len()).collect();
    order.sort_by_key(|&i| (acts[i].last_t, acts[i].addr));
    order
}

/// Timing attack: a new address appearing right after an old one vanished
/// is its likely successor. Greedy matching, closest appearance first.
pub fn link_timing(observations: &[Observation], window_us: u64) -> LinkageHypothesis {
    let acts = transmitter_activity(observations);
    let mut claimed: HashSet<MacAddress> = HashSet::new();
    let mut links = Vec::new();
    for i in death_order(&acts) {
        let old = &acts[i];
        let cands = candidate_indices(&acts, old.last_t, window_us, &claimed);
        let Some(&best) = cands
            .iter()
            .min_by_key(|&&j| (acts[j].first_t - old.last_t, acts[j].addr))
        else {
            continue;
        };
        claimed.insert(acts[best].addr);
        links.push(Link {
            old: old.addr,
            new: acts[best].addr,
            confidence: 1.0 / cands.len() as f64,
        });
    }
    LinkageHypothesis { links }
}

/// The continuation linkers share one shape: claim candidates whose first
/// counter value continues the old address's last one, then fall back to
/// timing order for whatever is left.
fn link_by_continuation(
    observations: &[Observation],
    window_us: u64,
    continues: impl Fn(&AddressActivity, &AddressActivity) -> bool,
) -> LinkageHypothesis {
    let acts = transmitter_activity(observations);
    let order = death_order(&acts);
    let mut claimed: HashSet<MacAddress> = HashSet::new();
    let mut linked_old: HashSet<MacAddress> = HashSet::new();
    let mut links = Vec::new();

    // First pass: unique counter continuations are near-certain links.
    for &i in &order {
        let old = &acts[i];
        let cands = candidate_indices(&acts, old.last_t, window_us, &claimed);
        let matching: Vec<usize> = cands
            .iter()
            .copied()
            .filter(|&j| continues(old, &acts[j]))
            .collect();
        if let [only] = matching[..] {
            claimed.insert(acts[only].addr);
            linked_old.insert(old.addr);
            links.push(Link {
                old: old.addr,
                new: acts[only].addr,
                confidence: 1.0,
            });
        }
    }

    // Second pass: everything else is a guess among the remaining
    // candidates, ordered by appearance time.
    for &i in &order {
        let old = &acts[i];
        if linked_old.contains(&old.addr) {
            continue;
        }
        let cands = candidate_indices(&acts, old.last_t, window_us, &claimed);
        let Some(&best) = cands
            .iter()
            .min_by_key(|&&j| (acts[j].first_t - old.last_t, acts[j].addr))
        else {
            continue;
        };
        claimed.insert(acts[best].addr);
        links.push(Link {
            old: old.addr,
            new: acts[best].addr,
            confidence: 1.0 / cands.len() as f64,
        });
    }
    LinkageHypothesis { links }
}

/// Sequence-number attack: links addresses whose 12-bit SN stream
/// continues across the change.
pub fn link_sn(observations: &[Observation], window_us: u64) -> LinkageHypothesis {
    link_by_continuation(
        observations,
        window_us,
        |old, new| match (old.last_sn, new.first_sn) {
            (Some(last), Some(first)) => first == (last + 1) % 4096,
            _ => false,
        },
    )
}

/// Packet-number attack: same continuation logic over the 48-bit PN.
pub fn link_pn(observations: &[Observation], window_us: u64) -> LinkageHypothesis {
    link_by_continuation(
        observations,
        window_us,
        |old, new| match (old.last_pn, new.first_pn) {
            (Some(last), Some(first)) => first == (last + 1) & PN_MAX,
            _ => false,
        },
    )
}

/// A rotation boundary as the evaluation harness knows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Boundary {
    /// Interval index entered at this boundary.
    pub index: u64,
    /// Boundary time, microseconds.
    pub t: u64,
}

/// Candidate-set sizes per old address at each boundary.
#[derive(Debug, Clone, Default)]
pub struct AnonymityReport {
    pub boundaries: Vec<BoundaryAnonymity>,
}

#[derive(Debug, Clone)]
pub struct BoundaryAnonymity {
    pub index: u64,
    pub t: u64,
    /// (old address, number of candidate successors).
    pub sets: Vec<(MacAddress, usize)>,
}

impl AnonymityReport {
    pub fn min_set_size(&self) -> Option<usize> {
        self.boundaries
            .iter()
            .flat_map(|b| b.sets.iter().map(|&(_, n)| n))
            .min()
    }
}

/// Plain anonymity sets: for each address that went quiet at a boundary,
/// every address first seen within the window after it is a candidate.
pub fn anonymity_sets(
    observations: &[Observation],
    boundaries: &[Boundary],
    window_us: u64,
) -> AnonymityReport {
    anonymity_sets_filtered(observations, boundaries, window_us, |_, _| true)
}

/// Nonce-overlap pruning: frames with identical nonces cannot come from
/// the same station under one PTK, so a candidate whose observed PN range
/// intersects the old address's range is removed. Only the random-reset
/// policy leaks this way; the controlled split keeps per-interval ranges
/// disjoint by construction.
pub fn nonce_collision_prune(
    observations: &[Observation],
    boundaries: &[Boundary],
    window_us: u64,
) -> AnonymityReport {
    anonymity_sets_filtered(observations, boundaries, window_us, |old, new| {
        match (old.first_pn, old.last_pn, new.first_pn, new.last_pn) {
            (Some(of), Some(ol), Some(nf), Some(nl)) => {
                // An overlap means an identical nonce was observed on both
                // sides: different stations, prune the pair.
                !(of <= nl && nf <= ol)
            }
            _ => true,
        }
    })
}

fn anonymity_sets_filtered(
    observations: &[Observation],
    boundaries: &[Boundary],
    window_us: u64,
    keep: impl Fn(&AddressActivity, &AddressActivity) -> bool,
) -> AnonymityReport {
    let acts = transmitter_activity(observations);
    let mut report = AnonymityReport::default();
    for b in boundaries {
        let old: Vec<&AddressActivity> = acts
            .iter()
            .filter(|a| a.last_t < b.t && a.last_t.saturating_add(window_us) >= b.t)
            .collect();
        let new: Vec<&AddressActivity> = acts
            .iter()
            .filter(|a| a.first_t >= b.t && a.first_t <= b.t.saturating_add(window_us))
            .collect();
        let sets = old
            .iter()
            .map(|o| {
                let n = new.iter().filter(|c| keep(o, c)).count();
                (o.addr, n)
            })
            .collect();
        report.boundaries.push(BoundaryAnonymity {
            index: b.index,
            t: b.t,
            sets,
        });
    }
    report
}

/// Forges a well-formed data frame at a chosen receiver address; used to
/// test whether anything acknowledges a harvested base address.
pub fn forge_probe(target: MacAddress, source: MacAddress, bssid: MacAddress) -> Frame {
    Frame::data(
        target,
        source,
        bssid,
        crate::frame::SeqControl { sn: 1, frag: 0 },
        crate::frame::CcmpHeader { pn: 1, key_id: 0 },
        vec![0u8; 16],
    )
}

/// WPA2 caveat: an eavesdropper that captured the handshake and knows the
/// passphrase can derive the PTK and simply recompute every re-randomized
/// address. Linking degenerates to exact recomputation.
pub fn link_with_keys(keys: &[(MacAddress, Ptk)], boundaries: &[Boundary]) -> LinkageHypothesis {
    let mut links = Vec::new();
    for b in boundaries {
        for (base, ptk) in keys {
            links.push(Link {
                old: derive_rerand_mac(*base, ptk, b.index - 1),
                new: derive_rerand_mac(*base, ptk, b.index),
                confidence: 1.0,
            });
        }
    }
    LinkageHypothesis { links }
}

/// One true old -> new transition recorded by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthLink {
    pub boundary: u64,
    pub station: usize,
    pub old: MacAddress,
    pub new: MacAddress,
}

/// Linker score: overall accuracy plus per-boundary tallies for
/// standard-error estimates.
#[derive(Debug, Clone, Default)]
pub struct LinkScore {
    pub accuracy: f64,
    pub per_boundary: Vec<BoundaryScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryScore {
    pub boundary: u64,
    pub correct: usize,
    pub total: usize,
}

impl LinkScore {
    /// Mean and standard error of the per-boundary accuracy.
    pub fn mean_and_stderr(&self) -> (f64, f64) {
        let n = self.per_boundary.len();
        if n == 0 {
            return (self.accuracy, 0.0);
        }
        let accs: Vec<f64> = self
            .per_boundary
            .iter()
            .map(|b| b.correct as f64 / b.total.max(1) as f64)
            .collect();
        let mean = accs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return (mean, 0.0);
        }
        let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, (var / n as f64).sqrt())
    }
}

/// Fraction of true boundary links the hypothesis identified. An empty
/// truth (no rotations happened) scores 1.0 vacuously.
pub fn score_linkage(truth: &[TruthLink], hypothesis: &LinkageHypothesis) -> LinkScore {
    if truth.is_empty() {
        return LinkScore {
            accuracy: 1.0,
            per_boundary: Vec::new(),
        };
    }
    let mut by_boundary: BTreeMap<u64, BoundaryScore> = BTreeMap::new();
    let mut correct = 0usize;
    for t in truth {
        let entry = by_boundary.entry(t.boundary).or_insert(BoundaryScore {
            boundary: t.boundary,
            correct: 0,
            total: 0,
        });
        entry.total += 1;
        if hypothesis.contains(t.old, t.new) {
            entry.correct += 1;
            correct += 1;
        }
    }
    LinkScore {
        accuracy: correct as f64 / truth.len() as f64,
        per_boundary: by_boundary.into_values().collect(),
    }
}
