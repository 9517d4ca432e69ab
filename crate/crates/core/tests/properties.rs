//! Property tests for the codec, the derivation, the PN sizing rule and
//! the conversion table's structural invariants.

use proptest::prelude::*;

use remac_core::frame::{
    compute_fcs, decode_frame, encode_frame, CcmpHeader, DecodeError, Frame, FrameType,
    SeqControl, PN_MAX,
};
use remac_core::mac::MacAddress;
use remac_core::rerand::{choose_pn_split, derive_rerand_mac, Ptk};
use remac_core::table::MacTable;

fn arb_mac() -> impl Strategy<Value = MacAddress> {
    any::<[u8; 6]>().prop_map(MacAddress)
}

fn arb_frame() -> impl Strategy<Value = Frame> {
    let payload = proptest::collection::vec(any::<u8>(), 0..64);
    let control = (arb_mac(), arb_mac(), any::<u16>(), 0..3u8).prop_map(|(ra, ta, dur, kind)| {
        match kind {
            0 => Frame::ack(ra, dur),
            1 => Frame::cts(ra, dur),
            _ => Frame::rts(ra, ta, dur),
        }
    });
    let mgmt = (
        arb_mac(),
        arb_mac(),
        arb_mac(),
        0..4096u16,
        0..16u8,
        0..5usize,
        payload.clone(),
    )
        .prop_map(|(a1, a2, a3, sn, frag, which, payload)| {
            let ftype = [
                FrameType::AssocReq,
                FrameType::AssocResp,
                FrameType::Auth,
                FrameType::Disassoc,
                FrameType::Beacon,
            ][which];
            Frame::management(ftype, a1, a2, a3, SeqControl { sn, frag }, payload)
        });
    let data = (
        arb_mac(),
        arb_mac(),
        arb_mac(),
        0..4096u16,
        0..16u8,
        0..=PN_MAX,
        0..4u8,
        payload,
    )
        .prop_map(|(a1, a2, a3, sn, frag, pn, key_id, payload)| {
            Frame::data(
                a1,
                a2,
                a3,
                SeqControl { sn, frag },
                CcmpHeader { pn, key_id },
                payload,
            )
        });
    prop_oneof![control, mgmt, data]
}

proptest! {
    #[test]
    fn frame_round_trip(frame in arb_frame()) {
        let bytes = encode_frame(&frame).unwrap();
        let back = decode_frame(&bytes).unwrap();
        prop_assert_eq!(&back, &frame);
        prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
    }

    #[test]
    fn any_single_bit_flip_breaks_the_fcs(frame in arb_frame(), bit_sel in any::<proptest::sample::Index>()) {
        let mut bytes = encode_frame(&frame).unwrap();
        let bit = bit_sel.index(bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        let is_bad_fcs = matches!(decode_frame(&bytes), Err(DecodeError::BadFcs { .. }));
        prop_assert!(is_bad_fcs);
    }

    #[test]
    fn seq_control_packs_losslessly(sn in 0..4096u16, frag in 0..16u8) {
        let sc = SeqControl { sn, frag };
        let rt = SeqControl::unpack(sc.pack());
        prop_assert_eq!((rt.sn, rt.frag), (sn, frag));
    }

    #[test]
    fn ccmp_pn_round_trips(pn in 0..=PN_MAX, key_id in 0..4u8) {
        let h = CcmpHeader { pn, key_id };
        prop_assert_eq!(CcmpHeader::decode(h.encode()), h);
    }

    #[test]
    fn fcs_is_deterministic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        prop_assert_eq!(compute_fcs(&bytes), compute_fcs(&bytes));
    }

    #[test]
    fn derived_addresses_are_valid_and_agree(
        base in arb_mac(),
        ptk in any::<[u8; 32]>(),
        u in any::<u64>(),
    ) {
        let base = base.with_randomized_bits();
        let ptk = Ptk(ptk);
        // The "station side" and the "AP side" compute independently.
        let station_view = derive_rerand_mac(base, &ptk, u);
        let ap_view = derive_rerand_mac(base, &ptk, u);
        prop_assert_eq!(station_view, ap_view);
        prop_assert!(station_view.is_valid_randomized());
    }

    #[test]
    fn pn_split_is_tight(
        bitrate in 1_000u64..100_000_000_000,
        t in 1u64..100_000,
        frame_bits in 64u64..100_000,
    ) {
        match choose_pn_split(bitrate, t, frame_bits) {
            Ok(params) => {
                let frames = (u128::from(bitrate) * u128::from(t)).div_ceil(u128::from(frame_bits));
                let l = params.pn_low_bits();
                prop_assert!((1u128 << l) >= frames, "2^l must cover the interval");
                if l > 1 {
                    prop_assert!((1u128 << (l - 1)) < frames, "l must be minimal");
                }
                prop_assert_eq!(params.pn_high_bits() + l, 48);
            }
            Err(_) => {
                // Only legitimately unrepresentable splits may error.
                let frames = (u128::from(bitrate) * u128::from(t)).div_ceil(u128::from(frame_bits));
                prop_assert!(frames > (1u128 << 47));
            }
        }
    }
}

/// Random operation sequences keep the table's two-keys-per-station
/// invariant and base/re-randomized bijectivity.
#[derive(Debug, Clone)]
enum TableOp {
    Insert(u8),
    Remove(u8),
    Rotate,
    Expire(u64),
    Touch(u8, u64),
}

fn arb_op() -> impl Strategy<Value = TableOp> {
    prop_oneof![
        (0..40u8).prop_map(TableOp::Insert),
        (0..40u8).prop_map(TableOp::Remove),
        Just(TableOp::Rotate),
        (0..1_000u64).prop_map(TableOp::Expire),
        ((0..40u8), (0..1_000u64)).prop_map(|(i, t)| TableOp::Touch(i, t)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn table_invariants_hold_under_any_op_sequence(ops in proptest::collection::vec(arb_op(), 1..60)) {
        let mut table = MacTable::new(32);
        let mut u = 0u64;
        let mut ids = std::collections::HashMap::new();
        for op in ops {
            match op {
                TableOp::Insert(i) => {
                    let base = MacAddress([0x02, 0, 0, 0, 1, i]);
                    if let Ok(rec) = table.insert_station(base, Ptk([i; 32]), u, 500) {
                        ids.insert(i, rec.id);
                    }
                }
                TableOp::Remove(i) => {
                    if let Some(id) = ids.remove(&i) {
                        table.remove_station(id);
                    }
                }
                TableOp::Rotate => {
                    u += 1;
                    table.rotate_all(u).unwrap();
                }
                TableOp::Expire(now) => {
                    table.expire_inactive(now, 600);
                    ids.retain(|_, id| table.get(*id).is_some());
                }
                TableOp::Touch(i, t) => {
                    if let Some(id) = ids.get(&i) {
                        table.touch(*id, t);
                    }
                }
            }
            // Two live keys per station, resolving to the same record.
            prop_assert_eq!(table.key_count(), 2 * table.len());
            let mut rerands = std::collections::HashSet::new();
            for rec in table.records() {
                prop_assert_eq!(table.lookup(rec.base).unwrap().id, rec.id);
                prop_assert_eq!(table.lookup(rec.rerand).unwrap().id, rec.id);
                prop_assert!(rerands.insert(rec.rerand), "bijectivity");
            }
        }
    }
}

/// The nonce-wrap guarantee at the paper-scale operating point: 50-byte
/// frames at 10 Gbps keep the wrap interval at 60 days or more for every
/// interval length from 1 second to 24 hours.
#[test]
fn wrap_interval_sweep_never_dips_below_60_days() {
    const DAY: u128 = 86_400;
    let mut min_days = u128::MAX;
    for t in 1..=86_400u64 {
        let params = choose_pn_split(10_000_000_000, t, 400).unwrap();
        let days = params.wrap_interval_secs() / DAY;
        min_days = min_days.min(days);
    }
    assert!(min_days >= 60, "minimum wrap interval was {min_days} days");
}
