//! Derivation of re-randomized MAC addresses and the per-rotation reset
//! state machines for sequence numbers and CCMP packet numbers.
//!
//! A station and its AP share a PTK. Every `T` seconds both sides
//! independently hash `base_mac || ptk || interval_index` with SHA-256,
//! keep the first six digest octets, and force the unicast +
//! locally-administered bits. Sequence numbers reset to zero at each
//! rotation. Packet numbers use a split counter: the high `h` bits follow
//! the interval index, the low `l` bits count frames within the interval,
//! so resets never reuse a nonce while the wrap interval stays at `2^h * T`
//! seconds.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::frame::PN_MAX;
use crate::mac::MacAddress;

/// Pairwise transient key; an opaque 32-octet shared secret.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Ptk(pub [u8; 32]);

impl Ptk {
    pub fn from_rng<R: RngCore>(rng: &mut R) -> Ptk {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Ptk(secret)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Ptk> {
        let bytes = hex::decode(s).ok()?;
        Some(Ptk(bytes.try_into().ok()?))
    }
}

impl std::fmt::Debug for Ptk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Ptk({}..)", hex::encode(&self.0[..4]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RerandError {
    #[error("interval length T must be at least 1 second")]
    ZeroIntervalLength,
    #[error("invalid PN split h={h}, l={l}: need h + l == 48 and 1 <= h <= 47")]
    InvalidSplit { h: u8, l: u8 },
    #[error("parameters admit more frames per interval than the nonce space (need l >= {needed_l})")]
    NonceSpaceTooSmall { needed_l: u8 },
    #[error("PN-L space exhausted before the next rotation")]
    NonceSpaceExhausted,
    #[error("non-monotonic interval index: current {current}, requested {requested}")]
    NonMonotonicInterval { current: u64, requested: u64 },
}

/// Rotation parameters: interval length `T` and the PN-H/PN-L bit split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RerandParams {
    interval_secs: u64,
    pn_high_bits: u8,
    pn_low_bits: u8,
}

impl RerandParams {
    pub fn new(interval_secs: u64, pn_high_bits: u8, pn_low_bits: u8) -> Result<Self, RerandError> {
        if interval_secs == 0 {
            return Err(RerandError::ZeroIntervalLength);
        }
        if u16::from(pn_high_bits) + u16::from(pn_low_bits) != 48
            || pn_high_bits == 0
            || pn_high_bits > 47
        {
            return Err(RerandError::InvalidSplit {
                h: pn_high_bits,
                l: pn_low_bits,
            });
        }
        Ok(RerandParams {
            interval_secs,
            pn_high_bits,
            pn_low_bits,
        })
    }

    pub fn interval_secs(&self) -> u64 {
        self.interval_secs
    }

    pub fn pn_high_bits(&self) -> u8 {
        self.pn_high_bits
    }

    pub fn pn_low_bits(&self) -> u8 {
        self.pn_low_bits
    }

    /// Seconds between two PN-H wraps: `2^h * T`.
    pub fn wrap_interval_secs(&self) -> u128 {
        (1u128 << self.pn_high_bits) * u128::from(self.interval_secs)
    }
}

/// Interval index `u = floor(t_epoch / T)`.
pub fn interval_index(t_epoch_secs: u64, interval_secs: u64) -> Result<u64, RerandError> {
    if interval_secs == 0 {
        return Err(RerandError::ZeroIntervalLength);
    }
    Ok(t_epoch_secs / interval_secs)
}

/// Derives the re-randomized address for interval `u`:
/// first six octets of SHA-256(base || ptk || u as 8-octet big-endian),
/// with the unicast and locally-administered bits forced.
pub fn derive_rerand_mac(base: MacAddress, ptk: &Ptk, u: u64) -> MacAddress {
    let mut hasher = Sha256::new();
    hasher.update(base.0);
    hasher.update(ptk.0);
    hasher.update(u.to_be_bytes());
    let digest = hasher.finalize();
    let mut octets = [0u8; 6];
    octets.copy_from_slice(&digest[..6]);
    MacAddress(octets).with_randomized_bits()
}

/// Collision salt applied when a freshly derived address clashes with an
/// existing table key: re-derive once with the top interval bit flipped.
pub fn salted_interval(u: u64) -> u64 {
    u ^ (1 << 63)
}

/// Chooses the PN split for the given channel capacity: the smallest `l`
/// with `2^l >= ceil(bitrate * T / frame_len)`, clamped to at least 1.
/// Pure integer arithmetic; no floating-point log.
pub fn choose_pn_split(
    bitrate_bps: u64,
    interval_secs: u64,
    frame_len_bits: u64,
) -> Result<RerandParams, RerandError> {
    if interval_secs == 0 {
        return Err(RerandError::ZeroIntervalLength);
    }
    assert!(bitrate_bps > 0 && frame_len_bits > 0, "inputs must be positive");
    let bits = u128::from(bitrate_bps) * u128::from(interval_secs);
    let frames = bits.div_ceil(u128::from(frame_len_bits));
    let mut l: u8 = 0;
    while l < 64 && (1u128 << l) < frames {
        l += 1;
    }
    let l = l.max(1);
    if l >= 48 {
        return Err(RerandError::NonceSpaceTooSmall { needed_l: l });
    }
    RerandParams::new(interval_secs, 48 - l, l)
}

/// Nonce reset policy applied at each rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonceMode {
    /// Split counter: PN-H = u mod 2^h, PN-L = 0.
    Controlled,
    /// Full 48-bit PN drawn from a seeded generator at each reset.
    RandomReset,
    /// Full PN reset to 0; deliberately vulnerable baseline.
    NaiveZero,
}

/// Per-transmitter packet-number state.
#[derive(Debug, Clone)]
pub struct NonceState {
    mode: NonceMode,
    params: RerandParams,
    pn_high: u64,
    pn_low: u64,
    rng_seed: u64,
}

impl NonceState {
    /// Builds the state and performs the initial reset for interval `u`.
    pub fn new(mode: NonceMode, params: RerandParams, rng_seed: u64, u: u64) -> NonceState {
        let mut state = NonceState {
            mode,
            params,
            pn_high: 0,
            pn_low: 0,
            rng_seed,
        };
        state.reset(u);
        state
    }

    pub fn mode(&self) -> NonceMode {
        self.mode
    }

    /// Applies the mode's reset for interval `u`.
    pub fn reset(&mut self, u: u64) {
        match self.mode {
            NonceMode::Controlled => {
                self.pn_high = u % (1 << self.params.pn_high_bits);
                self.pn_low = 0;
            }
            NonceMode::RandomReset => {
                // Stream selection makes the draw a pure function of
                // (seed, u): the same reset always yields the same PN.
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                rng.set_stream(u);
                self.pn_high = 0;
                self.pn_low = rng.next_u64() & PN_MAX;
            }
            NonceMode::NaiveZero => {
                self.pn_high = 0;
                self.pn_low = 0;
            }
        }
    }

    /// Returns the next PN to place on a frame.
    ///
    /// Controlled mode refuses to spill PN-L into PN-H: exhausting the
    /// per-interval space is an error, never a silent nonce reuse.
    pub fn next(&mut self) -> Result<u64, RerandError> {
        match self.mode {
            NonceMode::Controlled => {
                if self.pn_low >= (1 << self.params.pn_low_bits) {
                    return Err(RerandError::NonceSpaceExhausted);
                }
                let pn = (self.pn_high << self.params.pn_low_bits) | self.pn_low;
                self.pn_low += 1;
                Ok(pn)
            }
            NonceMode::RandomReset | NonceMode::NaiveZero => {
                let pn = self.pn_low;
                self.pn_low = (self.pn_low + 1) & PN_MAX;
                Ok(pn)
            }
        }
    }

    /// The PN the next call to [`next`](Self::next) would return.
    pub fn peek(&self) -> u64 {
        match self.mode {
            NonceMode::Controlled => (self.pn_high << self.params.pn_low_bits) | self.pn_low,
            _ => self.pn_low,
        }
    }
}

/// 12-bit sequence-number counter; wraps at 4096, reset to 0 at rotation.
#[derive(Debug, Clone, Copy, Default)]
pub struct SnState {
    next_sn: u16,
}

impl SnState {
    pub fn new() -> SnState {
        SnState { next_sn: 0 }
    }

    pub fn next(&mut self) -> u16 {
        let sn = self.next_sn;
        self.next_sn = (self.next_sn + 1) % 4096;
        sn
    }

    pub fn reset(&mut self) {
        self.next_sn = 0;
    }

    pub fn peek(&self) -> u16 {
        self.next_sn
    }
}

/// Per-station re-randomization context: everything one transmitter needs
/// to place the correct address, SN and PN on a frame.
#[derive(Debug, Clone)]
pub struct RerandContext {
    base_mac: MacAddress,
    ptk: Ptk,
    params: RerandParams,
    current_u: u64,
    current_mac: MacAddress,
    pub sn: SnState,
    pub nonce: NonceState,
}

impl RerandContext {
    /// Enters interval `u` directly (used right after association).
    pub fn new(
        base_mac: MacAddress,
        ptk: Ptk,
        params: RerandParams,
        nonce_mode: NonceMode,
        nonce_seed: u64,
        u: u64,
    ) -> RerandContext {
        RerandContext {
            base_mac,
            ptk,
            params,
            current_u: u,
            current_mac: derive_rerand_mac(base_mac, &ptk, u),
            sn: SnState::new(),
            nonce: NonceState::new(nonce_mode, params, nonce_seed, u),
        }
    }

    pub fn base_mac(&self) -> MacAddress {
        self.base_mac
    }

    pub fn ptk(&self) -> &Ptk {
        &self.ptk
    }

    pub fn params(&self) -> RerandParams {
        self.params
    }

    pub fn current_interval(&self) -> u64 {
        self.current_u
    }

    pub fn current_mac(&self) -> MacAddress {
        self.current_mac
    }

    /// Moves the address to interval `u` without touching the counters.
    /// [`rotate`](Self::rotate) is the normal entry point; this split
    /// exists so ablation runs can skip individual resets.
    pub fn advance_interval(&mut self, u: u64) -> Result<(), RerandError> {
        if u <= self.current_u {
            return Err(RerandError::NonMonotonicInterval {
                current: self.current_u,
                requested: u,
            });
        }
        self.current_u = u;
        self.current_mac = derive_rerand_mac(self.base_mac, &self.ptk, u);
        Ok(())
    }

    /// Full rotation into interval `u`: new address, SN reset, nonce reset.
    pub fn rotate(&mut self, u: u64) -> Result<(), RerandError> {
        self.advance_interval(u)?;
        self.sn.reset();
        self.nonce.reset(u);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t: u64, h: u8, l: u8) -> RerandParams {
        RerandParams::new(t, h, l).unwrap()
    }

    #[test]
    fn interval_index_floor() {
        assert_eq!(interval_index(0, 30).unwrap(), 0);
        assert_eq!(interval_index(59, 30).unwrap(), 1);
        assert_eq!(interval_index(1_700_000_000, 30).unwrap(), 56_666_666);
        assert_eq!(interval_index(10, 0), Err(RerandError::ZeroIntervalLength));
    }

    #[test]
    fn derivation_vectors() {
        // Frozen against an independent SHA-256 reference implementation.
        let cases = [
            ("020000000001", [0u8; 32], 0u64, "1a5da7c7a12b"),
            (
                "0a1b2c3d4e5f",
                core::array::from_fn(|i| i as u8),
                56_666_666,
                "9657ef5ebe69",
            ),
            ("c6ffb2040506", [0xFF; 32], (1 << 40) + 12_345, "8a35332bd6a4"),
        ];
        for (base, ptk, u, expected) in cases {
            let got = derive_rerand_mac(MacAddress::from_hex(base).unwrap(), &Ptk(ptk), u);
            assert_eq!(got.to_hex(), expected);
        }
    }

    #[test]
    fn derived_addresses_valid_and_deterministic() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let base = MacAddress(rng.gen::<[u8; 6]>()).with_randomized_bits();
            let ptk = Ptk::from_rng(&mut rng);
            let u: u64 = rng.gen();
            let a = derive_rerand_mac(base, &ptk, u);
            let b = derive_rerand_mac(base, &ptk, u);
            assert!(a.is_valid_randomized());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pn_split_examples() {
        let p = choose_pn_split(10_u64.pow(10), 1, 400).unwrap();
        assert_eq!((p.pn_low_bits(), p.pn_high_bits()), (25, 23));
        let p = choose_pn_split(10_u64.pow(10), 86_400, 400).unwrap();
        assert_eq!((p.pn_low_bits(), p.pn_high_bits()), (41, 7));
        assert_eq!(p.wrap_interval_secs(), 128 * 86_400);
        // One frame per interval clamps l to 1.
        let p = choose_pn_split(400, 1, 400).unwrap();
        assert_eq!((p.pn_low_bits(), p.pn_high_bits()), (1, 47));
        // More frames than the nonce space.
        assert!(matches!(
            choose_pn_split(2_000_000_000_000, 86_400, 400),
            Err(RerandError::NonceSpaceTooSmall { .. })
        ));
    }

    #[test]
    fn wrap_interval_values() {
        assert_eq!(params(1, 23, 25).wrap_interval_secs(), 8_388_608);
        assert_eq!(params(30, 24, 24).wrap_interval_secs(), 503_316_480);
        assert!(RerandParams::new(30, 0, 48).is_err());
        assert!(RerandParams::new(30, 30, 30).is_err());
        assert!(RerandParams::new(0, 24, 24).is_err());
    }

    #[test]
    fn controlled_reset_and_next() {
        let mut st = NonceState::new(NonceMode::Controlled, params(30, 24, 24), 0, 56_666_666);
        assert_eq!(st.next().unwrap(), 0x60AA_2A00_0000);
        assert_eq!(st.next().unwrap(), 0x60AA_2A00_0001);
        assert_eq!(st.next().unwrap(), 0x60AA_2A00_0002);
    }

    #[test]
    fn controlled_exhaustion() {
        let mut st = NonceState::new(NonceMode::Controlled, params(1, 47, 1), 0, 9);
        st.next().unwrap();
        st.next().unwrap();
        assert_eq!(st.next(), Err(RerandError::NonceSpaceExhausted));
    }

    #[test]
    fn naive_zero_resets_to_zero() {
        let mut st = NonceState::new(NonceMode::NaiveZero, params(1, 24, 24), 0, 41);
        assert_eq!(st.next().unwrap(), 0);
        assert_eq!(st.next().unwrap(), 1);
        st.reset(42);
        assert_eq!(st.next().unwrap(), 0);
    }

    #[test]
    fn random_reset_reproducible() {
        let p = params(1, 24, 24);
        let mut a = NonceState::new(NonceMode::RandomReset, p, 99, 7);
        let mut b = NonceState::new(NonceMode::RandomReset, p, 99, 7);
        let first = a.peek();
        assert_eq!(a.next().unwrap(), b.next().unwrap());
        // Resetting back to the same interval re-yields the same PN.
        a.next().unwrap();
        a.reset(7);
        assert_eq!(a.peek(), first);
        // Different intervals draw different values.
        b.reset(8);
        assert_ne!(b.peek(), first);
        assert!(b.peek() <= PN_MAX);
    }

    #[test]
    fn controlled_nonces_unique_across_rotations() {
        use std::collections::HashSet;
        let p = params(1, 40, 8);
        let mut st = NonceState::new(NonceMode::Controlled, p, 0, 0);
        let mut seen = HashSet::new();
        for u in 0..200u64 {
            if u > 0 {
                st.reset(u);
            }
            for _ in 0..256 {
                assert!(seen.insert(st.next().unwrap()));
            }
        }
        assert_eq!(seen.len(), 200 * 256);
    }

    #[test]
    fn naive_zero_duplicates_within_two_rotations() {
        use std::collections::HashSet;
        let mut st = NonceState::new(NonceMode::NaiveZero, params(1, 24, 24), 0, 0);
        let mut seen = HashSet::new();
        let mut dup = false;
        for u in 0..2u64 {
            if u > 0 {
                st.reset(u);
            }
            for _ in 0..10 {
                dup |= !seen.insert(st.next().unwrap());
            }
        }
        assert!(dup);
    }

    #[test]
    fn sn_counter() {
        let mut sn = SnState::new();
        assert_eq!((sn.next(), sn.next(), sn.next()), (0, 1, 2));
        sn.next_sn = 4095;
        assert_eq!(sn.next(), 4095);
        assert_eq!(sn.next(), 0);
        sn.reset();
        assert_eq!(sn.next(), 0);
    }

    #[test]
    fn rotate_composes_resets() {
        let base = MacAddress::from_hex("0a1b2c3d4e5f").unwrap();
        let ptk = Ptk(core::array::from_fn(|i| i as u8));
        let p = params(30, 24, 24);
        let mut ctx = RerandContext::new(base, ptk, p, NonceMode::Controlled, 0, 56_666_665);
        ctx.sn.next();
        ctx.nonce.next().unwrap();
        ctx.rotate(56_666_666).unwrap();
        assert_eq!(ctx.current_mac().to_hex(), "9657ef5ebe69");
        assert_eq!(ctx.current_mac(), derive_rerand_mac(base, &ptk, 56_666_666));
        assert_eq!(ctx.sn.peek(), 0);
        assert_eq!(ctx.nonce.peek(), 0x60AA_2A00_0000);
        // Time must move forward.
        assert_eq!(
            ctx.rotate(56_666_666),
            Err(RerandError::NonMonotonicInterval {
                current: 56_666_666,
                requested: 56_666_666
            })
        );
    }

    #[test]
    fn distinct_ptks_distinct_addresses() {
        let base = MacAddress::from_hex("020000000001").unwrap();
        let a = derive_rerand_mac(base, &Ptk([0u8; 32]), 5);
        let b = derive_rerand_mac(base, &Ptk([1u8; 32]), 5);
        assert_ne!(a, b);
    }
}
