//! Runtime Wi-Fi MAC re-randomization core.
//!
//! Connected stations and their AP derive a fresh, synchronized MAC address
//! from `SHA-256(base || PTK || interval)` every `T` seconds and rewrite
//! frame headers on the verge of transmission, so the protocol stacks keep
//! operating on the stable base address while the air only ever carries
//! short-lived re-randomized addresses. Sequence numbers and CCMP packet
//! numbers are reset at each rotation, with the packet number split into an
//! interval-driven high part and a per-interval counter so a reset never
//! reuses a nonce.
//!
//! The crate provides the frame codec, the derivation and reset state
//! machines, the AP-side conversion table, station/AP endpoint models, a
//! set of passive-eavesdropper linkers for measuring unlinkability, and a
//! deterministic discrete-event simulator that ties them together.

pub mod adversary;
pub mod endpoint;
pub mod frame;
pub mod mac;
pub mod rerand;
pub mod sim;
pub mod table;
pub mod vectors;

pub use frame::{compute_fcs, decode_frame, encode_frame, Frame, FrameType};
pub use mac::MacAddress;
pub use rerand::{
    choose_pn_split, derive_rerand_mac, interval_index, NonceMode, Ptk, RerandContext,
    RerandParams,
};
pub use table::MacTable;
