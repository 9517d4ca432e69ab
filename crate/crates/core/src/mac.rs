//! Link-layer addresses and their unicast/locally-administered bit semantics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A 6-octet IEEE 802 MAC address.
///
/// Octet 0 carries the two flag bits that matter here: bit 0 is the
/// group/unicast bit (0 = unicast) and bit 1 is the locally-administered
/// bit (1 = locally administered). Every address produced by the
/// re-randomization derivation has bit0 = 0 and bit1 = 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    pub const BROADCAST: MacAddress = MacAddress([0xFF; 6]);

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }

    /// Group bit clear.
    pub fn is_unicast(&self) -> bool {
        self.0[0] & 0x01 == 0
    }

    pub fn is_locally_administered(&self) -> bool {
        self.0[0] & 0x02 == 0x02
    }

    /// Unicast and locally administered: the bit pattern every randomized
    /// or re-randomized address must satisfy.
    pub fn is_valid_randomized(&self) -> bool {
        self.is_unicast() && self.is_locally_administered()
    }

    /// Forces the unicast + locally-administered bit pattern onto octet 0.
    pub fn with_randomized_bits(mut self) -> MacAddress {
        self.0[0] = (self.0[0] & 0xFE) | 0x02;
        self
    }

    /// Plain 12-digit hex form, no separators (log and vector-file format).
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<MacAddress, MacParseError> {
        let bytes = hex::decode(s).map_err(|_| MacParseError(s.to_string()))?;
        let octets: [u8; 6] = bytes.try_into().map_err(|_| MacParseError(s.to_string()))?;
        Ok(MacAddress(octets))
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid MAC address: {0:?}")]
pub struct MacParseError(pub String);

impl FromStr for MacAddress {
    type Err = MacParseError;

    /// Accepts `aa:bb:cc:dd:ee:ff` or plain 12-digit hex.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 6 {
                return Err(MacParseError(s.to_string()));
            }
            let mut octets = [0u8; 6];
            for (i, p) in parts.iter().enumerate() {
                octets[i] = u8::from_str_radix(p, 16).map_err(|_| MacParseError(s.to_string()))?;
            }
            Ok(MacAddress(octets))
        } else {
            Self::from_hex(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_bits() {
        assert!(MacAddress([0x02, 0, 0, 0, 0, 1]).is_valid_randomized());
        assert!(!MacAddress([0x03, 0, 0, 0, 0, 1]).is_valid_randomized()); // group bit set
        assert!(!MacAddress([0x00, 0, 0, 0, 0, 1]).is_valid_randomized()); // globally administered
        assert!(MacAddress::BROADCAST.is_broadcast());
        assert!(!MacAddress::BROADCAST.is_unicast());
    }

    #[test]
    fn randomized_bit_fix() {
        let m = MacAddress([0xFF, 1, 2, 3, 4, 5]).with_randomized_bits();
        assert_eq!(m.0[0], 0xFE & 0xFF | 0x02);
        assert!(m.is_valid_randomized());
        let m = MacAddress([0x00, 1, 2, 3, 4, 5]).with_randomized_bits();
        assert_eq!(m.0[0], 0x02);
    }

    #[test]
    fn display_and_parse() {
        let m = MacAddress([0x02, 0x11, 0x22, 0x33, 0x44, 0x55]);
        assert_eq!(m.to_string(), "02:11:22:33:44:55");
        assert_eq!("02:11:22:33:44:55".parse::<MacAddress>().unwrap(), m);
        assert_eq!("021122334455".parse::<MacAddress>().unwrap(), m);
        assert_eq!(MacAddress::from_hex(&m.to_hex()).unwrap(), m);
        assert!("02:11:22:33:44".parse::<MacAddress>().is_err());
        assert!("zz1122334455".parse::<MacAddress>().is_err());
    }
}
