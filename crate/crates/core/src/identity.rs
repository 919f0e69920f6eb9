//! Clock identities derived from network addresses, and the binding check.

use std::fmt;
use std::str::FromStr;

use crate::wire::ClockIdentity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NetworkAddress {
    Mac6([u8; 6]),
    Ipv4([u8; 4]),
}

impl NetworkAddress {
    pub fn kind(&self) -> AddressKind {
        match self {
            NetworkAddress::Mac6(_) => AddressKind::Mac6,
            NetworkAddress::Ipv4(_) => AddressKind::Ipv4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressKind {
    Mac6,
    Ipv4,
}

impl fmt::Display for NetworkAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkAddress::Mac6(m) => write!(
                f,
                "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
                m[0], m[1], m[2], m[3], m[4], m[5]
            ),
            NetworkAddress::Ipv4(a) => write!(f, "{}.{}.{}.{}", a[0], a[1], a[2], a[3]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid network address {0:?}")]
pub struct AddressParseError(pub String);

impl FromStr for NetworkAddress {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddressParseError(s.to_string());
        if s.contains(':') {
            let parts: Vec<_> = s.split(':').collect();
            if parts.len() != 6 {
                return Err(err());
            }
            let mut m = [0u8; 6];
            for (o, p) in m.iter_mut().zip(&parts) {
                if p.len() != 2 {
                    return Err(err());
                }
                *o = u8::from_str_radix(p, 16).map_err(|_| err())?;
            }
            Ok(NetworkAddress::Mac6(m))
        } else {
            let a: std::net::Ipv4Addr = s.parse().map_err(|_| err())?;
            Ok(NetworkAddress::Ipv4(a.octets()))
        }
    }
}

/// EUI-64 style construction with `0xFFFE` at octets 3..5.
///
/// MAC `a:b:c:d:e:f` maps to `a b c FF FE d e f`; IPv4 `w.x.y.z` maps to
/// `00 w x FF FE y z 00`.
pub fn clock_id_from_network(addr: &NetworkAddress) -> ClockIdentity {
    match *addr {
        NetworkAddress::Mac6([a, b, c, d, e, f]) => {
            ClockIdentity([a, b, c, 0xFF, 0xFE, d, e, f])
        }
        NetworkAddress::Ipv4([w, x, y, z]) => ClockIdentity([0x00, w, x, 0xFF, 0xFE, y, z, 0x00]),
    }
}

/// Inverse of [`clock_id_from_network`] for a known address family. Used by
/// slaves to address the master from its clock ID alone.
pub fn network_from_clock_id(id: &ClockIdentity, kind: AddressKind) -> Option<NetworkAddress> {
    let o = id.0;
    if o[3] != 0xFF || o[4] != 0xFE {
        return None;
    }
    match kind {
        AddressKind::Mac6 => Some(NetworkAddress::Mac6([o[0], o[1], o[2], o[5], o[6], o[7]])),
        AddressKind::Ipv4 => {
            (o[0] == 0 && o[7] == 0).then_some(NetworkAddress::Ipv4([o[1], o[2], o[5], o[6]]))
        }
    }
}

/// Accepts iff the claimed clock ID is the one derived from the address the
/// message was observed to come from. Ports do not participate.
pub fn verify_binding(claimed: &ClockIdentity, observed: &NetworkAddress) -> bool {
    clock_id_from_network(observed) == *claimed
}
