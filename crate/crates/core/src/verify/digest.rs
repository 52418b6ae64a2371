//! Keyed 128-bit digests and item tags (SipHash-2-4, 128-bit output).
//!
//! Canonical serialization: fixed-width little-endian words, length-prefixed.
//! A matrix is `rows: u64, cols: u64`, then its entries row-major as `u64`.
//! An item message is the domain byte `0x49`, then `value: u64`, `index: u64`.

use std::fmt;
use std::hash::Hasher;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use siphasher::sip128::{Hasher128, SipHasher24};

use crate::verify::matrix::Matrix;

/// A 128-bit fingerprint, serialized as 32 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub u128);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        u128::from_str_radix(&s, 16)
            .map(Digest)
            .map_err(serde::de::Error::custom)
    }
}

fn sip(key: &[u8; 16]) -> SipHasher24 {
    SipHasher24::new_with_key(key)
}

/// Per-run digest key. Digests are public values; the key only makes the
/// function unpredictable to code that never sees it.
#[derive(Clone)]
pub struct DigestKey([u8; 16]);

impl fmt::Debug for DigestKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DigestKey(..)")
    }
}

impl DigestKey {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        DigestKey(rng.gen())
    }

    pub fn from_bytes(key: [u8; 16]) -> Self {
        DigestKey(key)
    }

    /// Digest of an arbitrary byte string (length-prefixed).
    pub fn digest(&self, data: &[u8]) -> Digest {
        let mut h = sip(&self.0);
        h.write(&(data.len() as u64).to_le_bytes());
        h.write(data);
        Digest(h.finish128().as_u128())
    }

    /// Digest of a matrix under the canonical serialization, streamed
    /// without materializing the bytes.
    pub fn digest_matrix(&self, m: &Matrix) -> Digest {
        let mut h = sip(&self.0);
        h.write(&(m.rows() as u64).to_le_bytes());
        h.write(&(m.cols() as u64).to_le_bytes());
        for e in m.entries() {
            h.write(&e.value().to_le_bytes());
        }
        Digest(h.finish128().as_u128())
    }
}

/// Authenticator binding a `(value, index)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemTag(pub u128);

fn tag_message(key: &[u8; 16], value: u64, index: u64) -> u128 {
    let mut h = sip(key);
    h.write(&[0x49]);
    h.write(&value.to_le_bytes());
    h.write(&index.to_le_bytes());
    h.finish128().as_u128()
}

/// The run's signing key. Held by the source only.
pub struct Signer {
    key: [u8; 16],
}

impl fmt::Debug for Signer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Signer(..)")
    }
}

impl Signer {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Signer { key: rng.gen() }
    }

    pub fn sign_item(&self, value: u64, index: u64) -> ItemTag {
        ItemTag(tag_message(&self.key, value, index))
    }

    /// A handle that can check tags but exposes no way to create them.
    pub fn verifier(&self) -> TagVerifier {
        TagVerifier { key: self.key }
    }
}

/// Verification handle handed to honest workers and the target.
#[derive(Clone)]
pub struct TagVerifier {
    key: [u8; 16],
}

impl fmt::Debug for TagVerifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TagVerifier(..)")
    }
}

impl TagVerifier {
    pub fn verify_item(&self, value: u64, index: u64, tag: ItemTag) -> bool {
        tag_message(&self.key, value, index) == tag.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use std::collections::HashSet;

    #[test]
    fn digests_are_deterministic_and_keyed() {
        let mut rng = stream(1, Stream::Source);
        let k1 = DigestKey::random(&mut rng);
        let k2 = DigestKey::random(&mut rng);
        assert_eq!(k1.digest(b"abc"), k1.digest(b"abc"));
        assert_ne!(k1.digest(b"abc"), k2.digest(b"abc"));
        assert_ne!(k1.digest(b"abc"), k1.digest(b"abd"));
        let m = Matrix::random(2, 3, &mut rng);
        let mut bytes = Vec::new();
        m.write_dense(&mut bytes).unwrap();
        let mut h = sip(&k1.0);
        h.write(&bytes);
        assert_eq!(k1.digest_matrix(&m).0, h.finish128().as_u128());
        assert_ne!(k1.digest_matrix(&m), k1.digest_matrix(&Matrix::zeros(2, 3)));
    }

    #[test]
    fn no_collisions_on_many_payloads() {
        let k = DigestKey::from_bytes([9; 16]);
        let seen: HashSet<Digest> = (0..200_000u64).map(|i| k.digest(&i.to_le_bytes())).collect();
        assert_eq!(seen.len(), 200_000);
    }

    #[test]
    fn tags_verify_exactly_genuine_pairs() {
        let mut rng = stream(2, Stream::Source);
        let s = Signer::random(&mut rng);
        let v = s.verifier();
        let t = s.sign_item(42, 7);
        assert!(v.verify_item(42, 7, t));
        assert!(!v.verify_item(43, 7, t));
        assert!(!v.verify_item(42, 8, t));
        let forged = (0..100_000)
            .filter(|_| v.verify_item(42, 7, ItemTag(rng.gen())))
            .count();
        assert_eq!(forged, 0);
    }

    #[test]
    fn digest_serializes_as_hex() {
        let d = Digest(0xabc);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, "\"00000000000000000000000000000abc\"");
        assert_eq!(serde_json::from_str::<Digest>(&s).unwrap(), d);
    }
}
