//! Verification kernels: field arithmetic, Freivalds' check, keyed digests,
//! item tags and majority resolution.

pub mod digest;
pub mod field;
pub mod freivalds;
pub mod matrix;

use std::collections::HashMap;

pub use digest::{Digest, DigestKey, ItemTag, Signer, TagVerifier};
pub use field::{FieldElem, MODULUS};
pub use freivalds::{freivalds, freivalds_once};
pub use matrix::Matrix;

/// The value held by strictly more than half of `ds`, if any.
pub fn majority_digest(ds: &[Digest]) -> Option<Digest> {
    let mut counts: HashMap<Digest, usize> = HashMap::new();
    for &d in ds {
        *counts.entry(d).or_default() += 1;
    }
    counts.into_iter().find(|&(_, c)| 2 * c > ds.len()).map(|(d, _)| d)
}
