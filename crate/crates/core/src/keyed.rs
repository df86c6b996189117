use std::hash::{BuildHasherDefault, Hasher};
use std::ops::Deref;
use std::sync::Arc;

/// Genotypes that can be fingerprinted by content.
pub trait Fingerprint {
    fn fingerprint_into<H: Hasher>(&self, state: &mut H);
}

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}

/// Two-lane word mixer used for content fingerprints.
struct MixHasher {
    a: u64,
    b: u64,
}

impl MixHasher {
    fn new() -> Self {
        MixHasher {
            a: 0x5eed,
            b: 0xfeed_beef,
        }
    }

    fn finish128(&self) -> u128 {
        ((fmix64(self.a) as u128) << 64) | fmix64(self.b ^ 0x9e37_79b9_7f4a_7c15) as u128
    }
}

impl Hasher for MixHasher {
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(word) ^ ((chunk.len() as u64) << 56));
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.a = fmix64(self.a ^ v).wrapping_add(0x9e37_79b9_7f4a_7c15);
        self.b = fmix64(self.b.rotate_left(29) ^ v.wrapping_mul(0x2545_f491_4f6c_dd1d)).wrapping_add(0xd6e8_feb8_6659_fd93);
    }

    fn write_u8(&mut self, v: u8) {
        self.write_u64(v as u64 | 0x100);
    }

    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }

    fn finish(&self) -> u64 {
        fmix64(self.a)
    }
}

/// 128-bit content fingerprint, built from two independently mixed lanes.
pub(crate) fn fingerprint<G: Fingerprint + ?Sized>(g: &G) -> u128 {
    let mut h = MixHasher::new();
    g.fingerprint_into(&mut h);
    h.finish128()
}

/// Hasher for maps keyed by fingerprints, which are already well mixed.
#[derive(Default)]
pub(crate) struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ b as u64;
        }
    }

    fn write_u128(&mut self, v: u128) {
        self.0 = self.0.rotate_left(17) ^ (v as u64) ^ ((v >> 64) as u64);
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = self.0.rotate_left(17) ^ v;
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

pub(crate) type KeyBuild = BuildHasherDefault<KeyHasher>;

/// A shared genotype together with its content fingerprint.
///
/// Two `Keyed` values with equal keys hold equal genotypes, which lets the
/// engine memoize pairwise scores and drop duplicate archive entries.
#[derive(Debug)]
pub struct Keyed<G> {
    key: u128,
    genotype: Arc<G>,
}

impl<G> Clone for Keyed<G> {
    fn clone(&self) -> Self {
        Keyed {
            key: self.key,
            genotype: Arc::clone(&self.genotype),
        }
    }
}

impl<G: Fingerprint> Keyed<G> {
    pub fn new(genotype: G) -> Self {
        Keyed {
            key: fingerprint(&genotype),
            genotype: Arc::new(genotype),
        }
    }
}

impl<G> Keyed<G> {
    pub fn key(&self) -> u128 {
        self.key
    }

    pub fn genotype(&self) -> &G {
        &self.genotype
    }
}

impl<G> Deref for Keyed<G> {
    type Target = G;

    fn deref(&self) -> &G {
        &self.genotype
    }
}

impl<G> PartialEq for Keyed<G> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<G> Eq for Keyed<G> {}
