//! 64-bit FNV-1a.
//!
//! Used for signature-file checksums and the Bloom filter's double hashing.
//! The seeded variant absorbs the seed's eight little-endian bytes before the
//! item, so `fnv1a_64_seeded(s, x) == fnv1a_64(s.to_le_bytes() ++ x)`.

pub const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv1a64(u64);

impl Default for Fnv1a64 {
    fn default() -> Self {
        Self(OFFSET_BASIS)
    }
}

impl Fnv1a64 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(seed: u64) -> Self {
        let mut h = Self::new();
        h.update(&seed.to_le_bytes());
        h
    }

    pub fn update(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
        self.0 = h;
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a64::new();
    h.update(bytes);
    h.finish()
}

pub fn fnv1a_64_seeded(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = Fnv1a64::with_seed(seed);
    h.update(bytes);
    h.finish()
}
