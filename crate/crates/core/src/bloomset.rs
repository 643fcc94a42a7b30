//! Bloom filter with a fixed, portable hashing scheme.
//!
//! Bit positions are `(h1 + i*h2) mod m` for `i` in `0..k`, computed in
//! 128-bit arithmetic, where `h1` and `h2` are FNV-1a 64 of the item under
//! [`SEED1`] and [`SEED2`] (see [`crate::fnv`] for how a seed is absorbed).
//! When `h2 mod m` is zero, `h2 = 1` is used instead so the probes do not
//! collapse onto one bit.
//!
//! Serialized form: the ASCII header line
//! `BLOOM v1 <m> <k> <n_inserted> <seed1> <seed2>\n` (decimal fields) followed
//! by `ceil(m/8)` bytes, bit `j` stored in byte `j/8` at bit `j%8`.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::fnv::fnv1a_64_seeded;

pub const SEED1: u64 = 0x9E37_79B9_7F4A_7C15;
pub const SEED2: u64 = 0xC2B2_AE3D_27D4_EB4F;
pub const MAX_K: u32 = 32;
/// 2^34 bits, 2 GiB.
pub const MAX_BITS: u64 = 1 << 34;

#[derive(Debug, Error, PartialEq)]
pub enum BloomError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("malformed serialized filter: {0}")]
    Malformed(String),
}

/// Inserts take `&self` and set bits with atomic OR, so a reader that
/// observes a completed insert sees all of its bits.
#[derive(Debug)]
pub struct BloomSet {
    words: Vec<AtomicU64>,
    m: u64,
    k: u32,
    n_inserted: AtomicU64,
    seed1: u64,
    seed2: u64,
    p_target: Option<f64>,
}

impl Clone for BloomSet {
    fn clone(&self) -> Self {
        Self {
            words: self
                .words
                .iter()
                .map(|w| AtomicU64::new(w.load(Ordering::Acquire)))
                .collect(),
            m: self.m,
            k: self.k,
            n_inserted: AtomicU64::new(self.n_inserted()),
            seed1: self.seed1,
            seed2: self.seed2,
            p_target: self.p_target,
        }
    }
}

impl PartialEq for BloomSet {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
            && self.k == other.k
            && self.seed1 == other.seed1
            && self.seed2 == other.seed2
            && self.n_inserted() == other.n_inserted()
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a.load(Ordering::Acquire) == b.load(Ordering::Acquire))
    }
}

/// `(m, k)` for the given design load.
pub fn optimal_params(n_expected: u64, p_target: f64) -> Result<(u64, u32), BloomError> {
    if n_expected == 0 {
        return Err(BloomError::InvalidParameters("n_expected must be at least 1".into()));
    }
    if !(p_target > 0.0 && p_target < 1.0) {
        return Err(BloomError::InvalidParameters(format!(
            "p_target {p_target} outside (0, 1)"
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (n_expected as f64 * (1.0 / p_target).ln() / (ln2 * ln2)).ceil();
    if m > MAX_BITS as f64 {
        return Err(BloomError::InvalidParameters(format!(
            "filter would need {m} bits (limit {MAX_BITS})"
        )));
    }
    let m = (m as u64).max(1);
    let k = ((m as f64 / n_expected as f64) * ln2).round().max(1.0);
    if k > MAX_K as f64 {
        return Err(BloomError::InvalidParameters(format!(
            "filter would need {k} hash functions (limit {MAX_K})"
        )));
    }
    Ok((m, k as u32))
}

impl BloomSet {
    pub fn create(n_expected: u64, p_target: f64) -> Result<Self, BloomError> {
        let (m, k) = optimal_params(n_expected, p_target)?;
        let mut s = Self::with_params(m, k)?;
        s.p_target = Some(p_target);
        Ok(s)
    }

    pub fn with_params(m: u64, k: u32) -> Result<Self, BloomError> {
        if m == 0 || m > MAX_BITS {
            return Err(BloomError::InvalidParameters(format!("m = {m} outside 1..={MAX_BITS}")));
        }
        if !(1..=MAX_K).contains(&k) {
            return Err(BloomError::InvalidParameters(format!("k = {k} outside 1..={MAX_K}")));
        }
        Ok(Self {
            words: (0..m.div_ceil(64)).map(|_| AtomicU64::new(0)).collect(),
            m,
            k,
            n_inserted: AtomicU64::new(0),
            seed1: SEED1,
            seed2: SEED2,
            p_target: None,
        })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_inserted(&self) -> u64 {
        self.n_inserted.load(Ordering::Acquire)
    }

    /// Design false-positive rate; unknown for deserialized filters.
    pub fn p_target(&self) -> Option<f64> {
        self.p_target
    }

    pub fn positions(&self, item: &[u8]) -> impl Iterator<Item = u64> {
        let m = self.m as u128;
        let h1 = fnv1a_64_seeded(self.seed1, item) as u128;
        let mut h2 = fnv1a_64_seeded(self.seed2, item) as u128;
        if h2 % m == 0 {
            h2 = 1;
        }
        (0..self.k as u128).map(move |i| ((h1 + i * h2) % m) as u64)
    }

    pub fn insert(&self, item: &[u8]) {
        for p in self.positions(item) {
            self.words[(p / 64) as usize].fetch_or(1 << (p % 64), Ordering::AcqRel);
        }
        self.n_inserted.fetch_add(1, Ordering::AcqRel);
    }

    pub fn contains(&self, item: &[u8]) -> bool {
        self.positions(item).all(|p| self.bit(p))
    }

    fn bit(&self, p: u64) -> bool {
        self.words[(p / 64) as usize].load(Ordering::Acquire) & (1 << (p % 64)) != 0
    }

    pub fn count_set_bits(&self) -> u64 {
        self.words
            .iter()
            .map(|w| u64::from(w.load(Ordering::Acquire).count_ones()))
            .sum()
    }

    pub fn fill_ratio(&self) -> f64 {
        self.count_set_bits() as f64 / self.m as f64
    }

    /// `fill_ratio ^ k`.
    pub fn fp_rate_estimate(&self) -> f64 {
        self.fill_ratio().powi(self.k as i32)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = format!(
            "BLOOM v1 {} {} {} {} {}\n",
            self.m,
            self.k,
            self.n_inserted(),
            self.seed1,
            self.seed2
        )
        .into_bytes();
        let n_bytes = self.m.div_ceil(8) as usize;
        let start = out.len();
        for w in &self.words {
            out.extend_from_slice(&w.load(Ordering::Acquire).to_le_bytes());
        }
        out.truncate(start + n_bytes);
        out
    }

    pub fn deserialize(raw: &[u8]) -> Result<Self, BloomError> {
        let bad = |s: &str| BloomError::Malformed(s.to_string());
        let nl = raw
            .iter()
            .take(128)
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("no header line"))?;
        let header = std::str::from_utf8(&raw[..nl]).map_err(|_| bad("header is not ASCII"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        let [magic, version, m, k, n, s1, s2] = fields.as_slice() else {
            return Err(bad("header needs 7 fields"));
        };
        if *magic != "BLOOM" || *version != "v1" {
            return Err(bad("not a BLOOM v1 filter"));
        }
        let num = |s: &str, what: &str| -> Result<u64, BloomError> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
                return Err(BloomError::Malformed(format!("bad {what} {s:?}")));
            }
            s.parse().map_err(|_| BloomError::Malformed(format!("bad {what} {s:?}")))
        };
        let (m, k, n) = (num(m, "m")?, num(k, "k")?, num(n, "n_inserted")?);
        let k = u32::try_from(k).map_err(|_| bad("k out of range"))?;
        // Check the length before allocating, so a header cannot ask for gigabytes.
        let body = &raw[nl + 1..];
        if body.len() as u64 != m.div_ceil(8) {
            return Err(BloomError::Malformed(format!(
                "expected {} bit-array bytes, found {}",
                m.div_ceil(8),
                body.len()
            )));
        }
        let mut set = Self::with_params(m, k).map_err(|e| BloomError::Malformed(e.to_string()))?;
        set.seed1 = num(s1, "seed1")?;
        set.seed2 = num(s2, "seed2")?;
        if m % 8 != 0 && body[body.len() - 1] >> (m % 8) != 0 {
            return Err(bad("padding bits beyond m are set"));
        }
        for (w, chunk) in set.words.iter_mut().zip(body.chunks(8)) {
            let mut b = [0u8; 8];
            b[..chunk.len()].copy_from_slice(chunk);
            *w.get_mut() = u64::from_le_bytes(b);
        }
        *set.n_inserted.get_mut() = n;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sizing() {
        let s = BloomSet::create(1000, 0.01).unwrap();
        assert_eq!((s.m(), s.k()), (9586, 7));
        let s = BloomSet::create(1, 0.5).unwrap();
        assert_eq!((s.m(), s.k()), (2, 1));
        assert!(matches!(BloomSet::create(0, 0.01), Err(BloomError::InvalidParameters(_))));
        assert!(BloomSet::create(10, 0.0).is_err());
        assert!(BloomSet::create(10, 1.0).is_err());
        assert!(BloomSet::create(10, f64::NAN).is_err());
        assert!(BloomSet::create(10, 1e-12).is_err());
    }

    #[test]
    fn insert_and_contains() {
        let s = BloomSet::create(100, 0.01).unwrap();
        assert!(!s.contains(b"10.0.0.1|POST|/index.php"));
        assert_eq!(s.fp_rate_estimate(), 0.0);
        s.insert(b"10.0.0.1|POST|/index.php");
        assert!(s.contains(b"10.0.0.1|POST|/index.php"));
        let bits = s.count_set_bits();
        s.insert(b"10.0.0.1|POST|/index.php");
        assert_eq!(s.count_set_bits(), bits);
        assert_eq!(s.n_inserted(), 2);
    }

    #[test]
    fn saturated_estimate_is_one() {
        let s = BloomSet::with_params(8, 3).unwrap();
        for i in 0..1000u32 {
            s.insert(&i.to_le_bytes());
        }
        assert_eq!(s.fill_ratio(), 1.0);
        assert_eq!(s.fp_rate_estimate(), 1.0);
    }

    #[test]
    fn design_load_fill_and_estimate() {
        let s = BloomSet::create(10_000, 0.01).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            s.insert(&rng.gen::<[u8; 16]>());
        }
        let fill = s.fill_ratio();
        assert!((fill - 0.5).abs() <= 0.02, "fill {fill}");
        let est = s.fp_rate_estimate();
        assert!(est > 0.005 && est < 0.02, "estimate {est}");
    }

    #[test]
    fn known_positions_are_stable() {
        // pins the hashing scheme so a silent change breaks loudly
        let s = BloomSet::with_params(1 << 20, 4).unwrap();
        let h1 = fnv1a_64_seeded(SEED1, b"abc") as u128;
        let h2 = fnv1a_64_seeded(SEED2, b"abc") as u128;
        let want: Vec<u64> = (0..4u128).map(|i| ((h1 + i * h2) % (1 << 20)) as u64).collect();
        assert_eq!(s.positions(b"abc").collect::<Vec<_>>(), want);
    }

    #[test]
    fn serialization_layout() {
        let s = BloomSet::with_params(10, 1).unwrap();
        s.insert(b"x");
        let raw = s.serialize();
        let header = format!("BLOOM v1 10 1 1 {SEED1} {SEED2}\n");
        assert!(raw.starts_with(header.as_bytes()));
        assert_eq!(raw.len(), header.len() + 2);
        let p = s.positions(b"x").next().unwrap();
        assert_eq!(raw[header.len() + (p / 8) as usize], 1 << (p % 8));
        assert_eq!(BloomSet::deserialize(&raw).unwrap(), s);
    }

    #[test]
    fn rejects_bad_encodings() {
        let s = BloomSet::with_params(10, 1).unwrap();
        let mut raw = s.serialize();
        *raw.last_mut().unwrap() = 0xff; // bits 10..15 are padding
        assert!(BloomSet::deserialize(&raw).is_err());
        assert!(BloomSet::deserialize(b"BLOOM v1 10 1 0 1 2\n\x00").is_err());
        assert!(BloomSet::deserialize(b"BLOOM v2 8 1 0 1 2\n\x00").is_err());
        assert!(BloomSet::deserialize(b"BLOOM v1 8 0 0 1 2\n\x00").is_err());
        assert!(BloomSet::deserialize(b"BLOOM v1 08 1 0 1 2\n\x00").is_err());
        assert!(BloomSet::deserialize(b"").is_err());
        // Huge m with a short body is refused without allocating m bits.
        assert!(BloomSet::deserialize(b"BLOOM v1 8000000000 1 0 1 2\n\x00").is_err());
    }

    proptest::proptest! {
        #[test]
        fn no_false_negatives(items in proptest::collection::vec(proptest::collection::vec(proptest::num::u8::ANY, 0..40), 1..200)) {
            let s = BloomSet::create(items.len() as u64, 0.05).unwrap();
            for it in &items {
                s.insert(it);
            }
            for it in &items {
                proptest::prop_assert!(s.contains(it));
            }
            let back = BloomSet::deserialize(&s.serialize()).unwrap();
            for it in &items {
                proptest::prop_assert!(back.contains(it));
            }
            proptest::prop_assert_eq!(back, s);
        }
    }
}
