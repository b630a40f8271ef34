//! Packed bit vectors over GF(2).
//!
//! Everything the protocols move around — queries, answers, one-time pads,
//! raw keys, database planes — is a bit string, so this type is the workhorse
//! of the crate. Bits are indexed from 0; word storage is little-endian
//! (bit `i` lives in word `i / 64` at position `i % 64`). Vectors up to 128
//! bits stay inline (no heap allocation), which matters in the exhaustive
//! correctness sweeps.
//!
//! The canonical hex form used in transcripts is `"<len>:<hex>"` where the
//! hex encodes the underlying bytes in order, bit `i` sitting in byte `i / 8`
//! at position `i % 8` (LSB first). Unused bits of the last byte are zero.

use crate::error::{Error, Result};
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;
use std::fmt;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BitVec {
    len: usize,
    words: SmallVec<[u64; 2]>,
}

#[inline]
fn word_count(len: usize) -> usize {
    (len + 63) / 64
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: smallvec::smallvec![0u64; word_count(len)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = BitVec::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut v = BitVec::zeros(len);
        for i in 0..len {
            if f(i) {
                v.set(i, true);
            }
        }
        v
    }

    /// Low `len` bits of `word`, as a vector. Requires `len <= 64`.
    pub fn from_word(word: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mut v = BitVec::zeros(len);
        if len > 0 {
            v.words[0] = word & mask_low(len);
        }
        v
    }

    /// Parse a 0/1 string; the leftmost character becomes bit 0.
    pub fn parse_bits(s: &str) -> Result<Self> {
        let mut v = BitVec::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                _ => return Err(Error::Malformed(format!("bad bit character {c:?}"))),
            }
        }
        Ok(v)
    }

    pub fn random(rng: &mut impl Rng, len: usize) -> Self {
        let mut v = BitVec::zeros(len);
        for w in v.words.iter_mut() {
            *w = rng.gen();
        }
        v.normalize();
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let w = &mut self.words[i / 64];
        if value {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    #[inline]
    pub fn toggle(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        if value {
            self.set(self.len - 1, true);
        }
    }

    pub fn extend_from(&mut self, other: &BitVec) {
        // Simple bit-at-a-time append; only used on cold paths (key layout,
        // wire encoding of small messages).
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    pub fn concat(parts: &[&BitVec]) -> Self {
        let mut out = BitVec::zeros(0);
        for p in parts {
            out.extend_from(p);
        }
        out
    }

    /// Copy of bits `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = BitVec::zeros(len);
        let mut i = 0;
        while i < len {
            let take = (len - i).min(64);
            let chunk = self.extract(start + i, take);
            if take == 64 {
                out.words[i / 64] = chunk;
            } else {
                // i is a multiple of 64 here, so this lands in one word
                out.words[i / 64] |= chunk;
            }
            i += take;
        }
        out
    }

    /// Read up to 64 bits starting at `start` as a word (bit `start` in the LSB).
    #[inline]
    pub fn extract(&self, start: usize, count: usize) -> u64 {
        debug_assert!(count <= 64 && start + count <= self.len);
        if count == 0 {
            return 0;
        }
        let w = start / 64;
        let off = start % 64;
        let mut out = self.words[w] >> off;
        if off != 0 && w + 1 < self.words.len() {
            out |= self.words[w + 1] << (64 - off);
        }
        out & mask_low(count)
    }

    #[inline]
    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "xor of unequal lengths");
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a ^= *b;
        }
    }

    pub fn xored(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    #[inline]
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn parity(&self) -> bool {
        self.words.iter().fold(0u64, |acc, w| acc ^ w).count_ones() & 1 == 1
    }

    /// Parity of `self & mask` (both full-length).
    #[inline]
    pub fn and_parity(&self, mask: &BitVec) -> bool {
        debug_assert_eq!(self.len, mask.len);
        let mut acc = 0u64;
        for (a, b) in self.words.iter().zip(mask.words.iter()) {
            acc ^= a & b;
        }
        acc.count_ones() & 1 == 1
    }

    /// Parity of `self[start .. start + mask.len()] & mask` without copying.
    #[inline]
    pub fn and_parity_at(&self, start: usize, mask: &BitVec) -> bool {
        debug_assert!(start + mask.len <= self.len);
        let mut acc = 0u64;
        let mut i = 0;
        while i < mask.len {
            let take = (mask.len - i).min(64);
            acc ^= self.extract(start + i, take) & mask.words[i / 64];
            i += take;
        }
        acc.count_ones() & 1 == 1
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            std::iter::successors(Some(w), |&rem| Some(rem & rem.wrapping_sub(1)))
                .take_while(|&rem| rem != 0)
                .map(move |rem| wi * 64 + rem.trailing_zeros() as usize)
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn as_words(&self) -> &[u64] {
        &self.words
    }

    /// Clear any bits beyond `len` in the last word.
    fn normalize(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= mask_low(tail);
            }
        }
    }

    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; (self.len + 7) / 8];
        for (i, b) in bytes.iter_mut().enumerate() {
            let take = (self.len - i * 8).min(8);
            *b = self.extract(i * 8, take) as u8;
        }
        format!("{}:{}", self.len, hex::encode(bytes))
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let (len_part, hex_part) = s
            .split_once(':')
            .ok_or_else(|| Error::Malformed(format!("bit vector {s:?} missing ':'")))?;
        let len: usize = len_part
            .parse()
            .map_err(|_| Error::Malformed(format!("bad bit length in {s:?}")))?;
        let bytes = hex::decode(hex_part)
            .map_err(|e| Error::Malformed(format!("bad hex in {s:?}: {e}")))?;
        if bytes.len() != (len + 7) / 8 {
            return Err(Error::Malformed(format!(
                "bit vector {s:?}: {} bytes given, {} expected",
                bytes.len(),
                (len + 7) / 8
            )));
        }
        let mut v = BitVec::zeros(len);
        for (i, &b) in bytes.iter().enumerate() {
            for j in 0..8 {
                let idx = i * 8 + j;
                let bit = (b >> j) & 1 == 1;
                if idx < len {
                    if bit {
                        v.set(idx, true);
                    }
                } else if bit {
                    return Err(Error::Malformed(format!(
                        "bit vector {s:?} has nonzero padding bits"
                    )));
                }
            }
        }
        Ok(v)
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }
}

#[inline]
fn mask_low(n: usize) -> u64 {
    debug_assert!(n >= 1 && n <= 64);
    u64::MAX >> (64 - n)
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "bits[{}]", self.to_bit_string())
        } else {
            write!(f, "bits[{}]", self.to_hex())
        }
    }
}

impl Serialize for BitVec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BitVec::from_hex(&s).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn basic_get_set() {
        let mut v = BitVec::zeros(130);
        assert_eq!(v.len(), 130);
        assert_eq!(v.count_ones(), 0);
        v.set(0, true);
        v.set(64, true);
        v.set(129, true);
        assert!(v.get(0) && v.get(64) && v.get(129));
        assert!(!v.get(1) && !v.get(63) && !v.get(128));
        assert_eq!(v.count_ones(), 3);
        assert_eq!(v.iter_ones().collect::<Vec<_>>(), vec![0, 64, 129]);
        v.toggle(64);
        assert_eq!(v.count_ones(), 2);
    }

    #[test]
    fn parse_and_strings() {
        let v = BitVec::parse_bits("0100").unwrap();
        assert!(!v.get(0) && v.get(1) && !v.get(2) && !v.get(3));
        assert_eq!(v.to_bit_string(), "0100");
        assert!(BitVec::parse_bits("01x0").is_err());
    }

    #[test]
    fn hex_round_trip_hand_cases() {
        // 9 bits 1_0000_0001 -> bytes [0x01, 0x01]
        let v = BitVec::parse_bits("100000001").unwrap();
        assert_eq!(v.to_hex(), "9:0101");
        assert_eq!(BitVec::from_hex("9:0101").unwrap(), v);
        // zero-length vector
        assert_eq!(BitVec::zeros(0).to_hex(), "0:");
        // nonzero padding bits must be rejected
        assert!(BitVec::from_hex("9:01ff").is_err());
        assert!(BitVec::from_hex("9:01").is_err());
        assert!(BitVec::from_hex("nine:01").is_err());
    }

    #[test]
    fn extract_crosses_words() {
        let mut v = BitVec::zeros(100);
        v.set(62, true);
        v.set(63, true);
        v.set(64, true);
        v.set(66, true);
        assert_eq!(v.extract(62, 5), 0b10111);
        assert_eq!(v.extract(0, 64), (1 << 62) | (1 << 63));
        assert_eq!(v.extract(64, 3), 0b101);
    }

    #[test]
    fn and_parity_at_matches_slice() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let big = BitVec::random(&mut rng, 300);
        for start in [0usize, 1, 63, 64, 65, 120] {
            for mlen in [1usize, 2, 64, 65, 130] {
                if start + mlen > big.len() {
                    continue;
                }
                let mask = BitVec::random(&mut rng, mlen);
                let direct = big.slice(start, mlen).and_parity(&mask);
                assert_eq!(big.and_parity_at(start, &mask), direct);
            }
        }
    }

    #[test]
    fn serde_is_hex_string() {
        let v = BitVec::parse_bits("100000001").unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"9:0101\"");
        let back: BitVec = serde_json::from_str("\"9:0101\"").unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn hex_round_trips(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let v = BitVec::from_bools(&bits);
            let back = BitVec::from_hex(&v.to_hex()).unwrap();
            prop_assert_eq!(back, v);
        }

        #[test]
        fn xor_is_involutive(a in proptest::collection::vec(any::<bool>(), 1..150),
                             seed in any::<u64>()) {
            let v = BitVec::from_bools(&a);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pad = BitVec::random(&mut rng, v.len());
            let once = v.xored(&pad);
            prop_assert_eq!(once.xored(&pad), v);
        }

        #[test]
        fn slice_concat_round_trips(bits in proptest::collection::vec(any::<bool>(), 1..150),
                                    cut in 0usize..150) {
            let v = BitVec::from_bools(&bits);
            let cut = cut % (v.len() + 1);
            let a = v.slice(0, cut);
            let b = v.slice(cut, v.len() - cut);
            prop_assert_eq!(BitVec::concat(&[&a, &b]), v);
        }

        #[test]
        fn iter_ones_matches_gets(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let v = BitVec::from_bools(&bits);
            let ones: Vec<usize> = v.iter_ones().collect();
            let expect: Vec<usize> = (0..v.len()).filter(|&i| v.get(i)).collect();
            prop_assert_eq!(ones, expect);
        }
    }
}
