//! The linear baseline protocol: databases of `n` single-bit entries, query
//! vectors of length `n`.
//!
//! The user samples a uniform `r`, sends `q1 = r` to one server and
//! `q2 = r ⊕ i` to the other (`i` the selector vector, honestly a unit
//! vector). Each server replies with the inner product of its query and the
//! database, masked by one shared key bit; XORing the answers yields
//! `⊕_{i_x = 1} w_x`. Database privacy here is the relaxed notion: a cheating
//! user learns exactly one XOR of entries, witnessed by `q1 ⊕ q2`.

use crate::bits::BitVec;
use rand::Rng;

/// Sample the user's randomness: a uniform `n`-bit vector.
pub fn sample_randomness(n: usize, rng: &mut impl Rng) -> BitVec {
    BitVec::random(rng, n)
}

/// `q1 = r`, `q2 = r ⊕ i`.
pub fn derive_queries(i: &BitVec, r: &BitVec) -> (BitVec, BitVec) {
    assert_eq!(i.len(), r.len(), "selector/randomness length mismatch");
    (r.clone(), r.xored(i))
}

/// One server's answer for one database plane: `⟨q, w⟩ ⊕ k`.
pub fn answer(q: &BitVec, w: &BitVec, k: bool) -> bool {
    assert_eq!(q.len(), w.len(), "query/database length mismatch");
    q.and_parity(w) ^ k
}

/// Combine the two answers; the shared key bits cancel.
pub fn decode(a1: bool, a2: bool) -> bool {
    a1 ^ a2
}

/// The functional a (possibly dishonest) user learns: `q1 ⊕ q2` selects the
/// XOR of entries the combined answers reveal.
pub fn learned_selector(q1: &BitVec, q2: &BitVec) -> BitVec {
    q1.xored(q2)
}
