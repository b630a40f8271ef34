//! The cube protocol: a two-server scheme for a database of `n = m^3` bits
//! arranged as an `m × m × m` cube, with conditional-disclosure masking so
//! that a (possibly dishonest) user learns exactly one database bit.
//!
//! The user holds an index `x = (x1, x2, x3)` and samples randomness
//! `r = (three subsets of {1..m}, three displacements in {1..m})`. Server 1
//! receives the randomness itself as its query; server 2 receives the sets
//! with `x_i` toggled and the displacements `x_i - r_i (mod m)`. Each server
//! answers with XORs of sub-cubes of the database, masked by a shared
//! correlated key (the [`CdsKey`]); combining both answers at the positions
//! determined by `x` recovers `w_x` and, by the masking, nothing else.
//!
//! Conventions: sets over `{1..m}` are `m`-bit vectors with element `j`
//! at bit `j - 1`; displacements take values in `{1..m}` with the modular
//! representative `0` written as `m`.

use crate::bits::BitVec;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of database entries for cube dimension `m`.
pub fn db_len(m: usize) -> usize {
    m * m * m
}

/// Position of an entry in the flattened database.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CubeIndex([usize; 3]);

impl CubeIndex {
    /// Coordinates are 1-based and must lie in `{1..m}`.
    pub fn new(coords: [usize; 3], m: usize) -> Result<Self> {
        if coords.iter().any(|&c| c < 1 || c > m) {
            return Err(Error::InvalidArgument(format!(
                "cube index {coords:?} out of range for m = {m}"
            )));
        }
        Ok(CubeIndex(coords))
    }

    pub fn coords(&self) -> [usize; 3] {
        self.0
    }

    /// Flat index `(x1-1) m^2 + (x2-1) m + (x3-1)`.
    pub fn flat(&self, m: usize) -> usize {
        let [x1, x2, x3] = self.0;
        ((x1 - 1) * m + (x2 - 1)) * m + (x3 - 1)
    }

    pub fn from_flat(idx: usize, m: usize) -> Self {
        CubeIndex([idx / (m * m) + 1, (idx / m) % m + 1, idx % m + 1])
    }

    pub fn sample(m: usize, rng: &mut impl Rng) -> Self {
        CubeIndex([
            rng.gen_range(1..=m),
            rng.gen_range(1..=m),
            rng.gen_range(1..=m),
        ])
    }
}

/// The user's per-run randomness: three subsets and three displacements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRandomness {
    pub sets: [BitVec; 3],
    pub disps: [usize; 3],
}

impl UserRandomness {
    /// Sampling order is fixed (sets 1..3, then displacements 1..3) so that
    /// seeded runs are reproducible.
    pub fn sample(m: usize, rng: &mut impl Rng) -> Self {
        let sets = [
            BitVec::random(rng, m),
            BitVec::random(rng, m),
            BitVec::random(rng, m),
        ];
        let disps = [
            rng.gen_range(1..=m),
            rng.gen_range(1..=m),
            rng.gen_range(1..=m),
        ];
        UserRandomness { sets, disps }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.sets.iter().any(|s| s.len() != m) {
            return Err(Error::DimensionMismatch(format!("set length != m = {m}")));
        }
        if self.disps.iter().any(|&d| d < 1 || d > m) {
            return Err(Error::InvalidArgument(format!(
                "displacement out of {{1..{m}}}"
            )));
        }
        Ok(())
    }
}

/// A query as received by either server: three subsets plus three
/// displacements. Structurally identical for both servers; the relation
/// between the two queries is what encodes `x`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct B2Query {
    pub sets: [BitVec; 3],
    pub disps: [usize; 3],
}

impl B2Query {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.sets.iter().any(|s| s.len() != m) {
            return Err(Error::DimensionMismatch(format!("set length != m = {m}")));
        }
        if self.disps.iter().any(|&d| d < 1 || d > m) {
            return Err(Error::InvalidArgument(format!(
                "displacement out of {{1..{m}}}"
            )));
        }
        Ok(())
    }
}

/// Toggle element `j` (1-based) of a subset: inserts it if absent, removes it
/// if present.
pub fn sym_diff(s: &BitVec, j: usize) -> BitVec {
    assert!(j >= 1 && j <= s.len(), "element {j} outside 1..={}", s.len());
    let mut out = s.clone();
    out.toggle(j - 1);
    out
}

/// Modular representative of `v` in `{1..m}` (`0` maps to `m`).
fn mod_rep(v: isize, m: usize) -> usize {
    (v - 1).rem_euclid(m as isize) as usize + 1
}

/// Build the two queries from the index and the user randomness. Query 1 is
/// the randomness verbatim; query 2 toggles `x_i` in each set and takes
/// displacement `x_i - r_i (mod m)`.
pub fn derive_queries(x: &CubeIndex, r: &UserRandomness, m: usize) -> (B2Query, B2Query) {
    let [x1, x2, x3] = x.coords();
    let q1 = B2Query {
        sets: r.sets.clone(),
        disps: r.disps,
    };
    let q2 = B2Query {
        sets: [
            sym_diff(&r.sets[0], x1),
            sym_diff(&r.sets[1], x2),
            sym_diff(&r.sets[2], x3),
        ],
        disps: [
            mod_rep(x1 as isize - r.disps[0] as isize, m),
            mod_rep(x2 as isize - r.disps[1] as isize, m),
            mod_rep(x3 as isize - r.disps[2] as isize, m),
        ],
    };
    (q1, q2)
}

/// σ labels carrying a `Y` vector, in key-layout order. The label `σ1σ2σ3`
/// is stored as the integer `σ1·4 + σ2·2 + σ3`.
pub const SIGMA_Y: [u8; 6] = [0b001, 0b010, 0b100, 0b011, 0b101, 0b110];

/// The correlated key shared by the two servers, masking every answer
/// component. `t` carries one bit per σ ∈ {0,1}³ with even overall parity
/// (the σ = 111 slot is determined by the other seven); `y` carries one
/// `m`-bit vector per mixed σ; `z` and `u` mask the disclosure bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdsKey {
    u: [bool; 3],
    t: [bool; 8],
    y: [BitVec; 6], // order SIGMA_Y
    z: [BitVec; 3],
}

impl CdsKey {
    pub fn new(u: [bool; 3], t: [bool; 8], y: [BitVec; 6], z: [BitVec; 3]) -> Result<Self> {
        if t.iter().fold(false, |acc, &b| acc ^ b) {
            return Err(Error::InvalidArgument(
                "t mask bits must have even parity".into(),
            ));
        }
        let m = y[0].len();
        if y.iter().any(|v| v.len() != m) || z.iter().any(|v| v.len() != m) {
            return Err(Error::DimensionMismatch("y/z vector lengths differ".into()));
        }
        Ok(CdsKey { u, t, y, z })
    }

    /// Independent key bits for cube dimension `m`: 3 (`u`) + 7 (free `t`
    /// slots) + 6m (`y`) + 3m (`z`).
    pub fn free_bits_len(m: usize) -> usize {
        9 * m + 10
    }

    /// Expand a string of `9m + 10` independent bits into a key. Layout:
    /// `u1 u2 u3 | t(000..110) | y(σ in SIGMA_Y order) | z1 z2 z3`, with
    /// `t(111)` set to the parity of the other seven.
    pub fn from_free_bits(bits: &BitVec, m: usize) -> Result<Self> {
        if bits.len() != Self::free_bits_len(m) {
            return Err(Error::DimensionMismatch(format!(
                "{} key bits given, {} required for m = {m}",
                bits.len(),
                Self::free_bits_len(m)
            )));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let v = bits.slice(at, n);
            at += n;
            v
        };
        let ubits = take(3);
        let u = [ubits.get(0), ubits.get(1), ubits.get(2)];
        let tbits = take(7);
        let mut t = [false; 8];
        for s in 0..7 {
            t[s] = tbits.get(s);
        }
        t[7] = tbits.parity();
        let y = [take(m), take(m), take(m), take(m), take(m), take(m)];
        let z = [take(m), take(m), take(m)];
        Ok(CdsKey { u, t, y, z })
    }

    /// Inverse of [`CdsKey::from_free_bits`].
    pub fn to_free_bits(&self) -> BitVec {
        let mut out = BitVec::zeros(0);
        for b in self.u {
            out.push(b);
        }
        for s in 0..7 {
            out.push(self.t[s]);
        }
        for v in &self.y {
            out.extend_from(v);
        }
        for v in &self.z {
            out.extend_from(v);
        }
        out
    }

    pub fn sample(m: usize, rng: &mut impl Rng) -> Self {
        let bits = BitVec::random(rng, Self::free_bits_len(m));
        Self::from_free_bits(&bits, m).expect("length is constructed to match")
    }

    pub fn m(&self) -> usize {
        self.y[0].len()
    }

    pub fn u(&self, i: usize) -> bool {
        self.u[i]
    }

    /// `t` mask for σ ∈ 0..=7 (integer encoding of σ1σ2σ3).
    pub fn t(&self, sigma: u8) -> bool {
        self.t[sigma as usize]
    }

    /// `y` vector for a mixed σ (panics on σ ∈ {000, 111}).
    pub fn y(&self, sigma: u8) -> &BitVec {
        let idx = SIGMA_Y
            .iter()
            .position(|&s| s == sigma)
            .expect("y is defined only for mixed sigma");
        &self.y[idx]
    }

    pub fn z(&self, i: usize) -> &BitVec {
        &self.z[i]
    }
}

/// Answer of server 1: the base sub-cube bit, one masked sub-cube vector per
/// direction, the three disclosure bits, and the three forwarded `y` bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dc1Answer {
    pub a000: bool,
    pub a100: BitVec,
    pub a010: BitVec,
    pub a001: BitVec,
    pub a_cds: [bool; 3],
    pub y_extra: [bool; 3],
}

/// Answer of server 2, mirroring [`Dc1Answer`] on the complementary σ labels
/// (its direction vectors additionally carry the `z` masks).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dc2Answer {
    pub a111: bool,
    pub a011: BitVec,
    pub a101: BitVec,
    pub a110: BitVec,
    pub a_cds: [bool; 3],
    pub y_extra: [bool; 3],
}

/// XOR of the database over the sub-cube `s1 × s2 × s3` (sets 1-based as bit
/// vectors). `w` is the flattened `m^3`-bit database.
pub fn subcube_xor(w: &BitVec, m: usize, s1: &BitVec, s2: &BitVec, s3: &BitVec) -> bool {
    debug_assert_eq!(w.len(), db_len(m));
    let mut acc = false;
    for k1 in s1.iter_ones() {
        for k2 in s2.iter_ones() {
            acc ^= w.and_parity_at((k1 * m + k2) * m, s3);
        }
    }
    acc
}

fn check_query(q: &B2Query, m: usize) {
    assert!(q.sets.iter().all(|s| s.len() == m), "query set length != m");
    assert!(
        q.disps.iter().all(|&d| d >= 1 && d <= m),
        "query displacement outside 1..=m"
    );
}

/// Server 1's answer. Each direction vector decomposes as
/// `subcube(S_i ∆ {j}, ..) = subcube(S..) ⊕ subcube({j}, ..)`, which lets the
/// base sub-cube bit be reused across all `j`.
pub fn answer_dc1(q: &B2Query, w: &BitVec, cds: &CdsKey) -> Dc1Answer {
    let m = cds.m();
    check_query(q, m);
    debug_assert_eq!(w.len(), db_len(m));
    let [s1, s2, s3] = &q.sets;
    let [d1, d2, d3] = q.disps;
    let base = subcube_xor(w, m, s1, s2, s3);

    let mut a100 = BitVec::zeros(m);
    let mut a010 = BitVec::zeros(m);
    let mut a001 = BitVec::zeros(m);
    for j0 in 0..m {
        // direction 1: S1 replaced by {j}
        let mut row = false;
        for k2 in s2.iter_ones() {
            row ^= w.and_parity_at((j0 * m + k2) * m, s3);
        }
        a100.set(
            j0,
            base ^ row ^ cds.y(0b100).get((j0 + m - d1) % m) ^ cds.t(0b100),
        );

        // direction 2: S2 replaced by {j}
        let mut row = false;
        for k1 in s1.iter_ones() {
            row ^= w.and_parity_at((k1 * m + j0) * m, s3);
        }
        a010.set(
            j0,
            base ^ row ^ cds.y(0b010).get((j0 + m - d2) % m) ^ cds.t(0b010),
        );

        // direction 3: S3 replaced by {j}
        let mut row = false;
        for k1 in s1.iter_ones() {
            for k2 in s2.iter_ones() {
                row ^= w.get((k1 * m + k2) * m + j0);
            }
        }
        a001.set(
            j0,
            base ^ row ^ cds.y(0b001).get((j0 + m - d3) % m) ^ cds.t(0b001),
        );
    }

    let a_cds = [
        s1.and_parity(cds.z(0)) ^ cds.u(0),
        s2.and_parity(cds.z(1)) ^ cds.u(1),
        s3.and_parity(cds.z(2)) ^ cds.u(2),
    ];
    let y_extra = [
        cds.y(0b011).get(d1 - 1),
        cds.y(0b101).get(d2 - 1),
        cds.y(0b110).get(d3 - 1),
    ];
    Dc1Answer {
        a000: base ^ cds.t(0b000),
        a100,
        a010,
        a001,
        a_cds,
        y_extra,
    }
}

/// Server 2's answer on the complementary σ labels; its direction vectors
/// additionally carry `z_i` at position `j` so that the disclosure bits
/// cancel correctly during decoding.
pub fn answer_dc2(q: &B2Query, w: &BitVec, cds: &CdsKey) -> Dc2Answer {
    let m = cds.m();
    check_query(q, m);
    debug_assert_eq!(w.len(), db_len(m));
    let [s1, s2, s3] = &q.sets;
    let [d1, d2, d3] = q.disps;
    let base = subcube_xor(w, m, s1, s2, s3);

    let mut a011 = BitVec::zeros(m);
    let mut a101 = BitVec::zeros(m);
    let mut a110 = BitVec::zeros(m);
    for j0 in 0..m {
        let mut row = false;
        for k2 in s2.iter_ones() {
            row ^= w.and_parity_at((j0 * m + k2) * m, s3);
        }
        a011.set(
            j0,
            base ^ row
                ^ cds.y(0b011).get((j0 + m - d1) % m)
                ^ cds.t(0b011)
                ^ cds.z(0).get(j0),
        );

        let mut row = false;
        for k1 in s1.iter_ones() {
            row ^= w.and_parity_at((k1 * m + j0) * m, s3);
        }
        a101.set(
            j0,
            base ^ row
                ^ cds.y(0b101).get((j0 + m - d2) % m)
                ^ cds.t(0b101)
                ^ cds.z(1).get(j0),
        );

        let mut row = false;
        for k1 in s1.iter_ones() {
            for k2 in s2.iter_ones() {
                row ^= w.get((k1 * m + k2) * m + j0);
            }
        }
        a110.set(
            j0,
            base ^ row
                ^ cds.y(0b110).get((j0 + m - d3) % m)
                ^ cds.t(0b110)
                ^ cds.z(2).get(j0),
        );
    }

    let a_cds = [
        s1.and_parity(cds.z(0)) ^ cds.u(0),
        s2.and_parity(cds.z(1)) ^ cds.u(1),
        s3.and_parity(cds.z(2)) ^ cds.u(2),
    ];
    let y_extra = [
        cds.y(0b100).get(d1 - 1),
        cds.y(0b010).get(d2 - 1),
        cds.y(0b001).get(d3 - 1),
    ];
    Dc2Answer {
        a111: base ^ cds.t(0b111),
        a011,
        a101,
        a110,
        a_cds,
        y_extra,
    }
}

/// Recover `w_x` from the two answers.
///
/// The nine sub-cube terms telescope to `w_x` by inclusion–exclusion; the
/// `t` masks cancel by the parity constraint; each `y` mask cancels against
/// the matching forwarded bit because the two displacements sum to `x_i`
/// modulo `m`. The `z` masks of server 2's direction vectors survive at
/// position `x_i` and are all three removed via the disclosure-bit pairs
/// (`a_cds` XORs to `z_i` at `x_i`, the `u` masks cancelling) — dropping any
/// of the three corrections breaks correctness.
///
/// The query/randomness parameters are part of the generic decoder interface
/// and unused by this scheme's decoder.
pub fn decode(
    a1: &Dc1Answer,
    a2: &Dc2Answer,
    _q1: &B2Query,
    _q2: &B2Query,
    x: &CubeIndex,
    _r: &UserRandomness,
) -> bool {
    let [x1, x2, x3] = x.coords();
    let z = [
        a1.a_cds[0] ^ a2.a_cds[0],
        a1.a_cds[1] ^ a2.a_cds[1],
        a1.a_cds[2] ^ a2.a_cds[2],
    ];
    let d1 = a1.a100.get(x1 - 1) ^ a2.y_extra[0] ^ a2.a011.get(x1 - 1) ^ a1.y_extra[0] ^ z[0];
    let d2 = a1.a010.get(x2 - 1) ^ a2.y_extra[1] ^ a2.a101.get(x2 - 1) ^ a1.y_extra[1] ^ z[1];
    let d3 = a1.a001.get(x3 - 1) ^ a2.y_extra[2] ^ a2.a110.get(x3 - 1) ^ a1.y_extra[2] ^ z[2];
    d1 ^ d2 ^ d3 ^ a2.a111 ^ a1.a000
}

// ---------------------------------------------------------------------------
// wire encoding

/// Bits needed to write a displacement value (as `value - 1` in binary).
pub fn disp_field_bits(m: usize) -> usize {
    usize::BITS as usize - (m - 1).leading_zeros() as usize
}

/// Width of an encoded query: three sets plus three displacement fields.
pub fn query_wire_bits(m: usize) -> usize {
    3 * m + 3 * disp_field_bits(m)
}

/// Width of either server's encoded answer.
pub fn answer_wire_bits(m: usize) -> usize {
    3 * m + 7
}

/// Fixed layout: `sets[0] sets[1] sets[2] | disp fields (value - 1,
/// LSB first)`.
pub fn encode_query(q: &B2Query, m: usize) -> BitVec {
    check_query(q, m);
    let fb = disp_field_bits(m);
    let mut out = BitVec::concat(&[&q.sets[0], &q.sets[1], &q.sets[2]]);
    for &d in &q.disps {
        let v = (d - 1) as u64;
        for b in 0..fb {
            out.push((v >> b) & 1 == 1);
        }
    }
    out
}

/// Total on any bit string of the right width: displacement fields decode
/// modulo `m` back into `{1..m}`, so even adversarially garbled transport
/// yields a well-formed query.
pub fn decode_query(bits: &BitVec, m: usize) -> Result<B2Query> {
    if bits.len() != query_wire_bits(m) {
        return Err(Error::DimensionMismatch(format!(
            "query wire length {} != {}",
            bits.len(),
            query_wire_bits(m)
        )));
    }
    let fb = disp_field_bits(m);
    let sets = [bits.slice(0, m), bits.slice(m, m), bits.slice(2 * m, m)];
    let mut disps = [1usize; 3];
    for (i, d) in disps.iter_mut().enumerate() {
        let raw = bits.extract(3 * m + i * fb, fb) as usize;
        *d = raw % m + 1;
    }
    Ok(B2Query { sets, disps })
}

/// Layout: `a000 | a100 | a010 | a001 | a_cds | y_extra`.
pub fn encode_answer1(a: &Dc1Answer) -> BitVec {
    let mut out = BitVec::zeros(0);
    out.push(a.a000);
    out.extend_from(&a.a100);
    out.extend_from(&a.a010);
    out.extend_from(&a.a001);
    for b in a.a_cds {
        out.push(b);
    }
    for b in a.y_extra {
        out.push(b);
    }
    out
}

pub fn decode_answer1(bits: &BitVec, m: usize) -> Result<Dc1Answer> {
    if bits.len() != answer_wire_bits(m) {
        return Err(Error::DimensionMismatch(format!(
            "answer wire length {} != {}",
            bits.len(),
            answer_wire_bits(m)
        )));
    }
    Ok(Dc1Answer {
        a000: bits.get(0),
        a100: bits.slice(1, m),
        a010: bits.slice(1 + m, m),
        a001: bits.slice(1 + 2 * m, m),
        a_cds: [
            bits.get(1 + 3 * m),
            bits.get(2 + 3 * m),
            bits.get(3 + 3 * m),
        ],
        y_extra: [
            bits.get(4 + 3 * m),
            bits.get(5 + 3 * m),
            bits.get(6 + 3 * m),
        ],
    })
}

/// Layout: `a111 | a011 | a101 | a110 | a_cds | y_extra`.
pub fn encode_answer2(a: &Dc2Answer) -> BitVec {
    let mut out = BitVec::zeros(0);
    out.push(a.a111);
    out.extend_from(&a.a011);
    out.extend_from(&a.a101);
    out.extend_from(&a.a110);
    for b in a.a_cds {
        out.push(b);
    }
    for b in a.y_extra {
        out.push(b);
    }
    out
}

pub fn decode_answer2(bits: &BitVec, m: usize) -> Result<Dc2Answer> {
    if bits.len() != answer_wire_bits(m) {
        return Err(Error::DimensionMismatch(format!(
            "answer wire length {} != {}",
            bits.len(),
            answer_wire_bits(m)
        )));
    }
    Ok(Dc2Answer {
        a111: bits.get(0),
        a011: bits.slice(1, m),
        a101: bits.slice(1 + m, m),
        a110: bits.slice(1 + 2 * m, m),
        a_cds: [
            bits.get(1 + 3 * m),
            bits.get(2 + 3 * m),
            bits.get(3 + 3 * m),
        ],
        y_extra: [
            bits.get(4 + 3 * m),
            bits.get(5 + 3 * m),
            bits.get(6 + 3 * m),
        ],
    })
}
