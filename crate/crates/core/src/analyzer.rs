//! Checks the four security conditions — correctness, user privacy, database
//! privacy, protocol secrecy — exactly on small instances and statistically
//! on Monte-Carlo batches.
//!
//! Exact mode enumerates a declared randomness space (capped at 2²⁴ states)
//! and compares view distributions in rational arithmetic. Ciphertext
//! components padded with keys the analysed coalition does not hold are
//! stripped first: conditioned on everything else, those components are
//! uniform and independent (the pad acts as a bijection on each coset), so
//! total variation over the full views equals total variation over the
//! reduced views. `otp_coset_reduction_preserves_tv` validates that step
//! against a brute-force enumeration that keeps the pads.
//!
//! The dishonest-user condition is decided algebraically: with queries and
//! keys fixed, both servers' answers are affine in (masking key, database)
//! over GF(2), so the database functionals a user can extract form the space
//! `{Dᵀψ : Mᵀψ = 0}` — compliance is a rank condition on that space.
//!
//! Statistical mode estimates distinguishing advantage with a
//! likelihood-ratio classifier (train/evaluate split) and Hoeffding
//! confidence margins, then compares against the theorem targets
//! (3ε_cor, 2ε, 2ε, 4ε).

use crate::b2;
use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::gf2::{BitMatrix, RowSpace};
use crate::orchestrator::{
    self, Database, DcId, LinkParams, Party, ProtocolSpec, QueryTarget, RandomnessRec, RunRecord,
};
use crate::qkd;
use crate::xor;
use crate::ExactProb;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest randomness space exact mode will enumerate.
pub const EXACT_SPACE_CAP: u128 = 1 << 24;

/// Confidence parameter used by the acceptance checks.
pub const DEFAULT_ALPHA: f64 = 1e-3;

// ---------------------------------------------------------------------------
// distributions

/// Probability weight: `f64` for empirical estimates, [`ExactProb`] for
/// enumeration.
pub trait Weight: Clone + PartialOrd + Sized {
    fn zero() -> Self;
    fn one() -> Self;
    fn ratio(num: u64, den: u64) -> Self;
    fn accum(&mut self, other: &Self);
    fn abs_diff(&self, other: &Self) -> Self;
    fn halve(self) -> Self;
    /// Does `sum` count as 1 for this weight type?
    fn normalized(sum: &Self) -> bool;
    fn is_nonneg(&self) -> bool;
    fn to_f64_lossy(&self) -> f64;
}

impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn accum(&mut self, other: &Self) {
        *self += other;
    }
    fn abs_diff(&self, other: &Self) -> Self {
        (self - other).abs()
    }
    fn halve(self) -> Self {
        self / 2.0
    }
    fn normalized(sum: &Self) -> bool {
        (sum - 1.0).abs() <= 1e-12
    }
    fn is_nonneg(&self) -> bool {
        *self >= 0.0
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Weight for ExactProb {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn ratio(num: u64, den: u64) -> Self {
        ExactProb::new(BigInt::from(num), BigInt::from(den))
    }
    fn accum(&mut self, other: &Self) {
        *self += other;
    }
    fn abs_diff(&self, other: &Self) -> Self {
        (self - other).abs()
    }
    fn halve(self) -> Self {
        self / ExactProb::from_integer(BigInt::from(2))
    }
    fn normalized(sum: &Self) -> bool {
        sum.is_one()
    }
    fn is_nonneg(&self) -> bool {
        !self.is_negative()
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// A probability distribution over canonically serialized outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution<P> {
    weights: BTreeMap<String, P>,
}

impl<P: Weight> Distribution<P> {
    pub fn from_weights(weights: BTreeMap<String, P>) -> Result<Self> {
        let d = Distribution { weights };
        d.validate()?;
        Ok(d)
    }

    pub fn from_counts(counts: BTreeMap<String, u64>, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidArgument("empty sample set".into()));
        }
        let weights = counts
            .into_iter()
            .map(|(k, c)| (k, P::ratio(c, total)))
            .collect();
        Self::from_weights(weights)
    }

    pub fn point_mass(outcome: impl Into<String>) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert(outcome.into(), P::one());
        Distribution { weights }
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = P::zero();
        for w in self.weights.values() {
            if !w.is_nonneg() {
                return Err(Error::NotNormalized);
            }
            sum.accum(w);
        }
        if !P::normalized(&sum) {
            return Err(Error::NotNormalized);
        }
        Ok(())
    }

    pub fn prob(&self, outcome: &str) -> P {
        self.weights.get(outcome).cloned().unwrap_or_else(P::zero)
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &P)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Total variation distance `½ Σ_y |p(y) − q(y)|` over the union of supports.
pub fn tv_distance<P: Weight>(p: &Distribution<P>, q: &Distribution<P>) -> Result<P> {
    p.validate()?;
    q.validate()?;
    let mut sum = P::zero();
    for (k, pw) in p.iter() {
        sum.accum(&pw.abs_diff(&q.prob(k)));
    }
    for (k, qw) in q.iter() {
        if p.weights.get(k).is_none() {
            sum.accum(qw);
        }
    }
    Ok(sum.halve())
}

// ---------------------------------------------------------------------------
// exact view distributions

/// Which randomness the exact enumeration ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vary {
    /// Everything pinned: the view is a point mass (server parties only).
    Nothing,
    /// The user's query randomness; links ideal, keys pinned (server parties).
    UserRandomness,
    /// All link keys, both ends equal; query randomness pinned (Eve only).
    LinkKeys,
}

/// Keep the whole reduced view or only the received query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Restrict {
    Full,
    QueryOnly,
}

/// Pinned variables for exact mode.
pub struct ExactInputs<'a> {
    pub protocol: ProtocolSpec,
    pub entry_bits: usize,
    pub db: &'a Database,
    pub target: &'a QueryTarget,
    /// The analysed server's masking-key copy (s₅ for server 1, s₆ for
    /// server 2). Required unless `Vary::LinkKeys`.
    pub inter_key: Option<&'a BitVec>,
    /// Pinned query randomness; required for `Nothing` and `LinkKeys`.
    pub randomness: Option<RandomnessRec>,
}

impl ExactInputs<'_> {
    fn validate(&self) -> Result<()> {
        self.target.validate(&self.protocol)?;
        if self.db.entries() != self.protocol.entries() || self.db.entry_bits() != self.entry_bits
        {
            return Err(Error::DimensionMismatch(
                "database shape does not match protocol".into(),
            ));
        }
        Ok(())
    }
}

fn space_too_large(bits: u32) -> Error {
    Error::SpaceTooLarge {
        size: if bits < 127 { 1u128 << bits } else { u128::MAX },
        cap: EXACT_SPACE_CAP,
    }
}

/// One server's plaintext wire answer for a received wire query.
fn server_answer_wire(
    protocol: &ProtocolSpec,
    entry_bits: usize,
    db: &Database,
    inter_key: &BitVec,
    server: DcId,
    q_wire: &BitVec,
) -> Result<BitVec> {
    match *protocol {
        ProtocolSpec::B2 { m } => {
            let cds = orchestrator::derive_cds_from_key(inter_key, m, entry_bits)?;
            let q = b2::decode_query(q_wire, m)?;
            let mut out = BitVec::zeros(0);
            for p in 0..entry_bits {
                match server {
                    DcId::Dc1 => {
                        out.extend_from(&b2::encode_answer1(&b2::answer_dc1(&q, db.plane(p), &cds[p])))
                    }
                    DcId::Dc2 => {
                        out.extend_from(&b2::encode_answer2(&b2::answer_dc2(&q, db.plane(p), &cds[p])))
                    }
                }
            }
            Ok(out)
        }
        ProtocolSpec::Xor { .. } => {
            if inter_key.len() < entry_bits {
                return Err(Error::InsufficientKey {
                    needed: entry_bits,
                    have: inter_key.len(),
                });
            }
            Ok(BitVec::from_fn(entry_bits, |p| {
                xor::answer(q_wire, db.plane(p), inter_key.get(p))
            }))
        }
    }
}

fn reduced_server_view(
    inputs: &ExactInputs,
    server: DcId,
    q_wire: &BitVec,
    restrict: Restrict,
) -> Result<String> {
    match restrict {
        Restrict::QueryOnly => Ok(format!("q={}", q_wire.to_hex())),
        Restrict::Full => {
            let inter = inputs.inter_key.expect("checked by caller");
            let a = server_answer_wire(
                &inputs.protocol,
                inputs.entry_bits,
                inputs.db,
                inter,
                server,
                q_wire,
            )?;
            Ok(format!("q={};a={}", q_wire.to_hex(), a.to_hex()))
        }
    }
}

fn honest_wire_queries(
    protocol: &ProtocolSpec,
    target: &QueryTarget,
    r: &RandomnessRec,
) -> Result<(BitVec, BitVec)> {
    match (protocol, target, r) {
        (ProtocolSpec::B2 { m }, QueryTarget::Cube { x }, RandomnessRec::Cube(r)) => {
            r.validate(*m)?;
            let x = b2::CubeIndex::new(*x, *m)?;
            let (q1, q2) = b2::derive_queries(&x, r, *m);
            Ok((b2::encode_query(&q1, *m), b2::encode_query(&q2, *m)))
        }
        (ProtocolSpec::Xor { n }, QueryTarget::Selector { i }, RandomnessRec::Selector { r }) => {
            if r.len() != *n {
                return Err(Error::DimensionMismatch("randomness length != n".into()));
            }
            Ok(xor::derive_queries(i, r))
        }
        _ => Err(Error::InvalidArgument(
            "randomness kind does not match protocol".into(),
        )),
    }
}

/// Exact view distribution for one coalition, honest parties, ideal links.
///
/// Server parties (`Dc1Eve` / `Dc2Eve`) are reported as the reduced
/// sufficient statistic (received query, sent answer) justified in the module
/// documentation; `Eve` is reported as her full ciphertext view.
pub fn view_distribution_exact(
    party: Party,
    vary: Vary,
    inputs: &ExactInputs,
    restrict: Restrict,
) -> Result<Distribution<ExactProb>> {
    inputs.validate()?;
    match (party, vary) {
        (Party::Dc1Eve | Party::Dc2Eve, Vary::Nothing) => {
            let server = if party == Party::Dc1Eve { DcId::Dc1 } else { DcId::Dc2 };
            if inputs.inter_key.is_none() {
                return Err(Error::InvalidArgument("inter_key required".into()));
            }
            let r = inputs
                .randomness
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("randomness must be pinned".into()))?;
            let (q1, q2) = honest_wire_queries(&inputs.protocol, inputs.target, r)?;
            let q = if server == DcId::Dc1 { q1 } else { q2 };
            Ok(Distribution::point_mass(reduced_server_view(
                inputs, server, &q, restrict,
            )?))
        }
        (Party::Dc1Eve | Party::Dc2Eve, Vary::UserRandomness) => {
            let server = if party == Party::Dc1Eve { DcId::Dc1 } else { DcId::Dc2 };
            if inputs.inter_key.is_none() && restrict == Restrict::Full {
                return Err(Error::InvalidArgument("inter_key required".into()));
            }
            server_view_over_randomness(inputs, server, restrict)
        }
        (Party::Eve, Vary::LinkKeys) => eve_view_over_keys(inputs),
        (Party::Eve, Vary::UserRandomness) => Err(Error::InvalidArgument(
            "Eve's exact view varies with the link keys; use Vary::LinkKeys or sampling mode"
                .into(),
        )),
        _ => Err(Error::InvalidArgument(
            "unsupported party/vary combination for exact mode; use sampling mode".into(),
        )),
    }
}

fn server_view_over_randomness(
    inputs: &ExactInputs,
    server: DcId,
    restrict: Restrict,
) -> Result<Distribution<ExactProb>> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total: u64 = 0;
    match inputs.protocol {
        ProtocolSpec::B2 { m } => {
            if 3 * m > 24 || m > 24 {
                return Err(space_too_large(3 * m.min(42) as u32));
            }
            let space = (1u128 << (3 * m)) * (m as u128).pow(3);
            if space > EXACT_SPACE_CAP {
                return Err(Error::SpaceTooLarge {
                    size: space,
                    cap: EXACT_SPACE_CAP,
                });
            }
            let set_space = 1u64 << m;
            for s1 in 0..set_space {
                for s2 in 0..set_space {
                    for s3 in 0..set_space {
                        for d1 in 1..=m {
                            for d2 in 1..=m {
                                for d3 in 1..=m {
                                    let r = b2::UserRandomness {
                                        sets: [
                                            BitVec::from_word(s1, m),
                                            BitVec::from_word(s2, m),
                                            BitVec::from_word(s3, m),
                                        ],
                                        disps: [d1, d2, d3],
                                    };
                                    let rec = RandomnessRec::Cube(r);
                                    let (q1, q2) =
                                        honest_wire_queries(&inputs.protocol, inputs.target, &rec)?;
                                    let q = if server == DcId::Dc1 { q1 } else { q2 };
                                    let key = reduced_server_view(inputs, server, &q, restrict)?;
                                    *counts.entry(key).or_insert(0) += 1;
                                    total += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        ProtocolSpec::Xor { n } => {
            if n > 24 {
                return Err(space_too_large(n.min(126) as u32));
            }
            for bits in 0u64..(1 << n) {
                let rec = RandomnessRec::Selector {
                    r: BitVec::from_word(bits, n),
                };
                let (q1, q2) = honest_wire_queries(&inputs.protocol, inputs.target, &rec)?;
                let q = if server == DcId::Dc1 { q1 } else { q2 };
                let key = reduced_server_view(inputs, server, &q, restrict)?;
                *counts.entry(key).or_insert(0) += 1;
                total += 1;
            }
        }
    }
    Distribution::from_counts(counts, total)
}

fn eve_view_over_keys(inputs: &ExactInputs) -> Result<Distribution<ExactProb>> {
    let r = inputs
        .randomness
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("randomness must be pinned".into()))?;
    let cfg = orchestrator::RunConfig::ideal(inputs.protocol, inputs.entry_bits);
    let ul = cfg.user_link_key_bits();
    let idc = cfg.inter_dc_key_bits();
    let total_bits = 2 * ul + idc;
    if total_bits > 24 {
        return Err(space_too_large(total_bits as u32));
    }
    let (q1, q2) = honest_wire_queries(&inputs.protocol, inputs.target, r)?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let total = 1u64 << total_bits;
    for k in 0..total {
        let all = BitVec::from_word(k, total_bits);
        let s1 = all.slice(0, ul);
        let s3 = all.slice(ul, ul);
        let s5 = all.slice(2 * ul, idc);
        let h1 = qkd::split_key(&s1)?;
        let h3 = qkd::split_key(&s3)?;
        let a1 = server_answer_wire(
            &inputs.protocol,
            inputs.entry_bits,
            inputs.db,
            &s5,
            DcId::Dc1,
            &q1,
        )?;
        let a2 = server_answer_wire(
            &inputs.protocol,
            inputs.entry_bits,
            inputs.db,
            &s5,
            DcId::Dc2,
            &q2,
        )?;
        let locals = orchestrator::EveLocals {
            c_q1: qkd::otp(&q1, &h1.enc)?.into(),
            c_q2: qkd::otp(&q2, &h3.enc)?.into(),
            c_a1: qkd::otp(&a1, &h1.dec)?.into(),
            c_a2: qkd::otp(&a2, &h3.dec)?.into(),
            leak_d1_d2: orchestrator::OrBot::Val(None),
            leak_u_d1: orchestrator::OrBot::Val(None),
            leak_u_d2: orchestrator::OrBot::Val(None),
        };
        let key = orchestrator::eve_view(&locals).canonical_string();
        *counts.entry(key).or_insert(0) += 1;
    }
    Distribution::from_counts(counts, total)
}

/// Empirical view distribution from a recorded batch.
pub fn view_distribution_empirical(
    records: &[RunRecord],
    party: Party,
    projection: &ViewProjection,
) -> Result<Distribution<f64>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for rec in records {
        *counts.entry(project_view(rec, party, projection)?).or_insert(0) += 1;
    }
    Distribution::from_counts(counts, records.len() as u64)
}

// ---------------------------------------------------------------------------
// affine system and database privacy

/// Both servers' concatenated wire answers as an affine function of the
/// masking key's free bits and the database (single plane):
/// `answers = M·k ⊕ D·w ⊕ c0`.
#[derive(Clone, Debug)]
pub struct AffineSystem {
    pub key_mat: BitMatrix,
    pub db_mat: BitMatrix,
    pub c0: BitVec,
}

impl AffineSystem {
    pub fn rows(&self) -> usize {
        self.c0.len()
    }

    pub fn key_bits(&self) -> usize {
        self.key_mat.cols()
    }

    pub fn db_bits(&self) -> usize {
        self.db_mat.cols()
    }

    pub fn eval(&self, key: &BitVec, db: &BitVec) -> Result<BitVec> {
        if key.len() != self.key_bits() || db.len() != self.db_bits() {
            return Err(Error::DimensionMismatch(
                "affine system input widths".into(),
            ));
        }
        let mut out = self.key_mat.mul_vec(key);
        out.xor_assign(&self.db_mat.mul_vec(db));
        out.xor_assign(&self.c0);
        Ok(out)
    }
}

/// Build the affine system for a fixed adversarial query pair by probing:
/// the constant is the response to zero inputs, each column is the response
/// to one unit input minus the constant. Answer formulas are GF(2)-affine,
/// which `affine_system_reproduces_answers` spot-checks.
pub fn build_affine_system(q1: &b2::B2Query, q2: &b2::B2Query, m: usize) -> Result<AffineSystem> {
    q1.validate(m)?;
    q2.validate(m)?;
    let n = b2::db_len(m);
    let kb = b2::CdsKey::free_bits_len(m);
    let eval = |key_bits: &BitVec, w: &BitVec| -> Result<BitVec> {
        let key = b2::CdsKey::from_free_bits(key_bits, m)?;
        let mut out = b2::encode_answer1(&b2::answer_dc1(q1, w, &key));
        out.extend_from(&b2::encode_answer2(&b2::answer_dc2(q2, w, &key)));
        Ok(out)
    };
    let zero_k = BitVec::zeros(kb);
    let zero_w = BitVec::zeros(n);
    let c0 = eval(&zero_k, &zero_w)?;
    let mut key_cols = Vec::with_capacity(kb);
    for i in 0..kb {
        let mut e = BitVec::zeros(kb);
        e.set(i, true);
        key_cols.push(eval(&e, &zero_w)?.xored(&c0));
    }
    let mut db_cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = BitVec::zeros(n);
        e.set(j, true);
        db_cols.push(eval(&zero_k, &e)?.xored(&c0));
    }
    Ok(AffineSystem {
        key_mat: BitMatrix::from_rows(key_cols).transpose(),
        db_mat: BitMatrix::from_rows(db_cols).transpose(),
        c0,
    })
}

/// Basis of the database functionals determined by the answers:
/// `{Dᵀψ : ψᵀM = 0}`. Two databases are indistinguishable exactly when all
/// these functionals agree on them (`D(w⊕w′) ∈ colspace(M)`, the dual
/// statement).
pub fn functional_space_basis(system: &AffineSystem) -> Vec<BitVec> {
    let dt = system.db_mat.transpose();
    let mut span = RowSpace::new(system.db_bits());
    for psi in system.key_mat.left_kernel_basis() {
        span.insert(dt.mul_vec(&psi));
    }
    span.basis().cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    /// The pair reveals at most one database entry.
    pub compliant: bool,
    /// Flat index certifying compliance (smallest certifying index when the
    /// answers reveal nothing at all).
    pub witness: Option<usize>,
    /// Dimension of the revealed-functional space.
    pub functional_rank: usize,
    /// When non-compliant: two databases that agree on the first coordinate
    /// any revealed functional touches, yet are distinguishable from the
    /// answers.
    pub offending_pair: Option<(BitVec, BitVec)>,
}

/// Rank-based compliance verdict for an affine answer system.
pub fn compliance_of_system(system: &AffineSystem) -> ComplianceReport {
    let basis = functional_space_basis(system);
    let rank = basis.len();
    if rank == 0 {
        return ComplianceReport {
            compliant: true,
            witness: Some(0),
            functional_rank: 0,
            offending_pair: None,
        };
    }
    if rank == 1 && basis[0].count_ones() == 1 {
        return ComplianceReport {
            compliant: true,
            witness: basis[0].iter_ones().next(),
            functional_rank: 1,
            offending_pair: None,
        };
    }
    // non-compliant: exhibit two databases that agree on the first touched
    // coordinate but differ in some revealed parity
    let n = system.db_bits();
    let (anchor, probe) = match basis.iter().find(|phi| phi.count_ones() >= 2) {
        Some(phi) => {
            let mut ones = phi.iter_ones();
            (ones.next().unwrap(), ones.next().unwrap())
        }
        None => {
            // all generators are unit vectors and there are at least two
            let a = basis[0].iter_ones().next().unwrap();
            let b = basis[1].iter_ones().next().unwrap();
            (a, b)
        }
    };
    let w = BitVec::zeros(n);
    let mut w_prime = BitVec::zeros(n);
    w_prime.set(probe, true);
    debug_assert!(!w_prime.get(anchor));
    ComplianceReport {
        compliant: false,
        witness: None,
        functional_rank: rank,
        offending_pair: Some((w, w_prime)),
    }
}

/// Database-privacy check for a fixed adversarial query pair (fixed keys,
/// single plane): the user must learn at most `w_{x′}` for some `x′`.
pub fn db_privacy_check(q1: &b2::B2Query, q2: &b2::B2Query, m: usize) -> Result<ComplianceReport> {
    Ok(compliance_of_system(&build_affine_system(q1, q2, m)?))
}

/// Brute-force compliance verdict: enumerate all keys, compare answer
/// multisets across database pairs. Ground truth for small systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationVerdict {
    pub compliant: bool,
    pub witness: Option<usize>,
}

pub fn compliance_by_enumeration(system: &AffineSystem) -> Result<EnumerationVerdict> {
    let kb = system.key_bits();
    let nd = system.db_bits();
    let rows = system.rows();
    if kb > 16 || nd > 8 || rows > 64 {
        return Err(Error::SpaceTooLarge {
            size: (1u128 << kb.min(126)).max(1u128 << nd.min(126)),
            cap: 1 << 16,
        });
    }
    // sorted answer multiset per database, answers packed into u64 words
    let pack = |v: &BitVec| -> u64 {
        let mut word = 0u64;
        for i in v.iter_ones() {
            word |= 1 << i;
        }
        word
    };
    let mut tables = Vec::with_capacity(1 << nd);
    for w_bits in 0u64..(1 << nd) {
        let w = BitVec::from_word(w_bits, nd);
        let mut table: Vec<u64> = (0u64..(1 << kb))
            .map(|k_bits| {
                let k = BitVec::from_word(k_bits, kb);
                pack(&system.eval(&k, &w).expect("dimensions fixed"))
            })
            .collect();
        table.sort_unstable();
        tables.push(table);
    }
    let candidate_ok = |x: usize| -> bool {
        for w in 0u64..(1 << nd) {
            for w_prime in (w + 1)..(1 << nd) {
                let agree = (w >> x) & 1 == (w_prime >> x) & 1;
                if agree && tables[w as usize] != tables[w_prime as usize] {
                    return false;
                }
            }
        }
        true
    };
    for x in 0..nd {
        if candidate_ok(x) {
            return Ok(EnumerationVerdict {
                compliant: true,
                witness: Some(x),
            });
        }
    }
    Ok(EnumerationVerdict {
        compliant: false,
        witness: None,
    })
}

/// One-bit-leakage report for the linear protocol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct XorComplianceReport {
    /// Relaxed condition (the user gains at most one bit): always holds —
    /// the shared answer key leaves exactly the parity over
    /// `witness_selector` observable.
    pub compliant: bool,
    /// Strict single-entry condition: the selector has weight ≤ 1.
    pub strict: bool,
    /// The one recoverable functional, `q̄1 ⊕ q̄2`.
    pub witness_selector: BitVec,
    /// Set when the functional is a single entry.
    pub witness_index: Option<usize>,
}

pub fn xor_privacy_check(q1: &BitVec, q2: &BitVec) -> Result<XorComplianceReport> {
    if q1.len() != q2.len() {
        return Err(Error::DimensionMismatch(
            "query lengths differ".into(),
        ));
    }
    let selector = xor::learned_selector(q1, q2);
    let weight = selector.count_ones();
    Ok(XorComplianceReport {
        compliant: true,
        strict: weight <= 1,
        witness_index: if weight == 1 {
            selector.iter_ones().next()
        } else {
            None
        },
        witness_selector: selector,
    })
}

// ---------------------------------------------------------------------------
// statistical distinguishers

/// Feature extracted from a run record for distinguishing tests. Each
/// projection is a deterministic function of one coalition's view, so its
/// advantage lower-bounds the view distributions' total variation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewProjection {
    /// The whole view, canonically serialized.
    FullCanonical,
    /// Server coalition: combine the own received query with the opposite
    /// user link's leaked key to reconstruct the target index.
    IndexGuess { server: DcId },
    /// User coalition: strip the masking from the received answer using the
    /// leaked server↔server key.
    DbUnmask,
    /// Eve alone: decrypt one query ciphertext with that link's leaked key.
    QueryPeek { server: DcId },
}

fn leaked_halves(leak: &orchestrator::OrBot<Option<BitVec>>) -> Result<Option<qkd::KeyHalves>> {
    match leak.value() {
        None => Ok(None), // link never completed
        Some(None) => Ok(None),
        Some(Some(k)) => Ok(Some(qkd::split_key(k)?)),
    }
}

/// Apply a projection to one record. Aborted-before-relevant-stage runs map
/// to `"abort"`, completed runs without the needed leak to `"noleak"`.
pub fn project_view(rec: &RunRecord, party: Party, projection: &ViewProjection) -> Result<String> {
    match projection {
        ViewProjection::FullCanonical => Ok(orchestrator::view_of(rec, party).canonical_string()),
        ViewProjection::IndexGuess { server } => {
            let (own, opposite_leak) = match (party, server) {
                (Party::Dc1Eve, DcId::Dc1) => (&rec.dc1, &rec.eve.leak_u_d2),
                (Party::Dc2Eve, DcId::Dc2) => (&rec.dc2, &rec.eve.leak_u_d1),
                _ => {
                    return Err(Error::InvalidArgument(
                        "index guess requires the matching server coalition".into(),
                    ))
                }
            };
            let (own_q, c_q) = match (own.q_tilde.value(), opposite_c_q(rec, *server).value()) {
                (Some(q), Some(c)) => (q, c),
                _ => return Ok("abort".into()),
            };
            let halves = match leaked_halves(opposite_leak)? {
                Some(h) => h,
                None => return Ok("noleak".into()),
            };
            let other_q = qkd::otp(c_q, &halves.enc)?;
            let (q1, q2) = match server {
                DcId::Dc1 => (own_q.clone(), other_q),
                DcId::Dc2 => (other_q, own_q.clone()),
            };
            Ok(combine_queries(&rec.config.protocol, &q1, &q2))
        }
        ViewProjection::DbUnmask => {
            if party != Party::UserEve {
                return Err(Error::InvalidArgument(
                    "database unmasking requires the user coalition".into(),
                ));
            }
            let a1 = match rec.user.a1_tilde.value() {
                Some(a) => a,
                None => return Ok("abort".into()),
            };
            let s5 = match rec.eve.leak_d1_d2.value() {
                None => return Ok("abort".into()),
                Some(None) => return Ok("noleak".into()),
                Some(Some(k)) => k,
            };
            let l = rec.config.entry_bits;
            match rec.config.protocol {
                ProtocolSpec::B2 { m } => {
                    let cds = orchestrator::derive_cds_from_key(s5, m, l)?;
                    let width = b2::answer_wire_bits(m);
                    if a1.len() != l * width {
                        return Ok("abort".into());
                    }
                    let bits = BitVec::from_fn(l, |p| {
                        let dec = b2::decode_answer1(&a1.slice(p * width, width), m)
                            .expect("width checked");
                        dec.a000 ^ cds[p].t(0)
                    });
                    Ok(format!("db={}", bits.to_hex()))
                }
                ProtocolSpec::Xor { .. } => {
                    if a1.len() != l || s5.len() < l {
                        return Ok("abort".into());
                    }
                    let bits = BitVec::from_fn(l, |p| a1.get(p) ^ s5.get(p));
                    Ok(format!("db={}", bits.to_hex()))
                }
            }
        }
        ViewProjection::QueryPeek { server } => {
            if party != Party::Eve {
                return Err(Error::InvalidArgument(
                    "the wire peek is Eve's projection".into(),
                ));
            }
            let (c_q, leak) = match server {
                DcId::Dc1 => (&rec.eve.c_q1, &rec.eve.leak_u_d1),
                DcId::Dc2 => (&rec.eve.c_q2, &rec.eve.leak_u_d2),
            };
            let c_q = match c_q.value() {
                Some(c) => c,
                None => return Ok("abort".into()),
            };
            let halves = match leaked_halves(leak)? {
                Some(h) => h,
                None => return Ok("noleak".into()),
            };
            Ok(format!("q={}", qkd::otp(c_q, &halves.enc)?.to_hex()))
        }
    }
}

fn opposite_c_q(rec: &RunRecord, server: DcId) -> &orchestrator::OrBot<BitVec> {
    match server {
        DcId::Dc1 => &rec.eve.c_q2,
        DcId::Dc2 => &rec.eve.c_q1,
    }
}

/// Reconstruct the target from both received queries (the attack a server
/// mounts once the opposite link leaks).
fn combine_queries(protocol: &ProtocolSpec, q1_wire: &BitVec, q2_wire: &BitVec) -> String {
    match *protocol {
        ProtocolSpec::B2 { m } => {
            let (q1, q2) = match (b2::decode_query(q1_wire, m), b2::decode_query(q2_wire, m)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return "ambig".into(),
            };
            let mut coords = [0usize; 3];
            for i in 0..3 {
                let diff = q1.sets[i].xored(&q2.sets[i]);
                if diff.count_ones() != 1 {
                    return "ambig".into();
                }
                let from_sets = diff.iter_ones().next().unwrap() + 1;
                let sum = (q1.disps[i] + q2.disps[i]) % m;
                let from_disps = if sum == 0 { m } else { sum };
                if from_sets != from_disps {
                    return "ambig".into();
                }
                coords[i] = from_sets;
            }
            format!("x=({},{},{})", coords[0], coords[1], coords[2])
        }
        ProtocolSpec::Xor { .. } => format!("sel={}", q1_wire.xored(q2_wire).to_hex()),
    }
}

/// Confidence margin of a sample mean: `√(ln(2/α)/(2n))`.
pub fn hoeffding_margin(alpha: f64, n: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0 && n > 0);
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Advantage {
    /// Acceptance rate difference of the trained classifier on held-out
    /// halves; may be slightly negative by sampling noise.
    pub estimate: f64,
    /// Two-sided Hoeffding margin (one term per evaluation half), each side
    /// failing with probability ≤ α.
    pub margin: f64,
    pub n_train: usize,
    pub n_eval: usize,
    pub alpha: f64,
}

/// Distinguishing advantage between two sample sets of serialized views.
///
/// The first halves train a likelihood-ratio classifier (accept when the
/// outcome was more frequent under `a`), the second halves evaluate it. The
/// population advantage of any such classifier is at most the total
/// variation distance between the view distributions, so
/// `estimate − margin ≤ TV` with confidence `1 − 2α`.
pub fn empirical_advantage(a: &[String], b: &[String], alpha: f64) -> Result<Advantage> {
    if a.len() < 4 || b.len() < 4 {
        return Err(Error::InvalidArgument(
            "need at least 4 samples per batch".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must be in (0,1)".into()));
    }
    let (train_a, eval_a) = a.split_at(a.len() / 2);
    let (train_b, eval_b) = b.split_at(b.len() / 2);
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for s in train_a {
        counts.entry(s.as_str()).or_insert((0, 0)).0 += 1;
    }
    for s in train_b {
        counts.entry(s.as_str()).or_insert((0, 0)).1 += 1;
    }
    // accept s when p̂_a(s) > p̂_b(s); cross-multiplied to stay in integers
    let na = train_a.len() as u64;
    let nb = train_b.len() as u64;
    let accepts = |s: &String| -> bool {
        match counts.get(s.as_str()) {
            Some(&(ca, cb)) => ca * nb > cb * na,
            None => false,
        }
    };
    let rate_a = eval_a.iter().filter(|s| accepts(s)).count() as f64 / eval_a.len() as f64;
    let rate_b = eval_b.iter().filter(|s| accepts(s)).count() as f64 / eval_b.len() as f64;
    Ok(Advantage {
        estimate: rate_a - rate_b,
        margin: hoeffding_margin(alpha, eval_a.len()) + hoeffding_margin(alpha, eval_b.len()),
        n_train: train_a.len() + train_b.len(),
        n_eval: eval_a.len() + eval_b.len(),
        alpha,
    })
}

// ---------------------------------------------------------------------------
// theorem targets and the bounds report

/// Decimal-string arithmetic on the shortest round-trip representation.
///
/// `3.0 * 1e-15` is not the f64 closest to 3·10⁻¹⁵ (binary rounding lands
/// one ulp off), so a bounds target computed that way would print as
/// `3.0000000000000004e-15`. Multiplying in the decimal domain — parse the
/// shortest representation, scale the integer mantissa, re-parse — yields
/// the f64 whose printed form is the exact decimal product.
pub mod decimal {
    /// `x · k` computed on the decimal representation of `x`.
    pub fn times_small(x: f64, k: u32) -> f64 {
        if !x.is_finite() {
            return x * k as f64;
        }
        let (mant, exp) = shortest_parts(x);
        reparse(mant * k as i128, exp)
    }

    fn shortest_parts(x: f64) -> (i128, i32) {
        let s = format!("{x:e}");
        let (m_str, e_str) = s.split_once('e').expect("LowerExp always emits an exponent");
        let exp: i32 = e_str.parse().expect("well-formed exponent");
        let neg = m_str.starts_with('-');
        let frac_len = m_str.split_once('.').map_or(0, |(_, f)| f.len());
        let digits: i128 = m_str
            .chars()
            .filter(char::is_ascii_digit)
            .collect::<String>()
            .parse()
            .expect("shortest repr has <= 17 digits");
        (if neg { -digits } else { digits }, exp - frac_len as i32)
    }

    fn reparse(mant: i128, exp: i32) -> f64 {
        format!("{mant}e{exp}").parse().expect("valid float literal")
    }
}

/// The theorem's targets for a link configuration. Links may differ; each
/// surrogate takes the worst link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremTargets {
    pub eps_cor: f64,
    pub eps_sec: f64,
    /// ε = ε_cor + ε_sec.
    pub eps: f64,
    /// 3·ε_cor.
    pub correctness: f64,
    /// 2·ε.
    pub user_privacy: f64,
    /// 2·ε.
    pub db_privacy: f64,
    /// 4·ε.
    pub secrecy: f64,
}

pub fn theorem_targets(links: &LinkParams) -> TheoremTargets {
    let eps_cor = links
        .u_d1
        .eps_cor_surrogate()
        .max(links.u_d2.eps_cor_surrogate())
        .max(links.d1_d2.eps_cor_surrogate());
    let eps_sec = links
        .u_d1
        .eps_sec_surrogate()
        .max(links.u_d2.eps_sec_surrogate())
        .max(links.d1_d2.eps_sec_surrogate());
    let eps = eps_cor + eps_sec;
    TheoremTargets {
        eps_cor,
        eps_sec,
        eps,
        correctness: decimal::times_small(eps_cor, 3),
        user_privacy: decimal::times_small(eps, 2),
        db_privacy: decimal::times_small(eps, 2),
        secrecy: decimal::times_small(eps, 4),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n_runs: usize,
    pub alpha: f64,
    pub targets: TheoremTargets,
    /// Model probability that some link aborts.
    pub p_fail: f64,
    pub pass_runs: usize,
    pub decode_errors: usize,
    /// `(1 − p_fail) · Pr[ŵ_x ≠ w_x | pass]`, conditional part empirical.
    pub empirical_correctness: f64,
    pub correctness_margin: f64,
    /// `empirical ≤ 3·ε_cor + margin`.
    pub correctness_pass: bool,
}

/// Check the correctness bound on a recorded batch. Distinguishing
/// advantages need paired batches and are layered on top via
/// [`empirical_advantage`].
pub fn check_theorem_bounds(
    records: &[RunRecord],
    links: &LinkParams,
    alpha: f64,
) -> Result<BoundsReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let targets = theorem_targets(links);
    let p_fail = links.p_fail();
    let mut pass_runs = 0usize;
    let mut decode_errors = 0usize;
    for rec in records {
        match &rec.outcome {
            orchestrator::Outcome::Aborted => {}
            orchestrator::Outcome::Decoded { value } => {
                pass_runs += 1;
                let want = rec
                    .dc1
                    .w
                    .entry(rec.user.target.flat(&rec.config.protocol));
                if *value != want {
                    decode_errors += 1;
                }
            }
        }
    }
    if pass_runs == 0 {
        return Err(Error::InvalidArgument(
            "no passing runs to condition on".into(),
        ));
    }
    let conditional = decode_errors as f64 / pass_runs as f64;
    let empirical = (1.0 - p_fail) * conditional;
    let margin = hoeffding_margin(alpha, pass_runs);
    Ok(BoundsReport {
        n_runs: records.len(),
        alpha,
        targets,
        p_fail,
        pass_runs,
        decode_errors,
        empirical_correctness: empirical,
        correctness_margin: margin,
        correctness_pass: empirical <= targets.correctness + margin,
    })
}
