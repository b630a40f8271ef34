//! End-to-end simulator: key establishment on the three links, query
//! transport, answering, answer transport, decoding — with every party's
//! local variables captured in a [`RunRecord`].
//!
//! Execution order is fixed: the server↔server link first, then user↔server 1,
//! then user↔server 2, then the message flow. An abort on any link stops the
//! run immediately; keys established earlier stay in the record, everything
//! later is ⊥.
//!
//! Key budgeting: each user↔server link requests `2·max(query bits, answer
//! bits)` so the two equal halves each cover their direction (pads are
//! prefixes of the halves); the server↔server link requests the masking
//! material (`L·(9m + 10)` bits for the cube protocol, `L` bits for the
//! linear one) rounded up to even length.

use crate::b2;
use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::qkd::{self, KeyExchangeOutcome, QkdModelParams};
use crate::xor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    B2,
    Xor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProtocolSpec {
    B2 { m: usize },
    Xor { n: usize },
}

impl ProtocolSpec {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            ProtocolSpec::B2 { .. } => ProtocolKind::B2,
            ProtocolSpec::Xor { .. } => ProtocolKind::Xor,
        }
    }

    /// Number of database entries.
    pub fn entries(&self) -> usize {
        match *self {
            ProtocolSpec::B2 { m } => b2::db_len(m),
            ProtocolSpec::Xor { n } => n,
        }
    }

    /// `m` for the cube protocol, `n` for the linear one.
    pub fn size(&self) -> usize {
        match *self {
            ProtocolSpec::B2 { m } => m,
            ProtocolSpec::Xor { n } => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub u_d1: QkdModelParams,
    pub u_d2: QkdModelParams,
    pub d1_d2: QkdModelParams,
}

impl LinkParams {
    pub fn ideal() -> Self {
        LinkParams {
            u_d1: QkdModelParams::ideal(),
            u_d2: QkdModelParams::ideal(),
            d1_d2: QkdModelParams::ideal(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.u_d1.validate()?;
        self.u_d2.validate()?;
        self.d1_d2.validate()
    }

    /// Probability at least one link aborts (establishment order does not
    /// matter for this number).
    pub fn p_fail(&self) -> f64 {
        qkd::p_fail(self.u_d1.p_abort, self.u_d2.p_abort, self.d1_d2.p_abort)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcId {
    Dc1,
    Dc2,
}

/// What a dishonest user sends instead of the honest queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserStrategy {
    /// Honest queries derived (with the run's randomness) for a different
    /// cube index; the user decodes for that index too.
    RetargetIndex { x_prime: [usize; 3] },
    /// Same, for the linear protocol's selector.
    RetargetSelector { i_prime: BitVec },
    /// Send the identical wire query to both servers.
    MirrorQuery,
    /// Arbitrary fixed wire bits.
    RawQueries { q1: BitVec, q2: BitVec },
}

/// What a dishonest server does to its plaintext answer before transport.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DcStrategy {
    FlipAnswerBits,
    ZeroAnswer,
    RawAnswer { bits: BitVec },
}

/// At most one role misbehaves per run; the type makes more than one
/// unrepresentable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum AdversarySpec {
    Honest,
    DishonestUser { strategy: UserStrategy },
    DishonestDc { which: DcId, strategy: DcStrategy },
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec::Honest
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: ProtocolSpec,
    /// Entry size `L` in bits; the database carries one plane per bit.
    pub entry_bits: usize,
    pub links: LinkParams,
    #[serde(default)]
    pub adversary: AdversarySpec,
}

impl RunConfig {
    pub fn ideal(protocol: ProtocolSpec, entry_bits: usize) -> Self {
        RunConfig {
            protocol,
            entry_bits,
            links: LinkParams::ideal(),
            adversary: AdversarySpec::Honest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.links.validate()?;
        if self.entry_bits == 0 {
            return Err(Error::InvalidArgument("entry_bits must be >= 1".into()));
        }
        if self.protocol.size() == 0 {
            return Err(Error::InvalidArgument("database size must be >= 1".into()));
        }
        match (&self.protocol, &self.adversary) {
            (
                ProtocolSpec::B2 { m },
                AdversarySpec::DishonestUser {
                    strategy: UserStrategy::RetargetIndex { x_prime },
                },
            ) => {
                b2::CubeIndex::new(*x_prime, *m)?;
            }
            (
                ProtocolSpec::Xor { .. },
                AdversarySpec::DishonestUser {
                    strategy: UserStrategy::RetargetIndex { .. },
                },
            ) => {
                return Err(Error::InvalidArgument(
                    "retarget_index applies to the cube protocol only".into(),
                ));
            }
            (
                ProtocolSpec::Xor { n },
                AdversarySpec::DishonestUser {
                    strategy: UserStrategy::RetargetSelector { i_prime },
                },
            ) => {
                if i_prime.len() != *n {
                    return Err(Error::DimensionMismatch(
                        "retarget selector length != n".into(),
                    ));
                }
            }
            (
                ProtocolSpec::B2 { .. },
                AdversarySpec::DishonestUser {
                    strategy: UserStrategy::RetargetSelector { .. },
                },
            ) => {
                return Err(Error::InvalidArgument(
                    "retarget_selector applies to the linear protocol only".into(),
                ));
            }
            (
                _,
                AdversarySpec::DishonestUser {
                    strategy: UserStrategy::RawQueries { q1, q2 },
                },
            ) => {
                let want = self.query_wire_bits();
                if q1.len() != want || q2.len() != want {
                    return Err(Error::DimensionMismatch(format!(
                        "raw queries must be {want} bits"
                    )));
                }
            }
            (
                _,
                AdversarySpec::DishonestDc {
                    strategy: DcStrategy::RawAnswer { bits },
                    ..
                },
            ) => {
                if bits.len() != self.answer_wire_bits() {
                    return Err(Error::DimensionMismatch(format!(
                        "raw answer must be {} bits",
                        self.answer_wire_bits()
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Width of one query on the wire.
    pub fn query_wire_bits(&self) -> usize {
        match self.protocol {
            ProtocolSpec::B2 { m } => b2::query_wire_bits(m),
            ProtocolSpec::Xor { n } => n,
        }
    }

    /// Width of one server's full answer (all `L` planes).
    pub fn answer_wire_bits(&self) -> usize {
        match self.protocol {
            ProtocolSpec::B2 { m } => self.entry_bits * b2::answer_wire_bits(m),
            ProtocolSpec::Xor { .. } => self.entry_bits,
        }
    }

    /// Key bits requested on each user↔server link: both equal halves must
    /// cover the longer direction.
    pub fn user_link_key_bits(&self) -> usize {
        2 * self.query_wire_bits().max(self.answer_wire_bits())
    }

    /// Key bits requested on the server↔server link (masking material,
    /// rounded up to an even length).
    pub fn inter_dc_key_bits(&self) -> usize {
        let raw = match self.protocol {
            ProtocolSpec::B2 { m } => self.entry_bits * b2::CdsKey::free_bits_len(m),
            ProtocolSpec::Xor { .. } => self.entry_bits,
        };
        raw + raw % 2
    }
}

// ---------------------------------------------------------------------------
// database and targets

/// A database of `entries` entries of `entry_bits` bits, stored as bit
/// planes: plane `p` holds bit `p` of every entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Database {
    entries: usize,
    planes: Vec<BitVec>,
}

impl Database {
    pub fn new(entries: usize, planes: Vec<BitVec>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::InvalidArgument("database needs >= 1 plane".into()));
        }
        if planes.iter().any(|p| p.len() != entries) {
            return Err(Error::DimensionMismatch(
                "database plane length != entries".into(),
            ));
        }
        Ok(Database { entries, planes })
    }

    pub fn random(entries: usize, entry_bits: usize, rng: &mut impl Rng) -> Self {
        Database {
            entries,
            planes: (0..entry_bits).map(|_| BitVec::random(rng, entries)).collect(),
        }
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    pub fn entry_bits(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, p: usize) -> &BitVec {
        &self.planes[p]
    }

    /// The full entry at flat position `idx`, one bit per plane.
    pub fn entry(&self, idx: usize) -> BitVec {
        BitVec::from_fn(self.planes.len(), |p| self.planes[p].get(idx))
    }
}

/// What the user retrieves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryTarget {
    Cube { x: [usize; 3] },
    Selector { i: BitVec },
}

impl QueryTarget {
    pub fn validate(&self, protocol: &ProtocolSpec) -> Result<()> {
        match (self, protocol) {
            (QueryTarget::Cube { x }, ProtocolSpec::B2 { m }) => {
                b2::CubeIndex::new(*x, *m).map(|_| ())
            }
            (QueryTarget::Selector { i }, ProtocolSpec::Xor { n }) => {
                if i.len() != *n {
                    Err(Error::DimensionMismatch("selector length != n".into()))
                } else if i.count_ones() != 1 {
                    Err(Error::InvalidArgument(
                        "honest selector must have exactly one bit set".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::InvalidArgument(
                "target kind does not match protocol".into(),
            )),
        }
    }

    /// Flat index of the targeted entry.
    pub fn flat(&self, protocol: &ProtocolSpec) -> usize {
        match (self, protocol) {
            (QueryTarget::Cube { x }, ProtocolSpec::B2 { m }) => {
                b2::CubeIndex::new(*x, *m).expect("validated").flat(*m)
            }
            (QueryTarget::Selector { i }, _) => i.iter_ones().next().expect("validated"),
            _ => panic!("target kind does not match protocol"),
        }
    }

    pub fn sample(protocol: &ProtocolSpec, rng: &mut impl Rng) -> Self {
        match *protocol {
            ProtocolSpec::B2 { m } => QueryTarget::Cube {
                x: b2::CubeIndex::sample(m, rng).coords(),
            },
            ProtocolSpec::Xor { n } => {
                let pos = rng.gen_range(0..n);
                QueryTarget::Selector {
                    i: BitVec::from_fn(n, |j| j == pos),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// records

/// A value that is ⊥ when the run aborted before it was produced.
/// Serializes as the value itself, or the string `"⊥"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrBot<T> {
    Bot(BotMarker),
    Val(T),
}

impl<T> OrBot<T> {
    pub fn bot() -> Self {
        OrBot::Bot(BotMarker)
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            OrBot::Val(v) => Some(v),
            OrBot::Bot(_) => None,
        }
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, OrBot::Bot(_))
    }
}

impl<T> From<T> for OrBot<T> {
    fn from(v: T) -> Self {
        OrBot::Val(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BotMarker;

impl Serialize for BotMarker {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str("⊥")
    }
}

impl<'de> Deserialize<'de> for BotMarker {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "⊥" {
            Ok(BotMarker)
        } else {
            Err(serde::de::Error::custom("expected \"⊥\""))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Aborted,
    /// The decoded entry (`L` bits).
    Decoded { value: BitVec },
}

/// The user's randomness as recorded (protocol-dependent shape).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomnessRec {
    Cube(b2::UserRandomness),
    Selector { r: BitVec },
}

/// Progress marker: how many stages completed before the run stopped.
pub mod stage {
    pub const NONE: u8 = 0;
    pub const INTER_DC_KEYS: u8 = 1;
    pub const U_D1_KEYS: u8 = 2;
    pub const U_D2_KEYS: u8 = 3;
    pub const QUERIES_BUILT: u8 = 4;
    pub const QUERIES_SENT: u8 = 5;
    pub const ANSWERS_BUILT: u8 = 6;
    pub const ANSWERS_SENT: u8 = 7;
    pub const DECODED: u8 = 8;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserLocals {
    pub target: QueryTarget,
    pub r: OrBot<RandomnessRec>,
    /// Plaintext wire queries as sent (adversarial users may deviate).
    pub q1: OrBot<BitVec>,
    pub q2: OrBot<BitVec>,
    pub a1_tilde: OrBot<BitVec>,
    pub a2_tilde: OrBot<BitVec>,
    pub s2: OrBot<BitVec>,
    pub s4: OrBot<BitVec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcLocals {
    pub w: Database,
    pub q_tilde: OrBot<BitVec>,
    /// Plaintext answer as sent (dishonest servers may deviate).
    pub a: OrBot<BitVec>,
    /// Key on this server's user link (s1 / s3).
    pub s_user_link: OrBot<BitVec>,
    /// Key on the server↔server link (s5 / s6).
    pub s_inter_dc: OrBot<BitVec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveLocals {
    pub c_q1: OrBot<BitVec>,
    pub c_q2: OrBot<BitVec>,
    pub c_a1: OrBot<BitVec>,
    pub c_a2: OrBot<BitVec>,
    /// Per-link leak captures: ⊥ if the link never completed, `None` if it
    /// completed without a leak event.
    pub leak_d1_d2: OrBot<Option<BitVec>>,
    pub leak_u_d1: OrBot<Option<BitVec>>,
    pub leak_u_d2: OrBot<Option<BitVec>>,
}

/// Complete classical transcript of one protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub trial: u64,
    pub outcome: Outcome,
    pub user: UserLocals,
    pub dc1: DcLocals,
    pub dc2: DcLocals,
    pub eve: EveLocals,
    pub stages_completed: u8,
}

// ---------------------------------------------------------------------------
// the run itself

/// Expand a server↔server key into per-plane masking keys.
pub fn derive_cds_from_key(key: &BitVec, m: usize, planes: usize) -> Result<Vec<b2::CdsKey>> {
    let per = b2::CdsKey::free_bits_len(m);
    if key.len() < planes * per {
        return Err(Error::InsufficientKey {
            needed: planes * per,
            have: key.len(),
        });
    }
    (0..planes)
        .map(|p| b2::CdsKey::from_free_bits(&key.slice(p * per, per), m))
        .collect()
}

struct RecordBuilder {
    rec: RunRecord,
}

impl RecordBuilder {
    fn new(config: &RunConfig, db: &Database, target: &QueryTarget) -> Self {
        RecordBuilder {
            rec: RunRecord {
                config: config.clone(),
                trial: 0,
                outcome: Outcome::Aborted,
                user: UserLocals {
                    target: target.clone(),
                    r: OrBot::bot(),
                    q1: OrBot::bot(),
                    q2: OrBot::bot(),
                    a1_tilde: OrBot::bot(),
                    a2_tilde: OrBot::bot(),
                    s2: OrBot::bot(),
                    s4: OrBot::bot(),
                },
                dc1: DcLocals {
                    w: db.clone(),
                    q_tilde: OrBot::bot(),
                    a: OrBot::bot(),
                    s_user_link: OrBot::bot(),
                    s_inter_dc: OrBot::bot(),
                },
                dc2: DcLocals {
                    w: db.clone(),
                    q_tilde: OrBot::bot(),
                    a: OrBot::bot(),
                    s_user_link: OrBot::bot(),
                    s_inter_dc: OrBot::bot(),
                },
                eve: EveLocals {
                    c_q1: OrBot::bot(),
                    c_q2: OrBot::bot(),
                    c_a1: OrBot::bot(),
                    c_a2: OrBot::bot(),
                    leak_d1_d2: OrBot::bot(),
                    leak_u_d1: OrBot::bot(),
                    leak_u_d2: OrBot::bot(),
                },
                stages_completed: stage::NONE,
            },
        }
    }
}

/// Execute one full protocol run. Randomness is drawn from `rng` in a fixed
/// documented order (inter-server key, user↔server-1 key, user↔server-2 key,
/// user randomness), so a seeded generator reproduces the run bit for bit.
pub fn run_protocol(
    config: &RunConfig,
    db: &Database,
    target: &QueryTarget,
    rng: &mut impl Rng,
) -> Result<RunRecord> {
    config.validate()?;
    target.validate(&config.protocol)?;
    if db.entries() != config.protocol.entries() || db.entry_bits() != config.entry_bits {
        return Err(Error::DimensionMismatch(
            "database shape does not match the configuration".into(),
        ));
    }

    let l = config.entry_bits;
    let mut b = RecordBuilder::new(config, db, target);

    // --- key establishment, server↔server first
    let inter = match qkd::sample_keypair(config.inter_dc_key_bits(), &config.links.d1_d2, rng) {
        KeyExchangeOutcome::Abort => return Ok(b.rec),
        KeyExchangeOutcome::Pass(kp) => kp,
    };
    b.rec.dc1.s_inter_dc = inter.s_a.clone().into();
    b.rec.dc2.s_inter_dc = inter.s_b.clone().into();
    b.rec.eve.leak_d1_d2 = OrBot::Val(inter.eve_leak.clone());
    b.rec.stages_completed = stage::INTER_DC_KEYS;

    let link_bits = config.user_link_key_bits();
    let kp1 = match qkd::sample_keypair(link_bits, &config.links.u_d1, rng) {
        KeyExchangeOutcome::Abort => return Ok(b.rec),
        KeyExchangeOutcome::Pass(kp) => kp,
    };
    // s_a is the server's copy, s_b the user's
    let (s1, s2) = (kp1.s_a, kp1.s_b);
    b.rec.dc1.s_user_link = s1.clone().into();
    b.rec.user.s2 = s2.clone().into();
    b.rec.eve.leak_u_d1 = OrBot::Val(kp1.eve_leak);
    b.rec.stages_completed = stage::U_D1_KEYS;

    let kp2 = match qkd::sample_keypair(link_bits, &config.links.u_d2, rng) {
        KeyExchangeOutcome::Abort => return Ok(b.rec),
        KeyExchangeOutcome::Pass(kp) => kp,
    };
    let (s3, s4) = (kp2.s_a, kp2.s_b);
    b.rec.dc2.s_user_link = s3.clone().into();
    b.rec.user.s4 = s4.clone().into();
    b.rec.eve.leak_u_d2 = OrBot::Val(kp2.eve_leak);
    b.rec.stages_completed = stage::U_D2_KEYS;

    // --- queries
    let (r_rec, honest_q1, honest_q2, decode_target) = match (&config.protocol, target) {
        (ProtocolSpec::B2 { m }, QueryTarget::Cube { x }) => {
            let r = b2::UserRandomness::sample(*m, rng);
            let x_idx = b2::CubeIndex::new(*x, *m).expect("validated");
            let (q1, q2) = b2::derive_queries(&x_idx, &r, *m);
            (
                RandomnessRec::Cube(r),
                b2::encode_query(&q1, *m),
                b2::encode_query(&q2, *m),
                target.clone(),
            )
        }
        (ProtocolSpec::Xor { n }, QueryTarget::Selector { i }) => {
            let r = xor::sample_randomness(*n, rng);
            let (q1, q2) = xor::derive_queries(i, &r);
            (RandomnessRec::Selector { r }, q1, q2, target.clone())
        }
        _ => unreachable!("validated above"),
    };

    let (q1_wire, q2_wire, decode_target) = match &config.adversary {
        AdversarySpec::DishonestUser { strategy } => match (strategy, &config.protocol) {
            (UserStrategy::RetargetIndex { x_prime }, ProtocolSpec::B2 { m }) => {
                let r = match &r_rec {
                    RandomnessRec::Cube(r) => r,
                    _ => unreachable!(),
                };
                let x_idx = b2::CubeIndex::new(*x_prime, *m).expect("validated");
                let (q1, q2) = b2::derive_queries(&x_idx, r, *m);
                (
                    b2::encode_query(&q1, *m),
                    b2::encode_query(&q2, *m),
                    QueryTarget::Cube { x: *x_prime },
                )
            }
            (UserStrategy::RetargetSelector { i_prime }, ProtocolSpec::Xor { .. }) => {
                let r = match &r_rec {
                    RandomnessRec::Selector { r } => r,
                    _ => unreachable!(),
                };
                let (q1, q2) = xor::derive_queries(i_prime, r);
                (q1, q2, QueryTarget::Selector { i: i_prime.clone() })
            }
            (UserStrategy::MirrorQuery, _) => (honest_q1.clone(), honest_q1, decode_target),
            (UserStrategy::RawQueries { q1, q2 }, _) => (q1.clone(), q2.clone(), decode_target),
            _ => unreachable!("validated above"),
        },
        _ => (honest_q1, honest_q2, decode_target),
    };
    b.rec.user.r = r_rec.into();
    b.rec.user.q1 = q1_wire.clone().into();
    b.rec.user.q2 = q2_wire.clone().into();
    b.rec.stages_completed = stage::QUERIES_BUILT;

    // --- query transport (enc halves pad user→server traffic)
    let h2 = qkd::split_key(&s2).expect("even by construction");
    let h1 = qkd::split_key(&s1).expect("even by construction");
    let h4 = qkd::split_key(&s4).expect("even by construction");
    let h3 = qkd::split_key(&s3).expect("even by construction");
    let c_q1 = qkd::otp(&q1_wire, &h2.enc)?;
    let q1_tilde = qkd::otp(&c_q1, &h1.enc)?;
    let c_q2 = qkd::otp(&q2_wire, &h4.enc)?;
    let q2_tilde = qkd::otp(&c_q2, &h3.enc)?;
    b.rec.eve.c_q1 = c_q1.into();
    b.rec.eve.c_q2 = c_q2.into();
    b.rec.dc1.q_tilde = q1_tilde.clone().into();
    b.rec.dc2.q_tilde = q2_tilde.clone().into();
    b.rec.stages_completed = stage::QUERIES_SENT;

    // --- answers
    let mut a1_wire;
    let mut a2_wire;
    match &config.protocol {
        ProtocolSpec::B2 { m } => {
            let cds1 = derive_cds_from_key(&inter.s_a, *m, l)?;
            let cds2 = derive_cds_from_key(&inter.s_b, *m, l)?;
            let q1_dec = b2::decode_query(&q1_tilde, *m)?;
            let q2_dec = b2::decode_query(&q2_tilde, *m)?;
            a1_wire = BitVec::zeros(0);
            a2_wire = BitVec::zeros(0);
            for p in 0..l {
                let a1 = b2::answer_dc1(&q1_dec, db.plane(p), &cds1[p]);
                a1_wire.extend_from(&b2::encode_answer1(&a1));
                let a2 = b2::answer_dc2(&q2_dec, db.plane(p), &cds2[p]);
                a2_wire.extend_from(&b2::encode_answer2(&a2));
            }
        }
        ProtocolSpec::Xor { .. } => {
            a1_wire = BitVec::from_fn(l, |p| {
                xor::answer(&q1_tilde, db.plane(p), inter.s_a.get(p))
            });
            a2_wire = BitVec::from_fn(l, |p| {
                xor::answer(&q2_tilde, db.plane(p), inter.s_b.get(p))
            });
        }
    }
    if let AdversarySpec::DishonestDc { which, strategy } = &config.adversary {
        let tampered = match (strategy, which) {
            (DcStrategy::FlipAnswerBits, DcId::Dc1) => {
                BitVec::from_fn(a1_wire.len(), |i| !a1_wire.get(i))
            }
            (DcStrategy::FlipAnswerBits, DcId::Dc2) => {
                BitVec::from_fn(a2_wire.len(), |i| !a2_wire.get(i))
            }
            (DcStrategy::ZeroAnswer, DcId::Dc1) => BitVec::zeros(a1_wire.len()),
            (DcStrategy::ZeroAnswer, DcId::Dc2) => BitVec::zeros(a2_wire.len()),
            (DcStrategy::RawAnswer { bits }, _) => bits.clone(),
        };
        match which {
            DcId::Dc1 => a1_wire = tampered,
            DcId::Dc2 => a2_wire = tampered,
        }
    }
    b.rec.dc1.a = a1_wire.clone().into();
    b.rec.dc2.a = a2_wire.clone().into();
    b.rec.stages_completed = stage::ANSWERS_BUILT;

    // --- answer transport (dec halves pad server→user traffic)
    let c_a1 = qkd::otp(&a1_wire, &h1.dec)?;
    let a1_tilde = qkd::otp(&c_a1, &h2.dec)?;
    let c_a2 = qkd::otp(&a2_wire, &h3.dec)?;
    let a2_tilde = qkd::otp(&c_a2, &h4.dec)?;
    b.rec.eve.c_a1 = c_a1.into();
    b.rec.eve.c_a2 = c_a2.into();
    b.rec.user.a1_tilde = a1_tilde.clone().into();
    b.rec.user.a2_tilde = a2_tilde.clone().into();
    b.rec.stages_completed = stage::ANSWERS_SENT;

    // --- decode
    let value = match (&config.protocol, &decode_target) {
        (ProtocolSpec::B2 { m }, QueryTarget::Cube { x }) => {
            let x_idx = b2::CubeIndex::new(*x, *m).expect("validated");
            let width = b2::answer_wire_bits(*m);
            let r = match b.rec.user.r.value() {
                Some(RandomnessRec::Cube(r)) => r.clone(),
                _ => unreachable!(),
            };
            let q1_dec = b2::decode_query(&q1_wire, *m)?;
            let q2_dec = b2::decode_query(&q2_wire, *m)?;
            BitVec::from_fn(l, |p| {
                let a1 = b2::decode_answer1(&a1_tilde.slice(p * width, width), *m)
                    .expect("width matches");
                let a2 = b2::decode_answer2(&a2_tilde.slice(p * width, width), *m)
                    .expect("width matches");
                b2::decode(&a1, &a2, &q1_dec, &q2_dec, &x_idx, &r)
            })
        }
        (ProtocolSpec::Xor { .. }, _) => {
            BitVec::from_fn(l, |p| xor::decode(a1_tilde.get(p), a2_tilde.get(p)))
        }
        _ => unreachable!("validated above"),
    };
    b.rec.outcome = Outcome::Decoded { value };
    b.rec.stages_completed = stage::DECODED;
    Ok(b.rec)
}

// ---------------------------------------------------------------------------
// batches

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatabaseSpec {
    /// Fresh random database per trial.
    Random,
    Fixed { planes: Vec<BitVec> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Fresh random target per trial.
    Random,
    FixedCube { x: [usize; 3] },
    FixedSelector { i: BitVec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub config: RunConfig,
    pub trials: u64,
    pub seed: u64,
    pub database: DatabaseSpec,
    pub target: TargetSpec,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if let DatabaseSpec::Fixed { planes } = &self.database {
            Database::new(self.config.protocol.entries(), planes.clone())?;
            if planes.len() != self.config.entry_bits {
                return Err(Error::DimensionMismatch(
                    "fixed database plane count != entry_bits".into(),
                ));
            }
        }
        match &self.target {
            TargetSpec::Random => {}
            TargetSpec::FixedCube { x } => {
                QueryTarget::Cube { x: *x }.validate(&self.config.protocol)?
            }
            TargetSpec::FixedSelector { i } => {
                QueryTarget::Selector { i: i.clone() }.validate(&self.config.protocol)?
            }
        }
        Ok(())
    }
}

/// Per-trial generator: one independent stream of the batch seed per trial,
/// so results do not depend on scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_add(1));
    rng
}

/// Run `spec.trials` independent trials, in parallel, in deterministic
/// trial order. Per trial the draw order is: database (if random), target
/// (if random), then the protocol run.
pub fn run_batch(spec: &BatchSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let mut records = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(spec.seed, trial);
            let db = match &spec.database {
                DatabaseSpec::Random => Database::random(
                    spec.config.protocol.entries(),
                    spec.config.entry_bits,
                    &mut rng,
                ),
                DatabaseSpec::Fixed { planes } => {
                    Database::new(spec.config.protocol.entries(), planes.clone())
                        .expect("validated")
                }
            };
            let target = match &spec.target {
                TargetSpec::Random => QueryTarget::sample(&spec.config.protocol, &mut rng),
                TargetSpec::FixedCube { x } => QueryTarget::Cube { x: *x },
                TargetSpec::FixedSelector { i } => QueryTarget::Selector { i: i.clone() },
            };
            let mut rec = run_protocol(&spec.config, &db, &target, &mut rng)?;
            rec.trial = trial;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.trial);
    Ok(records)
}

// ---------------------------------------------------------------------------
// views

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    UserEve,
    Dc1Eve,
    Dc2Eve,
    Eve,
}

/// One coalition's view: named components in a fixed order, each rendered
/// canonically (`⊥` for values the run never produced).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View(pub Vec<(&'static str, String)>);

impl View {
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push(';');
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn canon<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("view components serialize")
}

/// The eavesdropper's own view: everything on the wires plus leak captures.
pub fn eve_view(eve: &EveLocals) -> View {
    View(vec![
        ("c_q1", canon(&eve.c_q1)),
        ("c_q2", canon(&eve.c_q2)),
        ("c_a1", canon(&eve.c_a1)),
        ("c_a2", canon(&eve.c_a2)),
        ("leak_d1_d2", canon(&eve.leak_d1_d2)),
        ("leak_u_d1", canon(&eve.leak_u_d1)),
        ("leak_u_d2", canon(&eve.leak_u_d2)),
    ])
}

/// Project the record onto one coalition's variables. The eavesdropper's
/// wire observations (ciphertexts and leak captures) appear in every view.
pub fn view_of(rec: &RunRecord, party: Party) -> View {
    let eve_part = eve_view(&rec.eve).0;
    let mut parts: Vec<(&'static str, String)> = match party {
        Party::UserEve => vec![
            ("x", canon(&rec.user.target)),
            ("r", canon(&rec.user.r)),
            ("q1", canon(&rec.user.q1)),
            ("q2", canon(&rec.user.q2)),
            ("a1_tilde", canon(&rec.user.a1_tilde)),
            ("a2_tilde", canon(&rec.user.a2_tilde)),
            ("s2", canon(&rec.user.s2)),
            ("s4", canon(&rec.user.s4)),
        ],
        Party::Dc1Eve => vec![
            ("w", canon(&rec.dc1.w)),
            ("q1_tilde", canon(&rec.dc1.q_tilde)),
            ("a1", canon(&rec.dc1.a)),
            ("s1", canon(&rec.dc1.s_user_link)),
            ("s5", canon(&rec.dc1.s_inter_dc)),
        ],
        Party::Dc2Eve => vec![
            ("w", canon(&rec.dc2.w)),
            ("q2_tilde", canon(&rec.dc2.q_tilde)),
            ("a2", canon(&rec.dc2.a)),
            ("s3", canon(&rec.dc2.s_user_link)),
            ("s6", canon(&rec.dc2.s_inter_dc)),
        ],
        Party::Eve => vec![],
    };
    parts.extend(eve_part);
    View(parts)
}

// ---------------------------------------------------------------------------
// transcripts

/// First line of a transcript file; the remaining lines are one record each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub format: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub batch: BatchSpec,
}

pub const TRANSCRIPT_FORMAT: &str = "spir-transcript-v1";

pub fn write_transcript(
    mut out: impl Write,
    meta: &TranscriptMeta,
    records: &[RunRecord],
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Malformed(format!("transcript write failed: {e}"));
    let json_err = |e: serde_json::Error| Error::Malformed(format!("serialize failed: {e}"));
    let mut line = serde_json::to_string(meta).map_err(json_err)?;
    line.push('\n');
    out.write_all(line.as_bytes()).map_err(io_err)?;
    for rec in records {
        let mut line = serde_json::to_string(rec).map_err(json_err)?;
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_transcript(input: impl BufRead) -> Result<(TranscriptMeta, Vec<RunRecord>)> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Malformed("empty transcript".into()))?
        .map_err(|e| Error::Malformed(format!("transcript read failed: {e}")))?;
    let meta: TranscriptMeta = serde_json::from_str(&first)
        .map_err(|e| Error::Malformed(format!("bad transcript header: {e}")))?;
    if meta.format != TRANSCRIPT_FORMAT {
        return Err(Error::Malformed(format!(
            "unsupported transcript format {:?}",
            meta.format
        )));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Malformed(format!("transcript read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("bad record on line {}: {e}", idx + 2)))?;
        records.push(rec);
    }
    Ok((meta, records))
}
