//! Surrogate model of a paired-key channel (QKD-style link) and the
//! one-time-pad transport built on it.
//!
//! Each link delivery either aborts outright or hands both ends a key of the
//! requested length. Imperfections are whole-key events: with probability
//! `p_mismatch` the far end's copy is resampled wholesale (correctness
//! failure), and with probability `p_leak` the eavesdropper records a full
//! copy (secrecy failure). The per-link surrogates
//! `(1 - p_abort)·p_mismatch` and `(1 - p_abort)·p_leak` play the role of
//! the key channel's correctness and secrecy parameters.

use crate::bits::BitVec;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QkdModelParams {
    pub p_abort: f64,
    pub p_mismatch: f64,
    pub p_leak: f64,
}

impl QkdModelParams {
    pub fn ideal() -> Self {
        QkdModelParams {
            p_abort: 0.0,
            p_mismatch: 0.0,
            p_leak: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_abort", self.p_abort),
            ("p_mismatch", self.p_mismatch),
            ("p_leak", self.p_leak),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Probability the link passes yet the two key copies disagree.
    pub fn eps_cor_surrogate(&self) -> f64 {
        (1.0 - self.p_abort) * self.p_mismatch
    }

    /// Probability the link passes yet the key is in the eavesdropper's hands.
    pub fn eps_sec_surrogate(&self) -> f64 {
        (1.0 - self.p_abort) * self.p_leak
    }

    pub fn eps_surrogate(&self) -> f64 {
        self.eps_cor_surrogate() + self.eps_sec_surrogate()
    }
}

/// Both ends' key copies plus what, if anything, the eavesdropper saw.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub s_a: BitVec,
    pub s_b: BitVec,
    /// `Some(copy of s_a)` when the all-or-nothing leak event fired.
    pub eve_leak: Option<BitVec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyExchangeOutcome {
    Abort,
    Pass(KeyPair),
}

/// Sample one link delivery. The draw order is fixed — abort, `s_a`,
/// mismatch (resampling `s_b` wholesale), leak — so seeded runs replay
/// identically.
pub fn sample_keypair(
    len: usize,
    params: &QkdModelParams,
    rng: &mut impl Rng,
) -> KeyExchangeOutcome {
    debug_assert!(params.validate().is_ok());
    if rng.gen_bool(params.p_abort) {
        return KeyExchangeOutcome::Abort;
    }
    let s_a = BitVec::random(rng, len);
    let s_b = if rng.gen_bool(params.p_mismatch) {
        BitVec::random(rng, len)
    } else {
        s_a.clone()
    };
    let eve_leak = rng.gen_bool(params.p_leak).then(|| s_a.clone());
    KeyExchangeOutcome::Pass(KeyPair { s_a, s_b, eve_leak })
}

/// The two pad halves carved out of one link key: `enc` pads messages from
/// the user toward the server, `dec` pads the reverse direction. Both ends
/// split their own copy the same way, so matching wire positions line up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyHalves {
    pub enc: BitVec,
    pub dec: BitVec,
}

/// Split a key into two equal halves; the key length must be even.
pub fn split_key(key: &BitVec) -> Result<KeyHalves> {
    if key.len() % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "key length {} is odd, cannot split into equal halves",
            key.len()
        )));
    }
    let half = key.len() / 2;
    Ok(KeyHalves {
        enc: key.slice(0, half),
        dec: key.slice(half, half),
    })
}

/// One-time-pad a message with a prefix of `pad`; requires
/// `pad.len() >= msg.len()`.
pub fn otp(msg: &BitVec, pad: &BitVec) -> Result<BitVec> {
    if pad.len() < msg.len() {
        return Err(Error::InsufficientKey {
            needed: msg.len(),
            have: pad.len(),
        });
    }
    Ok(msg.xored(&pad.slice(0, msg.len())))
}

/// Probability that at least one of the three links aborts.
pub fn p_fail(p1: f64, p2: f64, p3: f64) -> f64 {
    1.0 - (1.0 - p1) * (1.0 - p2) * (1.0 - p3)
}
