//! Resource planning: finite-key extractable length, communication cost of
//! the two protocols, the largest entry size a key budget supports, and
//! feasibility curves over database size.

use crate::error::{Error, Result};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::orchestrator::ProtocolKind;

/// Binary entropy `h(p) = −p·log2(p) − (1−p)·log2(1−p)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy<F: Float>(p: F) -> F {
    let zero = F::zero();
    let one = F::one();
    if p < zero || p > one {
        return F::nan();
    }
    if p == zero || p == one {
        return zero;
    }
    let q = one - p;
    -(p * p.log2()) - q * q.log2()
}

/// Bits disclosed during error correction for a block of `n_t` bits at
/// error rate `e_t`, with the standard 1.16 inefficiency factor.
pub fn ec_leakage(n_t: f64, e_t: f64) -> f64 {
    1.16 * n_t * binary_entropy(e_t)
}

/// Sifted-block statistics entering the key-length formula. Counts are
/// per reported measurement outcome; estimating them from channel
/// parameters is upstream of this module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    /// Events where a party sent zero photons.
    pub n_t0: f64,
    /// Events where both parties sent exactly one photon.
    pub n_t1: f64,
    /// Error rate of the single-photon events, in [0, 0.5].
    pub e_t1: f64,
    /// Sifted bits kept for keying (not spent on error estimation).
    pub n_t: f64,
    /// Observed error rate of that sifted key.
    pub e_t: f64,
}

impl BlockStats {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_t0", self.n_t0),
            ("n_t1", self.n_t1),
            ("n_t", self.n_t),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0")));
            }
        }
        if !self.e_t1.is_finite() || !(0.0..=0.5).contains(&self.e_t1) {
            return Err(Error::InvalidArgument("e_t1 must be in [0,0.5]".into()));
        }
        if !self.e_t.is_finite() || !(0.0..=1.0).contains(&self.e_t) {
            return Err(Error::InvalidArgument("e_t must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Failure-probability budget split of the key-length bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub eps_cor: f64,
    pub eps_prime: f64,
    pub eps_hat: f64,
    pub eps_pa: f64,
}

impl EpsilonBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_cor", self.eps_cor),
            ("eps_prime", self.eps_prime),
            ("eps_hat", self.eps_hat),
            ("eps_pa", self.eps_pa),
        ] {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in (0,1)"
                )));
            }
        }
        Ok(())
    }
}

/// Finite-key extractable length for one reported outcome (floored at zero):
///
/// ```text
/// l = n_t0 + n_t1·(1 − h(e_t1)) − leak_EC(n_t, e_t)
///       − log2(8/ε_cor) − 2·log2(2/(ε'·ε_hat)) − 2·log2(1/(2·ε_PA))
/// ```
///
/// The bound is per outcome; a total key length is the caller's sum over
/// outcomes. The result is the integer part; negative values clamp to 0.
pub fn key_length(stats: &BlockStats, eps: &EpsilonBudget) -> Result<u64> {
    stats.validate()?;
    eps.validate()?;
    let l = stats.n_t0 + stats.n_t1 * (1.0 - binary_entropy(stats.e_t1))
        - ec_leakage(stats.n_t, stats.e_t)
        - (8.0 / eps.eps_cor).log2()
        - 2.0 * (2.0 / (eps.eps_prime * eps.eps_hat)).log2()
        - 2.0 * (1.0 / (2.0 * eps.eps_pa)).log2();
    if !l.is_finite() {
        return Err(Error::InvalidArgument(
            "key length evaluation did not converge".into(),
        ));
    }
    Ok(if l <= 0.0 { 0 } else { l.floor() as u64 })
}

// ---------------------------------------------------------------------------
// communication cost

/// Integer cube root, rounded up: the smallest `m` with `m³ ≥ n`.
pub fn icbrt_ceil(n: u64) -> u64 {
    if n <= 1 {
        return n;
    }
    let mut m = (n as f64).cbrt().round() as u64;
    while m.checked_pow(3).map_or(true, |c| c < n) {
        m += 1;
    }
    while m > 1 && (m - 1).pow(3) >= n {
        m -= 1;
    }
    m
}

/// Bits of secret key a deployment consumes, per link class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Each of the two user↔server links: query up plus answers down. The
    /// cube protocol's three displacements count `log2(m)` bits each,
    /// real-valued in this model, hence the fractional type.
    pub per_link_bits: f64,
    /// The server↔server link (answer-masking key).
    pub inter_dc_bits: u64,
    /// Cube side used (cube protocol only).
    pub m: Option<u64>,
}

/// Key cost of retrieving one `l`-bit entry from an `n`-entry database.
///
/// Cube protocol (padded to `m³ ≥ n`): each user link carries `3m` subset
/// bits and three displacements up, and `l` answer planes of `3m + 7` bits
/// down — `3m + 3·log2(m) + l·(3m+7)` in total — while the servers consume
/// `l·(9m+10)` bits of masking key between them. Linear protocol: `n + l`
/// per user link and `l` between the servers, exactly.
pub fn comm_cost(kind: ProtocolKind, n: u64, l: u64) -> Result<CostBreakdown> {
    if n == 0 || l == 0 {
        return Err(Error::InvalidArgument("n and l must be >= 1".into()));
    }
    match kind {
        ProtocolKind::B2 => {
            let m = icbrt_ceil(n);
            let mf = m as f64;
            let per_link = 3.0 * mf + 3.0 * mf.log2() + l as f64 * (3.0 * mf + 7.0);
            let inter = l
                .checked_mul(9 * m + 10)
                .ok_or_else(|| Error::InvalidArgument("cost overflows u64".into()))?;
            Ok(CostBreakdown {
                per_link_bits: per_link,
                inter_dc_bits: inter,
                m: Some(m),
            })
        }
        ProtocolKind::Xor => Ok(CostBreakdown {
            per_link_bits: n as f64 + l as f64,
            inter_dc_bits: l,
            m: None,
        }),
    }
}

/// Largest entry size (bits) retrievable within both budgets, or `None` if
/// even `l = 1` does not fit. Cost is monotone in `l`, so double then bisect.
pub fn max_entry_size(
    kind: ProtocolKind,
    n: u64,
    per_link_budget: u64,
    inter_dc_budget: u64,
) -> Result<Option<u64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let fits = |l: u64| -> bool {
        match comm_cost(kind, n, l) {
            Ok(c) => {
                c.per_link_bits <= per_link_budget as f64 && c.inter_dc_bits <= inter_dc_budget
            }
            Err(_) => false, // overflow: certainly over budget
        }
    };
    if !fits(1) {
        return Ok(None);
    }
    let mut lo = 1u64; // fits
    let mut hi = 2u64;
    while fits(hi) {
        lo = hi;
        match hi.checked_mul(2) {
            Some(next) => hi = next,
            None => return Ok(Some(u64::MAX)),
        }
    }
    // invariant: fits(lo), !fits(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

// ---------------------------------------------------------------------------
// scenarios and curves

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    /// Number of database entries.
    pub n: u64,
    /// Entry size in bits.
    pub l: u64,
}

/// Catalogue of deployment-sized workloads for the cost model.
pub fn scenario_presets() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "music-catalog",
            description: "60M tracks of 10 MB each",
            n: 60_000_000,
            l: 80_000_000,
        },
        Scenario {
            name: "ehr",
            description: "5.7M patient records of 5 MB each",
            n: 5_700_000,
            l: 40_000_000,
        },
        Scenario {
            name: "fingerprint",
            description: "7.7B templates of 500 bytes each",
            n: 7_700_000_000,
            l: 4_000,
        },
        Scenario {
            name: "genome",
            description: "19,116 annotated genes of ~1.2 MB each",
            n: 19_116,
            l: 9_880_000,
        },
    ]
}

pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    scenario_presets().into_iter().find(|s| s.name == name)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: u64,
    /// Largest supported entry size at this `n`, if any.
    pub l_max: Option<u64>,
    /// Cost of retrieving an `l_max`-bit entry (0 if infeasible).
    pub per_link_cost: f64,
    pub inter_dc_cost: u64,
}

/// Sweep database sizes and report, per size, the largest entry the budgets
/// support and the cost at that point.
pub fn feasibility_curve(
    kind: ProtocolKind,
    sizes: &[u64],
    per_link_budget: u64,
    inter_dc_budget: u64,
) -> Result<Vec<CurvePoint>> {
    sizes
        .iter()
        .map(|&n| {
            let l_max = max_entry_size(kind, n, per_link_budget, inter_dc_budget)?;
            let (per_link_cost, inter_dc_cost) = match l_max {
                Some(l) => {
                    let c = comm_cost(kind, n, l)?;
                    (c.per_link_bits, c.inter_dc_bits)
                }
                None => (0.0, 0),
            };
            Ok(CurvePoint {
                n,
                l_max,
                per_link_cost,
                inter_dc_cost,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// high-precision reference

/// Fixed-point reference evaluation of [`key_length`], for checking the f64
/// path to within one bit. Arithmetic is `BigInt` scaled by 2^128; `ln` uses
/// the atanh series after range reduction by powers of two, so every step is
/// exact except the final truncation.
pub mod reference {
    use num_bigint::BigInt;
    use num_traits::{One, Signed, ToPrimitive, Zero};

    use super::{BlockStats, EpsilonBudget};
    use crate::error::{Error, Result};

    const FRAC_BITS: u32 = 128;

    fn fp_one() -> BigInt {
        BigInt::one() << FRAC_BITS
    }

    fn from_f64(v: f64) -> Result<BigInt> {
        if !v.is_finite() {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        // exact: decompose the f64 into mantissa × 2^exp
        let (mant, exp, sign) = {
            let bits = v.to_bits();
            let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
            let biased = ((bits >> 52) & 0x7ff) as i64;
            let frac = bits & ((1u64 << 52) - 1);
            if biased == 0 {
                (frac, -1074i64, sign)
            } else {
                (frac | (1 << 52), biased - 1075, sign)
            }
        };
        let shift = exp + FRAC_BITS as i64;
        let mag = if shift >= 0 {
            BigInt::from(mant) << shift
        } else {
            BigInt::from(mant) >> (-shift)
        };
        Ok(mag * sign)
    }

    fn mul(a: &BigInt, b: &BigInt) -> BigInt {
        (a * b) >> FRAC_BITS
    }

    fn div(a: &BigInt, b: &BigInt) -> BigInt {
        (a << FRAC_BITS) / b
    }

    /// `ln(x)` for `x > 0` via `ln(x) = 2·atanh((y−1)/(y+1)) + k·ln 2` after
    /// reducing `x = y·2^k` with `y ∈ [1, 2)`.
    fn ln(x: &BigInt) -> Result<BigInt> {
        if !x.is_positive() {
            return Err(Error::InvalidArgument("ln of non-positive value".into()));
        }
        let one = fp_one();
        let mut y = x.clone();
        let mut k: i64 = 0;
        while y >= (&one << 1u32) {
            y >>= 1;
            k += 1;
        }
        while y < one {
            y <<= 1;
            k -= 1;
        }
        // atanh series: t + t³/3 + t⁵/5 + …, |t| ≤ 1/3 after reduction
        let t = div(&(&y - &one), &(&y + &one));
        let t2 = mul(&t, &t);
        let mut term = t.clone();
        let mut sum = BigInt::zero();
        let mut odd = 1u32;
        while !term.is_zero() && odd < 1000 {
            sum += &term / odd;
            term = mul(&term, &t2);
            odd += 2;
        }
        Ok((sum << 1u32) + ln2() * k)
    }

    fn ln2() -> BigInt {
        // 2·atanh(1/3); 1/3 in fixed point is a plain integer division
        let t = fp_one() / 3u32;
        let t2 = mul(&t, &t);
        let mut term = t.clone();
        let mut sum = BigInt::zero();
        let mut odd = 1u32;
        while !term.is_zero() && odd < 1000 {
            sum += &term / odd;
            term = mul(&term, &t2);
            odd += 2;
        }
        sum << 1u32
    }

    fn log2(x: &BigInt) -> Result<BigInt> {
        Ok(div(&ln(x)?, &ln2()))
    }

    fn entropy(p: &BigInt) -> Result<BigInt> {
        let one = fp_one();
        if p.is_zero() || *p == one {
            return Ok(BigInt::zero());
        }
        if p.is_negative() || *p > one {
            return Err(Error::InvalidArgument("entropy argument out of range".into()));
        }
        let q = &one - p;
        Ok(-(mul(p, &log2(p)?)) - mul(&q, &log2(&q)?))
    }

    /// Mirror of [`super::key_length`] in 128-fractional-bit fixed point.
    /// Returns the floored bit count.
    pub fn key_length_reference(stats: &BlockStats, eps: &EpsilonBudget) -> Result<i64> {
        stats.validate()?;
        eps.validate()?;
        let n_t0 = from_f64(stats.n_t0)?;
        let n_t1 = from_f64(stats.n_t1)?;
        let e_t1 = from_f64(stats.e_t1)?;
        let n_t = from_f64(stats.n_t)?;
        let e_t = from_f64(stats.e_t)?;
        let one = fp_one();
        let rate = &n_t0 + mul(&n_t1, &(&one - &entropy(&e_t1)?));
        let leak = mul(
            &from_f64(1.16)?,
            &mul(&n_t, &entropy(&e_t)?),
        );
        let eight = &one << 3u32;
        let term_cor = log2(&div(&eight, &from_f64(eps.eps_cor)?))?;
        let two = &one << 1u32;
        let term_pe = log2(&div(
            &two,
            &mul(&from_f64(eps.eps_prime)?, &from_f64(eps.eps_hat)?),
        ))?;
        let term_pa = log2(&div(&one, &mul(&two, &from_f64(eps.eps_pa)?)))?;
        let l = rate - leak - term_cor - (&term_pe << 1u32) - (&term_pa << 1u32);
        if l.is_negative() {
            return Ok(0);
        }
        Ok((l >> FRAC_BITS).to_i64().unwrap_or(i64::MAX))
    }

    /// Fixed-point binary entropy exposed for cross-checks, truncated to f64.
    pub fn binary_entropy_reference(p: f64) -> Result<f64> {
        let v = entropy(&from_f64(p)?)?;
        // convert via 60-bit scaling to stay within f64 mantissa range
        let scaled = (&v >> (FRAC_BITS - 60)).to_i128().ok_or_else(|| {
            Error::InvalidArgument("entropy out of range".into())
        })?;
        Ok(scaled as f64 / (1u128 << 60) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXAMPLE_STATS: BlockStats = BlockStats {
        n_t0: 1000.0,
        n_t1: 5000.0,
        e_t1: 0.05,
        n_t: 6000.0,
        e_t: 0.02,
    };

    const EXAMPLE_EPS: EpsilonBudget = EpsilonBudget {
        eps_cor: 1e-15,
        eps_prime: 1e-10,
        eps_hat: 1e-10,
        eps_pa: 1e-10,
    };

    #[test]
    fn entropy_known_values() {
        assert_eq!(binary_entropy(0.0f64), 0.0);
        assert_eq!(binary_entropy(1.0f64), 0.0);
        assert_eq!(binary_entropy(0.5f64), 1.0);
        assert!((binary_entropy(0.11f64) - 0.49991595825).abs() < 1e-9);
        assert!((binary_entropy(0.05f64) - 0.28639695711).abs() < 1e-9);
        assert!((binary_entropy(0.02f64) - 0.14144054254).abs() < 1e-9);
        assert!(binary_entropy(-0.1f64).is_nan());
        assert!(binary_entropy(1.5f64).is_nan());
        // f32 path agrees to single precision
        assert!((binary_entropy(0.11f32) - 0.499916f32).abs() < 1e-5);
    }

    #[test]
    fn entropy_matches_fixed_point_reference() {
        for p in [0.02, 0.05, 0.11, 0.25, 0.5, 0.9] {
            let fast = binary_entropy(p);
            let slow = reference::binary_entropy_reference(p).unwrap();
            assert!((fast - slow).abs() < 1e-12, "p = {p}: {fast} vs {slow}");
        }
    }

    #[test]
    fn ec_leakage_hand_case() {
        // 1.16 · 6000 · h(0.02) = 6960 · 0.14144054…
        assert!((ec_leakage(6000.0, 0.02) - 984.42617606).abs() < 1e-6);
    }

    #[test]
    fn key_length_worked_example() {
        let l = key_length(&EXAMPLE_STATS, &EXAMPLE_EPS).unwrap();
        assert_eq!(l, 3331);
        let r = reference::key_length_reference(&EXAMPLE_STATS, &EXAMPLE_EPS).unwrap();
        assert!((l as i64 - r).abs() <= 1, "f64 {l} vs reference {r}");
    }

    #[test]
    fn key_length_clamps_and_rejects() {
        // tiny block: the overhead terms dominate
        let stats = BlockStats {
            n_t0: 10.0,
            n_t1: 10.0,
            e_t1: 0.05,
            n_t: 20.0,
            e_t: 0.05,
        };
        assert_eq!(key_length(&stats, &EXAMPLE_EPS).unwrap(), 0);
        let empty = BlockStats {
            n_t0: 0.0,
            n_t1: 0.0,
            n_t: 0.0,
            ..EXAMPLE_STATS
        };
        assert_eq!(key_length(&empty, &EXAMPLE_EPS).unwrap(), 0);
        let bad = BlockStats { e_t1: 1.5, ..EXAMPLE_STATS };
        assert!(key_length(&bad, &EXAMPLE_EPS).is_err());
        let bad_eps = EpsilonBudget { eps_cor: 0.0, ..EXAMPLE_EPS };
        assert!(key_length(&EXAMPLE_STATS, &bad_eps).is_err());
    }

    #[test]
    fn icbrt_hand_cases() {
        assert_eq!(icbrt_ceil(0), 0);
        assert_eq!(icbrt_ceil(1), 1);
        assert_eq!(icbrt_ceil(2), 2);
        assert_eq!(icbrt_ceil(8), 2);
        assert_eq!(icbrt_ceil(9), 3);
        assert_eq!(icbrt_ceil(27), 3);
        assert_eq!(icbrt_ceil(28), 4);
        assert_eq!(icbrt_ceil(7_700_000_000), 1975);
        assert_eq!(icbrt_ceil(1975u64.pow(3)), 1975);
        assert_eq!(icbrt_ceil(1975u64.pow(3) + 1), 1976);
    }

    #[test]
    fn comm_cost_hand_cases() {
        // n = 8, l = 1: m = 2 → 6 + 3·log2(2) + 13 = 22 per link; masking 28
        let c = comm_cost(ProtocolKind::B2, 8, 1).unwrap();
        assert_eq!(c.m, Some(2));
        assert_eq!(c.per_link_bits, 22.0);
        assert_eq!(c.inter_dc_bits, 28);
        // fingerprint scenario: m = 1975, answer planes dominate
        let c = comm_cost(ProtocolKind::B2, 7_700_000_000, 4_000).unwrap();
        assert_eq!(c.m, Some(1975));
        assert!((c.per_link_bits - 23_733_957.84).abs() < 0.01, "{}", c.per_link_bits);
        assert_eq!(c.inter_dc_bits, 4_000 * (9 * 1975 + 10));
        // linear protocol: exactly n + l per link, l between servers
        let c = comm_cost(ProtocolKind::Xor, 1_000_000, 4_000).unwrap();
        assert_eq!(c.per_link_bits, 1_004_000.0);
        assert_eq!(c.inter_dc_bits, 4_000);
        assert_eq!(c.m, None);
        assert!(comm_cost(ProtocolKind::B2, 0, 1).is_err());
        assert!(comm_cost(ProtocolKind::Xor, 1, 0).is_err());
    }

    #[test]
    fn cube_cost_doubles_under_8x_growth() {
        // scaling n by 8 doubles the cube side m; at l = 10^6 the answer
        // term dominates, so the per-link cost just about doubles
        let l = 1_000_000u64;
        for (n, expect) in [(1_000_000u64, 1.977199), (1_000_000_000, 1.997672)] {
            let base = comm_cost(ProtocolKind::B2, n, l).unwrap().per_link_bits;
            let grown = comm_cost(ProtocolKind::B2, 8 * n, l).unwrap().per_link_bits;
            let ratio = grown / base;
            assert!((ratio - expect).abs() < 1e-5, "n = {n}: ratio {ratio}");
            assert!((1.9..=2.1).contains(&ratio), "n = {n}: ratio {ratio}");
        }
    }

    #[test]
    fn scenario_costs() {
        // frozen per-link costs for the catalogue (cube protocol)
        let expect: &[(&str, u64, f64)] = &[
            ("music-catalog", 392, 94_640_001_201.84),
            ("ehr", 179, 21_760_000_559.45),
            ("fingerprint", 1975, 23_733_957.84),
            ("genome", 27, 869_440_095.26),
        ];
        for (name, m, per_link) in expect {
            let s = scenario_by_name(name).unwrap();
            let c = comm_cost(ProtocolKind::B2, s.n, s.l).unwrap();
            assert_eq!(c.m, Some(*m), "{name}");
            assert!(
                (c.per_link_bits - per_link).abs() < 0.5,
                "{name}: {} vs {}",
                c.per_link_bits,
                per_link
            );
        }
        assert!(scenario_by_name("nope").is_none());
    }

    #[test]
    fn max_entry_size_inverts_cost() {
        // n = 8 → m = 2, so the per-link cost is 9 + 13·l exactly
        let n = 8u64;
        let c17 = comm_cost(ProtocolKind::B2, n, 17).unwrap();
        assert_eq!(c17.per_link_bits, 230.0);
        let found = max_entry_size(ProtocolKind::B2, n, 230, u64::MAX)
            .unwrap()
            .unwrap();
        assert_eq!(found, 17);
        // one bit under: loses a whole entry bit
        let found = max_entry_size(ProtocolKind::B2, n, 229, u64::MAX)
            .unwrap()
            .unwrap();
        assert_eq!(found, 16);
        // inter-server budget can be the binding constraint: 17 · 28 = 476
        assert_eq!(c17.inter_dc_bits, 476);
        let found = max_entry_size(ProtocolKind::B2, n, u64::MAX, 476)
            .unwrap()
            .unwrap();
        assert_eq!(found, 17);
        // infeasible: budget below the l = 1 cost of 22
        assert_eq!(max_entry_size(ProtocolKind::B2, n, 21, u64::MAX).unwrap(), None);
        // linear protocol: cost n + l
        let found = max_entry_size(ProtocolKind::Xor, 100, 200, u64::MAX)
            .unwrap()
            .unwrap();
        assert_eq!(found, 100);
    }

    #[test]
    fn feasibility_curve_shape() {
        let sizes: Vec<u64> = vec![8, 64, 512, 4096];
        let pts = feasibility_curve(ProtocolKind::B2, &sizes, 1_000_000, u64::MAX).unwrap();
        assert_eq!(pts.len(), 4);
        // larger databases support smaller entries under a fixed budget
        for w in pts.windows(2) {
            assert!(w[0].l_max.unwrap() >= w[1].l_max.unwrap());
        }
        for p in &pts {
            assert!(p.per_link_cost <= 1_000_000.0);
            let c = comm_cost(ProtocolKind::B2, p.n, p.l_max.unwrap()).unwrap();
            assert_eq!(c.per_link_bits, p.per_link_cost);
            assert_eq!(c.inter_dc_bits, p.inter_dc_cost);
        }
        // infeasible points are reported, not dropped
        let pts = feasibility_curve(ProtocolKind::B2, &[1u64 << 40], 10, 10).unwrap();
        assert_eq!(pts[0].l_max, None);
        assert_eq!(pts[0].per_link_cost, 0.0);
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_symmetry(p in 0.0f64..=1.0) {
            let h = binary_entropy(p);
            prop_assert!((0.0..=1.0).contains(&h));
            let h_sym = binary_entropy(1.0 - p);
            prop_assert!((h - h_sym).abs() < 1e-12);
        }

        #[test]
        fn icbrt_is_exact_inverse(m in 1u64..50_000) {
            let cube = m * m * m;
            prop_assert_eq!(icbrt_ceil(cube), m);
            prop_assert_eq!(icbrt_ceil(cube - 1), m);
            if m < 50_000 {
                prop_assert_eq!(icbrt_ceil(cube + 1), m + 1);
            }
        }

        #[test]
        fn key_length_monotone_in_block_size(
            n in 500.0f64..50_000.0,
            extra in 1.0f64..5_000.0,
        ) {
            let base = BlockStats { n_t0: n, n_t1: n, e_t1: 0.03, n_t: 2.0 * n, e_t: 0.03 };
            let more = BlockStats { n_t0: n + extra, ..base };
            let l0 = key_length(&base, &EXAMPLE_EPS).unwrap();
            let l1 = key_length(&more, &EXAMPLE_EPS).unwrap();
            prop_assert!(l1 >= l0);
        }

        #[test]
        fn key_length_tracks_reference(
            n_t0 in 200.0f64..20_000.0,
            n_t1 in 200.0f64..20_000.0,
            e in 0.001f64..0.11,
        ) {
            let stats = BlockStats { n_t0, n_t1, e_t1: e, n_t: n_t0 + n_t1, e_t: e };
            let fast = key_length(&stats, &EXAMPLE_EPS).unwrap() as i64;
            let slow = reference::key_length_reference(&stats, &EXAMPLE_EPS).unwrap();
            prop_assert!((fast - slow).abs() <= 1, "f64 {} vs reference {}", fast, slow);
        }

        #[test]
        fn max_entry_size_is_tight(n in 1u64..5_000, budget in 30u64..2_000_000) {
            for kind in [ProtocolKind::B2, ProtocolKind::Xor] {
                match max_entry_size(kind, n, budget, u64::MAX).unwrap() {
                    Some(l) => {
                        prop_assert!(
                            comm_cost(kind, n, l).unwrap().per_link_bits <= budget as f64
                        );
                        let over = comm_cost(kind, n, l + 1).unwrap();
                        prop_assert!(over.per_link_bits > budget as f64);
                    }
                    None => {
                        prop_assert!(
                            comm_cost(kind, n, 1).unwrap().per_link_bits > budget as f64
                        );
                    }
                }
            }
        }
    }
}
