//! Closed-form error probabilities of the next retransmission round.
//!
//! Every case reduces to three disjoint events over the retransmission gains
//! `x = |h1|^2 ~ Exp(G1)` and `y = |h2|^2 ~ Exp(G2)`, with user 1 sending at
//! power `alpha`:
//!
//! * `E1`: neither stream decodes first, `alpha x / (1 + y) < a` and `y / (1 + alpha x) < b`
//! * `E2`: user 2 decodes first, then user 1 fails, `y / (1 + alpha x) >= b` and `alpha x < a2`
//! * `E3`: user 1 decodes first, then user 2 fails, `alpha x / (1 + y) >= a` and `y < b2`
//!
//! `a`, `b` are the residual thresholds when the other stream is still
//! interfering, `a2`, `b2` the ones after it has been cancelled (`a2 <= a`,
//! `b2 <= b`). User 1's pending content fails on `E1 + E2 + E3` in the split
//! case (`s12` needs `s2` first) and on `E1 + E2` in the special cases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::ChannelDraw;
use crate::rsma::{sinr_components, SinrTriple};

/// Chase combining or incremental redundancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HarqKind {
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "IR")]
    Ir,
}

impl HarqKind {
    pub const ALL: [HarqKind; 2] = [HarqKind::Cc, HarqKind::Ir];
}

impl fmt::Display for HarqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HarqKind::Cc => "CC",
            HarqKind::Ir => "IR",
        })
    }
}

impl FromStr for HarqKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CC" => Ok(HarqKind::Cc),
            "IR" => Ok(HarqKind::Ir),
            _ => Err(format!("unknown HARQ kind `{s}` (expected CC or IR)")),
        }
    }
}

/// Error probabilities of both users' pending content after one more round.
///
/// In the special cases `p11` holds user 1's whole-packet error `p1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorPair {
    pub p11: f64,
    pub p2: f64,
}

impl ErrorPair {
    pub const ZERO: ErrorPair = ErrorPair { p11: 0.0, p2: 0.0 };

    pub fn sum(&self) -> f64 {
        self.p11 + self.p2
    }
}

/// `1 - exp(-max(0, gamma) / mean)`.
pub fn exp_tail(gamma: f64, mean: f64) -> Result<f64> {
    if !(mean > 0.0) {
        return Err(Error::NonPositiveMean(mean));
    }
    Ok(tail(gamma, mean))
}

fn tail(gamma: f64, mean: f64) -> f64 {
    if gamma <= 0.0 {
        0.0
    } else {
        -(-gamma / mean).exp_m1()
    }
}

pub fn residual_s11_cc(sinr: &SinrTriple, alpha: f64, r1: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::ZeroAlpha);
    }
    Ok((r1.exp2() / (1.0 + sinr.s12) - (1.0 + sinr.s11)) / alpha)
}

pub fn residual_s2_cc(sinr: &SinrTriple, r2: f64) -> f64 {
    r2.exp2() - 1.0 - sinr.s2
}

pub fn residual_s11_ir(sinr: &SinrTriple, alpha: f64, r1: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::ZeroAlpha);
    }
    Ok((r1.exp2() / ((1.0 + sinr.s11) * (1.0 + sinr.s12)) - 1.0) / alpha)
}

pub fn residual_s2_ir(sinr: &SinrTriple, r2: f64) -> f64 {
    r2.exp2() / (1.0 + sinr.s2) - 1.0
}

/// Thresholds of the both-streams retransmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSet {
    /// User 1 with `s2` still interfering.
    pub g11_1: f64,
    /// User 2 with `s11` still interfering.
    pub g2_1: f64,
    /// User 1 after `s2` is cancelled.
    pub g11_2: f64,
    /// User 2 after `s11` is cancelled.
    pub g2_2: f64,
    /// Where both "decode first" events start to overlap; only when `g11_1 * g2_1 < 1`.
    pub c: Option<f64>,
    pub harq_kind: HarqKind,
}

fn split_constant(a: f64, b: f64, alpha: f64) -> Option<f64> {
    (a * b < 1.0).then(|| (1.0 + b) * a / (alpha * (1.0 - a * b)))
}

pub fn joint_thresholds(draw: &ChannelDraw, alpha: f64, r1: f64, r2: f64, kind: HarqKind) -> ThresholdSet {
    let ChannelDraw { g1, g2 } = *draw;
    let s = sinr_components(draw, alpha);
    let t1 = r1.exp2() / (1.0 + s.s12);
    let t2 = r2.exp2();
    // s11's round-0 SINR once s2 is cancelled, and s2's with s11 uncancelled.
    let s11_clean = alpha * g1 / (1.0 + (1.0 - alpha) * g1);
    let s2_dirty = g2 / (1.0 + g1);
    let (g11_1, g2_1, g11_2, g2_2) = match kind {
        HarqKind::Cc => (
            t1 - 1.0 - s.s11,
            t2 - 1.0 - s2_dirty,
            t1 - 1.0 - s11_clean,
            t2 - 1.0 - s.s2,
        ),
        HarqKind::Ir => (
            t1 / (1.0 + s.s11) - 1.0,
            t2 / (1.0 + s2_dirty) - 1.0,
            t1 / (1.0 + s11_clean) - 1.0,
            t2 / (1.0 + s.s2) - 1.0,
        ),
    };
    ThresholdSet {
        g11_1,
        g2_1,
        g11_2,
        g2_2,
        c: split_constant(g11_1, g2_1, alpha),
        harq_kind: kind,
    }
}

/// Probabilities of `E1`, `E2`, `E3` in closed form.
pub fn joint_events(a: f64, b: f64, a2: f64, b2: f64, alpha: f64, mean1: f64, mean2: f64) -> [f64; 3] {
    let (gm1, gm2) = (mean1, mean2);
    if a <= 0.0 {
        // user 1 always decodes first
        return [0.0, 0.0, tail(b2, gm2)];
    }
    if b <= 0.0 {
        return [0.0, tail(a2 / alpha, gm1), 0.0];
    }
    let ag1 = alpha * gm1;
    // P(user 1 decodes first) = k1 e^{-u1}, P(user 2 decodes first) = k2 e^{-u2}
    let k1 = ag1 / (ag1 + a * gm2);
    let u1 = a / ag1;
    let k2 = gm2 / (gm2 + b * ag1);
    let u2 = b / gm2;
    let ab = a * b;
    // d (ab - 1) = 1 - k1 - k2
    let d = ag1 * gm2 / ((ag1 + a * gm2) * (gm2 + b * ag1));
    let mut e1 = -k1 * (-u1).exp_m1() - k2 * (-u2).exp_m1();
    if ab >= 1.0 {
        e1 += d * (ab - 1.0);
    } else {
        // both-first overlap starts at alpha x = a (1 + b) / (1 - ab)
        let ax = a * (1.0 + b) / (1.0 - ab);
        let k2c = b * ax / gm2 + ax / ag1;
        e1 += d * (1.0 - ab) * (-u2 - k2c).exp_m1();
    }
    let e2 = if a2 <= 0.0 {
        0.0
    } else {
        k2 * (-u2).exp() * -(-(a2 * b / gm2 + a2 / ag1)).exp_m1()
    };
    let e3 = if b2 <= 0.0 {
        0.0
    } else {
        k1 * (-u1).exp() * -(-(b2 / gm2 + a * b2 / ag1)).exp_m1()
    };
    [e1, e2, e3]
}

fn checked(value: f64, context: &'static str) -> Result<f64> {
    const TOL: f64 = 1e-12;
    if !(-TOL..=1.0 + TOL).contains(&value) {
        return Err(Error::OutOfRange { value, context });
    }
    Ok(value.clamp(0.0, 1.0))
}

pub fn p_joint(ts: &ThresholdSet, mean1: f64, mean2: f64, alpha: f64) -> Result<ErrorPair> {
    exp_tail(0.0, mean1)?;
    exp_tail(0.0, mean2)?;
    let [e1, e2, e3] = joint_events(ts.g11_1, ts.g2_1, ts.g11_2, ts.g2_2, alpha, mean1, mean2);
    Ok(ErrorPair {
        p11: checked(e1 + e2 + e3, "joint p11")?,
        p2: checked(e1 + e3, "joint p2")?,
    })
}

/// Endpoint splits where one user's packet went through in round 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpecialCase {
    /// `alpha = 0`: user 2 decoded, user 1 retransmits next to a new user-2 packet.
    Alpha0,
    /// `alpha = 1`: user 1 decoded, user 2 retransmits next to a new user-1 packet.
    Alpha1,
}

/// `(gamma1, gamma2)` for the special cases; the buffered stream keeps its
/// round-0 SINR, the new packet starts from nothing.
pub fn special_thresholds(draw: &ChannelDraw, r1: f64, r2: f64, which: SpecialCase, kind: HarqKind) -> (f64, f64) {
    let ChannelDraw { g1, g2 } = *draw;
    let (t1, t2) = (r1.exp2(), r2.exp2());
    match (which, kind) {
        (SpecialCase::Alpha1, HarqKind::Cc) => (t1 - 1.0, t2 - 1.0 - g2),
        (SpecialCase::Alpha1, HarqKind::Ir) => (t1 - 1.0, t2 / (1.0 + g2) - 1.0),
        (SpecialCase::Alpha0, HarqKind::Cc) => (t1 - 1.0 - g1, t2 - 1.0),
        (SpecialCase::Alpha0, HarqKind::Ir) => (t1 / (1.0 + g1) - 1.0, t2 - 1.0),
    }
}

/// Error pair of the special cases given their two thresholds.
pub fn p_special_thresholds(gamma1: f64, gamma2: f64, mean1: f64, mean2: f64) -> Result<ErrorPair> {
    exp_tail(0.0, mean1)?;
    exp_tail(0.0, mean2)?;
    let [e1, e2, e3] = joint_events(gamma1, gamma2, gamma1, gamma2, 1.0, mean1, mean2);
    Ok(ErrorPair {
        p11: checked(e1 + e2, "special p1")?,
        p2: checked(e1 + e3, "special p2")?,
    })
}

pub fn p_special(
    draw: &ChannelDraw,
    r1: f64,
    r2: f64,
    mean1: f64,
    mean2: f64,
    which: SpecialCase,
    kind: HarqKind,
) -> Result<ErrorPair> {
    let (gamma1, gamma2) = special_thresholds(draw, r1, r2, which, kind);
    p_special_thresholds(gamma1, gamma2, mean1, mean2)
}
