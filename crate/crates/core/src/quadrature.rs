//! Numerical oracle for the next-round error probabilities.
//!
//! For a fixed retransmission gain `x` of user 1, the probability of each
//! event over `y ~ Exp(G2)` is elementary, so only the outer integral over
//! `x ~ Exp(G1)` is done numerically. The outer variable is moved to
//! `u = F(x)` in `[0, 1]`, which turns the exponential density into a
//! uniform weight and removes the infinite range. Kinks of the inner
//! probability become breakpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::analytic::{ErrorPair, ThresholdSet};
use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-16,
            rel: 1e-11,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn gk15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod (7, 15) over `[lo, hi]`, starting from
/// the given interior breakpoints.
pub fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64], tol: &Tolerance) -> Result<Integral> {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    for w in cuts.windows(2) {
        let (value, error) = gk15(&f, w[0], w[1]);
        heap.push(Piece {
            lo: w[0],
            hi: w[1],
            value,
            error,
        });
    }
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Integral { value, error });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::NonConvergence { estimate: value, error });
        }
        let worst = heap.pop().expect("at least one piece");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // cannot split further; accept what this piece gives
            return Err(Error::NonConvergence { estimate: value, error });
        }
        for (a, b) in [(worst.lo, mid), (mid, worst.hi)] {
            let (value, error) = gk15(&f, a, b);
            heap.push(Piece { lo: a, hi: b, value, error });
        }
    }
}

/// `E[g(X)]` for `X ~ Exp(mean)`, with kinks of `g` at `breaks_x`.
pub fn expect_exponential(g: impl Fn(f64) -> f64, mean: f64, breaks_x: &[f64], tol: &Tolerance) -> Result<Integral> {
    let to_u = |x: f64| -(-x / mean).exp_m1();
    let breaks_u: Vec<f64> = breaks_x.iter().filter(|x| x.is_finite() && **x > 0.0).map(|x| to_u(*x)).collect();
    integrate(|u| g(-mean * (-u).ln_1p()), 0.0, 1.0, &breaks_u, tol)
}

/// Probabilities of the three joint events by integrating over user 1's gain.
#[allow(clippy::too_many_arguments)]
pub fn joint_events_numeric(
    a: f64,
    b: f64,
    a2: f64,
    b2: f64,
    alpha: f64,
    mean1: f64,
    mean2: f64,
    tol: &Tolerance,
) -> Result<[f64; 3]> {
    // P(lo < y < hi) for y ~ Exp(mean2)
    let band = |lo: f64, hi: f64| {
        let lo = lo.max(0.0);
        if hi <= lo {
            0.0
        } else {
            (-lo / mean2).exp() * -(-(hi - lo) / mean2).exp_m1()
        }
    };
    // user 1 decodes first iff y <= s / a - 1 (always when a <= 0)
    let first1_cap = |s: f64| if a <= 0.0 { f64::INFINITY } else { s / a - 1.0 };
    // user 2 decodes first iff y >= b (1 + s)
    let first2_floor = |s: f64| b * (1.0 + s);

    let e1 = move |x: f64| {
        let s = alpha * x;
        if a <= 0.0 || b <= 0.0 {
            return 0.0;
        }
        band(first1_cap(s), first2_floor(s))
    };
    let e2 = move |x: f64| {
        let s = alpha * x;
        if s < a2 {
            band(first2_floor(s), f64::INFINITY)
        } else {
            0.0
        }
    };
    let e3 = move |x: f64| {
        let s = alpha * x;
        if b2 <= 0.0 {
            return 0.0;
        }
        band(0.0, first1_cap(s).min(b2))
    };

    let mut breaks = vec![a / alpha, a2 / alpha, a * (1.0 + b2) / alpha];
    if a * b < 1.0 {
        breaks.push((1.0 + b) * a / (alpha * (1.0 - a * b)));
    }
    let mut out = [0.0; 3];
    out[0] = expect_exponential(e1, mean1, &breaks, tol)?.value;
    out[1] = expect_exponential(e2, mean1, &breaks, tol)?.value;
    out[2] = expect_exponential(e3, mean1, &breaks, tol)?.value;
    Ok(out)
}

/// What the oracle is asked to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleCase {
    /// Both `s11` and `s2` retransmitted at split `alpha`.
    Joint { ts: ThresholdSet, alpha: f64 },
    /// One user's buffered packet retransmitted next to the other's new packet.
    Special { gamma1: f64, gamma2: f64 },
}

pub fn quadrature_oracle(case: &OracleCase, mean1: f64, mean2: f64, tol: &Tolerance) -> Result<ErrorPair> {
    if !(mean1 > 0.0) {
        return Err(Error::NonPositiveMean(mean1));
    }
    if !(mean2 > 0.0) {
        return Err(Error::NonPositiveMean(mean2));
    }
    match *case {
        OracleCase::Joint { ts, alpha } => {
            let [e1, e2, e3] = joint_events_numeric(ts.g11_1, ts.g2_1, ts.g11_2, ts.g2_2, alpha, mean1, mean2, tol)?;
            Ok(ErrorPair {
                p11: e1 + e2 + e3,
                p2: e1 + e3,
            })
        }
        OracleCase::Special { gamma1, gamma2 } => {
            let [e1, e2, e3] = joint_events_numeric(gamma1, gamma2, gamma1, gamma2, 1.0, mean1, mean2, tol)?;
            Ok(ErrorPair {
                p11: e1 + e2,
                p2: e1 + e3,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{joint_events, joint_thresholds, p_joint, p_special_thresholds, HarqKind};
    use crate::fading::ChannelDraw;

    #[test]
    fn gk15_is_exact_on_polynomials() {
        // Kronrod 15 integrates degree 22 exactly
        for deg in 0..=22 {
            let got = integrate(|x| x.powi(deg), 0.0, 1.0, &[], &Tolerance::default()).unwrap();
            assert!((got.value - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn adaptive_handles_kinks() {
        let got = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[], &Tolerance::default()).unwrap();
        assert!((got.value - (0.045 + 0.245)).abs() < 1e-12);
        let got = integrate(|x: f64| x.sqrt(), 0.0, 1.0, &[], &Tolerance::default()).unwrap();
        assert!((got.value - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn non_convergence_is_reported() {
        let tol = Tolerance {
            abs: 0.0,
            rel: 0.0,
            max_intervals: 8,
        };
        match integrate(|x: f64| x.sqrt(), 0.0, 1.0, &[], &tol) {
            Err(Error::NonConvergence { estimate, error }) => {
                assert!((estimate - 2.0 / 3.0).abs() < 1e-3);
                assert!(error > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn exponential_expectations() {
        let tol = Tolerance::default();
        let m = expect_exponential(|x| x, 7.0, &[], &tol).unwrap();
        assert!((m.value - 7.0).abs() < 1e-9);
        let p = expect_exponential(|x| if x < 3.0 { 1.0 } else { 0.0 }, 7.0, &[3.0], &tol).unwrap();
        assert!((p.value - (1.0 - (-3.0f64 / 7.0).exp())).abs() < 1e-14);
    }

    #[test]
    fn all_nonpositive_thresholds_give_zero() {
        let tol = Tolerance::default();
        let got = joint_events_numeric(-1.0, 0.0, -2.0, -0.5, 0.5, 100.0, 31.62, &tol).unwrap();
        assert_eq!(got, [0.0; 3]);
    }

    #[test]
    fn matches_closed_form_on_examples() {
        let tol = Tolerance::default();
        let ts = joint_thresholds(&ChannelDraw::new(4.0, 1.0), 0.5, 1.0, 1.0, HarqKind::Cc);
        let q = quadrature_oracle(&OracleCase::Joint { ts, alpha: 0.5 }, 100.0, 31.62, &tol).unwrap();
        let c = p_joint(&ts, 100.0, 31.62, 0.5).unwrap();
        assert!((q.p11 - c.p11).abs() <= 1e-9 * c.p11, "{q:?} vs {c:?}");
        assert!((q.p2 - c.p2).abs() <= 1e-9 * c.p2, "{q:?} vs {c:?}");

        let q = quadrature_oracle(&OracleCase::Special { gamma1: 1.0, gamma2: 0.5 }, 100.0, 31.62, &tol).unwrap();
        let c = p_special_thresholds(1.0, 0.5, 100.0, 31.62).unwrap();
        assert!((q.p11 - c.p11).abs() <= 1e-9 * c.p11, "{q:?} vs {c:?}");
        assert!((q.p2 - c.p2).abs() <= 1e-9 * c.p2, "{q:?} vs {c:?}");
    }

    #[test]
    fn matches_closed_form_across_branches() {
        let tol = Tolerance::default();
        for &(a, b) in &[(0.2, 0.5), (2.0, 0.4), (3.0, 3.0), (0.9, 1.2), (5.0, 0.01), (0.01, 40.0)] {
            for &alpha in &[0.05, 0.5, 0.95] {
                let (a2, b2) = (0.6 * a, 0.3 * b);
                let q = joint_events_numeric(a, b, a2, b2, alpha, 150.0, 20.0, &tol).unwrap();
                let c = joint_events(a, b, a2, b2, alpha, 150.0, 20.0);
                for i in 0..3 {
                    let rel = (q[i] - c[i]).abs() / c[i].abs().max(1e-300);
                    assert!(rel < 1e-8, "a={a} b={b} alpha={alpha} event {i}: {} vs {}", q[i], c[i]);
                }
            }
        }
    }
}
