//! Power-split selection.
//!
//! For one round-0 draw, every retransmission region of `[0, 1]` is searched
//! for the split with the lowest predicted next-round error sum
//! `p11 + p2`. Regions where the sum is monotone use their endpoint; the
//! rest get a coarse grid followed by golden-section refinement around
//! every grid-local minimum.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    exp_tail, joint_thresholds, p_joint, p_special, residual_s11_cc, residual_s11_ir, residual_s2_cc,
    residual_s2_ir, ErrorPair, HarqKind, SpecialCase,
};
use crate::error::Result;
use crate::fading::ChannelDraw;
use crate::rsma::{alpha_bounds, classify, sinr_components, AlphaInterval, CaseId, RetransmissionCase};

/// A stream that may be scheduled for retransmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stream {
    S11,
    S2,
    /// User 1's unsplit packet (special case at `alpha = 0`).
    S1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetransmissionPlan {
    pub chosen_alpha: f64,
    pub retransmit_set: Vec<Stream>,
    pub predicted_errors: ErrorPair,
    pub case_id: CaseId,
}

impl RetransmissionPlan {
    pub fn objective(&self) -> f64 {
        self.predicted_errors.sum()
    }
}

pub fn retransmit_set(case: CaseId) -> Vec<Stream> {
    match case {
        CaseId::NoRetx => vec![],
        CaseId::S2Only | CaseId::SpecialAlpha1 => vec![Stream::S2],
        CaseId::S11Only => vec![Stream::S11],
        CaseId::Both => vec![Stream::S11, Stream::S2],
        CaseId::SpecialAlpha0 => vec![Stream::S1],
    }
}

/// Predicted next-round errors if `alpha` is used and `case` applies there.
#[allow(clippy::too_many_arguments)]
pub fn predict_errors(
    draw: &ChannelDraw,
    alpha: f64,
    r1: f64,
    r2: f64,
    mean1: f64,
    mean2: f64,
    kind: HarqKind,
    case: CaseId,
) -> Result<ErrorPair> {
    exp_tail(0.0, mean1)?;
    exp_tail(0.0, mean2)?;
    let sinr = sinr_components(draw, alpha);
    match case {
        CaseId::NoRetx => Ok(ErrorPair::ZERO),
        CaseId::S11Only => {
            // s2 only decodes after s11, so it shares s11's fate
            let p = if alpha <= 0.0 {
                1.0
            } else {
                let gamma = match kind {
                    HarqKind::Cc => residual_s11_cc(&sinr, alpha, r1)?,
                    HarqKind::Ir => residual_s11_ir(&sinr, alpha, r1)?,
                };
                exp_tail(gamma, mean1)?
            };
            Ok(ErrorPair { p11: p, p2: p })
        }
        CaseId::S2Only => {
            // s12 waits for s2, so user 1's message shares s2's fate
            let gamma = match kind {
                HarqKind::Cc => residual_s2_cc(&sinr, r2),
                HarqKind::Ir => residual_s2_ir(&sinr, r2),
            };
            let p = exp_tail(gamma, mean2)?;
            Ok(ErrorPair { p11: p, p2: p })
        }
        CaseId::Both => p_joint(&joint_thresholds(draw, alpha, r1, r2, kind), mean1, mean2, alpha),
        CaseId::SpecialAlpha1 => p_special(draw, r1, r2, mean1, mean2, SpecialCase::Alpha1, kind),
        CaseId::SpecialAlpha0 => p_special(draw, r1, r2, mean1, mean2, SpecialCase::Alpha0, kind),
    }
}

const COARSE_POINTS: usize = 64;
const GOLDEN_ITERS: usize = 80;
const MAX_REFINED: usize = 3;

struct Best {
    alpha: f64,
    errors: ErrorPair,
    case: CaseId,
}

impl Best {
    fn offer(slot: &mut Option<Best>, alpha: f64, errors: ErrorPair, case: CaseId) {
        let better = match slot {
            None => true,
            Some(b) => {
                let (f, g) = (errors.sum(), b.errors.sum());
                f < g || (f == g && alpha < b.alpha)
            }
        };
        if better {
            *slot = Some(Best { alpha, errors, case });
        }
    }
}

/// Golden-section minimum of `f` on `[lo, hi]`; returns the best point seen.
fn golden(f: &impl Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..GOLDEN_ITERS {
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1e-300) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
            if f1 < best.1 || (f1 == best.1 && x1 < best.0) {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
            if f2 < best.1 || (f2 == best.1 && x2 < best.0) {
                best = (x2, f2);
            }
        }
    }
    Ok(best)
}

/// Grid plus golden refinement of `f` over the members of `iv`.
fn search_interval(f: &impl Fn(f64) -> Result<f64>, iv: &AlphaInterval) -> Result<(f64, f64)> {
    let (lo, hi) = (iv.min_member(), iv.max_member());
    if lo >= hi {
        return Ok((lo, f(lo)?));
    }
    let xs: Vec<f64> = (0..COARSE_POINTS)
        .map(|i| {
            if i == COARSE_POINTS - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (COARSE_POINTS - 1) as f64
            }
        })
        .collect();
    let fs = xs.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    let mut best = (xs[0], fs[0]);
    for (&x, &v) in xs.iter().zip(&fs) {
        if v < best.1 {
            best = (x, v);
        }
    }
    let n = xs.len();
    // Refine the lowest few grid-local minima; a plateau counts once, at its left end.
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || fs[i] < fs[i - 1]) && (i == n - 1 || fs[i] <= fs[i + 1]))
        .collect();
    minima.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]).then(i.cmp(&j)));
    minima.truncate(MAX_REFINED);
    for i in minima {
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(n - 1)];
        let (x, v) = golden(f, a, b)?;
        let x = iv.clamp_member(x);
        if v < best.1 || (v == best.1 && x < best.0) {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Picks the split for a packet pair from its round-0 draw.
pub fn select_alpha(draw: &ChannelDraw, r1: f64, r2: f64, mean1: f64, mean2: f64, kind: HarqKind) -> Result<RetransmissionPlan> {
    let cases = classify(&alpha_bounds(draw, r1, r2));
    select_alpha_in(&cases, draw, r1, r2, mean1, mean2, kind)
}

/// [`select_alpha`] with the classification already at hand.
pub fn select_alpha_in(
    cases: &RetransmissionCase,
    draw: &ChannelDraw,
    r1: f64,
    r2: f64,
    mean1: f64,
    mean2: f64,
    kind: HarqKind,
) -> Result<RetransmissionPlan> {
    exp_tail(0.0, mean1)?;
    exp_tail(0.0, mean2)?;
    if let Some(s) = cases.no_retx_interval() {
        return Ok(RetransmissionPlan {
            chosen_alpha: s.midpoint(),
            retransmit_set: vec![],
            predicted_errors: ErrorPair::ZERO,
            case_id: CaseId::NoRetx,
        });
    }

    let mut best: Option<Best> = None;
    for region in &cases.admissible_alpha_regions {
        let case = region.case;
        let predict = |a: f64| predict_errors(draw, a, r1, r2, mean1, mean2, kind, case);
        let iv = &region.interval;
        let alpha = match case {
            CaseId::SpecialAlpha0 | CaseId::SpecialAlpha1 => iv.lo,
            // s2's residual shrinks as alpha grows
            CaseId::S2Only => iv.max_member(),
            CaseId::S11Only | CaseId::Both => {
                let objective = |a: f64| predict(a).map(|p| if p.sum().is_nan() { f64::INFINITY } else { p.sum() });
                search_interval(&objective, iv)?.0
            }
            CaseId::NoRetx => unreachable!("handled above"),
        };
        Best::offer(&mut best, alpha, predict(alpha)?, case);
    }
    let best = best.expect("regions cover [0, 1]");
    Ok(RetransmissionPlan {
        chosen_alpha: best.alpha,
        retransmit_set: retransmit_set(best.case),
        predicted_errors: best.errors,
        case_id: best.case,
    })
}

/// Minimum of the region-consistent objective over `alpha = i / steps`.
#[allow(clippy::too_many_arguments)]
pub fn grid_minimum(
    cases: &RetransmissionCase,
    draw: &ChannelDraw,
    r1: f64,
    r2: f64,
    mean1: f64,
    mean2: f64,
    kind: HarqKind,
    steps: usize,
) -> Result<(f64, f64)> {
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..=steps {
        let a = i as f64 / steps as f64;
        let case = cases.case_at(a).expect("regions cover [0, 1]");
        let v = predict_errors(draw, a, r1, r2, mean1, mean2, kind, case)?.sum();
        if v < best.1 {
            best = (a, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::RngStream;
    use crate::rsma::{user1_condition, user2_condition};
    use proptest::prelude::*;

    const M1: f64 = 100.0;
    const M2: f64 = 31.622_776_601_683_79;

    #[test]
    fn singleton_no_retx_set() {
        let d = ChannelDraw::new(4.0, 1.0);
        let plan = select_alpha(&d, 1.0, 1.0, M1, M2, HarqKind::Cc).unwrap();
        assert_eq!(plan.case_id, CaseId::NoRetx);
        assert!((plan.chosen_alpha - 1.0).abs() < 1e-9);
        assert!(plan.retransmit_set.is_empty());
        assert_eq!(plan.predicted_errors, ErrorPair::ZERO);
    }

    #[test]
    fn vacuous_user2_with_hopeless_user1() {
        let d = ChannelDraw::new(3.0, 1.0);
        for kind in HarqKind::ALL {
            let plan = select_alpha(&d, 9.0, 0.0, M1, M2, kind).unwrap();
            assert_eq!(plan.case_id, CaseId::S11Only);
            assert_eq!(plan.predicted_errors.p11, plan.predicted_errors.p2);
            assert!(plan.chosen_alpha > 0.0);
        }
    }

    #[test]
    fn s11_only_shares_error() {
        let d = ChannelDraw::new(3.0, 1.0);
        let p = predict_errors(&d, 0.4, 5.0, 0.5, M1, M2, HarqKind::Cc, CaseId::S11Only).unwrap();
        assert_eq!(p.p11, p.p2);
        assert!(p.p11 > 0.0);
        let p = predict_errors(&d, 0.4, 5.0, 0.5, M1, M2, HarqKind::Cc, CaseId::NoRetx).unwrap();
        assert_eq!(p, ErrorPair::ZERO);
    }

    #[test]
    fn s2_only_objective_decreases_in_alpha() {
        // strong user 1, weak user 2: s2 is the only stream left
        let d = ChannelDraw::new(100.0, 0.5);
        let cases = classify(&alpha_bounds(&d, 1.0, 3.0));
        assert_eq!(cases.case_at(0.5), Some(CaseId::S2Only));
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let a = i as f64 / 100.0;
            let v = predict_errors(&d, a, 1.0, 3.0, M1, M2, HarqKind::Cc, CaseId::S2Only).unwrap().sum();
            assert!(v < prev);
            prev = v;
        }
        let plan = select_alpha(&d, 1.0, 3.0, M1, M2, HarqKind::Cc).unwrap();
        // the closed endpoint alpha = 1 is the special case, which wins or
        // the open end just below it does
        assert!(plan.chosen_alpha > 0.999_999, "{plan:?}");
    }

    #[test]
    fn admissibility_and_grid_optimality_on_random_draws() {
        let mut rng = RngStream::new(17, 3);
        for _ in 0..300 {
            let d = ChannelDraw::new(rng.next_exp(M1), rng.next_exp(M2));
            let r1 = 0.25 + 6.0 * rng.next_open_unit();
            let r2 = 0.25 + 5.0 * rng.next_open_unit();
            for kind in HarqKind::ALL {
                let cases = classify(&alpha_bounds(&d, r1, r2));
                let plan = select_alpha_in(&cases, &d, r1, r2, M1, M2, kind).unwrap();
                let a = plan.chosen_alpha;
                assert!((0.0..=1.0).contains(&a));
                assert_eq!(cases.case_at(a), Some(plan.case_id), "{plan:?}");
                let (c1, c2) = (user1_condition(&d, a, r1), user2_condition(&d, a, r2));
                match plan.case_id {
                    CaseId::NoRetx => assert!(c1 && c2),
                    CaseId::S2Only | CaseId::SpecialAlpha1 => assert!(c1 && !c2),
                    CaseId::S11Only | CaseId::SpecialAlpha0 => assert!(!c1 && c2),
                    CaseId::Both => assert!(!c1 && !c2),
                }
                assert_eq!(plan.case_id == CaseId::NoRetx, cases.no_retx_interval().is_some());
                let (_, grid) = grid_minimum(&cases, &d, r1, r2, M1, M2, kind, 1000).unwrap();
                assert!(plan.objective() <= grid + 1e-6, "{plan:?} vs grid {grid} {d:?} r1={r1} r2={r2} {kind} {cases:?}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn deterministic(g1 in 0.0f64..300.0, g2 in 0.0f64..100.0, r1 in 0.1f64..7.0, r2 in 0.0f64..6.0) {
            let d = ChannelDraw::new(g1, g2);
            let a = select_alpha(&d, r1, r2, M1, M2, HarqKind::Ir).unwrap();
            let b = select_alpha(&d, r1, r2, M1, M2, HarqKind::Ir).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
