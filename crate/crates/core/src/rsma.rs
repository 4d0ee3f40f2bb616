//! Two-user uplink rate-splitting model.
//!
//! User 1 splits its unit power into `s11` (fraction `alpha`) and `s12`
//! (`1 - alpha`); user 2 sends a single stream `s2`. The receiver decodes in
//! the order `s11`, `s2`, `s12`.
//!
//! Feasible power splits are found by evaluating the two decoding
//! conditions directly. The algebraic bounds `alpha_h` / `alpha_l` are kept
//! for reporting only: the `alpha_h` expression silently flips meaning when
//! `2^r1 - 1 - g1 - g2` changes sign.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fading::ChannelDraw;

/// Per-round SINRs of the three streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTriple {
    pub s11: f64,
    pub s2: f64,
    pub s12: f64,
}

pub fn sinr_components(draw: &ChannelDraw, alpha: f64) -> SinrTriple {
    debug_assert!((0.0..=1.0).contains(&alpha));
    let ChannelDraw { g1, g2 } = *draw;
    let rest = (1.0 - alpha) * g1;
    SinrTriple {
        s11: alpha * g1 / (1.0 + rest + g2),
        s2: g2 / (1.0 + rest),
        s12: rest,
    }
}

/// User 1's sum-rate condition at `alpha`.
pub fn user1_condition(draw: &ChannelDraw, alpha: f64, r1: f64) -> bool {
    let s = sinr_components(draw, alpha);
    s.s11.ln_1p() / std::f64::consts::LN_2 + s.s12.ln_1p() / std::f64::consts::LN_2 >= r1
}

/// User 2's rate condition at `alpha` (after `s11` is cancelled).
pub fn user2_condition(draw: &ChannelDraw, alpha: f64, r2: f64) -> bool {
    if r2 <= 0.0 {
        return true;
    }
    let s = sinr_components(draw, alpha);
    s.s2.ln_1p() / std::f64::consts::LN_2 >= r2
}

/// True when all three streams decode in one round at this split.
pub fn all_decodable(draw: &ChannelDraw, alpha: f64, r1: f64, r2: f64) -> bool {
    user1_condition(draw, alpha, r1) && user2_condition(draw, alpha, r2)
}

/// A sub-interval of `[0, 1]` with explicit endpoint openness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl AlphaInterval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_open: false,
            hi_open: false,
        }
    }

    pub fn point(x: f64) -> Self {
        Self::closed(x, x)
    }

    pub fn unit() -> Self {
        Self::closed(0.0, 1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_open { x > self.lo } else { x >= self.lo };
        let below = if self.hi_open { x < self.hi } else { x <= self.hi };
        above && below
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Smallest member, stepping one ulp inward over an open end.
    pub fn min_member(&self) -> f64 {
        if self.lo_open {
            self.lo.next_up()
        } else {
            self.lo
        }
    }

    /// Largest member, stepping one ulp inward over an open end.
    pub fn max_member(&self) -> f64 {
        if self.hi_open {
            self.hi.next_down()
        } else {
            self.hi
        }
    }

    pub fn midpoint(&self) -> f64 {
        let m = 0.5 * (self.min_member() + self.max_member());
        self.clamp_member(m)
    }

    /// Pulls `x` into the interval.
    pub fn clamp_member(&self, x: f64) -> f64 {
        x.clamp(self.min_member(), self.max_member())
    }

    fn intersect(&self, other: &Self) -> Option<Self> {
        let (lo, lo_open) = if self.lo > other.lo {
            (self.lo, self.lo_open)
        } else if other.lo > self.lo {
            (other.lo, other.lo_open)
        } else {
            (self.lo, self.lo_open || other.lo_open)
        };
        let (hi, hi_open) = if self.hi < other.hi {
            (self.hi, self.hi_open)
        } else if other.hi < self.hi {
            (other.hi, other.hi_open)
        } else {
            (self.hi, self.hi_open || other.hi_open)
        };
        let iv = Self {
            lo,
            hi,
            lo_open,
            hi_open,
        };
        if lo < hi || (lo == hi && !lo_open && !hi_open) {
            Some(iv)
        } else {
            None
        }
    }
}

impl fmt::Display for AlphaInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            self.lo,
            self.hi,
            if self.hi_open { ')' } else { ']' }
        )
    }
}

/// Algebraic split bounds plus the directly verified feasible sets.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBounds {
    pub draw: ChannelDraw,
    pub r1: f64,
    pub r2: f64,
    /// `None` when `g1 (2^r1 - 1 - g1 - g2) = 0`.
    pub alpha_h: Option<f64>,
    /// `-inf` when `r2 = 0`.
    pub alpha_l: f64,
    /// Splits satisfying user 1's sum-rate condition; always of the form `[0, h]`.
    pub cond1_feasible_set: Option<AlphaInterval>,
    /// Splits satisfying user 2's rate condition; always of the form `[l, 1]`.
    pub cond2_feasible_set: Option<AlphaInterval>,
    pub cond2_vacuous: bool,
    pub alpha_h_undefined: bool,
}

impl AlphaBounds {
    /// Splits at which nothing needs retransmission.
    pub fn no_retx_set(&self) -> Option<AlphaInterval> {
        match (&self.cond1_feasible_set, &self.cond2_feasible_set) {
            (Some(a), Some(b)) => a.intersect(b),
            _ => None,
        }
    }
}

/// Largest `alpha` in `[lo, hi]` where `pred` holds, given `pred(lo)` and
/// `!pred(hi)` and that `pred` is monotone. Bisects down to adjacent floats.
fn last_true(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return lo;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn first_true(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

pub fn alpha_bounds(draw: &ChannelDraw, r1: f64, r2: f64) -> AlphaBounds {
    let ChannelDraw { g1, g2 } = *draw;
    let t1 = r1.exp2() - 1.0;
    let denom = g1 * (t1 - g1 - g2);
    let alpha_h = if denom == 0.0 {
        None
    } else {
        Some((t1 * (1.0 + g1 + g2) - g1 - g1 * g2 - g1 * g1) / denom)
    };
    let cond2_vacuous = r2 <= 0.0;
    let alpha_l = if cond2_vacuous {
        f64::NEG_INFINITY
    } else {
        1.0 + 1.0 / g1 - g2 / (g1 * (r2.exp2() - 1.0))
    };

    // User 1's condition is nonincreasing in alpha, user 2's nondecreasing.
    let c1 = |a: f64| user1_condition(draw, a, r1);
    let cond1_feasible_set = match (c1(0.0), c1(1.0)) {
        (false, _) => None,
        (true, true) => Some(AlphaInterval::unit()),
        (true, false) => Some(AlphaInterval::closed(0.0, last_true(0.0, 1.0, c1))),
    };
    let c2 = |a: f64| user2_condition(draw, a, r2);
    let cond2_feasible_set = match (c2(0.0), c2(1.0)) {
        (_, false) => None,
        (true, true) => Some(AlphaInterval::unit()),
        (false, true) => Some(AlphaInterval::closed(first_true(0.0, 1.0, c2), 1.0)),
    };

    AlphaBounds {
        draw: *draw,
        r1,
        r2,
        alpha_h,
        alpha_l,
        cond1_feasible_set,
        cond2_feasible_set,
        cond2_vacuous,
        alpha_h_undefined: alpha_h.is_none(),
    }
}

/// What a power split implies for the next round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    NoRetx,
    S2Only,
    S11Only,
    Both,
    /// `alpha = 1`, user 1 decoded, `s2` retransmitted alongside a new user-1 packet.
    SpecialAlpha1,
    /// `alpha = 0`, user 2 decoded, user 1 retransmitted alongside a new user-2 packet.
    SpecialAlpha0,
}

impl CaseId {
    /// Number of streams that go back on the air.
    pub fn retransmitted_streams(&self) -> usize {
        match self {
            CaseId::NoRetx => 0,
            CaseId::S2Only | CaseId::S11Only => 1,
            CaseId::SpecialAlpha1 | CaseId::SpecialAlpha0 => 1,
            CaseId::Both => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRegion {
    pub interval: AlphaInterval,
    pub case: CaseId,
}

/// Partition of `[0, 1]` into retransmission regions for one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct RetransmissionCase {
    /// Overall case: `NoRetx` when some split avoids retransmission, the
    /// region's case when a single region covers `[0, 1]`, else `Both`
    /// (every partitioned table cell contains a both-streams region).
    pub case_id: CaseId,
    /// Table item 1-6 when retransmission is unavoidable, 0 otherwise.
    pub table_item: u8,
    /// Sorted by `lo`; covers `[0, 1]` without overlap.
    pub admissible_alpha_regions: Vec<AlphaRegion>,
}

impl RetransmissionCase {
    pub fn case_at(&self, alpha: f64) -> Option<CaseId> {
        self.admissible_alpha_regions
            .iter()
            .find(|r| r.interval.contains(alpha))
            .map(|r| r.case)
    }

    pub fn no_retx_interval(&self) -> Option<AlphaInterval> {
        self.admissible_alpha_regions
            .iter()
            .find(|r| r.case == CaseId::NoRetx)
            .map(|r| r.interval)
    }
}

fn base_case(c1: bool, c2: bool) -> CaseId {
    match (c1, c2) {
        (true, true) => CaseId::NoRetx,
        (true, false) => CaseId::S2Only,
        (false, true) => CaseId::S11Only,
        (false, false) => CaseId::Both,
    }
}

fn coverage(set: &Option<AlphaInterval>) -> u8 {
    match set {
        None => 0,
        Some(iv) if iv.lo == 0.0 && iv.hi == 1.0 => 2,
        Some(_) => 1,
    }
}

pub fn classify(bounds: &AlphaBounds) -> RetransmissionCase {
    // Breakpoints: cond1 is [0, h], cond2 is [l, 1], both closed.
    let h = bounds.cond1_feasible_set.map(|iv| iv.hi);
    let l = bounds.cond2_feasible_set.map(|iv| iv.lo);
    let in1 = |a: f64| h.is_some_and(|h| a <= h);
    let in2 = |a: f64| l.is_some_and(|l| a >= l);

    let mut cuts: Vec<(f64, bool)> = Vec::new(); // (point, point belongs to left piece)
    if let Some(h) = h {
        if h < 1.0 {
            cuts.push((h, true));
        }
    }
    if let Some(l) = l {
        if l > 0.0 {
            cuts.push((l, false));
        }
    }
    cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut admissible_alpha_regions: Vec<AlphaRegion> = Vec::new();
    let mut lo = 0.0;
    let mut lo_open = false;
    let push = |iv: AlphaInterval, out: &mut Vec<AlphaRegion>| {
        let probe = if iv.is_point() { iv.lo } else { iv.midpoint() };
        let case = base_case(in1(probe), in2(probe));
        match out.last_mut() {
            Some(last) if last.case == case => {
                last.interval.hi = iv.hi;
                last.interval.hi_open = iv.hi_open;
            }
            _ => out.push(AlphaRegion { interval: iv, case }),
        }
    };
    for (p, left_closed) in cuts {
        if left_closed {
            // [lo, p] then (p, ...
            push(
                AlphaInterval {
                    lo,
                    hi: p,
                    lo_open,
                    hi_open: false,
                },
                &mut admissible_alpha_regions,
            );
            lo = p;
            lo_open = true;
        } else {
            // [lo, p) then [p, ...
            if p > lo || (p == lo && !lo_open) {
                if p > lo {
                    push(
                        AlphaInterval {
                            lo,
                            hi: p,
                            lo_open,
                            hi_open: true,
                        },
                        &mut admissible_alpha_regions,
                    );
                }
                lo = p;
                lo_open = false;
            }
        }
    }
    if lo < 1.0 || !lo_open {
        push(
            AlphaInterval {
                lo,
                hi: 1.0,
                lo_open,
                hi_open: false,
            },
            &mut admissible_alpha_regions,
        );
    }

    let has_no_retx = admissible_alpha_regions.iter().any(|r| r.case == CaseId::NoRetx);
    if !has_no_retx {
        // with no user-2 demand there is no decoded user-2 packet to replace
        carve_special(&mut admissible_alpha_regions, !bounds.cond2_vacuous);
    }

    let table_item = if has_no_retx {
        0
    } else {
        match (coverage(&bounds.cond1_feasible_set), coverage(&bounds.cond2_feasible_set)) {
            (2, 0) => 1,
            (1, 0) => 2,
            (0, 0) => 3,
            (1, 1) => 4,
            (0, 1) => 5,
            (0, 2) => 6,
            _ => unreachable!("retransmission needed but a condition covers [0, 1] with the other nonempty"),
        }
    };
    let case_id = if has_no_retx {
        CaseId::NoRetx
    } else if admissible_alpha_regions.len() == 1 {
        admissible_alpha_regions[0].case
    } else {
        match table_item {
            1 | 6 => admissible_alpha_regions
                .iter()
                .find(|r| !r.interval.is_point())
                .map(|r| r.case)
                .unwrap_or(admissible_alpha_regions[0].case),
            _ => CaseId::Both,
        }
    };

    RetransmissionCase {
        case_id,
        table_item,
        admissible_alpha_regions,
    }
}

/// Splits off `alpha = 1` from an `S2Only` region and `alpha = 0` from an
/// `S11Only` region: at those endpoints the decoded user's whole message is
/// through and it starts a new packet.
fn carve_special(admissible_alpha_regions: &mut Vec<AlphaRegion>, allow_alpha0: bool) {
    if let Some(last) = admissible_alpha_regions.last_mut() {
        if last.case == CaseId::S2Only && last.interval.contains(1.0) {
            if last.interval.is_point() {
                last.case = CaseId::SpecialAlpha1;
            } else {
                last.interval.hi_open = true;
                admissible_alpha_regions.push(AlphaRegion {
                    interval: AlphaInterval::point(1.0),
                    case: CaseId::SpecialAlpha1,
                });
            }
        }
    }
    if let Some(first) = admissible_alpha_regions.first_mut().filter(|_| allow_alpha0) {
        if first.case == CaseId::S11Only && first.interval.contains(0.0) {
            if first.interval.is_point() {
                first.case = CaseId::SpecialAlpha0;
            } else {
                first.interval.lo_open = true;
                admissible_alpha_regions.insert(
                    0,
                    AlphaRegion {
                        interval: AlphaInterval::point(0.0),
                        case: CaseId::SpecialAlpha0,
                    },
                );
            }
        }
    }
}
