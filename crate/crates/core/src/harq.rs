//! Multi-round HARQ sessions for RSMA, NOMA and FDMA.
//!
//! A trial starts with one packet per user in round 0 and runs until every
//! packet generated during the trial is decoded or has used its `L + 1`
//! rounds. The receiver keeps every received copy of every stream; a copy's
//! SINR is recomputed from whichever of its interferers are still
//! undecoded, so cancelling a stream late also cleans its old copies.
//!
//! CC accumulates SINR (target `2^R - 1`), IR accumulates `log2(1 + SINR)`
//! (target `R`).

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::HarqKind;
use crate::error::{Error, Result};
use crate::fading::{ChannelDraw, ChannelSource, UserProfile};
use crate::optimizer::{retransmit_set, select_alpha, Stream as PlanStream};
use crate::rsma::{alpha_bounds, classify, sinr_components, CaseId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "RSMA")]
    Rsma,
    #[serde(rename = "NOMA")]
    Noma,
    #[serde(rename = "FDMA")]
    Fdma,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Rsma, Scheme::Noma, Scheme::Fdma];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Rsma => "RSMA",
            Scheme::Noma => "NOMA",
            Scheme::Fdma => "FDMA",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RSMA" => Ok(Scheme::Rsma),
            "NOMA" => Ok(Scheme::Noma),
            "FDMA" => Ok(Scheme::Fdma),
            _ => Err(format!("unknown scheme `{s}` (expected RSMA, NOMA or FDMA)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// Minimize the predicted next-round error per packet pair.
    Optimized,
    Pinned(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsmaOptions {
    pub alpha: AlphaPolicy,
    /// With splitting off, user 1 sends one stream and `alpha` must be 0 or 1.
    pub splitting: bool,
}

impl Default for RsmaOptions {
    fn default() -> Self {
        Self {
            alpha: AlphaPolicy::Optimized,
            splitting: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarqConfig {
    pub scheme: Scheme,
    pub kind: HarqKind,
    /// `L`, retransmissions allowed after the first round.
    pub max_retx: u32,
    pub profiles: [UserProfile; 2],
    pub fdma_w1: f64,
    /// NOMA decode order: 1 decodes user 1 first, 0 decodes user 2 first.
    pub noma_alpha: f64,
    pub rsma: RsmaOptions,
}

impl HarqConfig {
    pub fn new(scheme: Scheme, kind: HarqKind, max_retx: u32, p1: UserProfile, p2: UserProfile) -> Self {
        Self {
            scheme,
            kind,
            max_retx,
            profiles: [p1, p2],
            fdma_w1: 0.5,
            noma_alpha: if p1.avg_gain_db > p2.avg_gain_db { 1.0 } else { 0.0 },
            rsma: RsmaOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fdma_w1 > 0.0 && self.fdma_w1 < 1.0) {
            return Err(Error::Config {
                field: "fdma_w1",
                reason: format!("must lie in (0, 1), got {}", self.fdma_w1),
            });
        }
        if self.noma_alpha != 0.0 && self.noma_alpha != 1.0 {
            return Err(Error::Config {
                field: "noma_alpha",
                reason: format!("must be 0 or 1, got {}", self.noma_alpha),
            });
        }
        for p in &self.profiles {
            if !(p.rate >= 0.0 && p.rate.is_finite()) {
                return Err(Error::Config {
                    field: "rate",
                    reason: format!("must be finite and >= 0, got {}", p.rate),
                });
            }
            if !p.avg_gain_db.is_finite() {
                return Err(Error::Config {
                    field: "gamma_db",
                    reason: format!("must be finite, got {}", p.avg_gain_db),
                });
            }
        }
        if let AlphaPolicy::Pinned(a) = self.rsma.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config {
                    field: "alpha",
                    reason: format!("must lie in [0, 1], got {a}"),
                });
            }
            if !self.rsma.splitting && a != 0.0 && a != 1.0 {
                return Err(Error::Config {
                    field: "alpha",
                    reason: format!("without splitting alpha must be 0 or 1, got {a}"),
                });
            }
        }
        if self.rsma.alpha == AlphaPolicy::Optimized && !self.rsma.splitting {
            return Err(Error::Config {
                field: "splitting",
                reason: "an optimized alpha needs splitting enabled".into(),
            });
        }
        Ok(())
    }

    fn rates(&self) -> [f64; 2] {
        [self.profiles[0].rate, self.profiles[1].rate]
    }

    fn means(&self) -> [f64; 2] {
        [self.profiles[0].mean_gain(), self.profiles[1].mean_gain()]
    }
}

/// Result of one trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialOutcome {
    /// Whether each user's round-0 packet was decoded in time.
    pub user1_ok: bool,
    pub user2_ok: bool,
    /// Rounds until both round-0 packets were resolved, at most `L + 1`.
    pub rounds_used: u32,
    /// Rounds until every packet of the trial was resolved.
    pub session_rounds: u32,
    pub energy_user1: f64,
    pub energy_user2: f64,
    /// Packets generated per user, including ones started during retransmissions.
    pub packets: [u32; 2],
    pub failures: [u32; 2],
    pub chosen_alpha: Option<f64>,
}

/// Target for a stream of rate `rate`.
fn target(kind: HarqKind, rate: f64) -> f64 {
    match kind {
        HarqKind::Cc => rate.exp2() - 1.0,
        HarqKind::Ir => rate,
    }
}

fn combine(kind: HarqKind, sinr: f64) -> f64 {
    match kind {
        HarqKind::Cc => sinr,
        HarqKind::Ir => sinr.ln_1p() / std::f64::consts::LN_2,
    }
}

fn meets(metric: f64, target: f64) -> bool {
    metric >= target * (1.0 - 1e-12) - 1e-15
}

fn packet_label(user: usize, index: u32) -> String {
    format!("u{}p{}", user + 1, index)
}

/// One round of the debug event log.
struct RoundLog {
    round: u32,
    draw: ChannelDraw,
    tx: Vec<(String, f64)>,
    decoded: Vec<String>,
    dropped: Vec<String>,
}

impl RoundLog {
    fn new(round: u32, draw: ChannelDraw) -> Self {
        Self {
            round,
            draw,
            tx: vec![],
            decoded: vec![],
            dropped: vec![],
        }
    }

    fn write(mut self, out: &mut Option<&mut Vec<String>>) {
        let Some(out) = out.as_deref_mut() else { return };
        self.tx.sort_by(|a, b| a.0.cmp(&b.0));
        self.decoded.sort();
        self.dropped.sort();
        let mut line = format!("round={} g1={:e} g2={:e} tx=", self.round, self.draw.g1, self.draw.g2);
        let tx: Vec<String> = self.tx.iter().map(|(l, p)| format!("{l}@{p}")).collect();
        line.push_str(&tx.join(","));
        let _ = write!(line, " ok={} drop={}", self.decoded.join(","), self.dropped.join(","));
        out.push(line);
    }
}

fn log_end(out: &mut Option<&mut Vec<String>>, o: &TrialOutcome) {
    if let Some(out) = out.as_deref_mut() {
        out.push(format!(
            "end ok={},{} rounds={} session={} energy={},{} packets={},{} failures={},{}",
            o.user1_ok as u8,
            o.user2_ok as u8,
            o.rounds_used,
            o.session_rounds,
            o.energy_user1,
            o.energy_user2,
            o.packets[0],
            o.packets[1],
            o.failures[0],
            o.failures[1]
        ));
    }
}

// ---------------------------------------------------------------------------
// Stream-level engine used by RSMA.

struct Copy {
    signal: f64,
    interferers: Vec<(usize, f64)>,
}

struct StreamState {
    label: String,
    packet: usize,
    target: f64,
    copies: Vec<Copy>,
    decoded: bool,
    /// Streams that must be decoded before this one is attempted.
    after: Vec<usize>,
}

struct Packet {
    user: usize,
    index: u32,
    born: u32,
    streams: Vec<usize>,
    done: Option<bool>,
    resolved_at: u32,
}

/// The state of all streams at the receiver. Also serves as the CC / IR
/// accumulator: each stream's metric is the combined SINR of its copies.
struct DecodeState {
    kind: HarqKind,
    streams: Vec<StreamState>,
    packets: Vec<Packet>,
    energy: [f64; 2],
    next_index: [u32; 2],
}

impl DecodeState {
    fn new(kind: HarqKind) -> Self {
        Self {
            kind,
            streams: vec![],
            packets: vec![],
            energy: [0.0; 2],
            next_index: [0; 2],
        }
    }

    fn new_packet(&mut self, user: usize, born: u32) -> usize {
        let index = self.next_index[user];
        self.next_index[user] += 1;
        self.packets.push(Packet {
            user,
            index,
            born,
            streams: vec![],
            done: None,
            resolved_at: 0,
        });
        self.packets.len() - 1
    }

    fn new_stream(&mut self, packet: usize, suffix: &str, rate: f64, after: Vec<usize>) -> usize {
        let p = &self.packets[packet];
        let label = format!("{}{}", packet_label(p.user, p.index), suffix);
        self.streams.push(StreamState {
            label,
            packet,
            target: target(self.kind, rate),
            copies: vec![],
            // a zero-rate stream carries nothing to decode
            decoded: rate <= 0.0,
            after,
        });
        let id = self.streams.len() - 1;
        self.packets[packet].streams.push(id);
        id
    }

    fn pending(&self, stream: usize) -> bool {
        let s = &self.streams[stream];
        !s.decoded && self.packets[s.packet].done.is_none()
    }

    fn packet_pending(&self, packet: usize) -> bool {
        self.packets[packet].done.is_none()
    }

    fn metric(&self, stream: usize) -> f64 {
        self.streams[stream]
            .copies
            .iter()
            .map(|c| {
                let noise: f64 = 1.0
                    + c.interferers
                        .iter()
                        .filter(|(i, _)| !self.streams[*i].decoded)
                        .map(|(_, p)| p)
                        .sum::<f64>();
                combine(self.kind, c.signal / noise)
            })
            .sum()
    }

    fn decodable(&self, stream: usize) -> bool {
        let s = &self.streams[stream];
        self.pending(stream)
            && s.after.iter().all(|&i| self.streams[i].decoded)
            && meets(self.metric(stream), s.target)
    }

    /// Sends `(stream, received power)` pairs in one round; each copy sees
    /// the others as interference.
    fn transmit(&mut self, sent: &[(usize, f64, f64)], log: &mut RoundLog) {
        for (k, &(stream, rx, tx_power)) in sent.iter().enumerate() {
            let interferers = sent
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, &(other, rx_other, _))| (other, rx_other))
                .collect();
            self.streams[stream].copies.push(Copy { signal: rx, interferers });
            let user = self.packets[self.streams[stream].packet].user;
            self.energy[user] += tx_power;
            log.tx.push((self.streams[stream].label.clone(), tx_power));
        }
    }

    fn mark(&mut self, stream: usize, log: &mut RoundLog) {
        self.streams[stream].decoded = true;
        log.decoded.push(self.streams[stream].label.clone());
    }

    /// Decodes in the given order, stopping at the first failure.
    fn decode_in_order(&mut self, order: &[usize], log: &mut RoundLog) {
        for &s in order {
            if self.streams[s].decoded {
                continue;
            }
            if self.decodable(s) {
                self.mark(s, log);
            } else {
                break;
            }
        }
    }

    /// Decodes whatever can be decoded, cancelling as it goes.
    fn decode_all(&mut self, log: &mut RoundLog) {
        loop {
            let ready: Option<usize> = (0..self.streams.len()).find(|&s| self.decodable(s));
            match ready {
                Some(s) => self.mark(s, log),
                None => break,
            }
        }
    }

    /// Resolves finished packets and drops expired ones after `round`.
    fn settle(&mut self, round: u32, max_retx: u32, log: &mut RoundLog) {
        for p in 0..self.packets.len() {
            if self.packets[p].done.is_some() {
                continue;
            }
            let ok = self.packets[p].streams.iter().all(|&s| self.streams[s].decoded);
            if ok {
                self.packets[p].done = Some(true);
                self.packets[p].resolved_at = round;
            } else if round >= self.packets[p].born + max_retx {
                self.packets[p].done = Some(false);
                self.packets[p].resolved_at = round;
                log.dropped.push(packet_label(self.packets[p].user, self.packets[p].index));
            }
        }
    }

    fn any_pending(&self) -> bool {
        self.packets.iter().any(|p| p.done.is_none())
    }

    fn outcome(&self, last_round: u32, chosen_alpha: Option<f64>) -> TrialOutcome {
        let mut o = TrialOutcome {
            session_rounds: last_round + 1,
            energy_user1: self.energy[0],
            energy_user2: self.energy[1],
            chosen_alpha,
            ..TrialOutcome::default()
        };
        for p in &self.packets {
            let ok = p.done == Some(true);
            o.packets[p.user] += 1;
            if !ok {
                o.failures[p.user] += 1;
            }
            if p.index == 0 {
                if p.user == 0 {
                    o.user1_ok = ok;
                } else {
                    o.user2_ok = ok;
                }
                o.rounds_used = o.rounds_used.max(p.resolved_at + 1);
            }
        }
        o
    }
}

/// How an RSMA trial proceeds after round 0.
enum Flow {
    /// Split user 1 at `alpha`; retransmit only the planned streams, nobody
    /// starts new packets.
    Split { alpha: f64, plan: Vec<PlanStream> },
    /// No split; `first` is decoded first. Once it is through, it starts a
    /// new packet in every round the other user retransmits.
    Unsplit { first: usize },
}

/// RSMA trial under the configured split policy.
pub fn rsma_trial(cfg: &HarqConfig, source: &mut ChannelSource, mut log: Option<&mut Vec<String>>) -> Result<TrialOutcome> {
    let [r1, r2] = cfg.rates();
    let [m1, m2] = cfg.means();
    let d0 = source.round(0);
    let flow = match cfg.rsma.alpha {
        AlphaPolicy::Optimized => {
            let plan = select_alpha(&d0, r1, r2, m1, m2, cfg.kind)?;
            match plan.case_id {
                CaseId::SpecialAlpha1 => Flow::Unsplit { first: 0 },
                CaseId::SpecialAlpha0 => Flow::Unsplit { first: 1 },
                _ => Flow::Split {
                    alpha: plan.chosen_alpha,
                    plan: plan.retransmit_set,
                },
            }
        }
        AlphaPolicy::Pinned(a) if !cfg.rsma.splitting => Flow::Unsplit {
            first: if a == 1.0 { 0 } else { 1 },
        },
        AlphaPolicy::Pinned(a) => {
            let cases = classify(&alpha_bounds(&d0, r1, r2));
            match cases.case_at(a).expect("regions cover [0, 1]") {
                CaseId::SpecialAlpha1 => Flow::Unsplit { first: 0 },
                CaseId::SpecialAlpha0 => Flow::Unsplit { first: 1 },
                case => Flow::Split {
                    alpha: a,
                    plan: retransmit_set(case),
                },
            }
        }
    };
    let chosen_alpha = Some(match &flow {
        Flow::Split { alpha, .. } => *alpha,
        Flow::Unsplit { first } => {
            if *first == 0 {
                1.0
            } else {
                0.0
            }
        }
    });

    let mut st = DecodeState::new(cfg.kind);
    let l = cfg.max_retx;
    let mut round = 0;
    match flow {
        Flow::Split { alpha, plan } => {
            let rest = (1.0 - alpha) * d0.g1;
            let r12 = r1.min(sinr_components(&d0, alpha).s12.ln_1p() / std::f64::consts::LN_2);
            let r11 = (r1 - r12).max(0.0);
            let p1 = st.new_packet(0, 0);
            let p2 = st.new_packet(1, 0);
            let s11 = st.new_stream(p1, ".c", r11, vec![]);
            let s2 = st.new_stream(p2, "", r2, vec![]);
            let s12 = st.new_stream(p1, ".p", r12, vec![s11, s2]);
            let mut lg = RoundLog::new(0, d0);
            st.streams[s11].copies.push(Copy {
                signal: alpha * d0.g1,
                interferers: vec![(s12, rest), (s2, d0.g2)],
            });
            st.streams[s2].copies.push(Copy {
                signal: d0.g2,
                interferers: vec![(s11, alpha * d0.g1), (s12, rest)],
            });
            st.streams[s12].copies.push(Copy {
                signal: rest,
                interferers: vec![(s11, alpha * d0.g1), (s2, d0.g2)],
            });
            st.energy = [1.0, 1.0];
            lg.tx.push((st.streams[s11].label.clone(), alpha));
            lg.tx.push((st.streams[s12].label.clone(), 1.0 - alpha));
            lg.tx.push((st.streams[s2].label.clone(), 1.0));
            st.decode_in_order(&[s11, s2, s12], &mut lg);
            st.settle(0, l, &mut lg);
            lg.write(&mut log);

            while st.any_pending() {
                round += 1;
                let d = source.round(u64::from(round));
                let mut lg = RoundLog::new(round, d);
                let candidates = [(PlanStream::S11, s11), (PlanStream::S2, s2)];
                let mut send: Vec<usize> = candidates
                    .iter()
                    .filter(|(tag, s)| plan.contains(tag) && st.pending(*s))
                    .map(|(_, s)| *s)
                    .collect();
                if send.is_empty() {
                    send = candidates.iter().filter(|(_, s)| st.pending(*s)).map(|(_, s)| *s).collect();
                }
                let sent: Vec<(usize, f64, f64)> = send
                    .iter()
                    .map(|&s| if s == s11 { (s, alpha * d.g1, alpha) } else { (s, d.g2, 1.0) })
                    .collect();
                st.transmit(&sent, &mut lg);
                st.decode_all(&mut lg);
                st.settle(round, l, &mut lg);
                lg.write(&mut log);
            }
        }
        Flow::Unsplit { first } => {
            let second = 1 - first;
            let rates = [r1, r2];
            let pa = st.new_packet(first, 0);
            let pb = st.new_packet(second, 0);
            let sa = st.new_stream(pa, "", rates[first], vec![]);
            let sb = st.new_stream(pb, "", rates[second], vec![]);
            let gains = |d: &ChannelDraw, u: usize| d.gain(u + 1);
            let mut lg = RoundLog::new(0, d0);
            st.transmit(&[(sa, gains(&d0, first), 1.0), (sb, gains(&d0, second), 1.0)], &mut lg);
            st.decode_in_order(&[sa, sb], &mut lg);
            st.settle(0, l, &mut lg);
            lg.write(&mut log);

            let mut current_a = pa;
            while st.any_pending() {
                round += 1;
                let d = source.round(u64::from(round));
                let mut lg = RoundLog::new(round, d);
                let a_stream = st.packets[current_a].streams[0];
                if st.packet_pending(current_a) {
                    st.transmit(&[(a_stream, gains(&d, first), 1.0)], &mut lg);
                } else if st.packet_pending(pb) {
                    current_a = st.new_packet(first, round);
                    let fresh = st.new_stream(current_a, "", rates[first], vec![]);
                    st.transmit(&[(sb, gains(&d, second), 1.0), (fresh, gains(&d, first), 1.0)], &mut lg);
                }
                st.decode_all(&mut lg);
                st.settle(round, l, &mut lg);
                lg.write(&mut log);
            }
        }
    }
    let o = st.outcome(round, chosen_alpha);
    log_end(&mut log, &o);
    Ok(o)
}

// ---------------------------------------------------------------------------
// NOMA, written against whole packets only.

struct NomaCopy {
    signal: f64,
    /// The other packet on the air in that round, with its received power.
    interferer: Option<(usize, f64)>,
}

struct NomaPacket {
    user: usize,
    index: u32,
    born: u32,
    rate: f64,
    copies: Vec<NomaCopy>,
    decoded: bool,
    done: Option<bool>,
    resolved_at: u32,
}

/// NOMA trial: no split, fixed decode order given by `noma_alpha`.
pub fn noma_trial(cfg: &HarqConfig, source: &mut ChannelSource, mut log: Option<&mut Vec<String>>) -> TrialOutcome {
    let kind = cfg.kind;
    let first = if cfg.noma_alpha == 1.0 { 0 } else { 1 };
    let second = 1 - first;
    let rates = cfg.rates();
    let l = cfg.max_retx;
    let mut packets: Vec<NomaPacket> = Vec::new();
    let mut energy = [0.0f64; 2];
    let mut counts = [0u32; 2];

    let mut spawn = |packets: &mut Vec<NomaPacket>, user: usize, born: u32| {
        packets.push(NomaPacket {
            user,
            index: counts[user],
            born,
            rate: rates[user],
            copies: vec![],
            decoded: rates[user] <= 0.0,
            done: None,
            resolved_at: 0,
        });
        counts[user] += 1;
        packets.len() - 1
    };
    let accumulated = |packets: &[NomaPacket], i: usize| -> f64 {
        packets[i]
            .copies
            .iter()
            .map(|c| {
                let noise = match c.interferer {
                    Some((j, p)) if !packets[j].decoded => 1.0 + p,
                    _ => 1.0,
                };
                let sinr = c.signal / noise;
                match kind {
                    HarqKind::Cc => sinr,
                    HarqKind::Ir => (1.0 + sinr).log2(),
                }
            })
            .sum()
    };
    let goal = |rate: f64| match kind {
        HarqKind::Cc => rate.exp2() - 1.0,
        HarqKind::Ir => rate,
    };
    let try_decode = |packets: &mut Vec<NomaPacket>, i: usize, lg: &mut RoundLog| -> bool {
        if packets[i].decoded || packets[i].done.is_some() {
            return false;
        }
        let m = accumulated(packets, i);
        if m >= goal(packets[i].rate) * (1.0 - 1e-12) - 1e-15 {
            packets[i].decoded = true;
            lg.decoded.push(packet_label(packets[i].user, packets[i].index));
            true
        } else {
            false
        }
    };
    let send = |packets: &mut Vec<NomaPacket>, energy: &mut [f64; 2], on_air: &[(usize, f64)], lg: &mut RoundLog| {
        for &(i, rx) in on_air {
            let other = on_air.iter().find(|(j, _)| *j != i).copied();
            packets[i].copies.push(NomaCopy { signal: rx, interferer: other });
            energy[packets[i].user] += 1.0;
            lg.tx.push((packet_label(packets[i].user, packets[i].index), 1.0));
        }
    };
    let settle = |packets: &mut Vec<NomaPacket>, round: u32, lg: &mut RoundLog| {
        for p in packets.iter_mut() {
            if p.done.is_some() {
                continue;
            }
            if p.decoded {
                p.done = Some(true);
                p.resolved_at = round;
            } else if round >= p.born + l {
                p.done = Some(false);
                p.resolved_at = round;
                lg.dropped.push(packet_label(p.user, p.index));
            }
        }
    };

    let d0 = source.round(0);
    let pa = spawn(&mut packets, first, 0);
    let pb = spawn(&mut packets, second, 0);
    let mut lg = RoundLog::new(0, d0);
    send(&mut packets, &mut energy, &[(pa, d0.gain(first + 1)), (pb, d0.gain(second + 1))], &mut lg);
    // fixed order: the second packet is only tried once the first is through
    if packets[pa].decoded || try_decode(&mut packets, pa, &mut lg) {
        try_decode(&mut packets, pb, &mut lg);
    }
    settle(&mut packets, 0, &mut lg);
    lg.write(&mut log);

    let mut round = 0;
    let mut current_a = pa;
    while packets.iter().any(|p| p.done.is_none()) {
        round += 1;
        let d = source.round(u64::from(round));
        let mut lg = RoundLog::new(round, d);
        if packets[current_a].done.is_none() {
            send(&mut packets, &mut energy, &[(current_a, d.gain(first + 1))], &mut lg);
        } else if packets[pb].done.is_none() {
            current_a = spawn(&mut packets, first, round);
            send(
                &mut packets,
                &mut energy,
                &[(pb, d.gain(second + 1)), (current_a, d.gain(first + 1))],
                &mut lg,
            );
        }
        // successive cancellation over everything still pending
        loop {
            let mut progress = false;
            for i in 0..packets.len() {
                if try_decode(&mut packets, i, &mut lg) {
                    progress = true;
                    break;
                }
            }
            if !progress {
                break;
            }
        }
        settle(&mut packets, round, &mut lg);
        lg.write(&mut log);
    }

    let mut o = TrialOutcome {
        session_rounds: round + 1,
        energy_user1: energy[0],
        energy_user2: energy[1],
        chosen_alpha: Some(cfg.noma_alpha),
        ..TrialOutcome::default()
    };
    for p in &packets {
        let ok = p.done == Some(true);
        o.packets[p.user] += 1;
        if !ok {
            o.failures[p.user] += 1;
        }
        if p.index == 0 {
            if p.user == 0 {
                o.user1_ok = ok;
            } else {
                o.user2_ok = ok;
            }
            o.rounds_used = o.rounds_used.max(p.resolved_at + 1);
        }
    }
    log_end(&mut log, &o);
    o
}

// ---------------------------------------------------------------------------
// FDMA.

/// Whether a user with bandwidth share `w` decodes from the gains seen so far.
fn fdma_decodes(kind: HarqKind, w: f64, rate: f64, gains: &[f64]) -> bool {
    if rate <= 0.0 {
        return true;
    }
    let metric = match kind {
        HarqKind::Cc => w * (gains.iter().sum::<f64>() / w).ln_1p(),
        HarqKind::Ir => gains.iter().map(|g| w * (g / w).ln_1p()).sum(),
    } / std::f64::consts::LN_2;
    meets(metric, rate)
}

/// FDMA trial: each user retransmits on its own band until decoded or out of rounds.
pub fn fdma_trial(cfg: &HarqConfig, source: &mut ChannelSource, mut log: Option<&mut Vec<String>>) -> TrialOutcome {
    let w = [cfg.fdma_w1, 1.0 - cfg.fdma_w1];
    let rates = cfg.rates();
    let mut gains: [Vec<f64>; 2] = [vec![], vec![]];
    let mut ok = [false; 2];
    let mut resolved_at = [0u32; 2];
    let mut energy = [0.0f64; 2];
    let mut round = 0;
    loop {
        let d = source.round(u64::from(round));
        let mut lg = RoundLog::new(round, d);
        for u in 0..2 {
            if ok[u] || (round > 0 && resolved_at[u] < round) {
                continue;
            }
            gains[u].push(d.gain(u + 1));
            energy[u] += 1.0;
            lg.tx.push((packet_label(u, 0), 1.0));
            resolved_at[u] = round;
            if fdma_decodes(cfg.kind, w[u], rates[u], &gains[u]) {
                ok[u] = true;
                lg.decoded.push(packet_label(u, 0));
            } else if round >= cfg.max_retx {
                lg.dropped.push(packet_label(u, 0));
            } else {
                resolved_at[u] = round + 1;
            }
        }
        lg.write(&mut log);
        if resolved_at.iter().all(|&r| r <= round) {
            break;
        }
        round += 1;
    }
    let o = TrialOutcome {
        user1_ok: ok[0],
        user2_ok: ok[1],
        rounds_used: round + 1,
        session_rounds: round + 1,
        energy_user1: energy[0],
        energy_user2: energy[1],
        packets: [1, 1],
        failures: [u32::from(!ok[0]), u32::from(!ok[1])],
        chosen_alpha: None,
    };
    log_end(&mut log, &o);
    o
}

/// Runs trial `trial` of `cfg` on its own channel stream.
pub fn run_trial(cfg: &HarqConfig, seed: u64, trial: u64, log: Option<&mut Vec<String>>) -> Result<TrialOutcome> {
    let [p1, p2] = cfg.profiles;
    let mut source = ChannelSource::new(p1, p2, seed, trial);
    match cfg.scheme {
        Scheme::Rsma => rsma_trial(cfg, &mut source, log),
        Scheme::Noma => Ok(noma_trial(cfg, &mut source, log)),
        Scheme::Fdma => Ok(fdma_trial(cfg, &mut source, log)),
    }
}

/// Stream ids used by [`optimize_fdma_w`], kept clear of the trial ids.
pub const FDMA_TUNING_STREAM_BASE: u64 = 1 << 48;

/// Grid `w1 = 0.01, ..., 0.99` scored by the summed Monte Carlo error
/// counts over common channel draws.
///
/// Ties prefer the larger of `min_k w_k / r_k` (a zero-rate user counts as
/// unconstrained), then the point closest to 0.5.
pub fn optimize_fdma_w(cfg: &HarqConfig, trials: u64, seed: u64) -> f64 {
    let grid: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
    let [p1, p2] = cfg.profiles;
    let rates = cfg.rates();
    let rounds = cfg.max_retx as usize + 1;
    let kind = cfg.kind;
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut source = ChannelSource::new(p1, p2, seed, FDMA_TUNING_STREAM_BASE + t);
            let draws: Vec<ChannelDraw> = (0..rounds as u64).map(|k| source.round(k)).collect();
            let g: [Vec<f64>; 2] = [draws.iter().map(|d| d.g1).collect(), draws.iter().map(|d| d.g2).collect()];
            grid.iter()
                .map(|&w| {
                    u32::from(!fdma_decodes(kind, w, rates[0], &g[0]))
                        + u32::from(!fdma_decodes(kind, 1.0 - w, rates[1], &g[1]))
                })
                .collect::<Vec<u32>>()
        })
        .reduce(
            || vec![0u32; grid.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let share = |w: f64| {
        let per = |wk: f64, r: f64| if r <= 0.0 { f64::INFINITY } else { wk / r };
        per(w, rates[0]).min(per(1.0 - w, rates[1]))
    };
    let mut best = 0;
    for i in 1..grid.len() {
        let (c, b) = (counts[i], counts[best]);
        let better = c < b
            || (c == b && share(grid[i]) > share(grid[best]))
            || (c == b && share(grid[i]) == share(grid[best]) && (grid[i] - 0.5).abs() < (grid[best] - 0.5).abs());
        if better {
            best = i;
        }
    }
    grid[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::exp_tail;
    use crate::fading::db_to_linear;

    fn cfg(scheme: Scheme, kind: HarqKind, l: u32, rate: f64) -> HarqConfig {
        HarqConfig::new(scheme, kind, l, UserProfile::new(20.0, rate), UserProfile::new(15.0, rate))
    }

    fn run(cfg: &HarqConfig, seed: u64, trial: u64) -> (TrialOutcome, Vec<String>) {
        let mut log = vec![];
        let o = run_trial(cfg, seed, trial, Some(&mut log)).unwrap();
        (o, log)
    }

    #[test]
    fn zero_rate_succeeds_in_one_round() {
        for scheme in Scheme::ALL {
            for kind in HarqKind::ALL {
                let c = cfg(scheme, kind, 2, 0.0);
                for t in 0..50 {
                    let (o, _) = run(&c, 1, t);
                    assert!(o.user1_ok && o.user2_ok, "{scheme} {kind}");
                    assert_eq!(o.rounds_used, 1);
                    assert_eq!((o.energy_user1, o.energy_user2), (1.0, 1.0));
                    assert_eq!(o.packets, [1, 1]);
                }
            }
        }
    }

    #[test]
    fn huge_gains_need_no_retransmission() {
        let mut c = cfg(Scheme::Rsma, HarqKind::Cc, 2, 2.0);
        c.profiles = [UserProfile::new(80.0, 2.0), UserProfile::new(70.0, 2.0)];
        for t in 0..200 {
            let (o, _) = run(&c, 4, t);
            if o.rounds_used == 1 {
                assert!(o.user1_ok && o.user2_ok);
                assert_eq!((o.energy_user1, o.energy_user2), (1.0, 1.0));
            }
        }
    }

    #[test]
    fn no_retransmissions_allowed() {
        for scheme in Scheme::ALL {
            let c = cfg(scheme, HarqKind::Cc, 0, 5.0);
            for t in 0..200 {
                let (o, log) = run(&c, 9, t);
                assert_eq!(o.rounds_used, 1);
                assert_eq!(o.session_rounds, 1, "{scheme}: {log:?}");
                assert_eq!(o.packets, [1, 1]);
            }
        }
    }

    #[test]
    fn rounds_and_energy_bounds() {
        for scheme in Scheme::ALL {
            for kind in HarqKind::ALL {
                for l in [0, 1, 2, 4] {
                    let c = cfg(scheme, kind, l, 3.0);
                    for t in 0..300 {
                        let (o, log) = run(&c, 21, t);
                        assert!(o.rounds_used <= l + 1, "{scheme} {kind} L={l}: {log:?}");
                        assert!(o.session_rounds <= 2 * l + 1);
                        assert!(o.energy_user1 >= 0.0 && o.energy_user2 >= 0.0);
                        let packets = o.packets[0] + o.packets[1];
                        assert!(o.energy_user1 + o.energy_user2 <= (l + 1) as f64 * packets as f64 + 1e-12);
                        if scheme == Scheme::Fdma {
                            assert!(o.energy_user1 >= 1.0 && o.energy_user2 >= 1.0);
                        }
                    }
                }
            }
        }
    }

    /// Energy read back from the round log: split streams count their
    /// power, everything else counts 1.
    #[test]
    fn energy_matches_round_log() {
        for kind in HarqKind::ALL {
            let c = cfg(Scheme::Rsma, kind, 3, 3.0);
            for t in 0..300 {
                let (o, log) = run(&c, 5, t);
                let mut e = [0.0f64; 2];
                for line in log.iter().filter(|l| l.starts_with("round=")) {
                    let tx = line.split(" tx=").nth(1).unwrap().split(' ').next().unwrap();
                    for item in tx.split(',').filter(|s| !s.is_empty()) {
                        let (label, p) = item.split_once('@').unwrap();
                        let user = if label.starts_with("u1") { 0 } else { 1 };
                        e[user] += p.parse::<f64>().unwrap();
                    }
                }
                assert!((e[0] - o.energy_user1).abs() < 1e-9, "{log:?}");
                assert!((e[1] - o.energy_user2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn noma_with_dominant_interferer_fails_user1() {
        let mut c = cfg(Scheme::Noma, HarqKind::Cc, 0, 1.0);
        c.noma_alpha = 1.0;
        c.profiles = [UserProfile::new(0.0, 1.0), UserProfile::new(90.0, 1.0)];
        let mut failures = 0;
        for t in 0..1000 {
            let (o, _) = run(&c, 2, t);
            if !o.user1_ok {
                failures += 1;
            }
        }
        assert!(failures > 990);
    }

    #[test]
    fn rsma_unsplit_matches_noma() {
        for kind in HarqKind::ALL {
            for l in [0, 2, 4] {
                for alpha in [0.0, 1.0] {
                    let mut noma = cfg(Scheme::Noma, kind, l, 2.5);
                    noma.noma_alpha = alpha;
                    let mut rsma = noma;
                    rsma.scheme = Scheme::Rsma;
                    rsma.rsma = RsmaOptions {
                        alpha: AlphaPolicy::Pinned(alpha),
                        splitting: false,
                    };
                    for t in 0..500 {
                        let (a, la) = run(&noma, 8, t);
                        let (b, lb) = run(&rsma, 8, t);
                        assert_eq!(la, lb);
                        assert_eq!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn ir_dominates_cc_with_fixed_split() {
        for scheme in [Scheme::Noma, Scheme::Fdma, Scheme::Rsma] {
            for l in [1, 2, 4] {
                let mut cc = cfg(scheme, HarqKind::Cc, l, 3.0);
                if scheme == Scheme::Rsma {
                    cc.rsma.alpha = AlphaPolicy::Pinned(0.6);
                }
                let mut ir = cc;
                ir.kind = HarqKind::Ir;
                for t in 0..2000 {
                    let (a, la) = run(&cc, 6, t);
                    let (b, lb) = run(&ir, 6, t);
                    assert!(!a.user1_ok || b.user1_ok, "{scheme} L={l} user 1\n{la:#?}\n{lb:#?}");
                    assert!(!a.user2_ok || b.user2_ok, "{scheme} L={l} user 2\n{la:#?}\n{lb:#?}");
                }
            }
        }
    }

    #[test]
    fn more_rounds_never_hurt_fdma() {
        let c2 = cfg(Scheme::Fdma, HarqKind::Cc, 2, 3.0);
        let mut c4 = c2;
        c4.max_retx = 4;
        for t in 0..2000 {
            let (a, _) = run(&c2, 3, t);
            let (b, _) = run(&c4, 3, t);
            assert!(!a.user1_ok || b.user1_ok);
            assert!(!a.user2_ok || b.user2_ok);
        }
    }

    #[test]
    fn fdma_symmetric_users_swap() {
        let p = UserProfile::new(15.0, 2.0);
        let c = HarqConfig::new(Scheme::Fdma, HarqKind::Ir, 2, p, p);
        let mut a = [0u32; 2];
        for t in 0..20_000 {
            let (o, _) = run(&c, 12, t);
            a[0] += o.failures[0];
            a[1] += o.failures[1];
        }
        let diff = (a[0] as f64 - a[1] as f64).abs();
        let sd = ((a[0] + a[1]) as f64).sqrt();
        assert!(diff < 4.0 * sd, "{a:?}");
    }

    #[test]
    fn fdma_one_shot_matches_exponential_tail() {
        let c = cfg(Scheme::Fdma, HarqKind::Cc, 0, 2.0);
        let n = 100_000;
        let mut fails = 0u32;
        for t in 0..n {
            let (o, _) = run(&c, 31, t);
            fails += o.failures[0];
        }
        let w = 0.5;
        let p = exp_tail(w * ((2.0f64 / w).exp2() - 1.0), db_to_linear(20.0)).unwrap();
        let phat = fails as f64 / n as f64;
        let z = (phat - p) / (p * (1.0 - p) / n as f64).sqrt();
        assert!(z.abs() < 3.0, "{phat} vs {p}");
    }

    #[test]
    fn fdma_user1_ignores_user2_rate() {
        let a = cfg(Scheme::Fdma, HarqKind::Cc, 2, 3.0);
        let mut b = a;
        b.profiles[1].rate = 0.5;
        for t in 0..5000 {
            assert_eq!(run(&a, 4, t).0.user1_ok, run(&b, 4, t).0.user1_ok);
        }
    }

    #[test]
    fn fdma_w_search() {
        let p = UserProfile::new(15.0, 2.0);
        let sym = HarqConfig::new(Scheme::Fdma, HarqKind::Cc, 1, p, p);
        let w = optimize_fdma_w(&sym, 10_000, 3);
        assert!((w - 0.5).abs() <= 0.0101, "{w}");

        let mut lone = cfg(Scheme::Fdma, HarqKind::Cc, 2, 2.0);
        lone.profiles[1].rate = 0.0;
        assert_eq!(optimize_fdma_w(&lone, 10_000, 3), 0.99);

        assert_eq!(optimize_fdma_w(&sym, 10_000, 3), w);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Scheme::Fdma, HarqKind::Cc, 2, 1.0);
        assert!(c.validate().is_ok());
        c.fdma_w1 = 1.0;
        assert!(matches!(c.validate(), Err(Error::Config { field: "fdma_w1", .. })));
        let mut c = cfg(Scheme::Noma, HarqKind::Cc, 2, 1.0);
        c.noma_alpha = 0.5;
        assert!(c.validate().is_err());
        let mut c = cfg(Scheme::Rsma, HarqKind::Cc, 2, 1.0);
        c.rsma = RsmaOptions {
            alpha: AlphaPolicy::Pinned(0.5),
            splitting: false,
        };
        assert!(c.validate().is_err());
        assert_eq!(cfg(Scheme::Noma, HarqKind::Ir, 1, 1.0).noma_alpha, 1.0);
    }
}
