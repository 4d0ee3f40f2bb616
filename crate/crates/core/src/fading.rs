//! Rayleigh block fading for the two-user uplink.
//!
//! Channels only ever enter the model through their power gains `|h|^2`,
//! which are exponential with mean `Γ_k` (linear). Noise power is fixed at 1.
//!
//! Randomness is counter based: a [`RngStream`] is a ChaCha8 keystream
//! selected by `(seed, stream_id)`, and [`ChannelSource`] positions that
//! keystream by round index, so the gains seen in round `k` of trial `t` do
//! not depend on how many rounds other schemes used or which worker ran them.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Converts a decibel value to a linear power ratio.
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Average channel gain and target rate of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub avg_gain_db: f64,
    /// Target rate in bit/s/Hz.
    pub rate: f64,
}

impl UserProfile {
    pub fn new(avg_gain_db: f64, rate: f64) -> Self {
        debug_assert!(avg_gain_db.is_finite());
        debug_assert!(rate >= 0.0);
        Self { avg_gain_db, rate }
    }

    /// Mean of the exponential power gain, linear scale.
    pub fn mean_gain(&self) -> f64 {
        db_to_linear(self.avg_gain_db)
    }
}

/// Instantaneous power gains of both users in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDraw {
    pub g1: f64,
    pub g2: f64,
}

impl ChannelDraw {
    pub fn new(g1: f64, g2: f64) -> Self {
        debug_assert!(g1 >= 0.0 && g2 >= 0.0);
        Self { g1, g2 }
    }

    pub fn gain(&self, user: usize) -> f64 {
        match user {
            1 => self.g1,
            2 => self.g2,
            _ => panic!("user index must be 1 or 2, got {user}"),
        }
    }
}

/// A reproducible random stream keyed by `(seed, stream_id)`.
///
/// Every uniform consumes exactly one 64-bit word, so positions are
/// predictable and [`RngStream::seek_word`] can jump to any point.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Moves the stream to its `index`-th 64-bit word.
    pub fn seek_word(&mut self, index: u64) {
        self.rng.set_word_pos(u128::from(index) * 2);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `(0, 1]`, never zero so that `ln` is always finite.
    pub fn next_open_unit(&mut self) -> f64 {
        let bits = self.next_u64() >> 11;
        1.0 - bits as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential variate with the given mean, by inversion.
    pub fn next_exp(&mut self, mean: f64) -> f64 {
        -mean * self.next_open_unit().ln()
    }
}

/// Draws one instantaneous power gain `|h_k|^2 ~ Exp(mean Γ_k)`.
pub fn sample_gain(profile: &UserProfile, rng: &mut RngStream) -> f64 {
    rng.next_exp(profile.mean_gain())
}

/// Draws independent gains for both users.
pub fn draw_round(p1: &UserProfile, p2: &UserProfile, rng: &mut RngStream) -> ChannelDraw {
    let g1 = sample_gain(p1, rng);
    let g2 = sample_gain(p2, rng);
    ChannelDraw { g1, g2 }
}

/// Round-indexed channel gains for one trial.
///
/// Round `k` always reads words `2k` and `2k + 1` of the trial's stream.
#[derive(Debug, Clone)]
pub struct ChannelSource {
    p1: UserProfile,
    p2: UserProfile,
    stream: RngStream,
}

impl ChannelSource {
    pub fn new(p1: UserProfile, p2: UserProfile, seed: u64, trial: u64) -> Self {
        Self {
            p1,
            p2,
            stream: RngStream::new(seed, trial),
        }
    }

    pub fn round(&mut self, round: u64) -> ChannelDraw {
        self.stream.seek_word(2 * round);
        draw_round(&self.p1, &self.p2, &mut self.stream)
    }

    pub fn profiles(&self) -> (&UserProfile, &UserProfile) {
        (&self.p1, &self.p2)
    }
}
