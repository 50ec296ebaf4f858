//! Banks of independent two-state noise chains.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SteelError};
use crate::mixing::TwoStateChain;

/// Flip probabilities of one binary noise coordinate: `up` is P(0 -> 1),
/// `down` is P(1 -> 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipRates {
    pub up: f64,
    pub down: f64,
}

impl FlipRates {
    pub fn chain(&self) -> Result<TwoStateChain> {
        TwoStateChain::new(self.up, self.down)
    }

    pub fn stationary_one(&self) -> f64 {
        self.up / (self.up + self.down)
    }
}

/// A bank of independent two-state chains, each stored as one bit of a
/// packed word vector at a caller-chosen coordinate.
///
/// Each step draws one 32-bit uniform per chain and flips the chain when the
/// draw falls under its rate for the current value.
#[derive(Clone, Debug)]
pub struct NoiseBank {
    rates: Vec<FlipRates>,
    /// `thresholds[i] = [up, down]` scaled to 2^32.
    thresholds: Vec<[u64; 2]>,
    coords: Vec<usize>,
    words: Vec<u64>,
    draws: Vec<u32>,
}

const SCALE: f64 = 4_294_967_296.0;

impl NoiseBank {
    /// Chain `i` lives at coordinate `coords[i]` of a `width`-bit vector.
    pub fn new(rates: Vec<FlipRates>, coords: Vec<usize>, width: usize) -> Result<Self> {
        if rates.len() != coords.len() {
            return Err(SteelError::InvalidEnvironment(format!(
                "{} noise rates for {} coordinates",
                rates.len(),
                coords.len()
            )));
        }
        for (i, r) in rates.iter().enumerate() {
            r.chain().map_err(|e| {
                SteelError::InvalidEnvironment(format!("noise coordinate {i}: {e}"))
            })?;
        }
        if let Some(&c) = coords.iter().find(|&&c| c >= width) {
            return Err(SteelError::InvalidEnvironment(format!(
                "noise coordinate {c} outside width {width}"
            )));
        }
        if coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SteelError::InvalidEnvironment(
                "noise coordinates must be strictly increasing".into(),
            ));
        }
        let thresholds = rates
            .iter()
            .map(|r| {
                [
                    (r.up * SCALE).round() as u64,
                    (r.down * SCALE).round() as u64,
                ]
            })
            .collect();
        let n = rates.len();
        Ok(Self {
            rates,
            thresholds,
            coords,
            words: vec![0; width.div_ceil(64)],
            draws: vec![0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[FlipRates] {
        &self.rates
    }

    /// Current value of chain `i`.
    pub fn bit(&self, i: usize) -> bool {
        let c = self.coords[i];
        self.words[c / 64] >> (c % 64) & 1 == 1
    }

    /// Packed chain values; every bit outside the chains' coordinates is zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Draws every chain independently from its stationary distribution and
    /// sets the matching bits of `words`.
    pub fn sample_stationary_into(&self, words: &mut [u64], rng: &mut dyn RngCore) {
        for (r, &c) in self.rates.iter().zip(&self.coords) {
            if rng.random::<f64>() < r.stationary_one() {
                words[c / 64] |= 1 << (c % 64);
            }
        }
    }

    pub fn reset_stationary(&mut self, rng: &mut dyn RngCore) {
        let mut words = vec![0; self.words.len()];
        self.sample_stationary_into(&mut words, rng);
        self.words = words;
    }

    pub fn step<R: RngCore>(&mut self, rng: &mut R) {
        rng.fill(self.draws.as_mut_slice());
        // coordinates are increasing, so flips of one word are gathered in a
        // register and applied once the scan moves past that word
        let mut word = 0;
        let mut flips = 0u64;
        for ((&c, th), &u) in self.coords.iter().zip(&self.thresholds).zip(&self.draws) {
            let (w, b) = (c / 64, c % 64);
            if w != word {
                self.words[word] ^= flips;
                flips = 0;
                word = w;
            }
            let bit = (self.words[w] >> b) & 1;
            flips |= (((u as u64) < th[bit as usize]) as u64) << b;
        }
        if let Some(last) = self.words.get_mut(word) {
            *last ^= flips;
        }
    }
}
