//! Fixed-width bit-vector observations and flat storage for many of them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteelError};

pub(crate) fn words_for(width: usize) -> usize {
    width.div_ceil(64)
}

/// An owned observation. Bits past `width` are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    width: usize,
    words: Vec<u64>,
}

impl Observation {
    pub fn zeros(width: usize) -> Self {
        Self {
            width,
            words: vec![0; words_for(width)],
        }
    }

    /// Builds an observation with exactly the listed coordinates set.
    pub fn from_ones<I: IntoIterator<Item = usize>>(width: usize, ones: I) -> Result<Self> {
        let mut obs = Self::zeros(width);
        for i in ones {
            if i >= width {
                return Err(SteelError::InvalidParameter(format!(
                    "coordinate {i} outside observation width {width}"
                )));
            }
            obs.set(i, true);
        }
        Ok(obs)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.as_ref().get(i)
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.width);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    /// Raw words; bits past `width` must stay zero.
    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    #[inline]
    pub fn as_ref(&self) -> ObsRef<'_> {
        ObsRef {
            width: self.width,
            words: &self.words,
        }
    }
}

impl fmt::Debug for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.as_ref().fmt(f)
    }
}

/// A borrowed observation, either from an environment or from an [`ObsArena`].
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct ObsRef<'a> {
    width: usize,
    words: &'a [u64],
}

impl<'a> ObsRef<'a> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn words(&self) -> &'a [u64] {
        self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        i < self.width && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of the set coordinates, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + 'a {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn to_owned(&self) -> Observation {
        Observation {
            width: self.width,
            words: self.words.to_vec(),
        }
    }
}

impl fmt::Debug for ObsRef<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observation")
            .field("width", &self.width)
            .field("ones", &self.ones().collect::<Vec<_>>())
            .finish()
    }
}

/// Contiguous storage for equal-width observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsArena {
    width: usize,
    stride: usize,
    words: Vec<u64>,
}

impl ObsArena {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            stride: words_for(width),
            words: Vec::new(),
        }
    }

    pub fn with_capacity(width: usize, capacity: usize) -> Self {
        let stride = words_for(width);
        Self {
            width,
            stride,
            words: Vec::with_capacity(stride * capacity),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.words.len().checked_div(self.stride).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn push(&mut self, obs: ObsRef<'_>) -> Result<()> {
        if obs.width != self.width {
            return Err(SteelError::WidthMismatch {
                expected: self.width,
                found: obs.width,
            });
        }
        self.words.extend_from_slice(obs.words);
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize) -> ObsRef<'_> {
        ObsRef {
            width: self.width,
            words: &self.words[i * self.stride..(i + 1) * self.stride],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = ObsRef<'_>> + Clone + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}
