//! Binary hypothesis classes over observations and their training oracles.
//!
//! An oracle only has to honour one contract: when some member of the class
//! outputs 0 on every element of `zeros` and 1 on every element of `ones`, it
//! must return such a member. Otherwise it may return anything, so callers
//! always re-check with [`perfectly_separates`].

use std::fmt::Debug;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Result, SteelError};
use crate::obs::{words_for, ObsRef};

pub trait Classify {
    fn classify(&self, x: ObsRef<'_>) -> bool;
}

pub trait TrainingOracle {
    type Classifier: Classify + Clone + Debug + PartialEq + Serialize + DeserializeOwned;

    /// Number of members in the class, |F|.
    fn class_size(&self) -> usize;

    /// Both sides may be walked more than once, hence the `Clone` bound.
    fn train<'a, Z, O>(&self, zeros: Z, ones: O) -> Result<Self::Classifier>
    where
        Z: IntoIterator<Item = ObsRef<'a>> + Clone,
        O: IntoIterator<Item = ObsRef<'a>> + Clone;
}

/// True iff `f` is 0 on all of `zeros` and 1 on all of `ones`.
pub fn perfectly_separates<'a, C, Z, O>(f: &C, zeros: Z, ones: O) -> bool
where
    C: Classify + ?Sized,
    Z: IntoIterator<Item = ObsRef<'a>>,
    O: IntoIterator<Item = ObsRef<'a>>,
{
    zeros.into_iter().all(|x| !f.classify(x)) && ones.into_iter().all(|x| f.classify(x))
}

/// `x -> x[i]` for a fixed coordinate `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoordinateClassifier(pub usize);

impl Classify for CoordinateClassifier {
    #[inline]
    fn classify(&self, x: ObsRef<'_>) -> bool {
        x.get(self.0)
    }
}

/// The class of single-coordinate readouts of a `width`-bit observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateClass {
    width: usize,
}

impl CoordinateClass {
    pub fn new(width: usize) -> Self {
        assert!(width > 0, "coordinate class needs at least one coordinate");
        Self { width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Bit mask of every coordinate that is 0 on all `zeros` and 1 on all `ones`.
    pub fn separator_mask<'a, Z, O>(&self, zeros: Z, ones: O) -> Result<Vec<u64>>
    where
        Z: IntoIterator<Item = ObsRef<'a>>,
        O: IntoIterator<Item = ObsRef<'a>>,
    {
        let n_words = words_for(self.width);
        let mut all_ones = vec![u64::MAX; n_words];
        let tail = self.width % 64;
        if tail != 0 {
            all_ones[n_words - 1] = (1u64 << tail) - 1;
        }
        let mut any_zero_side = vec![0u64; n_words];
        for x in ones {
            self.check(&x)?;
            for (acc, w) in all_ones.iter_mut().zip(x.words()) {
                *acc &= w;
            }
        }
        for x in zeros {
            self.check(&x)?;
            for (acc, w) in any_zero_side.iter_mut().zip(x.words()) {
                *acc |= w;
            }
        }
        Ok(all_ones
            .into_iter()
            .zip(any_zero_side)
            .map(|(a, z)| a & !z)
            .collect())
    }

    fn check(&self, x: &ObsRef<'_>) -> Result<()> {
        if x.width() == self.width {
            Ok(())
        } else {
            Err(SteelError::WidthMismatch {
                expected: self.width,
                found: x.width(),
            })
        }
    }
}

impl TrainingOracle for CoordinateClass {
    type Classifier = CoordinateClassifier;

    fn class_size(&self) -> usize {
        self.width
    }

    /// Returns the lowest-index perfect separator, or coordinate 0 when none exists.
    fn train<'a, Z, O>(&self, zeros: Z, ones: O) -> Result<CoordinateClassifier>
    where
        Z: IntoIterator<Item = ObsRef<'a>> + Clone,
        O: IntoIterator<Item = ObsRef<'a>> + Clone,
    {
        let mask = self.separator_mask(zeros, ones)?;
        let first = mask
            .iter()
            .enumerate()
            .find(|(_, w)| **w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize);
        Ok(CoordinateClassifier(first.unwrap_or(0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::Observation;

    fn obs(width: usize, ones: &[usize]) -> Observation {
        Observation::from_ones(width, ones.iter().copied()).unwrap()
    }

    fn refs(v: &[Observation]) -> Vec<ObsRef<'_>> {
        v.iter().map(Observation::as_ref).collect()
    }

    #[test]
    fn finds_indicator_of_target_state() {
        // state s indicated by coordinate 7, others by 3 and 9, noise on 0 and 1
        let ones = vec![obs(12, &[7, 0]), obs(12, &[7, 1]), obs(12, &[7])];
        let zeros = vec![obs(12, &[3, 0]), obs(12, &[9, 1, 0])];
        let c = CoordinateClass::new(12);
        let f = c.train(refs(&zeros), refs(&ones)).unwrap();
        assert_eq!(f, CoordinateClassifier(7));
        assert!(perfectly_separates(&f, refs(&zeros), refs(&ones)));
    }

    #[test]
    fn shared_observation_has_no_separator() {
        let x = obs(8, &[2, 5]);
        let zeros = vec![x.clone(), obs(8, &[1])];
        let ones = vec![x, obs(8, &[2])];
        let c = CoordinateClass::new(8);
        let f = c.train(refs(&zeros), refs(&ones)).unwrap();
        assert!(!perfectly_separates(&f, refs(&zeros), refs(&ones)));
    }

    #[test]
    fn empty_zeros_picks_lowest_common_one() {
        let ones = vec![obs(70, &[4, 66, 69]), obs(70, &[66, 69, 1])];
        let c = CoordinateClass::new(70);
        // brute force over coordinates
        let expected = (0..70).find(|&i| ones.iter().all(|x| x.get(i))).unwrap();
        assert_eq!(expected, 66);
        assert_eq!(c.train([], refs(&ones)).unwrap(), CoordinateClassifier(66));
    }

    #[test]
    fn vacuous_separation() {
        assert!(perfectly_separates(&CoordinateClassifier(0), [], []));
        let ones = vec![obs(4, &[1])];
        assert!(!perfectly_separates(
            &CoordinateClassifier(0),
            [],
            refs(&ones)
        ));
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let c = CoordinateClass::new(8);
        let ones = vec![obs(9, &[1])];
        assert_eq!(
            c.train([], refs(&ones)),
            Err(SteelError::WidthMismatch {
                expected: 8,
                found: 9
            })
        );
    }

    #[test]
    fn tail_bits_never_selected() {
        // every D1 element is all-ones within width 5; padding bits must not count
        let ones = vec![obs(5, &[0, 1, 2, 3, 4])];
        let zeros = vec![obs(5, &[0, 1, 2, 3, 4])];
        let c = CoordinateClass::new(5);
        assert!(c
            .separator_mask(refs(&zeros), refs(&ones))
            .unwrap()
            .iter()
            .all(|w| *w == 0));
    }
}
