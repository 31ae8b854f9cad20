//! The N-adic branch system on `[0, 1)`: `sigma(x) = N x mod 1`, its inverse
//! branches `tau_j(x) = (x + j) / N`, digit words, and the embedding of the
//! integers into the path space.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};
use crate::numeric::frac;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PathSystem {
    scale: usize,
}

/// A finite word `(i_1, ..., i_n)`; `i_1` is the least significant digit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DigitWord(Vec<usize>);

impl DigitWord {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds a word, checking every digit against the scale.
    pub fn new(digits: Vec<usize>, scale: usize) -> Result<Self> {
        if let Some(&d) = digits.iter().find(|&&d| d >= scale) {
            return Err(WaveError::DigitOutOfRange { digit: d, scale });
        }
        Ok(Self(digits))
    }

    pub fn digits(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, digit: usize) {
        self.0.push(digit);
    }

    pub fn extended(&self, digit: usize) -> Self {
        let mut d = self.0.clone();
        d.push(digit);
        Self(d)
    }
}

impl From<DigitWord> for Vec<usize> {
    fn from(w: DigitWord) -> Self {
        w.0
    }
}

impl PathSystem {
    pub fn new(scale: usize) -> Result<Self> {
        if scale < 2 {
            return Err(WaveError::InvalidArgument(format!(
                "scale N must be >= 2, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    pub fn dyadic() -> Self {
        Self { scale: 2 }
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn sigma(&self, x: f64) -> f64 {
        frac(self.scale as f64 * frac(x))
    }

    pub fn tau(&self, j: usize, x: f64) -> Result<f64> {
        self.check_digit(j)?;
        Ok(self.tau_unchecked(j, x))
    }

    #[inline]
    pub(crate) fn tau_unchecked(&self, j: usize, x: f64) -> f64 {
        (x + j as f64) / self.scale as f64
    }

    pub fn check_digit(&self, j: usize) -> Result<()> {
        if j >= self.scale {
            return Err(WaveError::DigitOutOfRange {
                digit: j,
                scale: self.scale,
            });
        }
        Ok(())
    }

    pub fn check_word(&self, word: &DigitWord) -> Result<()> {
        word.digits().iter().try_for_each(|&d| self.check_digit(d))
    }

    /// Base-N expansion with the minimal number of digits; `0` gives the
    /// empty word.
    pub fn digits_of(&self, k: u64) -> DigitWord {
        let n = self.scale as u64;
        let mut digits = Vec::new();
        let mut r = k;
        while r > 0 {
            digits.push((r % n) as usize);
            r /= n;
        }
        DigitWord(digits)
    }

    /// Inverse of [`digits_of`](Self::digits_of); `None` on overflow.
    pub fn int_of(&self, word: &DigitWord) -> Option<u64> {
        let n = self.scale as u64;
        word.digits().iter().rev().try_fold(0u64, |acc, &d| {
            acc.checked_mul(n)?.checked_add(d as u64)
        })
    }

    /// Least `n >= 0` with `-N^n <= k` for negative `k`.
    pub fn least_negative_exponent(&self, k: i64) -> u32 {
        debug_assert!(k < 0);
        let mut n = 0u32;
        let mut p: i128 = 1;
        while -p > k as i128 {
            p *= self.scale as i128;
            n += 1;
        }
        n
    }

    /// The word of `k` in the path space. Nonnegative `k` uses its expansion;
    /// negative `k` uses the expansion of `N^{n+1} + k` for the least
    /// admissible `n`, so the word ends in the digit `N - 1`.
    pub fn omega_of_int(&self, k: i64) -> DigitWord {
        if k >= 0 {
            self.digits_of(k as u64)
        } else {
            self.omega_of_negative(k, self.least_negative_exponent(k))
                .expect("least exponent is admissible")
        }
    }

    /// Negative-integer word for an explicit admissible exponent `n`.
    pub fn omega_of_negative(&self, k: i64, n: u32) -> Result<DigitWord> {
        if k >= 0 {
            return Err(WaveError::InvalidArgument(format!(
                "expected a negative integer, got {k}"
            )));
        }
        let pn = (self.scale as i128)
            .checked_pow(n)
            .filter(|p| *p <= i64::MAX as i128 / self.scale as i128)
            .ok_or_else(|| WaveError::InvalidArgument(format!("exponent {n} overflows")))?;
        if -pn > k as i128 {
            return Err(WaveError::InvalidArgument(format!(
                "exponent {n} is not admissible for k={k} (need -N^n <= k)"
            )));
        }
        let shifted = pn * self.scale as i128 + k as i128;
        // shifted lies in [(N-1) N^n, N^{n+1}), so the word has n+1 digits
        Ok(self.digits_of(shifted as u64))
    }

    /// `tau_{i_n} o ... o tau_{i_1}(x)`, applied in word order.
    pub fn tau_compose(&self, word: &DigitWord, x: f64) -> Result<f64> {
        self.check_word(word)?;
        Ok(word
            .digits()
            .iter()
            .fold(x, |y, &d| self.tau_unchecked(d, y)))
    }

    /// The N-adic interval `[sum i_s N^{-s}, same + N^{-n})` addressed by a
    /// word read most-significant-first.
    pub fn word_to_interval(&self, word: &DigitWord) -> Result<(f64, f64)> {
        if word.is_empty() {
            return Err(WaveError::EmptyWord);
        }
        self.check_word(word)?;
        let inv = 1.0 / self.scale as f64;
        let mut left = 0.0;
        let mut width = 1.0;
        for &d in word.digits() {
            width *= inv;
            left += d as f64 * width;
        }
        Ok((left, left + width))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sys(n: usize) -> PathSystem {
        PathSystem::new(n).unwrap()
    }

    fn w(d: &[usize]) -> DigitWord {
        DigitWord(d.to_vec())
    }

    #[test]
    fn sigma_and_tau_examples() {
        assert_abs_diff_eq!(sys(2).sigma(0.3), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(sys(2).sigma(0.75), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sys(3).sigma(0.9), 0.7, epsilon = 1e-15);
        assert_eq!(sys(2).tau(1, 0.0).unwrap(), 0.5);
        assert_eq!(sys(2).tau(0, 0.5).unwrap(), 0.25);
        assert_abs_diff_eq!(sys(4).tau(3, 0.2).unwrap(), 0.8, epsilon = 1e-15);
        assert!(matches!(
            sys(2).tau(2, 0.1),
            Err(WaveError::DigitOutOfRange { digit: 2, scale: 2 })
        ));
    }

    #[test]
    fn digit_expansion_examples() {
        assert_eq!(sys(2).digits_of(6), w(&[0, 1, 1]));
        assert!(sys(2).digits_of(0).is_empty());
        assert_eq!(sys(3).digits_of(5), w(&[2, 1]));
    }

    #[test]
    fn integer_embedding_examples() {
        assert_eq!(sys(2).omega_of_int(-1), w(&[1]));
        assert_eq!(sys(2).omega_of_int(-3), w(&[1, 0, 1]));
        assert_eq!(sys(2).omega_of_int(4), w(&[0, 0, 1]));
        // -4 needs n=2: 8-4 = 4 = (0,0,1); the finite word alone does not
        // separate it from 4, the (N-1)-tail of the path does
        assert_eq!(sys(2).omega_of_int(-4), w(&[0, 0, 1]));
        // a larger admissible n lengthens the word
        assert_eq!(sys(2).omega_of_negative(-1, 2).unwrap(), w(&[1, 1, 1]));
        assert!(sys(2).omega_of_negative(-3, 1).is_err());
        for k in -200i64..0 {
            let word = sys(3).omega_of_int(k);
            assert_eq!(*word.digits().last().unwrap(), 2, "k={k}");
        }
    }

    #[test]
    fn tau_compose_examples() {
        assert_eq!(sys(2).tau_compose(&w(&[1]), 0.0).unwrap(), 0.5);
        assert_eq!(sys(2).tau_compose(&w(&[1, 1]), 0.0).unwrap(), 0.75);
        assert_eq!(sys(2).tau_compose(&w(&[0, 1]), 0.5).unwrap(), 0.625);
    }

    #[test]
    fn interval_examples() {
        assert_eq!(sys(2).word_to_interval(&w(&[1])).unwrap(), (0.5, 1.0));
        assert_eq!(sys(2).word_to_interval(&w(&[0, 1])).unwrap(), (0.25, 0.5));
        let (a, b) = sys(3).word_to_interval(&w(&[2, 0])).unwrap();
        assert_abs_diff_eq!(a, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 2.0 / 3.0 + 1.0 / 9.0, epsilon = 1e-15);
        assert!(matches!(
            sys(2).word_to_interval(&DigitWord::empty()),
            Err(WaveError::EmptyWord)
        ));
    }

    #[test]
    fn round_trip_small_integers() {
        for n in [2, 3, 4] {
            let s = sys(n);
            for k in 0..10_000u64 {
                assert_eq!(s.int_of(&s.digits_of(k)), Some(k));
            }
        }
    }

    #[test]
    fn word_serializes_as_array() {
        assert_eq!(serde_json::to_string(&w(&[0, 1, 1])).unwrap(), "[0,1,1]");
    }

    fn word_strategy() -> impl Strategy<Value = (usize, Vec<usize>)> {
        (2usize..=5).prop_flat_map(|n| (Just(n), prop::collection::vec(0..n, 0..12)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn sigma_inverts_tau(n in 2usize..=6, x in 0.0f64..1.0, j_seed in 0usize..64) {
            let s = sys(n);
            let j = j_seed % n;
            let y = s.sigma(s.tau(j, x).unwrap());
            // y may wrap to 0 when x is within an ulp of 1
            let d = (y - x).abs().min(1.0 - (y - x).abs());
            prop_assert!(d < 1e-14);
        }

        #[test]
        fn tau_compose_matches_closed_form((n, digits) in word_strategy(), x in 0.0f64..1.0) {
            let s = sys(n);
            let word = DigitWord(digits);
            let k = s.int_of(&word).unwrap() as f64;
            let direct = (x + k) / (n as f64).powi(word.len() as i32);
            prop_assert!((s.tau_compose(&word, x).unwrap() - direct).abs() < 1e-14);
        }

        #[test]
        fn intervals_nest_and_separate((n, digits) in word_strategy(), j_seed in 0usize..64, other in prop::collection::vec(0usize..64, 1..12)) {
            prop_assume!(!digits.is_empty());
            let s = sys(n);
            let word = DigitWord(digits.clone());
            let (a, b) = s.word_to_interval(&word).unwrap();
            let (c, d) = s.word_to_interval(&word.extended(j_seed % n)).unwrap();
            prop_assert!(a <= c + 1e-15 && d <= b + 1e-15);

            let alt: Vec<usize> = other.iter().cycle().take(digits.len()).map(|v| v % n).collect();
            let alt = DigitWord(alt);
            let (e, f) = s.word_to_interval(&alt).unwrap();
            let overlap = b.min(f) - a.max(e);
            if alt == word {
                prop_assert!(overlap > 0.0);
            } else {
                prop_assert!(overlap <= 1e-15);
            }
        }
    }
}
