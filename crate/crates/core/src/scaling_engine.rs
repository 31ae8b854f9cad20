//! Scaling functions and wavelets: the Fourier infinite product, the
//! time-domain cascade, norm and autocorrelation identities through the
//! lattice sum `h`, and the slanted-matrix analysis of sampled signals.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WaveError};
use crate::filter_bank::{FilterKind, FilterSpec};
use crate::ifs_core::PathSystem;
use crate::numeric::{pairwise_sum, pairwise_sum_complex};
use crate::path_measure::{mass_z, reduction_steps, TruncationPolicy};

/// Step function with cells `[t_min + i*step, t_min + (i+1)*step)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledFunction {
    pub t_min: f64,
    pub step: f64,
    pub samples: Vec<Complex64>,
}

impl SampledFunction {
    pub fn new(t_min: f64, step: f64, samples: Vec<Complex64>) -> Result<Self> {
        if !(step > 0.0) || !t_min.is_finite() {
            return Err(WaveError::InvalidArgument(
                "step must be positive and t_min finite".into(),
            ));
        }
        Ok(Self {
            t_min,
            step,
            samples,
        })
    }

    /// Samples `f` at the left endpoints of `[t_min, t_max)` with step `N^{-L}`.
    pub fn from_fn(
        t_min: f64,
        t_max: f64,
        scale: usize,
        level: usize,
        f: impl Fn(f64) -> Complex64,
    ) -> Result<Self> {
        let step = (scale as f64).powi(-(level as i32));
        let len = ((t_max - t_min) / step).round() as usize;
        let samples = (0..len).map(|i| f(t_min + i as f64 * step)).collect();
        Self::new(t_min, step, samples)
    }

    pub fn t_max(&self) -> f64 {
        self.t_min + self.samples.len() as f64 * self.step
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.step
    }

    /// Value of the cell containing `t`; zero outside the support.
    pub fn value_at(&self, t: f64) -> Complex64 {
        let r = ((t - self.t_min) / self.step).floor();
        if r < 0.0 || r >= self.samples.len() as f64 {
            Complex64::new(0.0, 0.0)
        } else {
            self.samples[r as usize]
        }
    }

    pub fn integral(&self) -> Complex64 {
        pairwise_sum_complex(&self.samples) * self.step
    }

    pub fn norm_sq(&self) -> f64 {
        let sq: Vec<f64> = self.samples.iter().map(|v| v.norm_sqr()).collect();
        pairwise_sum(&sq) * self.step
    }

    /// `int_{-inf}^{t} f`, exact for the step function.
    fn cumulative(&self, prefix: &[Complex64], t: f64) -> Complex64 {
        let r = (t - self.t_min) / self.step;
        if r <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let len = self.samples.len();
        if r >= len as f64 {
            return prefix[len];
        }
        let i = r.floor() as usize;
        prefix[i] + self.samples[i] * ((r - i as f64) * self.step)
    }

    fn prefix(&self) -> Vec<Complex64> {
        let mut p = Vec::with_capacity(self.samples.len() + 1);
        let mut acc = Complex64::new(0.0, 0.0);
        p.push(acc);
        for &v in &self.samples {
            acc += v * self.step;
            p.push(acc);
        }
        p
    }

    /// `int conj(f(t)) f(t - k) dt` for integer lags aligned with the grid.
    pub fn lag_inner(&self, k: i64) -> Result<Complex64> {
        let cells = k as f64 / self.step;
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(WaveError::InvalidArgument(
                "lag must be a multiple of the step".into(),
            ));
        }
        let shift = cells.round() as i64;
        let len = self.samples.len() as i64;
        let terms: Vec<Complex64> = (0..len)
            .filter(|&i| (0..len).contains(&(i - shift)))
            .map(|i| self.samples[i as usize].conj() * self.samples[(i - shift) as usize])
            .collect();
        Ok(pairwise_sum_complex(&terms) * self.step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiHat {
    pub value: Complex64,
    pub converged: bool,
    pub depth_used: usize,
}

fn require_coefficients(spec: &FilterSpec) -> Result<()> {
    if spec.kind() != FilterKind::Coefficients {
        return Err(WaveError::FilterKind {
            expected: FilterKind::Coefficients.name(),
            found: spec.kind().name(),
        });
    }
    Ok(())
}

/// First moment `sum_k k a_k`, so that `m(y) = 1 - i 2 pi mu y + O(y^2)`
/// for a low-pass filter.
fn first_moment(spec: &FilterSpec) -> Result<Complex64> {
    Ok(spec
        .coefficients()?
        .iter()
        .map(|&(k, a)| a * k as f64)
        .sum())
}

/// `phi_hat(x) = prod_{n>=1} m(x / N^n)`.
///
/// Stops under the same rule as `atom_f` (so `|phi_hat|^2` uses exactly the
/// factors of `F`). The remaining factors are replaced by their first-order
/// phase `exp(-i 2 pi mu y / (N - 1))`, `y` the last argument; they differ
/// from 1 in modulus only at second order.
pub fn phi_hat(spec: &FilterSpec, sys: &PathSystem, x: f64, policy: &TruncationPolicy) -> Result<PhiHat> {
    require_coefficients(spec)?;
    let mu = first_moment(spec)?;
    let n = sys.scale() as f64;
    let pre = reduction_steps(x, sys.scale());
    let max = pre + policy.product_depth;
    let mut y = x;
    let mut p = Complex64::new(1.0, 0.0);
    let mut stall = 0;
    for k in 1..=max {
        y /= n;
        let m = spec.eval_m(y)?;
        p *= m;
        if p.norm_sqr() < crate::path_measure::UNDERFLOW_FLOOR {
            return Ok(PhiHat {
                value: Complex64::new(0.0, 0.0),
                converged: true,
                depth_used: k,
            });
        }
        if k > pre && (1.0 - m.norm_sqr()).abs() < policy.convergence_tol {
            stall += 1;
            if stall >= policy.stall_window {
                let tail = (Complex64::new(0.0, -2.0 * PI) * mu * (y / (n - 1.0))).exp();
                return Ok(PhiHat {
                    value: p * tail,
                    converged: true,
                    depth_used: k,
                });
            }
        } else {
            stall = 0;
        }
    }
    Ok(PhiHat {
        value: p,
        converged: false,
        depth_used: max,
    })
}

/// The plain truncated product `prod_{n=1..depth} m(x / N^n)`, multiplied
/// from the innermost factor outward so that
/// `phi_hat_partial(x, D) == m(x/N) * phi_hat_partial(x/N, D-1)` holds in
/// floating point as well.
pub fn phi_hat_partial(spec: &FilterSpec, sys: &PathSystem, x: f64, depth: usize) -> Result<Complex64> {
    require_coefficients(spec)?;
    let n = sys.scale() as f64;
    let mut y = x;
    let mut factors = Vec::with_capacity(depth);
    for _ in 0..depth {
        y /= n;
        factors.push(spec.eval_m(y)?);
    }
    Ok(factors
        .iter()
        .rev()
        .fold(Complex64::new(1.0, 0.0), |p, &m| m * p))
}

/// Integer interval containing the support of the scaling function and of
/// every cascade iterate started from `chi_[0,1)`.
fn cascade_support(spec: &FilterSpec) -> Result<(i64, i64)> {
    let (kmin, kmax) = spec.support()?;
    let d = spec.scale() as f64 - 1.0;
    let lo = (kmin as f64 / d).min(0.0).floor() as i64;
    let hi = (kmax as f64 / d).max(1.0).ceil() as i64;
    Ok((lo, hi))
}

/// `phi(t) -> N sum_k a_k phi(N t - k)` on the grid of `phi`. The grid must
/// start at an integer and have step `N^{-L}`; `N t - k` then lands on grid
/// points, so the update is exact at the samples.
pub fn cascade_step(spec: &FilterSpec, phi: &SampledFunction) -> Result<SampledFunction> {
    require_coefficients(spec)?;
    let n = spec.scale() as i64;
    let per_unit = (1.0 / phi.step).round() as i64;
    let lo = phi.t_min.round() as i64;
    let len = phi.samples.len() as i64;
    let coeffs = spec.coefficients()?;
    let samples = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(k, a) in &coeffs {
                // N t_i - k - lo measured in cells
                let src = n * i + ((n - 1) * lo - k) * per_unit;
                if (0..len).contains(&src) {
                    acc += a * phi.samples[src as usize];
                }
            }
            acc * n as f64
        })
        .collect();
    SampledFunction::new(phi.t_min, phi.step, samples)
}

/// `iters` cascade steps from `chi_[0,1)` sampled at step `N^{-L}`.
pub fn cascade(spec: &FilterSpec, sys: &PathSystem, iters: usize, level: usize) -> Result<SampledFunction> {
    require_coefficients(spec)?;
    let (lo, hi) = cascade_support(spec)?;
    let mut phi = SampledFunction::from_fn(lo as f64, hi as f64, sys.scale(), level, |t| {
        Complex64::new(if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 }, 0.0)
    })?;
    for _ in 0..iters {
        phi = cascade_step(spec, &phi)?;
    }
    Ok(phi)
}

/// `psi(t) = 2 sum_k b_k phi(2t - k)` with `b` from [`FilterSpec::high_pass`].
pub fn wavelet_psi(spec: &FilterSpec, sys: &PathSystem, phi: &SampledFunction) -> Result<SampledFunction> {
    if sys.scale() != 2 || spec.scale() != 2 {
        return Err(WaveError::UnsupportedScale(spec.scale().max(sys.scale())));
    }
    let b = spec.high_pass()?.coefficients()?;
    let (bmin, bmax) = (b[0].0, b[b.len() - 1].0);
    let t0 = ((phi.t_min + bmin as f64) / 2.0).floor();
    let t1 = ((phi.t_max() + bmax as f64) / 2.0).ceil();
    let len = ((t1 - t0) / phi.step).round() as usize;
    let samples = (0..len)
        .map(|i| {
            let t = t0 + i as f64 * phi.step;
            b.iter()
                .map(|&(k, bk)| bk * phi.value_at(2.0 * t - k as f64 + 0.5 * phi.step))
                .sum::<Complex64>()
                * 2.0
        })
        .collect();
    SampledFunction::new(t0, phi.step, samples)
}

/// `h` at the midpoints `(m + 1/2) / N^L`.
pub fn h_midpoints(spec: &FilterSpec, sys: &PathSystem, policy: &TruncationPolicy, level: usize) -> Result<Vec<f64>> {
    let len = crate::numeric::checked_pow(sys.scale(), level)
        .filter(|&c| c <= 1 << 16)
        .ok_or(WaveError::DepthTooLarge { depth: level, max: 16 })? as usize;
    Ok((0..len)
        .into_par_iter()
        .map(|m| mass_z(spec, sys, (m as f64 + 0.5) / len as f64, policy).value)
        .collect())
}

/// `||phi||^2 = int_0^1 h`, by the midpoint rule on the level-`L` grid.
pub fn norm_phi_sq(spec: &FilterSpec, sys: &PathSystem, policy: &TruncationPolicy, level: usize) -> Result<f64> {
    let h = h_midpoints(spec, sys, policy, level)?;
    Ok(pairwise_sum(&h) / h.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Autocorrelation {
    pub lag: i64,
    /// Real part of `int_0^1 h(x) e^{i 2 pi k x} dx`.
    pub value: f64,
    /// Imaginary part, which vanishes for real scaling functions.
    pub imag_residual: f64,
}

/// Lag-`k` autocorrelation of `phi` as the `k`-th Fourier coefficient of `h`.
pub fn autocorrelation(
    spec: &FilterSpec,
    sys: &PathSystem,
    k: i64,
    policy: &TruncationPolicy,
    level: usize,
) -> Result<Autocorrelation> {
    let h = h_midpoints(spec, sys, policy, level)?;
    Ok(autocorrelation_from_h(&h, k))
}

pub fn autocorrelation_from_h(h: &[f64], k: i64) -> Autocorrelation {
    let len = h.len() as f64;
    let terms: Vec<Complex64> = h
        .iter()
        .enumerate()
        .map(|(m, &v)| Complex64::from_polar(v, 2.0 * PI * k as f64 * (m as f64 + 0.5) / len))
        .collect();
    let c = pairwise_sum_complex(&terms) / len;
    Autocorrelation {
        lag: k,
        value: c.re,
        imag_residual: c.im,
    }
}

/// Sum of `|<psi_{n,k}, f>|^2` over `|n| <= max_n`, `|k| <= max_k`, divided
/// by `||f||^2`, with `psi_{n,k}(t) = 2^{n/2} psi(2^n t - k)`. Inner products
/// are exact for step functions.
pub fn frame_energy_ratio(psi: &SampledFunction, f: &SampledFunction, max_n: i32, max_k: i64) -> f64 {
    let prefix = f.prefix();
    let pairs: Vec<(i32, i64)> = (-max_n..=max_n)
        .flat_map(|n| (-max_k..=max_k).map(move |k| (n, k)))
        .collect();
    let energies: Vec<f64> = pairs
        .par_iter()
        .map(|&(n, k)| {
            let dil = 2f64.powi(n);
            let amp = 2f64.powf(n as f64 / 2.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &v) in psi.samples.iter().enumerate() {
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                let a = (psi.time(j) + k as f64) / dil;
                let b = (psi.time(j) + psi.step + k as f64) / dil;
                if b <= f.t_min || a >= f.t_max() {
                    continue;
                }
                acc += v.conj() * (f.cumulative(&prefix, b) - f.cumulative(&prefix, a));
            }
            (acc * amp).norm_sqr()
        })
        .collect();
    pairwise_sum(&energies) / f.norm_sq()
}

/// Banded analysis operators with rows `y_n = (1/sqrt 2) sum_k P_{k-2n} x_k`,
/// `P = 2a`, and likewise `Q = 2b` for the detail band. Indices wrap
/// periodically.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlantedMatrices {
    /// `(l, P_l / sqrt 2)`.
    pub low: Vec<(i64, Complex64)>,
    /// `(l, Q_l / sqrt 2)`.
    pub high: Vec<(i64, Complex64)>,
}

impl SlantedMatrices {
    pub fn from_filter(spec: &FilterSpec) -> Result<Self> {
        if spec.scale() != 2 {
            return Err(WaveError::UnsupportedScale(spec.scale()));
        }
        let band = |c: Vec<(i64, Complex64)>| c.into_iter().map(|(k, v)| (k, v * SQRT_2)).collect();
        Ok(Self {
            low: band(spec.coefficients()?),
            high: band(spec.high_pass()?.coefficients()?),
        })
    }

    /// Nonzero entries `(column, value)` of row `n` for signals of length `len`.
    pub fn row(&self, band: &[(i64, Complex64)], n: usize, len: usize) -> Vec<(usize, Complex64)> {
        band.iter()
            .map(|&(l, v)| ((2 * n as i64 + l).rem_euclid(len as i64) as usize, v))
            .collect()
    }

    fn analyze(&self, band: &[(i64, Complex64)], x: &[Complex64]) -> Vec<Complex64> {
        (0..x.len() / 2)
            .map(|n| self.row(band, n, x.len()).iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn apply_f(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.analyze(&self.low, x)
    }

    pub fn apply_g(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.analyze(&self.high, x)
    }

    /// Adjoint of `x -> (F x, G x)`.
    pub fn synthesize(&self, smooth: &[Complex64], detail: &[Complex64]) -> Vec<Complex64> {
        let len = 2 * smooth.len();
        let mut x = vec![Complex64::new(0.0, 0.0); len];
        for n in 0..smooth.len() {
            for (c, v) in self.row(&self.low, n, len) {
                x[c] += v.conj() * smooth[n];
            }
            for (c, v) in self.row(&self.high, n, len) {
                x[c] += v.conj() * detail[n];
            }
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveletCoeffs {
    /// `[G s, G F s, ..., G F^{levels-1} s]`.
    pub details: Vec<Vec<Complex64>>,
    /// `F^{levels} s`.
    pub smooth: Vec<Complex64>,
}

impl WaveletCoeffs {
    pub fn energy(&self) -> f64 {
        let all: Vec<f64> = self
            .details
            .iter()
            .flatten()
            .chain(&self.smooth)
            .map(|v| v.norm_sqr())
            .collect();
        pairwise_sum(&all)
    }
}

pub fn wavelet_coeffs(spec: &FilterSpec, signal: &[Complex64], levels: usize) -> Result<WaveletCoeffs> {
    let mats = SlantedMatrices::from_filter(spec)?;
    let block = 1usize
        .checked_shl(levels as u32)
        .ok_or_else(|| WaveError::InvalidArgument("too many levels".into()))?;
    if signal.is_empty() || !signal.len().is_multiple_of(block) {
        return Err(WaveError::InvalidArgument(format!(
            "signal length {} must be a positive multiple of 2^{levels}",
            signal.len()
        )));
    }
    let mut smooth = signal.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        details.push(mats.apply_g(&smooth));
        smooth = mats.apply_f(&smooth);
    }
    Ok(WaveletCoeffs { details, smooth })
}

pub fn inverse_wavelet_coeffs(spec: &FilterSpec, coeffs: &WaveletCoeffs) -> Result<Vec<Complex64>> {
    let mats = SlantedMatrices::from_filter(spec)?;
    let mut x = coeffs.smooth.clone();
    for d in coeffs.details.iter().rev() {
        if d.len() != x.len() {
            return Err(WaveError::InvalidArgument("band lengths do not match".into()));
        }
        x = mats.synthesize(&x, d);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::path_measure::atom_f;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s() -> PathSystem {
        PathSystem::dyadic()
    }

    fn pol() -> TruncationPolicy {
        TruncationPolicy::default()
    }

    fn re(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn phi_hat_examples() {
        for spec in [gallery::haar(), gallery::d4(), gallery::stretched_haar()] {
            let v = phi_hat(&spec, &s(), 0.0, &pol()).unwrap();
            assert!((v.value - 1.0).norm() < 1e-15);
        }
        assert!(phi_hat(&gallery::haar(), &s(), 1.0, &pol()).unwrap().value.norm() < 1e-15);
        let half = phi_hat(&gallery::haar(), &s(), 0.5, &pol()).unwrap();
        assert_abs_diff_eq!(half.value.norm(), 2.0 / PI, epsilon = 1e-12);
        // Haar: phi_hat(x) = e^{-i pi x} sinc(x)
        let expect = Complex64::from_polar(2.0 / PI, -PI * 0.5);
        assert!((half.value - expect).norm() < 1e-11);
        assert!(matches!(
            phi_hat(&gallery::shannon(), &s(), 0.1, &pol()),
            Err(WaveError::FilterKind { .. })
        ));
    }

    #[test]
    fn cascade_examples() {
        let haar = gallery::haar();
        let phi = cascade(&haar, &s(), 7, 6).unwrap();
        for i in 0..phi.len() {
            let t = phi.time(i);
            let expect = if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 };
            assert_eq!(phi.samples[i], Complex64::new(expect, 0.0));
        }
        assert_eq!(cascade_step(&haar, &phi).unwrap(), phi);

        let d4 = cascade(&gallery::d4(), &s(), 10, 8).unwrap();
        assert_abs_diff_eq!(d4.norm_sq(), 1.0, epsilon = 1e-3);
        let next = cascade_step(&gallery::d4(), &cascade(&gallery::d4(), &s(), 12, 8).unwrap()).unwrap();
        let prev = cascade(&gallery::d4(), &s(), 12, 8).unwrap();
        let diff: f64 = next.samples.iter().zip(&prev.samples).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * prev.step;
        assert!(diff.sqrt() <= 1e-3, "L2 change {}", diff.sqrt());
    }

    #[test]
    fn stretched_haar_cascade_keeps_unit_norm() {
        // the iterates are 0/1 patterns of total length 1 spreading over
        // [0, 3); they converge to 1/3 chi_[0,3) only weakly
        let spec = gallery::stretched_haar();
        let phi = cascade(&spec, &s(), 10, 12).unwrap();
        assert_abs_diff_eq!(phi.norm_sq(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi.integral().re, 1.0, epsilon = 1e-12);
        for (a, b) in [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)] {
            let avg: f64 = (0..phi.len())
                .filter(|&i| (a..b).contains(&phi.time(i)))
                .map(|i| phi.samples[i].re)
                .sum::<f64>()
                * phi.step
                / (b - a);
            assert_abs_diff_eq!(avg, 1.0 / 3.0, epsilon = 0.02);
        }
        // the exact fixed point satisfies phi(t) = phi(2t) + phi(2t - 3)
        let exact = SampledFunction::from_fn(0.0, 3.0, 2, 6, |t| Complex64::new(if (0.0..3.0).contains(&t) { 1.0 / 3.0 } else { 0.0 }, 0.0)).unwrap();
        assert_eq!(cascade_step(&spec, &exact).unwrap(), exact);
    }

    #[test]
    fn wavelet_psi_examples() {
        let haar = gallery::haar();
        let phi = cascade(&haar, &s(), 0, 6).unwrap();
        let psi = wavelet_psi(&haar, &s(), &phi).unwrap();
        for i in 0..psi.len() {
            let t = psi.time(i);
            let expect = if (0.0..0.5).contains(&t) {
                -1.0
            } else if (0.5..1.0).contains(&t) {
                1.0
            } else {
                0.0
            };
            assert_eq!(psi.samples[i].re, expect, "t={t}");
        }
        assert!(psi.integral().norm() <= 1e-10);

        let d4 = gallery::d4();
        let phi = cascade(&d4, &s(), 12, 8).unwrap();
        let psi = wavelet_psi(&d4, &s(), &phi).unwrap();
        assert_abs_diff_eq!(psi.norm_sq(), 1.0, epsilon = 2e-3);

        let triadic = FilterSpec::from_real_coefficients("t", 3, &[(0, 0.5), (1, 0.5)]).unwrap();
        let sys3 = PathSystem::new(3).unwrap();
        assert!(matches!(wavelet_psi(&triadic, &sys3, &phi), Err(WaveError::UnsupportedScale(3))));
    }

    #[test]
    fn norm_and_autocorrelation_examples() {
        let h = h_midpoints(&gallery::haar(), &s(), &pol(), 6).unwrap();
        assert_abs_diff_eq!(autocorrelation_from_h(&h, 0).value, 1.0, epsilon = 1e-6);
        assert!(autocorrelation_from_h(&h, 1).value.abs() <= 1e-6);

        let st = h_midpoints(&gallery::stretched_haar(), &s(), &pol(), 5).unwrap();
        assert_abs_diff_eq!(autocorrelation_from_h(&st, 0).value, 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(autocorrelation_from_h(&st, 1).value, 2.0 / 9.0, epsilon = 1e-9);
        assert_abs_diff_eq!(autocorrelation_from_h(&st, 2).value, 1.0 / 9.0, epsilon = 1e-9);
        assert!(autocorrelation_from_h(&st, 3).value.abs() < 1e-9);

        // time-domain cross-check on the explicit fixed point
        let exact = SampledFunction::from_fn(0.0, 3.0, 2, 4, |_| Complex64::new(1.0 / 3.0, 0.0)).unwrap();
        assert_abs_diff_eq!(exact.lag_inner(1).unwrap().re, 2.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(exact.lag_inner(0).unwrap().re, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(exact.lag_inner(3).unwrap().re, 0.0);

        let zero = norm_phi_sq(&gallery::highpass_haar(), &s(), &pol(), 3).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn wavelet_coeffs_examples() {
        let haar = gallery::haar();
        let c = wavelet_coeffs(&haar, &re(&[1.0, 1.0, 1.0, 1.0]), 1).unwrap();
        assert!(c.details[0].iter().all(|v| v.norm() < 1e-15));
        assert!(c.smooth.iter().all(|v| (v.re - SQRT_2).abs() < 1e-15));

        let d4 = gallery::d4();
        let c = wavelet_coeffs(&d4, &re(&[2.5; 32]), 4).unwrap();
        assert!(c.details.iter().flatten().all(|v| v.norm() < 1e-10));

        assert!(wavelet_coeffs(&d4, &re(&[1.0; 12]), 3).is_err());
        let triadic = FilterSpec::from_real_coefficients("t", 3, &[(0, 0.5), (1, 0.5)]).unwrap();
        assert!(matches!(wavelet_coeffs(&triadic, &re(&[1.0; 4]), 1), Err(WaveError::UnsupportedScale(3))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn phi_hat_modulus_matches_atom(x in -40.0f64..40.0, idx in 0usize..3) {
            let spec = [gallery::haar(), gallery::d4(), gallery::stretched_haar()][idx].clone();
            let p = phi_hat(&spec, &s(), x, &pol()).unwrap();
            let a = atom_f(&spec, &s(), x, &pol());
            prop_assume!(p.converged && a.converged);
            prop_assert!((p.value.norm_sqr() - a.value).abs() <= 1e-9);
        }

        #[test]
        fn truncated_product_scaling_relation(x in -10.0f64..10.0, depth in 1usize..40) {
            let d4 = gallery::d4();
            let lhs = phi_hat_partial(&d4, &s(), x, depth).unwrap();
            let rhs = d4.eval_m(x / 2.0).unwrap() * phi_hat_partial(&d4, &s(), x / 2.0, depth - 1).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn d4_transform_is_energy_preserving(sig in prop::collection::vec(-5.0f64..5.0, 64)) {
            let d4 = gallery::d4();
            let x = re(&sig);
            let c = wavelet_coeffs(&d4, &x, 3).unwrap();
            let e: f64 = sig.iter().map(|v| v * v).sum();
            prop_assert!((c.energy() - e).abs() <= 1e-8 * e.max(1.0));
            let back = inverse_wavelet_coeffs(&d4, &c).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
