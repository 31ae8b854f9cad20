//! Executable diagnostics: the pointwise-convergence equivalence for the
//! infinite product, the cocycle identity `h(x) W(x) = P_{Nx}(NZ)`,
//! harmonic functions built from cocycles, and Monte Carlo sampling of the
//! backward random walk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WaveError};
use crate::filter_bank::FilterSpec;
use crate::ifs_core::{DigitWord, PathSystem};
use crate::numeric::frac;
use crate::path_measure::{
    atom_f, cylinder_prob, expect_finite, mass_nkz, mass_nkz_direct, mass_z, partial_products,
    FiniteCoordFn, MeasureValue, TruncationPolicy,
};
use crate::transfer_operator::harmonic_residual_fn;

/// Atoms at or below this are treated as zero.
pub const ATOM_FLOOR: f64 = 1e-12;
/// A factor further than this from 1 inside the final window means the
/// product is still moving.
pub const DIVERGENCE_GAP: f64 = 1e-3;
/// Closeness to 1 required of `h(x / N^n)` over the final window.
pub const HARMONIC_TOL: f64 = 1e-6;
/// Weights below this count as zero when sampling a step.
pub const DEGENERATE_WEIGHT: f64 = 1e-15;
/// Trials per independently seeded Monte Carlo stream.
pub const TRIALS_PER_STREAM: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CocycleCheck {
    pub x: f64,
    /// `h(x) W(x)`.
    pub lhs: f64,
    /// `P_{Nx}(NZ)` summed over the multiples of `N`.
    pub rhs_direct: f64,
    /// `P_{Nx}(NZ)` through the factorization `W(x) h(x)`.
    pub rhs_factorized: f64,
    pub residual: f64,
}

/// Compares `h(x) W(x)` with a direct sum of the atoms of `NZ` seen from the
/// unreduced point `Nx`.
pub fn cocycle_identity_check(
    spec: &FilterSpec,
    sys: &PathSystem,
    x: f64,
    policy: &TruncationPolicy,
) -> CocycleCheck {
    let nx = sys.scale() as f64 * x;
    let lhs = mass_z(spec, sys, x, policy).value * spec.eval_w(x);
    let rhs_direct = mass_nkz_direct(spec, sys, nx, 1, policy).value;
    let rhs_factorized = mass_nkz(spec, sys, nx, 1, policy).value;
    CocycleCheck {
        x,
        lhs,
        rhs_direct,
        rhs_factorized,
        residual: (lhs - rhs_direct).abs(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductVerdict {
    Converged,
    Diverged,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicVerdict {
    LimitOne,
    LimitBelowOne,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosisLabel {
    Consistent,
    Inconsistent,
    Inconclusive,
    HypothesisNotMet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosisReport {
    pub x: f64,
    /// `p_n = prod_{k<=n} W(x / N^k)`, `n = 1..max_n`.
    pub partial_products: Vec<f64>,
    /// `h(x / N^n)`, `n = 1..max_n`.
    pub h_sequence: Vec<f64>,
    pub atom: MeasureValue,
    pub atom_positive: bool,
    pub verdict_a: ProductVerdict,
    pub verdict_b: HarmonicVerdict,
    pub theorem_consistent: bool,
    pub label: DiagnosisLabel,
}

fn product_verdict(p: &[f64], window: usize, tol: f64) -> ProductVerdict {
    if p.len() < window + 1 {
        return ProductVerdict::Inconclusive;
    }
    let tail = &p[p.len() - window - 1..];
    let factors: Vec<f64> = tail.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let last = *p.last().unwrap();
    if last > ATOM_FLOOR && remaining_change(&factors) <= tol {
        ProductVerdict::Converged
    } else if factors.iter().any(|f| (f - 1.0).abs() > DIVERGENCE_GAP) {
        ProductVerdict::Diverged
    } else {
        ProductVerdict::Inconclusive
    }
}

/// Deviations at or below this are round-off.
const ROUNDOFF: f64 = 4.0 * f64::EPSILON;
/// Largest per-step contraction of the factor deviations that still
/// licenses a geometric tail estimate.
const MAX_CONTRACTION: f64 = 0.5;

/// Estimated relative change of the product past the window: the largest
/// deviation if none exceeds round-off, else the geometric tail
/// `d r / (1 - r)` when the deviations contract by `r <= 1/2` per step.
fn remaining_change(factors: &[f64]) -> f64 {
    let d: Vec<f64> = factors.iter().map(|f| (f - 1.0).abs()).collect();
    let last = *d.last().unwrap_or(&f64::INFINITY);
    if d.iter().all(|&v| v <= ROUNDOFF) {
        return last;
    }
    let mut r = 0.0f64;
    for w in d.windows(2) {
        if w[1] <= ROUNDOFF {
            continue;
        }
        if w[0] <= ROUNDOFF {
            return f64::INFINITY;
        }
        r = r.max(w[1] / w[0]);
    }
    if r > MAX_CONTRACTION {
        return f64::INFINITY;
    }
    let tail = if last <= ROUNDOFF { ROUNDOFF } else { last * r / (1.0 - r) };
    tail.max(last)
}

fn harmonic_verdict(h: &[f64], window: usize) -> HarmonicVerdict {
    if h.len() < window {
        return HarmonicVerdict::Inconclusive;
    }
    let tail = &h[h.len() - window..];
    if tail.iter().all(|v| (v - 1.0).abs() < HARMONIC_TOL) {
        return HarmonicVerdict::LimitOne;
    }
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo < HARMONIC_TOL && (hi - 1.0).abs() > HARMONIC_TOL {
        HarmonicVerdict::LimitBelowOne
    } else {
        HarmonicVerdict::Inconclusive
    }
}

/// Fills both sequences of the equivalence and compares their verdicts.
/// Conditions (a) and (b) only need to agree when the atom at `x` is
/// positive; otherwise the report is labeled hypothesis-not-met.
pub fn theorem_diagnose(
    spec: &FilterSpec,
    sys: &PathSystem,
    x: f64,
    max_n: usize,
    policy: &TruncationPolicy,
) -> Result<DiagnosisReport> {
    if max_n < 4 {
        return Err(WaveError::InvalidArgument("max_n must be >= 4".into()));
    }
    let partial = partial_products(spec, sys, x, max_n);
    let n = sys.scale() as f64;
    let h_sequence: Vec<f64> = (1..=max_n)
        .into_par_iter()
        .map(|k| mass_z(spec, sys, x / n.powi(k as i32), policy).value)
        .collect();
    let atom = atom_f(spec, sys, x, policy);
    let atom_positive = atom.converged && atom.value > ATOM_FLOOR;
    let window = policy.stall_window.min(max_n - 1);
    let verdict_a = product_verdict(&partial, window, policy.convergence_tol);
    let verdict_b = harmonic_verdict(&h_sequence, window);

    let label = if !atom_positive {
        DiagnosisLabel::HypothesisNotMet
    } else {
        match (verdict_a, verdict_b) {
            (ProductVerdict::Inconclusive, _) | (_, HarmonicVerdict::Inconclusive) => DiagnosisLabel::Inconclusive,
            (ProductVerdict::Converged, HarmonicVerdict::LimitOne)
            | (ProductVerdict::Diverged, HarmonicVerdict::LimitBelowOne) => DiagnosisLabel::Consistent,
            _ => DiagnosisLabel::Inconsistent,
        }
    };
    Ok(DiagnosisReport {
        x,
        partial_products: partial,
        h_sequence,
        atom,
        atom_positive,
        verdict_a,
        verdict_b,
        theorem_consistent: label != DiagnosisLabel::Inconsistent,
        label,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CocycleHarmonic {
    /// `h(x) = P_x[V(x, .)]`.
    pub h_x: f64,
    /// `max |R h - h|` over the level-`L` grid.
    pub harmonic_residual: f64,
    /// `max |V(x, w_1..w_n) - V(tau_{w_1} x, w_2..w_{n+1})|` over grid
    /// points and words of length `n + 1`.
    pub cocycle_violation: f64,
}

/// Builds `h(y) = P_y[V(y, .)]` from a family of finite-coordinate
/// functions and measures how harmonic `h` and how cocycle-like `V` are.
pub fn harmonic_from_cocycle(
    spec: &FilterSpec,
    sys: &PathSystem,
    v: impl Fn(f64) -> FiniteCoordFn + Sync,
    x: f64,
    level: usize,
) -> Result<CocycleHarmonic> {
    let h = |y: f64| -> Result<f64> { Ok(expect_finite(spec, sys, y, &v(frac(y)))?.re) };
    let h_x = h(x)?;
    // surface arity errors before the infallible residual sweep
    h(0.0)?;
    let harmonic_residual = harmonic_residual_fn(spec, sys, |y| h(y).unwrap_or(f64::NAN), level)?;

    let len = crate::numeric::checked_pow(sys.scale(), level).unwrap_or(1) as usize;
    let n = sys.scale();
    let mut violation = 0.0f64;
    for m in 0..len {
        let y = m as f64 / len as f64;
        let here = v(y);
        let arity = here.arity();
        let shifted: Vec<FiniteCoordFn> = (0..n).map(|j| v(sys.tau_unchecked(j, y))).collect();
        let words = crate::numeric::checked_pow(n, arity + 1)
            .filter(|&c| c <= crate::path_measure::MAX_TREE_WORDS)
            .ok_or(WaveError::ArityTooLarge {
                arity: arity + 1,
                max: crate::path_measure::max_arity(n),
            })? as usize;
        if shifted.iter().any(|f| f.arity() != arity) {
            return Err(WaveError::InvalidArgument("cocycle family must keep one arity".into()));
        }
        let stride = words / n;
        for idx in 0..words {
            // idx encodes (w_1, ..., w_{n+1}) with w_1 least significant
            let first = idx % n;
            let rest = idx / n;
            let a = here.values()[idx % stride];
            let b = shifted[first].values()[rest];
            violation = violation.max((a - b).norm());
        }
    }
    Ok(CocycleHarmonic {
        h_x,
        harmonic_residual,
        cocycle_violation: violation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkSample {
    pub seed: u64,
    pub x0: f64,
    pub digits: DigitWord,
    /// Largest `|sum_i W(tau_i y) - 1|` met along the walk.
    pub max_renormalization: f64,
}

fn step(spec: &FilterSpec, sys: &PathSystem, y: f64, step_index: usize, rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
    let n = sys.scale();
    let mut weights = [0.0f64; 16];
    let mut heap;
    let w: &mut [f64] = if n <= 16 {
        &mut weights[..n]
    } else {
        heap = vec![0.0; n];
        &mut heap
    };
    let mut total = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = spec.eval_w(sys.tau_unchecked(i, y));
        total += *wi;
    }
    if w.iter().all(|&v| v < DEGENERATE_WEIGHT) {
        return Err(WaveError::DegenerateStep { step: step_index, state: y });
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = n - 1;
    for (i, &wi) in w.iter().enumerate() {
        acc += wi;
        if u < acc {
            pick = i;
            break;
        }
    }
    // never land on a zero-weight branch through round-off at the top end
    while w[pick] == 0.0 && pick > 0 {
        pick -= 1;
    }
    Ok((pick, sys.tau_unchecked(pick, y), (total - 1.0).abs()))
}

/// Draws `n` digits: from state `y`, digit `i` with probability
/// `W(tau_i y)` (renormalized by the step total), then `y <- tau_i y`.
pub fn sample_path(spec: &FilterSpec, sys: &PathSystem, x: f64, n: usize, seed: u64) -> Result<WalkSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = frac(x);
    let mut digits = DigitWord::empty();
    let mut worst = 0.0f64;
    for s in 0..n {
        let (d, next, dev) = step(spec, sys, y, s, &mut rng)?;
        digits.push(d);
        y = next;
        worst = worst.max(dev);
    }
    Ok(WalkSample {
        seed,
        x0: x,
        digits,
        max_renormalization: worst,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CylinderEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
    pub hits: u64,
}

/// Fraction of sampled walks whose first `len(word)` digits equal `word`.
/// Trials are split into streams of [`TRIALS_PER_STREAM`]; stream `c` uses
/// ChaCha8 seeded with `seed` on stream number `c`, so the result does not
/// depend on the number of worker threads.
pub fn estimate_cylinder(
    spec: &FilterSpec,
    sys: &PathSystem,
    x: f64,
    word: &DigitWord,
    trials: usize,
    seed: u64,
) -> Result<CylinderEstimate> {
    if trials < 100 {
        return Err(WaveError::InvalidArgument("trials must be >= 100".into()));
    }
    sys.check_word(word)?;
    let x0 = frac(x);
    let streams = trials.div_ceil(TRIALS_PER_STREAM);
    let hits: Vec<u64> = (0..streams)
        .into_par_iter()
        .map(|c| -> Result<u64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = TRIALS_PER_STREAM.min(trials - c * TRIALS_PER_STREAM);
            let mut hits = 0;
            'trial: for _ in 0..count {
                let mut y = x0;
                for (s, &want) in word.digits().iter().enumerate() {
                    let (d, next, _) = step(spec, sys, y, s, &mut rng)?;
                    if d != want {
                        continue 'trial;
                    }
                    y = next;
                }
                hits += 1;
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    let hits: u64 = hits.iter().sum();
    let p = hits as f64 / trials as f64;
    Ok(CylinderEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
        seed,
        hits,
    })
}

/// Exact cylinder mass next to its Monte Carlo estimate.
pub fn calibrate_cylinder(
    spec: &FilterSpec,
    sys: &PathSystem,
    x: f64,
    word: &DigitWord,
    trials: usize,
    seed: u64,
) -> Result<(f64, CylinderEstimate)> {
    Ok((cylinder_prob(spec, sys, x, word)?, estimate_cylinder(spec, sys, x, word, trials, seed)?))
}
