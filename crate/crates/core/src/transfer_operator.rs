//! The Ruelle operator `(R g)(x) = sum_j W(tau_j x) g(tau_j x)` and its
//! adjoint on cell masses.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WaveError};
use crate::filter_bank::FilterSpec;
use crate::ifs_core::PathSystem;
use crate::numeric::{checked_pow, frac, pairwise_sum};
use crate::path_measure::MAX_TREE_WORDS;

/// Values of a 1-periodic function on the cells `[m/N^L, (m+1)/N^L)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFunction {
    scale: usize,
    level: usize,
    values: Vec<f64>,
}

fn grid_len(scale: usize, level: usize) -> Result<usize> {
    checked_pow(scale, level)
        .filter(|&c| c <= MAX_TREE_WORDS)
        .map(|c| c as usize)
        .ok_or(WaveError::DepthTooLarge {
            depth: level,
            max: crate::path_measure::max_arity(scale),
        })
}

impl GridFunction {
    pub fn new(scale: usize, level: usize, values: Vec<f64>) -> Result<Self> {
        let len = grid_len(scale, level)?;
        if values.len() != len {
            return Err(WaveError::InvalidArgument(format!(
                "level-{level} grid needs {len} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(WaveError::InvalidArgument("grid values must be finite".into()));
        }
        Ok(Self { scale, level, values })
    }

    /// Samples `f` at the left endpoints `m / N^L`.
    pub fn sample(scale: usize, level: usize, f: impl Fn(f64) -> f64 + Sync) -> Result<Self> {
        let len = grid_len(scale, level)?;
        let values = (0..len)
            .into_par_iter()
            .map(|m| f(m as f64 / len as f64))
            .collect();
        Self::new(scale, level, values)
    }

    pub fn constant(scale: usize, level: usize, c: f64) -> Result<Self> {
        let len = grid_len(scale, level)?;
        Self::new(scale, level, vec![c; len])
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn left_endpoint(&self, m: usize) -> f64 {
        m as f64 / self.values.len() as f64
    }

    /// Value of the cell containing `x mod 1`.
    pub fn value_at(&self, x: f64) -> f64 {
        let len = self.values.len();
        let m = ((frac(x) * len as f64).floor() as usize).min(len - 1);
        self.values[m]
    }

    /// Cell average, i.e. the integral over `[0, 1)` of the step function.
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.values) / self.values.len() as f64
    }

    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.values)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// `(R g)(x)` for `x` reduced to `[0, 1)`.
pub fn apply_r(spec: &FilterSpec, sys: &PathSystem, g: impl Fn(f64) -> f64, x: f64) -> f64 {
    let x = frac(x);
    (0..sys.scale())
        .map(|j| {
            let y = sys.tau_unchecked(j, x);
            spec.eval_w(y) * g(y)
        })
        .sum()
}

pub fn apply_r_complex(
    spec: &FilterSpec,
    sys: &PathSystem,
    g: impl Fn(f64) -> Complex64,
    x: f64,
) -> Complex64 {
    let x = frac(x);
    (0..sys.scale())
        .map(|j| {
            let y = sys.tau_unchecked(j, x);
            g(y) * spec.eval_w(y)
        })
        .sum()
}

/// `(R^n g)(x)` summed over the `N^n` preimages `y_k = (x + k) / N^n`, each
/// weighted by `prod_{s=1..n} W((x + k) / N^s)`.
pub fn apply_rn(
    spec: &FilterSpec,
    sys: &PathSystem,
    g: impl Fn(f64) -> f64 + Sync,
    x: f64,
    n: usize,
) -> Result<f64> {
    let count = checked_pow(sys.scale(), n)
        .filter(|&c| c <= MAX_TREE_WORDS)
        .ok_or(WaveError::DepthTooLarge {
            depth: n,
            max: crate::path_measure::max_arity(sys.scale()),
        })? as usize;
    let x = frac(x);
    let big_n = sys.scale() as f64;
    let term = |k: usize| {
        let shifted = x + k as f64;
        let mut weight = 1.0;
        let mut scale = 1.0;
        for _ in 0..n {
            scale *= big_n;
            weight *= spec.eval_w(shifted / scale);
        }
        weight * g(shifted / scale)
    };
    let terms: Vec<f64> = if count >= 1 << 12 {
        (0..count).into_par_iter().map(term).collect()
    } else {
        (0..count).map(term).collect()
    };
    Ok(pairwise_sum(&terms))
}

/// One application of `R` on a grid, reading `g` at the level-`L+1` points
/// `(x_m + j)/N` through the containing level-`L` cell.
pub fn apply_r_grid(spec: &FilterSpec, sys: &PathSystem, g: &GridFunction) -> GridFunction {
    let n = sys.scale();
    let len = g.len();
    let values = (0..len)
        .into_par_iter()
        .map(|m| {
            let x = m as f64 / len as f64;
            (0..n)
                .map(|j| spec.eval_w(sys.tau_unchecked(j, x)) * g.values[(m + j * len) / n])
                .sum()
        })
        .collect();
    GridFunction {
        scale: g.scale,
        level: g.level,
        values,
    }
}

/// `max_m |(R h)(x_m) - h(x_m)|` with `h` extended cell-wise.
pub fn harmonic_residual(spec: &FilterSpec, sys: &PathSystem, h: &GridFunction) -> Result<f64> {
    if h.level < 1 {
        return Err(WaveError::InvalidArgument("grid level must be >= 1".into()));
    }
    let rh = apply_r_grid(spec, sys, h);
    Ok(rh
        .values
        .iter()
        .zip(&h.values)
        .fold(0.0f64, |a, (r, v)| a.max((r - v).abs())))
}

/// `max_m |(R h)(x_m) - h(x_m)|` over the level-`L` grid, evaluating `h`
/// exactly at the preimages.
pub fn harmonic_residual_fn(
    spec: &FilterSpec,
    sys: &PathSystem,
    h: impl Fn(f64) -> f64 + Sync,
    level: usize,
) -> Result<f64> {
    let len = grid_len(sys.scale(), level)?;
    let worst = (0..len)
        .into_par_iter()
        .map(|m| {
            let x = m as f64 / len as f64;
            (apply_r(spec, sys, &h, x) - h(x)).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Starting function for [`power_iterate_harmonic`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerStart {
    /// `g = 1`, which is a fixed point whenever the partition condition holds.
    #[default]
    Constant,
    /// Periodic indicator of the two cells touching 0.
    ZeroNeighborhood,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerIteration {
    pub start: PowerStart,
    pub grid: GridFunction,
    /// `sup |g_t - g_{t-1}|` for each iteration.
    pub sup_changes: Vec<f64>,
}

pub fn power_iterate_harmonic(
    spec: &FilterSpec,
    sys: &PathSystem,
    level: usize,
    iters: usize,
    start: PowerStart,
) -> Result<PowerIteration> {
    if level < 1 || iters < 1 {
        return Err(WaveError::InvalidArgument("level and iters must be >= 1".into()));
    }
    let mut g = match start {
        PowerStart::Constant => GridFunction::constant(sys.scale(), level, 1.0)?,
        PowerStart::ZeroNeighborhood => {
            let mut g = GridFunction::constant(sys.scale(), level, 0.0)?;
            let last = g.len() - 1;
            g.values[0] = 1.0;
            g.values[last] = 1.0;
            g
        }
    };
    let mut sup_changes = Vec::with_capacity(iters);
    for _ in 0..iters {
        let next = apply_r_grid(spec, sys, &g);
        let change = next
            .values
            .iter()
            .zip(&g.values)
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        sup_changes.push(change);
        g = next;
    }
    Ok(PowerIteration {
        start,
        grid: g,
        sup_changes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuelleMeasure {
    /// Cell masses; a probability vector.
    pub masses: GridFunction,
    /// `||nu_t - nu_{t-1}||_1` for each iteration.
    pub residuals: Vec<f64>,
}

/// Iterates `nu <- nu R` on cell masses from the uniform distribution. The
/// mass of cell `m` moves to the cell of `tau_j(x_m)` with weight
/// `W(tau_j x_m)`; the result is renormalized every step.
pub fn ruelle_measure(
    spec: &FilterSpec,
    sys: &PathSystem,
    level: usize,
    iters: usize,
) -> Result<RuelleMeasure> {
    if level < 1 || iters < 1 {
        return Err(WaveError::InvalidArgument("level and iters must be >= 1".into()));
    }
    let n = sys.scale();
    let len = grid_len(n, level)?;
    // transition weights are fixed, so tabulate them once
    let weights: Vec<f64> = (0..len * n)
        .into_par_iter()
        .map(|idx| {
            let (m, j) = (idx / n, idx % n);
            spec.eval_w(sys.tau_unchecked(j, m as f64 / len as f64))
        })
        .collect();
    let mut nu = vec![1.0 / len as f64; len];
    let mut residuals = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut next = vec![0.0; len];
        for m in 0..len {
            for j in 0..n {
                next[(m + j * len) / n] += nu[m] * weights[m * n + j];
            }
        }
        let total = pairwise_sum(&next);
        if !(total > 0.0) {
            return Err(WaveError::InvalidArgument(
                "all mass vanished; W does not satisfy the partition condition".into(),
            ));
        }
        next.iter_mut().for_each(|v| *v /= total);
        let diff: Vec<f64> = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).collect();
        residuals.push(pairwise_sum(&diff));
        nu = next;
    }
    Ok(RuelleMeasure {
        masses: GridFunction {
            scale: n,
            level,
            values: nu,
        },
        residuals,
    })
}
