//! Filter specifications: masking coefficients or a tabulated weight.
//!
//! A [`FilterSpec`] is the single source of the transition weight
//! `W = |m|^2` used everywhere else in the crate. Coefficient filters carry
//! `a_k` normalized so that `sum a_k = 1`; the frequency response is
//! `m(x) = sum_k a_k e^{-i 2 pi k x}`. Tabulated filters give `W` directly as
//! a piecewise-constant function on half-open intervals of `[0, 1)`, which is
//! how a.e.-defined (frequency-localized) filters are described.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};
use crate::numeric::{centered_frac, checked_pow, frac};

/// Default validation tolerance for the coefficient-level conditions.
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-9;

/// Largest grid (in points) that `check_partition` will sweep.
const MAX_PARTITION_POINTS: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[serde(alias = "Coefficients")]
    Coefficients,
    #[serde(alias = "TabulatedW", alias = "tabulated")]
    TabulatedW,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Coefficients => "coefficients",
            FilterKind::TabulatedW => "tabulated_w",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Finitely supported masking coefficients, stored densely from `offset`.
#[derive(Clone, Debug, PartialEq)]
struct Taps {
    offset: i64,
    values: Vec<Complex64>,
}

impl Taps {
    fn last_index(&self) -> i64 {
        self.offset + self.values.len() as i64 - 1
    }

    fn get(&self, k: i64) -> Complex64 {
        let j = k - self.offset;
        if j < 0 || j >= self.values.len() as i64 {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[j as usize]
        }
    }

    fn eval(&self, x: f64) -> Complex64 {
        // z = e^{-i 2 pi x}; reducing to [-1/2, 1/2) keeps small negative
        // arguments accurate, which matters for products near the origin.
        let t = centered_frac(x);
        let z = Complex64::from_polar(1.0, -2.0 * PI * t);
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.values.iter().rev() {
            acc = acc * z + c;
        }
        if self.offset != 0 {
            acc *= z.powi(self.offset as i32);
        }
        acc
    }
}

/// Piecewise-constant weight on `[b_i, b_{i+1})`, last interval closing at 1.
#[derive(Clone, Debug, PartialEq)]
struct WTable {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl WTable {
    fn eval(&self, x: f64) -> f64 {
        let t = frac(x);
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.saturating_sub(1)]
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Body {
    Coefficients(Taps),
    Tabulated(WTable),
}

/// An immutable filter description.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSpec {
    label: String,
    scale: usize,
    body: Body,
}

/// Outcome of a single coefficient-level condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub error: f64,
    pub verdict: bool,
}

impl ConditionCheck {
    fn new(error: f64, tol: f64) -> Self {
        Self {
            error,
            verdict: error <= tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub label: String,
    pub scale_n: usize,
    pub tolerance: f64,
    pub grid_level: usize,
    pub partition_max_error: f64,
    pub quadrature_max_error: Option<f64>,
    pub lowpass_error: Option<f64>,
    pub verdicts: BTreeMap<String, bool>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.values().all(|&v| v)
    }
}

impl FilterSpec {
    pub fn from_coefficients(
        label: impl Into<String>,
        scale: usize,
        coeffs: &[(i64, Complex64)],
    ) -> Result<Self> {
        check_scale(scale)?;
        if coeffs.is_empty() {
            return Err(WaveError::InvalidFilter(
                "coeffs: coefficient list must be nonempty".into(),
            ));
        }
        let mut sorted: Vec<(i64, Complex64)> = coeffs.to_vec();
        sorted.sort_by_key(|&(k, _)| k);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(WaveError::InvalidFilter(format!(
                    "coeffs: duplicate index k={}",
                    w[0].0
                )));
            }
        }
        if let Some((k, _)) = sorted.iter().find(|(_, a)| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(WaveError::InvalidFilter(format!(
                "coeffs: non-finite coefficient at k={k}"
            )));
        }
        let offset = sorted[0].0;
        let span = (sorted[sorted.len() - 1].0 - offset) as usize + 1;
        if span > 1 << 20 {
            return Err(WaveError::InvalidFilter(
                "coeffs: index range too wide".into(),
            ));
        }
        let mut values = vec![Complex64::new(0.0, 0.0); span];
        for (k, a) in sorted {
            values[(k - offset) as usize] = a;
        }
        Ok(Self {
            label: label.into(),
            scale,
            body: Body::Coefficients(Taps { offset, values }),
        })
    }

    pub fn from_real_coefficients(
        label: impl Into<String>,
        scale: usize,
        coeffs: &[(i64, f64)],
    ) -> Result<Self> {
        let c: Vec<(i64, Complex64)> = coeffs
            .iter()
            .map(|&(k, a)| (k, Complex64::new(a, 0.0)))
            .collect();
        Self::from_coefficients(label, scale, &c)
    }

    pub fn tabulated(
        label: impl Into<String>,
        scale: usize,
        breakpoints: &[f64],
        values: &[f64],
    ) -> Result<Self> {
        check_scale(scale)?;
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(WaveError::InvalidFilter(
                "w_table: breakpoints and values must be nonempty and of equal length".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(WaveError::InvalidFilter(
                "w_table.breakpoints[0]: first breakpoint must be 0".into(),
            ));
        }
        for (i, w) in breakpoints.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(WaveError::InvalidFilter(format!(
                    "w_table.breakpoints[{}]: breakpoints must be strictly increasing",
                    i + 1
                )));
            }
        }
        if let Some(i) = breakpoints.iter().position(|&b| !(0.0..1.0).contains(&b)) {
            return Err(WaveError::InvalidFilter(format!(
                "w_table.breakpoints[{i}]: breakpoint must lie in [0, 1)"
            )));
        }
        if let Some(i) = values.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(WaveError::InvalidFilter(format!(
                "w_table.values[{i}]: W must lie in [0, 1]"
            )));
        }
        Ok(Self {
            label: label.into(),
            scale,
            body: Body::Tabulated(WTable {
                breakpoints: breakpoints.to_vec(),
                values: values.to_vec(),
            }),
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: FilterFile = serde_json::from_str(text)?;
        file.into_spec()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let file = FilterFile::from_spec(self);
        serde_json::to_string_pretty(&file).expect("filter file serializes")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn kind(&self) -> FilterKind {
        match self.body {
            Body::Coefficients(_) => FilterKind::Coefficients,
            Body::Tabulated(_) => FilterKind::TabulatedW,
        }
    }

    /// Nonzero-range coefficients `(k, a_k)` in increasing `k`.
    pub fn coefficients(&self) -> Result<Vec<(i64, Complex64)>> {
        let taps = self.taps()?;
        Ok(taps
            .values
            .iter()
            .enumerate()
            .map(|(j, &a)| (taps.offset + j as i64, a))
            .collect())
    }

    /// Inclusive index range of the coefficients.
    pub fn support(&self) -> Result<(i64, i64)> {
        let taps = self.taps()?;
        Ok((taps.offset, taps.last_index()))
    }

    pub fn coefficient(&self, k: i64) -> Result<Complex64> {
        Ok(self.taps()?.get(k))
    }

    fn taps(&self) -> Result<&Taps> {
        match &self.body {
            Body::Coefficients(t) => Ok(t),
            Body::Tabulated(_) => Err(WaveError::FilterKind {
                expected: FilterKind::Coefficients.name(),
                found: FilterKind::TabulatedW.name(),
            }),
        }
    }

    fn require_dyadic(&self) -> Result<()> {
        if self.scale != 2 {
            return Err(WaveError::UnsupportedScale(self.scale));
        }
        Ok(())
    }

    /// Frequency response `m(x) = sum_k a_k e^{-i 2 pi k x}`.
    pub fn eval_m(&self, x: f64) -> Result<Complex64> {
        Ok(self.taps()?.eval(x))
    }

    /// Transition weight `W(x)`, 1-periodic and never negative.
    pub fn eval_w(&self, x: f64) -> f64 {
        match &self.body {
            Body::Coefficients(t) => t.eval(x).norm_sqr(),
            Body::Tabulated(t) => t.eval(x),
        }
    }

    /// Max over the level-`grid_level` grid of `|sum_j W((x+j)/N) - 1|`.
    pub fn check_partition(&self, grid_level: usize, tol: f64) -> Result<ConditionCheck> {
        let n = self.scale;
        let points = checked_pow(n, grid_level)
            .filter(|&p| p <= MAX_PARTITION_POINTS)
            .ok_or(WaveError::DepthTooLarge {
                depth: grid_level,
                max: (MAX_PARTITION_POINTS as f64).log(n as f64) as usize,
            })?;
        let inv_n = 1.0 / n as f64;
        let mut worst = 0.0f64;
        for m in 0..points {
            let x = m as f64 / points as f64;
            let s: f64 = (0..n).map(|j| self.eval_w((x + j as f64) * inv_n)).sum();
            worst = worst.max((s - 1.0).abs());
        }
        Ok(ConditionCheck::new(worst, tol))
    }

    /// Max over shifts `n` of `|sum_k conj(a_k) a_{k+2n} - delta_{0,n}/2|`.
    pub fn check_quadrature(&self, tol: f64) -> Result<ConditionCheck> {
        let taps = self.taps()?;
        self.require_dyadic()?;
        let len = taps.values.len() as i64;
        let mut worst = 0.0f64;
        let mut shift = 0;
        while 2 * shift < len {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..len - 2 * shift {
                acc += taps.values[j as usize].conj() * taps.values[(j + 2 * shift) as usize];
            }
            let target = if shift == 0 { 0.5 } else { 0.0 };
            worst = worst.max((acc - target).norm());
            shift += 1;
        }
        Ok(ConditionCheck::new(worst, tol))
    }

    /// `|sum_k a_k - 1|`.
    pub fn check_lowpass(&self, tol: f64) -> Result<ConditionCheck> {
        let taps = self.taps()?;
        let sum: Complex64 = taps.values.iter().sum();
        Ok(ConditionCheck::new((sum - 1.0).norm(), tol))
    }

    /// Companion high-pass filter `b_k = (-1)^{k+1} conj(a_{1-k})`.
    pub fn high_pass(&self) -> Result<FilterSpec> {
        let taps = self.taps()?;
        self.require_dyadic()?;
        let lo = 1 - taps.last_index();
        let hi = 1 - taps.offset;
        let coeffs: Vec<(i64, Complex64)> = (lo..=hi)
            .map(|k| {
                let sign = if (k + 1).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                (k, taps.get(1 - k).conj() * sign)
            })
            .collect();
        FilterSpec::from_coefficients(format!("{}:high_pass", self.label), 2, &coeffs)
    }

    /// Runs every condition applicable to this filter.
    pub fn validate(&self, grid_level: usize, tol: f64) -> Result<ValidationReport> {
        let partition = self.check_partition(grid_level, tol)?;
        let mut verdicts = BTreeMap::new();
        verdicts.insert("partition".to_string(), partition.verdict);

        let quadrature = match self.kind() {
            FilterKind::Coefficients if self.scale == 2 => Some(self.check_quadrature(tol)?),
            _ => None,
        };
        if let Some(q) = quadrature {
            verdicts.insert("quadrature".to_string(), q.verdict);
        }
        let lowpass = match self.kind() {
            FilterKind::Coefficients => Some(self.check_lowpass(tol)?),
            FilterKind::TabulatedW => None,
        };
        if let Some(l) = lowpass {
            verdicts.insert("lowpass".to_string(), l.verdict);
        }
        Ok(ValidationReport {
            label: self.label.clone(),
            scale_n: self.scale,
            tolerance: tol,
            grid_level,
            partition_max_error: partition.error,
            quadrature_max_error: quadrature.map(|c| c.error),
            lowpass_error: lowpass.map(|c| c.error),
            verdicts,
        })
    }
}

fn check_scale(scale: usize) -> Result<()> {
    if scale < 2 {
        return Err(WaveError::InvalidFilter(format!(
            "scale_N: must be >= 2, got {scale}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// On-disk schema

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterFile {
    #[serde(default)]
    label: String,
    #[serde(rename = "scale_N")]
    scale_n: usize,
    kind: FilterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<CoeffEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_table: Option<WTableFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoeffEntry {
    k: i64,
    re: Scalar,
    #[serde(default)]
    im: Scalar,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WTableFile {
    breakpoints: Vec<Scalar>,
    values: Vec<Scalar>,
}

/// A number, or a string holding a decimal or an exact rational `p/q`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Number(f64),
    Text(String),
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::Number(0.0)
    }
}

impl Scalar {
    fn value(&self, field: &str) -> Result<f64> {
        match self {
            Scalar::Number(v) => Ok(*v),
            Scalar::Text(s) => parse_rational(s).ok_or_else(|| {
                WaveError::InvalidFilter(format!("{field}: cannot parse {s:?} as a number"))
            }),
        }
    }
}

fn parse_rational(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().ok()?;
            let q: f64 = q.trim().parse().ok()?;
            (q != 0.0).then(|| p / q)
        }
        None => s.parse().ok(),
    }
}

impl FilterFile {
    fn into_spec(self) -> Result<FilterSpec> {
        match (self.kind, self.coeffs, self.w_table) {
            (FilterKind::Coefficients, Some(entries), None) => {
                let mut coeffs = Vec::with_capacity(entries.len());
                for (i, e) in entries.iter().enumerate() {
                    let re = e.re.value(&format!("coeffs[{i}].re"))?;
                    let im = e.im.value(&format!("coeffs[{i}].im"))?;
                    coeffs.push((e.k, Complex64::new(re, im)));
                }
                FilterSpec::from_coefficients(self.label, self.scale_n, &coeffs)
            }
            (FilterKind::TabulatedW, None, Some(table)) => {
                let breakpoints = table
                    .breakpoints
                    .iter()
                    .enumerate()
                    .map(|(i, b)| b.value(&format!("w_table.breakpoints[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let values = table
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.value(&format!("w_table.values[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                FilterSpec::tabulated(self.label, self.scale_n, &breakpoints, &values)
            }
            (kind, coeffs, table) => Err(WaveError::InvalidFilter(format!(
                "kind={kind} requires exactly one of coeffs/w_table matching the kind \
                 (coeffs present: {}, w_table present: {})",
                coeffs.is_some(),
                table.is_some()
            ))),
        }
    }

    fn from_spec(spec: &FilterSpec) -> Self {
        match &spec.body {
            Body::Coefficients(t) => FilterFile {
                label: spec.label.clone(),
                scale_n: spec.scale,
                kind: FilterKind::Coefficients,
                coeffs: Some(
                    t.values
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| a.norm_sqr() > 0.0)
                        .map(|(j, a)| CoeffEntry {
                            k: t.offset + j as i64,
                            re: Scalar::Number(a.re),
                            im: Scalar::Number(a.im),
                        })
                        .collect(),
                ),
                w_table: None,
            },
            Body::Tabulated(t) => FilterFile {
                label: spec.label.clone(),
                scale_n: spec.scale,
                kind: FilterKind::TabulatedW,
                coeffs: None,
                w_table: Some(WTableFile {
                    breakpoints: t.breakpoints.iter().map(|&b| Scalar::Number(b)).collect(),
                    values: t.values.iter().map(|&v| Scalar::Number(v)).collect(),
                }),
            },
        }
    }
}
