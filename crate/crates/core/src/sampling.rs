//! Regularized sampling of the boundary functions `y(x_eval; mu1, mu2)`.
//!
//! For a fixed evaluation point the regularized function `alpha * y` is
//! band-limited with type `beta_i = (m + 1) sigma_i(x_eval)`, so it is fixed by
//! its values on the lattice `(j pi / beta1, k pi / beta2)` and can be rebuilt
//! anywhere with the two-dimensional cardinal series
//!
//! ```text
//! sum_{|j|,|k| <= N} s(j, k) sinc(beta1 mu1 - j pi) sinc(beta2 mu2 - k pi)
//! ```
//!
//! Two regularizers are provided. With `u = sigma1 mu1`, `v = sigma2 mu2`:
//!
//! * [`RegularizerKind::Directional`]: `sinc(u + v)^m`. Even only under
//!   `(mu1, mu2) -> (-mu1, -mu2)`, and identically 1 along `u + v = 0`, so the
//!   regularized function does not decay along that line.
//! * [`RegularizerKind::Symmetric`] (default): `(sinc(u + v) sinc(u - v))^(m/2)`
//!   with integer division. Even in each parameter separately and square
//!   integrable on the plane; its type `2 (m/2) sigma <= m sigma` keeps the same
//!   lattice.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ivp::{solve_ivp, IvpError};
use crate::problem::{Problem, ProblemError, TypeBounds, Weight};

/// Below this argument size `sin z / z` is replaced by `1 - z^2/6`.
pub const SINC_SERIES_CUTOFF: f64 = 1e-4;

/// `sin(z) / z` with `sinc(0) = 1`.
#[inline]
pub fn sinc(z: f64) -> f64 {
    if z.abs() < SINC_SERIES_CUTOFF {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("regularizer power m must be at least {min} for the {kind} regularizer (got {m})")]
    Regularizer { kind: RegularizerKind, m: u32, min: u32 },
    #[error("truncation half-width N must be at least 1")]
    Truncation,
    #[error("evaluation point x = {0} must lie in (0, 1]")]
    EvalPoint(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("IVP failed at lattice index ({j}, {k}): {source}")]
    Ivp { j: i64, k: i64, source: IvpError },
    #[error("cache file line {line}: {message}")]
    CacheFormat { line: usize, message: String },
    #[error("cache fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RegularizerKind {
    #[default]
    Symmetric,
    Directional,
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegularizerKind::Symmetric => "symmetric",
            RegularizerKind::Directional => "directional",
        })
    }
}

impl FromStr for RegularizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(RegularizerKind::Symmetric),
            "directional" => Ok(RegularizerKind::Directional),
            other => Err(format!("unknown regularizer '{other}' (expected symmetric or directional)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegularizerConfig {
    m: u32,
    kind: RegularizerKind,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig { m: 5, kind: RegularizerKind::Symmetric }
    }
}

impl RegularizerConfig {
    pub fn new(m: u32, kind: RegularizerKind) -> Result<Self, SamplingError> {
        let min = match kind {
            RegularizerKind::Directional => 1,
            RegularizerKind::Symmetric => 2,
        };
        if m < min {
            return Err(SamplingError::Regularizer { kind, m, min });
        }
        Ok(RegularizerConfig { m, kind })
    }

    pub fn directional(m: u32) -> Result<Self, SamplingError> {
        Self::new(m, RegularizerKind::Directional)
    }

    pub fn symmetric(m: u32) -> Result<Self, SamplingError> {
        Self::new(m, RegularizerKind::Symmetric)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    /// `alpha` given the type values `sigma1`, `sigma2` at the evaluation point.
    pub fn value(&self, sigma1: f64, sigma2: f64, mu1: f64, mu2: f64) -> f64 {
        let (u, v) = (sigma1 * mu1, sigma2 * mu2);
        match self.kind {
            RegularizerKind::Directional => snapped_sinc(u + v).powi(self.m as i32),
            RegularizerKind::Symmetric => (snapped_sinc(u + v) * snapped_sinc(u - v)).powi((self.m / 2) as i32),
        }
    }

    /// `alpha` at lattice index `(j, k)`. On the lattice `sigma_i mu_i = index * pi / (m + 1)`,
    /// so zero lines are detected in integer arithmetic.
    pub fn lattice_value(&self, j: i64, k: i64) -> f64 {
        let period = self.m as i64 + 1;
        let factor = |l: i64| {
            if l != 0 && l % period == 0 {
                0.0
            } else {
                sinc(l as f64 * PI / period as f64)
            }
        };
        match self.kind {
            RegularizerKind::Directional => factor(j + k).powi(self.m as i32),
            RegularizerKind::Symmetric => (factor(j + k) * factor(j - k)).powi((self.m / 2) as i32),
        }
    }

    /// Distance, in radians of the linear forms `sigma1 mu1 +- sigma2 mu2`, to the
    /// nearest zero line of `alpha`.
    pub fn zero_line_distance(&self, sigma1: f64, sigma2: f64, mu1: f64, mu2: f64) -> f64 {
        let dist = |l: f64| {
            let n = (l / PI).round();
            if n == 0.0 {
                PI - l.abs()
            } else {
                (l - n * PI).abs()
            }
        };
        let (u, v) = (sigma1 * mu1, sigma2 * mu2);
        match self.kind {
            RegularizerKind::Directional => dist(u + v),
            RegularizerKind::Symmetric => dist(u + v).min(dist(u - v)),
        }
    }
}

/// `sinc` that returns exactly zero when `z` is a nonzero multiple of pi to within rounding.
fn snapped_sinc(z: f64) -> f64 {
    let n = (z / PI).round();
    if n != 0.0 && (z - n * PI).abs() <= 8.0 * f64::EPSILON * z.abs() {
        0.0
    } else {
        sinc(z)
    }
}

/// The regularizer at `x` with the problem's type bounds.
pub fn alpha(x: f64, mu1: f64, mu2: f64, reg: &RegularizerConfig, bounds: &TypeBounds) -> f64 {
    let (s1, s2) = bounds.sigmas(x);
    reg.value(s1, s2, mu1, mu2)
}

/// `alpha(x) * y(x)` by one direct IVP solve.
pub fn regularized_value(
    problem: &Problem,
    x: f64,
    mu1: f64,
    mu2: f64,
    reg: &RegularizerConfig,
) -> Result<f64, SamplingError> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(SamplingError::EvalPoint(x));
    }
    let s1 = problem.sigma(Weight::W1, x)?;
    let s2 = problem.sigma(Weight::W2, x)?;
    let y = solve_ivp(problem, mu1, mu2, &[x]).map_err(|source| SamplingError::Ivp { j: 0, k: 0, source })?.last().y;
    Ok(reg.value(s1, s2, mu1, mu2) * y)
}

/// Content hash of everything a table depends on.
pub fn fingerprint(problem: &Problem, x_eval: f64, n: usize, reg: &RegularizerConfig) -> String {
    let text = format!(
        "{};N={};m={};x_eval={};regularizer={}",
        problem.canonical(),
        n,
        reg.m(),
        x_eval,
        reg.kind()
    );
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillMode {
    /// Solve only the independent part of the lattice and mirror the rest.
    #[default]
    Mirrored,
    /// Solve every lattice point.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FillStats {
    pub ivp_solves: usize,
    pub entries: usize,
}

/// Regularized samples on the `(2N+1) x (2N+1)` lattice at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    x_eval: f64,
    beta1: f64,
    beta2: f64,
    n: usize,
    regularizer: RegularizerConfig,
    samples: Vec<f64>,
    fingerprint: String,
}

impl SampleTable {
    pub fn from_parts(
        x_eval: f64,
        beta1: f64,
        beta2: f64,
        n: usize,
        regularizer: RegularizerConfig,
        samples: Vec<f64>,
        fingerprint: String,
    ) -> Result<Self, SamplingError> {
        if n == 0 {
            return Err(SamplingError::Truncation);
        }
        let width = 2 * n + 1;
        if samples.len() != width * width {
            return Err(SamplingError::CacheFormat {
                line: 0,
                message: format!("expected {} samples, got {}", width * width, samples.len()),
            });
        }
        Ok(SampleTable { x_eval, beta1, beta2, n, regularizer, samples, fingerprint })
    }

    pub fn x_eval(&self) -> f64 {
        self.x_eval
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn regularizer(&self) -> &RegularizerConfig {
        &self.regularizer
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// `sigma_i(x_eval)`, recovered as `beta_i / (m + 1)`.
    pub fn sigmas(&self) -> (f64, f64) {
        let d = self.regularizer.m() as f64 + 1.0;
        (self.beta1 / d, self.beta2 / d)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (PI / self.beta1, PI / self.beta2)
    }

    /// Largest `|mu1|`, `|mu2|` covered by the lattice.
    pub fn hull(&self) -> (f64, f64) {
        let n = self.n as f64;
        (n * PI / self.beta1, n * PI / self.beta2)
    }

    pub fn lattice_point(&self, j: i64, k: i64) -> (f64, f64) {
        (j as f64 * (PI / self.beta1), k as f64 * (PI / self.beta2))
    }

    fn index(&self, j: i64, k: i64) -> usize {
        let n = self.n as i64;
        let width = 2 * n + 1;
        ((j + n) * width + (k + n)) as usize
    }

    pub fn sample(&self, j: i64, k: i64) -> f64 {
        self.samples[self.index(j, k)]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn max_abs_sample(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    pub fn indices(&self) -> impl Iterator<Item = (i64, i64)> {
        let n = self.n as i64;
        (-n..=n).flat_map(move |j| (-n..=n).map(move |k| (j, k)))
    }

    pub fn alpha(&self, mu1: f64, mu2: f64) -> f64 {
        let (s1, s2) = self.sigmas();
        self.regularizer.value(s1, s2, mu1, mu2)
    }

    pub fn zero_line_distance(&self, mu1: f64, mu2: f64) -> f64 {
        let (s1, s2) = self.sigmas();
        self.regularizer.zero_line_distance(s1, s2, mu1, mu2)
    }

    /// Same lattice, samples multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SampleTable {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|s| *s *= factor);
        out
    }

    /// Truncated cardinal series at `(mu1, mu2)`.
    ///
    /// Terms `j` and `-j` (and `k`, `-k`) are added in pairs from the centre
    /// outwards, so a mirrored table gives a result that is exactly even in
    /// each parameter.
    pub fn cardinal_eval(&self, mu1: f64, mu2: f64) -> f64 {
        let k1 = kernel_row(self.beta1, mu1, self.n);
        let k2 = kernel_row(self.beta2, mu2, self.n);
        let n = self.n;
        let width = 2 * n + 1;
        let row_sum = |j: usize| {
            let row = &self.samples[j * width..(j + 1) * width];
            let mut acc = row[n] * k2[n];
            for d in 1..=n {
                acc += row[n - d] * k2[n - d] + row[n + d] * k2[n + d];
            }
            acc
        };
        let mut total = k1[n] * row_sum(n);
        for d in 1..=n {
            let (lo, hi) = (k1[n - d], k1[n + d]);
            let a = if lo == 0.0 { 0.0 } else { lo * row_sum(n - d) };
            let b = if hi == 0.0 { 0.0 } else { hi * row_sum(n + d) };
            total += a + b;
        }
        total
    }

    /// Size of the outer lattice band's contribution at `(mu1, mu2)`: the gap
    /// between the full series and the one truncated at `N - max(1, N/10)`.
    /// Tracks the truncation error of the series.
    pub fn truncation_estimate(&self, mu1: f64, mu2: f64) -> f64 {
        let k1 = kernel_row(self.beta1, mu1, self.n);
        let k2 = kernel_row(self.beta2, mu2, self.n);
        let n = self.n;
        let inner = n - (n / 10).max(1);
        let width = 2 * n + 1;
        let mut outer = 0.0;
        for (j, kj) in k1.iter().enumerate() {
            if *kj == 0.0 {
                continue;
            }
            let row = &self.samples[j * width..(j + 1) * width];
            let edge_row = j.abs_diff(n) > inner;
            let acc: f64 = row
                .iter()
                .zip(&k2)
                .enumerate()
                .filter(|(k, _)| edge_row || k.abs_diff(n) > inner)
                .map(|(_, (s, kk))| s * kk)
                .sum();
            outer += kj * acc;
        }
        outer.abs()
    }

    pub fn to_cache_text(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 32 + 256);
        out.push_str(&format!("# x_eval={}\n", self.x_eval));
        out.push_str(&format!("# beta1={}\n", self.beta1));
        out.push_str(&format!("# beta2={}\n", self.beta2));
        out.push_str(&format!("# N={}\n", self.n));
        out.push_str(&format!("# m={}\n", self.regularizer.m()));
        out.push_str(&format!("# regularizer={}\n", self.regularizer.kind()));
        out.push_str(&format!("# fingerprint={}\n", self.fingerprint));
        for (j, k) in self.indices() {
            out.push_str(&format!("{j},{k},{:.16e}\n", self.sample(j, k)));
        }
        out
    }

    pub fn from_cache_text(text: &str) -> Result<Self, SamplingError> {
        let bad = |line: usize, message: String| SamplingError::CacheFormat { line, message };
        let mut header = std::collections::HashMap::new();
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            if let Some(rest) = raw.strip_prefix('#') {
                let (key, value) =
                    rest.trim().split_once('=').ok_or_else(|| bad(line, "header must be `# key=value`".into()))?;
                header.insert(key.trim().to_string(), (line, value.trim().to_string()));
                continue;
            }
            let mut parts = raw.split(',');
            let (Some(j), Some(k), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad(line, "expected `j,k,value`".into()));
            };
            let j: i64 = j.trim().parse().map_err(|_| bad(line, format!("bad index '{j}'")))?;
            let k: i64 = k.trim().parse().map_err(|_| bad(line, format!("bad index '{k}'")))?;
            let v: f64 = v.trim().parse().map_err(|_| bad(line, format!("bad value '{v}'")))?;
            rows.push((line, j, k, v));
        }
        fn field<T: FromStr>(
            header: &std::collections::HashMap<String, (usize, String)>,
            key: &str,
        ) -> Result<T, SamplingError> {
            let (line, value) = header
                .get(key)
                .ok_or_else(|| SamplingError::CacheFormat { line: 0, message: format!("missing header '{key}'") })?;
            value
                .parse()
                .map_err(|_| SamplingError::CacheFormat { line: *line, message: format!("bad value for '{key}'") })
        }
        let x_eval: f64 = field(&header, "x_eval")?;
        let beta1: f64 = field(&header, "beta1")?;
        let beta2: f64 = field(&header, "beta2")?;
        let n: usize = field(&header, "N")?;
        let m: u32 = field(&header, "m")?;
        let kind: RegularizerKind = match header.get("regularizer") {
            Some((line, v)) => v.parse().map_err(|e| bad(*line, e))?,
            None => RegularizerKind::Directional,
        };
        let fp: String = field(&header, "fingerprint")?;
        let regularizer = RegularizerConfig::new(m, kind)?;
        if n == 0 {
            return Err(SamplingError::Truncation);
        }
        let width = 2 * n + 1;
        let mut samples = vec![f64::NAN; width * width];
        let ni = n as i64;
        for (line, j, k, v) in rows {
            if j.abs() > ni || k.abs() > ni {
                return Err(bad(line, format!("index ({j}, {k}) outside N = {n}")));
            }
            samples[((j + ni) * (2 * ni + 1) + (k + ni)) as usize] = v;
        }
        if samples.iter().any(|s| s.is_nan()) {
            return Err(bad(0, "lattice is incomplete".into()));
        }
        SampleTable::from_parts(x_eval, beta1, beta2, n, regularizer, samples, fp)
    }

    pub fn write_cache(&self, path: &Path) -> Result<(), SamplingError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_cache_text())?;
        Ok(())
    }

    /// Reads a cache file and rejects it unless its fingerprint matches `expected`.
    pub fn read_cache(path: &Path, expected: &str) -> Result<Self, SamplingError> {
        let table = Self::from_cache_text(&fs::read_to_string(path)?)?;
        if table.fingerprint != expected {
            return Err(SamplingError::Fingerprint { expected: expected.to_string(), found: table.fingerprint });
        }
        Ok(table)
    }
}

/// `sinc(beta mu - j pi)` for `j = -n..=n`, using `sin(beta mu - j pi) = (-1)^j sin(beta mu)`.
fn kernel_row(beta: f64, mu: f64, n: usize) -> Vec<f64> {
    let t = beta * mu;
    let n = n as i64;
    // on a lattice line the row is a unit vector (or zero outside the lattice)
    let r = t / PI;
    let nearest = r.round();
    if (r - nearest).abs() <= 4.0 * f64::EPSILON * nearest.abs().max(1.0) {
        let at = nearest as i64;
        return (-n..=n).map(|j| if j == at { 1.0 } else { 0.0 }).collect();
    }
    let s = t.sin();
    (-n..=n)
        .map(|j| {
            let z = t - j as f64 * PI;
            if z.abs() < SINC_SERIES_CUTOFF {
                1.0 - z * z / 6.0
            } else if j % 2 == 0 {
                s / z
            } else {
                -s / z
            }
        })
        .collect()
}

/// Fill a sample table at `x_eval`. IVP solves run in parallel on the current
/// rayon pool; each lattice entry has a fixed slot, so the result does not
/// depend on the number of workers.
pub fn build_sample_table(
    problem: &Problem,
    x_eval: f64,
    n: usize,
    reg: RegularizerConfig,
    fill: FillMode,
) -> Result<(SampleTable, FillStats), SamplingError> {
    if n == 0 {
        return Err(SamplingError::Truncation);
    }
    if !(x_eval > 0.0 && x_eval <= 1.0) {
        return Err(SamplingError::EvalPoint(x_eval));
    }
    let factor = reg.m() as f64 + 1.0;
    let beta1 = factor * problem.sigma(Weight::W1, x_eval)?;
    let beta2 = factor * problem.sigma(Weight::W2, x_eval)?;
    let ni = n as i64;

    let independent: Vec<(i64, i64)> = match (fill, reg.kind()) {
        (FillMode::Full, _) => (-ni..=ni).flat_map(|j| (-ni..=ni).map(move |k| (j, k))).collect(),
        (FillMode::Mirrored, RegularizerKind::Symmetric) => {
            (0..=ni).flat_map(|j| (0..=ni).map(move |k| (j, k))).collect()
        }
        // only (j, k) -> (-j, -k) is a symmetry here
        (FillMode::Mirrored, RegularizerKind::Directional) => (-ni..=ni)
            .flat_map(|j| (0..=ni).map(move |k| (j, k)))
            .filter(|&(j, k)| k > 0 || j >= 0)
            .collect(),
    };

    let step1 = PI / beta1;
    let step2 = PI / beta2;
    let values: Vec<f64> = independent
        .par_iter()
        .map(|&(j, k)| {
            let a = reg.lattice_value(j, k);
            let (mu1, mu2) = (j as f64 * step1, k as f64 * step2);
            let y = solve_ivp(problem, mu1, mu2, &[x_eval])
                .map_err(|source| SamplingError::Ivp { j, k, source })?
                .last()
                .y;
            Ok(a * y)
        })
        .collect::<Result<_, SamplingError>>()?;

    let width = 2 * n + 1;
    let mut samples = vec![f64::NAN; width * width];
    let slot = |j: i64, k: i64| ((j + ni) * (2 * ni + 1) + (k + ni)) as usize;
    for (&(j, k), &v) in independent.iter().zip(&values) {
        samples[slot(j, k)] = v;
        if fill == FillMode::Mirrored {
            match reg.kind() {
                RegularizerKind::Symmetric => {
                    samples[slot(-j, k)] = v;
                    samples[slot(j, -k)] = v;
                    samples[slot(-j, -k)] = v;
                }
                RegularizerKind::Directional => samples[slot(-j, -k)] = v,
            }
        }
    }
    debug_assert!(samples.iter().all(|s| !s.is_nan()));

    let table = SampleTable {
        x_eval,
        beta1,
        beta2,
        n,
        regularizer: reg,
        samples,
        fingerprint: fingerprint(problem, x_eval, n, &reg),
    };
    Ok((table, FillStats { ivp_solves: independent.len(), entries: width * width }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SurfaceId {
    /// Boundary function at `x = 1`.
    B1,
    /// Boundary function at `x = c`.
    B2,
}

impl fmt::Display for SurfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurfaceId::B1 => "B1",
            SurfaceId::B2 => "B2",
        })
    }
}

impl FromStr for SurfaceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B1" | "b1" => Ok(SurfaceId::B1),
            "B2" | "b2" => Ok(SurfaceId::B2),
            other => Err(format!("unknown surface '{other}' (expected B1 or B2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceMode {
    /// The cardinal series itself, an approximation of `alpha * y`.
    Regularized,
    /// The cardinal series divided by `alpha`, an approximation of `y`.
    Deregularized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharValue {
    pub value: f64,
    /// Set when `alpha` was too small to divide by and the regularized value was returned.
    pub fallback: bool,
}

/// One boundary function reconstructed from its samples.
#[derive(Debug, Clone)]
pub struct CharacteristicSurface {
    table: Arc<SampleTable>,
    mode: SurfaceMode,
    id: SurfaceId,
}

impl CharacteristicSurface {
    pub fn new(table: Arc<SampleTable>, mode: SurfaceMode, id: SurfaceId) -> Self {
        CharacteristicSurface { table, mode, id }
    }

    pub fn regularized(table: Arc<SampleTable>, id: SurfaceId) -> Self {
        Self::new(table, SurfaceMode::Regularized, id)
    }

    pub fn with_mode(&self, mode: SurfaceMode) -> Self {
        CharacteristicSurface { table: self.table.clone(), mode, id: self.id }
    }

    pub fn table(&self) -> &SampleTable {
        &self.table
    }

    pub fn mode(&self) -> SurfaceMode {
        self.mode
    }

    pub fn id(&self) -> SurfaceId {
        self.id
    }

    pub fn characteristic(&self, mu1: f64, mu2: f64) -> CharValue {
        let series = self.table.cardinal_eval(mu1, mu2);
        match self.mode {
            SurfaceMode::Regularized => CharValue { value: series, fallback: false },
            SurfaceMode::Deregularized => self.deregularize(series, mu1, mu2),
        }
    }

    /// Shorthand for `characteristic(..).value`.
    pub fn value(&self, mu1: f64, mu2: f64) -> f64 {
        self.characteristic(mu1, mu2).value
    }

    /// Deregularized value regardless of this surface's mode.
    pub fn deregularized(&self, mu1: f64, mu2: f64) -> CharValue {
        let series = self.table.cardinal_eval(mu1, mu2);
        self.deregularize(series, mu1, mu2)
    }

    fn deregularize(&self, series: f64, mu1: f64, mu2: f64) -> CharValue {
        let a = self.table.alpha(mu1, mu2);
        if a.abs() < 1e-8 * (1.0 + series.abs()) {
            CharValue { value: series, fallback: true }
        } else {
            CharValue { value: series / a, fallback: false }
        }
    }
}
