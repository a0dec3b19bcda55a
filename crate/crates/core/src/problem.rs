//! Two-parameter Sturm–Liouville problems
//!
//! ```text
//! -y'' + q y = (mu1^2 w1 + mu2^2 w2) y   on (0, 1),   y(0) = y(c) = y(1) = 0
//! ```
//!
//! and the growth-type functions `sigma_i(x) = 2 sqrt(x * int_0^x w_i)` that fix
//! the sampling lattice.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::coeffexpr::{CoeffExpr, EvalError, ParseError};
use crate::quadrature::{self, QuadratureError, Tolerance};

/// Points used to check weight positivity.
pub const VALIDATION_GRID: usize = 1025;
/// Knots of the cached cumulative-integral table.
pub const SIGMA_GRID: usize = 2049;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weight {
    W1,
    W2,
}

impl Weight {
    pub fn index(self) -> usize {
        match self {
            Weight::W1 => 0,
            Weight::W2 => 1,
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weight::W1 => "w1",
            Weight::W2 => "w2",
        })
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("interior point c = {0} must lie strictly inside (0, 1)")]
    InteriorPoint(f64),
    #[error("weight {weight} is not positive at x = {x} (value {value})")]
    NonPositiveWeight { weight: Weight, x: f64, value: f64 },
    #[error("cannot evaluate {name}: {source}")]
    Eval { name: &'static str, source: EvalError },
    #[error("x = {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("quadrature for sigma of {weight} failed: {source}")]
    Quadrature { weight: Weight, source: QuadratureError<EvalError> },
}

/// Syntax problems in a problem file; `line` is 1-based.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    MissingEquals { line: usize },
    #[error("line {line}: unknown key '{key}' (expected w1, w2, q or c)")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("missing key '{0}'")]
    MissingKey(&'static str),
    #[error("line {line}: key '{key}': {source}")]
    Expr { line: usize, key: &'static str, source: ParseError },
    #[error("line {line}: key 'c': '{value}' is not a number")]
    BadNumber { line: usize, value: String },
    #[error(transparent)]
    Invalid(#[from] ProblemError),
}

/// A validated problem. Construction goes through [`Problem::new`], which
/// checks `0 < c < 1` and the positivity of both weights.
#[derive(Debug, Clone)]
pub struct Problem {
    w1: CoeffExpr,
    w2: CoeffExpr,
    q: CoeffExpr,
    c: f64,
    weight_max: [f64; 2],
}

impl Problem {
    /// Weights must be positive on (0, 1] and nonnegative at 0 (the linear
    /// weight `x` vanishes at the left end). Smoothness is the caller's
    /// responsibility.
    pub fn new(w1: CoeffExpr, w2: CoeffExpr, q: CoeffExpr, c: f64) -> Result<Self, ProblemError> {
        if !(c > 0.0 && c < 1.0) {
            return Err(ProblemError::InteriorPoint(c));
        }
        let mut weight_max = [0.0f64; 2];
        for (weight, expr, name) in [(Weight::W1, &w1, "w1"), (Weight::W2, &w2, "w2")] {
            for i in 0..VALIDATION_GRID {
                let x = i as f64 / (VALIDATION_GRID - 1) as f64;
                let value = expr.eval(x).map_err(|source| ProblemError::Eval { name, source })?;
                let ok = if i == 0 { value >= 0.0 } else { value > 0.0 };
                if !ok {
                    return Err(ProblemError::NonPositiveWeight { weight, x, value });
                }
                weight_max[weight.index()] = weight_max[weight.index()].max(value);
            }
        }
        for i in 0..VALIDATION_GRID {
            let x = i as f64 / (VALIDATION_GRID - 1) as f64;
            q.eval(x).map_err(|source| ProblemError::Eval { name: "q", source })?;
        }
        Ok(Problem { w1, w2, q, c, weight_max })
    }

    /// The two-parameter example with `w1 = 1`, `w2 = x`, `q = 0`, `c = 0.7`.
    pub fn airy_example() -> Self {
        Problem::new(
            CoeffExpr::parse("1").expect("literal"),
            CoeffExpr::parse("x").expect("literal"),
            CoeffExpr::parse("0").expect("literal"),
            0.7,
        )
        .expect("example problem is valid")
    }

    pub fn w1(&self) -> &CoeffExpr {
        &self.w1
    }

    pub fn w2(&self) -> &CoeffExpr {
        &self.w2
    }

    pub fn q(&self) -> &CoeffExpr {
        &self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn weight(&self, which: Weight) -> &CoeffExpr {
        match which {
            Weight::W1 => &self.w1,
            Weight::W2 => &self.w2,
        }
    }

    /// Largest weight value seen on the validation grid.
    pub fn weight_max(&self, which: Weight) -> f64 {
        self.weight_max[which.index()]
    }

    /// `sigma_i(x)` by direct adaptive quadrature.
    pub fn sigma(&self, which: Weight, x: f64) -> Result<f64, ProblemError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(ProblemError::OutOfRange(x));
        }
        let expr = self.weight(which);
        let (integral, _) = quadrature::integrate(|t| expr.eval(t), 0.0, x, Tolerance::default())
            .map_err(|source| ProblemError::Quadrature { weight: which, source })?;
        Ok(2.0 * (x * integral).max(0.0).sqrt())
    }

    pub fn type_bounds(&self) -> Result<TypeBounds, ProblemError> {
        TypeBounds::new(self)
    }

    /// Canonical text used for hashing and for the config file round trip.
    pub fn canonical(&self) -> String {
        format!("w1={};w2={};q={};c={}", self.w1.source(), self.w2.source(), self.q.source(), self.c)
    }

    pub fn to_config_string(&self) -> String {
        format!("w1 = {}\nw2 = {}\nq = {}\nc = {}\n", self.w1.source(), self.w2.source(), self.q.source(), self.c)
    }
}

/// Parses the `key = value` problem file format. `#` starts a comment.
impl FromStr for Problem {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut exprs: [Option<CoeffExpr>; 3] = [None, None, None];
        let mut c: Option<f64> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::MissingEquals { line });
            };
            let (key, value) = (key.trim(), value.trim());
            let slot = match key {
                "w1" => Some((0, "w1")),
                "w2" => Some((1, "w2")),
                "q" => Some((2, "q")),
                "c" => None,
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            };
            match slot {
                Some((i, name)) => {
                    if exprs[i].is_some() {
                        return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
                    }
                    let e = CoeffExpr::parse(value).map_err(|source| ConfigError::Expr { line, key: name, source })?;
                    exprs[i] = Some(e);
                }
                None => {
                    if c.is_some() {
                        return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
                    }
                    let v: f64 = value.parse().map_err(|_| ConfigError::BadNumber { line, value: value.to_string() })?;
                    c = Some(v);
                }
            }
        }
        let [w1, w2, q] = exprs;
        let w1 = w1.ok_or(ConfigError::MissingKey("w1"))?;
        let w2 = w2.ok_or(ConfigError::MissingKey("w2"))?;
        let q = q.ok_or(ConfigError::MissingKey("q"))?;
        let c = c.ok_or(ConfigError::MissingKey("c"))?;
        Ok(Problem::new(w1, w2, q, c)?)
    }
}

/// Cached `sigma_1`, `sigma_2`: cumulative weight integrals on a uniform grid,
/// interpolated by monotone cubic Hermite segments whose slopes are the weight
/// values themselves.
#[derive(Debug, Clone)]
pub struct TypeBounds {
    cumulative: [Vec<f64>; 2],
    slopes: [Vec<f64>; 2],
}

impl TypeBounds {
    pub fn new(problem: &Problem) -> Result<Self, ProblemError> {
        let h = 1.0 / (SIGMA_GRID - 1) as f64;
        let tol = Tolerance::default();
        let mut cumulative: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut slopes: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for which in [Weight::W1, Weight::W2] {
            let expr = problem.weight(which);
            let mut acc = 0.0;
            let mut cum = Vec::with_capacity(SIGMA_GRID);
            let mut der = Vec::with_capacity(SIGMA_GRID);
            cum.push(0.0);
            for i in 0..SIGMA_GRID - 1 {
                let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                let (piece, _) = quadrature::integrate(|t| expr.eval(t), a, b, tol)
                    .map_err(|source| ProblemError::Quadrature { weight: which, source })?;
                acc += piece;
                cum.push(acc);
            }
            for i in 0..SIGMA_GRID {
                let x = i as f64 * h;
                let w = expr.eval(x).map_err(|source| ProblemError::Eval { name: "weight", source })?;
                der.push(w.max(0.0));
            }
            limit_slopes(&cum, &mut der, h);
            cumulative[which.index()] = cum;
            slopes[which.index()] = der;
        }
        Ok(TypeBounds { cumulative, slopes })
    }

    /// `int_0^x w_i`.
    pub fn integral(&self, which: Weight, x: f64) -> f64 {
        let cum = &self.cumulative[which.index()];
        let der = &self.slopes[which.index()];
        let x = x.clamp(0.0, 1.0);
        let n = SIGMA_GRID - 1;
        let h = 1.0 / n as f64;
        let i = ((x * n as f64).floor() as usize).min(n - 1);
        let t = (x - i as f64 * h) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * cum[i] + h10 * h * der[i] + h01 * cum[i + 1] + h11 * h * der[i + 1]
    }

    pub fn sigma(&self, which: Weight, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        2.0 * (x * self.integral(which, x)).max(0.0).sqrt()
    }

    pub fn sigmas(&self, x: f64) -> (f64, f64) {
        (self.sigma(Weight::W1, x), self.sigma(Weight::W2, x))
    }
}

/// Fritsch–Carlson limiter: keeps each Hermite segment monotone.
fn limit_slopes(values: &[f64], slopes: &mut [f64], h: f64) {
    for i in 0..values.len() - 1 {
        let secant = (values[i + 1] - values[i]) / h;
        if secant <= 0.0 {
            slopes[i] = 0.0;
            slopes[i + 1] = 0.0;
            continue;
        }
        let a = slopes[i] / secant;
        let b = slopes[i + 1] / secant;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            slopes[i] = tau * a * secant;
            slopes[i + 1] = tau * b * secant;
        }
    }
}
