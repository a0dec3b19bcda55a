//! End-to-end runs shared by the command line and the acceptance checks:
//! cached sample tables, the solve pipeline, and the CSV formats.

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use thiserror::Error;

use crate::problem::Problem;
use crate::sampling::{
    build_sample_table, fingerprint, CharacteristicSurface, FillMode, FillStats, RegularizerConfig, SampleTable,
    SamplingError, SurfaceId,
};
use crate::solver::{
    find_eigenpairs, refine_all, CurveSegment, Diagnostic, EigenPair, FindOptions, SearchBox,
};

/// Environment variable naming the table cache directory.
pub const CACHE_ENV: &str = "TWOPARAM_SL_CACHE";
pub const DEFAULT_CACHE_DIR: &str = ".twoparam-sl-cache";

pub const EIGENPAIR_HEADER: &str = "mu1,mu2,lambda1,lambda2,residual1,residual2,oracle_refined";
pub const CURVE_HEADER: &str = "curve_id,surface,mu1,mu2";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Cache directory: explicit flag, then the environment variable, then the default.
pub fn resolve_cache_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match env::var_os(CACHE_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_CACHE_DIR),
    }
}

pub fn cache_path(dir: &Path, fingerprint: &str) -> PathBuf {
    dir.join(format!("table-{fingerprint}.txt"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableSource {
    Built(FillStats),
    Cache(PathBuf),
}

/// Reads the table from `cache_dir` if a file with a matching fingerprint
/// exists, otherwise builds it (and writes it when a cache directory is given).
pub fn load_or_build(
    problem: &Problem,
    x_eval: f64,
    n: usize,
    reg: RegularizerConfig,
    cache_dir: Option<&Path>,
) -> Result<(SampleTable, TableSource), RunError> {
    let fp = fingerprint(problem, x_eval, n, &reg);
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, &fp);
        if path.exists() {
            match SampleTable::read_cache(&path, &fp) {
                Ok(t) if t.n() == n && t.regularizer() == &reg && t.x_eval() == x_eval => {
                    info!("sample table for x = {x_eval} loaded from {}", path.display());
                    return Ok((t, TableSource::Cache(path)));
                }
                Ok(_) => warn!("{}: contents do not match the request, rebuilding", path.display()),
                Err(e) => warn!("{}: {e}; rebuilding", path.display()),
            }
        }
    }
    let (table, stats) = build_sample_table(problem, x_eval, n, reg, FillMode::Mirrored)?;
    info!("sample table for x = {x_eval} built with {} IVP solves", stats.ivp_solves);
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, &fp);
        table.write_cache(&path).map_err(|e| match e {
            SamplingError::Io(source) => RunError::Io { path: path.clone(), source },
            other => RunError::Sampling(other),
        })?;
    }
    Ok((table, TableSource::Built(stats)))
}

/// Regularized surfaces at `x = 1` and `x = c`.
pub fn surfaces(
    problem: &Problem,
    n: usize,
    reg: RegularizerConfig,
    cache_dir: Option<&Path>,
) -> Result<(CharacteristicSurface, CharacteristicSurface, [TableSource; 2]), RunError> {
    let (t1, src1) = load_or_build(problem, 1.0, n, reg, cache_dir)?;
    let (t2, src2) = load_or_build(problem, problem.c(), n, reg, cache_dir)?;
    Ok((
        CharacteristicSurface::regularized(Arc::new(t1), SurfaceId::B1),
        CharacteristicSurface::regularized(Arc::new(t2), SurfaceId::B2),
        [src1, src2],
    ))
}

#[derive(Debug, Clone)]
pub struct SolveSettings {
    pub n: usize,
    pub regularizer: RegularizerConfig,
    pub search: SearchBox,
    pub find: FindOptions,
    /// Report sampled roots that direct shooting could not confirm.
    pub keep_unconfirmed: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            n: 50,
            regularizer: RegularizerConfig::default(),
            search: SearchBox::default(),
            find: FindOptions::default(),
            keep_unconfirmed: false,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Reported pairs, sorted.
    pub pairs: Vec<EigenPair>,
    /// Roots of the sampled surfaces before refinement.
    pub sampled: Vec<EigenPair>,
    /// Sampled roots that direct shooting did not confirm.
    pub unconfirmed: Vec<EigenPair>,
    pub diagnostics: Vec<Diagnostic>,
    pub searched: Option<SearchBox>,
    pub sources: [TableSource; 2],
}

/// Tables, sampled roots, refinement by direct shooting.
pub fn solve(problem: &Problem, settings: &SolveSettings) -> Result<SolveOutcome, RunError> {
    let (s1, s2, sources) = surfaces(problem, settings.n, settings.regularizer, settings.cache_dir.as_deref())?;
    let search = find_eigenpairs(&s1, &s2, &settings.search, &settings.find, Some(problem));
    let (refined, more) = refine_all(problem, &search.pairs, settings.find.dedup_tol);
    let mut diagnostics = search.diagnostics;
    diagnostics.extend(more);
    let (confirmed, unconfirmed): (Vec<EigenPair>, Vec<EigenPair>) =
        refined.into_iter().partition(|p| p.refined_by_oracle);
    if !unconfirmed.is_empty() {
        warn!(
            "{} sampled root(s) were not confirmed by direct shooting{}",
            unconfirmed.len(),
            if settings.keep_unconfirmed { "" } else { " and are not reported" }
        );
    }
    let mut pairs = confirmed;
    if settings.keep_unconfirmed {
        pairs.extend(unconfirmed.iter().copied());
        pairs.sort_by(crate::solver::eigenpair_order);
    }
    Ok(SolveOutcome { pairs, sampled: search.pairs, unconfirmed, diagnostics, searched: search.searched, sources })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn eigenpairs_csv(pairs: &[EigenPair]) -> String {
    let mut out = String::from(EIGENPAIR_HEADER);
    out.push('\n');
    for p in pairs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(p.mu1),
            num(p.mu2),
            num(p.lambda1),
            num(p.lambda2),
            num(p.residual1),
            num(p.residual2),
            p.refined_by_oracle
        );
    }
    out
}

/// One row of an eigenpair CSV file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPairRecord {
    pub mu1: f64,
    pub mu2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub oracle_refined: bool,
}

impl From<&EigenPair> for EigenPairRecord {
    fn from(p: &EigenPair) -> Self {
        EigenPairRecord {
            mu1: p.mu1,
            mu2: p.mu2,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            residual1: p.residual1,
            residual2: p.residual2,
            oracle_refined: p.refined_by_oracle,
        }
    }
}

fn csv_rows<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>, RunError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(RunError::Csv { line: 1, message: format!("expected header '{header}'") }),
    }
    Ok(lines.filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(line: usize, value: &str, name: &str) -> Result<T, RunError> {
    value.parse().map_err(|_| RunError::Csv { line, message: format!("bad {name} '{value}'") })
}

pub fn parse_eigenpairs_csv(text: &str) -> Result<Vec<EigenPairRecord>, RunError> {
    let mut out = Vec::new();
    for (line, cols) in csv_rows(text, EIGENPAIR_HEADER)? {
        if cols.len() != 7 {
            return Err(RunError::Csv { line, message: format!("expected 7 columns, got {}", cols.len()) });
        }
        out.push(EigenPairRecord {
            mu1: field(line, cols[0], "mu1")?,
            mu2: field(line, cols[1], "mu2")?,
            lambda1: field(line, cols[2], "lambda1")?,
            lambda2: field(line, cols[3], "lambda2")?,
            residual1: field(line, cols[4], "residual1")?,
            residual2: field(line, cols[5], "residual2")?,
            oracle_refined: field(line, cols[6], "oracle_refined")?,
        });
    }
    Ok(out)
}

pub fn curves_csv(curves: &[CurveSegment]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for (id, c) in curves.iter().enumerate() {
        for p in &c.points {
            let _ = writeln!(out, "{id},{},{},{}", c.surface_id, num(p.0), num(p.1));
        }
    }
    out
}

/// Points grouped by curve id, in file order.
pub fn parse_curves_csv(text: &str) -> Result<Vec<CurveSegment>, RunError> {
    let mut out: Vec<(usize, CurveSegment)> = Vec::new();
    for (line, cols) in csv_rows(text, CURVE_HEADER)? {
        if cols.len() != 4 {
            return Err(RunError::Csv { line, message: format!("expected 4 columns, got {}", cols.len()) });
        }
        let id: usize = field(line, cols[0], "curve_id")?;
        let surface: SurfaceId = cols[1].parse().map_err(|message| RunError::Csv { line, message })?;
        let p = (field(line, cols[2], "mu1")?, field(line, cols[3], "mu2")?);
        match out.last_mut() {
            Some((last, seg)) if *last == id && seg.surface_id == surface => seg.points.push(p),
            _ => out.push((id, CurveSegment { surface_id: surface, points: vec![p], arc_step: f64::NAN })),
        }
    }
    Ok(out.into_iter().map(|(_, s)| s).collect())
}

/// Side-by-side table of refined and sampled roots.
pub fn summary_table(pairs: &[EigenPair]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>3}  {:>20}  {:>20}  {:>20}  {:>20}  {:>7}",
        "#", "mu1 (direct)", "mu2 (direct)", "mu1 (sampled)", "mu2 (sampled)", "refined"
    );
    for (i, p) in pairs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>3}  {:>20.15}  {:>20.15}  {:>20.15}  {:>20.15}  {:>7}",
            i + 1,
            p.mu1,
            p.mu2,
            p.sampled.0,
            p.sampled.1,
            if p.refined_by_oracle { "yes" } else { "no" }
        );
    }
    out
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(mu1: f64, mu2: f64, refined: bool) -> EigenPair {
        EigenPair::new((mu1, mu2), (1e-12, 3e-13), (mu1 + 1e-4, mu2), false, refined)
    }

    #[test]
    fn eigenpair_csv_round_trip() {
        let pairs = vec![pair(7.788149097670813, 7.5908224365786845, true), pair(0.1, 1.0 / 3.0, false)];
        let text = eigenpairs_csv(&pairs);
        assert!(text.starts_with("mu1,mu2,lambda1,lambda2,residual1,residual2,oracle_refined\n"));
        let back = parse_eigenpairs_csv(&text).unwrap();
        let expected: Vec<EigenPairRecord> = pairs.iter().map(EigenPairRecord::from).collect();
        assert_eq!(back, expected);
        assert!(parse_eigenpairs_csv("mu1,mu2\n").is_err());
        assert!(parse_eigenpairs_csv(&text.replace("true", "yes")).is_err());
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(eigenpairs_csv(&[]), format!("{EIGENPAIR_HEADER}\n"));
        assert!(parse_eigenpairs_csv(&eigenpairs_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn curve_csv_round_trip() {
        let curves = vec![
            CurveSegment { surface_id: SurfaceId::B1, points: vec![(1.0, 2.0), (1.5, 2.25)], arc_step: 0.5 },
            CurveSegment { surface_id: SurfaceId::B2, points: vec![(0.1, 0.2)], arc_step: 0.5 },
        ];
        let back = parse_curves_csv(&curves_csv(&curves)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].points, curves[0].points);
        assert_eq!(back[1].surface_id, SurfaceId::B2);
    }

    #[test]
    fn cache_dir_precedence() {
        let flag = PathBuf::from("/tmp/explicit");
        assert_eq!(resolve_cache_dir(Some(&flag)), flag);
    }

    #[test]
    fn cache_hit_skips_solves() {
        let dir = tempfile::tempdir().unwrap();
        let p = Problem::airy_example();
        let reg = RegularizerConfig::default();
        let (a, src) = load_or_build(&p, 1.0, 3, reg, Some(dir.path())).unwrap();
        assert!(matches!(src, TableSource::Built(_)));
        let (b, src) = load_or_build(&p, 1.0, 3, reg, Some(dir.path())).unwrap();
        assert!(matches!(src, TableSource::Cache(_)));
        assert_eq!(a, b);
        // a different N does not hit the same file
        let (_, src) = load_or_build(&p, 1.0, 4, reg, Some(dir.path())).unwrap();
        assert!(matches!(src, TableSource::Built(_)));
    }

    #[test]
    fn corrupt_cache_is_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let p = Problem::airy_example();
        let reg = RegularizerConfig::default();
        let (a, _) = load_or_build(&p, 1.0, 2, reg, Some(dir.path())).unwrap();
        let path = cache_path(dir.path(), a.fingerprint());
        fs::write(&path, "# garbage\n").unwrap();
        let (b, src) = load_or_build(&p, 1.0, 2, reg, Some(dir.path())).unwrap();
        assert!(matches!(src, TableSource::Built(_)));
        assert_eq!(a, b);
    }

    #[test]
    fn summary_lists_each_pair() {
        let s = summary_table(&[pair(1.0, 2.0, true)]);
        assert_eq!(s.lines().count(), 2);
        assert!(s.contains("yes"));
    }
}
