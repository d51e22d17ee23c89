//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the file they appear in. Command-line
//! overrides go through the same [`PipelineConfig::set`] entry point.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use horizon_core::growth::{CovarianceScaling, ScreenConfig, YearWindow};
use horizon_core::lda::LdaConfig;

use crate::error::{IoContext, Result, ScanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Universe {
    Full,
    /// Only the 200 highest-CAGR fitted topics.
    Top200,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub multiword_stops: Option<PathBuf>,
    pub lemma_map: Option<PathBuf>,
    pub replacements: Option<PathBuf>,
    pub max_doc_fraction: f64,
    pub vocab_size: usize,
    pub year_first: i32,
    pub year_last: i32,
    pub topics: usize,
    pub iterations: usize,
    pub optimize_interval: usize,
    pub burn_in: usize,
    pub alpha_sum: f64,
    pub beta: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub mallet_state: Option<PathBuf>,
    pub mallet_diagnostics: Option<PathBuf>,
    pub scale: f64,
    pub calibrate: bool,
    pub calibration_tol: f64,
    pub calibration_max_iter: usize,
    pub covariance: CovarianceScaling,
    pub chi_lo: f64,
    pub chi_hi: f64,
    pub max_pct_err: f64,
    pub top_n: usize,
    pub coherence_floor: f64,
    pub top_terms: usize,
    pub knn_k: usize,
    pub coords: Option<PathBuf>,
    pub fields: Option<PathBuf>,
    pub universe: Universe,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let lda = LdaConfig::default();
        Self {
            corpus: None,
            schema: None,
            stopwords: None,
            multiword_stops: None,
            lemma_map: None,
            replacements: None,
            max_doc_fraction: 0.05,
            vocab_size: 200_000,
            year_first: 2014,
            year_last: 2018,
            topics: lda.num_topics,
            iterations: lda.iterations,
            optimize_interval: lda.optimize_interval,
            burn_in: lda.burn_in,
            alpha_sum: lda.alpha_sum,
            beta: lda.beta,
            seed: lda.seed,
            threads: None,
            mallet_state: None,
            mallet_diagnostics: None,
            scale: 1.0,
            calibrate: true,
            calibration_tol: 0.05,
            calibration_max_iter: 20,
            covariance: CovarianceScaling::default(),
            chi_lo: 0.5,
            chi_hi: 1.5,
            max_pct_err: 50.0,
            top_n: 200,
            coherence_floor: -1000.0,
            top_terms: 20,
            knn_k: horizon_core::layout::DEFAULT_NEIGHBORS,
            coords: None,
            fields: None,
            universe: Universe::Full,
            out: PathBuf::from("scan-out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ScanError::Usage(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ScanError::Usage(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn covariance_name(c: CovarianceScaling) -> &'static str {
    match c {
        CovarianceScaling::Reduced => "reduced",
        CovarianceScaling::ReducedAtLeastOne => "reduced_at_least_one",
        CovarianceScaling::Absolute => "absolute",
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ScanError::format(path, lineno + 1, "expected key = value"));
            };
            let (k, v) = (k.trim(), v.trim());
            if let Some(prev) = seen.insert(k.to_string(), lineno + 1) {
                return Err(ScanError::format(path, lineno + 1, format!("duplicate key {k:?} (first on line {prev})")));
            }
            cfg.set(k, v, &base).map_err(|e| ScanError::format(path, lineno + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Applies one setting; `base` resolves relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || -> Option<PathBuf> {
            if value.is_empty() {
                None
            } else {
                Some(base.join(value))
            }
        };
        match key {
            "corpus" => self.corpus = path(),
            "schema" => self.schema = path(),
            "stopwords" => self.stopwords = path(),
            "multiword_stops" => self.multiword_stops = path(),
            "lemma_map" => self.lemma_map = path(),
            "replacements" => self.replacements = path(),
            "max_doc_fraction" => self.max_doc_fraction = parse(key, value)?,
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "year_first" => self.year_first = parse(key, value)?,
            "year_last" => self.year_last = parse(key, value)?,
            "topics" => self.topics = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "optimize_interval" => self.optimize_interval = parse(key, value)?,
            "burn_in" => self.burn_in = parse(key, value)?,
            "alpha_sum" => self.alpha_sum = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "mallet_state" => self.mallet_state = path(),
            "mallet_diagnostics" => self.mallet_diagnostics = path(),
            "scale" => self.scale = parse(key, value)?,
            "calibrate" => self.calibrate = parse_bool(key, value)?,
            "calibration_tol" => self.calibration_tol = parse(key, value)?,
            "calibration_max_iter" => self.calibration_max_iter = parse(key, value)?,
            "covariance" => {
                self.covariance = match value {
                    "reduced" => CovarianceScaling::Reduced,
                    "reduced_at_least_one" => CovarianceScaling::ReducedAtLeastOne,
                    "absolute" => CovarianceScaling::Absolute,
                    _ => return Err(ScanError::Usage(format!("covariance: unknown policy {value:?}"))),
                }
            }
            "chi_band" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| ScanError::Usage(format!("chi_band: expected lo,hi, got {value:?}")))?;
                self.chi_lo = parse(key, lo.trim())?;
                self.chi_hi = parse(key, hi.trim())?;
            }
            "max_pct_err" => self.max_pct_err = parse(key, value)?,
            "top_n" => self.top_n = parse(key, value)?,
            "coherence_floor" => self.coherence_floor = parse(key, value)?,
            "top_terms" => self.top_terms = parse(key, value)?,
            "knn_k" => self.knn_k = parse(key, value)?,
            "coords" => self.coords = path(),
            "fields" => self.fields = path(),
            "universe" => {
                self.universe = match value {
                    "full" => Universe::Full,
                    "top200" => Universe::Top200,
                    _ => return Err(ScanError::Usage(format!("universe: expected full or top200, got {value:?}"))),
                }
            }
            "out" => self.out = base.join(value),
            _ => return Err(ScanError::Usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.year_last < self.year_first {
            return Err(ScanError::Usage(format!("empty year window {}..{}", self.year_first, self.year_last)));
        }
        if self.topics < 2 {
            return Err(ScanError::Usage(format!("topics must be at least 2, got {}", self.topics)));
        }
        if !(self.scale > 0.0) {
            return Err(ScanError::Usage(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.chi_lo < self.chi_hi) {
            return Err(ScanError::Usage(format!("chi band {},{} is empty", self.chi_lo, self.chi_hi)));
        }
        if self.top_terms < 2 {
            return Err(ScanError::Usage("top_terms must be at least 2".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<YearWindow> {
        Ok(YearWindow::new(self.year_first, self.year_last)?)
    }

    pub fn lda(&self) -> LdaConfig {
        LdaConfig {
            num_topics: self.topics,
            iterations: self.iterations,
            optimize_interval: self.optimize_interval,
            burn_in: self.burn_in,
            report_interval: 10,
            seed: self.seed,
            alpha_sum: self.alpha_sum,
            beta: self.beta,
        }
    }

    pub fn screen(&self) -> ScreenConfig {
        ScreenConfig { chi_lo: self.chi_lo, chi_hi: self.chi_hi, max_pct_err: self.max_pct_err }
    }

    /// Settings that influence results, one `key=value` per line in a fixed
    /// order. Paths are reduced to file names; their contents are hashed
    /// separately.
    pub fn canonical(&self) -> String {
        let name = |p: &Option<PathBuf>| {
            p.as_ref().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("corpus", name(&self.corpus));
        kv("schema", name(&self.schema));
        kv("stopwords", name(&self.stopwords));
        kv("multiword_stops", name(&self.multiword_stops));
        kv("lemma_map", name(&self.lemma_map));
        kv("replacements", name(&self.replacements));
        kv("max_doc_fraction", self.max_doc_fraction.to_string());
        kv("vocab_size", self.vocab_size.to_string());
        kv("years", format!("{}-{}", self.year_first, self.year_last));
        kv("topics", self.topics.to_string());
        kv("iterations", self.iterations.to_string());
        kv("optimize_interval", self.optimize_interval.to_string());
        kv("burn_in", self.burn_in.to_string());
        kv("alpha_sum", self.alpha_sum.to_string());
        kv("beta", self.beta.to_string());
        kv("seed", self.seed.to_string());
        kv("mallet_state", name(&self.mallet_state));
        kv("mallet_diagnostics", name(&self.mallet_diagnostics));
        kv("scale", self.scale.to_string());
        kv("calibrate", self.calibrate.to_string());
        kv("calibration_tol", self.calibration_tol.to_string());
        kv("calibration_max_iter", self.calibration_max_iter.to_string());
        kv("covariance", covariance_name(self.covariance).to_string());
        kv("chi_band", format!("{},{}", self.chi_lo, self.chi_hi));
        kv("max_pct_err", self.max_pct_err.to_string());
        kv("top_n", self.top_n.to_string());
        kv("coherence_floor", self.coherence_floor.to_string());
        kv("top_terms", self.top_terms.to_string());
        kv("knn_k", self.knn_k.to_string());
        kv("coords", name(&self.coords));
        kv("fields", name(&self.fields));
        kv("universe", format!("{:?}", self.universe).to_lowercase());
        s
    }

    /// Every input file the results depend on.
    pub fn input_files(&self) -> Vec<&Path> {
        [
            &self.corpus,
            &self.schema,
            &self.stopwords,
            &self.multiword_stops,
            &self.lemma_map,
            &self.replacements,
            &self.mallet_state,
            &self.mallet_diagnostics,
            &self.coords,
            &self.fields,
        ]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scan.conf");
        std::fs::write(&p, "# demo\ncorpus = docs.jsonl\ntopics=20\nchi_band = 0.4, 1.6\ncalibrate = no\n\n").unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        assert_eq!(cfg.corpus, Some(dir.path().join("docs.jsonl")));
        assert_eq!(cfg.topics, 20);
        assert_eq!((cfg.chi_lo, cfg.chi_hi), (0.4, 1.6));
        assert!(!cfg.calibrate);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        for body in ["bogus = 1\n", "topics = 2\ntopics = 3\n", "topics\n", "topics = many\n"] {
            std::fs::write(&p, body).unwrap();
            let err = PipelineConfig::load(&p).unwrap_err();
            assert!(matches!(err, ScanError::Format { .. }), "{body}: {err}");
        }
    }

    #[test]
    fn canonical_is_path_independent() {
        let mut a = PipelineConfig::default();
        a.set("corpus", "x/docs.jsonl", Path::new("/one")).unwrap();
        let mut b = PipelineConfig::default();
        b.set("corpus", "docs.jsonl", Path::new("/two")).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        b.set("seed", "9", Path::new("")).unwrap();
        assert_ne!(a.canonical(), b.canonical());
    }
}
