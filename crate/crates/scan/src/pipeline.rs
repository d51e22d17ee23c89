//! Batch stages. Each stage reads its inputs from a workspace directory and
//! writes its outputs under a fixed subdirectory of it, so stages can be run
//! one at a time or chained by [`run_pipeline`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use horizon_core::growth::{
    build_time_series, calibrate_error_scale, cagr_distribution_stats, fit_exponential_with, CalibrationResult,
    CalibrationStatus, FitOptions, FitResult, YearlyCounts,
};
use horizon_core::layout::{knn_graph, pca_layout, TopicMapLayout};
use horizon_core::lda::{doc_topic_sums, fit_lda, topic_diagnostics, Attribute, GibbsState, TopicDiagnostics, TopicModel};
use horizon_core::lq::{compute_lq, quadrant_classify, source_activity, ActivityMatrix};
use horizon_core::text::{RawDocument, TokenizedCorpus};
use horizon_core::Matrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, Universe};
use crate::corpus::{self, Schema};
use crate::error::{IoContext, Result, ScanError};
use crate::mallet;
use crate::tables::{self, ActivityRow, FitRow};

pub const CORPUS_DIR: &str = "corpus";
pub const MODEL_DIR: &str = "model";
pub const METRICS_DIR: &str = "metrics";
pub const LQ_DIR: &str = "lq";
pub const LAYOUT_DIR: &str = "layout";
pub const REPORT_DIR: &str = "report";
pub const LABELS_DIR: &str = "labels";
pub const JOURNAL: &str = "labels/journal.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const CHECKSUMS: &str = "checksums.sha256";

/// Entity types with LQ tables, in output order.
pub const ENTITY_TYPES: [Attribute; 4] = [Attribute::Country, Attribute::Org, Attribute::Sponsor, Attribute::Source];

/// Categories kept by `Universe::Top200`.
pub const TOP_UNIVERSE: usize = 200;

/// Workspace paths.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn dir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        std::fs::create_dir_all(&p).at(&p)?;
        Ok(p)
    }

    pub fn docs(&self) -> PathBuf {
        self.path("corpus/docs.jsonl")
    }
    pub fn tokens(&self) -> PathBuf {
        self.path("corpus/tokens.txt")
    }
    pub fn vocab(&self) -> PathBuf {
        self.path("corpus/vocab.tsv")
    }
    pub fn state(&self) -> PathBuf {
        self.path("model/state.gz")
    }
    pub fn term_topic(&self) -> PathBuf {
        self.path("model/term_topic.csv.gz")
    }
    pub fn doc_topic(&self) -> PathBuf {
        self.path("model/doc_topic.csv.gz")
    }
    pub fn diagnostics(&self) -> PathBuf {
        self.path("model/diagnostics.xml")
    }
    pub fn counts(&self) -> PathBuf {
        self.path("metrics/counts.csv")
    }
    pub fn fits(&self) -> PathBuf {
        self.path("metrics/fits.csv")
    }
    pub fn calibration(&self) -> PathBuf {
        self.path("metrics/calibration.json")
    }
    pub fn activity(&self) -> PathBuf {
        self.path("lq/activity.csv")
    }
    pub fn coords(&self) -> PathBuf {
        self.path("layout/coords.csv")
    }
    pub fn knn(&self) -> PathBuf {
        self.path("layout/knn.csv")
    }
    pub fn fields(&self) -> PathBuf {
        self.path("layout/fields.csv")
    }
    pub fn journal(&self) -> PathBuf {
        self.path(JOURNAL)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| ScanError::Input(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).at(path)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| ScanError::format(path, e.line(), e.to_string()))
}

/// Core failures inside a stage become stage failures; input and usage
/// errors keep their own kind.
fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        ScanError::Core(inner) => ScanError::stage(stage, inner),
        other => other,
    })
}

fn core<T>(stage: &'static str, r: horizon_core::Result<T>) -> Result<T> {
    r.map_err(|e| ScanError::stage(stage, e))
}

/// First 16 hex digits of a SHA-256 over the canonical settings and the
/// contents of every input file.
pub fn run_id(cfg: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(cfg.canonical().as_bytes());
    for p in cfg.input_files() {
        let bytes = std::fs::read(p).at(p)?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex(&h.finalize())[..16].to_string())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub rejects: usize,
    pub tokens: usize,
    pub vocabulary: usize,
    pub lower_cutoff: u32,
    pub year_first: i32,
    pub year_last: i32,
}

pub fn ingest(cfg: &PipelineConfig, ws: &Workspace) -> Result<CorpusStats> {
    let path = cfg.corpus.as_deref().ok_or_else(|| ScanError::Usage("no corpus path configured (set corpus or --corpus)".into()))?;
    if !path.is_file() {
        return Err(ScanError::Input(format!("corpus file not found: {}", path.display())));
    }
    let schema = match &cfg.schema {
        Some(p) => Schema::load(p)?,
        None => Schema::default(),
    };
    let vocab_cfg = corpus::vocab_config(cfg)?;
    let report = corpus::load_corpus(path, &schema, Some(cfg.window()?))?;
    if report.docs.is_empty() {
        return Err(ScanError::Input(format!("{}: no usable documents ({} rejected)", path.display(), report.rejects.len())));
    }
    let tokenized = staged("ingest", corpus::tokenize(&report.docs, &vocab_cfg))?;
    ws.dir(CORPUS_DIR)?;
    corpus::write_documents(&ws.docs(), &report.docs)?;
    corpus::write_rejects(&ws.path("corpus/rejects.jsonl"), &report.rejects)?;
    corpus::write_tokenized(&tokenized, &ws.tokens(), &ws.vocab())?;
    let stats = CorpusStats {
        documents: report.docs.len(),
        rejects: report.rejects.len(),
        tokens: tokenized.token_count(),
        vocabulary: tokenized.vocab_len(),
        lower_cutoff: tokenized.lower_cutoff,
        year_first: cfg.year_first,
        year_last: cfg.year_last,
    };
    write_json(&ws.path("corpus/stats.json"), &stats)?;
    log::info!("ingest: {} documents, {} tokens, vocabulary {}", stats.documents, stats.tokens, stats.vocabulary);
    Ok(stats)
}

fn load_tokenized(ws: &Workspace) -> Result<TokenizedCorpus> {
    corpus::read_tokenized(&ws.tokens(), &ws.vocab())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LlRow {
    sweep: usize,
    ll_per_token: f64,
}

/// Writes the model artifacts shared by fitted and imported models.
fn write_model(
    ws: &Workspace,
    model: &TopicModel,
    state: &GibbsState,
    vocabulary: &[String],
    doc_ids: &[String],
    diagnostics: &[TopicDiagnostics],
    ll: &[(usize, f64)],
) -> Result<()> {
    ws.dir(MODEL_DIR)?;
    mallet::write_state(&ws.state(), state, vocabulary)?;
    let topic_labels: Vec<String> = (0..model.num_topics()).map(|k| k.to_string()).collect();
    tables::write_matrix_gz(&ws.term_topic(), "topic_id", &topic_labels, vocabulary, &model.term_topic)?;
    let topic_cols: Vec<String> = (0..model.num_topics()).map(|k| format!("t{k}")).collect();
    tables::write_matrix_gz(&ws.doc_topic(), "doc_id", doc_ids, &topic_cols, &model.doc_topic)?;
    std::fs::write(ws.diagnostics(), mallet::diagnostics_xml(diagnostics)).at(ws.diagnostics())?;
    tables::write_rows(&ws.path("model/ll.csv"), ll.iter().map(|&(sweep, ll_per_token)| LlRow { sweep, ll_per_token }))?;
    Ok(())
}

pub fn model(cfg: &PipelineConfig, ws: &Workspace) -> Result<TopicModel> {
    let corpus = load_tokenized(ws)?;
    let fit = core("model", fit_lda(&corpus, &cfg.lda()))?;
    let diags = topic_diagnostics(&fit.model, &corpus, cfg.top_terms);
    let ids: Vec<String> = corpus.docs.iter().map(|(id, _)| id.clone()).collect();
    write_model(ws, &fit.model, &fit.state, &corpus.vocabulary, &ids, &diags, &fit.ll_history)?;
    log::info!("model: K={} LL/token {:.4}", fit.model.num_topics(), fit.model.ll_per_token);
    Ok(fit.model)
}

/// Corpus over the state's own vocabulary, used to recompute coherence.
fn corpus_from_state(state: &GibbsState, vocabulary: &[String], ids: &[String]) -> TokenizedCorpus {
    let docs: Vec<(String, Vec<u32>)> = ids.iter().zip(&state.docs).map(|(id, d)| (id.clone(), d.types.clone())).collect();
    let mut doc_freq = vec![0u32; vocabulary.len()];
    for (_, toks) in &docs {
        let mut seen: Vec<u32> = toks.clone();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            doc_freq[w as usize] += 1;
        }
    }
    TokenizedCorpus { docs, vocabulary: vocabulary.to_vec(), doc_freq, lower_cutoff: 0 }
}

/// Builds the model stage from an external Gibbs state and, optionally, its
/// diagnostics file. Documents are matched to the ingested corpus by
/// position.
pub fn import_mallet(cfg: &PipelineConfig, ws: &Workspace, state_path: &Path, diagnostics: Option<&Path>) -> Result<TopicModel> {
    let corpus = load_tokenized(ws)?;
    let parsed = mallet::parse_state(state_path)?;
    let mut state = parsed.state;
    let n_corpus = corpus.num_docs();
    let n_state = state.docs.len();
    // Trailing documents without tokens never appear in a state file.
    let trailing_empty = corpus.docs.iter().rev().take_while(|(_, t)| t.is_empty()).count();
    if n_state > n_corpus || n_state + trailing_empty < n_corpus {
        return Err(ScanError::Input(format!(
            "{}: state has {n_state} documents but the corpus has {n_corpus}",
            state_path.display()
        )));
    }
    for (id, _) in &corpus.docs[n_state..] {
        state.docs.push(horizon_core::lda::DocAssignments { source: id.clone(), types: Vec::new(), topics: Vec::new() });
    }
    if cfg.topics != state.num_topics() {
        log::info!("import: state has {} topics (configured {})", state.num_topics(), cfg.topics);
    }
    let vocabulary = parsed.vocabulary;
    let model = staged("import-mallet", TopicModel::from_state(&state, vocabulary.len()).map_err(ScanError::from))?;
    let ids: Vec<String> = corpus.docs.iter().map(|(id, _)| id.clone()).collect();
    let k = model.num_topics();
    let diags = match diagnostics {
        Some(p) => {
            let mut parsed = mallet::parse_diagnostics(p)?;
            if let Some(t) = parsed.iter().find(|t| t.topic_id as usize >= k) {
                return Err(ScanError::Input(format!("{}: topic {} outside the model's {k} topics", p.display(), t.topic_id)));
            }
            let sizes = model.topic_sizes();
            let mut by_topic: BTreeMap<u32, TopicDiagnostics> = parsed.drain(..).map(|t| (t.topic_id, t)).collect();
            (0..k as u32)
                .map(|z| {
                    by_topic.remove(&z).unwrap_or_else(|| TopicDiagnostics {
                        topic_id: z,
                        coherence: None,
                        coherence_origin: horizon_core::lda::CoherenceOrigin::Parsed,
                        top_terms: model
                            .top_terms(z as usize, cfg.top_terms)
                            .into_iter()
                            .map(|(w, p)| (vocabulary[w as usize].clone(), p))
                            .collect(),
                        token_count: sizes[z as usize],
                    })
                })
                .collect()
        }
        None => topic_diagnostics(&model, &corpus_from_state(&state, &vocabulary, &ids), cfg.top_terms),
    };
    write_model(ws, &model, &state, &vocabulary, &ids, &diags, &[(0, model.ll_per_token)])?;
    Ok(model)
}

/// Loaded model tables.
pub struct ModelTables {
    pub doc_ids: Vec<String>,
    pub doc_topic: Matrix,
    pub vocabulary: Vec<String>,
    pub term_topic: Matrix,
}

pub fn load_model(ws: &Workspace) -> Result<ModelTables> {
    let dt = tables::read_matrix_gz(&ws.doc_topic())?;
    let tt = tables::read_matrix_gz(&ws.term_topic())?;
    if dt.matrix.cols() != tt.matrix.rows() {
        return Err(ScanError::Input(format!(
            "doc-topic table has {} topics but term-topic table has {}",
            dt.matrix.cols(),
            tt.matrix.rows()
        )));
    }
    Ok(ModelTables { doc_ids: dt.rows, doc_topic: dt.matrix, vocabulary: tt.columns, term_topic: tt.matrix })
}

/// Corpus documents aligned with the doc-topic rows.
pub fn load_aligned_docs(ws: &Workspace, m: &ModelTables) -> Result<Vec<RawDocument>> {
    let docs = corpus::read_documents(&ws.docs())?;
    if docs.len() != m.doc_ids.len() || docs.iter().zip(&m.doc_ids).any(|(d, id)| &d.doc_id != id) {
        return Err(ScanError::Input(format!(
            "model documents ({}) do not match the ingested corpus ({})",
            m.doc_ids.len(),
            docs.len()
        )));
    }
    Ok(docs)
}

pub fn yearly_counts(doc_topic: &Matrix, docs: &[RawDocument]) -> Result<Vec<YearlyCounts>> {
    let sums = core("metrics", doc_topic_sums(doc_topic, docs, Attribute::Year))?;
    let years: Vec<i32> = sums.groups.iter().map(|g| g.parse().expect("year groups are integers")).collect();
    Ok((0..sums.sums.rows())
        .map(|z| YearlyCounts::new(z as u32, years.iter().enumerate().map(|(g, &y)| (y, sums.sums.get(z, g)))))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    /// `converged`, `max_iterations` or `skipped`.
    pub status: String,
    pub scale: f64,
    pub mode_chi2: Option<f64>,
    pub iterations: usize,
    pub fittable: Option<usize>,
}

impl From<CalibrationResult> for CalibrationRecord {
    fn from(c: CalibrationResult) -> Self {
        let (status, fittable) = match c.status {
            CalibrationStatus::Converged => ("converged", None),
            CalibrationStatus::MaxIterations => ("max_iterations", None),
            CalibrationStatus::Skipped { fittable } => ("skipped", Some(fittable)),
        };
        Self { status: status.into(), scale: c.scale, mode_chi2: c.mode_chi2.is_finite().then_some(c.mode_chi2), iterations: c.iterations, fittable }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scale: f64,
    pub calibration: Option<CalibrationRecord>,
    pub fitted: usize,
    pub unfitted: usize,
    pub cagr_mean: Option<f64>,
    pub cagr_std: Option<f64>,
    pub cagr_mean_std_err: Option<f64>,
    pub cagr_excluded: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct ScreenRow {
    topic_id: u32,
    cagr: f64,
    err_cagr: f64,
    pct_err: Option<f64>,
    chi2_red: f64,
    bucket: &'static str,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

pub fn hist_rows(h: &horizon_core::histogram::Histogram) -> Vec<HistRow> {
    h.edges.windows(2).zip(&h.counts).map(|(e, &count)| HistRow { bin_lo: e[0], bin_hi: e[1], count }).collect()
}

pub fn fit_options(cfg: &PipelineConfig) -> FitOptions {
    FitOptions { covariance: cfg.covariance, ..FitOptions::default() }
}

/// Fits every topic of `counts` at `scale`; one row per topic, by id.
pub fn fit_all(counts: &[YearlyCounts], cfg: &PipelineConfig, scale: f64) -> Result<Vec<FitRow>> {
    let set = core("metrics", build_time_series(counts, cfg.window()?, scale))?;
    let opts = fit_options(cfg);
    let mut rows: Vec<FitRow> = set
        .series
        .par_iter()
        .map(|ts| match fit_exponential_with(ts, &opts) {
            Ok(f) => FitRow::fitted(ts.topic_id, &f),
            Err(e) => FitRow::unfitted(ts.topic_id, format!("unfittable: {e}")),
        })
        .collect();
    rows.extend(set.excluded.iter().map(|(id, why)| FitRow::unfitted(*id, format!("excluded: {why}"))));
    rows.sort_by_key(|r| r.topic_id);
    Ok(rows)
}

pub fn metrics(cfg: &PipelineConfig, ws: &Workspace) -> Result<MetricsSummary> {
    let m = load_model(ws)?;
    let docs = load_aligned_docs(ws, &m)?;
    let counts = yearly_counts(&m.doc_topic, &docs)?;
    ws.dir(METRICS_DIR)?;
    tables::write_counts(&ws.counts(), &counts)?;

    let window = cfg.window()?;
    let calibration = if cfg.calibrate {
        let c = core(
            "metrics",
            calibrate_error_scale(&counts, window, cfg.calibration_tol, cfg.calibration_max_iter, &fit_options(cfg)),
        )?;
        if let CalibrationStatus::Skipped { fittable } = c.status {
            log::warn!("calibration skipped: only {fittable} fittable topics; using scale {}", cfg.scale);
        }
        Some(c)
    } else {
        None
    };
    let scale = match calibration {
        Some(c) if !matches!(c.status, CalibrationStatus::Skipped { .. }) => c.scale,
        _ => cfg.scale,
    };
    let rows = fit_all(&counts, cfg, scale)?;
    tables::write_rows_with_header(
        &ws.fits(),
        &["topic_id", "n0", "k", "err_k", "cagr", "err_cagr", "chi2_red", "dof", "converged", "status"],
        &rows,
    )?;

    let fits: Vec<(u32, FitResult)> = rows.iter().filter_map(|r| r.to_fit().map(|f| (r.topic_id, f))).collect();
    let screen = cfg.screen();
    let screen_rows = fits.iter().map(|(id, f)| ScreenRow {
        topic_id: *id,
        cagr: f.cagr,
        err_cagr: f.err_cagr,
        pct_err: horizon_core::growth::pct_err(f),
        chi2_red: f.chi2_red,
        bucket: screen.bucket(f).as_str(),
    });
    tables::write_rows_with_header(
        &ws.path("metrics/screen.csv"),
        &["topic_id", "cagr", "err_cagr", "pct_err", "chi2_red", "bucket"],
        screen_rows,
    )?;

    let converged: Vec<FitResult> = fits.iter().map(|(_, f)| *f).filter(|f| f.converged).collect();
    let dist = cagr_distribution_stats(&converged).ok();
    tables::write_rows_with_header(
        &ws.path("metrics/cagr_hist.csv"),
        &["bin_lo", "bin_hi", "count"],
        dist.as_ref().map(|(_, h)| hist_rows(h)).unwrap_or_default(),
    )?;
    let summary = MetricsSummary {
        scale,
        calibration: calibration.map(CalibrationRecord::from),
        fitted: fits.len(),
        unfitted: rows.len() - fits.len(),
        cagr_mean: dist.as_ref().map(|d| d.0.mean),
        cagr_std: dist.as_ref().map(|d| d.0.std),
        cagr_mean_std_err: dist.as_ref().map(|d| d.0.mean_std_err),
        cagr_excluded: dist.as_ref().map(|d| d.0.n_excluded),
    };
    write_json(&ws.calibration(), &summary)?;
    log::info!("metrics: {} fitted, {} not fitted, scale {scale:.4}", summary.fitted, summary.unfitted);
    Ok(summary)
}

pub fn read_fits(ws: &Workspace) -> Result<Vec<FitRow>> {
    tables::read_rows(&ws.fits())
}

/// Topic-by-entity activity for one entity type. Documents without a value
/// for the attribute do not contribute.
pub fn activity_for(doc_topic: &Matrix, docs: &[RawDocument], attr: Attribute) -> Result<ActivityMatrix> {
    let k = doc_topic.cols();
    let categories: Vec<String> = (0..k).map(|z| z.to_string()).collect();
    if attr == Attribute::Source {
        let sums = core("lq", doc_topic_sums(doc_topic, docs, attr))?;
        let m = core("lq", source_activity(&sums))?;
        return core("lq", ActivityMatrix::new(categories, m.entities, m.n));
    }
    let keep: Vec<usize> = docs
        .iter()
        .enumerate()
        .filter(|(_, d)| match attr {
            Attribute::Country => !d.countries.is_empty(),
            Attribute::Org => !d.orgs.is_empty(),
            Attribute::Sponsor => !d.sponsors.is_empty(),
            Attribute::Year | Attribute::Source => true,
        })
        .map(|(i, _)| i)
        .collect();
    let mut data = Vec::with_capacity(keep.len() * k);
    for &i in &keep {
        data.extend_from_slice(doc_topic.row(i));
    }
    let sub = core("lq", Matrix::from_vec(keep.len(), k, data))?;
    let sub_docs: Vec<RawDocument> = keep.iter().map(|&i| docs[i].clone()).collect();
    let sums = core("lq", doc_topic_sums(&sub, &sub_docs, attr))?;
    core("lq", ActivityMatrix::new(categories, sums.groups, sums.sums))
}

/// Reads back `activity.csv` into one matrix per entity type, preserving the
/// written order of categories and entities.
pub fn read_activity(path: &Path) -> Result<BTreeMap<String, ActivityMatrix>> {
    struct Acc {
        cats: Vec<String>,
        ents: Vec<String>,
        cells: BTreeMap<(usize, usize), f64>,
    }
    let mut by_type: BTreeMap<String, Acc> = BTreeMap::new();
    for (line, r) in tables::read_rows::<ActivityRow>(path)?.into_iter().enumerate() {
        let acc = by_type.entry(r.entity_type).or_insert_with(|| Acc { cats: Vec::new(), ents: Vec::new(), cells: BTreeMap::new() });
        let pos = |v: &mut Vec<String>, s: String| v.iter().position(|x| *x == s).unwrap_or_else(|| {
            v.push(s);
            v.len() - 1
        });
        let i = pos(&mut acc.cats, r.category_id);
        let j = pos(&mut acc.ents, r.entity_id);
        if acc.cells.insert((i, j), r.count).is_some() {
            return Err(ScanError::format(path, line + 2, "duplicate activity cell"));
        }
    }
    by_type
        .into_iter()
        .map(|(t, a)| {
            let mut n = Matrix::zeros(a.cats.len(), a.ents.len());
            for ((i, j), v) in a.cells {
                n.set(i, j, v);
            }
            let m = ActivityMatrix::new(a.cats, a.ents, n).map_err(|e| ScanError::format(path, 0, format!("{t}: {e}")))?;
            Ok((t, m))
        })
        .collect()
}

/// Highest-CAGR fitted topics, at most `n`, as category indices.
pub fn top_cagr_topics(fits: &[FitRow], n: usize) -> Vec<usize> {
    let mut f: Vec<(u32, f64)> = fits.iter().filter_map(|r| r.to_fit().map(|x| (r.topic_id, x.cagr))).collect();
    f.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ids: Vec<usize> = f.into_iter().take(n).map(|(id, _)| id as usize).collect();
    ids.sort_unstable();
    ids
}

pub fn lq(cfg: &PipelineConfig, ws: &Workspace) -> Result<()> {
    let m = load_model(ws)?;
    let docs = load_aligned_docs(ws, &m)?;
    let top = match cfg.universe {
        Universe::Full => None,
        Universe::Top200 => Some(top_cagr_topics(&read_fits(ws)?, TOP_UNIVERSE)),
    };
    ws.dir(LQ_DIR)?;
    let mut activity_rows = Vec::new();
    for attr in ENTITY_TYPES {
        let mut act = activity_for(&m.doc_topic, &docs, attr)?;
        if let Some(keep) = &top {
            act = core("lq", act.select_categories(keep))?;
        }
        for (j, e) in act.entities.iter().enumerate() {
            for (i, c) in act.categories.iter().enumerate() {
                activity_rows.push(ActivityRow {
                    entity_type: attr.as_str().into(),
                    entity_id: e.clone(),
                    category_id: c.clone(),
                    count: act.n.get(i, j),
                });
            }
        }
        let table = core("lq", compute_lq(&act))?;
        tables::write_rows_with_header(
            &ws.path(&format!("lq/lq_{}.csv", attr.as_str())),
            &["entity_id", "category_id", "lq", "lq_err", "flag"],
            tables::lq_rows(&table),
        )?;
        if attr == Attribute::Country && table.entities.len() >= 2 {
            let mut by_total: Vec<usize> = (0..table.entities.len()).collect();
            by_total.sort_by(|&a, &b| table.entity_totals[b].total_cmp(&table.entity_totals[a]).then(a.cmp(&b)));
            let (a, b) = (by_total[0], by_total[1]);
            let q = core("lq", quadrant_classify(&table.entity_column(a), &table.entity_column(b)))?;
            tables::write_rows(&ws.path("lq/quadrant_country.csv"), tables::quadrant_rows(&table, a, b, &q))?;
        }
    }
    tables::write_rows_with_header(&ws.activity(), &["entity_type", "entity_id", "category_id", "count"], activity_rows)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutInfo {
    pub method: String,
    pub rank_deficient: bool,
    pub knn_k: usize,
}

pub fn layout(cfg: &PipelineConfig, ws: &Workspace) -> Result<TopicMapLayout> {
    let m = load_model(ws)?;
    let k_topics = m.term_topic.rows();
    let k = cfg.knn_k.min(k_topics.saturating_sub(1));
    if k != cfg.knn_k {
        log::warn!("layout: knn_k {} reduced to {k} for {k_topics} topics", cfg.knn_k);
    }
    let knn = core("layout", knn_graph(&m.term_topic, k))?;
    let layout = match &cfg.coords {
        Some(p) => core("layout", TopicMapLayout::imported(tables::read_coords(p, k_topics)?, knn))?,
        None => core("layout", pca_layout(&m.term_topic, knn))?,
    };
    ws.dir(LAYOUT_DIR)?;
    tables::write_coords(&ws.coords(), &layout.coords)?;
    tables::write_knn(&ws.knn(), &layout.knn)?;
    if let Some(f) = &cfg.fields {
        let fields = tables::read_fields(f)?;
        tables::write_rows_with_header(
            &ws.fields(),
            &["topic_id", "field"],
            fields.iter(),
        )?;
    }
    write_json(
        &ws.path("layout/layout.json"),
        &LayoutInfo { method: layout.method.as_str().into(), rank_deficient: layout.rank_deficient, knn_k: k },
    )?;
    Ok(layout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub created_at: String,
    pub year_first: i32,
    pub year_last: i32,
    pub documents: usize,
    pub topics: usize,
    pub top_terms: usize,
    pub config: String,
}

/// Artifacts covered by the checksum file: everything except the run
/// record, the label journal and the checksum file itself.
pub fn checksum_files(root: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir).at(dir)? {
            let p = entry.at(dir)?.path();
            if p.is_dir() {
                walk(&p, root, out)?;
            } else {
                let rel = p.strip_prefix(root).expect("walk stays under root").to_path_buf();
                let s = rel.to_string_lossy().replace('\\', "/");
                if s != RUN_FILE && s != CHECKSUMS && !s.starts_with(LABELS_DIR) {
                    out.push(rel);
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

pub fn checksums(root: &Path) -> Result<String> {
    let mut s = String::new();
    for rel in checksum_files(root)? {
        let p = root.join(&rel);
        let bytes = std::fs::read(&p).at(&p)?;
        s.push_str(&format!("{}  {}\n", hex(&Sha256::digest(&bytes)), rel.to_string_lossy().replace('\\', "/")));
    }
    Ok(s)
}

/// Checks that every stage has produced its artifacts, then writes the run
/// record, the checksum file and an empty label journal if none exists.
pub fn snapshot(cfg: &PipelineConfig, ws: &Workspace, run_id: &str) -> Result<RunInfo> {
    let required =
        [ws.docs(), ws.state(), ws.term_topic(), ws.doc_topic(), ws.diagnostics(), ws.counts(), ws.fits(), ws.activity(), ws.coords(), ws.knn()];
    let missing: Vec<String> = required.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(ScanError::Input(format!("snapshot incomplete, missing: {}", missing.join(", "))));
    }
    let m = load_model(ws)?;
    let fits = read_fits(ws)?;
    let coords = tables::read_coords(&ws.coords(), m.term_topic.rows())?;
    let ids: Vec<u32> = fits.iter().map(|r| r.topic_id).collect();
    if ids != (0..m.term_topic.rows() as u32).collect::<Vec<_>>() || coords.len() != ids.len() {
        return Err(ScanError::stage("snapshot", "fits and layout must list every model topic exactly once"));
    }
    ws.dir(LABELS_DIR)?;
    if !ws.journal().exists() {
        std::fs::File::create(ws.journal()).at(ws.journal())?;
    }
    let info = RunInfo {
        run_id: run_id.to_string(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        year_first: cfg.year_first,
        year_last: cfg.year_last,
        documents: m.doc_ids.len(),
        topics: m.term_topic.rows(),
        top_terms: cfg.top_terms,
        config: cfg.canonical(),
    };
    write_json(&ws.path(RUN_FILE), &info)?;
    let sums = checksums(&ws.root)?;
    std::fs::write(ws.path(CHECKSUMS), sums).at(ws.path(CHECKSUMS))?;
    Ok(info)
}

/// Rewrites the checksums of an already snapshotted workspace, so files
/// written after the snapshot stage are covered too. No-op otherwise.
pub fn refresh_checksums(ws: &Workspace) -> Result<()> {
    let path = ws.path(CHECKSUMS);
    if path.is_file() {
        let sums = checksums(&ws.root)?;
        std::fs::write(&path, sums).at(&path)?;
    }
    Ok(())
}

/// Runs every stage into `<out>/<run_id>/partial` and renames it to
/// `<out>/<run_id>/snapshot` once all succeed. A failed run leaves its
/// partial outputs in place for inspection. Labels of an earlier snapshot of
/// the same run are carried over.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.validate()?;
    if let Some(p) = &cfg.corpus {
        if !p.is_file() {
            return Err(ScanError::Input(format!("corpus file not found: {}", p.display())));
        }
    }
    let id = run_id(cfg)?;
    let base = cfg.out.join(&id);
    let partial = base.join("partial");
    let done = base.join("snapshot");
    if partial.exists() {
        std::fs::remove_dir_all(&partial).at(&partial)?;
    }
    std::fs::create_dir_all(&partial).at(&partial)?;
    let ws = Workspace::new(&partial);
    log::info!("run {id}: writing to {}", partial.display());

    ingest(cfg, &ws)?;
    match (&cfg.mallet_state, &cfg.mallet_diagnostics) {
        (Some(state), diags) => {
            import_mallet(cfg, &ws, state, diags.as_deref())?;
        }
        (None, _) => {
            model(cfg, &ws)?;
        }
    }
    metrics(cfg, &ws)?;
    lq(cfg, &ws)?;
    layout(cfg, &ws)?;
    let old_journal = done.join(JOURNAL);
    if old_journal.is_file() {
        std::fs::create_dir_all(ws.path(LABELS_DIR)).at(ws.path(LABELS_DIR))?;
        std::fs::copy(&old_journal, ws.journal()).at(&old_journal)?;
    }
    snapshot(cfg, &ws, &id)?;
    crate::report::report(cfg, &ws)?;
    refresh_checksums(&ws)?;

    if done.exists() {
        std::fs::remove_dir_all(&done).at(&done)?;
    }
    std::fs::rename(&partial, &done).at(&done)?;
    log::info!("run {id}: snapshot at {}", done.display());
    Ok(done)
}
