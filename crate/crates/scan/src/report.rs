//! Static report tables: the emerging-topics table, the super-topic table,
//! CAGR and coherence histograms and the fit-versus-two-point scatter.

use std::collections::BTreeMap;

use horizon_core::growth::{
    aggregate_supertopic_fit, cagr_distribution_stats, cagr_two_point, rank_emerging, EmergingCandidate, FitResult,
    YearWindow, YearlyCounts,
};
use horizon_core::histogram::{freedman_diaconis_width, histogram};
use horizon_core::lda::TopicDiagnostics;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::labels::{self, LabelState};
use crate::mallet;
use crate::pipeline::{self, hist_rows, MetricsSummary, Workspace, REPORT_DIR};
use crate::tables::{self, FitRow};

/// Terms shown per row of the emerging-topics table.
pub const TABLE_TERMS: usize = 5;
/// Smallest coherence histogram bin.
pub const COHERENCE_MIN_BIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmergingRow {
    pub rank: usize,
    pub topic_id: u32,
    pub topic_name: String,
    pub super_topic_name: String,
    pub size: f64,
    pub cagr: f64,
    pub err_cagr: f64,
    pub coherence: f64,
    pub top_terms: Vec<String>,
}

/// Emerging-topic ranking joined with labels and top terms.
pub fn emerging_rows(
    fits: &[FitRow],
    sizes: &[f64],
    diagnostics: &[TopicDiagnostics],
    labels: &LabelState,
    top_n: usize,
    coherence_floor: f64,
) -> Vec<EmergingRow> {
    let diag: BTreeMap<u32, &TopicDiagnostics> = diagnostics.iter().map(|d| (d.topic_id, d)).collect();
    let candidates: Vec<EmergingCandidate> = fits
        .iter()
        .filter_map(|r| {
            Some(EmergingCandidate {
                topic_id: r.topic_id,
                fit: r.to_fit()?,
                size: sizes.get(r.topic_id as usize).copied().unwrap_or(0.0),
                coherence: diag.get(&r.topic_id).and_then(|d| d.coherence),
            })
        })
        .collect();
    rank_emerging(&candidates, top_n, coherence_floor, |t| labels.is_junk(t))
        .into_iter()
        .map(|r| {
            let label = labels.current.get(&r.topic_id);
            EmergingRow {
                rank: r.rank,
                topic_id: r.topic_id,
                topic_name: label.map(|l| l.topic_name.clone()).unwrap_or_default(),
                super_topic_name: label.map(|l| l.super_topic_name.clone()).unwrap_or_default(),
                size: r.size,
                cagr: r.cagr,
                err_cagr: r.err_cagr,
                coherence: r.coherence,
                top_terms: diag
                    .get(&r.topic_id)
                    .map(|d| d.top_terms.iter().take(TABLE_TERMS).map(|t| t.0.clone()).collect())
                    .unwrap_or_default(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EmergingCsvRow<'a> {
    rank: usize,
    topic_id: u32,
    topic_name: &'a str,
    super_topic_name: &'a str,
    size: f64,
    cagr: f64,
    err_cagr: f64,
    coherence: f64,
    top_terms: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupertopicRow {
    pub super_topic_name: String,
    pub members: usize,
    pub topic_ids: String,
    pub size: f64,
    pub cagr: Option<f64>,
    pub err_cagr: Option<f64>,
    pub chi2_red: Option<f64>,
    pub status: String,
}

/// Aggregate growth of each super topic over its non-junk members, by
/// aggregate CAGR descending; super topics that cannot be fitted come last.
pub fn supertopic_rows(
    labels: &LabelState,
    counts: &[YearlyCounts],
    sizes: &[f64],
    window: YearWindow,
    scale: f64,
    cfg: &PipelineConfig,
) -> Vec<SupertopicRow> {
    let opts = pipeline::fit_options(cfg);
    let mut rows: Vec<SupertopicRow> = labels
        .supertopic_members()
        .into_iter()
        .filter_map(|(name, members)| {
            let members: Vec<u32> = members.into_iter().filter(|&t| !labels.is_junk(t)).collect();
            if members.is_empty() {
                return None;
            }
            let size = members.iter().map(|&t| sizes.get(t as usize).copied().unwrap_or(0.0)).sum();
            let ids = members.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            let fit = aggregate_supertopic_fit(&members, counts, window, scale, &opts);
            Some(match fit {
                Ok(f) => SupertopicRow {
                    super_topic_name: name,
                    members: members.len(),
                    topic_ids: ids,
                    size,
                    cagr: Some(f.cagr),
                    err_cagr: Some(f.err_cagr),
                    chi2_red: Some(f.chi2_red),
                    status: if f.converged { "ok".into() } else { "not converged".into() },
                },
                Err(e) => SupertopicRow {
                    super_topic_name: name,
                    members: members.len(),
                    topic_ids: ids,
                    size,
                    cagr: None,
                    err_cagr: None,
                    chi2_red: None,
                    status: format!("unfittable: {e}"),
                },
            })
        })
        .collect();
    rows.sort_by(|a, b| match (a.cagr, b.cagr) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.super_topic_name.cmp(&b.super_topic_name)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.super_topic_name.cmp(&b.super_topic_name),
    });
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterRow {
    pub topic_id: u32,
    pub cagr_fit: f64,
    pub err_cagr: f64,
    /// Empty when the first year has no documents.
    pub cagr_two_point: Option<f64>,
}

/// One row per converged fit.
pub fn scatter_rows(fits: &[FitRow], counts: &[YearlyCounts], window: YearWindow) -> Vec<ScatterRow> {
    let by_topic: BTreeMap<u32, &YearlyCounts> = counts.iter().map(|c| (c.topic_id, c)).collect();
    fits.iter()
        .filter_map(|r| r.to_fit().filter(|f| f.converged).map(|f| (r.topic_id, f)))
        .map(|(id, f)| {
            let yc = by_topic.get(&id);
            let at = |y: i32| yc.and_then(|c| c.counts.get(&y).copied()).unwrap_or(0.0);
            ScatterRow {
                topic_id: id,
                cagr_fit: f.cagr,
                err_cagr: f.err_cagr,
                cagr_two_point: cagr_two_point(at(window.first), at(window.last), window.first, window.last).ok(),
            }
        })
        .collect()
}

pub fn report(cfg: &PipelineConfig, ws: &Workspace) -> Result<()> {
    let fits = pipeline::read_fits(ws)?;
    let counts = tables::read_counts(&ws.counts())?;
    let diagnostics = mallet::parse_diagnostics(&ws.diagnostics())?;
    let summary: MetricsSummary = pipeline::read_json(&ws.calibration())?;
    let (labels, _) = labels::replay(&ws.journal())?;
    let model = pipeline::load_model(ws)?;
    let sizes = model.doc_topic.col_sums();
    let window = cfg.window()?;
    let dir = ws.path(REPORT_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| crate::error::ScanError::io(&dir, e))?;

    let t1 = emerging_rows(&fits, &sizes, &diagnostics, &labels, cfg.top_n, cfg.coherence_floor);
    tables::write_rows_with_header(
        &dir.join("emerging_topics.csv"),
        &["rank", "topic_id", "topic_name", "super_topic_name", "size", "cagr", "err_cagr", "coherence", "top_terms"],
        t1.iter().map(|r| EmergingCsvRow {
            rank: r.rank,
            topic_id: r.topic_id,
            topic_name: &r.topic_name,
            super_topic_name: &r.super_topic_name,
            size: r.size,
            cagr: r.cagr,
            err_cagr: r.err_cagr,
            coherence: r.coherence,
            top_terms: r.top_terms.join(" "),
        }),
    )?;

    tables::write_rows_with_header(
        &dir.join("supertopics.csv"),
        &["super_topic_name", "members", "topic_ids", "size", "cagr", "err_cagr", "chi2_red", "status"],
        supertopic_rows(&labels, &counts, &sizes, window, summary.scale, cfg),
    )?;

    let converged: Vec<FitResult> = fits.iter().filter_map(FitRow::to_fit).filter(|f| f.converged).collect();
    let cagr_hist = cagr_distribution_stats(&converged).map(|(_, h)| hist_rows(&h)).unwrap_or_default();
    tables::write_rows_with_header(&dir.join("cagr_hist.csv"), &["bin_lo", "bin_hi", "count"], cagr_hist)?;

    let coh: Vec<f64> = diagnostics.iter().filter_map(|d| d.coherence).collect();
    let coh_hist = if coh.is_empty() {
        Vec::new()
    } else {
        let w = freedman_diaconis_width(&coh, COHERENCE_MIN_BIN);
        let lo = (coh.iter().copied().fold(f64::INFINITY, f64::min) / w).floor() * w;
        let hi = coh.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hist_rows(&histogram(&coh, lo, hi.max(lo + w), w))
    };
    tables::write_rows_with_header(&dir.join("coherence_hist.csv"), &["bin_lo", "bin_hi", "count"], coh_hist)?;

    tables::write_rows_with_header(
        &dir.join("regression_vs_two_point.csv"),
        &["topic_id", "cagr_fit", "err_cagr", "cagr_two_point"],
        scatter_rows(&fits, &counts, window),
    )?;
    log::info!("report: {} emerging rows, {} super topics", t1.len(), labels.supertopic_members().len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{JunkReason, TopicLabelRecord};
    use horizon_core::growth::CovarianceScaling;

    fn fit_row(id: u32, cagr: f64, err: f64) -> FitRow {
        FitRow {
            topic_id: id,
            n0: Some(1.0),
            k: Some((cagr / 100.0).ln_1p()),
            err_k: Some(0.01),
            cagr: Some(cagr),
            err_cagr: Some(err),
            chi2_red: Some(1.0),
            dof: Some(3),
            converged: true,
            status: "ok".into(),
        }
    }

    fn label(id: u32, name: &str, sup: &str, junk: bool) -> TopicLabelRecord {
        TopicLabelRecord {
            topic_id: id,
            topic_name: name.into(),
            super_topic_name: sup.into(),
            junk,
            junk_reason: if junk { JunkReason::NonTechnical } else { JunkReason::None },
            updated_at: chrono::DateTime::from_timestamp(0, 0).unwrap(),
            author: "a".into(),
        }
    }

    fn diag(id: u32, coherence: f64) -> TopicDiagnostics {
        TopicDiagnostics {
            topic_id: id,
            coherence: Some(coherence),
            coherence_origin: horizon_core::lda::CoherenceOrigin::Parsed,
            top_terms: (0..8).map(|i| (format!("w{id}_{i}"), 0.1)).collect(),
            token_count: 1.0,
        }
    }

    #[test]
    fn emerging_table_without_labels_has_empty_names() {
        let fits = [fit_row(0, 10.0, 1.0), fit_row(1, 106.0, 25.0), FitRow::unfitted(2, "excluded: x")];
        let rows = emerging_rows(&fits, &[5.0, 6.0, 7.0], &[diag(0, -50.0), diag(1, -439.0)], &LabelState::default(), 200, -1000.0);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].topic_id, 1);
        assert_eq!(rows[0].coherence, -439.0);
        assert!(rows[0].topic_name.is_empty() && rows[0].super_topic_name.is_empty());
        assert_eq!(rows[0].top_terms.len(), TABLE_TERMS);
    }

    #[test]
    fn junk_label_removes_row() {
        let fits = [fit_row(0, 10.0, 1.0), fit_row(1, 106.0, 25.0)];
        let mut labels = LabelState::default();
        labels.current.insert(1, label(1, "", "", true));
        let rows = emerging_rows(&fits, &[1.0, 1.0], &[diag(0, -5.0), diag(1, -5.0)], &labels, 200, -1000.0);
        assert_eq!(rows.iter().map(|r| r.topic_id).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn supertopics_sorted_by_aggregate_cagr() {
        let grow = |id, k: f64| YearlyCounts::new(id, (0..5).map(|t| (2014 + t, 200.0 * (k * t as f64).exp())));
        let counts = vec![grow(0, 0.05), grow(1, 0.6), grow(2, 0.3), grow(3, 0.1)];
        let mut labels = LabelState::default();
        for (id, sup) in [(0, "Slow"), (3, "Slow"), (1, "Fast"), (2, "Middle")] {
            labels.supertopics.insert(sup.into());
            labels.current.insert(id, label(id, "t", sup, false));
        }
        let cfg = PipelineConfig { covariance: CovarianceScaling::Reduced, ..Default::default() };
        let rows = supertopic_rows(&labels, &counts, &[1.0; 4], YearWindow::default(), 1.0, &cfg);
        let names: Vec<&str> = rows.iter().map(|r| r.super_topic_name.as_str()).collect();
        assert_eq!(names, vec!["Fast", "Middle", "Slow"]);
        assert!(rows.windows(2).all(|w| w[0].cagr >= w[1].cagr));
        assert_eq!(rows[2].members, 2);
    }

    #[test]
    fn scatter_has_one_row_per_converged_fit() {
        let mut nc = fit_row(2, 5.0, 1.0);
        nc.converged = false;
        let fits = [fit_row(0, 10.0, 1.0), fit_row(1, 20.0, 1.0), nc, FitRow::unfitted(3, "x")];
        let counts = vec![YearlyCounts::new(0, [(2014, 10.0), (2018, 20.0)]), YearlyCounts::new(1, [(2015, 3.0)])];
        let rows = scatter_rows(&fits, &counts, YearWindow::default());
        assert_eq!(rows.len(), 2);
        assert!((rows[0].cagr_two_point.unwrap() - 100.0 * (2f64.powf(0.25) - 1.0)).abs() < 1e-12);
        assert_eq!(rows[1].cagr_two_point, None);
    }
}
