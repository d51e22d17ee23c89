//! CSV formats exchanged between pipeline stages and with outside tools.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use horizon_core::growth::{FitResult, YearlyCounts};
use horizon_core::layout::{KnnGraph, Neighbor};
use horizon_core::lq::{LqTable, Quadrant};
use horizon_core::Matrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result, ScanError};
use crate::mallet::write_gzip;

fn csv_err(path: &Path, e: csv::Error) -> ScanError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    ScanError::format(path, line, e.to_string())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().at(path)
}

/// Header-only output when there are no rows.
pub fn write_rows_with_header<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().at(path)
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub topic_id: u32,
    pub year: i32,
    pub count: f64,
}

pub fn write_counts(path: &Path, counts: &[YearlyCounts]) -> Result<()> {
    let rows = counts
        .iter()
        .flat_map(|yc| yc.counts.iter().map(move |(&year, &count)| CountRow { topic_id: yc.topic_id, year, count }));
    write_rows_with_header(path, &["topic_id", "year", "count"], rows)
}

pub fn read_counts(path: &Path) -> Result<Vec<YearlyCounts>> {
    let mut by_topic: BTreeMap<u32, BTreeMap<i32, f64>> = BTreeMap::new();
    for (i, row) in read_rows::<CountRow>(path)?.into_iter().enumerate() {
        if !(row.count.is_finite() && row.count >= 0.0) {
            return Err(ScanError::format(path, i + 2, format!("count must be finite and non-negative, got {}", row.count)));
        }
        if by_topic.entry(row.topic_id).or_default().insert(row.year, row.count).is_some() {
            return Err(ScanError::format(path, i + 2, format!("duplicate topic {} year {}", row.topic_id, row.year)));
        }
    }
    Ok(by_topic.into_iter().map(|(topic_id, counts)| YearlyCounts { topic_id, counts }).collect())
}

/// One fits-CSV row. Numeric columns are empty for topics that could not be
/// fitted; `status` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub topic_id: u32,
    pub n0: Option<f64>,
    pub k: Option<f64>,
    pub err_k: Option<f64>,
    pub cagr: Option<f64>,
    pub err_cagr: Option<f64>,
    pub chi2_red: Option<f64>,
    pub dof: Option<usize>,
    pub converged: bool,
    pub status: String,
}

pub const FIT_OK: &str = "ok";

impl FitRow {
    pub fn fitted(topic_id: u32, f: &FitResult) -> Self {
        Self {
            topic_id,
            n0: Some(f.n0_hat),
            k: Some(f.k_hat),
            err_k: Some(f.err_k),
            cagr: Some(f.cagr),
            err_cagr: Some(f.err_cagr),
            chi2_red: Some(f.chi2_red),
            dof: Some(f.dof),
            converged: f.converged,
            status: FIT_OK.into(),
        }
    }

    pub fn unfitted(topic_id: u32, status: impl Into<String>) -> Self {
        Self {
            topic_id,
            n0: None,
            k: None,
            err_k: None,
            cagr: None,
            err_cagr: None,
            chi2_red: None,
            dof: None,
            converged: false,
            status: status.into(),
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.status == FIT_OK
    }

    /// The stored subset of a [`FitResult`]; fields the CSV does not carry
    /// are reconstructed (`chi2`) or left at zero.
    pub fn to_fit(&self) -> Option<FitResult> {
        if !self.is_fitted() {
            return None;
        }
        let dof = self.dof?;
        let chi2_red = self.chi2_red?;
        Some(FitResult {
            n0_hat: self.n0?,
            k_hat: self.k?,
            err_n0: f64::NAN,
            err_k: self.err_k?,
            cagr: self.cagr?,
            err_cagr: self.err_cagr?,
            chi2: chi2_red * dof as f64,
            chi2_red,
            dof,
            converged: self.converged,
            iterations: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub entity_type: String,
    pub entity_id: String,
    pub category_id: String,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqRow {
    pub entity_id: String,
    pub category_id: String,
    pub lq: f64,
    pub lq_err: f64,
    pub flag: String,
}

pub fn lq_rows(t: &LqTable) -> Vec<LqRow> {
    let mut rows = Vec::with_capacity(t.entities.len() * t.categories.len());
    for (j, e) in t.entities.iter().enumerate() {
        for (i, c) in t.categories.iter().enumerate() {
            rows.push(LqRow {
                entity_id: e.clone(),
                category_id: c.clone(),
                lq: t.lq.get(i, j),
                lq_err: t.err.get(i, j),
                flag: t.flag(i, j).as_str().into(),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantRow {
    pub category_id: String,
    pub entity_a: String,
    pub lq_a: Option<f64>,
    pub entity_b: String,
    pub lq_b: Option<f64>,
    /// Empty when either LQ is undefined.
    pub quadrant: String,
}

pub fn quadrant_rows(t: &LqTable, a: usize, b: usize, q: &[Option<Quadrant>]) -> Vec<QuadrantRow> {
    let (ca, cb) = (t.entity_column(a), t.entity_column(b));
    t.categories
        .iter()
        .enumerate()
        .map(|(i, c)| QuadrantRow {
            category_id: c.clone(),
            entity_a: t.entities[a].clone(),
            lq_a: ca[i],
            entity_b: t.entities[b].clone(),
            lq_b: cb[i],
            quadrant: q[i].map(|q| q.as_str().to_string()).unwrap_or_default(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CoordRow {
    topic_id: u32,
    x: String,
    y: String,
}

/// Nine significant digits.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_coords(path: &Path, coords: &[[f64; 2]]) -> Result<()> {
    let rows = coords.iter().enumerate().map(|(t, c)| CoordRow { topic_id: t as u32, x: sig9(c[0]), y: sig9(c[1]) });
    write_rows_with_header(path, &["topic_id", "x", "y"], rows)
}

/// Coordinates for topics `0..num_topics`; missing or repeated topics and
/// non-finite values are errors.
pub fn read_coords(path: &Path, num_topics: usize) -> Result<Vec<[f64; 2]>> {
    let mut coords: Vec<Option<[f64; 2]>> = vec![None; num_topics];
    for (i, row) in read_rows::<CoordRow>(path)?.into_iter().enumerate() {
        let line = i + 2;
        let t = row.topic_id as usize;
        if t >= num_topics {
            return Err(ScanError::format(path, line, format!("topic {t} not in the model ({num_topics} topics)")));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ScanError::format(path, line, format!("topic {t}: coordinate {s:?} is not a finite number")))
        };
        let c = [parse(&row.x)?, parse(&row.y)?];
        if coords[t].replace(c).is_some() {
            return Err(ScanError::format(path, line, format!("duplicate topic {t}")));
        }
    }
    let missing: Vec<String> = coords.iter().enumerate().filter(|(_, c)| c.is_none()).map(|(t, _)| t.to_string()).collect();
    if !missing.is_empty() {
        return Err(ScanError::Input(format!("{}: missing coordinates for topic(s) {}", path.display(), missing.join(", "))));
    }
    Ok(coords.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRow {
    pub topic_id: u32,
    pub rank: usize,
    pub neighbor_id: u32,
    pub distance: f64,
}

pub fn write_knn(path: &Path, g: &KnnGraph) -> Result<()> {
    let rows = g.neighbors.iter().enumerate().flat_map(|(t, list)| {
        list.iter().enumerate().map(move |(r, n)| KnnRow { topic_id: t as u32, rank: r + 1, neighbor_id: n.topic_id, distance: n.distance })
    });
    write_rows_with_header(path, &["topic_id", "rank", "neighbor_id", "distance"], rows)
}

pub fn read_knn(path: &Path, num_topics: usize) -> Result<KnnGraph> {
    let mut neighbors = vec![Vec::new(); num_topics];
    for (i, row) in read_rows::<KnnRow>(path)?.into_iter().enumerate() {
        let list: &mut Vec<Neighbor> = neighbors
            .get_mut(row.topic_id as usize)
            .ok_or_else(|| ScanError::format(path, i + 2, format!("topic {} out of range", row.topic_id)))?;
        if row.rank != list.len() + 1 {
            return Err(ScanError::format(path, i + 2, format!("rank {} out of sequence", row.rank)));
        }
        list.push(Neighbor { topic_id: row.neighbor_id, distance: row.distance });
    }
    Ok(KnnGraph { neighbors, zero_rows: Vec::new() })
}

/// Wide gzip CSV: a header of `corner` then `columns`, one row per label.
pub fn write_matrix_gz(path: &Path, corner: &str, rows: &[String], columns: &[String], m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: Vec<String>| w.write_record(rec).map_err(|e| csv_err(path, e));
    write(&mut w, std::iter::once(corner.to_string()).chain(columns.iter().cloned()).collect())?;
    for (r, label) in rows.iter().enumerate() {
        let mut rec = Vec::with_capacity(columns.len() + 1);
        rec.push(label.clone());
        rec.extend(m.row(r).iter().map(|v| v.to_string()));
        write(&mut w, rec)?;
    }
    let bytes = w.into_inner().map_err(|e| ScanError::Input(e.to_string()))?;
    write_gzip(path, &bytes)
}

pub struct LabeledMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub matrix: Matrix,
}

pub fn read_matrix_gz(path: &Path) -> Result<LabeledMatrix> {
    let file = std::fs::File::open(path).at(path)?;
    let mut bytes = Vec::new();
    GzDecoder::new(file).read_to_end(&mut bytes).at(path)?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes.as_slice());
    let mut records = r.records();
    let header = records.next().ok_or_else(|| ScanError::format(path, 1, "empty matrix file"))?.map_err(|e| csv_err(path, e))?;
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(rec.get(0).unwrap_or_default().to_string());
        for v in rec.iter().skip(1) {
            data.push(v.parse::<f64>().map_err(|_| ScanError::format(path, i + 2, format!("not a number: {v:?}")))?);
        }
    }
    let matrix = Matrix::from_vec(rows.len(), columns.len(), data).map_err(|e| ScanError::format(path, 0, e.to_string()))?;
    Ok(LabeledMatrix { rows, columns, matrix })
}

/// Optional `topic_id,field` assignment file for map colouring.
pub fn read_fields(path: &Path) -> Result<BTreeMap<u32, String>> {
    #[derive(Deserialize)]
    struct Row {
        topic_id: u32,
        field: String,
    }
    let mut seen = BTreeSet::new();
    let mut out = BTreeMap::new();
    for (i, r) in read_rows::<Row>(path)?.into_iter().enumerate() {
        if !seen.insert(r.topic_id) {
            return Err(ScanError::format(path, i + 2, format!("duplicate topic {}", r.topic_id)));
        }
        out.insert(r.topic_id, r.field);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coords_round_trip_to_nine_digits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("coords.csv");
        let coords = vec![[0.123456789123, -4.0e-7], [1234567.891, 0.0], [-1.0 / 3.0, 2.0]];
        write_coords(&p, &coords).unwrap();
        let back = read_coords(&p, 3).unwrap();
        for (a, b) in coords.iter().zip(&back) {
            for k in 0..2 {
                assert_eq!(sig9(a[k]), sig9(b[k]));
                assert!((a[k] - b[k]).abs() <= 5e-9 * a[k].abs());
            }
        }
        // exporting the imported values reproduces the file exactly
        let p2 = dir.path().join("coords2.csv");
        write_coords(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn coords_import_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "topic_id,x,y\n0,1,2\n1,3,4\n").unwrap();
        let err = read_coords(&p, 3).unwrap_err().to_string();
        assert!(err.contains("topic(s) 2"), "{err}");
        std::fs::write(&p, "topic_id,x,y\n0,1,2\n0,3,4\n").unwrap();
        assert!(read_coords(&p, 1).unwrap_err().to_string().contains("duplicate"));
        std::fs::write(&p, "topic_id,x,y\n0,NaN,2\n").unwrap();
        assert!(read_coords(&p, 1).is_err());
        std::fs::write(&p, "topic_id,x,y\n0,1,2\n1,3,4\n2,5,6\n").unwrap();
        assert_eq!(read_coords(&p, 3).unwrap().len(), 3);
    }

    #[test]
    fn counts_and_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("counts.csv");
        let counts = vec![YearlyCounts::new(0, [(2014, 1.5), (2015, 0.0)]), YearlyCounts::new(3, [(2016, 2.25)])];
        write_counts(&p, &counts).unwrap();
        assert_eq!(read_counts(&p).unwrap(), counts);

        let m = Matrix::from_rows(&[vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let g = dir.path().join("m.csv.gz");
        write_matrix_gz(&g, "doc_id", &["a".into(), "b".into()], &["t0".into(), "t1".into()], &m).unwrap();
        let back = read_matrix_gz(&g).unwrap();
        assert_eq!(back.matrix, m);
        assert_eq!(back.rows, vec!["a", "b"]);
    }

    #[test]
    fn fit_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fits.csv");
        let rows = vec![FitRow::unfitted(1, "unfittable"), FitRow { cagr: Some(12.5), ..FitRow::unfitted(2, FIT_OK) }];
        write_rows(&p, &rows).unwrap();
        assert_eq!(read_rows::<FitRow>(&p).unwrap(), rows);
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("topic_id,n0,k,err_k,cagr,err_cagr,chi2_red,dof,converged,status\n"));
    }
}
