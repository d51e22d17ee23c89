//! Two-dimensional topic maps and the topic nearest-neighbor graph.
//!
//! Features are the rows of the topic-term probability matrix. Coordinates
//! come either from an external embedding or from a PCA fallback.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

pub const DEFAULT_NEIGHBORS: usize = 15;
pub const PCA_TOL: f64 = 1e-9;
pub const PCA_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LayoutMethod {
    Imported,
    Pca,
}

impl LayoutMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutMethod::Imported => "imported",
            LayoutMethod::Pca => "pca",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Neighbor {
    pub topic_id: u32,
    /// `1 − cos`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KnnGraph {
    /// Neighbors of each topic, nearest first.
    pub neighbors: Vec<Vec<Neighbor>>,
    /// Topics with an all-zero feature row; they have no neighbors and are
    /// nobody's neighbor.
    pub zero_rows: Vec<u32>,
}

/// Coordinates indexed by topic id.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TopicMapLayout {
    pub coords: Vec<[f64; 2]>,
    pub method: LayoutMethod,
    pub knn: KnnGraph,
    /// Set when PCA found fewer than two nonzero directions.
    pub rank_deficient: bool,
}

impl TopicMapLayout {
    /// Wraps coordinates produced elsewhere; every coordinate must be finite.
    pub fn imported(coords: Vec<[f64; 2]>, knn: KnnGraph) -> Result<Self> {
        if let Some(t) = coords.iter().position(|c| !(c[0].is_finite() && c[1].is_finite())) {
            return Err(Error::InvalidInput(alloc::format!("topic {t}: non-finite coordinate")));
        }
        Ok(Self { coords, method: LayoutMethod::Imported, knn, rank_deficient: false })
    }

    pub fn num_topics(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub coords: Vec<[f64; 2]>,
    /// Variance captured by each axis.
    pub variances: [f64; 2],
    pub rank_deficient: bool,
}

/// Projection of the centered rows onto the top two principal directions.
///
/// The directions come from power iteration on `XᵀX`, applied implicitly as
/// `Xᵀ(Xv)`, with the first direction deflated out of the second. Each axis
/// is oriented so that its largest-magnitude coordinate is positive.
pub fn pca(features: &Matrix) -> Result<Pca> {
    let (k, v) = (features.rows(), features.cols());
    if k < 3 {
        return Err(Error::InvalidInput(alloc::format!("PCA layout needs at least 3 topics, got {k}")));
    }
    if v == 0 {
        return Err(Error::Empty("feature columns"));
    }
    let mean: Vec<f64> = features.col_sums().into_iter().map(|s| s / k as f64).collect();
    let mut x = features.clone();
    for r in 0..k {
        for (e, m) in x.row_mut(r).iter_mut().zip(&mean) {
            *e -= m;
        }
    }
    let total_var: f64 = x.as_slice().iter().map(|e| e * e).sum();
    let mut axes: Vec<Vec<f64>> = Vec::new();
    let mut variances = [0.0; 2];
    let mut rank_deficient = false;
    for axis in 0..2 {
        let (dir, lambda) = power_iteration(&x, &axes, seed_vector(v, axis));
        if !(lambda > 1e-12 * total_var.max(f64::MIN_POSITIVE)) {
            rank_deficient = true;
            break;
        }
        variances[axis] = lambda / k as f64;
        axes.push(dir);
    }
    let mut coords = vec![[0.0; 2]; k];
    for (a, dir) in axes.iter().enumerate() {
        let proj: Vec<f64> = (0..k).map(|r| dot(x.row(r), dir)).collect();
        let lead = proj.iter().copied().fold(0.0f64, |m, p| if p.abs() > m.abs() { p } else { m });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for (c, p) in coords.iter_mut().zip(proj) {
            c[a] = sign * p;
        }
    }
    Ok(Pca { coords, variances, rank_deficient })
}

pub fn pca_layout(term_topic: &Matrix, knn: KnnGraph) -> Result<TopicMapLayout> {
    let p = pca(term_topic)?;
    Ok(TopicMapLayout { coords: p.coords, method: LayoutMethod::Pca, knn, rank_deficient: p.rank_deficient })
}

/// Fixed, topic-order independent start vector.
fn seed_vector(len: usize, axis: usize) -> Vec<f64> {
    let mut s = 0x9e37_79b9_7f4a_7c15u64 ^ (axis as u64 + 1);
    (0..len)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(dot(v, v));
    if n > 0.0 {
        v.iter_mut().for_each(|e| *e /= n);
    }
    n
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(e, bi)| *e -= c * bi);
    }
}

/// Leading eigenpair of `XᵀX` restricted to the complement of `basis`.
fn power_iteration(x: &Matrix, basis: &[Vec<f64>], mut v: Vec<f64>) -> (Vec<f64>, f64) {
    project_out(&mut v, basis);
    if normalize(&mut v) == 0.0 {
        return (v, 0.0);
    }
    let mut lambda = 0.0;
    for _ in 0..PCA_MAX_ITER {
        let xv: Vec<f64> = (0..x.rows()).map(|r| dot(x.row(r), &v)).collect();
        let mut next = vec![0.0; x.cols()];
        for (r, &s) in xv.iter().enumerate() {
            next.iter_mut().zip(x.row(r)).for_each(|(n, e)| *n += s * e);
        }
        project_out(&mut next, basis);
        lambda = normalize(&mut next);
        if lambda == 0.0 {
            return (next, 0.0);
        }
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        v = next;
        if libm::sqrt(delta) < PCA_TOL {
            break;
        }
    }
    (v, lambda)
}

/// Squared row norms of the feature matrix, shared by every kNN query.
pub fn row_norms(features: &Matrix) -> Vec<f64> {
    (0..features.rows()).map(|r| dot(features.row(r), features.row(r))).collect()
}

/// `1 − cos(a, b)`; infinite when either row is zero.
pub fn cosine_distance(features: &Matrix, norms: &[f64], a: usize, b: usize) -> f64 {
    if norms[a] == 0.0 || norms[b] == 0.0 {
        return f64::INFINITY;
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    // identical rows give exactly 0: sqrt(fl(d·d)) == d
    let cos = dot(features.row(lo), features.row(hi)) / libm::sqrt(norms[lo] * norms[hi]);
    (1.0 - cos).clamp(0.0, 2.0)
}

/// The `k` nearest topics to `query`, ties broken by lower topic id.
pub fn knn_query(features: &Matrix, norms: &[f64], query: usize, k: usize) -> Vec<Neighbor> {
    if norms[query] == 0.0 {
        return Vec::new();
    }
    let mut all: Vec<Neighbor> = (0..features.rows())
        .filter(|&o| o != query && norms[o] > 0.0)
        .map(|o| Neighbor { topic_id: o as u32, distance: cosine_distance(features, norms, query, o) })
        .collect();
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.topic_id.cmp(&b.topic_id)));
    all.truncate(k);
    all
}

pub fn check_knn_k(topics: usize, k: usize) -> Result<()> {
    if k == 0 || k >= topics {
        return Err(Error::InvalidInput(alloc::format!("k must satisfy 0 < k < {topics}, got {k}")));
    }
    Ok(())
}

pub fn knn_graph(term_topic: &Matrix, k: usize) -> Result<KnnGraph> {
    check_knn_k(term_topic.rows(), k)?;
    let norms = row_norms(term_topic);
    Ok(KnnGraph {
        neighbors: (0..term_topic.rows()).map(|q| knn_query(term_topic, &norms, q, k)).collect(),
        zero_rows: (0..norms.len()).filter(|&r| norms[r] == 0.0).map(|r| r as u32).collect(),
    })
}
