//! Location quotients: how concentrated an entity's activity is in a
//! category relative to the activity of all entities.
//!
//! Activity is laid out categories × entities, `n[i][j]` being the
//! (possibly fractional) activity of entity `j` in category `i`.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::lda::GroupedSums;
use crate::text::Source;
use crate::{Error, Matrix, Result};

/// Relative error above which a cell is flagged low-confidence.
pub const LOW_CONFIDENCE_REL_ERR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActivityMatrix {
    pub categories: Vec<String>,
    pub entities: Vec<String>,
    /// `categories × entities`.
    pub n: Matrix,
}

impl ActivityMatrix {
    pub fn new(categories: Vec<String>, entities: Vec<String>, n: Matrix) -> Result<Self> {
        if n.rows() != categories.len() {
            return Err(Error::ShapeMismatch { expected: categories.len(), found: n.rows() });
        }
        if n.cols() != entities.len() {
            return Err(Error::ShapeMismatch { expected: entities.len(), found: n.cols() });
        }
        for (what, ids) in [("category", &categories), ("entity", &entities)] {
            let mut seen = BTreeSet::new();
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(Error::InvalidInput(alloc::format!("duplicate {what} id {dup:?}")));
            }
        }
        if let Some(&v) = n.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(alloc::format!("activity must be finite and non-negative, got {v}")));
        }
        Ok(Self { categories, entities, n })
    }

    /// Drops categories and entities without any positive activity.
    pub fn prune_empty(&self) -> Self {
        let rows = self.n.row_sums();
        let cols = self.n.col_sums();
        let keep_r: Vec<usize> = (0..rows.len()).filter(|&i| rows[i] > 0.0).collect();
        let keep_c: Vec<usize> = (0..cols.len()).filter(|&j| cols[j] > 0.0).collect();
        let mut n = Matrix::zeros(keep_r.len(), keep_c.len());
        for (a, &i) in keep_r.iter().enumerate() {
            for (b, &j) in keep_c.iter().enumerate() {
                n.set(a, b, self.n.get(i, j));
            }
        }
        Self {
            categories: keep_r.iter().map(|&i| self.categories[i].clone()).collect(),
            entities: keep_c.iter().map(|&j| self.entities[j].clone()).collect(),
            n,
        }
    }

    /// Keeps only the listed categories, in the given order; the result is
    /// the universe for any LQ computed from it.
    pub fn select_categories(&self, keep: &[usize]) -> Result<Self> {
        let mut n = Matrix::zeros(keep.len(), self.entities.len());
        for (a, &i) in keep.iter().enumerate() {
            if i >= self.categories.len() {
                return Err(Error::InvalidInput(alloc::format!("category index {i} out of range")));
            }
            n.row_mut(a).copy_from_slice(self.n.row(i));
        }
        Self::new(keep.iter().map(|&i| self.categories[i].clone()).collect(), self.entities.clone(), n)
    }

    /// Sums member categories into groups. Members may belong to at most one
    /// group; categories outside every group are dropped.
    pub fn aggregate_categories(&self, groups: &[(String, Vec<usize>)]) -> Result<Self> {
        let mut used = BTreeSet::new();
        let mut n = Matrix::zeros(groups.len(), self.entities.len());
        for (g, (name, members)) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidInput(alloc::format!("group {name:?} has no members")));
            }
            for &i in members {
                if i >= self.categories.len() {
                    return Err(Error::InvalidInput(alloc::format!("group {name:?}: category index {i} out of range")));
                }
                if !used.insert(i) {
                    return Err(Error::InvalidInput(alloc::format!("category {} assigned to two groups", self.categories[i])));
                }
                for j in 0..self.entities.len() {
                    n.add(g, j, self.n.get(i, j));
                }
            }
        }
        Self::new(groups.iter().map(|g| g.0.clone()).collect(), self.entities.clone(), n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LqFlag {
    Ok,
    /// Relative error above [`LOW_CONFIDENCE_REL_ERR`].
    LowConfidence,
    /// Zero activity in the cell: LQ is 0 but its error is undefined.
    ErrorUndefined,
    /// A zero row or column sum: LQ itself is undefined.
    Undefined,
}

impl LqFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            LqFlag::Ok => "ok",
            LqFlag::LowConfidence => "low_confidence",
            LqFlag::ErrorUndefined => "error_undefined",
            LqFlag::Undefined => "undefined",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LqTable {
    pub categories: Vec<String>,
    pub entities: Vec<String>,
    /// `categories × entities`; NaN where undefined.
    pub lq: Matrix,
    /// Absolute standard error; NaN where undefined.
    pub err: Matrix,
    pub flags: Vec<LqFlag>,
    /// Activity of each category over all entities.
    pub category_totals: Vec<f64>,
    /// Activity of each entity over all categories.
    pub entity_totals: Vec<f64>,
    pub grand_total: f64,
}

impl LqTable {
    pub fn flag(&self, i: usize, j: usize) -> LqFlag {
        self.flags[i * self.entities.len() + j]
    }

    pub fn entity_index(&self, id: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == id)
    }

    /// LQ column of one entity, `None` where undefined.
    pub fn entity_column(&self, j: usize) -> Vec<Option<f64>> {
        (0..self.categories.len())
            .map(|i| (self.flag(i, j) != LqFlag::Undefined).then(|| self.lq.get(i, j)))
            .collect()
    }
}

/// `LQ[i][j] = (n[i][j] / Σ_k n[k][j]) / (Σ_l n[i][l] / Σ_{k,l} n[k][l])`
/// with Poisson errors on the four factors added in quadrature.
pub fn compute_lq(m: &ActivityMatrix) -> Result<LqTable> {
    let (rows, cols) = (m.n.rows(), m.n.cols());
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("activity matrix"));
    }
    let grand_total = m.n.total();
    if !(grand_total > 0.0) {
        return Err(Error::InvalidInput("activity matrix has no positive entries".into()));
    }
    let category_totals = m.n.row_sums();
    let entity_totals = m.n.col_sums();
    let err = propagate_lq_error(m)?;
    let mut lq = Matrix::zeros(rows, cols);
    let mut flags = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let (ct, et) = (category_totals[i], entity_totals[j]);
            if !(ct > 0.0 && et > 0.0) {
                lq.set(i, j, f64::NAN);
                flags.push(LqFlag::Undefined);
                continue;
            }
            let nij = m.n.get(i, j);
            let v = (nij / et) / (ct / grand_total);
            lq.set(i, j, v);
            flags.push(if nij == 0.0 {
                LqFlag::ErrorUndefined
            } else if err.get(i, j) / v > LOW_CONFIDENCE_REL_ERR {
                LqFlag::LowConfidence
            } else {
                LqFlag::Ok
            });
        }
    }
    Ok(LqTable {
        categories: m.categories.clone(),
        entities: m.entities.clone(),
        lq,
        err,
        flags,
        category_totals,
        entity_totals,
        grand_total,
    })
}

/// Relative LQ error `√(1/n_ij + 1/Σ_k n_kj + 1/Σ_l n_il + 1/Σ n)`,
/// treating each factor as an independent Poisson count.
pub fn relative_lq_error(nij: f64, entity_total: f64, category_total: f64, grand_total: f64) -> f64 {
    if !(nij > 0.0 && entity_total > 0.0 && category_total > 0.0 && grand_total > 0.0) {
        return f64::NAN;
    }
    libm::sqrt(1.0 / nij + 1.0 / entity_total + 1.0 / category_total + 1.0 / grand_total)
}

/// Absolute LQ errors; NaN wherever the cell or a denominator is zero.
pub fn propagate_lq_error(m: &ActivityMatrix) -> Result<Matrix> {
    let (rows, cols) = (m.n.rows(), m.n.cols());
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("activity matrix"));
    }
    let total = m.n.total();
    let ct = m.n.row_sums();
    let et = m.n.col_sums();
    let mut err = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let nij = m.n.get(i, j);
            let rel = relative_lq_error(nij, et[j], ct[i], total);
            let lq = (nij / et[j]) / (ct[i] / total);
            err.set(i, j, rel * lq);
        }
    }
    Ok(err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Quadrant {
    /// Both entities above 1.
    I,
    /// Only the first entity above 1.
    II,
    /// Neither above 1.
    III,
    /// Only the second entity above 1.
    IV,
}

impl Quadrant {
    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::I => "I",
            Quadrant::II => "II",
            Quadrant::III => "III",
            Quadrant::IV => "IV",
        }
    }

    /// An LQ of exactly 1 counts as not above.
    pub fn of(a: f64, b: f64) -> Option<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return None;
        }
        Some(match (a > 1.0, b > 1.0) {
            (true, true) => Quadrant::I,
            (true, false) => Quadrant::II,
            (false, false) => Quadrant::III,
            (false, true) => Quadrant::IV,
        })
    }
}

/// Per-category quadrant for a pair of entities; `None` where either LQ is
/// undefined.
pub fn quadrant_classify(lqs_a: &[Option<f64>], lqs_b: &[Option<f64>]) -> Result<Vec<Option<Quadrant>>> {
    if lqs_a.len() != lqs_b.len() {
        return Err(Error::ShapeMismatch { expected: lqs_a.len(), found: lqs_b.len() });
    }
    Ok(lqs_a.iter().zip(lqs_b).map(|(a, b)| Quadrant::of((*a)?, (*b)?)).collect())
}

/// Topic × source activity from document-topic sums grouped by source. All
/// three sources are present as entities, in [`Source::ALL`] order, even if
/// the corpus lacks one of them.
pub fn source_activity(by_source: &GroupedSums) -> Result<ActivityMatrix> {
    let k = by_source.sums.rows();
    let mut n = Matrix::zeros(k, Source::ALL.len());
    for (j, src) in Source::ALL.iter().enumerate() {
        if let Some(g) = by_source.group_index(src.as_str()) {
            for z in 0..k {
                n.set(z, j, by_source.sums.get(z, g));
            }
        }
    }
    for g in &by_source.groups {
        if !Source::ALL.iter().any(|s| s.as_str() == g) {
            return Err(Error::InvalidInput(alloc::format!("unknown source group {g:?}")));
        }
    }
    ActivityMatrix::new(
        (0..k).map(|z| z.to_string()).collect(),
        Source::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        n,
    )
}

/// Source LQ per topic.
pub fn lq_by_source(by_source: &GroupedSums) -> Result<LqTable> {
    compute_lq(&source_activity(by_source)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| alloc::format!("{prefix}{i}")).collect()
    }

    fn fixture() -> ActivityMatrix {
        // entity A: [30, 10], entity B: [10, 50]
        let n = Matrix::from_rows(&[vec![30.0, 10.0], vec![10.0, 50.0]]).unwrap();
        ActivityMatrix::new(vec!["1".into(), "2".into()], vec!["A".into(), "B".into()], n).unwrap()
    }

    /// Direct evaluation, written independently of `compute_lq`.
    fn brute_lq(n: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let total: f64 = n.iter().flatten().sum();
        let entity: f64 = n.iter().map(|r| r[j]).sum();
        let category: f64 = n[i].iter().sum();
        n[i][j] * total / (entity * category)
    }

    #[test]
    fn two_by_two_fixture() {
        let t = compute_lq(&fixture()).unwrap();
        assert!((t.lq.get(0, 0) - 1.875).abs() < 1e-12);
        assert!((t.lq.get(1, 1) - 25.0 / 18.0).abs() < 1e-12);
        let rel = t.err.get(0, 0) / t.lq.get(0, 0);
        assert!((rel - libm::sqrt(1.0 / 30.0 + 1.0 / 40.0 + 1.0 / 40.0 + 0.01)).abs() < 1e-12);
        assert!((rel - 0.3055).abs() < 1e-4);
        assert!((t.err.get(0, 0) - 0.573).abs() < 1e-3);
        assert!(t.flags.iter().all(|&f| f == LqFlag::Ok));
    }

    #[test]
    fn single_entity_and_uniform_are_all_ones() {
        let single = ActivityMatrix::new(ids("c", 3), ids("e", 1), Matrix::from_vec(3, 1, vec![1.0, 7.5, 3.0]).unwrap()).unwrap();
        let uniform = ActivityMatrix::new(ids("c", 4), ids("e", 3), Matrix::from_vec(4, 3, vec![2.5; 12]).unwrap()).unwrap();
        for m in [single, uniform] {
            let t = compute_lq(&m).unwrap();
            assert!(t.lq.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn huge_counts_shrink_error() {
        let m = ActivityMatrix::new(ids("c", 2), ids("e", 2), Matrix::from_vec(2, 2, vec![1e6; 4]).unwrap()).unwrap();
        let t = compute_lq(&m).unwrap();
        let rel = t.err.get(0, 0) / t.lq.get(0, 0);
        assert!((rel - 0.0015).abs() < 5e-4, "{rel}");
    }

    #[test]
    fn flags_for_zero_and_tiny_cells() {
        let n = Matrix::from_rows(&[vec![1.0, 100.0, 0.0], vec![0.0, 100.0, 0.0]]).unwrap();
        let t = compute_lq(&ActivityMatrix::new(ids("c", 2), ids("e", 3), n).unwrap()).unwrap();
        assert_eq!(t.flag(0, 0), LqFlag::LowConfidence);
        assert!(t.err.get(0, 0) / t.lq.get(0, 0) > 1.0);
        assert_eq!(t.flag(1, 0), LqFlag::ErrorUndefined);
        assert_eq!(t.lq.get(1, 0), 0.0);
        assert!(t.err.get(1, 0).is_nan());
        assert_eq!(t.flag(0, 2), LqFlag::Undefined);
        assert!(t.lq.get(0, 2).is_nan());
        assert_eq!(t.entity_column(2), vec![None, None]);
    }

    #[test]
    fn empty_and_invalid_inputs() {
        let empty = ActivityMatrix::new(vec![], vec![], Matrix::zeros(0, 0)).unwrap();
        assert!(compute_lq(&empty).is_err());
        let zeros = ActivityMatrix::new(ids("c", 1), ids("e", 1), Matrix::zeros(1, 1)).unwrap();
        assert!(compute_lq(&zeros).is_err());
        assert!(ActivityMatrix::new(vec!["a".into(), "a".into()], ids("e", 1), Matrix::zeros(2, 1)).is_err());
        assert!(ActivityMatrix::new(ids("c", 1), ids("e", 1), Matrix::from_vec(1, 1, vec![-1.0]).unwrap()).is_err());
    }

    #[test]
    fn quadrants() {
        assert_eq!(Quadrant::of(1.5, 1.2), Some(Quadrant::I));
        assert_eq!(Quadrant::of(0.8, 1.3), Some(Quadrant::IV));
        assert_eq!(Quadrant::of(1.3, 0.8), Some(Quadrant::II));
        assert_eq!(Quadrant::of(1.0, 1.0), Some(Quadrant::III));
        let q = quadrant_classify(&[Some(2.0), None], &[Some(0.5), Some(2.0)]).unwrap();
        assert_eq!(q, vec![Some(Quadrant::II), None]);
        assert!(quadrant_classify(&[Some(1.0)], &[]).is_err());
    }

    #[test]
    fn supertopic_sums_members_first() {
        let n = Matrix::from_rows(&[vec![5.0, 1.0], vec![1.0, 5.0], vec![2.0, 2.0]]).unwrap();
        let m = ActivityMatrix::new(ids("t", 3), ids("e", 2), n).unwrap();
        let agg = m.aggregate_categories(&[("s0".into(), vec![0, 2]), ("s1".into(), vec![1])]).unwrap();
        assert_eq!(agg.n.row(0), &[7.0, 3.0]);
        let t = compute_lq(&agg).unwrap();
        // 7·16 / (10·8)
        assert!((t.lq.get(0, 0) - 1.4).abs() < 1e-12);
        assert!(m.aggregate_categories(&[("a".into(), vec![0]), ("b".into(), vec![0])]).is_err());
    }

    #[test]
    fn select_categories_changes_universe() {
        let m = fixture().select_categories(&[0]).unwrap();
        let t = compute_lq(&m).unwrap();
        // a single category: every entity has LQ 1
        assert!(t.lq.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn source_lq_matches_transposed_fixture() {
        let sums = Matrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![0.0, 6.0, 2.0], vec![3.0, 3.0, 3.0]]).unwrap();
        let by_source = GroupedSums { groups: vec!["grant".into(), "patent".into(), "publication".into()], sums };
        let t = lq_by_source(&by_source).unwrap();
        assert_eq!(t.entities, vec!["publication", "patent", "grant"]);
        // the same numbers laid out entities × categories
        let rows = vec![vec![0.0, 2.0, 3.0], vec![1.0, 6.0, 3.0], vec![4.0, 0.0, 3.0]];
        let transposed = Matrix::from_rows(&rows).unwrap().transpose();
        let direct = compute_lq(&ActivityMatrix::new(ids("", 3), t.entities.clone(), transposed.clone()).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (t.lq.get(i, j), direct.lq.get(i, j));
                assert!(a == b || (a.is_nan() && b.is_nan()));
                let tr: Vec<Vec<f64>> = (0..3).map(|r| transposed.row(r).to_vec()).collect();
                assert!((a - brute_lq(&tr, i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn topic_only_in_patents() {
        let sums = Matrix::from_rows(&[vec![0.0, 5.0, 0.0], vec![3.0, 3.0, 3.0]]).unwrap();
        let by_source = GroupedSums { groups: vec!["grant".into(), "patent".into(), "publication".into()], sums };
        let t = lq_by_source(&by_source).unwrap();
        let patent = t.entity_index("patent").unwrap();
        assert!(t.lq.get(0, patent) > 1.0);
        for src in ["publication", "grant"] {
            let j = t.entity_index(src).unwrap();
            assert_eq!(t.lq.get(0, j), 0.0);
            assert_eq!(t.flag(0, j), LqFlag::ErrorUndefined);
        }
    }

    fn positive_matrix(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| proptest::collection::vec(proptest::collection::vec(0.01f64..1000.0, c), r))
    }

    proptest! {
        #[test]
        fn matches_direct_evaluation(n in positive_matrix(5)) {
            let m = ActivityMatrix::new(ids("c", n.len()), ids("e", n[0].len()), Matrix::from_rows(&n).unwrap()).unwrap();
            let t = compute_lq(&m).unwrap();
            for i in 0..n.len() {
                for j in 0..n[0].len() {
                    let want = brute_lq(&n, i, j);
                    prop_assert!((t.lq.get(i, j) - want).abs() <= 1e-12 * want.max(1.0));
                }
            }
        }

        #[test]
        fn weighted_average_is_one(n in positive_matrix(6)) {
            let m = ActivityMatrix::new(ids("c", n.len()), ids("e", n[0].len()), Matrix::from_rows(&n).unwrap()).unwrap();
            let t = compute_lq(&m).unwrap();
            for i in 0..n.len() {
                let s: f64 = (0..n[0].len()).map(|j| t.lq.get(i, j) * t.entity_totals[j] / t.grand_total).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn global_scale_invariance(n in positive_matrix(5), lambda in 0.001f64..1000.0) {
            let m = ActivityMatrix::new(ids("c", n.len()), ids("e", n[0].len()), Matrix::from_rows(&n).unwrap()).unwrap();
            let scaled: Vec<Vec<f64>> = n.iter().map(|r| r.iter().map(|v| v * lambda).collect()).collect();
            let ms = ActivityMatrix::new(m.categories.clone(), m.entities.clone(), Matrix::from_rows(&scaled).unwrap()).unwrap();
            let (a, b) = (compute_lq(&m).unwrap(), compute_lq(&ms).unwrap());
            for (x, y) in a.lq.as_slice().iter().zip(b.lq.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
            }
        }

        #[test]
        fn more_cell_mass_lowers_cell_term(n in 0.1f64..1e4, extra in 0.1f64..1e4, et in 1e4f64..1e5, ct in 1e4f64..1e5) {
            let total = et + ct;
            // only the 1/n_ij term moves
            let before = relative_lq_error(n, et, ct, total);
            let after = relative_lq_error(n + extra, et, ct, total);
            prop_assert!(after < before);
        }
    }
}
