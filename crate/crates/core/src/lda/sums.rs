use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::text::RawDocument;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Attribute {
    Year,
    Source,
    Country,
    Org,
    Sponsor,
}

impl Attribute {
    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Year => "year",
            Attribute::Source => "source",
            Attribute::Country => "country",
            Attribute::Org => "org",
            Attribute::Sponsor => "sponsor",
        }
    }

    fn values(self, doc: &RawDocument) -> Vec<String> {
        let uniq = |v: &[String]| v.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        match self {
            Attribute::Year => alloc::vec![doc.year.to_string()],
            Attribute::Source => alloc::vec![doc.source.as_str().to_string()],
            Attribute::Country => uniq(&doc.countries),
            Attribute::Org => uniq(&doc.orgs),
            Attribute::Sponsor => uniq(&doc.sponsors),
        }
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "year" => Ok(Attribute::Year),
            "source" => Ok(Attribute::Source),
            "country" | "countries" => Ok(Attribute::Country),
            "org" | "orgs" | "organization" => Ok(Attribute::Org),
            "sponsor" | "sponsors" => Ok(Attribute::Sponsor),
            other => Err(Error::UnknownAttribute(other.into())),
        }
    }
}

/// Fractional document counts per topic per group value.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSums {
    /// Group values in ascending order.
    pub groups: Vec<String>,
    /// `K × G`.
    pub sums: Matrix,
}

impl GroupedSums {
    pub fn group_index(&self, value: &str) -> Option<usize> {
        self.groups.binary_search_by(|g| g.as_str().cmp(value)).ok()
    }
}

/// `Σ_d t[d][k]` split by a document attribute. A document with several
/// values for the attribute gives each value an equal share of its mass.
pub fn doc_topic_sums(doc_topic: &Matrix, docs: &[RawDocument], attr: Attribute) -> Result<GroupedSums> {
    if docs.len() != doc_topic.rows() {
        return Err(Error::ShapeMismatch { expected: doc_topic.rows(), found: docs.len() });
    }
    let per_doc: Vec<Vec<String>> = docs.iter().map(|d| attr.values(d)).collect();
    for (doc, vals) in docs.iter().zip(&per_doc) {
        if vals.is_empty() {
            return Err(Error::MissingAttribute { doc_id: doc.doc_id.clone(), attribute: attr.as_str() });
        }
    }
    let index: BTreeMap<&str, usize> = per_doc
        .iter()
        .flatten()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, i))
        .collect();
    let k = doc_topic.cols();
    let mut sums = Matrix::zeros(k, index.len());
    for (d, vals) in per_doc.iter().enumerate() {
        let share = 1.0 / vals.len() as f64;
        for v in vals {
            let g = index[v.as_str()];
            for (z, &t) in doc_topic.row(d).iter().enumerate() {
                sums.add(z, g, t * share);
            }
        }
    }
    Ok(GroupedSums { groups: index.keys().map(|g| g.to_string()).collect(), sums })
}
