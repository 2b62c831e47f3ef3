use crate::error::{invalid, Result};
use crate::tensor::Real;

/// A finite multiset of feature vectors: distinct elements with positive
/// multiplicities.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiset {
    elements: Vec<Vec<Real>>,
    multiplicities: Vec<usize>,
}

impl Multiset {
    /// Builds a multiset from distinct elements and their counts.
    pub fn new(elements: Vec<Vec<Real>>, multiplicities: Vec<usize>) -> Result<Self> {
        if elements.len() != multiplicities.len() {
            return Err(invalid(format!(
                "{} elements but {} multiplicities",
                elements.len(),
                multiplicities.len()
            )));
        }
        if multiplicities.contains(&0) {
            return Err(invalid("multiplicities must be positive"));
        }
        for i in 0..elements.len() {
            if elements[..i].contains(&elements[i]) {
                return Err(invalid(format!("element {i} is repeated")));
            }
        }
        Ok(Self {
            elements,
            multiplicities,
        })
    }

    /// Counts occurrences of each distinct item (exact equality), keeping
    /// first-occurrence order.
    pub fn from_items<I: IntoIterator<Item = Vec<Real>>>(items: I) -> Self {
        let mut elements: Vec<Vec<Real>> = Vec::new();
        let mut multiplicities = Vec::new();
        for item in items {
            match elements.iter().position(|e| *e == item) {
                Some(i) => multiplicities[i] += 1,
                None => {
                    elements.push(item);
                    multiplicities.push(1);
                }
            }
        }
        Self {
            elements,
            multiplicities,
        }
    }

    pub fn elements(&self) -> &[Vec<Real>] {
        &self.elements
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Total number of items counted with multiplicity.
    pub fn cardinality(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Every element repeated by its multiplicity.
    pub fn items(&self) -> Vec<Vec<Real>> {
        self.elements
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(e, &m)| std::iter::repeat_n(e.clone(), m))
            .collect()
    }

    fn multiplicity_of(&self, e: &[Real]) -> Option<usize> {
        self.elements
            .iter()
            .position(|x| x == e)
            .map(|i| self.multiplicities[i])
    }
}

/// Multiplies every multiplicity by `k`.
pub fn scale_multiset(x: &Multiset, k: usize) -> Result<Multiset> {
    if k < 1 {
        return Err(invalid("scale factor must be at least 1"));
    }
    Ok(Multiset {
        elements: x.elements.clone(),
        multiplicities: x.multiplicities.iter().map(|m| m * k).collect(),
    })
}

/// True when both multisets have the same elements and `m2 = k * m1` for
/// some integer `k >= 1`.
pub fn is_equally_distributed(x1: &Multiset, x2: &Multiset) -> bool {
    if x1.elements.len() != x2.elements.len() || x1.elements.is_empty() {
        return x1.elements.is_empty() && x2.elements.is_empty();
    }
    let mut k = None;
    for (e, &m1) in x1.elements.iter().zip(&x1.multiplicities) {
        let Some(m2) = x2.multiplicity_of(e) else {
            return false;
        };
        if m2 % m1 != 0 {
            return false;
        }
        let ratio = m2 / m1;
        match k {
            None => k = Some(ratio),
            Some(k0) if k0 != ratio => return false,
            _ => {}
        }
    }
    true
}
