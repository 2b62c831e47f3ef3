use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::Real;

/// Confusion counts, `counts[true_class][predicted_class]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_predictions(num_classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(invalid(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut c = Self::new(num_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.add(t, p)?;
        }
        Ok(c)
    }

    /// Binary confusion with class 1 as positive.
    pub fn binary(tp: usize, fn_: usize, tn: usize, fp: usize) -> Self {
        Self {
            counts: vec![vec![tn, fp], vec![fn_, tp]],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let n = self.num_classes();
        for (what, index) in [("true class", truth), ("predicted class", predicted)] {
            if index >= n {
                return Err(Error::IndexOutOfRange { what, index, len: n });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Samples whose true class is `c`.
    pub fn support(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    /// Samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> usize {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn accuracy(&self) -> Result<Real> {
        let total = self.total();
        if total == 0 {
            return Err(invalid("accuracy of an empty confusion matrix"));
        }
        let correct: usize = (0..self.num_classes()).map(|c| self.counts[c][c]).sum();
        Ok(correct as Real / total as Real)
    }
}

/// Mean per-class recall over classes with nonzero support. In the binary
/// case this is the mean of sensitivity and specificity.
pub fn balanced_accuracy(c: &Confusion) -> Result<Real> {
    let recalls: Vec<Real> = (0..c.num_classes())
        .filter(|&k| c.support(k) > 0)
        .map(|k| c.counts[k][k] as Real / c.support(k) as Real)
        .collect();
    if recalls.is_empty() {
        return Err(invalid("balanced accuracy needs at least one sample"));
    }
    Ok(recalls.iter().sum::<Real>() / recalls.len() as Real)
}

/// Unweighted mean of per-class F1 scores. A class with no true and no
/// predicted samples scores 0.
pub fn macro_f1(c: &Confusion) -> Result<Real> {
    if c.num_classes() == 0 || c.total() == 0 {
        return Err(invalid("macro-F1 needs at least one sample"));
    }
    let f1: Real = (0..c.num_classes())
        .map(|k| {
            let tp = c.counts[k][k] as Real;
            let denom = (c.support(k) + c.predicted(k)) as Real;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    Ok(f1 / c.num_classes() as Real)
}

fn check_pairs(preds: &[Real], targets: &[Real]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(invalid(format!(
            "{} predictions but {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(invalid("metric of an empty prediction set"));
    }
    Ok(())
}

pub fn rmse(preds: &[Real], targets: &[Real]) -> Result<Real> {
    check_pairs(preds, targets)?;
    let mse = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<Real>() / preds.len() as Real;
    Ok(mse.sqrt())
}

/// Pearson correlation. Errors when either side has zero variance.
pub fn pearson_r(preds: &[Real], targets: &[Real]) -> Result<Real> {
    check_pairs(preds, targets)?;
    let n = preds.len() as Real;
    let mp = preds.iter().sum::<Real>() / n;
    let mt = targets.iter().sum::<Real>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(targets) {
        let (dx, dy) = (p - mp, t - mt);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(invalid("Pearson correlation is undefined for zero variance"));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Evaluation summary. Classification fills the class metrics, regression
/// fills `rmse` and `pearson_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub loss: Real,
    pub balanced_accuracy: Option<Real>,
    pub macro_f1: Option<Real>,
    pub accuracy: Option<Real>,
    pub rmse: Option<Real>,
    pub pearson_r: Option<Real>,
    pub confusion: Option<Confusion>,
}

impl MetricsReport {
    pub fn classification(loss: Real, c: Confusion) -> Result<Self> {
        Ok(Self {
            loss,
            balanced_accuracy: Some(balanced_accuracy(&c)?),
            macro_f1: Some(macro_f1(&c)?),
            accuracy: Some(c.accuracy()?),
            confusion: Some(c),
            ..Self::default()
        })
    }

    /// Pearson correlation is left empty when it is undefined.
    pub fn regression(loss: Real, preds: &[Real], targets: &[Real]) -> Result<Self> {
        Ok(Self {
            loss,
            rmse: Some(rmse(preds, targets)?),
            pearson_r: pearson_r(preds, targets).ok(),
            ..Self::default()
        })
    }

    pub fn all_finite(&self) -> bool {
        [
            Some(self.loss),
            self.balanced_accuracy,
            self.macro_f1,
            self.accuracy,
            self.rmse,
            self.pearson_r,
        ]
        .into_iter()
        .flatten()
        .all(Real::is_finite)
    }
}
