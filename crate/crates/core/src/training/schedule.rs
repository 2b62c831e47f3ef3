use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::Real;

/// A metric must beat the best value by more than this to count as progress.
pub const IMPROVEMENT_EPSILON: Real = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    fn improves(self, value: Real, best: Option<Real>) -> bool {
        match best {
            None => true,
            Some(b) => match self {
                Direction::Maximize => value > b + IMPROVEMENT_EPSILON,
                Direction::Minimize => value < b - IMPROVEMENT_EPSILON,
            },
        }
    }
}

/// Divides the learning rate by `factor` after `patience` consecutive
/// epochs without improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: Real,
    pub patience: usize,
    pub direction: Direction,
    lr: Real,
    best: Option<Real>,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: Real, factor: Real, patience: usize, direction: Direction) -> Result<Self> {
        if factor <= 1.0 {
            return Err(invalid("plateau factor must exceed 1"));
        }
        if patience == 0 {
            return Err(invalid("plateau patience must be at least 1"));
        }
        Ok(Self {
            factor,
            patience,
            direction,
            lr,
            best: None,
            stale: 0,
        })
    }

    pub fn lr(&self) -> Real {
        self.lr
    }

    /// Records one epoch's metric and returns the learning rate to use next.
    pub fn step(&mut self, metric: Real) -> Real {
        if self.direction.improves(metric, self.best) {
            self.best = Some(metric);
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr /= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopDecision {
    /// New best value; the caller should keep the current parameters.
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub direction: Direction,
    best: Option<Real>,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, direction: Direction) -> Result<Self> {
        if patience == 0 {
            return Err(invalid("early-stopping patience must be at least 1"));
        }
        Ok(Self {
            patience,
            direction,
            best: None,
            best_epoch: None,
            stale: 0,
        })
    }

    pub fn update(&mut self, epoch: usize, metric: Real) -> StopDecision {
        if self.direction.improves(metric, self.best) {
            self.best = Some(metric);
            self.best_epoch = Some(epoch);
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> Option<Real> {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}
