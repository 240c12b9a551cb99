//! Learning-rate decay on validation plateaus.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
    decays: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Result<Self> {
        if !(lr >= 0.0) || !(factor > 0.0 && factor < 1.0) || patience == 0 {
            return Err(Error::invalid(format!(
                "plateau schedule needs lr >= 0, 0 < factor < 1 and patience >= 1, got {lr}, {factor}, {patience}"
            )));
        }
        Ok(Self {
            lr,
            factor,
            patience,
            best: None,
            bad_epochs: 0,
            decays: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn decays(&self) -> usize {
        self.decays
    }

    /// Records one epoch's validation loss and returns the learning rate for the next epoch.
    ///
    /// The rate is multiplied by `factor` once `patience` consecutive epochs pass
    /// without a strict improvement on the best loss so far.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        match self.best {
            Some(b) if val_loss >= b || val_loss.is_nan() => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    self.lr *= self.factor;
                    self.decays += 1;
                    self.bad_epochs = 0;
                }
            }
            _ => {
                self.best = Some(val_loss);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}
