use crate::error::{Error, Result};

pub const DEFAULT_PATIENCE: u32 = 20;
pub const DEFAULT_FACTOR: f64 = 0.5;

/// Multiplies the learning rate by `factor` every time `patience`
/// consecutive epochs pass without a strictly better validation metric
/// (higher is better).
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub patience: u32,
    pub factor: f64,
    pub best: Option<f64>,
    pub epochs_since_improvement: u32,
}

impl PlateauSchedule {
    pub fn new(lr: f64) -> Self {
        PlateauSchedule {
            lr,
            patience: DEFAULT_PATIENCE,
            factor: DEFAULT_FACTOR,
            best: None,
            epochs_since_improvement: 0,
        }
    }

    /// Records one epoch's validation metric and returns the learning rate
    /// for the next epoch.
    pub fn update(&mut self, metric: f64) -> Result<f64> {
        if !metric.is_finite() {
            return Err(Error::TrainingFault(alloc::format!("validation metric is {}", metric)));
        }
        match self.best {
            Some(b) if metric <= b => {
                self.epochs_since_improvement += 1;
                if self.epochs_since_improvement >= self.patience {
                    self.lr *= self.factor;
                    self.epochs_since_improvement = 0;
                }
            }
            _ => {
                self.best = Some(metric);
                self.epochs_since_improvement = 0;
            }
        }
        Ok(self.lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_after_twenty_stagnant_epochs() {
        let mut s = PlateauSchedule::new(1e-4);
        s.update(0.5).unwrap();
        for _ in 0..19 {
            assert_eq!(s.update(0.5).unwrap(), 1e-4);
        }
        assert_eq!(s.update(0.4).unwrap(), 5e-5);
    }

    #[test]
    fn improvement_resets_counter() {
        let mut s = PlateauSchedule::new(1e-4);
        s.update(0.5).unwrap();
        for _ in 0..19 {
            s.update(0.5).unwrap();
        }
        assert_eq!(s.update(0.51).unwrap(), 1e-4);
        assert_eq!(s.epochs_since_improvement, 0);
        for _ in 0..19 {
            assert_eq!(s.update(0.51).unwrap(), 1e-4);
        }
    }

    #[test]
    fn forty_stagnant_epochs_halve_twice() {
        let mut s = PlateauSchedule::new(1e-4);
        s.update(0.9).unwrap();
        for _ in 0..40 {
            s.update(0.1).unwrap();
        }
        assert_eq!(s.lr, 2.5e-5);
    }

    #[test]
    fn nan_is_a_fault() {
        let mut s = PlateauSchedule::new(1e-4);
        assert!(matches!(s.update(f64::NAN), Err(Error::TrainingFault(_))));
    }
}
