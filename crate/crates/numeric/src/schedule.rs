/// Learning rate halved every 50 epochs.
pub fn lr_at_epoch(epoch: usize, base_lr: f64) -> f64 {
    StepDecay::halving(base_lr).at(epoch)
}

/// `base_lr * factor ^ floor(epoch / every)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    pub base_lr: f64,
    pub every: usize,
    pub factor: f64,
}

impl StepDecay {
    pub fn halving(base_lr: f64) -> Self {
        Self {
            base_lr,
            every: 50,
            factor: 0.5,
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        let k = epoch / self.every.max(1);
        self.base_lr * self.factor.powi(k as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_values() {
        assert_eq!(lr_at_epoch(0, 0.01), 0.01);
        assert_eq!(lr_at_epoch(49, 0.01), 0.01);
        assert_eq!(lr_at_epoch(50, 0.01), 0.005);
        assert_eq!(lr_at_epoch(120, 0.01), 0.0025);
    }

    #[test]
    fn non_increasing_and_halves_on_multiples() {
        let mut prev = f64::INFINITY;
        for e in 0..400 {
            let lr = lr_at_epoch(e, 0.01);
            assert!(lr <= prev);
            if e > 0 && e % 50 == 0 {
                assert_eq!(lr, lr_at_epoch(e - 1, 0.01) * 0.5);
            }
            prev = lr;
        }
    }
}
