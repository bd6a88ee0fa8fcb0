//! Warmup + cosine-annealed schedules for learning rates and the entropy
//! temperature.

use serde::{Deserialize, Serialize};

/// Linear warmup from `lr_start / 10`, then cosine decay from `lr_start` to
/// `lr_end` at `total_epochs`. `warmup_epochs = 0` starts directly at
/// `lr_start`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_epochs: usize,
    pub warmup_epochs: usize,
}

impl LrSchedule {
    pub fn new(lr_start: f64, lr_end: f64, total_epochs: usize, warmup_epochs: usize) -> Self {
        LrSchedule {
            lr_start,
            lr_end,
            total_epochs,
            warmup_epochs,
        }
    }
}

/// Value of the schedule at `epoch`. Epochs past the end stay at `lr_end`.
pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    let w = schedule.warmup_epochs;
    if epoch < w {
        let floor = schedule.lr_start / 10.0;
        let frac = epoch as f64 / w as f64;
        return floor + (schedule.lr_start - floor) * frac;
    }
    let total = schedule.total_epochs.max(w + 1);
    if epoch == w {
        return schedule.lr_start;
    }
    if epoch >= total {
        return schedule.lr_end;
    }
    let span = (total - w) as f64;
    let u = (epoch - w) as f64 / span;
    let cos = (1.0 + (std::f64::consts::PI * u).cos()) / 2.0;
    schedule.lr_end + (schedule.lr_start - schedule.lr_end) * cos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_epoch_hits_lr_end_exactly() {
        let s = LrSchedule::new(5e-4, 5e-5, 300, 0);
        assert_eq!(lr_at(&s, 300), 5e-5);
    }

    #[test]
    fn cosine_midpoint_is_average_of_endpoints() {
        let s = LrSchedule::new(5e-4, 5e-5, 300, 0);
        let mid = lr_at(&s, 150);
        assert!((mid - 2.75e-4).abs() < 1e-18);
    }

    #[test]
    fn warmup_starts_at_tenth_of_lr_start() {
        let s = LrSchedule::new(5e-4, 5e-5, 300, 5);
        assert_eq!(lr_at(&s, 0), 5e-5);
        // End of warmup reaches lr_start exactly.
        assert_eq!(lr_at(&s, 5), 5e-4);
    }

    #[test]
    fn monotone_nonincreasing_after_warmup_and_endpoints_exact() {
        let s = LrSchedule::new(5e-3, 5e-4, 300, 5);
        assert_eq!(lr_at(&s, 5), 5e-3);
        assert_eq!(lr_at(&s, 300), 5e-4);
        let mut prev = lr_at(&s, s.warmup_epochs);
        for e in s.warmup_epochs + 1..=s.total_epochs {
            let cur = lr_at(&s, e);
            assert!(cur <= prev + 1e-18, "epoch {e}: {cur} > {prev}");
            prev = cur;
        }
    }

    #[test]
    fn continuous_across_phases_and_bounded() {
        let s = LrSchedule::new(5e-4, 1e-5, 300, 5);
        let lo = s.lr_start.min(s.lr_end).min(s.lr_start / 10.0);
        for e in 0..=300 {
            let v = lr_at(&s, e);
            assert!(v >= lo - 1e-18 && v <= s.lr_start + 1e-18);
        }
        // No jump at the warmup boundary.
        let before = lr_at(&s, 4);
        let at = lr_at(&s, 5);
        assert!((at - before).abs() < s.lr_start);
    }
}
