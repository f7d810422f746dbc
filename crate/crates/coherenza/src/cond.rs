//! Conditional probabilities as explicit event/trial counts.
//!
//! Keeping the integer counts (rather than a float) makes every estimate
//! exactly reproducible and lets callers distinguish "probability 0" from
//! "condition never occurred".

use serde::Serialize;

/// One conditional cell: `events` hits out of `trials` occurrences of the
/// conditioning event.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CondEntry {
    pub events: u32,
    pub trials: u32,
}

impl CondEntry {
    /// Records one trial, counting it as an event when `hit` holds.
    pub fn bump(&mut self, hit: bool) {
        self.trials += 1;
        if hit {
            self.events += 1;
        }
    }

    /// `events / trials`, or `None` when the condition never occurred.
    pub fn prob(&self) -> Option<f64> {
        if self.trials == 0 {
            None
        } else {
            Some(f64::from(self.events) / f64::from(self.trials))
        }
    }
}

/// Index of a phase sign in 2-element arrays: `+1 -> 0`, `-1 -> 1`.
/// Callers must exclude ties (0) before indexing.
pub(crate) fn sidx(sign: i8) -> usize {
    debug_assert!(sign == 1 || sign == -1, "sign must be +1 or -1, got {sign}");
    if sign == 1 {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prob_distinguishes_zero_from_undefined() {
        let mut e = CondEntry::default();
        assert_eq!(e.prob(), None);
        e.bump(false);
        assert_eq!(e.prob(), Some(0.0));
        e.bump(true);
        assert_eq!(e.prob(), Some(0.5));
    }
}
