//! Phase series (sign of the year-to-year change), agreement with the
//! national phase, and transition probabilities.
//!
//! The phase of a series at year `t` is the sign of `X(t) - X(t-1)`. A zero
//! difference has no sign; the [`TieRule`] decides whether it counts as an
//! increase (default) or is dropped from every count. Dropped ties are
//! encoded as 0 in the phase arrays and skipped by all downstream counts.

use crate::cond::{sidx, CondEntry};
use crate::grid::{AimrSeries, GridSpec, RainfallField};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("phase needs at least 2 years of data, got {0}")]
    TooShort(usize),
    #[error(
        "phase inputs cover different years: one starts {first_a} with {len_a} phase years, \
         the other starts {first_b} with {len_b}"
    )]
    YearMisalignment {
        first_a: i32,
        len_a: usize,
        first_b: i32,
        len_b: usize,
    },
}

/// What to do when two consecutive years have exactly equal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TieRule {
    /// A zero difference counts as an increase (+1).
    Positive,
    /// A zero difference is excluded from every count.
    Drop,
}

fn phase_sign(diff: f64, tie: TieRule) -> i8 {
    if diff > 0.0 {
        1
    } else if diff < 0.0 {
        -1
    } else {
        match tie {
            TieRule::Positive => 1,
            TieRule::Drop => 0,
        }
    }
}

/// Phase of a single series. Values in {+1, -1}, or 0 for dropped ties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSeries {
    first_phase_year: i32,
    values: Vec<i8>,
}

impl PhaseSeries {
    pub fn first_phase_year(&self) -> i32 {
        self.first_phase_year
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }
}

/// Per-location phase field, `[n_phase_years x N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    grid: Arc<GridSpec>,
    first_phase_year: i32,
    values: Array2<i8>,
}

impl PhaseField {
    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn first_phase_year(&self) -> i32 {
        self.first_phase_year
    }

    pub fn n_phase_years(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_locations(&self) -> usize {
        self.values.ncols()
    }

    pub fn value(&self, phase_year_index: usize, location: usize) -> i8 {
        self.values[(phase_year_index, location)]
    }

    pub fn values(&self) -> &Array2<i8> {
        &self.values
    }
}

/// Phase of a raw value series; the result starts one year after the input.
pub fn phase_of_values(
    values: &[f64],
    first_year: i32,
    tie: TieRule,
) -> Result<PhaseSeries, PhaseError> {
    if values.len() < 2 {
        return Err(PhaseError::TooShort(values.len()));
    }
    let phases = values
        .windows(2)
        .map(|w| phase_sign(w[1] - w[0], tie))
        .collect();
    Ok(PhaseSeries {
        first_phase_year: first_year + 1,
        values: phases,
    })
}

pub fn phase_of_aimr(aimr: &AimrSeries, tie: TieRule) -> Result<PhaseSeries, PhaseError> {
    phase_of_values(aimr.values(), aimr.first_year(), tie)
}

/// Per-location phase of a rainfall field. Infallible: fields always hold at
/// least 2 years.
pub fn phase_of_field(field: &RainfallField, tie: TieRule) -> PhaseField {
    let n_phase = field.n_years() - 1;
    let n = field.n_locations();
    let mut values = Array2::zeros((n_phase, n));
    for t in 0..n_phase {
        for s in 0..n {
            values[(t, s)] = phase_sign(field.value(t + 1, s) - field.value(t, s), tie);
        }
    }
    PhaseField {
        grid: Arc::clone(field.grid()),
        first_phase_year: field.first_year() + 1,
        values,
    }
}

fn check_alignment(
    first_a: i32,
    len_a: usize,
    first_b: i32,
    len_b: usize,
) -> Result<(), PhaseError> {
    if first_a != first_b || len_a != len_b {
        return Err(PhaseError::YearMisalignment {
            first_a,
            len_a,
            first_b,
            len_b,
        });
    }
    Ok(())
}

/// Agreement of each location's phase with the national phase. Years where
/// either phase is a dropped tie are excluded from both counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgreementCounts {
    /// Years in agreement, per location.
    pub agree: Vec<u32>,
    /// Years where both phases are defined, per location.
    pub defined: Vec<u32>,
    pub n_phase_years: u32,
    /// Locations per relative-frequency bin: <50%, 50-60%, 60-70%, >=70%.
    pub histogram: [u32; 4],
}

impl AgreementCounts {
    /// Agreement count of one location.
    pub fn pc(&self, location: usize) -> u32 {
        self.agree[location]
    }

    /// Agreement relative to the defined years of that location.
    pub fn relative(&self, location: usize) -> Option<f64> {
        if self.defined[location] == 0 {
            None
        } else {
            Some(f64::from(self.agree[location]) / f64::from(self.defined[location]))
        }
    }

    /// Mean agreement count across locations.
    pub fn mean_pc(&self) -> f64 {
        self.agree.iter().map(|&a| f64::from(a)).sum::<f64>() / self.agree.len() as f64
    }

    /// Mean relative agreement across locations with defined years.
    pub fn mean_relative(&self) -> Option<f64> {
        let (sum, n) = (0..self.agree.len())
            .filter_map(|s| self.relative(s))
            .fold((0.0, 0u32), |(sum, n), r| (sum + r, n + 1));
        if n == 0 {
            None
        } else {
            Some(sum / f64::from(n))
        }
    }
}

/// Histogram bin of a relative agreement: inclusive lower edges at 0.5, 0.6
/// and 0.7, top bin closed at 1.
fn agreement_bin(rel: f64) -> usize {
    [0.5, 0.6, 0.7].iter().filter(|&&edge| rel >= edge).count()
}

pub fn agreement_counts(
    field: &PhaseField,
    national: &PhaseSeries,
) -> Result<AgreementCounts, PhaseError> {
    check_alignment(
        field.first_phase_year(),
        field.n_phase_years(),
        national.first_phase_year(),
        national.len(),
    )?;
    let n = field.n_locations();
    let n_phase = field.n_phase_years();
    let mut agree = vec![0u32; n];
    let mut defined = vec![0u32; n];
    for t in 0..n_phase {
        let nat = national.values()[t];
        if nat == 0 {
            continue;
        }
        for s in 0..n {
            let local = field.value(t, s);
            if local == 0 {
                continue;
            }
            defined[s] += 1;
            if local == nat {
                agree[s] += 1;
            }
        }
    }
    let mut histogram = [0u32; 4];
    for s in 0..n {
        if defined[s] > 0 {
            let rel = f64::from(agree[s]) / f64::from(defined[s]);
            histogram[agreement_bin(rel)] += 1;
        }
    }
    Ok(AgreementCounts {
        agree,
        defined,
        n_phase_years: n_phase as u32,
        histogram,
    })
}

/// The four phase transition conditionals of one series, as counts.
/// Indexing is `[previous][next]` with +1 at 0 and -1 at 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NationalTransitions {
    entries: [[CondEntry; 2]; 2],
}

impl NationalTransitions {
    pub fn entry(&self, prev: i8, next: i8) -> CondEntry {
        self.entries[sidx(prev)][sidx(next)]
    }

    /// p(P(t)=+1 | P(t-1)=-1), the mean-reversion direction after a dry year.
    pub fn up_after_down(&self) -> CondEntry {
        self.entry(-1, 1)
    }

    /// p(P(t)=-1 | P(t-1)=+1).
    pub fn down_after_up(&self) -> CondEntry {
        self.entry(1, -1)
    }

    pub fn up_after_up(&self) -> CondEntry {
        self.entry(1, 1)
    }

    pub fn down_after_down(&self) -> CondEntry {
        self.entry(-1, -1)
    }
}

/// Transition counts of a phase sequence; consecutive pairs containing a
/// dropped tie are skipped.
fn transitions_of(values: &[i8]) -> [[CondEntry; 2]; 2] {
    let mut entries = [[CondEntry::default(); 2]; 2];
    for pair in values.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        if prev == 0 || next == 0 {
            continue;
        }
        for target in [1i8, -1] {
            entries[sidx(prev)][sidx(target)].bump(next == target);
        }
    }
    entries
}

pub fn national_transition_probs(series: &PhaseSeries) -> NationalTransitions {
    NationalTransitions {
        entries: transitions_of(series.values()),
    }
}

/// Per-location transition tables, with and without national conditioning.
///
/// Triple tables are indexed `[national][previous local][next local]`. For
/// `with_current_national` the national sign is that of the predicted year
/// `t`; for `with_previous_national` it is that of year `t-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocationTransitions {
    pub own: [[CondEntry; 2]; 2],
    pub with_current_national: [[[CondEntry; 2]; 2]; 2],
    pub with_previous_national: [[[CondEntry; 2]; 2]; 2],
    /// Both mean-reversion probabilities strictly rise when conditioning on
    /// the current-year national phase of the same sign as the prediction.
    pub improved_by_current: bool,
    /// Both rise when conditioning on the previous-year national phase of
    /// the same sign as the previous local phase.
    pub improved_by_previous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTransitions {
    pub per_location: Vec<LocationTransitions>,
    pub improved_by_current_count: u32,
    pub improved_by_previous_count: u32,
    /// Mean over locations of p(P^s=+1 | previous local -1), where defined.
    pub mean_up_after_down: Option<f64>,
    pub mean_down_after_up: Option<f64>,
}

fn strictly_improves(conditioned: CondEntry, unconditioned: CondEntry) -> bool {
    match (conditioned.prob(), unconditioned.prob()) {
        (Some(c), Some(u)) => c > u,
        _ => false,
    }
}

fn location_transitions(local: &[i8], national: &[i8]) -> LocationTransitions {
    let own = transitions_of(local);
    let mut with_current = [[[CondEntry::default(); 2]; 2]; 2];
    let mut with_previous = [[[CondEntry::default(); 2]; 2]; 2];
    for t in 1..local.len() {
        let (prev, next) = (local[t - 1], local[t]);
        if prev == 0 || next == 0 {
            continue;
        }
        if national[t] != 0 {
            for target in [1i8, -1] {
                with_current[sidx(national[t])][sidx(prev)][sidx(target)].bump(next == target);
            }
        }
        if national[t - 1] != 0 {
            for target in [1i8, -1] {
                with_previous[sidx(national[t - 1])][sidx(prev)][sidx(target)].bump(next == target);
            }
        }
    }
    // Up after down, helped by a national up; down after up, helped by a
    // national down. Both directions must strictly improve.
    let improved_by_current = strictly_improves(
        with_current[sidx(1)][sidx(-1)][sidx(1)],
        own[sidx(-1)][sidx(1)],
    ) && strictly_improves(
        with_current[sidx(-1)][sidx(1)][sidx(-1)],
        own[sidx(1)][sidx(-1)],
    );
    // For previous-year conditioning the informative national sign matches
    // the previous local sign.
    let improved_by_previous = strictly_improves(
        with_previous[sidx(-1)][sidx(-1)][sidx(1)],
        own[sidx(-1)][sidx(1)],
    ) && strictly_improves(
        with_previous[sidx(1)][sidx(1)][sidx(-1)],
        own[sidx(1)][sidx(-1)],
    );
    LocationTransitions {
        own,
        with_current_national: with_current,
        with_previous_national: with_previous,
        improved_by_current,
        improved_by_previous,
    }
}

pub fn local_transition_probs(
    field: &PhaseField,
    national: &PhaseSeries,
) -> Result<LocalTransitions, PhaseError> {
    check_alignment(
        field.first_phase_year(),
        field.n_phase_years(),
        national.first_phase_year(),
        national.len(),
    )?;
    let n = field.n_locations();
    let per_location: Vec<LocationTransitions> = (0..n)
        .into_par_iter()
        .map(|s| {
            let local: Vec<i8> = (0..field.n_phase_years())
                .map(|t| field.value(t, s))
                .collect();
            location_transitions(&local, national.values())
        })
        .collect();
    let improved_by_current_count = per_location
        .iter()
        .filter(|l| l.improved_by_current)
        .count() as u32;
    let improved_by_previous_count = per_location
        .iter()
        .filter(|l| l.improved_by_previous)
        .count() as u32;
    let mean_of = |pick: fn(&LocationTransitions) -> CondEntry| {
        let (sum, count) = per_location
            .iter()
            .filter_map(|l| pick(l).prob())
            .fold((0.0, 0u32), |(sum, n), p| (sum + p, n + 1));
        if count == 0 {
            None
        } else {
            Some(sum / f64::from(count))
        }
    };
    Ok(LocalTransitions {
        improved_by_current_count,
        improved_by_previous_count,
        mean_up_after_down: mean_of(|l| l.own[sidx(-1)][sidx(1)]),
        mean_down_after_up: mean_of(|l| l.own[sidx(1)][sidx(-1)]),
        per_location,
    })
}
