//! Extreme-year detection at three scales and the conditional tables tying
//! local behavior to national extremes.
//!
//! A location-year is a local positive extreme (PEX) when its value strictly
//! exceeds that location's long-term mean plus one standard deviation, and a
//! local negative extreme (NEX) below mean minus sd. Two national-scale
//! year-type series are kept distinct and never merged:
//!
//! * spatial: the same mean/sd rule applied to the spatial-mean series;
//! * locational: years where the count NF of local PEXs (or ND of NEXs)
//!   strictly exceeds its own mean plus sd.
//!
//! A year qualifying as both locational PEX and NEX is marked `Mixed`,
//! reported as a warning and excluded from every conditional table.

use crate::cond::CondEntry;
use crate::grid::{AimrSeries, GridSpec, RainfallField};
use crate::phase::{PhaseField, PhaseSeries};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtremesError {
    #[error(
        "field ({field_first}, {field_years} years) and spatial-mean series \
         ({aimr_first}, {aimr_years} years) cover different years"
    )]
    YearMisalignment {
        field_first: i32,
        field_years: usize,
        aimr_first: i32,
        aimr_years: usize,
    },
    #[error("phase years do not align with the classified years")]
    PhaseMisalignment,
    #[error("inputs use grids of different size: {a} vs {b}")]
    GridMismatch { a: usize, b: usize },
}

/// Divisor convention for standard deviations: population (n) by default,
/// sample (n-1) as the switchable alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SigmaDivisor {
    Population,
    Sample,
}

fn moments(values: &[f64], divisor: SigmaDivisor) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = match divisor {
        SigmaDivisor::Population => n,
        SigmaDivisor::Sample => n - 1.0,
    };
    (mean, (ss / denom).sqrt())
}

/// Year type at any scale. `Mixed` can only arise in the locational series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum YearType {
    Normal,
    Pex,
    Nex,
    Mixed,
}

impl YearType {
    /// Numeric code: 1 normal, 2 PEX, 3 NEX, 4 mixed.
    pub fn code(self) -> u8 {
        match self {
            YearType::Normal => 1,
            YearType::Pex => 2,
            YearType::Nex => 3,
            YearType::Mixed => 4,
        }
    }
}

/// Table index of a conditioning or target type; `Mixed` is excluded.
fn tix(ty: YearType) -> Option<usize> {
    match ty {
        YearType::Normal => Some(0),
        YearType::Pex => Some(1),
        YearType::Nex => Some(2),
        YearType::Mixed => None,
    }
}

fn classify_value(value: f64, mean: f64, sd: f64) -> YearType {
    if value > mean + sd {
        YearType::Pex
    } else if value < mean - sd {
        YearType::Nex
    } else {
        YearType::Normal
    }
}

/// Which national year-type series conditions a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NationalSeries {
    /// From the spatial-mean rainfall itself.
    Spatial,
    /// From the counts of local extremes (NF, ND).
    Locational,
}

/// Long-term means and standard deviations underlying the thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentStats {
    pub local_mean: Vec<f64>,
    pub local_sd: Vec<f64>,
    pub national_mean: f64,
    pub national_sd: f64,
}

/// Full classification of every location-year and year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearClassification {
    grid: Arc<GridSpec>,
    first_year: i32,
    /// Local year types, `[n_years x N]`.
    pub local: Array2<YearType>,
    /// Spatial-mean year types, per year.
    pub spatial: Vec<YearType>,
    /// Locational (count-based) year types, per year.
    pub locational: Vec<YearType>,
    /// NF: locations in local PEX, per year.
    pub nf: Vec<u32>,
    /// ND: locations in local NEX, per year.
    pub nd: Vec<u32>,
    pub stats: MomentStats,
    pub nf_mean: f64,
    pub nf_sd: f64,
    pub nd_mean: f64,
    pub nd_sd: f64,
    /// Locations whose sd is exactly 0; they can never register an extreme.
    pub degenerate_sigma: Vec<usize>,
    /// Calendar years classified `Mixed` in the locational series.
    pub mixed_years: Vec<i32>,
}

impl YearClassification {
    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn n_years(&self) -> usize {
        self.spatial.len()
    }

    pub fn n_locations(&self) -> usize {
        self.local.ncols()
    }

    pub fn national(&self, series: NationalSeries, year_index: usize) -> YearType {
        match series {
            NationalSeries::Spatial => self.spatial[year_index],
            NationalSeries::Locational => self.locational[year_index],
        }
    }

    /// Mean NF over the years of each national type (normal, PEX, NEX).
    pub fn mean_nf_by_type(&self, series: NationalSeries) -> [Option<f64>; 3] {
        let mut sums = [0.0f64; 3];
        let mut counts = [0u32; 3];
        for t in 0..self.n_years() {
            if let Some(i) = tix(self.national(series, t)) {
                sums[i] += f64::from(self.nf[t]);
                counts[i] += 1;
            }
        }
        std::array::from_fn(|i| {
            if counts[i] == 0 {
                None
            } else {
                Some(sums[i] / f64::from(counts[i]))
            }
        })
    }

    /// Per-location count of years with the given local type.
    pub fn local_year_counts(&self, ty: YearType) -> Vec<u32> {
        (0..self.n_locations())
            .map(|s| {
                (0..self.n_years())
                    .filter(|&t| self.local[(t, s)] == ty)
                    .count() as u32
            })
            .collect()
    }

    /// Calendar years whose national type is PEX, NEX or mixed.
    pub fn national_extreme_years(&self, series: NationalSeries) -> Vec<i32> {
        (0..self.n_years())
            .filter(|&t| self.national(series, t) != YearType::Normal)
            .map(|t| self.first_year + t as i32)
            .collect()
    }
}

/// Classifies every location-year and year. All thresholds use strict
/// inequalities; a zero sd therefore silences extremes at that location,
/// which is reported through `degenerate_sigma` rather than as an error.
pub fn classify_years(
    field: &RainfallField,
    aimr: &AimrSeries,
    divisor: SigmaDivisor,
) -> Result<YearClassification, ExtremesError> {
    if field.first_year() != aimr.first_year() || field.n_years() != aimr.len() {
        return Err(ExtremesError::YearMisalignment {
            field_first: field.first_year(),
            field_years: field.n_years(),
            aimr_first: aimr.first_year(),
            aimr_years: aimr.len(),
        });
    }
    let n = field.n_locations();
    let n_years = field.n_years();

    let per_location: Vec<(f64, f64, Vec<YearType>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let column: Vec<f64> = (0..n_years).map(|t| field.value(t, s)).collect();
            let (mean, sd) = moments(&column, divisor);
            let types = column
                .iter()
                .map(|&v| classify_value(v, mean, sd))
                .collect();
            (mean, sd, types)
        })
        .collect();

    let mut local = Array2::from_elem((n_years, n), YearType::Normal);
    let mut local_mean = Vec::with_capacity(n);
    let mut local_sd = Vec::with_capacity(n);
    let mut degenerate_sigma = Vec::new();
    for (s, (mean, sd, types)) in per_location.into_iter().enumerate() {
        local_mean.push(mean);
        local_sd.push(sd);
        if sd == 0.0 {
            degenerate_sigma.push(s);
        }
        for (t, ty) in types.into_iter().enumerate() {
            local[(t, s)] = ty;
        }
    }

    let (national_mean, national_sd) = moments(aimr.values(), divisor);
    let spatial: Vec<YearType> = aimr
        .values()
        .iter()
        .map(|&v| classify_value(v, national_mean, national_sd))
        .collect();

    let nf: Vec<u32> = (0..n_years)
        .map(|t| (0..n).filter(|&s| local[(t, s)] == YearType::Pex).count() as u32)
        .collect();
    let nd: Vec<u32> = (0..n_years)
        .map(|t| (0..n).filter(|&s| local[(t, s)] == YearType::Nex).count() as u32)
        .collect();
    let nf_f: Vec<f64> = nf.iter().map(|&c| f64::from(c)).collect();
    let nd_f: Vec<f64> = nd.iter().map(|&c| f64::from(c)).collect();
    let (nf_mean, nf_sd) = moments(&nf_f, divisor);
    let (nd_mean, nd_sd) = moments(&nd_f, divisor);

    let mut mixed_years = Vec::new();
    let locational: Vec<YearType> = (0..n_years)
        .map(|t| {
            let pex = nf_f[t] > nf_mean + nf_sd;
            let nex = nd_f[t] > nd_mean + nd_sd;
            match (pex, nex) {
                (true, true) => {
                    mixed_years.push(field.year_at(t));
                    YearType::Mixed
                }
                (true, false) => YearType::Pex,
                (false, true) => YearType::Nex,
                (false, false) => YearType::Normal,
            }
        })
        .collect();

    Ok(YearClassification {
        grid: Arc::clone(field.grid()),
        first_year: field.first_year(),
        local,
        spatial,
        locational,
        nf,
        nd,
        stats: MomentStats {
            local_mean,
            local_sd,
            national_mean,
            national_sd,
        },
        nf_mean,
        nf_sd,
        nd_mean,
        nd_sd,
        degenerate_sigma,
        mixed_years,
    })
}

fn at_least(entry: CondEntry, threshold: f64) -> bool {
    entry.prob().is_some_and(|p| p >= threshold)
}

/// Per-location tables p(local type | national type), with the map-bin
/// counts. `Mixed` national years are excluded from every entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YearTypeConditionals {
    pub conditioning: NationalSeries,
    /// `[national type][local type]`, both indexed normal/PEX/NEX.
    pub per_location: Vec<[[CondEntry; 3]; 3]>,
    /// Locations with p(local PEX | national PEX) >= 0.4 and >= 0.2.
    pub pex_match_ge_04: u32,
    pub pex_match_ge_02: u32,
    pub nex_match_ge_04: u32,
    pub nex_match_ge_02: u32,
    /// Locations where either same-sign probability reaches 0.4.
    pub either_match_ge_04: u32,
    /// Cross-sign bins: p(local PEX | national NEX) >= 0.2 and converse.
    pub pex_in_nex_ge_02: u32,
    pub nex_in_pex_ge_02: u32,
}

pub fn year_type_conditionals(
    cls: &YearClassification,
    conditioning: NationalSeries,
) -> YearTypeConditionals {
    let n = cls.n_locations();
    let national: Vec<Option<usize>> = (0..cls.n_years())
        .map(|t| tix(cls.national(conditioning, t)))
        .collect();
    let per_location: Vec<[[CondEntry; 3]; 3]> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut table = [[CondEntry::default(); 3]; 3];
            for (t, nat) in national.iter().enumerate() {
                let Some(nat) = nat else { continue };
                let local = cls.local[(t, s)];
                for target in [YearType::Normal, YearType::Pex, YearType::Nex] {
                    table[*nat][tix(target).unwrap()].bump(local == target);
                }
            }
            table
        })
        .collect();

    let pex = |t: &[[CondEntry; 3]; 3]| t[1][1];
    let nex = |t: &[[CondEntry; 3]; 3]| t[2][2];
    let count = |pred: &dyn Fn(&[[CondEntry; 3]; 3]) -> bool| {
        per_location.iter().filter(|t| pred(t)).count() as u32
    };
    YearTypeConditionals {
        conditioning,
        pex_match_ge_04: count(&|t| at_least(pex(t), 0.4)),
        pex_match_ge_02: count(&|t| at_least(pex(t), 0.2)),
        nex_match_ge_04: count(&|t| at_least(nex(t), 0.4)),
        nex_match_ge_02: count(&|t| at_least(nex(t), 0.2)),
        either_match_ge_04: count(&|t| at_least(pex(t), 0.4) || at_least(nex(t), 0.4)),
        pex_in_nex_ge_02: count(&|t| at_least(t[2][1], 0.2)),
        nex_in_pex_ge_02: count(&|t| at_least(t[1][2], 0.2)),
        per_location,
    }
}

fn check_phase_alignment(
    phase: &PhaseField,
    cls: &YearClassification,
) -> Result<(), ExtremesError> {
    if phase.n_locations() != cls.n_locations() {
        return Err(ExtremesError::GridMismatch {
            a: phase.n_locations(),
            b: cls.n_locations(),
        });
    }
    if phase.first_phase_year() != cls.first_year() + 1
        || phase.n_phase_years() != cls.n_years() - 1
    {
        return Err(ExtremesError::PhaseMisalignment);
    }
    Ok(())
}

/// Per-location p(local phase | national year type): positive phase in
/// national PEX years and negative phase in national NEX years.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseExtremeConditionals {
    pub conditioning: NationalSeries,
    /// p(P^s = +1 | national PEX year), per location.
    pub up_in_pex: Vec<CondEntry>,
    /// p(P^s = -1 | national NEX year), per location.
    pub down_in_nex: Vec<CondEntry>,
    pub up_ge_07: u32,
    pub up_ge_05: u32,
    pub down_ge_07: u32,
    pub down_ge_05: u32,
}

pub fn phase_given_extremes(
    phase: &PhaseField,
    cls: &YearClassification,
    conditioning: NationalSeries,
) -> Result<PhaseExtremeConditionals, ExtremesError> {
    check_phase_alignment(phase, cls)?;
    let n = phase.n_locations();
    let mut up_in_pex = vec![CondEntry::default(); n];
    let mut down_in_nex = vec![CondEntry::default(); n];
    // Year 0 has no phase; phase index pt corresponds to year index pt + 1.
    for pt in 0..phase.n_phase_years() {
        let nat = cls.national(conditioning, pt + 1);
        if nat != YearType::Pex && nat != YearType::Nex {
            continue;
        }
        for s in 0..n {
            let p = phase.value(pt, s);
            if p == 0 {
                continue;
            }
            match nat {
                YearType::Pex => up_in_pex[s].bump(p == 1),
                YearType::Nex => down_in_nex[s].bump(p == -1),
                _ => unreachable!(),
            }
        }
    }
    let count = |entries: &[CondEntry], thr: f64| {
        entries.iter().filter(|e| at_least(**e, thr)).count() as u32
    };
    Ok(PhaseExtremeConditionals {
        conditioning,
        up_ge_07: count(&up_in_pex, 0.7),
        up_ge_05: count(&up_in_pex, 0.5),
        down_ge_07: count(&down_in_nex, 0.7),
        down_ge_05: count(&down_in_nex, 0.5),
        up_in_pex,
        down_in_nex,
    })
}

/// Agreement with the national phase, split by national year type, and the
/// conditional pairs comparing extreme years against all years.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseAgreementExtremes {
    pub conditioning: NationalSeries,
    /// p(P^s = +1 | P = +1, national PEX), per location.
    pub follow_up_in_pex: Vec<CondEntry>,
    /// p(P^s = +1 | P = +1), per location.
    pub follow_up: Vec<CondEntry>,
    /// p(P^s = -1 | P = -1, national NEX), per location.
    pub follow_down_in_nex: Vec<CondEntry>,
    /// p(P^s = -1 | P = -1), per location.
    pub follow_down: Vec<CondEntry>,
    /// Agreement with the national phase restricted to each year type.
    pub agree_in_pex: Vec<CondEntry>,
    pub agree_in_nex: Vec<CondEntry>,
    pub agree_in_normal: Vec<CondEntry>,
    /// Locations where both extreme-conditioned probabilities are at least
    /// their unconditioned counterparts, out of those with all four defined.
    pub both_inequalities_count: u32,
    pub evaluated_count: u32,
    pub mean_agree_pex: Option<f64>,
    pub mean_agree_nex: Option<f64>,
    pub mean_agree_normal: Option<f64>,
}

pub fn phase_given_phase_and_extremes(
    phase: &PhaseField,
    national_phase: &PhaseSeries,
    cls: &YearClassification,
    conditioning: NationalSeries,
) -> Result<PhaseAgreementExtremes, ExtremesError> {
    check_phase_alignment(phase, cls)?;
    if national_phase.first_phase_year() != phase.first_phase_year()
        || national_phase.len() != phase.n_phase_years()
    {
        return Err(ExtremesError::PhaseMisalignment);
    }
    let n = phase.n_locations();
    let mut follow_up_in_pex = vec![CondEntry::default(); n];
    let mut follow_up = vec![CondEntry::default(); n];
    let mut follow_down_in_nex = vec![CondEntry::default(); n];
    let mut follow_down = vec![CondEntry::default(); n];
    let mut agree_in_pex = vec![CondEntry::default(); n];
    let mut agree_in_nex = vec![CondEntry::default(); n];
    let mut agree_in_normal = vec![CondEntry::default(); n];

    for pt in 0..phase.n_phase_years() {
        let nat_phase = national_phase.values()[pt];
        if nat_phase == 0 {
            continue;
        }
        let nat_type = cls.national(conditioning, pt + 1);
        for s in 0..n {
            let p = phase.value(pt, s);
            if p == 0 {
                continue;
            }
            if nat_phase == 1 {
                follow_up[s].bump(p == 1);
                if nat_type == YearType::Pex {
                    follow_up_in_pex[s].bump(p == 1);
                }
            } else {
                follow_down[s].bump(p == -1);
                if nat_type == YearType::Nex {
                    follow_down_in_nex[s].bump(p == -1);
                }
            }
            let agree = p == nat_phase;
            match nat_type {
                YearType::Pex => agree_in_pex[s].bump(agree),
                YearType::Nex => agree_in_nex[s].bump(agree),
                YearType::Normal => agree_in_normal[s].bump(agree),
                YearType::Mixed => {}
            }
        }
    }

    let mut both = 0u32;
    let mut evaluated = 0u32;
    for s in 0..n {
        let probs = (
            follow_up_in_pex[s].prob(),
            follow_up[s].prob(),
            follow_down_in_nex[s].prob(),
            follow_down[s].prob(),
        );
        if let (Some(up_ex), Some(up), Some(down_ex), Some(down)) = probs {
            evaluated += 1;
            if up_ex >= up && down_ex >= down {
                both += 1;
            }
        }
    }
    let mean = |entries: &[CondEntry]| {
        let (sum, count) = entries
            .iter()
            .filter_map(|e| e.prob())
            .fold((0.0, 0u32), |(sum, n), p| (sum + p, n + 1));
        if count == 0 {
            None
        } else {
            Some(sum / f64::from(count))
        }
    };
    Ok(PhaseAgreementExtremes {
        conditioning,
        both_inequalities_count: both,
        evaluated_count: evaluated,
        mean_agree_pex: mean(&agree_in_pex),
        mean_agree_nex: mean(&agree_in_nex),
        mean_agree_normal: mean(&agree_in_normal),
        follow_up_in_pex,
        follow_up,
        follow_down_in_nex,
        follow_down,
        agree_in_pex,
        agree_in_nex,
        agree_in_normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::compute_aimr;
    use crate::phase::{phase_of_aimr, phase_of_field, TieRule};

    fn field_of_columns(columns: Vec<Vec<f64>>) -> RainfallField {
        let n = columns.len();
        let n_years = columns[0].len();
        let points: Vec<(f64, f64)> = (0..n).map(|s| (0.0, s as f64)).collect();
        let grid = Arc::new(GridSpec::new(points, 1.0).unwrap());
        let mut values = Array2::zeros((n_years, n));
        for (s, col) in columns.iter().enumerate() {
            for (t, &v) in col.iter().enumerate() {
                values[(t, s)] = v;
            }
        }
        RainfallField::new(grid, 1901, values).unwrap()
    }

    /// Three synchronized spiking locations plus one constant one. Year 2 is
    /// the only local PEX year anywhere, making it locational PEX (NF = 3,
    /// mean 0.6, sd 1.2) and spatial PEX (AIMR 70 vs threshold 40 + 15).
    fn spike_field() -> RainfallField {
        let spike = vec![10.0, 10.0, 60.0, 10.0, 10.0];
        field_of_columns(vec![spike.clone(), spike.clone(), spike, vec![100.0; 5]])
    }

    #[test]
    fn constant_location_never_extreme_and_flagged() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        assert_eq!(cls.degenerate_sigma, vec![3]);
        for t in 0..5 {
            assert_eq!(cls.local[(t, 3)], YearType::Normal);
        }
    }

    #[test]
    fn spiked_year_is_local_pex_with_hand_checked_thresholds() {
        // Column [10,10,60,10,10]: mean 20, population sd 20, threshold 40.
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        assert_eq!(cls.stats.local_mean[0], 20.0);
        assert_eq!(cls.stats.local_sd[0], 20.0);
        assert_eq!(cls.local[(2, 0)], YearType::Pex);
        for t in [0, 1, 3, 4] {
            assert_eq!(cls.local[(t, 0)], YearType::Normal);
        }
    }

    #[test]
    fn threshold_inequality_is_strict() {
        // Series [0,2,0,2,...]: mean 1, population sd 1, so every value sits
        // exactly on a threshold and nothing is extreme.
        let field = field_of_columns(vec![vec![0.0, 2.0, 0.0, 2.0], vec![1.0, 3.0, 1.0, 3.0]]);
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        assert!(cls.local.iter().all(|&ty| ty == YearType::Normal));
        assert!(cls.spatial.iter().all(|&ty| ty == YearType::Normal));
    }

    #[test]
    fn sample_divisor_widens_thresholds() {
        let field = spike_field();
        let aimr = compute_aimr(&field);
        let pop = classify_years(&field, &aimr, SigmaDivisor::Population).unwrap();
        let smp = classify_years(&field, &aimr, SigmaDivisor::Sample).unwrap();
        assert!(smp.stats.local_sd[0] > pop.stats.local_sd[0]);
        // The spike clears both thresholds here.
        assert_eq!(smp.local[(2, 0)], YearType::Pex);
    }

    #[test]
    fn counts_partition_every_year() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        assert_eq!(cls.nf, vec![0, 0, 3, 0, 0]);
        assert_eq!(cls.nd, vec![0, 0, 0, 0, 0]);
        for t in 0..cls.n_years() {
            let normal = (0..cls.n_locations())
                .filter(|&s| cls.local[(t, s)] == YearType::Normal)
                .count() as u32;
            assert_eq!(cls.nf[t] + cls.nd[t] + normal, 4);
        }
    }

    #[test]
    fn locational_and_spatial_series_detect_the_spike_year() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        assert_eq!(cls.nf_mean, 0.6);
        assert_eq!(cls.nf_sd, 1.2);
        assert_eq!(cls.locational[2], YearType::Pex);
        assert_eq!(cls.spatial[2], YearType::Pex);
        assert_eq!(
            cls.locational
                .iter()
                .filter(|&&t| t == YearType::Pex)
                .count(),
            1
        );
        assert!(cls.mixed_years.is_empty());
        assert_eq!(
            cls.national_extreme_years(NationalSeries::Spatial),
            vec![1903]
        );
    }

    #[test]
    fn mean_nf_splits_by_year_type() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        let by_type = cls.mean_nf_by_type(NationalSeries::Locational);
        assert_eq!(by_type[0], Some(0.0));
        assert_eq!(by_type[1], Some(3.0));
        assert_eq!(by_type[2], None);
    }

    #[test]
    fn conditional_tables_match_the_planted_coincidence() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        let table = year_type_conditionals(&cls, NationalSeries::Locational);
        // Spiking locations are PEX exactly when the nation is.
        let loc0 = &table.per_location[0];
        assert_eq!(loc0[1][1].prob(), Some(1.0));
        assert_eq!(loc0[0][0].prob(), Some(1.0));
        // Constant location stays normal under every condition.
        let loc3 = &table.per_location[3];
        assert_eq!(loc3[1][0].prob(), Some(1.0));
        assert_eq!(table.pex_match_ge_04, 3);
        assert_eq!(table.either_match_ge_04, 3);
        assert_eq!(table.nex_in_pex_ge_02, 0);
    }

    #[test]
    fn conditional_rows_sum_to_one_when_defined() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        for conditioning in [NationalSeries::Locational, NationalSeries::Spatial] {
            let table = year_type_conditionals(&cls, conditioning);
            for per_loc in &table.per_location {
                for row in per_loc {
                    let trials = row[0].trials;
                    assert!(row.iter().all(|e| e.trials == trials));
                    if trials > 0 {
                        assert_eq!(row.iter().map(|e| e.events).sum::<u32>(), trials);
                    }
                }
            }
        }
    }

    #[test]
    fn positive_phase_in_the_spatial_pex_year() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        let phase = phase_of_field(&field, TieRule::Positive);
        let cond = phase_given_extremes(&phase, &cls, NationalSeries::Spatial).unwrap();
        // The spike year rises from 10 to 60: positive phase at locations 0-2.
        assert_eq!(cond.up_in_pex[0].prob(), Some(1.0));
        assert_eq!(cond.up_in_pex[0].trials, 1);
        // The constant location ties, which the default rule maps to +1.
        assert_eq!(cond.up_in_pex[3].prob(), Some(1.0));
        assert_eq!(cond.up_ge_07, 4);
        assert_eq!(cond.down_in_nex[0].prob(), None);
    }

    #[test]
    fn dropped_tie_removes_the_trial() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        let phase = phase_of_field(&field, TieRule::Drop);
        let cond = phase_given_extremes(&phase, &cls, NationalSeries::Spatial).unwrap();
        assert_eq!(cond.up_in_pex[3].trials, 0);
        assert_eq!(cond.up_ge_07, 3);
    }

    #[test]
    fn agreement_is_total_for_a_location_tracking_the_mean() {
        let field = spike_field();
        let aimr = compute_aimr(&field);
        let cls = classify_years(&field, &aimr, SigmaDivisor::Population).unwrap();
        let phase = phase_of_field(&field, TieRule::Positive);
        let national = phase_of_aimr(&aimr, TieRule::Positive).unwrap();
        let agg = phase_given_phase_and_extremes(&phase, &national, &cls, NationalSeries::Spatial)
            .unwrap();
        // Locations 0-2 share the spatial-mean phase in every year.
        assert_eq!(agg.follow_up[0].prob(), Some(1.0));
        assert_eq!(agg.follow_up_in_pex[0].prob(), Some(1.0));
        assert_eq!(agg.evaluated_count, 0); // no NEX years, so downs undefined
        assert_eq!(agg.mean_agree_nex, None);
        assert_eq!(agg.mean_agree_pex, Some(1.0));
    }

    #[test]
    fn misaligned_phase_is_rejected() {
        let field = spike_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        let other = field_of_columns(vec![vec![1.0, 2.0, 3.0]; 4]);
        let phase = phase_of_field(&other, TieRule::Positive);
        assert!(matches!(
            phase_given_extremes(&phase, &cls, NationalSeries::Spatial),
            Err(ExtremesError::PhaseMisalignment)
        ));
    }
}
