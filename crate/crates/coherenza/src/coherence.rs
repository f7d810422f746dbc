//! Spatial-coherence measures MNN and MCCS over location-year property
//! masks.
//!
//! A property is a predicate over (location, year): being in positive phase
//! (PP), disagreeing with the national phase (DP), having a local NEX in a
//! spatial PEX year (LN-SP), and so on. Compound properties restrict the
//! year set itself: years failing the national condition are absent from
//! the mask, not merely false. Mixed locational years (both PEX and NEX)
//! never qualify for a compound year set.
//!
//! MNN is the mean number of property-holding 1-hop neighbors over all
//! property-holding (year, location) cells. MCCS builds, per year in the
//! year set, a graph on all N locations with edges between neighboring
//! property cells; the year's score is N divided by the number of connected
//! components (non-property cells count as singletons), and the result is
//! the mean over the year set.

use crate::extremes::{NationalSeries, YearClassification, YearType};
use crate::grid::NeighborGraph;
use crate::phase::{PhaseField, PhaseSeries};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoherenceError {
    #[error("property {property} needs {needs}, which was not supplied")]
    MissingDependency {
        property: PropertyId,
        needs: &'static str,
    },
    #[error("phase field and national phase cover different years")]
    Misaligned,
}

/// The fourteen properties of the coherence table, in table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PropertyId {
    /// Positive local phase.
    Pp,
    /// Negative local phase.
    Np,
    /// Agreement with the national phase.
    Ap,
    /// Disagreement with the national phase.
    Dp,
    /// Local NEX.
    Ln,
    /// Local PEX.
    Lp,
    /// Local NEX in spatial PEX years.
    LnSp,
    /// Local NEX in spatial NEX years.
    LnSn,
    /// Local NEX in locational PEX years.
    LnLp,
    /// Local NEX in locational NEX years.
    LnLn,
    /// Local PEX in spatial PEX years.
    LpSp,
    /// Local PEX in spatial NEX years.
    LpSn,
    /// Local PEX in locational PEX years.
    LpLp,
    /// Local PEX in locational NEX years.
    LpLn,
}

impl PropertyId {
    pub const ALL: [PropertyId; 14] = [
        PropertyId::Pp,
        PropertyId::Np,
        PropertyId::Ap,
        PropertyId::Dp,
        PropertyId::Ln,
        PropertyId::Lp,
        PropertyId::LnSp,
        PropertyId::LnSn,
        PropertyId::LnLp,
        PropertyId::LnLn,
        PropertyId::LpSp,
        PropertyId::LpSn,
        PropertyId::LpLp,
        PropertyId::LpLn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PropertyId::Pp => "PP",
            PropertyId::Np => "NP",
            PropertyId::Ap => "AP",
            PropertyId::Dp => "DP",
            PropertyId::Ln => "LN",
            PropertyId::Lp => "LP",
            PropertyId::LnSp => "LN-SP",
            PropertyId::LnSn => "LN-SN",
            PropertyId::LnLp => "LN-LP",
            PropertyId::LnLn => "LN-LN",
            PropertyId::LpSp => "LP-SP",
            PropertyId::LpSn => "LP-SN",
            PropertyId::LpLp => "LP-LP",
            PropertyId::LpLn => "LP-LN",
        }
    }

    /// For compound properties, (local target, conditioning series, national
    /// target).
    fn compound(self) -> Option<(YearType, NationalSeries, YearType)> {
        use NationalSeries::{Locational, Spatial};
        use YearType::{Nex, Pex};
        match self {
            PropertyId::LnSp => Some((Nex, Spatial, Pex)),
            PropertyId::LnSn => Some((Nex, Spatial, Nex)),
            PropertyId::LnLp => Some((Nex, Locational, Pex)),
            PropertyId::LnLn => Some((Nex, Locational, Nex)),
            PropertyId::LpSp => Some((Pex, Spatial, Pex)),
            PropertyId::LpSn => Some((Pex, Spatial, Nex)),
            PropertyId::LpLp => Some((Pex, Locational, Pex)),
            PropertyId::LpLn => Some((Pex, Locational, Nex)),
            _ => None,
        }
    }
}

impl std::fmt::Display for PropertyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The analyses a property evaluation can draw on. Only the pieces a given
/// property needs have to be present.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalysisInputs<'a> {
    pub phase: Option<&'a PhaseField>,
    pub national_phase: Option<&'a PhaseSeries>,
    pub classification: Option<&'a YearClassification>,
}

/// Boolean mask over the property's year set. `years` lists the calendar
/// years retained (all phase years, all years, or the compound subset).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyMask {
    pub property: PropertyId,
    pub years: Vec<i32>,
    mask: Array2<bool>,
}

impl PropertyMask {
    pub fn n_years(&self) -> usize {
        self.mask.nrows()
    }

    pub fn n_locations(&self) -> usize {
        self.mask.ncols()
    }

    pub fn value(&self, year_row: usize, location: usize) -> bool {
        self.mask[(year_row, location)]
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    /// Total property-holding (year, location) cells.
    pub fn cell_count(&self) -> u64 {
        self.mask.iter().filter(|&&b| b).count() as u64
    }
}

pub fn evaluate_property(
    property: PropertyId,
    inputs: &AnalysisInputs,
) -> Result<PropertyMask, CoherenceError> {
    let need_phase = || {
        inputs.phase.ok_or(CoherenceError::MissingDependency {
            property,
            needs: "the local phase field",
        })
    };
    let need_classification = || {
        inputs
            .classification
            .ok_or(CoherenceError::MissingDependency {
                property,
                needs: "the year-type classification",
            })
    };
    match property {
        PropertyId::Pp | PropertyId::Np => {
            let phase = need_phase()?;
            let target: i8 = if property == PropertyId::Pp { 1 } else { -1 };
            let mask = phase.values().mapv(|p| p == target);
            Ok(PropertyMask {
                property,
                years: phase_years(phase),
                mask,
            })
        }
        PropertyId::Ap | PropertyId::Dp => {
            let phase = need_phase()?;
            let national = inputs
                .national_phase
                .ok_or(CoherenceError::MissingDependency {
                    property,
                    needs: "the national phase series",
                })?;
            if national.first_phase_year() != phase.first_phase_year()
                || national.len() != phase.n_phase_years()
            {
                return Err(CoherenceError::Misaligned);
            }
            let want_agree = property == PropertyId::Ap;
            let mut mask = Array2::from_elem((phase.n_phase_years(), phase.n_locations()), false);
            for t in 0..phase.n_phase_years() {
                let nat = national.values()[t];
                if nat == 0 {
                    continue;
                }
                for s in 0..phase.n_locations() {
                    let local = phase.value(t, s);
                    if local == 0 {
                        continue;
                    }
                    mask[(t, s)] = (local == nat) == want_agree;
                }
            }
            Ok(PropertyMask {
                property,
                years: phase_years(phase),
                mask,
            })
        }
        PropertyId::Ln | PropertyId::Lp => {
            let cls = need_classification()?;
            let target = if property == PropertyId::Ln {
                YearType::Nex
            } else {
                YearType::Pex
            };
            let mask = cls.local.mapv(|ty| ty == target);
            let years = (0..cls.n_years())
                .map(|t| cls.first_year() + t as i32)
                .collect();
            Ok(PropertyMask {
                property,
                years,
                mask,
            })
        }
        _ => {
            let cls = need_classification()?;
            let (local_target, series, national_target) =
                property.compound().expect("remaining ids are compound");
            let rows: Vec<usize> = (0..cls.n_years())
                .filter(|&t| cls.national(series, t) == national_target)
                .collect();
            let n = cls.n_locations();
            let mut mask = Array2::from_elem((rows.len(), n), false);
            for (row, &t) in rows.iter().enumerate() {
                for s in 0..n {
                    mask[(row, s)] = cls.local[(t, s)] == local_target;
                }
            }
            let years = rows.iter().map(|&t| cls.first_year() + t as i32).collect();
            Ok(PropertyMask {
                property,
                years,
                mask,
            })
        }
    }
}

fn phase_years(phase: &PhaseField) -> Vec<i32> {
    (0..phase.n_phase_years())
        .map(|t| phase.first_phase_year() + t as i32)
        .collect()
}

/// MNN as exact integer counts: `hits` property-holding neighbor pairs over
/// `cells` property-holding cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MnnResult {
    pub hits: u64,
    pub cells: u64,
}

impl MnnResult {
    /// Mean property-holding neighbors per property cell; `None` when the
    /// property never occurs.
    pub fn value(&self) -> Option<f64> {
        if self.cells == 0 {
            None
        } else {
            Some(self.hits as f64 / self.cells as f64)
        }
    }
}

pub fn mnn(mask: &PropertyMask, graph: &NeighborGraph) -> MnnResult {
    assert_eq!(
        graph.len(),
        mask.n_locations(),
        "mask and neighbor graph must share a grid"
    );
    let mut hits = 0u64;
    let mut cells = 0u64;
    for t in 0..mask.n_years() {
        for s in 0..mask.n_locations() {
            if !mask.value(t, s) {
                continue;
            }
            cells += 1;
            hits += graph
                .neighbors(s)
                .iter()
                .filter(|&&q| mask.value(t, q))
                .count() as u64;
        }
    }
    MnnResult { hits, cells }
}

/// How MCCS aggregates over the year set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MccsMode {
    /// Mean over years of N / components(year). The default.
    PerYearMean,
    /// Total vertices over total components, pooled across years.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MccsResult {
    pub n_locations: usize,
    pub per_year_components: Vec<u32>,
    pub mode: MccsMode,
}

impl MccsResult {
    /// Mean connected component size; `None` when the year set is empty.
    pub fn value(&self) -> Option<f64> {
        if self.per_year_components.is_empty() {
            return None;
        }
        let n = self.n_locations as f64;
        match self.mode {
            MccsMode::PerYearMean => {
                let sum: f64 = self
                    .per_year_components
                    .iter()
                    .map(|&c| n / f64::from(c))
                    .sum();
                Some(sum / self.per_year_components.len() as f64)
            }
            MccsMode::Pooled => {
                let total: u64 = self.per_year_components.iter().map(|&c| u64::from(c)).sum();
                Some(n * self.per_year_components.len() as f64 / total as f64)
            }
        }
    }
}

/// Connected components of one year's property graph on all N vertices.
/// Non-property cells are singletons; property cells link to neighboring
/// property cells.
fn components_in_year(mask: &PropertyMask, row: usize, graph: &NeighborGraph) -> u32 {
    let n = mask.n_locations();
    let mut visited = vec![false; n];
    let mut components = 0u32;
    let mut stack = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        components += 1;
        if !mask.value(row, start) {
            continue; // singleton
        }
        stack.push(start);
        while let Some(s) = stack.pop() {
            for &q in graph.neighbors(s) {
                if !visited[q] && mask.value(row, q) {
                    visited[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    components
}

pub fn mccs(mask: &PropertyMask, graph: &NeighborGraph, mode: MccsMode) -> MccsResult {
    assert_eq!(
        graph.len(),
        mask.n_locations(),
        "mask and neighbor graph must share a grid"
    );
    let per_year_components: Vec<u32> = (0..mask.n_years())
        .into_par_iter()
        .map(|row| components_in_year(mask, row, graph))
        .collect();
    MccsResult {
        n_locations: mask.n_locations(),
        per_year_components,
        mode,
    }
}

/// One table row: both coherence measures for one property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCoherence {
    pub property: PropertyId,
    pub mnn: Option<f64>,
    pub mccs: Option<f64>,
    /// Years in the property's year set.
    pub year_count: usize,
    /// Property-holding (year, location) cells.
    pub cell_count: u64,
}

/// The full fourteen-property coherence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub rows: Vec<PropertyCoherence>,
    pub mode: MccsMode,
}

pub fn compute_coherence(
    inputs: &AnalysisInputs,
    graph: &NeighborGraph,
    mode: MccsMode,
) -> Result<CoherenceReport, CoherenceError> {
    let rows = PropertyId::ALL
        .iter()
        .map(|&property| {
            let mask = evaluate_property(property, inputs)?;
            let mnn = mnn(&mask, graph);
            let mccs = mccs(&mask, graph, mode);
            Ok(PropertyCoherence {
                property,
                mnn: mnn.value(),
                mccs: mccs.value(),
                year_count: mask.n_years(),
                cell_count: mask.cell_count(),
            })
        })
        .collect::<Result<Vec<_>, CoherenceError>>()?;
    Ok(CoherenceReport { rows, mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremes::{classify_years, SigmaDivisor};
    use crate::grid::{build_neighbor_graph, compute_aimr, GridSpec, RainfallField};
    use crate::phase::{phase_of_aimr, phase_of_field, TieRule};
    use std::sync::Arc;

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

    /// Row of 4 cells; locations 0-2 dip together in year 2, location 3 is
    /// constant. Year 2 is local NEX at 0-2 and both spatial and locational
    /// NEX nationally.
    fn dip_field() -> RainfallField {
        let dip = vec![50.0, 50.0, 5.0, 50.0, 50.0];
        field_of_columns(vec![dip.clone(), dip.clone(), dip, vec![100.0; 5]])
    }

    fn full_grid_mask(
        rows: usize,
        cols: usize,
        cells: &[(usize, usize)],
    ) -> (PropertyMask, NeighborGraph) {
        let grid = GridSpec::full_rect(rows, cols, 1.0, 0.0, 0.0).unwrap();
        let graph = build_neighbor_graph(&grid);
        let mut mask = Array2::from_elem((1, grid.len()), false);
        for &(r, c) in cells {
            let id = grid.position_of(r as f64, c as f64).unwrap();
            mask[(0, id)] = true;
        }
        (
            PropertyMask {
                property: PropertyId::Pp,
                years: vec![1901],
                mask,
            },
            graph,
        )
    }

    #[test]
    fn pp_mask_is_the_positive_phase_indicator() {
        let field = dip_field();
        let phase = phase_of_field(&field, TieRule::Positive);
        let inputs = AnalysisInputs {
            phase: Some(&phase),
            ..AnalysisInputs::default()
        };
        let mask = evaluate_property(PropertyId::Pp, &inputs).unwrap();
        assert_eq!(mask.years, vec![1902, 1903, 1904, 1905]);
        for t in 0..phase.n_phase_years() {
            for s in 0..phase.n_locations() {
                assert_eq!(mask.value(t, s), phase.value(t, s) == 1);
            }
        }
    }

    #[test]
    fn agreement_and_disagreement_partition_defined_years() {
        let field = dip_field();
        let aimr = compute_aimr(&field);
        let phase = phase_of_field(&field, TieRule::Positive);
        let national = phase_of_aimr(&aimr, TieRule::Positive).unwrap();
        let inputs = AnalysisInputs {
            phase: Some(&phase),
            national_phase: Some(&national),
            ..AnalysisInputs::default()
        };
        let ap = evaluate_property(PropertyId::Ap, &inputs).unwrap();
        let dp = evaluate_property(PropertyId::Dp, &inputs).unwrap();
        for t in 0..ap.n_years() {
            for s in 0..ap.n_locations() {
                assert!(!(ap.value(t, s) && dp.value(t, s)));
                assert!(ap.value(t, s) || dp.value(t, s)); // no ties here
            }
        }
    }

    #[test]
    fn compound_year_set_is_restricted() {
        let field = dip_field();
        let cls = classify_years(&field, &compute_aimr(&field), SigmaDivisor::Population).unwrap();
        let inputs = AnalysisInputs {
            classification: Some(&cls),
            ..AnalysisInputs::default()
        };
        let ln_sn = evaluate_property(PropertyId::LnSn, &inputs).unwrap();
        assert_eq!(ln_sn.years, vec![1903]);
        assert_eq!(ln_sn.cell_count(), 3);
        // The opposite-sign compound has an empty year set here.
        let ln_sp = evaluate_property(PropertyId::LnSp, &inputs).unwrap();
        assert_eq!(ln_sp.n_years(), 0);
        // The unconditioned property keeps all years.
        let ln = evaluate_property(PropertyId::Ln, &inputs).unwrap();
        assert_eq!(ln.n_years(), 5);
        assert_eq!(ln.cell_count(), 3);
    }

    #[test]
    fn missing_dependencies_are_reported() {
        let inputs = AnalysisInputs::default();
        assert!(matches!(
            evaluate_property(PropertyId::Pp, &inputs),
            Err(CoherenceError::MissingDependency { .. })
        ));
        assert!(matches!(
            evaluate_property(PropertyId::LnLn, &inputs),
            Err(CoherenceError::MissingDependency { .. })
        ));
    }

    #[test]
    fn mnn_on_a_full_3x3_grid() {
        // Moore degrees on 3x3: center 8, edges 5, corners 3.
        let all: Vec<(usize, usize)> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        let (mask, graph) = full_grid_mask(3, 3, &all);
        let result = mnn(&mask, &graph);
        assert_eq!(result.hits, 40);
        assert_eq!(result.cells, 9);
        assert!((result.value().unwrap() - 40.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_cell_has_mnn_zero_and_empty_mask_is_undefined() {
        let (mask, graph) = full_grid_mask(3, 3, &[(0, 0)]);
        assert_eq!(mnn(&mask, &graph).value(), Some(0.0));
        let (empty, graph) = full_grid_mask(3, 3, &[]);
        assert_eq!(mnn(&empty, &graph).value(), None);
    }

    #[test]
    fn mccs_bounds_at_empty_and_full() {
        let (empty, graph) = full_grid_mask(3, 3, &[]);
        assert_eq!(
            mccs(&empty, &graph, MccsMode::PerYearMean).value(),
            Some(1.0)
        );
        let all: Vec<(usize, usize)> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        let (full, graph) = full_grid_mask(3, 3, &all);
        assert_eq!(
            mccs(&full, &graph, MccsMode::PerYearMean).value(),
            Some(9.0)
        );
    }

    #[test]
    fn mccs_counts_singletons_in_the_vertex_set() {
        // Two adjacent property cells on a 3x3 grid: one 2-cell component
        // plus 7 singletons = 8 components, so MCCS = 9/8.
        let (mask, graph) = full_grid_mask(3, 3, &[(0, 0), (0, 1)]);
        let result = mccs(&mask, &graph, MccsMode::PerYearMean);
        assert_eq!(result.per_year_components, vec![8]);
        assert_eq!(result.value(), Some(9.0 / 8.0));
    }

    #[test]
    fn mccs_mean_and_pooled_modes_differ() {
        let grid = GridSpec::full_rect(3, 3, 1.0, 0.0, 0.0).unwrap();
        let graph = build_neighbor_graph(&grid);
        let mut mask = Array2::from_elem((2, 9), false);
        let a = grid.position_of(0.0, 0.0).unwrap();
        let b = grid.position_of(0.0, 1.0).unwrap();
        mask[(0, a)] = true;
        mask[(0, b)] = true;
        let mask = PropertyMask {
            property: PropertyId::Lp,
            years: vec![1901, 1902],
            mask,
        };
        // Year 0: 8 components; year 1: 9 singletons.
        let mean = mccs(&mask, &graph, MccsMode::PerYearMean);
        assert_eq!(mean.value(), Some((9.0 / 8.0 + 1.0) / 2.0));
        let pooled = mccs(&mask, &graph, MccsMode::Pooled);
        assert_eq!(pooled.value(), Some(18.0 / 17.0));
    }

    #[test]
    fn diagonal_adjacency_joins_components() {
        let (mask, graph) = full_grid_mask(3, 3, &[(0, 0), (1, 1), (2, 2)]);
        let result = mccs(&mask, &graph, MccsMode::PerYearMean);
        // The diagonal is 8-connected: one 3-cell component + 6 singletons.
        assert_eq!(result.per_year_components, vec![7]);
        assert_eq!(mnn(&mask, &graph).value(), Some(4.0 / 3.0));
    }

    #[test]
    fn full_report_covers_all_properties_in_order() {
        let field = dip_field();
        let aimr = compute_aimr(&field);
        let phase = phase_of_field(&field, TieRule::Positive);
        let national = phase_of_aimr(&aimr, TieRule::Positive).unwrap();
        let cls = classify_years(&field, &aimr, SigmaDivisor::Population).unwrap();
        let graph = build_neighbor_graph(field.grid());
        let inputs = AnalysisInputs {
            phase: Some(&phase),
            national_phase: Some(&national),
            classification: Some(&cls),
        };
        let report = compute_coherence(&inputs, &graph, MccsMode::PerYearMean).unwrap();
        assert_eq!(report.rows.len(), 14);
        let labels: Vec<&str> = report.rows.iter().map(|r| r.property.label()).collect();
        assert_eq!(
            labels,
            [
                "PP", "NP", "AP", "DP", "LN", "LP", "LN-SP", "LN-SN", "LN-LP", "LN-LN", "LP-SP",
                "LP-SN", "LP-LP", "LP-LN"
            ]
        );
        // Locations 0-2 dip together: the 3-cell NEX chain in spatial NEX
        // years has MNN 4/3 (ends see one neighbor, middle sees two).
        let ln_sn = &report.rows[7];
        assert_eq!(ln_sn.mnn, Some(4.0 / 3.0));
        assert_eq!(ln_sn.mccs, Some(2.0)); // {0,1,2} + {3} -> 4/2
        let ln_sp = &report.rows[6];
        assert_eq!(ln_sp.mnn, None);
        assert_eq!(ln_sp.mccs, None);
    }
}
