//! The fourteen-property spatial coherence table. For each property (a
//! local phase sign, agreement with the national phase, a local extreme, or
//! a local extreme restricted to nationally extreme years) it reports:
//!
//! - MNN: among property-holding cells, the mean number of Moore neighbors
//!   that also hold it;
//! - MCCS: the grid-cell count divided by the number of connected
//!   components of the property graph, averaged over the property's years.
//!
//! Both rise when a property clumps spatially instead of scattering.

use coherenza::coherence::{compute_coherence, AnalysisInputs, MccsMode};
use coherenza::extremes::{classify_years, SigmaDivisor};
use coherenza::grid::{build_neighbor_graph, compute_aimr};
use coherenza::phase::{phase_of_aimr, phase_of_field, TieRule};
use coherenza::synth::{generate, SynthConfig};

fn main() {
    let field = generate(&SynthConfig {
        n_rows: 8,
        n_cols: 8,
        n_years: 111,
        spatial_corr_len: 1.5,
        seed: 5,
        ..SynthConfig::default()
    })
    .expect("valid config");

    let graph = build_neighbor_graph(field.grid());
    let aimr = compute_aimr(&field);
    let national = phase_of_aimr(&aimr, TieRule::Positive).expect("enough years");
    let phase = phase_of_field(&field, TieRule::Positive);
    let cls = classify_years(&field, &aimr, SigmaDivisor::Population).expect("aligned");

    let inputs = AnalysisInputs {
        phase: Some(&phase),
        national_phase: Some(&national),
        classification: Some(&cls),
    };
    let report =
        compute_coherence(&inputs, &graph, MccsMode::PerYearMean).expect("all inputs given");

    println!(
        "{:8} {:>8} {:>8} {:>7} {:>7}",
        "property", "mnn", "mccs", "years", "cells"
    );
    for row in &report.rows {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:8} {:>8} {:>8} {:>7} {:>7}",
            row.property.label(),
            fmt(row.mnn),
            fmt(row.mccs),
            row.year_count,
            row.cell_count
        );
    }
    println!(
        "\nspatially mixed noise keeps these near their random baselines; \
         real monsoon data pushes the phase properties far above them"
    );
}
