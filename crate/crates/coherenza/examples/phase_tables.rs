//! Phase analysis: the sign of each year-over-year rainfall change, per
//! location and for the spatial mean, plus the tables built from them:
//! per-location agreement with the national phase, the national transition
//! conditionals, and how often conditioning on the national phase improves
//! the local transition estimates.

use coherenza::grid::compute_aimr;
use coherenza::phase::{
    agreement_counts, local_transition_probs, national_transition_probs, phase_of_aimr,
    phase_of_field, TieRule,
};
use coherenza::synth::{generate, SynthConfig};

fn main() {
    let field = generate(&SynthConfig {
        n_rows: 5,
        n_cols: 5,
        n_years: 111,
        lag1_corr: -0.4,
        spatial_corr_len: 2.0,
        seed: 3,
        ..SynthConfig::default()
    })
    .expect("valid config");

    let aimr = compute_aimr(&field);
    let national = phase_of_aimr(&aimr, TieRule::Positive).expect("enough years");
    let local = phase_of_field(&field, TieRule::Positive);

    let agreement = agreement_counts(&local, &national).expect("aligned by construction");
    println!(
        "mean agreement with the national phase: {:.3} over {} phase years",
        agreement.mean_relative().unwrap(),
        agreement.n_phase_years
    );
    println!(
        "locations by agreement bin (<50%, 50-60%, 60-70%, >=70%): {:?}",
        agreement.histogram
    );

    let trans = national_transition_probs(&national);
    println!(
        "national p(up | prev down) = {:.3}, p(down | prev up) = {:.3}",
        trans.up_after_down().prob().unwrap(),
        trans.down_after_up().prob().unwrap()
    );

    let local_trans = local_transition_probs(&local, &national).expect("aligned");
    println!(
        "conditioning on the current national phase sharpens both local \
         transition estimates at {} of {} locations",
        local_trans.improved_by_current_count,
        local.n_locations()
    );
    println!(
        "conditioning on the previous national phase does so at {} locations",
        local_trans.improved_by_previous_count
    );
}
