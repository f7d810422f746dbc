//! Extreme-year detection at three scales: each location against its own
//! mean and standard deviation, the spatial-mean series against its own,
//! and the flood/drought counts against theirs. Years beyond one standard
//! deviation are PEX (wet) or NEX (dry).

use coherenza::extremes::{classify_years, NationalSeries, SigmaDivisor, YearType};
use coherenza::grid::compute_aimr;
use coherenza::synth::{generate, SynthConfig};

fn main() {
    let field = generate(&SynthConfig {
        n_rows: 5,
        n_cols: 5,
        n_years: 111,
        spatial_corr_len: 2.0,
        seed: 9,
        ..SynthConfig::default()
    })
    .expect("valid config");
    let aimr = compute_aimr(&field);
    let cls = classify_years(&field, &aimr, SigmaDivisor::Population).expect("aligned");

    let count = |types: &[YearType], ty: YearType| types.iter().filter(|&&t| t == ty).count();
    println!(
        "spatial series: {} PEX, {} NEX of {} years",
        count(&cls.spatial, YearType::Pex),
        count(&cls.spatial, YearType::Nex),
        cls.n_years()
    );
    println!(
        "locational series (flood/drought counts): {} PEX, {} NEX, {} mixed",
        count(&cls.locational, YearType::Pex),
        count(&cls.locational, YearType::Nex),
        cls.mixed_years.len()
    );
    println!(
        "flood count mean {:.1} sd {:.1}; drought count mean {:.1} sd {:.1}",
        cls.nf_mean, cls.nf_sd, cls.nd_mean, cls.nd_sd
    );

    let by_type = cls.mean_nf_by_type(NationalSeries::Locational);
    println!(
        "mean flood count in locational normal / PEX / NEX years: {:.1} / {:.1} / {:.1}",
        by_type[0].unwrap_or(f64::NAN),
        by_type[1].unwrap_or(f64::NAN),
        by_type[2].unwrap_or(f64::NAN)
    );

    println!(
        "spatial extreme years: {:?}",
        cls.national_extreme_years(NationalSeries::Spatial)
    );
    if !cls.degenerate_sigma.is_empty() {
        println!(
            "warning: {} locations have zero variance and can never be extreme",
            cls.degenerate_sigma.len()
        );
    }
}
