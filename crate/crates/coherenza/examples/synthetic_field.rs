//! Generate a reproducible synthetic rainfall field and inspect its
//! statistics. The same seed always yields the same field, bit for bit.

use coherenza::synth::{generate_with_stats, SynthConfig};

fn main() {
    let config = SynthConfig {
        n_rows: 6,
        n_cols: 6,
        n_years: 200,
        base_mean: 1000.0,
        base_sd: 200.0,
        lag1_corr: -0.4,
        spatial_corr_len: 1.5,
        seed: 42,
        ..SynthConfig::default()
    };
    let (field, stats) = generate_with_stats(&config).expect("valid config");

    println!(
        "field: {} locations x {} years, starting {}",
        field.n_locations(),
        field.n_years(),
        field.first_year()
    );
    println!(
        "clamped {} of {} cells at the zero-rainfall floor",
        stats.clamped_cells, stats.total_cells
    );

    let n = (field.n_locations() * field.n_years()) as f64;
    let mean = field.values().iter().sum::<f64>() / n;
    let sd = (field
        .values()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    println!("sample mean {mean:.1} mm (configured 1000), sample sd {sd:.1} mm (configured 200)");

    // Lag-1 autocorrelation of one cell; negative by construction, so wet
    // years tend to follow dry ones.
    let col: Vec<f64> = (0..field.n_years()).map(|t| field.value(t, 0)).collect();
    let m = col.iter().sum::<f64>() / col.len() as f64;
    let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    let cov = col.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>();
    println!("cell 0 lag-1 autocorrelation: {:.2}", cov / var);
}
