//! Build a grid with holes (a coastline, say), inspect the Moore
//! neighborhoods, and smooth a field over them. The smoothing divisor is
//! the number of existing cells in the 1-hop neighborhood, so edges and
//! coasts are not diluted by missing neighbors.

use coherenza::grid::{build_neighbor_graph, smooth_1hop, GridSpec, RainfallField};
use ndarray::Array2;
use std::sync::Arc;

fn main() {
    // A 4x4 lattice with the two middle cells of the top row missing.
    let mut points = Vec::new();
    for row in 0..4 {
        for col in 0..4 {
            if row == 3 && (col == 1 || col == 2) {
                continue;
            }
            points.push((10.0 + row as f64, 70.0 + col as f64));
        }
    }
    let grid = Arc::new(GridSpec::new(points, 1.0).expect("on-lattice points"));
    let graph = build_neighbor_graph(&grid);

    for id in 0..grid.len() {
        let (lat, lon) = grid.point(id);
        println!(
            "({lat:.0}, {lon:.0}) has {} neighbors: {:?}",
            graph.neighbors(id).len(),
            graph.neighbors(id)
        );
    }

    // A single wet cell in the interior spreads over its neighborhood; the
    // neighborhood mean divides by existing cells only.
    let mut values = Array2::from_elem((2, grid.len()), 100.0);
    let spike = grid.len() / 2;
    values[(0, spike)] = 1000.0;
    let field = RainfallField::new(Arc::clone(&grid), 1901, values).unwrap();
    let smoothed = smooth_1hop(&field, &graph);
    let (lat, lon) = grid.point(spike);
    println!(
        "spike of 1000 at ({lat:.0}, {lon:.0}) smooths to {:.1}; its plain year stays {:.1}",
        smoothed.value(0, spike),
        smoothed.value(1, spike)
    );
}
