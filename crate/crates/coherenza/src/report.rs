//! Map and histogram emitters: GeoJSON point layers, plate-carree SVG grids,
//! and binned CSV histograms.
//!
//! Values are binned with inclusive lower edges; the topmost bin is closed.
//! A value below the first edge falls into the first bin, which by
//! convention starts at 0 for probability-valued maps.

use crate::cluster::ClusterAssignment;
use crate::fmt::trim6;
use crate::grid::GridSpec;
use serde_json::json;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("at least one bin is required")]
    InvalidBins,
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

/// One map bin: values in `[lower, next.lower)` take this label and color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapBin {
    pub lower: f64,
    pub label: &'static str,
    pub color: &'static str,
}

/// Bins for national-phase agreement maps: under 50%, 50-60%, 60-70%, and
/// 70% or more.
pub fn agreement_bins() -> Vec<MapBin> {
    vec![
        MapBin {
            lower: 0.0,
            label: "under-50%",
            color: "#e8c547",
        },
        MapBin {
            lower: 0.5,
            label: "50-60%",
            color: "#3b6fb6",
        },
        MapBin {
            lower: 0.6,
            label: "60-70%",
            color: "#3fa34d",
        },
        MapBin {
            lower: 0.7,
            label: "over-70%",
            color: "#c43131",
        },
    ]
}

/// Bins for local-extreme conditionals: under 20%, 20-40%, 40% or more.
pub fn extreme_match_bins() -> Vec<MapBin> {
    vec![
        MapBin {
            lower: 0.0,
            label: "under-20%",
            color: "#3b6fb6",
        },
        MapBin {
            lower: 0.2,
            label: "20-40%",
            color: "#3fa34d",
        },
        MapBin {
            lower: 0.4,
            label: "over-40%",
            color: "#c43131",
        },
    ]
}

/// Bins for phase-given-extremes maps: under 50%, 50-70%, 70% or more.
pub fn phase_match_bins() -> Vec<MapBin> {
    vec![
        MapBin {
            lower: 0.0,
            label: "under-50%",
            color: "#3b6fb6",
        },
        MapBin {
            lower: 0.5,
            label: "50-70%",
            color: "#3fa34d",
        },
        MapBin {
            lower: 0.7,
            label: "over-70%",
            color: "#c43131",
        },
    ]
}

/// Index of the bin holding `value`: lower edges inclusive, top bin closed.
/// Values below the first edge clamp into the first bin.
pub fn bin_index(bins: &[MapBin], value: f64) -> usize {
    bins.iter().skip(1).filter(|b| value >= b.lower).count()
}

/// GeoJSON FeatureCollection of one point per location with its value and
/// bin label. Undefined values get null value and bin.
pub fn emit_point_geojson<W: Write>(
    writer: W,
    grid: &GridSpec,
    values: &[Option<f64>],
    bins: &[MapBin],
) -> Result<(), ReportError> {
    if bins.is_empty() {
        return Err(ReportError::InvalidBins);
    }
    let features: Vec<serde_json::Value> = (0..grid.len())
        .map(|s| {
            let (lat, lon) = grid.point(s);
            let (value, bin) = match values[s] {
                Some(v) => (json!(v), json!(bins[bin_index(bins, v)].label)),
                None => (json!(null), json!(null)),
            };
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [lon, lat] },
                "properties": { "location_id": s, "value": value, "bin": bin }
            })
        })
        .collect();
    let collection = json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_writer_pretty(writer, &collection).map_err(io::Error::from)?;
    Ok(())
}

fn svg_open(grid: &GridSpec) -> (String, f64, f64) {
    let step = grid.grid_step();
    let min_lat = grid
        .points()
        .iter()
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    let max_lat = grid
        .points()
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_lon = grid
        .points()
        .iter()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);
    let max_lon = grid
        .points()
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let width = max_lon - min_lon + step;
    let height = max_lat - min_lat + step;
    let header = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\">\n",
        trim6(width),
        trim6(height)
    );
    (header, min_lon, max_lat)
}

fn svg_rect(x: f64, y: f64, step: f64, fill: &str) -> String {
    format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
        trim6(x),
        trim6(y),
        trim6(step),
        trim6(step),
        fill
    )
}

/// SVG of the grid as plate-carree squares colored by bin. Undefined values
/// render light grey.
pub fn emit_grid_svg<W: Write>(
    mut writer: W,
    grid: &GridSpec,
    values: &[Option<f64>],
    bins: &[MapBin],
) -> Result<(), ReportError> {
    if bins.is_empty() {
        return Err(ReportError::InvalidBins);
    }
    let (header, min_lon, max_lat) = svg_open(grid);
    let mut out = header;
    let step = grid.grid_step();
    for (s, value) in values.iter().enumerate() {
        let (lat, lon) = grid.point(s);
        let fill = match value {
            Some(v) => bins[bin_index(bins, *v)].color,
            None => "#d0d0d0",
        };
        out.push_str(&svg_rect(lon - min_lon, max_lat - lat, step, fill));
    }
    out.push_str("</svg>\n");
    writer.write_all(out.as_bytes())?;
    Ok(())
}

/// Cycle of fill colors for cluster maps.
const CLUSTER_PALETTE: [&str; 10] = [
    "#c43131", "#3b6fb6", "#3fa34d", "#e8c547", "#8e44ad", "#e67e22", "#16a085", "#d35400",
    "#2c3e50", "#7f8c8d",
];

/// GeoJSON of a cluster assignment: one point per location with its label
/// and whether its cluster passed the similarity filter.
pub fn emit_cluster_geojson<W: Write>(
    writer: W,
    grid: &GridSpec,
    assignment: &ClusterAssignment,
) -> Result<(), ReportError> {
    let features: Vec<serde_json::Value> = (0..grid.len())
        .map(|s| {
            let (lat, lon) = grid.point(s);
            let label = assignment.labels[s];
            let residual = label >= assignment.n_clusters;
            let selected = !residual && assignment.selected[label];
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [lon, lat] },
                "properties": {
                    "location_id": s,
                    "label": label,
                    "residual": residual,
                    "selected": selected
                }
            })
        })
        .collect();
    let collection = json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_writer_pretty(writer, &collection).map_err(io::Error::from)?;
    Ok(())
}

/// SVG of a cluster assignment. Only selected clusters are colored; other
/// cells render light grey, residual cells white.
pub fn emit_cluster_svg<W: Write>(
    mut writer: W,
    grid: &GridSpec,
    assignment: &ClusterAssignment,
) -> Result<(), ReportError> {
    let (header, min_lon, max_lat) = svg_open(grid);
    let mut out = header;
    let step = grid.grid_step();
    for s in 0..grid.len() {
        let (lat, lon) = grid.point(s);
        let label = assignment.labels[s];
        let fill = if label >= assignment.n_clusters {
            "#ffffff"
        } else if assignment.selected[label] {
            CLUSTER_PALETTE[label % CLUSTER_PALETTE.len()]
        } else {
            "#d0d0d0"
        };
        out.push_str(&svg_rect(lon - min_lon, max_lat - lat, step, fill));
    }
    out.push_str("</svg>\n");
    writer.write_all(out.as_bytes())?;
    Ok(())
}

/// CSV histogram of values in [0, 1]: `bin_lower,count,percentage`. The top
/// edge value 1.0 falls into the last bin.
pub fn emit_histogram_csv<W: Write>(
    mut writer: W,
    values: &[f64],
    bin_width: f64,
) -> Result<(), ReportError> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(ReportError::InvalidBins);
    }
    let n_bins = (1.0 / bin_width).ceil() as usize;
    let mut counts = vec![0u32; n_bins];
    for &v in values {
        let bin = ((v / bin_width).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let total = values.len() as f64;
    let mut out = String::from("bin_lower,count,percentage\n");
    for (i, &count) in counts.iter().enumerate() {
        let lower = i as f64 * bin_width;
        let pct = if total > 0.0 {
            100.0 * f64::from(count) / total
        } else {
            0.0
        };
        out.push_str(&format!("{},{},{}\n", trim6(lower), count, trim6(pct)));
    }
    writer.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterAssignment;

    fn grid_2x2() -> GridSpec {
        GridSpec::full_rect(2, 2, 1.0, 10.0, 70.0).unwrap()
    }

    #[test]
    fn high_values_land_in_the_top_bin() {
        let bins = agreement_bins();
        assert_eq!(bins[bin_index(&bins, 0.75)].label, "over-70%");
        assert_eq!(bins[bin_index(&bins, 1.0)].label, "over-70%");
    }

    #[test]
    fn bin_edges_are_lower_inclusive() {
        let bins = agreement_bins();
        assert_eq!(bins[bin_index(&bins, 0.60)].label, "60-70%");
        assert_eq!(bins[bin_index(&bins, 0.5999)].label, "50-60%");
        assert_eq!(bins[bin_index(&bins, 0.0)].label, "under-50%");
        // Below the first edge clamps to the first bin.
        assert_eq!(bin_index(&bins, -0.1), 0);
    }

    #[test]
    fn empty_bins_are_rejected() {
        let grid = grid_2x2();
        let values = vec![Some(0.5); 4];
        let mut buf = Vec::new();
        assert!(matches!(
            emit_point_geojson(&mut buf, &grid, &values, &[]),
            Err(ReportError::InvalidBins)
        ));
    }

    #[test]
    fn geojson_has_one_feature_per_location() {
        let grid = grid_2x2();
        let values = vec![Some(0.75), Some(0.3), None, Some(0.65)];
        let mut buf = Vec::new();
        emit_point_geojson(&mut buf, &grid, &values, &agreement_bins()).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let features = parsed["features"].as_array().unwrap();
        assert_eq!(features.len(), 4);
        assert_eq!(features[0]["properties"]["bin"], "over-70%");
        assert_eq!(features[2]["properties"]["value"], serde_json::Value::Null);
        // GeoJSON coordinate order is [lon, lat].
        assert_eq!(features[0]["geometry"]["coordinates"][0], 70.0);
        assert_eq!(features[0]["geometry"]["coordinates"][1], 10.0);
    }

    #[test]
    fn svg_draws_one_square_per_cell() {
        let grid = grid_2x2();
        let values = vec![Some(0.75); 4];
        let mut buf = Vec::new();
        emit_grid_svg(&mut buf, &grid, &values, &agreement_bins()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("<rect").count(), 4);
        assert_eq!(text.matches("#c43131").count(), 4);
        assert!(text.contains("viewBox=\"0 0 2 2\""));
    }

    #[test]
    fn cluster_svg_greys_unselected_clusters() {
        let grid = grid_2x2();
        let assignment = ClusterAssignment {
            n_clusters: 2,
            labels: vec![0, 0, 1, 2],
            residual: vec![3],
            stats: vec![],
            selected: vec![true, false],
        };
        let mut buf = Vec::new();
        emit_cluster_svg(&mut buf, &grid, &assignment).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches(CLUSTER_PALETTE[0]).count(), 2);
        assert_eq!(text.matches("#d0d0d0").count(), 1);
        assert_eq!(text.matches("#ffffff").count(), 1);
    }

    #[test]
    fn histogram_of_identical_values_is_one_full_bin() {
        let mut buf = Vec::new();
        emit_histogram_csv(&mut buf, &[0.64; 10], 0.1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11); // header + 10 bins
        assert_eq!(lines[7], "0.6,10,100");
        assert!(lines[1].starts_with("0,0,0"));
    }

    #[test]
    fn histogram_percentages_sum_to_one_hundred() {
        let values: Vec<f64> = (0..37).map(|i| f64::from(i) / 36.0).collect();
        let mut buf = Vec::new();
        emit_histogram_csv(&mut buf, &values, 0.1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let sum: f64 = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((sum - 100.0).abs() < 0.01, "sum {sum}");
    }

    #[test]
    fn top_edge_value_joins_the_last_bin() {
        let mut buf = Vec::new();
        emit_histogram_csv(&mut buf, &[1.0, 0.95], 0.1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().last().unwrap().starts_with("0.9,2,100"));
    }
}
