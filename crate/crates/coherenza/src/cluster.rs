//! Co-occurrence similarity matrices, Ng-Jordan-Weiss spectral clustering,
//! and intra-cluster similarity filtering.
//!
//! Similarity counts are exact integers: the number of years two locations
//! share a phase, or share a local extreme, optionally restricted to
//! national extreme years. Clustering follows the NJW recipe: zero the
//! diagonal, normalize by row sums (`A = D^-1/2 S D^-1/2`), embed into the
//! top-K eigenvectors, normalize rows to unit length, then k-means.
//!
//! Everything is deterministic for a fixed seed: the eigensolver is a dense
//! sequential method, eigenvalue ties are broken by index, k-means++ draws
//! come from one seeded ChaCha8 stream, nearest-centroid ties go to the
//! lowest cluster index, and empty clusters are repaired by splitting the
//! largest cluster at its farthest member. Locations whose similarity row
//! sums to zero cannot be normalized; they are assigned the residual label
//! `n_clusters` and listed separately.

use crate::coherence::AnalysisInputs;
use crate::extremes::{YearClassification, YearType};
use crate::grid::GridSpec;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("similarity kind {kind:?} needs {needs}, which was not supplied")]
    MissingDependency {
        kind: SimilarityKind,
        needs: &'static str,
    },
    #[error("phase field and classification cover different years or grids")]
    Misaligned,
    #[error("similarity matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("similarity matrix must be symmetric, differs at ({a}, {b})")]
    NotSymmetric { a: usize, b: usize },
    #[error("cluster count {k} must lie in 2..={max} for this matrix")]
    InvalidK { k: usize, max: usize },
    #[error("eigendecomposition did not converge")]
    EigenFailure,
}

/// Which co-occurrence count fills the similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SimilarityKind {
    /// Years in which two locations share a phase.
    Phase,
    /// Shared-phase years restricted to spatial extreme (PEX or NEX) years.
    PhaseExtremeYears,
    /// Years in which both locations have a local PEX.
    PexCo,
    /// Years in which both locations have a local NEX.
    NexCo,
    /// Joint local PEX restricted to spatial PEX years.
    PexCoSpatial,
    /// Joint local NEX restricted to spatial NEX years.
    NexCoSpatial,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 6] = [
        SimilarityKind::Phase,
        SimilarityKind::PhaseExtremeYears,
        SimilarityKind::PexCo,
        SimilarityKind::NexCo,
        SimilarityKind::PexCoSpatial,
        SimilarityKind::NexCoSpatial,
    ];

    /// File-name-friendly label.
    pub fn label(self) -> &'static str {
        match self {
            SimilarityKind::Phase => "phase",
            SimilarityKind::PhaseExtremeYears => "phase_extreme_years",
            SimilarityKind::PexCo => "pex_co",
            SimilarityKind::NexCo => "nex_co",
            SimilarityKind::PexCoSpatial => "pex_co_spatial",
            SimilarityKind::NexCoSpatial => "nex_co_spatial",
        }
    }
}

/// What the diagonal of a similarity matrix holds. Clustering zeroes the
/// diagonal regardless; this records what the stored values mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagonalPolicy {
    /// Self-similarity counts (a location always co-occurs with itself).
    SelfCount,
    /// Already zeroed.
    Zeroed,
}

/// Symmetric matrix of co-occurrence counts over a stated year set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityMatrix {
    pub kind: SimilarityKind,
    counts: Array2<u32>,
    /// Calendar years the counts range over.
    pub years: Vec<i32>,
    pub diagonal: DiagonalPolicy,
}

impl SimilarityMatrix {
    /// Wraps an explicit count matrix, validating shape and symmetry.
    pub fn from_counts(
        kind: SimilarityKind,
        counts: Array2<u32>,
        years: Vec<i32>,
        diagonal: DiagonalPolicy,
    ) -> Result<Self, ClusterError> {
        if counts.nrows() != counts.ncols() {
            return Err(ClusterError::NotSquare {
                rows: counts.nrows(),
                cols: counts.ncols(),
            });
        }
        for a in 0..counts.nrows() {
            for b in (a + 1)..counts.ncols() {
                if counts[(a, b)] != counts[(b, a)] {
                    return Err(ClusterError::NotSymmetric { a, b });
                }
            }
        }
        Ok(Self {
            kind,
            counts,
            years,
            diagonal,
        })
    }

    pub fn n(&self) -> usize {
        self.counts.nrows()
    }

    pub fn count(&self, a: usize, b: usize) -> u32 {
        self.counts[(a, b)]
    }

    pub fn counts(&self) -> &Array2<u32> {
        &self.counts
    }
}

/// Year-major column representation used by the counting kernels.
fn count_matrix<F>(n: usize, years: Vec<i32>, kind: SimilarityKind, pair: F) -> SimilarityMatrix
where
    F: Fn(usize, usize) -> u32 + Sync,
{
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|a| (0..n).map(|b| pair(a, b)).collect())
        .collect();
    let mut counts = Array2::zeros((n, n));
    for (a, row) in rows.into_iter().enumerate() {
        for (b, c) in row.into_iter().enumerate() {
            counts[(a, b)] = c;
        }
    }
    SimilarityMatrix {
        kind,
        counts,
        years,
        diagonal: DiagonalPolicy::SelfCount,
    }
}

fn spatial_type_years(cls: &YearClassification, want: &[YearType]) -> Vec<usize> {
    (0..cls.n_years())
        .filter(|&t| want.contains(&cls.national(crate::extremes::NationalSeries::Spatial, t)))
        .collect()
}

pub fn build_similarity(
    kind: SimilarityKind,
    inputs: &AnalysisInputs,
) -> Result<SimilarityMatrix, ClusterError> {
    let need_phase = || {
        inputs.phase.ok_or(ClusterError::MissingDependency {
            kind,
            needs: "the local phase field",
        })
    };
    let need_cls = || {
        inputs
            .classification
            .ok_or(ClusterError::MissingDependency {
                kind,
                needs: "the year-type classification",
            })
    };
    match kind {
        SimilarityKind::Phase | SimilarityKind::PhaseExtremeYears => {
            let phase = need_phase()?;
            let n = phase.n_locations();
            // Phase year index pt covers calendar year first_phase_year + pt.
            let (rows, years): (Vec<usize>, Vec<i32>) = match kind {
                SimilarityKind::Phase => (0..phase.n_phase_years())
                    .map(|pt| (pt, phase.first_phase_year() + pt as i32))
                    .unzip(),
                _ => {
                    let cls = need_cls()?;
                    if cls.first_year() + 1 != phase.first_phase_year()
                        || cls.n_years() != phase.n_phase_years() + 1
                        || cls.n_locations() != n
                    {
                        return Err(ClusterError::Misaligned);
                    }
                    spatial_type_years(cls, &[YearType::Pex, YearType::Nex])
                        .into_iter()
                        .filter(|&t| t >= 1)
                        .map(|t| (t - 1, phase.first_phase_year() + t as i32 - 1))
                        .unzip()
                }
            };
            let columns: Vec<Vec<i8>> = (0..n)
                .map(|s| rows.iter().map(|&pt| phase.value(pt, s)).collect())
                .collect();
            Ok(count_matrix(n, years, kind, |a, b| {
                columns[a]
                    .iter()
                    .zip(&columns[b])
                    .filter(|&(&pa, &pb)| pa != 0 && pa == pb)
                    .count() as u32
            }))
        }
        _ => {
            let cls = need_cls()?;
            let n = cls.n_locations();
            let target = match kind {
                SimilarityKind::PexCo | SimilarityKind::PexCoSpatial => YearType::Pex,
                _ => YearType::Nex,
            };
            let rows: Vec<usize> = match kind {
                SimilarityKind::PexCoSpatial => spatial_type_years(cls, &[YearType::Pex]),
                SimilarityKind::NexCoSpatial => spatial_type_years(cls, &[YearType::Nex]),
                _ => (0..cls.n_years()).collect(),
            };
            let years: Vec<i32> = rows.iter().map(|&t| cls.first_year() + t as i32).collect();
            let columns: Vec<Vec<bool>> = (0..n)
                .map(|s| rows.iter().map(|&t| cls.local[(t, s)] == target).collect())
                .collect();
            Ok(count_matrix(n, years, kind, |a, b| {
                columns[a]
                    .iter()
                    .zip(&columns[b])
                    .filter(|&(&xa, &xb)| xa && xb)
                    .count() as u32
            }))
        }
    }
}

/// Pairwise similarity statistics of one cluster, on raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterStats {
    pub size: u32,
    /// Minimum pairwise count; `None` for singletons.
    pub min_pair: Option<u32>,
    pub mean_pair: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    pub n_clusters: usize,
    /// Per-location label in `0..n_clusters`; degenerate (zero-row)
    /// locations carry the residual label `n_clusters`.
    pub labels: Vec<usize>,
    /// Locations flagged as degenerate.
    pub residual: Vec<usize>,
    pub stats: Vec<ClusterStats>,
    /// Per-cluster filter outcome; all false until `filter_clusters` runs.
    pub selected: Vec<bool>,
}

impl ClusterAssignment {
    /// Location ids of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&s| self.labels[s] == cluster)
            .collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Deterministic k-means++ and Lloyd iterations. Exposed within the crate
/// so the eigenvector sign-flip test can drive it directly.
pub(crate) fn kmeans_labels(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    assert!(k >= 1 && k <= n, "k must lie in 1..=n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding: the next center is drawn with probability
    // proportional to the squared distance to the nearest chosen center.
    // When every remaining point coincides with a center, fall back to the
    // lowest unchosen index.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centers.push(points[first].clone());
    chosen[first] = true;
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| squared_distance(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut cumulative = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                cumulative += w;
                if cumulative > r {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or(n - 1)
        } else {
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[next] = true;
        centers.push(points[next].clone());
    }

    let mut assignments = vec![usize::MAX; n];
    for _ in 0..300 {
        // Assignment: nearest center, ties to the lowest cluster index.
        let new_assignments: Vec<usize> = points
            .par_iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = squared_distance(p, center);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect();
        let converged = new_assignments == assignments;
        assignments = new_assignments;
        if converged {
            break;
        }

        // Empty-cluster repair: move the farthest member of the largest
        // cluster (ties to lowest indices) into each empty cluster.
        let mut sizes = vec![0u32; k];
        for &a in &assignments {
            sizes[a] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let donor = (0..k)
                .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
                .unwrap();
            if sizes[donor] < 2 {
                continue;
            }
            let donor_center = mean_point(points, &assignments, donor);
            let moved = (0..n)
                .filter(|&i| assignments[i] == donor)
                .max_by(|&a, &b| {
                    squared_distance(&points[a], &donor_center)
                        .total_cmp(&squared_distance(&points[b], &donor_center))
                        .then(b.cmp(&a))
                })
                .unwrap();
            assignments[moved] = empty;
            sizes[donor] -= 1;
            sizes[empty] += 1;
        }

        // Update step.
        for c in 0..k {
            if sizes[c] > 0 {
                centers[c] = mean_point(points, &assignments, c);
            }
        }
    }
    assignments
}

fn mean_point(points: &[Vec<f64>], assignments: &[usize], cluster: usize) -> Vec<f64> {
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    let mut count = 0.0;
    for (p, &a) in points.iter().zip(assignments) {
        if a == cluster {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
            count += 1.0;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    mean
}

/// NJW spectral clustering of a similarity matrix.
pub fn spectral_cluster(
    s: &SimilarityMatrix,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    let n = s.n();
    // Degenerate locations: zero row sum after diagonal zeroing.
    let row_sums: Vec<u64> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| b != a)
                .map(|b| u64::from(s.count(a, b)))
                .sum()
        })
        .collect();
    let active: Vec<usize> = (0..n).filter(|&a| row_sums[a] > 0).collect();
    let residual: Vec<usize> = (0..n).filter(|&a| row_sums[a] == 0).collect();
    if k < 2 || k > active.len() {
        return Err(ClusterError::InvalidK {
            k,
            max: active.len(),
        });
    }

    // Normalized affinity on the active submatrix.
    let na = active.len();
    let inv_sqrt: Vec<f64> = active
        .iter()
        .map(|&a| 1.0 / (row_sums[a] as f64).sqrt())
        .collect();
    let affinity = DMatrix::from_fn(na, na, |i, j| {
        if i == j {
            0.0
        } else {
            f64::from(s.count(active[i], active[j])) * inv_sqrt[i] * inv_sqrt[j]
        }
    });

    let eigen = nalgebra::linalg::SymmetricEigen::try_new(affinity, 1.0e-12, 100_000)
        .ok_or(ClusterError::EigenFailure)?;
    let mut order: Vec<usize> = (0..na).collect();
    order.sort_by(|&i, &j| {
        eigen.eigenvalues[j]
            .total_cmp(&eigen.eigenvalues[i])
            .then(i.cmp(&j))
    });

    // Embed: rows = active locations, columns = top-k eigenvectors, then
    // normalize each row to unit length.
    let points: Vec<Vec<f64>> = (0..na)
        .map(|i| {
            let mut row: Vec<f64> = order[..k]
                .iter()
                .map(|&e| eigen.eigenvectors[(i, e)])
                .collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in &mut row {
                    *v /= norm;
                }
            }
            row
        })
        .collect();

    let active_labels = kmeans_labels(&points, k, seed);
    let mut labels = vec![k; n];
    for (i, &a) in active.iter().enumerate() {
        labels[a] = active_labels[i];
    }
    let stats = cluster_stats(&labels, k, s);
    Ok(ClusterAssignment {
        n_clusters: k,
        labels,
        residual,
        stats,
        selected: vec![false; k],
    })
}

fn cluster_stats(labels: &[usize], k: usize, s: &SimilarityMatrix) -> Vec<ClusterStats> {
    (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..labels.len()).filter(|&s| labels[s] == c).collect();
            let mut min_pair = None;
            let mut sum = 0u64;
            let mut pairs = 0u64;
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    let count = s.count(a, b);
                    min_pair = Some(min_pair.map_or(count, |m: u32| m.min(count)));
                    sum += u64::from(count);
                    pairs += 1;
                }
            }
            ClusterStats {
                size: members.len() as u32,
                min_pair,
                mean_pair: if pairs == 0 {
                    None
                } else {
                    Some(sum as f64 / pairs as f64)
                },
            }
        })
        .collect()
}

/// Denominator for normalized pairwise similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairNormalizer {
    /// One fixed year count for every pair, e.g. the total number of phase
    /// years or of national extreme years.
    Fixed(u32),
    /// Per-pair minimum of two per-location year counts, e.g. each
    /// location's own local PEX years.
    PerLocationMin(Vec<u32>),
}

impl PairNormalizer {
    fn of(&self, a: usize, b: usize) -> u32 {
        match self {
            PairNormalizer::Fixed(c) => *c,
            PairNormalizer::PerLocationMin(v) => v[a].min(v[b]),
        }
    }
}

/// Which per-cluster statistic is held against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FilterStat {
    /// The worst pair decides (every pair must reach the threshold).
    MinPair,
    /// The mean over pairs decides.
    MeanPair,
}

/// Marks clusters whose normalized intra-cluster similarity reaches the
/// threshold. A pair with a zero denominator scores 0. Singletons and the
/// residual cluster are never selected.
pub fn filter_clusters(
    assignment: &ClusterAssignment,
    s: &SimilarityMatrix,
    normalizer: &PairNormalizer,
    threshold: f64,
    stat: FilterStat,
) -> ClusterAssignment {
    let mut out = assignment.clone();
    for c in 0..out.n_clusters {
        let members = out.members(c);
        if members.len() < 2 {
            out.selected[c] = false;
            continue;
        }
        let mut worst = f64::INFINITY;
        let mut sum = 0.0;
        let mut pairs = 0u64;
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                let denom = normalizer.of(a, b);
                let value = if denom == 0 {
                    0.0
                } else {
                    f64::from(s.count(a, b)) / f64::from(denom)
                };
                worst = worst.min(value);
                sum += value;
                pairs += 1;
            }
        }
        let score = match stat {
            FilterStat::MinPair => worst,
            FilterStat::MeanPair => sum / pairs as f64,
        };
        out.selected[c] = score >= threshold;
    }
    out
}

/// Per-location rows for serializing an assignment against its grid.
pub fn assignment_rows(
    assignment: &ClusterAssignment,
    grid: &Arc<GridSpec>,
) -> Vec<(usize, f64, f64, usize, bool)> {
    (0..assignment.labels.len())
        .map(|s| {
            let (lat, lon) = grid.point(s);
            let label = assignment.labels[s];
            let selected = label < assignment.n_clusters && assignment.selected[label];
            (s, lat, lon, label, selected)
        })
        .collect()
}
