//! End-to-end analysis runs: load or synthesize a field, compute phases,
//! extreme-year classifications, coherence measures and cluster assignments,
//! and write a deterministic artifact tree plus a manifest.
//!
//! Every artifact is built in memory and hashed before it reaches disk, so
//! `manifest.json` always matches the tree byte for byte. Runs with the same
//! input data and the same analysis settings produce identical trees
//! regardless of thread count.

use crate::cluster::{
    assignment_rows, build_similarity, filter_clusters, spectral_cluster, ClusterAssignment,
    ClusterError, FilterStat, PairNormalizer, SimilarityKind, SimilarityMatrix,
};
use crate::coherence::{
    compute_coherence, AnalysisInputs, CoherenceError, CoherenceReport, MccsMode,
};
use crate::extremes::{
    classify_years, phase_given_extremes, phase_given_phase_and_extremes, year_type_conditionals,
    ExtremesError, NationalSeries, PhaseAgreementExtremes, PhaseExtremeConditionals, SigmaDivisor,
    YearClassification, YearType, YearTypeConditionals,
};
use crate::fmt::{trim6, trim6_opt};
use crate::grid::{
    build_neighbor_graph, compute_aimr, smooth_1hop, AimrSeries, NeighborGraph, RainfallField,
};
use crate::io::{self, IngestError};
use crate::phase::{
    agreement_counts, local_transition_probs, national_transition_probs, phase_of_aimr,
    phase_of_field, AgreementCounts, LocalTransitions, NationalTransitions, PhaseError, PhaseField,
    PhaseSeries, TieRule,
};
use crate::report::{
    agreement_bins, emit_cluster_geojson, emit_cluster_svg, emit_grid_svg, emit_histogram_csv,
    emit_point_geojson, extreme_match_bins, phase_match_bins, ReportError,
};
use crate::synth::{generate_with_stats, SynthConfig, SynthError, SynthStats};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Unreadable or malformed input data.
    #[error("input error: {0}")]
    Input(String),
    /// The output tree could not be written.
    #[error("output error: {0}")]
    Output(String),
    /// A numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Inconsistent or out-of-range run settings.
    #[error("config error: {0}")]
    Config(String),
}

impl PipelineError {
    /// Process exit code: 2 for i/o, 3 for numerical failures, 4 for bad
    /// configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) | PipelineError::Output(_) => 2,
            PipelineError::Numerical(_) => 3,
            PipelineError::Config(_) => 4,
        }
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<PhaseError> for PipelineError {
    fn from(e: PhaseError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<ExtremesError> for PipelineError {
    fn from(e: ExtremesError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<CoherenceError> for PipelineError {
    fn from(e: CoherenceError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<ReportError> for PipelineError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::InvalidBins => PipelineError::Config(e.to_string()),
            ReportError::Io(io) => PipelineError::Output(io.to_string()),
        }
    }
}

/// On-disk input encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InputFormat {
    Csv,
    Bin,
}

/// Where the field comes from.
#[derive(Debug, Clone)]
pub enum InputSource {
    File { path: PathBuf, format: InputFormat },
    Synthetic(SynthConfig),
}

/// Which output encodings to emit alongside the always-written binary
/// snapshot, summary and manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitSet {
    pub csv: bool,
    pub geojson: bool,
    pub svg: bool,
}

impl Default for EmitSet {
    fn default() -> Self {
        EmitSet {
            csv: true,
            geojson: true,
            svg: true,
        }
    }
}

/// Full configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: InputSource,
    pub out_dir: PathBuf,
    /// Also compute the 1-hop smoothed variants, and cluster on the
    /// smoothed field.
    pub smooth: bool,
    pub tie: TieRule,
    pub sigma: SigmaDivisor,
    pub k: usize,
    pub seed: u64,
    /// Selection threshold for the phase-similarity clusterings. The
    /// extreme-co-occurrence clusterings use their own documented defaults.
    pub threshold: f64,
    pub emit: EmitSet,
    pub mccs_mode: MccsMode,
    pub filter_stat: FilterStat,
}

impl RunConfig {
    pub fn new(input: InputSource, out_dir: PathBuf) -> Self {
        RunConfig {
            input,
            out_dir,
            smooth: true,
            tie: TieRule::Positive,
            sigma: SigmaDivisor::Population,
            k: 10,
            seed: 0,
            threshold: 0.7,
            emit: EmitSet::default(),
            mccs_mode: MccsMode::PerYearMean,
            filter_stat: FilterStat::MinPair,
        }
    }
}

/// Which artifact groups a run writes. The manifest always covers whatever
/// was written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageSet {
    /// Canonical field snapshot (`field.bin`, plus `field.csv` under csv).
    pub field: bool,
    pub phase: bool,
    pub extremes: bool,
    pub coherence: bool,
    pub cluster: bool,
    /// Aggregate `summary.json`.
    pub summary: bool,
}

impl StageSet {
    pub fn all() -> Self {
        StageSet {
            field: true,
            phase: true,
            extremes: true,
            coherence: true,
            cluster: true,
            summary: true,
        }
    }

    pub fn field_only() -> Self {
        StageSet {
            field: true,
            ..StageSet::default()
        }
    }

    fn needs_analysis(self) -> bool {
        self.phase || self.extremes || self.coherence || self.cluster || self.summary
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Digest over the input data and every analysis-relevant setting;
    /// output selection (`emit`, output directory) does not enter.
    pub config_hash: String,
    /// Sorted by path. `manifest.json` itself is not listed.
    pub artifacts: Vec<ArtifactEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Collects artifacts in memory, hashing each before it reaches disk.
struct ArtifactSink {
    out_dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactSink {
    fn new(out_dir: &PathBuf) -> Result<Self, PipelineError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| PipelineError::Output(format!("{}: {e}", out_dir.display())))?;
        Ok(ArtifactSink {
            out_dir: out_dir.clone(),
            entries: Vec::new(),
        })
    }

    fn write(&mut self, rel_path: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.out_dir.join(rel_path);
        fs::write(&path, bytes)
            .map_err(|e| PipelineError::Output(format!("{}: {e}", path.display())))?;
        self.entries.push(ArtifactEntry {
            path: rel_path.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

/// The analysis-relevant slice of the configuration; hashing its canonical
/// JSON yields the manifest's `config_hash`.
#[derive(Serialize)]
struct ConfigDigest<'a> {
    input_sha256: &'a str,
    smooth: bool,
    tie: TieRule,
    sigma: SigmaDivisor,
    k: usize,
    seed: u64,
    threshold: f64,
    mccs_mode: MccsMode,
    filter_stat: FilterStat,
}

fn config_hash(config: &RunConfig, input_sha256: &str) -> String {
    let digest = ConfigDigest {
        input_sha256,
        smooth: config.smooth,
        tie: config.tie,
        sigma: config.sigma,
        k: config.k,
        seed: config.seed,
        threshold: config.threshold,
        mccs_mode: config.mccs_mode,
        filter_stat: config.filter_stat,
    };
    let encoded = serde_json::to_vec(&digest).expect("config digest serializes");
    sha256_hex(&encoded)
}

fn load_field(input: &InputSource) -> Result<(RainfallField, Option<SynthStats>), PipelineError> {
    match input {
        InputSource::File { path, format } => {
            let field = match format {
                InputFormat::Csv => io::read_csv_path(path)?,
                InputFormat::Bin => io::read_binary_path(path)?,
            };
            Ok((field, None))
        }
        InputSource::Synthetic(config) => {
            let (field, stats) = generate_with_stats(config)?;
            Ok((field, Some(stats)))
        }
    }
}

/// Everything the tabular and map emitters draw on, for one field variant.
struct Analyses {
    aimr: AimrSeries,
    national_phase: PhaseSeries,
    phase: PhaseField,
    agreement: AgreementCounts,
    national_trans: NationalTransitions,
    local_trans: LocalTransitions,
    cls: YearClassification,
    ytc_spatial: YearTypeConditionals,
    ytc_locational: YearTypeConditionals,
    phase_extremes: PhaseExtremeConditionals,
    phase_agreement: PhaseAgreementExtremes,
    coherence: CoherenceReport,
}

fn analyze_field(
    field: &RainfallField,
    graph: &NeighborGraph,
    config: &RunConfig,
) -> Result<Analyses, PipelineError> {
    let aimr = compute_aimr(field);
    let national_phase = phase_of_aimr(&aimr, config.tie)?;
    let phase = phase_of_field(field, config.tie);
    let agreement = agreement_counts(&phase, &national_phase)?;
    let national_trans = national_transition_probs(&national_phase);
    let local_trans = local_transition_probs(&phase, &national_phase)?;
    let cls = classify_years(field, &aimr, config.sigma)?;
    let ytc_spatial = year_type_conditionals(&cls, NationalSeries::Spatial);
    let ytc_locational = year_type_conditionals(&cls, NationalSeries::Locational);
    let phase_extremes = phase_given_extremes(&phase, &cls, NationalSeries::Spatial)?;
    let phase_agreement =
        phase_given_phase_and_extremes(&phase, &national_phase, &cls, NationalSeries::Spatial)?;
    let inputs = AnalysisInputs {
        phase: Some(&phase),
        national_phase: Some(&national_phase),
        classification: Some(&cls),
    };
    let coherence = compute_coherence(&inputs, graph, config.mccs_mode)?;
    Ok(Analyses {
        aimr,
        national_phase,
        phase,
        agreement,
        national_trans,
        local_trans,
        cls,
        ytc_spatial,
        ytc_locational,
        phase_extremes,
        phase_agreement,
        coherence,
    })
}

/// One similarity kind's clustering, or the reason it was skipped (too few
/// locations with any co-occurrence to support `k` clusters).
struct KindOutcome {
    kind: SimilarityKind,
    assignment: Option<ClusterAssignment>,
    skipped: Option<String>,
}

/// Default pair normalizer and selection threshold per similarity kind. The
/// phase kinds take the configured threshold; the extreme-co-occurrence
/// kinds use fixed defaults matched to their much smaller year sets.
fn kind_filter(
    kind: SimilarityKind,
    s: &SimilarityMatrix,
    cls: &YearClassification,
    config: &RunConfig,
) -> (PairNormalizer, f64) {
    match kind {
        SimilarityKind::Phase | SimilarityKind::PhaseExtremeYears => (
            PairNormalizer::Fixed(s.years.len() as u32),
            config.threshold,
        ),
        SimilarityKind::PexCo => (
            PairNormalizer::PerLocationMin(cls.local_year_counts(YearType::Pex)),
            0.5,
        ),
        SimilarityKind::NexCo => (
            PairNormalizer::PerLocationMin(cls.local_year_counts(YearType::Nex)),
            0.4,
        ),
        SimilarityKind::PexCoSpatial | SimilarityKind::NexCoSpatial => {
            (PairNormalizer::Fixed(s.years.len() as u32), 0.2)
        }
    }
}

fn cluster_all_kinds(
    analyses: &Analyses,
    config: &RunConfig,
) -> Result<Vec<KindOutcome>, PipelineError> {
    let inputs = AnalysisInputs {
        phase: Some(&analyses.phase),
        national_phase: Some(&analyses.national_phase),
        classification: Some(&analyses.cls),
    };
    SimilarityKind::ALL
        .iter()
        .map(|&kind| {
            let s = build_similarity(kind, &inputs)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            match spectral_cluster(&s, config.k, config.seed) {
                Ok(assignment) => {
                    let (normalizer, threshold) = kind_filter(kind, &s, &analyses.cls, config);
                    let filtered = filter_clusters(
                        &assignment,
                        &s,
                        &normalizer,
                        threshold,
                        config.filter_stat,
                    );
                    Ok(KindOutcome {
                        kind,
                        assignment: Some(filtered),
                        skipped: None,
                    })
                }
                Err(ClusterError::InvalidK { k, max }) => Ok(KindOutcome {
                    kind,
                    assignment: None,
                    skipped: Some(format!(
                        "only {max} locations have any co-occurrence, too few for k={k}"
                    )),
                }),
                Err(ClusterError::EigenFailure) => Err(PipelineError::Numerical(
                    ClusterError::EigenFailure.to_string(),
                )),
                Err(e) => Err(PipelineError::Config(e.to_string())),
            }
        })
        .collect()
}

fn year_type_label(ty: YearType) -> &'static str {
    match ty {
        YearType::Normal => "normal",
        YearType::Pex => "pex",
        YearType::Nex => "nex",
        YearType::Mixed => "mixed",
    }
}

fn csv_aimr(aimr: &AimrSeries) -> String {
    let mut out = String::from("year,mean_rain_mm\n");
    for (t, &v) in aimr.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", aimr.first_year() + t as i32, trim6(v)));
    }
    out
}

fn csv_phase_national(series: &PhaseSeries) -> String {
    let mut out = String::from("year,phase\n");
    for (t, &p) in series.values().iter().enumerate() {
        out.push_str(&format!("{},{p}\n", series.first_phase_year() + t as i32));
    }
    out
}

fn csv_phase_local(agreement: &AgreementCounts, field: &RainfallField) -> String {
    let grid = field.grid();
    let mut out = String::from("location_id,lat,lon,agree_years,defined_years,agreement\n");
    for s in 0..grid.len() {
        let (lat, lon) = grid.point(s);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s,
            trim6(lat),
            trim6(lon),
            agreement.pc(s),
            agreement.defined[s],
            trim6_opt(agreement.relative(s)),
        ));
    }
    out
}

fn csv_transitions_national(tr: &NationalTransitions) -> String {
    let mut out = String::from("prev,next,events,trials,probability\n");
    for (prev, next) in [(-1, 1), (-1, -1), (1, 1), (1, -1)] {
        let e = tr.entry(prev, next);
        out.push_str(&format!(
            "{prev},{next},{},{},{}\n",
            e.events,
            e.trials,
            trim6_opt(e.prob()),
        ));
    }
    out
}

fn csv_transitions_local(lt: &LocalTransitions) -> String {
    let mut out = String::from(
        "location_id,p_up_after_down,p_up_after_down_nat_up,p_down_after_up,\
         p_down_after_up_nat_down,improved_by_current,improved_by_previous\n",
    );
    for (s, loc) in lt.per_location.iter().enumerate() {
        // [previous][next] with +1 at 0 and -1 at 1; the national index of
        // the conditioned tables uses the same sign convention.
        let up_after_down = loc.own[1][0];
        let down_after_up = loc.own[0][1];
        let up_cond = loc.with_current_national[0][1][0];
        let down_cond = loc.with_current_national[1][0][1];
        out.push_str(&format!(
            "{s},{},{},{},{},{},{}\n",
            trim6_opt(up_after_down.prob()),
            trim6_opt(up_cond.prob()),
            trim6_opt(down_after_up.prob()),
            trim6_opt(down_cond.prob()),
            loc.improved_by_current,
            loc.improved_by_previous,
        ));
    }
    out
}

fn csv_extreme_years(cls: &YearClassification, aimr: &AimrSeries) -> String {
    let mut out =
        String::from("year,mean_rain_mm,spatial_type,n_flood,n_drought,locational_type\n");
    for t in 0..cls.n_years() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            cls.first_year() + t as i32,
            trim6(aimr.values()[t]),
            year_type_label(cls.spatial[t]),
            cls.nf[t],
            cls.nd[t],
            year_type_label(cls.locational[t]),
        ));
    }
    out
}

fn csv_year_type_conditionals(ytc: &YearTypeConditionals) -> String {
    let mut out = String::from("location_id");
    for national in ["normal", "pex", "nex"] {
        for local in ["normal", "pex", "nex"] {
            out.push_str(&format!(",p_{local}_given_{national}"));
        }
    }
    out.push_str(",trials_normal,trials_pex,trials_nex\n");
    for (s, table) in ytc.per_location.iter().enumerate() {
        out.push_str(&s.to_string());
        for national in table {
            for entry in national {
                out.push(',');
                out.push_str(&trim6_opt(entry.prob()));
            }
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            table[0][0].trials, table[1][0].trials, table[2][0].trials
        ));
    }
    out
}

fn csv_phase_extremes(pe: &PhaseExtremeConditionals) -> String {
    let mut out = String::from("location_id,p_up_in_pex,pex_trials,p_down_in_nex,nex_trials\n");
    for s in 0..pe.up_in_pex.len() {
        out.push_str(&format!(
            "{s},{},{},{},{}\n",
            trim6_opt(pe.up_in_pex[s].prob()),
            pe.up_in_pex[s].trials,
            trim6_opt(pe.down_in_nex[s].prob()),
            pe.down_in_nex[s].trials,
        ));
    }
    out
}

fn csv_phase_agreement_extremes(pa: &PhaseAgreementExtremes) -> String {
    let mut out = String::from(
        "location_id,p_follow_up,p_follow_up_in_pex,p_follow_down,p_follow_down_in_nex,\
         satisfies_both\n",
    );
    for s in 0..pa.follow_up.len() {
        let both = match (
            pa.follow_up[s].prob(),
            pa.follow_up_in_pex[s].prob(),
            pa.follow_down[s].prob(),
            pa.follow_down_in_nex[s].prob(),
        ) {
            (Some(fu), Some(fup), Some(fd), Some(fdn)) => Some(fup >= fu && fdn >= fd),
            _ => None,
        };
        out.push_str(&format!(
            "{s},{},{},{},{},{}\n",
            trim6_opt(pa.follow_up[s].prob()),
            trim6_opt(pa.follow_up_in_pex[s].prob()),
            trim6_opt(pa.follow_down[s].prob()),
            trim6_opt(pa.follow_down_in_nex[s].prob()),
            both.map_or(String::new(), |b| b.to_string()),
        ));
    }
    out
}

fn csv_coherence(report: &CoherenceReport) -> String {
    let mut out = String::from("measure");
    for row in &report.rows {
        out.push(',');
        out.push_str(row.property.label());
    }
    out.push('\n');
    for (name, pick) in [("mnn", 0usize), ("mccs", 1), ("years", 2), ("cells", 3)] {
        out.push_str(name);
        for row in &report.rows {
            out.push(',');
            match pick {
                0 => out.push_str(&trim6_opt(row.mnn)),
                1 => out.push_str(&trim6_opt(row.mccs)),
                2 => out.push_str(&row.year_count.to_string()),
                _ => out.push_str(&row.cell_count.to_string()),
            }
        }
        out.push('\n');
    }
    out
}

fn csv_clusters(assignment: &ClusterAssignment, field: &RainfallField) -> String {
    let mut out = String::from("location_id,lat,lon,label,selected\n");
    for (s, lat, lon, label, selected) in assignment_rows(assignment, field.grid()) {
        out.push_str(&format!(
            "{s},{},{},{label},{selected}\n",
            trim6(lat),
            trim6(lon),
        ));
    }
    out
}

/// Values and bin set of one probability map.
enum MapKind<'a> {
    Agreement(&'a AgreementCounts),
    PexMatch(&'a YearTypeConditionals),
    NexMatch(&'a YearTypeConditionals),
    UpInPex(&'a PhaseExtremeConditionals),
    DownInNex(&'a PhaseExtremeConditionals),
}

impl MapKind<'_> {
    fn values(&self, n: usize) -> Vec<Option<f64>> {
        (0..n)
            .map(|s| match self {
                MapKind::Agreement(a) => a.relative(s),
                MapKind::PexMatch(ytc) => ytc.per_location[s][1][1].prob(),
                MapKind::NexMatch(ytc) => ytc.per_location[s][2][2].prob(),
                MapKind::UpInPex(pe) => pe.up_in_pex[s].prob(),
                MapKind::DownInNex(pe) => pe.down_in_nex[s].prob(),
            })
            .collect()
    }

    fn bins(&self) -> Vec<crate::report::MapBin> {
        match self {
            MapKind::Agreement(_) => agreement_bins(),
            MapKind::PexMatch(_) | MapKind::NexMatch(_) => extreme_match_bins(),
            MapKind::UpInPex(_) | MapKind::DownInNex(_) => phase_match_bins(),
        }
    }
}

fn emit_map(
    sink: &mut ArtifactSink,
    base_name: &str,
    field: &RainfallField,
    map: &MapKind,
    emit: EmitSet,
) -> Result<(), PipelineError> {
    let values = map.values(field.n_locations());
    let bins = map.bins();
    if emit.geojson {
        let mut buf = Vec::new();
        emit_point_geojson(&mut buf, field.grid(), &values, &bins)?;
        sink.write(&format!("{base_name}.geojson"), &buf)?;
    }
    if emit.svg {
        let mut buf = Vec::new();
        emit_grid_svg(&mut buf, field.grid(), &values, &bins)?;
        sink.write(&format!("{base_name}.svg"), &buf)?;
    }
    Ok(())
}

fn suffix(base: &str, smoothed: bool) -> String {
    if smoothed {
        format!("{base}_smoothed")
    } else {
        base.to_string()
    }
}

/// Emits the phase-stage artifacts of one field variant.
fn emit_phase_stage(
    sink: &mut ArtifactSink,
    field: &RainfallField,
    a: &Analyses,
    emit: EmitSet,
    smoothed: bool,
) -> Result<(), PipelineError> {
    if emit.csv {
        if !smoothed {
            sink.write("aimr.csv", csv_aimr(&a.aimr).as_bytes())?;
            sink.write(
                "phase_national.csv",
                csv_phase_national(&a.national_phase).as_bytes(),
            )?;
            sink.write(
                "transitions_national.csv",
                csv_transitions_national(&a.national_trans).as_bytes(),
            )?;
            sink.write(
                "transitions_local.csv",
                csv_transitions_local(&a.local_trans).as_bytes(),
            )?;
        }
        sink.write(
            &format!("{}.csv", suffix("phase_local", smoothed)),
            csv_phase_local(&a.agreement, field).as_bytes(),
        )?;
        let rel: Vec<f64> = (0..field.n_locations())
            .filter_map(|s| a.agreement.relative(s))
            .collect();
        let mut buf = Vec::new();
        emit_histogram_csv(&mut buf, &rel, 0.1)?;
        sink.write(&format!("{}.csv", suffix("pc_histogram", smoothed)), &buf)?;
    }
    emit_map(
        sink,
        &suffix("map_agreement", smoothed),
        field,
        &MapKind::Agreement(&a.agreement),
        emit,
    )
}

/// Emits the extremes-stage artifacts of one field variant.
fn emit_extremes_stage(
    sink: &mut ArtifactSink,
    field: &RainfallField,
    a: &Analyses,
    emit: EmitSet,
    smoothed: bool,
) -> Result<(), PipelineError> {
    if emit.csv {
        if !smoothed {
            sink.write(
                "extremes_years.csv",
                csv_extreme_years(&a.cls, &a.aimr).as_bytes(),
            )?;
            sink.write(
                "extremes_local_locational.csv",
                csv_year_type_conditionals(&a.ytc_locational).as_bytes(),
            )?;
            sink.write(
                "phase_agreement_extremes.csv",
                csv_phase_agreement_extremes(&a.phase_agreement).as_bytes(),
            )?;
        }
        sink.write(
            &format!("{}.csv", suffix("extremes_local_spatial", smoothed)),
            csv_year_type_conditionals(&a.ytc_spatial).as_bytes(),
        )?;
        sink.write(
            &format!("{}.csv", suffix("phase_extremes_local", smoothed)),
            csv_phase_extremes(&a.phase_extremes).as_bytes(),
        )?;
    }
    emit_map(
        sink,
        &suffix("map_pex_match", smoothed),
        field,
        &MapKind::PexMatch(&a.ytc_spatial),
        emit,
    )?;
    emit_map(
        sink,
        &suffix("map_nex_match", smoothed),
        field,
        &MapKind::NexMatch(&a.ytc_spatial),
        emit,
    )?;
    emit_map(
        sink,
        &suffix("map_phase_up_pex", smoothed),
        field,
        &MapKind::UpInPex(&a.phase_extremes),
        emit,
    )?;
    emit_map(
        sink,
        &suffix("map_phase_down_nex", smoothed),
        field,
        &MapKind::DownInNex(&a.phase_extremes),
        emit,
    )
}

fn emit_cluster_stage(
    sink: &mut ArtifactSink,
    field: &RainfallField,
    outcomes: &[KindOutcome],
    emit: EmitSet,
) -> Result<(), PipelineError> {
    for outcome in outcomes {
        let Some(assignment) = &outcome.assignment else {
            continue;
        };
        let base = format!("clusters_{}", outcome.kind.label());
        if emit.csv {
            sink.write(
                &format!("{base}.csv"),
                csv_clusters(assignment, field).as_bytes(),
            )?;
        }
        if emit.geojson {
            let mut buf = Vec::new();
            emit_cluster_geojson(&mut buf, field.grid(), assignment)?;
            sink.write(&format!("{base}.geojson"), &buf)?;
        }
        if emit.svg {
            let mut buf = Vec::new();
            emit_cluster_svg(&mut buf, field.grid(), assignment)?;
            sink.write(&format!("{base}.svg"), &buf)?;
        }
    }
    Ok(())
}

fn entry_json(e: crate::cond::CondEntry) -> serde_json::Value {
    json!({ "events": e.events, "trials": e.trials, "probability": e.prob() })
}

fn summary_json(
    config: &RunConfig,
    field: &RainfallField,
    synth_stats: Option<SynthStats>,
    raw: &Analyses,
    smoothed: Option<&Analyses>,
    outcomes: &[KindOutcome],
) -> serde_json::Value {
    let phase_block = |a: &Analyses| {
        json!({
            "mean_agreement": a.agreement.mean_relative(),
            "histogram": a.agreement.histogram,
            "national_transitions": {
                "up_after_down": entry_json(a.national_trans.up_after_down()),
                "down_after_up": entry_json(a.national_trans.down_after_up()),
                "up_after_up": entry_json(a.national_trans.up_after_up()),
                "down_after_down": entry_json(a.national_trans.down_after_down()),
            },
            "improved_by_current": a.local_trans.improved_by_current_count,
            "improved_by_previous": a.local_trans.improved_by_previous_count,
            "mean_up_after_down": a.local_trans.mean_up_after_down,
            "mean_down_after_up": a.local_trans.mean_down_after_up,
        })
    };
    let type_counts = |types: &[YearType]| {
        let mut counts = BTreeMap::new();
        for label in ["normal", "pex", "nex", "mixed"] {
            counts.insert(label, 0u32);
        }
        for &ty in types {
            *counts.get_mut(year_type_label(ty)).unwrap() += 1;
        }
        json!(counts)
    };
    let extremes_block = |a: &Analyses| {
        json!({
            "spatial_year_counts": type_counts(&a.cls.spatial),
            "locational_year_counts": type_counts(&a.cls.locational),
            "nf_mean": a.cls.nf_mean,
            "nf_sd": a.cls.nf_sd,
            "nd_mean": a.cls.nd_mean,
            "nd_sd": a.cls.nd_sd,
            "mean_nf_by_spatial_type": a.cls.mean_nf_by_type(NationalSeries::Spatial),
            "mean_nf_by_locational_type": a.cls.mean_nf_by_type(NationalSeries::Locational),
            "locations_pex_match_ge_04": a.ytc_spatial.pex_match_ge_04,
            "locations_nex_match_ge_04": a.ytc_spatial.nex_match_ge_04,
            "locations_either_match_ge_04": a.ytc_spatial.either_match_ge_04,
            "locations_pex_in_nex_ge_02": a.ytc_spatial.pex_in_nex_ge_02,
            "locations_nex_in_pex_ge_02": a.ytc_spatial.nex_in_pex_ge_02,
            "locations_up_ge_07": a.phase_extremes.up_ge_07,
            "locations_up_ge_05": a.phase_extremes.up_ge_05,
            "locations_down_ge_07": a.phase_extremes.down_ge_07,
            "locations_down_ge_05": a.phase_extremes.down_ge_05,
            "agreement_by_year_type": {
                "mean_agree_pex": a.phase_agreement.mean_agree_pex,
                "mean_agree_nex": a.phase_agreement.mean_agree_nex,
                "mean_agree_normal": a.phase_agreement.mean_agree_normal,
                "both_inequalities_count": a.phase_agreement.both_inequalities_count,
                "evaluated_count": a.phase_agreement.evaluated_count,
            },
        })
    };
    let coherence_block = |a: &Analyses| {
        let rows: Vec<serde_json::Value> = a
            .coherence
            .rows
            .iter()
            .map(|row| {
                json!({
                    "property": row.property.label(),
                    "mnn": row.mnn,
                    "mccs": row.mccs,
                    "years": row.year_count,
                    "cells": row.cell_count,
                })
            })
            .collect();
        json!(rows)
    };
    let mut clusters = BTreeMap::new();
    for outcome in outcomes {
        let value = match (&outcome.assignment, &outcome.skipped) {
            (Some(a), _) => json!({
                "n_clusters": a.n_clusters,
                "selected": a.selected,
                "cluster_sizes": a.stats.iter().map(|st| st.size).collect::<Vec<_>>(),
                "residual_count": a.residual.len(),
                "skipped": null,
            }),
            (None, Some(reason)) => json!({ "skipped": reason }),
            (None, None) => json!(null),
        };
        clusters.insert(outcome.kind.label(), value);
    }
    let mut warnings: Vec<String> = Vec::new();
    if !raw.cls.degenerate_sigma.is_empty() {
        warnings.push(format!(
            "{} locations have zero rainfall variance and can never be extreme: {:?}",
            raw.cls.degenerate_sigma.len(),
            raw.cls.degenerate_sigma
        ));
    }
    if !raw.cls.mixed_years.is_empty() {
        warnings.push(format!(
            "mixed years (simultaneous flood and drought counts beyond threshold) \
             excluded from conditional tables: {:?}",
            raw.cls.mixed_years
        ));
    }
    if let Some(stats) = synth_stats {
        if stats.clamped_cells > 0 {
            warnings.push(format!(
                "synthetic generator clamped {} of {} cells at zero rainfall",
                stats.clamped_cells, stats.total_cells
            ));
        }
    }
    json!({
        "config": {
            "smooth": config.smooth,
            "tie": config.tie,
            "sigma": config.sigma,
            "k": config.k,
            "seed": config.seed,
            "threshold": config.threshold,
            "mccs_mode": config.mccs_mode,
            "filter_stat": config.filter_stat,
        },
        "field": {
            "n_locations": field.n_locations(),
            "n_years": field.n_years(),
            "first_year": field.first_year(),
            "grid_step": field.grid().grid_step(),
        },
        "phase": phase_block(raw),
        "extremes": extremes_block(raw),
        "coherence": coherence_block(raw),
        "clusters": clusters,
        "smoothed": smoothed.map(|a| json!({
            "phase": phase_block(a),
            "extremes": extremes_block(a),
        })),
        "warnings": warnings,
    })
}

/// Runs the selected stages and writes their artifacts plus `manifest.json`.
pub fn run_stages(config: &RunConfig, stages: StageSet) -> Result<Manifest, PipelineError> {
    let (field, synth_stats) = load_field(&config.input)?;
    let will_cluster = stages.cluster || stages.summary;
    if will_cluster && (config.k < 2 || config.k > field.n_locations()) {
        return Err(PipelineError::Config(format!(
            "k = {} must lie in 2..={}",
            config.k,
            field.n_locations()
        )));
    }
    if !(config.threshold >= 0.0 && config.threshold <= 1.0) {
        return Err(PipelineError::Config(format!(
            "threshold = {} must lie in 0..=1",
            config.threshold
        )));
    }

    let mut sink = ArtifactSink::new(&config.out_dir)?;
    let field_bytes = io::binary_bytes(&field);
    let input_sha = sha256_hex(&field_bytes);
    let hash = config_hash(config, &input_sha);

    if stages.field {
        sink.write("field.bin", &field_bytes)?;
        if config.emit.csv {
            let mut buf = Vec::new();
            io::write_csv(&mut buf, &field).map_err(|e| PipelineError::Output(e.to_string()))?;
            sink.write("field.csv", &buf)?;
        }
    }

    if stages.needs_analysis() {
        let graph = build_neighbor_graph(field.grid());
        let raw = analyze_field(&field, &graph, config)?;
        let smoothed = if config.smooth {
            let smoothed_field = smooth_1hop(&field, &graph);
            let analyses = analyze_field(&smoothed_field, &graph, config)?;
            Some((smoothed_field, analyses))
        } else {
            None
        };

        if stages.phase {
            emit_phase_stage(&mut sink, &field, &raw, config.emit, false)?;
            if let Some((sf, sa)) = &smoothed {
                emit_phase_stage(&mut sink, sf, sa, config.emit, true)?;
            }
        }
        if stages.extremes {
            emit_extremes_stage(&mut sink, &field, &raw, config.emit, false)?;
            if let Some((sf, sa)) = &smoothed {
                emit_extremes_stage(&mut sink, sf, sa, config.emit, true)?;
            }
        }
        if stages.coherence && config.emit.csv {
            sink.write(
                "coherence_table.csv",
                csv_coherence(&raw.coherence).as_bytes(),
            )?;
        }

        let outcomes = if will_cluster {
            // Clustering follows the smoothed field when smoothing is on.
            let basis = smoothed.as_ref().map_or(&raw, |(_, a)| a);
            cluster_all_kinds(basis, config)?
        } else {
            Vec::new()
        };
        if stages.cluster {
            emit_cluster_stage(&mut sink, &field, &outcomes, config.emit)?;
        }
        if stages.summary {
            let summary = summary_json(
                config,
                &field,
                synth_stats,
                &raw,
                smoothed.as_ref().map(|(_, a)| a),
                &outcomes,
            );
            let mut bytes = serde_json::to_vec_pretty(&summary)
                .map_err(|e| PipelineError::Output(e.to_string()))?;
            bytes.push(b'\n');
            sink.write("summary.json", &bytes)?;
        }
    }

    let mut artifacts = sink.entries.clone();
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        format_version: 1,
        config_hash: hash,
        artifacts,
    };
    let mut manifest_bytes =
        serde_json::to_vec_pretty(&manifest).map_err(|e| PipelineError::Output(e.to_string()))?;
    manifest_bytes.push(b'\n');
    let manifest_path = config.out_dir.join("manifest.json");
    fs::write(&manifest_path, &manifest_bytes)
        .map_err(|e| PipelineError::Output(format!("{}: {e}", manifest_path.display())))?;
    Ok(manifest)
}

/// The full pipeline: every stage.
pub fn run_analyze(config: &RunConfig) -> Result<Manifest, PipelineError> {
    run_stages(config, StageSet::all())
}
