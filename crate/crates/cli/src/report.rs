//! Report types. The JSON written from [`RunReport`] is deterministic for a
//! given config; wall-clock timings live in [`Timings`] and a separate file.

use serde::Serialize;

use anosov_lab::contact::{RegionReport, SweepRow, Winding};
use anosov_lab::liouville::{LiouvilleReport, RateWitness, WeakFilling};
use anosov_lab::rates::Classification;
use anosov_lab::zoo::Family;
use anosov_lab::Point;

use crate::config::Analysis;

pub const SCHEMA_VERSION: u32 = 1;

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const SWEEP_FILE: &str = "sweep_T.csv";

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub model: ModelInfo,
    pub analyses: Vec<AnalysisEntry>,
    /// Files written next to the report, relative to the output directory.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn all_completed(&self) -> bool {
        self.analyses.iter().all(|a| a.status == Status::Completed)
    }

    pub fn entry(&self, a: Analysis) -> Option<&AnalysisEntry> {
        self.analyses.iter().find(|e| e.analysis == a)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub family: Family,
    pub resolution: [usize; 3],
    pub tol: f64,
    pub seed: u64,
    /// `(amplitude, seed)` of the flow perturbation, when one was applied.
    pub perturbation: Option<(f64, u64)>,
    pub has_ground_truth: bool,
    pub metric: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisEntry {
    pub analysis: Analysis,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<AnalysisResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GroundTruth,
    Computed,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalysisResult {
    Splitting(SplittingSummary),
    Rates(RatesSummary),
    Bicontact(BicontactSummary),
    Liouville(LiouvilleSummary),
    Reeb(ReebSummary),
    Torsion(TorsionSummary),
    NegativeRegion(NegativeRegionSummary),
    #[serde(rename = "sweep-T")]
    SweepT(SweepSummary),
    WeakFilling(WeakFillingSummary),
}

#[derive(Debug, Clone, Serialize)]
pub struct SplittingSummary {
    pub provenance: Provenance,
    pub horizon: f64,
    pub seed_disagreement: f64,
    pub convergence: f64,
    pub max_invariance_residual: f64,
    pub min_independence: f64,
    pub metric: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesSummary {
    pub provenance: Provenance,
    pub method: String,
    pub metric: String,
    pub classification: Classification,
    /// `inf (r_u - r_s)`.
    pub projective_margin: f64,
    /// `min(inf r_u, inf -r_s)`.
    pub anosov_margin: f64,
    pub tol: f64,
    pub min_r_u: f64,
    pub max_r_u: f64,
    pub min_r_s: f64,
    pub max_r_s: f64,
    pub weakest_unstable: Point,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum PairSource {
    Synthesized {
        #[serde(rename = "T")]
        t: f64,
        cond1_margin: f64,
        cond2_margin: f64,
        angle_l1: f64,
    },
    Declared,
}

#[derive(Debug, Clone, Serialize)]
pub struct BicontactSummary {
    pub source: PairSource,
    pub holds: bool,
    /// `min α_+∧dα_+`.
    pub margin_plus: f64,
    /// `min -α_-∧dα_-`.
    pub margin_minus: f64,
    pub transversality_margin: f64,
    pub support_residual: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleSummary {
    /// Both pairs positive.
    pub holds: bool,
    pub margin: f64,
    pub tol: f64,
    pub pairs: Vec<LiouvilleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessSummary {
    pub min_r_u: f64,
    pub max_r_s: f64,
    pub strict: bool,
    pub flipped: [bool; 2],
    pub samples: usize,
}

impl From<&RateWitness> for WitnessSummary {
    fn from(w: &RateWitness) -> Self {
        WitnessSummary {
            min_r_u: w.min_r_u,
            max_r_s: w.max_r_s,
            strict: w.strict,
            flipped: w.flipped,
            samples: w.points.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReebSummary {
    /// Reeb field of `α_+` negative and of `α_-` positive everywhere.
    pub anosov: bool,
    /// Volume fraction where the `α_+` Reeb field is not negative.
    pub failure_measure: f64,
    pub failure_point: Option<Point>,
    pub plus_negative_fraction: f64,
    pub minus_positive_fraction: f64,
    pub witness_angle_plus: f64,
    pub witness_angle_minus: f64,
    pub normalization_residual: f64,
    pub kernel_residual: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TorsionSummary {
    /// Start of the loop along the third axis.
    pub base_point: Point,
    pub samples: usize,
    /// Whether the third axis closes up (periodic or monodromy).
    pub closed: bool,
    pub plus: Winding,
    pub minus: Winding,
}

#[derive(Debug, Clone, Serialize)]
pub struct NegativeRegionSummary {
    pub tol: f64,
    pub plus: RegionReport,
    pub minus: RegionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub file: String,
    pub rows: Vec<SweepRow>,
    pub dual_perturbation: f64,
    pub forced: bool,
    pub angle_strictly_decreasing: bool,
    pub l2_decreasing: bool,
    /// Both cross diagnostics below `-tol` for every `T ≥ 2`.
    pub l3_negative: bool,
    /// Sweep times whose cross diagnostics are not below `-tol`.
    pub flagged_t: Vec<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakFillingSummary {
    pub eps: f64,
    pub eps_prime: f64,
    pub holds: bool,
    pub tol: f64,
    #[serde(flatten)]
    pub detail: WeakFilling,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub model_seconds: f64,
    pub analyses: Vec<(Analysis, f64)>,
}
