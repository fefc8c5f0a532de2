//! Model construction and the analysis pipeline.

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use anosov_lab::contact::{
    negative_region, plane_winding, reeb_anosov_test, sweep_t, synthesize_bicontact, BiContact, DynSign, SweepRow,
    SynthesisOptions,
};
use anosov_lab::flow::FlowOptions;
use anosov_lab::frame::ModelDocument;
use anosov_lab::lattice::AxisRule;
use anosov_lab::liouville::{converse_rate_witness, liouville_verdict, weak_filling_t3};
use anosov_lab::rates::{classify_flow, expansion_rates, Classification, RateMethod, RateOptions, Rates, Verdict};
use anosov_lab::splitting::{compute_splitting, Splitting, SplittingParams};
use anosov_lab::zoo::{self, Family, ZooModel};
use anosov_lab::{LabError, VecField};

use crate::config::{Analysis, ConfigError, ModelSpec, RunConfig};
use crate::report::*;

/// Liouville density is scanned on this many Chebyshev nodes in `t`.
const LIOUVILLE_T_NODES: usize = 21;
const WITNESS_T_NODES: usize = 9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model document {path}: {source}")]
    Read {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Lab(#[from] LabError),
}

pub fn build_model(cfg: &RunConfig) -> Result<ZooModel, ModelError> {
    let n = cfg.resolution;
    let zm = match &cfg.model {
        ModelSpec::Geodesic => zoo::geodesic_frame_model(n)?,
        ModelSpec::Cat { matrix, skew } => zoo::cat_suspension(*matrix, n, *skew)?,
        ModelSpec::T3 { n: tn, m, eps, eps_prime } => zoo::t3_model(*tn, *m, *eps, *eps_prime, n)?,
        ModelSpec::Document { .. } => {
            let path = cfg.document_path().unwrap();
            let s = std::fs::read_to_string(&path).map_err(|source| ModelError::Read { path, source })?;
            zoo::from_document(&ModelDocument::from_json(&s)?, Some([n; 3]))?
        }
    };
    if cfg.perturbation > 0.0 {
        Ok(zoo::perturb(&zm, cfg.perturbation, cfg.seed)?)
    } else {
        Ok(zm)
    }
}

/// Requested analyses, deduplicated, in dependency order.
pub fn ordered(analyses: &[Analysis]) -> Vec<Analysis> {
    Analysis::ALL.iter().copied().filter(|a| analyses.contains(a)).collect()
}

type Cached<T> = Option<Result<T, String>>;

struct Pipeline<'a> {
    cfg: &'a RunConfig,
    zm: &'a ZooModel,
    tol: f64,
    splitting: Cached<(Splitting, Provenance)>,
    rates: Cached<(Rates, Verdict, Provenance)>,
    pair: Cached<(BiContact, PairSource)>,
}

fn method_name(m: RateMethod) -> String {
    match m {
        RateMethod::Bracket => "bracket".into(),
        RateMethod::FiniteTime { h } => format!("finite-time(h={h})"),
    }
}

impl<'a> Pipeline<'a> {
    fn splitting(&mut self) -> Result<&(Splitting, Provenance), String> {
        if self.splitting.is_none() {
            let zm = self.zm;
            let r = match (&zm.truth, self.cfg.ground_truth) {
                (Some(t), true) => Splitting::declared(&zm.model, &zm.x, t.e_s.clone(), t.e_u.clone())
                    .map(|s| (s, Provenance::GroundTruth)),
                _ => {
                    let params = SplittingParams {
                        horizon: self.cfg.horizon.fixed(),
                        ..SplittingParams::default()
                    };
                    compute_splitting(&zm.x, &zm.model, &params).map(|s| (s, Provenance::Computed))
                }
            };
            self.splitting = Some(r.map_err(|e| e.to_string()));
        }
        self.splitting.as_ref().unwrap().as_ref().map_err(|e| format!("splitting unavailable: {e}"))
    }

    fn rates(&mut self) -> Result<&(Rates, Verdict, Provenance), String> {
        if self.rates.is_none() {
            let r = self.compute_rates();
            self.rates = Some(r);
        }
        self.rates.as_ref().unwrap().as_ref().map_err(|e| e.clone())
    }

    fn compute_rates(&mut self) -> Result<(Rates, Verdict, Provenance), String> {
        let zm = self.zm;
        let tol = self.tol;
        if let (Some(t), true) = (&zm.truth, self.cfg.ground_truth) {
            let r = Rates::declared(&zm.model, t.r_s.clone(), t.r_u.clone());
            let v = classify_flow(&r, tol);
            return Ok((r, v, Provenance::GroundTruth));
        }
        let (sp, _) = self.splitting()?;
        let opts = RateOptions::default();
        let r = match expansion_rates(&zm.x, sp, &zm.model, RateMethod::Bracket, &opts) {
            Err(LabError::SplittingResidual { .. }) => {
                expansion_rates(&zm.x, sp, &zm.model, RateMethod::finite_time(), &opts)
            }
            other => other,
        }
        .map_err(|e| format!("rates unavailable: {e}"))?;
        let v = classify_flow(&r, tol);
        Ok((r, v, Provenance::Computed))
    }

    fn pair(&mut self) -> Result<&(BiContact, PairSource), String> {
        if self.pair.is_none() {
            let r = self.compute_pair();
            self.pair = Some(r);
        }
        self.pair.as_ref().unwrap().as_ref().map_err(|e| e.clone())
    }

    /// Synthesized from the splitting when the flow is Anosov, otherwise the
    /// model's declared pair.
    fn compute_pair(&mut self) -> Result<(BiContact, PairSource), String> {
        let zm = self.zm;
        let anosov = self.rates()?.1.classification == Classification::Anosov;
        if anosov {
            let opts = SynthesisOptions {
                perturbation: self.cfg.dual_perturbation,
                tol: self.tol,
                ..SynthesisOptions::default()
            };
            let (sp, _) = self.splitting()?;
            let sp = sp.clone();
            let synthesis_t = self.cfg.synthesis_t;
            let (rates, _, _) = self.rates()?;
            let (bc, approx) = synthesize_bicontact(&sp, rates, synthesis_t, &zm.model, &opts)
                .map_err(|e| format!("synthesis failed: {e}"))?;
            let source = PairSource::Synthesized {
                t: approx.t,
                cond1_margin: approx.cond1_margin,
                cond2_margin: approx.cond2_margin,
                angle_l1: approx.diagnostics.angle_l1,
            };
            return Ok((bc, source));
        }
        match &zm.forms {
            Some(f) => BiContact::from_forms(
                f.alpha_minus.clone(),
                f.alpha_plus.clone(),
                &zm.x,
                &zm.model,
                anosov_lab::contact::Provenance::Supplied,
            )
            .map(|bc| (bc, PairSource::Declared))
            .map_err(|e| e.to_string()),
            None => Err("flow is not classified Anosov and the model declares no bi-contact pair".into()),
        }
    }

    fn run(&mut self, a: Analysis) -> Result<AnalysisResult, String> {
        match a {
            Analysis::Splitting => self.run_splitting(),
            Analysis::Rates => self.run_rates(),
            Analysis::Bicontact => self.run_bicontact(),
            Analysis::Liouville => self.run_liouville(),
            Analysis::Reeb => self.run_reeb(),
            Analysis::Torsion => self.run_torsion(),
            Analysis::NegativeRegion => self.run_negative_region(),
            Analysis::SweepT => self.run_sweep().map(|(s, _)| AnalysisResult::SweepT(s)),
            Analysis::WeakFilling => self.run_weak_filling(),
        }
    }

    fn run_splitting(&mut self) -> Result<AnalysisResult, String> {
        let (sp, prov) = self.splitting()?;
        Ok(AnalysisResult::Splitting(SplittingSummary {
            provenance: *prov,
            horizon: sp.horizon,
            seed_disagreement: sp.seed_disagreement,
            convergence: sp.convergence,
            max_invariance_residual: sp.max_invariance_residual,
            min_independence: sp.min_independence,
            metric: sp.metric_tag.clone(),
        }))
    }

    fn run_rates(&mut self) -> Result<AnalysisResult, String> {
        let (r, v, prov) = self.rates()?;
        let fold = |f: fn(&anosov_lab::rates::RateSample) -> f64, max: bool| {
            r.samples.iter().map(f).fold(if max { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
                if max {
                    a.max(b)
                } else {
                    a.min(b)
                }
            })
        };
        Ok(AnalysisResult::Rates(RatesSummary {
            provenance: *prov,
            method: method_name(r.method),
            metric: r.metric_tag.clone(),
            classification: v.classification,
            projective_margin: v.projective_margin,
            anosov_margin: v.anosov_margin,
            tol: v.tol,
            min_r_u: fold(|s| s.r_u, false),
            max_r_u: fold(|s| s.r_u, true),
            min_r_s: fold(|s| s.r_s, false),
            max_r_s: fold(|s| s.r_s, true),
            weakest_unstable: v.weakest_unstable,
        }))
    }

    fn run_bicontact(&mut self) -> Result<AnalysisResult, String> {
        let tol = self.tol;
        let (bc, source) = self.pair()?;
        Ok(AnalysisResult::Bicontact(BicontactSummary {
            source: source.clone(),
            holds: bc.is_bicontact() && bc.margin_plus() > tol && bc.margin_minus() > tol,
            margin_plus: bc.margin_plus(),
            margin_minus: bc.margin_minus(),
            transversality_margin: bc.transversality_margin,
            support_residual: bc.support_residual,
            tol,
        }))
    }

    fn run_liouville(&mut self) -> Result<AnalysisResult, String> {
        let (zm, tol) = (self.zm, self.tol);
        let bc = self.pair()?.0.clone();
        let (a, b) = liouville_verdict(&bc.alpha_minus, &bc.alpha_plus, &zm.model, LIOUVILLE_T_NODES, tol)
            .map_err(|e| e.to_string())?;
        let holds = a.positive && b.positive;
        let (mut witness, mut witness_error) = (None, None);
        if holds {
            match self.splitting() {
                Ok((sp, _)) => match converse_rate_witness(&bc, sp, &zm.model, WITNESS_T_NODES, tol) {
                    Ok(w) => witness = Some(WitnessSummary::from(&w)),
                    Err(e) => witness_error = Some(e.to_string()),
                },
                Err(e) => witness_error = Some(e),
            }
        }
        Ok(AnalysisResult::Liouville(LiouvilleSummary {
            holds,
            margin: a.min_density.min(b.min_density),
            tol,
            pairs: vec![a, b],
            witness,
            witness_error,
        }))
    }

    fn run_reeb(&mut self) -> Result<AnalysisResult, String> {
        let (zm, tol) = (self.zm, self.tol);
        let sp = self.splitting()?.0.clone();
        let (rates, _, _) = self.rates()?;
        let sp = &sp;
        let v = reeb_anosov_test(sp, rates, &zm.model, tol).map_err(|e| e.to_string())?;
        Ok(AnalysisResult::Reeb(ReebSummary {
            anosov: v.anosov,
            failure_measure: v.failure_measure,
            failure_point: v.failure_point,
            plus_negative_fraction: v.plus.signs.fraction(DynSign::Negative),
            minus_positive_fraction: v.minus.signs.fraction(DynSign::Positive),
            witness_angle_plus: v.plus.witness_angle,
            witness_angle_minus: v.minus.witness_angle,
            normalization_residual: v.plus.reeb.normalization_residual.max(v.minus.reeb.normalization_residual),
            kernel_residual: v.plus.reeb.kernel_residual.max(v.minus.reeb.kernel_residual),
            tol,
        }))
    }

    /// Winding of both planes along the third coordinate axis, relative to
    /// the first two frame vectors.
    fn run_torsion(&mut self) -> Result<AnalysisResult, String> {
        let zm = self.zm;
        let bc = self.pair()?.0.clone();
        let l = zm.model.lattice();
        let samples = (8 * l.n[2]).max(400);
        let base = [l.lo[0], l.lo[1], l.lo[2]];
        let curve: Vec<[f64; 3]> = (0..=samples)
            .map(|k| [base[0], base[1], l.lo[2] + (l.hi[2] - l.lo[2]) * k as f64 / samples as f64])
            .collect();
        let (e1, e2) = (VecField::constant([1.0, 0.0, 0.0]), VecField::constant([0.0, 1.0, 0.0]));
        let plus = plane_winding(&bc.alpha_plus, &curve, &e1, &e2).map_err(|e| format!("xi_+: {e}"))?;
        let minus = plane_winding(&bc.alpha_minus, &curve, &e1, &e2).map_err(|e| format!("xi_-: {e}"))?;
        Ok(AnalysisResult::Torsion(TorsionSummary {
            base_point: base,
            samples: curve.len(),
            closed: l.rules[2] != AxisRule::Open,
            plus,
            minus,
        }))
    }

    fn run_negative_region(&mut self) -> Result<AnalysisResult, String> {
        let (zm, tol) = (self.zm, self.tol);
        let bc = self.pair()?.0.clone();
        let (sp, _) = self.splitting()?;
        let opts = FlowOptions::default();
        let plus = negative_region(&bc.alpha_plus, sp, &zm.model, tol, &opts).map_err(|e| format!("xi_+: {e}"))?;
        let minus = negative_region(&bc.alpha_minus, sp, &zm.model, tol, &opts).map_err(|e| format!("xi_-: {e}"))?;
        Ok(AnalysisResult::NegativeRegion(NegativeRegionSummary { tol, plus, minus }))
    }

    fn run_sweep(&mut self) -> Result<(SweepSummary, Vec<u8>), String> {
        let (zm, tol, cfg) = (self.zm, self.tol, self.cfg);
        let anosov = self.rates()?.1.classification == Classification::Anosov;
        if !anosov && !cfg.force_sweep {
            return Err("flow is not classified Anosov; set force_sweep to run the sweep anyway".into());
        }
        let (sp, _) = self.splitting()?;
        let sp = sp.clone();
        let (rates, _, _) = self.rates()?;
        let opts = SynthesisOptions {
            perturbation: cfg.dual_perturbation,
            tol,
            force: cfg.force_sweep,
            ..SynthesisOptions::default()
        };
        let rows = sweep_t(&sp, rates, &zm.model, &cfg.sweep_t, &opts).map_err(|e| e.to_string())?;
        let summary = summarize_sweep(rows, cfg.dual_perturbation, cfg.force_sweep, tol);
        let csv = sweep_csv(&summary).map_err(|e| format!("csv: {e}"))?;
        Ok((summary, csv))
    }

    fn run_weak_filling(&mut self) -> Result<AnalysisResult, String> {
        let zm = self.zm;
        let (eps, eps_prime) = match zm.family {
            Family::T3 { eps, eps_prime, .. } => (eps, eps_prime),
            _ => return Err(LabError::ModelMismatch("weak filling check needs the T³ family".into()).to_string()),
        };
        let w = weak_filling_t3(zm, eps, eps_prime, self.tol).map_err(|e| e.to_string())?;
        Ok(AnalysisResult::WeakFilling(WeakFillingSummary {
            eps,
            eps_prime,
            holds: w.positive,
            tol: self.tol,
            detail: w,
        }))
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Decreasing down to round-off.
fn decreasing_to_floor(v: &[f64], floor: f64) -> bool {
    v.windows(2).all(|w| w[1] < w[0] || w[1] < floor)
}

pub fn summarize_sweep(rows: Vec<SweepRow>, dual_perturbation: f64, forced: bool, tol: f64) -> SweepSummary {
    let angles: Vec<f64> = rows.iter().map(|r| r.angle_l1).collect();
    let l2u: Vec<f64> = rows.iter().map(|r| r.max_abs_l2_u).collect();
    let l2s: Vec<f64> = rows.iter().map(|r| r.max_abs_l2_s).collect();
    let flagged_t: Vec<f64> = rows
        .iter()
        .filter(|r| r.t >= 2.0 && !(r.max_l3_us < -tol && r.max_l3_su < -tol))
        .map(|r| r.t)
        .collect();
    SweepSummary {
        file: SWEEP_FILE.into(),
        angle_strictly_decreasing: strictly_decreasing(&angles),
        l2_decreasing: decreasing_to_floor(&l2u, 1e-10) && decreasing_to_floor(&l2s, 1e-10),
        l3_negative: flagged_t.is_empty(),
        flagged_t,
        rows,
        dual_perturbation,
        forced,
        tol,
    }
}

#[derive(serde::Serialize)]
struct CsvRow {
    #[serde(rename = "T")]
    t: f64,
    angle_l1: f64,
    max_abs_l2_u: f64,
    max_abs_l2_s: f64,
    max_l3_us: f64,
    max_l3_su: f64,
    margin_plus: f64,
    margin_minus: f64,
}

/// The sweep table with a `#`-prefixed monotonicity summary appended.
pub fn sweep_csv(s: &SweepSummary) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &s.rows {
        w.serialize(CsvRow {
            t: r.t,
            angle_l1: r.angle_l1,
            max_abs_l2_u: r.max_abs_l2_u,
            max_abs_l2_s: r.max_abs_l2_s,
            max_l3_us: r.max_l3_us,
            max_l3_su: r.max_l3_su,
            margin_plus: r.margin_plus,
            margin_minus: r.margin_minus,
        })?;
    }
    let mut out = w.into_inner().map_err(|e| e.into_error())?;
    let yn = |b: bool| if b { "yes" } else { "no" };
    let flagged: Vec<String> = s.flagged_t.iter().map(|t| t.to_string()).collect();
    out.extend_from_slice(
        format!(
            "# angle_l1 strictly decreasing: {}\n# max_abs_l2 decreasing: {}\n# l3 negative for T >= 2: {}{}\n",
            yn(s.angle_strictly_decreasing),
            yn(s.l2_decreasing),
            yn(s.l3_negative),
            if flagged.is_empty() { String::new() } else { format!(" (flagged T = {})", flagged.join(", ")) },
        )
        .as_bytes(),
    );
    Ok(out)
}

pub struct RunOutput {
    pub report: RunReport,
    pub timings: Timings,
    /// Files to write next to the report, by name.
    pub attachments: Vec<(String, Vec<u8>)>,
}

/// Run the requested analyses on an already built model. Failures are
/// recorded per analysis; dependent analyses report the upstream error.
pub fn run_on_model(cfg: &RunConfig, zm: &ZooModel) -> RunOutput {
    let tol = cfg.tol.unwrap_or_else(|| zm.model.default_tol());
    let mut p = Pipeline {
        cfg,
        zm,
        tol,
        splitting: None,
        rates: None,
        pair: None,
    };
    let mut analyses = Vec::new();
    let mut timings = Timings::default();
    let mut attachments = Vec::new();
    for a in ordered(&cfg.analyses) {
        let start = Instant::now();
        let r = if a == Analysis::SweepT {
            p.run_sweep().map(|(s, csv)| {
                attachments.push((SWEEP_FILE.to_string(), csv));
                AnalysisResult::SweepT(s)
            })
        } else {
            p.run(a)
        };
        timings.analyses.push((a, start.elapsed().as_secs_f64()));
        analyses.push(match r {
            Ok(result) => AnalysisEntry {
                analysis: a,
                status: Status::Completed,
                error: None,
                result: Some(result),
            },
            Err(e) => AnalysisEntry {
                analysis: a,
                status: Status::Failed,
                error: Some(e),
                result: None,
            },
        });
    }
    let l = zm.model.lattice();
    let mut files = vec![REPORT_FILE.to_string(), TIMINGS_FILE.to_string()];
    files.extend(attachments.iter().map(|(n, _)| n.clone()));
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        model: ModelInfo {
            name: zm.model.name().to_string(),
            family: zm.family.clone(),
            resolution: l.n,
            tol,
            seed: cfg.seed,
            perturbation: zm.perturbation,
            has_ground_truth: zm.truth.is_some(),
            metric: zm.model.metric().tag().to_string(),
        },
        analyses,
        files,
    };
    RunOutput {
        report,
        timings,
        attachments,
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model construction failed: {0}")]
    Model(#[from] ModelError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Build the model and run the pipeline.
pub fn run_analysis(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let zm = build_model(cfg)?;
    let model_seconds = start.elapsed().as_secs_f64();
    let mut out = run_on_model(cfg, &zm);
    out.timings.model_seconds = model_seconds;
    Ok(out)
}

/// Write the report, timings and attachments into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| RunError::Write { path, source })
    };
    let mut report = serde_json::to_vec_pretty(&out.report).expect("report serializes");
    report.push(b'\n');
    write(REPORT_FILE, &report)?;
    let mut timings = serde_json::to_vec_pretty(&out.timings).expect("timings serialize");
    timings.push(b'\n');
    write(TIMINGS_FILE, &timings)?;
    for (name, bytes) in &out.attachments {
        write(name, bytes)?;
    }
    Ok(())
}
