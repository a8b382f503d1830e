//! Fractional-collision evaluation over the reaction lattice, per-scene
//! quality checks, corpus aggregation and agent-initiated relative risk.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{enumerate_cells, nrm_response, respond, BehaviorModel, CellParams};
use crate::config::EngineConfig;
use crate::conflict::{analyze_scene, ConflictAnalysis, ConflictError};
use crate::crash::{collision_outcome, gt_outcome, CollisionOutcome, CrashConfig, SeverityLevel};
use crate::scene::{resample_scene, ConflictScene, SceneError};

/// Probability mass over the four severity levels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeverityPmf {
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "Lnone")]
    pub lnone: f64,
}

impl SeverityPmf {
    pub fn point(level: SeverityLevel) -> Self {
        let mut p = Self::default();
        *p.get_mut(level) = 1.0;
        p
    }

    pub fn get(&self, level: SeverityLevel) -> f64 {
        match level {
            SeverityLevel::L0 => self.l0,
            SeverityLevel::L1 => self.l1,
            SeverityLevel::L2 => self.l2,
            SeverityLevel::Lnone => self.lnone,
        }
    }

    pub fn get_mut(&mut self, level: SeverityLevel) -> &mut f64 {
        match level {
            SeverityLevel::L0 => &mut self.l0,
            SeverityLevel::L1 => &mut self.l1,
            SeverityLevel::L2 => &mut self.l2,
            SeverityLevel::Lnone => &mut self.lnone,
        }
    }

    pub fn total(&self) -> f64 {
        self.l0 + self.l1 + self.l2 + self.lnone
    }

    /// Probability of any collision.
    pub fn collision_mass(&self) -> f64 {
        self.l0 + self.l1 + self.l2
    }

    /// Most severe level carrying positive mass.
    pub fn worst_supported(&self) -> SeverityLevel {
        SeverityLevel::ALL
            .into_iter()
            .find(|l| self.get(*l) > 0.0)
            .unwrap_or(SeverityLevel::Lnone)
    }
}

/// Outcome of one lattice cell, kept for audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub params: CellParams,
    pub weight: f64,
    pub severity: SeverityLevel,
    pub t_contact: Option<f64>,
    pub delta_v_responder: Option<f64>,
    pub delta_v_initiator: Option<f64>,
    pub contact_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalCollisionResult {
    pub scene_id: String,
    pub pmf: SeverityPmf,
    pub fractional_score: f64,
    pub ledger: Vec<LedgerEntry>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Conflict(#[from] ConflictError),
    #[error("role `{0}` names no track in the scene")]
    UnknownAgent(String),
    #[error("behavior model yields no cells for this scene")]
    EmptyLattice,
}

/// Evaluates every lattice cell for the responder: synthesise the
/// counterfactual, replay the initiator as logged, detect contact and map
/// severity. `p(L)` is the summed weight of cells with severity `L`.
pub fn evaluate_scene(
    scene: &ConflictScene,
    analysis: &ConflictAnalysis,
    model: &BehaviorModel,
    crash: &CrashConfig,
) -> Result<FractionalCollisionResult, EvalError> {
    let roles = &analysis.roles;
    let initiator = scene
        .track(&roles.initiator_id)
        .ok_or_else(|| EvalError::UnknownAgent(roles.initiator_id.clone()))?;
    let responder = scene
        .track(&roles.responder_id)
        .ok_or_else(|| EvalError::UnknownAgent(roles.responder_id.clone()))?;
    let cells = enumerate_cells(
        model,
        analysis.classification.conflict_type,
        responder.agent_class,
    );
    if cells.is_empty() {
        return Err(EvalError::EmptyLattice);
    }
    let ledger: Vec<LedgerEntry> = cells
        .par_iter()
        .map(|cell| {
            let counterfactual = respond(responder, roles.por_t, &cell.params);
            let out = collision_outcome(initiator, &counterfactual, crash);
            LedgerEntry {
                params: cell.params,
                weight: cell.weight,
                severity: out.severity,
                t_contact: out.contact.map(|c| c.t_contact),
                delta_v_initiator: out.delta_v.map(|d| d[0]),
                delta_v_responder: out.delta_v.map(|d| d[1]),
                contact_speed: out.contact_speed,
            }
        })
        .collect();
    let mut pmf = SeverityPmf::default();
    for entry in &ledger {
        *pmf.get_mut(entry.severity) += entry.weight;
    }
    Ok(FractionalCollisionResult {
        scene_id: scene.scene_id.clone(),
        fractional_score: pmf.collision_mass(),
        pmf,
        ledger,
    })
}

/// Outcome when the responder holds its PoR speed.
pub fn nrm_outcome(
    scene: &ConflictScene,
    analysis: &ConflictAnalysis,
    crash: &CrashConfig,
) -> Result<CollisionOutcome, EvalError> {
    let roles = &analysis.roles;
    let initiator = scene
        .track(&roles.initiator_id)
        .ok_or_else(|| EvalError::UnknownAgent(roles.initiator_id.clone()))?;
    let responder = scene
        .track(&roles.responder_id)
        .ok_or_else(|| EvalError::UnknownAgent(roles.responder_id.clone()))?;
    Ok(collision_outcome(
        initiator,
        &nrm_response(responder, roles.por_t),
        crash,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub verdict: Verdict,
    pub evidence: String,
}

/// The three per-scene checks: logged tracks reproduce the annotated
/// collision status; the annotated severity has positive mass; the
/// no-reaction outcome is at least as severe as the annotated one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QaReport {
    pub scene_id: String,
    pub gt_severity: Option<SeverityLevel>,
    pub reproduced: [CheckResult; 3],
}

fn outcome_evidence(o: &CollisionOutcome) -> String {
    match (o.contact, o.delta_v, o.contact_speed) {
        (None, _, _) => "no contact".into(),
        (Some(c), Some(dv), _) => format!(
            "contact at t={:.3} s, delta_v=({:.3}, {:.3}) m/s",
            c.t_contact, dv[0], dv[1]
        ),
        (Some(c), None, speed) => format!(
            "contact at t={:.3} s, contact speed={:.3} m/s",
            c.t_contact,
            speed.unwrap_or(0.0)
        ),
    }
}

pub fn qa_scene(
    scene: &ConflictScene,
    result: &FractionalCollisionResult,
    gt: &CollisionOutcome,
    nrm: &CollisionOutcome,
) -> QaReport {
    let Some(annotated) = scene.annotations.gt_severity else {
        let na = || CheckResult {
            verdict: Verdict::NotApplicable,
            evidence: "scene has no gt_severity annotation".into(),
        };
        return QaReport {
            scene_id: scene.scene_id.clone(),
            gt_severity: None,
            reproduced: [na(), na(), na()],
        };
    };
    let check1 = {
        let ok = annotated.is_collision() == gt.severity.is_collision();
        let evidence = match (ok, annotated.is_collision()) {
            (true, _) => format!("logged tracks give {}: {}", gt.severity, outcome_evidence(gt)),
            (false, true) => "no contact reproduced".to_string(),
            (false, false) => format!("unexpected contact: {}", outcome_evidence(gt)),
        };
        CheckResult {
            verdict: Verdict::from_bool(ok),
            evidence,
        }
    };
    let p = result.pmf.get(annotated);
    let check2 = CheckResult {
        verdict: Verdict::from_bool(p > 0.0),
        evidence: format!("p({annotated}) = {p}"),
    };
    let check3 = CheckResult {
        verdict: Verdict::from_bool(nrm.severity >= annotated),
        evidence: format!(
            "no-reaction outcome {} vs annotated {}: {}",
            nrm.severity,
            annotated,
            outcome_evidence(nrm)
        ),
    };
    QaReport {
        scene_id: scene.scene_id.clone(),
        gt_severity: Some(annotated),
        reproduced: [check1, check2, check3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    Fractional,
    GroundTruth,
    Nrm,
}

impl Framework {
    pub const ALL: [Framework; 3] = [Framework::Fractional, Framework::GroundTruth, Framework::Nrm];

    pub fn as_str(self) -> &'static str {
        match self {
            Framework::Fractional => "fractional",
            Framework::GroundTruth => "ground_truth",
            Framework::Nrm => "nrm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GtSplit {
    Yes,
    No,
    All,
}

impl GtSplit {
    pub const ALL: [GtSplit; 3] = [GtSplit::Yes, GtSplit::No, GtSplit::All];

    pub fn as_str(self) -> &'static str {
        match self {
            GtSplit::Yes => "yes",
            GtSplit::No => "no",
            GtSplit::All => "all",
        }
    }
}

/// One report row. `total` is the collision count `l0 + l1 + l2`; `nc` is
/// reported alongside but not included in it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ReportCells {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub nc: f64,
    pub total: f64,
}

impl ReportCells {
    fn add(&mut self, pmf: &SeverityPmf) {
        self.l0 += pmf.l0;
        self.l1 += pmf.l1;
        self.l2 += pmf.l2;
        self.nc += pmf.lnone;
        self.total = self.l0 + self.l1 + self.l2;
    }

    fn sum(a: &Self, b: &Self) -> Self {
        Self {
            l0: a.l0 + b.l0,
            l1: a.l1 + b.l1,
            l2: a.l2 + b.l2,
            nc: a.nc + b.nc,
            total: a.total + b.total,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.l0, self.l1, self.l2, self.nc, self.total]
    }
}

/// Framework x GT-collision split table with L0/L1/L2/NC/Total columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub rows: BTreeMap<(Framework, GtSplit), ReportCells>,
    pub scene_count: usize,
}

impl CorpusReport {
    pub const COLUMNS: [&'static str; 5] = ["L0", "L1", "L2", "NC", "Total"];

    pub fn row(&self, framework: Framework, split: GtSplit) -> ReportCells {
        self.rows[&(framework, split)]
    }

    pub fn total(&self, framework: Framework) -> f64 {
        self.row(framework, GtSplit::All).total
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("scene ids differ across inputs: {0}")]
    IdMismatch(String),
}

/// Sums per-scene fractional pmfs and counts discrete GT and no-reaction
/// severities, split by whether the scene's GT was a collision. The `all`
/// row is the sum of the `yes` and `no` rows.
pub fn aggregate_corpus(
    results: &BTreeMap<String, SeverityPmf>,
    gt_outcomes: &BTreeMap<String, SeverityLevel>,
    nrm_outcomes: &BTreeMap<String, SeverityLevel>,
) -> Result<CorpusReport, AggregateError> {
    let ids: BTreeSet<&String> = results.keys().collect();
    for (name, other) in [("ground truth", gt_outcomes), ("nrm", nrm_outcomes)] {
        let other_ids: BTreeSet<&String> = other.keys().collect();
        if other_ids != ids {
            let diff: Vec<&str> = ids
                .symmetric_difference(&other_ids)
                .map(|s| s.as_str())
                .collect();
            return Err(AggregateError::IdMismatch(format!(
                "results vs {name}: {}",
                diff.join(", ")
            )));
        }
    }
    let mut rows = BTreeMap::new();
    for fw in Framework::ALL {
        for split in [GtSplit::Yes, GtSplit::No] {
            rows.insert((fw, split), ReportCells::default());
        }
    }
    for (id, pmf) in results {
        let gt = gt_outcomes[id];
        let split = if gt.is_collision() { GtSplit::Yes } else { GtSplit::No };
        let entries = [
            (Framework::Fractional, *pmf),
            (Framework::GroundTruth, SeverityPmf::point(gt)),
            (Framework::Nrm, SeverityPmf::point(nrm_outcomes[id])),
        ];
        for (fw, p) in entries {
            rows.get_mut(&(fw, split)).expect("row exists").add(&p);
        }
    }
    for fw in Framework::ALL {
        let all = ReportCells::sum(&rows[&(fw, GtSplit::Yes)], &rows[&(fw, GtSplit::No)]);
        rows.insert((fw, GtSplit::All), all);
    }
    Ok(CorpusReport {
        rows,
        scene_count: results.len(),
    })
}

/// Comparison of a point outcome against the modeled human distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeRisk {
    pub ads_severity: SeverityLevel,
    pub human: SeverityPmf,
    /// Point mass at `ads_severity` minus the human pmf.
    pub diff: SeverityPmf,
    pub p_human_strictly_better: f64,
    pub p_human_strictly_worse: f64,
    pub p_tie: f64,
}

pub fn relative_risk(human: &SeverityPmf, ads_severity: SeverityLevel) -> RelativeRisk {
    let point = SeverityPmf::point(ads_severity);
    let mut diff = SeverityPmf::default();
    let (mut better, mut worse) = (0.0, 0.0);
    for level in SeverityLevel::ALL {
        *diff.get_mut(level) = point.get(level) - human.get(level);
        if level < ads_severity {
            better += human.get(level);
        } else if level > ads_severity {
            worse += human.get(level);
        }
    }
    RelativeRisk {
        ads_severity,
        human: *human,
        diff,
        p_human_strictly_better: better,
        p_human_strictly_worse: worse,
        p_tie: human.get(ads_severity),
    }
}

/// Everything the engine derives for one scene.
#[derive(Debug, Clone, Serialize)]
pub struct SceneEvaluation {
    pub scene_id: String,
    pub analysis: ConflictAnalysis,
    pub result: FractionalCollisionResult,
    /// Severity of the logged tracks as simulated.
    pub gt_outcome: CollisionOutcome,
    pub nrm_outcome: CollisionOutcome,
    /// Annotated GT severity if present, else the simulated one.
    pub gt_severity: SeverityLevel,
    pub qa: QaReport,
}

/// Resample, analyse, evaluate and check one scene.
pub fn run_scene(
    scene: &ConflictScene,
    model: &BehaviorModel,
    cfg: &EngineConfig,
) -> Result<SceneEvaluation, EvalError> {
    let scene = resample_scene(scene, cfg.dt_s)?;
    let analysis = analyze_scene(&scene, &cfg.conflict)?;
    let result = evaluate_scene(&scene, &analysis, model, &cfg.crash)?;
    let gt = gt_outcome(&scene, &cfg.crash);
    let nrm = nrm_outcome(&scene, &analysis, &cfg.crash)?;
    let qa = qa_scene(&scene, &result, &gt, &nrm);
    Ok(SceneEvaluation {
        scene_id: scene.scene_id.clone(),
        gt_severity: scene.annotations.gt_severity.unwrap_or(gt.severity),
        analysis,
        result,
        gt_outcome: gt,
        nrm_outcome: nrm,
        qa,
    })
}

/// Totals for the aggregate-match experiment plus the binomial spread of
/// the fractional total.
#[derive(Debug, Clone)]
pub struct AggregateMatch {
    pub fractional_total: f64,
    pub gt_total: f64,
    pub nrm_total: f64,
    /// `sqrt(sum p_i (1 - p_i))` over per-scene fractional scores.
    pub binomial_sigma: f64,
    pub evaluations: Vec<SceneEvaluation>,
    pub scenes: Vec<ConflictScene>,
}

/// Generates `n_scenes` synthetic conflicts (cycling through the generator
/// families) whose GT responders are drawn from `model`, evaluates them with
/// the same model and returns the three corpus totals.
pub fn aggregate_match_test(
    model: &BehaviorModel,
    seed: u64,
    n_scenes: usize,
    cfg: &EngineConfig,
) -> Result<AggregateMatch, crate::synth::GenerateError> {
    let scenes = crate::synth::mixed_corpus(model, cfg, seed, n_scenes)?;
    let evaluations: Vec<SceneEvaluation> = scenes
        .par_iter()
        .map(|s| run_scene(s, model, cfg))
        .collect::<Result<_, _>>()
        .map_err(|e| crate::synth::GenerateError::Evaluation(e.to_string()))?;
    let mut out = AggregateMatch {
        fractional_total: 0.0,
        gt_total: 0.0,
        nrm_total: 0.0,
        binomial_sigma: 0.0,
        evaluations: Vec::new(),
        scenes,
    };
    let mut var = 0.0;
    for e in &evaluations {
        let p = e.result.fractional_score;
        out.fractional_total += p;
        var += p * (1.0 - p);
        out.gt_total += f64::from(u8::from(e.gt_severity.is_collision()));
        out.nrm_total += f64::from(u8::from(e.nrm_outcome.severity.is_collision()));
    }
    out.binomial_sigma = var.sqrt();
    out.evaluations = evaluations;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pmf(l0: f64, l1: f64, l2: f64, lnone: f64) -> SeverityPmf {
        SeverityPmf { l0, l1, l2, lnone }
    }

    #[test]
    fn relative_risk_reference_fractions() {
        let cut_in_case = relative_risk(&pmf(0.0, 0.06, 0.38, 0.56), SeverityLevel::L2);
        assert_eq!(cut_in_case.p_human_strictly_better, 0.56);
        assert_relative_eq!(cut_in_case.p_tie, 0.38);
        assert_relative_eq!(cut_in_case.p_human_strictly_worse, 0.06);
        let right_turn_case = relative_risk(&pmf(0.0, 0.085, 0.0, 0.915), SeverityLevel::L1);
        assert_eq!(right_turn_case.p_human_strictly_better, 0.915);
        let none = relative_risk(&pmf(0.1, 0.2, 0.3, 0.4), SeverityLevel::Lnone);
        assert_eq!(none.p_human_strictly_better, 0.0);
        assert_relative_eq!(none.diff.lnone, 0.6);
    }

    #[test]
    fn aggregate_two_scenes() {
        let results = BTreeMap::from([
            ("a".to_string(), pmf(0.0, 0.6, 0.0, 0.4)),
            ("b".to_string(), pmf(0.0, 0.0, 0.1, 0.9)),
        ]);
        let gt = BTreeMap::from([
            ("a".to_string(), SeverityLevel::L1),
            ("b".to_string(), SeverityLevel::Lnone),
        ]);
        let nrm = BTreeMap::from([
            ("a".to_string(), SeverityLevel::L0),
            ("b".to_string(), SeverityLevel::Lnone),
        ]);
        let r = aggregate_corpus(&results, &gt, &nrm).unwrap();
        assert_relative_eq!(r.total(Framework::Fractional), 0.7, epsilon = 1e-12);
        assert_eq!(r.total(Framework::GroundTruth), 1.0);
        assert_eq!(r.total(Framework::Nrm), 1.0);
        assert_eq!(r.row(Framework::Nrm, GtSplit::All).l0, 1.0);
        assert_eq!(r.row(Framework::GroundTruth, GtSplit::No).nc, 1.0);
        assert_relative_eq!(r.row(Framework::Fractional, GtSplit::No).l2, 0.1);
    }

    #[test]
    fn aggregate_empty_and_mismatch() {
        let empty = BTreeMap::new();
        let r = aggregate_corpus(&empty, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(r.rows.len(), 9);
        assert!(r.rows.values().all(|c| c.values() == [0.0; 5]));

        let results = BTreeMap::from([("a".to_string(), pmf(0.0, 0.0, 0.0, 1.0))]);
        let gt = BTreeMap::from([("b".to_string(), SeverityLevel::Lnone)]);
        let nrm = BTreeMap::from([("a".to_string(), SeverityLevel::Lnone)]);
        assert!(matches!(
            aggregate_corpus(&results, &gt, &nrm),
            Err(AggregateError::IdMismatch(_))
        ));
    }

    #[test]
    fn worst_supported_level() {
        assert_eq!(pmf(0.0, 0.2, 0.3, 0.5).worst_supported(), SeverityLevel::L1);
        assert_eq!(pmf(0.0, 0.0, 0.0, 1.0).worst_supported(), SeverityLevel::Lnone);
    }
}
