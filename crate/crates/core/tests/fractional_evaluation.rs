mod common;

use common::{cruise, scene};
use fraccol_core::behavior::{enumerate_cells, load_behavior_model, respond, BehaviorModel};
use fraccol_core::crash::collision_outcome;
use fraccol_core::risk::{aggregate_match_test, nrm_outcome, run_scene};
use fraccol_core::synth::{GtMode, SyntheticScenarioSpec};
use fraccol_core::{
    analyze_scene, evaluate_scene, generate_corpus, AgentTrack, CellParams, ConflictScene,
    ConflictType, EngineConfig, ReactionParams, ScenarioFamily, SeverityLevel,
};

const DT: f64 = 0.05;

/// Follower at 15 m/s behind a stationary vehicle 44 m ahead (bumper gap
/// 40 m), PoR annotated at 0.5 s.
fn stopped_lead_scene() -> ConflictScene {
    let mut s = scene(
        "stopped-lead",
        cruise("follower", 0.0, 0.0, 0.0, 15.0, DT, 8.0),
        cruise("lead", 44.0, 0.0, 0.0, 0.0, DT, 8.0),
    );
    s.annotations.conflict_type = Some(ConflictType::RearEndLeadBrake);
    s.annotations.initiator_id = Some("lead".into());
    s.annotations.por_t = Some(0.5);
    s
}

fn joint_model(rows: &str) -> BehaviorModel {
    let doc = format!("[default]\njoint_mode = \"joint_table\"\njoint_table = {rows}\n");
    load_behavior_model(doc.as_bytes()).unwrap()
}

#[test]
fn three_cells_give_the_weighted_pmf() {
    // Near-instant braking at -5 from 15 m/s needs 22.5 m. Onset at 1.0 s
    // leaves 25 m (no contact), at 1.2 s 22 m (contact at ~2.2 m/s, L2), at
    // 2.5 s 2.5 m (contact at ~14 m/s, L1).
    let model = joint_model("[[0.5, -1000.0, -5.0, 0.5], [0.7, -1000.0, -5.0, 0.3], [2.0, -1000.0, -5.0, 0.2]]");
    let cfg = EngineConfig::default();
    let s = stopped_lead_scene();
    let analysis = analyze_scene(&s, &cfg.conflict).unwrap();
    let r = evaluate_scene(&s, &analysis, &model, &cfg.crash).unwrap();
    let sev: Vec<_> = r.ledger.iter().map(|e| e.severity).collect();
    assert_eq!(sev, [SeverityLevel::Lnone, SeverityLevel::L2, SeverityLevel::L1]);
    assert_eq!(r.pmf.lnone, 0.5);
    assert_eq!(r.pmf.l2, 0.3);
    assert_eq!(r.pmf.l1, 0.2);
    assert_eq!(r.pmf.l0, 0.0);
    assert!((r.fractional_score - 0.5).abs() < 1e-12);
    assert!((r.pmf.total() - 1.0).abs() < 1e-9);
}

#[test]
fn single_avoiding_cell_scores_zero() {
    let model = BehaviorModel::single_cell(ReactionParams {
        hrt: 0.2,
        jerk: -10.0,
        a_ss: -7.0,
    });
    let cfg = EngineConfig::default();
    let s = stopped_lead_scene();
    let analysis = analyze_scene(&s, &cfg.conflict).unwrap();
    let r = evaluate_scene(&s, &analysis, &model, &cfg.crash).unwrap();
    assert_eq!(r.pmf.lnone, 1.0);
    assert_eq!(r.fractional_score, 0.0);
}

#[test]
fn pure_nonreact_model_reproduces_nrm() {
    let doc = "[default]\nhrt_bin_edges_s = [0.0, 1.0]\nhrt_weights = [1.0]\njerk_mps3 = [-10.0]\n\
               jerk_weights = [1.0]\na_ss_mps2 = [-5.0]\na_ss_weights = [1.0]\np_nonreact = 1.0\n";
    let model = load_behavior_model(doc.as_bytes()).unwrap();
    let cfg = EngineConfig::default();
    let corpus = fraccol_core::synth::mixed_corpus(&model, &cfg, 5, 16).unwrap();
    for s in &corpus {
        let analysis = analyze_scene(s, &cfg.conflict).unwrap();
        let r = evaluate_scene(s, &analysis, &model, &cfg.crash).unwrap();
        let nrm = nrm_outcome(s, &analysis, &cfg.crash).unwrap();
        assert_eq!(r.ledger.len(), 1);
        assert_eq!(r.pmf.get(nrm.severity), 1.0, "{}", s.scene_id);
    }
}

#[test]
fn aggregate_match_degenerate_cases() {
    let cfg = EngineConfig::default();
    let model = BehaviorModel::placeholder();
    let empty = aggregate_match_test(&model, 1, 0, &cfg).unwrap();
    assert_eq!((empty.fractional_total, empty.gt_total, empty.nrm_total), (0.0, 0.0, 0.0));

    let single = BehaviorModel::single_cell(ReactionParams {
        hrt: 1.0,
        jerk: -10.0,
        a_ss: -5.0,
    });
    let r = aggregate_match_test(&single, 9, 40, &cfg).unwrap();
    assert_eq!(r.fractional_total, r.gt_total);
    assert!(r.nrm_total >= r.gt_total);
}

fn rear_end_corpus(model: &BehaviorModel, seed: u64, n: usize) -> Vec<ConflictScene> {
    let spec = SyntheticScenarioSpec {
        gt_mode: GtMode::Nonreactive,
        ..SyntheticScenarioSpec::for_family(ScenarioFamily::RearEndLeadBrake)
    };
    generate_corpus(&spec, model, &EngineConfig::default(), seed, n).unwrap()
}

fn responder_and_initiator(s: &ConflictScene) -> (&AgentTrack, &AgentTrack, f64) {
    let ann = &s.annotations;
    (
        s.track(ann.responder_id.as_deref().unwrap()).unwrap(),
        s.track(ann.initiator_id.as_deref().unwrap()).unwrap(),
        ann.por_t.unwrap(),
    )
}

/// Default HRT bins with a single jerk/a_ss pair; the engine's point-mass
/// score is compared with a sweep over each bin at 1 ms spacing.
#[test]
fn dense_hrt_sweep_oracle() {
    let toml = fraccol_core::behavior::DEFAULT_MODEL_TOML
        .replace("jerk_mps3 = [-5.0, -10.0, -15.0]", "jerk_mps3 = [-10.0]")
        .replace("jerk_weights = [0.25, 0.5, 0.25]", "jerk_weights = [1.0]")
        .replace("a_ss_mps2 = [-3.0, -5.0, -7.0]", "a_ss_mps2 = [-5.0]")
        .replace("a_ss_weights = [0.2, 0.5, 0.3]", "a_ss_weights = [1.0]");
    let model = load_behavior_model(toml.as_bytes()).unwrap();
    let cfg = EngineConfig::default();
    let cells = enumerate_cells(&model, ConflictType::RearEndLeadBrake, fraccol_core::AgentClass::PassengerVehicle);
    assert_eq!(cells.len(), 30);
    let max_bin = cells.iter().map(|c| c.weight).fold(0.0, f64::max);
    for s in rear_end_corpus(&model, 21, 5) {
        let eval = run_scene(&s, &model, &cfg).unwrap();
        let (responder, initiator, por) = responder_and_initiator(&s);
        let mut oracle = 0.0;
        for (k, cell) in cells.iter().enumerate() {
            let lo = 0.1 * k as f64;
            let steps = 100;
            let hits = (0..steps)
                .filter(|i| {
                    let hrt = lo + (*i as f64 + 0.5) * 0.001;
                    let p = CellParams::React(ReactionParams { hrt, jerk: -10.0, a_ss: -5.0 });
                    collision_outcome(initiator, &respond(responder, por, &p), &cfg.crash)
                        .severity
                        .is_collision()
                })
                .count();
            oracle += cell.weight * hits as f64 / steps as f64;
        }
        let score = eval.result.fractional_score;
        assert!((score - oracle).abs() <= max_bin, "{}: {score} vs {oracle}", s.scene_id);
    }
}

#[test]
fn halving_hrt_bins_moves_mass_only_where_severity_changes() {
    let weights = [0.05, 0.15, 0.3, 0.25, 0.15, 0.1];
    let coarse_edges: Vec<f64> = (0..=6).map(|k| 0.5 * k as f64).collect();
    let fine_edges: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    let fine_weights: Vec<f64> = weights.iter().flat_map(|w| [w / 2.0, w / 2.0]).collect();
    let doc = |edges: &[f64], w: &[f64]| {
        format!(
            "[default]\nhrt_bin_edges_s = {edges:?}\nhrt_weights = {w:?}\njerk_mps3 = [-10.0]\n\
             jerk_weights = [1.0]\na_ss_mps2 = [-5.0]\na_ss_weights = [1.0]\n"
        )
    };
    let coarse = load_behavior_model(doc(&coarse_edges, &weights).as_bytes()).unwrap();
    let fine = load_behavior_model(doc(&fine_edges, &fine_weights).as_bytes()).unwrap();
    let cfg = EngineConfig::default();
    for s in rear_end_corpus(&coarse, 33, 6) {
        let c = run_scene(&s, &coarse, &cfg).unwrap().result;
        let f = run_scene(&s, &fine, &cfg).unwrap().result;
        let changed: f64 = c
            .ledger
            .iter()
            .enumerate()
            .filter(|(k, e)| f.ledger[2 * k].severity != e.severity || f.ledger[2 * k + 1].severity != e.severity)
            .map(|(_, e)| e.weight)
            .sum();
        for level in SeverityLevel::ALL {
            let d = (c.pmf.get(level) - f.pmf.get(level)).abs();
            assert!(d <= changed + 1e-12, "{} {level}: {d} > {changed}", s.scene_id);
        }
    }
}

#[test]
fn gt_level_is_in_the_support_when_check2_passes() {
    let model = BehaviorModel::placeholder();
    let cfg = EngineConfig::default();
    for s in fraccol_core::synth::mixed_corpus(&model, &cfg, 17, 24).unwrap() {
        let e = run_scene(&s, &model, &cfg).unwrap();
        let pmf = &e.result.pmf;
        assert!((pmf.total() - 1.0).abs() < 1e-9);
        assert!((e.result.fractional_score - (1.0 - pmf.lnone)).abs() < 1e-12);
        if pmf.get(e.gt_severity) > 0.0 {
            assert!(pmf.worst_supported() >= e.gt_severity);
        }
    }
}
