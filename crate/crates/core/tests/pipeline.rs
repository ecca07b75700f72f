use std::collections::HashSet;

use oodtune::baselines::{
    baseline_loss, select_h, BaselineKind, BaselineSetup, FgsmConfig, GaussianNoiseConfig,
};
use oodtune::bayesopt::{maximize, BoConfig, Dim, ParamSpace};
use oodtune::data::LabeledDataset;
use oodtune::detectors::{score, Detector, Family, ReactParams};
use oodtune::metrics::{auroc, ObjectiveKind};
use oodtune::net::TrainConfig;
use oodtune::seed::stream;
use oodtune::simulation::{generate_splits, SimulationConfig};
use oodtune::synth::GaussianMixture;
use oodtune::tuner::{deploy, select_m, tune, FitAtM, TuneConfig, PARTIAL_PREFIX};

fn corpus() -> LabeledDataset {
    GaussianMixture::new(6, 4.0, 11)
        .sample(&[0, 1, 2, 3, 4], 60, 0)
        .unwrap()
}

fn small_config(seed: u64) -> TuneConfig {
    let mut simulation = SimulationConfig::new(vec![1, 2], 2, 2, seed);
    simulation.tune_pair_size = 20;
    simulation.min_train_accuracy = None;
    TuneConfig {
        family: Family::React,
        objective: ObjectiveKind::Auroc,
        simulation,
        train: TrainConfig {
            hidden_sizes: vec![16],
            epochs: 8,
            ..TrainConfig::default()
        },
        bo: BoConfig {
            n_init: 4,
            n_iter: 3,
            ..BoConfig::default()
        },
    }
}

#[test]
fn tune_is_deterministic_and_consistent() {
    let data = corpus();
    let cfg = small_config(9);
    let dir = tempfile::tempdir().unwrap();
    let a = tune(&data, &cfg, Some(dir.path())).unwrap();
    let b = tune(&data, &cfg, None).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.per_m.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
    assert_eq!(a.final_detector, a.per_m[&a.m_star].phi_star);
    let best = a
        .per_m
        .values()
        .map(|r| r.revalidated_value)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.per_m[&a.m_star].revalidated_value, best);
    for m in [1, 2] {
        assert!(dir
            .path()
            .join(format!("{PARTIAL_PREFIX}{m}.json"))
            .exists());
        assert_eq!(a.per_m[&m].trace.evaluations.len(), 7);
    }
}

#[test]
fn select_m_follows_revalidated_values() {
    let data = corpus();
    let cfg = small_config(2);
    let splits = generate_splits(&data, &cfg.simulation, &cfg.train).unwrap();
    let trace = oodtune::tuner::optimize_phi(
        Family::React,
        &oodtune::tuner::prepare_splits(&splits.iter().filter(|s| s.m == 1).collect::<Vec<_>>())
            .unwrap(),
        &cfg.bo,
        cfg.objective,
    )
    .unwrap()
    .1;
    // Same parameters at every M with inflated fit values: only revalidation decides.
    let phi = Detector::React(ReactParams { tau: 1.0e6 });
    let fits = [1, 2]
        .iter()
        .map(|&m| FitAtM {
            m,
            phi_star: phi,
            fit_value: 10.0 * m as f64,
            trace: trace.clone(),
        })
        .collect();
    let r = select_m(fits, &splits, 77, Family::React, cfg.objective, 2).unwrap();
    let v1 = r.per_m[&1].revalidated_value;
    let v2 = r.per_m[&2].revalidated_value;
    assert_eq!(r.m_star, if v2 > v1 { 2 } else { 1 });
    assert!(r.per_m.values().all(|m| m.revalidation_root == 77));
}

fn baseline_setup(s_pairs: usize) -> BaselineSetup {
    let data = corpus();
    let cfg = small_config(4);
    let model = deploy(&data, &cfg.simulation, &cfg.train).unwrap();
    BaselineSetup::new(
        model.net,
        &model.holdout.train,
        model.holdout.validation,
        GaussianNoiseConfig::default(),
        FgsmConfig::default(),
        s_pairs,
        15,
        ObjectiveKind::Auroc,
        4,
    )
    .unwrap()
}

#[test]
fn baseline_loss_is_mean_over_pairs() {
    let setup = baseline_setup(4);
    let h = setup.grid(BaselineKind::Gaussian)[1];
    let pairs = setup.pairs(h, stream::BASELINE_FIT, 4).unwrap();
    assert_eq!(pairs.len(), 4);
    let det = Detector::React(ReactParams { tau: 2.0 });
    let direct: Vec<f64> = pairs
        .iter()
        .map(|p| {
            let s_id = score(
                &det,
                &setup.net.penultimate(p.id.inputs()).unwrap(),
                &setup.ctx,
            )
            .unwrap();
            let s_ood = score(
                &det,
                &setup.net.penultimate(p.ood.inputs()).unwrap(),
                &setup.ctx,
            )
            .unwrap();
            auroc(&s_id, &s_ood).unwrap()
        })
        .collect();
    let expected = direct.iter().sum::<f64>() / 4.0;
    let got = baseline_loss(&det, &setup.prepare(&pairs).unwrap(), ObjectiveKind::Auroc).unwrap();
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn select_h_is_deterministic_with_disjoint_lineage() {
    let setup = baseline_setup(2);
    let bo = BoConfig {
        n_init: 3,
        n_iter: 2,
        ..BoConfig::default()
    };
    for kind in [BaselineKind::Gaussian, BaselineKind::Adversarial] {
        let grid = setup.grid(kind);
        let a = select_h(Family::React, &setup, &grid, &bo, 6).unwrap();
        let b = select_h(Family::React, &setup, &grid, &bo, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        let best = a
            .rows
            .iter()
            .map(|r| r.revalidated_value)
            .fold(f64::NEG_INFINITY, f64::max);
        let first_best = a.rows.iter().find(|r| r.revalidated_value == best).unwrap();
        assert_eq!(a.best, first_best.hyper);
        for h in grid {
            let fit: HashSet<u64> = setup
                .pairs(h, stream::BASELINE_FIT, 6)
                .unwrap()
                .iter()
                .map(|p| p.lineage.seed)
                .collect();
            let reval: HashSet<u64> = setup
                .pairs(h, stream::BASELINE_REVALIDATE, 6)
                .unwrap()
                .iter()
                .map(|p| p.lineage.seed)
                .collect();
            assert!(fit.is_disjoint(&reval));
        }
    }
}

#[test]
fn bayesopt_trace_is_well_formed() {
    let space = ParamSpace::new(vec![
        Dim::continuous("x", -2.0, 3.0),
        Dim::integer("k", 1.0, 20.0),
    ])
    .unwrap();
    let cfg = BoConfig {
        n_init: 5,
        n_iter: 10,
        seed: 13,
        ..BoConfig::default()
    };
    let t = maximize(
        |x| Ok(-(x[0] - 1.0).powi(2) - (x[1] - 7.0).abs()),
        &space,
        &cfg,
    )
    .unwrap();
    assert_eq!(t.evaluations.len(), 15);
    assert!(t
        .evaluations
        .iter()
        .all(|e| space.contains(&e.point) && e.point[1].fract() == 0.0));
    assert!(t.best_so_far.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*t.best_so_far.last().unwrap(), t.best_value);
    let again = maximize(
        |x| Ok(-(x[0] - 1.0).powi(2) - (x[1] - 7.0).abs()),
        &space,
        &cfg,
    )
    .unwrap();
    assert_eq!(t, again);
}
