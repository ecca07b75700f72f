use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::{Deserialize, Serialize};

use oodtune::baselines::{select_h, BaselineKind, BaselineSelection, BaselineSetup};
use oodtune::data::{read_interchange, write_interchange, LabeledDataset};
use oodtune::detectors::Detector;
use oodtune::net::{load_net, save_net};
use oodtune::seed::{self, stream};
use oodtune::simulation::{generate_splits, load_splits, save_splits, Holdout};
use oodtune::synth::{CentreLayout, GaussianMixture};
use oodtune::tuner::{
    ablate_m, deploy, sensitivity, tune_on_splits, BoProcedure, DeployedModel, TuneConfig,
    TuneResult, TuningProcedure, TuningSet,
};

use crate::config::{Method, RunConfig, SensitivityConfig};
use crate::exit::{Failure, OrStage};
use crate::report;

pub const MODEL_FILE: &str = "model.json";
pub const NET_FILE: &str = "net.json";
pub const REFERENCE_FILE: &str = "reference.oodf";
pub const VALIDATION_FILE: &str = "validation.oodf";
pub const DETECTOR_FILE: &str = "detector.json";
pub const RESULT_FILE: &str = "result.json";
pub const SUMMARY_FILE: &str = "summary.txt";

type Outcome<T = ()> = Result<T, Failure>;

pub fn read_dataset(path: &Path) -> Outcome<LabeledDataset> {
    read_interchange(path)
        .and_then(|c| c.into_dataset())
        .or_io(|| format!("loading dataset {}", path.display()))
}

fn write_dataset(path: &Path, data: &LabeledDataset) -> Outcome {
    write_interchange(path, &data.clone().into()).or_io(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).or_io(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).or_pipeline("serializing output")?;
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).or_io(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).or_io(|| format!("parsing {}", path.display()))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).or_io(|| format!("creating {}", dir.display()))
}

fn read_corpus(cfg: &RunConfig) -> Outcome<LabeledDataset> {
    read_dataset(&cfg.corpus)
}

fn knn_seed(master: u64) -> u64 {
    seed::derive(master, &[stream::FULL_NET, stream::KNN_SUBSAMPLE])
}

/// Files describing a deployed model, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub net: PathBuf,
    pub reference: PathBuf,
    pub validation: PathBuf,
    pub knn_seed: u64,
}

fn save_model(dir: &Path, model: &DeployedModel, knn_seed: u64) -> Outcome {
    create_dir(dir)?;
    save_net(&model.net, &dir.join(NET_FILE))
        .or_io(|| format!("writing net to {}", dir.display()))?;
    write_dataset(&dir.join(REFERENCE_FILE), &model.holdout.train)?;
    write_dataset(&dir.join(VALIDATION_FILE), &model.holdout.validation)?;
    let manifest = ModelManifest {
        net: NET_FILE.into(),
        reference: REFERENCE_FILE.into(),
        validation: VALIDATION_FILE.into(),
        knn_seed,
    };
    write_json(&dir.join(MODEL_FILE), &manifest)
}

pub fn load_model(path: &Path) -> Outcome<DeployedModel> {
    let manifest: ModelManifest = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let net_path = base.join(&manifest.net);
    let net = load_net(&net_path).or_io(|| format!("loading net {}", net_path.display()))?;
    let holdout = Holdout {
        train: read_dataset(&base.join(&manifest.reference))?,
        validation: read_dataset(&base.join(&manifest.validation))?,
    };
    DeployedModel::new(net, holdout, manifest.knn_seed)
        .or_io(|| format!("building model from {}", path.display()))
}

fn deploy_from(cfg: &RunConfig, corpus: &LabeledDataset) -> Outcome<DeployedModel> {
    deploy(corpus, &cfg.simulation, &cfg.train).or_pipeline("training the full network")
}

fn tune_config(cfg: &RunConfig) -> TuneConfig {
    TuneConfig {
        family: cfg.family,
        objective: cfg.objective,
        simulation: cfg.simulation.clone(),
        train: cfg.train.clone(),
        bo: cfg.bo.clone(),
    }
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub classes: usize,
    pub first_class: i32,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub spread: f64,
    pub layout: CentreLayout,
    pub stream: u64,
    pub seed: u64,
}

pub fn gen_synth(a: &SynthArgs) -> Outcome {
    if a.classes == 0 || a.dim == 0 || a.per_class == 0 {
        return Err(Failure::usage(anyhow!(
            "--classes, --dim and --per-class must be positive"
        )));
    }
    if !(a.separation >= 0.0 && a.spread > 0.0) {
        return Err(Failure::usage(anyhow!(
            "--separation must be >= 0 and --spread > 0"
        )));
    }
    let mixture = GaussianMixture {
        dim: a.dim,
        separation: a.separation,
        spread: a.spread,
        layout: a.layout,
        seed: a.seed,
    };
    let classes: Vec<i32> = (0..a.classes as i32).map(|c| a.first_class + c).collect();
    let data = mixture
        .sample(&classes, a.per_class, a.stream)
        .or_pipeline("sampling mixture")?;
    write_dataset(&a.out, &data)?;
    for (class, rows) in data.indices_by_class() {
        println!("class {class}: {}", rows.len());
    }
    println!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

pub fn train_net(cfg: &RunConfig, out: &Path) -> Outcome {
    let corpus = read_corpus(cfg)?;
    let model = deploy_from(cfg, &corpus)?;
    save_model(out, &model, knn_seed(cfg.seed))?;
    let train_acc = model
        .net
        .accuracy(&model.holdout.train)
        .or_pipeline("scoring training rows")?;
    let val_acc = model
        .net
        .accuracy(&model.holdout.validation)
        .or_pipeline("scoring validation rows")?;
    println!("train accuracy {train_acc:.4}, validation accuracy {val_acc:.4}");
    println!("model written to {}", out.join(MODEL_FILE).display());
    Ok(())
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Outcome {
    let corpus = read_corpus(cfg)?;
    let splits =
        generate_splits(&corpus, &cfg.simulation, &cfg.train).or_pipeline("generating splits")?;
    save_splits(out, &splits, &cfg.simulation, &cfg.train)
        .or_io(|| format!("writing splits to {}", out.display()))?;
    for s in &splits {
        println!(
            "M={} i={} ood_classes={:?} train_accuracy={:.4} pairs={}x{}",
            s.m,
            s.variant_index,
            s.ood_classes,
            s.train_accuracy,
            s.tune_pairs.len(),
            s.pair_size
        );
    }
    Ok(())
}

pub fn tune(cfg: &RunConfig, out: &Path, splits_dir: Option<&Path>) -> Outcome {
    create_dir(out)?;
    let corpus = read_corpus(cfg)?;
    match cfg.method {
        Method::Ours => tune_ours(cfg, &corpus, out, splits_dir),
        Method::Gauss => tune_baseline(cfg, &corpus, out, BaselineKind::Gaussian),
        Method::Adv => tune_baseline(cfg, &corpus, out, BaselineKind::Adversarial),
    }
}

fn tune_ours(
    cfg: &RunConfig,
    corpus: &LabeledDataset,
    out: &Path,
    splits_dir: Option<&Path>,
) -> Outcome {
    let mut tcfg = tune_config(cfg);
    let splits = match splits_dir {
        Some(dir) => {
            let (splits, sim, train) =
                load_splits(dir).or_io(|| format!("loading splits from {}", dir.display()))?;
            tcfg.simulation = sim;
            tcfg.train = train;
            splits
        }
        None => generate_splits(corpus, &tcfg.simulation, &tcfg.train)
            .or_pipeline("generating splits")?,
    };
    let result = tune_on_splits(&splits, &tcfg, Some(out)).or_pipeline("tuning")?;
    write_text(
        &out.join(RESULT_FILE),
        &result.to_json().or_pipeline("serializing result")?,
    )?;
    write_json(&out.join(DETECTOR_FILE), &result.final_detector)?;
    write_text(&out.join(SUMMARY_FILE), &summary_ours(&result))?;
    let model =
        deploy(corpus, &tcfg.simulation, &tcfg.train).or_pipeline("training the full network")?;
    save_model(out, &model, knn_seed(tcfg.simulation.seed))?;
    print!("{}", summary_ours(&result));
    Ok(())
}

fn tune_baseline(
    cfg: &RunConfig,
    corpus: &LabeledDataset,
    out: &Path,
    kind: BaselineKind,
) -> Outcome {
    let model = deploy_from(cfg, corpus)?;
    save_model(out, &model, knn_seed(cfg.seed))?;
    let DeployedModel { net, holdout, .. } = model;
    let setup = BaselineSetup::new(
        net,
        &holdout.train,
        holdout.validation,
        cfg.noise.clone(),
        cfg.fgsm.clone(),
        cfg.baseline.s_pairs,
        cfg.baseline.pair_size,
        cfg.objective,
        cfg.seed,
    )
    .or_pipeline("preparing baseline")?;
    let grid = setup.grid(kind);
    let selection = select_h(cfg.family, &setup, &grid, &cfg.bo, cfg.seed)
        .or_pipeline("selecting baseline h")?;
    write_json(&out.join(RESULT_FILE), &selection)?;
    write_json(&out.join(DETECTOR_FILE), &selection.detector)?;
    write_text(&out.join(SUMMARY_FILE), &summary_baseline(&selection))?;
    print!("{}", summary_baseline(&selection));
    Ok(())
}

fn detector_text(d: &Detector) -> String {
    serde_json::to_string(d).unwrap_or_else(|_| format!("{d:?}"))
}

pub fn summary_ours(r: &TuneResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "family {} objective {:?} seed {}",
        r.family.name(),
        r.objective,
        r.master_seed
    );
    for (m, mr) in &r.per_m {
        let _ = writeln!(
            s,
            "M={m} fit={:.6} revalidated={:.6} detector={}",
            mr.fit_value,
            mr.revalidated_value,
            detector_text(&mr.phi_star)
        );
    }
    let _ = writeln!(
        s,
        "selected M*={} detector={}",
        r.m_star,
        detector_text(&r.final_detector)
    );
    s
}

pub fn summary_baseline(sel: &BaselineSelection) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "family {} objective {:?}",
        sel.family.name(),
        sel.objective
    );
    for row in &sel.rows {
        let _ = writeln!(
            s,
            "{:?} h={} fit={:.6} revalidated={:.6} detector={}",
            row.hyper.kind,
            row.hyper.h,
            row.fit_value,
            row.revalidated_value,
            detector_text(&row.detector)
        );
    }
    let _ = writeln!(
        s,
        "selected h={} detector={}",
        sel.best.h,
        detector_text(&sel.detector)
    );
    s
}

pub fn evaluate(
    model: &Path,
    detector: &Path,
    id: &Path,
    oods: &[PathBuf],
    out: Option<&Path>,
) -> Outcome {
    let model = load_model(model)?;
    let detector: Detector = read_json(detector)?;
    detector
        .validate()
        .or_io(|| "detector file holds invalid parameters".into())?;
    let id_data = read_dataset(id)?;
    let mut rows = Vec::with_capacity(oods.len());
    for path in oods {
        let ood = read_dataset(path)?;
        let e = model
            .evaluate(&detector, &id_data, &ood)
            .or_pipeline("evaluating")?;
        rows.push(report::EvalRow {
            ood_file: path.display().to_string(),
            auroc: e.auroc,
            fpr95: e.fpr95,
        });
    }
    emit(out, report::eval_csv(&rows).or_pipeline("formatting CSV")?)
}

fn emit(out: Option<&Path>, text: String) -> Outcome {
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn named(paths: &[PathBuf]) -> Outcome<Vec<(String, LabeledDataset)>> {
    paths
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            Ok((name, read_dataset(p)?))
        })
        .collect()
}

pub fn ablate(
    cfg: &RunConfig,
    result: Option<&Path>,
    id_test: &Path,
    oods: &[PathBuf],
    out: Option<&Path>,
) -> Outcome {
    let corpus = read_corpus(cfg)?;
    let result: TuneResult = match result {
        Some(p) => read_json(p)?,
        None => {
            let splits = generate_splits(&corpus, &cfg.simulation, &cfg.train)
                .or_pipeline("generating splits")?;
            tune_on_splits(&splits, &tune_config(cfg), None).or_pipeline("tuning")?
        }
    };
    let model = deploy_from(cfg, &corpus)?;
    let id = read_dataset(id_test)?;
    let sets = named(oods)?;
    let table = ablate_m(&result, &model, &id, &sets).or_pipeline("ablation")?;
    emit(
        out,
        report::ablation_csv(&table).or_pipeline("formatting CSV")?,
    )
}

pub fn run_sensitivity(cfg: &SensitivityConfig, out: &Path) -> Outcome {
    create_dir(out)?;
    let run = &cfg.run;
    let corpus = read_corpus(run)?;
    let model = deploy_from(run, &corpus)?;
    let id_test = read_dataset(&cfg.id_test)?;
    let tuning_sets = cfg
        .tuning_sets
        .iter()
        .map(|t| {
            Ok(TuningSet {
                name: t.name.clone(),
                id: model.holdout.validation.clone(),
                ood: read_dataset(&t.path)?,
            })
        })
        .collect::<Outcome<Vec<_>>>()?;
    let test_sets = cfg
        .test_sets
        .iter()
        .map(|t| Ok((t.name.clone(), read_dataset(&t.path)?)))
        .collect::<Outcome<Vec<_>>>()?;
    let bo = run
        .bo
        .with_seed(seed::derive(run.seed, &[stream::BAYESOPT, run.bo.seed]));
    let procs: Vec<BoProcedure> = cfg
        .families
        .iter()
        .map(|&family| BoProcedure {
            family,
            bo: bo.clone(),
            objective: run.objective,
        })
        .collect();
    let refs: Vec<&dyn TuningProcedure> = procs.iter().map(|p| p as &dyn TuningProcedure).collect();
    let rep = sensitivity(&refs, &tuning_sets, &model, &id_test, &test_sets)
        .or_pipeline("sensitivity")?;
    write_text(
        &out.join("summary.csv"),
        &report::sensitivity_summary_csv(&rep).or_pipeline("formatting CSV")?,
    )?;
    write_text(
        &out.join("cells.csv"),
        &report::sensitivity_cells_csv(&rep).or_pipeline("formatting CSV")?,
    )?;
    print!(
        "{}",
        report::sensitivity_summary_csv(&rep).or_pipeline("formatting CSV")?
    );
    Ok(())
}

pub fn export_report(result: &Path, out: &Path) -> Outcome {
    let r: TuneResult = read_json(result)?;
    create_dir(out)?;
    write_text(
        &out.join("per_m.csv"),
        &report::per_m_csv(&r).or_pipeline("formatting CSV")?,
    )?;
    write_text(
        &out.join("convergence.csv"),
        &report::convergence_csv(&r).or_pipeline("formatting CSV")?,
    )?;
    println!("wrote per_m.csv and convergence.csv to {}", out.display());
    Ok(())
}
