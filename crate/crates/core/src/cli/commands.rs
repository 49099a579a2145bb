use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ModelChoice, RunConfig, Setting};
use super::{EXIT_CHECK_FAILED, EXIT_OK};
use crate::baselines::{BaselineKind, FeatureView};
use crate::dataio::{generate_synthetic, load_corpus, save_corpus, split_labeled, Corpus, SynthConfig};
use crate::eval::{
    ablate_image_noise, evaluate_cv, ClassicalLearner, CvOutcome, FusionLearner, Learner, SelfTrainPlan,
};
use crate::fsutil::write_atomic;
use crate::fusion::{
    analytic_gradients, gradcheck_against, init_model, model_to_bytes, randomize_batch_norm, ArchConfig,
    GradCheckOptions, GradCheckReport, PassConfig,
};
use crate::numcore::{Matrix, SeededRng};
use crate::selftrain::to_jsonl;
use crate::{Error, Result};

#[derive(Serialize)]
struct InputInfo {
    path: String,
    records: usize,
    d_text: usize,
    d_image: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    inputs: BTreeMap<&'a str, InputInfo>,
    outputs: Vec<&'a str>,
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s.into_bytes()
}

fn input_info(path: &Path, c: &Corpus) -> InputInfo {
    InputInfo { path: path.display().to_string(), records: c.len(), d_text: c.d_text(), d_image: c.d_image() }
}

struct Run<'a> {
    command: &'a str,
    cfg: &'a RunConfig,
    dir: PathBuf,
    inputs: BTreeMap<&'a str, InputInfo>,
    outputs: Vec<&'a str>,
}

impl<'a> Run<'a> {
    fn new(command: &'a str, cfg: &'a RunConfig) -> Result<Self> {
        let dir = cfg
            .out_dir
            .clone()
            .ok_or_else(|| Error::Config("missing output directory (--out-dir or out_dir)".into()))?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { command, cfg, dir, inputs: BTreeMap::new(), outputs: Vec::new() })
    }

    fn write(&mut self, name: &'a str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.outputs.push(name);
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.outputs.push("manifest.json");
        let m = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.cfg,
            inputs: std::mem::take(&mut self.inputs),
            outputs: self.outputs.clone(),
        };
        write_atomic(&self.dir.join("manifest.json"), &to_json(&m))
    }
}

pub(super) fn gen(cfg: &SynthConfig, out: &Path) -> Result<i32> {
    let c = generate_synthetic(cfg).map_err(|e| Error::Config(e.to_string()))?;
    save_corpus(&c, out)?;
    println!("wrote {} records to {}", c.len(), out.display());
    Ok(EXIT_OK)
}

fn data_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.data.as_deref().ok_or_else(|| Error::Config("missing input corpus (--data or data)".into()))
}

/// Labeled records of the input corpus, restricted to those the setting can use.
fn labeled_input(cfg: &RunConfig, run: &mut Run<'_>) -> Result<Corpus> {
    let path = data_path(cfg)?;
    let all = load_corpus(path)?;
    run.inputs.insert("data", input_info(path, &all));
    let (lab, _) = split_labeled(&all);
    prepare(&lab, cfg.setting)
}

fn prepare(c: &Corpus, setting: Setting) -> Result<Corpus> {
    if setting == Setting::Text {
        return Ok(c.clone());
    }
    if c.d_image() == 0 {
        return Err(Error::Modality("corpus has no image columns".into()));
    }
    let kept = c.require_images();
    if kept.is_empty() && !c.is_empty() {
        return Err(Error::Modality("no record carries an image vector".into()));
    }
    Ok(kept)
}

fn learner(cfg: &RunConfig) -> Result<Box<dyn Learner>> {
    let view = match cfg.setting {
        Setting::Text => FeatureView::Text,
        Setting::Image => FeatureView::Image,
        Setting::Multimodal => FeatureView::Concat,
    };
    let kind = match cfg.model {
        ModelChoice::Svm => BaselineKind::Svm,
        ModelChoice::Logreg => BaselineKind::LogReg,
        ModelChoice::Forest => BaselineKind::Forest,
        ModelChoice::Stacking => BaselineKind::Stacking,
        ModelChoice::Fusion => {
            if cfg.setting != Setting::Multimodal {
                return Err(Error::Config("the fusion model needs the multimodal setting".into()));
            }
            return Ok(Box::new(FusionLearner { arch: cfg.arch.clone(), train: cfg.train.clone() }));
        }
    };
    Ok(Box::new(ClassicalLearner { kind, view, cfg: cfg.baselines.clone() }))
}

fn print_summary(out: &CvOutcome) {
    let r = &out.report;
    println!(
        "{} / {}: accuracy {:.4} ± {:.4}, f1 {:.4}, precision {:.4}, recall {:.4}, auroc {}",
        r.model,
        r.setting,
        r.accuracy,
        r.std.accuracy,
        r.f1,
        r.precision,
        r.recall,
        r.auroc.map_or("n/a".to_string(), |a| format!("{a:.4}"))
    );
}

pub(super) fn train(cfg: &RunConfig) -> Result<i32> {
    let mut run = Run::new("train", cfg)?;
    let lab = labeled_input(cfg, &mut run)?;
    let lab = prepare(&lab, Setting::Multimodal)?;
    let learner = FusionLearner { arch: cfg.arch.clone(), train: cfg.train.clone() };
    let fitted = learner.fit_predictor(&lab, cfg.seed)?;

    #[derive(Serialize)]
    struct TrainReport<'a> {
        arch: &'a ArchConfig,
        fit: &'a crate::train::FitReport,
        standardizer: &'a crate::dataio::Standardizer,
    }
    run.write("model.bin", &model_to_bytes(&fitted.model))?;
    run.write("standardizer.json", &to_json(&fitted.scaler))?;
    run.write(
        "fit_report.json",
        &to_json(&TrainReport { arch: &fitted.model.cfg, fit: &fitted.report, standardizer: &fitted.scaler }),
    )?;
    run.finish()?;
    let f = &fitted.report;
    println!(
        "trained on {} records ({} validation): best epoch {}, validation loss {:.4}, validation accuracy {:.4}",
        f.n_train, f.n_val, f.best_epoch, f.best_val_loss, f.val_accuracy[f.best_epoch]
    );
    Ok(EXIT_OK)
}

pub(super) fn eval(cfg: &RunConfig) -> Result<i32> {
    let learner = learner(cfg)?;
    let mut run = Run::new("eval", cfg)?;
    let lab = labeled_input(cfg, &mut run)?;
    let out = evaluate_cv(learner.as_ref(), &lab, cfg.k, cfg.seed, None)?;
    run.write("metrics.json", out.report.to_json().as_bytes())?;
    run.finish()?;
    print_summary(&out);
    Ok(EXIT_OK)
}

pub(super) fn ablate(cfg: &RunConfig) -> Result<i32> {
    if cfg.setting != Setting::Multimodal {
        return Err(Error::Config("ablation needs the multimodal setting".into()));
    }
    let learner = learner(cfg)?;
    let mut run = Run::new("ablate", cfg)?;
    let lab = labeled_input(cfg, &mut run)?;
    let mut rng = SeededRng::new(cfg.seed).derive("ablate");
    let out = ablate_image_noise(learner.as_ref(), &lab, cfg.k, cfg.seed, &mut rng)?;
    run.write("metrics.json", out.report.to_json().as_bytes())?;
    run.finish()?;
    print_summary(&out);
    Ok(EXIT_OK)
}

pub(super) fn selftrain(cfg: &RunConfig) -> Result<i32> {
    let learner = learner(cfg)?;
    let mut run = Run::new("selftrain", cfg)?;
    let path = data_path(cfg)?;
    let all = load_corpus(path)?;
    run.inputs.insert("data", input_info(path, &all));
    let (lab, unl) = split_labeled(&all);
    let lab = prepare(&lab, cfg.setting)?;
    let pool = match &cfg.unlabeled {
        Some(p) => {
            let c = load_corpus(p)?;
            run.inputs.insert("unlabeled", input_info(p, &c));
            c.map_records(|r| r.label = None)
        }
        None => unl,
    };
    let pool = pool.require_images();
    let plan = SelfTrainPlan { cfg: &cfg.selftrain, unlabeled: &pool };
    let out = evaluate_cv(learner.as_ref(), &lab, cfg.k, cfg.seed, Some(plan))?;

    #[derive(Serialize)]
    struct Tagged<'a, T: Serialize> {
        fold: usize,
        #[serde(flatten)]
        item: &'a T,
    }
    #[derive(Serialize)]
    struct Pseudo<'a> {
        fold: usize,
        id: &'a str,
        label: crate::dataio::RiskClass,
    }
    let mut rounds = Vec::new();
    let mut decisions = Vec::new();
    let mut pseudo = Vec::new();
    for f in &out.folds {
        let fold = f.metrics.fold;
        rounds.extend(f.round_logs.iter().map(|item| Tagged { fold, item }));
        decisions.extend(f.decisions.iter().map(|item| Tagged { fold, item }));
        pseudo.extend(f.pseudo_labels.iter().map(|(id, label)| Pseudo { fold, id, label: *label }));
    }
    run.write("metrics.json", out.report.to_json().as_bytes())?;
    run.write("rounds.jsonl", to_jsonl(&rounds).as_bytes())?;
    run.write("decisions.jsonl", to_jsonl(&decisions).as_bytes())?;
    run.write("pseudo_labels.jsonl", to_jsonl(&pseudo).as_bytes())?;
    run.finish()?;
    for f in &out.folds {
        let sizes: Vec<String> = f.round_logs.iter().map(|l| format!("{}(+{})", l.labeled_after, l.added)).collect();
        println!("fold {}: labeled size by round {}", f.metrics.fold, sizes.join(" "));
    }
    print_summary(&out);
    Ok(EXIT_OK)
}

pub(super) struct GradcheckRequest {
    pub seed: u64,
    pub batch: usize,
    pub d_text: usize,
    pub d_image: usize,
    pub out: Option<PathBuf>,
    pub perturb: bool,
    pub batch_stats: bool,
}

pub(super) fn gradcheck(req: &GradcheckRequest) -> Result<i32> {
    let arch = ArchConfig::desk(req.d_text, req.d_image);
    let root = SeededRng::new(req.seed);
    let mut model = init_model(&arch, &mut root.derive("init"))?;
    randomize_batch_norm(&mut model, &mut root.derive("batch_norm"));
    let mut data = root.derive("data");
    let mut normal = |r: usize, c: usize| Matrix::new(r, c, (0..r * c).map(|_| data.normal()).collect());
    let text = normal(req.batch, req.d_text)?;
    let image = normal(req.batch, req.d_image)?;
    let labels: Vec<usize> = (0..req.batch).map(|i| i % 3).collect();

    let opts = GradCheckOptions::default();
    let mut reports: BTreeMap<&str, GradCheckReport> = BTreeMap::new();
    let mut modes = vec![("frozen_batch_norm", PassConfig::EVAL)];
    if req.batch_stats {
        modes.push(("batch_statistics", PassConfig::TRAIN));
    }
    for (name, pass) in modes {
        let mut analytic = analytic_gradients(&model, &text, &image, &labels, pass)?;
        if req.perturb {
            let mut t = analytic.tensors_mut();
            let g = &mut t[0].1[0];
            *g += 1e-3_f64.max(0.1 * g.abs());
        }
        reports.insert(name, gradcheck_against(&model, &text, &image, &labels, pass, &analytic, opts)?);
    }
    let passed = reports.values().all(|r| r.passed);
    for (mode, r) in &reports {
        println!("{mode}:");
        for g in &r.groups {
            println!(
                "  {:<28} {:>7}  max_rel {:.3e}  max_abs {:.3e}  {}",
                g.name,
                g.size,
                g.max_rel_err,
                g.max_abs_err,
                if g.passed { "ok" } else { "FAIL" }
            );
        }
    }
    println!("{} (tolerance {:e})", if passed { "PASS" } else { "FAIL" }, opts.tolerance);
    if let Some(path) = &req.out {
        #[derive(Serialize)]
        struct Out<'a> {
            passed: bool,
            tolerance: f64,
            modes: &'a BTreeMap<&'a str, GradCheckReport>,
        }
        write_atomic(path, &to_json(&Out { passed, tolerance: opts.tolerance, modes: &reports }))?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
