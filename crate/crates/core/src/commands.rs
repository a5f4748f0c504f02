//! Pipeline commands. Each reads what earlier commands wrote under the
//! output directory and writes its own artifacts next to them:
//!
//! ```text
//! <out>/config.txt                         effective configuration
//! <out>/run.log                            timestamped progress (not reproducible)
//! <out>/data/                              synthetic dataset (when paths.data is empty)
//! <out>/checkpoints/<rel>.discriminator.dsgn
//! <out>/checkpoints/<rel>.generator.pretrained.dsgn
//! <out>/checkpoints/<rel>.generator.dsgn
//! <out>/pretrain.csv
//! <out>/train/<rel>.csv, <rel>.bags.txt
//! <out>/cleaned/                           cleaned dataset, clean_<rel>.csv
//! <out>/eval/<rel>.summary.csv, <rel>.pr.csv, <rel>.quality.csv
//! <out>/experiment/<rel>.csv
//! <out>/<command>.summary.txt
//! ```

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversary;
use crate::cleaner::redistribute;
use crate::config::{phase_seed, Phase, RunConfig};
use crate::data::truth::{load_truth, truth_sidecar};
use crate::data::{
    load_dataset, load_vocab, make_bags, save_dataset, save_vocab, synth_generate, with_relation,
    DatasetSplits, Instance, VOCAB_FILE,
};
use crate::encoder::{EncoderConfig, SentenceModel};
use crate::error::{DsganError, Result};
use crate::eval;
use crate::nn::ParamSnapshot;
use crate::pretrain;

pub const COMMANDS: [&str; 7] = ["synth", "pretrain", "train", "clean", "eval", "experiment", "all"];

/// A configured run rooted at an output directory.
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
    /// Restricts processing to one relation.
    pub relation: Option<String>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| DsganError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| DsganError::io(path, e))
}

impl Run {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>, relation: Option<String>) -> Self {
        Run {
            config,
            out: out.into(),
            relation,
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        if self.config.data_dir.is_empty() {
            self.out.join("data")
        } else {
            PathBuf::from(&self.config.data_dir)
        }
    }

    pub fn cleaned_dir(&self) -> PathBuf {
        self.out.join("cleaned")
    }

    pub fn checkpoint(&self, relation: &str, role: &str) -> PathBuf {
        self.out.join("checkpoints").join(format!("{relation}.{role}.dsgn"))
    }

    fn log(&self, msg: &str) -> Result<()> {
        let path = self.out.join("run.log");
        std::fs::create_dir_all(&self.out).map_err(|e| DsganError::io(&self.out, e))?;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| DsganError::io(&path, e))?;
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        writeln!(f, "{t:.3} {msg}").map_err(|e| DsganError::io(&path, e))
    }

    fn start(&self, command: &str) -> Result<()> {
        write(&self.out.join("config.txt"), self.config.to_text())?;
        self.log(&format!("{command}: start"))
    }

    fn finish(&self, command: &str, summary: &str) -> Result<String> {
        write(&self.out.join(format!("{command}.summary.txt")), summary)?;
        self.log(&format!("{command}: done"))?;
        Ok(summary.to_string())
    }

    /// Runs `command` by name and returns its summary text.
    pub fn execute(&self, command: &str) -> Result<String> {
        match command {
            "synth" => self.synth(),
            "pretrain" => self.pretrain(),
            "train" => self.train(),
            "clean" => self.clean(),
            "eval" => self.eval(),
            "experiment" => self.experiment(),
            "all" => self.all(),
            other => Err(DsganError::Config(format!("unknown command `{other}`"))),
        }
    }

    fn load_raw(&self) -> Result<DatasetSplits> {
        load_dataset(&self.data_dir())
    }

    fn encoder(&self, splits: &DatasetSplits) -> Result<EncoderConfig> {
        let needed = splits.min_vocab_size();
        let vocab_path = self.data_dir().join(VOCAB_FILE);
        let vocab_size = if vocab_path.exists() {
            let v = load_vocab(&vocab_path)?.size();
            if v < needed {
                return Err(DsganError::Input(format!(
                    "dataset references token {} but the vocabulary has {v} entries",
                    needed - 1
                )));
            }
            v
        } else {
            needed
        };
        Ok(EncoderConfig {
            vocab_size,
            ..self.config.encoder
        })
    }

    /// Relations to process paired with their index in the dataset's sorted
    /// relation list, which keys the per-relation seeds.
    fn relations(&self, splits: &DatasetSplits) -> Result<Vec<(usize, String)>> {
        let all = splits.relations();
        let mut wanted: Vec<String> = if self.config.relations.is_empty() {
            all.clone()
        } else {
            self.config.relations.clone()
        };
        if let Some(r) = &self.relation {
            if !wanted.contains(r) {
                return Err(DsganError::Input(format!("relation `{r}` is not selected by the config")));
            }
            wanted = vec![r.clone()];
        }
        if wanted.is_empty() {
            return Err(DsganError::Input("dataset has no positive relations".into()));
        }
        wanted
            .into_iter()
            .map(|r| match all.iter().position(|x| *x == r) {
                Some(i) => Ok((i, r)),
                None => Err(DsganError::Input(format!("relation `{r}` has no positives in the dataset"))),
            })
            .collect()
    }

    fn load_model(&self, encoder: EncoderConfig, path: &Path) -> Result<SentenceModel> {
        let snap = ParamSnapshot::load(path)?;
        let mut model = SentenceModel::new(encoder, &mut ChaCha8Rng::seed_from_u64(0))?;
        model.params.restore(&snap)?;
        Ok(model)
    }

    pub fn synth(&self) -> Result<String> {
        self.start("synth")?;
        let cfg = self.config.synth_config();
        let ds = synth_generate(&cfg)?;
        let dir = self.data_dir();
        save_dataset(&ds.splits, &dir)?;
        save_vocab(&ds.vocab, &dir.join(VOCAB_FILE))?;
        let mut s = format!("synthetic dataset, seed = {}\n", cfg.seed);
        for (name, set) in ds.splits.named() {
            let _ = writeln!(s, "{name}: {}", set.len());
        }
        let fp = truth_sidecar(&ds.splits).lines().filter(|l| l.ends_with("\tfp")).count();
        let _ = writeln!(s, "false positives planted: {fp}\nvocabulary: {}", ds.vocab.size());
        self.finish("synth", &s)
    }

    pub fn pretrain(&self) -> Result<String> {
        self.start("pretrain")?;
        let splits = self.load_raw()?;
        let enc = self.encoder(&splits)?;
        let cfg = &self.config;
        let ng: Vec<&Instance> = splits.negatives_g.iter().collect();
        let nd: Vec<&Instance> = splits.negatives_d.iter().collect();
        let mut csv = String::from("relation,role,metric,value,epochs\n");
        let mut s = String::new();
        for (ri, rel) in self.relations(&splits)? {
            let pos = with_relation(&splits.positives, &rel);
            let probe = eval::heldout_probe(&splits.heldout, &rel);
            let probe = (cfg.pretrain_heldout_probe && !probe.is_empty()).then_some(&probe[..]);
            let d = pretrain::pretrain_discriminator(
                &pos,
                &nd,
                probe,
                enc,
                &cfg.pretrain,
                phase_seed(cfg.seed, Phase::Discriminator, ri),
            )?;
            write(&self.checkpoint(&rel, "discriminator"), d.snapshot.to_bytes())?;
            self.log(&format!("pretrain {rel}: D accuracy {} after {} epochs", d.accuracy, d.epochs))?;
            let g = pretrain::pretrain_generator(
                &pos,
                &ng,
                enc,
                &cfg.pretrain,
                phase_seed(cfg.seed, Phase::Generator, ri),
            )?;
            write(&self.checkpoint(&rel, "generator.pretrained"), g.model.params.snapshot().to_bytes())?;
            let _ = writeln!(csv, "{rel},discriminator,accuracy,{},{}", d.accuracy, d.epochs);
            let _ = writeln!(csv, "{rel},generator,mean_prob,{},{}", g.mean_prob, g.epochs);
            let probe_name = if probe.is_some() { "held-out split" } else { "carved training data" };
            let _ = writeln!(
                s,
                "{rel}: discriminator accuracy {:.4} on {probe_name} after {} epochs; \
                 generator mean p_G over P {:.4} after {} epochs",
                d.accuracy, d.epochs, g.mean_prob, g.epochs
            );
        }
        write(&self.out.join("pretrain.csv"), csv)?;
        self.finish("pretrain", &s)
    }

    pub fn train(&self) -> Result<String> {
        self.start("train")?;
        let splits = self.load_raw()?;
        let enc = self.encoder(&splits)?;
        let cfg = &self.config;
        let nd: Vec<&Instance> = splits.negatives_d.iter().collect();
        let mut s = String::new();
        for (ri, rel) in self.relations(&splits)? {
            let pos = with_relation(&splits.positives, &rel);
            let g = self.load_model(enc, &self.checkpoint(&rel, "generator.pretrained"))?;
            let d_snapshot = ParamSnapshot::load(&self.checkpoint(&rel, "discriminator"))?;
            let mut d = g.clone();
            d.params.restore(&d_snapshot)?;
            let seed = phase_seed(cfg.seed, Phase::Adversary, ri);
            let bags = make_bags(&pos, cfg.adversary.bag_size, seed)?;
            let report = adversary::run_observed(&pos, &bags, &nd, &g, &d, &d_snapshot, &cfg.adversary, seed, |e, _| {
                let _ = self.log(&format!("train {rel}: epoch {} ACC_D {}", e.epoch, e.acc_nd));
            })?;
            let dir = self.out.join("train");
            write(&dir.join(format!("{rel}.csv")), report.to_csv())?;
            write(&dir.join(format!("{rel}.bags.txt")), bags.to_text(&pos))?;
            write(&self.checkpoint(&rel, "generator"), report.generator.to_bytes())?;
            let best = report.best();
            let _ = writeln!(
                s,
                "{rel}: {} epochs, best epoch {} with ACC_D {:.4} (epoch 1: {:.4}); \
                 best epoch ACC_D first bag {:.4}, last bag {:.4}",
                report.epochs.len(),
                report.best_epoch,
                best.acc_nd,
                report.epochs[0].acc_nd,
                best.bags[0].acc_nd,
                best.bags.last().map_or(f64::NAN, |b| b.acc_nd)
            );
        }
        self.finish("train", &s)
    }

    /// Filters every selected relation's positives with its trained generator.
    pub fn clean_splits(&self, splits: &DatasetSplits) -> Result<(DatasetSplits, Vec<(String, crate::cleaner::CleanReport)>)> {
        let enc = self.encoder(splits)?;
        let relations = self.relations(splits)?;
        let mut out = splits.clone();
        let mut reports = Vec::new();
        for (_, rel) in &relations {
            let g = self.load_model(enc, &self.checkpoint(rel, "generator"))?;
            let (mine, others): (Vec<Instance>, Vec<Instance>) =
                out.positives.iter().cloned().partition(|i| i.relation == *rel);
            let (kept, negatives, report) = redistribute(&mine, &out.negatives_d, &g, self.config.clean_threshold)?;
            if !report.is_conserved() {
                return Err(DsganError::Input(format!("cleaning {rel} changed the instance count")));
            }
            out.positives = others;
            out.positives.extend(kept);
            out.negatives_d = negatives;
            reports.push((rel.clone(), report));
        }
        // keep the original positive order for the untouched relations
        let order: std::collections::HashMap<&str, usize> =
            splits.positives.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        out.positives.sort_by_key(|p| order[p.id.as_str()]);
        Ok((out, reports))
    }

    pub fn clean(&self) -> Result<String> {
        self.start("clean")?;
        let splits = self.load_raw()?;
        let (cleaned, reports) = self.clean_splits(&splits)?;
        let dir = self.cleaned_dir();
        save_dataset(&cleaned, &dir)?;
        let vocab = self.data_dir().join(VOCAB_FILE);
        if vocab.exists() {
            save_vocab(&load_vocab(&vocab)?, &dir.join(VOCAB_FILE))?;
        }
        let mut s = String::new();
        for (rel, report) in &reports {
            write(&dir.join(format!("clean_{rel}.csv")), report.to_csv())?;
            let _ = write!(s, "[{rel}]\n{}", report.summary());
        }
        let _ = writeln!(
            s,
            "total instances: {} -> {}",
            splits.len(),
            cleaned.len()
        );
        self.finish("clean", &s)
    }

    pub fn eval(&self) -> Result<String> {
        self.start("eval")?;
        let mut raw = self.load_raw()?;
        let cleaned = load_dataset(&self.cleaned_dir())?;
        let enc = self.encoder(&raw)?;
        let cfg = &self.config;
        let truth = match load_truth(&self.data_dir(), &mut raw) {
            Ok(()) => true,
            Err(DsganError::MissingTruth(_)) => false,
            Err(e) => return Err(e),
        };
        let oracle = if truth { Some(eval::oracle_clean(&raw)?) } else { None };
        let dir = self.out.join("eval");
        let mut s = String::new();
        for (ri, rel) in self.relations(&raw)? {
            let seeds = cfg.eval.seed_list(phase_seed(cfg.seed, Phase::Eval, ri));
            let cmp = eval::downstream_compare(&raw, &cleaned, &rel, enc, &cfg.eval.classifier, &seeds)?;
            let mut summary = cmp.summary_csv();
            let _ = writeln!(
                s,
                "{rel}: mean AUC raw {:.4}, cleaned {:.4} (delta {:+.4}); cleaned wins {}/{} seeds; \
                 paired t = {:.4}, p = {:.4}",
                cmp.mean_baseline(),
                cmp.mean_cleaned(),
                cmp.mean_cleaned() - cmp.mean_baseline(),
                cmp.wins(),
                seeds.len(),
                cmp.test.t,
                cmp.test.p
            );
            if let Some(oracle) = &oracle {
                let aucs = seeds
                    .iter()
                    .map(|&sd| eval::downstream_auc(oracle, &rel, enc, &cfg.eval.classifier, sd).map(|r| r.0))
                    .collect::<Result<Vec<f64>>>()?;
                for (sd, a) in seeds.iter().zip(&aucs) {
                    let _ = writeln!(summary, "oracle,{sd},,{a},");
                }
                let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
                let _ = writeln!(summary, "oracle_mean,,,{mean},");
                let _ = writeln!(s, "{rel}: mean AUC with oracle cleaning {mean:.4}");
                write(&dir.join(format!("{rel}.quality.csv")), self.quality_csv(&raw, &cleaned, &rel, enc)?)?;
            }
            write(&dir.join(format!("{rel}.summary.csv")), summary)?;
            write(&dir.join(format!("{rel}.pr.csv")), cmp.pr_csv())?;
        }
        if !truth {
            s.push_str("no truth sidecar: generator quality and oracle rows skipped\n");
        }
        self.finish("eval", &s)
    }

    fn quality_csv(&self, raw: &DatasetSplits, cleaned: &DatasetSplits, rel: &str, enc: EncoderConfig) -> Result<String> {
        let pos = with_relation(&raw.positives, rel);
        let thr = self.config.clean_threshold;
        let mut csv = String::from("generator,tp,fp,fn,precision,recall,f1\n");
        let mut recall_pre = 0.0;
        for (name, role) in [("pretrained", "generator.pretrained"), ("dsgan", "generator")] {
            let g = self.load_model(enc, &self.checkpoint(rel, role))?;
            let q = eval::generator_quality(&g, &pos, thr)?;
            if role == "generator.pretrained" {
                recall_pre = q.recall;
            }
            let _ = writeln!(csv, "{name},{},{},{},{},{},{}", q.tp, q.fp, q.fn_, q.precision, q.recall, q.f1);
        }
        let _ = writeln!(csv, "random_at_pretrained_recall,,,,,{recall_pre},{}", eval::random_selection_f1(&pos, recall_pre)?);
        let before: std::collections::HashSet<&str> = raw.negatives_d.iter().map(|i| i.id.as_str()).collect();
        let by_id: std::collections::HashMap<&str, &Instance> = pos.iter().map(|i| (i.id.as_str(), *i)).collect();
        let moved: Vec<&Instance> = cleaned
            .negatives_d
            .iter()
            .filter(|i| !before.contains(i.id.as_str()))
            .filter_map(|i| by_id.get(i.id.as_str()).copied())
            .collect();
        let _ = writeln!(
            csv,
            "# redistributed={} redistribution_precision={}",
            moved.len(),
            eval::redistribution_precision(&moved)?
        );
        Ok(csv)
    }

    pub fn experiment(&self) -> Result<String> {
        self.start("experiment")?;
        let splits = self.load_raw()?;
        let enc = self.encoder(&splits)?;
        let cfg = &self.config;
        let nd: Vec<&Instance> = splits.negatives_d.iter().collect();
        let mut s = String::new();
        for (ri, rel) in self.relations(&splits)? {
            let pos = with_relation(&splits.positives, &rel);
            let g = self.load_model(enc, &self.checkpoint(&rel, "generator"))?;
            let pre = self.load_model(enc, &self.checkpoint(&rel, "generator.pretrained"))?;
            let m = match cfg.eval.experiment_m {
                0 => {
                    let probs = g.score_all(pos.iter().copied())?;
                    probs.iter().filter(|&&p| crate::cleaner::is_positive(p, cfg.clean_threshold)).count().max(1)
                }
                m => m,
            };
            let seeds = cfg.eval.seed_list(phase_seed(cfg.seed, Phase::Eval, ri));
            let r = eval::positive_set_experiment(&pos, &nd, &g, &pre, m, enc, &cfg.eval.classifier, &seeds)?;
            write(&self.out.join("experiment").join(format!("{rel}.csv")), r.to_csv())?;
            let f = r.final_means();
            let _ = writeln!(
                s,
                "{rel}: m = {m}{}; final training accuracy DSGAN {:.4}, Pre-training {:.4}, Random {:.4}; \
                 ordering DSGAN >= Pre-training >= Random {}",
                if r.identical_sets.iter().all(|&b| b) { " (all three sets identical)" } else { "" },
                f[0],
                f[1],
                f[2],
                if f[0] >= f[1] && f[1] >= f[2] { "holds" } else { "does not hold" }
            );
        }
        self.finish("experiment", &s)
    }

    /// Every command in order; the synthetic dataset is generated only when
    /// no dataset path is configured.
    pub fn all(&self) -> Result<String> {
        let mut s = String::new();
        let mut steps = vec!["pretrain", "train", "clean", "eval", "experiment"];
        if self.config.data_dir.is_empty() {
            steps.insert(0, "synth");
        }
        for step in steps {
            let _ = write!(s, "== {step}\n{}", self.execute(step)?);
        }
        Ok(s)
    }
}
