//! Experiment configuration and the pipeline stages behind the CLI.
//!
//! A run directory holds everything one configuration file produces:
//!
//! ```text
//! resolved_config.ini   every setting with defaults expanded
//! data/                 manifest.tsv and chips/
//! pilot/                pilot study tables
//! models/<config>/      model.cnet, history.tsv, run_manifest.txt
//! eval/                 per-config scores, ROC and per-trial tables, roc.svg
//! compare/              bootstrap ensembles, WSR table, box plot
//! analysis/             MI table, embeddings, silhouettes, weight maps
//! summary.tsv           per-trial test AUC of every configuration
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::chip::{ReprKind, ReprSet, RealChip, Representation};
use crate::error::{AtrError, Result};
use crate::io::{read_text, write_text, Tsv};
use crate::latent::{
    default_mi_pairs, extract_features, first_layer_filters, mi_report, mi_tsv, probe_indices, silhouette, tsne,
    unflatten_dense_weights, FeatureCloud, MiOptions, TsneOptions,
};
use crate::nn::Model;
use crate::plot::{auc_boxplot_svg, roc_overlay_svg, scatter_svg};
use crate::repr::PsdScale;
use crate::stats::{auc_table, bootstrap_auc, compare_configs, comparison_tsv, per_trial_auc, roc_auc, AucEnsemble};
use crate::synth::{gen_dataset, Dataset, Split, SynthConfig, TrialProfile, MANIFEST_FILE};
use crate::trainer::{
    dropout_pilot_on, lr_pilot_on, pilot_subset, predict, train, TrainConfig, TrainOutcome, DROPOUT_CANDIDATES,
    DROPOUT_PILOT_EPOCHS, LR_CANDIDATES, LR_PILOT_EPOCHS, MIN_PILOT_CHIPS, MODEL_FILE, PILOT_FRACTION,
};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.ini";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const DATA_DIR: &str = "data";
pub const MODELS_DIR: &str = "models";
pub const EVAL_DIR: &str = "eval";
pub const COMPARE_DIR: &str = "compare";
pub const ANALYSIS_DIR: &str = "analysis";
pub const PILOT_DIR: &str = "pilot";

/// A hyperparameter given directly or left to its pilot study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Choice {
    Value(f64),
    Pilot,
}

impl Choice {
    fn parse(s: &str, key: &str) -> Result<Self> {
        if s == "pilot" {
            Ok(Choice::Pilot)
        } else {
            parse_num(s, key).map(Choice::Value)
        }
    }

    fn render(self) -> String {
        match self {
            Choice::Value(v) => v.to_string(),
            Choice::Pilot => "pilot".into(),
        }
    }
}

/// Per-configuration hyperparameters that take precedence over `[train]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConfigOverride {
    pub lr: Option<Choice>,
    pub dropout: Option<Choice>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub bootstrap: usize,
    pub alpha: f64,
    /// Bonferroni divisor.
    pub comparisons: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSettings {
    pub k: usize,
    pub pca_dims: usize,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    /// Test chips fed to the MI estimator.
    pub probe_size: usize,
    /// Test chips embedded with t-SNE.
    pub embed_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub synth: SynthConfig,
    /// Shared training settings; `reprs`, `learning_rate` and
    /// `dropout_rate` are filled per configuration.
    pub train: TrainConfig,
    pub lr: Choice,
    pub dropout: Choice,
    pub configurations: Vec<ReprSet>,
    pub overrides: BTreeMap<ReprSet, ConfigOverride>,
    pub eval: EvalSettings,
    pub analysis: AnalysisSettings,
}

fn default_trials() -> Vec<TrialProfile> {
    vec![
        TrialProfile {
            texture_corr_len: (3.0, 3.0),
            texture_depth: 0.3,
            ..TrialProfile::new("T1")
        },
        TrialProfile {
            gain_db: 3.0,
            texture_corr_len: (8.0, 2.0),
            texture_depth: 0.4,
            bandwidth: (0.8, 1.0),
            ..TrialProfile::new("T2")
        },
        TrialProfile {
            gain_db: -2.0,
            texture_corr_len: (2.0, 8.0),
            texture_depth: 0.35,
            bandwidth: (1.0, 0.8),
            ..TrialProfile::new("T3")
        },
        TrialProfile {
            gain_db: 1.0,
            texture_corr_len: (5.0, 5.0),
            texture_depth: 0.5,
            bandwidth: (0.9, 0.9),
            ..TrialProfile::new("T4")
        },
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let seed = 1;
        let mut train = TrainConfig::new(ReprSet::single(Representation::Magnitude));
        train.seed = seed;
        Self {
            seed,
            out_dir: PathBuf::from("runs/default"),
            jobs: 0,
            synth: SynthConfig::new(seed, default_trials(), 1000),
            lr: Choice::Value(train.learning_rate),
            dropout: Choice::Value(train.dropout_rate),
            train,
            configurations: ReprSet::grid(),
            overrides: BTreeMap::new(),
            eval: EvalSettings {
                bootstrap: 100,
                alpha: 1e-3,
                comparisons: 6,
            },
            analysis: AnalysisSettings {
                k: 3,
                pca_dims: 10,
                perplexity: 30.0,
                tsne_iterations: 1000,
                probe_size: 1000,
                embed_size: 500,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse()
        .map_err(|_| AtrError::Config(format!("`{key}`: cannot parse `{s}`")))
}

fn parse_pair(s: &str, key: &str, sep: char) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(sep).map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok((parse_num(a, key)?, parse_num(b, key)?)),
        _ => Err(AtrError::Config(format!("`{key}` expects two values, got `{s}`"))),
    }
}

fn parse_dims(s: &str, key: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| AtrError::Config(format!("`{key}` expects HxW, got `{s}`")))?;
    Ok((parse_num(h.trim(), key)?, parse_num(w.trim(), key)?))
}

fn parse_configurations(s: &str) -> Result<Vec<ReprSet>> {
    let list = s
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<ReprSet>>>()?;
    if list.is_empty() {
        return Err(AtrError::Config("`configurations` is empty".into()));
    }
    Ok(list)
}

type Section = Vec<(String, String, usize)>;

/// `[section]` headers, `key = value` lines, `#`/`;` comment lines.
fn parse_ini(text: &str) -> Result<Vec<(String, Section)>> {
    let mut sections: Vec<(String, Section)> = vec![(String::new(), Vec::new())];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = n + 1;
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| AtrError::Config(format!("line {lineno}: unterminated section header")))?
                .trim();
            if sections.iter().any(|(s, _)| s == name) {
                return Err(AtrError::Config(format!("line {lineno}: duplicate section [{name}]")));
            }
            sections.push((name.to_string(), Vec::new()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| AtrError::Config(format!("line {lineno}: expected `key = value`")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        let section = &mut sections.last_mut().expect("global section").1;
        if section.iter().any(|(key, _, _)| *key == k) {
            return Err(AtrError::Config(format!("line {lineno}: duplicate key `{k}`")));
        }
        section.push((k, v, lineno));
    }
    Ok(sections)
}

fn unknown(section: &str, key: &str, line: usize) -> AtrError {
    let at = if section.is_empty() { String::new() } else { format!(" in [{section}]") };
    AtrError::Config(format!("line {line}: unknown key `{key}`{at}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut trial_sections: Vec<(String, Section)> = Vec::new();
        let mut trial_order: Option<Vec<String>> = None;
        for (name, entries) in parse_ini(text)? {
            match name.as_str() {
                "" => {
                    for (k, v, line) in entries {
                        match k.as_str() {
                            "seed" => c.seed = parse_num(&v, &k)?,
                            "out" => c.out_dir = PathBuf::from(v),
                            "jobs" => c.jobs = parse_num(&v, &k)?,
                            _ => return Err(unknown(&name, &k, line)),
                        }
                    }
                }
                "synth" => {
                    for (k, v, line) in entries {
                        let s = &mut c.synth;
                        match k.as_str() {
                            "chips_per_trial" => s.chips_per_trial = parse_num(&v, &k)?,
                            "clutter_to_target_ratio" => s.clutter_to_target_ratio = parse_num(&v, &k)?,
                            "chip_size" => s.chip_dims = parse_dims(&v, &k)?,
                            "extent_m" => s.extent_m = parse_pair(&v, &k, ',')?,
                            "trials" => {
                                trial_order = Some(v.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())
                            }
                            _ => return Err(unknown(&name, &k, line)),
                        }
                    }
                }
                "train" => {
                    for (k, v, line) in entries {
                        let t = &mut c.train;
                        match k.as_str() {
                            "configurations" => c.configurations = parse_configurations(&v)?,
                            "lr" => c.lr = Choice::parse(&v, &k)?,
                            "dropout" => c.dropout = Choice::parse(&v, &k)?,
                            "batch_size" => t.batch_size = parse_num(&v, &k)?,
                            "max_epochs" => t.max_epochs = parse_num(&v, &k)?,
                            "patience" => t.patience = parse_num(&v, &k)?,
                            "early_stop_on" => t.early_stop_split = v.parse()?,
                            "steps_per_epoch" => {
                                t.steps_per_epoch = if v == "auto" { None } else { Some(parse_num(&v, &k)?) }
                            }
                            "crop_fraction" => t.preprocess.crop_fraction = parse_num(&v, &k)?,
                            "input_size" => t.preprocess.input_hw = parse_dims(&v, &k)?,
                            "dynamic_range_db" => t.preprocess.extract.dynamic_range_db = parse_num(&v, &k)?,
                            "psd_scale" => {
                                t.preprocess.extract.psd_scale = match v.as_str() {
                                    "log" => PsdScale::Log,
                                    "linear" => PsdScale::Linear,
                                    _ => return Err(AtrError::Config(format!("`psd_scale` must be log or linear, got `{v}`"))),
                                }
                            }
                            _ => return Err(unknown(&name, &k, line)),
                        }
                    }
                }
                "eval" => {
                    for (k, v, line) in entries {
                        match k.as_str() {
                            "bootstrap" => c.eval.bootstrap = parse_num(&v, &k)?,
                            "alpha" => c.eval.alpha = parse_num(&v, &k)?,
                            "comparisons" => c.eval.comparisons = parse_num(&v, &k)?,
                            _ => return Err(unknown(&name, &k, line)),
                        }
                    }
                }
                "analysis" => {
                    for (k, v, line) in entries {
                        let a = &mut c.analysis;
                        match k.as_str() {
                            "k" => a.k = parse_num(&v, &k)?,
                            "pca_dims" => a.pca_dims = parse_num(&v, &k)?,
                            "perplexity" => a.perplexity = parse_num(&v, &k)?,
                            "tsne_iterations" => a.tsne_iterations = parse_num(&v, &k)?,
                            "probe_size" => a.probe_size = parse_num(&v, &k)?,
                            "embed_size" => a.embed_size = parse_num(&v, &k)?,
                            _ => return Err(unknown(&name, &k, line)),
                        }
                    }
                }
                other => {
                    if let Some(t) = other.strip_prefix("trial.") {
                        trial_sections.push((t.to_string(), entries));
                    } else if let Some(cfg) = other.strip_prefix("train.") {
                        let reprs: ReprSet = cfg.parse()?;
                        let mut o = ConfigOverride::default();
                        for (k, v, line) in entries {
                            match k.as_str() {
                                "lr" => o.lr = Some(Choice::parse(&v, &k)?),
                                "dropout" => o.dropout = Some(Choice::parse(&v, &k)?),
                                _ => return Err(unknown(other, &k, line)),
                            }
                        }
                        if c.overrides.insert(reprs.clone(), o).is_some() {
                            return Err(AtrError::Config(format!("[{other}] repeats configuration {reprs}")));
                        }
                    } else {
                        return Err(AtrError::Config(format!("unknown section [{other}]")));
                    }
                }
            }
        }
        if let Some(order) = trial_order {
            let mut trials = Vec::with_capacity(order.len());
            for name in &order {
                let mut p = TrialProfile::new(name.clone());
                if let Some((_, entries)) = trial_sections.iter().find(|(t, _)| t == name) {
                    for (k, v, line) in entries {
                        match k.as_str() {
                            "speckle_sigma" => p.speckle_sigma = parse_num(v, k)?,
                            "gain_db" => p.gain_db = parse_num(v, k)?,
                            "texture_corr_len" => p.texture_corr_len = parse_pair(v, k, ',')?,
                            "texture_depth" => p.texture_depth = parse_num(v, k)?,
                            "bandwidth" => p.bandwidth = parse_pair(v, k, ',')?,
                            _ => return Err(unknown(&format!("trial.{name}"), k, *line)),
                        }
                    }
                }
                trials.push(p);
            }
            c.synth.trials = trials;
            if let Some((t, _)) = trial_sections.iter().find(|(t, _)| !order.contains(t)) {
                return Err(AtrError::Config(format!("[trial.{t}] is not listed in synth.trials")));
            }
        } else if let Some((t, _)) = trial_sections.first() {
            return Err(AtrError::Config(format!("[trial.{t}] given but synth.trials is not set")));
        }
        c.sync_seed();
        c.validate()?;
        Ok(c)
    }

    /// Reads a configuration file; a missing file is a configuration error
    /// naming the path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AtrError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            AtrError::Config(msg) => AtrError::Config(format!("{}: {msg}", path.display())),
            other => AtrError::Config(format!("{}: {other}", path.display())),
        })
    }

    fn sync_seed(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        let lrs = [self.lr].into_iter().chain(self.overrides.values().filter_map(|o| o.lr));
        let dropouts = [self.dropout].into_iter().chain(self.overrides.values().filter_map(|o| o.dropout));
        for lr in lrs {
            if let Choice::Value(v) = lr {
                if !(v.is_finite() && v > 0.0) {
                    return Err(AtrError::Config(format!("learning rate must be positive, got {v}")));
                }
            }
        }
        for d in dropouts {
            if let Choice::Value(v) = d {
                if !(0.0..1.0).contains(&v) {
                    return Err(AtrError::Config(format!("dropout rate must be in [0, 1), got {v}")));
                }
            }
        }
        for r in self.overrides.keys() {
            if !self.configurations.contains(r) {
                return Err(AtrError::Config(format!("[train.{r}] names a configuration that is not trained")));
            }
        }
        let mut seen = Vec::new();
        for r in &self.configurations {
            if seen.contains(&r) {
                return Err(AtrError::Config(format!("configuration {r} listed twice")));
            }
            seen.push(r);
        }
        let e = &self.eval;
        if e.bootstrap == 0 || !(e.alpha > 0.0 && e.alpha < 1.0) || e.comparisons == 0 {
            return Err(AtrError::Config("eval needs bootstrap >= 1, alpha in (0, 1) and comparisons >= 1".into()));
        }
        let a = &self.analysis;
        if a.k == 0 || a.pca_dims == 0 || !(a.perplexity > 0.0) || a.tsne_iterations == 0 {
            return Err(AtrError::Config("analysis needs positive k, pca_dims, perplexity and tsne_iterations".into()));
        }
        Ok(())
    }

    /// Every setting, defaults expanded; parsing the result gives back this
    /// configuration.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let t = &self.train;
        let p = &t.preprocess;
        let _ = writeln!(s, "seed = {}\nout = {}\njobs = {}\n", self.seed, self.out_dir.display(), self.jobs);
        let sy = &self.synth;
        let names: Vec<&str> = sy.trials.iter().map(|t| t.name.as_str()).collect();
        let _ = writeln!(
            s,
            "[synth]\nchips_per_trial = {}\nclutter_to_target_ratio = {}\nchip_size = {}x{}\nextent_m = {}, {}\ntrials = {}\n",
            sy.chips_per_trial,
            sy.clutter_to_target_ratio,
            sy.chip_dims.0,
            sy.chip_dims.1,
            sy.extent_m.0,
            sy.extent_m.1,
            names.join(", ")
        );
        for tr in &sy.trials {
            let _ = writeln!(
                s,
                "[trial.{}]\nspeckle_sigma = {}\ngain_db = {}\ntexture_corr_len = {}, {}\ntexture_depth = {}\nbandwidth = {}, {}\n",
                tr.name,
                tr.speckle_sigma,
                tr.gain_db,
                tr.texture_corr_len.0,
                tr.texture_corr_len.1,
                tr.texture_depth,
                tr.bandwidth.0,
                tr.bandwidth.1
            );
        }
        let configs: Vec<String> = self.configurations.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(
            s,
            "[train]\nconfigurations = {}\nlr = {}\ndropout = {}\nbatch_size = {}\nmax_epochs = {}\npatience = {}\n\
             early_stop_on = {}\nsteps_per_epoch = {}\ncrop_fraction = {}\ninput_size = {}x{}\ndynamic_range_db = {}\npsd_scale = {}\n",
            configs.join("; "),
            self.lr.render(),
            self.dropout.render(),
            t.batch_size,
            t.max_epochs,
            t.patience,
            t.early_stop_split,
            t.steps_per_epoch.map_or_else(|| "auto".into(), |n| n.to_string()),
            p.crop_fraction,
            p.input_hw.0,
            p.input_hw.1,
            p.extract.dynamic_range_db,
            match p.extract.psd_scale {
                PsdScale::Log => "log",
                PsdScale::Linear => "linear",
            }
        );
        for (r, o) in &self.overrides {
            let _ = writeln!(s, "[train.{r}]");
            if let Some(lr) = o.lr {
                let _ = writeln!(s, "lr = {}", lr.render());
            }
            if let Some(d) = o.dropout {
                let _ = writeln!(s, "dropout = {}", d.render());
            }
            s.push('\n');
        }
        let (e, a) = (&self.eval, &self.analysis);
        let _ = writeln!(
            s,
            "[eval]\nbootstrap = {}\nalpha = {}\ncomparisons = {}\n\n[analysis]\nk = {}\npca_dims = {}\nperplexity = {}\n\
             tsne_iterations = {}\nprobe_size = {}\nembed_size = {}",
            e.bootstrap, e.alpha, e.comparisons, a.k, a.pca_dims, a.perplexity, a.tsne_iterations, a.probe_size, a.embed_size
        );
        s
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(inputs) = &o.inputs {
            self.configurations = vec![inputs.clone()];
            self.overrides.retain(|r, _| r == inputs);
        }
        if let Some(epochs) = o.epochs {
            self.train.max_epochs = epochs;
        }
        if let Some(d) = o.dropout {
            self.dropout = Choice::Value(d);
            self.overrides.values_mut().for_each(|v| v.dropout = None);
        }
        if let Some(lr) = o.lr {
            self.lr = Choice::Value(lr);
            self.overrides.values_mut().for_each(|v| v.lr = None);
        }
        if let Some(split) = o.early_stop_on {
            self.train.early_stop_split = split;
        }
        if o.psd_linear {
            self.train.preprocess.extract.psd_scale = PsdScale::Linear;
        }
        if let Some(jobs) = o.jobs {
            self.jobs = jobs;
        }
        self.sync_seed();
        self.validate()
    }

    fn choices(&self, reprs: &ReprSet) -> (Choice, Choice) {
        let o = self.overrides.get(reprs).copied().unwrap_or_default();
        (o.lr.unwrap_or(self.lr), o.dropout.unwrap_or(self.dropout))
    }

    /// Training settings of one configuration; pilots must have run.
    pub fn train_config(&self, reprs: &ReprSet) -> Result<TrainConfig> {
        match self.choices(reprs) {
            (Choice::Value(lr), Choice::Value(dropout)) => Ok(TrainConfig {
                reprs: reprs.clone(),
                learning_rate: lr,
                dropout_rate: dropout,
                ..self.train.clone()
            }),
            _ => Err(AtrError::Config(format!(
                "{reprs} still has a `pilot` hyperparameter; run the pilot first"
            ))),
        }
    }

    fn dir(&self, sub: &str) -> PathBuf {
        self.out_dir.join(sub)
    }

    pub fn model_dir(&self, reprs: &ReprSet) -> PathBuf {
        self.dir(MODELS_DIR).join(reprs.to_string())
    }

    pub fn write_resolved(&self) -> Result<()> {
        write_text(&self.out_dir.join(RESOLVED_CONFIG_FILE), &self.render())
    }
}

/// Command-line settings that replace configuration values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub inputs: Option<ReprSet>,
    pub epochs: Option<usize>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub early_stop_on: Option<Split>,
    pub psd_linear: bool,
    pub jobs: Option<usize>,
}

fn step<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| AtrError::in_step(name, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| AtrError::io(path, e))
}

/// Generates the dataset below `<out>/data`.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Dataset> {
    create_dir(&cfg.out_dir)?;
    cfg.write_resolved()?;
    log::info!("generating {} trials x {} chips", cfg.synth.trials.len(), cfg.synth.chips_per_trial);
    gen_dataset(&cfg.synth, &cfg.dir(DATA_DIR))
}

/// The dataset written by [`cmd_synth`].
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let root = cfg.dir(DATA_DIR);
    if !root.join(MANIFEST_FILE).exists() {
        return Err(AtrError::Config(format!(
            "no dataset under {}; run `synth` first",
            root.display()
        )));
    }
    Dataset::load(&root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotKind {
    LearningRate,
    Dropout,
}

/// Runs a pilot for every configuration, records the choice as a
/// per-configuration override and rewrites the resolved config.
pub fn cmd_pilot(cfg: &mut ExperimentConfig, kind: PilotKind, dataset: &Dataset) -> Result<Vec<(ReprSet, f64)>> {
    let subset = pilot_subset(dataset, PILOT_FRACTION, MIN_PILOT_CHIPS, cfg.seed);
    if subset.len() < MIN_PILOT_CHIPS {
        return Err(AtrError::InvalidParameter(format!(
            "pilot subset has {} chips, at least {MIN_PILOT_CHIPS} are needed",
            subset.len()
        )));
    }
    let base_default = TrainConfig::new(ReprSet::single(Representation::Magnitude));
    let mut chosen = Vec::new();
    let mut table = match kind {
        PilotKind::LearningRate => Tsv::new(["config", "lr", "epoch_losses", "monotone", "selected"]),
        PilotKind::Dropout => Tsv::new(["config", "dropout", "best_validation_auc", "selected"]),
    };
    for reprs in cfg.configurations.clone() {
        let (lr, dropout) = cfg.choices(&reprs);
        let value = |c: Choice, fallback: f64| if let Choice::Value(v) = c { v } else { fallback };
        let base = TrainConfig {
            reprs: reprs.clone(),
            learning_rate: value(lr, base_default.learning_rate),
            dropout_rate: value(dropout, base_default.dropout_rate),
            ..cfg.train.clone()
        };
        let entry = cfg.overrides.entry(reprs.clone()).or_default();
        let pick = match kind {
            PilotKind::LearningRate => {
                let r = lr_pilot_on(&base, dataset, &subset, &LR_CANDIDATES, LR_PILOT_EPOCHS)?;
                for (rate, losses) in &r.runs {
                    let l: Vec<String> = losses.iter().map(|v| format!("{v:.6}")).collect();
                    table.push([
                        reprs.to_string(),
                        rate.to_string(),
                        l.join(","),
                        crate::trainer::is_monotone(losses).to_string(),
                        (*rate == r.selected).to_string(),
                    ]);
                }
                entry.lr = Some(Choice::Value(r.selected));
                r.selected
            }
            PilotKind::Dropout => {
                let r = dropout_pilot_on(&base, dataset, &subset, &DROPOUT_CANDIDATES, DROPOUT_PILOT_EPOCHS)?;
                for (rate, auc) in &r.runs {
                    table.push([
                        reprs.to_string(),
                        rate.to_string(),
                        format!("{auc:.6}"),
                        (*rate == r.selected).to_string(),
                    ]);
                }
                entry.dropout = Some(Choice::Value(r.selected));
                r.selected
            }
        };
        log::info!("{reprs}: pilot chose {pick}");
        chosen.push((reprs, pick));
    }
    let name = match kind {
        PilotKind::LearningRate => "lr.tsv",
        PilotKind::Dropout => "dropout.tsv",
    };
    table.save(&cfg.dir(PILOT_DIR).join(name))?;
    cfg.write_resolved()?;
    Ok(chosen)
}

/// Trains one configuration and writes its run files.
pub fn cmd_train(cfg: &ExperimentConfig, reprs: &ReprSet, dataset: &Dataset) -> Result<TrainOutcome> {
    let tc = cfg.train_config(reprs)?;
    let outcome = train(&tc, dataset)?;
    outcome.save(&cfg.model_dir(reprs), &tc)?;
    log::info!(
        "{reprs}: best {} AUC {:.4} at epoch {}",
        tc.early_stop_split,
        outcome.best_auc,
        outcome.best_epoch
    );
    Ok(outcome)
}

pub fn load_model(cfg: &ExperimentConfig, reprs: &ReprSet) -> Result<Model<f32>> {
    let path = cfg.model_dir(reprs).join(MODEL_FILE);
    if !path.exists() {
        return Err(AtrError::Config(format!("no model at {}; train {reprs} first", path.display())));
    }
    Model::load(&path)
}

/// Test-split scores of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub reprs: ReprSet,
    pub chip_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub trials: Vec<String>,
    pub scores: Vec<f64>,
}

impl Scores {
    pub fn to_tsv(&self) -> Tsv {
        let mut t = Tsv::new(["chip_id", "label", "trial_name", "score"]);
        for i in 0..self.scores.len() {
            t.push([
                self.chip_ids[i].clone(),
                self.labels[i].to_string(),
                self.trials[i].clone(),
                // shortest representation that parses back exactly
                self.scores[i].to_string(),
            ]);
        }
        t
    }

    pub fn from_tsv(reprs: ReprSet, t: &Tsv) -> Result<Self> {
        let mut s = Scores {
            reprs,
            chip_ids: Vec::new(),
            labels: Vec::new(),
            trials: Vec::new(),
            scores: Vec::new(),
        };
        for row in &t.rows {
            s.chip_ids.push(row[0].clone());
            s.labels.push(parse_num(&row[1], "label").map_err(|_| AtrError::format("scores", "bad label"))?);
            s.trials.push(row[2].clone());
            s.scores.push(parse_num(&row[3], "score").map_err(|_| AtrError::format("scores", "bad score"))?);
        }
        Ok(s)
    }
}

fn scores_path(cfg: &ExperimentConfig, reprs: &ReprSet) -> PathBuf {
    cfg.dir(EVAL_DIR).join(reprs.to_string()).join("scores.tsv")
}

/// Scores the test split with each trained model; writes scores, ROC
/// points, per-trial tables, the ROC overlay and the summary table.
pub fn cmd_eval(cfg: &ExperimentConfig, configs: &[ReprSet], dataset: &Dataset) -> Result<(Vec<Scores>, Tsv)> {
    let test = dataset.indices(Split::Test);
    let chips: Vec<_> = test.iter().map(|&i| &dataset.chips[i]).collect();
    let labels = dataset.labels(&test);
    let trials: Vec<String> = test.iter().map(|&i| dataset.records[i].trial_name.clone()).collect();
    let mut all = Vec::new();
    let mut curves = Vec::new();
    let mut tables = Vec::new();
    for reprs in configs {
        let model = load_model(cfg, reprs)?;
        let scores = predict(&model, &chips, reprs, &cfg.train.preprocess)?;
        let s = Scores {
            reprs: reprs.clone(),
            chip_ids: test.iter().map(|&i| dataset.records[i].chip_id.clone()).collect(),
            labels: labels.clone(),
            trials: trials.clone(),
            scores,
        };
        let dir = cfg.dir(EVAL_DIR).join(reprs.to_string());
        s.to_tsv().save(&dir.join("scores.tsv"))?;
        let roc = roc_auc(&s.scores, &labels)?;
        roc.to_tsv().save(&dir.join("roc.tsv"))?;
        let per_trial = per_trial_auc(&s.scores, &labels, &trials)?;
        let mut pt = Tsv::new(["trial", "n", "proportion_pct", "auc"]);
        for r in &per_trial {
            pt.push([
                r.trial.clone(),
                r.n.to_string(),
                format!("{:.1}", r.proportion),
                r.auc.map_or_else(|| "undefined".into(), |a| format!("{a:.4}")),
            ]);
        }
        pt.save(&dir.join("per_trial.tsv"))?;
        log::info!("{reprs}: test AUC {:.4}", roc.auc);
        curves.push((reprs.title(), roc));
        tables.push((reprs.title(), per_trial));
        all.push(s);
    }
    let overlay: Vec<(String, &_)> = curves.iter().map(|(n, c)| (n.clone(), c)).collect();
    write_text(&cfg.dir(EVAL_DIR).join("roc.svg"), &roc_overlay_svg(&overlay))?;
    let summary = auc_table(&tables)?;
    summary.save(&cfg.out_dir.join(SUMMARY_FILE))?;
    Ok((all, summary))
}

fn reference_index(configs: &[ReprSet]) -> usize {
    let mag = ReprSet::single(Representation::Magnitude);
    configs.iter().position(|r| *r == mag).unwrap_or(0)
}

/// Paired bootstrap ensembles and WSR tests against the magnitude-only
/// reference (or the first configuration when it is absent).
pub fn cmd_compare(cfg: &ExperimentConfig, configs: &[ReprSet]) -> Result<Vec<crate::stats::ComparisonResult>> {
    if configs.len() < 2 {
        return Err(AtrError::Config("comparison needs at least two configurations".into()));
    }
    let ensembles = configs
        .iter()
        .map(|r| {
            let path = scores_path(cfg, r);
            if !path.exists() {
                return Err(AtrError::Config(format!("no scores at {}; run eval first", path.display())));
            }
            let s = Scores::from_tsv(r.clone(), &Tsv::load(&path)?)?;
            bootstrap_auc(&r.title(), &s.scores, &s.labels, cfg.eval.bootstrap, cfg.seed)
        })
        .collect::<Result<Vec<AucEnsemble>>>()?;
    let ri = reference_index(configs);
    let challengers: Vec<AucEnsemble> =
        ensembles.iter().enumerate().filter(|(i, _)| *i != ri).map(|(_, e)| e.clone()).collect();
    let results = compare_configs(&ensembles[ri], &challengers, cfg.eval.alpha, cfg.eval.comparisons)?;

    let dir = cfg.dir(COMPARE_DIR);
    let mut header = vec!["replicate".to_string()];
    header.extend(ensembles.iter().map(|e| e.name.clone()));
    let mut t = Tsv::new(header);
    for b in 0..cfg.eval.bootstrap {
        let mut row = vec![b.to_string()];
        row.extend(ensembles.iter().map(|e| format!("{:.6}", e.values[b])));
        t.push(row);
    }
    t.save(&dir.join("ensembles.tsv"))?;
    comparison_tsv(&results).save(&dir.join("wsr.tsv"))?;
    write_text(&dir.join("boxplot.svg"), &auc_boxplot_svg(&ensembles))?;
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Mi,
    Embed,
    Weights,
}

/// Silhouette-by-trial of one configuration's embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedSummary {
    pub reprs: ReprSet,
    pub silhouette: f64,
}

/// All paths' last-block features side by side.
pub fn joint_features(model: &Model<f32>, dataset: &Dataset, probe: &[usize], cfg: &ExperimentConfig) -> Result<FeatureCloud> {
    let clouds = (0..model.n_paths())
        .map(|p| extract_features(model, dataset, probe, p, &cfg.train.preprocess))
        .collect::<Result<Vec<_>>>()?;
    let d: usize = clouds.iter().map(|c| c.d).sum();
    let n = probe.len();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for c in &clouds {
            data.extend_from_slice(c.row(i));
        }
    }
    FeatureCloud::new(n, d, data, clouds[0].meta.clone())
}

/// t-SNE of the last-block features on a stratified test probe, scored by
/// silhouette over trial names.
pub fn embed_config(cfg: &ExperimentConfig, reprs: &ReprSet, dataset: &Dataset, seed: u64) -> Result<(crate::latent::Embedding2D, FeatureCloud, f64)> {
    let model = load_model(cfg, reprs)?;
    let probe = probe_indices(dataset, Split::Test, cfg.analysis.embed_size, cfg.seed);
    let cloud = joint_features(&model, dataset, &probe, cfg)?;
    let opts = TsneOptions {
        perplexity: cfg.analysis.perplexity,
        iterations: cfg.analysis.tsne_iterations,
        seed,
        ..TsneOptions::default()
    };
    let emb = tsne(&cloud, &opts)?;
    let groups: Vec<&str> = cloud.meta.iter().map(|m| m.trial_name.as_str()).collect();
    let sil = silhouette(&emb.coords, 2, &groups)?;
    Ok((emb, cloud, sil))
}

fn filter_panel(filters: &[RealChip]) -> Result<RealChip> {
    let (h, w) = (filters[0].height(), filters[0].width());
    let lo = filters.iter().flat_map(|f| f.values().iter().copied()).fold(f64::INFINITY, f64::min);
    let width = filters.len() * (w + 1) - 1;
    RealChip::from_fn(h, width, ReprKind::Generic, |r, c| {
        let (i, x) = (c / (w + 1), c % (w + 1));
        if x == w { lo } else { filters[i].at(r, x) }
    })
}

pub fn cmd_analyze(cfg: &ExperimentConfig, configs: &[ReprSet], which: Analysis, dataset: &Dataset) -> Result<()> {
    let dir = cfg.dir(ANALYSIS_DIR);
    match which {
        Analysis::Mi => {
            let models = configs
                .iter()
                .map(|r| load_model(cfg, r).map(|m| (r.title(), m)))
                .collect::<Result<Vec<_>>>()?;
            let named: Vec<(String, &Model<f32>)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
            let pairs = default_mi_pairs(&named);
            let probe = probe_indices(dataset, Split::Test, cfg.analysis.probe_size, cfg.seed);
            let opts = MiOptions {
                k: cfg.analysis.k,
                pca_dims: cfg.analysis.pca_dims,
                seed: cfg.seed,
            };
            let rows = mi_report(&named, &pairs, dataset, &probe, &cfg.train.preprocess, &opts)?;
            mi_tsv(&rows, probe.len(), opts.k).save(&dir.join("mi.tsv"))?;
        }
        Analysis::Embed => {
            let mut t = Tsv::new(["config", "n", "silhouette_by_trial"]);
            for reprs in configs {
                let (emb, cloud, sil) = embed_config(cfg, reprs, dataset, cfg.seed)?;
                emb.to_tsv(&cloud.meta).save(&dir.join(format!("embedding_{reprs}.tsv")))?;
                let points: Vec<(f64, f64)> = (0..cloud.n).map(|i| emb.point(i)).collect();
                let groups: Vec<String> = cloud.meta.iter().map(|m| m.trial_name.clone()).collect();
                write_text(
                    &dir.join(format!("embedding_{reprs}.svg")),
                    &scatter_svg(&reprs.title(), &points, &groups),
                )?;
                t.push([reprs.to_string(), cloud.n.to_string(), format!("{sil:.4}")]);
            }
            t.save(&dir.join("silhouette.tsv"))?;
        }
        Analysis::Weights => {
            for reprs in configs {
                let model = load_model(cfg, reprs)?;
                let wdir = dir.join("weights").join(reprs.to_string());
                for map in unflatten_dense_weights(&model)? {
                    let name = map.repr.name();
                    map.coherent.save_pgm(&wdir.join(format!("{name}_dense_coherent.pgm")))?;
                    map.coherent.save_rep(&wdir.join(format!("{name}_dense_coherent.rep")))?;
                    for (c, ch) in map.channels.iter().enumerate() {
                        ch.save_rep(&wdir.join(format!("{name}_dense_ch{c:02}.rep")))?;
                    }
                }
                for (p, repr) in reprs.as_slice().iter().enumerate() {
                    let filters = first_layer_filters(&model, p)?;
                    filter_panel(&filters)?.save_pgm(&wdir.join(format!("{}_conv1_panel.pgm", repr.name())))?;
                    for (o, f) in filters.iter().enumerate() {
                        f.save_rep(&wdir.join(format!("{}_conv1_f{o}.rep", repr.name())))?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// The whole grid: data, pilots when requested, training, evaluation,
/// comparison and every analysis. Returns the summary table.
pub fn cmd_all(cfg: &mut ExperimentConfig) -> Result<Tsv> {
    let dataset = step("synth", cmd_synth(cfg))?;
    let configs = cfg.configurations.clone();
    let needs = |cfg: &ExperimentConfig, lr: bool| {
        configs.iter().any(|r| {
            let (l, d) = cfg.choices(r);
            (if lr { l } else { d }) == Choice::Pilot
        })
    };
    if needs(cfg, true) {
        step("pilot lr", cmd_pilot(cfg, PilotKind::LearningRate, &dataset))?;
    }
    if needs(cfg, false) {
        step("pilot dropout", cmd_pilot(cfg, PilotKind::Dropout, &dataset))?;
    }
    for reprs in &configs {
        step(&format!("train {reprs}"), cmd_train(cfg, reprs, &dataset))?;
    }
    let (_, summary) = step("eval", cmd_eval(cfg, &configs, &dataset))?;
    if configs.len() >= 2 {
        step("compare", cmd_compare(cfg, &configs))?;
    }
    step("analyze mi", cmd_analyze(cfg, &configs, Analysis::Mi, &dataset))?;
    step("analyze embed", cmd_analyze(cfg, &configs, Analysis::Embed, &dataset))?;
    step("analyze weights", cmd_analyze(cfg, &configs, Analysis::Weights, &dataset))?;
    Ok(summary)
}

/// Reads back a run's summary table.
pub fn read_summary(out_dir: &Path) -> Result<Tsv> {
    Tsv::parse(&read_text(&out_dir.join(SUMMARY_FILE))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(ExperimentConfig::parse(&c.render()).unwrap(), c);
        assert_eq!(c.configurations.len(), 6);
    }

    #[test]
    fn parsing_and_overrides() {
        let text = "seed = 9\nout = /tmp/x\n\n[synth]\nchips_per_trial = 50\ntrials = A, B\n\n[trial.B]\ngain_db = 6\n\n\
                    [train]\nconfigurations = mag; mag+psd\nlr = pilot\n\n[train.mag+psd]\ndropout = 0.75\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.synth.seed, 9);
        assert_eq!(c.synth.trials[1].gain_db, 6.0);
        assert_eq!(c.synth.trials[0], TrialProfile::new("A"));
        assert_eq!(c.lr, Choice::Pilot);
        let mp: ReprSet = "mag,psd".parse().unwrap();
        assert!(c.train_config(&mp).is_err());
        assert_eq!(ExperimentConfig::parse(&c.render()).unwrap(), c);

        let mut c2 = c.clone();
        c2.apply(&Overrides {
            lr: Some(1e-4),
            seed: Some(3),
            psd_linear: true,
            ..Overrides::default()
        })
        .unwrap();
        let tc = c2.train_config(&mp).unwrap();
        assert_eq!((tc.learning_rate, tc.dropout_rate, tc.seed), (1e-4, 0.75, 3));
        assert_eq!(tc.preprocess.extract.psd_scale, PsdScale::Linear);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let bad = [
            "colour = red\n",
            "[train]\nbogus = 1\n",
            "[train]\nconfigurations = mag; ots\n",
            "[nope]\n",
            "[synth]\ntrials = A, B\n[trial.C]\ngain_db = 1\n",
            "[train]\nbatch_size = 7\n",
            "seed = 1\nseed = 2\n",
            "[train]\nconfigurations = mag\n[train.psd]\nlr = 0.1\n",
            "just a line\n",
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::parse(text), Err(AtrError::Config(_))), "{text:?}");
        }
        let err = ExperimentConfig::parse("[train]\nconfigurations = ots\n").unwrap_err();
        assert!(err.to_string().contains("off-the-shelf"));
        let missing = ExperimentConfig::load(Path::new("/nonexistent/exp.ini")).unwrap_err();
        assert!(matches!(missing, AtrError::Config(_)));
        assert!(missing.to_string().contains("/nonexistent/exp.ini"));
    }

    #[test]
    fn step_errors_keep_their_root() {
        let e = AtrError::in_step("train mag", AtrError::numeric("mag.conv1", "NaN"));
        assert!(matches!(e.root(), AtrError::Numeric { .. }));
        assert!(e.to_string().starts_with("train mag: "));
    }
}
