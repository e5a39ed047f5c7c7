//! Balanced-batch training with augmentation, early stopping and the
//! learning-rate / dropout pilot studies.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::chip::{ComplexChip, RealChip, ReprSet};
use crate::error::{AtrError, Result};
use crate::io::{write_text, Tsv};
use crate::nn::{Model, Rmsprop, Tensor, INPUT_HW};
use crate::repr::{extract, resize_bilinear, ExtractOptions, PsdScale};
use crate::rng::SplitMix64;
use crate::stats::auc;
use crate::synth::{Dataset, Split};

pub const HISTORY_FILE: &str = "history.tsv";
pub const MODEL_FILE: &str = "model.cnet";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.txt";

/// Chips scored per forward call at evaluation time.
const EVAL_BLOCK: usize = 256;

/// Reverses the row (cross-range) order, as if the platform had passed in
/// the opposite direction.
pub fn augment_vflip(chip: &ComplexChip) -> ComplexChip {
    let (h, w) = (chip.height(), chip.width());
    let mut out = chip.clone();
    for r in 0..h {
        let src = h - 1 - r;
        out.pixels_mut()[r * w..(r + 1) * w].copy_from_slice(&chip.pixels()[src * w..(src + 1) * w]);
    }
    out
}

/// Size of a `fraction` crop of an `h x w` chip.
pub fn crop_dims(h: usize, w: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AtrError::InvalidParameter(format!("crop fraction must be in (0, 1], got {fraction}")));
    }
    let (ch, cw) = ((fraction * h as f64).round() as usize, (fraction * w as f64).round() as usize);
    if ch < 16 || cw < 16 {
        return Err(AtrError::InvalidParameter(format!(
            "a {fraction} crop of {h}x{w} is {ch}x{cw}, below 16 pixels"
        )));
    }
    Ok((ch.min(h), cw.min(w)))
}

/// Crop at a uniformly random valid offset.
pub fn augment_random_crop(chip: &ComplexChip, fraction: f64, rng: &mut SplitMix64) -> Result<ComplexChip> {
    let (ch, cw) = crop_dims(chip.height(), chip.width(), fraction)?;
    let row = rng.below(chip.height() - ch + 1);
    let col = rng.below(chip.width() - cw + 1);
    chip.window(row, col, ch, cw)
}

/// Centered crop; odd margins put the extra pixel at the bottom/right.
pub fn center_crop(chip: &ComplexChip, fraction: f64) -> Result<ComplexChip> {
    let (ch, cw) = crop_dims(chip.height(), chip.width(), fraction)?;
    chip.window((chip.height() - ch) / 2, (chip.width() - cw) / 2, ch, cw)
}

/// How a (cropped) chip becomes network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    pub crop_fraction: f64,
    pub input_hw: (usize, usize),
    pub extract: ExtractOptions,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            crop_fraction: 0.8,
            input_hw: INPUT_HW,
            extract: ExtractOptions::default(),
        }
    }
}

impl Preprocess {
    /// Every representation of an already cropped chip, resized to the
    /// network input size.
    pub fn inputs(&self, cropped: &ComplexChip, reprs: &ReprSet) -> Result<Vec<RealChip>> {
        reprs
            .as_slice()
            .iter()
            .map(|&r| {
                let rep = extract(cropped, r, &self.extract)?;
                resize_bilinear(&rep, self.input_hw.0, self.input_hw.1)
            })
            .collect()
    }

    /// Evaluation inputs: center crop, extract, resize.
    pub fn eval_inputs(&self, chip: &ComplexChip, reprs: &ReprSet) -> Result<Vec<RealChip>> {
        self.inputs(&center_crop(chip, self.crop_fraction)?, reprs)
    }

    /// Stacks per-chip inputs into one `(B, H, W, 1)` tensor per path.
    pub fn batch(&self, per_chip: Vec<Vec<RealChip>>, paths: usize) -> Result<Vec<Tensor<f32>>> {
        let mut by_path: Vec<Vec<RealChip>> = (0..paths).map(|_| Vec::with_capacity(per_chip.len())).collect();
        for chip in per_chip {
            for (p, rep) in chip.into_iter().enumerate() {
                by_path[p].push(rep);
            }
        }
        by_path.iter().map(|c| Tensor::from_chips(c)).collect()
    }

    /// Evaluation tensors for a set of chips, built in parallel.
    pub fn eval_batch(&self, chips: &[&ComplexChip], reprs: &ReprSet) -> Result<Vec<Tensor<f32>>> {
        let per_chip = chips
            .par_iter()
            .map(|c| self.eval_inputs(c, reprs))
            .collect::<Result<Vec<_>>>()?;
        self.batch(per_chip, reprs.len())
    }
}

/// Eval-mode scores in `(0, 1)` for `chips`, in order.
pub fn predict(model: &Model<f32>, chips: &[&ComplexChip], reprs: &ReprSet, pre: &Preprocess) -> Result<Vec<f64>> {
    if model.reprs() != reprs {
        return Err(AtrError::InvalidParameter(format!(
            "model takes {} but {} was requested",
            model.reprs(),
            reprs
        )));
    }
    if model.input_hw() != pre.input_hw {
        return Err(AtrError::Shape(format!(
            "model expects {:?} inputs, preprocessing makes {:?}",
            model.input_hw(),
            pre.input_hw
        )));
    }
    let mut scores = Vec::with_capacity(chips.len());
    for block in chips.chunks(EVAL_BLOCK) {
        let inputs = pre.eval_batch(block, reprs)?;
        scores.extend(model.predict(&inputs)?);
    }
    Ok(scores)
}

/// One augmented training draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    /// Index into the dataset.
    pub index: usize,
    pub label: u8,
    pub vflip: bool,
    /// Crop offset `(row, col)`.
    pub crop: (usize, usize),
}

/// Emits batches with equal class counts. The majority class is walked
/// without replacement through a reshuffled permutation; the minority class
/// is drawn with replacement and randomly flipped. Every draw gets a random
/// crop offset.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    minority: Vec<usize>,
    majority: Vec<usize>,
    minority_label: u8,
    perm: Vec<usize>,
    pos: usize,
    half: usize,
    /// Number of valid crop offsets per axis.
    offsets: (usize, usize),
    rng: SplitMix64,
}

impl BalancedSampler {
    /// `indices` and `labels` are aligned; `offsets` is the number of valid
    /// crop positions per axis.
    pub fn new(indices: &[usize], labels: &[u8], batch_size: usize, offsets: (usize, usize), seed: u64) -> Result<Self> {
        if batch_size < 2 || !batch_size.is_multiple_of(2) {
            return Err(AtrError::Config(format!("batch size must be even and >= 2, got {batch_size}")));
        }
        let pos: Vec<usize> = indices.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&i, _)| i).collect();
        let neg: Vec<usize> = indices.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&i, _)| i).collect();
        if pos.is_empty() || neg.is_empty() {
            return Err(AtrError::Config(format!(
                "balanced sampling needs both classes, got {} targets and {} clutter",
                pos.len(),
                neg.len()
            )));
        }
        let (minority, majority, minority_label) = if pos.len() <= neg.len() { (pos, neg, 1) } else { (neg, pos, 0) };
        let mut s = Self {
            perm: Vec::new(),
            pos: 0,
            half: batch_size / 2,
            minority,
            majority,
            minority_label,
            offsets: (offsets.0.max(1), offsets.1.max(1)),
            rng: SplitMix64::stream(seed, "sampler", 0),
        };
        s.reshuffle();
        Ok(s)
    }

    fn reshuffle(&mut self) {
        self.perm = self.majority.clone();
        self.rng.shuffle(&mut self.perm);
        self.pos = 0;
    }

    pub fn majority_len(&self) -> usize {
        self.majority.len()
    }

    fn crop(&mut self) -> (usize, usize) {
        (self.rng.below(self.offsets.0), self.rng.below(self.offsets.1))
    }

    /// Minority half first, then the majority half.
    pub fn next_batch(&mut self) -> Vec<Draw> {
        let mut batch = Vec::with_capacity(2 * self.half);
        for _ in 0..self.half {
            let index = self.minority[self.rng.below(self.minority.len())];
            let vflip = self.rng.bernoulli(0.5);
            let crop = self.crop();
            batch.push(Draw {
                index,
                label: self.minority_label,
                vflip,
                crop,
            });
        }
        for _ in 0..self.half {
            if self.pos == self.perm.len() {
                self.reshuffle();
            }
            let index = self.perm[self.pos];
            self.pos += 1;
            let crop = self.crop();
            batch.push(Draw {
                index,
                label: 1 - self.minority_label,
                vflip: false,
                crop,
            });
        }
        batch
    }
}

/// Patience rule: stop once the best epoch is `patience` epochs old.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None }
    }

    /// Records `auc` for `epoch`; returns `(is_new_best, should_stop)`.
    /// Only a strict improvement moves the best epoch.
    pub fn observe(&mut self, epoch: usize, auc: f64) -> (bool, bool) {
        let improved = self.best.is_none_or(|(_, b)| auc > b);
        if improved {
            self.best = Some((epoch, auc));
        }
        let best_epoch = self.best.map_or(epoch, |b| b.0);
        (improved, epoch - best_epoch >= self.patience)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub reprs: ReprSet,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Validation by default; Test reproduces the leaky protocol.
    pub early_stop_split: Split,
    /// `None` means `ceil(2 * majority / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    pub preprocess: Preprocess,
}

impl TrainConfig {
    pub fn new(reprs: ReprSet) -> Self {
        Self {
            reprs,
            learning_rate: 1e-3,
            dropout_rate: 0.5,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            early_stop_split: Split::Validation,
            steps_per_epoch: None,
            preprocess: Preprocess::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AtrError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout_rate));
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return bad(format!("batch_size must be even and >= 2, got {}", self.batch_size));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be >= 1".into());
        }
        if self.early_stop_split == Split::Train {
            return bad("early stopping cannot monitor the training split".into());
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be >= 1".into());
        }
        Ok(())
    }

    /// `key = value` lines covering every field.
    pub fn render(&self) -> String {
        let p = &self.preprocess;
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("inputs", self.reprs.to_string());
        line("lr", format!("{}", self.learning_rate));
        line("dropout", format!("{}", self.dropout_rate));
        line("batch_size", self.batch_size.to_string());
        line("max_epochs", self.max_epochs.to_string());
        line("patience", self.patience.to_string());
        line("seed", self.seed.to_string());
        line("early_stop_on", self.early_stop_split.to_string());
        line(
            "steps_per_epoch",
            self.steps_per_epoch.map_or_else(|| "auto".into(), |n| n.to_string()),
        );
        line("crop_fraction", format!("{}", p.crop_fraction));
        line("input_size", format!("{}x{}", p.input_hw.0, p.input_hw.1));
        line("dynamic_range_db", format!("{}", p.extract.dynamic_range_db));
        line(
            "psd_scale",
            match p.extract.psd_scale {
                PsdScale::Log => "log".into(),
                PsdScale::Linear => "linear".into(),
            },
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub monitored_auc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot from the best monitored epoch.
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_auc: f64,
}

impl TrainOutcome {
    pub fn history_tsv(&self) -> Tsv {
        let mut t = Tsv::new(["epoch", "train_loss", "monitored_auc", "seconds"]);
        for r in &self.history {
            t.push([
                r.epoch.to_string(),
                format!("{:.6}", r.train_loss),
                format!("{:.6}", r.monitored_auc),
                format!("{:.3}", r.seconds),
            ]);
        }
        t
    }

    /// Writes the model, history and resolved configuration below `dir`.
    pub fn save(&self, dir: &Path, config: &TrainConfig) -> Result<()> {
        self.model.save(&dir.join(MODEL_FILE))?;
        self.history_tsv().save(&dir.join(HISTORY_FILE))?;
        let mut manifest = config.render();
        manifest.push_str(&format!(
            "best_epoch = {}\nbest_monitored_auc = {:.6}\nepochs_run = {}\n",
            self.best_epoch,
            self.best_auc,
            self.history.len()
        ));
        write_text(&dir.join(RUN_MANIFEST_FILE), &manifest)
    }
}

fn labels_of(dataset: &Dataset, idx: &[usize]) -> Vec<u8> {
    dataset.labels(idx)
}

/// Trains on the dataset's training split, monitoring
/// `config.early_stop_split`.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    let train_idx = dataset.indices(Split::Train);
    let monitor_idx = dataset.indices(config.early_stop_split);
    train_on(config, dataset, &train_idx, &monitor_idx, true)
}

/// Training loop over explicit index sets. Without early stopping it runs
/// all `max_epochs` and still returns the best snapshot.
pub fn train_on(
    config: &TrainConfig,
    dataset: &Dataset,
    train_idx: &[usize],
    monitor_idx: &[usize],
    early_stop: bool,
) -> Result<TrainOutcome> {
    config.validate()?;
    let monitor_labels = labels_of(dataset, monitor_idx);
    if !monitor_labels.contains(&0) || !monitor_labels.contains(&1) {
        return Err(AtrError::UndefinedMetric(format!(
            "monitored split ({}) needs both classes, has {} chips",
            config.early_stop_split,
            monitor_idx.len()
        )));
    }
    let first = dataset
        .chips
        .get(*train_idx.first().ok_or_else(|| AtrError::Config("empty training split".into()))?)
        .expect("index from this dataset");
    let (h, w) = (first.height(), first.width());
    let pre = config.preprocess;
    let (ch, cw) = crop_dims(h, w, pre.crop_fraction)?;
    let mut sampler = BalancedSampler::new(
        train_idx,
        &labels_of(dataset, train_idx),
        config.batch_size,
        (h - ch + 1, w - cw + 1),
        config.seed,
    )?;
    let steps = config
        .steps_per_epoch
        .unwrap_or_else(|| (2 * sampler.majority_len()).div_ceil(config.batch_size));

    let monitor_chips: Vec<&ComplexChip> = monitor_idx.iter().map(|&i| &dataset.chips[i]).collect();
    let monitor_inputs: Vec<Vec<Tensor<f32>>> = monitor_chips
        .chunks(EVAL_BLOCK)
        .map(|b| pre.eval_batch(b, &config.reprs))
        .collect::<Result<_>>()?;

    let mut model = Model::<f32>::build(&config.reprs, pre.input_hw, config.dropout_rate, config.seed)?;
    let mut opt = Rmsprop::new(config.learning_rate, model.params())?;
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut global_step = 0u64;

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for step in 0..steps {
            let draws = sampler.next_batch();
            let per_chip = draws
                .par_iter()
                .map(|d| {
                    let chip = &dataset.chips[d.index];
                    let chip = if d.vflip { augment_vflip(chip) } else { chip.clone() };
                    pre.inputs(&chip.window(d.crop.0, d.crop.1, ch, cw)?, &config.reprs)
                })
                .collect::<Result<Vec<_>>>()?;
            let inputs = pre.batch(per_chip, config.reprs.len())?;
            let labels: Vec<f64> = draws.iter().map(|d| d.label as f64).collect();
            let mut rng = SplitMix64::stream(config.seed, "dropout", global_step);
            let (loss, grads) = model.loss_and_gradients(&inputs, &labels, &mut rng).map_err(|e| match e {
                AtrError::Numeric { location, detail } => {
                    AtrError::numeric(format!("{location} (epoch {epoch}, step {step})"), detail)
                }
                other => other,
            })?;
            opt.step(model.params_mut(), &grads)?;
            loss_sum += loss;
            global_step += 1;
        }
        let mut scores = Vec::with_capacity(monitor_idx.len());
        for inputs in &monitor_inputs {
            scores.extend(model.predict(inputs)?);
        }
        let monitored_auc = auc(&scores, &monitor_labels)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            monitored_auc,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "[{}] epoch {epoch}: loss {:.4}, {} AUC {:.4} ({:.1}s)",
            config.reprs,
            record.train_loss,
            config.early_stop_split,
            monitored_auc,
            record.seconds
        );
        history.push(record);
        let (improved, stop) = stopper.observe(epoch, monitored_auc);
        if improved {
            best = model.clone();
        }
        if early_stop && stop {
            log::info!("[{}] early stop after epoch {epoch}", config.reprs);
            break;
        }
    }
    let (best_epoch, best_auc) = stopper.best().expect("at least one epoch");
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        best_auc,
    })
}

pub const LR_CANDIDATES: [f64; 6] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
pub const DROPOUT_CANDIDATES: [f64; 5] = [0.0, 0.5, 0.66, 0.75, 0.9];
pub const LR_PILOT_EPOCHS: usize = 10;
pub const DROPOUT_PILOT_EPOCHS: usize = 20;
pub const PILOT_FRACTION: f64 = 0.1;
pub const MIN_PILOT_CHIPS: usize = 200;

/// Strictly decreasing epoch losses.
pub fn is_monotone(losses: &[f64]) -> bool {
    losses.windows(2).all(|w| w[1] < w[0])
}

/// Largest rate with monotone losses; without one, the smallest rate and
/// `false`.
pub fn select_learning_rate(results: &[(f64, Vec<f64>)]) -> (f64, bool) {
    let best = results
        .iter()
        .filter(|(_, l)| is_monotone(l))
        .map(|r| r.0)
        .fold(None, |acc: Option<f64>, lr| Some(acc.map_or(lr, |a| a.max(lr))));
    match best {
        Some(lr) => (lr, true),
        None => {
            let smallest = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
            log::warn!("no learning rate gave monotone convergence; using the smallest, {smallest}");
            (smallest, false)
        }
    }
}

/// Rate with the highest AUC; ties go to the larger rate.
pub fn select_dropout(results: &[(f64, f64)]) -> f64 {
    results
        .iter()
        .copied()
        .fold(None, |acc: Option<(f64, f64)>, (rate, a)| match acc {
            Some((br, ba)) if a < ba || (a == ba && rate < br) => Some((br, ba)),
            _ => Some((rate, a)),
        })
        .map_or(0.0, |r| r.0)
}

/// Stratified `fraction` of the training split, raised to `min_size` chips
/// when the split is large enough. Chronological order is kept.
pub fn pilot_subset(dataset: &Dataset, fraction: f64, min_size: usize, seed: u64) -> Vec<usize> {
    let train = dataset.indices(Split::Train);
    let fraction = fraction.max(min_size as f64 / train.len().max(1) as f64).min(1.0);
    let mut out = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = train.iter().copied().filter(|&i| dataset.records[i].label == class).collect();
        let k = ((members.len() as f64 * fraction).round() as usize).clamp(1.min(members.len()), members.len());
        SplitMix64::stream(seed, "pilot-subset", class as u64).shuffle(&mut members);
        out.extend_from_slice(&members[..k]);
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrPilotReport {
    /// `(rate, mean training loss per epoch)` for each candidate.
    pub runs: Vec<(f64, Vec<f64>)>,
    pub selected: f64,
    pub monotone_found: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutPilotReport {
    /// `(rate, best validation AUC)`.
    pub runs: Vec<(f64, f64)>,
    pub selected: f64,
}

fn check_pilot_subset(n: usize) -> Result<()> {
    if n < MIN_PILOT_CHIPS {
        return Err(AtrError::InvalidParameter(format!(
            "pilot subset has {n} chips, at least {MIN_PILOT_CHIPS} are needed"
        )));
    }
    Ok(())
}

/// Trains one fresh model per candidate on `subset` for `epochs` epochs and
/// keeps the largest rate whose epoch losses strictly decrease.
pub fn lr_pilot_on(
    base: &TrainConfig,
    dataset: &Dataset,
    subset: &[usize],
    candidates: &[f64],
    epochs: usize,
) -> Result<LrPilotReport> {
    let monitor = dataset.indices(Split::Validation);
    let runs = candidates
        .iter()
        .map(|&lr| {
            let cfg = TrainConfig {
                learning_rate: lr,
                max_epochs: epochs,
                ..base.clone()
            };
            let out = train_on(&cfg, dataset, subset, &monitor, false)?;
            Ok((lr, out.history.iter().map(|r| r.train_loss).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (selected, monotone_found) = select_learning_rate(&runs);
    Ok(LrPilotReport {
        runs,
        selected,
        monotone_found,
    })
}

pub fn lr_pilot(base: &TrainConfig, dataset: &Dataset) -> Result<LrPilotReport> {
    let subset = pilot_subset(dataset, PILOT_FRACTION, MIN_PILOT_CHIPS, base.seed);
    check_pilot_subset(subset.len())?;
    lr_pilot_on(base, dataset, &subset, &LR_CANDIDATES, LR_PILOT_EPOCHS)
}

/// One short run per dropout rate; picks the best validation AUC.
pub fn dropout_pilot_on(
    base: &TrainConfig,
    dataset: &Dataset,
    subset: &[usize],
    rates: &[f64],
    epochs: usize,
) -> Result<DropoutPilotReport> {
    let monitor = dataset.indices(Split::Validation);
    let runs = rates
        .iter()
        .map(|&rate| {
            let cfg = TrainConfig {
                dropout_rate: rate,
                max_epochs: epochs,
                ..base.clone()
            };
            Ok((rate, train_on(&cfg, dataset, subset, &monitor, false)?.best_auc))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DropoutPilotReport {
        selected: select_dropout(&runs),
        runs,
    })
}

pub fn dropout_pilot(base: &TrainConfig, dataset: &Dataset) -> Result<DropoutPilotReport> {
    let subset = pilot_subset(dataset, PILOT_FRACTION, MIN_PILOT_CHIPS, base.seed);
    check_pilot_subset(subset.len())?;
    dropout_pilot_on(base, dataset, &subset, &DROPOUT_CANDIDATES, DROPOUT_PILOT_EPOCHS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::Representation;
    use crate::synth::{generate, insert_target, gen_speckle, SynthConfig, TargetMask, TrialProfile};
    use num_complex::Complex64;

    fn numbered(h: usize, w: usize) -> ComplexChip {
        ComplexChip::from_fn(h, w, |r, c| Complex64::new(r as f64, c as f64)).unwrap()
    }

    #[test]
    fn vflip_is_an_involution() {
        let c = numbered(20, 17);
        let f = augment_vflip(&c);
        assert_eq!(f.at(0, 5), c.at(19, 5));
        assert_eq!(augment_vflip(&f), c);
        let mut a: Vec<u64> = c.pixels().iter().map(|z| z.norm().to_bits()).collect();
        let mut b: Vec<u64> = f.pixels().iter().map(|z| z.norm().to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn crops() {
        let c = numbered(100, 100);
        let mut rng = SplitMix64::new(1);
        let mut seen_r = [false; 21];
        for _ in 0..2000 {
            let k = augment_random_crop(&c, 0.8, &mut rng).unwrap();
            assert_eq!((k.height(), k.width()), (80, 80));
            let (r0, c0) = (k.at(0, 0).re as usize, k.at(0, 0).im as usize);
            assert!(r0 <= 20 && c0 <= 20);
            seen_r[r0] = true;
            assert_eq!(k.at(79, 79), c.at(r0 + 79, c0 + 79));
        }
        assert!(seen_r.iter().all(|&s| s));
        assert_eq!(augment_random_crop(&c, 1.0, &mut rng).unwrap(), c);
        assert_eq!(center_crop(&c, 0.8).unwrap().at(0, 0), c.at(10, 10));
        assert!(augment_random_crop(&numbered(18, 18), 0.8, &mut rng).is_err());
    }

    #[test]
    fn crops_keep_the_target_highlight() {
        for seed in 0..30 {
            let mut rng = SplitMix64::new(seed);
            let chip = gen_speckle(100, 100, 1.0, &mut rng).unwrap();
            let (_, mask) = insert_target(&chip, &mut rng);
            let total = mask.count(TargetMask::HIGHLIGHT);
            for r in [0, 20] {
                for c in [0, 20] {
                    let kept = mask.count_in_window(TargetMask::HIGHLIGHT, r, c, 80, 80);
                    assert!(2 * kept >= total);
                }
            }
        }
    }

    #[test]
    fn sampler_balance_and_without_replacement() {
        let idx: Vec<usize> = (0..110).collect();
        let labels: Vec<u8> = (0..110).map(|i| (i % 11 == 0) as u8).collect();
        let mut s = BalancedSampler::new(&idx, &labels, 20, (21, 21), 3).unwrap();
        let mut majority_seen = Vec::new();
        for _ in 0..10 {
            let b = s.next_batch();
            assert_eq!(b.iter().filter(|d| d.label == 1).count(), 10);
            for d in &b {
                assert_eq!(labels[d.index], d.label);
                assert!(d.crop.0 <= 20 && d.crop.1 <= 20);
                if d.label == 0 {
                    assert!(!d.vflip);
                    majority_seen.push(d.index);
                }
            }
        }
        let mut first: Vec<usize> = majority_seen[..100].to_vec();
        first.sort_unstable();
        first.dedup();
        assert_eq!(first.len(), 100, "each majority chip once before repeats");

        let mut a = BalancedSampler::new(&idx, &labels, 20, (21, 21), 3).unwrap();
        let mut b = BalancedSampler::new(&idx, &labels, 20, (21, 21), 3).unwrap();
        for _ in 0..5 {
            assert_eq!(a.next_batch(), b.next_batch());
        }
        assert!(BalancedSampler::new(&idx, &[0; 110], 20, (1, 1), 3).is_err());
        assert!(BalancedSampler::new(&idx, &labels, 7, (1, 1), 3).is_err());
    }

    #[test]
    fn early_stopping_rule() {
        let mut s = EarlyStopper::new(20);
        let mut stop_at = None;
        for epoch in 1..=100 {
            let auc = if epoch <= 5 { 0.5 + 0.05 * epoch as f64 } else { 0.6 };
            if s.observe(epoch, auc).1 {
                stop_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stop_at, Some(25));
        assert_eq!(s.best(), Some((5, 0.75)));

        // equal values do not move the best epoch
        let mut s = EarlyStopper::new(2);
        assert_eq!(s.observe(1, 0.7), (true, false));
        assert_eq!(s.observe(2, 0.7), (false, false));
        assert_eq!(s.observe(3, 0.7), (false, true));
    }

    #[test]
    fn pilot_selection_rules() {
        let runs = vec![
            (1e-4, vec![0.7, 0.6, 0.5]),
            (1e-3, vec![0.7, 0.5, 0.4]),
            (1e-2, vec![0.7, 0.8, 0.3]),
        ];
        assert_eq!(select_learning_rate(&runs), (1e-3, true));
        let mut rev = runs.clone();
        rev.reverse();
        assert_eq!(select_learning_rate(&rev), (1e-3, true));
        let flat = vec![(1e-3, vec![0.69, 0.69]), (1e-5, vec![0.69, 0.69])];
        assert_eq!(select_learning_rate(&flat), (1e-5, false));

        let equal: Vec<(f64, f64)> = DROPOUT_CANDIDATES.iter().map(|&r| (r, 0.8)).collect();
        assert_eq!(select_dropout(&equal), 0.9);
        let one = vec![(0.0, 0.7), (0.5, 0.9), (0.9, 0.8)];
        assert_eq!(select_dropout(&one), 0.5);
    }

    fn small_dataset() -> Dataset {
        let trials = vec![
            TrialProfile::new("A"),
            TrialProfile { texture_depth: 0.5, ..TrialProfile::new("B") },
            TrialProfile::new("C"),
            TrialProfile::new("D"),
        ];
        let mut cfg = SynthConfig::new(4, trials, 40);
        cfg.chip_dims = (40, 40);
        cfg.clutter_to_target_ratio = 3.0;
        generate(&cfg).unwrap().0
    }

    fn small_config() -> TrainConfig {
        let mut c = TrainConfig::new(ReprSet::single(Representation::Magnitude));
        c.preprocess.input_hw = (32, 32);
        c.batch_size = 8;
        c.max_epochs = 2;
        c.steps_per_epoch = Some(3);
        c.seed = 5;
        c
    }

    #[test]
    fn training_is_deterministic_and_returns_the_best_epoch() {
        let ds = small_dataset();
        let cfg = small_config();
        let a = train(&cfg, &ds).unwrap();
        let b = train(&cfg, &ds).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        let strip = |h: &[EpochRecord]| h.iter().map(|r| (r.epoch, r.train_loss, r.monitored_auc)).collect::<Vec<_>>();
        assert_eq!(strip(&a.history), strip(&b.history));
        assert_eq!(a.history.len(), 2);
        let max = a.history.iter().map(|r| r.monitored_auc).fold(f64::MIN, f64::max);
        assert_eq!(a.best_auc, max);
        assert_eq!(a.history[a.best_epoch - 1].monitored_auc, max);

        // the returned snapshot reproduces the recorded AUC
        let val = ds.indices(Split::Validation);
        let chips: Vec<&ComplexChip> = val.iter().map(|&i| &ds.chips[i]).collect();
        let s = predict(&a.model, &chips, &cfg.reprs, &cfg.preprocess).unwrap();
        assert_eq!(auc(&s, &ds.labels(&val)).unwrap(), a.best_auc);

        let one = TrainConfig { max_epochs: 1, ..cfg };
        assert_eq!(train(&one, &ds).unwrap().history.len(), 1);
    }

    #[test]
    fn predict_contract() {
        let ds = small_dataset();
        let cfg = small_config();
        let m = Model::<f32>::build(&cfg.reprs, (32, 32), 0.5, 1).unwrap();
        let chips: Vec<&ComplexChip> = ds.chips.iter().take(6).collect();
        let s = predict(&m, &chips, &cfg.reprs, &cfg.preprocess).unwrap();
        assert_eq!(s, predict(&m, &chips, &cfg.reprs, &cfg.preprocess).unwrap());
        assert!(s.iter().all(|&p| p > 0.0 && p < 1.0));
        let rev: Vec<&ComplexChip> = chips.iter().rev().copied().collect();
        let sr = predict(&m, &rev, &cfg.reprs, &cfg.preprocess).unwrap();
        assert_eq!(sr.iter().rev().copied().collect::<Vec<_>>(), s);
        let other = ReprSet::single(Representation::Psd);
        assert!(predict(&m, &chips, &other, &cfg.preprocess).is_err());
    }

    #[test]
    fn pilot_runners_and_subset() {
        let ds = small_dataset();
        let sub = pilot_subset(&ds, 0.5, 0, 1);
        assert!((59..=61).contains(&pilot_subset(&ds, 0.1, 60, 1).len()));
        let labels = ds.labels(&sub);
        assert!(labels.contains(&0) && labels.contains(&1));
        assert!(sub.iter().all(|&i| ds.records[i].split == Split::Train));
        assert!(lr_pilot(&small_config(), &ds).is_err());

        let cfg = small_config();
        let report = lr_pilot_on(&cfg, &ds, &sub, &[1e-4, 1e-3], 2).unwrap();
        assert_eq!(report.runs.len(), 2);
        assert!(report.runs.iter().all(|r| r.1.len() == 2));
        let again = lr_pilot_on(&cfg, &ds, &sub, &[1e-4, 1e-3], 2).unwrap();
        assert_eq!(report, again);
        let d = dropout_pilot_on(&cfg, &ds, &sub, &[0.0, 0.5], 1).unwrap();
        assert!([0.0, 0.5].contains(&d.selected));
    }

    #[test]
    fn config_validation_and_rendering() {
        let mut c = small_config();
        assert!(c.validate().is_ok());
        c.batch_size = 3;
        assert!(c.validate().is_err());
        let c = small_config();
        let text = c.render();
        assert!(text.contains("inputs = mag\n"));
        assert!(text.contains("early_stop_on = validation\n"));
    }
}
