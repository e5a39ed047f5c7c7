//! Synthetic single-look complex chips.
//!
//! A chip is built in four steps:
//!
//! 1. circular-Gaussian speckle ([`gen_speckle`]), so background magnitude is
//!    Rayleigh;
//! 2. a trial-dependent multiplicative seafloor texture and gain
//!    ([`apply_texture`]);
//! 3. an object: a target with an elliptical coherent highlight and a range
//!    shadow ([`insert_target`]), or a clutter object, either a shadowless
//!    bright blob or a patch of spectrally different speckle
//!    ([`insert_clutter_object`]);
//! 4. the trial's imaging band limit ([`apply_system_response`]), which
//!    shapes the 2D spectrum the way matched-filter and beam-pattern choices
//!    do.
//!
//! Rows are the cross-range (along-track) axis, columns the range axis; a
//! shadow therefore trails its highlight towards larger column indices.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::chip::ComplexChip;
use crate::error::{AtrError, Result};
use crate::io::{read_text, write_text, Tsv};
use crate::repr::fft::{dft2d_in_place, Direction};
use crate::rng::SplitMix64;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CHIP_DIR: &str = "chips";

/// Environment and processing conditions of one collection trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialProfile {
    pub name: String,
    /// Per-component standard deviation of the background speckle.
    pub speckle_sigma: f64,
    pub gain_db: f64,
    /// Texture correlation lengths in pixels as (range, cross-range).
    pub texture_corr_len: (f64, f64),
    /// Texture modulation depth in `[0, 1)`.
    pub texture_depth: f64,
    /// Fraction of the Nyquist band passed by the imaging system as
    /// (range, cross-range); `(1, 1)` leaves the speckle white.
    pub bandwidth: (f64, f64),
}

impl TrialProfile {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            speckle_sigma: 1.0,
            gain_db: 0.0,
            texture_corr_len: (4.0, 4.0),
            texture_depth: 0.0,
            bandwidth: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AtrError::InvalidParameter(format!("trial {}: {msg}", self.name)));
        if self.name.is_empty() || self.name.contains(char::is_whitespace) {
            return bad("name must be non-empty without whitespace".into());
        }
        if !(self.speckle_sigma > 0.0) || !self.speckle_sigma.is_finite() {
            return bad(format!("speckle_sigma must be positive, got {}", self.speckle_sigma));
        }
        if !(0.0..1.0).contains(&self.texture_depth) {
            return bad(format!("texture_depth must be in [0, 1), got {}", self.texture_depth));
        }
        let (a, b) = self.texture_corr_len;
        if !(a >= 1.0 && b >= 1.0) {
            return bad(format!("correlation lengths must be >= 1, got ({a}, {b})"));
        }
        let (br, bc) = self.bandwidth;
        if !(br > 0.0 && br <= 1.0 && bc > 0.0 && bc <= 1.0) {
            return bad(format!("bandwidth fractions must be in (0, 1], got ({br}, {bc})"));
        }
        if !self.gain_db.is_finite() {
            return bad("gain_db must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// In chronological order.
    pub trials: Vec<TrialProfile>,
    pub chips_per_trial: usize,
    pub clutter_to_target_ratio: f64,
    /// Chip size in pixels as (height, width).
    pub chip_dims: (usize, usize),
    pub extent_m: (f64, f64),
}

impl SynthConfig {
    pub fn new(seed: u64, trials: Vec<TrialProfile>, chips_per_trial: usize) -> Self {
        Self {
            seed,
            trials,
            chips_per_trial,
            clutter_to_target_ratio: 10.0,
            chip_dims: (100, 100),
            extent_m: (5.0, 5.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials.len() < 2 {
            return Err(AtrError::InvalidParameter(
                "at least two trials are needed so train and test are non-empty".into(),
            ));
        }
        for t in &self.trials {
            t.validate()?;
        }
        let mut names: Vec<&str> = self.trials.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.trials.len() {
            return Err(AtrError::InvalidParameter("trial names must be unique".into()));
        }
        if !(self.clutter_to_target_ratio >= 1.0) {
            return Err(AtrError::InvalidParameter(format!(
                "clutter_to_target_ratio must be >= 1, got {}",
                self.clutter_to_target_ratio
            )));
        }
        if self.chips_per_trial < 2 {
            return Err(AtrError::InvalidParameter("chips_per_trial must be >= 2".into()));
        }
        let (h, w) = self.chip_dims;
        if h < 32 || w < 32 {
            return Err(AtrError::InvalidParameter(format!(
                "chips must be at least 32x32 to hold an object, got {h}x{w}"
            )));
        }
        Ok(())
    }

    /// Number of targets among one trial's chips.
    pub fn targets_per_trial(&self) -> usize {
        let n = self.chips_per_trial as f64 / (self.clutter_to_target_ratio + 1.0);
        (n.round() as usize).clamp(1, self.chips_per_trial - 1)
    }
}

/// Circular complex Gaussian speckle: independent `N(0, sigma^2)` real and
/// imaginary parts, so magnitudes are Rayleigh with scale `sigma`.
pub fn gen_speckle(h: usize, w: usize, sigma: f64, rng: &mut SplitMix64) -> Result<ComplexChip> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(AtrError::InvalidParameter(format!("speckle sigma must be positive, got {sigma}")));
    }
    let pixels = (0..h * w)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    ComplexChip::new(h, w, pixels)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable circular Gaussian blur of a row-major grid. `sigma_rows` blurs
/// along the row index (cross-range), `sigma_cols` along columns (range).
fn blur_periodic<T>(data: &[T], h: usize, w: usize, sigma_rows: f64, sigma_cols: f64) -> Vec<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let kc = gaussian_kernel(sigma_cols);
    let rc = (kc.len() / 2) as isize;
    let mut tmp = vec![T::default(); h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = T::default();
            for (j, &kv) in kc.iter().enumerate() {
                let cc = (c as isize + j as isize - rc).rem_euclid(w as isize) as usize;
                acc = acc + data[r * w + cc] * kv;
            }
            tmp[r * w + c] = acc;
        }
    }
    let kr = gaussian_kernel(sigma_rows);
    let rr = (kr.len() / 2) as isize;
    let mut out = vec![T::default(); h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = T::default();
            for (j, &kv) in kr.iter().enumerate() {
                let rr_ = (r as isize + j as isize - rr).rem_euclid(h as isize) as usize;
                acc = acc + tmp[rr_ * w + c] * kv;
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Zero-mean, unit-variance smooth random field: white noise low-passed by a
/// Gaussian kernel with the given (range, cross-range) correlation lengths.
pub fn smooth_field(h: usize, w: usize, corr_len: (f64, f64), rng: &mut SplitMix64) -> Vec<f64> {
    let white: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
    let mut field = blur_periodic(&white, h, w, corr_len.1, corr_len.0);
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let std = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in &mut field {
        *v = if std > 0.0 { (*v - mean) / std } else { 0.0 };
    }
    field
}

/// Smallest texture multiplier. `1 + depth * s` can go negative for large
/// `|s|`; flooring it keeps the phase untouched.
const TEXTURE_FLOOR: f64 = 0.05;

/// Multiplies each magnitude by `1 + depth * s(x, y)` for a smooth field `s`
/// and applies the trial gain. Phases are unchanged.
pub fn apply_texture(chip: &ComplexChip, profile: &TrialProfile, rng: &mut SplitMix64) -> Result<ComplexChip> {
    profile.validate()?;
    let (h, w) = (chip.height(), chip.width());
    let field = smooth_field(h, w, profile.texture_corr_len, rng);
    let gain = 10f64.powf(profile.gain_db / 20.0);
    let mut out = chip.clone();
    if profile.texture_depth == 0.0 {
        for z in out.pixels_mut() {
            *z *= gain;
        }
    } else {
        for (z, s) in out.pixels_mut().iter_mut().zip(&field) {
            let t = (1.0 + profile.texture_depth * s).max(TEXTURE_FLOOR);
            *z *= t * gain;
        }
    }
    Ok(out)
}

/// Restricts the chip's spectrum to the centered band `|f| <= b / 2`
/// (normalized frequency, per axis) and rescales so the total energy is
/// unchanged. Band-limited circular Gaussian speckle is still circular
/// Gaussian, only spatially correlated.
pub fn apply_system_response(chip: &ComplexChip, bandwidth: (f64, f64)) -> ComplexChip {
    let (br, bc) = bandwidth;
    if br >= 1.0 && bc >= 1.0 {
        return chip.clone();
    }
    let (h, w) = (chip.height(), chip.width());
    let mut data = chip.pixels().to_vec();
    dft2d_in_place(&mut data, h, w, Direction::Forward);
    let freq = |k: usize, n: usize| -> f64 {
        let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        (k / n as f64).abs()
    };
    for k in 0..h {
        let keep_r = br >= 1.0 || freq(k, h) <= br / 2.0;
        for l in 0..w {
            if !(keep_r && (bc >= 1.0 || freq(l, w) <= bc / 2.0)) {
                data[k * w + l] = Complex64::default();
            }
        }
    }
    dft2d_in_place(&mut data, h, w, Direction::Inverse);
    let before: f64 = chip.pixels().iter().map(|z| z.norm_sqr()).sum();
    let after: f64 = data.iter().map(|z| z.norm_sqr()).sum();
    let scale = if after > 0.0 { (before / after).sqrt() } else { 1.0 };
    let mut out = chip.clone();
    for (dst, src) in out.pixels_mut().iter_mut().zip(data) {
        *dst = src * scale;
    }
    out
}

/// Ground truth of an inserted target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMask {
    pub height: usize,
    pub width: usize,
    /// 0 background, [`TargetMask::HIGHLIGHT`] or [`TargetMask::SHADOW`].
    pub labels: Vec<u8>,
    pub highlight_gain: f64,
    pub shadow_gain: f64,
}

impl TargetMask {
    pub const HIGHLIGHT: u8 = 1;
    pub const SHADOW: u8 = 2;

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Mean (row, col) of the pixels carrying `label`.
    pub fn centroid(&self, label: u8) -> Option<(f64, f64)> {
        let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
        for (i, &l) in self.labels.iter().enumerate() {
            if l == label {
                sr += (i / self.width) as f64;
                sc += (i % self.width) as f64;
                n += 1;
            }
        }
        (n > 0).then(|| (sr / n as f64, sc / n as f64))
    }

    /// Number of `label` pixels inside the window `[row, row+h) x [col, col+w)`.
    pub fn count_in_window(&self, label: u8, row: usize, col: usize, h: usize, w: usize) -> usize {
        (row..(row + h).min(self.height))
            .flat_map(|r| (col..(col + w).min(self.width)).map(move |c| (r, c)))
            .filter(|&(r, c)| self.labels[r * self.width + c] == label)
            .count()
    }

    pub fn flip_rows(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            let src = self.height - 1 - r;
            out.labels[r * self.width..(r + 1) * self.width]
                .copy_from_slice(&self.labels[src * self.width..(src + 1) * self.width]);
        }
        out
    }
}

/// Inserts a target: an elliptical highlight whose magnitude is scaled by
/// `A_h ~ U[3, 6]` and whose phase is replaced by a smooth quadratic
/// (coherent) surface, followed in range by a shadow of the same cross-range
/// width scaled by `A_s ~ U[0.05, 0.3]`.
///
/// The object sits near the chip center, so any 80% crop keeps all of it.
pub fn insert_target(chip: &ComplexChip, rng: &mut SplitMix64) -> (ComplexChip, TargetMask) {
    let (h, w) = (chip.height(), chip.width());
    let (hf, wf) = (h as f64, w as f64);
    // geometry is redrawn until it fits; the ranges make that rare
    let (r0, c0, ar, ac, len) = loop {
        let r0 = rng.uniform_in(0.4, 0.6) * hf;
        let c0 = rng.uniform_in(0.32, 0.45) * wf;
        let ar = rng.uniform_in(0.05, 0.12) * hf;
        let ac = rng.uniform_in(0.03, 0.08) * wf;
        let len = rng.uniform_in(0.08, 0.22) * wf;
        let fits = r0 - ar >= 0.0 && r0 + ar < hf - 1.0 && c0 - ac >= 0.0 && c0 + ac + len < wf - 1.0;
        if fits && 2.0 * ar <= 0.4 * hf && 2.0 * ac <= 0.4 * wf {
            break (r0, c0, ar, ac, len);
        }
    };
    let highlight_gain = rng.uniform_in(3.0, 6.0);
    let shadow_gain = rng.uniform_in(0.05, 0.3);
    let phi0 = rng.uniform_in(0.0, std::f64::consts::TAU);
    let (fr, fc) = (rng.uniform_in(-0.3, 0.3), rng.uniform_in(-0.3, 0.3));
    let curvature = rng.uniform_in(-0.03, 0.03);

    let mut out = chip.clone();
    let mut labels = vec![0u8; h * w];
    for r in 0..h {
        let dr = (r as f64 - r0) / ar;
        if dr.abs() > 1.0 {
            continue;
        }
        let half = ac * (1.0 - dr * dr).sqrt();
        for c in 0..w {
            let dc = c as f64 - c0;
            let i = r * w + c;
            if dc.abs() <= half {
                let (y, x) = (r as f64 - r0, dc);
                let psi = phi0
                    + std::f64::consts::TAU * (fr * y + fc * x)
                    + curvature * (y * y + x * x);
                let z = &mut out.pixels_mut()[i];
                *z = Complex64::from_polar(highlight_gain * z.norm(), psi);
                labels[i] = TargetMask::HIGHLIGHT;
            } else if dc > half && dc <= half + len {
                out.pixels_mut()[i] *= shadow_gain;
                labels[i] = TargetMask::SHADOW;
            }
        }
    }
    let mask = TargetMask {
        height: h,
        width: w,
        labels,
        highlight_gain,
        shadow_gain,
    };
    (out, mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClutterKind {
    /// Irregular bright blob without a shadow.
    Blob,
    /// Patch of spatially correlated speckle with matched intensity.
    TextureAnomaly,
}

fn in_ellipse(r: usize, c: usize, center: (f64, f64), axes: (f64, f64)) -> bool {
    let dr = (r as f64 - center.0) / axes.0;
    let dc = (c as f64 - center.1) / axes.1;
    dr * dr + dc * dc <= 1.0
}

/// Inserts a clutter object. Half of the time it is a shadowless bright blob
/// (union of 2-4 ellipses, magnitude x`U[2, 5]`), otherwise a texture
/// anomaly: a region whose speckle is replaced by low-pass filtered speckle
/// rescaled to the region's original energy.
pub fn insert_clutter_object(chip: &ComplexChip, rng: &mut SplitMix64) -> (ComplexChip, ClutterKind) {
    let (h, w) = (chip.height(), chip.width());
    let (hf, wf) = (h as f64, w as f64);
    let mut out = chip.clone();
    if rng.bernoulli(0.5) {
        let center = (rng.uniform_in(0.4, 0.6) * hf, rng.uniform_in(0.35, 0.55) * wf);
        let gain = rng.uniform_in(2.0, 5.0);
        let parts = 2 + rng.below(3);
        let ellipses: Vec<((f64, f64), (f64, f64))> = (0..parts)
            .map(|_| {
                let c = (
                    center.0 + rng.uniform_in(-0.06, 0.06) * hf,
                    center.1 + rng.uniform_in(-0.06, 0.06) * wf,
                );
                let a = (rng.uniform_in(0.03, 0.09) * hf, rng.uniform_in(0.03, 0.09) * wf);
                (c, a)
            })
            .collect();
        for r in 0..h {
            for c in 0..w {
                if ellipses.iter().any(|&(e, a)| in_ellipse(r, c, e, a)) {
                    out.pixels_mut()[r * w + c] *= gain;
                }
            }
        }
        (out, ClutterKind::Blob)
    } else {
        let center = (rng.uniform_in(0.4, 0.6) * hf, rng.uniform_in(0.4, 0.6) * wf);
        let axes = (rng.uniform_in(0.12, 0.25) * hf, rng.uniform_in(0.12, 0.25) * wf);
        let corr = rng.uniform_in(1.5, 3.0);
        let white: Vec<Complex64> = (0..h * w)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let patch = blur_periodic(&white, h, w, corr, corr);
        let inside: Vec<usize> = (0..h * w).filter(|&i| in_ellipse(i / w, i % w, center, axes)).collect();
        let old_energy: f64 = inside.iter().map(|&i| chip.pixels()[i].norm_sqr()).sum();
        let new_energy: f64 = inside.iter().map(|&i| patch[i].norm_sqr()).sum();
        if new_energy > 0.0 {
            let scale = (old_energy / new_energy).sqrt();
            for &i in &inside {
                out.pixels_mut()[i] = patch[i] * scale;
            }
        }
        (out, ClutterKind::TextureAnomaly)
    }
}

/// Everything known about one generated chip.
#[derive(Debug, Clone)]
pub struct SyntheticChip {
    pub chip: ComplexChip,
    pub label: u8,
    pub target_mask: Option<TargetMask>,
    pub clutter_kind: Option<ClutterKind>,
}

/// Generates one chip of `profile` with the given label from its own stream.
pub fn synthesize_chip(
    profile: &TrialProfile,
    label: u8,
    dims: (usize, usize),
    extent_m: (f64, f64),
    rng: &mut SplitMix64,
) -> Result<SyntheticChip> {
    let mut chip = gen_speckle(dims.0, dims.1, profile.speckle_sigma, rng)?;
    chip.extent_m = extent_m;
    let chip = apply_texture(&chip, profile, rng)?;
    let (chip, target_mask, clutter_kind) = if label == 1 {
        let (c, m) = insert_target(&chip, rng);
        (c, Some(m), None)
    } else {
        let (c, k) = insert_clutter_object(&chip, rng);
        (c, None, Some(k))
    };
    let chip = apply_system_response(&chip, profile.bandwidth);
    Ok(SyntheticChip {
        chip,
        label,
        target_mask,
        clutter_kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = AtrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(AtrError::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipRecord {
    pub chip_id: String,
    /// 0 clutter, 1 target.
    pub label: u8,
    pub trial_name: String,
    pub split: Split,
    /// Relative to the dataset root.
    pub path: PathBuf,
}

/// Split of every chip in chronological order (trial order, then index).
///
/// The first half of the trials (rounded up) is the training half; the
/// chronologically last 20% of its chips of each class becomes validation.
/// The remaining trials are the test set.
pub fn assign_splits(trial_of: &[usize], labels: &[u8], n_trials: usize) -> Vec<Split> {
    let n_train_trials = n_trials.div_ceil(2);
    let mut splits: Vec<Split> = trial_of
        .iter()
        .map(|&t| if t < n_train_trials { Split::Train } else { Split::Test })
        .collect();
    for class in [0u8, 1u8] {
        let members: Vec<usize> = (0..splits.len())
            .filter(|&i| splits[i] == Split::Train && labels[i] == class)
            .collect();
        let n_val = if members.len() >= 2 {
            ((members.len() as f64 * 0.2).round() as usize).max(1)
        } else {
            0
        };
        for &i in &members[members.len() - n_val..] {
            splits[i] = Split::Validation;
        }
    }
    splits
}

/// Chips held in memory together with their manifest records.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<ChipRecord>,
    pub chips: Vec<ComplexChip>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].split == split).collect()
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.records[i].label).collect()
    }

    /// Loads the manifest and every chip below `root`.
    pub fn load(root: &Path) -> Result<Self> {
        let records = read_manifest(&root.join(MANIFEST_FILE))?;
        let chips = records
            .par_iter()
            .map(|r| ComplexChip::load(&root.join(&r.path)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records, chips })
    }
}

/// Generates the whole dataset in memory. Chip `i` of trial `t` always comes
/// from the stream `(seed, "chip", t, i)`, so the result does not depend on
/// scheduling.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, Vec<SyntheticChip>)> {
    config.validate()?;
    let n_targets = config.targets_per_trial();
    let mut plan = Vec::new();
    for (t, trial) in config.trials.iter().enumerate() {
        let mut labels: Vec<u8> = (0..config.chips_per_trial).map(|i| u8::from(i < n_targets)).collect();
        SplitMix64::stream(config.seed, "labels", t as u64).shuffle(&mut labels);
        for (i, label) in labels.into_iter().enumerate() {
            plan.push((t, i, trial, label));
        }
    }
    let synthetic = plan
        .par_iter()
        .map(|&(t, i, trial, label)| {
            let mut rng = SplitMix64::stream(config.seed, "chip", ((t as u64) << 32) | i as u64);
            let mut s = synthesize_chip(trial, label, config.chip_dims, config.extent_m, &mut rng)?;
            // what lands on disk is f32; keep memory and disk identical
            s.chip = s.chip.quantized();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;

    let trial_of: Vec<usize> = plan.iter().map(|p| p.0).collect();
    let labels: Vec<u8> = plan.iter().map(|p| p.3).collect();
    let splits = assign_splits(&trial_of, &labels, config.trials.len());
    let records = plan
        .iter()
        .zip(splits)
        .map(|(&(_, i, trial, label), split)| {
            let chip_id = format!("{}-{:05}", trial.name, i);
            ChipRecord {
                path: PathBuf::from(CHIP_DIR).join(format!("{chip_id}.slc")),
                chip_id,
                label,
                trial_name: trial.name.clone(),
                split,
            }
        })
        .collect();
    let chips = synthetic.iter().map(|s| s.chip.clone()).collect();
    Ok((Dataset { records, chips }, synthetic))
}

/// Generates the dataset and writes the chips plus `manifest.tsv` below
/// `out_dir`.
pub fn gen_dataset(config: &SynthConfig, out_dir: &Path) -> Result<Dataset> {
    let (dataset, _) = generate(config)?;
    std::fs::create_dir_all(out_dir.join(CHIP_DIR)).map_err(|e| AtrError::io(out_dir, e))?;
    dataset
        .records
        .par_iter()
        .zip(dataset.chips.par_iter())
        .try_for_each(|(r, c)| c.save(&out_dir.join(&r.path)))?;
    write_manifest(&out_dir.join(MANIFEST_FILE), &dataset.records)?;
    Ok(dataset)
}

pub fn write_manifest(path: &Path, records: &[ChipRecord]) -> Result<()> {
    let mut t = Tsv::new(["chip_id", "label", "trial_name", "split", "relative_path"]);
    for r in records {
        t.push([
            r.chip_id.clone(),
            r.label.to_string(),
            r.trial_name.clone(),
            r.split.to_string(),
            r.path.to_string_lossy().replace('\\', "/"),
        ]);
    }
    write_text(path, &t.render())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ChipRecord>> {
    let t = Tsv::parse(&read_text(path)?)?;
    if t.header != ["chip_id", "label", "trial_name", "split", "relative_path"] {
        return Err(AtrError::format("manifest", format!("unexpected header {:?}", t.header)));
    }
    t.rows
        .into_iter()
        .map(|row| {
            let label = match row[1].as_str() {
                "0" => 0,
                "1" => 1,
                other => return Err(AtrError::format("manifest", format!("label `{other}` is not 0/1"))),
            };
            Ok(ChipRecord {
                chip_id: row[0].clone(),
                label,
                trial_name: row[2].clone(),
                split: row[3].parse()?,
                path: PathBuf::from(&row[4]),
            })
        })
        .collect()
}
