//! What the trained networks learned: last-block features, PCA, KSG mutual
//! information, exact t-SNE, silhouettes and weight maps.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::digamma;

use crate::chip::{ComplexChip, RealChip, ReprKind, Representation};
use crate::error::{AtrError, Result};
use crate::io::Tsv;
use crate::nn::Model;
use crate::rng::SplitMix64;
use crate::synth::{Dataset, Split};
use crate::trainer::Preprocess;

/// Who a feature row belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMeta {
    pub chip_id: String,
    pub label: u8,
    pub trial_name: String,
}

/// `n x d` row-major matrix with one metadata entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
    pub meta: Vec<RowMeta>,
}

impl FeatureCloud {
    pub fn new(n: usize, d: usize, data: Vec<f64>, meta: Vec<RowMeta>) -> Result<Self> {
        if data.len() != n * d || meta.len() != n {
            return Err(AtrError::Shape(format!(
                "{n}x{d} cloud with {} values and {} metadata rows",
                data.len(),
                meta.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AtrError::numeric("feature cloud", "non-finite feature"));
        }
        Ok(Self { n, d, data, meta })
    }

    /// Cloud without metadata, for plain numeric work.
    pub fn anonymous(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        let meta = (0..n)
            .map(|i| RowMeta {
                chip_id: i.to_string(),
                label: 0,
                trial_name: String::new(),
            })
            .collect();
        Self::new(n, d, data, meta)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Stratified probe set of at most `size` chips from `split`, in dataset
/// order.
pub fn probe_indices(dataset: &Dataset, split: Split, size: usize, seed: u64) -> Vec<usize> {
    let all = dataset.indices(split);
    if all.len() <= size {
        return all;
    }
    let mut out = Vec::with_capacity(size);
    for class in [0u8, 1] {
        let mut members: Vec<usize> = all.iter().copied().filter(|&i| dataset.records[i].label == class).collect();
        let k = (members.len() as f64 * size as f64 / all.len() as f64).round() as usize;
        SplitMix64::stream(seed, "probe", class as u64).shuffle(&mut members);
        out.extend_from_slice(&members[..k.min(members.len())]);
    }
    out.sort_unstable();
    out
}

/// Eval-mode post-ReLU last-block activations of `path` for the chips at
/// `indices`.
pub fn extract_features(
    model: &Model<f32>,
    dataset: &Dataset,
    indices: &[usize],
    path: usize,
    pre: &Preprocess,
) -> Result<FeatureCloud> {
    if path >= model.n_paths() {
        return Err(AtrError::InvalidParameter(format!(
            "path {path} out of range for a {}-path model",
            model.n_paths()
        )));
    }
    let d = model.shapes().flatten_width();
    let mut data = Vec::with_capacity(indices.len() * d);
    for block in indices.chunks(256) {
        let chips: Vec<&ComplexChip> = block.iter().map(|&i| &dataset.chips[i]).collect();
        let inputs = pre.eval_batch(&chips, model.reprs())?;
        let f = model.features(&inputs, path)?;
        data.extend(f.data().iter().map(|&v| v as f64));
    }
    let meta = indices
        .iter()
        .map(|&i| {
            let r = &dataset.records[i];
            RowMeta {
                chip_id: r.chip_id.clone(),
                label: r.label,
                trial_name: r.trial_name.clone(),
            }
        })
        .collect();
    FeatureCloud::new(indices.len(), d, data, meta)
}

/// Principal axes found by [`pca_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Covariance eigenvalues, descending, all of them.
    pub eigenvalues: Vec<f64>,
    /// Retained unit components, one per row.
    pub components: Vec<Vec<f64>>,
}

/// Projects onto the top `d_out` principal components. Each component is
/// signed so its largest-magnitude entry is positive. Rank-deficient data
/// is projected onto the available rank only.
pub fn pca_project(cloud: &FeatureCloud, d_out: usize) -> Result<(FeatureCloud, Pca)> {
    let (n, d) = (cloud.n, cloud.d);
    if d_out == 0 || n <= d_out {
        return Err(AtrError::InvalidParameter(format!(
            "PCA to {d_out} dims needs more than {d_out} rows, got {n}"
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(cloud.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| cloud.data[i * d + j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

    let top = eigenvalues[0];
    let rank = eigenvalues.iter().filter(|&&e| e > top * 1e-12 && e > 0.0).count();
    let keep = d_out.min(rank).min(d);
    if keep < d_out {
        log::warn!("feature rank {rank} is below the requested {d_out} PCA dims; projecting onto {keep}");
    }
    let components: Vec<Vec<f64>> = order[..keep]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let big = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let mut data = Vec::with_capacity(n * keep);
    for i in 0..n {
        let row = centered.row(i);
        for c in &components {
            data.push(row.iter().zip(c).map(|(a, b)| a * b).sum());
        }
    }
    let out = FeatureCloud::new(n, keep, data, cloud.meta.clone())?;
    Ok((out, Pca { mean, eigenvalues, components }))
}

/// A mutual information estimate in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub k: usize,
    pub n: usize,
    pub source: String,
}

/// Relative amplitude of the tie-breaking jitter.
pub const KSG_JITTER: f64 = 1e-10;

fn jittered(cloud: &FeatureCloud, rng: &mut SplitMix64) -> Vec<f64> {
    let n = cloud.data.len().max(1) as f64;
    let mean = cloud.data.iter().sum::<f64>() / n;
    let var = cloud.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    cloud
        .data
        .iter()
        .map(|&v| v + KSG_JITTER * scale * rng.uniform_in(-1.0, 1.0))
        .collect()
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Kraskov-Stoegbauer-Grassberger estimator (first variant, max-norm).
/// Both clouds get a tiny seeded jitter so duplicated points cannot make
/// neighbour counts ambiguous.
pub fn ksg_mi(x: &FeatureCloud, y: &FeatureCloud, k: usize, seed: u64) -> Result<MiEstimate> {
    let n = x.n;
    if y.n != n {
        return Err(AtrError::Pairing(format!("clouds have {} and {} rows", x.n, y.n)));
    }
    if let Some(i) = (0..n).find(|&i| x.meta[i].chip_id != y.meta[i].chip_id) {
        return Err(AtrError::Pairing(format!(
            "row {i} is chip {} in one cloud and {} in the other",
            x.meta[i].chip_id, y.meta[i].chip_id
        )));
    }
    if k == 0 || n <= 2 * k {
        return Err(AtrError::InvalidParameter(format!("KSG with k = {k} needs more than {} rows, got {n}", 2 * k)));
    }
    let xs = jittered(x, &mut SplitMix64::stream(seed, "ksg-jitter", 0));
    let ys = jittered(y, &mut SplitMix64::stream(seed, "ksg-jitter", 1));
    let (dx, dy) = (x.d, y.d);
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &xs[i * dx..(i + 1) * dx];
            let yi = &ys[i * dy..(i + 1) * dy];
            let mut marg: Vec<(f64, f64)> = Vec::with_capacity(n - 1);
            let mut joint: Vec<f64> = Vec::with_capacity(n - 1);
            for j in (0..n).filter(|&j| j != i) {
                let a = max_dist(xi, &xs[j * dx..(j + 1) * dx]);
                let b = max_dist(yi, &ys[j * dy..(j + 1) * dy]);
                marg.push((a, b));
                joint.push(a.max(b));
            }
            let eps = *joint.select_nth_unstable_by(k - 1, f64::total_cmp).1;
            let nx = marg.iter().filter(|m| m.0 < eps).count();
            let ny = marg.iter().filter(|m| m.1 < eps).count();
            digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0)
        })
        .collect();
    let mean = terms.iter().sum::<f64>() / n as f64;
    Ok(MiEstimate {
        value: digamma(k as f64) + digamma(n as f64) - mean,
        k,
        n,
        source: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    /// `n x 2`, row-major.
    pub coords: Vec<f64>,
    pub kl: f64,
    pub iterations: usize,
    pub seed: u64,
    /// KL divergence against the unexaggerated affinities, one value per
    /// iteration.
    pub kl_trace: Vec<f64>,
}

impl Embedding2D {
    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.coords[2 * i], self.coords[2 * i + 1])
    }

    /// `chip_id, x, y, label, trial_name` rows.
    pub fn to_tsv(&self, meta: &[RowMeta]) -> Tsv {
        let mut t = Tsv::new(["chip_id", "x", "y", "label", "trial_name"]);
        for (i, m) in meta.iter().enumerate() {
            let (x, y) = self.point(i);
            t.push([
                m.chip_id.clone(),
                format!("{x:.6}"),
                format!("{y:.6}"),
                m.label.to_string(),
                m.trial_name.clone(),
            ]);
        }
        t
    }
}

fn squared_distances(cloud: &FeatureCloud) -> Vec<f64> {
    let n = cloud.n;
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = cloud.row(i);
            (0..n).map(move |j| a.iter().zip(cloud.row(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        })
        .collect()
}

/// Conditional affinities of one row, with the Gaussian precision found by
/// bisection on the entropy.
fn row_affinities(d2: &[f64], i: usize, log_perp: f64) -> Vec<f64> {
    let n = d2.len();
    let mut beta = 1.0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut p = vec![0.0; n];
    for _ in 0..50 {
        // shift by the nearest neighbour so exp never underflows entirely
        let dmin = (0..n).filter(|&j| j != i).map(|j| d2[j]).fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            p[j] = if j == i { 0.0 } else { (-(d2[j] - dmin) * beta).exp() };
            sum += p[j];
            weighted += (d2[j] - dmin) * p[j];
        }
        let entropy = sum.ln() + beta * weighted / sum;
        p.iter_mut().for_each(|v| *v /= sum);
        let diff = entropy - log_perp;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

/// Exact t-SNE: momentum gradient descent with early exaggeration.
pub fn tsne(cloud: &FeatureCloud, opts: &TsneOptions) -> Result<Embedding2D> {
    let n = cloud.n;
    if !(opts.perplexity > 0.0) || (n as f64) < 3.0 * opts.perplexity {
        return Err(AtrError::InvalidParameter(format!(
            "t-SNE with perplexity {} needs at least {} points, got {n}",
            opts.perplexity,
            (3.0 * opts.perplexity).ceil()
        )));
    }
    let d2 = squared_distances(cloud);
    let log_perp = opts.perplexity.ln();
    let cond: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| row_affinities(&d2[i * n..(i + 1) * n], i, log_perp))
        .collect();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = SplitMix64::stream(opts.seed, "tsne-init", 0);
    let mut y: Vec<f64> = (0..2 * n).map(|_| 1e-4 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut velocity = vec![0.0; 2 * n];
    let mut kl_trace = Vec::with_capacity(opts.iterations);
    let mut num = vec![0.0; n * n];

    for iter in 0..opts.iterations {
        let exaggerate = iter < opts.exaggeration_iters;
        let ex = if exaggerate { opts.exaggeration } else { 1.0 };
        let momentum = if iter < opts.exaggeration_iters { 0.5 } else { 0.8 };
        num.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j {
                    0.0
                } else {
                    let (dx, dy) = (y[2 * i] - y[2 * j], y[2 * i + 1] - y[2 * j + 1]);
                    1.0 / (1.0 + dx * dx + dy * dy)
                };
            }
        });
        let z: f64 = num.par_chunks(n).map(|r| r.iter().sum::<f64>()).sum::<f64>();
        let (grad, kl_rows): (Vec<[f64; 2]>, Vec<f64>) = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                let mut kl = 0.0;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = num[i * n + j];
                    let q = (w / z).max(1e-12);
                    let pij = p[i * n + j];
                    kl += pij * (pij / q).ln();
                    let f = 4.0 * (ex * pij - q) * w;
                    g[0] += f * (y[2 * i] - y[2 * j]);
                    g[1] += f * (y[2 * i + 1] - y[2 * j + 1]);
                }
                (g, kl)
            })
            .unzip();
        // KL of the configuration the gradient was taken at
        kl_trace.push(kl_rows.iter().sum());
        for i in 0..n {
            for c in 0..2 {
                let k = 2 * i + c;
                velocity[k] = momentum * velocity[k] - opts.learning_rate * grad[i][c];
                y[k] += velocity[k];
            }
        }
        let (mx, my) = (0..n).fold((0.0, 0.0), |(a, b), i| (a + y[2 * i], b + y[2 * i + 1]));
        for i in 0..n {
            y[2 * i] -= mx / n as f64;
            y[2 * i + 1] -= my / n as f64;
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(AtrError::numeric("t-SNE", format!("coordinate {i} diverged")));
    }
    Ok(Embedding2D {
        kl: kl_trace.last().copied().unwrap_or(0.0).max(0.0),
        coords: y,
        iterations: opts.iterations,
        seed: opts.seed,
        kl_trace,
    })
}

/// Mean silhouette with Euclidean distance over row-major `points` of
/// width `dim`. Points whose intra and nearest-other mean distances are
/// both zero score 0.
pub fn silhouette<L: PartialEq>(points: &[f64], dim: usize, groups: &[L]) -> Result<f64> {
    let n = groups.len();
    if dim == 0 || points.len() != n * dim {
        return Err(AtrError::Shape(format!("{} values for {n} points of width {dim}", points.len())));
    }
    let mut ids: Vec<usize> = Vec::with_capacity(n);
    let mut distinct: Vec<&L> = Vec::new();
    for g in groups {
        let id = distinct.iter().position(|d| *d == g).unwrap_or_else(|| {
            distinct.push(g);
            distinct.len() - 1
        });
        ids.push(id);
    }
    let k = distinct.len();
    let mut sizes = vec![0usize; k];
    ids.iter().for_each(|&g| sizes[g] += 1);
    if k < 2 || sizes.iter().any(|&s| s < 2) {
        return Err(AtrError::DegenerateInput(format!(
            "silhouette needs at least two groups of two, got sizes {sizes:?}"
        )));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[ids[j]] += row(i).iter().zip(row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                }
            }
            let own = ids[i];
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k).filter(|&g| g != own).map(|g| sums[g] / sizes[g] as f64).fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 { (b - a) / m } else { 0.0 }
        })
        .sum();
    Ok(total / n as f64)
}

/// Dense-layer weights of one path arranged on the last block's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub repr: Representation,
    /// One `h x w` map per channel.
    pub channels: Vec<RealChip>,
    /// Sum over channels at each location.
    pub coherent: RealChip,
}

/// Splits the dense weight vector per path and inverts the row-major
/// `(h, w, c)` flatten.
pub fn unflatten_dense_weights(model: &Model<f32>) -> Result<Vec<WeightMap>> {
    let s = model.shapes().block3;
    let f = s.h * s.w * s.c;
    let weights: Vec<f64> = model.head_weights().data().iter().map(|&v| v as f64).collect();
    model
        .reprs()
        .as_slice()
        .iter()
        .enumerate()
        .map(|(p, &repr)| {
            let w = &weights[p * f..(p + 1) * f];
            let channels = (0..s.c)
                .map(|ch| RealChip::from_fn(s.h, s.w, ReprKind::Generic, |r, c| w[(r * s.w + c) * s.c + ch]))
                .collect::<Result<Vec<_>>>()?;
            let coherent = RealChip::from_fn(s.h, s.w, ReprKind::Generic, |r, c| {
                w[(r * s.w + c) * s.c..(r * s.w + c + 1) * s.c].iter().sum()
            })?;
            Ok(WeightMap { repr, channels, coherent })
        })
        .collect()
}

/// Inverse of [`unflatten_dense_weights`] for one path.
pub fn flatten_weight_map(map: &WeightMap) -> Vec<f64> {
    let (h, w) = (map.coherent.height(), map.coherent.width());
    let mut out = Vec::with_capacity(h * w * map.channels.len());
    for r in 0..h {
        for c in 0..w {
            out.extend(map.channels.iter().map(|ch| ch.at(r, c)));
        }
    }
    out
}

/// The first convolution's kernels of `path`, one `kh x kw` image per
/// output channel (single input channel).
pub fn first_layer_filters(model: &Model<f32>, path: usize) -> Result<Vec<RealChip>> {
    let repr = *model
        .reprs()
        .as_slice()
        .get(path)
        .ok_or_else(|| AtrError::InvalidParameter(format!("path {path} out of range")))?;
    let k = model
        .param(&format!("{}.conv1.kernel", repr.name()))
        .expect("every path has a first convolution");
    let (kh, kw, cout) = (k.dims()[0], k.dims()[1], k.dims()[3]);
    (0..cout)
        .map(|o| RealChip::from_fn(kh, kw, ReprKind::Generic, |r, c| k.data()[(r * kw + c) * cout + o] as f64))
        .collect()
}

/// One feature source: a path inside a named model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    pub model: usize,
    pub path: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiRow {
    pub source: String,
    pub pair: String,
    pub mi_nats: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiOptions {
    pub k: usize,
    pub pca_dims: usize,
    pub seed: u64,
}

impl Default for MiOptions {
    fn default() -> Self {
        Self { k: 3, pca_dims: 10, seed: 0 }
    }
}

/// The standard comparison set: every pair of single-input models, then
/// every pair of paths inside each multi-input model.
pub fn default_mi_pairs(models: &[(String, &Model<f32>)]) -> Vec<(Tap, Tap)> {
    let singles: Vec<usize> = (0..models.len()).filter(|&m| models[m].1.n_paths() == 1).collect();
    let mut out = Vec::new();
    for (i, &a) in singles.iter().enumerate() {
        for &b in &singles[i + 1..] {
            out.push((Tap { model: a, path: 0 }, Tap { model: b, path: 0 }));
        }
    }
    for (m, (_, model)) in models.iter().enumerate() {
        for p in 0..model.n_paths() {
            for q in p + 1..model.n_paths() {
                out.push((Tap { model: m, path: p }, Tap { model: m, path: q }));
            }
        }
    }
    out
}

/// MI between PCA-reduced last-block features for each requested pair,
/// all measured on the same probe chips.
pub fn mi_report(
    models: &[(String, &Model<f32>)],
    pairs: &[(Tap, Tap)],
    dataset: &Dataset,
    probe: &[usize],
    pre: &Preprocess,
    opts: &MiOptions,
) -> Result<Vec<MiRow>> {
    let mut cache: Vec<(Tap, FeatureCloud)> = Vec::new();
    let mut reduced = |t: Tap| -> Result<FeatureCloud> {
        if let Some((_, c)) = cache.iter().find(|(k, _)| *k == t) {
            return Ok(c.clone());
        }
        let (_, model) = models
            .get(t.model)
            .ok_or_else(|| AtrError::InvalidParameter(format!("model {} out of range", t.model)))?;
        let cloud = extract_features(model, dataset, probe, t.path, pre)?;
        let (c, _) = pca_project(&cloud, opts.pca_dims)?;
        cache.push((t, c.clone()));
        Ok(c)
    };
    let name = |t: Tap| models[t.model].1.reprs().as_slice()[t.path].name();
    pairs
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (reduced(a)?, reduced(b)?);
            let mi = ksg_mi(&x, &y, opts.k, opts.seed)?;
            let source = if a.model == b.model {
                models[a.model].0.clone()
            } else {
                format!("{} vs {}", models[a.model].0, models[b.model].0)
            };
            Ok(MiRow {
                source,
                pair: format!("{}/{}", name(a), name(b)),
                mi_nats: mi.value,
            })
        })
        .collect()
}

pub fn mi_tsv(rows: &[MiRow], probe_size: usize, k: usize) -> Tsv {
    let mut t = Tsv::new(["source", "pair", "mi_nats", "probe_size", "k"]);
    for r in rows {
        t.push([
            r.source.clone(),
            r.pair.clone(),
            format!("{:.6}", r.mi_nats),
            probe_size.to_string(),
            k.to_string(),
        ]);
    }
    t
}
