//! Multi-path classifier: one convolutional path per input representation,
//! joined by a dropout + dense + sigmoid head.
//!
//! Each path is
//!
//! ```text
//! conv 8@8x8 -> relu -> avgpool 4
//!   -> (conv 10@6x6 + conv 10@1x1) -> relu -> avgpool 4
//!   -> (conv 12@6x6 + conv 12@1x1) -> relu -> flatten
//! ```
//!
//! The 1x1 branches act as learned skip connections around the 6x6 ones.

use rayon::prelude::*;

use super::layers::{
    conv_backward_sample, conv_forward_sample, dropout_mask, pool_backward_sample, pool_forward_sample, pool_shape,
    relu_backward_in_place, relu_in_place, sigmoid, Mode, KernelShape, Shape3, bce, check_rate, clamp_probability,
};
use super::tensor::{check_finite, Scalar, Tensor};
use crate::chip::{ReprSet, Representation};
use crate::error::{AtrError, Result};
use crate::rng::SplitMix64;

pub const POOL: usize = 4;
pub const INPUT_HW: (usize, usize) = (64, 64);

/// Parameter tensors per path, in storage order.
const PATH_TENSORS: [&str; 10] = [
    "conv1.kernel",
    "conv1.bias",
    "conv2.kernel",
    "conv2.bias",
    "skip2.kernel",
    "skip2.bias",
    "conv3.kernel",
    "conv3.bias",
    "skip3.kernel",
    "skip3.bias",
];
const PER_PATH: usize = PATH_TENSORS.len();

/// Samples handled by one parallel work item. Fixed so gradient sums are
/// reduced in the same order whatever the thread count.
const CHUNK: usize = 4;

/// Activation shapes of one path for a given input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathShapes {
    pub input: Shape3,
    pub conv1: Shape3,
    pub pool1: Shape3,
    pub block2: Shape3,
    pub pool2: Shape3,
    pub block3: Shape3,
    pub kernels: [KernelShape; 5],
}

impl PathShapes {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        let input = Shape3::new(h, w, 1);
        let conv1 = Shape3::new(h, w, 8);
        let pool1 = pool_shape(conv1, POOL)?;
        let block2 = Shape3::new(pool1.h, pool1.w, 10);
        let pool2 = pool_shape(block2, POOL)?;
        let block3 = Shape3::new(pool2.h, pool2.w, 12);
        Ok(Self {
            input,
            conv1,
            pool1,
            block2,
            pool2,
            block3,
            kernels: [
                KernelShape::new(8, 8, 1, 8),
                KernelShape::new(6, 6, 8, 10),
                KernelShape::new(1, 1, 8, 10),
                KernelShape::new(6, 6, 10, 12),
                KernelShape::new(1, 1, 10, 12),
            ],
        })
    }

    /// Flattened width of the last block.
    pub fn flatten_width(&self) -> usize {
        self.block3.len()
    }

    /// Convolution parameters of one path (independent of input size).
    pub fn param_count(&self) -> usize {
        self.kernels.iter().map(|k| k.len() + k.cout).sum()
    }
}

/// Per-sample activations kept for backward.
struct Trace<T> {
    r1: Vec<T>,
    p1: Vec<T>,
    r2: Vec<T>,
    p2: Vec<T>,
    r3: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Scalar = f32> {
    reprs: ReprSet,
    input_hw: (usize, usize),
    dropout_rate: f64,
    shapes: PathShapes,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

/// Names and dims of every parameter tensor of a model.
pub fn layout(reprs: &ReprSet, input_hw: (usize, usize)) -> Result<Vec<(String, Vec<usize>)>> {
    let shapes = PathShapes::new(input_hw.0, input_hw.1)?;
    let mut out = Vec::new();
    for r in reprs.as_slice() {
        for (i, name) in PATH_TENSORS.iter().enumerate() {
            let k = shapes.kernels[i / 2];
            let dims = if i % 2 == 0 { k.dims().to_vec() } else { vec![k.cout] };
            out.push((format!("{}.{name}", r.name()), dims));
        }
    }
    out.push(("head.dense.weight".into(), vec![shapes.flatten_width() * reprs.len(), 1]));
    out.push(("head.dense.bias".into(), vec![1]));
    Ok(out)
}

fn glorot(dims: &[usize], rng: &mut SplitMix64) -> Vec<f64> {
    let (fan_in, fan_out) = match dims {
        [kh, kw, cin, cout] => (kh * kw * cin, kh * kw * cout),
        [f, o] => (*f, *o),
        _ => unreachable!("glorot on {dims:?}"),
    };
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..dims.iter().product::<usize>()).map(|_| rng.uniform_in(-limit, limit)).collect()
}

impl<T: Scalar> Model<T> {
    /// Fresh model with Glorot-uniform weights and zero biases. Each path's
    /// weights come from a stream keyed by its representation, so e.g. the
    /// magnitude path starts identically in every configuration.
    pub fn build(reprs: &ReprSet, input_hw: (usize, usize), dropout_rate: f64, seed: u64) -> Result<Self> {
        let layout = layout(reprs, input_hw)?;
        let mut params = Vec::with_capacity(layout.len());
        for (p, r) in reprs.as_slice().iter().enumerate() {
            let mut rng = SplitMix64::stream(seed, "init-path", r.code() as u64);
            for (name, dims) in &layout[p * PER_PATH..(p + 1) * PER_PATH] {
                let values = if name.ends_with(".bias") { vec![0.0; dims[0]] } else { glorot(dims, &mut rng) };
                params.push(Tensor::from_parts(dims.clone(), values.into_iter().map(T::of).collect())?);
            }
        }
        let mut rng = SplitMix64::stream(seed, "init-head", 0);
        let head = &layout[layout.len() - 2];
        params.push(Tensor::from_parts(head.1.clone(), glorot(&head.1, &mut rng).into_iter().map(T::of).collect())?);
        params.push(Tensor::zeros(&[1]));
        Self::from_parts(reprs.clone(), input_hw, dropout_rate, params)
    }

    /// Assembles a model from existing tensors, checking them against the
    /// layout.
    pub fn from_parts(reprs: ReprSet, input_hw: (usize, usize), dropout_rate: f64, params: Vec<Tensor<T>>) -> Result<Self> {
        check_rate(dropout_rate)?;
        let layout = layout(&reprs, input_hw)?;
        if layout.len() != params.len() {
            return Err(AtrError::Shape(format!("model needs {} tensors, got {}", layout.len(), params.len())));
        }
        for ((name, dims), p) in layout.iter().zip(&params) {
            if p.dims() != &dims[..] {
                return Err(AtrError::Shape(format!("{name}: expected {dims:?}, got {:?}", p.dims())));
            }
            p.check_finite(name)?;
        }
        Ok(Self {
            shapes: PathShapes::new(input_hw.0, input_hw.1)?,
            names: layout.into_iter().map(|(n, _)| n).collect(),
            reprs,
            input_hw,
            dropout_rate,
            params,
        })
    }

    pub fn reprs(&self) -> &ReprSet {
        &self.reprs
    }

    pub fn input_hw(&self) -> (usize, usize) {
        self.input_hw
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn shapes(&self) -> &PathShapes {
        &self.shapes
    }

    pub fn n_paths(&self) -> usize {
        self.reprs.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Width of the concatenated feature vector entering the head.
    pub fn feature_width(&self) -> usize {
        self.shapes.flatten_width() * self.n_paths()
    }

    pub fn path_index(&self, r: Representation) -> Option<usize> {
        self.reprs.index_of(r)
    }

    pub fn head_weights(&self) -> &Tensor<T> {
        &self.params[self.params.len() - 2]
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            reprs: self.reprs.clone(),
            input_hw: self.input_hw,
            dropout_rate: self.dropout_rate,
            shapes: self.shapes,
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    fn check_inputs(&self, inputs: &[Tensor<T>]) -> Result<usize> {
        if inputs.len() != self.n_paths() {
            return Err(AtrError::Shape(format!(
                "model {} has {} paths, got {} input batches",
                self.reprs,
                self.n_paths(),
                inputs.len()
            )));
        }
        let b = inputs[0].batch();
        let want = [b, self.input_hw.0, self.input_hw.1, 1];
        for x in inputs {
            if x.dims() != want {
                return Err(AtrError::Shape(format!("input batch {:?}, expected {want:?}", x.dims())));
            }
        }
        if b == 0 {
            return Err(AtrError::Shape("empty batch".into()));
        }
        Ok(b)
    }

    fn path_forward(&self, path: usize, x: &[T]) -> Result<Trace<T>> {
        let s = &self.shapes;
        let p = &self.params[path * PER_PATH..(path + 1) * PER_PATH];
        let k = &s.kernels;
        let name = self.reprs.as_slice()[path].name();

        let mut r1 = vec![T::zero(); s.conv1.len()];
        conv_forward_sample(x, s.input, p[0].data(), k[0], p[1].data(), &mut r1);
        relu_in_place(&mut r1);
        check_finite(&r1, &format!("{name}.conv1"))?;
        let mut p1 = vec![T::zero(); s.pool1.len()];
        pool_forward_sample(&r1, s.conv1, POOL, &mut p1);

        let mut r2 = vec![T::zero(); s.block2.len()];
        let mut skip = vec![T::zero(); s.block2.len()];
        conv_forward_sample(&p1, s.pool1, p[2].data(), k[1], p[3].data(), &mut r2);
        conv_forward_sample(&p1, s.pool1, p[4].data(), k[2], p[5].data(), &mut skip);
        for (a, b) in r2.iter_mut().zip(&skip) {
            *a += *b;
        }
        relu_in_place(&mut r2);
        check_finite(&r2, &format!("{name}.block2"))?;
        let mut p2 = vec![T::zero(); s.pool2.len()];
        pool_forward_sample(&r2, s.block2, POOL, &mut p2);

        let mut r3 = vec![T::zero(); s.block3.len()];
        let mut skip = vec![T::zero(); s.block3.len()];
        conv_forward_sample(&p2, s.pool2, p[6].data(), k[3], p[7].data(), &mut r3);
        conv_forward_sample(&p2, s.pool2, p[8].data(), k[4], p[9].data(), &mut skip);
        for (a, b) in r3.iter_mut().zip(&skip) {
            *a += *b;
        }
        relu_in_place(&mut r3);
        check_finite(&r3, &format!("{name}.block3"))?;
        Ok(Trace { r1, p1, r2, p2, r3 })
    }

    /// Accumulates one sample's path gradients into `grads` (the path's ten
    /// tensors). `g` is the gradient with respect to the flattened features.
    fn path_backward(&self, path: usize, x: &[T], t: &Trace<T>, mut g: Vec<T>, grads: &mut [Tensor<T>]) {
        let s = &self.shapes;
        let p = &self.params[path * PER_PATH..(path + 1) * PER_PATH];
        let k = &s.kernels;
        let [gk1, gb1, gk2, gb2, gks2, gbs2, gk3, gb3, gks3, gbs3]: &mut [Tensor<T>; PER_PATH] =
            grads.try_into().expect("ten path tensors");

        relu_backward_in_place(&mut g, &t.r3);
        let mut gp2 = vec![T::zero(); s.pool2.len()];
        conv_backward_sample(&g, &t.p2, s.pool2, p[6].data(), k[3], gk3.data_mut(), gb3.data_mut(), Some(&mut gp2));
        conv_backward_sample(&g, &t.p2, s.pool2, p[8].data(), k[4], gks3.data_mut(), gbs3.data_mut(), Some(&mut gp2));

        let mut g2 = vec![T::zero(); s.block2.len()];
        pool_backward_sample(&gp2, s.block2, POOL, &mut g2);
        relu_backward_in_place(&mut g2, &t.r2);
        let mut gp1 = vec![T::zero(); s.pool1.len()];
        conv_backward_sample(&g2, &t.p1, s.pool1, p[2].data(), k[1], gk2.data_mut(), gb2.data_mut(), Some(&mut gp1));
        conv_backward_sample(&g2, &t.p1, s.pool1, p[4].data(), k[2], gks2.data_mut(), gbs2.data_mut(), Some(&mut gp1));

        let mut g1 = vec![T::zero(); s.conv1.len()];
        pool_backward_sample(&gp1, s.conv1, POOL, &mut g1);
        relu_backward_in_place(&mut g1, &t.r1);
        // the input needs no gradient
        conv_backward_sample(&g1, x, s.input, p[0].data(), k[0], gk1.data_mut(), gb1.data_mut(), None);
    }

    /// Pre-sigmoid output of one sample from its per-path features.
    fn logit(&self, feats: &[Vec<T>], mask: Option<&[T]>) -> f64 {
        let w = self.head_weights().data();
        let mut acc = self.params[self.params.len() - 1].data()[0];
        let mut j = 0;
        for f in feats {
            for &v in f {
                let m = mask.map_or(T::one(), |m| m[j]);
                acc += v * m * w[j];
                j += 1;
            }
        }
        acc.f64()
    }

    /// Scores in `(0, 1)`. Training mode draws a dropout mask from `rng`;
    /// eval mode ignores it.
    pub fn forward(&self, inputs: &[Tensor<T>], mode: Mode, rng: &mut SplitMix64) -> Result<Vec<f64>> {
        let b = self.check_inputs(inputs)?;
        let mask = match mode {
            Mode::Train => Some(dropout_mask::<T>(b * self.feature_width(), self.dropout_rate, rng)?),
            Mode::Eval => None,
        };
        self.scores(inputs, mask.as_deref())
    }

    /// Eval-mode scores; a pure function of the parameters and inputs.
    pub fn predict(&self, inputs: &[Tensor<T>]) -> Result<Vec<f64>> {
        self.check_inputs(inputs)?;
        self.scores(inputs, None)
    }

    fn scores(&self, inputs: &[Tensor<T>], mask: Option<&[T]>) -> Result<Vec<f64>> {
        let b = inputs[0].batch();
        let fw = self.feature_width();
        (0..b)
            .into_par_iter()
            .map(|i| {
                let feats = (0..self.n_paths())
                    .map(|p| self.path_forward(p, inputs[p].sample(i)).map(|t| t.r3))
                    .collect::<Result<Vec<_>>>()?;
                let z = self.logit(&feats, mask.map(|m| &m[i * fw..(i + 1) * fw]));
                if !z.is_finite() {
                    return Err(AtrError::numeric("head.dense", format!("logit {z} for sample {i}")));
                }
                Ok(clamp_probability(sigmoid(z)))
            })
            .collect()
    }

    /// Post-ReLU output of the last block of `path`, flattened: `(B, F)`.
    pub fn features(&self, inputs: &[Tensor<T>], path: usize) -> Result<Tensor<T>> {
        if path >= self.n_paths() {
            return Err(AtrError::InvalidParameter(format!(
                "path {path} out of range for {} paths",
                self.n_paths()
            )));
        }
        let b = self.check_inputs(inputs)?;
        let rows = (0..b)
            .into_par_iter()
            .map(|i| self.path_forward(path, inputs[path].sample(i)).map(|t| t.r3))
            .collect::<Result<Vec<_>>>()?;
        Tensor::from_parts(vec![b, self.shapes.flatten_width()], rows.concat())
    }

    /// Mean binary cross-entropy of a training-mode pass and its gradient
    /// with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        inputs: &[Tensor<T>],
        labels: &[f64],
        rng: &mut SplitMix64,
    ) -> Result<(f64, Vec<Tensor<T>>)> {
        let b = self.check_inputs(inputs)?;
        let mask = dropout_mask::<T>(b * self.feature_width(), self.dropout_rate, rng)?;
        self.loss_and_gradients_masked(inputs, labels, Some(&mask))
    }

    /// As [`Model::loss_and_gradients`] with an explicit dropout mask
    /// (`None` = no dropout).
    pub fn loss_and_gradients_masked(
        &self,
        inputs: &[Tensor<T>],
        labels: &[f64],
        mask: Option<&[T]>,
    ) -> Result<(f64, Vec<Tensor<T>>)> {
        let b = self.check_inputs(inputs)?;
        let fw = self.feature_width();
        if labels.len() != b {
            return Err(AtrError::Shape(format!("{} labels for a batch of {b}", labels.len())));
        }
        if mask.is_some_and(|m| m.len() != b * fw) {
            return Err(AtrError::Shape("dropout mask does not match the batch".into()));
        }
        let n_chunks = b.div_ceil(CHUNK);
        let partials = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut grads: Vec<Tensor<T>> = self.params.iter().map(|p| Tensor::zeros(p.dims())).collect();
                let mut loss = 0.0;
                for i in c * CHUNK..((c + 1) * CHUNK).min(b) {
                    loss += self.sample_backward(inputs, i, labels[i], b, mask.map(|m| &m[i * fw..(i + 1) * fw]), &mut grads)?;
                }
                Ok((loss, grads))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut iter = partials.into_iter();
        let (mut loss, mut grads) = iter.next().expect("at least one chunk");
        for (l, g) in iter {
            loss += l;
            for (acc, part) in grads.iter_mut().zip(&g) {
                for (a, &v) in acc.data_mut().iter_mut().zip(part.data()) {
                    *a += v;
                }
            }
        }
        let loss = loss / b as f64;
        if !loss.is_finite() {
            return Err(AtrError::numeric("loss", format!("mean loss {loss}")));
        }
        for (name, g) in self.names.iter().zip(&grads) {
            g.check_finite(&format!("gradient of {name}"))?;
        }
        Ok((loss, grads))
    }

    fn sample_backward(
        &self,
        inputs: &[Tensor<T>],
        i: usize,
        y: f64,
        batch: usize,
        mask: Option<&[T]>,
        grads: &mut [Tensor<T>],
    ) -> Result<f64> {
        let traces = (0..self.n_paths())
            .map(|p| self.path_forward(p, inputs[p].sample(i)))
            .collect::<Result<Vec<_>>>()?;
        let feats: Vec<Vec<T>> = traces.iter().map(|t| t.r3.clone()).collect();
        let z = self.logit(&feats, mask);
        if !z.is_finite() {
            return Err(AtrError::numeric("head.dense", format!("logit {z} for sample {i}")));
        }
        let p = sigmoid(z);
        let dz = T::of((p - y) / batch as f64);

        let n = self.params.len();
        let fw = self.shapes.flatten_width();
        let w = self.params[n - 2].data();
        let (path_grads, head) = grads.split_at_mut(n - 2);
        head[1].data_mut()[0] += dz;
        let gw = head[0].data_mut();
        for (path, (t, f)) in traces.iter().zip(&feats).enumerate() {
            let mut g = vec![T::zero(); fw];
            for (k, gk) in g.iter_mut().enumerate() {
                let j = path * fw + k;
                let m = mask.map_or(T::one(), |m| m[j]);
                gw[j] += dz * m * f[k];
                *gk = dz * m * w[j];
            }
            self.path_backward(
                path,
                inputs[path].sample(i),
                t,
                g,
                &mut path_grads[path * PER_PATH..(path + 1) * PER_PATH],
            );
        }
        Ok(bce(p, y))
    }

    /// Signs of every ReLU input for a batch. Finite-difference checks use
    /// this to skip perturbations that cross a kink.
    pub fn relu_pattern(&self, inputs: &[Tensor<T>]) -> Result<Vec<bool>> {
        let b = self.check_inputs(inputs)?;
        let mut out = Vec::new();
        for i in 0..b {
            for p in 0..self.n_paths() {
                let t = self.path_forward(p, inputs[p].sample(i))?;
                out.extend(t.r1.iter().chain(&t.r2).chain(&t.r3).map(|&v| v > T::zero()));
            }
        }
        Ok(out)
    }
}
