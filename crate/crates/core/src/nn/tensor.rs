use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::chip::RealChip;
use crate::error::{AtrError, Result};

/// Floating-point element type. Training runs in `f32`; gradient checks
/// re-run the same code in `f64`.
pub trait Scalar: Float + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor. Images are `(batch, height, width, channels)`,
/// feature matrices `(batch, features)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Checked constructor: the length must match and every value be finite.
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let t = Self::from_parts(dims, data)?;
        t.check_finite("tensor")?;
        Ok(t)
    }

    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || n != data.len() {
            return Err(AtrError::Shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn filled(dims: &[usize], v: T) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![v; dims.iter().product()],
        }
    }

    /// Stacks single-channel images into a `(B, H, W, 1)` batch.
    pub fn from_chips(chips: &[RealChip]) -> Result<Self> {
        let first = chips
            .first()
            .ok_or_else(|| AtrError::Shape("cannot batch zero chips".into()))?;
        let (h, w) = (first.height(), first.width());
        let mut data = Vec::with_capacity(chips.len() * h * w);
        for c in chips {
            if (c.height(), c.width()) != (h, w) {
                return Err(AtrError::Shape(format!(
                    "batch mixes {h}x{w} and {}x{} chips",
                    c.height(),
                    c.width()
                )));
            }
            data.extend(c.values().iter().map(|&v| T::of(v)));
        }
        Ok(Self {
            dims: vec![chips.len(), h, w, 1],
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    /// Elements per batch entry.
    pub fn sample_len(&self) -> usize {
        self.dims[1..].iter().product()
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::from_parts(dims.to_vec(), self.data)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn check_finite(&self, location: &str) -> Result<()> {
        check_finite(&self.data, location)
    }

    /// `(h, w, c)` of an image batch.
    pub(crate) fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [_, h, w, c] => Ok((h, w, c)),
            _ => Err(AtrError::Shape(format!("expected (B, H, W, C), got {:?}", self.dims))),
        }
    }
}

pub(crate) fn check_finite<T: Scalar>(data: &[T], location: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(AtrError::numeric(location, format!("value {:?} at flat index {i}", data[i]))),
    }
}
