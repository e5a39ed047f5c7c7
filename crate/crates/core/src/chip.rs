//! Image containers shared by every stage, and their on-disk formats.
//!
//! `CHIP` files hold a complex single-look chip:
//!
//! ```text
//! "SLC1" | u32 height | u32 width | height*width x (f32 re, f32 im)
//! ```
//!
//! `REP1` files hold a real grid:
//!
//! ```text
//! "REP1" | u32 height | u32 width | u32 kind | height*width x f32
//! ```
//!
//! All integers and floats are little-endian, pixels are row-major.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{AtrError, Result};
use crate::io::{read_file, write_atomic};

pub const MIN_CHIP_DIM: usize = 16;
pub const CHIP_MAGIC: &[u8; 4] = b"SLC1";
pub const REP_MAGIC: &[u8; 4] = b"REP1";

/// Complex single-look chip. Rows run along cross-range (the platform track),
/// columns along range.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChip {
    height: usize,
    width: usize,
    /// Physical size in meters as (cross-range, range).
    pub extent_m: (f64, f64),
    pixels: Vec<Complex64>,
}

impl ComplexChip {
    pub fn new(height: usize, width: usize, pixels: Vec<Complex64>) -> Result<Self> {
        Self::with_extent(height, width, (5.0, 5.0), pixels)
    }

    pub fn with_extent(
        height: usize,
        width: usize,
        extent_m: (f64, f64),
        pixels: Vec<Complex64>,
    ) -> Result<Self> {
        if height < MIN_CHIP_DIM || width < MIN_CHIP_DIM {
            return Err(AtrError::InvalidParameter(format!(
                "chip must be at least {MIN_CHIP_DIM}x{MIN_CHIP_DIM}, got {height}x{width}"
            )));
        }
        Self::unchecked_dims(height, width, extent_m, pixels)
    }

    /// Like [`ComplexChip::new`] but without the minimum-size rule. Used for
    /// transform kernels and test fixtures that operate on tiny grids.
    pub fn grid(height: usize, width: usize, pixels: Vec<Complex64>) -> Result<Self> {
        Self::unchecked_dims(height, width, (0.0, 0.0), pixels)
    }

    fn unchecked_dims(
        height: usize,
        width: usize,
        extent_m: (f64, f64),
        pixels: Vec<Complex64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(AtrError::Shape("chip with a zero dimension".into()));
        }
        if pixels.len() != height * width {
            return Err(AtrError::Shape(format!(
                "{height}x{width} chip needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(AtrError::numeric("chip", format!("non-finite pixel at index {i}")));
        }
        Ok(Self {
            height,
            width,
            extent_m,
            pixels,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::grid(height, width, pixels).map(|mut chip| {
            chip.extent_m = (5.0, 5.0);
            chip
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[Complex64] {
        &self.pixels
    }

    /// Mutable pixel access. Callers must keep every value finite.
    pub fn pixels_mut(&mut self) -> &mut [Complex64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<Complex64> {
        self.pixels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.pixels[row * self.width + col]
    }

    /// Rectangular window `[row, row+h) x [col, col+w)`; the extent shrinks
    /// proportionally.
    pub fn window(&self, row: usize, col: usize, h: usize, w: usize) -> Result<Self> {
        if row + h > self.height || col + w > self.width || h == 0 || w == 0 {
            return Err(AtrError::Shape(format!(
                "window {h}x{w}@({row},{col}) outside {}x{} chip",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(h * w);
        for r in row..row + h {
            pixels.extend_from_slice(&self.pixels[r * self.width + col..r * self.width + col + w]);
        }
        Ok(Self {
            height: h,
            width: w,
            extent_m: (
                self.extent_m.0 * h as f64 / self.height as f64,
                self.extent_m.1 * w as f64 / self.width as f64,
            ),
            pixels,
        })
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.pixels.len() as f64
    }

    /// Encodes the chip in the `SLC1` format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.pixels.len());
        out.extend_from_slice(CHIP_MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for z in &self.pixels {
            out.extend_from_slice(&(z.re as f32).to_le_bytes());
            out.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != CHIP_MAGIC {
            return Err(AtrError::format("CHIP file", "missing SLC1 magic"));
        }
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = 12 + 8 * height * width;
        if bytes.len() != expected {
            return Err(AtrError::format(
                "CHIP file",
                format!("{height}x{width} needs {expected} bytes, found {}", bytes.len()),
            ));
        }
        let pixels = bytes[12..]
            .chunks_exact(8)
            .map(|p| {
                let re = f32::from_le_bytes(p[..4].try_into().unwrap());
                let im = f32::from_le_bytes(p[4..].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Self::grid(height, width, pixels).map_err(|e| AtrError::format("CHIP file", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut chip = Self::from_bytes(&read_file(path)?)?;
        chip.extent_m = (5.0, 5.0);
        Ok(chip)
    }

    /// Rounds every pixel through 32-bit floats, i.e. what a save/load
    /// cycle would produce.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for z in &mut out.pixels {
            *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
        }
        out
    }
}

/// What a real-valued grid represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReprKind {
    MagnitudeDrc,
    Phase,
    Psd,
    UnwrappedPhase,
    /// Phase in radians on `[0, 2pi)`, the input of the unwrapper.
    RawPhase,
    /// Anything else: weight maps, filters, plain test grids.
    Generic,
}

impl ReprKind {
    pub fn code(self) -> u32 {
        match self {
            ReprKind::MagnitudeDrc => 0,
            ReprKind::Phase => 1,
            ReprKind::Psd => 2,
            ReprKind::UnwrappedPhase => 3,
            ReprKind::RawPhase => 4,
            ReprKind::Generic => 5,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => ReprKind::MagnitudeDrc,
            1 => ReprKind::Phase,
            2 => ReprKind::Psd,
            3 => ReprKind::UnwrappedPhase,
            4 => ReprKind::RawPhase,
            5 => ReprKind::Generic,
            other => return Err(AtrError::format("REP1 file", format!("unknown kind code {other}"))),
        })
    }

    /// Kinds that feed the network and therefore must lie in `[-1, 1]`.
    pub fn is_network_input(self) -> bool {
        matches!(self, ReprKind::MagnitudeDrc | ReprKind::Phase | ReprKind::Psd)
    }
}

/// Real-valued image, one representation of a chip.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChip {
    height: usize,
    width: usize,
    pub kind: ReprKind,
    values: Vec<f64>,
}

impl RealChip {
    pub fn new(height: usize, width: usize, kind: ReprKind, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(AtrError::Shape(format!(
                "{height}x{width} real chip with {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AtrError::numeric("real chip", format!("non-finite value at index {i}")));
        }
        if kind.is_network_input() {
            if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
                return Err(AtrError::InvalidParameter(format!(
                    "{kind:?} value {v} outside [-1, 1]"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            kind,
            values,
        })
    }

    pub fn from_fn(height: usize, width: usize, kind: ReprKind, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, kind, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn with_kind(mut self, kind: ReprKind) -> Result<Self> {
        self.kind = kind;
        Self::new(self.height, self.width, kind, self.values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(REP_MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != REP_MAGIC {
            return Err(AtrError::format("REP1 file", "missing REP1 magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let (height, width) = (word(4) as usize, word(8) as usize);
        let kind = ReprKind::from_code(word(12))?;
        if bytes.len() != 16 + 4 * height * width {
            return Err(AtrError::format("REP1 file", "payload length does not match header"));
        }
        let values = bytes[16..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Self::new(height, width, kind, values)
    }

    pub fn save_rep(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// 8-bit binary PGM, min-max mapped (a constant image maps to mid-gray).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(quantize_u8(&self.values));
        out
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_pgm())
    }
}

/// Min-max maps values onto `0..=255`.
pub fn quantize_u8(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect()
}

/// A network input representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representation {
    Magnitude,
    Phase,
    Psd,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Magnitude, Representation::Phase, Representation::Psd];

    pub fn code(self) -> u8 {
        match self {
            Representation::Magnitude => 0,
            Representation::Phase => 1,
            Representation::Psd => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.code() == code)
            .ok_or_else(|| AtrError::format("representation code", code.to_string()))
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Magnitude => "mag",
            Representation::Phase => "phase",
            Representation::Psd => "psd",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Representation::Magnitude => "Magnitude",
            Representation::Phase => "Phase",
            Representation::Psd => "PSD",
        }
    }

    pub fn kind(self) -> ReprKind {
        match self {
            Representation::Magnitude => ReprKind::MagnitudeDrc,
            Representation::Phase => ReprKind::Phase,
            Representation::Psd => ReprKind::Psd,
        }
    }
}

impl FromStr for Representation {
    type Err = AtrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mag" | "magnitude" => Ok(Representation::Magnitude),
            "phase" => Ok(Representation::Phase),
            "psd" => Ok(Representation::Psd),
            "ots" | "mag-ots" | "vgg" => Err(AtrError::Config(
                "the pre-trained off-the-shelf (VGG) configuration is not supported: it needs \
                 externally trained photographic weights"
                    .into(),
            )),
            other => Err(AtrError::Config(format!("unknown representation `{other}`"))),
        }
    }
}

/// Ordered, duplicate-free, non-empty set of representations. The order is
/// always magnitude, phase, psd regardless of how the set was written.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReprSet(Vec<Representation>);

impl ReprSet {
    pub fn new(reprs: impl IntoIterator<Item = Representation>) -> Result<Self> {
        let mut v: Vec<Representation> = reprs.into_iter().collect();
        let n = v.len();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(AtrError::InvalidParameter("empty representation set".into()));
        }
        if v.len() != n {
            return Err(AtrError::InvalidParameter("duplicate representation in set".into()));
        }
        Ok(Self(v))
    }

    pub fn single(r: Representation) -> Self {
        Self(vec![r])
    }

    pub fn as_slice(&self) -> &[Representation] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, r: Representation) -> bool {
        self.0.contains(&r)
    }

    /// Position of `r` among the model paths.
    pub fn index_of(&self, r: Representation) -> Option<usize> {
        self.0.iter().position(|&x| x == r)
    }

    pub fn title(&self) -> String {
        let parts: Vec<&str> = self.0.iter().map(|r| r.title()).collect();
        if parts.len() == 1 {
            parts[0].to_string()
        } else {
            parts
                .iter()
                .map(|t| if *t == "Magnitude" { "Mag" } else { t })
                .collect::<Vec<_>>()
                .join("+")
        }
    }

    /// The six configurations of the experiment grid, reference first.
    pub fn grid() -> Vec<ReprSet> {
        use Representation::*;
        vec![
            ReprSet(vec![Magnitude]),
            ReprSet(vec![Phase]),
            ReprSet(vec![Psd]),
            ReprSet(vec![Magnitude, Phase]),
            ReprSet(vec![Magnitude, Psd]),
            ReprSet(vec![Magnitude, Phase, Psd]),
        ]
    }
}

impl fmt::Display for ReprSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|r| r.name()).collect();
        write!(f, "{}", names.join("+"))
    }
}

impl FromStr for ReprSet {
    type Err = AtrError;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split([',', '+'])
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Representation>>>()?;
        ReprSet::new(parts)
    }
}
