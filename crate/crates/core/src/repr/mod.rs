//! Network input representations derived from a complex chip.
//!
//! Every extractor returns values in `[-1, 1]`:
//!
//! * [`magnitude_drc`]: peak-relative log magnitude, clipped to a dynamic range.
//! * [`phase_map`]: pointwise phase on `[0, 2pi)`, mapped linearly.
//! * [`psd2d`]: log power of the DC-centered 2D DFT, min-max mapped.
//!
//! [`unwrap_phase_dct`] and [`detrend_plane`] produce the inspection-only
//! unwrapped phase.

pub mod fft;
mod unwrap;

use std::f64::consts::{PI, TAU};

pub use fft::{dft2d, fftshift, Direction};
pub use unwrap::{detrend_plane, unwrap_phase_dct, wrap_angle};

use crate::chip::{ComplexChip, RealChip, ReprKind, Representation};
use crate::error::{AtrError, Result};

pub const DEFAULT_DYNAMIC_RANGE_DB: f64 = 60.0;
/// Floor added before taking logs, relative to the peak.
const REL_EPS: f64 = 1e-12;

/// Scaling applied to the power spectrum before min-max mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsdScale {
    #[default]
    Log,
    Linear,
}

/// Parameters of the representation extractors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub dynamic_range_db: f64,
    pub psd_scale: PsdScale,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            dynamic_range_db: DEFAULT_DYNAMIC_RANGE_DB,
            psd_scale: PsdScale::Log,
        }
    }
}

/// Extracts one network representation.
pub fn extract(chip: &ComplexChip, repr: Representation, opts: &ExtractOptions) -> Result<RealChip> {
    match repr {
        Representation::Magnitude => magnitude_drc(chip, opts.dynamic_range_db),
        Representation::Phase => phase_map(chip),
        Representation::Psd => psd2d_scaled(chip, opts.psd_scale),
    }
}

/// Dynamic-range-compressed magnitude: peak maps to +1, `dynamic_range_db`
/// below peak (and anything darker) maps to -1.
pub fn magnitude_drc(chip: &ComplexChip, dynamic_range_db: f64) -> Result<RealChip> {
    if !(dynamic_range_db > 0.0) {
        return Err(AtrError::InvalidParameter(format!(
            "dynamic range must be positive, got {dynamic_range_db}"
        )));
    }
    let peak = chip.pixels().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(AtrError::DegenerateInput("magnitude of an all-zero chip".into()));
    }
    let eps = REL_EPS * peak;
    let peak_db = 20.0 * (peak + eps).log10();
    let values = chip
        .pixels()
        .iter()
        .map(|z| {
            let d = 20.0 * (z.norm() + eps).log10();
            (1.0 + 2.0 * (d - peak_db) / dynamic_range_db).clamp(-1.0, 1.0)
        })
        .collect();
    RealChip::new(chip.height(), chip.width(), ReprKind::MagnitudeDrc, values)
}

/// Phase in radians on `[0, 2pi)`; exact zeros have phase 0.
pub fn raw_phase(chip: &ComplexChip) -> Result<RealChip> {
    let values = chip.pixels().iter().map(|z| phase_angle(z.re, z.im)).collect();
    RealChip::new(chip.height(), chip.width(), ReprKind::RawPhase, values)
}

fn phase_angle(re: f64, im: f64) -> f64 {
    if re == 0.0 && im == 0.0 {
        return 0.0;
    }
    let mut phi = im.atan2(re);
    if phi < 0.0 {
        phi += TAU;
    }
    // -tiny + 2pi can round up to exactly 2pi
    if phi >= TAU {
        phi -= TAU;
    }
    phi
}

/// Phase mapped from `[0, 2pi)` onto `[-1, 1)` via `phi / pi - 1`.
pub fn phase_map(chip: &ComplexChip) -> Result<RealChip> {
    let values = chip
        .pixels()
        .iter()
        .map(|z| phase_angle(z.re, z.im) / PI - 1.0)
        .collect();
    RealChip::new(chip.height(), chip.width(), ReprKind::Phase, values)
}

/// Power of the DC-centered 2D DFT, `|F|^2`, before any scaling.
pub fn power_spectrum(chip: &ComplexChip) -> Vec<f64> {
    let (h, w) = (chip.height(), chip.width());
    let mut data = chip.pixels().to_vec();
    fft::dft2d_in_place(&mut data, h, w, Direction::Forward);
    let power: Vec<f64> = data.iter().map(|z| z.norm_sqr()).collect();
    fftshift(&power, h, w)
}

/// Log-scaled, min-max normalized power spectral density.
pub fn psd2d(chip: &ComplexChip) -> Result<RealChip> {
    psd2d_scaled(chip, PsdScale::Log)
}

pub fn psd2d_scaled(chip: &ComplexChip, scale: PsdScale) -> Result<RealChip> {
    let power = power_spectrum(chip);
    let max_p = power.iter().cloned().fold(0.0, f64::max);
    if max_p == 0.0 {
        return Err(AtrError::DegenerateInput("power spectrum of an all-zero chip".into()));
    }
    let scaled: Vec<f64> = match scale {
        PsdScale::Log => {
            let eps = REL_EPS * max_p;
            power.iter().map(|p| 10.0 * (p + eps).log10()).collect()
        }
        PsdScale::Linear => power,
    };
    RealChip::new(chip.height(), chip.width(), ReprKind::Psd, min_max_to_unit(&scaled))
}

/// Maps `[min, max]` linearly onto `[-1, 1]`; a constant input maps to 0.
pub fn min_max_to_unit(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values
            .iter()
            .map(|v| (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
            .collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Bilinear resampling with corner-aligned sample grids (the four corners of
/// input and output coincide).
pub fn resize_bilinear(chip: &RealChip, out_h: usize, out_w: usize) -> Result<RealChip> {
    if out_h < 8 || out_w < 8 {
        return Err(AtrError::InvalidParameter(format!(
            "resize target {out_h}x{out_w} below 8x8"
        )));
    }
    Ok(resize_unchecked(chip, out_h, out_w))
}

fn resize_unchecked(chip: &RealChip, out_h: usize, out_w: usize) -> RealChip {
    let (h, w) = (chip.height(), chip.width());
    if (h, w) == (out_h, out_w) {
        return chip.clone();
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|i| {
                let pos = if n_out > 1 { i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64 } else { 0.0 };
                let i0 = (pos.floor() as usize).min(n_in - 1);
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let rows = axis(h, out_h);
    let cols = axis(w, out_w);
    let src = chip.values();
    let mut values = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
            let bottom = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
            values.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    // a convex combination stays inside the source range, up to rounding
    if chip.kind.is_network_input() {
        for v in &mut values {
            *v = v.clamp(-1.0, 1.0);
        }
    }
    RealChip::new(out_h, out_w, chip.kind, values).expect("bilinear output is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use num_complex::Complex64;

    fn random_chip(h: usize, w: usize, seed: u64) -> ComplexChip {
        let mut g = SplitMix64::new(seed);
        let px = (0..h * w)
            .map(|_| Complex64::new(g.uniform_in(-1.0, 1.0), g.uniform_in(-1.0, 1.0)))
            .collect();
        ComplexChip::new(h, w, px).unwrap()
    }

    #[test]
    fn drc_endpoints_and_midpoint() {
        let peak = 7.0;
        let chip = ComplexChip::from_fn(16, 16, |r, c| match (r, c) {
            (0, 0) => Complex64::new(peak, 0.0),
            (0, 1) => Complex64::new(0.0, peak * 10f64.powf(-60.0 / 20.0)),
            (0, 2) => Complex64::new(peak * 10f64.powf(-30.0 / 20.0), 0.0),
            _ => Complex64::new(peak * 1e-6, 0.0),
        })
        .unwrap();
        let m = magnitude_drc(&chip, 60.0).unwrap();
        assert_eq!(m.at(0, 0), 1.0);
        assert!((m.at(0, 1) + 1.0).abs() < 1e-6);
        assert!(m.at(0, 2).abs() < 1e-6);
        assert_eq!(m.at(5, 5), -1.0, "120 dB below peak clips");
    }

    #[test]
    fn drc_rejects_zero_chip_and_bad_range() {
        let zero = ComplexChip::from_fn(16, 16, |_, _| Complex64::default()).unwrap();
        assert!(matches!(magnitude_drc(&zero, 60.0), Err(AtrError::DegenerateInput(_))));
        assert!(magnitude_drc(&random_chip(16, 16, 1), 0.0).is_err());
    }

    #[test]
    fn drc_is_scale_invariant() {
        let chip = random_chip(20, 20, 3);
        let scaled = ComplexChip::new(20, 20, chip.pixels().iter().map(|z| z * 1234.5).collect()).unwrap();
        let a = magnitude_drc(&chip, 60.0).unwrap();
        let b = magnitude_drc(&scaled, 60.0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_examples() {
        let chip = ComplexChip::from_fn(16, 16, |r, c| match (r, c) {
            (0, 0) => Complex64::new(1.0, 0.0),
            (0, 1) => Complex64::new(-2.0, 0.0),
            (0, 2) => Complex64::new(0.0, -1.0),
            (0, 3) => Complex64::new(1.0, -1e-300),
            _ => Complex64::default(),
        })
        .unwrap();
        let p = phase_map(&chip).unwrap();
        assert_eq!(p.at(0, 0), -1.0);
        assert_eq!(p.at(0, 1), 0.0);
        assert!((p.at(0, 2) - 0.5).abs() < 1e-15);
        assert!(p.at(0, 3) < 1.0);
        assert_eq!(p.at(4, 4), -1.0, "zero pixel has phase 0");
    }

    #[test]
    fn psd_of_constant_chip_is_all_dc() {
        let c = Complex64::new(0.5, -0.25);
        let chip = ComplexChip::from_fn(16, 20, |_, _| c).unwrap();
        let p = power_spectrum(&chip);
        let dc = (8 * 20) + 10;
        let expected = (c.norm() * 16.0 * 20.0).powi(2);
        assert!((p[dc] - expected).abs() < 1e-9 * expected);
        for (i, v) in p.iter().enumerate() {
            if i != dc {
                assert!(*v < 1e-18 * expected);
            }
        }
        let psd = psd2d(&chip).unwrap();
        assert_eq!(psd.values()[dc], 1.0);
    }

    #[test]
    fn psd_single_tone_lands_at_offset() {
        let (h, w) = (16, 16);
        let chip = ComplexChip::from_fn(h, w, |r, c| {
            Complex64::from_polar(1.0, TAU * (3.0 * r as f64 / h as f64 + 5.0 * c as f64 / w as f64))
        })
        .unwrap();
        let p = power_spectrum(&chip);
        let peak = (h / 2 + 3) * w + (w / 2 + 5);
        let total: f64 = p.iter().sum();
        assert!((p[peak] - total).abs() < 1e-9 * total);
    }

    #[test]
    fn psd_is_invariant_to_global_phase() {
        let chip = random_chip(18, 22, 9);
        let base = psd2d(&chip).unwrap();
        for theta in [0.3, 1.7, -2.9] {
            let rot = Complex64::from_polar(1.0, theta);
            let rotated = ComplexChip::new(18, 22, chip.pixels().iter().map(|z| z * rot).collect()).unwrap();
            let other = psd2d(&rotated).unwrap();
            for (a, b) in base.values().iter().zip(other.values()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn extractors_stay_in_unit_range() {
        for seed in 0..5 {
            let chip = random_chip(24, 17, seed);
            for repr in Representation::ALL {
                let r = extract(&chip, repr, &ExtractOptions::default()).unwrap();
                assert!(r.values().iter().all(|v| (-1.0..=1.0).contains(v)));
            }
            let lin = psd2d_scaled(&chip, PsdScale::Linear).unwrap();
            assert!(lin.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn resize_cases() {
        let checker = RealChip::from_fn(2, 2, ReprKind::Generic, |r, c| ((r + c) % 2) as f64).unwrap();
        let up = resize_unchecked(&checker, 3, 3);
        assert!((up.at(1, 1) - 0.5).abs() < 1e-15);
        assert_eq!(up.at(0, 0), 0.0);
        assert_eq!(up.at(2, 0), 1.0);

        let constant = RealChip::from_fn(30, 41, ReprKind::Generic, |_, _| 0.25).unwrap();
        let r = resize_bilinear(&constant, 12, 9).unwrap();
        assert!(r.values().iter().all(|v| (v - 0.25).abs() < 1e-15));

        let same = RealChip::from_fn(10, 10, ReprKind::Generic, |r, c| (r * c) as f64).unwrap();
        assert_eq!(resize_bilinear(&same, 10, 10).unwrap(), same);
        assert!(resize_bilinear(&same, 7, 10).is_err());
    }
}
