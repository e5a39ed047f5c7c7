//! Unweighted least-squares phase unwrapping and plane detrending.
//!
//! The unwrapper solves the discrete Poisson equation `lap(phi) = rho` with
//! Neumann boundaries, where `rho` is the divergence of the wrapped phase
//! differences. Instead of an explicit DCT, the right-hand side is mirrored
//! into a `2h x 2w` even extension; the periodic Laplacian of that extension
//! is diagonal in the FFT basis with eigenvalues
//! `2 cos(pi k / h) + 2 cos(pi l / w) - 4`, which are exactly the DCT-II
//! eigenvalues of the Neumann problem.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::fft::{dft2d_in_place, Direction};
use crate::chip::{RealChip, ReprKind};
use crate::error::{AtrError, Result};

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * (a / TAU).round();
    if w <= -PI {
        w + TAU
    } else if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Least-squares unwrapped surface of a raw phase map, mean removed.
pub fn unwrap_phase_dct(wrapped: &RealChip) -> Result<RealChip> {
    if !matches!(wrapped.kind, ReprKind::RawPhase | ReprKind::Generic) {
        return Err(AtrError::InvalidParameter(format!(
            "unwrapping needs raw phase in radians, got {:?}",
            wrapped.kind
        )));
    }
    let (h, w) = (wrapped.height(), wrapped.width());
    let phase = wrapped.values();

    // wrapped forward differences; zero across the far boundary (Neumann)
    let mut dx = vec![0.0; h * w];
    let mut dy = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                dx[i] = wrap_angle(phase[i + 1] - phase[i]);
            }
            if r + 1 < h {
                dy[i] = wrap_angle(phase[i + w] - phase[i]);
            }
        }
    }
    let mut rho = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let mut v = dx[i] + dy[i];
            if c > 0 {
                v -= dx[i - 1];
            }
            if r > 0 {
                v -= dy[i - w];
            }
            rho[i] = v;
        }
    }

    let solution = solve_neumann_poisson(&rho, h, w);
    let mean = solution.iter().sum::<f64>() / solution.len() as f64;
    RealChip::new(h, w, ReprKind::UnwrappedPhase, solution.into_iter().map(|v| v - mean).collect())
}

/// Solves `lap(phi) = rho` with reflecting boundaries; the free constant is
/// fixed by zeroing the DC term.
fn solve_neumann_poisson(rho: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (eh, ew) = (2 * h, 2 * w);
    let mut ext = vec![Complex64::default(); eh * ew];
    for r in 0..eh {
        let sr = if r < h { r } else { eh - 1 - r };
        for c in 0..ew {
            let sc = if c < w { c } else { ew - 1 - c };
            ext[r * ew + c] = Complex64::new(rho[sr * w + sc], 0.0);
        }
    }
    dft2d_in_place(&mut ext, eh, ew, Direction::Forward);
    for k in 0..eh {
        let ck = (PI * k as f64 / h as f64).cos();
        for l in 0..ew {
            let cl = (PI * l as f64 / w as f64).cos();
            let denom = 2.0 * ck + 2.0 * cl - 4.0;
            let i = k * ew + l;
            ext[i] = if k == 0 && l == 0 { Complex64::default() } else { ext[i] / denom };
        }
    }
    dft2d_in_place(&mut ext, eh, ew, Direction::Inverse);
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push(ext[r * ew + c].re);
        }
    }
    out
}

/// Removes the least-squares plane `a x + b y + c`.
///
/// On a full rectangular grid the centered coordinates and the constant are
/// mutually orthogonal, so the normal equations decouple.
pub fn detrend_plane(chip: &RealChip) -> Result<RealChip> {
    let (h, w) = (chip.height(), chip.width());
    let (xm, ym) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (mut sxv, mut syv, mut sxx, mut syy, mut sv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in 0..h {
        let y = r as f64 - ym;
        for c in 0..w {
            let x = c as f64 - xm;
            let v = chip.at(r, c);
            sxv += x * v;
            syv += y * v;
            sxx += x * x;
            syy += y * y;
            sv += v;
        }
    }
    let a = if sxx > 0.0 { sxv / sxx } else { 0.0 };
    let b = if syy > 0.0 { syv / syy } else { 0.0 };
    let c0 = sv / (h * w) as f64;
    let kind = if chip.kind.is_network_input() { ReprKind::Generic } else { chip.kind };
    RealChip::from_fn(h, w, kind, |r, c| {
        chip.at(r, c) - (a * (c as f64 - xm) + b * (r as f64 - ym) + c0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn wrapped_of(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> RealChip {
        RealChip::from_fn(h, w, ReprKind::RawPhase, |r, c| f(r, c).rem_euclid(TAU)).unwrap()
    }

    fn max_err_after_mean(out: &RealChip, truth: impl Fn(usize, usize) -> f64) -> f64 {
        let (h, w) = (out.height(), out.width());
        let mut t = Vec::new();
        for r in 0..h {
            for c in 0..w {
                t.push(truth(r, c));
            }
        }
        let tm = t.iter().sum::<f64>() / t.len() as f64;
        out.values().iter().zip(&t).map(|(o, t)| (o - (t - tm)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_unwraps_to_zero() {
        let out = unwrap_phase_dct(&wrapped_of(20, 24, |_, _| 2.5)).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn smooth_surface_is_recovered() {
        let (h, w) = (48, 40);
        let truth = |r: usize, c: usize| {
            let (x, y) = (c as f64, r as f64);
            3.0 * (x / 7.0).sin() + 0.02 * (x - 20.0) * (y - 24.0) + 0.4 * y
        };
        let out = unwrap_phase_dct(&wrapped_of(h, w, truth)).unwrap();
        assert!(max_err_after_mean(&out, truth) < 1e-6);
    }

    #[test]
    fn scaled_phase_input_is_rejected() {
        let scaled = RealChip::from_fn(4, 4, ReprKind::Phase, |_, _| 0.0).unwrap();
        assert!(unwrap_phase_dct(&scaled).is_err());
    }

    #[test]
    fn detrend_removes_planes_and_is_idempotent() {
        let plane = RealChip::from_fn(9, 13, ReprKind::Generic, |r, c| 0.7 * c as f64 - 1.3 * r as f64 + 4.0).unwrap();
        assert!(detrend_plane(&plane).unwrap().values().iter().all(|v| v.abs() < 1e-9));

        let mut g = SplitMix64::new(5);
        let noisy = RealChip::from_fn(9, 13, ReprKind::Generic, |r, c| {
            0.7 * c as f64 - 1.3 * r as f64 + 4.0
        })
        .unwrap();
        let values: Vec<f64> = noisy.values().iter().map(|v| v + g.uniform_in(-1.0, 1.0)).collect();
        let noisy = RealChip::new(9, 13, ReprKind::Generic, values).unwrap();
        let d = detrend_plane(&noisy).unwrap();
        let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
        for r in 0..9 {
            for c in 0..13 {
                m += d.at(r, c);
                mx += d.at(r, c) * c as f64;
                my += d.at(r, c) * r as f64;
            }
        }
        assert!(m.abs() < 1e-9 && mx.abs() < 1e-9 && my.abs() < 1e-9);
        let dd = detrend_plane(&d).unwrap();
        for (a, b) in dd.values().iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
