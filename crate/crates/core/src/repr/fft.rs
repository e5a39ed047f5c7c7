//! 2D discrete Fourier transform on complex grids of any size.
//!
//! Convention: the forward transform is unnormalized,
//! `F(k, l) = sum_{r,c} z(r, c) exp(-2 pi i (k r / h + l c / w))`, and the
//! inverse carries the `1 / (h w)` factor, so Parseval reads
//! `sum |F|^2 = h w sum |z|^2`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

use crate::chip::ComplexChip;
use crate::error::Result;

thread_local! {
    // plans are cached per thread; chips of the same size reuse them
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place 2D transform of a row-major `h x w` buffer.
pub fn dft2d_in_place(data: &mut [Complex64], h: usize, w: usize, direction: Direction) {
    assert_eq!(data.len(), h * w, "buffer does not match {h}x{w}");
    let (row_fft, col_fft) = PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let mut plan = |n: usize| -> Arc<dyn Fft<f64>> {
            match direction {
                Direction::Forward => planner.plan_fft_forward(n),
                Direction::Inverse => planner.plan_fft_inverse(n),
            }
        };
        (plan(w), plan(h))
    });

    // rows are contiguous, transform them all in one call
    row_fft.process(data);

    let mut column = vec![Complex64::default(); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col_fft.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }

    if direction == Direction::Inverse {
        let scale = 1.0 / (h * w) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

/// 2D DFT of a chip (see the module docs for the normalization).
pub fn dft2d(chip: &ComplexChip, direction: Direction) -> Result<ComplexChip> {
    let (h, w) = (chip.height(), chip.width());
    let mut data = chip.pixels().to_vec();
    dft2d_in_place(&mut data, h, w, direction);
    let mut out = ComplexChip::grid(h, w, data)?;
    out.extent_m = chip.extent_m;
    Ok(out)
}

/// Moves the zero-frequency bin to `(h / 2, w / 2)`.
pub fn fftshift<T: Copy>(data: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = data.to_vec();
    for r in 0..h {
        for c in 0..w {
            out[((r + h / 2) % h) * w + (c + w / 2) % w] = data[r * w + c];
        }
    }
    out
}
