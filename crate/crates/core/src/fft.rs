//! Iterative radix-2 FFT over `Complex64`, plus a row/column 2-D transform.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Inverse transform, scaled by `1/n` so that forward then inverse is the identity.
    Inverse,
}

/// In-place transform of a power-of-two length buffer.
pub fn fft(data: &mut [Complex64], direction: Direction) -> Result<()> {
    let n = data.len();
    if !n.is_power_of_two() {
        return Err(Error::Config(format!("FFT length {n} is not a power of two")));
    }
    if n == 1 {
        return Ok(());
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }

    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    // twiddles for the largest stage; smaller stages stride through them
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }

    if direction == Direction::Inverse {
        let scale = 1.0 / n as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(())
}

/// Row-major `width`x`height` transform: rows first, then columns.
pub fn fft2d(data: &mut [Complex64], width: usize, height: usize, direction: Direction) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::Shape(format!(
            "buffer of {} values is not {width}x{height}",
            data.len()
        )));
    }
    for row in data.chunks_exact_mut(width) {
        fft(row, direction)?;
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        fft(&mut column, direction)?;
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
    Ok(())
}
