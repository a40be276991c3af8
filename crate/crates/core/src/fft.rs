//! Self-sorting (Stockham) mixed-radix FFT for lengths of the form 2^a 3^b.
//!
//! Transforms operate on `stride` interleaved sequences at once: element `i`
//! of lane `q` lives at `q + stride * i`. This lets a multi-dimensional
//! transform sweep each axis with a contiguous inner loop.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `X_k = sum_j x_j exp(-2 pi i jk / n)`, unnormalized.
    Forward,
    /// `x_j = sum_k X_k exp(+2 pi i jk / n)`, unnormalized.
    Inverse,
}

#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    radices: Vec<usize>,
    // exp(-2 pi i j / n) for j in 0..n
    roots: Vec<Complex64>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("transform length must be positive"));
        }
        let mut rest = n;
        let mut radices = Vec::new();
        while rest.is_multiple_of(4) {
            radices.push(4);
            rest /= 4;
        }
        while rest.is_multiple_of(2) {
            radices.push(2);
            rest /= 2;
        }
        while rest.is_multiple_of(3) {
            radices.push(3);
            rest /= 3;
        }
        if rest != 1 {
            return Err(Error::InvalidGrid(
                "transform length must factor as 2^a 3^b",
            ));
        }
        let roots = (0..n)
            .map(|j| {
                let theta = -2.0 * PI * (j as f64) / (n as f64);
                Complex64::new(libm::cos(theta), libm::sin(theta))
            })
            .collect();
        Ok(Self { n, radices, roots })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn root(&self, idx: usize, dir: Direction) -> Complex64 {
        let w = self.roots[idx % self.n];
        match dir {
            Direction::Forward => w,
            Direction::Inverse => w.conj(),
        }
    }

    /// Transforms `stride` interleaved sequences held in `data` (length
    /// `n * stride`). `scratch` must have the same length.
    pub fn process(
        &self,
        data: &mut [Complex64],
        scratch: &mut [Complex64],
        stride: usize,
        dir: Direction,
    ) {
        let total = self.n * stride;
        debug_assert_eq!(data.len(), total);
        debug_assert!(scratch.len() >= total);
        let scratch = &mut scratch[..total];

        let mut len = self.n;
        let mut s = stride;
        let mut in_data = true;
        for &r in &self.radices {
            let (src, dst): (&[Complex64], &mut [Complex64]) = if in_data {
                (&*data, &mut *scratch)
            } else {
                (&*scratch, &mut *data)
            };
            let m = len / r;
            let step = self.n / len;
            match r {
                2 => self.radix2(src, dst, m, s, step, dir),
                3 => self.radix3(src, dst, m, s, step, dir),
                4 => self.radix4(src, dst, m, s, step, dir),
                _ => unreachable!(),
            }
            len = m;
            s *= r;
            in_data = !in_data;
        }
        if !in_data {
            data.copy_from_slice(scratch);
        }
    }

    fn radix2(
        &self,
        src: &[Complex64],
        dst: &mut [Complex64],
        m: usize,
        s: usize,
        step: usize,
        dir: Direction,
    ) {
        for p in 0..m {
            let w = self.root(p * step, dir);
            let a_off = s * p;
            let b_off = s * (p + m);
            let y0 = s * (2 * p);
            let y1 = s * (2 * p + 1);
            for q in 0..s {
                let a = src[a_off + q];
                let b = src[b_off + q];
                dst[y0 + q] = a + b;
                dst[y1 + q] = (a - b) * w;
            }
        }
    }

    fn radix3(
        &self,
        src: &[Complex64],
        dst: &mut [Complex64],
        m: usize,
        s: usize,
        step: usize,
        dir: Direction,
    ) {
        // omega_3 = exp(-+ 2 pi i / 3)
        let sin60 = libm::sqrt(3.0) / 2.0;
        let sgn = match dir {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        for p in 0..m {
            let w1 = self.root(p * step, dir);
            let w2 = self.root(2 * p * step, dir);
            let o0 = s * p;
            let o1 = s * (p + m);
            let o2 = s * (p + 2 * m);
            let y0 = s * (3 * p);
            let y1 = s * (3 * p + 1);
            let y2 = s * (3 * p + 2);
            for q in 0..s {
                let a0 = src[o0 + q];
                let a1 = src[o1 + q];
                let a2 = src[o2 + q];
                let t1 = a1 + a2;
                let t2 = a0 - t1 * 0.5;
                let d = a1 - a2;
                // i * sgn * sin60 * d
                let t3 = Complex64::new(-d.im * sgn * sin60, d.re * sgn * sin60);
                dst[y0 + q] = a0 + t1;
                dst[y1 + q] = (t2 + t3) * w1;
                dst[y2 + q] = (t2 - t3) * w2;
            }
        }
    }

    fn radix4(
        &self,
        src: &[Complex64],
        dst: &mut [Complex64],
        m: usize,
        s: usize,
        step: usize,
        dir: Direction,
    ) {
        let inverse = dir == Direction::Inverse;
        for p in 0..m {
            let w1 = self.root(p * step, dir);
            let w2 = self.root(2 * p * step, dir);
            let w3 = self.root(3 * p * step, dir);
            let o0 = s * p;
            let o1 = s * (p + m);
            let o2 = s * (p + 2 * m);
            let o3 = s * (p + 3 * m);
            let y0 = s * (4 * p);
            for q in 0..s {
                let a0 = src[o0 + q];
                let a1 = src[o1 + q];
                let a2 = src[o2 + q];
                let a3 = src[o3 + q];
                let s02 = a0 + a2;
                let d02 = a0 - a2;
                let s13 = a1 + a3;
                let d13 = a1 - a3;
                // forward: -i * d13, inverse: +i * d13
                let rot = if inverse {
                    Complex64::new(-d13.im, d13.re)
                } else {
                    Complex64::new(d13.im, -d13.re)
                };
                dst[y0 + q] = s02 + s13;
                dst[y0 + s + q] = (d02 + rot) * w1;
                dst[y0 + 2 * s + q] = (s02 - s13) * w2;
                dst[y0 + 3 * s + q] = (d02 - rot) * w3;
            }
        }
    }
}

/// Row-major multi-dimensional transform built from one [`Fft`] per axis.
#[derive(Debug, Clone)]
pub struct FftNd {
    shape: Vec<usize>,
    plans: Vec<Fft>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Result<Self> {
        let plans = shape
            .iter()
            .map(|&n| Fft::new(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shape: shape.to_vec(),
            plans,
        })
    }

    pub fn total(&self) -> usize {
        self.shape.iter().product()
    }

    /// In-place unnormalized transform over every axis.
    pub fn process(&self, data: &mut [Complex64], scratch: &mut [Complex64], dir: Direction) {
        let total = self.total();
        debug_assert_eq!(data.len(), total);
        for (axis, plan) in self.plans.iter().enumerate() {
            let n = self.shape[axis];
            if n == 1 {
                continue;
            }
            let inner: usize = self.shape[axis + 1..].iter().product();
            let block = n * inner;
            for (chunk, scr) in data.chunks_mut(block).zip(scratch.chunks_mut(block)) {
                plan.process(chunk, scr, inner, dir);
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        let mut scratch = alloc::vec![Complex64::new(0.0, 0.0); data.len()];
        self.process(data, &mut scratch, Direction::Forward);
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        let mut scratch = alloc::vec![Complex64::new(0.0, 0.0); data.len()];
        self.process(data, &mut scratch, Direction::Inverse);
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}
