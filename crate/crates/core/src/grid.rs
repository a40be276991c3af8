//! Periodic boxes and their Fourier lattices.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::FftNd;

/// Default fraction of the Nyquist index kept after pointwise products.
pub const TWO_THIRDS: f64 = 2.0 / 3.0;

/// Plain description of a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub points: Vec<usize>,
    pub periods: Vec<f64>,
    pub dealias_fraction: f64,
}

impl GridSpec {
    pub fn new(points: &[usize], periods: &[f64]) -> Self {
        Self {
            points: points.to_vec(),
            periods: periods.to_vec(),
            dealias_fraction: TWO_THIRDS,
        }
    }

    /// `2pi`-periodic cube with `n` points per axis.
    pub fn cube(dim: usize, n: usize) -> Self {
        Self::new(&alloc::vec![n; dim], &alloc::vec![2.0 * PI; dim])
    }

    pub fn with_periods(mut self, periods: &[f64]) -> Self {
        self.periods = periods.to_vec();
        self
    }

    pub fn with_dealias(mut self, fraction: f64) -> Self {
        self.dealias_fraction = fraction;
        self
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.points.len();
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid("dimension must be 2 or 3"));
        }
        if self.periods.len() != dim {
            return Err(Error::InvalidGrid("one period per axis required"));
        }
        for &n in &self.points {
            if n < 8 || !is_smooth_23(n) {
                return Err(Error::InvalidGrid(
                    "points per axis must be >= 8 and of the form 2^a 3^b",
                ));
            }
        }
        for &l in &self.periods {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid("periods must be finite and positive"));
            }
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid("dealias fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn is_smooth_23(mut n: usize) -> bool {
    while n.is_multiple_of(2) {
        n /= 2;
    }
    while n.is_multiple_of(3) {
        n /= 3;
    }
    n == 1
}

/// Signed lattice index of FFT slot `i` on an axis of `n` points.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 || (i == n / 2 && n % 2 == 1) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// FFT slot of signed index `m`, or `None` when it is not representable
/// (the Nyquist slot only represents `-n/2`).
#[inline]
pub fn slot_of(m: i64, n: usize) -> Option<usize> {
    let half = (n / 2) as i64;
    if m >= -half && m < n as i64 - half {
        Some(if m < 0 {
            (m + n as i64) as usize
        } else {
            m as usize
        })
    } else {
        None
    }
}

/// A validated grid with its transform plan and wavenumber tables.
#[derive(Debug)]
pub struct Grid {
    spec: GridSpec,
    fft: FftNd,
    total: usize,
    strides: Vec<usize>,
    wavenumbers: Vec<Vec<f64>>,
    signed: Vec<Vec<i64>>,
    keep_axis: Vec<Vec<bool>>,
    k2: Vec<f64>,
    keep: Vec<bool>,
    conj: Vec<usize>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Self>> {
        spec.validate()?;
        let dim = spec.dim();
        let fft = FftNd::new(&spec.points)?;
        let total = spec.points.iter().product();
        let mut strides = alloc::vec![1usize; dim];
        for a in (0..dim - 1).rev() {
            strides[a] = strides[a + 1] * spec.points[a + 1];
        }
        let mut wavenumbers: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut signed = Vec::with_capacity(dim);
        let mut keep_axis: Vec<Vec<bool>> = Vec::with_capacity(dim);
        for a in 0..dim {
            let n = spec.points[a];
            let scale = 2.0 * PI / spec.periods[a];
            let s: Vec<i64> = (0..n).map(|i| signed_index(i, n)).collect();
            let cutoff = spec.dealias_fraction * (n as f64) / 2.0;
            keep_axis.push(
                s.iter()
                    .map(|&m| (m.unsigned_abs() as f64) < cutoff)
                    .collect(),
            );
            wavenumbers.push(s.iter().map(|&m| scale * m as f64).collect());
            signed.push(s);
        }
        let mut k2 = alloc::vec![0.0; total];
        let mut keep = alloc::vec![true; total];
        for idx in 0..total {
            let mut rem = idx;
            let mut acc = 0.0;
            let mut kept = true;
            for a in 0..dim {
                let i = rem / strides[a];
                rem %= strides[a];
                acc += wavenumbers[a][i] * wavenumbers[a][i];
                kept &= keep_axis[a][i];
            }
            k2[idx] = acc;
            keep[idx] = kept;
        }
        let mut grid = Self {
            spec,
            fft,
            total,
            strides,
            wavenumbers,
            signed,
            keep_axis,
            k2,
            keep,
            conj: Vec::new(),
        };
        grid.conj = (0..total).map(|i| grid.conjugate_index(i)).collect();
        Ok(Arc::new(grid))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn points(&self) -> &[usize] {
        &self.spec.points
    }

    pub fn periods(&self) -> &[f64] {
        &self.spec.periods
    }

    /// Number of grid points (and Fourier modes).
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn volume(&self) -> f64 {
        self.spec.periods.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.total as f64
    }

    pub fn min_spacing(&self) -> f64 {
        self.spec
            .points
            .iter()
            .zip(&self.spec.periods)
            .map(|(&n, &l)| l / n as f64)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn fft(&self) -> &FftNd {
        &self.fft
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Wavenumber `2 pi m / L` along `axis` for FFT slot `i`.
    pub fn wavenumber(&self, axis: usize, i: usize) -> f64 {
        self.wavenumbers[axis][i]
    }

    pub fn axis_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    pub fn axis_signed(&self, axis: usize) -> &[i64] {
        &self.signed[axis]
    }

    pub fn axis_kept(&self, axis: usize) -> &[bool] {
        &self.keep_axis[axis]
    }

    /// `|k|^2` per flat mode index.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// Dealiasing mask per flat mode index.
    pub fn kept(&self) -> &[bool] {
        &self.keep
    }

    /// Splits a flat index into per-axis FFT slots.
    pub fn unflatten(&self, mut idx: usize, out: &mut [usize]) {
        for (a, &s) in self.strides.iter().enumerate() {
            out[a] = idx / s;
            idx %= s;
        }
    }

    pub fn flatten(&self, slots: &[usize]) -> usize {
        slots.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Wavevector of a flat mode index.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let mut slots = [0usize; 3];
        self.unflatten(idx, &mut slots[..self.dim()]);
        let mut k = [0.0; 3];
        for a in 0..self.dim() {
            k[a] = self.wavenumbers[a][slots[a]];
        }
        k
    }

    /// Flat index of the mode `-k` for mode `idx`.
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let mut slots = [0usize; 3];
        let dim = self.dim();
        self.unflatten(idx, &mut slots[..dim]);
        let mut out = 0;
        for a in 0..dim {
            let n = self.spec.points[a];
            out += ((n - slots[a]) % n) * self.strides[a];
        }
        out
    }

    /// Table lookup of [`Grid::conjugate_index`].
    #[inline]
    pub fn conjugate_index_fast(&self, idx: usize) -> usize {
        self.conj[idx]
    }

    /// Physical coordinate of the grid point with flat index `idx`.
    pub fn coordinate(&self, idx: usize) -> [f64; 3] {
        let mut slots = [0usize; 3];
        self.unflatten(idx, &mut slots[..self.dim()]);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = self.spec.periods[a] * slots[a] as f64 / self.spec.points[a] as f64;
        }
        x
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.spec == other.spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rules() {
        assert!(Grid::new(GridSpec::cube(3, 8)).is_ok());
        assert!(Grid::new(GridSpec::cube(2, 48)).is_ok());
        assert!(Grid::new(GridSpec::cube(3, 4)).is_err());
        assert!(Grid::new(GridSpec::cube(2, 10)).is_err());
        assert!(Grid::new(GridSpec::cube(1, 8)).is_err());
        assert!(Grid::new(GridSpec::new(&[8, 8], &[1.0, -1.0])).is_err());
        assert!(Grid::new(GridSpec::cube(2, 8).with_dealias(0.0)).is_err());
    }

    #[test]
    fn signed_indices_and_slots() {
        assert_eq!(signed_index(0, 8), 0);
        assert_eq!(signed_index(3, 8), 3);
        assert_eq!(signed_index(4, 8), -4);
        assert_eq!(signed_index(7, 8), -1);
        assert_eq!(slot_of(-4, 8), Some(4));
        assert_eq!(slot_of(4, 8), None);
        assert_eq!(slot_of(-1, 8), Some(7));
    }

    #[test]
    fn two_thirds_rule_is_strict() {
        let g = Grid::new(GridSpec::cube(2, 48)).unwrap();
        let kept: usize = g.axis_kept(0).iter().filter(|&&k| k).count();
        // |m| <= 15 survives; 3 * 15 < 48 keeps quadratic products alias free
        assert_eq!(kept, 31);
        let g = Grid::new(GridSpec::cube(2, 64)).unwrap();
        assert_eq!(g.axis_kept(0).iter().filter(|&&k| k).count(), 43);
    }

    #[test]
    fn conjugate_index_negates_wavevector() {
        let g = Grid::new(GridSpec::new(&[8, 12, 16], &[1.0, 2.0, 3.0])).unwrap();
        for idx in [0usize, 5, 77, 1000, 1535] {
            let k = g.wavevector(idx);
            let kc = g.wavevector(g.conjugate_index(idx));
            for a in 0..3 {
                // Nyquist slots map to themselves
                let n = g.points()[a];
                let mut s = [0usize; 3];
                g.unflatten(idx, &mut s);
                if s[a] == n / 2 {
                    continue;
                }
                assert!((k[a] + kc[a]).abs() < 1e-12);
            }
        }
    }
}
