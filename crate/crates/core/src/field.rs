//! Fourier-coefficient representation of scalar and vector fields.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fft::Direction;
use crate::grid::Grid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Fourier coefficients of a field with one or more components.
///
/// Coefficients follow the unnormalized forward transform, stored
/// component-major: `coeffs[c * grid.len() + mode]`. A `real` field
/// represents a real-valued function and keeps Hermitian symmetry.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<Grid>,
    components: usize,
    real: bool,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid)
            && self.components == other.components
            && self.real == other.real
            && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>, components: usize, real: bool) -> Self {
        Self {
            grid: grid.clone(),
            components,
            real,
            coeffs: vec![ZERO; components * grid.len()],
        }
    }

    /// Zero real vector field with one component per axis.
    pub fn zero_vector(grid: &Arc<Grid>) -> Self {
        Self::zeros(grid, grid.dim(), true)
    }

    pub fn from_coeffs(
        grid: &Arc<Grid>,
        components: usize,
        real: bool,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        if components == 0 {
            return Err(Error::ShapeMismatch("a field needs at least one component"));
        }
        if coeffs.len() != components * grid.len() {
            return Err(Error::ShapeMismatch(
                "coefficient count does not match grid and components",
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            components,
            real,
            coeffs,
        })
    }

    /// Forward transform of real physical data, one array per component.
    pub fn from_physical_real(grid: &Arc<Grid>, data: &[Vec<f64>]) -> Result<Self> {
        let n = grid.len();
        if data.is_empty() || data.iter().any(|d| d.len() != n) {
            return Err(Error::ShapeMismatch("physical arrays must match the grid"));
        }
        let mut coeffs = vec![ZERO; data.len() * n];
        forward_real_into(grid, data.iter().map(|v| v.as_slice()), &mut coeffs);
        Ok(Self {
            grid: grid.clone(),
            components: data.len(),
            real: true,
            coeffs,
        })
    }

    pub fn from_physical_complex(grid: &Arc<Grid>, data: &[Vec<Complex64>]) -> Result<Self> {
        let n = grid.len();
        if data.is_empty() || data.iter().any(|d| d.len() != n) {
            return Err(Error::ShapeMismatch("physical arrays must match the grid"));
        }
        let mut coeffs = Vec::with_capacity(data.len() * n);
        let mut scratch = vec![ZERO; n];
        for d in data {
            let start = coeffs.len();
            coeffs.extend_from_slice(d);
            grid.fft()
                .process(&mut coeffs[start..], &mut scratch, Direction::Forward);
        }
        Ok(Self {
            grid: grid.clone(),
            components: data.len(),
            real: false,
            coeffs,
        })
    }

    /// Samples a real function at the grid points.
    pub fn from_fn<F>(grid: &Arc<Grid>, components: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64; 3], &mut [f64]),
    {
        let n = grid.len();
        let mut data = vec![vec![0.0; n]; components];
        let mut buf = vec![0.0; components];
        for idx in 0..n {
            let x = grid.coordinate(idx);
            f(&x, &mut buf);
            for c in 0..components {
                data[c][idx] = buf[c];
            }
        }
        Self::from_physical_real(grid, &data)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.coeffs[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.grid.len();
        &mut self.coeffs[c * n..(c + 1) * n]
    }

    pub fn is_vector(&self) -> bool {
        self.components == self.grid.dim()
    }

    pub fn compatible(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.components == other.components
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::ShapeMismatch("fields live on different grids"));
        }
        if self.components != other.components {
            return Err(Error::ShapeMismatch("component counts differ"));
        }
        Ok(())
    }

    /// Inverse transform of a real field, one array per component.
    pub fn to_physical_real(&self) -> Vec<Vec<f64>> {
        let n = self.grid.len();
        let mut out = vec![vec![0.0; n]; self.components];
        let comps: Vec<&[Complex64]> = (0..self.components).map(|c| self.component(c)).collect();
        inverse_real_into(&self.grid, &comps, &mut out);
        out
    }

    pub fn to_physical_complex(&self) -> Vec<Vec<Complex64>> {
        let n = self.grid.len();
        let mut scratch = vec![ZERO; n];
        (0..self.components)
            .map(|c| {
                let mut d = self.component(c).to_vec();
                self.grid
                    .fft()
                    .process(&mut d, &mut scratch, Direction::Inverse);
                let s = 1.0 / n as f64;
                d.iter_mut().for_each(|z| *z *= s);
                d
            })
            .collect()
    }

    /// Pointwise magnitude (Euclidean over components) on the grid.
    pub fn pointwise_magnitude(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut mag = vec![0.0; n];
        if self.real {
            for comp in self.to_physical_real() {
                for (m, v) in mag.iter_mut().zip(&comp) {
                    *m += v * v;
                }
            }
        } else {
            for comp in self.to_physical_complex() {
                for (m, v) in mag.iter_mut().zip(&comp) {
                    *m += v.norm_sqr();
                }
            }
        }
        mag.iter_mut().for_each(|m| *m = libm::sqrt(*m));
        mag
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.iter_mut().for_each(|z| *z *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// Multiplies every coefficient by a complex constant. Real fields
    /// become complex unless the factor is real.
    pub fn scale_complex(&mut self, a: Complex64) {
        self.coeffs.iter_mut().for_each(|z| *z *= a);
        if a.im != 0.0 {
            self.real = false;
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * a;
        }
        self.real &= other.real;
        Ok(())
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn minus(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// Zeroes every mode removed by the grid's dealiasing rule.
    pub fn dealias(&mut self) {
        let n = self.grid.len();
        let keep = self.grid.kept();
        for c in 0..self.components {
            for (z, &k) in self.coeffs[c * n..(c + 1) * n].iter_mut().zip(keep) {
                if !k {
                    *z = ZERO;
                }
            }
        }
    }

    pub fn is_dealiased(&self) -> bool {
        let n = self.grid.len();
        let keep = self.grid.kept();
        (0..self.components).all(|c| {
            self.coeffs[c * n..(c + 1) * n]
                .iter()
                .zip(keep)
                .all(|(z, &k)| k || *z == ZERO)
        })
    }

    /// Physical-space `L^2` norm from Parseval.
    pub fn l2_norm(&self) -> f64 {
        let n = self.grid.len() as f64;
        let sum: f64 = self.coeffs.iter().map(|z| z.norm_sqr()).sum();
        libm::sqrt(sum * self.grid.volume() / (n * n))
    }

    /// Real `L^2` inner product `Re <self, other>`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let n = self.grid.len() as f64;
        let sum: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        Ok(sum * self.grid.volume() / (n * n))
    }

    /// Mean value of each component (the `k = 0` coefficient over `N`).
    pub fn mean(&self) -> Vec<Complex64> {
        let n = self.grid.len();
        (0..self.components)
            .map(|c| self.coeffs[c * n] / n as f64)
            .collect()
    }

    pub fn remove_mean(&mut self) {
        let n = self.grid.len();
        for c in 0..self.components {
            self.coeffs[c * n] = ZERO;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest deviation from `coeffs(-k) = conj(coeffs(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for c in 0..self.components {
            let comp = self.component(c);
            for idx in 0..n {
                let j = self.grid.conjugate_index(idx);
                worst = worst.max((comp[idx] - comp[j].conj()).norm());
            }
        }
        worst
    }

    /// Relative `L^2` distance `|self - other| / |other|` (absolute when
    /// `other` vanishes).
    pub fn relative_distance(&self, other: &Self) -> Result<f64> {
        let diff = self.minus(other)?.l2_norm();
        let base = other.l2_norm();
        Ok(if base > 0.0 { diff / base } else { diff })
    }

    /// Builds a field from a spectrum prescription `f(k, component) -> coeff`
    /// evaluated on every mode (values are amplitudes of the normalized
    /// mode, i.e. the physical field is `sum_k f(k) exp(i k.x)`).
    pub fn from_modes<F>(grid: &Arc<Grid>, components: usize, real: bool, f: F) -> Self
    where
        F: Fn(&[f64; 3], usize) -> Complex64,
    {
        let n = grid.len();
        let mut coeffs = vec![ZERO; components * n];
        for idx in 0..n {
            let k = grid.wavevector(idx);
            for c in 0..components {
                coeffs[c * n + idx] = f(&k, c) * n as f64;
            }
        }
        Self {
            grid: grid.clone(),
            components,
            real,
            coeffs,
        }
    }

    /// Random real field whose modes satisfy `0 < |m|_inf <= band` (lattice
    /// indices), with Hermitian symmetry and unit-order amplitudes. Not yet
    /// projected or normalized.
    pub fn random_band_limited<R: Rng>(
        grid: &Arc<Grid>,
        components: usize,
        band: i64,
        rng: &mut R,
    ) -> Self {
        let n = grid.len();
        let dim = grid.dim();
        let mut coeffs = vec![ZERO; components * n];
        let mut slots = [0usize; 3];
        for idx in 0..n {
            grid.unflatten(idx, &mut slots[..dim]);
            let mut inside = true;
            let mut nonzero = false;
            for a in 0..dim {
                let m = grid.axis_signed(a)[slots[a]];
                inside &= m.abs() <= band && grid.axis_kept(a)[slots[a]];
                nonzero |= m != 0;
            }
            if !(inside && nonzero) {
                continue;
            }
            let j = grid.conjugate_index(idx);
            if j < idx {
                continue;
            }
            for c in 0..components {
                let re: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                let im: f64 = if j == idx {
                    0.0
                } else {
                    rng.gen::<f64>() * 2.0 - 1.0
                };
                let z = Complex64::new(re, im) * n as f64;
                coeffs[c * n + idx] = z;
                coeffs[c * n + j] = z.conj();
            }
        }
        Self {
            grid: grid.clone(),
            components,
            real: true,
            coeffs,
        }
    }

    /// Random complex field (no symmetry), modes inside `band` and kept by
    /// the dealiasing rule; the mean is included.
    pub fn random_complex_band_limited<R: Rng>(grid: &Arc<Grid>, band: i64, rng: &mut R) -> Self {
        let n = grid.len();
        let dim = grid.dim();
        let mut coeffs = vec![ZERO; n];
        let mut slots = [0usize; 3];
        for (idx, z) in coeffs.iter_mut().enumerate() {
            grid.unflatten(idx, &mut slots[..dim]);
            let inside = (0..dim).all(|a| {
                grid.axis_signed(a)[slots[a]].abs() <= band && grid.axis_kept(a)[slots[a]]
            });
            if inside {
                *z = Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
                    * n as f64;
            }
        }
        Self {
            grid: grid.clone(),
            components: 1,
            real: false,
            coeffs,
        }
    }
}

/// Inverse-transforms real components pairwise through single complex
/// transforms (`ifft(A + iB) = a + ib`).
pub(crate) fn inverse_real_into(grid: &Grid, comps: &[&[Complex64]], out: &mut [Vec<f64>]) {
    let n = grid.len();
    let scale = 1.0 / n as f64;
    let mut buf = vec![ZERO; n];
    let mut scratch = vec![ZERO; n];
    let mut c = 0;
    while c < comps.len() {
        let a = comps[c];
        if c + 1 < comps.len() {
            let b = comps[c + 1];
            for i in 0..n {
                buf[i] = Complex64::new(a[i].re - b[i].im, a[i].im + b[i].re);
            }
            grid.fft()
                .process(&mut buf, &mut scratch, Direction::Inverse);
            let (lo, hi) = out.split_at_mut(c + 1);
            for ((x, y), z) in lo[c].iter_mut().zip(hi[0].iter_mut()).zip(&buf) {
                *x = z.re * scale;
                *y = z.im * scale;
            }
            c += 2;
        } else {
            buf.copy_from_slice(a);
            grid.fft()
                .process(&mut buf, &mut scratch, Direction::Inverse);
            for (x, z) in out[c].iter_mut().zip(&buf) {
                *x = z.re * scale;
            }
            c += 1;
        }
    }
}

/// Forward-transforms real arrays pairwise; `out` holds the component-major
/// coefficients.
pub(crate) fn forward_real_into<'a, I>(grid: &Grid, data: I, out: &mut [Complex64])
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let n = grid.len();
    let mut buf = vec![ZERO; n];
    let mut scratch = vec![ZERO; n];
    let arrays: Vec<&[f64]> = data.into_iter().collect();
    let mut c = 0;
    while c < arrays.len() {
        if c + 1 < arrays.len() {
            let (a, b) = (arrays[c], arrays[c + 1]);
            for i in 0..n {
                buf[i] = Complex64::new(a[i], b[i]);
            }
            grid.fft()
                .process(&mut buf, &mut scratch, Direction::Forward);
            let (lo, hi) = out.split_at_mut((c + 1) * n);
            let ca = &mut lo[c * n..];
            let cb = &mut hi[..n];
            for idx in 0..n {
                let z = buf[idx];
                let zc = buf[grid.conjugate_index_fast(idx)].conj();
                ca[idx] = (z + zc) * 0.5;
                let d = (z - zc) * 0.5;
                // d / i
                cb[idx] = Complex64::new(d.im, -d.re);
            }
            c += 2;
        } else {
            for (z, &v) in buf.iter_mut().zip(arrays[c]) {
                *z = Complex64::new(v, 0.0);
            }
            grid.fft()
                .process(&mut buf, &mut scratch, Direction::Forward);
            out[c * n..(c + 1) * n].copy_from_slice(&buf);
            c += 1;
        }
    }
}
