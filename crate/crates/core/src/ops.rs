//! Fourier-multiplier operators: Leray projection, heat semigroup,
//! pseudo-spectral nonlinear terms, norms and pressure recovery.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{forward_real_into, inverse_real_into, SpectralField};
use crate::grid::Grid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative divergence residual above which `nonlinear_term` projects its
/// input before use.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-12;

fn require_vector(f: &SpectralField) -> Result<()> {
    if f.is_vector() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(
            "operation needs one component per axis",
        ))
    }
}

/// Calls `f(idx, k)` for every mode in flat order.
pub(crate) fn for_each_wavevector<F: FnMut(usize, [f64; 3])>(grid: &Grid, mut f: F) {
    let p = grid.points();
    match grid.dim() {
        2 => {
            let (kx, ky) = (grid.axis_wavenumbers(0), grid.axis_wavenumbers(1));
            let mut idx = 0;
            for i in 0..p[0] {
                for j in 0..p[1] {
                    f(idx, [kx[i], ky[j], 0.0]);
                    idx += 1;
                }
            }
        }
        _ => {
            let (kx, ky, kz) = (
                grid.axis_wavenumbers(0),
                grid.axis_wavenumbers(1),
                grid.axis_wavenumbers(2),
            );
            let mut idx = 0;
            for i in 0..p[0] {
                for j in 0..p[1] {
                    for l in 0..p[2] {
                        f(idx, [kx[i], ky[j], kz[l]]);
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Applies `I - k k^T / |k|^2` mode by mode; the mean is untouched.
pub fn leray_project_in_place(f: &mut SpectralField) -> Result<()> {
    require_vector(f)?;
    let grid = f.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let k2 = grid.k2();
    let coeffs = f.coeffs_mut();
    for_each_wavevector(&grid, |idx, k| {
        if k2[idx] == 0.0 {
            return;
        }
        let mut dot = ZERO;
        for a in 0..dim {
            dot += coeffs[a * n + idx] * k[a];
        }
        let s = dot / k2[idx];
        for a in 0..dim {
            coeffs[a * n + idx] -= s * k[a];
        }
    });
    Ok(())
}

pub fn leray_project(f: &SpectralField) -> Result<SpectralField> {
    let mut out = f.clone();
    leray_project_in_place(&mut out)?;
    Ok(out)
}

/// Spectral divergence `i k . f` as a scalar field.
pub fn divergence(f: &SpectralField) -> Result<SpectralField> {
    require_vector(f)?;
    let grid = f.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let mut out = vec![ZERO; n];
    let c = f.coeffs();
    for_each_wavevector(&grid, |idx, k| {
        let mut acc = ZERO;
        for a in 0..dim {
            acc += c[a * n + idx] * k[a];
        }
        out[idx] = Complex64::new(-acc.im, acc.re);
    });
    SpectralField::from_coeffs(&grid, 1, f.is_real(), out)
}

/// `|div f|_2 / |grad f|_2`, both spectral; zero for a constant field.
pub fn divergence_residual(f: &SpectralField) -> Result<f64> {
    require_vector(f)?;
    let grid = f.grid();
    let n = grid.len();
    let dim = grid.dim();
    let c = f.coeffs();
    let k2 = grid.k2();
    let mut div2 = 0.0;
    let mut grad2 = 0.0;
    for_each_wavevector(grid, |idx, k| {
        let mut acc = ZERO;
        for a in 0..dim {
            acc += c[a * n + idx] * k[a];
            grad2 += k2[idx] * c[a * n + idx].norm_sqr();
        }
        div2 += acc.norm_sqr();
    });
    Ok(if grad2 > 0.0 {
        libm::sqrt(div2 / grad2)
    } else {
        0.0
    })
}

/// Gradient of a scalar field.
pub fn gradient(s: &SpectralField) -> Result<SpectralField> {
    if s.components() != 1 {
        return Err(Error::ShapeMismatch("gradient needs a scalar field"));
    }
    let grid = s.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let mut out = vec![ZERO; dim * n];
    let c = s.coeffs();
    for_each_wavevector(&grid, |idx, k| {
        let ik = Complex64::new(-c[idx].im, c[idx].re);
        for a in 0..dim {
            out[a * n + idx] = ik * k[a];
        }
    });
    SpectralField::from_coeffs(&grid, dim, s.is_real(), out)
}

/// Physical values of `d_j f_i` for a real field, stored at `i * dim + j`.
pub fn gradient_physical(f: &SpectralField) -> Vec<Vec<f64>> {
    let grid = f.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let comps = f.components();
    let mut spec: Vec<Vec<Complex64>> = Vec::with_capacity(comps * dim);
    for i in 0..comps {
        let c = f.component(i);
        for j in 0..dim {
            let mut d = vec![ZERO; n];
            for_each_wavevector(&grid, |idx, k| {
                d[idx] = Complex64::new(-c[idx].im, c[idx].re) * k[j];
            });
            spec.push(d);
        }
    }
    let refs: Vec<&[Complex64]> = spec.iter().map(|v| v.as_slice()).collect();
    let mut out = vec![vec![0.0; n]; comps * dim];
    inverse_real_into(&grid, &refs, &mut out);
    out
}

/// Multiplies each coefficient by `exp(-nu |k|^2 t)`.
pub fn heat_semigroup(f: &SpectralField, t: f64, nu: f64) -> Result<SpectralField> {
    let mut out = f.clone();
    heat_semigroup_in_place(&mut out, t, nu)?;
    Ok(out)
}

pub fn heat_semigroup_in_place(f: &mut SpectralField, t: f64, nu: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "semigroup time must be nonnegative",
        });
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter {
            name: "nu",
            reason: "viscosity must be positive",
        });
    }
    if t == 0.0 {
        return Ok(());
    }
    let grid = f.grid().clone();
    let n = grid.len();
    let factors: Vec<f64> = grid
        .k2()
        .iter()
        .map(|&k2| libm::exp(-nu * k2 * t))
        .collect();
    for c in 0..f.components() {
        for (z, &e) in f.coeffs_mut()[c * n..(c + 1) * n].iter_mut().zip(&factors) {
            *z *= e;
        }
    }
    Ok(())
}

/// `e^{tA} f` with `A = -Delta P`: projection followed by heat flow.
pub fn heat_semigroup_projected(f: &SpectralField, t: f64, nu: f64) -> Result<SpectralField> {
    let mut out = leray_project(f)?;
    heat_semigroup_in_place(&mut out, t, nu)?;
    Ok(out)
}

/// Index of the symmetric pair `(i, j)` in packed upper-triangular order.
#[inline]
pub(crate) fn sym_index(i: usize, j: usize, dim: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * dim - a * (a + 1) / 2 + b
}

pub(crate) fn sym_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// `P div T` for a symmetric tensor given in physical space (packed
/// upper-triangular order), dealiased.
pub(crate) fn projected_divergence_sym(grid: &Arc<Grid>, tensor: &[Vec<f64>]) -> SpectralField {
    let n = grid.len();
    let dim = grid.dim();
    let mut hat = vec![ZERO; tensor.len() * n];
    forward_real_into(grid, tensor.iter().map(|v| v.as_slice()), &mut hat);
    let mut out = vec![ZERO; dim * n];
    let keep = grid.kept();
    let k2 = grid.k2();
    for_each_wavevector(grid, |idx, k| {
        if !keep[idx] {
            return;
        }
        let mut v = [ZERO; 3];
        for (i, vi) in v.iter_mut().enumerate().take(dim) {
            let mut acc = ZERO;
            for (j, &kj) in k.iter().enumerate().take(dim) {
                acc += hat[sym_index(i, j, dim) * n + idx] * kj;
            }
            *vi = Complex64::new(-acc.im, acc.re);
        }
        if k2[idx] > 0.0 {
            let mut dot = ZERO;
            for a in 0..dim {
                dot += v[a] * k[a];
            }
            let s = dot / k2[idx];
            for a in 0..dim {
                v[a] -= s * k[a];
            }
        }
        for a in 0..dim {
            out[a * n + idx] = v[a];
        }
    });
    SpectralField::from_coeffs(grid, dim, true, out).expect("shape fixed by construction")
}

/// `P div T` for a general (non-symmetric) physical tensor stored at
/// `i * dim + j`, dealiased.
fn projected_divergence_full(grid: &Arc<Grid>, tensor: &[Vec<f64>]) -> SpectralField {
    let n = grid.len();
    let dim = grid.dim();
    let mut hat = vec![ZERO; tensor.len() * n];
    forward_real_into(grid, tensor.iter().map(|v| v.as_slice()), &mut hat);
    let mut out = vec![ZERO; dim * n];
    let keep = grid.kept();
    for_each_wavevector(grid, |idx, k| {
        if !keep[idx] {
            return;
        }
        for i in 0..dim {
            let mut acc = ZERO;
            for (j, &kj) in k.iter().enumerate().take(dim) {
                acc += hat[(i * dim + j) * n + idx] * kj;
            }
            out[i * n + idx] = Complex64::new(-acc.im, acc.re);
        }
    });
    let mut f =
        SpectralField::from_coeffs(grid, dim, true, out).expect("shape fixed by construction");
    leray_project_in_place(&mut f).expect("vector field");
    f
}

/// Physical values of a real field's components.
pub(crate) fn physical(f: &SpectralField) -> Vec<Vec<f64>> {
    f.to_physical_real()
}

/// `P((u . grad) u)` computed pseudo-spectrally in advective form:
/// products `u_j d_j u_i` on the grid, then forward transform, dealiasing
/// and projection.
pub fn nonlinear_term(u: &SpectralField) -> Result<SpectralField> {
    require_vector(u)?;
    if !u.is_real() {
        return Err(Error::ShapeMismatch("velocity fields must be real"));
    }
    let projected;
    let u = if divergence_residual(u)? > DIVERGENCE_TOLERANCE {
        projected = leray_project(u)?;
        &projected
    } else {
        u
    };
    let grid = u.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let vel = physical(u);
    let grad = gradient_physical(u);
    let mut prod = vec![vec![0.0; n]; dim];
    for i in 0..dim {
        for j in 0..dim {
            let g = &grad[i * dim + j];
            for ((p, &uj), &gij) in prod[i].iter_mut().zip(&vel[j]).zip(g) {
                *p += uj * gij;
            }
        }
    }
    let mut out = SpectralField::from_physical_real(&grid, &prod)?;
    out.dealias();
    leray_project_in_place(&mut out)?;
    Ok(out)
}

/// `P div(a (x) b)`, i.e. component `i` is `P sum_j d_j (a_i b_j)`.
pub fn tensor_nonlinearity(a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
    require_vector(a)?;
    a.check_compatible(b)?;
    if !(a.is_real() && b.is_real()) {
        return Err(Error::ShapeMismatch("velocity fields must be real"));
    }
    let grid = a.grid().clone();
    let dim = grid.dim();
    let pa = physical(a);
    if core::ptr::eq(a, b) || a == b {
        let mut t = Vec::with_capacity(sym_len(dim));
        for i in 0..dim {
            for j in i..dim {
                t.push(pa[i].iter().zip(&pa[j]).map(|(x, y)| x * y).collect());
            }
        }
        return Ok(projected_divergence_sym(&grid, &t));
    }
    let pb = physical(b);
    let mut t = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            t.push(pa[i].iter().zip(&pb[j]).map(|(x, y)| x * y).collect());
        }
    }
    Ok(projected_divergence_full(&grid, &t))
}

/// `L^p` norm of a pointwise magnitude array on `grid` by grid quadrature.
pub fn lp_norm_of_magnitude(grid: &Grid, mag: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "Lebesgue exponent must be >= 1",
        });
    }
    let max = mag.iter().fold(0.0f64, |m, &x| m.max(x));
    if p.is_infinite() || max == 0.0 {
        return Ok(max);
    }
    let sum: f64 = if p == 2.0 {
        mag.iter().map(|&x| (x / max) * (x / max)).sum()
    } else {
        mag.iter().map(|&x| libm::pow(x / max, p)).sum()
    };
    Ok(max * libm::pow(sum * grid.cell_volume(), 1.0 / p))
}

/// Physical-space `L^p` norm (pointwise Euclidean magnitude for vector
/// fields, modulus for complex fields); `p = inf` gives the maximum.
pub fn lp_norm(f: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "Lebesgue exponent must be >= 1",
        });
    }
    lp_norm_of_magnitude(f.grid(), &f.pointwise_magnitude(), p)
}

/// Several `L^p` norms from one inverse transform.
pub fn lp_norms(f: &SpectralField, ps: &[f64]) -> Result<Vec<f64>> {
    let mag = f.pointwise_magnitude();
    ps.iter()
        .map(|&p| lp_norm_of_magnitude(f.grid(), &mag, p))
        .collect()
}

/// `(sum_k (1 + |k|^2)^s |f_k|^2 V / N^2)^{1/2}`.
pub fn hs_norm(f: &SpectralField, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "Sobolev index must be nonnegative",
        });
    }
    let grid = f.grid();
    let n = grid.len();
    let weights: Vec<f64> = grid.k2().iter().map(|&k2| libm::pow(1.0 + k2, s)).collect();
    let mut sum = 0.0;
    for c in 0..f.components() {
        for (z, w) in f.component(c).iter().zip(&weights) {
            sum += w * z.norm_sqr();
        }
    }
    let nn = n as f64;
    Ok(libm::sqrt(sum * grid.volume() / (nn * nn)))
}

/// Zero-mean scalar pressure.
#[derive(Debug, Clone)]
pub struct PressureField {
    field: SpectralField,
}

impl PressureField {
    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.field.grid()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        self.field.coeffs()
    }

    pub fn is_zero_mean(&self) -> bool {
        self.field.coeffs()[0] == ZERO
    }

    pub fn gradient(&self) -> SpectralField {
        gradient(&self.field).expect("scalar field")
    }

    pub fn to_physical(&self) -> Vec<f64> {
        self.field.to_physical_real().swap_remove(0)
    }
}

/// Solves `Delta p = div((u . grad) u)` with zero mean. The sign follows
/// `u_t - Delta u + (u . grad) u = grad p`.
pub fn reconstruct_pressure(u: &SpectralField) -> Result<PressureField> {
    require_vector(u)?;
    let grid = u.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let vel = physical(u);
    let grad = gradient_physical(u);
    let mut prod = vec![vec![0.0; n]; dim];
    for i in 0..dim {
        for j in 0..dim {
            for ((p, &uj), &g) in prod[i].iter_mut().zip(&vel[j]).zip(&grad[i * dim + j]) {
                *p += uj * g;
            }
        }
    }
    let mut conv = SpectralField::from_physical_real(&grid, &prod)?;
    conv.dealias();
    let c = conv.coeffs();
    let k2 = grid.k2();
    let mut out = vec![ZERO; n];
    for_each_wavevector(&grid, |idx, k| {
        if k2[idx] == 0.0 {
            return;
        }
        let mut dot = ZERO;
        for a in 0..dim {
            dot += c[a * n + idx] * k[a];
        }
        // p = -i k.F / |k|^2
        out[idx] = Complex64::new(dot.im, -dot.re) / k2[idx];
    });
    Ok(PressureField {
        field: SpectralField::from_coeffs(&grid, 1, true, out)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid2(n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::cube(2, n)).unwrap()
    }

    fn taylor_green(grid: &Arc<Grid>) -> SpectralField {
        SpectralField::from_fn(grid, 2, |x, o| {
            o[0] = libm::cos(x[0]) * libm::sin(x[1]);
            o[1] = -libm::sin(x[0]) * libm::cos(x[1]);
        })
        .unwrap()
    }

    fn random_solenoidal(grid: &Arc<Grid>, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = SpectralField::random_band_limited(grid, grid.dim(), 4, &mut rng);
        leray_project(&f).unwrap()
    }

    #[test]
    fn projection_kills_gradients() {
        let grid = grid2(16);
        let psi = SpectralField::from_fn(&grid, 1, |x, o| {
            o[0] = libm::sin(2.0 * x[0]) * libm::cos(x[1])
        })
        .unwrap();
        let g = gradient(&psi).unwrap();
        assert!(leray_project(&g).unwrap().max_coeff() < 1e-10);
    }

    #[test]
    fn projection_of_single_mode_by_hand() {
        // k = (1, 0), coefficient (1, 1) -> (0, 1)
        let grid = grid2(8);
        let mut f = SpectralField::zero_vector(&grid);
        let idx = grid.flatten(&[1, 0]);
        f.component_mut(0)[idx] = Complex64::new(1.0, 0.0);
        f.component_mut(1)[idx] = Complex64::new(1.0, 0.0);
        let p = leray_project(&f).unwrap();
        assert!(p.component(0)[idx].norm() < 1e-15);
        assert!((p.component(1)[idx] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn projection_keeps_mean_and_rejects_scalars() {
        let grid = grid2(8);
        let mut f = SpectralField::zero_vector(&grid);
        f.component_mut(0)[0] = Complex64::new(3.0, 0.0);
        assert_eq!(
            leray_project(&f).unwrap().component(0)[0],
            Complex64::new(3.0, 0.0)
        );
        let s = SpectralField::zeros(&grid, 1, true);
        assert!(leray_project(&s).is_err());
    }

    #[test]
    fn heat_semigroup_single_mode() {
        let grid = grid2(8);
        let mut f = SpectralField::zeros(&grid, 1, false);
        let idx = grid.flatten(&[1, 1]);
        f.component_mut(0)[idx] = Complex64::new(1.0, 0.0);
        let g = heat_semigroup(&f, 1.0, 1.0).unwrap();
        assert!((g.component(0)[idx].re - libm::exp(-2.0)).abs() < 1e-15);
        assert_eq!(heat_semigroup(&f, 0.0, 1.0).unwrap(), f);
        assert!(heat_semigroup(&f, -1.0, 1.0).is_err());
    }

    #[test]
    fn projected_semigroup_on_mixed_field() {
        let grid = grid2(16);
        let sol = random_solenoidal(&grid, 3);
        let psi =
            SpectralField::from_fn(&grid, 1, |x, o| o[0] = libm::cos(x[0] + 2.0 * x[1])).unwrap();
        let mixed = sol.plus(&gradient(&psi).unwrap()).unwrap();
        let a = heat_semigroup_projected(&mixed, 0.3, 1.0).unwrap();
        let b = heat_semigroup(&sol, 0.3, 1.0).unwrap();
        assert!(a.minus(&b).unwrap().max_coeff() < 1e-10);
    }

    #[test]
    fn taylor_green_convection_is_a_gradient() {
        let grid = grid2(32);
        let tg = taylor_green(&grid);
        assert!(nonlinear_term(&tg).unwrap().l2_norm() < 1e-13);
        assert!(tensor_nonlinearity(&tg, &tg).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn taylor_green_pressure_sign() {
        let grid = grid2(32);
        let p = reconstruct_pressure(&taylor_green(&grid)).unwrap();
        assert!(p.is_zero_mean());
        let expect = SpectralField::from_fn(&grid, 1, |x, o| {
            o[0] = (libm::cos(2.0 * x[0]) + libm::cos(2.0 * x[1])) / 4.0;
        })
        .unwrap();
        assert!(p.field().minus(&expect).unwrap().l2_norm() < 1e-12);
        assert!(leray_project(&p.gradient()).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn advective_and_divergence_forms_agree() {
        let grid = grid2(16);
        let u = random_solenoidal(&grid, 5);
        let a = nonlinear_term(&u).unwrap();
        let b = tensor_nonlinearity(&u, &u).unwrap();
        assert!(a.minus(&b).unwrap().l2_norm() <= 1e-12 * a.l2_norm().max(1.0));
        // the general (non-symmetric) path gives the same answer
        let c = tensor_nonlinearity(&u, &u.clone().scaled(1.0 + 1e-300)).unwrap();
        assert!(c.minus(&b).unwrap().l2_norm() <= 1e-12 * a.l2_norm().max(1.0));
    }

    #[test]
    fn lp_norms_of_simple_fields() {
        let grid = grid2(32);
        let zero = SpectralField::zeros(&grid, 1, true);
        assert_eq!(lp_norm(&zero, 3.0).unwrap(), 0.0);
        let one = SpectralField::from_fn(&grid, 1, |_, o| o[0] = 1.0).unwrap();
        assert!((lp_norm(&one, 2.0).unwrap() - 2.0 * PI).abs() < 1e-12);
        let s = SpectralField::from_fn(&grid, 1, |x, o| o[0] = libm::sin(x[0])).unwrap();
        // on [0,2pi)^2: |sin x|_2 = sqrt(pi * 2pi)
        assert!((lp_norm(&s, 2.0).unwrap() - libm::sqrt(2.0 * PI * PI)).abs() < 1e-12);
        assert!((lp_norm(&s, f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
        assert!(lp_norm(&s, 0.5).is_err());
    }

    #[test]
    fn hs_norm_relations() {
        let grid = grid2(16);
        let s = SpectralField::from_fn(&grid, 1, |x, o| o[0] = libm::sin(x[0])).unwrap();
        let h0 = hs_norm(&s, 0.0).unwrap();
        assert!((h0 - lp_norm(&s, 2.0).unwrap()).abs() < 1e-12);
        assert!((hs_norm(&s, 1.0).unwrap() - libm::sqrt(2.0) * h0).abs() < 1e-12);
        assert!(hs_norm(&s, -1.0).is_err());
    }
}
