//! Quadrature of the Duhamel integral
//! `G(t) = int_0^t exp((t-s) nu Delta) N(s) ds` on a uniform time grid,
//! exact in the semigroup factor and polynomial in `N`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::ops;
use crate::solver::{ns_rhs, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// Piecewise linear interpolation of `N`.
    Trapezoid,
    /// Four-point Lagrange interpolation of `N`, one-sided at the ends.
    Cubic,
}

/// `mu_q(z) = int_0^1 exp(-z (1 - tau)) tau^q dtau` for `q = 0..=3`.
pub fn moments(z: f64) -> [f64; 4] {
    let mut mu = [0.0; 4];
    if z < 2.0 {
        for (q, m) in mu.iter_mut().enumerate() {
            // q! (-z)^n / (n+q+1)!
            let mut term = 1.0;
            for j in 1..=q + 1 {
                term /= j as f64;
            }
            let mut fact_q = 1.0;
            for j in 1..=q {
                fact_q *= j as f64;
            }
            term *= fact_q;
            let mut sum = term;
            let mut n = 0usize;
            while term.abs() > 1e-18 * sum.abs() && n < 200 {
                n += 1;
                term *= -z / (n + q + 1) as f64;
                sum += term;
            }
            *m = sum;
        }
    } else {
        mu[0] = -libm::expm1(-z) / z;
        for q in 1..4 {
            mu[q] = (1.0 - q as f64 * mu[q - 1]) / z;
        }
    }
    mu
}

/// Monomial coefficients (in `tau`) of the Lagrange basis through `nodes`.
fn lagrange_coefficients(nodes: &[f64]) -> Vec<[f64; 4]> {
    let m = nodes.len();
    (0..m)
        .map(|i| {
            let mut poly = [0.0; 4];
            poly[0] = 1.0;
            let mut degree = 0;
            let mut denom = 1.0;
            for (j, &xj) in nodes.iter().enumerate() {
                if j == i {
                    continue;
                }
                denom *= nodes[i] - xj;
                for d in (0..=degree).rev() {
                    poly[d + 1] += poly[d];
                    poly[d] *= -xj;
                }
                degree += 1;
            }
            for c in poly.iter_mut() {
                *c /= denom;
            }
            poly
        })
        .collect()
}

/// Per-mode weights of one interpolation stencil.
#[derive(Debug, Clone)]
struct Stencil {
    /// Node offsets relative to the left end of the interval.
    offsets: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

/// Advances `G_{j+1} = exp(-lambda dt) G_j + dt sum_m w_m N_{j+m}`.
#[derive(Debug, Clone)]
pub struct DuhamelIntegrator {
    grid: Arc<Grid>,
    dt: f64,
    decay: Vec<f64>,
    linear: Stencil,
    /// first interval, interior, last interval
    cubic: Option<[Stencil; 3]>,
}

fn build_stencil(grid: &Grid, nu: f64, dt: f64, offsets: Vec<isize>) -> Stencil {
    let nodes: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let coeffs = lagrange_coefficients(&nodes);
    let mut weights = vec![vec![0.0; grid.len()]; offsets.len()];
    for (idx, &k2) in grid.k2().iter().enumerate() {
        let mu = moments(nu * k2 * dt);
        for (m, c) in coeffs.iter().enumerate() {
            weights[m][idx] = c.iter().zip(&mu).map(|(a, b)| a * b).sum();
        }
    }
    Stencil { offsets, weights }
}

impl DuhamelIntegrator {
    pub fn new(grid: &Arc<Grid>, nu: f64, dt: f64, quadrature: Quadrature) -> Result<Self> {
        if !(dt > 0.0 && nu > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "step and viscosity must be positive",
            });
        }
        let linear = build_stencil(grid, nu, dt, vec![0, 1]);
        let cubic = match quadrature {
            Quadrature::Trapezoid => None,
            Quadrature::Cubic => Some([
                build_stencil(grid, nu, dt, vec![0, 1, 2, 3]),
                build_stencil(grid, nu, dt, vec![-1, 0, 1, 2]),
                build_stencil(grid, nu, dt, vec![-2, -1, 0, 1]),
            ]),
        };
        let decay = grid
            .k2()
            .iter()
            .map(|&k2| libm::exp(-nu * k2 * dt))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            dt,
            decay,
            linear,
            cubic,
        })
    }

    fn stencil_for(&self, j: usize, samples: usize) -> &Stencil {
        match &self.cubic {
            Some(c) if samples >= 4 => {
                if j == 0 {
                    &c[0]
                } else if j + 2 < samples {
                    &c[1]
                } else {
                    &c[2]
                }
            }
            _ => &self.linear,
        }
    }

    fn advance<F>(
        &self,
        g: &mut SpectralField,
        j: usize,
        samples: usize,
        window: &mut NWindow<F>,
    ) -> Result<()>
    where
        F: FnMut(usize) -> Result<SpectralField>,
    {
        let n = self.grid.len();
        for c in 0..g.components() {
            for (z, d) in g.coeffs_mut()[c * n..(c + 1) * n]
                .iter_mut()
                .zip(&self.decay)
            {
                *z *= d;
            }
        }
        let st = self.stencil_for(j, samples);
        for (m, &off) in st.offsets.iter().enumerate() {
            let node = (j as isize + off) as usize;
            let nf = window.get(node)?;
            let w = &st.weights[m];
            for c in 0..g.components() {
                let src = nf.component(c);
                for ((z, s), wi) in g.coeffs_mut()[c * n..(c + 1) * n]
                    .iter_mut()
                    .zip(src)
                    .zip(w)
                {
                    *z += s * (self.dt * wi);
                }
            }
        }
        Ok(())
    }

    /// Runs the recursion over `samples` time points, handing `G_j` to
    /// `visit` for every `j`.
    pub fn run<F, V>(
        &self,
        samples: usize,
        components: usize,
        real: bool,
        n_at: F,
        mut visit: V,
    ) -> Result<()>
    where
        F: FnMut(usize) -> Result<SpectralField>,
        V: FnMut(usize, &SpectralField) -> Result<()>,
    {
        if samples == 0 {
            return Ok(());
        }
        let mut window = NWindow {
            f: n_at,
            cache: Vec::new(),
        };
        let mut g = SpectralField::zeros(&self.grid, components, real);
        visit(0, &g)?;
        for j in 0..samples - 1 {
            self.advance(&mut g, j, samples, &mut window)?;
            visit(j + 1, &g)?;
        }
        Ok(())
    }
}

/// Sliding cache of nonlinearity evaluations (stencils only move forward).
struct NWindow<F> {
    f: F,
    cache: Vec<(usize, SpectralField)>,
}

impl<F: FnMut(usize) -> Result<SpectralField>> NWindow<F> {
    fn get(&mut self, node: usize) -> Result<&SpectralField> {
        if let Some(pos) = self.cache.iter().position(|(i, _)| *i == node) {
            return Ok(&self.cache[pos].1);
        }
        let value = (self.f)(node)?;
        self.cache.retain(|(i, _)| *i + 4 > node);
        self.cache.push((node, value));
        Ok(&self.cache.last().expect("just pushed").1)
    }
}

/// `-P div(u (x) u)`, or zero for the linear problem.
pub fn nonlinearity(u: &SpectralField, nonlinear: bool) -> SpectralField {
    if nonlinear {
        ns_rhs(u, None).0
    } else {
        SpectralField::zeros(u.grid(), u.components(), u.is_real())
    }
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::TooFewSamples {
            found: times.len(),
            needed: 2,
        });
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "samples must be uniformly spaced",
            });
        }
    }
    Ok(dt)
}

/// `max_j |u_j - (exp(t_j nu Delta) u0 + G_j)|_2 / |u_j|_2` over the
/// stored states of a trajectory.
pub fn duhamel_residual(traj: &Trajectory, u0: &SpectralField) -> Result<f64> {
    duhamel_residual_with(traj, u0, Quadrature::Trapezoid)
}

pub fn duhamel_residual_with(
    traj: &Trajectory,
    u0: &SpectralField,
    quadrature: Quadrature,
) -> Result<f64> {
    if traj.states.len() != traj.times.len() {
        return Err(Error::InvalidParameter {
            name: "trajectory",
            reason: "states were not retained",
        });
    }
    let dt = uniform_step(&traj.times)?;
    let integ = DuhamelIntegrator::new(u0.grid(), traj.nu, dt, quadrature)?;
    let nonlinear = traj.nonlinear;
    let states = &traj.states;
    let mut worst = 0.0f64;
    integ.run(
        states.len(),
        u0.components(),
        u0.is_real(),
        |j| Ok(nonlinearity(&states[j], nonlinear)),
        |j, g| {
            let mut mild = ops::heat_semigroup(u0, traj.times[j] - traj.times[0], traj.nu)?;
            mild.axpy(1.0, g)?;
            let r = states[j].relative_distance(&mild)?;
            worst = worst.max(r);
            Ok(())
        },
    )?;
    Ok(worst)
}

/// Streaming trapezoid residual used while stepping.
#[derive(Debug, Clone)]
pub struct OnlineResidual {
    u0: SpectralField,
    nu: f64,
    dt: f64,
    nonlinear: bool,
    w: [Vec<f64>; 2],
    decay: Vec<f64>,
    g: SpectralField,
    prev_n: SpectralField,
    steps: usize,
    worst: f64,
}

impl OnlineResidual {
    pub fn new(u0: &SpectralField, nu: f64, dt: f64, nonlinear: bool) -> Result<Self> {
        let grid = u0.grid();
        let decay: Vec<f64> = grid
            .k2()
            .iter()
            .map(|&k2| libm::exp(-nu * k2 * dt))
            .collect();
        let Stencil { weights, .. } = build_stencil(grid, nu, dt, vec![0, 1]);
        let w: [Vec<f64>; 2] = weights
            .try_into()
            .map_err(|_| Error::ShapeMismatch("stencil"))?;
        Ok(Self {
            u0: u0.clone(),
            nu,
            dt,
            nonlinear,
            w,
            decay,
            g: SpectralField::zeros(grid, u0.components(), u0.is_real()),
            prev_n: nonlinearity(u0, nonlinear),
            steps: 0,
            worst: 0.0,
        })
    }

    /// Feeds the state after the next step.
    pub fn push(&mut self, u: &SpectralField) -> Result<()> {
        let next_n = nonlinearity(u, self.nonlinear);
        let n = u.grid().len();
        let dt = self.dt;
        for c in 0..self.g.components() {
            let (a, b) = (self.prev_n.component(c), next_n.component(c));
            let gc = &mut self.g.coeffs_mut()[c * n..(c + 1) * n];
            for i in 0..n {
                gc[i] =
                    gc[i] * self.decay[i] + a[i] * (dt * self.w[0][i]) + b[i] * (dt * self.w[1][i]);
            }
        }
        self.prev_n = next_n;
        self.steps += 1;
        let mut mild = ops::heat_semigroup(&self.u0, self.steps as f64 * dt, self.nu)?;
        mild.axpy(1.0, &self.g)?;
        self.worst = self.worst.max(u.relative_distance(&mild)?);
        Ok(())
    }

    pub fn max_residual(&self) -> f64 {
        self.worst
    }
}
