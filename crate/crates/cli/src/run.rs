//! Dispatch from resolved configurations to the numerical modules, plus the
//! artifact lifecycle of a run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Result};
use nsplane_core::cgl::{
    cgl_commutation_check, cgl_embed_planewave, cgl_energy_identity_check, cgl_evolve,
    cgl_extract_profile, cgl_field_from_fn, cgl_stability_run, constant_mode_solution,
    CglStabilityConfig,
};
use nsplane_core::experiments::{
    heat_estimate_check_with, kato_smallness_scan, phi_contraction_check, stability_run,
    HeatEstimateConfig, StabilityRunConfig,
};
use nsplane_core::picard::{picard_solve, PicardConfig};
use nsplane_core::planewave::{commutation_check, PlaneWaveBackground, WaveProfile};
use nsplane_core::solver::{evolve, evolve_perturbation};
use nsplane_core::{ops, Error as CoreError, Grid, SpectralField};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::artifacts::{
    lp_label, Check, FailureRecord, OutputDir, RunManifest, Summary, Table, DIAGNOSTICS, SUMMARY,
};
use crate::config::{
    CglMode, Contraction, HeatDecay, InitialKind, InitialSection, PlaneWaveSection, RunConfig,
    Simulate, StabilitySection,
};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    /// Recorded in the manifest; runs are single threaded.
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: Summary,
    pub exit_code: i32,
}

/// Numerical result of one subcommand before serialization.
struct Outcome {
    checks: Vec<Check>,
    table: Table,
    details: serde_json::Value,
    snapshots: Vec<(f64, SpectralField)>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Self {
            checks: Vec::new(),
            table,
            details: json!({}),
            snapshots: Vec::new(),
        }
    }
}

/// Runs `cfg` into `opts.out`. The manifest is written before the run and
/// finalized after it; numerical failures produce a failure record.
pub fn execute(cfg: &RunConfig, opts: &RunOptions) -> Result<RunResult> {
    let mut dir = OutputDir::create(&opts.out)?;
    let sub = cfg.subcommand();
    let mut manifest = RunManifest::new(sub.name(), cfg.to_toml()?, opts.seed, opts.threads);
    manifest.write(&dir.root)?;

    let (summary, status) = match dispatch(cfg, opts.seed) {
        Ok(out) => {
            dir.write(DIAGNOSTICS, out.table.to_csv().as_bytes())?;
            for (i, (t, f)) in out.snapshots.iter().enumerate() {
                dir.snapshot(i, f, *t)?;
            }
            let passed = out.checks.iter().all(|c| c.passed);
            let summary = Summary {
                subcommand: sub.name().into(),
                seed: opts.seed,
                passed,
                checks: out.checks,
                failure: None,
                details: out.details,
            };
            (summary, if passed { "passed" } else { "failed" })
        }
        Err(e) => {
            let kind = e
                .downcast_ref::<CoreError>()
                .map(error_kind)
                .unwrap_or("error");
            let summary = Summary {
                subcommand: sub.name().into(),
                seed: opts.seed,
                passed: false,
                checks: Vec::new(),
                failure: Some(FailureRecord {
                    kind: kind.into(),
                    message: format!("{e:#}"),
                }),
                details: json!({}),
            };
            (summary, "aborted")
        }
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    dir.write(SUMMARY, text.as_bytes())?;
    manifest.finish(status, dir.written());
    manifest.write(&dir.root)?;
    let exit_code = match status {
        "passed" => 0,
        "failed" => 1,
        _ => 2,
    };
    Ok(RunResult { summary, exit_code })
}

/// Reruns a manifest into `out`.
pub fn replay(manifest: &Path, out: &Path) -> Result<RunResult> {
    let m = RunManifest::read(manifest)?;
    let sub = crate::Subcommand::from_name(&m.subcommand)
        .ok_or_else(|| anyhow!("unknown subcommand {}", m.subcommand))?;
    let cfg = RunConfig::parse(sub, &m.config_toml)?;
    execute(
        &cfg,
        &RunOptions {
            out: out.to_path_buf(),
            seed: m.seed,
            threads: m.threads,
        },
    )
}

fn error_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::InvalidGrid(_) => "invalid_grid",
        CoreError::ShapeMismatch(_) => "shape_mismatch",
        CoreError::InvalidParameter { .. } => "invalid_parameter",
        CoreError::CflViolation { .. } => "cfl_violation",
        CoreError::NonFinite { .. } => "non_finite",
        CoreError::Incommensurable(_) => "incommensurable",
        CoreError::NotPlaneWave { .. } => "not_plane_wave",
        CoreError::HorizonMismatch { .. } => "horizon_mismatch",
        CoreError::PicardDiverged { .. } => "picard_diverged",
        CoreError::SmallnessViolated { .. } => "smallness_violated",
        CoreError::NonPositiveSeries { .. } => "nonpositive_series",
        CoreError::TooFewSamples { .. } => "too_few_samples",
    }
}

fn dispatch(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    match cfg {
        RunConfig::Simulate2d(s) | RunConfig::Simulate3d(s) => simulate(s, seed),
        RunConfig::PlaneWaveCheck(s) => planewave_check(
            &s.planewave,
            &s.initial,
            &s.solver.solver(),
            s.tolerance,
            seed,
        ),
        RunConfig::Picard(s) => picard(s, seed),
        RunConfig::Stability(s) => stability(s, seed),
        RunConfig::HeatDecay(s) => heat_decay(s),
        RunConfig::Contraction(s) => contraction(s, seed),
        RunConfig::Scan(s) => scan(s),
        RunConfig::Cgl(s) => cgl(s, seed),
    }
}

fn sup_norm(f: &SpectralField) -> f64 {
    f.pointwise_magnitude()
        .iter()
        .fold(0.0, |m: f64, &x| m.max(x))
}

/// Real initial data with `dim` components on `grid`.
fn real_initial(
    grid: &Arc<Grid>,
    init: &InitialSection,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralField> {
    let dim = grid.dim();
    let periods = grid.periods().to_vec();
    let f = match init.kind {
        InitialKind::Zero => SpectralField::zeros(grid, dim, true),
        InitialKind::TaylorGreen => {
            // stream function sin(a x) sin(b y), in the first two axes
            let (a, b) = (
                2.0 * std::f64::consts::PI / periods[0],
                2.0 * std::f64::consts::PI / periods[1],
            );
            let norm = init.amplitude / a.max(b);
            SpectralField::from_fn(grid, dim, |x, o| {
                o[0] = norm * b * (a * x[0]).cos() * (b * x[1]).sin();
                o[1] = -norm * a * (a * x[0]).sin() * (b * x[1]).cos();
                if dim == 3 {
                    o[2] = 0.0;
                }
            })?
        }
        InitialKind::Random => {
            let mut f = SpectralField::random_band_limited(grid, dim, init.band, rng);
            ops::leray_project_in_place(&mut f)?;
            f.remove_mean();
            let s = sup_norm(&f);
            if s > 0.0 {
                f.scale(init.amplitude / s);
            }
            f
        }
        InitialKind::Constant => bail!("initial.kind = \"constant\" is only available for cgl"),
    };
    Ok(f)
}

fn taylor_green_exact(u0: &SpectralField, nu: f64, t: f64) -> SpectralField {
    // single-shell data: take |k|^2 of the dominant coefficient
    let n = u0.grid().len();
    let k2 = u0
        .coeffs()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| u0.grid().k2()[i % n])
        .unwrap_or(0.0);
    u0.scaled((-nu * k2 * t).exp())
}

fn diagnostics_table(p_set: &[f64]) -> Table {
    let mut header = vec!["t".to_string(), "energy".into()];
    header.extend(p_set.iter().map(|&p| lp_label(p)));
    header.extend(["hs".into(), "divergence".into(), "m_bound".into()]);
    Table::new(header)
}

fn simulate(s: &Simulate, seed: u64) -> Result<Outcome> {
    let grid = Grid::new(s.grid.spec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0 = real_initial(&grid, &s.initial, &mut rng)?;
    let tg = s.initial.kind == InitialKind::TaylorGreen;
    let mut cfg = s.solver.solver();
    cfg.keep_states = s.solver.snapshots || tg;
    let traj = evolve(&u0, &cfg)?;

    let mut out = Outcome::new(diagnostics_table(&cfg.diagnostics.p_set));
    for d in &traj.diagnostics {
        let mut row = vec![d.t, d.energy];
        row.extend(&d.lp);
        row.extend([d.hs, d.divergence_residual, d.m_bound]);
        out.table.push(row);
    }
    if tg {
        let mut worst = 0.0f64;
        for (t, u) in traj.times.iter().zip(&traj.states) {
            worst = worst.max(u.relative_distance(&taylor_green_exact(&u0, cfg.nu, *t))?);
        }
        out.checks.push(Check::at_most(
            "taylor_green_error",
            worst,
            s.exact_tolerance,
        ));
        let e0 = traj.diagnostics[0].energy.max(f64::MIN_POSITIVE);
        let worst_e = traj
            .energy_series()
            .iter()
            .map(|&(t, e)| {
                let exact = 0.5 * taylor_green_exact(&u0, cfg.nu, t).l2_norm().powi(2);
                (e - exact).abs() / e0
            })
            .fold(0.0, f64::max);
        out.checks
            .push(Check::at_most("energy_decay", worst_e, s.exact_tolerance));
    }
    if let Some(r) = traj.duhamel_residual {
        out.checks
            .push(Check::at_most("duhamel_residual", r, s.duhamel_tolerance));
    }
    if grid.dim() == 3 {
        out.checks.push(Check::at_most(
            "divergence",
            traj.max_divergence_residual(),
            s.divergence_tolerance,
        ));
    }
    if s.solver.snapshots {
        out.snapshots = traj.times.iter().cloned().zip(traj.states).collect();
    }
    out.details =
        json!({ "steps": cfg.steps(), "final_energy": traj.diagnostics.last().map(|d| d.energy) });
    Ok(out)
}

fn ns_profile(pw: &PlaneWaveSection, init: &InitialSection, seed: u64) -> Result<WaveProfile> {
    let grid = Grid::new(pw.profile_spec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = real_initial(&grid, init, &mut rng)?;
    Ok(WaveProfile::new(h, pw.speed()?)?)
}

fn planewave_check(
    pw: &PlaneWaveSection,
    init: &InitialSection,
    cfg: &nsplane_core::solver::SolverConfig,
    tolerance: f64,
    seed: u64,
) -> Result<Outcome> {
    let prof = ns_profile(pw, init, seed)?;
    let lattice = pw.lattice()?;
    let spec = pw.box_spec()?;
    let run = nsplane_core::solver::SolverConfig {
        keep_states: false,
        track_duhamel: false,
        ..cfg.clone()
    };
    let distance = commutation_check(&prof, &run, &spec)?;
    let embedded = lattice.embed(&prof.h)?;
    let back = lattice.extract(&embedded)?;
    let round_trip = if prof.h.l2_norm() > 0.0 {
        back.relative_distance(&prof.h)?
    } else {
        back.l2_norm()
    };
    let divergence = ops::divergence_residual(&embedded)?;
    let mut out = Outcome::new(Table::new(["c", "commutation", "round_trip", "divergence"]));
    out.table
        .push(vec![prof.c.value(), distance, round_trip, divergence]);
    out.checks
        .push(Check::at_most("commutation", distance, tolerance));
    out.checks
        .push(Check::at_most("round_trip", round_trip, 1e-13));
    out.checks
        .push(Check::at_most("divergence", divergence, 1e-12));
    out.details =
        json!({ "c": prof.c.to_string(), "box": spec.periods, "factors": lattice.factors() });
    Ok(out)
}

fn picard(s: &crate::config::Picard, seed: u64) -> Result<Outcome> {
    let prof = ns_profile(&s.planewave, &s.initial, seed)?;
    let lattice = s.planewave.lattice()?;
    let grid3 = lattice.target_grid().clone();
    let mut cfg = s.solver.solver();
    cfg.horizon = s.picard.t_star;
    cfg.keep_states = true;
    cfg.track_duhamel = false;
    cfg.diagnostics.gradient_bound = false;
    let bg = PlaneWaveBackground::record(&prof, lattice, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut v0 = SpectralField::random_band_limited(&grid3, 3, s.v0_band, &mut rng);
    ops::leray_project_in_place(&mut v0)?;
    v0.remove_mean();
    let n3 = ops::lp_norm(&v0, 3.0)?;
    v0.scale(s.v0_norm / n3);

    let pert = evolve_perturbation(&v0, &bg, &cfg)?;
    let last = pert
        .final_state()
        .ok_or_else(|| anyhow!("empty perturbation run"))?;
    let local = ops::lp_norm(last, 3.0)? / s.v0_norm;
    let mut out = Outcome::new(Table::new(["n", "k", "k_prime", "w", "ratio"]));
    out.checks.push(Check::at_most("local_bound", local, 2.0));
    out.checks.push(Check::at_most(
        "divergence",
        pert.max_divergence_residual(),
        1e-12,
    ));
    let mut details = json!({ "local_bound_ratio": local, "v0_l3": s.v0_norm });
    if s.picard.solve {
        let pcfg = PicardConfig {
            l: s.picard.l,
            t_star: s.picard.t_star,
            gammas: s.picard.gammas.clone(),
            holder_p: s.picard.holder_p,
            max_iter: s.picard.max_iter,
            eps: s.picard.eps,
            quadrature: s.picard.quadrature()?,
            tolerance: s.picard.tolerance,
        };
        let (fixed, rep) = picard_solve(&v0, &bg, &pcfg, &cfg)?;
        for it in &rep.iterations {
            out.table.push(vec![
                it.n as f64,
                it.k,
                it.k_prime,
                it.w,
                it.ratio.unwrap_or(f64::NAN),
            ]);
        }
        let worst_ratio = rep
            .iterations
            .iter()
            .filter(|it| it.n >= 1 && it.n <= s.checked_iterations)
            .filter_map(|it| it.ratio)
            .fold(0.0, f64::max);
        let mut fixed_distance = 0.0f64;
        for (a, b) in fixed.states.iter().zip(&pert.states) {
            fixed_distance = fixed_distance.max(a.relative_distance(b)?);
        }
        out.checks.push(Check::at_most(
            "contraction_ratio",
            worst_ratio,
            s.max_ratio,
        ));
        out.checks.push(Check::at_most(
            "fixed_point",
            fixed_distance,
            s.fixed_point_tolerance,
        ));
        details["m_bound"] = json!(rep.m_bound);
        details["l"] = json!(rep.l);
        details["within_smallness"] = json!(rep.within_smallness);
        details["fitted_constant"] = json!(rep.fitted_constant);
        details["converged"] = json!(rep.converged);
        details["ratios"] = json!(rep.ratios());
    }
    out.details = details;
    Ok(out)
}

fn stability_config(
    pw: &PlaneWaveSection,
    init: &InitialSection,
    bump: &crate::config::BumpSection,
    st: &StabilitySection,
    seed: u64,
) -> Result<StabilityRunConfig> {
    Ok(StabilityRunConfig {
        profile: ns_profile(pw, init, seed)?,
        bump: bump.spec(),
        eps: st.eps,
        delta: st.delta,
        p_set: st.p_set.clone(),
        horizon: st.t_end,
        dt: st.dt,
        profile_dt: st.profile_dt,
        max_profile_time: st.max_profile_time,
        grid3: pw.box_spec()?,
        window: (st.window[0], st.window[1]),
        snapshot_stride: st.snapshot_stride,
        nu: st.nu,
    })
}

fn slope_checks(
    out: &mut Outcome,
    bands: &[[f64; 3]],
    degraded: bool,
    fits: &[nsplane_core::experiments::DecayFit],
    envelopes: &[(f64, f64)],
) {
    for &[p, lo, hi] in bands {
        let label = lp_label(p);
        if degraded {
            let env = envelopes
                .iter()
                .find(|e| e.0 == p)
                .map(|e| e.1)
                .unwrap_or(f64::NAN);
            out.checks
                .push(Check::at_most(format!("envelope_{label}"), env, f64::MAX));
        } else {
            let slope = fits
                .iter()
                .find(|f| f.p == Some(p))
                .map(|f| f.slope)
                .unwrap_or(f64::NAN);
            out.checks
                .push(Check::within(format!("slope_{label}"), slope, lo, hi));
        }
    }
}

fn stability(s: &crate::config::Stability, seed: u64) -> Result<Outcome> {
    let cfg = stability_config(&s.planewave, &s.initial, &s.bump, &s.stability, seed)?;
    let res = stability_run(&cfg)?;
    let traj = &res.trajectory;
    let mut header = vec!["t".to_string()];
    header.extend(cfg.p_set.iter().map(|&p| lp_label(p)));
    header.push("divergence".into());
    let mut out = Outcome::new(Table::new(header));
    for d in &traj.diagnostics {
        let mut row = vec![d.t];
        row.extend(&d.lp);
        row.push(d.divergence_residual);
        out.table.push(row);
    }
    slope_checks(
        &mut out,
        &s.slope_bands,
        res.degraded,
        &res.fits,
        &res.envelopes,
    );
    out.checks.push(Check::at_most(
        "divergence",
        traj.max_divergence_residual(),
        1e-12,
    ));
    out.details = json!({
        "t_delta": res.t_delta,
        "t_box": res.t_box,
        "window": [res.window.0, res.window.1],
        "degraded": res.degraded,
        "initial_l3": res.initial_l3,
        "profile_l2_at_injection": res.profile_l2_at_injection,
        "fits": res.fits.iter().map(|f| json!({
            "p": f.p.map(lp_label),
            "slope": f.slope,
            "theoretical": f.theoretical,
            "residual": f.residual,
            "samples": f.samples,
        })).collect::<Vec<_>>(),
        "envelopes": res.envelopes.iter().map(|(p, e)| json!({ "p": lp_label(*p), "envelope": e })).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn contraction(s: &Contraction, seed: u64) -> Result<Outcome> {
    let cfg = stability_config(&s.planewave, &s.initial, &s.bump, &s.stability, seed)?;
    let rep = phi_contraction_check(&cfg, s.pairs, s.radius, seed)?;
    let mut out = Outcome::new(Table::new(["pair", "distance_in", "distance_out", "ratio"]));
    for (i, p) in rep.pairs.iter().enumerate() {
        out.table
            .push(vec![i as f64, p.distance_in, p.distance_out, p.ratio]);
    }
    out.checks.push(Check::at_most(
        "lipschitz_ratio",
        rep.max_ratio,
        s.max_ratio,
    ));
    out.details = json!({
        "t_delta": rep.t_delta,
        "phi_sup": rep.phi_sup,
        "radius": rep.radius,
        "pairs": rep.pairs.len(),
        "failures": rep.failures.len(),
    });
    Ok(out)
}

fn heat_decay(s: &HeatDecay) -> Result<Outcome> {
    let hc = HeatEstimateConfig {
        t_min: s.t_range[0],
        t_max: s.t_range[1],
        times: s.times,
        sigma_min: s.sigma_range[0],
        sigma_max: s.sigma_range[1],
        sigmas: s.sigmas,
    };
    let mut out = Outcome::new(Table::new(["q", "p", "d", "t", "ratio", "gradient_ratio"]));
    let mut cases = Vec::new();
    for c in &s.cases {
        let rep = heat_estimate_check_with(c.q, c.p, c.d, &hc)?;
        for ((t, r), g) in rep.times.iter().zip(&rep.ratios).zip(&rep.gradient_ratios) {
            out.table.push(vec![c.q, c.p, c.d as f64, *t, *r, *g]);
        }
        let tag = format!("q{}_{}_d{}", c.q, lp_label(c.p), c.d);
        out.checks.push(Check::at_most(
            format!("flat_{tag}"),
            rep.last_decade_variation,
            s.tolerance,
        ));
        out.checks.push(Check::at_most(
            format!("gradient_flat_{tag}"),
            rep.gradient_last_decade_variation,
            s.tolerance,
        ));
        cases.push(json!({ "case": tag, "exponent": rep.exponent, "max_ratio": rep.max_ratio }));
    }
    out.details = json!({ "cases": cases });
    Ok(out)
}

fn scan(s: &crate::config::Scan) -> Result<Outcome> {
    let mut cfg = s.solver.solver();
    cfg.diagnostics.gradient_bound = false;
    let rep = kato_smallness_scan(&s.grid.spec(), &s.amplitudes, &s.bump.spec(), &cfg)?;
    let mut out = Outcome::new(Table::new(["amplitude", "t", "envelope"]));
    for e in &rep.entries {
        for (t, v) in &e.envelope {
            out.table.push(vec![e.amplitude, *t, *v]);
        }
    }
    out.details = json!({
        "frontier": rep.frontier,
        "entries": rep.entries.iter().map(|e| json!({
            "amplitude": e.amplitude,
            "completed": e.completed,
            "bounded": e.bounded,
            "settles": e.settles,
            "failure": e.failure,
        })).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn complex_initial(grid: &Arc<Grid>, init: &InitialSection, seed: u64) -> Result<SpectralField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match init.kind {
        InitialKind::Zero => SpectralField::zeros(grid, 1, false),
        InitialKind::Constant => {
            let a0 = Complex64::from_polar(init.amplitude, init.phase);
            cgl_field_from_fn(grid, |_| a0)?
        }
        InitialKind::Random => {
            let mut f = SpectralField::random_complex_band_limited(grid, init.band, &mut rng);
            // the mean mode decays only through the nonlinearity
            f.remove_mean();
            let s = sup_norm(&f);
            if s > 0.0 {
                f.scale(init.amplitude / s);
            }
            f
        }
        InitialKind::TaylorGreen => {
            bail!("initial.kind = \"taylor-green\" is not a CGL initial condition")
        }
    })
}

fn cgl(s: &crate::config::Cgl, seed: u64) -> Result<Outcome> {
    let cfg = s.cgl.config();
    match s.mode {
        CglMode::Evolve => {
            let grid = Grid::new(s.grid.as_ref().expect("validated").spec())?;
            let f0 = complex_initial(&grid, &s.initial, seed)?;
            let traj = cgl_evolve(&f0, &cfg)?;
            let mut header = vec![
                "t".to_string(),
                "energy".into(),
                "gradient_l2_squared".into(),
                "l4_fourth".into(),
            ];
            header.extend(cfg.p_set.iter().map(|&p| lp_label(p)));
            let mut out = Outcome::new(Table::new(header));
            for r in &traj.rows {
                let mut row = vec![r.t, r.energy, r.gradient_l2_squared, r.l4_fourth];
                row.extend(&r.lp);
                out.table.push(row);
            }
            if s.initial.kind == InitialKind::Constant {
                let a0 = Complex64::from_polar(s.initial.amplitude, s.initial.phase);
                let exact = constant_mode_solution(
                    a0,
                    if cfg.nonlinear { cfg.k } else { 0.0 },
                    cfg.horizon,
                );
                let got = traj.last.mean()[0];
                out.checks.push(Check::at_most(
                    "constant_mode_ode",
                    (got - exact).norm(),
                    s.ode_tolerance,
                ));
            }
            let mut details = json!({ "steps": cfg.steps() });
            if cfg.snapshot_stride == 1 && traj.rows.len() >= 7 {
                let rep = cgl_energy_identity_check(&traj)?;
                out.checks.push(Check::at_most(
                    "energy_identity",
                    rep.max_defect,
                    s.energy_tolerance,
                ));
                details["energy_identity"] = json!(rep.header);
            }
            if f0.l2_norm() > 0.0 {
                let increases = traj
                    .rows
                    .windows(2)
                    .filter(|w| w[1].energy >= w[0].energy)
                    .count();
                out.checks
                    .push(Check::at_most("l2_increases", increases as f64, 0.0));
            }
            if s.cgl.snapshots {
                out.snapshots = traj.times.iter().cloned().zip(traj.states).collect();
            }
            out.details = details;
            Ok(out)
        }
        CglMode::PlanewaveCheck => {
            let pw = s.planewave.as_ref().expect("validated");
            let profile = Grid::new(pw.profile_spec())?;
            let f0 = complex_initial(&profile, &s.initial, seed)?;
            let c = pw.speed()?;
            let spec = pw.box_spec()?;
            let run = nsplane_core::cgl::CglConfig {
                keep_states: false,
                ..cfg.clone()
            };
            let distance = cgl_commutation_check(&f0, c, &run, &spec)?;
            let u = cgl_embed_planewave(&f0, c, &spec)?;
            let back = cgl_extract_profile(&u, c, &profile)?;
            let round_trip = if f0.l2_norm() > 0.0 {
                back.relative_distance(&f0)?
            } else {
                back.l2_norm()
            };
            let mut out = Outcome::new(Table::new(["c", "commutation", "round_trip"]));
            out.table.push(vec![c.value(), distance, round_trip]);
            out.checks.push(Check::at_most(
                "commutation",
                distance,
                s.commutation_tolerance,
            ));
            out.checks
                .push(Check::at_most("round_trip", round_trip, 1e-13));
            out.details = json!({ "c": c.to_string(), "box": spec.periods });
            Ok(out)
        }
        CglMode::Stability => {
            let pw = s.planewave.as_ref().expect("validated");
            let st = s.stability.as_ref().expect("validated");
            let profile = Grid::new(pw.profile_spec())?;
            let sc = CglStabilityConfig {
                cgl: cfg.clone(),
                profile: complex_initial(&profile, &s.initial, seed)?,
                c: pw.speed()?,
                bump: s.bump.as_ref().expect("validated").spec(),
                v0_norm: st.v0_norm,
                delta: st.delta,
                profile_dt: st.profile_dt,
                max_profile_time: st.max_profile_time,
                grid3: pw.box_spec()?,
                window: (st.window[0], st.window[1]),
            };
            let res = cgl_stability_run(&sc)?;
            let mut header = vec!["t".to_string(), "energy".into()];
            header.extend(res.p_set.iter().map(|&p| lp_label(p)));
            let mut out = Outcome::new(Table::new(header));
            for r in &res.rows {
                let mut row = vec![r.t, r.energy];
                row.extend(&r.lp);
                out.table.push(row);
            }
            slope_checks(
                &mut out,
                &s.slope_bands,
                res.degraded,
                &res.fits,
                &res.envelopes,
            );
            out.details = json!({
                "t_delta": res.t_delta,
                "window": [res.window.0, res.window.1],
                "degraded": res.degraded,
                "initial_l3": res.initial_l3,
                "fits": res.fits.iter().map(|f| json!({
                    "p": f.p.map(lp_label),
                    "slope": f.slope,
                    "theoretical": f.theoretical,
                    "residual": f.residual,
                })).collect::<Vec<_>>(),
            });
            Ok(out)
        }
    }
}
