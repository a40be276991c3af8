//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero when a criterion outside `EXPECTED_FAILURES` fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nsplane::artifacts::{Summary, DIAGNOSTICS, SNAPSHOTS, SUMMARY};
use nsplane::config::RunConfig;
use nsplane::run::{execute, replay, RunOptions};
use nsplane::Subcommand;
use tempfile::TempDir;

/// Criteria that cannot hold on a desk-size periodic box; see the README.
const EXPECTED_FAILURES: &[u32] = &[7];

struct Outcome {
    passed: bool,
    detail: String,
}

struct Ctx {
    tmp: TempDir,
    /// Largest divergence residual seen in any 3D run.
    divergence: Vec<(String, f64)>,
    /// Duhamel residuals of NS runs stepped with dt = 1e-3.
    duhamel: Vec<(String, f64)>,
}

impl Ctx {
    fn run(&mut self, label: &str, sub: Subcommand, toml: &str, seed: u64) -> Summary {
        let cfg = RunConfig::parse(sub, toml).unwrap_or_else(|e| panic!("{label}: {e:#}"));
        let out = self.tmp.path().join(label);
        let res = execute(
            &cfg,
            &RunOptions {
                out,
                seed,
                threads: 1,
            },
        )
        .unwrap_or_else(|e| panic!("{label}: {e:#}"));
        if let Some(f) = &res.summary.failure {
            println!("     {label} aborted ({}): {}", f.kind, f.message);
        }
        if let Some(c) = res.summary.check("divergence") {
            self.divergence.push((label.to_string(), c.value));
        }
        res.summary
    }
}

fn value(s: &Summary, name: &str) -> f64 {
    s.check(name).map(|c| c.value).unwrap_or(f64::NAN)
}

fn passed(s: &Summary, name: &str) -> bool {
    s.check(name).is_some_and(|c| c.passed)
}

fn taylor_green(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let s = ctx.run(
        "tg",
        Subcommand::Simulate2d,
        "[grid]\npoints = [128, 128]\n[solver]\ndt = 1e-3\nt_end = 1.0\nsnapshot_stride = 100\n\
         [initial]\nkind = \"taylor-green\"",
        0,
    );
    let secs = start.elapsed().as_secs_f64();
    ctx.duhamel
        .push(("tg".into(), value(&s, "duhamel_residual")));
    Outcome {
        passed: passed(&s, "taylor_green_error") && passed(&s, "energy_decay") && secs <= 30.0,
        detail: format!(
            "error {:.2e}, energy {:.2e}, {secs:.1}s",
            value(&s, "taylor_green_error"),
            value(&s, "energy_decay")
        ),
    }
}

fn commutation(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut ok = true;
    for (c, ny) in [("0", 64), ("1", 64), ("1/2", 128)] {
        let toml = format!(
            "tolerance = 1e-6\n[planewave]\nc = \"{c}\"\nprofile_points = [64, 64]\nbox_points = [64, {ny}, 64]\n\
             [solver]\ndt = 5e-3\nt_end = 0.5\ntrack_duhamel = false\n[initial]\nkind = \"random\"\nband = 4"
        );
        let s = ctx.run(
            &format!("commutation-{}", c.replace('/', "_")),
            Subcommand::PlanewaveCheck,
            &toml,
            5,
        );
        worst = worst.max(value(&s, "commutation"));
        ok &= s.passed;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: ok && secs <= 300.0,
        detail: format!("max distance {worst:.2e}, {secs:.1}s"),
    }
}

fn heat_decay(ctx: &mut Ctx) -> Outcome {
    let s = ctx.run("heatdecay", Subcommand::Heatdecay, "tolerance = 0.01", 0);
    let worst = s.checks.iter().map(|c| c.value).fold(0.0, f64::max);
    Outcome {
        passed: s.passed && s.checks.len() == 8,
        detail: format!("max last-decade variation {worst:.2e}"),
    }
}

fn picard_contraction(ctx: &mut Ctx) -> Outcome {
    let s = ctx.run(
        "picard",
        Subcommand::Picard,
        "v0_norm = 1e-3\nmax_ratio = 0.6\nchecked_iterations = 8\nfixed_point_tolerance = 1e-6\n\
         [planewave]\nc = \"1\"\nlambda = 4.442882938158366\nprofile_points = [32, 32]\nbox_points = [32, 32, 32]\n\
         [solver]\ndt = 0.01\nt_end = 1.0\ntrack_duhamel = false\n[initial]\namplitude = 0.5\nband = 2\n\
         [picard]\nt_star = 1.0\neps = 1e-2\nquadrature = \"cubic\"",
        7,
    );
    let m = s.details["m_bound"].as_f64().unwrap_or(f64::NAN);
    let small = s.details["within_smallness"].as_bool().unwrap_or(false);
    Outcome {
        passed: passed(&s, "contraction_ratio") && passed(&s, "fixed_point") && m <= 2.0 && small,
        detail: format!(
            "max ratio {:.2e}, fixed point {:.2e}, M {m:.3}",
            value(&s, "contraction_ratio"),
            value(&s, "fixed_point")
        ),
    }
}

fn local_bound(ctx: &mut Ctx) -> Outcome {
    let s = ctx.run(
        "local-bound",
        Subcommand::Picard,
        "v0_norm = 1e-3\n[planewave]\nc = \"1\"\nlambda = 4.442882938158366\nprofile_points = [48, 48]\n\
         box_points = [48, 48, 48]\n[solver]\ndt = 0.01\nt_end = 1.0\ntrack_duhamel = false\n\
         [initial]\namplitude = 0.5\nband = 2\n[picard]\nt_star = 1.0\nsolve = false",
        8,
    );
    Outcome {
        passed: passed(&s, "local_bound"),
        detail: format!("|v(T*)|_3 / eps = {:.3}", value(&s, "local_bound")),
    }
}

fn decay_slopes(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let s = ctx.run(
        "slopes",
        Subcommand::Stability,
        "[planewave]\nc = \"0\"\nlambda = 128.0\nlz = 128.0\nprofile_points = [128, 128]\n\
         box_points = [128, 128, 128]\nbox_periods = [128.0, 128.0, 128.0]\n\
         [initial]\namplitude = 0.01\nband = 2\n[bump]\nradius = 8.0\n\
         [stability]\neps = 1e-3\ndelta = 0.1\nt_end = 10.0\ndt = 0.1\nprofile_dt = 1.0\nwindow = [1.0, 10.0]",
        9,
    );
    let secs = start.elapsed().as_secs_f64();
    let slopes: Vec<String> = s
        .checks
        .iter()
        .filter(|c| c.name.starts_with("slope_") || c.name.starts_with("envelope_"))
        .map(|c| format!("{} {:.3}", c.name, c.value))
        .collect();
    Outcome {
        passed: s.passed && secs <= 1800.0,
        detail: format!("{}, {secs:.0}s", slopes.join(", ")),
    }
}

fn phi_contraction(ctx: &mut Ctx) -> Outcome {
    let s = ctx.run(
        "phi",
        Subcommand::Contraction,
        "pairs = 20\nradius = 1e-2\nmax_ratio = 0.5\n[planewave]\nc = \"0\"\nlambda = 16.0\nlz = 16.0\n\
         profile_points = [32, 32]\nbox_points = [32, 32, 32]\nbox_periods = [16.0, 16.0, 16.0]\n\
         [initial]\namplitude = 0.5\nband = 2\n[bump]\nradius = 1.0\n\
         [stability]\neps = 1e-3\ndelta = 0.2\nt_end = 0.5\ndt = 0.05\nwindow = [0.1, 0.5]",
        10,
    );
    let pairs = s.details["pairs"].as_u64().unwrap_or(0);
    Outcome {
        passed: passed(&s, "lipschitz_ratio") && pairs >= 20,
        detail: format!(
            "max ratio {:.2e} over {pairs} pairs",
            value(&s, "lipschitz_ratio")
        ),
    }
}

fn duhamel(ctx: &mut Ctx) -> Outcome {
    let s = ctx.run(
        "duhamel-3d",
        Subcommand::Simulate3d,
        "[grid]\npoints = [32, 32, 32]\n[solver]\ndt = 1e-3\nt_end = 0.2\nsnapshot_stride = 10\n\
         [initial]\nkind = \"random\"\namplitude = 1.0\nband = 3",
        11,
    );
    ctx.duhamel
        .push(("duhamel-3d".into(), value(&s, "duhamel_residual")));
    let worst = ctx.duhamel.iter().map(|d| d.1).fold(0.0, f64::max);
    Outcome {
        passed: ctx.duhamel.iter().all(|d| d.1 <= 1e-6),
        detail: format!("max residual {worst:.2e} over {} runs", ctx.duhamel.len()),
    }
}

fn divergence(ctx: &mut Ctx) -> Outcome {
    let worst = ctx.divergence.iter().map(|d| d.1).fold(0.0, f64::max);
    Outcome {
        passed: !ctx.divergence.is_empty() && ctx.divergence.iter().all(|d| d.1 <= 1e-12),
        detail: format!(
            "max residual {worst:.2e} over {} runs",
            ctx.divergence.len()
        ),
    }
}

fn cgl(ctx: &mut Ctx) -> Outcome {
    let ode = ctx.run(
        "cgl-ode",
        Subcommand::Cgl,
        "mode = \"evolve\"\n[grid]\npoints = [16, 16]\n[cgl]\ndt = 1e-3\nt_end = 1.0\n\
         [initial]\nkind = \"constant\"\namplitude = 0.8\nphase = 0.3",
        0,
    );
    let energy = ctx.run(
        "cgl-energy",
        Subcommand::Cgl,
        "mode = \"evolve\"\n[grid]\npoints = [32, 32]\n[cgl]\ndt = 1e-3\nt_end = 0.5\n\
         [initial]\nkind = \"random\"\namplitude = 1.0\nband = 4",
        12,
    );
    let mut commutation = 0.0f64;
    let mut commutes = true;
    for (c, ny) in [("0", 32), ("1", 32), ("1/2", 64)] {
        let s = ctx.run(
            &format!("cgl-commutation-{}", c.replace('/', "_")),
            Subcommand::Cgl,
            &format!(
                "mode = \"planewave-check\"\n[planewave]\nc = \"{c}\"\nprofile_points = [32, 32]\n\
                 box_points = [32, {ny}, 32]\ndealias = 0.5\n[cgl]\ndt = 1e-3\nt_end = 0.2\n\
                 [initial]\nkind = \"random\"\nband = 4"
            ),
            13,
        );
        commutation = commutation.max(value(&s, "commutation"));
        commutes &= s.passed;
    }
    let st = ctx.run(
        "cgl-stability",
        Subcommand::Cgl,
        "mode = \"stability\"\n[planewave]\nc = \"0\"\nlambda = 32.0\nlz = 32.0\nprofile_points = [32, 32]\n\
         box_points = [128, 128, 128]\nbox_periods = [32.0, 32.0, 32.0]\ndealias = 0.5\n\
         [cgl]\neps = 0.3\ndt = 0.003\nt_end = 0.3\n\
         [initial]\nkind = \"random\"\namplitude = 0.05\nband = 2\n\
         [bump]\nradius = 2.0\nshape = \"critical-core\"\ncore = 0.125\ninner = 0.6\n\
         [stability]\nv0_norm = 1e-3\ndelta = 0.05\nprofile_dt = 0.5\nwindow = [0.03, 0.3]",
        14,
    );
    let ok = passed(&ode, "constant_mode_ode")
        && passed(&energy, "energy_identity")
        && commutes
        && st.passed;
    Outcome {
        passed: ok,
        detail: format!(
            "ode {:.2e}, energy {:.2e}, commutation {commutation:.2e}, slope_lp_6 {:.3}",
            value(&ode, "constant_mode_ode"),
            value(&energy, "energy_identity"),
            value(&st, "slope_lp_6")
        ),
    }
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    match (std::fs::read(a), std::fs::read(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn determinism(ctx: &mut Ctx) -> Outcome {
    let mut ok = true;
    let mut files = 0;
    let runs = [
        (
            Subcommand::Simulate3d,
            "[grid]\npoints = [16, 16, 16]\n[solver]\ndt = 1e-2\nt_end = 0.2\nsnapshots = true\n\
             snapshot_stride = 5\n[initial]\nkind = \"random\"",
        ),
        (
            Subcommand::Contraction,
            "pairs = 3\nradius = 1e-2\n[planewave]\nc = \"0\"\nlambda = 16.0\nlz = 16.0\n\
             profile_points = [16, 16]\nbox_points = [16, 16, 16]\nbox_periods = [16.0, 16.0, 16.0]\n\
             [initial]\namplitude = 0.5\nband = 2\n[bump]\nradius = 1.0\n\
             [stability]\neps = 1e-3\ndelta = 0.2\nt_end = 0.3\ndt = 0.05\nwindow = [0.1, 0.3]",
        ),
    ];
    for (i, (sub, toml)) in runs.iter().enumerate() {
        let first = ctx.tmp.path().join(format!("replay-{i}-a"));
        let second = ctx.tmp.path().join(format!("replay-{i}-b"));
        let cfg = RunConfig::parse(*sub, toml).expect("replay config");
        execute(
            &cfg,
            &RunOptions {
                out: first.clone(),
                seed: 42,
                threads: 1,
            },
        )
        .expect("first run");
        replay(&first.join("manifest.json"), &second).expect("replay");
        let mut names = vec![DIAGNOSTICS.to_string(), SUMMARY.to_string()];
        if let Ok(entries) = std::fs::read_dir(first.join(SNAPSHOTS)) {
            for e in entries.flatten() {
                names.push(format!("{SNAPSHOTS}/{}", e.file_name().to_string_lossy()));
            }
        }
        for n in &names {
            ok &= same_bytes(&first.join(n), &second.join(n));
            files += 1;
        }
    }
    Outcome {
        passed: ok && files > 4,
        detail: format!("{files} files compared"),
    }
}

fn main() -> ExitCode {
    let mut ctx = Ctx {
        tmp: TempDir::new().expect("tempdir"),
        divergence: Vec::new(),
        duhamel: Vec::new(),
    };
    type Criterion = (u32, &'static str, fn(&mut Ctx) -> Outcome);
    // run order lets the aggregate criteria see every earlier run
    let criteria: [Criterion; 11] = [
        (1, "taylor-green exactness", taylor_green),
        (2, "plane-wave commutation", commutation),
        (4, "heat estimate flatness", heat_decay),
        (5, "picard contraction", picard_contraction),
        (6, "local perturbation bound", local_bound),
        (7, "perturbation decay slopes", decay_slopes),
        (8, "duhamel map contraction", phi_contraction),
        (10, "ginzburg-landau analog", cgl),
        (9, "duhamel residual", duhamel),
        (3, "divergence preservation", divergence),
        (11, "replay determinism", determinism),
    ];
    let mut results = Vec::new();
    for (id, name, f) in criteria {
        let start = Instant::now();
        let o = f(&mut ctx);
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {id:>2} {name}: {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((id, o.passed));
    }
    results.sort();
    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(id, ok)| !ok && !EXPECTED_FAILURES.contains(id))
        .map(|r| r.0)
        .collect();
    let passed = results.iter().filter(|r| r.1).count();
    println!(
        "acceptance: {passed}/{} passed, expected failures {EXPECTED_FAILURES:?}",
        results.len()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
