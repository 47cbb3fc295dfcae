//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line before asserting.

mod common;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socialgrad::experiment::{
    run_experiment, run_timescale_sweep, run_ttsa_batch, sample_initial_conditions, ExperimentConfig,
    ExperimentKind, RuleSpec,
};
use socialgrad::game::{certify_strong_monotonicity, GameModel, Incentive};
use socialgrad::games::{build_oscillator, preset, OscillatorGameSpec, PRESET_AGGREGATIVE, PRESET_OSCILLATOR};
use socialgrad::linalg::{Matrix, Vector};
use socialgrad::planner::{
    in_sublevel_set, integrate_social_gradient_flow, lyapunov_derivative, FlowConfig, IncentiveProblem, Integrator,
    SocialObjective,
};
use socialgrad::solver::response_jacobian_fd;
use socialgrad::ttsa::{run_ttsa, LearningRule, StepSchedule, TtsaConfig};

use common::*;

fn report(id: &str, title: &str, passed: bool, detail: String) {
    println!("{id} {} {title}: {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "{id} {title}: {detail}");
}

fn problem(name: &str, c_fraction: f64) -> IncentiveProblem {
    let p = preset(name).unwrap();
    IncentiveProblem::new(p.game, SocialObjective::centered_quadratic(p.x_dagger), c_fraction).unwrap()
}

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

/// Uniform draw in the box shrunk by `margin` of each side length.
fn draw_box(game: &GameModel, rng: &mut ChaCha8Rng, margin: f64) -> Vector {
    let s = game.space();
    Vector::from_fn(s.dim(), |i, _| {
        let w = s.upper()[i] - s.lower()[i];
        rng.gen_range(s.lower()[i] + margin * w..s.upper()[i] - margin * w)
    })
}

/// Incentive whose equilibrium is a uniform draw from the x-space sublevel region.
fn draw_sublevel(pr: &IncentiveProblem, rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let x = draw_box(pr.game(), rng, 0.0);
        if pr.game().space().is_interior(&x) && pr.objective().gap(&x) <= pr.geometry().c {
            return -pr.game().g0(&x);
        }
    }
}

#[test]
fn ac1_flow_convergence() {
    let start = Instant::now();
    let pr = problem(PRESET_AGGREGATIVE, 0.99);
    let horizon = 40.0;
    let cfg = FlowConfig {
        stop_tol: 0.0,
        ..FlowConfig::for_game(pr.game(), horizon)
    };
    let ics = sample_initial_conditions(&pr, 0, 100).unwrap();
    let mut worst_rise = f64::NEG_INFINITY;
    let mut outside = 0usize;
    let mut worst_final = 0.0f64;
    let mut t_conv = 0.0f64;
    for ic in &ics {
        let tr = integrate_social_gradient_flow(&pr, &ic.p0(), &cfg).unwrap();
        for w in tr.samples.windows(2) {
            worst_rise = worst_rise.max(w[1].v - w[0].v);
        }
        outside += tr
            .samples
            .iter()
            .filter(|s| !in_sublevel_set(&pr, &v(&s.p)).unwrap())
            .count();
        worst_final = worst_final.max(tr.last().dist_to_pdagger);
        let reached = tr
            .samples
            .iter()
            .rposition(|s| s.dist_to_pdagger > 1e-4)
            .map_or(0.0, |i| tr.samples[(i + 1).min(tr.samples.len() - 1)].t);
        t_conv = t_conv.max(reached);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let passed = worst_rise <= 1e-9 && outside == 0 && worst_final <= 1e-4 && elapsed < 60.0;
    report(
        "AC1",
        "flow convergence",
        passed,
        format!(
            "100 runs, T = {horizon}, slowest run within 1e-4 of p† from t = {t_conv:.2}; max V rise {worst_rise:.2e}, \
             samples outside P_c {outside}, max ‖p(T) − p†‖ {worst_final:.2e}, {elapsed:.1} s"
        ),
    );
}

#[test]
fn ac2_flow_matches_matrix_exponential() {
    let pr = problem(PRESET_AGGREGATIVE, 0.8);
    let m = pr.game().linear_matrix().unwrap().clone();
    let minv = dense_inverse(&m);
    let pd = -&m * pr.objective().x_dagger();
    let cfg = FlowConfig {
        integrator: Integrator::Rk4,
        dt: 1e-3,
        horizon: 10.0,
        record_every: 1,
        stop_tol: 0.0,
    };
    let mut worst = 0.0f64;
    for ic in sample_initial_conditions(&pr, 0, 5).unwrap() {
        let d0 = ic.p0() - &pd;
        let tr = integrate_social_gradient_flow(&pr, &ic.p0(), &cfg).unwrap();
        for s in &tr.samples {
            let exact = &pd + (&minv * -s.t).exp() * &d0;
            worst = worst.max((v(&s.p) - exact).amax());
        }
    }
    report(
        "AC2",
        "exact-ODE cross-check",
        worst <= 1e-6,
        format!("max deviation {worst:.2e} over T = 10 at dt = 1e-3 (5 runs), bound 1e-6"),
    );
}

#[test]
fn ac3_descent_direction() {
    let mut lines = Vec::new();
    let mut passed = true;
    for name in [PRESET_AGGREGATIVE, PRESET_OSCILLATOR] {
        let pr = problem(name, 0.8);
        let pd = pr.p_dagger();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = f64::NEG_INFINITY;
        let mut worst_exact_rel = 0.0f64;
        let mut n = 0;
        while n < 200 {
            let p = draw_sublevel(&pr, &mut rng);
            if (&p - &pd).norm() < 1e-3 {
                continue;
            }
            assert!(in_sublevel_set(&pr, &p).unwrap());
            let d = lyapunov_derivative(&pr, &p, 1e-5).unwrap();
            worst = worst.max(d);
            if let Some(m) = pr.game().linear_matrix() {
                let exact = linear_lyapunov_rate(m, pr.objective().x_dagger(), &p);
                worst_exact_rel = worst_exact_rel.max((d - exact).abs() / exact.abs());
            }
            n += 1;
        }
        let at_opt = lyapunov_derivative(&pr, &pd, 1e-5).unwrap();
        let ok = worst < -1e-12 && at_opt.abs() <= 1e-12 && worst_exact_rel <= 1e-6;
        passed &= ok;
        let exact = if pr.game().linear_matrix().is_some() {
            format!(", rel. error vs exact −gᵀM⁻¹g {worst_exact_rel:.1e}")
        } else {
            String::new()
        };
        lines.push(format!(
            "{name}: max V̇ {worst:.3e} over 200 points, V̇(p†) = {at_opt:.1e}{exact}"
        ));
    }
    report("AC3", "descent direction", passed, lines.join("; "));
}

#[test]
fn ac4_response_map_bounds() {
    let mut lines = Vec::new();
    let mut passed = true;
    for name in [PRESET_AGGREGATIVE, PRESET_OSCILLATOR] {
        let pr = problem(name, 0.8);
        let game = pr.game();
        let m = game.monotonicity_m();
        let l = game.jac_bound();
        let l1 = game.lip_l1();
        let linear = game.linear_matrix().is_some();
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut lip, mut sym_max, mut s_min, mut s_max, mut jac_lip, mut jac_diff) =
            (0.0f64, f64::NEG_INFINITY, f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
        for _ in 0..100 {
            let p1 = -game.g0(&draw_box(game, &mut rng, 0.1));
            let p2 = -game.g0(&draw_box(game, &mut rng, 0.1));
            let x1 = pr.response(&p1, None).unwrap().x_star;
            let x2 = pr.response(&p2, None).unwrap().x_star;
            let dp = (&p1 - &p2).norm();
            lip = lip.max((&x1 - &x2).norm() / dp);
            let jac = |p: &Vector| -> Matrix {
                response_jacobian_fd(game, &Incentive::new(p.clone()).unwrap(), pr.solver(), h).unwrap()
            };
            let (j1, j2) = (jac(&p1), jac(&p2));
            for j in [&j1, &j2] {
                sym_max = sym_max.max(*jacobi_eigenvalues(&sym(j)).last().unwrap());
                let sv = j.clone().singular_values();
                s_min = s_min.min(sv.min());
                s_max = s_max.max(sv.max());
            }
            let diff = (&j1 - &j2).clone().singular_values().max();
            jac_diff = jac_diff.max(diff);
            jac_lip = jac_lip.max(diff / dp);
        }
        let lip_bound = 2.0 / m + 1e-6;
        let jac_ok = if linear {
            jac_diff <= 1e-8
        } else {
            jac_lip <= 8.0 * l1 / m.powi(3) + 1e-4
        };
        let ok = lip <= lip_bound
            && sym_max < 0.0
            && s_min >= 1.0 / l - 1e-4
            && s_max <= 2.0 / m + 1e-4
            && jac_ok;
        passed &= ok;
        lines.push(format!(
            "{name}: Lipschitz {lip:.4} ≤ {lip_bound:.4}, max eig Sym(Dx*) {sym_max:.3e}, σ ∈ [{s_min:.4}, {s_max:.4}] ⊂ [{:.4}, {:.4}], {}",
            1.0 / l - 1e-4,
            2.0 / m + 1e-4,
            if linear {
                format!("max ‖Dx*(p) − Dx*(q)‖ {jac_diff:.1e} ≤ 1e-8")
            } else {
                format!("Dx* Lipschitz {jac_lip:.3} ≤ {:.1}", 8.0 * l1 / m.powi(3) + 1e-4)
            }
        ));
    }
    report("AC4", "response-map bounds", passed, lines.join("; "));
}

fn ttsa_batch_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment = ExperimentKind::Ttsa;
    cfg.c_fraction = 0.8;
    cfg.num_initial_conditions = 100;
    cfg.output_dir = dir.to_path_buf();
    cfg.ttsa.rules = vec![RuleSpec::Ne, RuleSpec::Br];
    cfg.ttsa.max_iter = 100_000;
    cfg.ttsa.record_every = 100;
    cfg.ttsa.write_runs = false;
    cfg
}

#[test]
fn ac5_ttsa_batches_decay() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ttsa_batch_config(dir.path());
    let pr = cfg.build_problem().unwrap();
    let summary = run_ttsa_batch(&cfg, &pr, jobs()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut passed = summary.failures() == 0 && elapsed < 600.0;
    let mut lines = Vec::new();
    for rb in &summary.rules {
        let early = rb.at(1_000).unwrap();
        let late = rb.at(100_000).unwrap();
        let tr = late.tracking_median / early.tracking_median;
        let inc = late.incentive_median / early.incentive_median;
        let bins: Vec<_> = rb.decades.iter().filter(|b| b.lo >= 10).collect();
        let decreasing = bins
            .windows(2)
            .all(|w| w[1].tracking_max < w[0].tracking_max && w[1].incentive_max < w[0].incentive_max);
        let ok = tr < 0.01 && inc < 0.01 && decreasing && bins.last().map(|b| b.hi) == Some(100_000);
        passed &= ok;
        lines.push(format!(
            "{}: median ratio k=1e5/k=1e3 tracking {tr:.2e}, incentive {inc:.2e}; decade maxima decreasing {decreasing} \
             (final decade tracking {:.2e}, incentive {:.2e})",
            rb.rule.name(),
            bins.last().unwrap().tracking_max,
            bins.last().unwrap().incentive_max
        ));
    }
    lines.push(format!("{elapsed:.1} s"));
    report("AC5", "TTSA batches", passed, lines.join("; "));
}

fn oscillator_run_config(pr: &IncentiveProblem, max_iter: u64, record_every: u64) -> TtsaConfig {
    TtsaConfig {
        schedule: StepSchedule::new(1.0, 0.6, 1.0, 0.9, 1).unwrap(),
        rule: LearningRule::default_pg(pr.game()),
        c: pr.geometry().c,
        max_iter,
        record_every,
        seed: 0,
    }
}

#[test]
fn ac6_oscillator_pg_run() {
    let pr = problem(PRESET_OSCILLATOR, 0.95);
    let cfg = oscillator_run_config(&pr, 100_000, 1);
    let tr = run_ttsa(&pr, &v(&[0.0, -0.5]), &v(&[-3.0, -3.0]), &cfg).unwrap();
    let space = pr.game().space();
    let mut outside = 0usize;
    let mut last_p: Option<Vec<f64>> = None;
    for s in &tr.samples {
        if last_p.as_ref() != Some(&s.p) {
            if !in_sublevel_set(&pr, &v(&s.p)).unwrap() || s.v > pr.geometry().c {
                outside += 1;
            }
            last_p = Some(s.p.clone());
        }
        if !space.contains(&v(&s.x)) {
            outside += 1;
        }
    }
    let tail: Vec<_> = tr.samples.iter().filter(|s| s.k > 10_000).collect();
    let acceptance = tail.iter().filter(|s| s.indicator_accepted).count() as f64 / tail.len() as f64;
    let final_err = tr.summary.final_incentive_error;
    let passed = outside == 0 && acceptance == 1.0 && final_err <= 1e-2 && tr.summary.iterations == 100_000;
    report(
        "AC6",
        "oscillator PG run",
        passed,
        format!(
            "samples outside X × P_0.95c* {outside}, acceptance over final 90% {:.1}%, last rejection {:?}, \
             final ‖p − p†‖ {final_err:.3e} ≤ 1e-2",
            100.0 * acceptance,
            tr.summary.last_rejection
        ),
    );
}

#[test]
fn ac7_timescale_sweep_interior_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.experiment = ExperimentKind::Sweep;
    cfg.game = socialgrad::games::GameSpec::Preset {
        name: PRESET_OSCILLATOR.into(),
    };
    cfg.c_fraction = 0.95;
    cfg.output_dir = dir.path().to_path_buf();
    cfg.ttsa.rules = vec![RuleSpec::Pg { eta: None }];
    cfg.ttsa.max_iter = 100_000;
    cfg.ttsa.record_every = 1_000;
    cfg.ttsa.x0 = Some(vec![0.0, -0.5]);
    cfg.ttsa.p0 = Some(vec![-3.0, -3.0]);
    cfg.ttsa.write_runs = false;
    cfg.sweep.gammas = vec![0.1, 0.2, 0.3, 0.4];
    let pr = cfg.build_problem().unwrap();
    let table = run_timescale_sweep(&cfg, &pr, jobs()).unwrap();
    let errs: Vec<f64> = table.rows.iter().map(|r| r.final_incentive_error).collect();
    let all_ran = table.rows.iter().all(|r| r.skipped.is_none()) && table.failures() == 0;
    let best_interior = errs[1..errs.len() - 1].iter().copied().fold(f64::INFINITY, f64::min);
    let passed = all_ran && errs[0] > best_interior && errs[errs.len() - 1] > best_interior;
    let cells: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("γ = {:.1}: {:.3e}", r.gamma, r.final_incentive_error))
        .collect();
    report(
        "AC7",
        "timescale sweep",
        passed,
        format!("final incentive error {}; best interior {best_interior:.3e}", cells.join(", ")),
    );
}

#[test]
fn ac8_learning_rule_contraction() {
    let mut lines = Vec::new();
    let mut passed = true;
    for name in [PRESET_AGGREGATIVE, PRESET_OSCILLATOR] {
        let pr = problem(name, 0.8);
        let game = pr.game();
        let LearningRule::Pg { eta } = LearningRule::default_pg(game) else {
            unreachable!()
        };
        let (m, l) = (game.step_modulus(), game.jac_bound());
        let rho = (1.0 - eta * m + eta * eta * l * l).sqrt();
        let (lo, hi) = (game.space().lower(), game.space().upper());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let p = -game.g0(&draw_box(game, &mut rng, 0.0));
            let x = draw_box(game, &mut rng, 0.0);
            let xs = pr.response(&p, None).unwrap().x_star;
            let tx = clamp(&(&x - (game.g0(&x) + &p) * eta), lo, hi);
            worst = worst.max((tx - &xs).norm() / (&x - &xs).norm());
        }
        let ok = worst <= rho + 1e-8;
        passed &= ok;
        lines.push(format!("{name} PG: max ratio {worst:.6} ≤ ρ = {rho:.6} (η = {eta:.4e})"));
    }

    let game = preset(PRESET_AGGREGATIVE).unwrap().game;
    let m = game.linear_matrix().unwrap().clone();
    let qinv = Matrix::from_diagonal(&m.diagonal().map(|q| 1.0 / q));
    let a = &qinv * &m;
    let rate = jacobi_eigenvalues(&sym(&a))[0];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let e0 = Vector::from_fn(m.nrows(), |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..=500 {
            let t = i as f64 * 0.01;
            let e = (&a * -t).exp() * &e0;
            worst = worst.max(e.norm() / e0.norm() / (-rate * t).exp());
        }
    }
    let ok = rate > 0.0 && worst <= 1.05;
    passed &= ok;
    lines.push(format!(
        "BR: max ‖e(t)‖/(‖e₀‖ exp(−{rate:.4} t)) over t ∈ [0, 5] = {worst:.4} ≤ 1.05"
    ));
    report("AC8", "learning-rule contraction", passed, lines.join("; "));
}

#[test]
fn ac9_certifier_correctness() {
    let spec = OscillatorGameSpec::default();
    assert_eq!(spec.theta, [4.2, 5.0]);
    let game = build_oscillator(&spec).unwrap();
    let (lo, hi) = (spec.lower, spec.upper);
    let mut corner_bound = f64::INFINITY;
    for x0 in [lo[0], hi[0]] {
        for x1 in [lo[1], hi[1]] {
            let c = (x0 - x1).cos();
            let s = Matrix::from_row_slice(2, 2, &[spec.theta[0] * x0.cos() - c, c, c, spec.theta[1] * x1.cos() - c]);
            let g = (0..2)
                .map(|i| s[(i, i)] - s[(i, 1 - i)].abs())
                .fold(f64::INFINITY, f64::min);
            corner_bound = corner_bound.min(g);
        }
    }
    let cert = certify_strong_monotonicity(&game, 101).unwrap();
    let m = game.monotonicity_m();
    let osc_ok = (m - 0.2).abs() <= 1e-10
        && (2.0 * corner_bound - m).abs() <= 1e-10
        && (cert.grid_gershgorin_min - m / 2.0).abs() <= 1e-10;

    let agg = preset(PRESET_AGGREGATIVE).unwrap().game;
    let mat = agg.linear_matrix().unwrap();
    let reference = jacobi_eigenvalues(&sym(mat))[0];
    let analytic = agg.dynamics().analytic_monotonicity_bound(agg.space()).unwrap();
    let agg_ok = (analytic - reference).abs() <= 1e-10 && (agg.monotonicity_m() / 2.0 - reference).abs() <= 1e-10;
    report(
        "AC9",
        "certifier correctness",
        osc_ok && agg_ok,
        format!(
            "oscillator m = {m:.12}, corner Gershgorin 2·{corner_bound:.12}, grid Gershgorin min {:.12}; \
             aggregative λ_min(Sym(M)) analytic {analytic:.14} vs Jacobi {reference:.14}",
            cert.grid_gershgorin_min
        ),
    );
}

fn csv_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn ac10_ttsa_rerun_is_byte_identical() {
    let run = |jobs: usize| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ttsa_batch_config(dir.path());
        cfg.seed = 11;
        cfg.num_initial_conditions = 8;
        cfg.ttsa.max_iter = 5_000;
        cfg.ttsa.record_every = 10;
        cfg.ttsa.write_runs = true;
        cfg.ttsa.rules = vec![RuleSpec::Ne, RuleSpec::Br, RuleSpec::Pg { eta: None }];
        run_experiment(&cfg, jobs).unwrap();
        csv_files(dir.path())
    };
    let first = run(1);
    let second = run(1);
    let parallel = run(jobs().max(2));
    let identical = first == second && first == parallel;
    let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
    report(
        "AC10",
        "determinism",
        identical && first.len() == 27,
        format!(
            "{} CSV files ({bytes} bytes) identical across two sequential reruns and a parallel rerun: {identical}",
            first.len()
        ),
    );
}
