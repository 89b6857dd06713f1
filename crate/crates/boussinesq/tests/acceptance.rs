//! Full-size acceptance gates for the laboratory.
//!
//! Each test pins one scenario, runs it end to end at its production size,
//! prints a single verdict line and asserts the gate together with its wall
//! clock budget. Every run is deterministic under the seeds written here, so
//! a failure reproduces exactly. Run with `--nocapture` to see the verdict
//! lines of passing gates.

use std::path::PathBuf;
use std::time::Instant;

use boussinesq::boundary::{admissibility, AmplitudeLaw, BoundaryBasis, BoundaryNoiseSpec};
use boussinesq::convolution::ConvolutionState;
use boussinesq::coupled::{CoupledConfig, CoupledSolver, CoupledRun, CouplingMode, ZetaGuess};
use boussinesq::harness::ensemble::{render_ensemble_csv, render_trajectory_csv, ScenarioRunner};
use boussinesq::harness::{
    epsilon_scaling, fit_tail, pathwise_scaling_check, run_ensemble, tail_experiment,
    ConfigMap, ExperimentConfig,
};
use boussinesq::oracle1d::{standard_interval_spec, validate_convolution, z_second_moment_truncated};
use boussinesq::par::replica_rng;
use boussinesq::series::SeriesVerdict;
use boussinesq::spectral::{BoxDomain, SpectralField};
use boussinesq::temperature::{zeta_residual, HeatPropagator};
use boussinesq::velocity::{
    convective_probe, random_smooth_trajectory, random_solenoidal_probe, sup_distance,
    ConvectionOperator, LerayProjector, NavierStokesSolver, Trajectory,
};

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn verdict(number: usize, label: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number} ({label}): {word} - {detail}");
    assert!(pass, "criterion {number} ({label}) failed: {detail}");
}

/// Interval ensembles at three horizons against the closed-form second
/// moment: 512 modes, 2048 steps per horizon, 2000 paths, 2% plus two
/// standard errors.
#[test]
fn criterion_1_interval_moments_match_closed_form() {
    let start = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for (i, &t) in [0.1, 0.5, 1.0].iter().enumerate() {
        let dt = t / 2048.0;
        let report = validate_convolution(512, 0.3, 1.0, dt, &[2048], 2000, 0xACCE_0001 + i as u64)
            .expect("interval ensemble");
        pass &= report.passes(0.02, 2.0);
        let row = &report.rows[0];
        detail.push_str(&format!(
            "t={t}: sim {:.6e} vs oracle {:.6e} (rel {:.2e}); ",
            row.simulated,
            row.truncated_oracle,
            (row.simulated - row.truncated_oracle).abs() / row.truncated_oracle
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 120.0;
    detail.push_str(&format!("{elapsed:.1}s of 120s"));
    verdict(1, "closed-form match", pass, &detail);
}

/// Norm estimates saturate under mode doubling at alpha = 0.3 and keep
/// growing past 10% per doubling at alpha = 0.2; the admissibility trace is
/// summable at beta = 0.2, log-divergent at 0.25 and power-divergent at 0.3.
#[test]
fn criterion_2_regularity_thresholds_are_sharp() {
    let start = Instant::now();
    let t = 0.25;
    let dt = 1.0 / 256.0;
    let steps = 64;
    let truncations = [256usize, 512, 1024, 2048];
    let replicas = 400;

    // Shared seeds across truncations: the endpoint increments are drawn
    // identically, so each path at 2N is the exact mode-extension of the
    // path at N and the doubling growth carries almost no sampling noise.
    let growth = |alpha: f64| -> (Vec<f64>, Vec<f64>) {
        let means: Vec<f64> = truncations
            .iter()
            .map(|&n| {
                let spec = standard_interval_spec(n, 1.0).expect("interval spec");
                let total: f64 = (0..replicas)
                    .map(|i| {
                        let mut rng = replica_rng(0xACCE_0002, i);
                        let mut state =
                            ConvolutionState::new(spec.clone(), alpha, dt).expect("state");
                        for _ in 0..steps {
                            state.step(&mut rng);
                        }
                        let norm = state.norm_z();
                        norm * norm
                    })
                    .sum();
                total / replicas as f64
            })
            .collect();
        let oracle: Vec<f64> = truncations
            .iter()
            .map(|&n| z_second_moment_truncated(t, alpha, 1.0, 2.0, n))
            .collect();
        let rel_growth = |v: &[f64]| {
            v.windows(2)
                .map(|w| (w[1] - w[0]) / w[0])
                .collect::<Vec<f64>>()
        };
        (rel_growth(&means), rel_growth(&oracle))
    };

    let (g_sat, g_sat_oracle) = growth(0.3);
    let (g_div, g_div_oracle) = growth(0.2);
    let mc_tracks_oracle = g_sat
        .iter()
        .zip(&g_sat_oracle)
        .chain(g_div.iter().zip(&g_div_oracle))
        .all(|(a, b)| (a - b).abs() < 0.015);
    let saturates = g_sat.iter().all(|&g| g < 0.10) && g_sat.last() < g_sat.first();
    let diverges = g_div.iter().all(|&g| g > 0.10);

    let spec = standard_interval_spec(64, 1.0).expect("interval spec");
    let a_conv = admissibility(&spec, 0.2);
    let a_log = admissibility(&spec, 0.25);
    let a_pow = admissibility(&spec, 0.3);
    let trace_ok = a_conv.verdict == SeriesVerdict::Convergent
        && a_conv.total.map(f64::is_finite) == Some(true);
    // Dyadic block sums flatten out for a logarithmic series and keep a
    // geometric ratio above one for a power series.
    let log_ok = a_log.verdict == SeriesVerdict::Divergent
        && (a_log.profile.last_ratio - 1.0).abs() < 0.02;
    let pow_ok = a_pow.verdict == SeriesVerdict::Divergent
        && a_pow.profile.last_ratio > 1.10
        && a_pow.profile.last_ratio < 1.20;

    let elapsed = start.elapsed().as_secs_f64();
    let pass = mc_tracks_oracle && saturates && diverges && trace_ok && log_ok && pow_ok
        && elapsed < 60.0;
    let detail = format!(
        "doubling growth alpha=0.3 {:?} vs alpha=0.2 {:?}; block ratios beta=0.25 {:.4}, beta=0.3 {:.4}; {elapsed:.1}s of 60s",
        g_sat.iter().map(|g| format!("{:.1}%", 100.0 * g)).collect::<Vec<_>>(),
        g_div.iter().map(|g| format!("{:.1}%", 100.0 * g)).collect::<Vec<_>>(),
        a_log.profile.last_ratio,
        a_pow.profile.last_ratio,
    );
    verdict(2, "sharp thresholds", pass, &detail);
}

/// With shared boundary increments the path at intensity eps is the unit
/// path scaled by sqrt(eps), coefficient by coefficient, and the stopping
/// indicator at eps equals the unit indicator at the rescaled threshold.
#[test]
fn criterion_3_pathwise_intensity_scaling_is_exact() {
    let start = Instant::now();
    let exp = ExperimentConfig::load(&config_path("standard1d.cfg")).expect("config");
    let check = pathwise_scaling_check(&exp, 1e-2, 100, 0xACCE_0003).expect("scaling check");
    let elapsed = start.elapsed().as_secs_f64();
    let pass = check.paths == 100
        && check.max_rel_coeff_gap < 1e-12
        && check.indicator_mismatches == 0;
    let detail = format!(
        "100 paths, max relative coefficient gap {:.2e}, {} indicator mismatches, {elapsed:.1}s",
        check.max_rel_coeff_gap, check.indicator_mismatches
    );
    verdict(3, "pathwise scaling", pass, &detail);
}

/// The tail constant fitted on the frozen unit-intensity pilot dominates
/// fresh exceedance frequencies at eps = 1e-2 on a 20-point threshold grid
/// with 1000 replicas.
#[test]
fn criterion_4_frozen_tail_constant_holds_out_of_sample() {
    let start = Instant::now();
    let exp = ExperimentConfig::load(&config_path("standard1d.cfg")).expect("config");
    let fit = fit_tail(&exp, true).expect("pilot fit");
    let frozen = exp.c_hat.expect("frozen constant in shipped config");
    let refit_matches = ((fit.c_hat - frozen) / frozen).abs() < 1e-6;
    let report = tail_experiment(&exp, &fit, 1e-2, 1000, true).expect("tail ensemble");
    let elapsed = start.elapsed().as_secs_f64();
    let pass = refit_matches
        && report.rows.len() == 20
        && report.violations == 0
        && elapsed < 300.0;
    let worst = report
        .rows
        .iter()
        .map(|r| r.p_hat / r.bound)
        .fold(0.0f64, f64::max);
    let detail = format!(
        "refit {:.6e} vs frozen {:.6e}, 20 thresholds, {} violations, worst p_hat/bound {:.2}, {elapsed:.1}s of 300s",
        fit.c_hat, frozen, report.violations, worst
    );
    verdict(4, "tail bound", pass, &detail);
}

/// Survival scaling on the hybrid scenario: 16^3 velocity modes, T = 0.5,
/// dt = 1/512, three intensities, 500 replicas each; the observed failure
/// rate stays below the frozen linear-in-eps bound on every row.
#[test]
fn criterion_5_survival_scales_with_intensity() {
    let start = Instant::now();
    let exp = ExperimentConfig::load(&config_path("hybrid.cfg")).expect("config");
    assert_eq!(exp.replicas, 500);
    assert_eq!(exp.velocity_n, 16);
    assert_eq!(exp.eps_list, vec![1e-3, 1e-2, 1e-1]);
    let (table, outcomes) = epsilon_scaling(&exp, None, true).expect("scaling table");
    let elapsed = start.elapsed().as_secs_f64();
    let solver_failures: usize = outcomes.iter().map(|o| o.failures.len()).sum();
    let pass = table.passes()
        && !table.uninformative
        && table.rows.len() == 3
        && solver_failures == 0
        && elapsed < 1800.0;
    let mut detail = String::new();
    for row in &table.rows {
        detail.push_str(&format!(
            "eps={:.0e}: survival {:.3} (ci {:.3}) vs bound {:.3}; ",
            row.eps, row.p_hat, row.ci_lo, row.bound
        ));
    }
    detail.push_str(&format!(
        "{} violations, {} solver failures, {elapsed:.0}s of 1800s",
        table.violations.len(),
        solver_failures
    ));
    verdict(5, "intensity scaling", pass, &detail);
}

fn small_data_scenario() -> (CoupledSolver, BoundaryNoiseSpec, CoupledConfig, SpectralField, SpectralField) {
    let domain = BoxDomain::new(3, 8).expect("cube domain");
    let dt = 1.0 / 128.0;
    let solver = CoupledSolver::new(domain, dt).expect("solver");
    let basis = BoundaryBasis::faces(domain, 3).expect("face basis");
    let noise = BoundaryNoiseSpec::new(basis, AmplitudeLaw::PowerDecay { scale: 1.0, rate: 1.5 }, 1.0)
        .expect("noise spec");
    let config = CoupledConfig {
        eps: 1e-3,
        t_final: 0.25,
        dt,
        eta: 2.32,
        strict_smallness: true,
        coupling: CouplingMode::GlobalPicard,
        ..CoupledConfig::default()
    };

    let mut theta0 = SpectralField::zero_scalar(domain);
    let flat = domain
        .scalar_basis()
        .flat_index(&[1, 1, 1])
        .expect("lowest scalar mode");
    theta0.component_mut(0).coeffs[flat] = 1.0;
    let target = 0.4 * config.data_threshold();
    let norm = theta0
        .norm_w65(config.exponents.s(), solver.plan())
        .expect("data norm");
    theta0.scale(target / norm);

    let mut rng = replica_rng(0xACCE_0006, 0);
    let leray = LerayProjector::new(domain).expect("projector");
    let s_p = 1.5 - config.velocity_delta - 2.0 / config.exponents.p();
    let mut u0 = random_solenoidal_probe(&leray, 3.0, s_p, &mut rng);
    u0.scale(target / u0.norm_h(s_p));
    (solver, noise, config, theta0, u0)
}

/// Contraction certificates on the standard small-data scenario: the
/// velocity map contracts below 0.5 and the remainder map below 0.9,
/// replaying each map once on its fixed point stays within tol, and two
/// different initial guesses land on the same trajectory within 10 tol.
#[test]
fn criterion_6_fixed_point_certificates() {
    let start = Instant::now();
    let (solver, noise, config, theta0, u0) = small_data_scenario();
    let run = |guess: ZetaGuess| -> CoupledRun {
        let config = CoupledConfig { zeta_guess: guess, ..config.clone() };
        solver
            .run(&noise, &config, &theta0, &u0, 0xACCE_0060, 0)
            .expect("coupled run")
    };
    let a = run(ZetaGuess::Zero);
    let b = run(ZetaGuess::HeatFlow);

    let cert = a.report.velocity_cert.expect("velocity certificate");
    let conv = ConvectionOperator::new(solver.domain()).expect("convection");
    let heat = HeatPropagator::new(solver.domain(), config.dt).expect("heat");
    let residual = zeta_residual(
        &conv,
        &heat,
        &a.u,
        &a.z,
        &a.zeta,
        config.exponents.s(),
        solver.plan(),
    )
    .expect("remainder residual");
    let theta_gap = sup_distance(&a.theta, &b.theta);
    let u_gap = sup_distance(&a.u, &b.u);

    let elapsed = start.elapsed().as_secs_f64();
    let pass = a.report.failure.is_none()
        && !a.report.hit
        && cert.contraction < 0.5
        && a.report.zeta_contraction < 0.9
        && cert.within_ball
        && a.report.theta_within_eta
        && residual <= config.tol
        && cert.sweep_distance <= config.tol
        && theta_gap <= 10.0 * config.tol
        && u_gap <= 10.0 * config.tol;
    let detail = format!(
        "velocity factor {:.3e}, remainder factor {:.3e}, residuals {:.2e}/{:.2e} vs tol {:.0e}, guess gaps {:.2e}/{:.2e}, {elapsed:.1}s",
        cert.contraction,
        a.report.zeta_contraction,
        cert.sweep_distance,
        residual,
        config.tol,
        u_gap,
        theta_gap
    );
    verdict(6, "contraction certificates", pass, &detail);
}

fn embed_trajectory(traj: &Trajectory, big: BoxDomain) -> Trajectory {
    let fields = traj
        .fields
        .iter()
        .map(|f| {
            let small = f.domain();
            let mut out = SpectralField::zero_velocity(big);
            for c in 0..small.dim() {
                let src = &f.component(c).coeffs;
                let small_basis = small.velocity_basis(c);
                let big_basis = big.velocity_basis(c);
                small_basis.for_each_mode(|flat, k, _| {
                    let idx = big_basis
                        .flat_index(&k[..small.dim()])
                        .expect("nested truncations");
                    out.component_mut(c).coeffs[idx] = src[flat];
                });
            }
            out
        })
        .collect();
    Trajectory { dt: traj.dt, fields }
}

/// The convective ratio over 100 random trajectory pairs has a finite
/// maximum that moves less than 10% when the same pairs are re-evaluated at
/// doubled resolution (16^3 to 32^3), p = 4, delta = 0.05.
#[test]
fn criterion_7_convective_ratio_is_resolution_stable() {
    let start = Instant::now();
    let (p, delta) = (4.0, 0.05);
    let small = BoxDomain::new(3, 16).expect("cube");
    let big = BoxDomain::new(3, 32).expect("cube");
    let leray_small = LerayProjector::new(small).expect("projector");
    let leray_big = LerayProjector::new(big).expect("projector");
    let conv_small = ConvectionOperator::new(small).expect("convection");
    let conv_big = ConvectionOperator::new(big).expect("convection");

    let mut rng = replica_rng(0xACCE_0007, 0);
    let (steps, dt) = (4, 1.0 / 16.0);
    let reference = 1.5 - delta;
    let mut max_small = 0.0f64;
    let mut max_big = 0.0f64;
    for _ in 0..100 {
        let u = random_smooth_trajectory(&leray_small, 3.0, reference, steps, dt, &mut rng);
        let v = random_smooth_trajectory(&leray_small, 3.0, reference, steps, dt, &mut rng);
        let r_small = convective_probe(&conv_small, &leray_small, &u, &v, p, delta);
        let u_big = embed_trajectory(&u, big);
        let v_big = embed_trajectory(&v, big);
        let r_big = convective_probe(&conv_big, &leray_big, &u_big, &v_big, p, delta);
        max_small = max_small.max(r_small);
        max_big = max_big.max(r_big);
    }
    let drift = (max_big - max_small).abs() / max_small;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = max_small.is_finite() && max_small > 0.0 && drift < 0.10 && elapsed < 600.0;
    let detail = format!(
        "max ratio {max_small:.4} at 16^3 vs {max_big:.4} at 32^3, drift {:.2}%, {elapsed:.0}s of 600s",
        100.0 * drift
    );
    verdict(7, "bilinear ratio stability", pass, &detail);
}

/// Operator identities at tight tolerances plus bit-identical CSV replay
/// under fixed seeds.
#[test]
fn criterion_8_structural_invariants_and_replay() {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();

    // Leray: idempotent, orthogonal and annihilates divergence.
    let domain = BoxDomain::new(3, 12).expect("cube");
    let leray = LerayProjector::new(domain).expect("projector");
    let mut rng = replica_rng(0xACCE_0008, 0);
    let u = random_solenoidal_probe(&leray, 0.5, 1.0, &mut rng);
    let mut raw = SpectralField::zero_velocity(domain);
    for c in 0..3 {
        for coeff in raw.component_mut(c).coeffs.iter_mut() {
            *coeff = 2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0;
        }
    }
    let mut projected = raw.clone();
    leray.project(&mut projected);
    let mut twice = projected.clone();
    leray.project(&mut twice);
    let idempotent = twice.sub(&projected).expect("layout").norm_l2() / projected.norm_l2();
    let residual_part = raw.sub(&projected).expect("layout");
    let inner: f64 = (0..3)
        .map(|c| {
            projected.component(c).coeffs.iter()
                .zip(&residual_part.component(c).coeffs)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    let orthogonal = inner.abs() / (projected.norm_l2() * raw.norm_l2());
    let div_free = leray.divergence_l2(&projected) / projected.norm_l2();
    pass &= idempotent < 1e-10 && orthogonal < 1e-10 && div_free < 1e-10;
    detail.push_str(&format!(
        "leray idem {idempotent:.1e} orth {orthogonal:.1e} div {div_free:.1e}; "
    ));

    // Divergence stays at zero on every slice of a nonlinear solve.
    let ns = NavierStokesSolver::new(domain, 1.0 / 64.0).expect("solver");
    let mut u0 = u.clone();
    u0.scale(1e-2 / u.norm_h(1.0));
    let forcing: Vec<SpectralField> = (0..16)
        .map(|n| {
            let mut f = random_solenoidal_probe(&leray, 2.0, 0.0, &mut rng);
            f.scale(1e-2 * (1.0 + n as f64 / 16.0));
            f
        })
        .collect();
    let traj = ns.run(&u0, &forcing);
    let worst_div = traj
        .fields
        .iter()
        .map(|f| leray.divergence_l2(f) / f.norm_l2().max(1e-300))
        .fold(0.0f64, f64::max);
    pass &= worst_div < 1e-10;
    detail.push_str(&format!("slice div {worst_div:.1e}; "));

    // Semigroup law and fractional-power composition, relative L2.
    let interval = BoxDomain::new(1, 512).expect("interval");
    let mut f = SpectralField::zero_scalar(interval);
    for (j, coeff) in f.component_mut(0).coeffs.iter_mut().enumerate() {
        *coeff = 1.0 / (1.0 + j as f64);
    }
    let ab = f.heat_semigroup(0.13).heat_semigroup(0.07);
    let once = f.heat_semigroup(0.20);
    let semigroup = ab.sub(&once).expect("layout").norm_l2() / once.norm_l2();
    let frac_ab = f
        .fractional_power(0.35)
        .expect("power")
        .fractional_power(-0.6)
        .expect("power");
    let frac_once = f.fractional_power(-0.25).expect("power");
    let composition = frac_ab.sub(&frac_once).expect("layout").norm_l2() / frac_once.norm_l2();
    pass &= semigroup < 1e-12 && composition < 1e-12;
    detail.push_str(&format!("semigroup {semigroup:.1e} frac {composition:.1e}; "));

    // Heat flow only dissipates: L2 norm non-increasing and below the
    // lowest-eigenvalue envelope.
    let norm0 = f.norm_l2();
    let mut prev = norm0;
    let mut decay_ok = true;
    for k in 1..=8 {
        let t = 0.05 * k as f64;
        let n = f.heat_semigroup(t).norm_l2();
        decay_ok &= n <= prev * (1.0 + 1e-12);
        decay_ok &= n <= norm0 * (-t).exp() * (1.0 + 1e-12);
        prev = n;
    }
    pass &= decay_ok;

    // Fixed seeds replay to byte-identical CSVs, serial or parallel.
    let text = "scenario = interval\nreplicas = 12\nbase_seed = 7070707\n\
                noise.modes = 128\nnoise.law = constant\nnoise.eps = 1.0\n\
                z.alpha = 0.3\ncoupled.t_final = 0.25\ncoupled.dt = 0.00390625\n\
                coupled.eta = 16.8\ncoupled.m_tilde = 2\n";
    let map = ConfigMap::parse(text).expect("inline config");
    let exp = ExperimentConfig::from_map(&map).expect("experiment");
    let first = run_ensemble(&exp, 1.0, 0xACCE_0080, None, true).expect("ensemble");
    let second = run_ensemble(&exp, 1.0, 0xACCE_0080, None, true).expect("ensemble");
    let serial = run_ensemble(&exp, 1.0, 0xACCE_0080, None, false).expect("ensemble");
    let replay = render_ensemble_csv(&first.rows);
    let csv_ok = replay == render_ensemble_csv(&second.rows)
        && replay == render_ensemble_csv(&serial.rows);
    let runner = ScenarioRunner::build(&exp, 1.0).expect("runner");
    let t1 = render_trajectory_csv(&runner.run_trajectories(0xACCE_0080, 3).expect("trajectory"));
    let t2 = render_trajectory_csv(&runner.run_trajectories(0xACCE_0080, 3).expect("trajectory"));
    let traj_ok = t1 == t2;
    pass &= csv_ok && traj_ok;
    detail.push_str(&format!("decay {decay_ok}, csv replay {csv_ok}, trajectory replay {traj_ok}; "));

    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 60.0;
    detail.push_str(&format!("{elapsed:.1}s of 60s"));
    verdict(8, "structural invariants", pass, &detail);
}
