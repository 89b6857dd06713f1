//! Intensity-scaling experiments and the constant-freezing workflow.
//!
//! The survival bound has the shape `P(tau = T) >= 1 - C * eps` with
//! `C = (64 m^2 / eta^2) * c_hat * S(beta)`. Nothing here invents `c_hat`
//! on the fly: it is fitted once from a unit-intensity tail pilot (fresh
//! seeds, Wilson upper limits), written into the config, and every later
//! scaling run reads the frozen value. That ordering is what makes the
//! scaling table an out-of-sample check instead of a self-fulfilling fit.

use crate::boundary::admissibility;
use crate::convolution::{exceedance, fit_tail_constant, run_path, tail_bound, ConvolutionState};
use crate::harness::config::{ExperimentConfig, Scenario};
use crate::harness::ensemble::{cube_noise, interval_noise, run_ensemble, EnsembleOutcome};
use crate::series::SeriesVerdict;
use crate::stats::{log_log_slope, wilson95};
use crate::velocity::{estimate_bilinear_constant, estimate_m};
use crate::{Error, Result};
use std::path::Path;

/// Seed salts keeping the pilot, the tail evaluation and the scaling rows
/// on disjoint replica streams.
const PILOT_SALT: u64 = 0x51_07;
const TAIL_EVAL_SALT: u64 = 0xE7_A1;

/// The noise family of the configured scenario at unit intensity.
pub fn unit_noise(exp: &ExperimentConfig) -> Result<crate::boundary::BoundaryNoiseSpec> {
    match exp.scenario {
        Scenario::Interval | Scenario::Hybrid => interval_noise(exp, 1.0),
        Scenario::Coupled3d => cube_noise(exp, 1.0),
    }
}

/// The admissibility trace `S(beta)` of the configured noise at unit
/// intensity. Divergent series are an error here: the bound has no content
/// without a finite trace.
pub fn trace_s_beta(exp: &ExperimentConfig) -> Result<f64> {
    let spec = unit_noise(exp)?;
    let report = admissibility(&spec, exp.scaling_beta);
    match report.total {
        Some(total) if report.verdict == SeriesVerdict::Convergent => Ok(total),
        _ => Err(Error::DivergentSeries),
    }
}

/// The frozen prefactor `C` of the survival bound `1 - C eps`.
pub fn scaling_constant(exp: &ExperimentConfig) -> Result<f64> {
    let c_hat = exp.c_hat.ok_or_else(|| {
        Error::Config(
            "scaling.c_hat is not set; run probe-constants and freeze the fitted value".into(),
        )
    })?;
    let trace = trace_s_beta(exp)?;
    let eta = exp.coupled.eta;
    let m = exp.coupled.m_tilde;
    Ok(64.0 * m * m / (eta * eta) * c_hat * trace)
}

#[derive(Clone, Debug)]
pub struct ScalingRow {
    pub eps: f64,
    pub n: usize,
    /// Early stops, `tau < T`.
    pub hits: usize,
    /// Survival estimate `P(tau = T)` with its Wilson 95% interval.
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `max(0, 1 - C eps)`.
    pub bound: f64,
}

pub const SCALING_HEADER: &str = "eps,n,hits,p_hat,ci_lo,ci_hi,bound";

#[derive(Clone, Debug)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub c_constant: f64,
    pub trace: f64,
    /// Log-log slope of the failure rate over rows with observed failures;
    /// `None` with fewer than two such rows.
    pub slope: Option<f64>,
    /// Every row at zero hits or every row at full hits: the grid says
    /// nothing about where the transition sits.
    pub uninformative: bool,
    pub violations: Vec<String>,
}

impl ScalingTable {
    pub fn render_csv(&self) -> String {
        let mut out = String::from(SCALING_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:e},{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.eps, r.n, r.hits, r.p_hat, r.ci_lo, r.ci_hi, r.bound
            ));
        }
        out
    }

    /// True when every row sits above its bound line (up to the Wilson
    /// half-width the estimate itself carries).
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs one ensemble per intensity and assembles the survival table.
/// Ensemble CSVs land next to `scaling.csv` when `out_dir` is given.
pub fn epsilon_scaling(
    exp: &ExperimentConfig,
    out_dir: Option<&Path>,
    parallel: bool,
) -> Result<(ScalingTable, Vec<EnsembleOutcome>)> {
    let c_constant = scaling_constant(exp)?;
    let trace = trace_s_beta(exp)?;
    let mut rows = Vec::with_capacity(exp.eps_list.len());
    let mut outcomes = Vec::with_capacity(exp.eps_list.len());
    for (idx, &eps) in exp.eps_list.iter().enumerate() {
        let csv_path = out_dir.map(|d| d.join(format!("ensemble_{eps:e}.csv")));
        let outcome = run_ensemble(exp, eps, exp.row_seed(idx), csv_path.as_deref(), parallel)?;
        let hits = outcome.hits();
        let n = outcome.rows.len();
        let survival = wilson95(n - hits, n);
        rows.push(ScalingRow {
            eps,
            n,
            hits,
            p_hat: survival.p_hat,
            ci_lo: survival.lo,
            ci_hi: survival.hi,
            bound: (1.0 - c_constant * eps).max(0.0),
        });
        outcomes.push(outcome);
    }
    let mut violations = Vec::new();
    for r in &rows {
        let half_width = 0.5 * (r.ci_hi - r.ci_lo);
        if r.p_hat < r.bound - half_width {
            violations.push(format!(
                "eps = {:e}: survival {:.4} below bound {:.4} minus half-width {:.4}",
                r.eps, r.p_hat, r.bound, half_width
            ));
        }
    }
    let failure_points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.hits > 0)
        .map(|r| (r.eps, r.hits as f64 / r.n as f64))
        .collect();
    let slope = log_log_slope(&failure_points);
    let uninformative =
        rows.iter().all(|r| r.hits == 0) || rows.iter().all(|r| r.hits == r.n);
    let table = ScalingTable { rows, c_constant, trace, slope, uninformative, violations };
    if let Some(dir) = out_dir {
        crate::harness::ensemble::write_atomic(&dir.join("scaling.csv"), &table.render_csv())?;
    }
    Ok((table, outcomes))
}

/// Unit-intensity pilot: path suprema of `||Z||_{H^{-2 alpha}}` over the
/// configured window, on the pilot seed stream.
pub fn pilot_sups(exp: &ExperimentConfig, replicas: usize, parallel: bool) -> Result<Vec<f64>> {
    let spec = unit_noise(exp)?;
    let alpha = match exp.scenario {
        Scenario::Coupled3d => exp.coupled.exponents.alpha(),
        _ => exp.z_alpha,
    };
    let dt = exp.coupled.dt;
    let steps = exp.coupled.steps();
    ConvolutionState::new(spec.clone(), alpha, dt)?;
    let seed = exp.base_seed ^ PILOT_SALT;
    let compute = |i: usize| {
        let mut rng = crate::par::replica_rng(seed, i as u64);
        run_path(&spec, alpha, dt, steps, &mut rng)
            .expect("spec validated above")
            .sup
    };
    Ok(if parallel {
        crate::par::map_replicas(replicas, compute)
    } else {
        crate::par::map_replicas_serial(replicas, compute)
    })
}

/// Evenly spaced quantiles of the pilot suprema, spanning the informative
/// part of the tail.
pub fn quantile_grid(sups: &[f64], points: usize, q_lo: f64, q_hi: f64) -> Vec<f64> {
    let mut sorted = sups.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite suprema"));
    (0..points)
        .map(|i| {
            let q = q_lo + (q_hi - q_lo) * i as f64 / (points - 1).max(1) as f64;
            let rank = ((sorted.len() as f64 - 1.0) * q).round() as usize;
            sorted[rank]
        })
        .collect()
}

/// Output of the unit-intensity calibration.
#[derive(Clone, Debug)]
pub struct TailFit {
    pub c_hat: f64,
    pub trace: f64,
    pub thresholds: Vec<f64>,
    pub pilot_replicas: usize,
}

/// Fits the tail constant from a fresh unit-intensity pilot: the smallest
/// constant making the Markov-shaped bound dominate every Wilson upper
/// limit on the threshold grid.
pub fn fit_tail(exp: &ExperimentConfig, parallel: bool) -> Result<TailFit> {
    let trace = trace_s_beta(exp)?;
    let sups = pilot_sups(exp, exp.pilot_replicas, parallel)?;
    let thresholds = quantile_grid(&sups, 20, 0.5, 0.99);
    let c_hat = fit_tail_constant(&sups, &thresholds, trace);
    Ok(TailFit { c_hat, trace, thresholds, pilot_replicas: exp.pilot_replicas })
}

#[derive(Clone, Debug)]
pub struct TailRow {
    pub s: f64,
    pub p_hat: f64,
    pub ci_hi: f64,
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct TailReport {
    pub eps: f64,
    pub c_hat: f64,
    pub trace: f64,
    pub rows: Vec<TailRow>,
    pub violations: usize,
}

pub const TAIL_HEADER: &str = "s,p_hat,ci_hi,bound";

impl TailReport {
    pub fn render_csv(&self) -> String {
        let mut out = String::from(TAIL_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.s, r.p_hat, r.ci_hi, r.bound
            ));
        }
        out
    }
}

/// Out-of-sample check of the frozen tail constant: at intensity `eps`,
/// fresh paths, thresholds scaled into the informative range, empirical
/// exceedance against `c_hat * eps * trace / s^2`.
pub fn tail_experiment(
    exp: &ExperimentConfig,
    fit: &TailFit,
    eps: f64,
    replicas: usize,
    parallel: bool,
) -> Result<TailReport> {
    let spec = unit_noise(exp)?.with_eps(eps)?;
    let alpha = match exp.scenario {
        Scenario::Coupled3d => exp.coupled.exponents.alpha(),
        _ => exp.z_alpha,
    };
    let dt = exp.coupled.dt;
    let steps = exp.coupled.steps();
    ConvolutionState::new(spec.clone(), alpha, dt)?;
    let seed = exp.base_seed ^ TAIL_EVAL_SALT;
    let compute = |i: usize| {
        let mut rng = crate::par::replica_rng(seed, i as u64);
        run_path(&spec, alpha, dt, steps, &mut rng)
            .expect("spec validated above")
            .sup
    };
    let sups: Vec<f64> = if parallel {
        crate::par::map_replicas(replicas, compute)
    } else {
        crate::par::map_replicas_serial(replicas, compute)
    };
    let scale = eps.sqrt();
    let mut rows = Vec::with_capacity(fit.thresholds.len());
    let mut violations = 0;
    for &s1 in &fit.thresholds {
        let s = s1 * scale;
        let prop = exceedance(&sups, s);
        let bound = tail_bound(fit.c_hat, fit.trace, eps, s);
        if prop.p_hat > bound {
            violations += 1;
        }
        rows.push(TailRow { s, p_hat: prop.p_hat, ci_hi: prop.hi, bound });
    }
    Ok(TailReport { eps, c_hat: fit.c_hat, trace: fit.trace, rows, violations })
}

/// Exactness of pathwise intensity scaling over an ensemble of paths.
#[derive(Clone, Debug)]
pub struct PathwiseScalingCheck {
    pub paths: usize,
    /// Largest relative gap between the scaled unit path and the directly
    /// simulated path, over all coefficients and grid times.
    pub max_rel_coeff_gap: f64,
    /// Paths where the hit indicator at intensity `eps` disagrees with the
    /// unit-path indicator at the rescaled threshold.
    pub indicator_mismatches: usize,
}

/// Drives two convolutions from identical random streams, one at unit
/// intensity and one at `eps`, and measures how exactly the second is
/// `sqrt(eps)` times the first.
pub fn pathwise_scaling_check(
    exp: &ExperimentConfig,
    eps: f64,
    paths: usize,
    seed: u64,
) -> Result<PathwiseScalingCheck> {
    let spec_unit = unit_noise(exp)?;
    let spec_eps = spec_unit.with_eps(eps)?;
    let alpha = exp.z_alpha;
    let dt = exp.coupled.dt;
    let steps = exp.coupled.steps();
    let threshold = exp.coupled.stop_threshold();
    let root = eps.sqrt();
    let mut max_rel = 0.0f64;
    let mut mismatches = 0;
    for i in 0..paths {
        let mut unit = ConvolutionState::new(spec_unit.clone(), alpha, dt)?;
        let mut scaled = ConvolutionState::new(spec_eps.clone(), alpha, dt)?;
        let mut rng_u = crate::par::replica_rng(seed, i as u64);
        let mut rng_s = crate::par::replica_rng(seed, i as u64);
        for _ in 0..steps {
            unit.step(&mut rng_u);
            scaled.step(&mut rng_s);
            let norm_scale = unit
                .coeffs()
                .iter()
                .fold(0.0f64, |m, &c| m.max(c.abs()))
                .max(1e-300);
            for (a, b) in unit.coeffs().iter().zip(scaled.coeffs()) {
                max_rel = max_rel.max((b - root * a).abs() / (root * norm_scale));
            }
        }
        let hit_eps = scaled.sup_norm() > threshold;
        let hit_unit = unit.sup_norm() > threshold / root;
        if hit_eps != hit_unit {
            mismatches += 1;
        }
    }
    Ok(PathwiseScalingCheck {
        paths,
        max_rel_coeff_gap: max_rel,
        indicator_mismatches: mismatches,
    })
}

/// Everything the calibration pass measures, ready to be copied into a
/// config file and frozen.
#[derive(Clone, Debug)]
pub struct ConstantsReport {
    pub tail: TailFit,
    /// Pilot supremum quantiles (median to 99%), the basis for choosing a
    /// ball radius with the intended survival mass.
    pub sup_quantiles: Vec<(f64, f64)>,
    /// Data-to-solution stability estimate of the velocity solver.
    pub m_hat: Option<f64>,
    /// Empirical bilinear constant of the convection form.
    pub bilinear: Option<f64>,
    /// `(beta, convergent, trace)` over the configured list.
    pub admissibility: Vec<(f64, bool, Option<f64>)>,
}

impl ConstantsReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# fitted on {} unit-intensity paths; copy the keys you freeze\n",
            self.tail.pilot_replicas
        ));
        out.push_str(&format!("scaling.c_hat = {:.6e}\n", self.tail.c_hat));
        out.push_str(&format!("# trace S(beta) = {:.6e}\n", self.tail.trace));
        for (q, v) in &self.sup_quantiles {
            out.push_str(&format!("# sup ||Z^1|| quantile {q:.2} = {v:.6e}\n"));
        }
        if let Some(m) = self.m_hat {
            out.push_str(&format!("# velocity stability estimate M = {m:.6e}\n"));
            out.push_str(&format!("coupled.m_tilde = {:.6e}\n", m.max(2.0)));
        }
        if let Some(b) = self.bilinear {
            out.push_str(&format!("# bilinear constant estimate = {b:.6e}\n"));
        }
        for (beta, convergent, total) in &self.admissibility {
            match (convergent, total) {
                (true, Some(t)) => {
                    out.push_str(&format!("# admissibility beta = {beta}: trace {t:.6e}\n"))
                }
                _ => out.push_str(&format!("# admissibility beta = {beta}: divergent\n")),
            }
        }
        out
    }
}

/// The calibration pass behind `probe-constants`. `probe_solver` switches
/// on the velocity-side estimates, which dominate the runtime.
pub fn probe_constants(
    exp: &ExperimentConfig,
    probe_solver: bool,
    parallel: bool,
) -> Result<ConstantsReport> {
    let tail = fit_tail(exp, parallel)?;
    let sups = pilot_sups(exp, exp.pilot_replicas, parallel)?;
    let sup_quantiles: Vec<(f64, f64)> = [0.5, 0.75, 0.9, 0.95, 0.99]
        .iter()
        .map(|&q| (q, quantile_grid(&sups, 1, q, q)[0]))
        .collect();
    let (m_hat, bilinear) = if probe_solver {
        let domain = crate::spectral::BoxDomain::new(3, exp.velocity_n)?;
        let p = exp.coupled.exponents.p();
        let delta = exp.coupled.velocity_delta;
        let m = estimate_m(domain, 16, exp.coupled.dt, p, delta, 12, exp.base_seed ^ 0x4D)?;
        let b = estimate_bilinear_constant(domain, delta, 6, exp.base_seed ^ 0xB1)?;
        (Some(m), Some(b))
    } else {
        (None, None)
    };
    let spec = unit_noise(exp)?;
    let admissibility_rows = exp
        .beta_list
        .iter()
        .map(|&beta| {
            let report = admissibility(&spec, beta);
            (
                beta,
                report.verdict == SeriesVerdict::Convergent,
                report.total,
            )
        })
        .collect();
    Ok(ConstantsReport {
        tail,
        sup_quantiles,
        m_hat,
        bilinear,
        admissibility: admissibility_rows,
    })
}
