//! Replica ensembles: scenario runners, report rows, atomic CSV output
//! and resumption by replica index.
//!
//! Every replica is a pure function of `(config, row seed, replica index)`,
//! so an interrupted ensemble can be topped up later: existing rows are
//! kept, missing indices are recomputed, and the merged file is identical
//! to what an uninterrupted run would have written. Files go to a
//! temporary sibling first and are renamed into place, so a crash never
//! leaves a half-written CSV behind.

use crate::boundary::{BoundaryBasis, BoundaryNoiseSpec};
use crate::convolution::{run_path, ConvolutionState};
use crate::coupled::{
    stopping_time, BuoyancyOperator, CoupledConfig, CoupledRun, CoupledSolver, RunReport,
};
use crate::harness::config::{ExperimentConfig, Scenario};
use crate::spectral::field::SpectralField;
use crate::spectral::BoxDomain;
use crate::velocity::{NavierStokesSolver, Trajectory};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One line of `ensemble.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleRow {
    pub replica: u64,
    pub seed: u64,
    pub tau: f64,
    pub hit: bool,
    pub norm_u_e: f64,
    pub norm_theta_c: f64,
    pub outer_iters: usize,
}

pub const ENSEMBLE_HEADER: &str = "replica,seed,tau,hit,norm_u_E,norm_theta_C,outer_iters";

impl EnsembleRow {
    pub fn from_report(report: &RunReport) -> Self {
        EnsembleRow {
            replica: report.replica_id,
            seed: report.seed,
            tau: report.tau,
            hit: report.hit,
            norm_u_e: report.norm_u_e,
            norm_theta_c: report.norm_theta_c,
            outer_iters: report.outer_iters,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.12e},{},{:.12e},{:.12e},{}",
            self.replica,
            self.seed,
            self.tau,
            u8::from(self.hit),
            self.norm_u_e,
            self.norm_theta_c,
            self.outer_iters
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Config(format!("bad ensemble row `{line}`")));
        }
        let bad = |what: &str| Error::Config(format!("bad {what} in ensemble row `{line}`"));
        Ok(EnsembleRow {
            replica: fields[0].parse().map_err(|_| bad("replica"))?,
            seed: fields[1].parse().map_err(|_| bad("seed"))?,
            tau: fields[2].parse().map_err(|_| bad("tau"))?,
            hit: match fields[3] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("hit")),
            },
            norm_u_e: fields[4].parse().map_err(|_| bad("norm_u_E"))?,
            norm_theta_c: fields[5].parse().map_err(|_| bad("norm_theta_C"))?,
            outer_iters: fields[6].parse().map_err(|_| bad("outer_iters"))?,
        })
    }
}

/// Creates parent directories, writes to a temporary sibling and renames.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn render_ensemble_csv(rows: &[EnsembleRow]) -> String {
    let mut out = String::from(ENSEMBLE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

pub fn parse_ensemble_csv(text: &str) -> Result<Vec<EnsembleRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == ENSEMBLE_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "bad ensemble header: expected `{ENSEMBLE_HEADER}`, got `{}`",
                other.unwrap_or("")
            )))
        }
    }
    lines.map(EnsembleRow::parse).collect()
}

/// The interval lift used everywhere the noise lives on `(0, pi)`: both
/// endpoints shake according to the configured amplitude law.
pub fn interval_noise(exp: &ExperimentConfig, eps: f64) -> Result<BoundaryNoiseSpec> {
    let domain = BoxDomain::new(1, exp.noise_modes)?;
    let basis = BoundaryBasis::endpoints(domain)?;
    BoundaryNoiseSpec::new(basis, exp.law, eps)
}

/// Face noise on the cube at the velocity truncation.
pub fn cube_noise(exp: &ExperimentConfig, eps: f64) -> Result<BoundaryNoiseSpec> {
    let domain = BoxDomain::new(3, exp.velocity_n)?;
    let k_max = exp.noise_modes.min(exp.velocity_n);
    let basis = BoundaryBasis::faces(domain, k_max)?;
    BoundaryNoiseSpec::new(basis, exp.law, eps)
}

/// Per-scenario machinery built once per ensemble and shared (immutably)
/// by all replicas.
pub enum ScenarioRunner {
    Interval {
        noise: BoundaryNoiseSpec,
        alpha: f64,
        dt: f64,
        steps: usize,
        threshold: f64,
        eta: f64,
    },
    Coupled3d {
        solver: CoupledSolver,
        noise: BoundaryNoiseSpec,
        config: CoupledConfig,
        theta0: SpectralField,
        u0: SpectralField,
    },
    Hybrid(HybridRunner),
}

impl ScenarioRunner {
    pub fn build(exp: &ExperimentConfig, eps: f64) -> Result<Self> {
        match exp.scenario {
            Scenario::Interval => Ok(ScenarioRunner::Interval {
                noise: interval_noise(exp, eps)?,
                alpha: exp.z_alpha,
                dt: exp.coupled.dt,
                steps: exp.coupled.steps(),
                threshold: exp.coupled.stop_threshold(),
                eta: exp.coupled.eta,
            }),
            Scenario::Coupled3d => {
                let domain = BoxDomain::new(3, exp.velocity_n)?;
                let mut config = exp.coupled.clone();
                config.eps = eps;
                Ok(ScenarioRunner::Coupled3d {
                    solver: CoupledSolver::new(domain, config.dt)?,
                    noise: cube_noise(exp, 1.0)?,
                    config,
                    theta0: SpectralField::zero_scalar(domain),
                    u0: SpectralField::zero_velocity(domain),
                })
            }
            Scenario::Hybrid => Ok(ScenarioRunner::Hybrid(HybridRunner::build(exp, eps)?)),
        }
    }

    pub fn run(&self, row_seed: u64, replica: u64) -> Result<RunReport> {
        match self {
            ScenarioRunner::Interval { noise, alpha, dt, steps, threshold, eta } => {
                let mut rng = crate::par::replica_rng(row_seed, replica);
                let path = run_path(noise, *alpha, *dt, *steps, &mut rng)?;
                let (tau, hit) = stopping_time(&path.norms, *dt, *threshold);
                let window = if hit {
                    (tau / dt).round() as usize - 1
                } else {
                    *steps
                };
                let norm_theta_c = path.norms[..=window].iter().copied().fold(0.0, f64::max);
                Ok(RunReport {
                    replica_id: replica,
                    seed: crate::par::replica_seed(row_seed, replica),
                    tau,
                    hit,
                    norm_u_e: 0.0,
                    norm_theta_c,
                    outer_iters: 0,
                    velocity_cert: None,
                    zeta_contraction: 0.0,
                    u_within_eta: true,
                    theta_within_eta: norm_theta_c <= *eta,
                    warnings: Vec::new(),
                    failure: None,
                })
            }
            ScenarioRunner::Coupled3d { solver, noise, config, theta0, u0 } => solver
                .run(noise, config, theta0, u0, row_seed, replica)
                .map(|run| run.report),
            ScenarioRunner::Hybrid(h) => h.run(row_seed, replica),
        }
    }

    /// Full trajectories for single-run inspection. Interval and hybrid
    /// scenarios have no remainder, so those columns read zero.
    pub fn run_trajectories(&self, row_seed: u64, replica: u64) -> Result<Vec<TrajectoryRow>> {
        match self {
            ScenarioRunner::Interval { noise, alpha, dt, steps, .. } => {
                let mut rng = crate::par::replica_rng(row_seed, replica);
                let path = run_path(noise, *alpha, *dt, *steps, &mut rng)?;
                Ok(path
                    .norms
                    .iter()
                    .enumerate()
                    .map(|(n, &z)| TrajectoryRow {
                        step: n,
                        t: n as f64 * dt,
                        norm_z: z,
                        norm_u: 0.0,
                        norm_zeta: 0.0,
                        norm_theta: z,
                    })
                    .collect())
            }
            ScenarioRunner::Coupled3d { solver, noise, config, theta0, u0 } => {
                let run = solver.run(noise, config, theta0, u0, row_seed, replica)?;
                trajectory_rows_coupled(&run, config, solver)
            }
            ScenarioRunner::Hybrid(h) => h.run_trajectories(row_seed, replica),
        }
    }
}

/// Per-step norm summary of a single run (`trajectory.csv`).
#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub step: usize,
    pub t: f64,
    pub norm_z: f64,
    pub norm_u: f64,
    pub norm_zeta: f64,
    pub norm_theta: f64,
}

pub const TRAJECTORY_HEADER: &str = "step,t,norm_z,norm_u,norm_zeta,norm_theta";

pub fn render_trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.step, r.t, r.norm_z, r.norm_u, r.norm_zeta, r.norm_theta
        ));
    }
    out
}

fn trajectory_rows_coupled(
    run: &CoupledRun,
    config: &CoupledConfig,
    solver: &CoupledSolver,
) -> Result<Vec<TrajectoryRow>> {
    let alpha = config.exponents.alpha();
    let s = config.exponents.s();
    let p = config.exponents.p();
    let s_p = 1.5 - config.velocity_delta - 2.0 / p;
    let mut rows = Vec::with_capacity(run.z.fields.len());
    for n in 0..run.z.fields.len() {
        rows.push(TrajectoryRow {
            step: n,
            t: n as f64 * config.dt,
            norm_z: run.z.fields[n].norm_h(-2.0 * alpha),
            norm_u: run.u.fields[n].norm_h(s_p),
            norm_zeta: run.zeta.fields[n].norm_w65(s, solver.plan())?,
            norm_theta: run.theta.fields[n].norm_h(-2.0 * alpha),
        });
    }
    Ok(rows)
}

/// Interval temperature path lifted into the cube as a buoyancy force for
/// a full velocity solve. The stopping statistics come from the interval
/// path alone; the solve certifies that surviving windows really admit a
/// small velocity solution.
pub struct HybridRunner {
    noise: BoundaryNoiseSpec,
    alpha: f64,
    dt: f64,
    steps: usize,
    threshold: f64,
    domain: BoxDomain,
    ns: NavierStokesSolver,
    buoyancy: BuoyancyOperator,
    /// Flat scalar-basis indices of the modes `(1, 1, j)` receiving the
    /// interval coefficients.
    lift: Vec<usize>,
    p: f64,
    velocity_delta: f64,
    eta: f64,
}

impl HybridRunner {
    pub fn build(exp: &ExperimentConfig, eps: f64) -> Result<Self> {
        let domain = BoxDomain::new(3, exp.velocity_n)?;
        let basis = domain.scalar_basis();
        let lift: Vec<usize> = (1..=exp.velocity_n.min(exp.noise_modes))
            .map(|j| basis.flat_index(&[1, 1, j]).expect("mode inside truncation"))
            .collect();
        Ok(HybridRunner {
            noise: interval_noise(exp, eps)?,
            alpha: exp.z_alpha,
            dt: exp.coupled.dt,
            steps: exp.coupled.steps(),
            threshold: exp.coupled.stop_threshold(),
            domain,
            ns: NavierStokesSolver::new(domain, exp.coupled.dt)?,
            buoyancy: BuoyancyOperator::new(domain)?,
            lift,
            p: exp.coupled.exponents.p(),
            velocity_delta: exp.coupled.velocity_delta,
            eta: exp.coupled.eta,
        })
    }

    /// A sine profile on the interval embeds into the cube multiplied by
    /// the lowest sine in each horizontal axis; the unit-normalized bases
    /// make that a fixed factor of `pi / 2` per coefficient.
    fn lift_theta(&self, z_coeffs: &[f64]) -> SpectralField {
        let mut theta = SpectralField::zero_scalar(self.domain);
        for (j, &idx) in self.lift.iter().enumerate() {
            theta.component_mut(0).coeffs[idx] =
                std::f64::consts::FRAC_PI_2 * z_coeffs[j];
        }
        theta
    }

    fn sample(&self, row_seed: u64, replica: u64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut rng = crate::par::replica_rng(row_seed, replica);
        let mut state = ConvolutionState::new(self.noise.clone(), self.alpha, self.dt)?;
        let mut norms = Vec::with_capacity(self.steps + 1);
        let mut lifts = Vec::with_capacity(self.steps + 1);
        norms.push(state.norm_z());
        lifts.push(state.coeffs()[..self.lift.len()].to_vec());
        for _ in 0..self.steps {
            state.step(&mut rng);
            norms.push(state.norm_z());
            lifts.push(state.coeffs()[..self.lift.len()].to_vec());
        }
        Ok((norms, lifts))
    }

    fn sweep_velocity(&self, lifts: &[Vec<f64>], window: usize) -> Result<Trajectory> {
        let mut v = SpectralField::zero_velocity(self.domain);
        let mut fields = Vec::with_capacity(window + 1);
        fields.push(v.clone());
        for lift in lifts.iter().take(window) {
            let theta = self.lift_theta(lift);
            let forcing = self.buoyancy.apply(&theta);
            self.ns.step(&mut v, &forcing);
            let guard = v.max_abs_coeff();
            if !guard.is_finite() || guard > 1e50 {
                return Err(Error::BlowUp {
                    norm: guard,
                    t: fields.len() as f64 * self.dt,
                });
            }
            fields.push(v.clone());
        }
        Ok(Trajectory { dt: self.dt, fields })
    }

    pub fn run(&self, row_seed: u64, replica: u64) -> Result<RunReport> {
        let (norms, lifts) = self.sample(row_seed, replica)?;
        let (tau, hit) = stopping_time(&norms, self.dt, self.threshold);
        let window = if hit {
            (tau / self.dt).round() as usize - 1
        } else {
            self.steps
        };
        let norm_theta_c = norms[..=window].iter().copied().fold(0.0, f64::max);
        let seed = crate::par::replica_seed(row_seed, replica);
        let mut warnings = Vec::new();
        let (norm_u_e, failure) = if window < 2 {
            warnings.push("stopped window too short for trajectory norms".into());
            (f64::NAN, Some("window too short to solve".into()))
        } else {
            match self.sweep_velocity(&lifts, window) {
                Ok(u) => (u.e_norm(self.p, self.velocity_delta), None),
                Err(err @ Error::BlowUp { .. }) => (f64::NAN, Some(err.to_string())),
                Err(other) => return Err(other),
            }
        };
        Ok(RunReport {
            replica_id: replica,
            seed,
            tau,
            hit,
            norm_u_e,
            norm_theta_c,
            outer_iters: 1,
            velocity_cert: None,
            zeta_contraction: 0.0,
            u_within_eta: norm_u_e <= self.eta,
            theta_within_eta: norm_theta_c <= self.eta,
            warnings,
            failure,
        })
    }

    pub fn run_trajectories(&self, row_seed: u64, replica: u64) -> Result<Vec<TrajectoryRow>> {
        let (norms, lifts) = self.sample(row_seed, replica)?;
        let (tau, hit) = stopping_time(&norms, self.dt, self.threshold);
        let window = if hit {
            (tau / self.dt).round() as usize - 1
        } else {
            self.steps
        };
        let s_p = 1.5 - self.velocity_delta - 2.0 / self.p;
        let u = self.sweep_velocity(&lifts, window)?;
        Ok((0..=window)
            .map(|n| TrajectoryRow {
                step: n,
                t: n as f64 * self.dt,
                norm_z: norms[n],
                norm_u: u.fields[n].norm_h(s_p),
                norm_zeta: 0.0,
                norm_theta: norms[n],
            })
            .collect())
    }
}

/// Rows plus whatever went wrong per replica.
#[derive(Clone, Debug)]
pub struct EnsembleOutcome {
    pub rows: Vec<EnsembleRow>,
    /// `(replica, what happened)` for rows whose solve failed; the rows
    /// themselves stay in the table with NaN norms.
    pub failures: Vec<(u64, String)>,
}

impl EnsembleOutcome {
    pub fn hits(&self) -> usize {
        self.rows.iter().filter(|r| r.hit).count()
    }
}

/// Runs (or resumes) one ensemble at a fixed intensity. When `out_csv`
/// exists its rows are kept and only missing replica indices are computed;
/// the merged table is what a fresh run would produce.
pub fn run_ensemble(
    exp: &ExperimentConfig,
    eps: f64,
    row_seed: u64,
    out_csv: Option<&Path>,
    parallel: bool,
) -> Result<EnsembleOutcome> {
    let runner = ScenarioRunner::build(exp, eps)?;
    let mut have: BTreeMap<u64, EnsembleRow> = BTreeMap::new();
    if let Some(path) = out_csv {
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            for row in parse_ensemble_csv(&text)? {
                if (row.replica as usize) < exp.replicas {
                    have.insert(row.replica, row);
                }
            }
        }
    }
    let missing: Vec<u64> = (0..exp.replicas as u64)
        .filter(|r| !have.contains_key(r))
        .collect();
    let compute = |i: usize| runner.run(row_seed, missing[i]);
    let fresh: Vec<Result<RunReport>> = if parallel {
        crate::par::map_replicas(missing.len(), compute)
    } else {
        crate::par::map_replicas_serial(missing.len(), compute)
    };
    let mut failures = Vec::new();
    for report in fresh {
        let report = report?;
        if let Some(reason) = &report.failure {
            failures.push((report.replica_id, reason.clone()));
        }
        for w in &report.warnings {
            eprintln!("replica {}: {}", report.replica_id, w);
        }
        have.insert(report.replica_id, EnsembleRow::from_report(&report));
    }
    let rows: Vec<EnsembleRow> = have.into_values().collect();
    if let Some(path) = out_csv {
        write_atomic(path, &render_ensemble_csv(&rows))?;
    }
    Ok(EnsembleOutcome { rows, failures })
}
