//! The coupled temperature-velocity system on a stopped window. One run:
//! sample the boundary-noise convolution `Z`, stop the clock the first
//! time its `H^{-2 alpha}` norm leaves the small ball, and solve the
//! coupled fixed point for `(u, zeta)` on the surviving window with the
//! buoyancy force `-theta e3`, `theta = Z + zeta`.
//!
//! Both coupling modes compute the same discrete trajectory. Every term is
//! evaluated at step left endpoints, so the joint fixed point satisfies a
//! pair of coupled forward recursions; `PerStep` runs those recursions in
//! one sweep, while `GlobalPicard` alternates full-window solves until the
//! temperature remainder stabilizes and collects contraction evidence
//! along the way. Agreement between the modes is itself a consistency
//! check, exercised in the tests.

use crate::boundary::BoundaryNoiseSpec;
use crate::convolution::ConvolutionState;
use crate::exponents::ExponentPack;
use crate::spectral::field::SpectralField;
use crate::spectral::transform::Plan;
use crate::spectral::{BoxDomain, TensorBasis};
use crate::temperature::{assemble_theta, picard_solve_zeta, sup_h, HeatPropagator, PicardConfig};
use crate::velocity::{NavierStokesSolver, SmallDataCertificate, Trajectory};
use crate::{Error, Result};

/// How the two equations exchange information.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingMode {
    /// Alternate full-window solves of the velocity and remainder
    /// equations until the remainder stops moving.
    GlobalPicard,
    /// March both equations together, one step at a time.
    PerStep,
}

/// Initial guess for the remainder iteration in `GlobalPicard` mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZetaGuess {
    Zero,
    /// Pure heat flow of the initial temperature.
    HeatFlow,
}

/// Scenario parameters for one coupled run.
#[derive(Clone, Debug)]
pub struct CoupledConfig {
    pub eps: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Ball radius certified for both solution components.
    pub eta: f64,
    /// Stability constant stand-in, at least 2.
    pub m_tilde: f64,
    pub exponents: ExponentPack,
    /// Regularity offset for the velocity norms (independent of the
    /// temperature exponent bundle).
    pub velocity_delta: f64,
    /// Reject data violating the smallness hypothesis instead of warning.
    pub strict_smallness: bool,
    pub coupling: CouplingMode,
    pub zeta_guess: ZetaGuess,
    pub max_outer_iter: usize,
    /// Outer convergence target for the sup `W^{s,6/5}` gap between
    /// successive remainder trajectories; inner solves run tighter.
    pub tol: f64,
}

impl CoupledConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be finite and >= 0, got {}", self.eps)));
        }
        if !(self.dt > 0.0 && self.t_final >= self.dt) {
            return Err(Error::Config(format!(
                "need 0 < dt <= T, got dt = {}, T = {}",
                self.dt, self.t_final
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.m_tilde >= 2.0) {
            return Err(Error::Config(format!(
                "stability constant must be at least 2, got {}",
                self.m_tilde
            )));
        }
        if self.max_outer_iter == 0 {
            return Err(Error::Config("need at least one outer iteration".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Stopping threshold for the convolution norm.
    pub fn stop_threshold(&self) -> f64 {
        self.eta / (8.0 * self.m_tilde)
    }

    /// Smallness threshold for the initial data.
    pub fn data_threshold(&self) -> f64 {
        self.eta / (16.0 * self.m_tilde)
    }
}

impl Default for CoupledConfig {
    fn default() -> Self {
        CoupledConfig {
            eps: 1e-2,
            t_final: 0.25,
            dt: 1.0 / 128.0,
            eta: 0.5,
            m_tilde: 2.0,
            exponents: ExponentPack::default(),
            velocity_delta: 0.05,
            strict_smallness: false,
            coupling: CouplingMode::GlobalPicard,
            zeta_guess: ZetaGuess::Zero,
            max_outer_iter: 25,
            tol: 1e-8,
        }
    }
}

/// Galerkin projection of the buoyancy force `-theta e3` onto the velocity
/// family. The scalar carries sine expansions in the horizontal axes while
/// the vertical velocity component carries cosines there, so this is a
/// genuine change of basis, evaluated exactly on the padded grid.
pub struct BuoyancyOperator {
    domain: BoxDomain,
    plan: Plan,
    vertical_basis: TensorBasis,
}

impl BuoyancyOperator {
    pub fn new(domain: BoxDomain) -> Result<Self> {
        if domain.dim() != 3 {
            return Err(Error::BadDimension(domain.dim()));
        }
        Ok(BuoyancyOperator {
            domain,
            plan: Plan::dealiased(domain),
            vertical_basis: domain.velocity_basis(2),
        })
    }

    pub fn apply(&self, theta: &SpectralField) -> SpectralField {
        let grid = self
            .plan
            .eval(&theta.component(0).basis, &theta.component(0).coeffs);
        let mut coeffs = self.plan.project(&self.vertical_basis, &grid);
        for c in coeffs.iter_mut() {
            *c = -*c;
        }
        let mut out = SpectralField::zero_velocity(self.domain);
        out.component_mut(2).coeffs = coeffs;
        out
    }
}

/// First grid index whose norm exceeds the threshold.
pub fn stopping_index(norms: &[f64], threshold: f64) -> Option<usize> {
    norms.iter().position(|&n| n > threshold)
}

/// Stopping time on a sampled norm path: the first grid time where the
/// norm exceeds the threshold, or the final time when it never does.
/// Returns `(tau, hit)`.
pub fn stopping_time(norms: &[f64], dt: f64, threshold: f64) -> (f64, bool) {
    match stopping_index(norms, threshold) {
        Some(idx) => (idx as f64 * dt, true),
        None => ((norms.len() - 1) as f64 * dt, false),
    }
}

/// Both sides of the initial-data smallness hypothesis, with margins.
#[derive(Clone, Copy, Debug)]
pub struct SmallDataCheck {
    pub theta_norm: f64,
    pub u_norm: f64,
    pub threshold: f64,
    pub ok: bool,
    /// `threshold - norm`; nonnegative iff the corresponding datum passes.
    pub theta_margin: f64,
    pub u_margin: f64,
}

pub fn check_small_data(
    theta0: &SpectralField,
    u0: &SpectralField,
    config: &CoupledConfig,
    plan: &Plan,
) -> Result<SmallDataCheck> {
    let s = config.exponents.s();
    let p = config.exponents.p();
    let s_p = 1.5 - config.velocity_delta - 2.0 / p;
    let theta_norm = theta0.norm_w65(s, plan)?;
    let u_norm = u0.norm_h(s_p);
    let threshold = config.data_threshold();
    Ok(SmallDataCheck {
        theta_norm,
        u_norm,
        threshold,
        ok: theta_norm.max(u_norm) <= threshold,
        theta_margin: threshold - theta_norm,
        u_margin: threshold - u_norm,
    })
}

/// Result record of one coupled run. Norm fields are NaN when `failure`
/// is set; nothing is silently dropped.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub replica_id: u64,
    pub seed: u64,
    pub tau: f64,
    pub hit: bool,
    pub norm_u_e: f64,
    pub norm_theta_c: f64,
    pub outer_iters: usize,
    pub velocity_cert: Option<SmallDataCertificate>,
    pub zeta_contraction: f64,
    pub u_within_eta: bool,
    pub theta_within_eta: bool,
    pub warnings: Vec<String>,
    pub failure: Option<String>,
}

/// Trajectories and report from one run; ensembles keep only the report.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub report: RunReport,
    pub z: Trajectory,
    pub zeta: Trajectory,
    pub theta: Trajectory,
    pub u: Trajectory,
}

/// Reusable solver machinery for a fixed domain and step size.
pub struct CoupledSolver {
    domain: BoxDomain,
    dt: f64,
    ns: NavierStokesSolver,
    heat: HeatPropagator,
    buoyancy: BuoyancyOperator,
    plan: Plan,
}

impl CoupledSolver {
    pub fn new(domain: BoxDomain, dt: f64) -> Result<Self> {
        Ok(CoupledSolver {
            domain,
            dt,
            ns: NavierStokesSolver::new(domain, dt)?,
            heat: HeatPropagator::new(domain, dt)?,
            buoyancy: BuoyancyOperator::new(domain)?,
            plan: Plan::dealiased(domain),
        })
    }

    pub fn domain(&self) -> BoxDomain {
        self.domain
    }

    pub fn navier_stokes(&self) -> &NavierStokesSolver {
        &self.ns
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    /// Samples the convolution path on the full window and returns the
    /// per-node fields and norms.
    fn sample_z(
        &self,
        noise: &BoundaryNoiseSpec,
        config: &CoupledConfig,
        seed: u64,
        replica_id: u64,
    ) -> Result<(Trajectory, Vec<f64>)> {
        let spec = noise.with_eps(config.eps)?;
        let mut state = ConvolutionState::new(spec, config.exponents.alpha(), self.dt)?;
        let mut rng = crate::par::replica_rng(seed, replica_id);
        let steps = config.steps();
        let mut fields = Vec::with_capacity(steps + 1);
        let mut norms = Vec::with_capacity(steps + 1);
        fields.push(state.z_field());
        norms.push(state.norm_z());
        for _ in 0..steps {
            state.step(&mut rng);
            fields.push(state.z_field());
            norms.push(state.norm_z());
        }
        Ok((Trajectory { dt: self.dt, fields }, norms))
    }

    /// One full coupled run. Deterministic in `(noise, config, theta0, u0,
    /// seed, replica_id)`.
    pub fn run(
        &self,
        noise: &BoundaryNoiseSpec,
        config: &CoupledConfig,
        theta0: &SpectralField,
        u0: &SpectralField,
        seed: u64,
        replica_id: u64,
    ) -> Result<CoupledRun> {
        config.validate()?;
        let stream_seed = crate::par::replica_seed(seed, replica_id);
        let mut warnings = Vec::new();
        let small = check_small_data(theta0, u0, config, &self.plan)?;
        if !small.ok {
            if config.strict_smallness {
                return Err(Error::Smallness(format!(
                    "initial data norm {:.3e} exceeds {:.3e}",
                    small.theta_norm.max(small.u_norm),
                    small.threshold
                )));
            }
            warnings.push(format!(
                "initial data norm {:.3e} exceeds smallness threshold {:.3e}",
                small.theta_norm.max(small.u_norm),
                small.threshold
            ));
        }
        let (z_full, norms) = self.sample_z(noise, config, seed, replica_id)?;
        let threshold = config.stop_threshold();
        let (tau, hit) = stopping_time(&norms, self.dt, threshold);
        // The solve window ends at the last node still inside the ball.
        let window = if hit {
            (tau / self.dt).round() as usize - 1
        } else {
            config.steps()
        };
        let z = Trajectory {
            dt: self.dt,
            fields: z_full.fields[..=window].to_vec(),
        };
        if window < 2 {
            warnings.push("stopped window too short for trajectory norms".into());
            let zeta = Trajectory {
                dt: self.dt,
                fields: vec![theta0.clone(); window + 1],
            };
            let theta = assemble_theta(&zeta, &z)?;
            let u = Trajectory {
                dt: self.dt,
                fields: vec![SpectralField::zero_velocity(self.domain); window + 1],
            };
            let report = RunReport {
                replica_id,
                seed: stream_seed,
                tau,
                hit,
                norm_u_e: f64::NAN,
                norm_theta_c: sup_h(&theta, -2.0 * config.exponents.alpha()),
                outer_iters: 0,
                velocity_cert: None,
                zeta_contraction: 0.0,
                u_within_eta: false,
                theta_within_eta: false,
                warnings,
                failure: Some("window too short to solve".into()),
            };
            return Ok(CoupledRun { report, z, zeta, theta, u });
        }
        let solved = match config.coupling {
            CouplingMode::GlobalPicard => self.solve_global(config, theta0, u0, &z, &mut warnings),
            CouplingMode::PerStep => self.solve_per_step(theta0, u0, &z),
        };
        match solved {
            Ok((u, zeta, outer_iters, velocity_cert, zeta_contraction)) => {
                let theta = assemble_theta(&zeta, &z)?;
                let p = config.exponents.p();
                let norm_u_e = u.e_norm(p, config.velocity_delta);
                let norm_theta_c = sup_h(&theta, -2.0 * config.exponents.alpha());
                let report = RunReport {
                    replica_id,
                    seed: stream_seed,
                    tau,
                    hit,
                    norm_u_e,
                    norm_theta_c,
                    outer_iters,
                    velocity_cert,
                    zeta_contraction,
                    u_within_eta: norm_u_e <= config.eta,
                    theta_within_eta: norm_theta_c <= config.eta,
                    warnings,
                    failure: None,
                };
                Ok(CoupledRun { report, z, zeta, theta, u })
            }
            Err(err @ (Error::BlowUp { .. } | Error::NoContraction { .. })) => {
                let zeta = Trajectory {
                    dt: self.dt,
                    fields: vec![theta0.clone(); window + 1],
                };
                let theta = assemble_theta(&zeta, &z)?;
                let u = Trajectory {
                    dt: self.dt,
                    fields: vec![SpectralField::zero_velocity(self.domain); window + 1],
                };
                let report = RunReport {
                    replica_id,
                    seed: stream_seed,
                    tau,
                    hit,
                    norm_u_e: f64::NAN,
                    norm_theta_c: f64::NAN,
                    outer_iters: 0,
                    velocity_cert: None,
                    zeta_contraction: f64::NAN,
                    u_within_eta: false,
                    theta_within_eta: false,
                    warnings,
                    failure: Some(err.to_string()),
                };
                Ok(CoupledRun { report, z, zeta, theta, u })
            }
            Err(other) => Err(other),
        }
    }

    #[allow(clippy::type_complexity)]
    fn solve_global(
        &self,
        config: &CoupledConfig,
        theta0: &SpectralField,
        u0: &SpectralField,
        z: &Trajectory,
        warnings: &mut Vec<String>,
    ) -> Result<(Trajectory, Trajectory, usize, Option<SmallDataCertificate>, f64)> {
        let steps = z.fields.len() - 1;
        let s = config.exponents.s();
        let p = config.exponents.p();
        let zeta_config = PicardConfig {
            exponents: config.exponents.clone(),
            tol: config.tol / 10.0,
            ..PicardConfig::default()
        };
        let mut zeta_prev = match config.zeta_guess {
            ZetaGuess::Zero => Trajectory {
                dt: self.dt,
                fields: vec![SpectralField::zero_scalar(self.domain); steps + 1],
            },
            ZetaGuess::HeatFlow => Trajectory {
                dt: self.dt,
                fields: (0..=steps)
                    .map(|n| theta0.heat_semigroup(n as f64 * self.dt))
                    .collect(),
            },
        };
        for outer in 0..config.max_outer_iter {
            let theta = assemble_theta(&zeta_prev, z)?;
            let forcing: Vec<SpectralField> = theta.fields[..steps]
                .iter()
                .map(|t| self.buoyancy.apply(t))
                .collect();
            let (u, vcert) = self.ns.solve_smalldata(
                u0,
                &forcing,
                config.eta,
                config.m_tilde,
                p,
                config.velocity_delta,
                config.tol / 10.0,
                60,
                false,
            )?;
            if !vcert.smallness_ok && outer == 0 {
                warnings.push(format!(
                    "buoyancy forcing norm {:.3e} exceeds the velocity smallness threshold",
                    vcert.data_norm
                ));
            }
            let (zeta, zdiag) =
                picard_solve_zeta(self.ns.convection(), &self.heat, &u, z, theta0, &zeta_config, &self.plan)?;
            let mut gap = 0.0f64;
            for (a, b) in zeta.fields.iter().zip(&zeta_prev.fields) {
                gap = gap.max(a.sub(b)?.norm_w65(s, &self.plan)?);
            }
            if gap <= config.tol {
                return Ok((u, zeta, outer + 1, Some(vcert), zdiag.max_factor));
            }
            zeta_prev = zeta;
        }
        Err(Error::NoContraction {
            factor: f64::NAN,
            iters: config.max_outer_iter,
            t0: 0.0,
            t1: steps as f64 * self.dt,
        })
    }

    #[allow(clippy::type_complexity)]
    fn solve_per_step(
        &self,
        theta0: &SpectralField,
        u0: &SpectralField,
        z: &Trajectory,
    ) -> Result<(Trajectory, Trajectory, usize, Option<SmallDataCertificate>, f64)> {
        let steps = z.fields.len() - 1;
        let conv = self.ns.convection();
        let mut v = u0.clone();
        self.ns.propagator().leray().project(&mut v);
        let mut zeta = theta0.clone();
        let mut u_fields = Vec::with_capacity(steps + 1);
        let mut zeta_fields = Vec::with_capacity(steps + 1);
        u_fields.push(v.clone());
        zeta_fields.push(zeta.clone());
        for n in 0..steps {
            let mut theta_n = zeta.clone();
            theta_n.axpy(1.0, &z.fields[n])?;
            let f_buoy = self.buoyancy.apply(&theta_n);
            let mut transport = conv.advect_scalar(&v, &theta_n);
            transport.scale(-1.0);
            self.ns.step(&mut v, &f_buoy);
            self.heat.step(&mut zeta, &transport);
            let guard = v.max_abs_coeff().max(zeta.max_abs_coeff());
            if !guard.is_finite() || guard > 1e50 {
                return Err(Error::BlowUp {
                    norm: guard,
                    t: (n + 1) as f64 * self.dt,
                });
            }
            u_fields.push(v.clone());
            zeta_fields.push(zeta.clone());
        }
        Ok((
            Trajectory { dt: self.dt, fields: u_fields },
            Trajectory { dt: self.dt, fields: zeta_fields },
            1,
            None,
            f64::NAN,
        ))
    }
}
