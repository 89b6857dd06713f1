//! Temperature remainder dynamics. The full temperature splits as
//! `theta = Z + zeta`: the stochastic convolution `Z` absorbs the boundary
//! forcing, and the remainder `zeta` solves a clean transport-diffusion
//! equation with homogeneous boundary values,
//!
//! `d zeta/dt = Laplacian zeta - u . grad zeta - u . grad Z,  zeta(0) = theta0.`
//!
//! Everything here treats the velocity and `Z` trajectories as given data.
//! The mild formulation turns the equation into an affine fixed point in
//! `zeta`; because the transport forcing is evaluated at step left
//! endpoints, that fixed point coincides with the forward one-sweep
//! recursion, which is what the ensemble paths run. The iterated solver
//! exists to measure the contraction that makes the fixed point
//! trustworthy, on subintervals short enough to contract.

use crate::exponents::ExponentPack;
use crate::spectral::field::SpectralField;
use crate::spectral::transform::Plan;
use crate::spectral::{BoxDomain, TensorBasis};
use crate::velocity::{ConvectionOperator, Trajectory};
use crate::{Error, Result};
use rand::Rng;

/// Diagonal exponential-Euler propagator for the Dirichlet heat semigroup
/// on the all-sine scalar family.
#[derive(Clone, Debug)]
pub struct HeatPropagator {
    domain: BoxDomain,
    basis: TensorBasis,
    dt: f64,
    decay: Vec<f64>,
    phi: Vec<f64>,
}

impl HeatPropagator {
    pub fn new(domain: BoxDomain, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        let basis = domain.scalar_basis();
        let mut decay = vec![0.0; basis.len()];
        let mut phi = vec![0.0; basis.len()];
        basis.for_each_mode(|flat, _, mu| {
            decay[flat] = (-mu * dt).exp();
            phi[flat] = (1.0 - decay[flat]) / mu;
        });
        Ok(HeatPropagator {
            domain,
            basis,
            dt,
            decay,
            phi,
        })
    }

    pub fn domain(&self) -> BoxDomain {
        self.domain
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    /// One step `g <- e^{dt Laplacian} g + phi(Laplacian) f`.
    pub fn step(&self, g: &mut SpectralField, forcing: &SpectralField) {
        let gc = &mut g.component_mut(0).coeffs;
        let fc = &forcing.component(0).coeffs;
        for ((x, d), (p, f)) in gc
            .iter_mut()
            .zip(&self.decay)
            .zip(self.phi.iter().zip(fc))
        {
            *x = d * *x + p * f;
        }
    }

    /// Pure semigroup step (zero forcing).
    pub fn decay_step(&self, g: &mut SpectralField) {
        for (x, d) in g.component_mut(0).coeffs.iter_mut().zip(&self.decay) {
            *x *= d;
        }
    }
}

/// Controls for the remainder fixed point.
#[derive(Clone, Debug)]
pub struct PicardConfig {
    pub exponents: ExponentPack,
    /// Absolute convergence target for the sup-in-time `W^{s,6/5}`
    /// residual. The iteration drives updates to `tol / 20` internally so
    /// the independently re-evaluated residual clears `tol` even at the
    /// largest accepted contraction factor.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial subinterval length in time units; halved until the measured
    /// contraction factor drops below 0.9. Clamped to the window.
    pub t1: f64,
    pub dealias: bool,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            exponents: ExponentPack::default(),
            tol: 1e-9,
            max_iter: 60,
            t1: f64::INFINITY,
            dealias: true,
        }
    }
}

/// Outcome of one accepted subinterval.
#[derive(Clone, Copy, Debug)]
pub struct SubintervalReport {
    pub start_node: usize,
    pub steps: usize,
    pub iterations: usize,
    /// Largest successive-update ratio observed above the convergence
    /// floor; 0 when the iteration converged in one pass.
    pub factor: f64,
    pub residual: f64,
    /// Largest ratio `||L d|| / ||d||` over random perturbation directions,
    /// where `L` is the linear part of the fixed-point map.
    pub lipschitz: f64,
}

/// Solve-level diagnostics for the remainder equation.
#[derive(Clone, Debug)]
pub struct ZetaDiagnostics {
    pub subintervals: Vec<SubintervalReport>,
    pub max_factor: f64,
    pub max_lipschitz: f64,
    /// `||Psi(zeta) - zeta||` recomputed over the whole window after the
    /// solve, in the sup-in-time `W^{s,6/5}` surrogate.
    pub global_residual: f64,
}

fn check_scalar_grids(u: &Trajectory, z: &Trajectory) -> Result<()> {
    if u.fields.len() != z.fields.len() || (u.dt - z.dt).abs() > 1e-15 * u.dt.abs() {
        return Err(Error::Config(format!(
            "trajectory grids disagree: {} nodes at dt {} vs {} nodes at dt {}",
            u.fields.len(),
            u.dt,
            z.fields.len(),
            z.dt
        )));
    }
    Ok(())
}

/// Sup over grid times of the `W^{s,6/5}` surrogate norm.
pub fn sup_w65(traj: &Trajectory, s: f64, plan: &Plan) -> Result<f64> {
    let mut best = 0.0f64;
    for f in &traj.fields {
        best = best.max(f.norm_w65(s, plan)?);
    }
    Ok(best)
}

/// Sup over grid times of the `H^s` norm.
pub fn sup_h(traj: &Trajectory, s: f64) -> f64 {
    traj.fields.iter().map(|f| f.norm_h(s)).fold(0.0, f64::max)
}

/// The transported-noise convolution `t -> int_0^t e^{(t-r) Laplacian}
/// (u_r . grad Z_r) dr` on the common grid of `u` and `z`, by exponential
/// quadrature with left-endpoint forcing.
pub fn compute_chi(
    conv: &ConvectionOperator,
    heat: &HeatPropagator,
    u: &Trajectory,
    z: &Trajectory,
) -> Result<Trajectory> {
    check_scalar_grids(u, z)?;
    let steps = u.fields.len() - 1;
    let mut chi = SpectralField::zero_scalar(heat.domain());
    let mut fields = Vec::with_capacity(steps + 1);
    fields.push(chi.clone());
    for n in 0..steps {
        let forcing = conv.advect_scalar(&u.fields[n], &z.fields[n]);
        heat.step(&mut chi, &forcing);
        fields.push(chi.clone());
    }
    Ok(Trajectory { dt: u.dt, fields })
}

/// Forward sweep for the remainder equation: the production path for
/// ensemble runs, one transport evaluation per step.
pub fn zeta_forward(
    conv: &ConvectionOperator,
    heat: &HeatPropagator,
    u: &Trajectory,
    z: &Trajectory,
    theta0: &SpectralField,
) -> Result<Trajectory> {
    check_scalar_grids(u, z)?;
    let steps = u.fields.len() - 1;
    let mut zeta = theta0.clone();
    let mut fields = Vec::with_capacity(steps + 1);
    fields.push(zeta.clone());
    for n in 0..steps {
        let mut advected = z.fields[n].clone();
        advected.axpy(1.0, &fields[n])?;
        let mut forcing = conv.advect_scalar(&u.fields[n], &advected);
        forcing.scale(-1.0);
        heat.step(&mut zeta, &forcing);
        if !zeta.max_abs_coeff().is_finite() {
            return Err(Error::BlowUp {
                norm: f64::INFINITY,
                t: (n + 1) as f64 * u.dt,
            });
        }
        fields.push(zeta.clone());
    }
    Ok(Trajectory { dt: u.dt, fields })
}

/// One application of the global affine map: propagate `theta0` forward
/// with transport forcing frozen at `zeta`'s own nodes. The distance to
/// `zeta` itself is the honest post-hoc residual.
pub fn zeta_residual(
    conv: &ConvectionOperator,
    heat: &HeatPropagator,
    u: &Trajectory,
    z: &Trajectory,
    zeta: &Trajectory,
    s: f64,
    plan: &Plan,
) -> Result<f64> {
    check_scalar_grids(u, z)?;
    let steps = u.fields.len() - 1;
    let mut state = zeta.fields[0].clone();
    let mut worst = 0.0f64;
    for n in 0..steps {
        let mut advected = z.fields[n].clone();
        advected.axpy(1.0, &zeta.fields[n])?;
        let mut forcing = conv.advect_scalar(&u.fields[n], &advected);
        forcing.scale(-1.0);
        heat.step(&mut state, &forcing);
        let gap = state.sub(&zeta.fields[n + 1])?.norm_w65(s, plan)?;
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Random scalar trajectory for probes: two decaying random fields blended
/// by a random frequency, mirroring the velocity probe construction.
pub fn random_scalar_trajectory<R: Rng + ?Sized>(
    domain: BoxDomain,
    decay: f64,
    steps: usize,
    dt: f64,
    rng: &mut R,
) -> Trajectory {
    use rand_distr::StandardNormal;
    let basis = domain.scalar_basis();
    let draw = |rng: &mut R| {
        let mut f = SpectralField::zero_scalar(domain);
        let coeffs = &mut f.component_mut(0).coeffs;
        basis.for_each_mode(|flat, _, mu| {
            let g: f64 = rng.sample(StandardNormal);
            coeffs[flat] = g * mu.powf(-decay / 2.0);
        });
        f
    };
    let a = draw(rng);
    let b = draw(rng);
    let omega: f64 = 1.0 + 3.0 * rng.random::<f64>();
    let fields = (0..=steps)
        .map(|n| {
            let t = n as f64 * dt;
            let mut f = a.clone();
            f.scale((omega * t).cos());
            f.axpy((omega * t).sin(), &b).expect("same layout");
            f
        })
        .collect();
    Trajectory { dt, fields }
}

/// Largest response ratio of the fixed-point map's linear part over
/// `n_probes` random directions on the subinterval starting at
/// `start_node` with `steps` steps. Deterministic: directions come from a
/// seed derived from the window position.
fn lipschitz_probe(
    conv: &ConvectionOperator,
    heat: &HeatPropagator,
    u: &Trajectory,
    start_node: usize,
    steps: usize,
    s: f64,
    plan: &Plan,
    n_probes: usize,
) -> Result<f64> {
    let mut rng = crate::par::replica_rng(0x5EED_0F1E, start_node as u64);
    let mut worst = 0.0f64;
    for _ in 0..n_probes {
        let dir = random_scalar_trajectory(heat.domain(), 2.0, steps, u.dt, &mut rng);
        let mut dir_norm = 0.0f64;
        for f in &dir.fields {
            dir_norm = dir_norm.max(f.norm_w65(s, plan)?);
        }
        if dir_norm == 0.0 {
            continue;
        }
        // L d: zero initial value, forcing -u . grad d at left nodes.
        let mut state = SpectralField::zero_scalar(heat.domain());
        let mut out_norm = 0.0f64;
        for n in 0..steps {
            let mut forcing = conv.advect_scalar(&u.fields[start_node + n], &dir.fields[n]);
            forcing.scale(-1.0);
            heat.step(&mut state, &forcing);
            out_norm = out_norm.max(state.norm_w65(s, plan)?);
        }
        worst = worst.max(out_norm / dir_norm);
    }
    Ok(worst)
}

/// Iterated fixed-point solve for the remainder, with adaptive subinterval
/// chaining. Returns the trajectory over the whole window together with
/// per-subinterval contraction evidence and an independently re-evaluated
/// global residual.
pub fn picard_solve_zeta(
    conv: &ConvectionOperator,
    heat: &HeatPropagator,
    u: &Trajectory,
    z: &Trajectory,
    theta0: &SpectralField,
    config: &PicardConfig,
    plan: &Plan,
) -> Result<(Trajectory, ZetaDiagnostics)> {
    check_scalar_grids(u, z)?;
    let total_steps = u.fields.len() - 1;
    let s = config.exponents.s();
    let inner_tol = config.tol / 20.0;
    let mut sub_len = if config.t1.is_finite() {
        ((config.t1 / u.dt).round() as usize).clamp(1, total_steps)
    } else {
        total_steps
    };
    let mut fields: Vec<SpectralField> = Vec::with_capacity(total_steps + 1);
    fields.push(theta0.clone());
    let mut subintervals = Vec::new();
    let mut start = 0usize;
    while start < total_steps {
        let len = sub_len.min(total_steps - start);
        match solve_subinterval(
            conv, heat, u, z, &fields[start], start, len, s, plan, inner_tol, config.max_iter,
        )? {
            SubOutcome::Accepted { tail, iterations, factor, residual } => {
                let lipschitz =
                    lipschitz_probe(conv, heat, u, start, len, s, plan, 5)?;
                subintervals.push(SubintervalReport {
                    start_node: start,
                    steps: len,
                    iterations,
                    factor,
                    residual,
                    lipschitz,
                });
                fields.extend(tail);
                start += len;
            }
            SubOutcome::TooLong { factor, iterations } => {
                if len == 1 {
                    return Err(Error::NoContraction {
                        factor,
                        iters: iterations,
                        t0: start as f64 * u.dt,
                        t1: (start + len) as f64 * u.dt,
                    });
                }
                sub_len = (len / 2).max(1);
            }
        }
    }
    let zeta = Trajectory { dt: u.dt, fields };
    let global_residual = zeta_residual(conv, heat, u, z, &zeta, s, plan)?;
    let max_factor = subintervals.iter().map(|r| r.factor).fold(0.0, f64::max);
    let max_lipschitz = subintervals.iter().map(|r| r.lipschitz).fold(0.0, f64::max);
    Ok((
        zeta,
        ZetaDiagnostics {
            subintervals,
            max_factor,
            max_lipschitz,
            global_residual,
        },
    ))
}

enum SubOutcome {
    Accepted {
        /// Converged states at nodes `start+1..=start+len`.
        tail: Vec<SpectralField>,
        iterations: usize,
        factor: f64,
        residual: f64,
    },
    TooLong {
        factor: f64,
        iterations: usize,
    },
}

#[allow(clippy::too_many_arguments)]
fn solve_subinterval(
    conv: &ConvectionOperator,
    heat: &HeatPropagator,
    u: &Trajectory,
    z: &Trajectory,
    init: &SpectralField,
    start: usize,
    len: usize,
    s: f64,
    plan: &Plan,
    inner_tol: f64,
    max_iter: usize,
) -> Result<SubOutcome> {
    // Affine part as the initial guess: transport forcing from Z alone.
    let mut current: Vec<SpectralField> = Vec::with_capacity(len + 1);
    current.push(init.clone());
    {
        let mut state = init.clone();
        for n in 0..len {
            let mut forcing = conv.advect_scalar(&u.fields[start + n], &z.fields[start + n]);
            forcing.scale(-1.0);
            heat.step(&mut state, &forcing);
            current.push(state.clone());
        }
    }
    let mut factor = 0.0f64;
    let mut prev_update: Option<f64> = None;
    let mut residual = f64::INFINITY;
    for m in 0..max_iter {
        let mut next: Vec<SpectralField> = Vec::with_capacity(len + 1);
        next.push(init.clone());
        let mut state = init.clone();
        for n in 0..len {
            let mut advected = z.fields[start + n].clone();
            advected.axpy(1.0, &current[n])?;
            let mut forcing = conv.advect_scalar(&u.fields[start + n], &advected);
            forcing.scale(-1.0);
            heat.step(&mut state, &forcing);
            if !state.max_abs_coeff().is_finite() {
                return Err(Error::BlowUp {
                    norm: f64::INFINITY,
                    t: (start + n + 1) as f64 * u.dt,
                });
            }
            next.push(state.clone());
        }
        let mut update = 0.0f64;
        for (a, b) in next.iter().zip(&current) {
            update = update.max(a.sub(b)?.norm_w65(s, plan)?);
        }
        if let Some(prev) = prev_update {
            if prev > inner_tol {
                factor = factor.max(update / prev);
            }
        }
        prev_update = Some(update);
        residual = update;
        current = next;
        if update <= inner_tol {
            if factor >= 0.9 {
                return Ok(SubOutcome::TooLong { factor, iterations: m + 1 });
            }
            current.remove(0);
            return Ok(SubOutcome::Accepted {
                tail: current,
                iterations: m + 1,
                factor,
                residual,
            });
        }
    }
    let _ = residual;
    Ok(SubOutcome::TooLong { factor, iterations: max_iter })
}

/// `theta = zeta + Z`, nodewise.
pub fn assemble_theta(zeta: &Trajectory, z: &Trajectory) -> Result<Trajectory> {
    check_scalar_grids(zeta, z)?;
    let fields = zeta
        .fields
        .iter()
        .zip(&z.fields)
        .map(|(a, b)| {
            let mut t = a.clone();
            t.axpy(1.0, b)?;
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { dt: zeta.dt, fields })
}

/// `L^{p/(lambda+delta)}` norm in time of the `H^{1/2+lambda}` spatial
/// norm, the compound regularity through which the velocity enters every
/// transport estimate here.
pub fn interpolation_norm_u(u: &Trajectory, lambda: f64, delta: f64, p: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0 - delta) {
        return Err(Error::BadExponents(format!(
            "lambda must sit in (0, 1 - delta) = (0, {}), got {lambda}",
            1.0 - delta
        )));
    }
    let q = p / (lambda + delta);
    let n = u.fields.len();
    let mut acc = 0.0;
    for (i, f) in u.fields.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * u.dt;
        acc += w * f.norm_h(0.5 + lambda).powf(q);
    }
    Ok(acc.powf(1.0 / q))
}

/// Two sides of the spectral interpolation inequality
/// `||f||_{H^{3/2-d'}} <= ||f||_{H^{1/2-d}}^{d'-d} ||f||_{H^{3/2-d}}^{1-(d'-d)}`
/// for `d <= d' <= 1 + d`. Equality on single modes, strict otherwise.
pub fn interpolation_sides(f: &SpectralField, delta: f64, delta_prime: f64) -> (f64, f64) {
    let theta = delta_prime - delta;
    let lhs = f.norm_h(1.5 - delta_prime);
    let rhs = f.norm_h(0.5 - delta).powf(theta) * f.norm_h(1.5 - delta).powf(1.0 - theta);
    (lhs, rhs)
}

/// Per-node CSV of the assembled temperature solve, one row per grid time:
/// `t, norm_zeta_Ws65, norm_theta_Hm2a, picard_iters, contraction_factor`.
/// Subinterval diagnostics repeat on every row they cover.
pub fn write_zeta_csv<W: std::io::Write>(
    out: &mut W,
    zeta: &Trajectory,
    theta: &Trajectory,
    diagnostics: &ZetaDiagnostics,
    s: f64,
    alpha: f64,
    plan: &Plan,
) -> Result<()> {
    writeln!(out, "t,norm_zeta_Ws65,norm_theta_Hm2a,picard_iters,contraction_factor")?;
    let mut sub_iter = diagnostics.subintervals.iter();
    let mut active = sub_iter.next();
    for (n, (zf, tf)) in zeta.fields.iter().zip(&theta.fields).enumerate() {
        while let Some(sub) = active {
            if n > sub.start_node + sub.steps {
                active = sub_iter.next();
            } else {
                break;
            }
        }
        let (iters, factor) = active.map_or((0, 0.0), |sub| (sub.iterations, sub.factor));
        writeln!(
            out,
            "{:.10e},{:.10e},{:.10e},{},{:.6e}",
            n as f64 * zeta.dt,
            zf.norm_w65(s, plan)?,
            tf.norm_h(-2.0 * alpha),
            iters,
            factor
        )?;
    }
    Ok(())
}
