//! Closed-form references on the interval.
//!
//! With endpoint noise on `(0, pi)` everything is explicit: the lifted atom
//! has sine coefficients `sqrt(2/pi)/j` up to sign, each interior mode of
//! the convolution is an Ornstein-Uhlenbeck process with rate `j^2`, and
//!
//! `E ||Z_t||^2_{H^{-2 alpha}} = (eps * L / pi) * sum_j j^{-4 alpha} (1 - e^{-2 j^2 t})`
//!
//! where `L` is the summed squared amplitude over the active atoms. The
//! simulator's exact-variance stepping reproduces these second moments at
//! grid times to machine precision per mode, so a Monte Carlo run over the
//! same truncation must agree up to sampling error alone; any systematic
//! gap is a bug. Functions here evaluate the series both at a matched
//! truncation (for those comparisons) and as the ideal limit with an
//! Euler-Maclaurin tail (to report how much the truncation forfeits).

use crate::boundary::{AmplitudeLaw, BoundaryBasis, BoundaryNoiseSpec};
use crate::convolution::ConvolutionState;
use crate::series::{self, SeriesVerdict};
use crate::spectral::BoxDomain;
use crate::stats::mean_var;
use crate::{Error, Result};
use std::io::Write;

fn mode_term(j: f64, t: f64, alpha: f64) -> f64 {
    j.powf(-4.0 * alpha) * (1.0 - (-2.0 * j * j * t).exp())
}

/// The closed-form second moment summed over the first `n_modes` interior
/// modes, matching a simulator truncated at the same place.
pub fn z_second_moment_truncated(
    t: f64,
    alpha: f64,
    eps: f64,
    lambda_sq_sum: f64,
    n_modes: usize,
) -> f64 {
    let mut sum = 0.0;
    for j in 1..=n_modes {
        sum += mode_term(j as f64, t, alpha);
    }
    eps * lambda_sq_sum / std::f64::consts::PI * sum
}

/// The ideal (infinite-truncation) second moment. The series is scanned
/// dyadically; at or below `alpha = 1/4` it diverges and the sentinel fires
/// instead of any number being returned. Requires `t` large enough that the
/// exponential factor has saturated well inside the scan range, so the
/// block-ratio classification sees the true power-law tail.
pub fn z_second_moment(t: f64, alpha: f64, eps: f64, lambda_sq_sum: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Config(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let max_terms = series::DEFAULT_TERMS;
    let horizon = 2.0 * t * (max_terms as f64).powi(2);
    assert!(
        horizon > 50.0,
        "time {t} too small for the scan range: the damping factor must saturate"
    );
    let eval = series::evaluate(|j| mode_term(j as f64, t, alpha), max_terms);
    if eval.verdict == SeriesVerdict::Divergent {
        return Err(Error::DivergentSeries);
    }
    // Beyond the scan the damping factor is indistinguishable from one, so
    // the remaining tail is the bare power tail.
    let tail = series::power_tail(4.0 * alpha, max_terms);
    Ok(eps * lambda_sq_sum / std::f64::consts::PI * (eval.partial + tail))
}

/// Closed-form `E ||xi_t - xi_r||_{L2}^2` for grid times `r <= t`, summed
/// over the first `n_modes` modes. Per mode the convolution is a stationary
/// -variance OU bridge: with `v(t) = (1 - e^{-2 j^2 t})` the increment
/// carries `v(t) + v(r) - 2 e^{-j^2 (t - r)} v(r)`.
pub fn increment_second_moment_truncated(
    t: f64,
    r: f64,
    alpha: f64,
    eps: f64,
    lambda_sq_sum: f64,
    n_modes: usize,
) -> f64 {
    assert!(r <= t);
    let mut sum = 0.0;
    for j in 1..=n_modes {
        let x = j as f64;
        let musq = x * x;
        let vt = 1.0 - (-2.0 * musq * t).exp();
        let vr = 1.0 - (-2.0 * musq * r).exp();
        let cross = (-musq * (t - r)).exp();
        sum += x.powf(-4.0 * alpha) * (vt + vr - 2.0 * cross * vr);
    }
    eps * lambda_sq_sum / std::f64::consts::PI * sum
}

/// One validation checkpoint: ensemble mean against the two oracle values.
#[derive(Clone, Debug)]
pub struct ValidationRow {
    pub t: f64,
    pub simulated: f64,
    pub std_error: f64,
    pub truncated_oracle: f64,
    /// Infinite-truncation reference; `NaN` below the summability
    /// threshold, where only the truncated comparison is meaningful.
    pub ideal_oracle: f64,
}

/// Outcome of an ensemble-vs-oracle comparison.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub replicas: usize,
    /// Largest relative deviation from the truncated oracle.
    pub max_rel_dev: f64,
    /// Largest deviation in ensemble standard errors.
    pub max_sigma_dev: f64,
}

impl ValidationReport {
    /// Every checkpoint within `rel_tol` plus `sigmas` standard errors.
    pub fn passes(&self, rel_tol: f64, sigmas: f64) -> bool {
        self.rows.iter().all(|row| {
            (row.simulated - row.truncated_oracle).abs()
                <= rel_tol * row.truncated_oracle + sigmas * row.std_error
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,simulated,std_error,truncated_oracle,ideal_oracle")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                row.t, row.simulated, row.std_error, row.truncated_oracle, row.ideal_oracle
            )?;
        }
        Ok(())
    }
}

/// Unit-amplitude endpoint noise on the interval at truncation `n_modes`.
pub fn standard_interval_spec(n_modes: usize, eps: f64) -> Result<BoundaryNoiseSpec> {
    let domain = BoxDomain::new(1, n_modes)?;
    let basis = BoundaryBasis::endpoints(domain)?;
    BoundaryNoiseSpec::new(basis, AmplitudeLaw::Constant { scale: 1.0 }, eps)
}

/// Runs an ensemble of interval convolutions and compares
/// `E ||Z_t||^2_{H^{-2 alpha}}` against the closed form at each checkpoint.
/// Both endpoint atoms are active at unit amplitude, so the closed-form
/// amplitude factor is two.
pub fn validate_convolution(
    n_modes: usize,
    alpha: f64,
    eps: f64,
    dt: f64,
    checkpoint_steps: &[usize],
    replicas: usize,
    base_seed: u64,
) -> Result<ValidationReport> {
    let spec = standard_interval_spec(n_modes, eps)?;
    let max_step = *checkpoint_steps.iter().max().expect("need checkpoints");
    assert!(checkpoint_steps.windows(2).all(|w| w[0] < w[1]));
    ConvolutionState::new(spec.clone(), alpha, dt)?;
    let per_replica: Vec<Vec<f64>> = crate::par::map_replicas(replicas, |i| {
        let mut rng = crate::par::replica_rng(base_seed, i as u64);
        let mut state = ConvolutionState::new(spec.clone(), alpha, dt).expect("validated above");
        let mut out = Vec::with_capacity(checkpoint_steps.len());
        let mut next = 0;
        for step in 1..=max_step {
            state.step(&mut rng);
            if next < checkpoint_steps.len() && checkpoint_steps[next] == step {
                let norm = state.norm_z();
                out.push(norm * norm);
                next += 1;
            }
        }
        out
    });
    let lambda_sq_sum = 2.0;
    let mut rows = Vec::with_capacity(checkpoint_steps.len());
    let mut max_rel = 0.0f64;
    let mut max_sig = 0.0f64;
    for (c, &step) in checkpoint_steps.iter().enumerate() {
        let samples: Vec<f64> = per_replica.iter().map(|r| r[c]).collect();
        let (mean, var) = mean_var(&samples);
        let se = (var / samples.len() as f64).sqrt();
        let t = step as f64 * dt;
        let truncated = z_second_moment_truncated(t, alpha, eps, lambda_sq_sum, n_modes);
        let ideal = z_second_moment(t, alpha, eps, lambda_sq_sum).unwrap_or(f64::NAN);
        let rel = (mean - truncated).abs() / truncated;
        let sig = if se > 0.0 {
            (mean - truncated).abs() / se
        } else {
            0.0
        };
        max_rel = max_rel.max(rel);
        max_sig = max_sig.max(sig);
        rows.push(ValidationRow {
            t,
            simulated: mean,
            std_error: se,
            truncated_oracle: truncated,
            ideal_oracle: ideal,
        });
    }
    Ok(ValidationReport {
        rows,
        replicas,
        max_rel_dev: max_rel,
        max_sigma_dev: max_sig,
    })
}
