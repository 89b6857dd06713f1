//! Boundary mode systems, their harmonic lift into the interior, and the
//! admissibility analysis that decides which noise amplitudes are usable.
//!
//! A boundary datum is expanded in an orthonormal system on the boundary:
//! the two endpoint atoms in one dimension, products of normalized sines on
//! each of the six faces in three. The lift of a boundary mode is the
//! harmonic function matching it on the boundary and vanishing on the rest;
//! its interior sine coefficients follow from the normal-derivative pairing
//! `d_{j,e} = -mu_j^{-1} <e, dphi_j/dn>` and are supported on a single line
//! of wavevectors, which keeps the lift sparse.
//!
//! Noise enters through amplitudes `lambda_k` on the boundary modes. The
//! quantity that must be finite is the weighted trace
//! `S(beta) = sum_k lambda_k^2 ||Delta^beta D e_k||_{L2}^2`; each mode
//! contributes an interior series `(2/pi) sum_j j^2 (rho^2 + j^2)^{2beta-2}`
//! with `rho^2` the squared tangential frequency, convergent exactly when
//! `beta < 1/4`. Divergence is detected structurally from dyadic block
//! growth, never by comparing a partial sum against a threshold.

use crate::series::{self, SeriesEval, SeriesVerdict};
use crate::spectral::{BoxDomain, TensorBasis};
use crate::spectral::field::{strides, SpectralField};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// One face of the cube `(0, pi)^3`: the plane `x_axis = 0` or `x_axis = pi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

/// A single element of the boundary orthonormal system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Endpoint atom of the interval; `upper` selects `x = pi`.
    Endpoint { upper: bool },
    /// `sqrt(2/pi) sin(m s) * sqrt(2/pi) sin(n t)` on a face, where `(s, t)`
    /// are the tangential coordinates in increasing axis order.
    FaceMode { face: Face, m: usize, n: usize },
}

/// Sparse interior representation of one lifted boundary mode: sine
/// coefficients along a line of wavevectors, at `first + j * stride` for the
/// normal wavenumber `j + 1`.
#[derive(Clone, Debug)]
struct LiftLine {
    first: usize,
    stride: usize,
    coeffs: Vec<f64>,
}

/// Enumerated boundary modes for a domain, with their interior lifts
/// precomputed against the domain's scalar truncation.
#[derive(Clone, Debug)]
pub struct BoundaryBasis {
    domain: BoxDomain,
    modes: Vec<BoundaryMode>,
    lifts: Vec<LiftLine>,
    /// Squared tangential frequency of each mode (0 for endpoint atoms).
    rho_sq: Vec<f64>,
}

impl BoundaryBasis {
    /// Both endpoint atoms of the interval.
    pub fn endpoints(domain: BoxDomain) -> Result<Self> {
        if domain.dim() != 1 {
            return Err(Error::BadDimension(domain.dim()));
        }
        let modes = vec![
            BoundaryMode::Endpoint { upper: false },
            BoundaryMode::Endpoint { upper: true },
        ];
        Ok(Self::build(domain, modes))
    }

    /// All six faces, tangential wavenumbers `1..=k_max` each, ordered face
    /// by face and within a face by increasing `m^2 + n^2`.
    pub fn faces(domain: BoxDomain, k_max: usize) -> Result<Self> {
        if domain.dim() != 3 {
            return Err(Error::BadDimension(domain.dim()));
        }
        if k_max == 0 || k_max > domain.n() {
            return Err(Error::BadTruncation(k_max));
        }
        let mut modes = Vec::with_capacity(6 * k_max * k_max);
        for axis in 0..3 {
            for upper in [false, true] {
                let face = Face { axis, upper };
                let mut on_face = Vec::with_capacity(k_max * k_max);
                for m in 1..=k_max {
                    for n in 1..=k_max {
                        on_face.push(BoundaryMode::FaceMode { face, m, n });
                    }
                }
                on_face.sort_by_key(|mode| match mode {
                    BoundaryMode::FaceMode { m, n, .. } => (m * m + n * n, *m, *n),
                    _ => unreachable!(),
                });
                modes.extend(on_face);
            }
        }
        Ok(Self::build(domain, modes))
    }

    /// Dimension-dispatching constructor; `k_max` is ignored on the interval.
    pub fn for_domain(domain: BoxDomain, k_max: usize) -> Result<Self> {
        match domain.dim() {
            1 => Self::endpoints(domain),
            3 => Self::faces(domain, k_max),
            d => Err(Error::BadDimension(d)),
        }
    }

    fn build(domain: BoxDomain, modes: Vec<BoundaryMode>) -> Self {
        let scalar = domain.scalar_basis();
        let lifts = modes
            .iter()
            .map(|mode| lift_line(&scalar, *mode))
            .collect();
        let rho_sq = modes
            .iter()
            .map(|mode| match mode {
                BoundaryMode::Endpoint { .. } => 0.0,
                BoundaryMode::FaceMode { m, n, .. } => (m * m + n * n) as f64,
            })
            .collect();
        BoundaryBasis {
            domain,
            modes,
            lifts,
            rho_sq,
        }
    }

    pub fn domain(&self) -> BoxDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[BoundaryMode] {
        &self.modes
    }

    pub fn mode(&self, rank: usize) -> BoundaryMode {
        self.modes[rank]
    }

    /// Squared tangential frequency `rho^2` of a mode.
    pub fn rho_sq(&self, rank: usize) -> f64 {
        self.rho_sq[rank]
    }

    /// Harmonic lift of boundary data `sum_k weights[k] e_k`: the interior
    /// temperature profile a steady heat equation would settle into.
    pub fn dirichlet_map(&self, weights: &[f64]) -> SpectralField {
        assert_eq!(weights.len(), self.len(), "one weight per boundary mode");
        let mut field = SpectralField::zero_scalar(self.domain);
        let coeffs = &mut field.component_mut(0).coeffs;
        for (line, &w) in self.lifts.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            accumulate_line(coeffs, line, w);
        }
        field
    }

    /// Adds `scale` times the lift of mode `rank` onto existing scalar
    /// coefficients; the hot path used by the stochastic convolution.
    pub fn accumulate_lift(&self, rank: usize, scale: f64, coeffs: &mut [f64]) {
        accumulate_line(coeffs, &self.lifts[rank], scale);
    }

    /// Like [`accumulate_lift`](Self::accumulate_lift) but with an extra
    /// pointwise factor `weights[i]` on each interior coefficient, so a
    /// mode-dependent filter can ride along in a single pass.
    pub fn accumulate_weighted_lift(
        &self,
        rank: usize,
        scale: f64,
        weights: &[f64],
        coeffs: &mut [f64],
    ) {
        let line = &self.lifts[rank];
        let mut idx = line.first;
        for &c in &line.coeffs {
            coeffs[idx] += scale * weights[idx] * c;
            idx += line.stride;
        }
    }

    /// Lift of a single boundary mode.
    pub fn mode_lift(&self, rank: usize) -> SpectralField {
        let mut weights = vec![0.0; self.len()];
        weights[rank] = 1.0;
        self.dirichlet_map(&weights)
    }
}

fn accumulate_line(coeffs: &mut [f64], line: &LiftLine, scale: f64) {
    let mut idx = line.first;
    for &c in &line.coeffs {
        coeffs[idx] += scale * c;
        idx += line.stride;
    }
}

fn lift_line(scalar: &TensorBasis, mode: BoundaryMode) -> LiftLine {
    let n = scalar.n();
    let shape = scalar.shape();
    let str3 = strides(shape);
    let root = (2.0 / std::f64::consts::PI).sqrt();
    match mode {
        BoundaryMode::Endpoint { upper } => {
            let coeffs = (1..=n)
                .map(|j| {
                    let sign = endpoint_sign(upper, j);
                    sign * root / j as f64
                })
                .collect();
            LiftLine {
                first: 0,
                stride: 1,
                coeffs,
            }
        }
        BoundaryMode::FaceMode { face, m, n: nn } => {
            let (t1, t2) = tangential_axes(face.axis);
            let mut idx = [0usize; 3];
            idx[t1] = m - 1;
            idx[t2] = nn - 1;
            idx[face.axis] = 0;
            let first = idx[0] * str3[0] + idx[1] * str3[1] + idx[2] * str3[2];
            let rho_sq = (m * m + nn * nn) as f64;
            let coeffs = (1..=n)
                .map(|j| {
                    let mu = rho_sq + (j * j) as f64;
                    endpoint_sign(face.upper, j) * root * j as f64 / mu
                })
                .collect();
            LiftLine {
                first,
                stride: str3[face.axis],
                coeffs,
            }
        }
    }
}

fn endpoint_sign(upper: bool, j: usize) -> f64 {
    if upper && j % 2 == 0 {
        -1.0
    } else {
        1.0
    }
}

fn tangential_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("axis out of range"),
    }
}

/// Amplitude profile assigned to the ranked boundary modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AmplitudeLaw {
    Constant { scale: f64 },
    /// `scale * (1 + rank)^{-rate}` in enumeration order.
    PowerDecay { scale: f64, rate: f64 },
}

impl AmplitudeLaw {
    pub fn amplitude(&self, rank: usize) -> f64 {
        match *self {
            AmplitudeLaw::Constant { scale } => scale,
            AmplitudeLaw::PowerDecay { scale, rate } => {
                scale * ((1 + rank) as f64).powf(-rate)
            }
        }
    }
}

/// A boundary noise configuration: which modes shake, how hard, and the
/// overall intensity `eps` multiplying the covariance.
#[derive(Clone, Debug)]
pub struct BoundaryNoiseSpec {
    basis: BoundaryBasis,
    law: AmplitudeLaw,
    eps: f64,
    lambdas: Vec<f64>,
}

impl BoundaryNoiseSpec {
    pub fn new(basis: BoundaryBasis, law: AmplitudeLaw, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!(
                "noise intensity must be finite and nonnegative, got {eps}"
            )));
        }
        let lambdas = (0..basis.len()).map(|k| law.amplitude(k)).collect();
        Ok(BoundaryNoiseSpec {
            basis,
            law,
            eps,
            lambdas,
        })
    }

    pub fn basis(&self) -> &BoundaryBasis {
        &self.basis
    }

    pub fn law(&self) -> AmplitudeLaw {
        self.law
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.basis.clone(), self.law, eps)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Draws one Brownian increment per boundary mode over a step of length
    /// `dt`; entry `k` has variance `lambda_k^2 dt`. The intensity `eps` is
    /// applied later, exactly once, by the convolution update.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.lambdas.len());
        let root_dt = dt.sqrt();
        for (slot, &lambda) in out.iter_mut().zip(&self.lambdas) {
            let g: f64 = rng.sample(StandardNormal);
            *slot = lambda * root_dt * g;
        }
    }
}

/// Interior series profile of one lifted mode under `Delta^beta`, as fed to
/// the dyadic divergence detector: term `j` is
/// `(2/pi) j^2 (rho^2 + j^2)^{2 beta - 2}`.
pub fn interior_profile(beta: f64, rho_sq: f64, max_terms: u64) -> SeriesEval {
    let two_over_pi = std::f64::consts::FRAC_2_PI;
    series::evaluate(
        |j| {
            let x = j as f64;
            two_over_pi * x * x * (rho_sq + x * x).powf(2.0 * beta - 2.0)
        },
        max_terms,
    )
}

/// Running partial sums of the interior profile at the given truncations,
/// used to exhibit growth laws of divergent cases.
pub fn profile_partial_sums(beta: f64, rho_sq: f64, checkpoints: &[u64]) -> Vec<f64> {
    let two_over_pi = std::f64::consts::FRAC_2_PI;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut sum = 0.0;
    let mut next = 0usize;
    let last = *checkpoints.iter().max().unwrap_or(&0);
    for j in 1..=last {
        let x = j as f64;
        sum += two_over_pi * x * x * (rho_sq + x * x).powf(2.0 * beta - 2.0);
        while next < checkpoints.len() && checkpoints[next] == j {
            out.push(sum);
            next += 1;
        }
    }
    out
}

/// `||Delta^beta D e||_{L2}^2` for one boundary mode with tangential
/// frequency `rho`, resolved to roundoff by an explicit head and an
/// Euler-Maclaurin tail. Callers must have established `beta < 1/4`.
pub fn mode_norm_sq(beta: f64, rho_sq: f64) -> f64 {
    const HEAD: u64 = 4096;
    let two_over_pi = std::f64::consts::FRAC_2_PI;
    let mut sum = 0.0;
    for j in 1..=HEAD {
        let x = j as f64;
        sum += x * x * (rho_sq + x * x).powf(2.0 * beta - 2.0);
    }
    two_over_pi * (sum + series::admissibility_tail(beta, rho_sq, HEAD))
}

/// Verdict and value of the admissibility trace
/// `S(beta) = sum_k lambda_k^2 ||Delta^beta D e_k||^2`.
#[derive(Clone, Debug)]
pub struct AdmissibilityReport {
    pub beta: f64,
    pub verdict: SeriesVerdict,
    /// Fully tail-corrected trace; `None` when divergent.
    pub total: Option<f64>,
    /// Per-mode norms `||Delta^beta D e_k||^2` (empty when divergent).
    pub per_mode: Vec<f64>,
    /// Dyadic diagnostics of the structural interior series.
    pub profile: SeriesEval,
}

/// Decides whether the noise spec is admissible at order `beta` and, if so,
/// evaluates the trace. The structural verdict comes from one full dyadic
/// scan of the interior profile; every lifted mode shares its exponent, so
/// one scan settles them all.
pub fn admissibility(spec: &BoundaryNoiseSpec, beta: f64) -> AdmissibilityReport {
    let basis = spec.basis();
    let min_rho = basis
        .rho_sq
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(f64::MAX);
    let profile = interior_profile(beta, min_rho, series::DEFAULT_TERMS);
    if profile.verdict == SeriesVerdict::Divergent {
        return AdmissibilityReport {
            beta,
            verdict: SeriesVerdict::Divergent,
            total: None,
            per_mode: Vec::new(),
            profile,
        };
    }
    let per_mode: Vec<f64> = (0..basis.len())
        .map(|k| mode_norm_sq(beta, basis.rho_sq(k)))
        .collect();
    let total = per_mode
        .iter()
        .zip(spec.lambdas())
        .map(|(norm, lambda)| lambda * lambda * norm)
        .sum();
    AdmissibilityReport {
        beta,
        verdict: SeriesVerdict::Convergent,
        total: Some(total),
        per_mode,
        profile,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Parity;

    fn interval(n: usize) -> BoxDomain {
        BoxDomain::new(1, n).unwrap()
    }

    fn cube(n: usize) -> BoxDomain {
        BoxDomain::new(3, n).unwrap()
    }

    #[test]
    fn endpoint_lift_coefficients_match_closed_form() {
        let basis = BoundaryBasis::endpoints(interval(64)).unwrap();
        let root = (2.0 / std::f64::consts::PI).sqrt();
        let left = basis.mode_lift(0);
        let right = basis.mode_lift(1);
        for j in 1..=64usize {
            let expect_left = root / j as f64;
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            let got_l = left.component(0).coeffs[j - 1];
            let got_r = right.component(0).coeffs[j - 1];
            assert!((got_l - expect_left).abs() < 1e-15);
            assert!((got_r - sign * expect_left).abs() < 1e-15);
        }
    }

    #[test]
    fn endpoint_lift_is_linear_interpolant() {
        // Boundary data (a, b) lifts to the harmonic function of the
        // interval: the straight line a + (b - a) x / pi. Check far from the
        // endpoints where the truncated sine series has already converged.
        let basis = BoundaryBasis::endpoints(interval(2048)).unwrap();
        let field = basis.dirichlet_map(&[0.7, -0.2]);
        let plan = crate::spectral::transform::Plan::with_resolution(interval(2048), 4096).unwrap();
        let grid = plan.eval(&field.component(0).basis, &field.component(0).coeffs);
        let g = plan.points_per_axis();
        for i in (g / 4)..(3 * g / 4) {
            let x = plan.coord(i);
            let exact = 0.7 + (-0.2 - 0.7) * x / std::f64::consts::PI;
            assert!(
                (grid[i] - exact).abs() < 2e-3,
                "lift deviates from the line at x = {x}"
            );
        }
    }

    #[test]
    fn face_modes_are_ranked_by_tangential_frequency() {
        let basis = BoundaryBasis::faces(cube(8), 3).unwrap();
        assert_eq!(basis.len(), 6 * 9);
        // Within each face the sequence of m^2 + n^2 must be nondecreasing.
        for face_start in (0..basis.len()).step_by(9) {
            let mut prev = 0;
            for r in face_start..face_start + 9 {
                match basis.mode(r) {
                    BoundaryMode::FaceMode { m, n, .. } => {
                        let key = m * m + n * n;
                        assert!(key >= prev);
                        prev = key;
                    }
                    _ => panic!("expected face mode"),
                }
            }
        }
    }

    #[test]
    fn face_lift_supports_a_single_normal_line() {
        let n = 8;
        let basis = BoundaryBasis::faces(cube(n), 4).unwrap();
        // Find the mode (m, n) = (2, 3) on the lower z-face.
        let rank = basis
            .modes()
            .iter()
            .position(|mode| {
                matches!(
                    mode,
                    BoundaryMode::FaceMode {
                        face: Face { axis: 2, upper: false },
                        m: 2,
                        n: 3
                    }
                )
            })
            .unwrap();
        let lift = basis.mode_lift(rank);
        let scalar = cube(n).scalar_basis();
        let root = (2.0 / std::f64::consts::PI).sqrt();
        scalar.for_each_mode(|flat, k, mu| {
            let got = lift.component(0).coeffs[flat];
            if k[0] == 2 && k[1] == 3 {
                let expect = root * k[2] as f64 / mu;
                assert!((got - expect).abs() < 1e-15, "wrong coefficient on the line");
            } else {
                assert_eq!(got, 0.0, "coefficient off the support line");
            }
        });
    }

    #[test]
    fn upper_face_signs_alternate_in_the_normal_wavenumber() {
        let basis = BoundaryBasis::faces(cube(6), 2).unwrap();
        let lower = basis
            .modes()
            .iter()
            .position(|mode| {
                matches!(mode, BoundaryMode::FaceMode { face: Face { axis: 0, upper: false }, m: 1, n: 1 })
            })
            .unwrap();
        let upper = basis
            .modes()
            .iter()
            .position(|mode| {
                matches!(mode, BoundaryMode::FaceMode { face: Face { axis: 0, upper: true }, m: 1, n: 1 })
            })
            .unwrap();
        let lo = basis.mode_lift(lower);
        let hi = basis.mode_lift(upper);
        let scalar = cube(6).scalar_basis();
        scalar.for_each_mode(|flat, k, _| {
            if k[1] == 1 && k[2] == 1 {
                let sign = if k[0] % 2 == 0 { -1.0 } else { 1.0 };
                let a = lo.component(0).coeffs[flat];
                let b = hi.component(0).coeffs[flat];
                assert!((b - sign * a).abs() < 1e-15);
            }
        });
    }

    #[test]
    fn constant_boundary_data_lifts_to_constant_one() {
        // With every face carrying the expansion of the constant 1 in its
        // tangential sine system, the lift must reproduce u = 1 on the modes
        // the truncation can represent: coefficients of sin(k1)sin(k2)sin(k3)
        // for all-odd wavevectors are (2/pi)^{3/2} * 8 / (k1 k2 k3).
        let n = 6;
        let k_max = 6;
        let basis = BoundaryBasis::faces(cube(n), k_max).unwrap();
        let root = (2.0 / std::f64::consts::PI).sqrt();
        // <1, sqrt(2/pi) sin(m s)> over (0, pi) = sqrt(2/pi) (1 - (-1)^m)/m.
        let one_coeff = |m: usize| {
            if m % 2 == 1 {
                2.0 * root / m as f64
            } else {
                0.0
            }
        };
        let weights: Vec<f64> = basis
            .modes()
            .iter()
            .map(|mode| match mode {
                BoundaryMode::FaceMode { m, n, .. } => one_coeff(*m) * one_coeff(*n),
                _ => unreachable!(),
            })
            .collect();
        let lift = basis.dirichlet_map(&weights);
        let scalar = cube(n).scalar_basis();
        scalar.for_each_mode(|flat, k, _| {
            let got = lift.component(0).coeffs[flat];
            let expect = if k.iter().take(3).all(|&ki| ki % 2 == 1) {
                root.powi(3) * 8.0 / (k[0] * k[1] * k[2]) as f64
            } else {
                0.0
            };
            assert!(
                (got - expect).abs() < 1e-12,
                "constant reproduction failed at {k:?}: {got} vs {expect}"
            );
        });
    }

    #[test]
    fn amplitude_laws_evaluate_as_written() {
        let c = AmplitudeLaw::Constant { scale: 0.5 };
        assert_eq!(c.amplitude(0), 0.5);
        assert_eq!(c.amplitude(17), 0.5);
        let p = AmplitudeLaw::PowerDecay { scale: 2.0, rate: 1.5 };
        assert!((p.amplitude(0) - 2.0).abs() < 1e-15);
        assert!((p.amplitude(3) - 2.0 * 4.0f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn increments_have_the_advertised_variance() {
        use rand::SeedableRng;
        let basis = BoundaryBasis::endpoints(interval(16)).unwrap();
        let spec = BoundaryNoiseSpec::new(
            basis,
            AmplitudeLaw::PowerDecay { scale: 1.0, rate: 1.0 },
            1.0,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let dt = 0.01;
        let n = 60_000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        let mut buf = [0.0f64; 2];
        for _ in 0..n {
            spec.sample_increment(dt, &mut rng, &mut buf);
            for k in 0..2 {
                sums[k] += buf[k];
                sq[k] += buf[k] * buf[k];
            }
        }
        for k in 0..2 {
            let lambda = spec.lambdas()[k];
            let var = sq[k] / n as f64 - (sums[k] / n as f64).powi(2);
            let expect = lambda * lambda * dt;
            // Sample variance of n gaussians carries relative error ~ sqrt(2/n).
            assert!(
                (var - expect).abs() / expect < 4.0 * (2.0 / n as f64).sqrt(),
                "variance off for mode {k}: {var} vs {expect}"
            );
        }
    }

    #[test]
    fn admissibility_matches_the_interval_closed_form() {
        // Two endpoint atoms at unit amplitude: S(beta) = 2 * (2/pi) *
        // sum_j j^{4 beta - 2}, evaluated independently here by zeta-style
        // summation with its own tail.
        let beta = 0.2;
        let basis = BoundaryBasis::endpoints(interval(32)).unwrap();
        let spec = BoundaryNoiseSpec::new(basis, AmplitudeLaw::Constant { scale: 1.0 }, 1.0).unwrap();
        let report = admissibility(&spec, beta);
        assert_eq!(report.verdict, SeriesVerdict::Convergent);
        let mut reference = 0.0;
        for j in 1..=100_000u64 {
            reference += (j as f64).powf(4.0 * beta - 2.0);
        }
        reference += crate::series::power_tail(2.0 - 4.0 * beta, 100_000);
        reference *= 2.0 * std::f64::consts::FRAC_2_PI;
        let total = report.total.unwrap();
        assert!(
            (total - reference).abs() / reference < 1e-12,
            "trace {total} vs closed form {reference}"
        );
    }

    #[test]
    fn admissibility_flips_exactly_at_one_quarter() {
        let basis = BoundaryBasis::endpoints(interval(32)).unwrap();
        let spec = BoundaryNoiseSpec::new(basis, AmplitudeLaw::Constant { scale: 1.0 }, 1.0).unwrap();
        assert_eq!(admissibility(&spec, 0.2).verdict, SeriesVerdict::Convergent);
        assert_eq!(admissibility(&spec, 0.25).verdict, SeriesVerdict::Divergent);
        assert_eq!(admissibility(&spec, 0.3).verdict, SeriesVerdict::Divergent);
    }

    #[test]
    fn critical_case_grows_logarithmically() {
        // At beta = 1/4 the interior profile is (2/pi)/j: partial sums at K
        // and 2K must differ by (2/pi) ln 2.
        let checkpoints: Vec<u64> = (13..=20).map(|e| 1u64 << e).collect();
        let sums = profile_partial_sums(0.25, 0.0, &checkpoints);
        let expect = std::f64::consts::FRAC_2_PI * std::f64::consts::LN_2;
        for w in sums.windows(2) {
            assert!((w[1] - w[0] - expect).abs() < 1e-4);
        }
    }

    #[test]
    fn supercritical_case_grows_like_a_power() {
        // At beta = 0.3 the blocks grow by 2^{4 beta - 1} = 2^{0.2}.
        let profile = interior_profile(0.3, 0.0, 1 << 18);
        assert_eq!(profile.verdict, SeriesVerdict::Divergent);
        assert!((profile.last_ratio - 0.2f64.exp2()).abs() < 1e-2);
    }

    #[test]
    fn face_mode_norms_decrease_with_tangential_frequency() {
        let n1 = mode_norm_sq(0.2, 2.0);
        let n2 = mode_norm_sq(0.2, 8.0);
        let n3 = mode_norm_sq(0.2, 50.0);
        assert!(n1 > n2 && n2 > n3);
        assert!(n3 > 0.0);
    }

    #[test]
    fn scalar_basis_is_pure_sine() {
        // The lift writes into the scalar sine system; guard the assumption.
        let scalar = cube(4).scalar_basis();
        for axis in 0..3 {
            assert_eq!(scalar.parity(axis), Parity::Sine);
        }
    }
}
