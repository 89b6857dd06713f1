//! Spectral fields and the diagonal operator calculus.

use super::{BoxDomain, Parity, Plan, TensorBasis, MAX_DIM};
use crate::{Error, Result};

/// One component of a field: a coefficient array over a tensor basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub basis: TensorBasis,
    pub coeffs: Vec<f64>,
}

impl Component {
    pub fn zero(basis: TensorBasis) -> Self {
        Component {
            coeffs: vec![0.0; basis.len()],
            basis,
        }
    }

    pub fn from_coeffs(basis: TensorBasis, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), basis.len());
        Component { basis, coeffs }
    }

    /// Exact spectral derivative along `axis`. Differentiation flips the
    /// parity of that axis: `sin(kx) -> k cos(kx)`, `cos(kx) -> -k sin(kx)`,
    /// and the constant cosine mode is annihilated.
    pub fn differentiate(&self, axis: usize) -> Component {
        assert!(axis < self.basis.dim());
        let n = self.basis.n();
        let in_parity = self.basis.parity(axis);
        let (out_parity, _out_len) = match in_parity {
            Parity::Sine => (Parity::Cosine, n + 1),
            Parity::Cosine => (Parity::Sine, n),
        };
        let mut parities = [
            self.basis.parity(0),
            self.basis.parity(1),
            self.basis.parity(2),
        ];
        parities[axis] = out_parity;
        let out_basis = TensorBasis::new(self.basis.dim(), n, parities);
        let mut out = Component::zero(out_basis);

        let in_shape = self.basis.shape();
        let out_shape = out_basis.shape();
        let in_stride: usize = in_shape[axis + 1..].iter().product();
        let out_stride: usize = out_shape[axis + 1..].iter().product();
        debug_assert_eq!(in_stride, out_stride);
        let outer: usize = in_shape[..axis].iter().product();
        let in_block = in_shape[axis] * in_stride;
        let out_block = out_shape[axis] * out_stride;

        for b in 0..outer {
            for (out_idx, in_idx, scale) in derivative_pairs(in_parity, n) {
                let src = &self.coeffs[b * in_block + in_idx * in_stride..][..in_stride];
                let dst = &mut out.coeffs[b * out_block + out_idx * out_stride..][..out_stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = scale * s;
                }
            }
        }
        out
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

/// Index/scale pairs realizing d/dx on one axis family.
fn derivative_pairs(parity: Parity, n: usize) -> Vec<(usize, usize, f64)> {
    match parity {
        // sine index k-1 holds wavenumber k; maps to cosine index k.
        Parity::Sine => (1..=n).map(|k| (k, k - 1, k as f64)).collect(),
        // cosine index k maps to sine index k-1 with factor -k; k = 0 drops.
        Parity::Cosine => (1..=n).map(|k| (k - 1, k, -(k as f64))).collect(),
    }
}

/// Lebesgue exponent of a Sobolev norm surrogate.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Integrability {
    /// `q = 2`: exact spectral Bessel norm.
    L2,
    /// `q = 6/5`: grid quadrature of `|Delta^{s/2} f|^{6/5}`.
    L65,
}

/// A scalar or vector field on a box, stored as per-component spectral
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    domain: BoxDomain,
    components: Vec<Component>,
    /// Set by the Leray projection (or by constructors of fields known to be
    /// solenoidal); consumed as a precondition by the transport term.
    pub divergence_free: bool,
}

impl SpectralField {
    /// Zero scalar field (sine expansion in every axis).
    pub fn zero_scalar(domain: BoxDomain) -> Self {
        SpectralField {
            domain,
            components: vec![Component::zero(domain.scalar_basis())],
            divergence_free: false,
        }
    }

    /// Zero velocity field (`dim` components in the compatible mixed bases).
    pub fn zero_velocity(domain: BoxDomain) -> Self {
        SpectralField {
            domain,
            components: (0..domain.dim())
                .map(|c| Component::zero(domain.velocity_basis(c)))
                .collect(),
            divergence_free: true,
        }
    }

    pub fn scalar_from_coeffs(domain: BoxDomain, coeffs: Vec<f64>) -> Self {
        SpectralField {
            domain,
            components: vec![Component::from_coeffs(domain.scalar_basis(), coeffs)],
            divergence_free: false,
        }
    }

    pub fn from_components(domain: BoxDomain, components: Vec<Component>) -> Self {
        assert!(!components.is_empty());
        SpectralField {
            domain,
            components,
            divergence_free: false,
        }
    }

    pub fn domain(&self) -> BoxDomain {
        self.domain
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.components.len() == 1
            && self.components[0].basis == self.domain.scalar_basis()
    }

    pub fn component(&self, c: usize) -> &Component {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut Component {
        self.divergence_free = false;
        &mut self.components[c]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Component] {
        self.divergence_free = false;
        &mut self.components
    }

    /// Checks that `other` expands over the same bases.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.components.len() == other.components.len()
            && self
                .components
                .iter()
                .zip(&other.components)
                .all(|(a, b)| a.basis == b.basis)
    }

    /// `self + a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::BasisMismatch);
        }
        for (mine, theirs) in self.components.iter_mut().zip(&other.components) {
            for (x, y) in mine.coeffs.iter_mut().zip(&theirs.coeffs) {
                *x += a * y;
            }
        }
        self.divergence_free = self.divergence_free && other.divergence_free;
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for comp in &mut self.components {
            for x in &mut comp.coeffs {
                *x *= a;
            }
        }
    }

    /// `self - other` as a new field.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// Applies `Delta^a` (in absolute value of the Dirichlet Laplacian:
    /// multiplication by `mu_k^a`). Fails only if a negative power meets a
    /// nonzero coefficient on a zero-eigenvalue mode, which cannot happen for
    /// scalar or velocity fields.
    pub fn fractional_power(&self, a: f64) -> Result<Self> {
        let mut out = self.clone();
        for comp in &mut out.components {
            let basis = comp.basis;
            let mut bad = false;
            basis.for_each_mode(|flat, _, mu| {
                if mu == 0.0 {
                    if comp.coeffs[flat] != 0.0 && a < 0.0 {
                        bad = true;
                    }
                    if a != 0.0 {
                        comp.coeffs[flat] = 0.0;
                    }
                } else {
                    comp.coeffs[flat] *= mu.powf(a);
                }
            });
            if bad {
                return Err(Error::ZeroMode);
            }
        }
        Ok(out)
    }

    /// Heat semigroup `e^{t Delta}` for `t >= 0`.
    pub fn heat_semigroup(&self, t: f64) -> Self {
        assert!(t >= 0.0, "semigroup time must be nonnegative");
        let mut out = self.clone();
        for comp in &mut out.components {
            let basis = comp.basis;
            basis.for_each_mode(|flat, _, mu| {
                comp.coeffs[flat] *= (-mu * t).exp();
            });
        }
        out
    }

    /// L2 norm (Parseval: coefficient two-norm).
    pub fn norm_l2(&self) -> f64 {
        self.components
            .iter()
            .map(Component::l2_norm_sq)
            .sum::<f64>()
            .sqrt()
    }

    /// Spectral Sobolev norm `(sum mu^s |c|^2)^{1/2}` over all components.
    pub fn norm_h(&self, s: f64) -> f64 {
        let mut total = 0.0;
        for comp in &self.components {
            comp.basis.for_each_mode(|flat, _, mu| {
                let c = comp.coeffs[flat];
                if c == 0.0 {
                    return;
                }
                if mu == 0.0 {
                    assert!(
                        s >= 0.0,
                        "negative-order norm of a field with a constant mode"
                    );
                    if s == 0.0 {
                        total += c * c;
                    }
                } else {
                    total += mu.powf(s) * c * c;
                }
            });
        }
        total.sqrt()
    }

    /// `W^{s, 6/5}` surrogate: grid quadrature of `|Delta^{s/2} f|^{6/5}`
    /// summed over components, to the power `5/6`.
    pub fn norm_w65(&self, s: f64, plan: &Plan) -> Result<f64> {
        let smoothed = self.fractional_power(s / 2.0)?;
        let mut total = 0.0;
        for comp in &smoothed.components {
            let grid = plan.eval(&comp.basis, &comp.coeffs);
            total += plan.quadrature_abs_pow(&grid, 1.2);
        }
        Ok(total.powf(5.0 / 6.0))
    }

    /// Largest coefficient magnitude, as a cheap blow-up guard.
    pub fn max_abs_coeff(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.coeffs.iter())
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Sobolev norm dispatcher for the two exponents used in the estimates.
pub fn sobolev_norm(
    field: &SpectralField,
    s: f64,
    q: Integrability,
    plan: Option<&Plan>,
) -> Result<f64> {
    match q {
        Integrability::L2 => Ok(field.norm_h(s)),
        Integrability::L65 => {
            let plan = plan.ok_or(Error::BasisMismatch)?;
            field.norm_w65(s, plan)
        }
    }
}

/// Gradient of a scalar field as raw parity-flipped components (component `a`
/// lives in the basis with cosine along axis `a` and sine elsewhere).
pub fn gradient_components(scalar: &SpectralField) -> Vec<Component> {
    assert!(scalar.is_scalar(), "gradient of a non-scalar field");
    let comp = scalar.component(0);
    (0..scalar.domain().dim())
        .map(|a| comp.differentiate(a))
        .collect()
}

/// Pads per-axis index arithmetic helpers shared by solvers.
pub fn strides(shape: [usize; MAX_DIM]) -> [usize; MAX_DIM] {
    [shape[1] * shape[2], shape[2], 1]
}
