//! Eigenbasis calculus on the box `(0, pi)^d`.
//!
//! Scalar fields satisfying homogeneous Dirichlet conditions expand in products
//! of normalized sines `sqrt(2/pi) sin(k x)`; fields that are free at a wall
//! expand in cosines (with the constant mode `1/sqrt(pi)` at `k = 0`). A field
//! component therefore carries a per-axis parity pattern, and every operator
//! built from the Laplacian acts diagonally on such a component with eigenvalue
//! `mu_k = k_1^2 + ... + k_d^2`.
//!
//! Grids, quadrature and fast coefficient/point-value transforms live in
//! [`transform`]; fields and the diagonal operator calculus in [`field`].

pub mod field;
pub mod transform;

pub use field::{sobolev_norm, Component, Integrability, SpectralField};
pub use transform::Plan;

use crate::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Per-axis expansion family.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Parity {
    /// `sqrt(2/pi) sin(k x)`, `k = 1..=n`; vanishes at both walls.
    Sine,
    /// `1/sqrt(pi)` at `k = 0`, `sqrt(2/pi) cos(k x)` for `k = 1..=n`.
    Cosine,
}

impl Parity {
    /// Number of retained modes at truncation `n`.
    pub fn modes(self, n: usize) -> usize {
        match self {
            Parity::Sine => n,
            Parity::Cosine => n + 1,
        }
    }

    /// Wavenumber of the mode stored at `idx`.
    pub fn wavenumber(self, idx: usize) -> usize {
        match self {
            Parity::Sine => idx + 1,
            Parity::Cosine => idx,
        }
    }

    /// Storage index of wavenumber `k`, if the family contains it.
    pub fn index_of(self, k: usize) -> Option<usize> {
        match self {
            Parity::Sine => k.checked_sub(1),
            Parity::Cosine => Some(k),
        }
    }

    /// Value of the normalized basis function `k` at coordinate `x`.
    pub fn basis_value(self, k: usize, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Parity::Sine => (2.0 / PI).sqrt() * ((k as f64) * x).sin(),
            Parity::Cosine => {
                if k == 0 {
                    1.0 / PI.sqrt()
                } else {
                    (2.0 / PI).sqrt() * ((k as f64) * x).cos()
                }
            }
        }
    }
}

/// The box `(0, pi)^dim` with an isotropic mode truncation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BoxDomain {
    dim: usize,
    n: usize,
}

impl BoxDomain {
    /// A `dim`-dimensional box keeping wavenumbers `1..=n` per axis.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(Error::BadDimension(dim));
        }
        if n < 4 {
            return Err(Error::BadTruncation(n));
        }
        Ok(BoxDomain { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-axis truncation.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Smallest Dirichlet eigenvalue, `dim` (all wavenumbers equal 1).
    pub fn lambda_min(&self) -> f64 {
        self.dim as f64
    }

    /// Basis of scalar fields vanishing on the whole boundary.
    pub fn scalar_basis(&self) -> TensorBasis {
        TensorBasis::new(self.dim, self.n, [Parity::Sine; MAX_DIM])
    }

    /// Basis of velocity component `c`: sine along axis `c` (no penetration
    /// through the walls it faces), cosine along the remaining axes.
    pub fn velocity_basis(&self, c: usize) -> TensorBasis {
        assert!(c < self.dim);
        let mut parities = [Parity::Cosine; MAX_DIM];
        parities[c] = Parity::Sine;
        TensorBasis::new(self.dim, self.n, parities)
    }

    /// Basis of the discrete pressure space (free at every wall).
    pub fn pressure_basis(&self) -> TensorBasis {
        TensorBasis::new(self.dim, self.n, [Parity::Cosine; MAX_DIM])
    }
}

/// Tensor-product expansion family of one field component.
///
/// Axes beyond `dim` are padding and hold a single `k = 0` cosine mode, so the
/// same `[usize; 3]` index arithmetic covers both dimensions.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorBasis {
    dim: usize,
    n: usize,
    parities: [Parity; MAX_DIM],
}

impl TensorBasis {
    pub fn new(dim: usize, n: usize, parities: [Parity; MAX_DIM]) -> Self {
        TensorBasis { dim, n, parities }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn parity(&self, axis: usize) -> Parity {
        self.parities[axis]
    }

    /// Modes retained along `axis` (1 on padding axes).
    pub fn axis_modes(&self, axis: usize) -> usize {
        if axis < self.dim {
            self.parities[axis].modes(self.n)
        } else {
            1
        }
    }

    /// Coefficient array shape, row-major with axis 0 slowest.
    pub fn shape(&self) -> [usize; MAX_DIM] {
        [self.axis_modes(0), self.axis_modes(1), self.axis_modes(2)]
    }

    pub fn len(&self) -> usize {
        let s = self.shape();
        s[0] * s[1] * s[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Wavenumber along `axis` of the mode with per-axis storage index `idx`.
    pub fn wavenumber(&self, axis: usize, idx: usize) -> usize {
        if axis < self.dim {
            self.parities[axis].wavenumber(idx)
        } else {
            0
        }
    }

    /// Flat storage index of the wavevector `k` (length `dim`), or `None`
    /// where the family has no such mode (`k_i = 0` on a sine axis or
    /// `k_i > n`).
    pub fn flat_index(&self, k: &[usize]) -> Option<usize> {
        debug_assert_eq!(k.len(), self.dim);
        let shape = self.shape();
        let mut flat = 0;
        for axis in 0..self.dim {
            if k[axis] > self.n {
                return None;
            }
            let idx = self.parities[axis].index_of(k[axis])?;
            flat = flat * shape[axis] + idx;
        }
        for axis in self.dim..MAX_DIM {
            flat *= shape[axis];
        }
        Some(flat)
    }

    /// Laplacian eigenvalue of the mode at flat index `flat`.
    pub fn eigenvalue(&self, flat: usize) -> f64 {
        let shape = self.shape();
        let i2 = flat % shape[2];
        let rest = flat / shape[2];
        let i1 = rest % shape[1];
        let i0 = rest / shape[1];
        let k0 = self.wavenumber(0, i0) as f64;
        let k1 = self.wavenumber(1, i1) as f64;
        let k2 = self.wavenumber(2, i2) as f64;
        k0 * k0 + k1 * k1 + k2 * k2
    }

    /// Smallest eigenvalue over the retained modes.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.dim)
            .map(|a| match self.parities[a] {
                Parity::Sine => 1.0,
                Parity::Cosine => 0.0,
            })
            .sum()
    }

    /// Visits every mode as `(flat_index, wavevector, eigenvalue)`.
    pub fn for_each_mode<F: FnMut(usize, [usize; MAX_DIM], f64)>(&self, mut f: F) {
        let shape = self.shape();
        let mut flat = 0;
        for i0 in 0..shape[0] {
            let k0 = self.wavenumber(0, i0);
            let mu0 = (k0 * k0) as f64;
            for i1 in 0..shape[1] {
                let k1 = self.wavenumber(1, i1);
                let mu01 = mu0 + (k1 * k1) as f64;
                for i2 in 0..shape[2] {
                    let k2 = self.wavenumber(2, i2);
                    f(flat, [k0, k1, k2], mu01 + (k2 * k2) as f64);
                    flat += 1;
                }
            }
        }
    }

    /// Eigenvalues in storage order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.len()];
        self.for_each_mode(|flat, _, m| mu[flat] = m);
        mu
    }
}
