//! Coefficient/grid transforms and quadrature.
//!
//! The collocation grid on `[0, pi]` has `m + 2` equispaced points
//! `x_i = i pi / (m + 1)`, `i = 0..=m+1`, endpoints included, with trapezoid
//! weights. On this grid the retained sine and cosine families are exactly
//! orthogonal, so `project(eval(c)) == c` to rounding, and the quadrature
//! integrates any trigonometric polynomial of degree below `2(m + 1)` exactly.
//! Oversampling (`m > n`) de-aliases products: a quadratic nonlinearity of two
//! degree-`n` fields projects exactly onto the retained modes once
//! `2(m + 1) > 3n`.
//!
//! All transforms factor into one dense matrix application per axis, executed
//! as GEMM calls.

use std::f64::consts::PI;

use super::{BoxDomain, Parity, TensorBasis, MAX_DIM};
use crate::{Error, Result};

/// Evaluation and projection matrices for one axis family.
struct AxisOp {
    modes: usize,
    /// `(m + 2) x modes`, row-major: basis function value at grid point.
    eval: Vec<f64>,
    /// `modes x (m + 2)`, row-major: quadrature-weighted transpose.
    proj: Vec<f64>,
}

/// Precomputed transform data for one domain at one grid resolution.
pub struct Plan {
    domain: BoxDomain,
    m: usize,
    sine: AxisOp,
    cosine: AxisOp,
}

impl Plan {
    /// Plan with `m` interior points per axis (`m >= n`).
    pub fn with_resolution(domain: BoxDomain, m: usize) -> Result<Self> {
        let n = domain.n();
        if m < n {
            return Err(Error::BadTruncation(m));
        }
        Ok(Plan {
            domain,
            m,
            sine: AxisOp::build(Parity::Sine, n, m),
            cosine: AxisOp::build(Parity::Cosine, n, m),
        })
    }

    /// Matching resolution `m = n`: exact for linear operations and Parseval,
    /// aliased for products.
    pub fn natural(domain: BoxDomain) -> Self {
        Plan::with_resolution(domain, domain.n()).expect("m = n is always valid")
    }

    /// Oversampled so quadratic products of retained fields project exactly
    /// onto retained modes (`2(m + 1) > 3n`).
    pub fn dealiased(domain: BoxDomain) -> Self {
        let n = domain.n();
        let m = (3 * n + 1) / 2;
        Plan::with_resolution(domain, m).expect("oversampled grid is valid")
    }

    pub fn domain(&self) -> BoxDomain {
        self.domain
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    /// Grid points per axis, endpoints included.
    pub fn points_per_axis(&self) -> usize {
        self.m + 2
    }

    pub fn grid_shape(&self) -> [usize; MAX_DIM] {
        let g = self.points_per_axis();
        let mut s = [1; MAX_DIM];
        for a in 0..self.domain.dim() {
            s[a] = g;
        }
        s
    }

    pub fn grid_len(&self) -> usize {
        let s = self.grid_shape();
        s[0] * s[1] * s[2]
    }

    /// Coordinate of grid point `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * PI / (self.m + 1) as f64
    }

    /// Trapezoid weight of grid point `i` along one axis.
    pub fn axis_weight(&self, i: usize) -> f64 {
        let h = PI / (self.m + 1) as f64;
        if i == 0 || i == self.m + 1 {
            0.5 * h
        } else {
            h
        }
    }

    fn op(&self, parity: Parity) -> &AxisOp {
        match parity {
            Parity::Sine => &self.sine,
            Parity::Cosine => &self.cosine,
        }
    }

    /// Point values of the component with expansion `coeffs` in `basis`.
    pub fn eval(&self, basis: &TensorBasis, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), basis.len());
        let mut data = coeffs.to_vec();
        let mut shape = basis.shape();
        for axis in 0..self.domain.dim() {
            let op = self.op(basis.parity(axis));
            debug_assert_eq!(shape[axis], op.modes);
            let (next, next_shape) = apply_axis(
                &data,
                shape,
                axis,
                &op.eval,
                self.points_per_axis(),
                op.modes,
            );
            data = next;
            shape = next_shape;
        }
        data
    }

    /// L2 projection of grid values onto `basis` (exact for integrands the
    /// quadrature resolves; the aliased part folds onto retained modes
    /// otherwise).
    pub fn project(&self, basis: &TensorBasis, grid: &[f64]) -> Vec<f64> {
        debug_assert_eq!(grid.len(), self.grid_len());
        let mut data = grid.to_vec();
        let mut shape = self.grid_shape();
        for axis in 0..self.domain.dim() {
            let op = self.op(basis.parity(axis));
            debug_assert_eq!(shape[axis], self.points_per_axis());
            let (next, next_shape) = apply_axis(
                &data,
                shape,
                axis,
                &op.proj,
                op.modes,
                self.points_per_axis(),
            );
            data = next;
            shape = next_shape;
        }
        data
    }

    /// Quadrature of grid values over the box.
    pub fn quadrature(&self, grid: &[f64]) -> f64 {
        self.weighted_sum(grid, |v| v)
    }

    /// Quadrature of `|f|^p`.
    pub fn quadrature_abs_pow(&self, grid: &[f64], p: f64) -> f64 {
        self.weighted_sum(grid, |v| v.abs().powf(p))
    }

    fn weighted_sum<F: Fn(f64) -> f64>(&self, grid: &[f64], f: F) -> f64 {
        debug_assert_eq!(grid.len(), self.grid_len());
        let g = self.points_per_axis();
        let dim = self.domain.dim();
        let wline: Vec<f64> = (0..g).map(|i| self.axis_weight(i)).collect();
        let shape = self.grid_shape();
        let mut total = 0.0;
        let mut flat = 0;
        for i0 in 0..shape[0] {
            let w0 = if dim >= 1 { wline[i0] } else { 1.0 };
            for i1 in 0..shape[1] {
                let w01 = if dim >= 2 { w0 * wline[i1] } else { w0 };
                for i2 in 0..shape[2] {
                    let w = if dim >= 3 { w01 * wline[i2] } else { w01 };
                    total += w * f(grid[flat]);
                    flat += 1;
                }
            }
        }
        total
    }
}

impl AxisOp {
    fn build(parity: Parity, n: usize, m: usize) -> Self {
        let modes = parity.modes(n);
        let g = m + 2;
        let h = PI / (m + 1) as f64;
        let mut eval = vec![0.0; g * modes];
        let mut proj = vec![0.0; modes * g];
        for i in 0..g {
            let x = i as f64 * h;
            let w = if i == 0 || i == g - 1 { 0.5 * h } else { h };
            for idx in 0..modes {
                let k = parity.wavenumber(idx);
                let v = parity.basis_value(k, x);
                eval[i * modes + idx] = v;
                proj[idx * g + i] = w * v;
            }
        }
        AxisOp { modes, eval, proj }
    }
}

/// Contracts `input` along `axis` with the `rows x cols` matrix `mat`
/// (`cols == shape[axis]`), returning the new tensor and shape.
fn apply_axis(
    input: &[f64],
    shape: [usize; MAX_DIM],
    axis: usize,
    mat: &[f64],
    rows: usize,
    cols: usize,
) -> (Vec<f64>, [usize; MAX_DIM]) {
    debug_assert_eq!(shape[axis], cols);
    debug_assert_eq!(mat.len(), rows * cols);
    let mut out_shape = shape;
    out_shape[axis] = rows;
    let mut out = vec![0.0; out_shape[0] * out_shape[1] * out_shape[2]];
    let (s0, s1, s2) = (shape[0], shape[1], shape[2]);
    unsafe {
        match axis {
            0 => {
                // out[r, jk] = sum_i mat[r, i] in[i, jk]
                let rest = s1 * s2;
                matrixmultiply::dgemm(
                    rows,
                    cols,
                    rest,
                    1.0,
                    mat.as_ptr(),
                    cols as isize,
                    1,
                    input.as_ptr(),
                    rest as isize,
                    1,
                    0.0,
                    out.as_mut_ptr(),
                    rest as isize,
                    1,
                );
            }
            1 => {
                for b in 0..s0 {
                    let inp = input.as_ptr().add(b * s1 * s2);
                    let dst = out.as_mut_ptr().add(b * rows * s2);
                    matrixmultiply::dgemm(
                        rows,
                        cols,
                        s2,
                        1.0,
                        mat.as_ptr(),
                        cols as isize,
                        1,
                        inp,
                        s2 as isize,
                        1,
                        0.0,
                        dst,
                        s2 as isize,
                        1,
                    );
                }
            }
            2 => {
                // out[bj, r] = sum_i in[bj, i] mat[r, i]
                let lead = s0 * s1;
                matrixmultiply::dgemm(
                    lead,
                    cols,
                    rows,
                    1.0,
                    input.as_ptr(),
                    cols as isize,
                    1,
                    mat.as_ptr(),
                    1,
                    cols as isize,
                    0.0,
                    out.as_mut_ptr(),
                    rows as isize,
                    1,
                );
            }
            _ => unreachable!("axis out of range"),
        }
    }
    (out, out_shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BoxDomain;

    fn basis_3d() -> (BoxDomain, TensorBasis) {
        let dom = BoxDomain::new(3, 6).unwrap();
        (dom, dom.scalar_basis())
    }

    #[test]
    fn eval_project_roundtrip_3d() {
        let (dom, basis) = basis_3d();
        let plan = Plan::natural(dom);
        let mut coeffs = vec![0.0; basis.len()];
        let mut state = 0x12345u64;
        for c in coeffs.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *c = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        let grid = plan.eval(&basis, &coeffs);
        let back = plan.project(&basis, &grid);
        for (a, b) in coeffs.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12, "roundtrip drift {a} vs {b}");
        }
    }

    #[test]
    fn roundtrip_survives_oversampling() {
        let dom = BoxDomain::new(3, 5).unwrap();
        let basis = dom.velocity_basis(1);
        let plan = Plan::dealiased(dom);
        let mut coeffs = vec![0.0; basis.len()];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4;
        }
        let back = plan.project(&basis, &plan.eval(&basis, &coeffs));
        for (a, b) in coeffs.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_is_exact_for_mode_products() {
        // Integrals of sin(jx) sin(kx) against the weight: orthonormality of
        // the continuous family should be reproduced exactly by the grid.
        let dom = BoxDomain::new(1, 8).unwrap();
        let plan = Plan::natural(dom);
        let basis = dom.scalar_basis();
        for j in 1..=8usize {
            for k in 1..=8usize {
                let mut cj = vec![0.0; basis.len()];
                cj[j - 1] = 1.0;
                let mut ck = vec![0.0; basis.len()];
                ck[k - 1] = 1.0;
                let gj = plan.eval(&basis, &cj);
                let gk = plan.eval(&basis, &ck);
                let prod: Vec<f64> = gj.iter().zip(&gk).map(|(a, b)| a * b).collect();
                let integral = plan.quadrature(&prod);
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!(
                    (integral - expect).abs() < 1e-12,
                    "orthonormality failed at ({j}, {k}): {integral}"
                );
            }
        }
    }

    #[test]
    fn cosine_constant_mode_integrates_to_sqrt_pi() {
        let dom = BoxDomain::new(1, 4).unwrap();
        let plan = Plan::natural(dom);
        let basis = dom.pressure_basis();
        let mut c = vec![0.0; basis.len()];
        c[0] = 1.0;
        let grid = plan.eval(&basis, &c);
        // 1/sqrt(pi) integrated over (0, pi).
        assert!((plan.quadrature(&grid) - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn grid_endpoint_values_vanish_for_sine() {
        let dom = BoxDomain::new(1, 5).unwrap();
        let plan = Plan::natural(dom);
        let basis = dom.scalar_basis();
        let coeffs = vec![1.0; basis.len()];
        let grid = plan.eval(&basis, &coeffs);
        assert_eq!(grid.len(), plan.grid_len());
        assert!(grid[0].abs() < 1e-14);
        assert!(grid[grid.len() - 1].abs() < 1e-14);
    }
}
