//! Componentwise scaling and lifting between the coordinate systems
//! `x` (physical), `χ = D_I(b)x` (normalized), `z = D(b)φ(χ)` (lifted) and
//! `ζ = D_I(b)z`.
//!
//! Diagonal matrices are carried as vectors; every product with one is a
//! componentwise scaling.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result, StateBlock};
use crate::sigmoid::SigmoidFamily;

pub type Vector<const N: usize> = SVector<f64, N>;
pub type Matrix<const N: usize> = SMatrix<f64, N, N>;

/// `diag(q)`.
pub fn diag<const N: usize>(q: &Vector<N>) -> Matrix<N> {
    Matrix::from_diagonal(q)
}

/// `diag(1/q₁, …, 1/qₙ)`.
pub fn diag_inv<const N: usize>(q: &Vector<N>) -> Result<Matrix<N>> {
    if let Some(i) = q.iter().position(|&v| v == 0.0) {
        return Err(Error::Singular(format!("diag_inv: component {i} is zero")));
    }
    Ok(Matrix::from_diagonal(&q.map(f64::recip)))
}

/// Strictly positive per-component limits of a box `|xᵢ| < bᵢ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<const N: usize>(Vector<N>);

impl<const N: usize> Bounds<N> {
    pub fn new(limits: Vector<N>) -> Result<Self> {
        if let Some(i) = limits.iter().position(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::Config(format!(
                "bound component {i} must be positive and finite, got {}",
                limits[i]
            )));
        }
        Ok(Bounds(limits))
    }

    pub fn from_slice(limits: &[f64]) -> Result<Self> {
        if limits.len() != N {
            return Err(Error::Dimension(format!(
                "expected {N} bounds, got {}",
                limits.len()
            )));
        }
        Self::new(Vector::from_column_slice(limits))
    }

    pub fn limits(&self) -> &Vector<N> {
        &self.0
    }

    /// `ζ = D_I(b) z`.
    pub fn zeta(&self, z: &Vector<N>) -> Vector<N> {
        z.component_div(&self.0)
    }
}

/// Bounds together with the sigmoid family used for each component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftConfig<const N: usize> {
    pub bounds: Bounds<N>,
    pub families: [SigmoidFamily; N],
}

impl<const N: usize> LiftConfig<N> {
    pub fn new(bounds: Bounds<N>, families: [SigmoidFamily; N]) -> Self {
        LiftConfig { bounds, families }
    }

    /// Same family on every component.
    pub fn uniform(bounds: Bounds<N>, family: SigmoidFamily) -> Self {
        LiftConfig::new(bounds, [family; N])
    }

    pub fn is_constrained(&self, i: usize) -> bool {
        self.families[i].is_constraining()
    }

    fn b(&self, i: usize) -> f64 {
        self.bounds.0[i]
    }

    /// `χ = D_I(b) x`, rejecting constrained components on or past the bound.
    pub fn normalize(&self, x: &Vector<N>) -> Result<Vector<N>> {
        for i in 0..N {
            if self.is_constrained(i) && !(x[i].abs() < self.b(i)) {
                return Err(Error::OutOfSafeSet {
                    block: StateBlock::X1,
                    component: i,
                    value: x[i],
                    bound: self.b(i),
                });
            }
        }
        Ok(self.bounds.zeta(x))
    }

    /// `z = D(b) φ(D_I(b) x)`.
    pub fn lift_state(&self, x: &Vector<N>) -> Result<Vector<N>> {
        self.lift_normalized(&self.normalize(x)?, x)
    }

    /// `lift_state` when `χ = normalize(x)` is already at hand.
    pub(crate) fn lift_normalized(&self, chi: &Vector<N>, x: &Vector<N>) -> Result<Vector<N>> {
        let mut z = Vector::zeros();
        for i in 0..N {
            z[i] = self.b(i) * self.lift_component(i, chi[i], x[i])?;
        }
        Ok(z)
    }

    fn lift_component(&self, i: usize, chi: f64, x: f64) -> Result<f64> {
        // Rounding can push a strictly interior x onto the guard band of φ;
        // report that as leaving the safe set rather than a domain error.
        self.families[i]
            .lift(chi)
            .map_err(|_| Error::OutOfSafeSet {
                block: StateBlock::X1,
                component: i,
                value: x,
                bound: self.b(i),
            })
    }

    pub fn zeta(&self, z: &Vector<N>) -> Vector<N> {
        self.bounds.zeta(z)
    }

    /// `ψ(ζ)` componentwise.
    pub fn unlift(&self, zeta: &Vector<N>) -> Vector<N> {
        Vector::from_fn(|i, _| self.families[i].unlift(zeta[i]))
    }

    /// `x = D(b) ψ(ζ)`; constrained components land strictly inside the box.
    pub fn recover(&self, zeta: &Vector<N>) -> Vector<N> {
        Vector::from_fn(|i, _| {
            let b = self.b(i);
            let x = b * self.families[i].unlift(zeta[i]);
            if self.is_constrained(i) && x.abs() >= b {
                b.next_down().copysign(x)
            } else {
                x
            }
        })
    }

    /// Diagonal of `∂φ/∂χ` at `χ`; every entry is strictly positive.
    pub fn jacobian_diag(&self, chi: &Vector<N>) -> Result<Vector<N>> {
        let mut d = Vector::zeros();
        for i in 0..N {
            d[i] = self.families[i]
                .lift_deriv(chi[i])
                .map_err(|_| Error::OutOfSafeSet {
                    block: StateBlock::X1,
                    component: i,
                    value: chi[i] * self.b(i),
                    bound: self.b(i),
                })?;
        }
        Ok(d)
    }

    /// `∂φ/∂χ` as a matrix.
    pub fn lift_jacobian(&self, chi: &Vector<N>) -> Result<Matrix<N>> {
        Ok(diag(&self.jacobian_diag(chi)?))
    }

    /// Relative distance `(bᵢ - |xᵢ|)/bᵢ` for constrained components,
    /// `None` for unconstrained ones.
    pub fn margins(&self, x: &Vector<N>) -> [Option<f64>; N] {
        std::array::from_fn(|i| {
            self.is_constrained(i)
                .then(|| (self.b(i) - x[i].abs()) / self.b(i))
        })
    }

    /// Strict membership in the open box (unconstrained components always pass).
    pub fn contains(&self, x: &Vector<N>) -> bool {
        (0..N).all(|i| !self.is_constrained(i) || x[i].abs() < self.b(i))
    }

    /// Sum of sigmoid integrals `Σ 𝒱ᵢ(ζᵢ)`.
    pub fn integral_sum(&self, zeta: &Vector<N>) -> f64 {
        (0..N).map(|i| self.families[i].integral(zeta[i])).sum()
    }
}
