//! The constraint-lifting backstepping law.
//!
//! With `e₁ = z₁ - z₁d` and `e₂ = Φ(ζ₁)ψ(ζ₂) + k₁e₁`, the input
//!
//! ```text
//! u = -𝒢₂⁻¹ (ℱ₂ + k₂ D(x̄₂) Φᵀ(ζ₁) e₂)
//! ```
//!
//! gives `V̇ = -k₁e₁ᵀe₁ + (1 + k₁k₂)e₂ᵀe₁ - k₂e₂ᵀe₂` for
//! `V = ½e₁ᵀe₁ + Σᵢ 𝒱(ζ₂ᵢ)`, which is `-‖√k₁e₁ - √k₂e₂‖²` when `k₂ = 1/k₁`.

use serde::Serialize;

use crate::error::{Error, Result, StateBlock};
use crate::lifting::{LiftConfig, Matrix, Vector};
use crate::linalg;
use crate::plant::{LiftedDynamics, LiftedState, Plant};
use crate::sigmoid::SigmoidFamily;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig<const N: usize> {
    pub k1: f64,
    pub k2: f64,
    pub x1d: Vector<N>,
    /// Cached `lift_state(x1d)`.
    pub z1d: Vector<N>,
    pub cfg1: LiftConfig<N>,
    pub cfg2: LiftConfig<N>,
}

struct LawParts<const N: usize> {
    e1: Vector<N>,
    k1e1: Vector<N>,
    e2: Vector<N>,
    f2: Vector<N>,
    g2: Matrix<N>,
    u: Vector<N>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlRecord<const N: usize> {
    pub e1: Vector<N>,
    pub e2: Vector<N>,
    pub u: Vector<N>,
    pub v: f64,
    pub vdot: f64,
}

impl<const N: usize> ControllerConfig<N> {
    /// Controller with the tied gain `k₂ = 1/k₁`.
    pub fn new<P: Plant<N>>(lifted: &LiftedDynamics<P, N>, k1: f64, x1d: Vector<N>) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::Config(format!("k1 must be positive, got {k1}")));
        }
        let z1d = lifted
            .cfg1
            .lift_state(&x1d)
            .map_err(|e| match e.in_block(StateBlock::X1) {
                Error::OutOfSafeSet { component, value, bound, .. } => Error::Config(format!(
                    "desired state x1d[{component}] = {value} must satisfy |x1d| < {bound}"
                )),
                other => other,
            })?;
        Ok(ControllerConfig {
            k1,
            k2: k1.recip(),
            x1d,
            z1d,
            cfg1: lifted.cfg1,
            cfg2: lifted.cfg2,
        })
    }

    /// Overrides `k₂`. Anything but `1/k₁` forfeits the closed-form `V̇`.
    pub fn with_k2(mut self, k2: f64) -> Result<Self> {
        if !(k2 > 0.0 && k2.is_finite()) {
            return Err(Error::Config(format!("k2 must be positive, got {k2}")));
        }
        self.k2 = k2;
        if !self.gain_tied() {
            log::warn!(
                "k2 = {k2} differs from 1/k1 = {}; V̇ is no longer guaranteed to be nonpositive",
                self.k1.recip()
            );
        }
        Ok(self)
    }

    pub fn gain_tied(&self) -> bool {
        (self.k1 * self.k2 - 1.0).abs() <= 1e-12
    }

    pub fn error_e1(&self, z1: &Vector<N>) -> Vector<N> {
        z1 - self.z1d
    }

    pub fn error_e2<P: Plant<N>>(
        &self,
        lifted: &LiftedDynamics<P, N>,
        z1: &Vector<N>,
        z2: &Vector<N>,
    ) -> Result<Vector<N>> {
        let s = lifted.state_from_z(z1, z2);
        Ok(lifted.g1_lifted(&s)? + self.k1 * self.error_e1(z1))
    }

    pub fn lyapunov(&self, z1: &Vector<N>, z2: &Vector<N>) -> f64 {
        let e1 = self.error_e1(z1);
        0.5 * e1.dot(&e1) + self.cfg2.integral_sum(&self.cfg2.zeta(z2))
    }

    fn law<P: Plant<N>>(&self, lifted: &LiftedDynamics<P, N>, s: &LiftedState<N>) -> Result<LawParts<N>> {
        let phi = lifted.phi(s)?;
        let e1 = self.error_e1(&s.z1);
        let k1e1 = self.k1 * e1;
        let e2 = phi * s.psi2 + k1e1;
        let f2 = lifted.f2_lifted(s);
        let g2 = lifted.g2_lifted(s)?;
        let b2 = lifted.cfg2.bounds.limits();
        let feedback = self.k2 * b2.component_mul(&(phi.transpose() * e2));
        let u = -(linalg::invert(&g2)? * (f2 + feedback));
        Ok(LawParts { e1, k1e1, e2, f2, g2, u })
    }

    /// Only the input; skips the Lyapunov bookkeeping.
    pub fn input<P: Plant<N>>(&self, lifted: &LiftedDynamics<P, N>, s: &LiftedState<N>) -> Result<Vector<N>> {
        Ok(self.law(lifted, s)?.u)
    }

    /// The full control computation at a lifted state.
    pub fn evaluate<P: Plant<N>>(
        &self,
        lifted: &LiftedDynamics<P, N>,
        s: &LiftedState<N>,
    ) -> Result<ControlRecord<N>> {
        let p = self.law(lifted, s)?;
        let vdot = self.rate_from_parts(s, &p.e1, &p.k1e1, &p.e2, &p.f2, &p.g2, &p.u);
        Ok(ControlRecord {
            e1: p.e1,
            e2: p.e2,
            u: p.u,
            v: self.lyapunov(&s.z1, &s.z2),
            vdot,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn rate_from_parts(
        &self,
        s: &LiftedState<N>,
        e1: &Vector<N>,
        k1e1: &Vector<N>,
        e2: &Vector<N>,
        f2: &Vector<N>,
        g2: &Matrix<N>,
        u: &Vector<N>,
    ) -> f64 {
        let z2dot = f2 + g2 * u;
        let zeta2dot = self.cfg2.zeta(&z2dot);
        // -k₁e₁ᵀe₁ + e₂ᵀe₁ grouped so it is exactly zero when e₂ = k₁e₁
        e1.dot(&(e2 - k1e1)) + s.psi2.dot(&zeta2dot)
    }

    /// `u` at lifted coordinates `(z₁, z₂)`.
    pub fn control<P: Plant<N>>(
        &self,
        lifted: &LiftedDynamics<P, N>,
        z1: &Vector<N>,
        z2: &Vector<N>,
    ) -> Result<Vector<N>> {
        Ok(self.evaluate(lifted, &lifted.state_from_z(z1, z2))?.u)
    }

    /// Analytic `V̇` for an arbitrary input `u`.
    pub fn lyapunov_rate<P: Plant<N>>(
        &self,
        lifted: &LiftedDynamics<P, N>,
        z1: &Vector<N>,
        z2: &Vector<N>,
        u: &Vector<N>,
    ) -> Result<f64> {
        let s = lifted.state_from_z(z1, z2);
        let e1 = self.error_e1(z1);
        let k1e1 = self.k1 * e1;
        let e2 = lifted.phi(&s)? * s.psi2 + k1e1;
        let f2 = lifted.f2_lifted(&s);
        let g2 = lifted.g2_lifted(&s)?;
        Ok(self.rate_from_parts(&s, &e1, &k1e1, &e2, &f2, &g2, u))
    }

    /// Lifts a measurement `(x₁, x₂)` and evaluates the law there.
    pub fn measure<P: Plant<N>>(
        &self,
        lifted: &LiftedDynamics<P, N>,
        x1: &Vector<N>,
        x2: &Vector<N>,
    ) -> Result<(LiftedState<N>, ControlRecord<N>)> {
        let s = lifted.state_from_x(x1, x2)?;
        let rec = self.evaluate(lifted, &s)?;
        Ok((s, rec))
    }

    /// Baseline law from a quadratic `½e₂²` term on the scalar double
    /// integrator with an unconstrained position:
    /// `u = -(e₁ + k₁𝒢₁ + k₂e₂)`.
    pub fn classical_control_di<P: Plant<N>>(
        &self,
        lifted: &LiftedDynamics<P, N>,
        z1: &Vector<N>,
        z2: &Vector<N>,
    ) -> Result<f64> {
        if N != 1 {
            return Err(Error::Dimension(format!(
                "the quadratic baseline is defined for the scalar double integrator, got n = {N}"
            )));
        }
        if self.cfg1.families[0] != SigmoidFamily::Identity {
            return Err(Error::Config(
                "the quadratic baseline assumes an unconstrained (identity) position".into(),
            ));
        }
        let s = lifted.state_from_z(z1, z2);
        let g1 = lifted.g1_lifted(&s)?[0];
        let e1 = self.error_e1(z1)[0];
        let e2 = g1 + self.k1 * e1;
        Ok(-(e1 + self.k1 * g1 + self.k2 * e2))
    }
}

impl<const N: usize> ControlRecord<N> {
    /// `-‖√k₁e₁ - √k₂e₂‖²`, the value `V̇` takes under the tied gain.
    pub fn tied_rate(&self, k1: f64, k2: f64) -> f64 {
        let d = k1.sqrt() * self.e1 - k2.sqrt() * self.e2;
        -d.dot(&d)
    }

    /// `-k₁e₁ᵀe₁ + (1 + k₁k₂)e₂ᵀe₁ - k₂e₂ᵀe₂`, valid for any `k₂`.
    pub fn general_rate(&self, k1: f64, k2: f64) -> f64 {
        -k1 * self.e1.dot(&self.e1) + (1.0 + k1 * k2) * self.e2.dot(&self.e1)
            - k2 * self.e2.dot(&self.e2)
    }
}

/// Scalar record used for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct GainReport {
    pub k1: f64,
    pub k2: f64,
    pub tied: bool,
}

impl<const N: usize> From<&ControllerConfig<N>> for GainReport {
    fn from(c: &ControllerConfig<N>) -> Self {
        GainReport {
            k1: c.k1,
            k2: c.k2,
            tied: c.gain_tied(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::Bounds;
    use crate::plant::{Attitude, DoubleIntegrator};
    use nalgebra::{vector, Vector1, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn speed_limited_di() -> LiftedDynamics<DoubleIntegrator, 1> {
        LiftedDynamics::new(
            DoubleIntegrator,
            LiftConfig::uniform(Bounds::new(vector![1.0]).unwrap(), SigmoidFamily::Identity),
            LiftConfig::uniform(Bounds::new(vector![1.0]).unwrap(), SigmoidFamily::Atanh),
        )
    }

    fn attitude() -> LiftedDynamics<Attitude, 3> {
        LiftedDynamics::new(
            Attitude::new(vector![1.0, 2.0, 3.0]).unwrap(),
            LiftConfig::uniform(Bounds::new(Vector3::repeat(PI / 3.0)).unwrap(), SigmoidFamily::Atanh),
            LiftConfig::uniform(
                Bounds::new(vector![0.03, 0.02, 0.01]).unwrap(),
                SigmoidFamily::Atanh,
            ),
        )
    }

    #[test]
    fn rejects_bad_configs() {
        let l = speed_limited_di();
        assert!(ControllerConfig::new(&l, 0.0, vector![0.0]).is_err());
        assert!(ControllerConfig::new(&l, 1.0, vector![0.0]).unwrap().with_k2(-1.0).is_err());
        let a = attitude();
        let err = ControllerConfig::new(&a, 0.1, vector![0.0, 1.1, 0.0]).unwrap_err();
        assert!(err.to_string().contains("x1d[1]"), "{err}");
    }

    #[test]
    fn default_gain_is_tied() {
        let c = ControllerConfig::new(&speed_limited_di(), 0.1, vector![0.0]).unwrap();
        assert_eq!(c.k2, 10.0);
        assert!(c.gain_tied());
        assert!(!c.with_k2(1.0).unwrap().gain_tied());
    }

    #[test]
    fn error_examples() {
        let scalar = LiftedDynamics::new(
            DoubleIntegrator,
            LiftConfig::uniform(Bounds::new(vector![1.0]).unwrap(), SigmoidFamily::Atanh),
            LiftConfig::uniform(Bounds::new(vector![1.0]).unwrap(), SigmoidFamily::Atanh),
        );
        let c = ControllerConfig::new(&scalar, 1.0, vector![0.5]).unwrap();
        assert_eq!(c.error_e1(&c.z1d), vector![0.0]);
        assert!((c.error_e1(&vector![0.0])[0] + 0.549_306_144_334_054_8).abs() < 1e-15);
        let d = vector![0.25];
        assert_eq!(c.error_e1(&(c.z1d + d)) - c.error_e1(&c.z1d), d);
    }

    #[test]
    fn e2_examples() {
        let l = speed_limited_di();
        let c = ControllerConfig::new(&l, 0.7, vector![0.3]).unwrap();
        assert_eq!(c.error_e2(&l, &c.z1d, &vector![0.0]).unwrap(), vector![0.0]);
        let z1 = vector![-1.2];
        let e2 = c.error_e2(&l, &z1, &vector![0.0]).unwrap();
        assert_eq!(e2, 0.7 * c.error_e1(&z1));
        // scalar form: e₂ = tanh(z₂) + k₁e₁
        let z2 = vector![0.8];
        let e2 = c.error_e2(&l, &z1, &z2).unwrap()[0];
        assert!((e2 - (f64::tanh(0.8) + 0.7 * (-1.2 - 0.3))).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_has_zero_input() {
        let a = attitude();
        let c = ControllerConfig::new(&a, 0.1, vector![0.2, -0.4, 0.9]).unwrap();
        let u = c.control(&a, &c.z1d, &Vector3::zeros()).unwrap();
        assert_eq!(u, Vector3::zeros());
        assert_eq!(c.lyapunov(&c.z1d, &Vector3::zeros()), 0.0);
        assert_eq!(c.lyapunov_rate(&a, &c.z1d, &Vector3::zeros(), &u).unwrap(), 0.0);
    }

    #[test]
    fn double_integrator_closed_form() {
        let l = speed_limited_di();
        let (k1, k2) = (0.8, 1.3);
        let c = ControllerConfig::new(&l, k1, vector![0.2]).unwrap().with_k2(k2).unwrap();
        for (z1, z2) in [(0.0, 0.5), (1.5, -2.0), (-3.0, 4.0)] {
            let e1 = z1 - 0.2;
            let u = c.control(&l, &vector![z1], &vector![z2]).unwrap()[0];
            let sech2 = 1.0 / f64::cosh(z2).powi(2);
            let expected = -k2 * sech2 * (f64::tanh(z2) + k1 * e1);
            assert!((u - expected).abs() < 1e-14 * expected.abs().max(1.0));
            // closed loop ż₂ loses the cosh² factor
            let (_, z2dot) = l.lifted_field(&vector![z1], &vector![z2], &vector![u]).unwrap();
            let target = -k2 * (f64::tanh(z2) + k1 * e1);
            assert!((z2dot[0] - target).abs() < 1e-12 * target.abs().max(1.0));
        }
    }

    #[test]
    fn lyapunov_examples() {
        let l = speed_limited_di();
        let c = ControllerConfig::new(&l, 1.0, vector![0.1]).unwrap();
        let (z1, z2) = (vector![0.6], vector![-1.7]);
        let e1: f64 = 0.5;
        let expected = 0.5 * e1 * e1 + f64::cosh(-1.7).ln();
        assert!((c.lyapunov(&z1, &z2) - expected).abs() < 1e-14);
        assert!(c.lyapunov(&vector![0.1], &vector![1e-3]) > 0.0);
        assert!(c.lyapunov(&vector![0.1 + 1e-6], &vector![0.0]) > 0.0);
    }

    #[test]
    fn gain_tie_dissipation_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = attitude();
        let c = ControllerConfig::new(&a, 0.1, vector![0.3, -0.5, 0.7]).unwrap();
        let b2 = vector![0.03, 0.02, 0.01];
        for _ in 0..2_000 {
            let z1 = Vector3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
            let z2 = Vector3::from_fn(|i, _| b2[i] * rng.gen_range(-10.0..10.0));
            let rec = c.evaluate(&a, &a.state_from_z(&z1, &z2)).unwrap();
            let closed = rec.tied_rate(c.k1, c.k2);
            assert!(rec.vdot <= 1e-12);
            // ℱ₂ and 𝒢₂u cancel at magnitude cosh²(ζ₂)‖ℱ₂‖, which costs digits near ζ₂ = 10
            assert!((rec.vdot - closed).abs() < 1e-8 * closed.abs().max(1.0), "{} vs {closed}", rec.vdot);
        }
    }

    #[test]
    fn general_gain_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = LiftedDynamics::new(
            DoubleIntegrator,
            LiftConfig::uniform(Bounds::new(vector![2.0]).unwrap(), SigmoidFamily::Tan),
            LiftConfig::uniform(Bounds::new(vector![0.5]).unwrap(), SigmoidFamily::Erf),
        );
        for _ in 0..1_000 {
            let k1 = rng.gen_range(0.05..5.0);
            let k2 = rng.gen_range(0.05..5.0);
            let c = ControllerConfig::new(&l, k1, vector![0.4]).unwrap().with_k2(k2).unwrap();
            let z1 = Vector1::new(rng.gen_range(-10.0..10.0));
            let z2 = Vector1::new(rng.gen_range(-2.0..2.0));
            let rec = c.evaluate(&l, &l.state_from_z(&z1, &z2)).unwrap();
            let g = rec.general_rate(k1, k2);
            assert!((rec.vdot - g).abs() < 1e-10 * g.abs().max(1.0));
        }
    }

    #[test]
    fn rate_vanishes_on_the_kernel() {
        let a = attitude();
        let c = ControllerConfig::new(&a, 0.1, vector![0.3, -0.5, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let z1 = Vector3::from_fn(|_, _| rng.gen_range(-4.0..4.0));
            let rec = c.evaluate(&a, &a.state_from_z(&z1, &Vector3::zeros())).unwrap();
            assert_eq!(rec.e2, c.k1 * rec.e1);
            assert_eq!(rec.vdot, 0.0);
        }
        // away from the kernel the rate is strictly negative
        let rec = c
            .evaluate(&a, &a.state_from_z(&vector![1.0, 0.0, 0.0], &vector![0.01, 0.0, 0.0]))
            .unwrap();
        assert!(rec.vdot < 0.0);
    }

    #[test]
    fn classical_baseline() {
        let l = speed_limited_di();
        let c = ControllerConfig::new(&l, 1.0, vector![0.0]).unwrap();
        assert_eq!(c.classical_control_di(&l, &vector![0.0], &vector![0.0]).unwrap(), 0.0);

        // ratio of closed-loop ż₂ at z₂ = 5, e₁ = 0, k₁ = k₂ = 1
        let z2 = vector![5.0];
        let uc = c.classical_control_di(&l, &vector![0.0], &z2).unwrap();
        let up = c.control(&l, &vector![0.0], &z2).unwrap()[0];
        let (_, dc) = l.lifted_field(&vector![0.0], &z2, &vector![uc]).unwrap();
        let (_, dp) = l.lifted_field(&vector![0.0], &z2, &vector![up]).unwrap();
        // |e₁ + k₁tanh + k₂e₂| / |tanh + k₁e₁| = 2 here, times cosh²(5)
        let ratio = dc[0].abs() / dp[0].abs();
        let c5 = f64::cosh(5.0).powi(2);
        assert!((ratio / (2.0 * c5) - 1.0).abs() < 1e-12);
        assert!((c5 - 5507.116).abs() < 1e-3);
        assert!(f64::cosh(10.0).powi(2) > 1e7);

        let a = attitude();
        let ca = ControllerConfig::new(&a, 0.1, Vector3::zeros()).unwrap();
        assert!(matches!(
            ca.classical_control_di(&a, &Vector3::zeros(), &Vector3::zeros()),
            Err(Error::Dimension(_))
        ));
    }
}
