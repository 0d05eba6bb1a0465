//! Plants of the form `ẋ₁ = g₁(x₁)x₂`, `ẋ₂ = f₂(x₁,x₂) + g₂(x₁,x₂)u` and
//! their dynamics in lifted coordinates.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector1, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result, StateBlock};
use crate::lifting::{Bounds, LiftConfig, Matrix, Vector};
use crate::linalg;

pub trait Plant<const N: usize>: Send + Sync {
    fn name(&self) -> &str;
    fn g1(&self, x1: &Vector<N>) -> Result<Matrix<N>>;
    fn f2(&self, x1: &Vector<N>, x2: &Vector<N>) -> Vector<N>;
    fn g2(&self, x1: &Vector<N>, x2: &Vector<N>) -> Result<Matrix<N>>;

    /// `(ẋ₁, ẋ₂)` under input `u`.
    fn vector_field(
        &self,
        x1: &Vector<N>,
        x2: &Vector<N>,
        u: &Vector<N>,
    ) -> Result<(Vector<N>, Vector<N>)> {
        let dx1 = self.g1(x1)? * x2;
        let dx2 = self.f2(x1, x2) + self.g2(x1, x2)? * u;
        Ok((dx1, dx2))
    }
}

/// `ẋ₁ = x₂`, `ẋ₂ = u`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleIntegrator;

impl Plant<1> for DoubleIntegrator {
    fn name(&self) -> &str {
        "double_integrator"
    }

    fn g1(&self, _x1: &Vector1<f64>) -> Result<Matrix<1>> {
        Ok(Matrix::identity())
    }

    fn f2(&self, _x1: &Vector1<f64>, _x2: &Vector1<f64>) -> Vector1<f64> {
        Vector1::zeros()
    }

    fn g2(&self, _x1: &Vector1<f64>, _x2: &Vector1<f64>) -> Result<Matrix<1>> {
        Ok(Matrix::identity())
    }
}

pub fn builtin_double_integrator() -> DoubleIntegrator {
    DoubleIntegrator
}

/// Rigid body with 3-2-1 Euler angles `q = (φ, θ, ψ)` and body rates `ω`,
/// principal-axis inertia `J = diag(J₁, J₂, J₃)`, torque input.
#[derive(Debug, Clone, Copy)]
pub struct Attitude {
    inertia: Vector3<f64>,
}

impl Attitude {
    pub fn new(inertia: Vector3<f64>) -> Result<Self> {
        if inertia.iter().any(|&j| !(j > 0.0 && j.is_finite())) {
            return Err(Error::Config(format!(
                "principal inertias must be positive, got {:?}",
                inertia.as_slice()
            )));
        }
        Ok(Attitude { inertia })
    }

    pub fn inertia(&self) -> &Vector3<f64> {
        &self.inertia
    }

    fn check_gimbal(q: &Vector3<f64>) -> Result<()> {
        if !(q[1].abs() < FRAC_PI_2) {
            return Err(Error::Singular(format!(
                "Euler-rate matrix is singular at pitch {} (|pitch| >= pi/2)",
                q[1]
            )));
        }
        Ok(())
    }

    /// `S(q)` with `ω = S(q) q̇`.
    pub fn euler_rate_matrix(q: &Vector3<f64>) -> Matrix<3> {
        let (sp, cp) = q[0].sin_cos();
        let (st, ct) = q[1].sin_cos();
        Matrix::<3>::new(1.0, 0.0, -st, 0.0, cp, sp * ct, 0.0, -sp, cp * ct)
    }

    /// `S(q)⁻¹` in closed form.
    pub fn euler_rate_matrix_inv(q: &Vector3<f64>) -> Result<Matrix<3>> {
        Self::check_gimbal(q)?;
        let (sp, cp) = q[0].sin_cos();
        let (st, ct) = q[1].sin_cos();
        let (tt, sec) = (st / ct, ct.recip());
        Ok(Matrix::<3>::new(
            1.0,
            sp * tt,
            cp * tt,
            0.0,
            cp,
            -sp,
            0.0,
            sp * sec,
            cp * sec,
        ))
    }
}

pub fn builtin_attitude(inertia: Vector3<f64>) -> Result<Attitude> {
    Attitude::new(inertia)
}

impl Plant<3> for Attitude {
    fn name(&self) -> &str {
        "attitude"
    }

    fn g1(&self, q: &Vector3<f64>) -> Result<Matrix<3>> {
        Self::euler_rate_matrix_inv(q)
    }

    /// `-J⁻¹(ω × Jω)`, so that `Jω̇ + ω × Jω = τ`.
    fn f2(&self, _q: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
        -w.cross(&w.component_mul(&self.inertia))
            .component_div(&self.inertia)
    }

    fn g2(&self, _q: &Vector3<f64>, _w: &Vector3<f64>) -> Result<Matrix<3>> {
        Ok(Matrix::from_diagonal(&self.inertia.map(f64::recip)))
    }
}

/// Every lifted quantity the control law needs at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedState<const N: usize> {
    pub x1: Vector<N>,
    pub x2: Vector<N>,
    pub z1: Vector<N>,
    pub z2: Vector<N>,
    pub zeta1: Vector<N>,
    pub zeta2: Vector<N>,
    /// `ψ(ζ₂)`, equal to `χ₂`.
    pub psi2: Vector<N>,
    /// Diagonal of `∂φ(χ₁)`.
    pub dphi1: Vector<N>,
    /// Diagonal of `∂φ(χ₂)`.
    pub dphi2: Vector<N>,
}

/// A plant together with the lifting applied to each state block.
#[derive(Debug, Clone)]
pub struct LiftedDynamics<P, const N: usize> {
    pub plant: P,
    pub cfg1: LiftConfig<N>,
    pub cfg2: LiftConfig<N>,
}

impl<P: Plant<N>, const N: usize> LiftedDynamics<P, N> {
    pub fn new(plant: P, cfg1: LiftConfig<N>, cfg2: LiftConfig<N>) -> Self {
        LiftedDynamics { plant, cfg1, cfg2 }
    }

    /// Lifts a physical state. Fails if it lies outside the safe set.
    pub fn state_from_x(&self, x1: &Vector<N>, x2: &Vector<N>) -> Result<LiftedState<N>> {
        let chi1 = self.cfg1.normalize(x1).map_err(|e| e.in_block(StateBlock::X1))?;
        let chi2 = self.cfg2.normalize(x2).map_err(|e| e.in_block(StateBlock::X2))?;
        let z1 = self.cfg1.lift_normalized(&chi1, x1).map_err(|e| e.in_block(StateBlock::X1))?;
        let z2 = self.cfg2.lift_normalized(&chi2, x2).map_err(|e| e.in_block(StateBlock::X2))?;
        let dphi1 = self.cfg1.jacobian_diag(&chi1).map_err(|e| e.in_block(StateBlock::X1))?;
        let dphi2 = self.cfg2.jacobian_diag(&chi2).map_err(|e| e.in_block(StateBlock::X2))?;
        Ok(LiftedState {
            x1: *x1,
            x2: *x2,
            z1,
            z2,
            zeta1: self.cfg1.zeta(&z1),
            zeta2: self.cfg2.zeta(&z2),
            psi2: chi2,
            dphi1,
            dphi2,
        })
    }

    /// Builds the same bundle from lifted coordinates; never fails.
    ///
    /// `∂φ(ψ(ζ))` is evaluated as `1/ψ′(ζ)`, which stays accurate even where
    /// `ψ(ζ)` has rounded onto the boundary.
    pub fn state_from_z(&self, z1: &Vector<N>, z2: &Vector<N>) -> LiftedState<N> {
        let zeta1 = self.cfg1.zeta(z1);
        let zeta2 = self.cfg2.zeta(z2);
        let recip = |cfg: &LiftConfig<N>, zeta: &Vector<N>| {
            Vector::from_fn(|i, _| cfg.families[i].unlift_deriv(zeta[i]).recip())
        };
        LiftedState {
            x1: self.cfg1.recover(&zeta1),
            x2: self.cfg2.recover(&zeta2),
            z1: *z1,
            z2: *z2,
            zeta1,
            zeta2,
            psi2: self.cfg2.unlift(&zeta2),
            dphi1: recip(&self.cfg1, &zeta1),
            dphi2: recip(&self.cfg2, &zeta2),
        }
    }

    /// `Φ(ζ₁) = ∂φ(χ₁) g₁(x₁) D(x̄₂)`.
    pub fn phi(&self, s: &LiftedState<N>) -> Result<Matrix<N>> {
        let g1 = self.plant.g1(&s.x1)?;
        let b2 = self.cfg2.bounds.limits();
        Ok(Matrix::from_fn(|r, c| s.dphi1[r] * g1[(r, c)] * b2[c]))
    }

    /// `𝒢₁ = Φ(ζ₁) ψ(ζ₂)`.
    pub fn g1_lifted(&self, s: &LiftedState<N>) -> Result<Vector<N>> {
        Ok(self.phi(s)? * s.psi2)
    }

    /// `ℱ₂ = ∂φ(χ₂) f₂(x₁, x₂)`.
    pub fn f2_lifted(&self, s: &LiftedState<N>) -> Vector<N> {
        s.dphi2.component_mul(&self.plant.f2(&s.x1, &s.x2))
    }

    /// `𝒢₂ = ∂φ(χ₂) g₂(x₁, x₂)`.
    pub fn g2_lifted(&self, s: &LiftedState<N>) -> Result<Matrix<N>> {
        let g2 = self.plant.g2(&s.x1, &s.x2)?;
        Ok(Matrix::from_fn(|r, c| s.dphi2[r] * g2[(r, c)]))
    }

    pub fn eval_phi(&self, z1: &Vector<N>) -> Result<Matrix<N>> {
        self.phi(&self.state_from_z(z1, &Vector::zeros()))
    }

    pub fn eval_g1(&self, z1: &Vector<N>, z2: &Vector<N>) -> Result<Vector<N>> {
        self.g1_lifted(&self.state_from_z(z1, z2))
    }

    pub fn eval_f2(&self, z1: &Vector<N>, z2: &Vector<N>) -> Vector<N> {
        self.f2_lifted(&self.state_from_z(z1, z2))
    }

    pub fn eval_g2(&self, z1: &Vector<N>, z2: &Vector<N>) -> Result<Matrix<N>> {
        self.g2_lifted(&self.state_from_z(z1, z2))
    }

    /// `(ż₁, ż₂)` under input `u`.
    pub fn lifted_field(
        &self,
        z1: &Vector<N>,
        z2: &Vector<N>,
        u: &Vector<N>,
    ) -> Result<(Vector<N>, Vector<N>)> {
        let s = self.state_from_z(z1, z2);
        Ok((self.g1_lifted(&s)?, self.f2_lifted(&s) + self.g2_lifted(&s)? * u))
    }
}

/// Condition numbers above this mean the input gains are too close to singular.
pub const CONDITION_LIMIT: f64 = 1e2;

/// `‖f₂(x₁, 0)‖` above this means the plant is not at rest at zero velocity.
pub const REST_FORCE_TOL: f64 = 1e-12;

const MAX_LISTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub plant: String,
    pub samples: usize,
    pub min_singular_g1: f64,
    pub max_condition_g1: f64,
    pub min_singular_g2: f64,
    pub max_condition_g2: f64,
    /// Largest `‖f₂(x₁, 0)‖`; should vanish.
    pub max_f2_at_rest: f64,
    /// Smallest `‖f₂(x₁, x₂)‖` over samples with `x₂ ≠ 0`. Informational only:
    /// the converse direction of the rest condition is not enforced.
    pub min_f2_in_motion: f64,
    pub violation_count: usize,
    /// The first few violations, human readable.
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

fn box_corners<const N: usize>(scale: f64) -> impl Iterator<Item = Vector<N>> {
    (0..1usize << N).map(move |mask| {
        Vector::from_fn(|i, _| if mask >> i & 1 == 1 { scale } else { -scale })
    })
}

/// Sample-based audit of the structural assumptions on `f₂`, `g₁`, `g₂`
/// over the safe box: uniform draws plus all box corners scaled by 0.999.
pub fn check_assumptions<P: Plant<N>, const N: usize>(
    plant: &P,
    bounds1: &Bounds<N>,
    bounds2: &Bounds<N>,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    if samples == 0 {
        return Err(Error::Config("audit needs at least one sample".into()));
    }
    let b1 = bounds1.limits();
    let b2 = bounds2.limits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |b: &Vector<N>| Vector::<N>::from_fn(|i, _| b[i] * rng.gen_range(-1.0..1.0));
    let mut points: Vec<(Vector<N>, Vector<N>)> =
        (0..samples).map(|_| (draw(b1), draw(b2))).collect();
    for c1 in box_corners::<N>(0.999) {
        for c2 in box_corners::<N>(0.999) {
            points.push((c1.component_mul(b1), c2.component_mul(b2)));
        }
    }

    let mut report = AuditReport {
        plant: plant.name().to_string(),
        samples: points.len(),
        min_singular_g1: f64::INFINITY,
        max_condition_g1: 0.0,
        min_singular_g2: f64::INFINITY,
        max_condition_g2: 0.0,
        max_f2_at_rest: 0.0,
        min_f2_in_motion: f64::INFINITY,
        violation_count: 0,
        violations: Vec::new(),
    };
    let flag = |report: &mut AuditReport, msg: String| {
        report.violation_count += 1;
        if report.violations.len() < MAX_LISTED_VIOLATIONS {
            report.violations.push(msg);
        }
    };

    for (x1, x2) in &points {
        let at = || format!("x1={:?}, x2={:?}", x1.as_slice(), x2.as_slice());
        for (label, g) in [("g1", plant.g1(x1)), ("g2", plant.g2(x1, x2))] {
            match g {
                Ok(m) => {
                    let (lo, hi) = linalg::singular_value_range(&m);
                    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                    let (min_sv, max_cond) = if label == "g1" {
                        (&mut report.min_singular_g1, &mut report.max_condition_g1)
                    } else {
                        (&mut report.min_singular_g2, &mut report.max_condition_g2)
                    };
                    *min_sv = min_sv.min(lo);
                    *max_cond = max_cond.max(cond);
                    if !(cond <= CONDITION_LIMIT) {
                        flag(
                            &mut report,
                            format!("{label} near-singular (condition {cond:.3e}) at {}", at()),
                        );
                    }
                }
                Err(e) => flag(&mut report, format!("{label} singular at {}: {e}", at())),
            }
        }
        let rest = plant.f2(x1, &Vector::zeros()).norm();
        report.max_f2_at_rest = report.max_f2_at_rest.max(rest);
        if !(rest <= REST_FORCE_TOL) {
            flag(
                &mut report,
                format!("f2(x1, 0) = {rest:e} != 0 at x1={:?}", x1.as_slice()),
            );
        }
        if x2.amax() > 0.0 {
            report.min_f2_in_motion = report.min_f2_in_motion.min(plant.f2(x1, x2).norm());
        }
    }
    Ok(report)
}
