use std::f64::consts::FRAC_PI_2;

use nalgebra::{Cholesky, Matrix3, Matrix6, Vector3, Vector6, U6};

use super::{ControlInput, PlantCoefficients, PlantError, PlantState};

/// Distance from ±π/2 pitch at which the Euler-rate transform is refused.
pub const GIMBAL_MARGIN: f64 = 1e-3;

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Body-to-Earth rotation for Z-Y-X (yaw, pitch, roll) Euler angles.
pub fn rotation_matrix(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sp, cp) = roll.sin_cos();
    let (st, ct) = pitch.sin_cos();
    let (ss, cs) = yaw.sin_cos();
    Matrix3::new(
        cs * ct,
        -ss * cp + cs * st * sp,
        ss * sp + cs * cp * st,
        ss * ct,
        cs * cp + sp * st * ss,
        -cs * sp + st * ss * cp,
        -st,
        ct * sp,
        ct * cp,
    )
}

/// Body angular rates to Euler angle rates.
pub fn euler_rate_transform(roll: f64, pitch: f64) -> Result<Matrix3<f64>, PlantError> {
    if !(pitch.abs() < FRAC_PI_2 - GIMBAL_MARGIN) {
        return Err(PlantError::GimbalLock { pitch });
    }
    let (sp, cp) = roll.sin_cos();
    let (st, ct) = pitch.sin_cos();
    let tt = st / ct;
    Ok(Matrix3::new(
        1.0,
        sp * tt,
        cp * tt,
        0.0,
        cp,
        -sp,
        0.0,
        sp / ct,
        cp / ct,
    ))
}

/// Earth-frame pose rate from body velocity.
pub fn kinematics(eta: &Vector6<f64>, nu: &Vector6<f64>) -> Result<Vector6<f64>, PlantError> {
    let rot = rotation_matrix(eta[3], eta[4], eta[5]);
    let t = euler_rate_transform(eta[3], eta[4])?;
    let lin = rot * nu.fixed_rows::<3>(0);
    let ang = t * nu.fixed_rows::<3>(3);
    Ok(Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z))
}

/// A validated coefficient set together with its factored inertia matrix.
#[derive(Debug, Clone)]
pub struct Plant {
    coeffs: PlantCoefficients,
    mass: Matrix6<f64>,
    mass_chol: Cholesky<f64, U6>,
}

impl Plant {
    pub fn new(coeffs: PlantCoefficients) -> Result<Self, PlantError> {
        coeffs.validate()?;
        let mass = coeffs.mass_matrix();
        let mass_chol = mass.cholesky().ok_or_else(|| {
            PlantError::InvalidCoefficients("mass matrix is not positive definite".into())
        })?;
        Ok(Self {
            coeffs,
            mass,
            mass_chol,
        })
    }

    pub fn coefficients(&self) -> &PlantCoefficients {
        &self.coeffs
    }

    pub fn mass_matrix(&self) -> &Matrix6<f64> {
        &self.mass
    }

    /// Rigid-body and added-mass Coriolis/centripetal matrix, built from the
    /// total inertia matrix. Skew-symmetric for every `nu`.
    pub fn coriolis(&self, nu: &Vector6<f64>) -> Matrix6<f64> {
        let nu1 = nu.fixed_rows::<3>(0);
        let nu2 = nu.fixed_rows::<3>(3);
        let m11 = self.mass.fixed_view::<3, 3>(0, 0);
        let m12 = self.mass.fixed_view::<3, 3>(0, 3);
        let m21 = self.mass.fixed_view::<3, 3>(3, 0);
        let m22 = self.mass.fixed_view::<3, 3>(3, 3);
        let a = skew(&(m11 * nu1 + m12 * nu2));
        let b = skew(&(m21 * nu1 + m22 * nu2));
        let mut c = Matrix6::zeros();
        c.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-a));
        c.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-a));
        c.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-b));
        c
    }

    /// Hydrodynamic damping force `D(nu) nu`.
    pub fn damping_force(&self, nu: &Vector6<f64>) -> Vector6<f64> {
        let c = &self.coeffs;
        let mut d = Vector6::zeros();
        for i in 0..3 {
            d[i] = c.linear_damping_linear[i] * nu[i]
                + c.quadratic_damping_linear[i] * nu[i].abs() * nu[i];
            d[i + 3] = c.linear_damping_angular[i] * nu[i + 3]
                + c.quadratic_damping_angular[i] * nu[i + 3].abs() * nu[i + 3];
        }
        let speed = nu[0].abs();
        let lat = c.crossflow_lateral() * nalgebra::Vector2::new(nu[1], nu[5]);
        let vert = c.crossflow_vertical() * nalgebra::Vector2::new(nu[2], nu[4]);
        d[1] += speed * lat.x;
        d[5] += speed * lat.y;
        d[2] += speed * vert.x;
        d[4] += speed * vert.y;
        d
    }

    /// Gravity and buoyancy restoring vector `g(eta)`.
    pub fn restoring_force(&self, eta: &Vector6<f64>) -> Vector6<f64> {
        let c = &self.coeffs;
        let (w, b) = (c.weight, c.buoyancy);
        let (rg, rb) = (c.r_g, c.r_b);
        let (sp, cp) = eta[3].sin_cos();
        let (st, ct) = eta[4].sin_cos();
        let dx = rg[0] * w - rb[0] * b;
        let dy = rg[1] * w - rb[1] * b;
        let dz = rg[2] * w - rb[2] * b;
        Vector6::new(
            (w - b) * st,
            -(w - b) * ct * sp,
            -(w - b) * ct * cp,
            -dy * ct * cp + dz * ct * sp,
            dz * st + dx * ct * cp,
            -dx * ct * sp - dy * st,
        )
    }

    /// Propeller and fin forces. Fin lift uses the surge speed as the
    /// effective inflow velocity.
    pub fn actuator_force(&self, nu: &Vector6<f64>, input: &ControlInput) -> Vector6<f64> {
        let c = &self.coeffs;
        let thrust = input.n.abs() * input.n;
        let u2 = nu[0] * nu[0];
        Vector6::new(
            c.k_fprop * thrust,
            c.k_lift_rudder * input.delta_rudder * u2,
            c.k_lift_elevator * input.delta_elevator * u2,
            c.k_mprop * thrust,
            c.k_moment_elevator * input.delta_elevator * u2,
            c.k_moment_rudder * input.delta_rudder * u2,
        )
    }

    /// Body-frame acceleration `M^-1 (tau - C(nu) nu - D(nu) nu - g(eta))`.
    pub fn assemble_dynamics(
        &self,
        state: &PlantState,
        input: &ControlInput,
    ) -> Result<Vector6<f64>, PlantError> {
        let nu = &state.nu;
        let rhs = self.actuator_force(nu, input)
            - self.coriolis(nu) * nu
            - self.damping_force(nu)
            - self.restoring_force(&state.eta);
        let acc = self.mass_chol.solve(&rhs);
        if acc.iter().all(|v| v.is_finite()) {
            Ok(acc)
        } else {
            Err(PlantError::NonFiniteState)
        }
    }

    /// Kinetic energy `½ νᵀ M ν`.
    pub fn kinetic_energy(&self, nu: &Vector6<f64>) -> f64 {
        0.5 * nu.dot(&(self.mass * nu))
    }

    fn derivative(
        &self,
        state: &PlantState,
        input: &ControlInput,
    ) -> Result<(Vector6<f64>, Vector6<f64>), PlantError> {
        Ok((
            kinematics(&state.eta, &state.nu)?,
            self.assemble_dynamics(state, input)?,
        ))
    }

    /// One classical fourth-order Runge-Kutta step with the input held
    /// constant across the step.
    pub fn step(
        &self,
        state: &PlantState,
        input: &ControlInput,
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PlantError::InvalidStep(dt));
        }
        let advance = |k: &(Vector6<f64>, Vector6<f64>), h: f64| {
            PlantState::new(state.eta + k.0 * h, state.nu + k.1 * h)
        };
        let k1 = self.derivative(state, input)?;
        let k2 = self.derivative(&advance(&k1, 0.5 * dt), input)?;
        let k3 = self.derivative(&advance(&k2, 0.5 * dt), input)?;
        let k4 = self.derivative(&advance(&k3, dt), input)?;
        let w = dt / 6.0;
        let next = PlantState::new(
            state.eta + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * w,
            state.nu + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * w,
        );
        if !next.is_finite() {
            return Err(PlantError::NonFiniteState);
        }
        if !(next.pitch().abs() < FRAC_PI_2 - GIMBAL_MARGIN) {
            return Err(PlantError::GimbalLock {
                pitch: next.pitch(),
            });
        }
        Ok(next)
    }

    /// Surge speed at which propeller thrust balances quadratic surge drag,
    /// valid when linear surge damping is zero.
    pub fn terminal_surge(&self, n: f64) -> f64 {
        let c = &self.coeffs;
        (c.k_fprop * n * n / c.quadratic_damping_linear[0]).sqrt()
    }
}
