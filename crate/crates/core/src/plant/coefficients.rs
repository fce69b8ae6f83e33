use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use super::PlantError;

const DEFAULT_COEFFICIENTS: &str = include_str!("../../data/remus_reduced.toml");

/// Hydrodynamic, rigid-body, restoring and actuator coefficients.
///
/// The file format is a flat TOML table; see `data/remus_reduced.toml` for the
/// shipped set and the meaning of every key. Added-mass and damping entries
/// are stored as non-negative magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantCoefficients {
    pub mass: f64,
    pub weight: f64,
    pub buoyancy: f64,
    pub inertia: [f64; 3],
    pub r_g: [f64; 3],
    pub r_b: [f64; 3],

    pub added_mass_linear: [f64; 3],
    pub added_mass_angular: [f64; 3],

    pub linear_damping_linear: [f64; 3],
    pub linear_damping_angular: [f64; 3],
    pub quadratic_damping_linear: [f64; 3],
    pub quadratic_damping_angular: [f64; 3],

    pub crossflow_sway_sway: f64,
    pub crossflow_sway_yaw: f64,
    pub crossflow_yaw_sway: f64,
    pub crossflow_yaw_yaw: f64,
    pub crossflow_heave_heave: f64,
    pub crossflow_heave_pitch: f64,
    pub crossflow_pitch_heave: f64,
    pub crossflow_pitch_pitch: f64,

    pub k_fprop: f64,
    pub k_mprop: f64,
    pub k_lift_rudder: f64,
    pub k_moment_rudder: f64,
    pub k_lift_elevator: f64,
    pub k_moment_elevator: f64,
}

impl Default for PlantCoefficients {
    fn default() -> Self {
        // The shipped file is validated by the test suite.
        Self::from_toml_str(DEFAULT_COEFFICIENTS).expect("bundled coefficient file is valid")
    }
}

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

impl PlantCoefficients {
    pub fn from_toml_str(text: &str) -> Result<Self, PlantError> {
        let coeffs: Self =
            toml::from_str(text).map_err(|e| PlantError::InvalidCoefficients(e.to_string()))?;
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlantError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            PlantError::InvalidCoefficients(format!("{}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("coefficients serialize to TOML")
    }

    /// Rigid-body plus added-mass inertia matrix.
    pub fn mass_matrix(&self) -> Matrix6<f64> {
        let m = self.mass;
        let s_rg = skew(&Vector3::from(self.r_g));
        let mut mm = Matrix6::zeros();
        mm.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Matrix3::identity() * m));
        mm.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-m * s_rg));
        mm.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * s_rg));
        mm.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&Matrix3::from_diagonal(&Vector3::from(self.inertia)));
        for i in 0..3 {
            mm[(i, i)] += self.added_mass_linear[i];
            mm[(i + 3, i + 3)] += self.added_mass_angular[i];
        }
        mm
    }

    /// `[[sway-sway, sway-yaw], [yaw-sway, yaw-yaw]]`
    pub fn crossflow_lateral(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.crossflow_sway_sway,
            self.crossflow_sway_yaw,
            self.crossflow_yaw_sway,
            self.crossflow_yaw_yaw,
        )
    }

    /// `[[heave-heave, heave-pitch], [pitch-heave, pitch-pitch]]`
    pub fn crossflow_vertical(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.crossflow_heave_heave,
            self.crossflow_heave_pitch,
            self.crossflow_pitch_heave,
            self.crossflow_pitch_pitch,
        )
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |msg: String| Err(PlantError::InvalidCoefficients(msg));
        let scalars = [
            self.mass,
            self.weight,
            self.buoyancy,
            self.crossflow_sway_sway,
            self.crossflow_sway_yaw,
            self.crossflow_yaw_sway,
            self.crossflow_yaw_yaw,
            self.crossflow_heave_heave,
            self.crossflow_heave_pitch,
            self.crossflow_pitch_heave,
            self.crossflow_pitch_pitch,
            self.k_fprop,
            self.k_mprop,
            self.k_lift_rudder,
            self.k_moment_rudder,
            self.k_lift_elevator,
            self.k_moment_elevator,
        ];
        let vectors = [
            self.inertia,
            self.r_g,
            self.r_b,
            self.added_mass_linear,
            self.added_mass_angular,
            self.linear_damping_linear,
            self.linear_damping_angular,
            self.quadratic_damping_linear,
            self.quadratic_damping_angular,
        ];
        if !scalars.iter().chain(vectors.iter().flatten()).all(|v| v.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        if self.weight <= 0.0 || self.buoyancy <= 0.0 {
            return bad(format!(
                "weight and buoyancy must be positive (W = {}, B = {})",
                self.weight, self.buoyancy
            ));
        }
        if self.mass <= 0.0 {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        let nonneg = [
            ("added_mass_linear", self.added_mass_linear),
            ("added_mass_angular", self.added_mass_angular),
            ("linear_damping_linear", self.linear_damping_linear),
            ("linear_damping_angular", self.linear_damping_angular),
            ("quadratic_damping_linear", self.quadratic_damping_linear),
            ("quadratic_damping_angular", self.quadratic_damping_angular),
        ];
        for (name, v) in nonneg {
            if v.iter().any(|x| *x < 0.0) {
                return bad(format!("{name} entries must be non-negative"));
            }
        }
        let mm = self.mass_matrix();
        if (mm - mm.transpose()).abs().max() > 0.0 || mm.cholesky().is_none() {
            return bad("mass matrix is not symmetric positive definite".into());
        }
        for (name, c) in [
            ("lateral", self.crossflow_lateral()),
            ("vertical", self.crossflow_vertical()),
        ] {
            let sym = (c + c.transpose()) * 0.5;
            let det = sym.determinant();
            if sym[(0, 0)] < 0.0 || sym[(1, 1)] < 0.0 || det < -1e-12 {
                return bad(format!(
                    "{name} cross-flow terms are not dissipative (symmetric part indefinite)"
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_set_is_valid() {
        let c = PlantCoefficients::default();
        assert_eq!(c.weight, 299.0);
        assert_eq!(c.buoyancy, 306.0);
        let m = c.mass_matrix();
        assert_eq!(m, m.transpose());
        assert!(m.cholesky().is_some());
    }

    #[test]
    fn toml_round_trip() {
        let c = PlantCoefficients::default();
        let back = PlantCoefficients::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_nonpositive_buoyancy() {
        let mut c = PlantCoefficients::default();
        c.buoyancy = 0.0;
        assert!(matches!(c.validate(), Err(PlantError::InvalidCoefficients(_))));
    }

    #[test]
    fn rejects_non_dissipative_crossflow() {
        let mut c = PlantCoefficients::default();
        c.crossflow_yaw_sway = -200.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{}\nbogus = 1.0\n", DEFAULT_COEFFICIENTS);
        assert!(PlantCoefficients::from_toml_str(&text).is_err());
    }
}
