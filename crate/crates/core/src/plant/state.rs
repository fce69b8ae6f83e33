use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

/// Pose and velocity of the vehicle.
///
/// `eta` is the Earth-fixed pose `(x, y, z, roll, pitch, yaw)`; `nu` is the
/// body-frame velocity `(u, v, w, p, q, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub eta: Vector6<f64>,
    pub nu: Vector6<f64>,
}

impl PlantState {
    pub fn new(eta: Vector6<f64>, nu: Vector6<f64>) -> Self {
        Self { eta, nu }
    }

    /// Level attitude at the origin, moving straight ahead at `surge` m/s.
    pub fn cruise(surge: f64) -> Self {
        Self {
            eta: Vector6::zeros(),
            nu: Vector6::new(surge, 0.0, 0.0, 0.0, 0.0, 0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.eta.iter().chain(self.nu.iter()).all(|v| v.is_finite())
    }

    pub fn roll(&self) -> f64 {
        self.eta[3]
    }

    pub fn pitch(&self) -> f64 {
        self.eta[4]
    }

    pub fn yaw(&self) -> f64 {
        self.eta[5]
    }
}

/// Actuator commands: propeller speed (rev/s) and fin deflections (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub n: f64,
    pub delta_rudder: f64,
    pub delta_elevator: f64,
}

impl ControlInput {
    pub fn new(n: f64, delta_rudder: f64, delta_elevator: f64) -> Self {
        Self {
            n,
            delta_rudder,
            delta_elevator,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.n, self.delta_rudder, self.delta_elevator]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn clamped(self, limits: &InputLimits) -> Self {
        Self {
            n: self.n.clamp(-limits.max_propeller, limits.max_propeller),
            delta_rudder: self.delta_rudder.clamp(-limits.max_rudder, limits.max_rudder),
            delta_elevator: self
                .delta_elevator
                .clamp(-limits.max_elevator, limits.max_elevator),
        }
    }
}

/// Symmetric saturation bounds applied to every command before it reaches the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputLimits {
    /// rev/s
    pub max_propeller: f64,
    /// rad
    pub max_rudder: f64,
    /// rad
    pub max_elevator: f64,
}

impl Default for InputLimits {
    fn default() -> Self {
        Self {
            max_propeller: 50.0,
            max_rudder: 0.4,
            max_elevator: 0.4,
        }
    }
}

/// Magnitude caps used to flag physically implausible trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCaps {
    /// m/s, applied to u, v, w
    pub linear: f64,
    /// rad/s, applied to p, q, r
    pub angular: f64,
}

impl Default for VelocityCaps {
    fn default() -> Self {
        Self {
            linear: 4.0,
            angular: 2.0,
        }
    }
}

impl VelocityCaps {
    pub fn admits(&self, nu: &Vector6<f64>) -> bool {
        nu.iter().take(3).all(|v| v.abs() < self.linear)
            && nu.iter().skip(3).all(|v| v.abs() < self.angular)
    }
}
