//! Saturated state-feedback law for the unicycle.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::blend::GuidanceField;
use crate::error::{Error, Result};
use crate::geometry::Point2;

pub use crate::blend::wrap_angle as wrap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VLaw {
    /// `v = v_max * max(0, 1 - |phi| / eps_v)`, forward only.
    #[default]
    Linear,
    /// `v = v_max * cos(phi)`, may reverse.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub v_max: f64,
    pub omega_max: f64,
    pub k: f64,
    pub eps_v: f64,
    #[serde(default)]
    pub v_law: VLaw,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 1.0,
            k: 1.0,
            eps_v: std::f64::consts::FRAC_PI_4,
            v_law: VLaw::Linear,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("v_max", self.v_max)?;
        positive("omega_max", self.omega_max)?;
        positive("k", self.k)?;
        positive("eps_v", self.eps_v)?;
        if self.v_law == VLaw::Linear && self.eps_v > FRAC_PI_2 {
            return Err(Error::InvalidConfig(format!(
                "eps_v = {} exceeds pi/2; the forward-only law needs eps_v in (0, pi/2]",
                self.eps_v
            )));
        }
        Ok(())
    }
}

pub fn linear_v(phi: f64, params: &ControllerParams) -> f64 {
    params.v_max * (1.0 - phi.abs() / params.eps_v).max(0.0)
}

pub fn cosine_v(phi: f64, params: &ControllerParams) -> f64 {
    params.v_max * phi.cos()
}

/// Clamps `u` to `[-u_max, u_max]`.
pub fn saturate(u: f64, u_max: f64) -> f64 {
    u.clamp(-u_max, u_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub v: f64,
    pub omega: f64,
    pub phi: f64,
    pub theta_d: f64,
    pub theta_d_dot: f64,
    pub saturated: bool,
    /// Triangle containing the robot, for hint chaining.
    pub triangle: Option<usize>,
    /// Set when the field was singular at the robot position; inputs are zero.
    pub fault: bool,
}

/// Applies the law given the target heading and a way to obtain its
/// gradient. The gradient is only requested when `v != 0`.
pub fn control_law(
    theta: f64,
    theta_d: f64,
    params: &ControllerParams,
    gradient: impl FnOnce() -> Result<[f64; 2]>,
) -> Result<ControlOutput> {
    let phi = wrap(theta - theta_d);
    let v = match params.v_law {
        VLaw::Linear => linear_v(phi, params),
        VLaw::Cosine => cosine_v(phi, params),
    };
    let theta_d_dot = if v != 0.0 {
        let [gx, gy] = gradient()?;
        v * (gx * theta.cos() + gy * theta.sin())
    } else {
        0.0
    };
    let u = theta_d_dot - params.k * phi.tanh();
    Ok(ControlOutput {
        v,
        omega: saturate(u, params.omega_max),
        phi,
        theta_d,
        theta_d_dot,
        saturated: u.abs() > params.omega_max,
        triangle: None,
        fault: false,
    })
}

/// Evaluates the controller at `pose`. A vertex singularity yields zero
/// inputs with `fault` set; other field errors propagate.
pub fn compute(
    pose: Pose,
    field: &GuidanceField,
    params: &ControllerParams,
    hint: Option<usize>,
) -> Result<ControlOutput> {
    let p = pose.position();
    let (theta_d, tri) = match field.target_heading(p, hint) {
        Ok(v) => v,
        Err(Error::VertexSingularity(_)) => {
            return Ok(ControlOutput {
                v: 0.0,
                omega: 0.0,
                phi: 0.0,
                theta_d: pose.theta,
                theta_d_dot: 0.0,
                saturated: false,
                triangle: hint,
                fault: true,
            })
        }
        Err(e) => return Err(e),
    };
    let mut out = control_law(pose.theta, theta_d, params, || field.heading_gradient(p, Some(tri)))?;
    out.triangle = Some(tri);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn params() -> ControllerParams {
        ControllerParams::default()
    }

    #[test]
    fn wrap_examples() {
        assert!((wrap(1.5 * PI) + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
    }

    #[test]
    fn linear_law_examples() {
        let p = params();
        assert_eq!(linear_v(0.0, &p), 1.0);
        assert_eq!(linear_v(p.eps_v, &p), 0.0);
        assert_eq!(linear_v(-2.0 * p.eps_v, &p), 0.0);
        assert!((linear_v(p.eps_v / 2.0, &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cosine_law_examples() {
        let p = params();
        assert_eq!(cosine_v(0.0, &p), 1.0);
        assert!(cosine_v(FRAC_PI_2, &p).abs() < 1e-15);
        assert_eq!(cosine_v(PI, &p), -1.0);
    }

    #[test]
    fn saturate_examples() {
        assert_eq!(saturate(1.5, 1.0), 1.0);
        assert_eq!(saturate(0.3, 1.0), 0.3);
        assert_eq!(saturate(-2.0, 1.0), -1.0);
    }

    #[test]
    fn aligned_with_uniform_field_drives_straight() {
        let out = control_law(0.3, 0.3, &params(), || Ok([0.0, 0.0])).unwrap();
        assert_eq!(out.v, 1.0);
        assert_eq!(out.omega, 0.0);
        assert!(!out.saturated);
    }

    #[test]
    fn reversed_heading_only_turns() {
        let p = ControllerParams {
            eps_v: FRAC_PI_4,
            ..params()
        };
        let out = control_law(PI, 0.0, &p, || panic!("gradient not needed when stopped")).unwrap();
        assert_eq!(out.v, 0.0);
        assert_eq!(out.theta_d_dot, 0.0);
        assert_eq!(out.omega, saturate(-p.k * PI.tanh(), p.omega_max));
    }

    #[test]
    fn hard_saturation_clamps_feedback() {
        let p = ControllerParams {
            k: 1.0,
            omega_max: 0.1,
            ..params()
        };
        let out = control_law(FRAC_PI_2, 0.0, &p, || Ok([5.0, 5.0])).unwrap();
        assert_eq!(out.v, 0.0);
        assert!(FRAC_PI_2.tanh() > 0.1);
        assert_eq!(out.omega, -0.1);
        assert!(out.saturated);
    }

    #[test]
    fn eps_v_above_half_pi_is_rejected_for_linear() {
        let bad = ControllerParams {
            eps_v: 2.0,
            ..params()
        };
        assert!(bad.validate().is_err());
        let cosine = ControllerParams {
            v_law: VLaw::Cosine,
            ..bad
        };
        assert!(cosine.validate().is_ok());
    }
}
