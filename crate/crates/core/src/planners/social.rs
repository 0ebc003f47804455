//! Gaussian social zone around a person, stretched along the walking direction.

use super::costmap::{Costmap, LETHAL, MAX_SOFT};
use super::PlanError;
use crate::geometry::Vec2;
use crate::sim::AgentState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialLayerParams {
    /// Peak cost added at the person's position.
    pub amplitude: f64,
    /// Standard deviation of the circular zone, meters.
    pub sigma_base: f64,
    /// Forward sigma grows by `sigma_base * gain * speed`; seconds.
    pub velocity_elongation_gain: f64,
    /// No cost is added beyond this distance past `inner_radius`, meters.
    pub cutoff_radius: f64,
    /// Distances are measured from a disc of this radius around the person
    /// rather than from the person's center. Planners set it to the
    /// configuration-space radius of the person so the zone starts where
    /// the lethal disc ends.
    #[serde(default)]
    pub inner_radius: f64,
}

impl Default for SocialLayerParams {
    /// A 0.4 m social radius mapped to two standard deviations.
    fn default() -> Self {
        SocialLayerParams {
            amplitude: 200.0,
            sigma_base: 0.2,
            velocity_elongation_gain: 1.0,
            cutoff_radius: 1.2,
            inner_radius: 0.0,
        }
    }
}

impl SocialLayerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.amplitude > 0.0 && self.amplitude <= 254.0) {
            return Err(PlanError::InvalidParameter(
                "amplitude must lie in (0, 254]".into(),
            ));
        }
        if !(self.sigma_base > 0.0 && self.sigma_base.is_finite()) {
            return Err(PlanError::InvalidParameter(
                "sigma_base must be positive".into(),
            ));
        }
        if !(self.cutoff_radius >= self.sigma_base) {
            return Err(PlanError::InvalidParameter(
                "cutoff_radius must be >= sigma_base".into(),
            ));
        }
        if !(self.inner_radius >= 0.0 && self.inner_radius.is_finite()) {
            return Err(PlanError::InvalidParameter(
                "inner_radius must be >= 0".into(),
            ));
        }
        if !(self.velocity_elongation_gain >= 0.0) {
            return Err(PlanError::InvalidParameter(
                "velocity_elongation_gain must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Unquantized cost added at `p` by a person at `center` moving with `velocity`.
///
/// Ahead of the person the longitudinal sigma is `sigma_base * (1 + gain * speed)`;
/// behind and sideways it stays `sigma_base`.
pub fn social_cost(p: Vec2, center: Vec2, velocity: Vec2, params: &SocialLayerParams) -> f64 {
    let mut rel = p - center;
    let d = rel.norm();
    if d - params.inner_radius > params.cutoff_radius {
        return 0.0;
    }
    if params.inner_radius > 0.0 {
        rel = if d > params.inner_radius {
            rel * ((d - params.inner_radius) / d)
        } else {
            Vec2::ZERO
        };
    }
    let sigma = params.sigma_base;
    let speed = velocity.norm();
    let exponent = match velocity.normalized().filter(|_| speed > 1e-6) {
        None => rel.dot(rel) / (2.0 * sigma * sigma),
        Some(dir) => {
            let front = rel.dot(dir);
            let side = rel.dot(dir.perp());
            let sigma_front = if front > 0.0 {
                sigma * (1.0 + params.velocity_elongation_gain * speed)
            } else {
                sigma
            };
            front * front / (2.0 * sigma_front * sigma_front) + side * side / (2.0 * sigma * sigma)
        }
    };
    params.amplitude * (-exponent).exp()
}

/// Adds the social zone of `human` to `base`. Lethal cells stay lethal and
/// soft costs saturate at 254; `base` is left untouched.
pub fn apply_social_layer(
    base: &Costmap,
    human: &AgentState,
    params: &SocialLayerParams,
) -> Costmap {
    let mut out = base.clone();
    add_social_zone(&mut out, human.position, human.velocity, params);
    out
}

pub(crate) fn add_social_zone(
    map: &mut Costmap,
    center: Vec2,
    velocity: Vec2,
    params: &SocialLayerParams,
) {
    let cells: Vec<_> = map
        .cells_within(center, params.inner_radius + params.cutoff_radius)
        .collect();
    for c in cells {
        let current = map.get(c);
        if current == LETHAL {
            continue;
        }
        let added = social_cost(map.cell_center(c), center, velocity, params).round();
        let total = (current as f64 + added).min(MAX_SOFT as f64);
        map.set(c, total as u8);
    }
}
