//! Offline re-run of a live trial from its recorded input trace.

use crate::session::InputTrace;
use crate::GatewayError;
use socbench_core::planners::PolicyRegistry;
use socbench_core::sim::{PedestrianMode, Simulation, TrialKind, TrialLog};
use socbench_core::{ScenarioConfig, Vec2};

/// Replays `trace` against `cfg`, applying each input before the step it
/// was recorded at, exactly as the live session did.
pub fn replay(cfg: &ScenarioConfig, trace: &InputTrace) -> Result<TrialLog, GatewayError> {
    if trace.config_hash != cfg.config_hash() {
        return Err(GatewayError::InvalidInput(format!(
            "trace was recorded under config {} but the scenario hashes to {}",
            trace.config_hash,
            cfg.config_hash()
        )));
    }
    if trace.inputs.windows(2).any(|w| w[1].tick < w[0].tick) {
        return Err(GatewayError::InvalidInput(
            "trace ticks must not decrease".into(),
        ));
    }
    let mut sim = Simulation::new(
        cfg,
        TrialKind::Trial,
        Some(&trace.method),
        PedestrianMode::Live,
        trace.seed,
        &PolicyRegistry::new(),
    )?;
    let mut inputs = trace.inputs.iter().peekable();
    while !sim.is_finished() {
        while let Some(r) = inputs.next_if(|r| r.tick == sim.tick()) {
            sim.set_live_input(Vec2::new(r.vx, r.vy));
        }
        sim.step()?;
    }
    if let Some(r) = inputs.next() {
        return Err(GatewayError::InvalidInput(format!(
            "input at tick {} is past the end of the trial",
            r.tick
        )));
    }
    Ok(sim.finish())
}
