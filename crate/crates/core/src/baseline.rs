//! Wi-Fi-only dead reckoning: integrate the PLCR velocity from a known
//! start, re-estimating the steering matrix at every new position.

use crate::error::Result;
use crate::features::FeatureStream;
use crate::fusion::{check_inputs, finish, initial_state, next_velocity, snap, SolverState, StepDiagnostics, TrackerOutput};
use crate::geometry::{Arena, LinkGeometry, Point2D};

/// Acoustic columns of `features` are ignored.
pub fn dead_reckoning_track(
    features: &FeatureStream,
    links: &[LinkGeometry],
    initial: Point2D,
    arena: &Arena,
) -> Result<TrackerOutput> {
    let dt = check_inputs(features, links, initial, arena)?;
    let mut states = Vec::with_capacity(features.len());
    states.push(initial_state(features, links, initial));
    for k in 1..features.len() {
        let prev: &SolverState = states.last().expect("nonempty");
        let step_dt = features.timestamps[k] - features.timestamps[k - 1];
        let (position, snapped) = snap(prev.position + prev.velocity.displacement(step_dt), arena);
        let mut diag = StepDiagnostics {
            snapped,
            ..StepDiagnostics::default()
        };
        let (velocity, held) = next_velocity(prev, position, snapped, links, &features.plcr[k], arena);
        diag.velocity_held = held;
        states.push(SolverState {
            position,
            velocity,
            timestamp: prev.timestamp + step_dt,
            last_acoustic: prev.last_acoustic,
            diagnostics: diag,
        });
    }
    Ok(finish(features, states, dt))
}
