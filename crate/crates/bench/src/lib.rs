//! Benchmark fixtures shared by the criterion targets.

use t2star_core::scenario::{build_scenario, Scenario, ScenarioSpec};

/// A square acquisition at 30% sampling with the default protocol.
pub fn scenario(size: usize) -> Scenario {
    build_scenario(&ScenarioSpec {
        rows: size,
        cols: size,
        rate: 0.3,
        ..Default::default()
    })
    .expect("benchmark scenario")
}
