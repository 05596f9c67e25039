//! Shared fixtures for the benchmarks.

use dpns::fespace::FeSpaces;
use dpns::mesh::{build_structured_rect_mesh, StackedSquares};
use dpns::mms::MmsProblem;
use dpns::stepper::{init_state, State};

/// Spaces, manufactured problem and projected initial state at `h = 1/n`.
pub struct Fixture {
    pub spaces: FeSpaces,
    pub problem: MmsProblem,
    pub state: State,
}

impl Fixture {
    pub fn new(n: usize) -> Self {
        let spaces = FeSpaces::new(build_structured_rect_mesh(n, StackedSquares::default()).expect("mesh"));
        let problem = MmsProblem::default();
        let state = init_state(&spaces, &problem).expect("initial state");
        Fixture { spaces, problem, state }
    }

    pub fn dt(&self, n: usize) -> f64 {
        1.0 / (n * n) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_state_is_finite() {
        let f = Fixture::new(4);
        assert!(f.state.is_finite());
        assert_eq!(f.dt(4), 1.0 / 16.0);
    }
}
