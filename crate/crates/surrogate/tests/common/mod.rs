#![allow(dead_code)]

use std::path::Path;

use picrnn_core::config::{desk_case, Case};
use picrnn_core::StateSpaceSystem;
use picrnn_surrogate::Surrogate;

pub struct Desk {
    pub case: Case,
    pub system: StateSpaceSystem,
    pub net: Surrogate,
}

/// 16×16 constant-BHP case with a freshly seeded surrogate.
pub fn desk(steps: usize, seed: u64) -> Desk {
    let case = desk_case(steps).build(Path::new(".")).unwrap();
    let system = StateSpaceSystem::assemble(&case.model).unwrap();
    let net = Surrogate::for_case(&case.model, &case.schedule, &system, seed).unwrap();
    Desk { case, system, net }
}
