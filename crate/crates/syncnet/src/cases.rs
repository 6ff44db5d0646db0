//! Experiment files shipped with the crate.

/// `(name, json)` for the three spanning-tree cases with N = 4, 6, 3.
pub const GRAPH_CASES: [(&str, &str); 3] = [
    ("case1", include_str!("../cases/case1.json")),
    ("case2", include_str!("../cases/case2.json")),
    ("case3", include_str!("../cases/case3.json")),
];

/// Heterogeneous agents on the three-node case, Protocol 3.
pub const OUTPUT_SYNC: &str = include_str!("../cases/output_sync.json");

/// Same agents tracking an oscillator, Protocol 4.
pub const REGULATED_SYNC: &str = include_str!("../cases/regulated_sync.json");

/// The example agent's matrices.
pub const EXAMPLE_A: [[f64; 3]; 3] = [[0.5, 1.0, 1.0], [0.0, 0.866, -0.5], [0.0, 0.5, 0.866]];
pub const EXAMPLE_B: [f64; 3] = [0.0, 0.0, 1.0];
pub const EXAMPLE_C: [f64; 3] = [1.0, 0.0, 0.0];
/// Gains printed alongside the example agent.
pub const PRINTED_K: [f64; 3] = [0.0695, 1.7625, 1.2051];
pub const PRINTED_H: [f64; 3] = [1.4327, 0.4143, 0.6993];
