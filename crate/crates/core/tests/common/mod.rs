#![allow(dead_code)]

use hlsbench::gtnp::GtnpConfig;
use hlsbench::kernel::{build_design_space, enumerate_configs, Kernel};
use hlsbench::oracle::{LabeledDesign, Oracle, OracleConstants};
use hlsbench::surrogate::{GnnConfig, ProgramData};
use hlsbench::synthgen::{generate_parametric, GenSpec, DOMAINS};
use proptest::prelude::*;

pub fn oracle() -> Oracle {
    Oracle::new(OracleConstants::default())
}

/// A generated kernel; draws that cannot fit their memory budget are
/// retried under the next seed.
pub fn kernel(seed: u64, domain: usize, loops: (usize, usize)) -> Kernel {
    (0..64)
        .find_map(|i| {
            generate_parametric(&GenSpec {
                seed: seed.wrapping_add(i),
                num_loops: loops,
                domain: DOMAINS[domain % DOMAINS.len()].0.to_string(),
                ..GenSpec::default()
            })
            .ok()
        })
        .expect("a feasible draw within 64 seeds")
}

/// Generated kernels with 1 to `max_loops` loops over every domain.
pub fn kernels(max_loops: usize) -> impl Strategy<Value = Kernel> {
    (any::<u64>(), 0..DOMAINS.len(), 1..=max_loops).prop_map(|(s, d, q)| kernel(s, d, (q, q)))
}

/// Oracle-labeled program with up to `n` designs.
pub fn labeled(kernel: Kernel, n: usize, seed: u64) -> ProgramData {
    let o = oracle();
    let designs: Vec<LabeledDesign> = enumerate_configs(&build_design_space(&kernel), Some(n), seed)
        .iter()
        .map(|c| o.label(&kernel, c).unwrap())
        .collect();
    ProgramData {
        base_latency: o.base_latency(&kernel),
        kernel,
        designs,
    }
}

pub fn micro_gtnp(hidden: usize, layers: usize, gnn_layers: usize) -> GtnpConfig {
    GtnpConfig {
        gnn: GnnConfig {
            hidden,
            layers: gnn_layers,
            dropout: 0.1,
        },
        d_model: hidden,
        layers,
        heads: 2,
        ff: hidden,
        dropout: 0.1,
        max_seq_len: 64,
        target_flag: true,
    }
}
