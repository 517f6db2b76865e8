// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the criterion benchmarks.

use edgescale_core::ExperimentConfig;

pub fn demo_config(ticks: u64) -> ExperimentConfig {
    ExperimentConfig::demo(ticks)
}
