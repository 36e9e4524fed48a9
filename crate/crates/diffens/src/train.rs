//! Parallel Forest-VP training: levels (and their trees) are independent, so
//! the trainer distributes levels over the rayon pool. Per-level derived
//! streams make the result identical to the serial reference trainer.

use anyhow::Result;
use rayon::prelude::*;

use diffens_core::dataset::Dataset;
use diffens_core::forest::RandomForest;
use diffens_core::forest_vp::{train_level, ForestVpModel, ForestVpParams};
use diffens_core::schedule::{NoiseSchedule, TimeGrid};
use diffens_core::Stream;

use crate::config::into_anyhow;

/// Train one forest per level in parallel; bit-identical to
/// [`ForestVpModel::train`].
pub fn train_parallel(
    dataset: &Dataset,
    schedule: &NoiseSchedule,
    grid: &TimeGrid,
    params: &ForestVpParams,
    seed: Stream,
) -> Result<ForestVpModel> {
    let scaled = dataset.scaled_points();
    let forests: Vec<RandomForest> = grid
        .levels()
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            train_level(
                &scaled,
                schedule,
                t,
                params.n_rep,
                &params.forest,
                ForestVpModel::level_stream(seed, i),
            )
            .map_err(into_anyhow)
        })
        .collect::<Result<Vec<_>>>()?;
    ForestVpModel::from_parts(
        *schedule,
        grid.clone(),
        params.n_rep,
        params.forest,
        forests,
        dataset.scaler().clone(),
        dataset.feature_names().to_vec(),
    )
    .map_err(into_anyhow)
}

/// Configure the global rayon pool from `DIFFENS_THREADS` (the only
/// environment variable the tool reads). No-op when unset or already built.
pub fn init_thread_pool() {
    if let Ok(value) = std::env::var("DIFFENS_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
