//! Forest-VP: one random forest per noise level regressing the conditional
//! score, packaged as a [`ScorePredictor`] whose per-tree outputs feed the
//! ensemble machinery.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MinMaxScaler};
use crate::error::{Error, Result};

use crate::forest::{ForestConfig, RandomForest};
use crate::linalg::Matrix;
use crate::rng::{standard_normal_vec, Stream, StreamRng};
use crate::schedule::{forward_sample, NoiseSchedule, TimeGrid};
use crate::score::ScorePredictor;
use crate::tree::FitContext;

const TAG_LEVEL: u64 = 0x11;
const TAG_AUG: u64 = 0xa6;
const TAG_FOREST: u64 = 0xf0;

/// Training options beyond the schedule and grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestVpParams {
    /// Noise duplications per data point at every level.
    pub n_rep: usize,
    pub forest: ForestConfig,
}

impl Default for ForestVpParams {
    fn default() -> Self {
        ForestVpParams {
            n_rep: 100,
            forest: ForestConfig::default(),
        }
    }
}

/// A trained Forest-VP model: `grid.n_steps()` forests, one per score
/// evaluation level, all mapping d inputs to d outputs in scaled coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestVpModel {
    schedule: NoiseSchedule,
    grid: TimeGrid,
    n_rep: usize,
    forest_config: ForestConfig,
    forests: Vec<RandomForest>,
    scaler: MinMaxScaler,
    feature_names: Vec<String>,
}

impl ForestVpModel {
    /// Serial training: one forest per level, levels in grid order. Parallel
    /// trainers produce identical models by fitting levels independently with
    /// [`ForestVpModel::level_stream`] and assembling via
    /// [`ForestVpModel::from_parts`].
    pub fn train(
        dataset: &Dataset,
        schedule: &NoiseSchedule,
        grid: &TimeGrid,
        params: &ForestVpParams,
        seed: Stream,
    ) -> Result<Self> {
        let scaled = dataset.scaled_points();
        let forests = grid
            .levels()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                train_level(
                    &scaled,
                    schedule,
                    t,
                    params.n_rep,
                    &params.forest,
                    Self::level_stream(seed, i),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            *schedule,
            grid.clone(),
            params.n_rep,
            params.forest,
            forests,
            dataset.scaler().clone(),
            dataset.feature_names().to_vec(),
        )
    }

    /// Stream driving augmentation and forest fitting at `level`.
    pub fn level_stream(seed: Stream, level: usize) -> Stream {
        seed.indexed(TAG_LEVEL, level as u64)
    }

    pub fn from_parts(
        schedule: NoiseSchedule,
        grid: TimeGrid,
        n_rep: usize,
        forest_config: ForestConfig,
        forests: Vec<RandomForest>,
        scaler: MinMaxScaler,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if forests.len() != grid.n_steps() {
            return Err(Error::Dimension {
                expected: grid.n_steps(),
                got: forests.len(),
            });
        }
        if n_rep == 0 {
            return Err(Error::invalid("n_rep must be at least 1"));
        }
        let d = scaler.dim();
        for f in &forests {
            if f.n_features() != d || f.n_targets() != d {
                return Err(Error::invalid("every level forest must map d inputs to d outputs"));
            }
        }
        Ok(ForestVpModel {
            schedule,
            grid,
            n_rep,
            forest_config,
            forests,
            scaler,
            feature_names,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_rep(&self) -> usize {
        self.n_rep
    }

    pub fn forest_config(&self) -> &ForestConfig {
        &self.forest_config
    }

    pub fn forests(&self) -> &[RandomForest] {
        &self.forests
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_trees(&self) -> usize {
        self.forests[0].n_trees()
    }

    /// Forest serving queries at time `t` (nearest level; sub-`t_min` times
    /// clamp to the first level).
    pub fn forest_at(&self, t: f64) -> &RandomForest {
        &self.forests[self.grid.level_index(t)]
    }

    /// Mean-over-trees score at `(x, t)`.
    pub fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.forest_at(t).predict_mean(x)
    }

    /// K x d matrix of per-tree scores at `(x, t)`.
    pub fn score_per_tree(&self, x: &[f64], t: f64) -> Matrix {
        self.forest_at(t).predict_per_tree(x)
    }

    /// One [`ScorePredictor`] per tree; the ensemble members for step-wise
    /// aggregation over a Forest-VP model.
    pub fn tree_predictors(model: &Arc<Self>) -> Vec<Arc<dyn ScorePredictor>> {
        (0..model.n_trees())
            .map(|k| {
                Arc::new(TreeScorePredictor {
                    model: Arc::clone(model),
                    tree: k,
                }) as Arc<dyn ScorePredictor>
            })
            .collect()
    }
}

impl ScorePredictor for ForestVpModel {
    fn dim(&self) -> usize {
        self.scaler.dim()
    }

    fn evaluate_into(&self, x: &[f64], t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
        out.copy_from_slice(&self.score(x, t));
    }
}

/// A single tree of a Forest-VP model viewed as a score predictor.
pub struct TreeScorePredictor {
    model: Arc<ForestVpModel>,
    tree: usize,
}

impl TreeScorePredictor {
    pub fn tree_index(&self) -> usize {
        self.tree
    }
}

impl ScorePredictor for TreeScorePredictor {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn evaluate_into(&self, x: &[f64], t: f64, _rng: &mut StreamRng, out: &mut [f64]) {
        self.model.forest_at(t).trees()[self.tree].predict_into(x, out);
    }
}

/// The augmented regression set for one level: each data row is noised
/// `n_rep` times, pairing `x_t = forward_sample(x0, t, z)` with the
/// conditional-score target `-z / sqrt(1 - gamma)`. Rows are ordered
/// `(data row, repetition)`, so row `r * n_rep + j` descends from `x0` row `r`.
pub fn level_training_set(
    scaled: &Matrix,
    schedule: &NoiseSchedule,
    t: f64,
    n_rep: usize,
    level_stream: Stream,
) -> Result<(Matrix, Matrix)> {
    if scaled.rows() < 2 {
        return Err(Error::invalid("need at least two data rows"));
    }
    if n_rep == 0 {
        return Err(Error::invalid("n_rep must be at least 1"));
    }
    let d = scaled.cols();
    let n_aug = scaled.rows() * n_rep;
    let mut rng = level_stream.child(TAG_AUG).rng();
    let inv_sigma = 1.0 / schedule.sigma(t)?;
    let mut x = Matrix::zeros(n_aug, d);
    let mut y = Matrix::zeros(n_aug, d);
    let mut row_index = 0;
    for r in 0..scaled.rows() {
        let x0 = scaled.row(r);
        for _ in 0..n_rep {
            let z = standard_normal_vec(&mut rng, d);
            let x_t = forward_sample(schedule, x0, t, &z)?;
            x.row_mut(row_index).copy_from_slice(&x_t);
            for (out, zi) in y.row_mut(row_index).iter_mut().zip(&z) {
                *out = -zi * inv_sigma;
            }
            row_index += 1;
        }
    }
    Ok((x, y))
}

/// Fit the forest for a single level.
pub fn train_level(
    scaled: &Matrix,
    schedule: &NoiseSchedule,
    t: f64,
    n_rep: usize,
    forest: &ForestConfig,
    level_stream: Stream,
) -> Result<RandomForest> {
    let (x, y) = level_training_set(scaled, schedule, t, n_rep, level_stream)?;
    let ctx = FitContext::new(&x, &y)?;
    RandomForest::fit_in_context(&ctx, forest, level_stream.child(TAG_FOREST))
}

/// Free-function form of [`ForestVpModel::train`].
pub fn train_forest_vp(
    dataset: &Dataset,
    schedule: &NoiseSchedule,
    grid: &TimeGrid,
    params: &ForestVpParams,
    seed: Stream,
) -> Result<ForestVpModel> {
    ForestVpModel::train(dataset, schedule, grid, params, seed)
}

#[cfg(test)]
mod tests {
    use crate::fmath;
    use super::*;
    use alloc::string::ToString;

    fn origin_dataset(d: usize) -> Dataset {
        // two coincident rows at the origin after scaling (constant features
        // scale to zero)
        let rows = alloc::vec![alloc::vec![0.0; d], alloc::vec![0.0; d]];
        let names = (0..d).map(|i| alloc::format!("f{i}")).collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap(), names).unwrap()
    }

    fn small_grid(n: usize) -> TimeGrid {
        TimeGrid::uniform(n, 1e-3).unwrap()
    }

    #[test]
    fn augmented_targets_satisfy_score_bookkeeping() {
        // target * sqrt(1-gamma) + (x_t - sqrt(gamma) x0) / sqrt(1-gamma) = 0
        let mut rng = Stream::new(3).rng();
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..3)
                    .map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0))
                    .collect()
            })
            .collect();
        let scaled = Matrix::from_rows(&rows).unwrap();
        let schedule = NoiseSchedule::default_vp();
        let t = 0.42;
        let n_rep = 7;
        let (x, y) = level_training_set(&scaled, &schedule, t, n_rep, Stream::new(4)).unwrap();
        let gamma = schedule.gamma(t).unwrap();
        let sigma = fmath::sqrt(1.0 - gamma);
        for r in 0..scaled.rows() {
            for j in 0..n_rep {
                let row = r * n_rep + j;
                for c in 0..3 {
                    let residual = y.get(row, c) * sigma
                        + (x.get(row, c) - fmath::sqrt(gamma) * scaled.get(r, c)) / sigma;
                    assert!(residual.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn forest_approximates_analytic_conditional_score_at_origin() {
        // With all mass at the origin the regression function is exactly
        // -x_t / (1 - gamma); a level forest should track it closely and at
        // least as well as a single depth-7 tree.
        let ds = origin_dataset(2);
        let schedule = NoiseSchedule::default_vp();
        let grid = small_grid(4);
        let t = grid.levels()[1];
        let scaled = ds.scaled_points();
        let gamma = schedule.gamma(t).unwrap();

        let mut forest_cfg = ForestConfig {
            n_trees: 30,
            ..ForestConfig::default()
        };
        let forest = train_level(&scaled, &schedule, t, 1500, &forest_cfg, Stream::new(5)).unwrap();
        forest_cfg.n_trees = 1;
        let single = train_level(&scaled, &schedule, t, 1500, &forest_cfg, Stream::new(5)).unwrap();

        let mut rng = Stream::new(6).rng();
        let mut mse_forest = 0.0;
        let mut mse_single = 0.0;
        let mut target_var = 0.0;
        let n_eval = 500;
        for _ in 0..n_eval {
            let z = standard_normal_vec(&mut rng, 2);
            let x_t = forward_sample(&schedule, &[0.0, 0.0], t, &z).unwrap();
            let truth: Vec<f64> = x_t.iter().map(|v| -v / (1.0 - gamma)).collect();
            let pf = forest.predict_mean(&x_t);
            let ps = single.predict_mean(&x_t);
            for c in 0..2 {
                mse_forest += (pf[c] - truth[c]) * (pf[c] - truth[c]);
                mse_single += (ps[c] - truth[c]) * (ps[c] - truth[c]);
                target_var += truth[c] * truth[c];
            }
        }
        mse_forest /= (n_eval * 2) as f64;
        mse_single /= (n_eval * 2) as f64;
        target_var /= (n_eval * 2) as f64;
        assert!(
            mse_forest < 0.1 * target_var,
            "forest mse {mse_forest} vs target variance {target_var}"
        );
        assert!(mse_forest <= mse_single + 1e-9);
    }

    #[test]
    fn stump_model_predicts_near_zero_mean_target() {
        let ds = origin_dataset(2);
        let schedule = NoiseSchedule::default_vp();
        let grid = small_grid(1);
        let params = ForestVpParams {
            n_rep: 4000,
            forest: ForestConfig {
                n_trees: 3,
                max_depth: 0,
                ..ForestConfig::default()
            },
        };
        let model = ForestVpModel::train(&ds, &schedule, &grid, &params, Stream::new(7)).unwrap();
        // single level at t = 1: targets are -z with zero mean
        let a = model.score(&[0.5, -0.5], 1.0);
        let b = model.score(&[-2.0, 3.0], 1.0);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() < 0.05), "{a:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = origin_dataset(2);
        let schedule = NoiseSchedule::default_vp();
        let grid = small_grid(3);
        let params = ForestVpParams {
            n_rep: 20,
            forest: ForestConfig {
                n_trees: 4,
                ..ForestConfig::default()
            },
        };
        let a = ForestVpModel::train(&ds, &schedule, &grid, &params, Stream::new(8)).unwrap();
        let b = ForestVpModel::train(&ds, &schedule, &grid, &params, Stream::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scoring_routes_to_the_nearest_level_forest() {
        let ds = origin_dataset(2);
        let schedule = NoiseSchedule::default_vp();
        let grid = small_grid(5);
        let params = ForestVpParams {
            n_rep: 30,
            forest: ForestConfig {
                n_trees: 2,
                ..ForestConfig::default()
            },
        };
        let model = ForestVpModel::train(&ds, &schedule, &grid, &params, Stream::new(9)).unwrap();
        let x = [0.3, -0.4];
        for (i, &t) in model.grid().levels().iter().enumerate() {
            assert_eq!(model.score(&x, t), model.forests()[i].predict_mean(&x));
        }
        // below t_min: clamps to the first level
        assert_eq!(model.score(&x, 1e-6), model.forests()[0].predict_mean(&x));
    }

    #[test]
    fn per_tree_scores_average_to_the_mean_score() {
        let ds = origin_dataset(3);
        let schedule = NoiseSchedule::default_vp();
        let grid = small_grid(2);
        let params = ForestVpParams {
            n_rep: 50,
            forest: ForestConfig {
                n_trees: 7,
                ..ForestConfig::default()
            },
        };
        let model = Arc::new(
            ForestVpModel::train(&ds, &schedule, &grid, &params, Stream::new(10)).unwrap(),
        );
        let x = [0.2, 0.6, -0.1];
        let t = 0.7;
        let per_tree = model.score_per_tree(&x, t);
        let mean = model.score(&x, t);
        for j in 0..3 {
            let avg: f64 = (0..7).map(|k| per_tree.get(k, j)).sum::<f64>() / 7.0;
            assert!((avg - mean[j]).abs() < 1e-12);
        }
        // tree predictors match the per-tree matrix
        let members = ForestVpModel::tree_predictors(&model);
        let mut rng = Stream::new(0).rng();
        for (k, m) in members.iter().enumerate() {
            assert_eq!(m.evaluate(&x, t, &mut rng), per_tree.row(k).to_vec());
        }
    }

    #[test]
    fn degenerate_dataset_is_rejected() {
        let rows = alloc::vec![alloc::vec![0.0, 0.0]];
        let m = Matrix::from_rows(&rows).unwrap();
        assert!(Dataset::new(m, alloc::vec!["a".to_string(), "b".to_string()]).is_err());

        let one_row = Matrix::from_rows(&[alloc::vec![1.0, 2.0]]).unwrap();
        assert!(level_training_set(
            &one_row,
            &NoiseSchedule::default_vp(),
            0.5,
            10,
            Stream::new(0)
        )
        .is_err());
    }
}
