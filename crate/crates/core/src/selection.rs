//! Choosing β by one-step-ahead predictive loss on tuning data.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{run_filter, FilterKind, FilterOutput, FilterSpec};
use crate::metrics::{per_step_abs_errors, PredictiveDraw};
use crate::models::{GeneralisedLikelihood, StateSpaceModel};
use crate::rng::StreamKey;
use crate::stats;

pub const DEFAULT_GRID: [f64; 10] = [1e-4, 5e-4, 1e-3, 5e-3, 0.01, 0.05, 0.1, 0.2, 0.5, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DimensionWeighting {
    /// Weight dimension `j` by `1 / median_t L_tj`, normalised to sum to one.
    #[default]
    InverseMedian,
    /// Plain average over dimensions.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSelectionConfig {
    /// Strictly increasing candidates in (0, 1).
    pub grid: Vec<f64>,
    /// Predictive draws per step; `None` uses one per particle.
    pub predictive_draws: Option<usize>,
    pub weighting: DimensionWeighting,
}

impl Default for BetaSelectionConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID.to_vec(),
            predictive_draws: None,
            weighting: DimensionWeighting::InverseMedian,
        }
    }
}

impl BetaSelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("β grid is empty".into()));
        }
        if self.grid.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::Config("β grid values must lie in (0, 1)".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("β grid must be strictly increasing".into()));
        }
        if self.predictive_draws == Some(0) {
            return Err(Error::Config("need at least one predictive draw".into()));
        }
        Ok(())
    }
}

/// Per-step loss: mean absolute error of the predictive draws, with
/// dimensions combined by `weighting`. Missing steps are dropped.
pub fn predictive_loss(output: &FilterOutput, ys: &[DVector<f64>], weighting: DimensionWeighting) -> Result<Vec<f64>> {
    let samples = &output.predictive_samples;
    if samples.draws == 0 {
        return Err(Error::Config("predictive loss needs stored predictive draws".into()));
    }
    if samples.steps() != ys.len() {
        return Err(Error::DimensionMismatch {
            context: "predictive steps",
            expected: ys.len(),
            actual: samples.steps(),
        });
    }
    let per_step: Vec<Vec<f64>> = per_step_abs_errors(ys, samples, PredictiveDraw::MeanOverDraws)
        .into_iter()
        .filter_map(|r| r.into_iter().collect::<Option<Vec<f64>>>())
        .collect();
    Ok(combine_dimensions(&per_step, weighting))
}

/// Combine per-step, per-dimension losses into one loss per step.
pub fn combine_dimensions(losses: &[Vec<f64>], weighting: DimensionWeighting) -> Vec<f64> {
    let Some(first) = losses.first() else {
        return Vec::new();
    };
    let dy = first.len();
    let mut w = vec![1.0 / dy as f64; dy];
    if weighting == DimensionWeighting::InverseMedian {
        let medians: Vec<f64> = (0..dy)
            .map(|j| stats::median(&losses.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect();
        if medians.iter().all(|m| *m > 0.0 && m.is_finite()) {
            let inv: Vec<f64> = medians.iter().map(|m| 1.0 / m).collect();
            let total: f64 = inv.iter().sum();
            w = inv.iter().map(|v| v / total).collect();
        }
    }
    losses
        .iter()
        .map(|r| r.iter().zip(&w).map(|(l, wj)| l * wj).sum())
        .collect()
}

/// Median of the per-step losses.
pub fn score(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        f64::INFINITY
    } else {
        stats::median(losses)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub beta: f64,
    pub run_id: usize,
    /// `+∞` when the filter degenerated.
    pub score: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected_beta: f64,
    /// Number of runs whose argmin is the selected β.
    pub mode_count: usize,
    pub grid: Vec<f64>,
    pub per_run: Vec<Option<f64>>,
    pub scores: Vec<ScoreRow>,
}

/// Score every `(β, run)` pair with `scorer` and pick the modal per-run argmin.
/// Errors from the scorer count as `+∞`. Ties resolve to the smaller β.
pub fn select_with_scorer<F>(grid: &[f64], runs: usize, scorer: F) -> Result<SelectionResult>
where
    F: Fn(f64, usize) -> Result<f64> + Sync,
{
    if runs == 0 {
        return Err(Error::Config("β selection needs at least one tuning run".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..runs).flat_map(|r| (0..grid.len()).map(move |b| (r, b))).collect();
    let scores: Vec<ScoreRow> = pairs
        .par_iter()
        .map(|&(run_id, b)| {
            let beta = grid[b];
            match scorer(beta, run_id) {
                Ok(s) if !s.is_nan() => ScoreRow { beta, run_id, score: s, failure: None },
                Ok(_) => ScoreRow { beta, run_id, score: f64::INFINITY, failure: Some("NaN score".into()) },
                Err(e) => ScoreRow { beta, run_id, score: f64::INFINITY, failure: Some(e.to_string()) },
            }
        })
        .collect();

    let per_run: Vec<Option<f64>> = (0..runs)
        .map(|r| {
            let row = &scores[r * grid.len()..(r + 1) * grid.len()];
            let mut best: Option<&ScoreRow> = None;
            for s in row.iter().filter(|s| s.score.is_finite()) {
                if best.is_none_or(|b| s.score < b.score) {
                    best = Some(s);
                }
            }
            best.map(|s| s.beta)
        })
        .collect();

    let mut best: Option<(f64, usize)> = None;
    for &beta in grid {
        let count = per_run.iter().filter(|p| **p == Some(beta)).count();
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((beta, count));
        }
    }
    let (selected_beta, mode_count) = best.ok_or(Error::Numerical {
        step: 0,
        message: "every β in the grid degenerated on every tuning run".into(),
    })?;
    Ok(SelectionResult {
        selected_beta,
        mode_count,
        grid: grid.to_vec(),
        per_run,
        scores,
    })
}

/// Grid search over β. Run `r` uses `key.child(r)` for every β so all
/// candidates see the same random numbers.
pub fn select_beta(
    kind: FilterKind,
    model: &StateSpaceModel,
    spec: &FilterSpec,
    tuning: &[Vec<DVector<f64>>],
    config: &BetaSelectionConfig,
    key: &StreamKey,
) -> Result<SelectionResult> {
    config.validate()?;
    let spec = FilterSpec {
        predictive_draws: config.predictive_draws.unwrap_or(spec.particles),
        store_ensembles: false,
        ..spec.clone()
    };
    select_with_scorer(&config.grid, tuning.len(), |beta, run| {
        let gl = GeneralisedLikelihood::beta(model.likelihood().clone(), beta)?;
        let out = run_filter(kind, model, &gl, &spec, &tuning[run], &key.child(run as u64))?;
        Ok(score(&predictive_loss(&out, &tuning[run], config.weighting)?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::PredictiveSamples;
    use nalgebra::{dvector, DMatrix};

    fn output_with_samples(samples: PredictiveSamples) -> FilterOutput {
        let t = samples.steps();
        FilterOutput {
            means: DMatrix::zeros(t, 1),
            variances: DMatrix::zeros(t, 1),
            lower: DMatrix::zeros(t, 1),
            upper: DMatrix::zeros(t, 1),
            ess: vec![1.0; t],
            resampled: vec![true; t],
            log_normalising_increments: vec![0.0; t],
            predictive_means: DMatrix::zeros(t, samples.obs_dim),
            predictive_samples: samples,
            ensembles: None,
            particles: 2,
        }
    }

    #[test]
    fn perfect_and_offset_predictions() {
        let ys = vec![dvector![1.0], dvector![2.0], dvector![3.0]];
        let exact = output_with_samples(PredictiveSamples { draws: 2, obs_dim: 1, data: vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0] });
        assert_eq!(predictive_loss(&exact, &ys, DimensionWeighting::InverseMedian).unwrap(), vec![0.0; 3]);
        let shifted = output_with_samples(PredictiveSamples { draws: 2, obs_dim: 1, data: vec![1.5, 0.5, 2.5, 1.5, 3.5, 2.5] });
        assert_eq!(predictive_loss(&shifted, &ys, DimensionWeighting::None).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn inverse_median_weighting_hand_example() {
        // dimension medians 2 and 10
        let losses = vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![4.0, 5.0]];
        let combined = combine_dimensions(&losses, DimensionWeighting::InverseMedian);
        let (w1, w2) = (0.5 / 0.6, 0.1 / 0.6);
        for (c, l) in combined.iter().zip(&losses) {
            assert!((c - (w1 * l[0] + w2 * l[1])).abs() < 1e-14);
        }
        assert!((combined[0] - (1.0 / 2.0 + 10.0 / 10.0) / (1.0 / 2.0 + 1.0 / 10.0)).abs() < 1e-14);
    }

    #[test]
    fn rescaling_all_dimensions_keeps_the_ranking() {
        let a = vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![4.0, 5.0]];
        let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v * 7.0).collect()).collect();
        let (ca, cs) = (combine_dimensions(&a, DimensionWeighting::InverseMedian), combine_dimensions(&scaled, DimensionWeighting::InverseMedian));
        for (x, y) in ca.iter().zip(&cs) {
            assert!((x * 7.0 - y).abs() < 1e-12);
        }
    }

    #[test]
    fn median_score_resists_minority_corruption() {
        let clean: Vec<f64> = (0..101).map(|t| 1.0 + (t as f64 * 0.37).sin() * 0.1).collect();
        let mut corrupted = clean.clone();
        for v in corrupted.iter_mut().step_by(3) {
            *v = 1e9;
        }
        let spread = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max) - clean.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((score(&corrupted) - score(&clean)).abs() <= spread);
    }

    #[test]
    fn single_candidate_is_selected() {
        let r = select_with_scorer(&[0.3], 2, |_, _| Ok(1.0)).unwrap();
        assert_eq!(r.selected_beta, 0.3);
        assert_eq!(r.mode_count, 2);
    }

    #[test]
    fn degenerate_candidates_score_infinity() {
        let r = select_with_scorer(&[0.1, 0.99], 1, |beta, _| {
            if beta > 0.5 {
                Err(Error::DegenerateWeights { step: 4 })
            } else {
                Ok(2.0)
            }
        })
        .unwrap();
        assert_eq!(r.selected_beta, 0.1);
        assert!(r.scores[1].score.is_infinite());
        assert!(r.scores[1].failure.as_deref().unwrap().contains("step 4"));
    }

    #[test]
    fn ties_resolve_to_smaller_beta() {
        let r = select_with_scorer(&[0.01, 0.1, 0.5], 1, |b, _| Ok(if b < 0.2 { 1.0 } else { 2.0 })).unwrap();
        assert_eq!(r.selected_beta, 0.01);
        // modal vote with a tie between runs
        let r = select_with_scorer(&[0.01, 0.1], 2, |b, run| Ok(if (run == 0) == (b < 0.05) { 0.0 } else { 1.0 })).unwrap();
        assert_eq!(r.selected_beta, 0.01);
        assert_eq!(r.mode_count, 1);
    }

    #[test]
    fn grid_validation() {
        let bad = BetaSelectionConfig { grid: vec![0.2, 0.1], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = BetaSelectionConfig { grid: vec![1.5], ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(BetaSelectionConfig::default().validate().is_ok());
    }
}
