//! Per-trait accuracy `1 − |label − prediction|`, its five-trait average, and the
//! robustness harness over the corrupted-modality scenarios.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mas::{apply_scenario, derive_seed, Sample, Scenario};
use crate::scores::{BigFiveScores, Trait};

/// Paired `N×5` predictions and labels, trait order E, N, A, C, O.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsInput {
    predictions: Vec<[f64; 5]>,
    labels: Vec<[f64; 5]>,
}

impl MetricsInput {
    pub fn new(predictions: Vec<[f64; 5]>, labels: Vec<[f64; 5]>) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} predictions vs {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        for (i, row) in predictions.iter().chain(&labels).enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Input(format!("metric row {} has a value outside [0, 1]", i % predictions.len().max(1))));
            }
        }
        Ok(Self { predictions, labels })
    }

    pub fn from_scores(predictions: &[BigFiveScores], labels: &[BigFiveScores]) -> Result<Self> {
        Self::new(
            predictions.iter().map(|s| *s.values()).collect(),
            labels.iter().map(|s| *s.values()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `(1/N)·Σ (1 − |label − pred|)`, evaluated as one minus the mean absolute error.
pub fn trait_accuracy(input: &MetricsInput, t: Trait) -> Result<f64> {
    if input.is_empty() {
        return Err(Error::Input("no samples to score".into()));
    }
    let j = t.index();
    let total: f64 = input
        .predictions
        .iter()
        .zip(&input.labels)
        .map(|(p, l)| (l[j] - p[j]).abs())
        .sum();
    Ok(1.0 - total / input.len() as f64)
}

pub fn trait_accuracies(input: &MetricsInput) -> Result<[f64; 5]> {
    let mut out = [0.0; 5];
    for t in Trait::ALL {
        out[t.index()] = trait_accuracy(input, t)?;
    }
    Ok(out)
}

/// Mean of the five per-trait accuracies.
pub fn average_of(traits: &[f64; 5]) -> f64 {
    traits.iter().sum::<f64>() / traits.len() as f64
}

pub fn average_accuracy(input: &MetricsInput) -> Result<f64> {
    Ok(average_of(&trait_accuracies(input)?))
}

/// Anything that maps a sample to five trait scores.
pub trait Predictor {
    fn predict(&self, sample: &Sample) -> Result<BigFiveScores>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: Scenario,
    pub traits: [f64; 5],
    pub average: f64,
    pub mae: f64,
}

impl ScenarioRow {
    pub fn from_traits(scenario: Scenario, traits: [f64; 5]) -> Self {
        let average = average_of(&traits);
        Self {
            scenario,
            traits,
            average,
            mae: 1.0 - average,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub model: String,
    pub seed: u64,
    pub rows: Vec<ScenarioRow>,
}

const HEADER: &str = "scenario,E,N,A,C,O,average,mae";

fn push_row(out: &mut String, name: &str, traits: &[f64; 5], average: f64, mae: f64) {
    let _ = write!(out, "{name}");
    for v in traits {
        let _ = write!(out, ",{v:.5}");
    }
    let _ = writeln!(out, ",{average:.5},{mae:.5}");
}

impl RobustnessReport {
    /// Rows must be exactly the clean scenario followed by the six non-ideal ones.
    pub fn new(model: impl Into<String>, seed: u64, rows: Vec<ScenarioRow>) -> Result<Self> {
        let got: Vec<Scenario> = rows.iter().map(|r| r.scenario).collect();
        if got != Scenario::ALL {
            return Err(Error::Input(format!("report rows {got:?} are not the seven scenarios in order")));
        }
        Ok(Self {
            model: model.into(),
            seed,
            rows,
        })
    }

    pub fn row(&self, scenario: Scenario) -> &ScenarioRow {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario)
            .expect("all scenarios present")
    }

    /// Per-trait mean over the six non-ideal scenarios.
    pub fn non_ideal_mean(&self) -> ScenarioRow {
        let mut traits = [0.0; 5];
        for sc in Scenario::NON_IDEAL {
            for (acc, v) in traits.iter_mut().zip(self.row(sc).traits) {
                *acc += v;
            }
        }
        traits.iter_mut().for_each(|v| *v /= Scenario::NON_IDEAL.len() as f64);
        let average = average_of(&traits);
        ScenarioRow {
            scenario: Scenario::Clean,
            traits,
            average,
            mae: 1.0 - average,
        }
    }

    /// Comma-separated table; `only` restricts output to one scenario row.
    pub fn to_table(&self, only: Option<Scenario>) -> String {
        let mut out = format!("{HEADER}\n");
        for r in self.rows.iter().filter(|r| only.is_none_or(|s| s == r.scenario)) {
            push_row(&mut out, r.scenario.tag(), &r.traits, r.average, r.mae);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Baseline-versus-candidate summary over the non-ideal scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub candidate: String,
    pub baseline_mean: ScenarioRow,
    pub candidate_mean: ScenarioRow,
    pub delta: [f64; 5],
    pub delta_average: f64,
}

impl Comparison {
    pub fn new(baseline: &RobustnessReport, candidate: &RobustnessReport) -> Self {
        let b = baseline.non_ideal_mean();
        let c = candidate.non_ideal_mean();
        let mut delta = [0.0; 5];
        for j in 0..5 {
            delta[j] = c.traits[j] - b.traits[j];
        }
        Self {
            baseline: baseline.model.clone(),
            candidate: candidate.model.clone(),
            delta_average: c.average - b.average,
            baseline_mean: b,
            candidate_mean: c,
            delta,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("method,E,N,A,C,O,average,mae\n");
        let b = &self.baseline_mean;
        let c = &self.candidate_mean;
        push_row(&mut out, &self.baseline, &b.traits, b.average, b.mae);
        push_row(&mut out, &self.candidate, &c.traits, c.average, c.mae);
        push_row(&mut out, "delta", &self.delta, self.delta_average, c.mae - b.mae);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

/// Predictions for every sample, in order.
pub fn predict_all<P: Predictor + ?Sized>(model: &P, samples: &[Sample]) -> Result<Vec<BigFiveScores>> {
    samples.iter().map(|s| model.predict(s)).collect()
}

/// Trait accuracies of `model` on the uncorrupted samples.
pub fn evaluate<P: Predictor + ?Sized>(model: &P, samples: &[Sample]) -> Result<[f64; 5]> {
    let preds = predict_all(model, samples)?;
    let labels: Vec<BigFiveScores> = samples.iter().map(|s| s.label).collect();
    trait_accuracies(&MetricsInput::from_scores(&preds, &labels)?)
}

/// Scores every scenario; sample `i` under scenario `k` uses seed `derive_seed(seed, i, k)`.
pub fn robustness_report<P: Predictor + ?Sized>(
    model: &P,
    name: &str,
    samples: &[Sample],
    seed: u64,
) -> Result<RobustnessReport> {
    if samples.is_empty() {
        return Err(Error::Input("robustness evaluation needs at least one sample".into()));
    }
    let mut rows = Vec::with_capacity(Scenario::ALL.len());
    for (k, sc) in Scenario::ALL.into_iter().enumerate() {
        let traits = if sc == Scenario::Clean {
            evaluate(model, samples)?
        } else {
            let corrupted: Vec<Sample> = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, k as u64));
                    apply_scenario(s, sc, &mut rng)
                })
                .collect();
            evaluate(model, &corrupted)?
        };
        rows.push(ScenarioRow::from_traits(sc, traits));
    }
    RobustnessReport::new(name, seed, rows)
}
