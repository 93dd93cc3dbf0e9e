use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::roc::{roc_sweep, RocTable};
use crate::ci::{ci_test, CiConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::{ksg_mi, KnnConfig};
use crate::mapper::{train, MappingModel, ModelConfig, TrainConfig};
use crate::markov_blanket::{
    find_markov_blanket, oracle_markov_blanket, relation_suite, CiBackend, DsepOracle, IndependenceTest,
    KnnTester, MbConfig, MbResult,
};
use crate::synthetic::{gaussian_chain, gen_bullseye_2d, gen_bullseye_dag, mi_oracle_bullseye, BullseyeConfig, DagSpec, Rings};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MiVsEps,
    MiVsN,
    CiRoc,
    MbSelect,
    Calibrate,
}

/// What a ROC sweep ranks relations by; both put "more independent" higher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RocScore {
    /// The permutation p-value.
    PValue,
    /// The negated CMI estimate; needs no permutations.
    Statistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Neighbor count of the MI estimates.
    pub k: usize,
    /// Also train nominal and regularized maps in the MI grids.
    pub mapped: bool,
    pub rings: Rings,
    /// Graph of the ROC and selection experiments; the six-feature default when absent.
    pub dag: Option<DagSpec>,
    pub delta: usize,
    pub backends: Vec<CiBackend>,
    pub scores: Vec<RocScore>,
    pub prune: bool,
    pub ci: CiConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::MiVsEps,
            epsilons: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            ns: vec![2000],
            seeds: vec![0],
            k: 5,
            mapped: true,
            rings: Rings::WIDE,
            dag: None,
            delta: 3,
            backends: vec![CiBackend::MappedKnn, CiBackend::RawKnn],
            scores: vec![RocScore::PValue, RocScore::Statistic],
            prune: true,
            ci: CiConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::InvalidArgument(format!("the {what} grid is empty")));
        if self.seeds.is_empty() {
            return empty("seed");
        }
        if self.ns.is_empty() {
            return empty("sample size");
        }
        match self.kind {
            ExperimentKind::MiVsEps | ExperimentKind::MiVsN if self.epsilons.is_empty() => empty("epsilon"),
            ExperimentKind::CiRoc | ExperimentKind::MbSelect if self.backends.is_empty() => empty("backend"),
            ExperimentKind::CiRoc if self.scores.is_empty() => empty("score"),
            _ => Ok(()),
        }
    }

    /// The configured graph, or the default one at the first ε of the grid.
    pub fn dag(&self) -> DagSpec {
        self.dag
            .clone()
            .unwrap_or_else(|| DagSpec::default_bullseye(self.epsilons.first().copied().unwrap_or(0.3)))
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            delta: self.delta,
            seed,
            ..self.train.clone()
        }
    }
}

/// Wraps results as `{"spec", "results", "version"}`.
pub fn envelope<S: Serialize, R: Serialize>(spec: &S, results: &R) -> Result<Value> {
    Ok(json!({
        "spec": serde_json::to_value(spec)?,
        "results": serde_json::to_value(results)?,
        "version": VERSION,
    }))
}

/// Runs `spec` and returns the JSON envelope of its results.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Value> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::MiVsEps | ExperimentKind::MiVsN => envelope(spec, &run_mi_grid(spec)?),
        ExperimentKind::CiRoc => envelope(spec, &run_ci_roc(spec)?),
        ExperimentKind::MbSelect => envelope(spec, &run_mb_select(spec)?),
        ExperimentKind::Calibrate => envelope(spec, &run_calibrate(spec)?),
    }
}

/// Trains a fresh mapping model on `data`.
pub fn fit_maps(data: &Dataset<f64>, model: &ModelConfig, cfg: &TrainConfig) -> Result<MappingModel<f64>> {
    let mut m = MappingModel::new(&data.feature_dims(), model, cfg.seed)?;
    train(&mut m, data, cfg)?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiRow {
    pub epsilon: f64,
    pub n: usize,
    pub seed: u64,
    pub oracle: f64,
    /// k-NN on the raw two-dimensional X.
    pub raw: f64,
    /// k-NN on the latent radius R.
    pub radius: f64,
    /// k-NN on maps trained without the regularizer.
    pub nominal: Option<f64>,
    /// k-NN on maps trained with the configured λ.
    pub regularized: Option<f64>,
}

/// Estimates of I(X;Y) on the 2-D bullseye over the ε × n × seed grid, in grid order.
pub fn run_mi_grid(spec: &ExperimentSpec) -> Result<Vec<MiRow>> {
    spec.validate()?;
    let jobs: Vec<(f64, usize, u64)> = spec
        .epsilons
        .iter()
        .flat_map(|&e| spec.ns.iter().flat_map(move |&n| spec.seeds.iter().map(move |&s| (e, n, s))))
        .collect();
    let knn = KnnConfig::with_k(spec.k);
    jobs.par_iter()
        .map(|&(epsilon, n, seed)| {
            let cfg = BullseyeConfig {
                rings: spec.rings,
                ..BullseyeConfig::new(epsilon, n, seed)
            };
            let data = gen_bullseye_2d(&cfg)?;
            let raw = ksg_mi(&data.x, &data.y, &knn)?;
            let radius = ksg_mi(&data.r, &data.y, &knn)?;
            let (nominal, regularized) = if spec.mapped {
                let ds = Dataset::new(vec![data.x.clone()], data.y.clone())?;
                let mapped_mi = |lambda: f64| -> Result<f64> {
                    let cfg = TrainConfig {
                        lambda,
                        ..spec.train_config(seed)
                    };
                    let model = fit_maps(&ds, &spec.model, &cfg)?;
                    ksg_mi(&model.transform_feature(0, &data.x)?, &data.y, &knn)
                };
                (Some(mapped_mi(0.0)?), Some(mapped_mi(spec.train.lambda)?))
            } else {
                (None, None)
            };
            Ok(MiRow {
                epsilon,
                n,
                seed,
                oracle: mi_oracle_bullseye(epsilon, &spec.rings)?,
                raw,
                radius,
                nominal,
                regularized,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRelation {
    pub i: usize,
    pub s: Vec<usize>,
    pub independent: bool,
    pub statistic: f64,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiRocResult {
    pub seed: u64,
    pub n: usize,
    pub backend: CiBackend,
    pub relations: Vec<ScoredRelation>,
    pub roc_p_value: Option<RocTable>,
    pub roc_statistic: Option<RocTable>,
}

/// Scores every relation of the DAG's suite with each backend.
///
/// Per seed and sample size, one dataset is drawn and, for the mapped
/// backend, one mapping model is trained on it and reused by every test.
pub fn run_ci_roc(spec: &ExperimentSpec) -> Result<Vec<CiRocResult>> {
    spec.validate()?;
    let dag = spec.dag();
    let suite = relation_suite(&dag, spec.delta)?;
    let labels: Vec<bool> = suite.iter().map(|r| r.independent).collect();
    let want_p = spec.scores.contains(&RocScore::PValue);
    let want_stat = spec.scores.contains(&RocScore::Statistic);
    let mut out = Vec::new();
    for &n in &spec.ns {
        for &seed in &spec.seeds {
            let data = gen_bullseye_dag(&dag, n, seed)?;
            for &backend in &spec.backends {
                let ci = CiConfig { seed, ..spec.ci };
                let tester: Box<dyn ScoringTest> = match backend {
                    CiBackend::Oracle => Box::new(DsepOracle::new(&dag)),
                    CiBackend::RawKnn => Box::new(KnnTester::new(data.features.clone(), data.target.clone(), ci)?),
                    CiBackend::MappedKnn => {
                        let model = fit_maps(&data, &spec.model, &spec.train_config(seed))?;
                        Box::new(KnnTester::new(model.transform(&data)?, data.target.clone(), ci)?)
                    }
                };
                let relations = suite
                    .iter()
                    .map(|r| {
                        let (statistic, p_value) = if want_p {
                            let t = tester.test(r.i, &r.s)?;
                            (t.statistic, Some(t.p_value))
                        } else {
                            (tester.statistic_only(r.i, &r.s)?, None)
                        };
                        Ok(ScoredRelation {
                            i: r.i,
                            s: r.s.clone(),
                            independent: r.independent,
                            statistic,
                            p_value,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let roc_p_value = if want_p {
                    let p: Vec<f64> = relations.iter().map(|r| r.p_value.unwrap_or(f64::NAN)).collect();
                    Some(roc_sweep(&labels, &p)?)
                } else {
                    None
                };
                let roc_statistic = if want_stat {
                    let s: Vec<f64> = relations.iter().map(|r| -r.statistic).collect();
                    Some(roc_sweep(&labels, &s)?)
                } else {
                    None
                };
                out.push(CiRocResult {
                    seed,
                    n,
                    backend,
                    relations,
                    roc_p_value,
                    roc_statistic,
                });
            }
        }
    }
    Ok(out)
}

/// A test that can also report its statistic without running the null.
trait ScoringTest: IndependenceTest {
    fn statistic_only(&self, i: usize, s: &[usize]) -> Result<f64>;
}

impl ScoringTest for KnnTester<f64> {
    fn statistic_only(&self, i: usize, s: &[usize]) -> Result<f64> {
        self.statistic(i, s)
    }
}

impl ScoringTest for DsepOracle<'_> {
    fn statistic_only(&self, i: usize, s: &[usize]) -> Result<f64> {
        Ok(self.test(i, s)?.statistic)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MbSelectRow {
    pub seed: u64,
    pub n: usize,
    pub backend: CiBackend,
    pub truth: BTreeSet<usize>,
    pub exact: bool,
    pub result: MbResult,
}

/// Markov blanket selection on data drawn from the DAG, per backend and seed.
pub fn run_mb_select(spec: &ExperimentSpec) -> Result<Vec<MbSelectRow>> {
    spec.validate()?;
    let dag = spec.dag();
    let truth = dag.markov_blanket();
    let mut out = Vec::new();
    for &n in &spec.ns {
        for &seed in &spec.seeds {
            let data = gen_bullseye_dag(&dag, n, seed)?;
            for &backend in &spec.backends {
                let cfg = MbConfig {
                    delta: spec.delta,
                    backend,
                    prune: spec.prune,
                    ci: CiConfig { seed, ..spec.ci },
                };
                let result = match backend {
                    CiBackend::Oracle => oracle_markov_blanket(&dag, spec.delta, spec.prune)?,
                    CiBackend::RawKnn => find_markov_blanket(&data, &cfg, None)?,
                    CiBackend::MappedKnn => {
                        let model = fit_maps(&data, &spec.model, &spec.train_config(seed))?;
                        find_markov_blanket(&data, &cfg, Some(&model))?
                    }
                };
                out.push(MbSelectRow {
                    seed,
                    n,
                    backend,
                    exact: result.selected == truth,
                    truth: truth.clone(),
                    result,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRow {
    pub n: usize,
    pub trials: usize,
    pub alpha: f64,
    pub rejections: usize,
    pub false_positive_rate: f64,
    pub p_values: Vec<f64>,
}

/// False positive rate of the CI test on Gaussian chains X → Z → Y, where
/// X ⟂ Y | Z holds, with one trial per seed.
pub fn run_calibrate(spec: &ExperimentSpec) -> Result<Vec<CalibrateRow>> {
    spec.validate()?;
    spec.ns
        .iter()
        .map(|&n| {
            let p_values = spec
                .seeds
                .iter()
                .map(|&seed| {
                    let (x, z, y) = gaussian_chain(n, seed)?;
                    let cfg = CiConfig { seed, ..spec.ci };
                    Ok(ci_test(&x, &y, Some(&z), &cfg)?.p_value)
                })
                .collect::<Result<Vec<f64>>>()?;
            let rejections = p_values.iter().filter(|&&p| p <= spec.ci.alpha).count();
            Ok(CalibrateRow {
                n,
                trials: p_values.len(),
                alpha: spec.ci.alpha,
                rejections,
                false_positive_rate: rejections as f64 / p_values.len() as f64,
                p_values,
            })
        })
        .collect()
}

