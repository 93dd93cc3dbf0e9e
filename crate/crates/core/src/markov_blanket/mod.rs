//! Markov blanket search: adjacency elimination with growing conditioning
//! sets, then coparent recovery, over any conditional independence backend.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ci::{ci_test, CiConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::{CmiEstimator, SampleBlock};
use crate::mapper::MappingModel;
use crate::rng;
use crate::scalar::Scalar;
use crate::synthetic::{d_separated, DagSpec, Node};

#[cfg(test)]
mod tests;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiBackend {
    /// k-NN tests on learned feature maps f_i(X_i).
    MappedKnn,
    /// k-NN tests on the raw feature blocks.
    RawKnn,
    /// d-separation in a known DAG.
    Oracle,
}

impl std::str::FromStr for CiBackend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mapped_knn" | "mapped" => Ok(CiBackend::MappedKnn),
            "raw_knn" | "raw" => Ok(CiBackend::RawKnn),
            "oracle" => Ok(CiBackend::Oracle),
            other => Err(Error::InvalidArgument(format!(
                "unknown backend `{other}`, expected mapped_knn, raw_knn or oracle"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MbConfig {
    /// Largest conditioning set size Δ of the adjacency phase.
    pub delta: usize,
    pub backend: CiBackend,
    /// Run the backward elimination pass after coparent recovery.
    pub prune: bool,
    pub ci: CiConfig,
}

impl Default for MbConfig {
    fn default() -> Self {
        Self {
            delta: 3,
            backend: CiBackend::MappedKnn,
            prune: true,
            ci: CiConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adjacency,
    Coparent,
    Prune,
}

/// Outcome of one test of Y ⟂ X_i | X_S.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub i: usize,
    pub s: Vec<usize>,
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MbResult {
    pub adjacents: BTreeSet<usize>,
    pub coparents: BTreeSet<usize>,
    /// Features dropped by the elimination pass, if it ran.
    pub pruned: BTreeSet<usize>,
    pub selected: BTreeSet<usize>,
    /// Separating set found for every feature removed from the adjacents.
    pub separating_sets: BTreeMap<usize, Vec<usize>>,
    pub test_log: Vec<TestRecord>,
}

impl MbResult {
    /// Writes the test log as CSV: `i,S,statistic,p_value,decision,phase`.
    pub fn write_log_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["i", "S", "statistic", "p_value", "decision", "phase"])?;
        for r in &self.test_log {
            let s: Vec<String> = r.s.iter().map(usize::to_string).collect();
            w.write_record([
                r.i.to_string(),
                s.join(";"),
                r.statistic.to_string(),
                r.p_value.to_string(),
                if r.independent { "independent" } else { "dependent" }.to_string(),
                match r.phase {
                    Phase::Adjacency => "adjacency",
                    Phase::Coparent => "coparent",
                    Phase::Prune => "prune",
                }
                .to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Number of tests run in the adjacency phase.
    pub fn adjacency_tests(&self) -> usize {
        self.test_log.iter().filter(|r| r.phase == Phase::Adjacency).count()
    }
}

/// A conditional independence predicate for Y ⟂ X_i | X_S over `m` features.
pub trait IndependenceTest {
    fn num_features(&self) -> usize;
    fn test(&self, i: usize, s: &[usize]) -> Result<TestOutcome>;
}

/// k-NN permutation tests on per-feature sample blocks.
pub struct KnnTester<T> {
    features: Vec<SampleBlock<T>>,
    target: SampleBlock<T>,
    ci: CiConfig,
}

impl<T: Scalar> KnnTester<T> {
    pub fn new(features: Vec<SampleBlock<T>>, target: SampleBlock<T>, ci: CiConfig) -> Result<Self> {
        for f in &features {
            if f.n() != target.n() {
                return Err(Error::DimensionMismatch {
                    context: "feature sample count",
                    expected: target.n(),
                    actual: f.n(),
                });
            }
        }
        Ok(Self { features, target, ci })
    }

    fn conditioning(&self, s: &[usize]) -> Result<Option<SampleBlock<T>>> {
        if s.is_empty() {
            return Ok(None);
        }
        let blocks: Vec<&SampleBlock<T>> = s.iter().map(|&j| &self.features[j]).collect();
        SampleBlock::hstack(&blocks).map(Some)
    }

    /// The CMI estimate of the test of feature `i` given `s`, without the permutation null.
    pub fn statistic(&self, i: usize, s: &[usize]) -> Result<f64> {
        if self.target.n() <= self.ci.k_cmi {
            return Err(Error::InsufficientSamples {
                n: self.target.n(),
                k: self.ci.k_cmi,
            });
        }
        let z = self.conditioning(s)?;
        let est = CmiEstimator::new(&self.target, z.as_ref(), self.ci.knn())?;
        Ok(est.estimate(&self.features[i])?.as_f64())
    }
}

/// Stable stream id for the test of feature `i` given `s`.
fn test_stream(i: usize, s: &[usize]) -> u64 {
    s.iter()
        .fold(rng::mix(i as u64), |h, &j| rng::mix(h ^ (j as u64 + 1)))
}

impl<T: Scalar> IndependenceTest for KnnTester<T> {
    fn num_features(&self) -> usize {
        self.features.len()
    }

    fn test(&self, i: usize, s: &[usize]) -> Result<TestOutcome> {
        let z = self.conditioning(s)?;
        let cfg = CiConfig {
            seed: rng::derive_seed(self.ci.seed, test_stream(i, s)),
            ..self.ci
        };
        let r = ci_test(&self.features[i], &self.target, z.as_ref(), &cfg)?;
        Ok(TestOutcome {
            statistic: r.statistic,
            p_value: r.p_value,
            independent: r.independent,
        })
    }
}

/// d-separation in a known DAG; p-values are 1 (separated) or 0.
pub struct DsepOracle<'a> {
    dag: &'a DagSpec,
}

impl<'a> DsepOracle<'a> {
    pub fn new(dag: &'a DagSpec) -> Self {
        Self { dag }
    }
}

impl IndependenceTest for DsepOracle<'_> {
    fn num_features(&self) -> usize {
        self.dag.m
    }

    fn test(&self, i: usize, s: &[usize]) -> Result<TestOutcome> {
        let given: Vec<Node> = s.iter().map(|&j| Node::Feature(j)).collect();
        let sep = d_separated(self.dag, Node::Target, Node::Feature(i), &given)?;
        Ok(TestOutcome {
            statistic: if sep { 0.0 } else { 1.0 },
            p_value: if sep { 1.0 } else { 0.0 },
            independent: sep,
        })
    }
}

/// Calls `visit` on every `c`-subset of `items` in lexicographic order until it returns true.
fn for_each_subset(items: &[usize], c: usize, mut visit: impl FnMut(&[usize]) -> Result<bool>) -> Result<bool> {
    let n = items.len();
    if c > n {
        return Ok(false);
    }
    let mut idx: Vec<usize> = (0..c).collect();
    let mut subset = vec![0; c];
    loop {
        for (dst, &k) in subset.iter_mut().zip(&idx) {
            *dst = items[k];
        }
        if visit(&subset)? {
            return Ok(true);
        }
        // advance to the next combination
        let Some(pos) = (0..c).rev().find(|&p| idx[p] != p + n - c) else {
            return Ok(false);
        };
        idx[pos] += 1;
        for q in pos + 1..c {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Runs the search with conditioning sets up to `delta`.
///
/// Adjacency phase: for c = 0..=Δ, every feature still adjacent at the start
/// of the level is tested against the c-subsets of the current adjacents
/// (itself excluded) in lexicographic order, and removed at the first
/// independence. Coparent phase: every removed feature is tested given the
/// final adjacents and kept if dependent. With `prune`, each selected
/// feature is then tested given the rest of the selection, in index order,
/// and dropped if independent. Repeated (i, S) tests reuse the first
/// outcome and are logged once.
pub fn search(tester: &dyn IndependenceTest, delta: usize, prune: bool) -> Result<MbResult> {
    let m = tester.num_features();
    let memo: RefCell<HashMap<(usize, Vec<usize>), TestOutcome>> = RefCell::new(HashMap::new());
    let log: RefCell<Vec<TestRecord>> = RefCell::new(Vec::new());
    let run = |i: usize, s: &[usize], phase: Phase| -> Result<TestOutcome> {
        if let Some(&hit) = memo.borrow().get(&(i, s.to_vec())) {
            return Ok(hit);
        }
        let out = tester.test(i, s).map_err(|e| Error::Test {
            test: describe(i, s),
            source: Box::new(e),
        })?;
        memo.borrow_mut().insert((i, s.to_vec()), out);
        log.borrow_mut().push(TestRecord {
            i,
            s: s.to_vec(),
            statistic: out.statistic,
            p_value: out.p_value,
            independent: out.independent,
            phase,
        });
        Ok(out)
    };

    let mut adj: BTreeSet<usize> = (0..m).collect();
    let mut separating_sets = BTreeMap::new();
    for c in 0..=delta {
        if adj.len() < c + 1 {
            break;
        }
        let snapshot: Vec<usize> = adj.iter().copied().collect();
        for i in snapshot {
            let others: Vec<usize> = adj.iter().copied().filter(|&j| j != i).collect();
            let mut sep = None;
            for_each_subset(&others, c, |s| {
                let independent = run(i, s, Phase::Adjacency)?.independent;
                if independent {
                    sep = Some(s.to_vec());
                }
                Ok(independent)
            })?;
            if let Some(s) = sep {
                adj.remove(&i);
                separating_sets.insert(i, s);
            }
        }
    }

    let adj_vec: Vec<usize> = adj.iter().copied().collect();
    let mut coparents = BTreeSet::new();
    for i in (0..m).filter(|i| !adj.contains(i)) {
        if !run(i, &adj_vec, Phase::Coparent)?.independent {
            coparents.insert(i);
        }
    }
    let mut selected: BTreeSet<usize> = adj.union(&coparents).copied().collect();
    let mut pruned = BTreeSet::new();
    if prune {
        let candidates: Vec<usize> = selected.iter().copied().collect();
        for i in candidates {
            let rest: Vec<usize> = selected.iter().copied().filter(|&j| j != i).collect();
            if run(i, &rest, Phase::Prune)?.independent {
                selected.remove(&i);
                pruned.insert(i);
            }
        }
    }
    Ok(MbResult {
        adjacents: adj,
        coparents,
        pruned,
        selected,
        separating_sets,
        test_log: log.into_inner(),
    })
}

fn describe(i: usize, s: &[usize]) -> String {
    let names: Vec<String> = s.iter().map(|j| format!("X{j}")).collect();
    format!("Y ⟂ X{i} | {{{}}}", names.join(", "))
}

/// Markov blanket of the target of `dataset` with a k-NN backend.
///
/// `mapped_knn` tests run on `model`'s feature maps; `raw_knn` on the raw
/// feature blocks. The `oracle` backend needs a graph: see [`oracle_markov_blanket`].
pub fn find_markov_blanket<T: Scalar>(
    dataset: &Dataset<T>,
    cfg: &MbConfig,
    model: Option<&MappingModel<T>>,
) -> Result<MbResult> {
    let features = match (cfg.backend, model) {
        (CiBackend::MappedKnn, Some(model)) => model.transform(dataset)?,
        (CiBackend::MappedKnn, None) => {
            return Err(Error::InvalidArgument(
                "the mapped_knn backend needs a trained mapping model".into(),
            ))
        }
        (CiBackend::RawKnn, _) => dataset.features.clone(),
        (CiBackend::Oracle, _) => {
            return Err(Error::InvalidArgument(
                "the oracle backend answers from a DAG, not from data".into(),
            ))
        }
    };
    let tester = KnnTester::new(features, dataset.target.clone(), cfg.ci)?;
    search(&tester, cfg.delta, cfg.prune)
}

/// Markov blanket search with d-separation in `dag` as the test.
pub fn oracle_markov_blanket(dag: &DagSpec, delta: usize, prune: bool) -> Result<MbResult> {
    search(&DsepOracle::new(dag), delta, prune)
}

/// One labeled relation Y ⟂ X_i | X_S.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub i: usize,
    pub s: Vec<usize>,
    pub independent: bool,
}

/// Every relation Y ⟂ X_i | X_S with |S| ≤ Δ, labeled by d-separation, ordered
/// by i, then |S|, then S lexicographically.
pub fn relation_suite(dag: &DagSpec, delta: usize) -> Result<Vec<Relation>> {
    let m = dag.m;
    let oracle = DsepOracle::new(dag);
    let mut out = Vec::new();
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        for c in 0..=delta.min(others.len()) {
            for_each_subset(&others, c, |s| {
                out.push(Relation {
                    i,
                    s: s.to_vec(),
                    independent: oracle.test(i, s)?.independent,
                });
                Ok(false)
            })?;
        }
    }
    Ok(out)
}
