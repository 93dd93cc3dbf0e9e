use std::cell::Cell;
use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;
use crate::rng::seeded;
use crate::synthetic::gaussian_chain;

fn f(i: usize) -> Node {
    Node::Feature(i)
}

fn set(items: &[usize]) -> BTreeSet<usize> {
    items.iter().copied().collect()
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, j| acc * (n - j) / (j + 1))
}

/// Random DAG over `m` features and Y with every vertex of degree ≤ `max_degree`.
fn random_dag(seed: u64, m: usize, max_degree: usize) -> DagSpec {
    let mut rng = seeded(seed);
    let mut order: Vec<Node> = (0..m).map(f).chain([Node::Target]).collect();
    order.shuffle(&mut rng);
    let slot = |n: Node| match n {
        Node::Feature(i) => i,
        Node::Target => m,
    };
    let mut degree = vec![0usize; m + 1];
    let mut edges = Vec::new();
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            let (u, v) = (order[a], order[b]);
            if rng.gen_bool(0.4) && degree[slot(u)] < max_degree && degree[slot(v)] < max_degree {
                degree[slot(u)] += 1;
                degree[slot(v)] += 1;
                edges.push((u, v));
            }
        }
    }
    DagSpec::new(m, edges, 0.1).unwrap()
}

/// Bayes-ball reachability: is `b` reachable from `a` by an active trail given `z`?
fn bayes_ball_connected(dag: &DagSpec, a: Node, b: Node, z: &[Node]) -> bool {
    let total = dag.num_vertices();
    let zs: Vec<usize> = z.iter().map(|&n| dag.vertex(n).unwrap()).collect();
    let mut observed = vec![false; total];
    for &v in &zs {
        observed[v] = true;
    }
    let mut has_observed_descendant = vec![false; total];
    let mut stack = zs.clone();
    while let Some(v) = stack.pop() {
        if !has_observed_descendant[v] {
            has_observed_descendant[v] = true;
            stack.extend(dag.parents(v).iter().copied());
        }
    }
    let (start, goal) = (dag.vertex(a).unwrap(), dag.vertex(b).unwrap());
    // (vertex, arrived from a child)
    let mut seen = HashSet::new();
    let mut todo = vec![(start, true)];
    while let Some((v, up)) = todo.pop() {
        if !seen.insert((v, up)) {
            continue;
        }
        if v == goal && !observed[v] {
            return true;
        }
        if up && !observed[v] {
            todo.extend(dag.parents(v).iter().map(|&p| (p, true)));
            todo.extend(dag.children(v).iter().map(|&c| (c, false)));
        } else if !up {
            if !observed[v] {
                todo.extend(dag.children(v).iter().map(|&c| (c, false)));
            }
            if has_observed_descendant[v] {
                todo.extend(dag.parents(v).iter().map(|&p| (p, true)));
            }
        }
    }
    false
}

/// Answers from a fixed rule and counts calls.
struct Scripted<F> {
    m: usize,
    rule: F,
    calls: Cell<usize>,
}

impl<F: Fn(usize, &[usize]) -> bool> IndependenceTest for Scripted<F> {
    fn num_features(&self) -> usize {
        self.m
    }
    fn test(&self, i: usize, s: &[usize]) -> Result<TestOutcome> {
        self.calls.set(self.calls.get() + 1);
        let independent = (self.rule)(i, s);
        Ok(TestOutcome {
            statistic: if independent { 0.0 } else { 1.0 },
            p_value: if independent { 0.5 } else { 0.0 },
            independent,
        })
    }
}

#[test]
fn subsets_are_lexicographic() {
    let mut seen = Vec::new();
    for_each_subset(&[1, 3, 4, 7], 2, |s| {
        seen.push(s.to_vec());
        Ok(false)
    })
    .unwrap();
    assert_eq!(
        seen,
        vec![vec![1, 3], vec![1, 4], vec![1, 7], vec![3, 4], vec![3, 7], vec![4, 7]]
    );
    let mut empty = Vec::new();
    for_each_subset(&[2, 5], 0, |s| {
        empty.push(s.to_vec());
        Ok(false)
    })
    .unwrap();
    assert_eq!(empty, vec![Vec::<usize>::new()]);
    assert!(!for_each_subset(&[2], 2, |_| panic!("no subsets")).unwrap());
}

#[test]
fn subset_counts_are_binomial() {
    for n in 0..8 {
        let items: Vec<usize> = (0..n).collect();
        for c in 0..=n {
            let mut count = 0;
            for_each_subset(&items, c, |_| {
                count += 1;
                Ok(false)
            })
            .unwrap();
            assert_eq!(count, binomial(n, c), "n={n} c={c}");
        }
    }
}

#[test]
fn chain_keeps_only_the_direct_cause() {
    let dag = DagSpec::new(2, vec![(f(0), f(1)), (f(1), Node::Target)], 0.1).unwrap();
    for prune in [false, true] {
        let r = oracle_markov_blanket(&dag, 1, prune).unwrap();
        assert_eq!(r.selected, set(&[1]));
        assert_eq!(r.adjacents, set(&[1]));
        assert_eq!(r.separating_sets[&0], vec![1]);
    }
}

#[test]
fn v_structure_recovers_the_coparent() {
    // X1 → C ← Y, P → Y with X1 = 0, P = 1, C = 2
    let dag = DagSpec::new(
        3,
        vec![(f(1), Node::Target), (Node::Target, f(2)), (f(0), f(2))],
        0.1,
    )
    .unwrap();
    let r = oracle_markov_blanket(&dag, 2, false).unwrap();
    assert_eq!(r.adjacents, set(&[1, 2]));
    assert_eq!(r.coparents, set(&[0]));
    assert_eq!(r.selected, set(&[0, 1, 2]));
    assert_eq!(r.separating_sets[&0], Vec::<usize>::new());
}

#[test]
fn unpruned_search_can_keep_a_descendant_of_a_coparent() {
    // Y → C ← W → X: conditioning on C alone leaves Y and X connected.
    let (c, w, x) = (0, 1, 2);
    let dag = DagSpec::new(
        3,
        vec![(Node::Target, f(c)), (f(w), f(c)), (f(w), f(x))],
        0.1,
    )
    .unwrap();
    assert_eq!(dag.markov_blanket(), set(&[c, w]));
    let raw = oracle_markov_blanket(&dag, 2, false).unwrap();
    assert_eq!(raw.selected, set(&[c, w, x]));
    let pruned = oracle_markov_blanket(&dag, 2, true).unwrap();
    assert_eq!(pruned.selected, set(&[c, w]));
    assert_eq!(pruned.pruned, set(&[x]));
}

#[test]
fn oracle_search_matches_analytic_blanket_on_random_dags() {
    let mut checked = 0;
    for seed in 0..300u64 {
        let mut rng = seeded(seed ^ 0xABCD);
        let m = rng.gen_range(1..=7);
        let delta = rng.gen_range(1..=3);
        let dag = random_dag(seed, m, delta);
        let truth = dag.markov_blanket();
        let raw = oracle_markov_blanket(&dag, delta, false).unwrap();
        assert!(raw.selected.is_superset(&truth), "seed {seed}");
        assert!(raw.adjacents.is_disjoint(&raw.coparents));
        let r = oracle_markov_blanket(&dag, delta, true).unwrap();
        assert_eq!(r.selected, truth, "seed {seed}: {:?}", dag.edges);
        checked += 1;
    }
    assert_eq!(checked, 300);
}

#[test]
fn default_dag_blanket() {
    let dag = DagSpec::default_bullseye(0.3);
    for delta in [2, 3] {
        let r = oracle_markov_blanket(&dag, delta, true).unwrap();
        assert_eq!(r.selected, set(&[2, 4]));
        assert!(r.coparents.is_empty());
    }
}

#[test]
fn cost_bound_is_tight_when_nothing_is_removed() {
    for m in 1..7 {
        for delta in 0..4 {
            let t = Scripted {
                m,
                rule: |_: usize, _: &[usize]| false,
                calls: Cell::new(0),
            };
            let r = search(&t, delta, false).unwrap();
            let bound: usize = (0..=delta).map(|c| m * binomial(m - 1, c)).sum();
            assert_eq!(r.adjacency_tests(), bound, "m={m} delta={delta}");
            assert_eq!(t.calls.get(), bound);
            assert_eq!(r.selected, (0..m).collect());
        }
    }
}

#[test]
fn everything_independent_costs_one_test_each() {
    let t = Scripted {
        m: 5,
        rule: |_: usize, _: &[usize]| true,
        calls: Cell::new(0),
    };
    let r = search(&t, 3, true).unwrap();
    assert_eq!(r.adjacency_tests(), 5);
    assert!(r.selected.is_empty());
    // the coparent tests all condition on the empty set and hit the memo
    assert_eq!(t.calls.get(), 5);
}

#[test]
fn repeated_tests_are_memoized() {
    let dag = random_dag(17, 6, 3);
    let t = DsepOracle::new(&dag);
    let r = search(&t, 3, true).unwrap();
    let mut keys = HashSet::new();
    for rec in &r.test_log {
        assert!(keys.insert((rec.i, rec.s.clone())), "duplicate test {rec:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn log_replay_confirms_every_removal(seed in any::<u64>(), m in 1usize..8, delta in 0usize..4) {
        let dag = random_dag(seed, m, delta.max(1));
        let oracle = DsepOracle::new(&dag);
        let r = search(&oracle, delta, true).unwrap();
        let bound: usize = (0..=delta).map(|c| m * binomial(m - 1, c)).sum();
        prop_assert!(r.adjacency_tests() <= bound);
        prop_assert!(r.adjacents.is_disjoint(&r.coparents));
        prop_assert_eq!(
            &r.selected,
            &r.adjacents.union(&r.coparents).copied().filter(|i| !r.pruned.contains(i)).collect()
        );
        for (&i, s) in &r.separating_sets {
            prop_assert!(!r.adjacents.contains(&i));
            prop_assert!(s.len() <= delta);
            prop_assert!(oracle.test(i, s).unwrap().independent);
            let logged = r.test_log.iter().any(|rec| {
                rec.i == i && &rec.s == s && rec.independent && rec.phase == Phase::Adjacency
            });
            prop_assert!(logged);
        }
        for rec in &r.test_log {
            prop_assert_eq!(oracle.test(rec.i, &rec.s).unwrap().independent, rec.independent);
        }
    }

    #[test]
    fn relation_labels_match_bayes_ball(seed in any::<u64>(), m in 1usize..7, delta in 0usize..4) {
        let dag = random_dag(seed, m, 3);
        let suite = relation_suite(&dag, delta).unwrap();
        let expected: usize = m * (0..=delta).map(|c| binomial(m - 1, c)).sum::<usize>();
        prop_assert_eq!(suite.len(), expected);
        for rel in &suite {
            let given: Vec<Node> = rel.s.iter().map(|&j| f(j)).collect();
            prop_assert_eq!(rel.independent, !bayes_ball_connected(&dag, Node::Target, f(rel.i), &given));
        }
    }
}

#[test]
fn relation_suite_on_empty_graph_is_all_independent() {
    let dag = DagSpec::new(4, vec![], 0.1).unwrap();
    let suite = relation_suite(&dag, 2).unwrap();
    assert_eq!(suite.len(), 4 * (1 + 3 + 3));
    assert!(suite.iter().all(|r| r.independent));
}

#[test]
fn relation_suite_on_chain() {
    let dag = DagSpec::new(2, vec![(f(0), f(1)), (f(1), Node::Target)], 0.1).unwrap();
    let suite = relation_suite(&dag, 1).unwrap();
    let label = |i: usize, s: &[usize]| suite.iter().find(|r| r.i == i && r.s == s).unwrap().independent;
    assert!(!label(0, &[]));
    assert!(label(0, &[1]));
    assert!(!label(1, &[]));
    assert!(!label(1, &[0]));
    assert_eq!(suite.len(), 4);
}

#[test]
fn default_dag_relations_match_bayes_ball() {
    let dag = DagSpec::default_bullseye(0.3);
    let suite = relation_suite(&dag, 2).unwrap();
    assert_eq!(suite.len(), 96);
    for rel in &suite {
        let given: Vec<Node> = rel.s.iter().map(|&j| f(j)).collect();
        assert_eq!(rel.independent, !bayes_ball_connected(&dag, Node::Target, f(rel.i), &given), "{rel:?}");
    }
    assert!(suite.iter().any(|r| r.independent) && suite.iter().any(|r| !r.independent));
}

fn quick_mb(backend: CiBackend, seed: u64) -> MbConfig {
    MbConfig {
        delta: 1,
        backend,
        prune: true,
        ci: CiConfig {
            k_cmi: 20,
            num_permutations: 99,
            seed,
            ..CiConfig::default()
        },
    }
}

#[test]
fn raw_knn_search_on_gaussian_chain() {
    let (x, z, y) = gaussian_chain(400, 5).unwrap();
    let data = Dataset::new(vec![x, z], y).unwrap();
    let r = find_markov_blanket(&data, &quick_mb(CiBackend::RawKnn, 1), None).unwrap();
    assert_eq!(r.selected, set(&[1]));
    assert_eq!(r.separating_sets[&0], vec![1]);
    let again = find_markov_blanket(&data, &quick_mb(CiBackend::RawKnn, 1), None).unwrap();
    assert_eq!(r, again);
}

#[test]
fn too_few_samples_names_the_test() {
    let (x, z, y) = gaussian_chain(50, 5).unwrap();
    let data = Dataset::new(vec![x, z], y).unwrap();
    let cfg = MbConfig {
        ci: CiConfig {
            k_cmi: 100,
            ..CiConfig::default()
        },
        ..quick_mb(CiBackend::RawKnn, 0)
    };
    let err = find_markov_blanket(&data, &cfg, None).unwrap_err();
    assert!(matches!(err, Error::Test { .. }));
    assert!(err.to_string().contains("Y ⟂ X0 | {}"), "{err}");
}

#[test]
fn backend_requirements_are_checked() {
    let (x, z, y) = gaussian_chain(50, 5).unwrap();
    let data = Dataset::new(vec![x, z], y).unwrap();
    assert!(find_markov_blanket(&data, &quick_mb(CiBackend::MappedKnn, 0), None).is_err());
    assert!(find_markov_blanket(&data, &quick_mb(CiBackend::Oracle, 0), None).is_err());
    let short = Dataset::new(vec![data.features[0].clone()], data.target.clone()).unwrap();
    let model = MappingModel::<f64>::new(&[1, 1], &Default::default(), 0).unwrap();
    assert!(find_markov_blanket(&short, &quick_mb(CiBackend::MappedKnn, 0), Some(&model)).is_err());
}

#[test]
fn log_csv_layout() {
    let dag = DagSpec::new(2, vec![(f(0), f(1)), (f(1), Node::Target)], 0.1).unwrap();
    let r = oracle_markov_blanket(&dag, 1, false).unwrap();
    let mut buf = Vec::new();
    r.write_log_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,S,statistic,p_value,decision,phase");
    assert_eq!(lines[1], "0,,1,0,dependent,adjacency");
    assert!(lines.contains(&"0,1,0,1,independent,adjacency"));
    assert_eq!(lines.len(), 1 + r.test_log.len());
}

#[test]
fn backend_names_parse() {
    assert_eq!("mapped_knn".parse::<CiBackend>().unwrap(), CiBackend::MappedKnn);
    assert_eq!("raw".parse::<CiBackend>().unwrap(), CiBackend::RawKnn);
    assert_eq!("oracle".parse::<CiBackend>().unwrap(), CiBackend::Oracle);
    assert!("svm".parse::<CiBackend>().is_err());
    let cfg: MbConfig = serde_json::from_str(r#"{"delta": 2, "backend": "raw_knn"}"#).unwrap();
    assert_eq!(cfg.delta, 2);
    assert_eq!(cfg.backend, CiBackend::RawKnn);
    assert!(cfg.prune);
}
