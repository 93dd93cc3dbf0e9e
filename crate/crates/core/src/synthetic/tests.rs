use approx::assert_abs_diff_eq;
use rand::Rng;

use super::*;
use crate::rng::seeded;

fn norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// I(R;Y) from a midpoint grid over R: the density of Y is built by summing
/// the noise kernel over R cells, then h(Y) by a Riemann sum on a Y grid.
fn grid_oracle(epsilon: f64, rings: &Rings) -> f64 {
    let dr = 2e-5;
    let mut radii = Vec::new();
    for (a, b) in [rings.inner, rings.outer] {
        let cells = ((b - a) / dr).round() as usize;
        let h = (b - a) / cells as f64;
        radii.extend((0..cells).map(|c| a + (c as f64 + 0.5) * h));
    }
    let pr = 1.0 / radii.len() as f64;
    let lo = rings.inner.0 - epsilon;
    let hi = rings.outer.1 + epsilon;
    let dy = 1e-3;
    let cells = ((hi - lo) / dy).round() as usize;
    let dy = (hi - lo) / cells as f64;
    let mut h = 0.0;
    for c in 0..cells {
        let y = lo + (c as f64 + 0.5) * dy;
        let p: f64 = radii
            .iter()
            .filter(|&&r| (y - r).abs() <= epsilon)
            .count() as f64
            * pr
            / (2.0 * epsilon);
        if p > 0.0 {
            h -= p * p.ln() * dy;
        }
    }
    h - (2.0 * epsilon).ln()
}

#[test]
fn noiseless_bullseye_identities() {
    let mut cfg = BullseyeConfig::new(0.0, 500, 3);
    for rings in [Rings::WIDE, Rings::QUARTER] {
        cfg.rings = rings;
        let data = gen_bullseye_2d(&cfg).unwrap();
        for i in 0..cfg.n {
            assert_eq!(data.y.row(i)[0], data.r.row(i)[0]);
            assert!((norm(data.x.row(i)) - data.r.row(i)[0]).abs() <= 1e-12);
            assert!(rings.contains(data.r.row(i)[0]));
        }
    }
}

#[test]
fn bullseye_points_lie_on_their_circle() {
    let data = gen_bullseye_2d(&BullseyeConfig::new(0.3, 2000, 9)).unwrap();
    for i in 0..2000 {
        assert!((norm(data.x.row(i)) - data.r.row(i)[0]).abs() <= 1e-12);
        assert!((data.y.row(i)[0] - data.r.row(i)[0]).abs() <= 0.3);
    }
}

#[test]
fn inner_ring_has_half_the_mass() {
    let data = gen_bullseye_2d(&BullseyeConfig::new(0.1, 10_000, 4)).unwrap();
    let inner = data.r.values().iter().filter(|&&r| r <= 2.0).count() as f64 / 10_000.0;
    assert!((inner - 0.5).abs() <= 0.03, "inner fraction {inner}");
}

#[test]
fn bullseye_generation_is_deterministic() {
    let cfg = BullseyeConfig::new(0.2, 300, 12);
    assert_eq!(gen_bullseye_2d(&cfg).unwrap(), gen_bullseye_2d(&cfg).unwrap());
    let dag = DagSpec::default_bullseye(0.3);
    let a = gen_bullseye_dag(&dag, 200, 5).unwrap();
    let b = gen_bullseye_dag(&dag, 200, 5).unwrap();
    assert_eq!(a.target, b.target);
    assert_eq!(a.features, b.features);
}

#[test]
fn bullseye_rejects_bad_config() {
    assert!(gen_bullseye_2d(&BullseyeConfig::new(0.6, 10, 0)).is_err());
    assert!(gen_bullseye_2d(&BullseyeConfig::new(-0.1, 10, 0)).is_err());
    assert!(gen_bullseye_2d(&BullseyeConfig::new(0.1, 0, 0)).is_err());
    let mut cfg = BullseyeConfig::new(0.1, 10, 0);
    cfg.rings = Rings {
        inner: (1.0, 3.0),
        outer: (2.0, 4.0),
    };
    assert!(gen_bullseye_2d(&cfg).is_err());
}

#[test]
fn oracle_matches_grid_integration() {
    for rings in [Rings::QUARTER, Rings::WIDE] {
        for eps in [0.1, 0.3, 0.5] {
            let exact = mi_oracle_bullseye(eps, &rings).unwrap();
            let grid = grid_oracle(eps, &rings);
            assert!((exact - grid).abs() <= 1e-3, "{rings:?} eps {eps}: {exact} vs {grid}");
        }
    }
}

#[test]
fn oracle_wide_rings_closed_form() {
    // Unit-width rings with gaps wider than 2ε: each ring gives a flat top of
    // height ½ and length 1 − 2ε, with linear ramps of width 2ε at both edges.
    let eps: f64 = 0.2;
    let top = -(1.0 - 2.0 * eps) * 0.5 * 0.5f64.ln();
    // ∫_0^{2ε} −(t/(4ε)) ln(t/(4ε)) dt = 4ε ∫_0^{1/2} −u ln u du
    let ramp = 4.0 * eps * (0.125 * (0.5f64).ln().abs() + 0.0625);
    let h = 2.0 * (top + 2.0 * ramp);
    let expect = h - (2.0 * eps).ln();
    assert_abs_diff_eq!(mi_oracle_bullseye(eps, &Rings::WIDE).unwrap(), expect, epsilon = 1e-9);
}

#[test]
fn oracle_decreases_with_noise() {
    let grid: Vec<f64> = (1..=50).map(|i| i as f64 * 0.01).collect();
    for rings in [Rings::QUARTER, Rings::WIDE] {
        let values: Vec<f64> = grid.iter().map(|&e| mi_oracle_bullseye(e, &rings).unwrap()).collect();
        for w in values.windows(2) {
            assert!(w[1] < w[0], "{rings:?}: {values:?}");
        }
    }
}

#[test]
fn oracle_density_integrates_to_one() {
    for eps in [0.05, 0.3, 0.5] {
        let n = 200_000;
        let (lo, hi) = (0.25 - eps, 1.0 + eps);
        let dy = (hi - lo) / n as f64;
        let mass: f64 = (0..n)
            .map(|i| output_density(lo + (i as f64 + 0.5) * dy, eps, &Rings::QUARTER) * dy)
            .sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }
}

#[test]
fn oracle_rejects_bad_inputs() {
    assert!(mi_oracle_bullseye(0.0, &Rings::QUARTER).is_err());
    assert!(mi_oracle_bullseye(f64::NAN, &Rings::QUARTER).is_err());
    let bad = Rings {
        inner: (0.5, 0.25),
        outer: (0.75, 1.0),
    };
    assert!(mi_oracle_bullseye(0.1, &bad).is_err());
}

#[test]
fn dag_root_and_copy_are_exact_without_noise() {
    let f = Node::Feature;
    let dag = DagSpec::new(2, vec![(f(0), f(1))], 0.0).unwrap();
    let data = gen_bullseye_dag(&dag, 1000, 2).unwrap();
    for i in 0..1000 {
        let a = norm(data.features[0].row(i));
        let b = norm(data.features[1].row(i));
        assert!(Rings::WIDE.contains(a) || (a - a.clamp(1.0, 4.0)).abs() <= 1e-12);
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn default_dag_target_tracks_its_parents() {
    let dag = DagSpec::default_bullseye(0.05);
    let data = gen_bullseye_dag(&dag, 5000, 1).unwrap();
    let s: Vec<f64> = (0..5000)
        .map(|i| norm(data.features[2].row(i)) + norm(data.features[4].row(i)))
        .collect();
    let t: Vec<f64> = data.target.values().iter().map(|y| 2.0 * y).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, mt) = (mean(&s), mean(&t));
    let cov: f64 = s.iter().zip(&t).map(|(a, b)| (a - ms) * (b - mt)).sum();
    let vs: f64 = s.iter().map(|a| (a - ms).powi(2)).sum();
    let vt: f64 = t.iter().map(|b| (b - mt).powi(2)).sum();
    let corr = cov / (vs * vt).sqrt();
    assert!(corr > 0.99, "corr = {corr}");
    assert_eq!(data.feature_dims(), vec![3; 6]);
}

#[test]
fn default_dag_blanket() {
    let dag = DagSpec::default_bullseye(0.3);
    assert_eq!(dag.markov_blanket().into_iter().collect::<Vec<_>>(), vec![2, 4]);
}

#[test]
fn dag_json_round_trip_and_errors() {
    let dag = DagSpec::default_bullseye(0.3);
    let text = serde_json::to_string(&dag).unwrap();
    assert!(text.contains("\"X3\""));
    let back: DagSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, dag);
    let cyclic = r#"{"m": 2, "edges": [["X1","X2"],["X2","X1"]], "epsilon": 0.1}"#;
    assert!(serde_json::from_str::<DagSpec>(cyclic).is_err());
    let f = Node::Feature;
    assert!(matches!(
        DagSpec::new(2, vec![(f(0), f(1)), (f(1), f(0))], 0.1),
        Err(crate::Error::CyclicGraph)
    ));
    assert!(DagSpec::new(2, vec![(f(0), f(5))], 0.1).is_err());
    assert!(DagSpec::new(2, vec![(f(0), f(0))], 0.1).is_err());
}

#[test]
fn d_separation_textbook_cases() {
    let f = Node::Feature;
    let chain = DagSpec::new(2, vec![(f(0), f(1)), (f(1), Node::Target)], 0.1).unwrap();
    assert!(d_separated(&chain, f(0), Node::Target, &[f(1)]).unwrap());
    assert!(!d_separated(&chain, f(0), Node::Target, &[]).unwrap());
    let collider = DagSpec::new(2, vec![(f(0), f(1)), (Node::Target, f(1))], 0.1).unwrap();
    assert!(d_separated(&collider, f(0), Node::Target, &[]).unwrap());
    assert!(!d_separated(&collider, f(0), Node::Target, &[f(1)]).unwrap());
    assert!(d_separated(&collider, f(0), f(0), &[]).is_err());
    assert!(d_separated(&collider, f(0), Node::Target, &[f(0)]).is_err());
}

/// Exhaustive path-blocking oracle: a and b are d-connected iff some simple
/// undirected path has every collider in (or with a descendant in) `given`
/// and no non-collider in `given`.
fn d_separated_by_paths(dag: &DagSpec, a: usize, b: usize, given: &[usize]) -> bool {
    let total = dag.num_vertices();
    let edge = |u: usize, v: usize| dag.children(u).contains(&v);
    let mut desc = vec![vec![false; total]; total];
    for (v, row) in desc.iter_mut().enumerate() {
        let mut stack = vec![v];
        while let Some(w) = stack.pop() {
            if !row[w] {
                row[w] = true;
                stack.extend(dag.children(w).iter().copied());
            }
        }
    }
    let active = |path: &[usize]| {
        path.windows(3).all(|w| {
            let (p, c, n) = (w[0], w[1], w[2]);
            if edge(p, c) && edge(n, c) {
                given.iter().any(|&g| desc[c][g])
            } else {
                !given.contains(&c)
            }
        })
    };
    fn walk(
        path: &mut Vec<usize>,
        target: usize,
        total: usize,
        adjacent: &dyn Fn(usize, usize) -> bool,
        active: &dyn Fn(&[usize]) -> bool,
    ) -> bool {
        let last = *path.last().unwrap();
        if last == target {
            return active(path);
        }
        for next in 0..total {
            if !path.contains(&next) && adjacent(last, next) {
                path.push(next);
                let found = walk(path, target, total, adjacent, active);
                path.pop();
                if found {
                    return true;
                }
            }
        }
        false
    }
    let adjacent = |u: usize, v: usize| edge(u, v) || edge(v, u);
    !walk(&mut vec![a], b, total, &adjacent, &active)
}

#[test]
fn d_separation_matches_path_enumeration() {
    let mut rng = seeded(31);
    for _ in 0..25 {
        let m = 7;
        let mut order: Vec<usize> = (0..=m).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut edges = Vec::new();
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                if rng.gen_bool(0.3) {
                    let node = |v: usize| if v == m { Node::Target } else { Node::Feature(v) };
                    edges.push((node(order[i]), node(order[j])));
                }
            }
        }
        let dag = DagSpec::new(m, edges, 0.1).unwrap();
        for a in 0..=m {
            for b in a + 1..=m {
                let rest: Vec<usize> = (0..=m).filter(|&v| v != a && v != b).collect();
                for mask in 0u32..(1 << rest.len()) {
                    let given: Vec<usize> =
                        rest.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &v)| v).collect();
                    let nodes: Vec<Node> = given.iter().map(|&v| dag.node(v)).collect();
                    let fast = d_separated(&dag, dag.node(a), dag.node(b), &nodes).unwrap();
                    assert_eq!(fast, d_separated_by_paths(&dag, a, b, &given), "{a} {b} {given:?}");
                }
            }
        }
    }
}

#[test]
fn gaussian_generators_have_expected_moments() {
    let (x, y) = gaussian_pair(20_000, 0.6, 3).unwrap();
    let r: f64 = x.values().iter().zip(y.values()).map(|(a, b)| a * b).sum::<f64>() / 20_000.0;
    assert!((r - 0.6).abs() < 0.03);
    let (x, z, y) = gaussian_chain(20_000, 3).unwrap();
    let var = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64;
    assert!((var(x.values()) - 1.0).abs() < 0.05);
    assert!((var(z.values()) - 2.0).abs() < 0.1);
    assert!((var(y.values()) - 3.0).abs() < 0.15);
}
