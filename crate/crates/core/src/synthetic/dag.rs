use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bullseye::{check_noise, uniform_noise, Rings};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::SampleBlock;
use crate::rng;

/// A vertex: feature `X_{i+1}` (stored zero-based) or the target `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Node {
    Feature(usize),
    Target,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Feature(i) => write!(f, "X{}", i + 1),
            Node::Target => write!(f, "Y"),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "Y" || s == "y" {
            return Ok(Node::Target);
        }
        s.strip_prefix(['X', 'x'])
            .and_then(|rest| rest.parse::<usize>().ok())
            .filter(|&i| i >= 1)
            .map(|i| Node::Feature(i - 1))
            .ok_or_else(|| Error::InvalidArgument(format!("bad node name `{s}`, expected X1.. or Y")))
    }
}

impl TryFrom<String> for Node {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Node> for String {
    fn from(n: Node) -> String {
        n.to_string()
    }
}

/// Directed acyclic graph over `X1..Xm` and `Y`, plus the noise and radius
/// law used when generating data from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DagSpecRaw")]
pub struct DagSpec {
    pub m: usize,
    pub edges: Vec<(Node, Node)>,
    pub epsilon: f64,
    #[serde(default)]
    pub rings: Rings,
    #[serde(skip)]
    parents: Vec<Vec<usize>>,
    #[serde(skip)]
    children: Vec<Vec<usize>>,
    #[serde(skip)]
    order: Vec<usize>,
}

#[derive(Deserialize)]
struct DagSpecRaw {
    m: usize,
    edges: Vec<(Node, Node)>,
    epsilon: f64,
    #[serde(default)]
    rings: Rings,
}

impl TryFrom<DagSpecRaw> for DagSpec {
    type Error = Error;
    fn try_from(raw: DagSpecRaw) -> Result<Self> {
        let mut dag = DagSpec::new(raw.m, raw.edges, raw.epsilon)?;
        raw.rings.validate()?;
        dag.rings = raw.rings;
        Ok(dag)
    }
}

impl DagSpec {
    pub fn new(m: usize, edges: Vec<(Node, Node)>, epsilon: f64) -> Result<Self> {
        check_noise(epsilon)?;
        let total = m + 1;
        let mut parents = vec![Vec::new(); total];
        let mut children = vec![Vec::new(); total];
        let mut dag = DagSpec {
            m,
            edges: Vec::new(),
            epsilon,
            rings: Rings::WIDE,
            parents: Vec::new(),
            children: Vec::new(),
            order: Vec::new(),
        };
        for &(a, b) in &edges {
            let (u, v) = (dag.vertex(a)?, dag.vertex(b)?);
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop on {a}")));
            }
            if parents[v].contains(&u) {
                continue;
            }
            parents[v].push(u);
            children[u].push(v);
        }
        for p in parents.iter_mut().chain(children.iter_mut()) {
            p.sort_unstable();
        }
        dag.edges = edges;
        dag.parents = parents;
        dag.children = children;
        dag.order = dag.topological_order()?;
        Ok(dag)
    }

    /// The six-feature graph X1→X2, X1→X3, X2→X4, X6→X5, X3→Y, X5→Y.
    pub fn default_bullseye(epsilon: f64) -> Self {
        let f = Node::Feature;
        DagSpec::new(
            6,
            vec![
                (f(0), f(1)),
                (f(0), f(2)),
                (f(1), f(3)),
                (f(5), f(4)),
                (f(2), Node::Target),
                (f(4), Node::Target),
            ],
            epsilon,
        )
        .expect("default graph is acyclic")
    }

    /// Vertex index: features `0..m`, target `m`.
    pub fn vertex(&self, node: Node) -> Result<usize> {
        match node {
            Node::Feature(i) if i < self.m => Ok(i),
            Node::Feature(i) => Err(Error::InvalidArgument(format!(
                "feature X{} out of range for m = {}",
                i + 1,
                self.m
            ))),
            Node::Target => Ok(self.m),
        }
    }

    pub fn node(&self, vertex: usize) -> Node {
        if vertex == self.m {
            Node::Target
        } else {
            Node::Feature(vertex)
        }
    }

    pub fn target(&self) -> usize {
        self.m
    }

    pub fn num_vertices(&self) -> usize {
        self.m + 1
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Vertices in a topological order (Kahn, smallest index first).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn topological_order(&self) -> Result<Vec<usize>> {
        let total = self.num_vertices();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..total).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(total);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != total {
            return Err(Error::CyclicGraph);
        }
        Ok(order)
    }

    /// Feature indices of the target's parents, children and coparents.
    pub fn markov_blanket(&self) -> BTreeSet<usize> {
        let y = self.target();
        let mut mb: BTreeSet<usize> = self.parents[y].iter().copied().collect();
        for &c in &self.children[y] {
            mb.insert(c);
            mb.extend(self.parents[c].iter().copied().filter(|&p| p != y));
        }
        mb
    }

    /// Ancestors of `seeds`, the seeds included.
    fn ancestral_mask(&self, seeds: &[usize]) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if mask[v] {
                continue;
            }
            mask[v] = true;
            queue.extend(self.parents[v].iter().copied());
        }
        mask
    }
}

/// Whether `a` and `b` are d-separated by `given` in `dag`.
///
/// Uses the moral graph of the ancestral set of `{a, b} ∪ given`: the pair
/// is d-separated iff removing `given` disconnects `a` from `b` there.
pub fn d_separated(dag: &DagSpec, a: Node, b: Node, given: &[Node]) -> Result<bool> {
    let (u, v) = (dag.vertex(a)?, dag.vertex(b)?);
    if u == v {
        return Err(Error::InvalidArgument(format!("d-separation of {a} with itself")));
    }
    let cond: Vec<usize> = given.iter().map(|&n| dag.vertex(n)).collect::<Result<_>>()?;
    if cond.contains(&u) || cond.contains(&v) {
        return Err(Error::InvalidArgument(
            "the conditioning set must exclude both endpoints".into(),
        ));
    }
    let mut seeds = cond.clone();
    seeds.extend([u, v]);
    let mask = dag.ancestral_mask(&seeds);
    let total = dag.num_vertices();
    let mut adj = vec![Vec::new(); total];
    for c in (0..total).filter(|&c| mask[c]) {
        let pa = dag.parents(c);
        for (idx, &p) in pa.iter().enumerate() {
            adj[c].push(p);
            adj[p].push(c);
            for &q in &pa[idx + 1..] {
                adj[p].push(q);
                adj[q].push(p);
            }
        }
    }
    let mut blocked = vec![false; total];
    for &c in &cond {
        blocked[c] = true;
    }
    let mut seen = vec![false; total];
    let mut queue = VecDeque::from([u]);
    seen[u] = true;
    while let Some(w) = queue.pop_front() {
        if w == v {
            return Ok(false);
        }
        for &nb in &adj[w] {
            if !seen[nb] && !blocked[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    Ok(!seen[v])
}

/// Samples a dataset from `dag` with the bullseye law.
///
/// Each feature is a point on a sphere in R³ with a uniformly random
/// direction. Sources draw their radius from the ring law; other vertices
/// take the mean magnitude of their parents plus uniform noise on [−ε, ε].
/// The target is the scalar radius itself.
pub fn gen_bullseye_dag(dag: &DagSpec, n: usize, seed: u64) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut magnitude = vec![vec![0.0f64; n]; dag.num_vertices()];
    let mut features: Vec<Vec<f64>> = vec![Vec::new(); dag.m];
    let mut target = Vec::new();
    for &v in dag.order() {
        let pa = dag.parents(v);
        let is_target = v == dag.target();
        let mut values = Vec::with_capacity(if is_target { n } else { 3 * n });
        for s in 0..n {
            let radius = if pa.is_empty() {
                dag.rings.sample(&mut rng)
            } else {
                pa.iter().map(|&p| magnitude[p][s]).sum::<f64>() / pa.len() as f64
                    + uniform_noise(&mut rng, dag.epsilon)
            };
            magnitude[v][s] = radius.abs();
            if is_target {
                values.push(radius);
            } else {
                let dir = unit_sphere(&mut rng);
                values.extend(dir.iter().map(|c| c * radius));
            }
        }
        if is_target {
            target = values;
        } else {
            features[v] = values;
        }
    }
    let blocks = features
        .into_iter()
        .map(|vals| SampleBlock::new(n, 3, vals))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(blocks, SampleBlock::new(n, 1, target)?)
}

/// Uniform direction on the unit sphere from a normalized Gaussian vector.
fn unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-12 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}
