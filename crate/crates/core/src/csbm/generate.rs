use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector};
use crate::nn::DenseMatrix;
use crate::rng::RngStream;

/// A structural pattern shared by a fraction `prior` of each class: a node
/// in this subgroup links inside its class with probability `p` and across
/// with `1 - p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub p: f64,
    pub prior: f64,
}

impl Subgroup {
    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

/// How each node's drawn neighbor slots become arcs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    /// Every draw becomes an undirected edge.
    #[default]
    Symmetric,
    /// A draw `v -> u` only makes `u` an in-neighbor of `v`, so each node's
    /// neighborhood consists exactly of its own draws.
    Directed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsbmSpec {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub subgroups: Vec<Subgroup>,
    pub nodes_per_class: usize,
    pub avg_degree: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub edges: EdgeMode,
}

impl CsbmSpec {
    /// Means `±separation/2` along the first axis of an `f`-dimensional space.
    pub fn axis_means(f: usize, separation: f64) -> (Vec<f64>, Vec<f64>) {
        let mut mu1 = vec![0.0; f];
        let mut mu2 = vec![0.0; f];
        mu1[0] = separation / 2.0;
        mu2[0] = -separation / 2.0;
        (mu1, mu2)
    }

    pub fn num_features(&self) -> usize {
        self.mu1.len()
    }

    pub fn num_nodes(&self) -> usize {
        2 * self.nodes_per_class
    }

    /// `E_m[p_m - q_m]` under the subgroup priors.
    pub fn mean_homophily_difference(&self) -> f64 {
        self.subgroups.iter().map(|s| s.prior * (s.p - s.q())).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu1.is_empty() || self.mu1.len() != self.mu2.len() {
            return Err(Error::config(
                "class means must be non-empty and of equal dimension",
            ));
        }
        if self.subgroups.is_empty() {
            return Err(Error::config("at least one subgroup is required"));
        }
        if self
            .subgroups
            .iter()
            .any(|s| !(0.0..=1.0).contains(&s.p) || !(s.prior >= 0.0))
        {
            return Err(Error::config(
                "subgroup p must lie in [0, 1] and priors must be non-negative",
            ));
        }
        let total: f64 = self.subgroups.iter().map(|s| s.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "subgroup priors sum to {total}, not 1"
            )));
        }
        if !(self.avg_degree >= 1.0) {
            return Err(Error::config("expected degree must be at least 1"));
        }
        let slots = self.avg_degree.round() as usize;
        if self.nodes_per_class < slots + 1 {
            return Err(Error::config(format!(
                "{} nodes per class cannot supply {slots} distinct neighbors",
                self.nodes_per_class
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CsbmSample {
    pub graph: Graph,
    pub features: DenseMatrix,
    pub labels: LabelVector,
    pub subgroup: Vec<usize>,
    /// Every drawn slot as `(drawing node, endpoint)`, before deduplication.
    pub draws: Vec<(usize, usize)>,
}

impl CsbmSample {
    /// Fraction of slots drawn by members of each subgroup that landed inside
    /// the drawing node's class.
    pub fn intra_fraction_by_subgroup(&self, num_subgroups: usize) -> Vec<f64> {
        let mut intra = vec![0usize; num_subgroups];
        let mut total = vec![0usize; num_subgroups];
        for &(v, u) in &self.draws {
            let m = self.subgroup[v];
            total[m] += 1;
            intra[m] += usize::from(self.labels.get(u) == self.labels.get(v));
        }
        intra
            .iter()
            .zip(&total)
            .map(|(&a, &b)| {
                if b == 0 {
                    f64::NAN
                } else {
                    a as f64 / b as f64
                }
            })
            .collect()
    }
}

fn pick_subgroup(subgroups: &[Subgroup], rng: &mut RngStream) -> usize {
    let u = rng.uniform(0.0, 1.0);
    let mut acc = 0.0;
    for (m, s) in subgroups.iter().enumerate() {
        acc += s.prior;
        if u < acc {
            return m;
        }
    }
    subgroups.len() - 1
}

/// Nodes `0..N` form class 0 and `N..2N` class 1. Each node draws
/// `round(d)` neighbor slots, `Binomial(round(d), p_m)` of them inside its
/// class, endpoints uniform over the target class (never itself).
pub fn generate_csbm(spec: &CsbmSpec) -> Result<CsbmSample> {
    spec.validate()?;
    let half = spec.nodes_per_class;
    let n = 2 * half;
    let f = spec.num_features();
    let slots = spec.avg_degree.round() as u64;
    let mut rng = RngStream::new(spec.seed);

    let labels: Vec<usize> = (0..n).map(|v| usize::from(v >= half)).collect();
    let subgroup: Vec<usize> = (0..n)
        .map(|_| pick_subgroup(&spec.subgroups, &mut rng))
        .collect();
    let features = DenseMatrix::from_fn(n, f, |v, j| {
        let mu = if labels[v] == 0 { &spec.mu1 } else { &spec.mu2 };
        let z: f64 = StandardNormal.sample(rng.rng());
        mu[j] + z
    });

    let mut draws = Vec::with_capacity(n * slots as usize);
    for v in 0..n {
        let p = spec.subgroups[subgroup[v]].p;
        let intra = Binomial::new(slots, p)
            .map_err(|e| Error::config(format!("binomial parameters: {e}")))?
            .sample(rng.rng());
        let own = labels[v] * half;
        let other = (1 - labels[v]) * half;
        for _ in 0..intra {
            // uniform over the class minus v
            let mut u = own + rng.below(half - 1);
            if u >= v {
                u += 1;
            }
            draws.push((v, u));
        }
        for _ in intra..slots {
            draws.push((v, other + rng.below(half)));
        }
    }
    let directed = spec.edges == EdgeMode::Directed;
    // the arc u -> v makes u an in-neighbor of the drawing node v
    let arcs: Vec<(usize, usize)> = draws.iter().map(|&(v, u)| (u, v)).collect();
    let graph = Graph::build(&arcs, n, directed)?;
    Ok(CsbmSample {
        graph,
        features,
        labels: LabelVector::new(labels, 2)?,
        subgroup,
        draws,
    })
}
