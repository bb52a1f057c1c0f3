use super::{Graph, LabelVector};

/// Per-node same-class neighbor fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct HomophilyScores {
    pub scores: Vec<f64>,
    /// Nodes without neighbors. Their score is reported as 0.
    pub isolated: Vec<usize>,
}

/// `|{u ∈ N(v) : y_u = y_v}| / |N(v)|` over in-neighbors.
pub fn node_homophily(g: &Graph, y: &LabelVector) -> HomophilyScores {
    let mut scores = Vec::with_capacity(g.num_nodes());
    let mut isolated = Vec::new();
    for v in 0..g.num_nodes() {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            isolated.push(v);
            scores.push(0.0);
            continue;
        }
        let same = nbrs.iter().filter(|&&u| y.get(u) == y.get(v)).count();
        scores.push(same as f64 / nbrs.len() as f64);
    }
    HomophilyScores { scores, isolated }
}

/// Mean node homophily over all nodes; isolated nodes count as 0.
pub fn average_node_homophily(g: &Graph, y: &LabelVector) -> f64 {
    let h = node_homophily(g, y);
    if h.scores.is_empty() {
        return 0.0;
    }
    h.scores.iter().sum::<f64>() / h.scores.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_same_and_all_different() {
        let g = Graph::build(&[(0, 1), (0, 2)], 3, false).unwrap();
        let same = LabelVector::new(vec![1, 1, 1], 2).unwrap();
        assert_eq!(node_homophily(&g, &same).scores[0], 1.0);
        let diff = LabelVector::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(node_homophily(&g, &diff).scores[0], 0.0);
    }

    #[test]
    fn star_half() {
        let g = Graph::build(&[(0, 1), (0, 2), (0, 3), (0, 4)], 5, false).unwrap();
        let y = LabelVector::new(vec![0, 0, 0, 1, 1], 2).unwrap();
        assert_eq!(node_homophily(&g, &y).scores[0], 0.5);
    }

    #[test]
    fn isolated_flagged() {
        let g = Graph::build(&[(0, 1)], 3, false).unwrap();
        let y = LabelVector::new(vec![0, 0, 0], 2).unwrap();
        let h = node_homophily(&g, &y);
        assert_eq!(h.isolated, vec![2]);
        assert_eq!(h.scores[2], 0.0);
    }

    #[test]
    fn averages() {
        let g = Graph::build(&[(0, 1), (1, 2), (2, 3)], 4, false).unwrap();
        let y = LabelVector::new(vec![0, 0, 0, 0], 2).unwrap();
        assert_eq!(average_node_homophily(&g, &y), 1.0);
        let bip = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(average_node_homophily(&g, &bip), 0.0);
    }

    #[test]
    fn directed_uses_in_neighbors() {
        // 0 -> 2, 1 -> 2: node 2 aggregates from {0, 1}; node 0 has no in-neighbors
        let g = Graph::build(&[(0, 2), (1, 2)], 3, true).unwrap();
        let y = LabelVector::new(vec![0, 1, 0], 2).unwrap();
        let h = node_homophily(&g, &y);
        assert_eq!(h.scores[2], 0.5);
        assert_eq!(h.isolated, vec![0, 1]);
    }
}
