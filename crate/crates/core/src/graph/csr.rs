use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

/// Weighted sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1
            || indices.len() != values.len()
            || indptr[rows] != indices.len()
        {
            return Err(Error::contract("inconsistent CSR arrays"));
        }
        if indices.iter().any(|&c| c >= cols) {
            return Err(Error::contract("CSR column index out of range"));
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // rows visited in ascending order keep the transposed rows sorted
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d.set(r, c, v);
            }
        }
        d
    }

    /// Sparse-dense product. Each output row is accumulated in ascending
    /// column order, so results do not depend on scheduling.
    pub fn mul_dense(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != x.rows() {
            return Err(Error::contract(format!(
                "propagate: operator is {}x{} but features have {} rows",
                self.rows,
                self.cols,
                x.rows()
            )));
        }
        let f = x.cols();
        let mut out = DenseMatrix::zeros(self.rows, f);
        for r in 0..self.rows {
            let orow = out.row_mut(r);
            for (c, w) in self.row(r) {
                for (o, &xv) in orow.iter_mut().zip(x.row(c)) {
                    *o += w * xv;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// `D̂^{-1/2} (A + I) D̂^{-1/2}`
    SymmetricNormalized,
    /// `D^{-1} A`
    RowNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    kind: OperatorKind,
    matrix: CsrMatrix,
}

impl PropagationOperator {
    /// Entry `(u, v) = 1 / sqrt((d_u + 1)(d_v + 1))` for every arc and every
    /// node's self-loop, with `d` the in-degree.
    pub fn symmetric_normalized(g: &Graph) -> Self {
        let n = g.num_nodes();
        let scale: Vec<f64> = (0..n)
            .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
            .collect();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(g.num_arcs() + n);
        let mut values = Vec::with_capacity(g.num_arcs() + n);
        indptr.push(0);
        for u in 0..n {
            let mut self_done = false;
            for &v in g.neighbors(u) {
                if !self_done && v > u {
                    indices.push(u);
                    values.push(scale[u] * scale[u]);
                    self_done = true;
                }
                indices.push(v);
                values.push(scale[u] * scale[v]);
            }
            if !self_done {
                indices.push(u);
                values.push(scale[u] * scale[u]);
            }
            indptr.push(indices.len());
        }
        Self {
            kind: OperatorKind::SymmetricNormalized,
            matrix: CsrMatrix {
                rows: n,
                cols: n,
                indptr,
                indices,
                values,
            },
        }
    }

    /// Each row divided by its degree; isolated rows stay empty.
    pub fn row_normalized(g: &Graph) -> Self {
        let n = g.num_nodes();
        let mut values = Vec::with_capacity(g.num_arcs());
        for u in 0..n {
            let d = g.degree(u);
            let w = 1.0 / d as f64;
            values.extend(std::iter::repeat_n(w, d));
        }
        Self {
            kind: OperatorKind::RowNormalized,
            matrix: CsrMatrix {
                rows: n,
                cols: n,
                indptr: g.indptr().to_vec(),
                indices: g.indices().to_vec(),
                values,
            },
        }
    }

    pub fn build(kind: OperatorKind, g: &Graph) -> Self {
        match kind {
            OperatorKind::SymmetricNormalized => Self::symmetric_normalized(g),
            OperatorKind::RowNormalized => Self::row_normalized(g),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Operator with the transposed matrix, used for backpropagation.
    pub fn transposed(&self) -> Self {
        Self {
            kind: self.kind,
            matrix: self.matrix.transpose(),
        }
    }
}

/// `op · x`.
pub fn propagate(op: &PropagationOperator, x: &DenseMatrix) -> Result<DenseMatrix> {
    op.matrix.mul_dense(x)
}
