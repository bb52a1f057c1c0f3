use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, MlpCache, MlpConfig, MlpParams, Parameters};
use crate::rng::RngStream;

/// Which inputs feed the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modalities {
    pub xi: bool,
    pub x: bool,
    pub zeta: bool,
}

impl Default for Modalities {
    fn default() -> Self {
        Self {
            xi: true,
            x: true,
            zeta: true,
        }
    }
}

impl Modalities {
    pub fn flags(&self) -> [bool; 3] {
        [self.xi, self.x, self.zeta]
    }

    pub fn count(&self) -> usize {
        self.flags().iter().filter(|&&b| b).count()
    }
}

impl std::str::FromStr for Modalities {
    type Err = Error;

    /// Comma-separated subset of `xi,x,zeta`.
    fn from_str(s: &str) -> Result<Self> {
        let mut m = Modalities {
            xi: false,
            x: false,
            zeta: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "xi" => m.xi = true,
                "x" => m.x = true,
                "zeta" => m.zeta = true,
                other => return Err(Error::config(format!("unknown input modality `{other}`"))),
            }
        }
        if m.count() == 0 {
            return Err(Error::config("at least one input modality must be active"));
        }
        Ok(m)
    }
}

/// Predictor inputs for a batch of nodes, one row per node.
#[derive(Debug, Clone, Copy)]
pub struct FusionInputs<'a> {
    pub xi: &'a DenseMatrix,
    pub x: &'a DenseMatrix,
    pub zeta: &'a DenseMatrix,
}

impl<'a> FusionInputs<'a> {
    fn get(&self, m: usize) -> &'a DenseMatrix {
        [self.xi, self.x, self.zeta][m]
    }

    pub fn rows(&self) -> usize {
        self.xi.rows()
    }
}

/// Projections per modality (no bias), a mixing map over the concatenated
/// projections and an MLP head producing one score per depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionParams {
    pub modalities: Modalities,
    /// `projections[m]` is `width_m × F'` for active modality `m`
    /// (order xi, x, zeta), `None` otherwise.
    pub projections: [Option<DenseMatrix>; 3],
    /// `(k F') × F'` for `k` active modalities.
    pub mix: DenseMatrix,
    pub head: MlpParams,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for FusionParams {
    fn eq(&self, other: &Self) -> bool {
        self.modalities == other.modalities
            && self.projections == other.projections
            && self.mix == other.mix
            && self.head == other.head
    }
}

#[derive(Debug, Clone)]
pub struct FusionCache {
    generation: u64,
    projected: Vec<(usize, DenseMatrix)>,
    concat: DenseMatrix,
    pre: DenseMatrix,
    head: MlpCache,
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> DenseMatrix {
    let a = 1.0 / (rows.max(1) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform(-a, a))
}

impl FusionParams {
    /// `widths` are the input widths of (xi, x, zeta).
    pub fn init(
        modalities: Modalities,
        widths: [usize; 3],
        hidden: usize,
        head_layers: usize,
        num_depths: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let k = modalities.count();
        if k == 0 {
            return Err(Error::config("at least one input modality must be active"));
        }
        let flags = modalities.flags();
        let mut projections: [Option<DenseMatrix>; 3] = [None, None, None];
        for m in 0..3 {
            if flags[m] {
                projections[m] = Some(uniform_matrix(widths[m], hidden, rng));
            }
        }
        let mix = uniform_matrix(k * hidden, hidden, rng);
        let head = MlpParams::init(MlpConfig::new(hidden, hidden, num_depths, head_layers), rng);
        Ok(Self {
            modalities,
            projections,
            mix,
            head,
            generation: 0,
        })
    }

    pub fn hidden(&self) -> usize {
        self.mix.cols()
    }

    pub fn num_depths(&self) -> usize {
        self.head.output_dim()
    }

    pub fn forward(
        &self,
        inputs: &FusionInputs<'_>,
        train: bool,
        rng: Option<&mut RngStream>,
    ) -> Result<(DenseMatrix, FusionCache)> {
        let mut projected = Vec::new();
        for (m, w) in self.projections.iter().enumerate() {
            if let Some(w) = w {
                let input = inputs.get(m);
                if input.cols() != w.rows() {
                    return Err(Error::contract(format!(
                        "modality {m} has width {}, projection expects {}",
                        input.cols(),
                        w.rows()
                    )));
                }
                projected.push((m, input.matmul(w)?));
            }
        }
        if projected.is_empty() {
            return Err(Error::config("at least one input modality must be active"));
        }
        let parts: Vec<&DenseMatrix> = projected.iter().map(|(_, h)| h).collect();
        let concat = DenseMatrix::hstack(&parts)?;
        let mut pre = concat.matmul(&self.mix)?;
        for (_, h) in &projected {
            pre.add_assign(h)?;
        }
        let mut hidden = pre.clone();
        hidden
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = v.max(0.0));
        let (scores, head) = self.head.forward(&hidden, train, rng)?;
        Ok((
            scores,
            FusionCache {
                generation: self.generation,
                projected,
                concat,
                pre,
                head,
            },
        ))
    }

    /// Deterministic scores for every row of `inputs`.
    pub fn scores(&self, inputs: &FusionInputs<'_>) -> Result<DenseMatrix> {
        Ok(self.forward(inputs, false, None)?.0)
    }

    pub fn backward(
        &self,
        inputs: &FusionInputs<'_>,
        cache: &FusionCache,
        grad_out: &DenseMatrix,
    ) -> Result<Self> {
        if cache.generation != self.generation {
            return Err(Error::contract(
                "stale forward cache: parameters changed since the forward pass",
            ));
        }
        let (ghead, dh) = self.head.backward(&cache.head, grad_out)?;
        let mut dpre = dh;
        for (d, p) in dpre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            if *p <= 0.0 {
                *d = 0.0;
            }
        }
        let mut grads = self.clone();
        grads.zero();
        grads.head = ghead;
        grads.mix = cache.concat.t_matmul(&dpre)?;
        let dconcat = dpre.matmul_t(&self.mix)?;
        let f = self.hidden();
        for (j, (m, _)) in cache.projected.iter().enumerate() {
            let mut dproj = dconcat.column_block(j * f, (j + 1) * f);
            dproj.add_assign(&dpre)?;
            grads.projections[*m] = Some(inputs.get(*m).t_matmul(&dproj)?);
        }
        Ok(grads)
    }
}

impl Parameters for FusionParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self
            .projections
            .iter()
            .flatten()
            .map(|w| w.as_slice())
            .collect();
        out.push(self.mix.as_slice());
        out.extend(self.head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out: Vec<&mut [f64]> = self
            .projections
            .iter_mut()
            .flatten()
            .map(|w| w.as_mut_slice())
            .collect();
        out.push(self.mix.as_mut_slice());
        out.extend(self.head.tensors_mut());
        out
    }
}
