use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform random partition of `0..n`: `floor(r0 n)` training nodes,
/// `floor(r1 n)` validation nodes, the remainder for test. Each part is
/// sorted.
pub fn split_dataset(n: usize, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|&r| !(r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    RngStream::with_stream(seed, 0x5eed).shuffle(&mut perm);
    let n_train = (ratios[0] * n as f64).floor() as usize;
    let n_val = (ratios[1] * n as f64).floor() as usize;
    let mut train = perm[..n_train].to_vec();
    let mut val = perm[n_train..n_train + n_val].to_vec();
    let mut test = perm[n_train + n_val..].to_vec();
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(Error::config(format!(
            "splitting {n} nodes by {ratios:?} leaves an empty part"
        )));
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits { train, val, test })
}
