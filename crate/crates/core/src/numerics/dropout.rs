use super::rng::RngState;
use crate::error::{Error, Result};

/// Inverted-dropout mask: each entry is `0` (dropped) or `1/(1-p)` (kept).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    shape: Vec<usize>,
    values: Vec<f64>,
    p: f64,
}

impl DropoutMask {
    pub fn ones(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        DropoutMask {
            shape,
            values: vec![1.0; n],
            p: 0.0,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dropped(&self) -> usize {
        self.values.iter().filter(|&&v| v == 0.0).count()
    }
}

/// Draws an i.i.d. mask with drop probability `p`. One uniform is consumed
/// per entry, also when `p == 0`, so the stream position depends only on
/// the mask size.
pub fn sample_dropout_mask(rng: &mut RngState, shape: &[usize], p: f64) -> Result<DropoutMask> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    let keep = 1.0 / (1.0 - p);
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    Ok(DropoutMask {
        shape: shape.to_vec(),
        values,
        p,
    })
}
