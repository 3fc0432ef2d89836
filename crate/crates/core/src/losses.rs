//! Training objectives: InfoNCE, the six-term contrastive sum, cross-entropy
//! and the blended total.

use serde::{Deserialize, Serialize};

use crate::encoder::RepresentationQuad;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Probability floor inside the cross-entropy log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Average each cross-modal term over both anchor directions.
    pub symmetric_cross: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.07,
            symmetric_cross: false,
        }
    }
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Mean over anchors of `-log softmax_j(cos(a_i, c_j) / τ)[i]`.
///
/// The positive for anchor row `i` is candidate row `i`; every candidate,
/// including the positive, enters the denominator.
pub fn info_nce(tape: &mut Tape, anchor: Var, candidates: Var, tau: f64) -> Result<Var> {
    check_temperature(tau)?;
    if tape.shape(anchor) != tape.shape(candidates) {
        return Err(Error::dim(
            "info_nce",
            tape.shape(anchor),
            tape.shape(candidates),
        ));
    }
    let n = tape.shape(anchor)[0];
    let sims = tape.cosine_similarity_matrix(anchor, candidates)?;
    let logits = tape.scale(sims, 1.0 / tau);
    let log_probs = tape.log_softmax_rows(logits)?;
    let diag: Vec<usize> = (0..n).collect();
    let positives = tape.pick_per_row(log_probs, &diag)?;
    let mean = tape.mean(positives);
    Ok(tape.scale(mean, -1.0))
}

fn cross_term(tape: &mut Tape, a: Var, t: Var, cfg: &ContrastiveConfig) -> Result<Var> {
    let forward = info_nce(tape, a, t, cfg.temperature)?;
    if !cfg.symmetric_cross {
        return Ok(forward);
    }
    let backward = info_nce(tape, t, a, cfg.temperature)?;
    let sum = tape.add(forward, backward)?;
    Ok(tape.scale(sum, 0.5))
}

/// The six contrastive terms of one batch on the tape, plus their sum.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveTerms {
    pub in_a: Var,
    pub in_t: Var,
    pub cross_11: Var,
    pub cross_12: Var,
    pub cross_21: Var,
    pub cross_22: Var,
    pub turbo: Var,
}

impl ContrastiveTerms {
    fn from_parts(tape: &mut Tape, parts: [Var; 6]) -> Result<Self> {
        let mut turbo = parts[0];
        for p in &parts[1..] {
            turbo = tape.add(turbo, *p)?;
        }
        let [in_a, in_t, cross_11, cross_12, cross_21, cross_22] = parts;
        Ok(ContrastiveTerms {
            in_a,
            in_t,
            cross_11,
            cross_12,
            cross_21,
            cross_22,
            turbo,
        })
    }
}

/// Two in-modal terms (pass 1 vs pass 2 within a modality) and four
/// cross-modal terms (audio pass p anchoring text pass q).
pub fn turbo_loss(
    tape: &mut Tape,
    quad: &RepresentationQuad,
    cfg: &ContrastiveConfig,
) -> Result<ContrastiveTerms> {
    let tau = cfg.temperature;
    let in_a = info_nce(tape, quad.h_a1, quad.h_a2, tau)?;
    let in_t = info_nce(tape, quad.h_t1, quad.h_t2, tau)?;
    let cross_11 = cross_term(tape, quad.h_a1, quad.h_t1, cfg)?;
    let cross_12 = cross_term(tape, quad.h_a1, quad.h_t2, cfg)?;
    let cross_21 = cross_term(tape, quad.h_a2, quad.h_t1, cfg)?;
    let cross_22 = cross_term(tape, quad.h_a2, quad.h_t2, cfg)?;
    ContrastiveTerms::from_parts(tape, [in_a, in_t, cross_11, cross_12, cross_21, cross_22])
}

/// A single cross-modal InfoNCE term in the `cross_11` slot; the other five
/// slots are zero constants.
pub fn cross_only_loss(
    tape: &mut Tape,
    h_a: Var,
    h_t: Var,
    cfg: &ContrastiveConfig,
) -> Result<ContrastiveTerms> {
    let cross = cross_term(tape, h_a, h_t, cfg)?;
    let zero = tape.constant(&Tensor::scalar(0.0));
    ContrastiveTerms::from_parts(tape, [zero, zero, cross, zero, zero, zero])
}

/// Mean negative log-probability of the true class.
pub fn cross_entropy_loss(tape: &mut Tape, probs: Var, labels: &[usize]) -> Result<Var> {
    let classes = match tape.shape(probs) {
        [n, c] if *n == labels.len() => *c,
        other => return Err(Error::dim("cross_entropy_loss", other, &[labels.len()])),
    };
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Contract(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let picked = tape.pick_per_row(probs, labels)?;
    let logs = tape.log_floor(picked, PROB_FLOOR);
    let mean = tape.mean(logs);
    Ok(tape.scale(mean, -1.0))
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )))
    }
}

/// `λ·ce + (1-λ)·turbo`.
pub fn total_loss(tape: &mut Tape, ce: Var, turbo: Var, lambda: f64) -> Result<Var> {
    check_lambda(lambda)?;
    let a = tape.scale(ce, lambda);
    let b = tape.scale(turbo, 1.0 - lambda);
    tape.add(a, b)
}

/// Scalar values of every objective for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub in_a: f64,
    pub in_t: f64,
    pub cross_11: f64,
    pub cross_12: f64,
    pub cross_21: f64,
    pub cross_22: f64,
    pub turbo: f64,
    pub ce: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn read(tape: &Tape, terms: Option<&ContrastiveTerms>, ce: Var, total: Var) -> Self {
        let mut b = LossBreakdown {
            ce: tape.scalar(ce),
            total: tape.scalar(total),
            ..Default::default()
        };
        if let Some(t) = terms {
            b.in_a = tape.scalar(t.in_a);
            b.in_t = tape.scalar(t.in_t);
            b.cross_11 = tape.scalar(t.cross_11);
            b.cross_12 = tape.scalar(t.cross_12);
            b.cross_21 = tape.scalar(t.cross_21);
            b.cross_22 = tape.scalar(t.cross_22);
            b.turbo = tape.scalar(t.turbo);
        }
        b
    }

    pub fn contrastive_parts(&self) -> [f64; 6] {
        [
            self.in_a,
            self.in_t,
            self.cross_11,
            self.cross_12,
            self.cross_21,
            self.cross_22,
        ]
    }

    /// `|turbo - Σ parts|` and `|total - (λ·ce + (1-λ)·turbo)|`.
    pub fn identity_residuals(&self, lambda: f64) -> (f64, f64) {
        let sum: f64 = self.contrastive_parts().iter().sum();
        let blend = lambda * self.ce + (1.0 - lambda) * self.turbo;
        ((self.turbo - sum).abs(), (self.total - blend).abs())
    }

    /// Component-wise mean of a set of breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut m = LossBreakdown::default();
        for b in items {
            m.in_a += b.in_a;
            m.in_t += b.in_t;
            m.cross_11 += b.cross_11;
            m.cross_12 += b.cross_12;
            m.cross_21 += b.cross_21;
            m.cross_22 += b.cross_22;
            m.turbo += b.turbo;
            m.ce += b.ce;
            m.total += b.total;
        }
        m.in_a /= n;
        m.in_t /= n;
        m.cross_11 /= n;
        m.cross_12 /= n;
        m.cross_21 /= n;
        m.cross_22 /= n;
        m.turbo /= n;
        m.ce /= n;
        m.total /= n;
        m
    }
}
