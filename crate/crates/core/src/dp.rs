//! Exponential mechanism, the two quality functions used by preprocessing,
//! and budget accounting.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("privacy budget must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error("exponential mechanism needs at least one candidate")]
    EmptyCandidates,
    #[error("sensitivity must be positive, got {0}")]
    NonPositiveSensitivity(f64),
    #[error("candidate quality is not finite")]
    NonFiniteQuality,
    #[error("quality function arguments out of domain: {0}")]
    DomainViolation(String),
    #[error("relation value must be 1 or 2, got {0}")]
    BadRelationValue(i8),
    #[error("edge quality needs at least 3 edges, got {0}")]
    TooFewEdges(usize),
}

/// A positive, finite epsilon.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self, DpError> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(Self(epsilon))
        } else {
            Err(DpError::InvalidBudget(epsilon))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate<T> {
    pub value: T,
    pub quality: f64,
}

impl<T> ScoredCandidate<T> {
    pub fn new(value: T, quality: f64) -> Self {
        Self { value, quality }
    }
}

fn weights(qualities: &[f64], eps: PrivacyBudget, sensitivity: f64) -> Result<Vec<f64>, DpError> {
    if qualities.is_empty() {
        return Err(DpError::EmptyCandidates);
    }
    if !(sensitivity > 0.0) {
        return Err(DpError::NonPositiveSensitivity(sensitivity));
    }
    if qualities.iter().any(|q| !q.is_finite()) {
        return Err(DpError::NonFiniteQuality);
    }
    let top = qualities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = eps.epsilon() / (2.0 * sensitivity);
    Ok(qualities.iter().map(|q| ((q - top) * scale).exp()).collect())
}

/// Exact selection probabilities `exp(eps q_i / 2Δ) / Σ_j exp(eps q_j / 2Δ)`.
pub fn selection_probabilities(
    qualities: &[f64],
    eps: PrivacyBudget,
    sensitivity: f64,
) -> Result<Vec<f64>, DpError> {
    let w = weights(qualities, eps, sensitivity)?;
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Samples one candidate with the exponential mechanism.
pub fn exp_mechanism<'a, T, R: Rng + ?Sized>(
    candidates: &'a [ScoredCandidate<T>],
    eps: PrivacyBudget,
    sensitivity: f64,
    rng: &mut R,
) -> Result<&'a T, DpError> {
    let qualities: Vec<f64> = candidates.iter().map(|c| c.quality).collect();
    let idx = sample_index(&qualities, eps, sensitivity, rng)?;
    Ok(&candidates[idx].value)
}

pub(crate) fn sample_index<R: Rng + ?Sized>(
    qualities: &[f64],
    eps: PrivacyBudget,
    sensitivity: f64,
    rng: &mut R,
) -> Result<usize, DpError> {
    let w = weights(qualities, eps, sensitivity)?;
    if w.len() == 1 {
        return Ok(0);
    }
    let total: f64 = w.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, x) in w.iter().enumerate() {
        if target < *x {
            return Ok(i);
        }
        target -= x;
    }
    Ok(w.len() - 1)
}

/// Sensitivity of [`quality_vertex`].
pub const VERTEX_SENSITIVITY: f64 = 1.0;

/// Quality of giving a base vertex `n` sub-vertices:
/// `max_n - n + max_d - d`, where `d` is the vertex degree.
pub fn quality_vertex(n: usize, max_n: usize, d: usize, max_d: usize) -> Result<f64, DpError> {
    if n > max_n || d > max_d {
        return Err(DpError::DomainViolation(format!(
            "n={n} max_n={max_n} d={d} max_d={max_d}"
        )));
    }
    Ok((max_n - n + max_d - d) as f64)
}

/// Quality of relation value `x` for a non-edge in a network with
/// `edge_count` edges: `((|E|-2)/|E|) x - (|E|-3)/|E|`.
pub fn quality_edge(x: i8, edge_count: usize) -> Result<f64, DpError> {
    if x != 1 && x != 2 {
        return Err(DpError::BadRelationValue(x));
    }
    if edge_count < 3 {
        return Err(DpError::TooFewEdges(edge_count));
    }
    let e = edge_count as f64;
    Ok((e - 2.0) / e * f64::from(x) - (e - 3.0) / e)
}

/// Exact sensitivity of [`quality_edge`], `(|E|-2)/|E|`.
pub fn edge_sensitivity(edge_count: usize) -> Result<f64, DpError> {
    if edge_count < 3 {
        return Err(DpError::TooFewEdges(edge_count));
    }
    let e = edge_count as f64;
    Ok((e - 2.0) / e)
}

/// Budgets of the two randomized steps; the pipeline as a whole spends
/// `eps_v + eps_e + ln 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetLedger {
    pub eps_v: PrivacyBudget,
    pub eps_e: PrivacyBudget,
}

impl BudgetLedger {
    pub fn total(&self) -> f64 {
        self.eps_v.epsilon() + self.eps_e.epsilon() + std::f64::consts::LN_2
    }
}
