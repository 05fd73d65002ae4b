use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::RegForm;
use crate::db::WordId;
use crate::error::{Error, Result};
use crate::lexicon::HomophoneGraph;
use crate::math::{self, dot, Mat};

/// `S[i][j] = inv_temp · ⟨speech_i, bias_j⟩`.
pub fn similarity_logits(speech: &[Vec<f64>], bias: &[Vec<f64>], inv_temp: f64) -> Result<Mat> {
    let d = speech.first().or(bias.first()).map_or(0, Vec::len);
    if speech.iter().chain(bias).any(|v| v.len() != d) {
        return Err(Error::config("embedding dimension mismatch"));
    }
    let mut s = Mat::zeros(speech.len(), bias.len());
    for (i, x) in speech.iter().enumerate() {
        for (j, b) in bias.iter().enumerate() {
            s.data[i * bias.len() + j] = inv_temp * dot(x, b);
        }
    }
    Ok(s)
}

/// Loss value and its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct ClapGrad {
    pub loss: f64,
    pub d_logits: Mat,
}

/// Symmetric cross-entropy for a `k × m` logit matrix (`m ≥ k`) whose row `i`
/// is matched with column `i`. Columns past `k` are extra negatives and only
/// enter the row terms. `mask[i*m + j] == true` removes a logit from both
/// softmaxes (used for columns that are also positives of the row).
///
/// `L = ½ (mean_i CE_row(i) + mean_{j<k} CE_col(j))`.
pub fn masked_clap_loss(s: &Mat, mask: Option<&[bool]>) -> Result<ClapGrad> {
    let (k, m) = (s.rows, s.cols);
    if k == 0 {
        return Err(Error::invalid("empty similarity matrix"));
    }
    if m < k {
        return Err(Error::invalid("logit matrix needs at least as many columns as rows"));
    }
    if let Some(mask) = mask {
        if mask.len() != k * m {
            return Err(Error::invalid("mask shape mismatch"));
        }
        if (0..k).any(|i| mask[i * m + i]) {
            return Err(Error::invalid("a matched pair is masked"));
        }
    }
    let on = |i: usize, j: usize| mask.is_none_or(|mk| !mk[i * m + j]);
    let mut d = Mat::zeros(k, m);
    let scale = 0.5 / k as f64;
    let mut total = 0.0;
    for i in 0..k {
        let row = s.row(i);
        let lse = math::log_sum_exp((0..m).filter(|&j| on(i, j)).map(|j| row[j]));
        total += lse - row[i];
        for j in (0..m).filter(|&j| on(i, j)) {
            d.data[i * m + j] += scale * math::exp(row[j] - lse);
        }
        d.data[i * m + i] -= scale;
    }
    for j in 0..k {
        let lse = math::log_sum_exp((0..k).filter(|&i| on(i, j)).map(|i| s.get(i, j)));
        total += lse - s.get(j, j);
        for i in (0..k).filter(|&i| on(i, j)) {
            d.data[i * m + j] += scale * math::exp(s.get(i, j) - lse);
        }
        d.data[j * m + j] -= scale;
    }
    Ok(ClapGrad { loss: scale * total, d_logits: d })
}

/// Symmetric cross-entropy of a square logit matrix with diagonal targets.
pub fn clap_loss(s: &Mat) -> Result<f64> {
    if s.rows != s.cols {
        return Err(Error::invalid("clap_loss needs a square matrix"));
    }
    Ok(masked_clap_loss(s, None)?.loss)
}

/// Dispersion penalty of one pair of unit embeddings, and its gradient with
/// respect to the first one (the second gets the negation).
pub(crate) fn pair_penalty(a: &[f64], b: &[f64], form: RegForm, margin: f64) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    match form {
        RegForm::Literal => {
            let v = dot(&diff, &diff);
            (v, diff.iter().map(|x| 2.0 * x).collect())
        }
        RegForm::Hinge => {
            let dist = math::norm(&diff);
            let gap = margin - dist;
            if gap <= 0.0 {
                return (0.0, alloc::vec![0.0; diff.len()]);
            }
            // d/da (m − ‖a−b‖)² = −2 (m − ‖a−b‖) (a−b)/‖a−b‖; taken as 0 at a = b.
            let g = if dist > 0.0 { -2.0 * gap / dist } else { 0.0 };
            (gap * gap, diff.iter().map(|x| g * x).collect())
        }
    }
}

/// `λ Σ_{i ∈ oracle} Σ_{j ∈ H_i} penalty(b_i, b_j)`.
pub fn reg_loss(
    embeddings: &BTreeMap<WordId, Vec<f64>>,
    oracle: &[WordId],
    graph: &HomophoneGraph,
    lambda: f64,
    form: RegForm,
    margin: f64,
) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let get = |id: WordId| {
        embeddings.get(&id).ok_or_else(|| Error::invalid(alloc::format!("no embedding for bias id {id}")))
    };
    let mut sum = 0.0;
    for &i in oracle {
        let bi = get(i)?;
        for &j in graph.homophones(i) {
            sum += pair_penalty(bi, get(j)?, form, margin).0;
        }
    }
    Ok(lambda * sum)
}
