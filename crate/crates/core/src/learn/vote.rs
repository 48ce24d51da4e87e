//! Majority voting over independent predictions.

use crate::error::{Error, Result};
use crate::learn::argmax;

/// Each voter casts a hard vote for its argmax class; the class with the
/// most votes wins. Ties are broken by the larger total probability mass
/// over all voters, then by the lowest class index.
pub fn vote(predictions: &[Vec<f64>]) -> Result<usize> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::EmptyInput("no voters".into()))?;
    let k = first.len();
    if k == 0 {
        return Err(Error::EmptyInput("empty probability vector".into()));
    }

    let mut votes = vec![0usize; k];
    let mut mass = vec![0.0f64; k];
    for (v, p) in predictions.iter().enumerate() {
        if p.len() != k {
            return Err(Error::shape(format!(
                "voter {v} has {} classes, expected {k}",
                p.len()
            )));
        }
        votes[argmax(p)] += 1;
        for (m, &pi) in mass.iter_mut().zip(p) {
            *m += pi;
        }
    }

    let top = *votes.iter().max().unwrap();
    let mut winner = None;
    for c in 0..k {
        if votes[c] != top {
            continue;
        }
        winner = match winner {
            None => Some(c),
            Some(best) if mass[c] > mass[best] => Some(c),
            keep => keep,
        };
    }
    Ok(winner.expect("at least one class"))
}
