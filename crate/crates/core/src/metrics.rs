use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Accuracy and macro-F1.
///
/// The macro average runs over every class that occurs in either the truth
/// or the predictions. Precision, recall or F1 with a zero denominator count
/// as 0.
pub fn score(predictions: &[u32], truth: &[u32], num_classes: usize) -> Result<Metrics> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Validation("metrics over an empty node set".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut true_count = vec![0usize; num_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p as usize >= num_classes || t as usize >= num_classes {
            return Err(Error::Validation(format!(
                "class id outside [0, {num_classes})"
            )));
        }
        pred_count[p as usize] += 1;
        true_count[t as usize] += 1;
        if p == t {
            tp[p as usize] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .filter(|&c| pred_count[c] + true_count[c] > 0)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], true_count[c]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: c as u32,
                precision,
                recall,
                f1,
                support: true_count[c],
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64;
    Ok(Metrics {
        accuracy: ratio(tp.iter().sum(), truth.len()),
        macro_f1,
        per_class,
    })
}
