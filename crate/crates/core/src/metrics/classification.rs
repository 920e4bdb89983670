use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Average {
    /// Unweighted mean over all declared classes.
    #[default]
    Macro,
    /// Scores of a single positive class.
    Binary { positive: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScores {
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassScores>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus precision / recall / F1 averaged per `average`. A class
/// with a zero denominator scores 0 for that quantity.
pub fn cls_metrics<S: AsRef<str>>(
    pred: &[S],
    truth: &[S],
    classes: &[S],
    average: &Average,
) -> Result<ClsReport> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let mut index = HashMap::new();
    for (i, c) in classes.iter().enumerate() {
        if index.insert(c.as_ref(), i).is_some() {
            return Err(Error::DuplicateId(c.as_ref().to_string()));
        }
    }
    let lookup = |s: &S| {
        index
            .get(s.as_ref())
            .copied()
            .ok_or_else(|| Error::UnknownLabel(s.as_ref().to_string()))
    };
    let k = classes.len();
    let (mut tp, mut fp, mut fn_) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    let mut correct = 0;
    for (p, t) in pred.iter().zip(truth) {
        let (p, t) = (lookup(p)?, lookup(t)?);
        if p == t {
            tp[p] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let total = pred.len();
    let per_class: Vec<ClassScores> = (0..k)
        .map(|c| ClassScores {
            class: classes[c].as_ref().to_string(),
            tp: tp[c],
            fp: fp[c],
            fn_: fn_[c],
            tn: total - tp[c] - fp[c] - fn_[c],
            precision: ratio(tp[c], tp[c] + fp[c]),
            recall: ratio(tp[c], tp[c] + fn_[c]),
            f1: ratio(2 * tp[c], 2 * tp[c] + fp[c] + fn_[c]),
        })
        .collect();
    let (precision, recall, f1) = match average {
        Average::Macro => {
            let kf = k.max(1) as f64;
            (
                per_class.iter().map(|c| c.precision).sum::<f64>() / kf,
                per_class.iter().map(|c| c.recall).sum::<f64>() / kf,
                per_class.iter().map(|c| c.f1).sum::<f64>() / kf,
            )
        }
        Average::Binary { positive } => {
            let c = &per_class[*index
                .get(positive.as_str())
                .ok_or_else(|| Error::UnknownLabel(positive.clone()))?];
            (c.precision, c.recall, c.f1)
        }
    };
    Ok(ClsReport {
        accuracy: ratio(correct, total),
        precision,
        recall,
        f1,
        per_class,
    })
}
