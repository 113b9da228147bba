//! Logit-sum ensembles.
//!
//! Members score every candidate gloss with their own input encoding; the
//! pre-softmax logit vectors are summed in member order and a single softmax
//! is applied to the sum. Members must agree on output dimensionality.

use std::path::PathBuf;

use crate::corpus::{SenseInventory, Sentence, WsdInstance};
use crate::disambiguator::{candidate_logits, select_sense, Prediction};
use crate::encoder::{softmax, HeadKind, PairClassifier};
use crate::error::{Error, Result};

/// Sums member logits elementwise (in the given order) into one vector.
pub fn sum_logits<L: AsRef<[f64]>>(member_logits: &[L]) -> Result<Vec<f64>> {
    let first = member_logits
        .first()
        .ok_or_else(|| Error::Precondition("ensemble needs at least one member".into()))?
        .as_ref();
    let mut sum = vec![0.0; first.len()];
    for logits in member_logits {
        let logits = logits.as_ref();
        if logits.len() != sum.len() {
            return Err(Error::ShapeIncompatible {
                expected: sum.len(),
                found: logits.len(),
            });
        }
        if let Some(bad) = logits.iter().find(|l| !l.is_finite()) {
            return Err(Error::Input(format!("non-finite member logit {bad}")));
        }
        for (s, l) in sum.iter_mut().zip(logits) {
            *s += l;
        }
    }
    Ok(sum)
}

/// Softmax of the elementwise sum of member logits.
pub fn combine_logits<L: AsRef<[f64]>>(member_logits: &[L]) -> Result<Vec<f64>> {
    sum_logits(member_logits).map(|s| softmax(&s))
}

/// One line of an ensemble spec file: `checkpoint_path<TAB>head_kind`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemberSpec {
    pub checkpoint: PathBuf,
    pub head: HeadKind,
}

pub fn parse_ensemble_spec(text: &str) -> Result<Vec<MemberSpec>> {
    let mut members = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Format {
                line: idx + 1,
                message: "expected `checkpoint_path<TAB>head_kind`".into(),
            });
        }
        members.push(MemberSpec {
            checkpoint: PathBuf::from(fields[0].trim()),
            head: fields[1].parse().map_err(|e: Error| Error::Format {
                line: idx + 1,
                message: e.to_string(),
            })?,
        });
    }
    if members.is_empty() {
        return Err(Error::Precondition("ensemble spec lists no members".into()));
    }
    Ok(members)
}

/// Picks the sense whose summed member logits give the highest match
/// probability; ties go to the earliest sense in inventory order.
pub fn ensemble_disambiguate<C: PairClassifier>(
    members: &[C],
    instance: &WsdInstance,
    sentence: &Sentence,
    inventory: &SenseInventory,
) -> Result<Prediction> {
    if members.is_empty() {
        return Err(Error::Precondition("ensemble needs at least one member".into()));
    }
    let per_member = members
        .iter()
        .map(|m| candidate_logits(m, instance, sentence, inventory))
        .collect::<Result<Vec<_>>>()?;
    let keys = per_member[0].0.clone();
    let combined = (0..keys.len())
        .map(|c| {
            let column: Vec<&[f64]> = per_member.iter().map(|(_, l)| l[c].as_slice()).collect();
            sum_logits(&column)
        })
        .collect::<Result<Vec<_>>>()?;
    select_sense(instance, &keys, &combined)
}
