//! Sense selection and F1 scoring.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::Rng;

use crate::corpus::{GoldKeys, Pos, SenseInventory, Sentence, WsdInstance};
use crate::encoder::PairClassifier;
use crate::error::{Error, Result};
use crate::pairgen::{build_pairs, instance_rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub instance_id: String,
    pub sense_key: String,
    pub match_probability: f64,
}

/// Candidate keys in inventory order and the classifier's logits for each.
pub(crate) fn candidate_logits<C: PairClassifier + ?Sized>(
    model: &C,
    instance: &WsdInstance,
    sentence: &Sentence,
    inventory: &SenseInventory,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    // Gold keys are irrelevant at inference; dropping them avoids label checks.
    let unlabeled = WsdInstance {
        gold_keys: BTreeSet::new(),
        ..instance.clone()
    };
    let pairs = build_pairs(&unlabeled, sentence, inventory, model.head().uses_ws())?;
    let logits = model.classify(&pairs)?;
    if logits.len() != pairs.len() {
        return Err(Error::ShapeIncompatible {
            expected: pairs.len(),
            found: logits.len(),
        });
    }
    Ok((pairs.into_iter().map(|p| p.sense_key).collect(), logits))
}

// log softmax(logits)[1], computed without saturating for large margins.
fn match_log_probability(logits: &[f64]) -> f64 {
    let top = (0..logits.len())
        .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
        .expect("non-empty");
    let max = logits[top];
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &l)| (l - max).exp())
        .sum();
    logits[1] - max - rest.ln_1p()
}

/// Argmax over candidates of the match probability; the first of equal
/// scores wins.
pub(crate) fn select_sense(
    instance: &WsdInstance,
    keys: &[String],
    logits: &[Vec<f64>],
) -> Result<Prediction> {
    if keys.is_empty() {
        return Err(Error::Precondition(format!(
            "instance {} has no candidate senses",
            instance.instance_id
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in logits.iter().enumerate() {
        if l.len() < 2 {
            return Err(Error::ShapeIncompatible {
                expected: 2,
                found: l.len(),
            });
        }
        let score = match_log_probability(l);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    let (i, score) = best.expect("non-empty");
    Ok(Prediction {
        instance_id: instance.instance_id.clone(),
        sense_key: keys[i].clone(),
        match_probability: score.exp(),
    })
}

/// Scores every candidate gloss and returns the most probable match.
pub fn disambiguate<C: PairClassifier + ?Sized>(
    model: &C,
    instance: &WsdInstance,
    sentence: &Sentence,
    inventory: &SenseInventory,
) -> Result<Prediction> {
    let (keys, logits) = candidate_logits(model, instance, sentence, inventory)?;
    select_sense(instance, &keys, &logits)
}

/// Uniformly random sense per instance, seeded per instance id.
pub fn random_choice(instance: &WsdInstance, inventory: &SenseInventory, seed: u64) -> Result<Prediction> {
    let senses = inventory
        .senses(&instance.lemma, instance.pos)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::MissingSense {
            lemma: instance.lemma.clone(),
            pos: instance.pos.to_string(),
        })?;
    let pick = instance_rng(seed, &instance.instance_id).random_range(0..senses.len());
    Ok(Prediction {
        instance_id: instance.instance_id.clone(),
        sense_key: senses[pick].sense_key.clone(),
        match_probability: 1.0 / senses.len() as f64,
    })
}

/// `100 * correct / total`, rounded half-up to one decimal.
pub fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let (c, t) = (correct as u128, total as u128);
    ((2000 * c + t) / (2 * t)) as f64 / 10.0
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvaluationReport {
    pub dataset: String,
    pub model: String,
    pub experiment: String,
    pub f1_overall: f64,
    /// Only parts of speech that occur among the gold instances.
    pub f1_by_pos: BTreeMap<Pos, f64>,
    pub n_instances: usize,
    /// Gold instances that received no prediction; scored as wrong.
    pub n_skipped: usize,
}

impl EvaluationReport {
    pub fn labeled(mut self, dataset: &str, model: &str, experiment: &str) -> Self {
        self.dataset = dataset.to_string();
        self.model = model.to_string();
        self.experiment = experiment.to_string();
        self
    }
}

/// Every gold instance counts once; a prediction is correct when its key is
/// in the gold set, and unanswered instances are wrong.
pub fn score(
    predictions: &[Prediction],
    gold: &GoldKeys,
    pos_index: &HashMap<String, Pos>,
) -> Result<EvaluationReport> {
    let mut answered: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !gold.contains_key(&p.instance_id) {
            return Err(Error::Validation(format!(
                "prediction for unknown instance `{}`",
                p.instance_id
            )));
        }
        if answered.insert(&p.instance_id, &p.sense_key).is_some() {
            return Err(Error::Validation(format!(
                "duplicate prediction for instance `{}`",
                p.instance_id
            )));
        }
    }

    let mut correct = 0;
    let mut by_pos: BTreeMap<Pos, (usize, usize)> = BTreeMap::new();
    for (id, keys) in gold {
        let hit = answered.get(id.as_str()).is_some_and(|k| keys.contains(*k));
        correct += usize::from(hit);
        if let Some(&pos) = pos_index.get(id) {
            let e = by_pos.entry(pos).or_default();
            e.0 += usize::from(hit);
            e.1 += 1;
        }
    }
    Ok(EvaluationReport {
        f1_overall: percent(correct, gold.len()),
        f1_by_pos: by_pos.into_iter().map(|(p, (c, t))| (p, percent(c, t))).collect(),
        n_instances: gold.len(),
        n_skipped: gold.len() - answered.len(),
        ..Default::default()
    })
}

pub fn write_predictions(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        let _ = writeln!(out, "{} {}", p.instance_id, p.sense_key);
    }
    out
}

/// Reads `instance_id sense_key` lines. Probabilities are not stored, so
/// they come back as NaN.
pub fn read_predictions(text: &str) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [id, key] => out.push(Prediction {
                instance_id: id.to_string(),
                sense_key: key.to_string(),
                match_probability: f64::NAN,
            }),
            _ => {
                return Err(Error::Format {
                    line: idx + 1,
                    message: "expected `instance_id sense_key`".into(),
                })
            }
        }
    }
    Ok(out)
}

pub const REPORT_HEADER: [&str; 10] = [
    "dataset",
    "model",
    "experiment",
    "f1_overall",
    "f1_noun",
    "f1_verb",
    "f1_adj",
    "f1_adv",
    "n",
    "skipped",
];

const REPORT_POS: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Format {
        line,
        message: e.to_string(),
    }
}

fn csv_text(writer: csv::Writer<Vec<u8>>) -> String {
    let bytes = writer.into_inner().expect("in-memory writer");
    String::from_utf8(bytes).expect("input was UTF-8")
}

pub fn write_report_csv(reports: &[EvaluationReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in reports {
        let mut row = vec![
            r.dataset.clone(),
            r.model.clone(),
            r.experiment.clone(),
            format!("{:.1}", r.f1_overall),
        ];
        row.extend(
            REPORT_POS
                .iter()
                .map(|p| r.f1_by_pos.get(p).map_or_else(String::new, |v| format!("{v:.1}"))),
        );
        row.push(r.n_instances.to_string());
        row.push(r.n_skipped.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    csv_text(w)
}

pub fn read_report_csv(text: &str) -> Result<Vec<EvaluationReport>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Format {
            line: 1,
            message: format!("expected header `{}`", REPORT_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = idx + 2;
        let bad = |what: &str| Error::Format {
            line,
            message: format!("invalid {what}"),
        };
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| (0.0..=100.0).contains(v))
                .ok_or_else(|| bad(REPORT_HEADER[i]))
        };
        let mut f1_by_pos = BTreeMap::new();
        for (k, pos) in REPORT_POS.iter().enumerate() {
            if !record[4 + k].is_empty() {
                f1_by_pos.insert(*pos, num(4 + k)?);
            }
        }
        out.push(EvaluationReport {
            dataset: record[0].to_string(),
            model: record[1].to_string(),
            experiment: record[2].to_string(),
            f1_overall: num(3)?,
            f1_by_pos,
            n_instances: record[8].parse().map_err(|_| bad("n"))?,
            n_skipped: record[9].parse().map_err(|_| bad("skipped"))?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportTable {
    pub text: String,
    pub csv: String,
}

/// Pivots reports into one row per `(dataset, model)` and one column per
/// experiment tag, both in first-seen order. Missing cells print as `-`.
pub fn report_table(reports: &[EvaluationReport]) -> ReportTable {
    let mut experiments: Vec<&str> = Vec::new();
    let mut datasets: Vec<(&str, Vec<&str>)> = Vec::new();
    let mut cells: HashMap<(&str, &str, &str), f64> = HashMap::new();
    for r in reports {
        if !experiments.contains(&r.experiment.as_str()) {
            experiments.push(&r.experiment);
        }
        let idx = match datasets.iter().position(|(d, _)| *d == r.dataset) {
            Some(i) => i,
            None => {
                datasets.push((&r.dataset, Vec::new()));
                datasets.len() - 1
            }
        };
        if !datasets[idx].1.contains(&r.model.as_str()) {
            datasets[idx].1.push(&r.model);
        }
        cells.insert((&r.dataset, &r.model, &r.experiment), r.f1_overall);
    }

    let mut header = vec!["dataset".to_string(), "model".to_string()];
    header.extend(experiments.iter().map(|e| e.to_string()));
    let mut csv_rows = Vec::new();
    let mut text_rows = Vec::new();
    for (dataset, models) in &datasets {
        for (i, model) in models.iter().enumerate() {
            let values: Vec<Option<f64>> = experiments
                .iter()
                .map(|e| cells.get(&(*dataset, *model, *e)).copied())
                .collect();
            let mut csv_row = vec![dataset.to_string(), model.to_string()];
            csv_row.extend(values.iter().map(|v| v.map_or_else(String::new, |v| format!("{v:.1}"))));
            csv_rows.push(csv_row);
            let mut text_row = vec![
                if i == 0 { dataset.to_string() } else { String::new() },
                model.to_string(),
            ];
            text_row.extend(values.iter().map(|v| v.map_or_else(|| "-".into(), |v| format!("{v:.1}"))));
            text_rows.push(text_row);
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in &csv_rows {
        w.write_record(row).expect("in-memory write");
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            text_rows
                .iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render = |row: &[String]| -> String {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            if c < 2 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "{cell:>w$}", w = widths[c]);
            }
        }
        line.trim_end().to_string() + "\n"
    };
    let mut text = render(&header);
    let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    text.push_str(&"-".repeat(rule));
    text.push('\n');
    for row in &text_rows {
        text.push_str(&render(row));
    }

    ReportTable { text, csv: csv_text(w) }
}
