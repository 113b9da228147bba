//! Sense-annotated corpora, gold key files and sense inventories.
//!
//! The corpus format is the all-words evaluation XML layout:
//!
//! ```text
//! <corpus>
//!   <text id="d000">
//!     <sentence id="d000.s000">
//!       <wf lemma="the" pos="DET">The</wf>
//!       <instance id="d000.s000.t000" lemma="bark" pos="NOUN">bark</instance>
//!     </sentence>
//!   </text>
//! </corpus>
//! ```
//!
//! Gold keys are `instance_id key [key ...]` lines and the inventory is a
//! four-column TSV of `lemma, pos, sense_key, gloss`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl Pos {
    pub const SCORED: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

    /// Tags outside the four content classes collapse to `Other`.
    pub fn from_tag(tag: &str) -> Pos {
        match tag.trim() {
            "NOUN" => Pos::Noun,
            "VERB" => Pos::Verb,
            "ADJ" => Pos::Adj,
            "ADV" => Pos::Adv,
            _ => Pos::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Other => "OTHER",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    /// Present iff the token is a disambiguation target.
    pub instance_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub words: Vec<Token>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WsdInstance {
    pub instance_id: String,
    pub sentence_id: String,
    pub target_position: usize,
    pub lemma: String,
    pub pos: Pos,
    /// Empty until gold keys are attached.
    pub gold_keys: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SenseEntry {
    pub sense_key: String,
    pub gloss: String,
}

/// Senses grouped under `(lemma, pos)`, each list in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SenseInventory {
    entries: BTreeMap<(String, Pos), Vec<SenseEntry>>,
}

impl SenseInventory {
    pub fn senses(&self, lemma: &str, pos: Pos) -> Option<&[SenseEntry]> {
        self.entries
            .get(&(lemma.trim().to_string(), pos))
            .map(Vec::as_slice)
    }

    pub fn sense_count(&self, lemma: &str, pos: Pos) -> usize {
        self.senses(lemma, pos).map_or(0, <[_]>::len)
    }

    /// Number of distinct `(lemma, pos)` keys.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, Pos), &Vec<SenseEntry>)> {
        self.entries.iter()
    }

    /// Appends a sense; rejects a repeated `(lemma, pos, sense_key)`.
    pub fn insert(&mut self, lemma: &str, pos: Pos, entry: SenseEntry) -> Result<()> {
        let list = self
            .entries
            .entry((lemma.trim().to_string(), pos))
            .or_default();
        if list.iter().any(|e| e.sense_key == entry.sense_key) {
            return Err(Error::Validation(format!(
                "duplicate sense key `{}` for ({}, {})",
                entry.sense_key,
                lemma.trim(),
                pos
            )));
        }
        list.push(entry);
        Ok(())
    }

    /// Serializes back to the TSV layout accepted by [`parse_inventory`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((lemma, pos), senses) in &self.entries {
            for s in senses {
                let _ = writeln!(out, "{lemma}\t{pos}\t{}\t{}", s.sense_key, s.gloss);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub total: usize,
    pub noun: usize,
    pub verb: usize,
    pub adj: usize,
    pub adv: usize,
    pub other: usize,
}

/// Parsed sentences plus the instances they contain, both in document order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub instances: Vec<WsdInstance>,
}

impl Corpus {
    pub fn sentence_index(&self) -> HashMap<&str, &Sentence> {
        self.sentences.iter().map(|s| (s.id.as_str(), s)).collect()
    }
}

pub type GoldKeys = BTreeMap<String, BTreeSet<String>>;

fn line_of(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn required_attr(
    doc: &roxmltree::Document<'_>,
    node: roxmltree::Node<'_, '_>,
    name: &str,
) -> Result<String> {
    node.attribute(name)
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .ok_or_else(|| {
            Error::Validation(format!(
                "line {}: <{}> is missing attribute `{}`",
                line_of(doc, node),
                node.tag_name().name(),
                name
            ))
        })
}

pub fn parse_corpus(xml_text: &str) -> Result<Corpus> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| Error::Xml {
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "corpus" {
        return Err(Error::Xml {
            line: line_of(&doc, root),
            message: format!("expected <corpus> root, found <{}>", root.tag_name().name()),
        });
    }

    let mut corpus = Corpus::default();
    let mut seen_instances = HashSet::new();
    let mut seen_sentences = HashSet::new();

    for text in root.children().filter(|n| n.has_tag_name("text")) {
        for sent in text.children().filter(|n| n.has_tag_name("sentence")) {
            let sentence_id = required_attr(&doc, sent, "id")?;
            if !seen_sentences.insert(sentence_id.clone()) {
                return Err(Error::Validation(format!(
                    "line {}: duplicate sentence id `{sentence_id}`",
                    line_of(&doc, sent)
                )));
            }
            let mut words = Vec::new();
            let mut instances = Vec::new();
            for node in sent.children().filter(|n| n.is_element()) {
                let surface = node.text().unwrap_or("").trim().to_string();
                match node.tag_name().name() {
                    "wf" => {
                        let lemma = node
                            .attribute("lemma")
                            .map(|l| l.trim().to_string())
                            .unwrap_or_else(|| surface.clone());
                        let pos = Pos::from_tag(node.attribute("pos").unwrap_or(""));
                        words.push(Token {
                            surface,
                            lemma,
                            pos,
                            instance_id: None,
                        });
                    }
                    "instance" => {
                        let id = required_attr(&doc, node, "id")?;
                        let lemma = required_attr(&doc, node, "lemma")?;
                        let pos = Pos::from_tag(&required_attr(&doc, node, "pos")?);
                        if !seen_instances.insert(id.clone()) {
                            return Err(Error::Validation(format!(
                                "line {}: duplicate instance id `{id}`",
                                line_of(&doc, node)
                            )));
                        }
                        instances.push(WsdInstance {
                            instance_id: id.clone(),
                            sentence_id: sentence_id.clone(),
                            target_position: words.len(),
                            lemma: lemma.clone(),
                            pos,
                            gold_keys: BTreeSet::new(),
                        });
                        words.push(Token {
                            surface,
                            lemma,
                            pos,
                            instance_id: Some(id),
                        });
                    }
                    _ => {}
                }
            }
            if words.is_empty() {
                continue;
            }
            corpus.sentences.push(Sentence {
                id: sentence_id,
                words,
            });
            corpus.instances.extend(instances);
        }
    }
    Ok(corpus)
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Writes sentences as a single-text corpus document readable by [`parse_corpus`].
pub fn write_corpus_xml(sentences: &[Sentence]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<corpus>\n<text id=\"d000\">\n");
    for s in sentences {
        let _ = writeln!(out, "<sentence id=\"{}\">", escape_xml(&s.id));
        for w in &s.words {
            match &w.instance_id {
                Some(id) => {
                    let _ = writeln!(
                        out,
                        "<instance id=\"{}\" lemma=\"{}\" pos=\"{}\">{}</instance>",
                        escape_xml(id),
                        escape_xml(&w.lemma),
                        w.pos,
                        escape_xml(&w.surface)
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "<wf lemma=\"{}\" pos=\"{}\">{}</wf>",
                        escape_xml(&w.lemma),
                        w.pos,
                        escape_xml(&w.surface)
                    );
                }
            }
        }
        out.push_str("</sentence>\n");
    }
    out.push_str("</text>\n</corpus>\n");
    out
}

/// Serializes gold keys in the layout read by [`parse_gold_keys`].
pub fn write_gold_keys(gold: &GoldKeys) -> String {
    let mut out = String::new();
    for (id, keys) in gold {
        out.push_str(id);
        for k in keys {
            out.push(' ');
            out.push_str(k);
        }
        out.push('\n');
    }
    out
}

pub fn parse_gold_keys(text: &str) -> Result<GoldKeys> {
    let mut gold = GoldKeys::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default();
        let keys: BTreeSet<String> = fields.map(str::to_string).collect();
        if keys.is_empty() {
            return Err(Error::Format {
                line: line_no,
                message: format!("expected `instance_id key...`, got `{line}`"),
            });
        }
        if gold.insert(id.to_string(), keys).is_some() {
            return Err(Error::Validation(format!(
                "line {line_no}: duplicate gold entry for `{id}`"
            )));
        }
    }
    Ok(gold)
}

pub fn parse_inventory(tsv_text: &str) -> Result<SenseInventory> {
    let mut inventory = SenseInventory::default();
    for (idx, line) in tsv_text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Format {
                line: line_no,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let (lemma, pos, key, gloss) = (fields[0].trim(), fields[1], fields[2].trim(), fields[3]);
        if lemma.is_empty() || key.is_empty() {
            return Err(Error::Format {
                line: line_no,
                message: "empty lemma or sense key".into(),
            });
        }
        inventory
            .insert(
                lemma,
                Pos::from_tag(pos),
                SenseEntry {
                    sense_key: key.to_string(),
                    gloss: gloss.trim().to_string(),
                },
            )
            .map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("line {line_no}: {m}")),
                other => other,
            })?;
    }
    Ok(inventory)
}

pub fn compute_stats(instances: &[WsdInstance]) -> CorpusStats {
    let mut stats = CorpusStats {
        total: instances.len(),
        ..CorpusStats::default()
    };
    for inst in instances {
        match inst.pos {
            Pos::Noun => stats.noun += 1,
            Pos::Verb => stats.verb += 1,
            Pos::Adj => stats.adj += 1,
            Pos::Adv => stats.adv += 1,
            Pos::Other => stats.other += 1,
        }
    }
    stats
}

/// Copies gold keys onto matching instances. Gold entries for ids absent from
/// the corpus are rejected.
pub fn attach_gold(instances: &mut [WsdInstance], gold: &GoldKeys) -> Result<()> {
    let known: HashSet<&str> = instances.iter().map(|i| i.instance_id.as_str()).collect();
    if let Some(unknown) = gold.keys().find(|id| !known.contains(id.as_str())) {
        return Err(Error::Validation(format!(
            "gold key for unknown instance `{unknown}`"
        )));
    }
    for inst in instances.iter_mut() {
        if let Some(keys) = gold.get(&inst.instance_id) {
            inst.gold_keys = keys.clone();
        }
    }
    Ok(())
}

/// Instances split by inventory coverage.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Coverage {
    pub covered: Vec<WsdInstance>,
    /// Instances whose `(lemma, pos)` has no senses. Never dropped silently.
    pub skipped: Vec<WsdInstance>,
}

/// Routes instances without inventory senses to `skipped` and checks that
/// every gold key of a covered instance names one of its senses.
pub fn check_coverage(instances: &[WsdInstance], inventory: &SenseInventory) -> Result<Coverage> {
    let mut coverage = Coverage::default();
    for inst in instances {
        match inventory.senses(&inst.lemma, inst.pos) {
            None => coverage.skipped.push(inst.clone()),
            Some(senses) => {
                for key in &inst.gold_keys {
                    if !senses.iter().any(|s| &s.sense_key == key) {
                        return Err(Error::Validation(format!(
                            "instance {}: gold key `{key}` is not a sense of ({}, {})",
                            inst.instance_id, inst.lemma, inst.pos
                        )));
                    }
                }
                coverage.covered.push(inst.clone());
            }
        }
    }
    Ok(coverage)
}
