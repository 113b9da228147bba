//! Generated lexical-sample corpora with a known answer.
//!
//! Every ambiguous word gets 2 to 4 senses. Each sense owns a handful of
//! invented cue words that appear both in its gloss and in the contexts
//! written for it, so a model that learns to match context against gloss can
//! disambiguate perfectly while a random guess scores about `1/k`.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    write_corpus_xml, write_gold_keys, Corpus, GoldKeys, Pos, SenseEntry, SenseInventory, Sentence,
    Token, WsdInstance,
};

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "ve", "zu", "bo", "di", "fa", "gu", "he", "jo",
];

const FILLERS: [&str; 24] = [
    "the", "a", "was", "with", "near", "very", "then", "of", "and", "it", "in", "on", "some", "that",
    "by", "we", "saw", "had", "there", "over", "under", "for", "this", "again",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub words: usize,
    pub min_senses: usize,
    pub max_senses: usize,
    pub cues_per_sense: usize,
    /// Cue words placed in each context (drawn from the gold sense's cues).
    pub cues_per_context: usize,
    pub min_fillers: usize,
    pub max_fillers: usize,
    pub train_sentences: usize,
    pub test_sentences: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            words: 20,
            min_senses: 2,
            max_senses: 4,
            cues_per_sense: 3,
            cues_per_context: 3,
            min_fillers: 1,
            max_fillers: 3,
            train_sentences: 400,
            test_sentences: 100,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub inventory: SenseInventory,
    pub train: Corpus,
    pub test: Corpus,
}

impl SyntheticCorpus {
    pub fn gold(corpus: &Corpus) -> GoldKeys {
        corpus
            .instances
            .iter()
            .map(|i| (i.instance_id.clone(), i.gold_keys.clone()))
            .collect()
    }

    /// `(corpus XML, gold keys)` for one split, in the on-disk formats.
    pub fn files(corpus: &Corpus) -> (String, String) {
        (write_corpus_xml(&corpus.sentences), write_gold_keys(&Self::gold(corpus)))
    }
}

struct Lexeme {
    lemma: String,
    pos: Pos,
    senses: Vec<(String, Vec<String>)>,
}

// Distinct three-syllable pseudo-words; 4096 available.
fn pseudo_word(index: usize) -> String {
    let i = (index * 2731) % 4096;
    [i / 256, (i / 16) % 16, i % 16].iter().map(|&s| SYLLABLES[s]).collect()
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    assert!(config.min_senses >= 1 && config.min_senses <= config.max_senses);
    assert!(config.cues_per_context <= config.cues_per_sense);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut next_word = 0;
    let mut fresh = || {
        next_word += 1;
        pseudo_word(next_word - 1)
    };

    let mut lexicon = Vec::with_capacity(config.words);
    let mut inventory = SenseInventory::default();
    for w in 0..config.words {
        let lemma = fresh();
        let pos = Pos::SCORED[w % 4];
        let k = rng.random_range(config.min_senses..=config.max_senses);
        let senses: Vec<(String, Vec<String>)> = (0..k)
            .map(|s| {
                let key = format!("{lemma}%{}:{s:02}", w % 4 + 1);
                (key, (0..config.cues_per_sense).map(|_| fresh()).collect())
            })
            .collect();
        for (key, cues) in &senses {
            let gloss = cues.join(" ");
            inventory
                .insert(&lemma, pos, SenseEntry { sense_key: key.clone(), gloss })
                .expect("generated keys are unique");
        }
        lexicon.push(Lexeme { lemma, pos, senses });
    }

    let mut split = |name: &str, n: usize| -> Corpus {
        let mut corpus = Corpus::default();
        for s in 0..n {
            let lex = &lexicon[rng.random_range(0..lexicon.len())];
            let (key, cues) = lex.senses.choose(&mut rng).expect("non-empty");
            let sentence_id = format!("{name}.s{s:04}");
            let instance_id = format!("{sentence_id}.t000");

            let word = |w: &str, pos: Pos| Token {
                surface: w.to_string(),
                lemma: w.to_string(),
                pos,
                instance_id: None,
            };
            let mut words: Vec<Token> = cues
                .choose_multiple(&mut rng, config.cues_per_context)
                .map(|c| word(c, Pos::Noun))
                .collect();
            let fillers = rng.random_range(config.min_fillers..=config.max_fillers);
            words.extend((0..fillers).map(|_| word(FILLERS.choose(&mut rng).expect("non-empty"), Pos::Other)));
            words.shuffle(&mut rng);
            let target_position = rng.random_range(0..=words.len());
            words.insert(
                target_position,
                Token {
                    instance_id: Some(instance_id.clone()),
                    ..word(&lex.lemma, lex.pos)
                },
            );

            corpus.instances.push(WsdInstance {
                instance_id,
                sentence_id: sentence_id.clone(),
                target_position,
                lemma: lex.lemma.clone(),
                pos: lex.pos,
                gold_keys: [key.clone()].into(),
            });
            corpus.sentences.push(Sentence { id: sentence_id, words });
        }
        corpus
    };
    let train = split("train", config.train_sentences);
    let test = split("test", config.test_sentences);
    SyntheticCorpus { inventory, train, test }
}
