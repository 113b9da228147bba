#![allow(dead_code)]

use glosswsd::corpus::{attach_gold, parse_corpus, parse_gold_keys, parse_inventory, Corpus, SenseInventory};
use glosswsd::encoder::{HeadKind, PairClassifier};
use glosswsd::pairgen::ContextGlossPair;
use glosswsd::Result;

pub const MINI_XML: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<corpus lang="en">
  <text id="d000">
    <sentence id="d000.s000">
      <wf lemma="the" pos="DET">The</wf>
      <wf lemma="dog" pos="NOUN">dog</wf>
      <instance id="d000.s000.t000" lemma="bark" pos="NOUN">bark</instance>
      <wf lemma="be" pos="VERB">was</wf>
      <instance id="d000.s000.t001" lemma="loud" pos="ADJ">loud</instance>
    </sentence>
    <sentence id="d000.s001">
      <wf lemma="the" pos="DET">The</wf>
      <wf lemma="tree" pos="NOUN">tree</wf>
      <instance id="d000.s001.t000" lemma="bark" pos="NOUN">bark</instance>
      <wf lemma="be" pos="VERB">was</wf>
      <instance id="d000.s001.t001" lemma="quickly" pos="ADV">quickly</instance>
      <instance id="d000.s001.t002" lemma="grow" pos="VERB">grew</instance>
    </sentence>
  </text>
</corpus>
"#;

pub const MINI_GOLD: &str = "d000.s000.t000 bark%dog
d000.s000.t001 loud%sound
d000.s001.t000 bark%tree
d000.s001.t001 quickly%fast
d000.s001.t002 grow%size grow%develop
";

pub const MINI_INVENTORY: &str = "# lemma\tpos\tsense_key\tgloss
bark\tNOUN\tbark%dog\tthe sound a dog makes
bark\tNOUN\tbark%tree\tthe outer layer of a tree
bark\tNOUN\tbark%ship\ta sailing ship
loud\tADJ\tloud%sound\thigh in volume of sound
loud\tADJ\tloud%garish\ttastelessly showy
quickly\tADV\tquickly%fast\twith speed
quickly\tADV\tquickly%soon\twithout delay
grow\tVERB\tgrow%size\tincrease in size
grow\tVERB\tgrow%develop\tdevelop and reach maturity
grow\tVERB\tgrow%cultivate\tcultivate by growing plants
grow\tVERB\tgrow%become\tcome to have a new quality
";

/// Hand counts for the fixture above.
pub const MINI_COUNTS: (usize, usize, usize, usize, usize) = (5, 2, 1, 1, 1);

/// First sentence only: one 3-sense and one 2-sense instance.
pub const PAIR_XML: &str = r#"<corpus><text id="d000"><sentence id="d000.s000">
<wf lemma="the" pos="DET">The</wf>
<wf lemma="dog" pos="NOUN">dog</wf>
<instance id="d000.s000.t000" lemma="bark" pos="NOUN">bark</instance>
<wf lemma="be" pos="VERB">was</wf>
<instance id="d000.s000.t001" lemma="loud" pos="ADJ">loud</instance>
</sentence></text></corpus>
"#;

pub const PAIR_GOLD: &str = "d000.s000.t000 bark%dog\nd000.s000.t001 loud%sound\n";

pub fn mini() -> (Corpus, SenseInventory) {
    let mut corpus = parse_corpus(MINI_XML).unwrap();
    attach_gold(&mut corpus.instances, &parse_gold_keys(MINI_GOLD).unwrap()).unwrap();
    (corpus, parse_inventory(MINI_INVENTORY).unwrap())
}

/// Match logit = number of gloss tokens also present in the context, scaled,
/// plus a per-gloss-length jitter so ties are rare.
pub struct OverlapClassifier {
    pub head: HeadKind,
    pub scale: f64,
    pub offset: f64,
}

impl OverlapClassifier {
    pub fn new(head: HeadKind) -> Self {
        OverlapClassifier { head, scale: 1.0, offset: 0.0 }
    }
}

impl PairClassifier for OverlapClassifier {
    fn head(&self) -> HeadKind {
        self.head
    }

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>> {
        Ok(pairs
            .iter()
            .map(|p| {
                let overlap = p
                    .gloss
                    .split_whitespace()
                    .filter(|g| p.context.iter().any(|c| c.eq_ignore_ascii_case(g)))
                    .count() as f64;
                let jitter = (p.gloss.len() % 7) as f64 / 8.0;
                vec![self.offset + 0.5 * self.scale, self.offset + self.scale * (overlap + jitter)]
            })
            .collect())
    }
}

/// Same `(c, c)` logits for every pair.
pub struct ConstantClassifier(pub f64);

impl PairClassifier for ConstantClassifier {
    fn head(&self) -> HeadKind {
        HeadKind::SentCls
    }

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![self.0, self.0]; pairs.len()])
    }
}

/// Emits three logits per pair, which no two-way member can be summed with.
pub struct ThreeWayClassifier;

impl PairClassifier for ThreeWayClassifier {
    fn head(&self) -> HeadKind {
        HeadKind::TokenCls
    }

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![0.0, 1.0, 2.0]; pairs.len()])
    }
}

/// Fixed match logits looked up by sense key; no-match logit is 0.
pub struct TableClassifier(pub Vec<(&'static str, f64)>);

impl PairClassifier for TableClassifier {
    fn head(&self) -> HeadKind {
        HeadKind::SentCls
    }

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>> {
        Ok(pairs
            .iter()
            .map(|p| {
                let m = self.0.iter().find(|(k, _)| *k == p.sense_key).map_or(0.0, |(_, v)| *v);
                vec![0.0, m]
            })
            .collect())
    }
}

pub mod oracles {
    use glosswsd::encoder::{
        loss_and_grads, EncodedPair, EncoderConfig, HeadKind, ModelParameters, TrainConfig, Trainer, BOS, SEP,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn grad_config(head: HeadKind) -> EncoderConfig {
        EncoderConfig {
            vocab_size: 14,
            max_seq_length: 16,
            model_dim: 16,
            num_layers: 2,
            num_heads: 2,
            feedforward_dim: 32,
            dropout_rate: 0.0,
            head,
        }
    }

    /// Random well-formed pair: BOS ctx SEP gloss SEP with a target in ctx.
    pub fn random_pair(rng: &mut ChaCha8Rng, vocab: usize, label: bool) -> EncodedPair {
        let ctx = rng.random_range(2..6);
        let gloss = rng.random_range(1..5);
        let mut ids = vec![BOS];
        ids.extend((0..ctx).map(|_| rng.random_range(4..vocab)));
        ids.push(SEP);
        ids.extend((0..gloss).map(|_| rng.random_range(4..vocab)));
        ids.push(SEP);
        let target = rng.random_range(1..=ctx);
        let span_end = (target + rng.random_range(1..3)).min(ctx + 1);
        EncodedPair {
            segment_ids: (0..ids.len()).map(|i| u8::from(i > ctx + 1)).collect(),
            target_mask: (0..ids.len()).map(|i| i >= target && i < span_end).collect(),
            token_ids: ids,
            label,
        }
    }

    pub struct GradCheck {
        pub max_rel_error: f64,
        pub checked: usize,
        /// Coordinates whose analytic gradient was not exactly zero.
        pub nonzero: usize,
    }

    /// Central differences (step 1e-5) on `coords` random coordinates.
    /// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
    pub fn gradient_check(head: HeadKind, coords: usize, seed: u64) -> GradCheck {
        let cfg = grad_config(head);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParameters::random(&cfg, 0.3, &mut rng);
        let batch: Vec<EncodedPair> = (0..3).map(|i| random_pair(&mut rng, cfg.vocab_size, i % 2 == 0)).collect();
        let (_, grads) = loss_and_grads(&params, &cfg, &batch, None).unwrap();
        let n = params.num_values();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut nonzero = 0;
        for _ in 0..coords {
            let i = rng.random_range(0..n);
            let original = params.value_at(i);
            let mut p = params.clone();
            p.set_value_at(i, original + h);
            let plus = loss_and_grads(&p, &cfg, &batch, None).unwrap().0;
            p.set_value_at(i, original - h);
            let minus = loss_and_grads(&p, &cfg, &batch, None).unwrap().0;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.value_at(i);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            nonzero += usize::from(analytic != 0.0);
        }
        GradCheck { max_rel_error: worst, checked: coords, nonzero }
    }

    pub fn accumulation_setup() -> (EncoderConfig, ModelParameters, Vec<EncodedPair>) {
        let cfg = grad_config(HeadKind::SentCls);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParameters::random(&cfg, 0.2, &mut rng);
        let data = (0..6).map(|i| random_pair(&mut rng, cfg.vocab_size, i % 3 == 0)).collect();
        (cfg, params, data)
    }

    /// Parameters after one optimizer update over `micro_batches`.
    pub fn one_update(cfg: &EncoderConfig, init: &ModelParameters, micro_batches: &[&[EncodedPair]]) -> ModelParameters {
        let train = TrainConfig {
            batch_size: micro_batches[0].len(),
            learning_rate: 1e-3,
            num_epochs: 1.0,
            grad_accum_steps: micro_batches.len(),
            seed: 1,
        };
        let mut trainer = Trainer::new(cfg, &train, init.clone());
        for mb in micro_batches {
            trainer.accumulate(mb).unwrap();
        }
        trainer.step().unwrap();
        assert_eq!(trainer.optimizer_steps(), 1);
        trainer.into_params()
    }
}

pub mod bin {
    use std::path::{Path, PathBuf};
    use std::process::Command;

    pub struct Run {
        pub code: i32,
        pub stdout: String,
        pub stderr: String,
    }

    pub fn glosswsd<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
        let out = Command::new(env!("CARGO_BIN_EXE_glosswsd")).args(args).output().unwrap();
        Run {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        }
    }

    pub struct Files {
        pub corpus: PathBuf,
        pub gold: PathBuf,
        pub inventory: PathBuf,
    }

    impl Files {
        pub fn write(dir: &Path, name: &str, xml: &str, gold: &str, inventory: &str) -> Files {
            let files = Files {
                corpus: dir.join(format!("{name}.xml")),
                gold: dir.join(format!("{name}.gold.txt")),
                inventory: dir.join(format!("{name}.inventory.tsv")),
            };
            std::fs::write(&files.corpus, xml).unwrap();
            std::fs::write(&files.gold, gold).unwrap();
            std::fs::write(&files.inventory, inventory).unwrap();
            files
        }

        /// `--corpus X --gold Y --inventory Z`.
        pub fn args(&self) -> Vec<String> {
            vec![
                "--corpus".into(),
                self.corpus.display().to_string(),
                "--gold".into(),
                self.gold.display().to_string(),
                "--inventory".into(),
                self.inventory.display().to_string(),
            ]
        }
    }

    pub fn args(parts: &[&str], files: &Files) -> Vec<String> {
        let mut v: Vec<String> = parts.iter().map(|s| s.to_string()).collect();
        v.extend(files.args());
        v
    }
}
