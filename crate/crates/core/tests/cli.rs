mod common;

use std::fs;

use common::bin::{args, glosswsd, Files};
use common::{MINI_GOLD, MINI_INVENTORY, MINI_XML, PAIR_GOLD, PAIR_XML};
use glosswsd::corpus::{parse_corpus, parse_gold_keys, parse_inventory};
use glosswsd::disambiguator::read_predictions;
use glosswsd::encoder::{load_checkpoint, HeadKind, ModelParameters, PairClassifier};
use glosswsd::pairgen::{build_pairs, read_pairs_tsv};
use glosswsd::synthetic::{generate, SyntheticConfig, SyntheticCorpus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn out(dir: &std::path::Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn stats_prints_hand_counts() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let run = glosswsd(&["stats", "--corpus", &f.corpus.display().to_string()]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let row: Vec<&str> = run.stdout.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row, ["mini", "5", "2", "1", "1", "1", "0"]);
}

#[test]
fn missing_file_is_io_error() {
    let run = glosswsd(&["stats", "--corpus", "/nonexistent/se2.xml"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.starts_with("error kind=io exit=2 "), "{}", run.stderr);
    assert!(run.stderr.contains("/nonexistent/se2.xml"));
    assert_eq!(run.stderr.lines().count(), 1);
}

#[test]
fn malformed_corpus_is_data_error() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "bad", "<corpus><text>", "", "");
    let run = glosswsd(&["stats", "--corpus", &f.corpus.display().to_string()]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.starts_with("error kind=xml"), "{}", run.stderr);
}

#[test]
fn usage_errors_exit_one() {
    let run = glosswsd(&["frobnicate"]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.starts_with("error kind=usage"));
    assert_eq!(glosswsd(&["--help"]).code, 0);
}

#[test]
fn build_pairs_baseline_and_alpha() {
    let dir = tempdir().unwrap();
    let mini = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let run = glosswsd(&args(&["build-pairs", "--out", &out(dir.path(), "base")], &mini));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let pairs = read_pairs_tsv(&fs::read_to_string(dir.path().join("base/pairs.tsv")).unwrap()).unwrap();
    // 3 + 2 + 3 + 2 + 4 senses.
    assert_eq!(pairs.len(), 14);
    assert_eq!(pairs.iter().filter(|p| p.label).count(), 6);

    let two = Files::write(dir.path(), "two", PAIR_XML, PAIR_GOLD, MINI_INVENTORY);
    let run = glosswsd(&args(&["build-pairs", "--alpha", "1.2", "--seed", "7", "--out", &out(dir.path(), "a")], &two));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let tsv = fs::read_to_string(dir.path().join("a/pairs.tsv")).unwrap();
    assert_eq!(read_pairs_tsv(&tsv).unwrap().len(), 4 + 3);
}

#[test]
fn build_pairs_is_reproducible() {
    let dir = tempdir().unwrap();
    let mini = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let mut files = Vec::new();
    for run_dir in ["r1", "r2"] {
        let run = glosswsd(&args(&["build-pairs", "--alpha", "0.8", "--seed", "7", "--out", &out(dir.path(), run_dir)], &mini));
        assert_eq!(run.code, 0, "{}", run.stderr);
        files.push(fs::read(dir.path().join(run_dir).join("pairs.tsv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn missing_senses_need_skip_flag() {
    let dir = tempdir().unwrap();
    let inventory: String = MINI_INVENTORY.lines().filter(|l| !l.starts_with("quickly")).map(|l| format!("{l}\n")).collect();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, &inventory);
    let run = glosswsd(&args(&["build-pairs", "--out", &out(dir.path(), "x")], &f));
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("kind=missing-sense"), "{}", run.stderr);
    let run = glosswsd(&args(&["build-pairs", "--skip-missing", "--out", &out(dir.path(), "x")], &f));
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(read_pairs_tsv(&fs::read_to_string(dir.path().join("x/pairs.tsv")).unwrap()).unwrap().len(), 12);
}

#[test]
fn invalid_head_fails_before_work() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let target = dir.path().join("never");
    let run = glosswsd(&args(&["train", "--head", "bert", "--out", &target.display().to_string()], &f));
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("kind=config"), "{}", run.stderr);
    assert!(!target.exists());
}

#[test]
fn zero_epochs_writes_initial_parameters() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let run = glosswsd(&args(
        &["train", "--preset", "toy", "--seed", "3", "--set", "num_epochs=0", "--out", &out(dir.path(), "m")],
        &f,
    ));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let model = load_checkpoint(&fs::read(dir.path().join("m/model.ckpt")).unwrap()).unwrap();
    // Initialization draws from the seed on its own stream.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    rng.set_stream(2);
    assert_eq!(model.params, ModelParameters::init(&model.config, &mut rng));
    assert_eq!(fs::read_to_string(dir.path().join("m/loss.csv")).unwrap(), "epoch,step,loss\n");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let config = dir.path().join("run.conf");
    fs::write(
        &config,
        format!(
            "# toy run\npreset = toy\nhead = token-cls\nnum_epochs = 0\ncorpus = {}\ngold = {}\ninventory = {}\nout = {}\n",
            f.corpus.display(),
            f.gold.display(),
            f.inventory.display(),
            out(dir.path(), "from-file")
        ),
    )
    .unwrap();
    let run = glosswsd(&["train", "--config", &config.display().to_string(), "--head", "sent-cls-ws"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let model = load_checkpoint(&fs::read(dir.path().join("from-file/model.ckpt")).unwrap()).unwrap();
    assert_eq!(model.config.head, HeadKind::SentClsWs);
    assert_eq!(model.config.model_dim, 32);
}

fn synthetic_files(dir: &std::path::Path) -> (Files, Files) {
    let data = generate(&SyntheticConfig::default());
    let inventory = data.inventory.to_tsv();
    let (train_xml, train_gold) = SyntheticCorpus::files(&data.train);
    let (test_xml, test_gold) = SyntheticCorpus::files(&data.test);
    (
        Files::write(dir, "train", &train_xml, &train_gold, &inventory),
        Files::write(dir, "test", &test_xml, &test_gold, &inventory),
    )
}

#[test]
fn toy_training_fits_synthetic_corpus_and_ensembles_agree() {
    let dir = tempdir().unwrap();
    let (train, test) = synthetic_files(dir.path());
    let model_dir = out(dir.path(), "model");
    let run = glosswsd(&args(&["train", "--preset", "toy", "--head", "sent-cls-ws", "--out", &model_dir], &train));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let loss = fs::read_to_string(dir.path().join("model/loss.csv")).unwrap();
    let last_epoch = loss.lines().last().unwrap().split(',').next().unwrap().to_string();
    assert_eq!(last_epoch, "10");
    let ckpt = dir.path().join("model/model.ckpt").display().to_string();

    let run = glosswsd(&args(&["eval", "--checkpoint", &ckpt, "--set", "model=m", "--out", &out(dir.path(), "single")], &test));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let single = fs::read_to_string(dir.path().join("single/report.csv")).unwrap();
    let f1: f64 = single.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(f1 >= 90.0, "{single}");

    let members = format!("{ckpt},{ckpt},{ckpt}");
    let run = glosswsd(&args(
        &["ensemble-eval", "--members", &members, "--set", "model=m", "--out", &out(dir.path(), "triple")],
        &test,
    ));
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(fs::read_to_string(dir.path().join("triple/report.csv")).unwrap(), single);
    assert_eq!(
        fs::read(dir.path().join("triple/predictions.txt")).unwrap(),
        fs::read(dir.path().join("single/predictions.txt")).unwrap()
    );
}

#[test]
fn trained_model_memorizes_its_training_sentences() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let run = glosswsd(&args(
        &["train", "--preset", "toy", "--set", "num_epochs=100", "--set", "batch_size=2", "--out", &out(dir.path(), "m")],
        &f,
    ));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let ckpt = dir.path().join("m/model.ckpt").display().to_string();
    let run = glosswsd(&args(&["eval", "--checkpoint", &ckpt, "--out", &out(dir.path(), "e")], &f));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let row: Vec<String> = run.stdout.lines().nth(1).unwrap().split(',').map(String::from).collect();
    assert_eq!(row[..4], ["mini", "sent-cls", "base", "100.0"]);
    assert_eq!(row[8..], ["5", "0"]);
}

#[test]
fn two_member_ensemble_matches_oracle_rescore() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let mut ckpts = Vec::new();
    for (head, seed) in [("token-cls", "1"), ("sent-cls-ws", "2")] {
        let d = out(dir.path(), head);
        let run = glosswsd(&args(
            &["train", "--preset", "toy", "--head", head, "--seed", seed, "--set", "num_epochs=3", "--out", &d],
            &f,
        ));
        assert_eq!(run.code, 0, "{}", run.stderr);
        ckpts.push(format!("{d}/model.ckpt"));
    }
    let spec = dir.path().join("members.tsv");
    fs::write(&spec, format!("{}\ttoken-cls\n{}\tsent-cls-ws\n", ckpts[0], ckpts[1])).unwrap();
    let run = glosswsd(&args(
        &["ensemble-eval", "--members", &spec.display().to_string(), "--out", &out(dir.path(), "ens")],
        &f,
    ));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let got = read_predictions(&fs::read_to_string(dir.path().join("ens/predictions.txt")).unwrap()).unwrap();

    // Oracle: sum each member's match margin per candidate and take the first maximum.
    let models: Vec<_> = ckpts.iter().map(|c| load_checkpoint(&fs::read(c).unwrap()).unwrap()).collect();
    let corpus = parse_corpus(MINI_XML).unwrap();
    let inventory = parse_inventory(MINI_INVENTORY).unwrap();
    let gold = parse_gold_keys(MINI_GOLD).unwrap();
    assert_eq!(got.len(), corpus.instances.len());
    for (inst, pred) in corpus.instances.iter().zip(&got) {
        let sentence = corpus.sentences.iter().find(|s| s.id == inst.sentence_id).unwrap();
        let mut margins = vec![0.0; inventory.sense_count(&inst.lemma, inst.pos)];
        let mut keys = Vec::new();
        for m in &models {
            let pairs = build_pairs(inst, sentence, &inventory, m.config.head.uses_ws()).unwrap();
            keys = pairs.iter().map(|p| p.sense_key.clone()).collect();
            for (margin, l) in margins.iter_mut().zip(m.classify(&pairs).unwrap()) {
                *margin += l[1] - l[0];
            }
        }
        let best = (0..margins.len()).fold(0, |b, c| if margins[c] > margins[b] { c } else { b });
        assert_eq!(pred.sense_key, keys[best], "{}", inst.instance_id);
    }
    assert!(gold.len() == got.len());

    fs::write(&spec, format!("{}\tsent-cls\n", ckpts[0])).unwrap();
    let run = glosswsd(&args(&["ensemble-eval", "--members", &spec.display().to_string(), "--out", &out(dir.path(), "bad")], &f));
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("kind=config"), "{}", run.stderr);
}

#[test]
fn corrupt_checkpoint_is_reported() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, b"GLWSDCKP\x01\x00\x00\x00truncated").unwrap();
    let run = glosswsd(&args(&["eval", "--checkpoint", &bad.display().to_string(), "--out", &out(dir.path(), "e")], &f));
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("kind=corrupt-checkpoint"), "{}", run.stderr);
}

#[test]
fn report_merges_csvs() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let header = "dataset,model,experiment,f1_overall,f1_noun,f1_verb,f1_adj,f1_adv,n,skipped\n";
    fs::write(&a, format!("{header}SE13,Sent-CLS,Base,64.6,,,,,1644,0\nSE13,Sent-CLS,alpha=0.8,72.3,,,,,1644,0\n")).unwrap();
    fs::write(&b, format!("{header}SE2,Sent-CLS,Base,70.1,71.0,60.2,75.5,80.0,2282,0\n")).unwrap();
    let run = glosswsd(&[
        "report".to_string(),
        a.display().to_string(),
        b.display().to_string(),
        "--out".to_string(),
        out(dir.path(), "t"),
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let csv = fs::read_to_string(dir.path().join("t/table.csv")).unwrap();
    assert_eq!(csv, "dataset,model,Base,alpha=0.8\nSE13,Sent-CLS,64.6,72.3\nSE2,Sent-CLS,70.1,\n");
    assert_eq!(run.stdout, fs::read_to_string(dir.path().join("t/table.txt")).unwrap());

    fs::write(&a, "nonsense\n").unwrap();
    let run = glosswsd(&["report", &a.display().to_string()]);
    assert_eq!(run.code, 1);
}

#[test]
fn head_mismatch_on_eval_is_rejected() {
    let dir = tempdir().unwrap();
    let f = Files::write(dir.path(), "mini", MINI_XML, MINI_GOLD, MINI_INVENTORY);
    let run = glosswsd(&args(&["train", "--preset", "toy", "--set", "num_epochs=0", "--out", &out(dir.path(), "m")], &f));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let ckpt = dir.path().join("m/model.ckpt").display().to_string();
    let run = glosswsd(&args(&["eval", "--checkpoint", &ckpt, "--head", "token-cls", "--out", &out(dir.path(), "e")], &f));
    assert_eq!(run.code, 1);
    let model = load_checkpoint(&fs::read(&ckpt).unwrap()).unwrap();
    assert_eq!(model.head(), HeadKind::SentCls);
}
