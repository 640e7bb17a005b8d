use std::fs;
use std::path::Path;

use speechparse::run_with;

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn sp(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("speechparse").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> Output {
    let o = sp(args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.err);
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `all` row of a score report: (precision, recall, f1).
fn overall(report: &str, system: &str) -> (f64, f64, f64) {
    let row = report
        .lines()
        .find(|l| l.starts_with(&format!("{system}\tall\t")))
        .expect("overall row");
    let f: Vec<f64> = row.split('\t').skip(6).map(|v| v.parse().unwrap()).collect();
    (f[0], f[1], f[2])
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["synth", "--seed", "1", "--out", p(&a)]);
    ok(&["synth", "--seed", "1", "--out", p(&b)]);
    let files = dir_contents(&a);
    assert_eq!(files, dir_contents(&b));
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "grammar.txt",
            "lexicon.tsv",
            "train.alignments.tsv",
            "train.attachments.tsv",
            "train.frames.tsv",
            "train.trees",
        ]
    );
    let trees = fs::read_to_string(a.join("train.trees")).unwrap();
    assert_eq!(trees.lines().count(), 200);

    let c = tmp.path().join("c");
    ok(&["synth", "--seed", "2", "--out", p(&c)]);
    assert_ne!(fs::read(a.join("train.trees")).unwrap(), fs::read(c.join("train.trees")).unwrap());
}

#[test]
fn scoring_gold_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g.trees");
    fs::write(
        &g,
        "a\t(S (NP (PRP I)) (VP (VBP know)) (. .))\nb\t(S (EDITED (NP (PRP i))) (NP (PRP i)) (VP (VBD left)))\n",
    )
    .unwrap();
    let o = ok(&["score", "--gold", p(&g), "--pred", p(&g)]);
    assert!(o.out.starts_with("system\tstratum\tsentences\tmatched\tgold\tpred\tprecision\trecall\tf1\n"));
    assert_eq!(overall(&o.out, "a"), (100.0, 100.0, 100.0));

    let o = ok(&["score", "--gold", p(&g), "--pred", p(&g), "--strata", "disfluency", "--flat"]);
    assert!(o.out.contains("a\tdisfluent\t1\t"));
    assert!(o.out.contains("a\tfluent\t1\t"));
}

#[test]
fn score_reports_bootstrap_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g.trees");
    let bad = tmp.path().join("bad.trees");
    let mut gold = String::new();
    let mut worse = String::new();
    for i in 0..40 {
        gold.push_str(&format!("s{i}\t(S (NP (XX a) (XX b)) (VP (XX c)))\n"));
        worse.push_str(&format!("s{i}\t(S (XX a) (VP (XX b) (XX c)))\n"));
    }
    fs::write(&g, gold).unwrap();
    fs::write(&bad, worse).unwrap();
    let args = ["score", "--gold", p(&g), "--pred", p(&bad), "--compare", p(&g), "--draws", "2000", "--seed", "7"];
    let o = ok(&args);
    assert!((overall(&o.out, "a").2 - 40.0).abs() < 1e-9);
    assert_eq!(overall(&o.out, "b").2, 100.0);
    let p_value: f64 = o.out.lines().last().unwrap().split('\t').nth(3).unwrap().parse().unwrap();
    assert_eq!(p_value, 0.0);
    assert_eq!(ok(&args).out, o.out);
}

#[test]
fn score_rejects_mismatched_files() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g.trees");
    let q = tmp.path().join("p.trees");
    fs::write(&g, "a\t(S (XX a) (XX b))\n").unwrap();
    fs::write(&q, "a\t(S (XX a))\n").unwrap();
    let o = sp(&["score", "--gold", p(&g), "--pred", p(&q)]);
    assert_eq!(o.code, 1);
    assert!(o.err.contains("sentence 0"), "{}", o.err);
    fs::write(&q, "z\t(S (XX a) (XX b))\n").unwrap();
    assert_eq!(sp(&["score", "--gold", p(&g), "--pred", p(&q)]).code, 1);
    let missing = tmp.path().join("missing.trees");
    let o = sp(&["score", "--gold", p(&g), "--pred", p(&missing)]);
    assert_eq!(o.code, 1);
    assert!(o.err.contains("missing.trees"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sp(&["frobnicate"]).code, 2);
    assert_eq!(sp(&[]).code, 2);
    assert_eq!(sp(&["score", "--gold", "g"]).code, 2);
    assert_eq!(sp(&["synth", "--out", "d", "--coupling", "maybe"]).code, 2);
    assert_eq!(sp(&["train", "--data", "d", "--out", "o", "--set", "hidden"]).code, 2);
    let help = sp(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.out.contains("featurize") && help.out.contains("analyze"));
}

#[test]
fn config_violations_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&["synth", "--out", p(&d), "--sentences", "5"]);
    let out = tmp.path().join("m");
    for (setting, field) in [
        ("hidden=0", "hidden"),
        ("decay_factor=1.5", "decay_factor"),
        ("features=pitch", "features"),
        ("batch_size=many", "batch_size"),
        ("hiddn=4", "hiddn"),
    ] {
        let o = sp(&["train", "--data", p(&d), "--out", p(&out), "--set", setting]);
        assert_eq!(o.code, 1, "{setting}");
        assert!(o.err.contains(field), "{setting}: {}", o.err);
    }
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "hidden = 8\nlayers\n").unwrap();
    let o = sp(&["train", "--data", p(&d), "--out", p(&out), "--config", p(&cfg)]);
    assert_eq!(o.code, 1);
    assert!(o.err.contains("bad.cfg") && o.err.contains("line 2"), "{}", o.err);
    assert!(!out.exists());
}

#[test]
fn linearize_prints_symbols() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("t.trees");
    fs::write(&t, "(S (NP (PRP I)) (VP (VBP know) (. .)))\n").unwrap();
    let o = ok(&["linearize", "--input", p(&t)]);
    assert_eq!(o.out, "s00001\t(S (NP XX ) (VP XX ) )\n");
}

#[test]
fn featurize_combines_pitch_and_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let pitch = tmp.path().join("pitch.tsv");
    let fbank = tmp.path().join("fbank.tsv");
    let frames = tmp.path().join("frames.tsv");
    fs::write(&pitch, "sw1_A_1\t0\t0.5\t4.6\t0\nsw1_A_1\t1\t0.4\t4.7\t0.1\n").unwrap();
    let ones = vec!["1"; 40].join("\t");
    let halves = vec!["0.5"; 40].join("\t");
    fs::write(&fbank, format!("sw1_A_1\t0\t{ones}\nsw1_A_1\t1\t{halves}\n")).unwrap();
    ok(&["featurize", "--pitch", p(&pitch), "--fbank", p(&fbank), "--out", p(&frames)]);
    let text = fs::read_to_string(&frames).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('\t').skip(2).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][..3], [0.5, 4.6, 0.0]);
    assert_eq!(rows[0][3], 0.0);
    assert!((rows[1][3] - 0.5f64.ln()).abs() < 1e-12);
    assert!((rows[1][4] - 0.5f64.ln()).abs() < 1e-12);

    fs::write(&fbank, format!("sw1_A_1\t0\t{ones}\n")).unwrap();
    let o = sp(&["featurize", "--pitch", p(&pitch), "--fbank", p(&fbank), "--out", p(&frames)]);
    assert_eq!(o.code, 1);
    assert!(o.err.contains("sw1_A_1"));
}

fn tiny_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let cfg = dir.join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# small model\nhidden=64\nlayers=1\nword_embed_dim=64\noutput_embed_dim=64\npause_embed_dim=8\n\
             dropout=0\nbatch_size=8\nlr0=0.005\nloss_check_interval=25\n{extra}"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&["synth", "--out", p(&d), "--sentences", "20"]);
    let cfg = tiny_config(tmp.path(), "max_epochs=2\nfeatures=pause,duration,cnn\ncnn_filters_per_width=2\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(&["train", "--config", p(&cfg), "--data", p(&d), "--out", p(out), "--seed", "3"]);
    }
    let strip = |files: Vec<(String, Vec<u8>)>| files.into_iter().filter(|f| f.0 != "timing.tsv").collect::<Vec<_>>();
    let files = strip(dir_contents(&a));
    assert_eq!(files, strip(dir_contents(&b)));
    let cfg_text = fs::read_to_string(a.join("train.cfg")).unwrap();
    assert!(cfg_text.contains("seed=3\n") && cfg_text.contains("features=pause,duration,cnn\n"));
    let log = fs::read_to_string(a.join("train_log.tsv")).unwrap();
    assert!(log.starts_with("kind\tindex\tvalue\n"));
    assert!(log.contains("epoch_loss\t2\t"));
}

#[test]
fn train_decode_score_overfits_the_training_split() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&["synth", "--out", p(&d), "--sentences", "200", "--seed", "5"]);
    let cfg = tiny_config(tmp.path(), "features=pause\ntarget_dev_f1=99.5\nearly_stop_patience=50\n");
    let model = tmp.path().join("model");
    ok(&["train", "--config", p(&cfg), "--data", p(&d), "--dev-split", "train", "--out", p(&model)]);

    let pred = tmp.path().join("pred.trees");
    let o = ok(&[
        "decode", "--model", p(&model), "--data", p(&d), "--split", "train", "--out", p(&pred),
    ]);
    assert!(o.err.contains("parsed 200 sentences, 0 text-only"), "{}", o.err);
    let gold = d.join("train.trees");
    let report = ok(&["score", "--gold", p(&gold), "--pred", p(&pred)]).out;
    let f1 = overall(&report, "a").2;
    assert!(f1 >= 99.0, "train F1 {f1}");

    let an = tmp.path().join("analysis");
    ok(&["analyze", "--gold", p(&gold), "--pred", p(&pred), "--out", p(&an)]);
    let sentences = fs::read_to_string(an.join("sentences.tsv")).unwrap();
    assert_eq!(sentences.lines().count(), 201);
    assert!(fs::read_to_string(an.join("fluency.tsv")).unwrap().contains("a\tfluent\t"));
    assert!(fs::read_to_string(an.join("length.tsv")).unwrap().contains("a\t06-10\t"));

    // without alignments the pause model needs a text-only fallback
    let tokens = tmp.path().join("tokens.txt");
    fs::write(&tokens, "x1\ti saw the man\n").unwrap();
    let o = sp(&["decode", "--model", p(&model), "--input", p(&tokens)]);
    assert_eq!(o.code, 1);
    assert!(o.err.contains("x1"), "{}", o.err);

    let text_model = tmp.path().join("text");
    ok(&[
        "train", "--config", p(&cfg), "--data", p(&d), "--out", p(&text_model),
        "--set", "features=none", "--set", "max_epochs=1",
    ]);
    let o = ok(&["decode", "--model", p(&model), "--text-model", p(&text_model), "--input", p(&tokens)]);
    assert!(o.err.contains("1 text-only"), "{}", o.err);
    assert!(o.out.starts_with("x1\t("));
    let o = ok(&["decode", "--model", p(&text_model), "--input", p(&tokens), "--linear"]);
    assert!(o.out.starts_with("x1\t(S "), "{}", o.out);
    assert_eq!(o.out.matches("XX").count(), 4);
}
