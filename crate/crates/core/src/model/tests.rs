use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{finite_difference_check, Grads};
use crate::corpus::{Example, Utterance, FRAME_FEATURES};
use crate::tree::parse_bracketed;
use crate::treeops::linearize;

fn tiny(features: FeatureFlags, attention: AttentionKind) -> ModelConfig {
    ModelConfig {
        hidden: 4,
        layers: 2,
        word_embed_dim: 3,
        output_embed_dim: 3,
        pause_embed_dim: 2,
        cnn_filter_widths: vec![2, 3],
        cnn_filters_per_width: 2,
        location_filters: 2,
        location_width: 3,
        dropout: 0.0,
        features,
        attention,
        context_seconds: 0.02,
        init_scale: 0.5,
    }
}

fn example() -> Example {
    let gold = parse_bracketed("(S (NP (PRP i)) (VP (VBD saw) (NP (PRP it))))", 1).unwrap();
    let alignments = vec![(0.0, 0.1), (0.15, 0.4), (0.4, 0.5)];
    let mut frames = Matrix::zeros(50, FRAME_FEATURES);
    for r in 0..50 {
        for c in 0..FRAME_FEATURES {
            frames.row_mut(r)[c] = libm::sin((r * 7 + c) as f64 * 0.3);
        }
    }
    let utt = Utterance {
        id: "sw0001_A_0001".to_string(),
        tokens: ["i", "saw", "it"].iter().map(|s| s.to_string()).collect(),
        alignments: Some(alignments),
        frames: Some(frames),
        speaker_side: "sw0001_A".to_string(),
    };
    Example::new(utt, gold).unwrap()
}

fn parser(config: ModelConfig, seed: u64) -> (Parser, Example) {
    let ex = example();
    let words = WordVocab::build(ex.tokens().iter().map(|s| s.as_str()));
    let lin = linearize(&ex.gold);
    let symbols = SymbolVocab::from_parses([&lin]);
    (Parser::new(config, words, symbols, seed).unwrap(), ex)
}

#[test]
fn input_width_matches_formula_for_every_flag_combination() {
    for flags in FeatureFlags::combinations() {
        let c = ModelConfig::default().with_features(flags);
        let p = c.pause_embed_dim;
        let mn = c.cnn_filter_widths.len() * c.cnn_filters_per_width;
        let expected = 512
            + if flags.pause { 2 * p } else { 0 }
            + usize::from(flags.duration)
            + if flags.cnn { mn } else { 0 };
        assert_eq!(c.input_width(), expected, "{flags}");
        let words = WordVocab::build(["a", "b"]);
        let parser = Parser::new(c, words, SymbolVocab::new(["S"]), 1).unwrap();
        let w = parser.params.get(parser.ids.encoder[0].weight);
        assert_eq!((w.rows, w.cols), (4 * 256, expected + 256), "{flags}");
    }
}

#[test]
fn manifest_names_every_tensor() {
    let (p, _) = parser(tiny(FeatureFlags::ALL, AttentionKind::Location), 3);
    let names = p.param_names();
    let expected = [
        "embed.word",
        "embed.pause",
        "cnn.w2.filters",
        "cnn.w2.bias",
        "cnn.w3.filters",
        "cnn.w3.bias",
        "encoder.l0.weight",
        "encoder.l0.bias",
        "encoder.l1.weight",
        "encoder.l1.bias",
        "embed.symbol",
        "decoder.l0.weight",
        "decoder.l0.bias",
        "decoder.l1.weight",
        "decoder.l1.bias",
        "attention.w1",
        "attention.w2",
        "attention.bias",
        "attention.v",
        "attention.wf",
        "attention.filters",
        "output.weight",
        "output.bias",
    ];
    assert_eq!(names, expected);
    let (p, _) = parser(tiny(FeatureFlags::TEXT_ONLY, AttentionKind::Content), 3);
    let names = p.param_names();
    assert!(!names.iter().any(|n| n.starts_with("cnn") || n == "embed.pause" || n == "attention.wf"));
}

#[test]
fn same_seed_same_parameters() {
    let c = tiny(FeatureFlags::ALL, AttentionKind::Location);
    let (a, _) = parser(c.clone(), 9);
    let (b, _) = parser(c.clone(), 9);
    let (d, _) = parser(c, 10);
    assert_eq!(a.params, b.params);
    assert_ne!(a.params.flat_values(), d.params.flat_values());
}

#[test]
fn prosodic_model_without_acoustics_backs_off() {
    let (p, mut ex) = parser(tiny(FeatureFlags::ALL, AttentionKind::Location), 1);
    let lexicon = DurationLexicon::estimate([&ex]);
    ex.has_acoustics = false;
    assert!(matches!(p.example_input(&ex, &lexicon), Err(Error::Backoff(_))));
    let text = p.text_input(ex.tokens());
    let mut g = Graph::new(&p.params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(p.encode(&mut g, &text, false, &mut rng), Err(Error::Backoff(_))));
}

#[test]
fn zero_location_weights_reduce_to_content_attention() {
    let (mut p, ex) = parser(tiny(FeatureFlags::TEXT_ONLY, AttentionKind::Location), 5);
    let wf = p.ids.att_wf.unwrap();
    p.params.values_mut(wf).fill(0.0);
    let input = p.text_input(ex.tokens());
    let mut g = Graph::new(&p.params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = p.encode(&mut g, &input, false, &mut rng).unwrap();
    let d = g.constant(1, 4, vec![0.3, -0.2, 0.9, 0.1]);
    let prev = g.constant(1, 3, vec![0.2, 0.5, 0.3]);
    let (a1, c1) = p.attend_content(&mut g, &enc, d).unwrap();
    let (a2, c2) = p.attend_location(&mut g, &enc, d, prev).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(g.value(a1)), bits(g.value(a2)));
    assert_eq!(bits(g.value(c1)), bits(g.value(c2)));
}

#[test]
fn content_model_has_no_location_attention() {
    let (p, ex) = parser(tiny(FeatureFlags::TEXT_ONLY, AttentionKind::Content), 5);
    let input = p.text_input(ex.tokens());
    let mut g = Graph::new(&p.params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = p.encode(&mut g, &input, false, &mut rng).unwrap();
    let d = g.constant(1, 4, vec![0.0; 4]);
    let prev = g.constant(1, 3, vec![0.0; 3]);
    assert!(matches!(p.attend_location(&mut g, &enc, d, prev), Err(Error::Contract(_))));
}

#[test]
fn step_distribution_and_attention_sum_to_one() {
    for attention in [AttentionKind::Content, AttentionKind::Location] {
        let (p, ex) = parser(tiny(FeatureFlags::ALL, attention), 2);
        let lexicon = DurationLexicon::estimate([&ex]);
        let input = p.example_input(&ex, &lexicon).unwrap();
        let mut g = Graph::new(&p.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = p.encode(&mut g, &input, false, &mut rng).unwrap();
        let state = p.initial_state(&mut g, &enc);
        let step = p.decode_step(&mut g, &enc, SymbolVocab::START, &state, false, &mut rng).unwrap();
        let alpha: f64 = g.value(step.alpha).iter().sum();
        assert!((alpha - 1.0).abs() < 1e-12);
        let (probs, _) = p.step_distribution(&mut g, &enc, SymbolVocab::START, &state, &mut rng).unwrap();
        assert_eq!(probs.len(), p.symbols.len());
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn uniform_attention_when_scores_vanish() {
    let (mut p, ex) = parser(tiny(FeatureFlags::TEXT_ONLY, AttentionKind::Content), 4);
    let v = p.ids.att_v;
    p.params.values_mut(v).fill(0.0);
    let input = p.text_input(ex.tokens());
    let mut g = Graph::new(&p.params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = p.encode(&mut g, &input, false, &mut rng).unwrap();
    let d = g.constant(1, 4, vec![1.0; 4]);
    let (alpha, ctx) = p.attend_content(&mut g, &enc, d).unwrap();
    for &a in g.value(alpha) {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }
    let states = g.value(enc.states).to_vec();
    for j in 0..4 {
        let mean = (states[j] + states[4 + j] + states[8 + j]) / 3.0;
        assert!((g.value(ctx)[j] - mean).abs() < 1e-12);
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for attention in [AttentionKind::Content, AttentionKind::Location] {
        let (mut p, ex) = parser(tiny(FeatureFlags::ALL, attention), 11);
        let lexicon = DurationLexicon::estimate([&ex]);
        let input = p.example_input(&ex, &lexicon).unwrap();
        let targets = p.symbols.encode(&linearize(&ex.gold)).unwrap();
        let mut grads = Grads::zeros_like(&p.params);
        {
            let mut g = Graph::new(&p.params);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let loss = p.sequence_loss(&mut g, &input, &targets, true, &mut rng).unwrap();
            g.backward(loss);
            g.accumulate_param_grads(&mut grads);
        }
        let Parser {
            config,
            words,
            symbols,
            params,
            ids,
        } = &mut p;
        let mut shell = Parser {
            config: config.clone(),
            words: words.clone(),
            symbols: symbols.clone(),
            params: ParamStore::new(),
            ids: ids.clone(),
        };
        let report = finite_difference_check(
            params,
            &grads,
            |store| {
                shell.params = store.clone();
                let mut g = Graph::new(&shell.params);
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let loss = shell.sequence_loss(&mut g, &input, &targets, true, &mut rng)?;
                Ok(g.scalar(loss))
            },
            1e-5,
            Some(6),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{attention}: {report:?}");
    }
}

#[test]
fn greedy_decoding_respects_the_length_cap() {
    let (p, ex) = parser(tiny(FeatureFlags::TEXT_ONLY, AttentionKind::Location), 8);
    let input = p.text_input(ex.tokens());
    for cap in [0, 1, 5, 20] {
        let ids = p.greedy_ids(&input, cap).unwrap();
        assert!(ids.len() <= cap);
        assert!(!ids.contains(&SymbolVocab::END));
    }
}

#[test]
fn rebinding_checks_names_and_shapes() {
    let c = tiny(FeatureFlags::ALL, AttentionKind::Location);
    let (p, _) = parser(c.clone(), 1);
    let again = Parser::from_params(c.clone(), p.words.clone(), p.symbols.clone(), p.params.clone()).unwrap();
    assert_eq!(again.params, p.params);
    let other = c.clone().with_features(FeatureFlags::TEXT_ONLY);
    assert!(matches!(
        Parser::from_params(other, p.words.clone(), p.symbols.clone(), p.params.clone()),
        Err(Error::Format(_))
    ));
}

#[test]
fn config_roundtrips_through_key_values() {
    let mut c = tiny(FeatureFlags { pause: true, duration: false, cnn: true }, AttentionKind::Content);
    c.dropout = 0.25;
    let kv = parse_kv(&c.to_kv()).unwrap();
    assert_eq!(ModelConfig::from_kv(&kv).unwrap(), c);
}

#[test]
fn config_errors_name_the_field() {
    let kv = parse_kv("hidden=0\n").unwrap();
    match ModelConfig::from_kv(&kv) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "hidden"),
        other => panic!("{other:?}"),
    }
    let kv = parse_kv("dropout=abc").unwrap();
    match ModelConfig::from_kv(&kv) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "dropout"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_kv("no equals sign"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!("pause,bogus".parse::<FeatureFlags>(), Err(Error::Config { .. })));
}

#[test]
fn symbol_vocab_layout() {
    let v = SymbolVocab::new(["VP", "S", "NP", "S"]);
    assert_eq!(v.len(), 7);
    assert_eq!(v.labels(), ["NP", "S", "VP"]);
    assert_eq!(v.id(&crate::treeops::Symbol::Open("S".into())).unwrap(), 5);
    assert!(matches!(
        v.id(&crate::treeops::Symbol::Open("PP".into())),
        Err(Error::Vocabulary(_))
    ));
    assert_eq!(v.symbol(SymbolVocab::END), None);
    assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
}
