use orthodepth_core::codec::{Sample, Task, Vocab};
use orthodepth_core::evaluator::predict;
use orthodepth_core::model::{count_params, Model, ModelConfig};
use orthodepth_core::trainer::{loss_and_grad, pack_batch, train, TrainConfig};
use orthodepth_core::codec::to_training_block;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        block_size: 4,
        n_layer: 1,
        n_head: 2,
        n_embd: 8,
        vocab_size,
        dropout_rate: 0.0,
        init_std: 0.02,
        seed: 5,
    }
}

#[test]
fn parameter_count_by_hand() {
    // 10·8 + 4·8 + (12·64 + 13·8) + 2·8 + 8·10
    let cfg = tiny(10);
    assert_eq!(count_params(&cfg), 1080);
    assert_eq!(Model::<f32>::init(cfg).unwrap().num_params(), 1080);
}

#[test]
fn paper_head_width() {
    assert_eq!(ModelConfig::paper(60).head_dim(), 84);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = tiny(10);
    cfg.n_head = 3;
    assert!(Model::<f32>::init(cfg).is_err());
    let mut cfg = tiny(10);
    cfg.block_size = 0;
    assert!(Model::<f32>::init(cfg).is_err());
}

#[test]
fn forward_rejects_bad_tokens() {
    let model = Model::<f32>::init(tiny(10)).unwrap();
    assert!(model.forward(&[1, 10], false).is_err());
    assert!(model.forward(&[1, 2, 3, 4, 5], false).is_err());
    assert_eq!(model.forward(&[1, 2, 3], false).unwrap().shape(), &[3, 10]);
}

#[test]
fn attention_rows_are_causal_distributions() {
    let mut cfg = tiny(10);
    cfg.init_std = 0.5;
    let model = Model::<f64>::init(cfg).unwrap();
    let maps = model.attention_maps(&[3, 1, 4, 1]).unwrap();
    assert_eq!(maps.len(), 1);
    let t = 4;
    for head in maps[0].chunks(t * t) {
        for (i, row) in head.chunks(t).enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row[i + 1..].iter().all(|&p| p == 0.0));
        }
    }
}

#[test]
fn untrained_loss_is_near_log_vocab() {
    let v = 30;
    let mut cfg = tiny(v);
    cfg.block_size = 8;
    let mut model = Model::<f64>::init(cfg).unwrap();
    let tokens: Vec<usize> = (0..16).map(|i| (i * 7) % v).collect();
    let targets: Vec<Option<usize>> = (0..16).map(|i| Some((i * 11) % v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let loss = loss_and_grad(&mut model, &tokens, &targets, 2, 8, &mut rng).unwrap();
    assert!((loss - (v as f64).ln()).abs() < 0.05, "{loss}");
}

#[test]
fn eval_forward_is_deterministic_and_dropout_changes_train_mode() {
    let mut cfg = tiny(10);
    cfg.dropout_rate = 0.5;
    let model = Model::<f32>::init(cfg).unwrap();
    let a = model.forward(&[1, 2, 3], false).unwrap();
    assert_eq!(a, model.forward(&[1, 2, 3], false).unwrap());
    assert_ne!(a.data(), model.forward(&[1, 2, 3], true).unwrap().data());
}

#[test]
fn tiny_model_memorizes_a_handful_of_words() {
    let words = [("kat", "KAT"), ("dom", "DOM"), ("sun", "SUN"), ("lak", "LAK")];
    let samples: Vec<Sample> = words
        .iter()
        .map(|&(i, o)| Sample::new("xx", Task::Write, i, o).unwrap())
        .collect();
    let vocab = Vocab::build(&samples).unwrap();
    let cfg = ModelConfig {
        block_size: 20,
        n_layer: 1,
        n_head: 2,
        n_embd: 32,
        vocab_size: vocab.len(),
        dropout_rate: 0.0,
        init_std: 0.1,
        seed: 1,
    };
    let mut model = Model::<f32>::init(cfg).unwrap();
    let train_cfg = TrainConfig {
        batch_size: 4,
        max_steps: 300,
        learning_rate: 1e-2,
        warmup_steps: 10,
        eval_interval: 100,
        ..TrainConfig::desk()
    };
    let trace = train(&mut model, &samples, &vocab, &train_cfg).unwrap();
    assert!(trace.last().unwrap() < 0.05, "{:?}", trace.last());
    for (input, output) in words {
        assert_eq!(predict(&model, &vocab, "xx", Task::Write, input, 26).unwrap(), output);
    }
}

#[test]
fn packed_batch_is_trimmed_to_longest_sample() {
    let samples = [
        Sample::new("xx", Task::Read, "ab", "c").unwrap(),
        Sample::new("xx", Task::Read, "abcd", "ee").unwrap(),
    ];
    let vocab = Vocab::build(&samples).unwrap();
    let blocks: Vec<_> = samples.iter().map(|s| to_training_block(s, &vocab, 63).unwrap()).collect();
    let refs: Vec<_> = blocks.iter().collect();
    let (tokens, targets, seq) = pack_batch(&refs);
    // "xx,read,abcd,ee" plus EOT is 16 characters, predicted from 15 inputs
    assert_eq!(seq, 15);
    assert_eq!(tokens.len(), 2 * seq);
    assert_eq!(targets.len(), 2 * seq);
}
