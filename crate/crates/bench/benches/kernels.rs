use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use orthodepth_bench::{baseline_samples, blocks, desk_model, random_values};
use orthodepth_core::autodiff::kernels::{gemm, Trans};
use orthodepth_core::autodiff::{Tape, Tensor};
use orthodepth_core::evaluator::{score_pair, GreedyDecoder};
use orthodepth_core::trainer::{loss_and_grad, pack_batch};
use orthodepth_core::Task;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    for &(m, k, n) in &[(64, 128, 128), (2560, 128, 384), (2560, 512, 128)] {
        let a = random_values::<f32>(m * k, 1);
        let b = random_values::<f32>(k * n, 2);
        let mut out = vec![0.0f32; m * n];
        group.throughput(Throughput::Elements((2 * m * k * n) as u64));
        group.bench_function(BenchmarkId::from_parameter(format!("{m}x{k}x{n}")), |bench| {
            bench.iter(|| gemm(m, k, n, black_box(&a), Trans::No, black_box(&b), Trans::No, &mut out, false))
        });
    }
    group.finish();
}

fn bench_attention(c: &mut Criterion) {
    let (batch, seq, d, heads) = (64, 40, 128, 2);
    let data = random_values::<f32>(batch * seq * 3 * d, 3);
    c.bench_function("causal_attention forward+backward 64x40x128", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let qkv = tape.leaf(Tensor::new(&[batch * seq, 3 * d], data.clone()).unwrap().with_grad());
            let out = tape.causal_attention(qkv, batch, seq, heads).unwrap();
            let s = tape.sum(out).unwrap();
            tape.backward(s).unwrap();
            black_box(tape.grad(qkv).map(|g| g[0]))
        })
    });
}

fn bench_training_step(c: &mut Criterion) {
    let (train, _, vocab) = baseline_samples(2_000);
    let mut model = desk_model::<f32>(&vocab);
    let blocks = blocks(&train[..64], &vocab, model.config().block_size);
    let refs: Vec<_> = blocks.iter().collect();
    let (tokens, targets, seq) = pack_batch(&refs);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("desk step, batch 64", |bench| {
        bench.iter(|| {
            model.zero_grads();
            loss_and_grad(&mut model, &tokens, &targets, 64, seq, &mut rng).unwrap()
        })
    });
    group.finish();
}

fn bench_decoding(c: &mut Criterion) {
    let (_, test, vocab) = baseline_samples(2_000);
    let model = desk_model::<f32>(&vocab);
    let pair: Vec<_> = test
        .into_iter()
        .filter(|s| s.orthography == "ent" && s.task == Task::Write)
        .collect();
    let decoder = GreedyDecoder::new(&model, &vocab);
    let mut group = c.benchmark_group("decoding");
    group.sample_size(10);
    group.bench_function("greedy, 64 prompts", |bench| {
        bench.iter(|| score_pair(&decoder, black_box(&pair)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_gemm, bench_attention, bench_training_step, bench_decoding);
criterion_main!(benches);
