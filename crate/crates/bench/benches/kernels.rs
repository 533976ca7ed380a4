use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sumboost_core::baselines::knn_classify;
use sumboost_core::boosting::best_label_mapping;
use sumboost_core::discretize::{encode, fit, Encoding};
use sumboost_core::sampling::{hac_cluster, ClusterModel};
use sumboost_core::EmbeddingVector;

fn embeddings(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<EmbeddingVector> {
    (0..n).map(|_| EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect()
}

fn bench_hac(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points = embeddings(200, 64, &mut rng);
    c.bench_function("hac_200x64", |b| b.iter(|| hac_cluster(black_box(&points), 0.05).unwrap()));
}

fn bench_label_mapping(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 500;
    let k = 5;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let raw: Vec<Option<usize>> = (0..n).map(|_| Some(rng.gen_range(0..k))).collect();
    let w = vec![1.0 / n as f64; n];
    c.bench_function("label_mapping_k5_n500", |b| b.iter(|| best_label_mapping(black_box(&raw), &labels, &w, k).unwrap()));
}

fn bench_discretize(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1000.0)).collect();
    for (name, enc) in [("bins5", Encoding::bins_quantified(5).unwrap()), ("percentile", Encoding::percentile())] {
        let bounds = fit("x", &values, &enc).unwrap();
        c.bench_function(&format!("fit_{name}_10k"), |b| b.iter(|| fit("x", black_box(&values), &enc).unwrap()));
        c.bench_function(&format!("encode_{name}_10k"), |b| {
            b.iter(|| values.iter().map(|&v| encode(v, &bounds, &enc).unwrap().len()).sum::<usize>())
        });
    }
}

fn bench_sampling(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 400;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let points = embeddings(n, 32, &mut rng);
    let model = ClusterModel::build(&labels, 2, &points, 0.05).unwrap();
    let p = vec![1.0 / n as f64; n];
    c.bench_function("cluster_sample_s50", |b| b.iter(|| model.sample(black_box(&p), 50, &[0.5, 0.5], &mut rng).unwrap()));
}

fn bench_knn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let train = embeddings(1000, 64, &mut rng);
    let labels: Vec<usize> = (0..1000).map(|i| i % 3).collect();
    let query = embeddings(1, 64, &mut rng).pop().unwrap();
    c.bench_function("knn_k5_n1000", |b| b.iter(|| knn_classify(black_box(&query), &train, &labels, 5).unwrap()));
}

criterion_group!(benches, bench_hac, bench_label_mapping, bench_discretize, bench_sampling, bench_knn);
criterion_main!(benches);
