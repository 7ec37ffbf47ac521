use edgesel::fl::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_task(rng: &mut ChaCha8Rng, dims: usize, classes: usize, n: usize) -> (Model, ClientDataset) {
    let features = (0..n * dims).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let ds = ClientDataset::new(features, labels, dims, classes).unwrap();
    let mut m = Model::zeros(dims, classes);
    m.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    (m, ds)
}

fn central_difference(m: &Model, ds: &ClientDataset, prox: Option<(f64, &[f64])>) -> Vec<f64> {
    let h = 1e-6;
    (0..m.weights.len())
        .map(|j| {
            let mut up = m.clone();
            up.weights[j] += h;
            let mut dn = m.clone();
            dn.weights[j] -= h;
            (loss_and_grad(&up, ds, prox).unwrap().0 - loss_and_grad(&dn, ds, prox).unwrap().0) / (2.0 * h)
        })
        .collect()
}

#[test]
fn proximal_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let (dims, classes) = (rng.random_range(1..5), rng.random_range(2..5));
        let (m, ds) = random_task(&mut rng, dims, classes, 20);
        let anchor: Vec<f64> = m.weights.iter().map(|w| w + rng.random_range(-0.5..0.5)).collect();
        let prox = Some((0.3, anchor.as_slice()));
        let (_, g) = loss_and_grad(&m, &ds, prox).unwrap();
        let fd = central_difference(&m, &ds, prox);
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
        assert!(num / den < 1e-6, "relative error {}", num / den);
    }
}

#[test]
fn proximal_term_keeps_weights_closer_to_start() {
    let data = SyntheticSpec { samples: 400, ..SyntheticSpec::default() }.generate(3, 0).unwrap();
    let start = Model::zeros(data.dims, data.classes);
    let (plain, _) = local_train(&start, &data, 50, 0.1).unwrap();
    let (prox, _) = local_train_proximal(&start, &data, 50, 0.1, 5.0).unwrap();
    let norm = |m: &Model| m.weights.iter().map(|w| w * w).sum::<f64>();
    assert!(norm(&prox) < norm(&plain));
    assert_eq!(local_train_proximal(&start, &data, 50, 0.1, 0.0).unwrap(), local_train(&start, &data, 50, 0.1).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partitions_cover_the_data(seed in 0u64..1000, n in 1usize..40, conc in 0.05f64..5.0) {
        let data = SyntheticSpec { samples: 800, classes: 3, ..SyntheticSpec::default() }.generate(seed, 0).unwrap();
        for parts in [partition_iid(&data, n, seed).unwrap(), partition_dirichlet(&data, n, conc, seed).unwrap()] {
            prop_assert_eq!(parts.len(), n);
            prop_assert!(parts.iter().all(|p| p.size() > 0));
            prop_assert_eq!(parts.iter().map(ClientDataset::size).sum::<usize>(), data.size());
            let mut counts = vec![0; 3];
            for p in &parts {
                for (c, k) in p.label_counts().iter().enumerate() {
                    counts[c] += k;
                }
            }
            prop_assert_eq!(counts, data.label_counts());
        }
    }

    #[test]
    fn aggregate_is_a_convex_combination(seed in 0u64..1000, parts in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<Model> = (0..parts).map(|_| random_task(&mut rng, 3, 2, 1).0).collect();
        let sizes: Vec<usize> = (0..parts).map(|_| rng.random_range(1..100)).collect();
        let avg = aggregate(&models, &sizes).unwrap();
        for j in 0..avg.weights.len() {
            let lo = models.iter().map(|m| m.weights[j]).fold(f64::INFINITY, f64::min);
            let hi = models.iter().map(|m| m.weights[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg.weights[j] >= lo - 1e-12 && avg.weights[j] <= hi + 1e-12);
        }
        let same = aggregate(&vec![models[0].clone(); parts], &sizes).unwrap();
        for (a, b) in same.weights.iter().zip(&models[0].weights) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn iid_partition_is_label_balanced() {
    let data = SyntheticSpec { samples: 1000, classes: 4, ..SyntheticSpec::default() }.generate(1, 0).unwrap();
    for p in partition_iid(&data, 10, 1).unwrap() {
        assert!(p.label_counts().iter().all(|&c| c == 25));
    }
}

#[test]
fn separable_task_is_learned() {
    let spec = SyntheticSpec::default();
    let train = spec.generate(0, 0).unwrap();
    let test = SyntheticSpec { samples: 2000, ..spec }.generate(0, 1).unwrap();
    let (m, _) = local_train(&Model::zeros(train.dims, train.classes), &train, 100, 0.1).unwrap();
    let (acc, loss) = evaluate(&m, &test).unwrap();
    assert!(acc > 0.95, "accuracy {acc}");
    assert!(loss < evaluate(&Model::zeros(2, 2), &test).unwrap().1);
}
