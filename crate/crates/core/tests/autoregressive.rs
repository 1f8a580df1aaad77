use genlearn::autoregressive::{
    dataset_loglik, fit_markov, fit_neural_ar, perplexity, perplexity_with, sample_ancestral, sequence_loglik,
    MarkovModel, NeuralArModel, SequenceDataset, SequenceModel, TokenRange,
};
use genlearn::neuralnet::Activation;
use genlearn::numcore::Rng;
use genlearn::ExperimentConfig;

/// Order-1 chain on {0,1} with P(1|0)=a, P(0|1)=b, started in its
/// stationary distribution.
fn chain_data(rng: &mut Rng, a: f64, b: f64, n: usize, k: usize) -> SequenceDataset {
    let pi1 = a / (a + b);
    let seqs = (0..n)
        .map(|_| {
            let mut s = vec![(rng.uniform() < pi1) as usize];
            for _ in 1..k {
                let prev = *s.last().unwrap();
                let flip = if prev == 0 { a } else { b };
                s.push(if rng.uniform() < flip { 1 - prev } else { prev });
            }
            s
        })
        .collect();
    SequenceDataset::new(seqs, 2).unwrap()
}

fn h2(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

fn random_dataset(rng: &mut Rng, n: usize, k: usize, v: usize) -> SequenceDataset {
    SequenceDataset::new((0..n).map(|_| (0..k).map(|_| rng.below(v)).collect()).collect(), v).unwrap()
}

#[test]
fn order_one_loglik_matches_table_lookups() {
    let mut rng = Rng::new(1);
    let ds = random_dataset(&mut rng, 20, 12, 3);
    let m = fit_markov(&ds, 1, 0.5).unwrap();
    let t = m.tables();
    for seq in ds.sequences() {
        // pad context code is V = 3
        let mut want = t[3][seq[0]].log2();
        for k in 1..seq.len() {
            want += t[seq[k - 1]][seq[k]].log2();
        }
        assert!((sequence_loglik(&m, seq) - want).abs() < 1e-12);
    }
}

#[test]
fn table_rows_are_pmfs() {
    let mut rng = Rng::new(2);
    let ds = random_dataset(&mut rng, 15, 9, 4);
    for order in 0..=3 {
        for alpha in [0.0, 0.3, 1.0] {
            let m = fit_markov(&ds, order, alpha).unwrap();
            for row in m.tables() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn loglik_is_additive_over_concatenation() {
    let mut rng = Rng::new(3);
    let a = random_dataset(&mut rng, 7, 10, 3);
    let b = random_dataset(&mut rng, 5, 10, 3);
    let m = fit_markov(&a, 2, 1.0).unwrap();
    let mut both = a.sequences().to_vec();
    both.extend(b.sequences().iter().cloned());
    let ab = SequenceDataset::new(both, 3).unwrap();
    let sum = dataset_loglik(&m, &a) + dataset_loglik(&m, &b);
    assert!((dataset_loglik(&m, &ab) - sum).abs() < 1e-10);
}

#[test]
fn perplexity_is_two_to_the_cross_entropy_rate() {
    let mut rng = Rng::new(4);
    let train = random_dataset(&mut rng, 30, 8, 3);
    let test = random_dataset(&mut rng, 10, 8, 3);
    let m = fit_markov(&train, 1, 1.0).unwrap();
    let mut bits = 0.0;
    let mut tokens = 0.0;
    for seq in test.sequences() {
        for k in 1..seq.len() {
            bits -= m.conditional(&seq[..k])[seq[k]].log2();
            tokens += 1.0;
        }
    }
    assert!((perplexity(&m, &test).unwrap() - (bits / tokens).exp2()).abs() < 1e-12);
    let all = perplexity_with(&m, &test, TokenRange::All).unwrap();
    let first: f64 = test.sequences().iter().map(|s| -m.conditional(&[])[s[0]].log2()).sum();
    let want = ((bits + first) / (tokens + test.len() as f64)).exp2();
    assert!((all - want).abs() < 1e-12);
}

#[test]
fn smoothed_training_perplexity_is_bounded_by_alphabet() {
    let mut rng = Rng::new(5);
    for v in [2, 3, 5] {
        let ds = random_dataset(&mut rng, 10, 12, v);
        for order in 1..=3 {
            let m = fit_markov(&ds, order, 0.5).unwrap();
            let p = perplexity(&m, &ds).unwrap();
            assert!(p >= 1.0 && p <= v as f64 + 1e-9, "v={v} order={order} p={p}");
        }
    }
}

#[test]
fn ancestral_sampling_frequencies() {
    let mut rng = Rng::new(6);
    let uni = MarkovModel::uniform(0, 4).unwrap();
    let s = sample_ancestral(&uni, &mut rng, 100_000).unwrap();
    for v in 0..4 {
        let f = s.iter().filter(|x| **x == v).count() as f64 / s.len() as f64;
        assert!((f - 0.25).abs() < 0.01);
    }
    let ds = chain_data(&mut rng, 0.3, 0.6, 50, 20);
    let m = fit_markov(&ds, 1, 1.0).unwrap();
    let s = sample_ancestral(&m, &mut Rng::new(8), 100_001).unwrap();
    let mut counts = [[0.0f64; 2]; 2];
    for w in s.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    for a in 0..2 {
        let tot: f64 = counts[a].iter().sum();
        for b in 0..2 {
            assert!((counts[a][b] / tot - m.row(&[a])[b]).abs() < 0.01);
        }
    }
}

#[test]
fn neural_ar_reaches_entropy_rate_of_an_order_one_chain() {
    let (a, b) = (0.2, 0.4);
    let mut rng = Rng::new(10);
    let train = chain_data(&mut rng, a, b, 200, 30);
    let test = chain_data(&mut rng, a, b, 200, 30);
    let pi1 = a / (a + b);
    let rate = (1.0 - pi1) * h2(a) + pi1 * h2(b);
    let target = rate.exp2();
    let cfg = ExperimentConfig::new(3).with_learning_rate(0.5).with_max_steps(5).with_batch_size(32);
    let (m, trace) = fit_neural_ar(&train, 1, &cfg).unwrap();
    let p = perplexity(&m, &test).unwrap();
    assert_eq!(trace.len(), 5);
    assert!((p / target - 1.0).abs() < 0.05, "perplexity {p} vs entropy-rate {target}");
}

#[test]
fn untrained_neural_ar_is_near_alphabet_size() {
    let mut rng = Rng::new(11);
    let ds = random_dataset(&mut rng, 50, 10, 4);
    let m = NeuralArModel::new(&mut rng, 4, 2, &[8], Activation::Relu).unwrap();
    let p = perplexity(&m, &ds).unwrap();
    assert!((p / 4.0 - 1.0).abs() < 0.02);
}

#[test]
fn context_free_neural_ar_matches_marginal_markov() {
    let mut rng = Rng::new(12);
    let seqs = (0..100)
        .map(|_| (0..10).map(|_| rng.categorical(&[0.6, 0.3, 0.1])).collect())
        .collect();
    let ds = SequenceDataset::new(seqs, 3).unwrap();
    let cfg = ExperimentConfig::new(1).with_learning_rate(0.3).with_max_steps(20).with_batch_size(50);
    let (m, _) = fit_neural_ar(&ds, 0, &cfg).unwrap();
    let base = perplexity(&fit_markov(&ds, 0, 0.0).unwrap(), &ds).unwrap();
    let p = perplexity(&m, &ds).unwrap();
    assert!((p / base - 1.0).abs() < 0.02, "{p} vs {base}");
}
