use genlearn::autoregressive::{perplexity, sample_ancestral, MarkovModel, SequenceDataset};
use genlearn::numcore::Rng;

use crate::support::{cli_ok, scratch, Report};

/// Entropy rate in bits of the order-1 chain restricted to its real-symbol rows.
fn entropy_rate(rows: &[Vec<f64>]) -> f64 {
    let v = rows.len();
    let mut pi = vec![1.0 / v as f64; v];
    for _ in 0..10_000 {
        let mut next = vec![0.0; v];
        for (a, row) in rows.iter().enumerate() {
            for (b, p) in row.iter().enumerate() {
                next[b] += pi[a] * p;
            }
        }
        pi = next;
    }
    rows.iter().zip(&pi).map(|(row, w)| -w * row.iter().filter(|p| **p > 0.0).map(|p| p * p.log2()).sum::<f64>()).sum()
}

pub fn autoregressive() -> Report {
    let mut rep = Report::default();
    let mut rng = Rng::new(113);
    let mut off = Vec::new();
    for v in [2usize, 3, 4, 5, 7, 10, 26] {
        for order in 0..3 {
            let ds = SequenceDataset::new((0..20).map(|_| (0..15).map(|_| rng.below(v)).collect()).collect(), v).unwrap();
            let p = perplexity(&MarkovModel::uniform(order, v).unwrap(), &ds).unwrap();
            if p != v as f64 {
                off.push(format!("{p:?} for V = {v}, order {order}"));
            }
        }
    }
    rep.check(off.is_empty(), format!("uniform-model perplexity equals V exactly (V ∈ {{2,3,4,5,7,10,26}}, orders 0–2){}", if off.is_empty() { String::new() } else { format!(": {}", off.join(", ")) }));

    let tables: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|_| rng.uniform_range(0.1, 1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    let m = MarkovModel::from_tables(1, 3, 0.0, tables).unwrap();
    let s = sample_ancestral(&m, &mut Rng::new(114), 100_001).unwrap();
    let mut counts = [[0.0f64; 3]; 3];
    for w in s.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    let mut freq: f64 = 0.0;
    for (a, row) in counts.iter().enumerate() {
        let tot: f64 = row.iter().sum();
        for (b, c) in row.iter().enumerate() {
            freq = freq.max((c / tot - m.row(&[a])[b]).abs());
        }
    }
    rep.check(freq < 0.01, format!("ancestral transition frequency error {freq:.4} at 10⁵ draws"));

    let (_keep, dir) = scratch();
    let run = || -> Result<(f64, f64), String> {
        cli_ok(&dir, &["gen-data", "--kind", "markov-chain", "--n", "200", "--length", "50", "--alphabet", "4", "--seed", "21", "--out-dir", "train"])?;
        let text = std::fs::read_to_string(dir.join("train/chain.json")).map_err(|e| e.to_string())?;
        let chain = MarkovModel::from_json(&text).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = (0..4).map(|a| chain.row(&[a]).to_vec()).collect();
        let target = entropy_rate(&rows).exp2();
        let test = {
            let mut r = Rng::new(22);
            let seqs = (0..200).map(|_| sample_ancestral(&chain, &mut r, 50)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
            SequenceDataset::new(seqs, 4).map_err(|e| e.to_string())?
        };
        std::fs::write(dir.join("test.txt"), test.to_text()).map_err(|e| e.to_string())?;
        cli_ok(&dir, &["fit-neural-ar", "--data", "train/sequences.txt", "--alphabet", "4", "--seed", "3", "--out-dir", "nar"])?;
        let out = cli_ok(&dir, &["evaluate", "--model", "nar/model.json", "--data", "test.txt", "--metric", "perplexity"])?;
        let p: f64 = out.split_whitespace().next().and_then(|v| v.parse().ok()).ok_or(format!("unparsable `{out}`"))?;
        Ok((p, target))
    };
    match run() {
        Ok((p, target)) => rep.check(
            (p / target - 1.0).abs() < 0.05,
            format!("neural AR test perplexity {p:.4} vs entropy-rate perplexity {target:.4}"),
        ),
        Err(e) => rep.check(false, e),
    }
    rep
}
