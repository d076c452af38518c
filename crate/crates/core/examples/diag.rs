//! Diagnostic: where does the extra-block likelihood gain come from?

use blockrec::copurchase::build_graph;
use blockrec::eval::ExperimentConfig;
use blockrec::synth::{generate, SynthParams};
use blockrec::wsbm::select_k;

fn main() {
    let data = generate(&SynthParams::default()).unwrap();
    let graph = build_graph(&data.ratings).unwrap();
    let n = graph.n();
    let config = ExperimentConfig::default();

    let selection = select_k(&graph, 2, 8, &config.fit, 17).unwrap();
    println!("chose K={}", selection.chosen_k);
    for cand in &selection.candidates {
        println!(
            "  K={}: elbo {:.2}, sizes {:?}",
            cand.k, cand.approx_log_evidence, cand.community_sizes
        );
    }
    let fitted = selection.chosen().communities();
    let kf = selection.chosen_k;

    // Contingency fitted x planted.
    let kp = 4;
    let mut table = vec![vec![0usize; kp]; kf];
    for u in 0..n {
        table[fitted[u]][data.communities[u]] += 1;
    }
    println!("fitted\\planted contingency:");
    for (f, row) in table.iter().enumerate() {
        println!("  f{f}: {row:?}");
    }

    // Per fitted-block mean weighted degree.
    let deg = graph.degrees();
    for f in 0..kf {
        let members: Vec<usize> = (0..n).filter(|&u| fitted[u] == f).collect();
        if members.is_empty() {
            println!("  block f{f}: empty");
            continue;
        }
        let mean_deg: f64 = members.iter().map(|&u| deg[u]).sum::<f64>() / members.len() as f64;
        println!("  block f{f}: {} users, mean weighted degree {mean_deg:.1}", members.len());
    }

    // Empirical bundle weight stats under fitted labels: mean & variance of
    // weights over every dyad in the bundle (zeros included).
    println!("bundle stats (fitted): mean / var / dyads");
    let mut sums = vec![vec![0.0f64; kf]; kf];
    let mut sqs = vec![vec![0.0f64; kf]; kf];
    let mut counts = vec![vec![0usize; kf]; kf];
    for u in 0..n {
        for v in (u + 1)..n {
            let w = graph.weight(u, v);
            let (a, b) = (fitted[u].min(fitted[v]), fitted[u].max(fitted[v]));
            sums[a][b] += w;
            sqs[a][b] += w * w;
            counts[a][b] += 1;
        }
    }
    for a in 0..kf {
        for b in a..kf {
            if counts[a][b] == 0 {
                continue;
            }
            let c = counts[a][b] as f64;
            let mean = sums[a][b] / c;
            let var = sqs[a][b] / c - mean * mean;
            println!("  ({a},{b}): {mean:.3} / {var:.3} / {}", counts[a][b]);
        }
    }

    // Same under planted labels.
    println!("bundle stats (planted): mean / var / dyads");
    let mut sums = vec![vec![0.0f64; kp]; kp];
    let mut sqs = vec![vec![0.0f64; kp]; kp];
    let mut counts = vec![vec![0usize; kp]; kp];
    for u in 0..n {
        for v in (u + 1)..n {
            let w = graph.weight(u, v);
            let pu = data.communities[u];
            let pv = data.communities[v];
            let (a, b) = (pu.min(pv), pu.max(pv));
            sums[a][b] += w;
            sqs[a][b] += w * w;
            counts[a][b] += 1;
        }
    }
    for a in 0..kp {
        for b in a..kp {
            let c = counts[a][b] as f64;
            let mean = sums[a][b] / c;
            let var = sqs[a][b] / c - mean * mean;
            println!("  ({a},{b}): {mean:.3} / {var:.3} / {}", counts[a][b]);
        }
    }
}
