//! Restart-count experiments: planted recovery on sparse train graphs and
//! select_k behavior on the full graph.

use std::time::Instant;

use blockrec::copurchase::build_graph;
use blockrec::eval::ExperimentConfig;
use blockrec::ingest::{split_ratings, SplitRatio};
use blockrec::synth::{generate, SynthParams};
use blockrec::wsbm::{fit_best, select_k, FitConfig};

fn agreement(fitted: &[usize], planted: &[usize]) -> f64 {
    // Best over the 24 permutations of 4 labels.
    let mut perms = Vec::new();
    for a in 0..4usize {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&x| seen[x] = true);
                    if seen.iter().all(|&s| s) {
                        perms.push(p);
                    }
                }
            }
        }
    }
    let n = fitted.len();
    perms
        .iter()
        .map(|perm| {
            fitted
                .iter()
                .zip(planted)
                .filter(|&(&f, &p)| perm[f.min(3)] == p)
                .count() as f64
                / n as f64
        })
        .fold(0.0, f64::max)
}

fn main() {
    let data = generate(&SynthParams::default()).unwrap();
    let config = ExperimentConfig::default();

    for p_star in [0.1, 0.2, 0.3] {
        let (train, _) = split_ratings(
            &data.ratings,
            SplitRatio::new(p_star).unwrap(),
            config.seed,
        )
        .unwrap();
        let graph = build_graph(&train).unwrap();
        // Planted labels for the users present in the train graph, in
        // graph vertex order.
        let planted: Vec<usize> = graph
            .user_ids()
            .iter()
            .map(|&u| data.communities[(u - 1) as usize])
            .collect();
        for restarts in [10usize, 20, 40] {
            let fit = FitConfig {
                restarts,
                ..config.fit
            };
            let t = Instant::now();
            let model = fit_best(&graph, 4, &fit, config.seed).unwrap();
            let agree = agreement(&model.communities(), &planted);
            let mut sizes = model.community_sizes();
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            println!(
                "p*={p_star} restarts {restarts:>3}: agreement {agree:.4} sizes {sizes:?} {:?}",
                t.elapsed()
            );
        }
    }

    let graph = build_graph(&data.ratings).unwrap();
    for restarts in [40usize, 80] {
        let fit = FitConfig {
            restarts,
            ..config.fit
        };
        let t = Instant::now();
        let selection = select_k(&graph, 2, 8, &fit, 17).unwrap();
        println!(
            "select_k restarts {restarts}: chose {} in {:?}",
            selection.chosen_k,
            t.elapsed()
        );
        for cand in &selection.candidates {
            println!(
                "  K={}: elbo {:.2}, sizes {:?}",
                cand.k, cand.approx_log_evidence, cand.community_sizes
            );
        }
    }
}
