//! Calibration probe: run the full experiment sweep on the synthetic corpus
//! and print the quantities the acceptance gate checks.

use std::collections::HashSet;
use std::time::Instant;

use blockrec::copurchase::build_graph;
use blockrec::corpus::{build_term_doc_matrix, item_similarity, truncated_svd};
use blockrec::eval::{run_experiment, Dataset, ExperimentConfig, Section};
use blockrec::synth::{generate, SynthParams};
use blockrec::wsbm::{fit_best, select_k};

/// Best label agreement between a fitted K=4 partition and the planted one,
/// maximized over the 24 label permutations.
fn planted_agreement(fitted: &[usize], planted: &[usize]) -> f64 {
    let perms = [
        [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
        [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
        [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
        [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
    ];
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
    let t0 = Instant::now();
    let data = generate(&SynthParams::default()).unwrap();
    let n = data.ratings.len();
    let liked = data
        .ratings
        .records()
        .iter()
        .filter(|r| r.rating >= 3.0)
        .count() as f64
        / n as f64;
    println!("corpus: {n} ratings, liked fraction {liked:.4}, gen {:?}", t0.elapsed());

    let t = Instant::now();
    let docs = data.documents();
    let x = build_term_doc_matrix(&docs, &HashSet::new(), 0.0).unwrap();
    println!("tdm: {} words x {} docs, {:?}", x.word_count(), x.doc_count(), t.elapsed());
    let m = 100.min(x.word_count().min(x.doc_count()));
    let t = Instant::now();
    let lsa = truncated_svd(&x, m).unwrap();
    println!("svd: rank {}, {:?}", lsa.latent_dim(), t.elapsed());
    let t = Instant::now();
    let sims = item_similarity(&lsa, &data.item_ids()).unwrap();
    println!("item sims: {:?}", t.elapsed());

    let t = Instant::now();
    let full_graph = build_graph(&data.ratings).unwrap();
    println!(
        "full graph: {} vertices, {} edges, build {:?}",
        full_graph.n(),
        full_graph.edge_count(),
        t.elapsed()
    );
    let config = ExperimentConfig::default();
    let t = Instant::now();
    let k4 = fit_best(&full_graph, 4, &config.fit, config.seed).unwrap();
    let agree = planted_agreement(&k4.communities(), &data.communities);
    println!("K=4 fit: planted agreement {:.4}, {:?}", agree, t.elapsed());

    let dataset = Dataset {
        ratings: &data.ratings,
        profiles: &data.profiles,
        item_sims: &sims,
    };
    let t = Instant::now();
    let report = run_experiment(&dataset, &config).unwrap();
    println!("sweep: {:?}", t.elapsed());
    for note in &report.notes {
        println!("note: {note}");
    }
    println!("\n-- error section --");
    for p in (1..=9).map(|i| i as f64 / 10.0) {
        let mae = report.find(Section::Error, p, "mae");
        let rmse = report.find(Section::Error, p, "rmse");
        if let (Some(m), Some(r)) = (mae, rmse) {
            println!(
                "p*={p:.1}  mae {:.4} vs {:.4} ({})  rmse {:.4} vs {:.4} ({})",
                m.ours,
                m.traditional,
                if m.ours < m.traditional { "WIN" } else { "LOSS" },
                r.ours,
                r.traditional,
                if r.ours < r.traditional { "WIN" } else { "LOSS" },
            );
        }
    }
    println!("\n-- accuracy section (p*=0.8) --");
    for l in (1..=20).map(|i| (i * 5) as f64) {
        let p = report.find(Section::Accuracy, l, "precision");
        let r = report.find(Section::Accuracy, l, "recall");
        let f = report.find(Section::Accuracy, l, "f_measure");
        if let (Some(p), Some(r), Some(f)) = (p, r, f) {
            println!(
                "L*={l:>3}  P {:.4} vs {:.4} ({})  R {:.4}  F {:.4}",
                p.ours,
                p.traditional,
                if p.ours >= p.traditional { "ok" } else { "VIOLATION" },
                r.ours,
                f.ours,
            );
        }
    }

    let t = Instant::now();
    let selection = select_k(&full_graph, 2, 8, &config.fit, 17).unwrap();
    println!("select_k over [2,8]: chose {} in {:?}", selection.chosen_k, t.elapsed());
    let labels = selection.chosen().communities();
    let mut sizes = vec![0usize; selection.chosen_k];
    for &l in &labels {
        sizes[l] += 1;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    println!("community sizes: {sizes:?}");
    println!("total {:?}", t0.elapsed());
}
