//! The full measurement protocol in miniature: four selection strategies
//! on skewed synthetic data, two seeds each, reported side by side. The
//! clustered ensemble selector and plain k-center both exploit update
//! geometry; random and the single deep-Q agent do not.
//!
//! ```text
//! cargo run --release --example selector_shootout
//! ```

use fedsel::experiment::{render_report, run_experiment_with, summary_rows, ExperimentConfig, ModelKind};
use fedsel::selectors::SelectorKind;

fn main() -> fedsel::Result<()> {
    let cfg = ExperimentConfig {
        dataset: "synth-blobs".into(),
        n_clients: 10,
        sigma: 0.8,
        partition_seed: 1,
        clients_per_round: 4,
        local_epochs: 1,
        local_lr: 0.1,
        local_batch: 32,
        target_accuracy: Some(0.80),
        max_rounds: 30,
        model: ModelKind::Dense { hidden: vec![16] },
        selectors: vec![
            SelectorKind::Random,
            SelectorKind::KCenter,
            SelectorKind::Dqn,
            SelectorKind::DqreScnet,
        ],
        seeds: vec![1, 2],
        stop_at_target: true,
        parallel: true,
        ..ExperimentConfig::default()
    };

    let outcome = run_experiment_with(&cfg, |run| {
        eprintln!(
            "{} seed {}: {} rounds, accuracy {:.3}",
            run.selector,
            run.seed,
            run.records.len(),
            run.report.accuracy
        );
    })?;

    println!();
    print!("{}", render_report(&summary_rows(&outcome)));
    Ok(())
}
