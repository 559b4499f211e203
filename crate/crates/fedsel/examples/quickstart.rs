//! Minimal federated run: synthetic blobs split across eight clients,
//! uniform random cohorts, a small dense model. Prints the accuracy
//! trajectory and the final report.
//!
//! ```text
//! cargo run --release --example quickstart
//! ```

use fedsel::data::load_preset;
use fedsel::fed::{partition_noniid, Engine, FedConfig, PartitionConfig};
use fedsel::nn::dense_net;
use fedsel::selectors::{build_selector, RlConfig, SelectorKind};
use std::path::Path;

fn main() -> fedsel::Result<()> {
    let data = load_preset("synth-blobs", Path::new("data"))?;
    let shards = partition_noniid(
        &data.train,
        &PartitionConfig {
            n_clients: 8,
            sigma: 0.3,
            seed: 1,
        },
    )?;

    let spec = dense_net(&[data.train.feature_len(), 16, data.train.num_classes]);
    let cfg = FedConfig {
        clients_per_round: 3,
        local_epochs: 1,
        local_lr: 0.1,
        local_batch: 32,
        target_accuracy: data.target_accuracy,
        max_rounds: 15,
        stop_at_target: false,
        ..FedConfig::default()
    };
    let mut engine = Engine::new(spec, shards, data.test, cfg, 42)?;
    let mut selector = build_selector(SelectorKind::Random, &RlConfig::default(), 42);

    engine.run(selector.as_mut())?;
    for record in &engine.records {
        println!(
            "round {:>2}: clients {:?} accuracy {:.4} loss {:.4}",
            record.round, record.selected, record.test_acc, record.test_loss
        );
    }

    let report = engine.final_metrics()?;
    println!();
    println!("final accuracy          {:.4}", report.accuracy);
    println!("balanced accuracy       {:.4}", report.balanced_accuracy);
    println!("macro recall            {:.4}", report.recall);
    println!("Cohen's kappa           {:.4}", report.kappa);
    println!("macro one-vs-rest AUC   {:.4}", report.auc);
    println!("simulated compute       {:.3}s", engine.runtime_seconds());
    Ok(())
}
