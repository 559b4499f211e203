//! Client weight updates as two-dimensional points. With fully skewed
//! shards (one class per client), clients that hold the same class push
//! the model the same way, so their update deltas land together in the
//! principal-component plane. That geometry is what the clustered
//! selectors exploit.
//!
//! ```text
//! cargo run --release --example weight_embeddings
//! ```

use fedsel::data::synth_blobs;
use fedsel::fed::{local_train, partition_noniid, PartitionConfig};
use fedsel::nn::{dense_net, ModelParams};
use fedsel::rl::embed_weights;
use fedsel::seeding::stream;

fn main() -> fedsel::Result<()> {
    let ds = synth_blobs(800, 16, 4, 3.0, 5);
    // sigma = 1: every client sees exactly one class.
    let shards = partition_noniid(
        &ds,
        &PartitionConfig {
            n_clients: 8,
            sigma: 1.0,
            seed: 2,
        },
    )?;

    let spec = dense_net(&[16, 12, 4]);
    let global = ModelParams::init(&spec, &mut stream(&[0xE0]));
    let global_flat = global.flatten();

    let mut deltas = Vec::new();
    for shard in &shards {
        let local = local_train(
            &global,
            &spec,
            shard,
            ds.num_classes,
            1,
            0.1,
            32,
            0.0,
            &mut stream(&[0xE1, shard.client_id as u64]),
        )?;
        let delta: Vec<f64> = local
            .flatten()
            .iter()
            .zip(&global_flat)
            .map(|(l, g)| l - g)
            .collect();
        deltas.push(delta);
    }

    let embedding = embed_weights(&deltas, &global_flat)?;
    println!("client  class        x        y");
    for (shard, coords) in shards.iter().zip(&embedding.clients) {
        println!(
            "{:>6} {:>6} {:>8.3} {:>8.3}",
            shard.client_id, shard.dominant_class, coords[0], coords[1]
        );
    }
    println!();
    println!(
        "global model projects to ({:.3}, {:.3})",
        embedding.global[0], embedding.global[1]
    );
    println!("clients sharing a class share a neighborhood in this plane");
    Ok(())
}
