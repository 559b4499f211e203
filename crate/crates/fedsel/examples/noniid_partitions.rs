//! How the skew knob shapes client data: sigma is the fraction of each
//! client's shard drawn from its dominant class. At 0 every shard looks
//! like the global distribution; at 1 every client sees a single class.
//!
//! ```text
//! cargo run --release --example noniid_partitions
//! ```

use fedsel::data::synth_blobs;
use fedsel::fed::{partition_noniid, PartitionConfig};

fn main() -> fedsel::Result<()> {
    let ds = synth_blobs(600, 8, 6, 3.0, 7);

    for sigma in [0.0, 0.5, 1.0] {
        let shards = partition_noniid(
            &ds,
            &PartitionConfig {
                n_clients: 6,
                sigma,
                seed: 11,
            },
        )?;
        println!("sigma = {sigma}");
        for shard in &shards {
            let hist = shard.class_histogram(ds.num_classes);
            let bars: Vec<String> = hist
                .iter()
                .map(|&n| format!("{:>4}", n))
                .collect();
            let frac = hist[shard.dominant_class] as f64 / shard.sample_count() as f64;
            println!(
                "  client {} dominant {} ({:>5.1}%) classes [{}]",
                shard.client_id,
                shard.dominant_class,
                100.0 * frac,
                bars.join(" ")
            );
        }
        println!();
    }
    Ok(())
}
