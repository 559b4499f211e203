//! The classic case spectral clustering exists for: two concentric rings
//! that no centroid method can separate. Prints the Laplacian spectrum's
//! telltale eigengap and compares adjusted Rand index against raw k-means.
//!
//! ```text
//! cargo run --release --example spectral_rings
//! ```

use fedsel::data::synth_rings;
use fedsel::seeding::stream;
use fedsel::spectral::{adjusted_rand_index, kmeans, spectral_cluster};

fn main() -> fedsel::Result<()> {
    let (points, labels) = synth_rings(100, &[1.0, 5.0], 0.05, 3);

    let model = spectral_cluster(&points, 2, Some(0.5), &mut stream(&[1]))?;
    let spectral_ari = adjusted_rand_index(&model.assignments, &labels)?;

    let raw = kmeans(&points, 2, &mut stream(&[2]))?;
    let raw_ari = adjusted_rand_index(&raw.assignments, &labels)?;

    println!("200 points on two rings, radii 1 and 5");
    println!();
    println!("smallest Laplacian eigenvalues:");
    for (i, e) in model.eigenvalues.iter().take(5).enumerate() {
        println!("  lambda_{i} = {e:9.2e}");
    }
    println!("  (two near zero, then the gap: two connected components)");
    println!();
    println!("adjusted Rand index vs true rings:");
    println!("  spectral embedding + k-means  {spectral_ari:.3}");
    println!("  k-means on raw coordinates    {raw_ari:.3}");
    Ok(())
}
