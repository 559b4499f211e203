//! Naive-Bayes combination of ensemble opinions. Three members score four
//! candidates; the posterior multiplies the scores per candidate and
//! normalizes once, so scaling any member's whole row changes nothing.
//!
//! ```text
//! cargo run --release --example ensemble_votes
//! ```

use fedsel::metrics::argmax_low;
use fedsel::rl::{nb_combine, softmax};

fn main() -> fedsel::Result<()> {
    // Raw per-candidate Q values from three ensemble members.
    let q = [
        vec![0.8, 0.1, 0.3, 0.5],
        vec![0.6, 0.2, 0.4, 0.7],
        vec![0.9, 0.0, 0.2, 0.4],
    ];
    // Each row becomes a likelihood through a softmax.
    let likelihoods: Vec<Vec<f64>> = q.iter().map(|row| softmax(row)).collect();
    let priors = vec![0.25; 4];

    println!("member likelihood rows:");
    for (m, row) in likelihoods.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  member {m}: [{}]", cells.join(", "));
    }

    let posterior = nb_combine(&priors, &likelihoods)?;
    let cells: Vec<String> = posterior.iter().map(|v| format!("{v:.3}")).collect();
    println!();
    println!("posterior: [{}]", cells.join(", "));
    println!("winner: candidate {}", argmax_low(&posterior));

    // Multiplying one member's row by any positive constant is absorbed
    // by the normalization.
    let mut scaled = likelihoods.clone();
    for v in scaled[1].iter_mut() {
        *v *= 37.0;
    }
    let rescored = nb_combine(&priors, &scaled)?;
    println!();
    println!(
        "after scaling member 1 by 37: winner is still candidate {}",
        argmax_low(&rescored)
    );
    let drift: f64 = posterior
        .iter()
        .zip(&rescored)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("largest posterior change: {drift:.2e}");
    Ok(())
}
