//! What each reported metric responds to, on a deliberately imbalanced
//! toy problem: a majority-class guesser looks fine on accuracy, falls
//! apart on balanced accuracy and kappa, and ranks at chance on AUC.
//!
//! ```text
//! cargo run --release --example metrics_tour
//! ```

use fedsel::metrics::metrics_report;
use fedsel::tensor::Tensor;

fn print_report(tag: &str, labels: &[usize], preds: &[usize], scores: &Tensor) {
    let r = metrics_report(labels, preds, scores, 0.0).unwrap();
    println!(
        "{tag:<22} accuracy {:.3}  balanced {:.3}  recall {:.3}  kappa {:>6.3}  auc {:.3}",
        r.accuracy, r.balanced_accuracy, r.recall, r.kappa, r.auc
    );
}

fn main() -> fedsel::Result<()> {
    // 90 samples of class 0, 10 of class 1.
    let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();

    // A guesser that always answers the majority class, with scores that
    // carry no information about the labels.
    let majority_preds = vec![0usize; 100];
    let majority_scores = Tensor::from_rows(
        &(0..100)
            .map(|i| {
                let s = 0.3 + 0.4 * ((i * 7) % 10) as f64 / 10.0;
                vec![1.0 - s, s]
            })
            .collect::<Vec<_>>(),
    )?;
    print_report("majority guesser", &labels, &majority_preds, &majority_scores);

    // A modest real classifier: misses 2 of the 10 positives and 5 of the
    // 90 negatives, with scores that mostly rank positives higher.
    let honest_preds: Vec<usize> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| match (l, i % 18) {
            (1, 0) => 0,
            (0, 1) => 1,
            _ => l,
        })
        .collect();
    let honest_scores = Tensor::from_rows(
        &labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let s = if l == 1 { 0.62 } else { 0.38 } + ((i % 7) as f64 - 3.0) * 0.07;
                vec![1.0 - s, s]
            })
            .collect::<Vec<_>>(),
    )?;
    print_report("honest classifier", &labels, &honest_preds, &honest_scores);

    println!();
    println!("accuracy alone rewards the guesser; the chance-corrected and");
    println!("ranking metrics are why the reports carry all five columns");
    Ok(())
}
