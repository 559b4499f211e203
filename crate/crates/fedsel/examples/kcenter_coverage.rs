//! Greedy k-center picks the most spread-out candidates: each pick is the
//! point farthest from everything picked so far. On three well-separated
//! groups the first three picks land in three different groups, which is
//! the coverage argument for using it as a client selector.
//!
//! ```text
//! cargo run --release --example kcenter_coverage
//! ```

use fedsel::selectors::{select_kcenter, select_random};
use fedsel::seeding::stream;
use rand::Rng;

fn main() -> fedsel::Result<()> {
    // Three tight groups of five points each, centered far apart.
    let centers = [(0.0, 0.0), (10.0, 0.0), (5.0, 9.0)];
    let mut rng = stream(&[0x6C]);
    let mut points = Vec::new();
    let mut group = Vec::new();
    for (g, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..5 {
            points.push(vec![
                cx + rng.random_range(-0.5..0.5),
                cy + rng.random_range(-0.5..0.5),
            ]);
            group.push(g);
        }
    }

    let picks = select_kcenter(&points, 6)?;
    println!("k-center picks, in pick order:");
    for (rank, &p) in picks.iter().enumerate() {
        println!(
            "  pick {rank}: point {p:>2} in group {} at ({:>5.2}, {:>5.2})",
            group[p], points[p][0], points[p][1]
        );
    }
    let first_three: Vec<usize> = picks.iter().take(3).map(|&p| group[p]).collect();
    println!("first three picks cover groups {first_three:?}");

    let random = select_random(points.len(), 6, &mut stream(&[0x6D]))?;
    let covered: std::collections::BTreeSet<usize> =
        random.iter().map(|&p| group[p]).collect();
    println!();
    println!("a uniform random six-subset covered groups {covered:?}");
    Ok(())
}
