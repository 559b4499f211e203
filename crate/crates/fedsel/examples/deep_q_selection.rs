//! A deep-Q agent learning which candidates pay off. Ten candidates carry
//! a hidden quality in one state feature; rewards follow that quality, and
//! after a few hundred replay steps the Q ranking recovers it.
//!
//! ```text
//! cargo run --release --example deep_q_selection
//! ```

use fedsel::rl::{select_epsilon_greedy, DqnAgent, ReplayBuffer, Transition};
use fedsel::seeding::stream;
use rand::Rng;

fn main() -> fedsel::Result<()> {
    let n = 10;
    let mut init = stream(&[0xD0]);
    // Candidate states: five features, quality hidden in feature 2.
    let states: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let quality = i as f64 / (n - 1) as f64;
            vec![
                init.random_range(-0.5..0.5),
                init.random_range(-0.5..0.5),
                quality,
                init.random_range(-0.5..0.5),
                0.0,
            ]
        })
        .collect();

    let mut agent = DqnAgent::new(5, &[32, 32], 0.9, &mut stream(&[0xD1]));
    let mut replay = ReplayBuffer::new(512);
    let mut rng = stream(&[0xD2]);

    let before = agent.q_values(&states)?;

    for step in 0..400u64 {
        // Explore heavily early on, then settle down.
        let epsilon = (1.0 - step as f64 / 300.0).max(0.05);
        let picked = select_epsilon_greedy(&before, epsilon, 3, &mut rng)?;
        for &i in &picked {
            let noise = rng.random_range(-0.05..0.05);
            replay.push(Transition {
                state: states[i].clone(),
                reward: states[i][2] + noise,
                next_states: states.clone(),
                terminal: false,
            });
        }
        if replay.len() >= 32 {
            let batch = replay.sample(32, &mut stream(&[0xD3, step]))?;
            let loss = agent.td_step(&batch, 0.05)?;
            if step % 50 == 0 {
                println!("step {step:>3}: td loss {loss:.4}, epsilon {epsilon:.2}");
            }
            if step % 50 == 49 {
                agent.sync_target();
            }
        }
    }

    let after = agent.q_values(&states)?;
    println!();
    println!("candidate  quality   Q before   Q after");
    for i in 0..n {
        println!(
            "{i:>9}  {:>7.2}  {:>9.3}  {:>8.3}",
            states[i][2], before[i], after[i]
        );
    }

    let greedy = select_epsilon_greedy(&after, 0.0, 3, &mut rng)?;
    println!();
    println!("greedy top three: {greedy:?} (the highest-quality candidates)");
    Ok(())
}
