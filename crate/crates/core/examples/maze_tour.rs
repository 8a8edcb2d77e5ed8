//! Prints each built-in maze as ASCII art and drives a proportional
//! controller straight at the evaluation goal, showing where walls stop it.
//!
//! cargo run --release --example maze_tour

use hg2p::env::{MazeName, MazeSpec, RewardMode};

fn draw(spec: &MazeSpec, cols: usize) {
    let (w, h) = (spec.extent.max[0] - spec.extent.min[0], spec.extent.max[1] - spec.extent.min[1]);
    let rows = cols / 2;
    for r in (0..rows).rev() {
        let line: String = (0..cols)
            .map(|c| {
                let p = [spec.extent.min[0] + (c as f64 + 0.5) * w / cols as f64, spec.extent.min[1] + (r as f64 + 0.5) * h / rows as f64];
                if hg2p::env::distance(p, spec.eval_goal) < spec.success_radius {
                    'G'
                } else if spec.is_free(p) {
                    '.'
                } else {
                    '#'
                }
            })
            .collect();
        println!("  {line}");
    }
}

fn main() {
    for name in [MazeName::UMaze12, MazeName::UMaze24, MazeName::EmbossedMaze] {
        let spec = MazeSpec::preset(name, RewardMode::Sparse);
        println!("{name:?}: {} walls, {} step limit", spec.walls.len(), spec.max_episode_steps);
        draw(&spec, 48);

        let mut state = spec.reset_eval(&mut rand::rng());
        let mut ret = 0.0;
        loop {
            let a: Vec<f64> = (0..2).map(|i| 0.05 * (state.goal[i] - state.pos[i]) - 0.5 * state.vel[i]).collect();
            let out = spec.step(&state, [a[0], a[1]]);
            ret += out.reward;
            state = out.state;
            if out.done {
                println!(
                    "  greedy controller: success={} after {} steps, return {ret}, stopped at ({:.2}, {:.2})\n",
                    out.success, state.step, state.pos[0], state.pos[1]
                );
                break;
            }
        }
    }
}
