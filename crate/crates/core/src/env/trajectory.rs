//! Line-delimited JSON trajectory dumps: one `{step, x, y, reward, done}`
//! object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EnvError, StepOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub reward: f64,
    pub done: bool,
}

impl From<&StepOutcome> for TrajectoryPoint {
    fn from(o: &StepOutcome) -> Self {
        Self { step: o.state.step, x: o.state.pos[0], y: o.state.pos[1], reward: o.reward, done: o.done }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryDump {
    pub points: Vec<TrajectoryPoint>,
}

impl TrajectoryDump {
    pub fn push(&mut self, outcome: &StepOutcome) {
        self.points.push(outcome.into());
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), EnvError> {
        for p in &self.points {
            let line = serde_json::to_string(p).map_err(|e| EnvError::Parse(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, EnvError> {
        let mut points = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            points.push(serde_json::from_str(&line).map_err(|e| EnvError::Parse(e.to_string()))?);
        }
        Ok(Self { points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{MazeName, MazeSpec, RewardMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jsonl_round_trip() {
        let spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Dense);
        let mut s = spec.reset(&mut ChaCha8Rng::seed_from_u64(1));
        let mut dump = TrajectoryDump::default();
        for i in 0..5 {
            let out = spec.step(&s, [0.1, 0.03 * i as f64]);
            dump.push(&out);
            s = out.state;
        }
        let mut buf = Vec::new();
        dump.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 5);
        assert_eq!(TrajectoryDump::read_jsonl(&buf[..]).unwrap(), dump);
    }
}
