//! Versioned JSON checkpoint for a single [`Mlp`].
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "hg2p-mlp",
//!   "version": 1,
//!   "layer_sizes": [6, 64, 64, 2],
//!   "output": {"kind": "scaled_tanh", "bound": 6.0},
//!   "params": [ ...row-major W_0, b_0, W_1, b_1, ... ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so a save/load cycle reproduces every bit.

use serde::{Deserialize, Serialize};

use super::{Mlp, NnError, OutputActivation};

pub const CHECKPOINT_FORMAT: &str = "hg2p-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub output: OutputActivation,
    pub params: Vec<f64>,
}

impl From<&Mlp> for MlpCheckpoint {
    fn from(net: &Mlp) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_sizes: net.layer_sizes().to_vec(),
            output: net.output_activation(),
            params: net.params().to_vec(),
        }
    }
}

impl MlpCheckpoint {
    pub fn into_mlp(self) -> Result<Mlp, NnError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        Mlp::from_params(&self.layer_sizes, self.output, self.params)
    }
}

impl Mlp {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&MlpCheckpoint::from(self)).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ckpt: MlpCheckpoint =
            serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        ckpt.into_mlp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[5, 9, 3], OutputActivation::ScaledTanh { bound: 2.5 }, &mut rng).unwrap();
        let back = Mlp::from_json(&net.to_json()).unwrap();
        assert_eq!(back.layer_sizes(), net.layer_sizes());
        assert_eq!(back.output_activation(), net.output_activation());
        for (a, b) in back.params().iter().zip(net.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let net = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        let text = net.to_json().replace("hg2p-mlp", "other");
        assert!(Mlp::from_json(&text).is_err());
        let text = net.to_json().replace("\"version\":1", "\"version\":9");
        assert!(Mlp::from_json(&text).is_err());
    }
}
