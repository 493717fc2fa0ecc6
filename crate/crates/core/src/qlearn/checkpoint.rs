//! JSON checkpoints, one file per saccade network.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::QNetwork;
use super::train::CurvePoint;
use super::QStack;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fovsearch-qnet";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Names the input mapping in [`super::network_input`].
pub const CHECKPOINT_INPUT: &str = "posterior-sqrt-n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input: String,
    pub saccade: usize,
    pub n: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Row-major n × hidden.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row-major hidden × n.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Checkpoint {
    pub fn from_network(net: &QNetwork, saccade: usize, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            input: CHECKPOINT_INPUT.into(),
            saccade,
            n: net.n(),
            hidden: net.hidden(),
            seed,
            w1: net.w1.iter().copied().collect(),
            b1: net.b1.to_vec(),
            w2: net.w2.iter().copied().collect(),
            b2: net.b2.to_vec(),
        }
    }

    pub fn to_network(&self) -> std::result::Result<QNetwork, String> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(format!("unknown format {:?}", self.format));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        if self.input != CHECKPOINT_INPUT {
            return Err(format!("unknown network input {:?}", self.input));
        }
        let (n, h) = (self.n, self.hidden);
        let w1 = Array2::from_shape_vec((n, h), self.w1.clone()).map_err(|e| format!("w1: {e}"))?;
        let w2 = Array2::from_shape_vec((h, n), self.w2.clone()).map_err(|e| format!("w2: {e}"))?;
        let net = QNetwork {
            w1,
            b1: Array1::from(self.b1.clone()),
            w2,
            b2: Array1::from(self.b2.clone()),
        };
        net.check_shapes().map_err(|e| e.to_string())?;
        if !net.is_finite() {
            return Err("non-finite weights".into());
        }
        Ok(net)
    }
}

pub fn checkpoint_path(dir: &Path, saccade: usize) -> PathBuf {
    dir.join(format!("qnet_saccade_{saccade}.json"))
}

pub fn curve_path(dir: &Path, saccade: usize) -> PathBuf {
    dir.join(format!("training_curve_saccade_{saccade}.csv"))
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(checkpoint).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads `qnet_saccade_1.json` ... `qnet_saccade_{budget}.json` from `dir`
/// and checks they fit a task with `n` locations.
pub fn load_stack(dir: &Path, budget: usize, n: usize) -> Result<QStack> {
    let mut nets = Vec::with_capacity(budget);
    for saccade in 1..=budget {
        let path = checkpoint_path(dir, saccade);
        if !path.exists() {
            return Err(Error::Checkpoint {
                path,
                message: format!("missing checkpoint for saccade {saccade}"),
            });
        }
        let ckpt = load_checkpoint(&path)?;
        let bad = |message: String| Error::Checkpoint {
            path: path.clone(),
            message,
        };
        if ckpt.saccade != saccade {
            return Err(bad(format!(
                "holds saccade {}, expected {saccade}",
                ckpt.saccade
            )));
        }
        if ckpt.n != n {
            return Err(bad(format!(
                "network has {} inputs, task has {n} locations",
                ckpt.n
            )));
        }
        nets.push(ckpt.to_network().map_err(bad)?);
    }
    Ok(QStack::new(nets))
}

pub fn save_stack(dir: &Path, stack: &QStack, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for (i, net) in stack.networks().iter().enumerate() {
        save_checkpoint(
            &checkpoint_path(dir, i + 1),
            &Checkpoint::from_network(net, i + 1, seed),
        )?;
    }
    Ok(())
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("epoch,train_loss,holdout_loss\n");
    for p in curve {
        out.push_str(&format!(
            "{},{:.16e},{:.16e}\n",
            p.epoch, p.train_loss, p.holdout_loss
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedPath;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let net = QNetwork::init(5, 7, &mut SeedPath::root(1).rng()).unwrap();
        let path = checkpoint_path(dir.path(), 1);
        save_checkpoint(&path, &Checkpoint::from_network(&net, 1, 99)).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.seed, 99);
        assert_eq!(back.to_network().unwrap(), net);
    }

    #[test]
    fn missing_file_names_the_saccade() {
        let dir = tempfile::tempdir().unwrap();
        let net = QNetwork::init(4, 3, &mut SeedPath::root(2).rng()).unwrap();
        save_stack(dir.path(), &QStack::new(vec![net]), 0).unwrap();
        let err = load_stack(dir.path(), 2, 4).unwrap_err();
        assert!(err.to_string().contains("saccade 2"), "{err}");
        assert!(load_stack(dir.path(), 1, 5).is_err());
        assert_eq!(load_stack(dir.path(), 1, 4).unwrap().len(), 1);
    }

    #[test]
    fn corrupt_shapes_are_rejected() {
        let net = QNetwork::init(3, 2, &mut SeedPath::root(3).rng()).unwrap();
        let mut c = Checkpoint::from_network(&net, 1, 0);
        c.w2.pop();
        assert!(c.to_network().is_err());
    }
}
