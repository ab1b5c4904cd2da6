//! Binary checkpoint files.
//!
//! Layout, all integers `u64` little-endian and all floats `f64`
//! little-endian:
//!
//! 1. target parameters `θ`: width count, the widths, then the values in
//!    [`FlatParams`] order;
//! 2. online parameters `w`, same block format;
//! 3. optimizer state: step counter `i`, element count `n`, `n` values of
//!    `m`, `n` values of `v`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::FlatParams;
use crate::optim::OptimizerState;
use crate::rl::AgentParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layer_widths: Vec<usize>,
    pub agent: AgentParams,
    pub opt_state: OptimizerState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.agent
            .theta
            .write_to(&self.layer_widths, &mut out)
            .and_then(|_| self.agent.w.write_to(&self.layer_widths, &mut out))
            .and_then(|_| self.opt_state.write_to(&mut out))
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let (widths, theta) = FlatParams::read_from(&mut bytes)?;
        let (widths_w, w) = FlatParams::read_from(&mut bytes)?;
        if widths != widths_w {
            return Err(Error::Malformed("target and online layouts differ".into()));
        }
        let opt_state = OptimizerState::read_from(&mut bytes)?;
        if opt_state.m.len() != theta.len() {
            return Err(Error::Malformed(
                "optimizer state length differs from parameters".into(),
            ));
        }
        if !bytes.is_empty() {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len())));
        }
        Ok(Self {
            layer_widths: widths,
            agent: AgentParams { theta, w },
            opt_state,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
