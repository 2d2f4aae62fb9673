//! Policy checkpoints.
//!
//! ```text
//! "B3CP" | version u32 | block count u32
//! per block: name (u32 len + utf8) | value count u32 | values as f64 LE
//! crc32 of everything above, u32 LE
//! ```
//!
//! A policy set is stored as `agents = [n]` and, per agent `i`,
//! `policy{i}.shape = [hidden act, output act, widths…]` and
//! `policy{i}.params`.

use std::path::Path;

use super::policy::PolicySet;
use crate::codec::{utf8, Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::nn::{Activation, Mlp};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"B3CP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub blocks: Vec<Block>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.blocks.push(Block {
            name: name.into(),
            values,
        });
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.blocks.iter().find(|b| b.name == name).map(|b| b.values.as_slice())
    }

    fn require(&self, name: &str) -> std::result::Result<&[f64], FormatError> {
        self.get(name)
            .ok_or_else(|| FormatError::Malformed(format!("missing block `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(&CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        w.u32(self.blocks.len() as u32);
        for b in &self.blocks {
            w.str(&b.name);
            w.u32(b.values.len() as u32);
            w.f64s(&b.values);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, &CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let count = r.u32()? as usize;
        let mut raw = Vec::new();
        for _ in 0..count {
            let name = r.str_bytes()?;
            let n = r.u32()? as usize;
            raw.push((name, r.f64s(n)?));
        }
        let trailing = r.remaining();
        Reader::verify_checksum(bytes)?;
        if trailing != 0 {
            return Err(FormatError::Malformed(format!("{trailing} trailing bytes after last block")).into());
        }
        let blocks = raw
            .into_iter()
            .map(|(name, values)| {
                Ok(Block {
                    name: utf8(name, "block name")?,
                    values,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Checkpoint { blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_policies(policies: &PolicySet) -> Self {
        let mut c = Checkpoint::default();
        c.push("agents", vec![policies.n_agents() as f64]);
        for (i, net) in policies.agents().iter().enumerate() {
            let mut shape = vec![
                net.hidden_activation().code() as f64,
                net.output_activation().code() as f64,
            ];
            shape.extend(net.layer_dims().iter().map(|&d| d as f64));
            c.push(format!("policy{i}.shape"), shape);
            c.push(format!("policy{i}.params"), net.params().to_vec());
        }
        c
    }

    pub fn policies(&self) -> Result<PolicySet> {
        let malformed = |m: String| Error::Format(FormatError::Malformed(m));
        let n = as_count(self.require("agents")?.first().copied().unwrap_or(-1.0))
            .ok_or_else(|| malformed("`agents` is not a count".into()))?;
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let shape = self.require(&format!("policy{i}.shape"))?;
            let codes: Option<Vec<usize>> = shape.iter().map(|&v| as_count(v)).collect();
            let codes = codes.filter(|c| c.len() >= 4).ok_or_else(|| malformed(format!("bad shape for policy {i}")))?;
            let act = |c: usize| {
                u8::try_from(c)
                    .ok()
                    .and_then(Activation::from_code)
                    .ok_or_else(|| malformed(format!("unknown activation code {c}")))
            };
            let mut net = Mlp::new(&codes[2..], act(codes[0])?, act(codes[1])?).map_err(|e| malformed(e.to_string()))?;
            net.set_params(self.require(&format!("policy{i}.params"))?)
                .map_err(|e| malformed(e.to_string()))?;
            agents.push(net);
        }
        PolicySet::from_agents(agents).map_err(|e| malformed(e.to_string()))
    }
}

fn as_count(v: f64) -> Option<usize> {
    (v >= 0.0 && v.fract() == 0.0 && v < 1e9).then_some(v as usize)
}

pub fn save_policies(policies: &PolicySet, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::from_policies(policies).save(path)
}

pub fn load_policies(path: impl AsRef<Path>) -> Result<PolicySet> {
    Checkpoint::load(path)?.policies()
}
