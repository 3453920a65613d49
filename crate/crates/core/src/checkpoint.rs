//! Versioned binary parameter files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "HASACCKP"
//! version  u32      FORMAT_VERSION
//! count    u32      number of tensors
//! per tensor:
//!   name_len u32, name (utf-8)
//!   ndim     u32, dims u64 x ndim
//!   data     f64 x prod(dims)
//! ```
//!
//! Networks are stored as `{prefix}/layer{k}/weights` (`in x out`) and
//! `{prefix}/layer{k}/bias`; Adam states as `{prefix}/m/...`, `{prefix}/v/...`
//! and `{prefix}/meta = [step_count, beta1, beta2, eps]`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{AdamState, Dense, Mlp, Policy};
use crate::sac::AgentParams;

pub const MAGIC: &[u8; 8] = b"HASACCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint(msg.into()))
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = t;
        } else {
            self.entries.push((name, t));
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    /// `(name, shape)` for every tensor, in file order.
    pub fn manifest(&self) -> Vec<(&str, &[usize])> {
        self.entries
            .iter()
            .map(|(n, t)| (n.as_str(), t.shape.as_slice()))
            .collect()
    }

    pub fn prefixes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (n, _) in &self.entries {
            let p = n.split("/layer").next().unwrap_or(n).to_string();
            if !n.contains("/m/")
                && !n.contains("/v/")
                && !n.ends_with("/meta")
                && !out.contains(&p)
            {
                out.push(p);
            }
        }
        out
    }

    pub fn add_mlp(&mut self, prefix: &str, net: &Mlp) {
        for (k, l) in net.layers().iter().enumerate() {
            self.insert(
                format!("{prefix}/layer{k}/weights"),
                Tensor {
                    shape: vec![l.in_dim(), l.out_dim()],
                    data: l.weights.iter().copied().collect(),
                },
            );
            self.insert(
                format!("{prefix}/layer{k}/bias"),
                Tensor {
                    shape: vec![l.out_dim()],
                    data: l.bias.to_vec(),
                },
            );
        }
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let mut layers = Vec::new();
        let mut k = 0;
        while let Ok(w) = self.get(&format!("{prefix}/layer{k}/weights")) {
            let b = self.get(&format!("{prefix}/layer{k}/bias"))?;
            if w.shape.len() != 2 || b.shape.len() != 1 || b.shape[0] != w.shape[1] {
                return err(format!(
                    "{prefix}/layer{k}: inconsistent weight/bias shapes"
                ));
            }
            let weights = Array2::from_shape_vec((w.shape[0], w.shape[1]), w.data.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            layers.push(Dense {
                weights,
                bias: Array1::from(b.data.clone()),
            });
            k += 1;
        }
        if layers.is_empty() {
            return err(format!("no network stored under `{prefix}`"));
        }
        Mlp::from_layers(layers).map_err(|e| Error::Checkpoint(format!("{prefix}: {e}")))
    }

    /// Loads a network and checks it against the expected layer widths.
    pub fn mlp_with_shape(&self, prefix: &str, expected: &[usize]) -> Result<Mlp> {
        let net = self.mlp(prefix)?;
        if net.sizes() != expected {
            return err(format!(
                "shape mismatch for `{prefix}`: file has {:?}, expected {:?}",
                net.sizes(),
                expected
            ));
        }
        Ok(net)
    }

    pub fn add_adam(&mut self, prefix: &str, st: &AdamState) {
        self.add_mlp(&format!("{prefix}/m"), &st.first_moment);
        self.add_mlp(&format!("{prefix}/v"), &st.second_moment);
        self.insert(
            format!("{prefix}/meta"),
            Tensor {
                shape: vec![4],
                data: vec![st.step_count as f64, st.beta1, st.beta2, st.eps],
            },
        );
    }

    pub fn adam(&self, prefix: &str, params: &Mlp) -> Result<AdamState> {
        let m = self.mlp_with_shape(&format!("{prefix}/m"), &params.sizes())?;
        let v = self.mlp_with_shape(&format!("{prefix}/v"), &params.sizes())?;
        let meta = self.get(&format!("{prefix}/meta"))?;
        if meta.data.len() != 4 {
            return err(format!("{prefix}/meta must hold 4 values"));
        }
        Ok(AdamState {
            first_moment: m,
            second_moment: v,
            step_count: meta.data[0] as u64,
            beta1: meta.data[1],
            beta2: meta.data[2],
            eps: meta.data[3],
        })
    }

    pub fn add_policy(&mut self, prefix: &str, policy: &Policy, opt: &AdamState) {
        self.add_mlp(prefix, &policy.net);
        self.add_adam(&format!("{prefix}.adam"), opt);
    }

    /// Policy and optimizer state, which must match `like`'s shape.
    pub fn policy_like(&self, prefix: &str, like: &Policy) -> Result<(Policy, AdamState)> {
        let net = self.mlp_with_shape(prefix, &like.net.sizes())?;
        let opt = self.adam(&format!("{prefix}.adam"), &net)?;
        Ok((Policy::from_net(net)?, opt))
    }

    pub fn add_agent(&mut self, prefix: &str, a: &AgentParams) {
        self.add_policy(&format!("{prefix}/policy"), &a.policy, &a.policy_opt);
        for (name, net, opt) in [
            ("q1", &a.q1, &a.q1_opt),
            ("q2", &a.q2, &a.q2_opt),
            ("value", &a.value, &a.value_opt),
        ] {
            self.add_mlp(&format!("{prefix}/{name}"), net);
            self.add_adam(&format!("{prefix}/{name}.adam"), opt);
        }
        self.add_mlp(&format!("{prefix}/value_target"), &a.value_target);
    }

    pub fn agent(&self, prefix: &str) -> Result<AgentParams> {
        let net = self.mlp(&format!("{prefix}/policy"))?;
        let policy_opt = self.adam(&format!("{prefix}/policy.adam"), &net)?;
        let load = |name: &str| -> Result<(Mlp, AdamState)> {
            let n = self.mlp(&format!("{prefix}/{name}"))?;
            let o = self.adam(&format!("{prefix}/{name}.adam"), &n)?;
            Ok((n, o))
        };
        let (q1, q1_opt) = load("q1")?;
        let (q2, q2_opt) = load("q2")?;
        let (value, value_opt) = load("value")?;
        let value_target =
            self.mlp_with_shape(&format!("{prefix}/value_target"), &value.sizes())?;
        Ok(AgentParams {
            policy: Policy::from_net(net)?,
            q1,
            q2,
            value,
            value_target,
            policy_opt,
            q1_opt,
            q2_opt,
            value_opt,
        })
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for d in &t.shape {
                out.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in &t.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    /// Parses a whole file image; nothing is returned unless every byte checks out.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = bytes;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if rd.len() < n {
                return err(format!("truncated file while reading {what}"));
            }
            let (head, rest) = rd.split_at(n);
            rd = rest;
            Ok(head)
        };
        if take(8, "magic")? != MAGIC {
            return err("not a checkpoint file (bad magic)");
        }
        let version = u32::from_le_bytes(take(4, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return err(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            ));
        }
        let count = u32::from_le_bytes(take(4, "tensor count")?.try_into().unwrap());
        let mut ck = Checkpoint::new();
        for i in 0..count {
            let nlen = u32::from_le_bytes(take(4, "name length")?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(nlen, "name")?)
                .map_err(|_| Error::Checkpoint(format!("tensor {i}: name is not utf-8")))?
                .to_string();
            let ndim = u32::from_le_bytes(take(4, "rank")?.try_into().unwrap()) as usize;
            if ndim > 8 {
                return err(format!("{name}: implausible rank {ndim}"));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(8, "dims")?.try_into().unwrap()) as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?;
            let raw = take(len.checked_mul(8).unwrap_or(usize::MAX), &name)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            ck.entries.push((name, Tensor { shape, data }));
        }
        if !rd.is_empty() {
            return err(format!("{} trailing bytes after last tensor", rd.len()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            self.write_to(&mut f)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
