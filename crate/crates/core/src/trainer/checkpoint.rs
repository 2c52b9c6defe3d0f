//! Versioned binary container:
//!
//! ```text
//! magic "PDCKPT\0\0" | version u32 | section count u32 | sections...
//! section: name_len u32 | name utf-8 | tag u8 | payload
//!   tag 0 (f64 array): ndim u32 | dims u64 x ndim | values f64 x prod(dims)
//!   tag 1 (json):      len u64 | utf-8 bytes
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HistoryRow, TrainConfig};
use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Mlp};
use crate::perturb::NoiseState;
use crate::rl::{Agent, ControllerKind, RewardScale};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PDCKPT\0\0";
const TAG_ARRAY: u8 = 0;
const TAG_JSON: u8 = 1;

/// Controller networks by role name (`actor`, `critic`, `target_actor`,
/// `target_critic` for DDPG; `q`, `q_target` for DQN).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub kind: ControllerKind,
    pub networks: Vec<(String, Mlp)>,
    pub reward_scale: Option<RewardScale>,
}

impl AgentParams {
    pub fn from_agent(agent: &Agent) -> Self {
        let networks = match agent {
            Agent::Ddpg(a) => vec![
                ("actor".to_string(), a.actor.clone()),
                ("critic".to_string(), a.critic.clone()),
                ("target_actor".to_string(), a.target_actor.clone()),
                ("target_critic".to_string(), a.target_critic.clone()),
            ],
            Agent::Dqn(a) => vec![("q".to_string(), a.q.clone()), ("q_target".to_string(), a.q_target.clone())],
        };
        AgentParams { kind: agent.kind(), networks, reward_scale: agent.reward_scale() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub detector: DetectorModel,
    pub agent: Option<AgentParams>,
    pub final_state: NoiseState,
    pub history: Vec<HistoryRow>,
    pub featurizer_checksum: String,
}

impl Checkpoint {
    /// Number of stored controller transitions.
    pub fn transition_count(&self) -> usize {
        self.history.iter().filter(|r| r.action.is_some()).count()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut nets: Vec<(String, &Mlp)> = vec![
            ("detector.extractor".into(), &self.detector.extractor),
            ("detector.head".into(), &self.detector.head),
        ];
        if let Some(agent) = &self.agent {
            nets.extend(agent.networks.iter().map(|(n, m)| (format!("agent.{n}"), m)));
        }
        let meta = Meta {
            config: self.config.clone(),
            featurizer: self.detector.featurizer,
            featurizer_checksum: self.featurizer_checksum.clone(),
            agent_kind: self.agent.as_ref().map(|a| a.kind),
            reward_scale: self.agent.as_ref().and_then(|a| a.reward_scale),
            networks: nets
                .iter()
                .map(|(name, m)| NetMeta {
                    name: name.clone(),
                    activations: m.layers().iter().map(|l| l.activation).collect(),
                })
                .collect(),
            final_state: self.final_state,
            history: self.history.clone(),
        };
        let mut sections: Vec<(String, Payload)> = vec![("meta".into(), Payload::Json(serde_json::to_vec(&meta)?))];
        for (name, m) in &nets {
            for (i, layer) in m.layers().iter().enumerate() {
                sections.push((
                    format!("{name}.{i}.weights"),
                    Payload::Array(vec![layer.out_dim as u64, layer.in_dim as u64], layer.weights.clone()),
                ));
                sections.push((format!("{name}.{i}.bias"), Payload::Array(vec![layer.out_dim as u64], layer.bias.clone())));
            }
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for (name, payload) in &sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match payload {
                Payload::Array(dims, values) => {
                    out.push(TAG_ARRAY);
                    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
                    for d in dims {
                        out.extend_from_slice(&d.to_le_bytes());
                    }
                    for v in values {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Payload::Json(bytes) => {
                    out.push(TAG_JSON);
                    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
                    out.extend_from_slice(bytes);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let count = r.u32()? as usize;
        let mut sections = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| corrupt("section name is not utf-8"))?
                .to_string();
            let payload = match r.u8()? {
                TAG_ARRAY => {
                    let ndim = r.u32()? as usize;
                    let dims = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
                    let n = dims
                        .iter()
                        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                        .filter(|&n| n <= (bytes.len() / 8) as u64)
                        .ok_or_else(|| corrupt(format!("section {name} has implausible shape {dims:?}")))?;
                    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    Payload::Array(dims, values)
                }
                TAG_JSON => {
                    let len = r.u64()?;
                    let len = usize::try_from(len).map_err(|_| corrupt("json section too large"))?;
                    Payload::Json(r.take(len)?.to_vec())
                }
                tag => return Err(corrupt(format!("unknown section tag {tag}"))),
            };
            sections.push((name, payload));
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        assemble(sections)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    featurizer: crate::featurizer::FeaturizerConfig,
    featurizer_checksum: String,
    agent_kind: Option<ControllerKind>,
    reward_scale: Option<RewardScale>,
    networks: Vec<NetMeta>,
    final_state: NoiseState,
    history: Vec<HistoryRow>,
}

#[derive(Serialize, Deserialize)]
struct NetMeta {
    name: String,
    activations: Vec<Activation>,
}

enum Payload {
    Array(Vec<u64>, Vec<f64>),
    Json(Vec<u8>),
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("unexpected end of file at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn assemble(mut sections: Vec<(String, Payload)>) -> Result<Checkpoint> {
    let meta_pos = sections
        .iter()
        .position(|(n, p)| n == "meta" && matches!(p, Payload::Json(_)))
        .ok_or_else(|| corrupt("missing meta section"))?;
    let meta: Meta = match sections.remove(meta_pos).1 {
        Payload::Json(bytes) => serde_json::from_slice(&bytes).map_err(|e| corrupt(format!("meta: {e}")))?,
        Payload::Array(..) => unreachable!("matched above"),
    };
    let mut arrays: std::collections::BTreeMap<String, (Vec<u64>, Vec<f64>)> = std::collections::BTreeMap::new();
    for (name, payload) in sections {
        match payload {
            Payload::Array(dims, values) => {
                if arrays.insert(name.clone(), (dims, values)).is_some() {
                    return Err(corrupt(format!("duplicate section {name}")));
                }
            }
            Payload::Json(_) => return Err(corrupt(format!("unexpected json section {name}"))),
        }
    }
    let mut nets = std::collections::BTreeMap::new();
    for net in &meta.networks {
        let mut layers = Vec::with_capacity(net.activations.len());
        for (i, act) in net.activations.iter().enumerate() {
            let (wd, w) = arrays
                .remove(&format!("{}.{i}.weights", net.name))
                .ok_or_else(|| corrupt(format!("missing weights for {}.{i}", net.name)))?;
            let (bd, b) = arrays
                .remove(&format!("{}.{i}.bias", net.name))
                .ok_or_else(|| corrupt(format!("missing bias for {}.{i}", net.name)))?;
            if wd.len() != 2 || bd.len() != 1 || bd[0] != wd[0] {
                return Err(corrupt(format!("inconsistent shapes for {}.{i}", net.name)));
            }
            layers.push(Dense {
                in_dim: wd[1] as usize,
                out_dim: wd[0] as usize,
                weights: w,
                bias: b,
                activation: *act,
            });
        }
        let mlp = Mlp::from_layers(layers).map_err(|e| corrupt(format!("{}: {e}", net.name)))?;
        nets.insert(net.name.clone(), mlp);
    }
    if let Some(extra) = arrays.keys().next() {
        return Err(corrupt(format!("unreferenced section {extra}")));
    }
    let mut take = |name: &str| nets.remove(name).ok_or_else(|| corrupt(format!("missing network {name}")));
    let detector = DetectorModel::from_parts(take("detector.extractor")?, take("detector.head")?, meta.featurizer)
        .map_err(|e| corrupt(e.to_string()))?;
    let agent = match meta.agent_kind {
        None => None,
        Some(kind) => {
            let roles: &[&str] = match kind {
                ControllerKind::Ddpg => &["actor", "critic", "target_actor", "target_critic"],
                ControllerKind::Dqn => &["q", "q_target"],
            };
            let networks = roles
                .iter()
                .map(|r| Ok((r.to_string(), take(&format!("agent.{r}"))?)))
                .collect::<Result<Vec<_>>>()?;
            Some(AgentParams { kind, networks, reward_scale: meta.reward_scale })
        }
    };
    if let Some(extra) = nets.keys().next() {
        return Err(corrupt(format!("unexpected network {extra}")));
    }
    Ok(Checkpoint {
        config: meta.config,
        detector,
        agent,
        final_state: meta.final_state,
        history: meta.history,
        featurizer_checksum: meta.featurizer_checksum,
    })
}
