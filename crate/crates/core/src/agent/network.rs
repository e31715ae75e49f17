use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distribution::ComposedDistribution;
use super::features::{nonspatial_width, FeatureBatch, INVENTORY_WIDTH};
use crate::env::items::TILE_KINDS;
use crate::env::{Head, HEAD_SIZES};
use crate::error::{Error, Result};
use crate::nn::{ConvGeometry, Conv3x3, Linear, LstmCell, ParameterSet, RealArray, ResidualBlock, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Residual,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub encoder: EncoderKind,
    pub residual_blocks: usize,
    pub convs_per_block: usize,
    pub channels: usize,
    /// Width of the dense layer after the spatial encoder.
    pub spatial_units: usize,
    pub nonspatial_units: [usize; 2],
    pub hidden: usize,
    pub inventory_units: [usize; 2],
    /// Feed an inventory sub-network into the craft and smelt heads.
    pub craft_subnet: bool,
    pub head_sizes: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Residual,
            residual_blocks: 2,
            convs_per_block: 2,
            channels: 16,
            spatial_units: 64,
            nonspatial_units: [64, 32],
            hidden: 64,
            inventory_units: [64, 32],
            craft_subnet: true,
            head_sizes: HEAD_SIZES.to_vec(),
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head_sizes != HEAD_SIZES {
            return Err(Error::config(format!(
                "architecture.head_sizes {:?} does not match the environment heads {:?}",
                self.head_sizes, HEAD_SIZES
            )));
        }
        let widths = [
            ("architecture.spatial_units", self.spatial_units),
            ("architecture.hidden", self.hidden),
            ("architecture.nonspatial_units", self.nonspatial_units[0].min(self.nonspatial_units[1])),
            ("architecture.inventory_units", self.inventory_units[0].min(self.inventory_units[1])),
        ];
        for (key, w) in widths {
            if w == 0 {
                return Err(Error::config(format!("{key} must be positive")));
            }
        }
        if self.encoder == EncoderKind::Residual && (self.channels == 0 || self.convs_per_block == 0) {
            return Err(Error::config("architecture.channels and convs_per_block must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Actor,
    Critic,
    /// One trunk with both policy heads and a value head.
    Shared,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Actor => "actor",
            Role::Critic => "critic",
            Role::Shared => "shared",
        }
    }

    pub fn has_policy(self) -> bool {
        self != Role::Critic
    }

    pub fn has_value(self) -> bool {
        self != Role::Actor
    }
}

/// LSTM `(h, c)` for a batch, each `batch × hidden` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub batch: usize,
    pub hidden: usize,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            batch,
            hidden,
            h: vec![0.0; batch * hidden],
            c: vec![0.0; batch * hidden],
        }
    }

    pub fn stack(parts: &[&RecurrentState]) -> Result<Self> {
        let hidden = parts.first().map_or(0, |p| p.hidden);
        let mut out = RecurrentState::zeros(0, hidden);
        for p in parts {
            if p.hidden != hidden {
                return Err(Error::config("cannot stack recurrent states of different widths"));
            }
            out.batch += p.batch;
            out.h.extend_from_slice(&p.h);
            out.c.extend_from_slice(&p.c);
        }
        Ok(out)
    }

    pub fn row(&self, b: usize) -> RecurrentState {
        let r = b * self.hidden..(b + 1) * self.hidden;
        RecurrentState {
            batch: 1,
            hidden: self.hidden,
            h: self.h[r.clone()].to_vec(),
            c: self.c[r].to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
enum SpatialEncoder {
    Residual {
        stem: Conv3x3,
        blocks: Vec<ResidualBlock>,
        fc: Linear,
    },
    Mlp {
        fc: Linear,
    },
}

#[derive(Debug, Clone)]
struct Layers {
    spatial: SpatialEncoder,
    nonspatial: [Linear; 2],
    lstm: LstmCell,
    inventory: Option<[Linear; 2]>,
    heads: Vec<Linear>,
    value: Option<Linear>,
}

/// Tape handles produced by a sequence forward pass.
#[derive(Debug, Clone)]
pub struct SequenceOutput {
    /// Per-head log-probabilities, `rows × head size`.
    pub log_probs: Vec<Var>,
    /// `rows × 1`.
    pub values: Option<Var>,
    pub final_h: Var,
    pub final_c: Var,
}

/// Output of a single inference step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub dist: Option<ComposedDistribution>,
    /// Per-head log-probabilities exactly as computed by the network.
    pub log_probs: Option<Vec<Vec<f64>>>,
    pub value: Option<f64>,
    pub state: RecurrentState,
}

/// Encoder + LSTM trunk with policy heads, a value head or both.
#[derive(Debug, Clone)]
pub struct Network {
    role: Role,
    arch: ArchConfig,
    view_radius: usize,
    layers: Layers,
    params: ParameterSet,
}

pub type ActorNetwork = Network;
pub type CriticNetwork = Network;

fn is_inventory_head(h: usize) -> bool {
    h == Head::Craft.index() || h == Head::Smelt.index()
}

impl Network {
    fn layers(role: Role, arch: &ArchConfig, view_radius: usize) -> Layers {
        let p = role.name();
        let side = 2 * view_radius + 1;
        let cells = side * side;
        let spatial = match arch.encoder {
            EncoderKind::Residual => {
                let geom = ConvGeometry {
                    channels_in: TILE_KINDS,
                    channels_out: arch.channels,
                    height: side,
                    width: side,
                };
                SpatialEncoder::Residual {
                    stem: Conv3x3::new(format!("{p}/spatial.stem"), geom),
                    blocks: (0..arch.residual_blocks)
                        .map(|i| {
                            ResidualBlock::new(
                                format!("{p}/spatial.block{i}"),
                                arch.channels,
                                side,
                                side,
                                arch.convs_per_block,
                            )
                        })
                        .collect(),
                    fc: Linear::new(format!("{p}/spatial.fc"), arch.channels * cells, arch.spatial_units),
                }
            }
            EncoderKind::Mlp => SpatialEncoder::Mlp {
                fc: Linear::new(format!("{p}/spatial.fc"), TILE_KINDS * cells, arch.spatial_units),
            },
        };
        let [n0, n1] = arch.nonspatial_units;
        let nonspatial = [
            Linear::new(format!("{p}/nonspatial.fc0"), nonspatial_width(), n0),
            Linear::new(format!("{p}/nonspatial.fc1"), n0, n1),
        ];
        let lstm = LstmCell::new(format!("{p}/lstm"), arch.spatial_units + n1, arch.hidden);
        let inventory = (role.has_policy() && arch.craft_subnet).then(|| {
            let [i0, i1] = arch.inventory_units;
            [
                Linear::new(format!("{p}/inventory.fc0"), INVENTORY_WIDTH, i0),
                Linear::new(format!("{p}/inventory.fc1"), i0, i1),
            ]
        });
        let heads = if role.has_policy() {
            arch.head_sizes
                .iter()
                .enumerate()
                .map(|(h, size)| {
                    let extra = if inventory.is_some() && is_inventory_head(h) {
                        arch.inventory_units[1]
                    } else {
                        0
                    };
                    Linear::new(format!("{p}/head.{}", crate::env::HEADS[h].name()), arch.hidden + extra, *size)
                })
                .collect()
        } else {
            Vec::new()
        };
        let value = role
            .has_value()
            .then(|| Linear::new(format!("{p}/value"), arch.hidden, 1));
        Layers {
            spatial,
            nonspatial,
            lstm,
            inventory,
            heads,
            value,
        }
    }

    /// Freshly initialized network.
    pub fn new(role: Role, arch: &ArchConfig, view_radius: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layers = Self::layers(role, arch, view_radius);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        match &layers.spatial {
            SpatialEncoder::Residual { stem, blocks, fc } => {
                stem.init(&mut params, &mut rng, 1.0)?;
                for b in blocks {
                    b.init(&mut params, &mut rng)?;
                }
                fc.init(&mut params, &mut rng, 1.0)?;
            }
            SpatialEncoder::Mlp { fc } => fc.init(&mut params, &mut rng, 1.0)?,
        }
        for l in &layers.nonspatial {
            l.init(&mut params, &mut rng, 1.0)?;
        }
        layers.lstm.init(&mut params, &mut rng)?;
        if let Some(inv) = &layers.inventory {
            for l in inv {
                l.init(&mut params, &mut rng, 1.0)?;
            }
        }
        // small policy logits keep the initial policy close to uniform
        for h in &layers.heads {
            h.init(&mut params, &mut rng, 0.01)?;
        }
        if let Some(v) = &layers.value {
            v.init(&mut params, &mut rng, 1.0)?;
        }
        Ok(Self {
            role,
            arch: arch.clone(),
            view_radius,
            layers,
            params,
        })
    }

    /// Wraps existing parameters, checking names and shapes against the architecture.
    pub fn from_params(role: Role, arch: &ArchConfig, view_radius: usize, params: ParameterSet) -> Result<Self> {
        let reference = Self::new(role, arch, view_radius, 0)?;
        let expected: Vec<&str> = reference.params.names().collect();
        let got: Vec<&str> = params.names().collect();
        if expected != got {
            return Err(Error::config(format!(
                "parameters do not match the {} architecture",
                role.name()
            )));
        }
        for name in expected {
            let a = reference.params.value(name)?.shape();
            let b = params.value(name)?.shape();
            if a != b {
                return Err(Error::config(format!(
                    "parameter {name} has shape {b:?}, architecture expects {a:?}"
                )));
            }
        }
        Ok(Self { params, ..reference })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn view_radius(&self) -> usize {
        self.view_radius
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    pub fn scope(&self) -> &'static str {
        self.role.name()
    }

    pub fn initial_state(&self, batch: usize) -> RecurrentState {
        RecurrentState::zeros(batch, self.arch.hidden)
    }

    /// Names of the head layer weights, in head order.
    pub fn head_layer(&self, head: usize) -> Option<&Linear> {
        self.layers.heads.get(head)
    }

    pub fn value_layer(&self) -> Option<&Linear> {
        self.layers.value.as_ref()
    }

    /// Records a forward pass over a time-major batch on `tape`.
    pub fn forward(&self, tape: &mut Tape, feats: &FeatureBatch, state: &RecurrentState) -> Result<SequenceOutput> {
        let scope = self.scope();
        let p = &self.params;
        let (steps, batch) = (feats.steps, feats.batch);
        let rows = steps * batch;
        if rows == 0 {
            return Err(Error::config("forward: empty observation sequence"));
        }
        if state.batch != batch || state.hidden != self.arch.hidden {
            return Err(Error::config(format!(
                "forward: recurrent state is {}x{}, expected {batch}x{}",
                state.batch, state.hidden, self.arch.hidden
            )));
        }
        let spatial_in = tape.input(rows, feats.spatial.len() / rows.max(1), feats.spatial.clone())?;
        let spatial = match &self.layers.spatial {
            SpatialEncoder::Residual { stem, blocks, fc } => {
                if tape.shape(spatial_in).1 != stem.geom.channels_in * stem.geom.height * stem.geom.width {
                    return Err(Error::config("forward: spatial features do not match the view size"));
                }
                let mut x = stem.forward(tape, scope, p, spatial_in)?;
                for b in blocks {
                    x = b.forward(tape, scope, p, x)?;
                }
                let x = tape.relu(x);
                let x = fc.forward(tape, scope, p, x)?;
                tape.relu(x)
            }
            SpatialEncoder::Mlp { fc } => {
                let x = fc.forward(tape, scope, p, spatial_in)?;
                tape.relu(x)
            }
        };
        let ns_in = tape.input(rows, feats.nonspatial.len() / rows, feats.nonspatial.clone())?;
        let mut ns = ns_in;
        for l in &self.layers.nonspatial {
            let y = l.forward(tape, scope, p, ns)?;
            ns = tape.relu(y);
        }
        let joined = tape.concat_cols(&[spatial, ns])?;
        let lstm = &self.layers.lstm;
        if tape.shape(joined).1 != lstm.inputs {
            return Err(Error::config("forward: encoder output does not match the LSTM input"));
        }
        let gx = lstm.project_inputs(tape, scope, p, joined)?;
        let hidden = self.arch.hidden;
        let mut h = tape.input(batch, hidden, state.h.clone())?;
        let mut c = tape.input(batch, hidden, state.c.clone())?;
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let g = tape.slice_rows(gx, t * batch, batch)?;
            let (h2, c2) = lstm.step_projected(tape, scope, p, g, h, c)?;
            h = h2;
            c = c2;
            outs.push(h);
        }
        let core = if outs.len() == 1 { outs[0] } else { tape.concat_rows(&outs)? };

        let inventory = match &self.layers.inventory {
            Some(inv) => {
                let x = tape.input(rows, INVENTORY_WIDTH, feats.inventory.clone())?;
                let a = inv[0].forward(tape, scope, p, x)?;
                let a = tape.relu(a);
                let b = inv[1].forward(tape, scope, p, a)?;
                Some(tape.relu(b))
            }
            None => None,
        };
        let mut log_probs = Vec::with_capacity(self.layers.heads.len());
        for (i, head) in self.layers.heads.iter().enumerate() {
            let x = match inventory {
                Some(inv) if is_inventory_head(i) => tape.concat_cols(&[core, inv])?,
                _ => core,
            };
            let logits = head.forward(tape, scope, p, x)?;
            log_probs.push(tape.log_softmax(logits));
        }
        let values = match &self.layers.value {
            Some(v) => Some(v.forward(tape, scope, p, core)?),
            None => None,
        };
        Ok(SequenceOutput {
            log_probs,
            values,
            final_h: h,
            final_c: c,
        })
    }

    fn final_state(&self, tape: &Tape, out: &SequenceOutput, batch: usize) -> RecurrentState {
        RecurrentState {
            batch,
            hidden: self.arch.hidden,
            h: tape.value(out.final_h).to_vec(),
            c: tape.value(out.final_c).to_vec(),
        }
    }

    /// Per-row policy distributions (time-major) and the final recurrent state.
    pub fn actor_forward(
        &self,
        feats: &FeatureBatch,
        state: &RecurrentState,
    ) -> Result<(Vec<ComposedDistribution>, RecurrentState)> {
        if !self.role.has_policy() {
            return Err(Error::usage("actor_forward on a network without policy heads"));
        }
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, feats, state)?;
        let dists = distributions(&tape, &out.log_probs, feats.rows())?;
        Ok((dists, self.final_state(&tape, &out, feats.batch)))
    }

    /// Per-row values (time-major) and the final recurrent state.
    pub fn critic_forward(&self, feats: &FeatureBatch, state: &RecurrentState) -> Result<(Vec<f64>, RecurrentState)> {
        let Some(_) = &self.layers.value else {
            return Err(Error::usage("critic_forward on a network without a value head"));
        };
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, feats, state)?;
        let values = tape.value(out.values.expect("value head present")).to_vec();
        Ok((values, self.final_state(&tape, &out, feats.batch)))
    }

    /// One observation through the network.
    pub fn step(&self, feats: &FeatureBatch, state: &RecurrentState) -> Result<StepOutput> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, feats, state)?;
        let (dist, log_probs) = if out.log_probs.is_empty() {
            (None, None)
        } else {
            let lp: Vec<Vec<f64>> = out.log_probs.iter().map(|v| tape.value(*v)[..tape.shape(*v).1].to_vec()).collect();
            (Some(ComposedDistribution::from_log_probs(lp.clone())?), Some(lp))
        };
        Ok(StepOutput {
            dist,
            log_probs,
            value: out.values.map(|v| tape.value(v)[0]),
            state: self.final_state(&tape, &out, feats.batch),
        })
    }
}

/// Reads per-row distributions off the tape.
pub fn distributions(tape: &Tape, log_probs: &[Var], rows: usize) -> Result<Vec<ComposedDistribution>> {
    (0..rows)
        .map(|r| {
            let heads = log_probs
                .iter()
                .map(|v| {
                    let (_, cols) = tape.shape(*v);
                    tape.value(*v)[r * cols..(r + 1) * cols].to_vec()
                })
                .collect();
            ComposedDistribution::from_log_probs(heads)
        })
        .collect()
}

/// Overwrites a parameter with zeros.
pub fn zero_parameter(params: &mut ParameterSet, name: &str) -> Result<()> {
    let shape = params.value(name)?.shape().to_vec();
    *params.value_mut(name)? = RealArray::zeros(&shape);
    Ok(())
}
