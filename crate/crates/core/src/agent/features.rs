use crate::env::items::{EQUIP_OPTIONS, ITEM_COUNT, TILE_KINDS};
use crate::env::{Observation, HEAD_COUNT, HEAD_SIZES};

/// Inventory counts are clipped at this value before scaling into [0, 1].
const INVENTORY_CAP: f64 = 4.0;

pub fn spatial_width(view_radius: usize) -> usize {
    let side = 2 * view_radius + 1;
    TILE_KINDS * side * side
}

pub fn nonspatial_width() -> usize {
    ITEM_COUNT + 1 + EQUIP_OPTIONS.len() + 1 + HEAD_SIZES.iter().sum::<usize>()
}

pub const INVENTORY_WIDTH: usize = ITEM_COUNT;

/// Channel-major one-hot of the egocentric view (`kinds × side × side`).
pub fn spatial_features(obs: &Observation, out: &mut Vec<f64>) {
    let cells = obs.view.len();
    let start = out.len();
    out.resize(start + TILE_KINDS * cells, 0.0);
    for (i, tile) in obs.view.iter().enumerate() {
        out[start + tile.index() * cells + i] = 1.0;
    }
}

pub fn inventory_features(obs: &Observation, out: &mut Vec<f64>) {
    out.extend(obs.inventory.iter().map(|c| (*c as f64).min(INVENTORY_CAP) / INVENTORY_CAP));
}

/// Inventory, equipped tool, time remaining and the previous action (one-hot per head).
pub fn nonspatial_features(obs: &Observation, out: &mut Vec<f64>) {
    inventory_features(obs, out);
    let mut equip = [0.0; 1 + EQUIP_OPTIONS.len()];
    let slot = obs
        .equipped
        .and_then(|e| EQUIP_OPTIONS.iter().position(|t| *t == e))
        .map_or(0, |p| p + 1);
    equip[slot] = 1.0;
    out.extend_from_slice(&equip);
    out.push(obs.time_remaining);
    let idx = obs.prev_action.to_indices();
    for h in 0..HEAD_COUNT {
        let start = out.len();
        out.resize(start + HEAD_SIZES[h], 0.0);
        out[start + idx[h]] = 1.0;
    }
}

/// Time-major feature matrices for `steps × batch` observations.
#[derive(Debug, Clone, Default)]
pub struct FeatureBatch {
    pub steps: usize,
    pub batch: usize,
    pub spatial: Vec<f64>,
    pub nonspatial: Vec<f64>,
    pub inventory: Vec<f64>,
}

impl FeatureBatch {
    /// `observations[t][b]`.
    pub fn from_sequences(observations: &[Vec<&Observation>]) -> Self {
        let steps = observations.len();
        let batch = observations.first().map_or(0, Vec::len);
        let mut out = FeatureBatch {
            steps,
            batch,
            ..Default::default()
        };
        for row in observations {
            for obs in row {
                out.push(obs);
            }
        }
        out
    }

    pub fn single(obs: &Observation) -> Self {
        let mut out = FeatureBatch {
            steps: 1,
            batch: 1,
            ..Default::default()
        };
        out.push(obs);
        out
    }

    fn push(&mut self, obs: &Observation) {
        spatial_features(obs, &mut self.spatial);
        nonspatial_features(obs, &mut self.nonspatial);
        inventory_features(obs, &mut self.inventory);
    }

    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }
}
