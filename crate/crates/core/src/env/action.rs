use rand::Rng;
use serde::{Deserialize, Serialize};

use super::items::{Item, CRAFT_OPTIONS, EQUIP_OPTIONS, SMELT_OPTIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Move,
    Turn,
    Mine,
    Craft,
    Smelt,
    Equip,
    StepMultiplier,
}

pub const HEAD_COUNT: usize = 7;

pub const HEADS: [Head; HEAD_COUNT] = [
    Head::Move,
    Head::Turn,
    Head::Mine,
    Head::Craft,
    Head::Smelt,
    Head::Equip,
    Head::StepMultiplier,
];

/// Number of choices per head, in `HEADS` order.
pub const HEAD_SIZES: [usize; HEAD_COUNT] = [
    5,
    3,
    2,
    1 + CRAFT_OPTIONS.len(),
    1 + SMELT_OPTIONS.len(),
    1 + EQUIP_OPTIONS.len(),
    4,
];

pub const STEP_MULTIPLIERS: [u32; 4] = [1, 2, 4, 8];

impl Head {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Move => "move",
            Head::Turn => "turn",
            Head::Mine => "mine",
            Head::Craft => "craft",
            Head::Smelt => "smelt",
            Head::Equip => "equip",
            Head::StepMultiplier => "step_multiplier",
        }
    }

    pub fn from_name(name: &str) -> Option<Head> {
        HEADS.iter().copied().find(|h| h.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Movement {
    #[default]
    None,
    Forward,
    Back,
    Left,
    Right,
}

/// Camera rotation quantum: one grid rotation per ±30° turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Turn {
    Left,
    #[default]
    None,
    Right,
}

impl Turn {
    pub fn degrees(self) -> i32 {
        match self {
            Turn::Left => -30,
            Turn::None => 0,
            Turn::Right => 30,
        }
    }
}

/// One value per action head. `craft`, `smelt` and `equip` hold an option
/// index (0 = inactive); `multiplier` is one of `STEP_MULTIPLIERS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComposedAction {
    pub movement: Movement,
    pub turn: Turn,
    pub mine: bool,
    pub craft: u8,
    pub smelt: u8,
    pub equip: u8,
    pub multiplier: u32,
}

impl Default for ComposedAction {
    fn default() -> Self {
        Self::noop()
    }
}

impl ComposedAction {
    pub const fn noop() -> Self {
        Self {
            movement: Movement::None,
            turn: Turn::None,
            mine: false,
            craft: 0,
            smelt: 0,
            equip: 0,
            multiplier: 1,
        }
    }

    pub fn moving(m: Movement) -> Self {
        Self {
            movement: m,
            ..Self::noop()
        }
    }

    pub fn turning(t: Turn) -> Self {
        Self {
            turn: t,
            ..Self::noop()
        }
    }

    pub fn mining() -> Self {
        Self {
            mine: true,
            ..Self::noop()
        }
    }

    pub fn crafting(item: Item) -> Self {
        let idx = CRAFT_OPTIONS.iter().position(|i| *i == item).map_or(0, |p| p + 1);
        Self {
            craft: idx as u8,
            ..Self::noop()
        }
    }

    pub fn smelting(item: Item) -> Self {
        let idx = SMELT_OPTIONS.iter().position(|i| *i == item).map_or(0, |p| p + 1);
        Self {
            smelt: idx as u8,
            ..Self::noop()
        }
    }

    pub fn equipping(item: Item) -> Self {
        let idx = EQUIP_OPTIONS.iter().position(|i| *i == item).map_or(0, |p| p + 1);
        Self {
            equip: idx as u8,
            ..Self::noop()
        }
    }

    pub fn with_multiplier(mut self, m: u32) -> Self {
        self.multiplier = m;
        self
    }

    pub fn craft_item(&self) -> Option<Item> {
        (self.craft as usize).checked_sub(1).and_then(|i| CRAFT_OPTIONS.get(i).copied())
    }

    pub fn smelt_item(&self) -> Option<Item> {
        (self.smelt as usize).checked_sub(1).and_then(|i| SMELT_OPTIONS.get(i).copied())
    }

    pub fn equip_item(&self) -> Option<Item> {
        (self.equip as usize).checked_sub(1).and_then(|i| EQUIP_OPTIONS.get(i).copied())
    }

    /// Per-head choice indices in `HEADS` order.
    pub fn to_indices(&self) -> [usize; HEAD_COUNT] {
        [
            self.movement as usize,
            self.turn as usize,
            self.mine as usize,
            self.craft as usize,
            self.smelt as usize,
            self.equip as usize,
            STEP_MULTIPLIERS
                .iter()
                .position(|m| *m == self.multiplier)
                .unwrap_or(0),
        ]
    }

    pub fn from_indices(idx: &[usize]) -> Result<Self> {
        if idx.len() != HEAD_COUNT {
            return Err(Error::usage(format!("expected {HEAD_COUNT} head indices, got {}", idx.len())));
        }
        for (h, (i, size)) in idx.iter().zip(HEAD_SIZES).enumerate() {
            if *i >= size {
                return Err(Error::usage(format!(
                    "index {i} out of range for head `{}` of size {size}",
                    HEADS[h].name()
                )));
            }
        }
        let movement = [
            Movement::None,
            Movement::Forward,
            Movement::Back,
            Movement::Left,
            Movement::Right,
        ][idx[0]];
        let turn = [Turn::Left, Turn::None, Turn::Right][idx[1]];
        Ok(Self {
            movement,
            turn,
            mine: idx[2] == 1,
            craft: idx[3] as u8,
            smelt: idx[4] as u8,
            equip: idx[5] as u8,
            multiplier: STEP_MULTIPLIERS[idx[6]],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !STEP_MULTIPLIERS.contains(&self.multiplier) {
            return Err(Error::usage(format!("step multiplier {} not in {{1,2,4,8}}", self.multiplier)));
        }
        if self.craft as usize >= HEAD_SIZES[3] || self.smelt as usize >= HEAD_SIZES[4] || self.equip as usize >= HEAD_SIZES[5] {
            return Err(Error::usage("item head index out of range"));
        }
        Ok(())
    }

    /// Heads other than the step multiplier that are doing something.
    pub fn active_heads(&self) -> Vec<Head> {
        let mut out = Vec::new();
        if self.movement != Movement::None {
            out.push(Head::Move);
        }
        if self.turn != Turn::None {
            out.push(Head::Turn);
        }
        if self.mine {
            out.push(Head::Mine);
        }
        if self.craft != 0 {
            out.push(Head::Craft);
        }
        if self.smelt != 0 {
            out.push(Head::Smelt);
        }
        if self.equip != 0 {
            out.push(Head::Equip);
        }
        out
    }

    pub fn is_noop(&self) -> bool {
        self.active_heads().is_empty()
    }

    /// Resets `head` to its inactive value.
    pub fn clear_head(&mut self, head: Head) {
        match head {
            Head::Move => self.movement = Movement::None,
            Head::Turn => self.turn = Turn::None,
            Head::Mine => self.mine = false,
            Head::Craft => self.craft = 0,
            Head::Smelt => self.smelt = 0,
            Head::Equip => self.equip = 0,
            Head::StepMultiplier => self.multiplier = 1,
        }
    }

    /// Same action ignoring the step multiplier.
    pub fn same_atomic(&self, other: &ComposedAction) -> bool {
        self.with_multiplier(1) == other.with_multiplier(1)
    }

    /// Uniform draw over the whole composed space.
    pub fn random(rng: &mut impl Rng) -> Self {
        let idx: Vec<usize> = HEAD_SIZES.iter().map(|s| rng.gen_range(0..*s)).collect();
        Self::from_indices(&idx).expect("indices drawn in range")
    }
}
