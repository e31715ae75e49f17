use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action::{ComposedAction, Movement, Turn};
use super::expert::raw_shortfall;
use super::items::{recipe_for, Item, Tile, ITEM_COUNT, MILESTONES, MILESTONE_COUNT, TERMINAL_MILESTONE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub grid_size: usize,
    pub tree_density: f64,
    pub stone_density: f64,
    pub iron_density: f64,
    /// Diamond-ore count relative to iron-ore count; must stay below 1.
    pub diamond_ratio: f64,
    pub max_frames: u32,
    pub view_radius: usize,
    pub lava: bool,
    pub lava_density: f64,
    /// Consecutive mining frames needed to break a tree, stone and iron-ore tile.
    pub mining_frames: [u32; 3],
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_size: 13,
            tree_density: 0.06,
            stone_density: 0.14,
            iron_density: 0.05,
            diamond_ratio: 0.25,
            max_frames: 2000,
            view_radius: 2,
            lava: false,
            lava_density: 0.02,
            mining_frames: [1, 3, 5],
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 7 {
            return Err(Error::config("env.grid_size must be at least 7"));
        }
        for (name, d) in [
            ("env.tree_density", self.tree_density),
            ("env.stone_density", self.stone_density),
            ("env.iron_density", self.iron_density),
        ] {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::config(format!(
                    "{name} must be in (0, 1]; got {d} (the item chain would be unreachable)"
                )));
            }
        }
        if !(self.diamond_ratio > 0.0 && self.diamond_ratio < 1.0) {
            return Err(Error::config("env.diamond_ratio must be in (0, 1)"));
        }
        if self.lava && !(self.lava_density > 0.0 && self.lava_density <= 1.0) {
            return Err(Error::config("env.lava_density must be in (0, 1]"));
        }
        let lava = if self.lava { self.lava_density } else { 0.0 };
        if self.tree_density + self.stone_density + self.iron_density * (1.0 + self.diamond_ratio) + lava > 0.6 {
            return Err(Error::config("env densities leave too little free space (sum > 0.6)"));
        }
        if self.max_frames == 0 {
            return Err(Error::config("env.max_frames must be positive"));
        }
        if self.mining_frames.contains(&0) {
            return Err(Error::config("env.mining_frames must all be at least 1"));
        }
        if self.view_radius == 0 || self.view_radius > 5 {
            return Err(Error::config("env.view_radius must be in 1..=5"));
        }
        Ok(())
    }

    pub fn view_side(&self) -> usize {
        2 * self.view_radius + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Facing {
    North,
    East,
    South,
    West,
}

impl Facing {
    fn from_index(i: usize) -> Facing {
        [Facing::North, Facing::East, Facing::South, Facing::West][i % 4]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn rotate(self, turn: Turn) -> Facing {
        match turn {
            Turn::None => self,
            Turn::Right => Facing::from_index(self.index() + 1),
            Turn::Left => Facing::from_index(self.index() + 3),
        }
    }

    /// (row, col) unit step.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Facing::North => (-1, 0),
            Facing::East => (0, 1),
            Facing::South => (1, 0),
            Facing::West => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneEvent {
    pub frame: u32,
    pub milestone: usize,
}

/// Full simulator state. Deterministic: equal states evolve identically.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub size: usize,
    pub grid: Vec<Tile>,
    pub position: (usize, usize),
    pub facing: Facing,
    pub inventory: [u32; ITEM_COUNT],
    pub equipped: Option<Item>,
    pub frame: u32,
    pub done: bool,
    pub dead: bool,
    pub obtained: [bool; MILESTONE_COUNT],
    pub events: Vec<MilestoneEvent>,
    pub episode_return: f64,
    pub prev_action: ComposedAction,
    pub seed: u64,
    /// Tile being mined and the consecutive frames spent on it.
    pub mining: Option<((usize, usize), u32)>,
}

impl WorldState {
    pub fn tile(&self, r: isize, c: isize) -> Tile {
        if r < 0 || c < 0 || r >= self.size as isize || c >= self.size as isize {
            Tile::Wall
        } else {
            self.grid[r as usize * self.size + c as usize]
        }
    }

    pub fn count(&self, item: Item) -> u32 {
        self.inventory[item.index()]
    }

    pub fn has(&self, item: Item) -> bool {
        self.count(item) > 0
    }

    pub fn facing_cell(&self) -> (isize, isize) {
        let (dr, dc) = self.facing.delta();
        (self.position.0 as isize + dr, self.position.1 as isize + dc)
    }

    pub fn facing_tile(&self) -> Tile {
        let (r, c) = self.facing_cell();
        self.tile(r, c)
    }

    pub fn count_tiles(&self, kind: Tile) -> usize {
        self.grid.iter().filter(|t| **t == kind).count()
    }
}

/// Agent-side view of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Egocentric window, row-major, agent at the centre facing "up".
    pub view: Vec<Tile>,
    pub view_radius: usize,
    pub inventory: [u32; ITEM_COUNT],
    pub equipped: Option<Item>,
    /// `1 - frame / max_frames`.
    pub time_remaining: f64,
    pub prev_action: ComposedAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub events: Vec<usize>,
    /// Frames consumed, i.e. atomic repetitions actually applied.
    pub frames: u32,
}

/// One JSON-lines record of the episode event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub events: Vec<MilestoneEvent>,
}

impl EpisodeLog {
    pub fn from_state(state: &WorldState) -> Self {
        Self {
            seed: state.seed,
            episode_return: state.episode_return,
            events: state.events.clone(),
        }
    }
}

/// Desk-scale crafting gridworld whose milestone chain ends in an iron pickaxe.
#[derive(Debug, Clone)]
pub struct ChainCraft {
    config: EnvConfig,
}

impl ChainCraft {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reset(&self, seed: u64) -> Result<(WorldState, Observation)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            if let Some(state) = self.generate(&mut rng, seed) {
                let obs = self.observe(&state);
                return Ok((state, obs));
            }
        }
        Err(Error::Generation(format!("no solvable map found for seed {seed}")))
    }

    fn generate(&self, rng: &mut ChaCha8Rng, seed: u64) -> Option<WorldState> {
        let n = self.config.grid_size;
        let mut grid = vec![Tile::Wall; n * n];
        let mut interior = Vec::with_capacity((n - 2) * (n - 2));
        for r in 1..n - 1 {
            for c in 1..n - 1 {
                grid[r * n + c] = Tile::Empty;
                interior.push((r, c));
            }
        }
        interior.shuffle(rng);
        let cells = interior.len() as f64;
        let count = |d: f64| ((d * cells).round() as usize).max(1);
        let iron = count(self.config.iron_density);
        let diamond = ((self.config.iron_density * self.config.diamond_ratio * cells).round() as usize)
            .min(iron.saturating_sub(1));
        let mut plan = vec![
            (Tile::Tree, count(self.config.tree_density)),
            (Tile::Stone, count(self.config.stone_density)),
            (Tile::IronOre, iron),
            (Tile::DiamondOre, diamond),
        ];
        if self.config.lava {
            plan.push((Tile::Lava, count(self.config.lava_density)));
        }
        let mut cursor = interior.iter();
        for (tile, k) in plan {
            for _ in 0..k {
                let (r, c) = *cursor.next()?;
                grid[r * n + c] = tile;
            }
        }
        let (pr, pc) = *cursor.next()?;
        let facing = Facing::from_index(rng.gen_range(0..4));
        let state = WorldState {
            size: n,
            grid,
            position: (pr, pc),
            facing,
            inventory: [0; ITEM_COUNT],
            equipped: None,
            frame: 0,
            done: false,
            dead: false,
            obtained: [false; MILESTONE_COUNT],
            events: Vec::new(),
            episode_return: 0.0,
            prev_action: ComposedAction::noop(),
            seed,
            mining: None,
        };
        let need = raw_shortfall(&state);
        let solvable = [(Tile::Tree, Item::Log), (Tile::Stone, Item::Cobblestone), (Tile::IronOre, Item::IronOre)]
            .iter()
            .all(|(t, item)| reachable_tiles(&state, *t) >= need[item.index()] as usize);
        solvable.then_some(state)
    }

    pub fn observe(&self, state: &WorldState) -> Observation {
        let r = self.config.view_radius as isize;
        let side = (2 * r + 1) as usize;
        let mut view = Vec::with_capacity(side * side);
        let (fr, fc) = state.facing.delta();
        // right-hand vector is the facing rotated clockwise
        let (rr, rc) = (fc, -fr);
        for vy in 0..side as isize {
            for vx in 0..side as isize {
                let ahead = r - vy;
                let right = vx - r;
                let wr = state.position.0 as isize + ahead * fr + right * rr;
                let wc = state.position.1 as isize + ahead * fc + right * rc;
                view.push(state.tile(wr, wc));
            }
        }
        Observation {
            view,
            view_radius: self.config.view_radius,
            inventory: state.inventory,
            equipped: state.equipped,
            time_remaining: 1.0 - state.frame as f64 / self.config.max_frames as f64,
            prev_action: state.prev_action,
        }
    }

    /// Applies `action` `action.multiplier` times (stopping early when the episode ends).
    pub fn step(&self, state: &mut WorldState, action: &ComposedAction) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::usage("step called on a finished episode"));
        }
        action.validate()?;
        let mut reward = 0.0;
        let mut events = Vec::new();
        let mut frames = 0;
        for _ in 0..action.multiplier {
            if state.done {
                break;
            }
            self.apply_atomic(state, action);
            frames += 1;
            state.frame += 1;
            for m in &MILESTONES {
                if !state.obtained[m.index] && state.has(m.item) {
                    state.obtained[m.index] = true;
                    state.events.push(MilestoneEvent {
                        frame: state.frame,
                        milestone: m.index,
                    });
                    events.push(m.index);
                    reward += m.reward;
                }
            }
            if state.obtained[TERMINAL_MILESTONE] || state.dead || state.frame >= self.config.max_frames {
                state.done = true;
            }
        }
        state.episode_return += reward;
        state.prev_action = *action;
        Ok(StepOutcome {
            observation: self.observe(state),
            reward,
            done: state.done,
            events,
            frames,
        })
    }

    fn mining_frames(&self, tile: Tile) -> u32 {
        match tile {
            Tile::Tree => self.config.mining_frames[0],
            Tile::Stone => self.config.mining_frames[1],
            Tile::IronOre => self.config.mining_frames[2],
            _ => 1,
        }
    }

    fn apply_atomic(&self, state: &mut WorldState, action: &ComposedAction) {
        if let Some(item) = action.craft_item() {
            try_craft(state, item);
        }
        if let Some(item) = action.smelt_item() {
            try_craft(state, item);
        }
        if let Some(tool) = action.equip_item() {
            if state.has(tool) {
                state.equipped = Some(tool);
            }
        }
        state.facing = state.facing.rotate(action.turn);
        if action.movement != Movement::None {
            let f = state.facing;
            let dir = match action.movement {
                Movement::Forward => f,
                Movement::Back => f.rotate(Turn::Right).rotate(Turn::Right),
                Movement::Left => f.rotate(Turn::Left),
                Movement::Right => f.rotate(Turn::Right),
                Movement::None => unreachable!(),
            };
            let (dr, dc) = dir.delta();
            let (nr, nc) = (state.position.0 as isize + dr, state.position.1 as isize + dc);
            let tile = state.tile(nr, nc);
            if tile.walkable() {
                state.position = (nr as usize, nc as usize);
                if tile == Tile::Lava {
                    state.dead = true;
                }
            }
        }
        let mut mining = None;
        if action.mine {
            let tile = state.facing_tile();
            if let Some((item, tier)) = tile.yield_item() {
                if state.equipped.map_or(0, Item::tool_tier) >= tier {
                    let (fr, fc) = state.facing.delta();
                    let cell = (
                        (state.position.0 as isize + fr) as usize,
                        (state.position.1 as isize + fc) as usize,
                    );
                    let progress = match state.mining {
                        Some((c, p)) if c == cell => p + 1,
                        _ => 1,
                    };
                    if progress >= self.mining_frames(tile) {
                        state.inventory[item.index()] += 1;
                        state.grid[cell.0 * state.size + cell.1] = Tile::Empty;
                    } else {
                        mining = Some((cell, progress));
                    }
                }
            }
        }
        state.mining = mining;
    }
}

/// Crafts or smelts `item` if inputs and station are present; returns success.
pub fn try_craft(state: &mut WorldState, item: Item) -> bool {
    let Some(recipe) = recipe_for(item) else {
        return false;
    };
    if let Some(station) = recipe.station {
        if !state.has(station) {
            return false;
        }
    }
    if recipe.inputs.iter().any(|(i, n)| state.count(*i) < *n) {
        return false;
    }
    for (i, n) in recipe.inputs {
        state.inventory[i.index()] -= n;
    }
    state.inventory[item.index()] += recipe.count;
    true
}

/// Walkable cells adjacent to a tile of `kind` that the agent can reach, with
/// the direction to face from them.
pub fn reachable_targets(state: &WorldState, kind: Tile) -> Vec<((usize, usize), Facing)> {
    let dist = distances(state);
    let mut out = Vec::new();
    for r in 0..state.size {
        for c in 0..state.size {
            if dist[r * state.size + c].is_none() {
                continue;
            }
            for f in [Facing::North, Facing::East, Facing::South, Facing::West] {
                let (dr, dc) = f.delta();
                if state.tile(r as isize + dr, c as isize + dc) == kind {
                    out.push(((r, c), f));
                }
            }
        }
    }
    out
}

/// Number of distinct `kind` tiles next to a reachable cell.
pub fn reachable_tiles(state: &WorldState, kind: Tile) -> usize {
    let mut seen: Vec<(isize, isize)> = reachable_targets(state, kind)
        .into_iter()
        .map(|((r, c), f)| {
            let (dr, dc) = f.delta();
            (r as isize + dr, c as isize + dc)
        })
        .collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// BFS distances over safe walkable cells from the agent position.
pub fn distances(state: &WorldState) -> Vec<Option<u32>> {
    let n = state.size;
    let mut dist = vec![None; n * n];
    let mut queue = VecDeque::new();
    dist[state.position.0 * n + state.position.1] = Some(0);
    queue.push_back(state.position);
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r * n + c].unwrap();
        for f in [Facing::North, Facing::East, Facing::South, Facing::West] {
            let (dr, dc) = f.delta();
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if state.tile(nr, nc) == Tile::Empty {
                let i = nr as usize * n + nc as usize;
                if dist[i].is_none() {
                    dist[i] = Some(d + 1);
                    queue.push_back((nr as usize, nc as usize));
                }
            }
        }
    }
    dist
}
