//! Scripted planner that completes the full item chain with full map knowledge.

use std::collections::VecDeque;

use rand::Rng;

use super::action::{ComposedAction, Movement, Turn};
use super::items::{recipe_for, Item, Tile, ITEM_COUNT, SMELT_OPTIONS};
use super::world::{reachable_targets, Facing, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Mine(Tile),
    Craft(Item),
    Smelt(Item),
    Equip(Item),
    Done,
}

const TARGET: Item = Item::IronPickaxe;

fn mined_from(item: Item) -> Option<(Tile, u8)> {
    match item {
        Item::Log => Some((Tile::Tree, 0)),
        Item::Cobblestone => Some((Tile::Stone, 1)),
        Item::IronOre => Some((Tile::IronOre, 2)),
        _ => None,
    }
}

fn tool_for(tier: u8) -> Item {
    match tier {
        1 => Item::WoodenPickaxe,
        2 => Item::StonePickaxe,
        _ => Item::IronPickaxe,
    }
}

fn best_tool(inv: &[u32; ITEM_COUNT], tier: u8) -> Option<Item> {
    [Item::IronPickaxe, Item::StonePickaxe, Item::WoodenPickaxe]
        .into_iter()
        .filter(|t| t.tool_tier() >= tier)
        .find(|t| inv[t.index()] > 0)
}

/// First concrete step towards holding `qty` of `item`, or `None` if already held.
fn next_goal(inv: &[u32; ITEM_COUNT], equipped: Option<Item>, item: Item, qty: u32) -> Option<Goal> {
    if inv[item.index()] >= qty {
        return None;
    }
    if let Some((tile, tier)) = mined_from(item) {
        if tier == 0 || equipped.map_or(0, Item::tool_tier) >= tier {
            return Some(Goal::Mine(tile));
        }
        return match best_tool(inv, tier) {
            Some(tool) => Some(Goal::Equip(tool)),
            None => next_goal(inv, equipped, tool_for(tier), 1),
        };
    }
    let recipe = recipe_for(item)?;
    if let Some(station) = recipe.station {
        if let Some(g) = next_goal(inv, equipped, station, 1) {
            return Some(g);
        }
    }
    for (input, n) in recipe.inputs {
        if let Some(g) = next_goal(inv, equipped, *input, *n) {
            return Some(g);
        }
    }
    if SMELT_OPTIONS.contains(&item) {
        Some(Goal::Smelt(item))
    } else {
        Some(Goal::Craft(item))
    }
}

/// Simulates crafting `item` from a virtual inventory, counting raw items that still need mining.
fn produce(v: &mut [u32; ITEM_COUNT], item: Item, qty: u32, raw: &mut [u32; ITEM_COUNT], depth: usize) {
    if depth > 32 {
        return;
    }
    while v[item.index()] < qty {
        if let Some((_, tier)) = mined_from(item) {
            if tier > 0 && best_tool(v, tier).is_none() {
                produce(v, tool_for(tier), 1, raw, depth + 1);
            }
            raw[item.index()] += qty - v[item.index()];
            v[item.index()] = qty;
            continue;
        }
        let Some(recipe) = recipe_for(item) else { return };
        if let Some(station) = recipe.station {
            produce(v, station, 1, raw, depth + 1);
        }
        for _ in 0..8 {
            for (input, n) in recipe.inputs {
                produce(v, *input, *n, raw, depth + 1);
            }
            if recipe.inputs.iter().all(|(i, n)| v[i.index()] >= *n) {
                break;
            }
        }
        for (input, n) in recipe.inputs {
            v[input.index()] = v[input.index()].saturating_sub(*n);
        }
        v[item.index()] += recipe.count;
    }
}

/// Raw items (logs, cobblestone, iron ore) still to be mined to finish the chain.
pub fn raw_shortfall(state: &WorldState) -> [u32; ITEM_COUNT] {
    let mut v = state.inventory;
    let mut raw = [0; ITEM_COUNT];
    if !state.has(TARGET) {
        produce(&mut v, TARGET, 1, &mut raw, 0);
    }
    raw
}

pub fn current_goal(state: &WorldState) -> Goal {
    if state.done || state.has(TARGET) {
        return Goal::Done;
    }
    // keep mining while facing something the chain still needs
    if let Some((item, tier)) = state.facing_tile().yield_item() {
        if raw_shortfall(state)[item.index()] > 0 && state.equipped.map_or(0, Item::tool_tier) >= tier {
            return Goal::Mine(state.facing_tile());
        }
    }
    next_goal(&state.inventory, state.equipped, TARGET, 1).unwrap_or(Goal::Done)
}

fn turn_towards(from: Facing, to: Facing) -> Turn {
    if from.rotate(Turn::Right) == to {
        Turn::Right
    } else {
        Turn::Left
    }
}

/// Movement/turn that brings the agent to the nearest cell facing a `kind` tile.
fn navigate(state: &WorldState, kind: Tile) -> ComposedAction {
    let targets = reachable_targets(state, kind);
    if targets.is_empty() {
        return ComposedAction::noop();
    }
    if targets.iter().any(|(p, f)| *p == state.position && *f == state.facing) {
        return ComposedAction::mining();
    }
    if let Some((_, f)) = targets.iter().find(|(p, _)| *p == state.position) {
        return ComposedAction::turning(turn_towards(state.facing, *f));
    }
    let n = state.size;
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n * n];
    let mut seen = vec![false; n * n];
    let mut queue = VecDeque::new();
    seen[state.position.0 * n + state.position.1] = true;
    queue.push_back(state.position);
    let mut goal = None;
    while let Some((r, c)) = queue.pop_front() {
        if targets.iter().any(|(p, _)| *p == (r, c)) {
            goal = Some((r, c));
            break;
        }
        for f in [Facing::North, Facing::East, Facing::South, Facing::West] {
            let (dr, dc) = f.delta();
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if state.tile(nr, nc) == Tile::Empty && !seen[nr as usize * n + nc as usize] {
                seen[nr as usize * n + nc as usize] = true;
                parent[nr as usize * n + nc as usize] = Some((r, c));
                queue.push_back((nr as usize, nc as usize));
            }
        }
    }
    let Some(mut cell) = goal else {
        return ComposedAction::noop();
    };
    while let Some(p) = parent[cell.0 * n + cell.1] {
        if p == state.position {
            break;
        }
        cell = p;
    }
    let dir = [Facing::North, Facing::East, Facing::South, Facing::West]
        .into_iter()
        .find(|f| {
            let (dr, dc) = f.delta();
            (state.position.0 as isize + dr, state.position.1 as isize + dc) == (cell.0 as isize, cell.1 as isize)
        })
        .expect("next cell is adjacent");
    if dir == state.facing {
        ComposedAction::moving(Movement::Forward)
    } else {
        ComposedAction::turning(turn_towards(state.facing, dir))
    }
}

/// Next planner action; with probability `noise_level` a uniform random
/// action from the whole composed space replaces it.
pub fn scripted_expert(state: &WorldState, noise_level: f64, rng: &mut impl Rng) -> ComposedAction {
    if noise_level > 0.0 && rng.gen::<f64>() < noise_level {
        return ComposedAction::random(rng);
    }
    match current_goal(state) {
        Goal::Done => ComposedAction::noop(),
        Goal::Craft(item) => ComposedAction::crafting(item),
        Goal::Smelt(item) => ComposedAction::smelting(item),
        Goal::Equip(item) => ComposedAction::equipping(item),
        Goal::Mine(tile) => navigate(state, tile),
    }
}
