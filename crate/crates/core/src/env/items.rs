use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Log,
    Planks,
    Stick,
    CraftingTable,
    WoodenPickaxe,
    Cobblestone,
    StonePickaxe,
    Furnace,
    IronOre,
    IronIngot,
    IronPickaxe,
}

pub const ITEM_COUNT: usize = 11;

pub const ALL_ITEMS: [Item; ITEM_COUNT] = [
    Item::Log,
    Item::Planks,
    Item::Stick,
    Item::CraftingTable,
    Item::WoodenPickaxe,
    Item::Cobblestone,
    Item::StonePickaxe,
    Item::Furnace,
    Item::IronOre,
    Item::IronIngot,
    Item::IronPickaxe,
];

impl Item {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Item> {
        ALL_ITEMS.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Item::Log => "log",
            Item::Planks => "planks",
            Item::Stick => "stick",
            Item::CraftingTable => "crafting_table",
            Item::WoodenPickaxe => "wooden_pickaxe",
            Item::Cobblestone => "cobblestone",
            Item::StonePickaxe => "stone_pickaxe",
            Item::Furnace => "furnace",
            Item::IronOre => "iron_ore",
            Item::IronIngot => "iron_ingot",
            Item::IronPickaxe => "iron_pickaxe",
        }
    }

    /// Mining power when equipped.
    pub fn tool_tier(self) -> u8 {
        match self {
            Item::WoodenPickaxe => 1,
            Item::StonePickaxe => 2,
            Item::IronPickaxe => 3,
            _ => 0,
        }
    }
}

/// Options of the craft head, index 0 meaning "no craft".
pub const CRAFT_OPTIONS: [Item; 7] = [
    Item::Planks,
    Item::Stick,
    Item::CraftingTable,
    Item::WoodenPickaxe,
    Item::StonePickaxe,
    Item::Furnace,
    Item::IronPickaxe,
];

/// Options of the smelt head, index 0 meaning "no smelt".
pub const SMELT_OPTIONS: [Item; 1] = [Item::IronIngot];

/// Options of the equip head, index 0 meaning "no equip".
pub const EQUIP_OPTIONS: [Item; 3] = [Item::WoodenPickaxe, Item::StonePickaxe, Item::IronPickaxe];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recipe {
    pub output: Item,
    pub count: u32,
    pub inputs: &'static [(Item, u32)],
    /// Item that must be held (not consumed) for the recipe to work.
    pub station: Option<Item>,
}

pub const RECIPES: [Recipe; 8] = [
    Recipe {
        output: Item::Planks,
        count: 4,
        inputs: &[(Item::Log, 1)],
        station: None,
    },
    Recipe {
        output: Item::Stick,
        count: 4,
        inputs: &[(Item::Planks, 2)],
        station: None,
    },
    Recipe {
        output: Item::CraftingTable,
        count: 1,
        inputs: &[(Item::Planks, 4)],
        station: None,
    },
    Recipe {
        output: Item::WoodenPickaxe,
        count: 1,
        inputs: &[(Item::Planks, 3), (Item::Stick, 2)],
        station: Some(Item::CraftingTable),
    },
    Recipe {
        output: Item::StonePickaxe,
        count: 1,
        inputs: &[(Item::Cobblestone, 3), (Item::Stick, 2)],
        station: Some(Item::CraftingTable),
    },
    Recipe {
        output: Item::Furnace,
        count: 1,
        inputs: &[(Item::Cobblestone, 8)],
        station: Some(Item::CraftingTable),
    },
    Recipe {
        output: Item::IronPickaxe,
        count: 1,
        inputs: &[(Item::IronIngot, 3), (Item::Stick, 2)],
        station: Some(Item::CraftingTable),
    },
    // smelting
    Recipe {
        output: Item::IronIngot,
        count: 1,
        inputs: &[(Item::IronOre, 1)],
        station: Some(Item::Furnace),
    },
];

pub fn recipe_for(item: Item) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.output == item)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tile {
    Empty,
    Tree,
    Stone,
    IronOre,
    DiamondOre,
    Wall,
    Lava,
}

pub const TILE_KINDS: usize = 7;

impl Tile {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tile> {
        [
            Tile::Empty,
            Tile::Tree,
            Tile::Stone,
            Tile::IronOre,
            Tile::DiamondOre,
            Tile::Wall,
            Tile::Lava,
        ]
        .get(i)
        .copied()
    }

    pub fn walkable(self) -> bool {
        matches!(self, Tile::Empty | Tile::Lava)
    }

    /// Item yielded by mining and the tool tier required for it.
    pub fn yield_item(self) -> Option<(Item, u8)> {
        match self {
            Tile::Tree => Some((Item::Log, 0)),
            Tile::Stone => Some((Item::Cobblestone, 1)),
            Tile::IronOre => Some((Item::IronOre, 2)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Milestone {
    pub index: usize,
    pub item: Item,
    pub reward: f64,
    pub prerequisites: &'static [usize],
}

pub const MILESTONE_COUNT: usize = 9;
pub const TERMINAL_MILESTONE: usize = 8;

/// Ordered milestone chain; rewards double roughly per tier and sum to 259.
pub const MILESTONES: [Milestone; MILESTONE_COUNT] = [
    Milestone {
        index: 0,
        item: Item::Log,
        reward: 1.0,
        prerequisites: &[],
    },
    Milestone {
        index: 1,
        item: Item::Planks,
        reward: 2.0,
        prerequisites: &[0],
    },
    Milestone {
        index: 2,
        item: Item::Stick,
        reward: 4.0,
        prerequisites: &[1],
    },
    Milestone {
        index: 3,
        item: Item::CraftingTable,
        reward: 4.0,
        prerequisites: &[1],
    },
    Milestone {
        index: 4,
        item: Item::WoodenPickaxe,
        reward: 8.0,
        prerequisites: &[1, 2, 3],
    },
    Milestone {
        index: 5,
        item: Item::Cobblestone,
        reward: 16.0,
        prerequisites: &[4],
    },
    Milestone {
        index: 6,
        item: Item::Furnace,
        reward: 32.0,
        prerequisites: &[3, 5],
    },
    Milestone {
        index: 7,
        item: Item::IronIngot,
        reward: 64.0,
        prerequisites: &[5, 6],
    },
    Milestone {
        index: 8,
        item: Item::IronPickaxe,
        reward: 128.0,
        prerequisites: &[2, 3, 7],
    },
];

pub fn max_return() -> f64 {
    MILESTONES.iter().map(|m| m.reward).sum()
}
