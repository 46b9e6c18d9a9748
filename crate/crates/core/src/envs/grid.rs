use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::divergence::ActionId;

pub const ACTION_COUNT: usize = 5;
pub const DEFAULT_STEP_CAP: u32 = 200;
pub const GOAL_REWARD: f64 = 10.0;
pub const HAZARD_REWARD: f64 = -10.0;
pub const STEP_REWARD: f64 = -1.0;

/// GridPatrol actions. The discriminant is the action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    NoOp = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [Action::NoOp, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_id(id: ActionId) -> Option<Action> {
        Self::ALL.get(id.0).copied()
    }

    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }

    fn delta(self) -> (i32, i32) {
        match self {
            Action::NoOp => (0, 0),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

/// Grid cell as `[row, col]`, row 0 at the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u16; 2]", into = "[u16; 2]")]
pub struct Cell {
    pub row: u16,
    pub col: u16,
}

impl Cell {
    pub const fn new(row: u16, col: u16) -> Self {
        Self { row, col }
    }
}

impl From<[u16; 2]> for Cell {
    fn from([row, col]: [u16; 2]) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for [u16; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.row, self.col)
    }
}

/// Declarative GridPatrol layout.
///
/// ```toml
/// width = 8
/// height = 8
/// start = [0, 0]
/// goal = [7, 7]
/// walls = [[2, 2], [2, 3]]
/// hazards = [[3, 6]]
/// step_cap = 200
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub width: u16,
    pub height: u16,
    pub start: Cell,
    pub goal: Cell,
    #[serde(default)]
    pub walls: Vec<Cell>,
    #[serde(default)]
    pub hazards: Vec<Cell>,
    #[serde(default = "default_step_cap")]
    pub step_cap: u32,
}

fn default_step_cap() -> u32 {
    DEFAULT_STEP_CAP
}

impl Default for GridConfig {
    /// 8×8 layout with two wall bars and two hazards.
    ///
    /// ```text
    /// S.......
    /// ........
    /// ..###...
    /// ......x.
    /// .x......
    /// ...###..
    /// ........
    /// .......G
    /// ```
    fn default() -> Self {
        let c = Cell::new;
        GridConfig {
            width: 8,
            height: 8,
            start: c(0, 0),
            goal: c(7, 7),
            walls: vec![c(2, 2), c(2, 3), c(2, 4), c(5, 3), c(5, 4), c(5, 5)],
            hazards: vec![c(3, 6), c(4, 1)],
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

impl GridConfig {
    /// Wall-free `n × n` grid, start top-left and goal bottom-right. Mirror
    /// symmetric about the main diagonal; most cells on a shortest route have
    /// two equally good moves.
    pub fn open(n: u16) -> Self {
        GridConfig {
            width: n,
            height: n,
            start: Cell::new(0, 0),
            goal: Cell::new(n - 1, n - 1),
            walls: vec![],
            hazards: vec![],
            step_cap: DEFAULT_STEP_CAP,
        }
    }

    /// `n × n` grid whose `(n-2) × (n-2)` interior is wall, leaving exactly
    /// two mirror-image shortest routes.
    pub fn ring(n: u16) -> Self {
        let mut cfg = Self::open(n);
        cfg.walls = (1..n - 1)
            .flat_map(|r| (1..n - 1).map(move |c| Cell::new(r, c)))
            .collect();
        cfg
    }

    /// The open 7×7 grid.
    pub fn symmetric() -> Self {
        Self::open(7)
    }

    /// `default`, `symmetric` (open 7×7) or `ring` (5×5).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "symmetric" => Some(Self::symmetric()),
            "ring" => Some(Self::ring(5)),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        let cfg: GridConfig = toml::from_str(text).map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!("grid {}x{} is smaller than 2x2", self.height, self.width));
        }
        if self.step_cap == 0 {
            return bad("step_cap must be positive".into());
        }
        for (name, c) in [("start", self.start), ("goal", self.goal)]
            .into_iter()
            .chain(self.walls.iter().map(|w| ("wall", *w)))
            .chain(self.hazards.iter().map(|h| ("hazard", *h)))
        {
            if !self.in_bounds(c) {
                return bad(format!("{name} {c} is outside the grid"));
            }
        }
        let walls: BTreeSet<Cell> = self.walls.iter().copied().collect();
        let hazards: BTreeSet<Cell> = self.hazards.iter().copied().collect();
        for (name, c) in [("start", self.start), ("goal", self.goal)] {
            if walls.contains(&c) {
                return bad(format!("{name} {c} is inside a wall"));
            }
            if hazards.contains(&c) {
                return bad(format!("{name} {c} is on a hazard"));
            }
        }
        if let Some(h) = hazards.intersection(&walls).next() {
            return bad(format!("hazard {h} is inside a wall"));
        }
        if self.start == self.goal {
            return bad("start and goal coincide".into());
        }
        if shortest_path_len(self.width, self.height, &walls, &hazards, self.start, self.goal).is_none() {
            return bad("goal is unreachable from start".into());
        }
        Ok(())
    }
}

/// Breadth-first distance from `from` to `to` avoiding walls and hazards.
pub(crate) fn shortest_path_len(
    width: u16,
    height: u16,
    walls: &BTreeSet<Cell>,
    hazards: &BTreeSet<Cell>,
    from: Cell,
    to: Cell,
) -> Option<usize> {
    let idx = |c: Cell| c.row as usize * width as usize + c.col as usize;
    let mut dist = vec![usize::MAX; width as usize * height as usize];
    let mut queue = VecDeque::from([from]);
    dist[idx(from)] = 0;
    while let Some(c) = queue.pop_front() {
        if c == to {
            return Some(dist[idx(c)]);
        }
        for a in &Action::ALL[1..] {
            let (dr, dc) = a.delta();
            let (r, col) = (c.row as i32 + dr, c.col as i32 + dc);
            if r < 0 || col < 0 || r >= height as i32 || col >= width as i32 {
                continue;
            }
            let n = Cell::new(r as u16, col as u16);
            if walls.contains(&n) || hazards.contains(&n) || dist[idx(n)] != usize::MAX {
                continue;
            }
            dist[idx(n)] = dist[idx(c)] + 1;
            queue.push_back(n);
        }
    }
    None
}

/// Full GridPatrol state.
///
/// The canonical byte form is UTF-8 text, one `\n`-terminated line per field:
///
/// ```text
/// gridpatrol-state v1
/// size <height> <width>
/// step <step> <cap>
/// agent <row> <col>
/// goal <row> <col>
/// walls <n>[ <row>,<col>]*        (row-major order)
/// hazards <n>[ <row>,<col>]*      (row-major order)
/// tag <u8>
/// terminal <0|1>
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub(crate) width: u16,
    pub(crate) height: u16,
    pub(crate) walls: BTreeSet<Cell>,
    pub(crate) hazards: BTreeSet<Cell>,
    pub(crate) goal: Cell,
    pub(crate) agent: Cell,
    pub(crate) step: u32,
    pub(crate) step_cap: u32,
    pub(crate) tag: u8,
    pub(crate) terminal: bool,
}

const STATE_MAGIC: &str = "gridpatrol-state v1";

impl GridState {
    pub fn width(&self) -> u16 {
        self.width
    }
    pub fn height(&self) -> u16 {
        self.height
    }
    pub fn walls(&self) -> &BTreeSet<Cell> {
        &self.walls
    }
    pub fn hazards(&self) -> &BTreeSet<Cell> {
        &self.hazards
    }
    pub fn goal(&self) -> Cell {
        self.goal
    }
    pub fn agent(&self) -> Cell {
        self.agent
    }
    pub fn step_count(&self) -> u32 {
        self.step
    }
    pub fn step_cap(&self) -> u32 {
        self.step_cap
    }
    /// Cosmetic marker; the dynamics and observations ignore it.
    pub fn tag(&self) -> u8 {
        self.tag
    }
    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    /// Reported as `#` for walls and off-grid cells, `x` hazards, `G` goal, `.` free.
    fn cell_code(&self, row: i32, col: i32) -> char {
        if row < 0 || col < 0 || row >= self.height as i32 || col >= self.width as i32 {
            return '#';
        }
        let c = Cell::new(row as u16, col as u16);
        if self.walls.contains(&c) {
            '#'
        } else if self.hazards.contains(&c) {
            'x'
        } else if c == self.goal {
            'G'
        } else {
            '.'
        }
    }

    /// Egocentric observation used as the value-table key: the agent cell and
    /// the contents of its four neighbours in up, down, left, right order,
    /// e.g. `3,4:.#x.`.
    pub fn observation_key(&self) -> String {
        let (r, c) = (self.agent.row as i32, self.agent.col as i32);
        let mut key = format!("{}:", self.agent);
        for a in &Action::ALL[1..] {
            let (dr, dc) = a.delta();
            key.push(self.cell_code(r + dr, c + dc));
        }
        key
    }

    /// Invariants shared by every state: entities in bounds, agent and goal
    /// outside walls, hazards outside walls.
    pub(crate) fn check(&self) -> Result<(), String> {
        for (name, c) in [("agent", self.agent), ("goal", self.goal)] {
            if !self.in_bounds(c) {
                return Err(format!("{name} {c} is outside the grid"));
            }
            if self.walls.contains(&c) {
                return Err(format!("{name} {c} is inside a wall"));
            }
        }
        if let Some(h) = self.hazards.iter().find(|h| !self.in_bounds(**h)) {
            return Err(format!("hazard {h} is outside the grid"));
        }
        if let Some(w) = self.walls.iter().find(|w| !self.in_bounds(**w)) {
            return Err(format!("wall {w} is outside the grid"));
        }
        if let Some(h) = self.hazards.intersection(&self.walls).next() {
            return Err(format!("hazard {h} is inside a wall"));
        }
        if self.hazards.contains(&self.goal) {
            return Err(format!("goal {} is on a hazard", self.goal));
        }
        if !self.terminal && (self.agent == self.goal || self.hazards.contains(&self.agent)) {
            return Err(format!("non-terminal state has agent on goal or hazard at {}", self.agent));
        }
        Ok(())
    }

    pub fn canonical_string(&self) -> String {
        let cells = |set: &BTreeSet<Cell>| {
            let mut s = set.len().to_string();
            for c in set {
                s.push(' ');
                s.push_str(&c.to_string());
            }
            s
        };
        format!(
            "{STATE_MAGIC}\nsize {} {}\nstep {} {}\nagent {} {}\ngoal {} {}\nwalls {}\nhazards {}\ntag {}\nterminal {}\n",
            self.height,
            self.width,
            self.step,
            self.step_cap,
            self.agent.row,
            self.agent.col,
            self.goal.row,
            self.goal.col,
            cells(&self.walls),
            cells(&self.hazards),
            self.tag,
            u8::from(self.terminal),
        )
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.canonical_string().into_bytes()
    }

    pub fn from_canonical(text: &str) -> Result<Self, EnvError> {
        let mut lines = text.split_terminator('\n').enumerate();
        let mut next = |key: &str| -> Result<(usize, Vec<&str>), EnvError> {
            let (i, line) = lines.next().ok_or(EnvError::Parse {
                line: 0,
                reason: format!("missing `{key}` line"),
            })?;
            let mut parts = line.split(' ');
            if parts.next() != Some(key) {
                return Err(EnvError::Parse {
                    line: i + 1,
                    reason: format!("expected `{key}`"),
                });
            }
            Ok((i + 1, parts.collect()))
        };
        let num = |line: usize, s: &str| -> Result<u32, EnvError> {
            s.parse().map_err(|_| EnvError::Parse {
                line,
                reason: format!("bad number `{s}`"),
            })
        };
        let pair = |line: usize, v: &[&str]| -> Result<(u32, u32), EnvError> {
            match v {
                [a, b] => Ok((num(line, a)?, num(line, b)?)),
                _ => Err(EnvError::Parse {
                    line,
                    reason: "expected two fields".into(),
                }),
            }
        };
        let cell16 = |line: usize, (a, b): (u32, u32)| -> Result<Cell, EnvError> {
            let conv = |x: u32| {
                u16::try_from(x).map_err(|_| EnvError::Parse {
                    line,
                    reason: format!("{x} exceeds the grid size limit"),
                })
            };
            Ok(Cell::new(conv(a)?, conv(b)?))
        };
        let cell_list = |line: usize, v: &[&str]| -> Result<BTreeSet<Cell>, EnvError> {
            let (count, rest) = v.split_first().ok_or(EnvError::Parse {
                line,
                reason: "missing count".into(),
            })?;
            let count = num(line, count)? as usize;
            if rest.len() != count {
                return Err(EnvError::Parse {
                    line,
                    reason: format!("expected {count} cells, found {}", rest.len()),
                });
            }
            let mut set = BTreeSet::new();
            for item in rest {
                let (r, c) = item.split_once(',').ok_or(EnvError::Parse {
                    line,
                    reason: format!("bad cell `{item}`"),
                })?;
                set.insert(cell16(line, (num(line, r)?, num(line, c)?))?);
            }
            Ok(set)
        };

        let (_, magic) = next("gridpatrol-state")?;
        if magic != ["v1"] {
            return Err(EnvError::Parse {
                line: 1,
                reason: "unsupported version".into(),
            });
        }
        let (l, v) = next("size")?;
        let size = cell16(l, pair(l, &v)?)?;
        let (l, v) = next("step")?;
        let (step, step_cap) = pair(l, &v)?;
        let (l, v) = next("agent")?;
        let agent = cell16(l, pair(l, &v)?)?;
        let (l, v) = next("goal")?;
        let goal = cell16(l, pair(l, &v)?)?;
        let (l, v) = next("walls")?;
        let walls = cell_list(l, &v)?;
        let (l, v) = next("hazards")?;
        let hazards = cell_list(l, &v)?;
        let (l, v) = next("tag")?;
        let tag = match v.as_slice() {
            [t] => t.parse::<u8>().map_err(|_| EnvError::Parse {
                line: l,
                reason: format!("bad tag `{t}`"),
            })?,
            _ => {
                return Err(EnvError::Parse {
                    line: l,
                    reason: "expected one field".into(),
                })
            }
        };
        let (l, v) = next("terminal")?;
        let terminal = match v.as_slice() {
            ["0"] => false,
            ["1"] => true,
            _ => {
                return Err(EnvError::Parse {
                    line: l,
                    reason: "expected 0 or 1".into(),
                })
            }
        };
        let state = GridState {
            height: size.row,
            width: size.col,
            walls,
            hazards,
            goal,
            agent,
            step,
            step_cap,
            tag,
            terminal,
        };
        state.check().map_err(|reason| EnvError::Parse { line: 0, reason })?;
        if state.canonical_string() != text {
            return Err(EnvError::Parse {
                line: 0,
                reason: "input is not in canonical form".into(),
            });
        }
        Ok(state)
    }
}

/// Result of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: GridState,
    pub reward: f64,
    pub terminal: bool,
    /// True when the episode ended only because the step cap was reached.
    pub truncated: bool,
}

/// Canonical start state of a validated layout.
pub fn initial_state(config: &GridConfig) -> Result<GridState, EnvError> {
    config.validate()?;
    Ok(GridState {
        width: config.width,
        height: config.height,
        walls: config.walls.iter().copied().collect(),
        hazards: config.hazards.iter().copied().collect(),
        goal: config.goal,
        agent: config.start,
        step: 0,
        step_cap: config.step_cap,
        tag: 0,
        terminal: false,
    })
}

/// Deterministic transition. Moves into walls or off the grid leave the agent
/// in place. Goal: +10 and terminal. Hazard: −10 and terminal. Otherwise −1,
/// terminal once the step counter reaches the cap.
pub fn step(state: &GridState, action: ActionId) -> Result<StepOutcome, EnvError> {
    if state.terminal {
        return Err(EnvError::EpisodeFinished);
    }
    let action = Action::from_id(action).ok_or(EnvError::InvalidAction(action.0))?;
    let (dr, dc) = action.delta();
    let (r, c) = (state.agent.row as i32 + dr, state.agent.col as i32 + dc);
    let mut next = state.clone();
    if r >= 0 && c >= 0 && r < state.height as i32 && c < state.width as i32 {
        let target = Cell::new(r as u16, c as u16);
        if !state.walls.contains(&target) {
            next.agent = target;
        }
    }
    next.step += 1;
    let (reward, absorbed) = if next.agent == next.goal {
        (GOAL_REWARD, true)
    } else if next.hazards.contains(&next.agent) {
        (HAZARD_REWARD, true)
    } else {
        (STEP_REWARD, false)
    };
    let truncated = !absorbed && next.step >= next.step_cap;
    next.terminal = absorbed || truncated;
    Ok(StepOutcome {
        terminal: next.terminal,
        next_state: next,
        reward,
        truncated,
    })
}
