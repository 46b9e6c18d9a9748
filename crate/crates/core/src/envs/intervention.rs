use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, GridConfig, GridState};
use super::EnvError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterventionKind {
    Null,
    RemoveWall { cell: Cell },
    AddWall { cell: Cell },
    RemoveHazard { cell: Cell },
    MoveHazard { from: Cell, to: Cell },
    MoveAgent { to: Cell },
    MoveGoal { to: Cell },
    /// Cosmetic change that the dynamics and observations ignore.
    SetTag { tag: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub id: usize,
    pub label: String,
    pub kind: InterventionKind,
}

impl Intervention {
    pub fn null() -> Self {
        Intervention {
            id: 0,
            label: "null".into(),
            kind: InterventionKind::Null,
        }
    }

    pub fn is_null(&self) -> bool {
        self.kind == InterventionKind::Null
    }
}

fn label(kind: &InterventionKind) -> String {
    use InterventionKind::*;
    match kind {
        Null => "null".into(),
        RemoveWall { cell } => format!("remove wall {cell}"),
        AddWall { cell } => format!("add wall {cell}"),
        RemoveHazard { cell } => format!("remove hazard {cell}"),
        MoveHazard { from, to } => format!("move hazard {from} to {to}"),
        MoveAgent { to } => format!("move agent to {to}"),
        MoveGoal { to } => format!("move goal to {to}"),
        SetTag { tag } => format!("set cosmetic tag {tag}"),
    }
}

/// Applies `intervention` to `state`. The result must satisfy every state
/// invariant; otherwise the intervention is rejected.
pub fn apply_intervention(state: &GridState, intervention: &Intervention) -> Result<GridState, EnvError> {
    use InterventionKind::*;
    let reject = |reason: String| EnvError::InapplicableIntervention {
        id: intervention.id,
        label: intervention.label.clone(),
        reason,
    };
    let mut next = state.clone();
    match &intervention.kind {
        Null => {}
        RemoveWall { cell } => {
            if !next.walls.remove(cell) {
                return Err(reject(format!("no wall at {cell}")));
            }
        }
        AddWall { cell } => {
            if !state.in_bounds(*cell) {
                return Err(reject(format!("{cell} is outside the grid")));
            }
            if state.walls.contains(cell) {
                return Err(reject(format!("{cell} is already a wall")));
            }
            if state.hazards.contains(cell) {
                return Err(reject(format!("{cell} holds a hazard")));
            }
            next.walls.insert(*cell);
        }
        RemoveHazard { cell } => {
            if !next.hazards.remove(cell) {
                return Err(reject(format!("no hazard at {cell}")));
            }
        }
        MoveHazard { from, to } => {
            if !next.hazards.remove(from) {
                return Err(reject(format!("no hazard at {from}")));
            }
            if next.hazards.contains(to) {
                return Err(reject(format!("{to} already holds a hazard")));
            }
            next.hazards.insert(*to);
        }
        MoveAgent { to } => next.agent = *to,
        MoveGoal { to } => next.goal = *to,
        SetTag { tag } => next.tag = *tag,
    }
    next.check().map_err(reject)?;
    Ok(next)
}

/// Null intervention followed by interventions derived from the layout in
/// this fixed order:
///
/// 1. remove each wall (row-major);
/// 2. add a wall directly above each wall, where that cell is in bounds and
///    holds no wall, hazard, start or goal (row-major, deduplicated);
/// 3. remove each hazard;
/// 4. move each hazard to its first free neighbour, trying up, down, left, right;
/// 5. move the agent to each grid corner that is free of walls, hazards and the goal;
/// 6. move the goal to each such corner other than the start;
/// 7. set the cosmetic tag to 1.
pub fn intervention_catalog(config: &GridConfig) -> Vec<Intervention> {
    use InterventionKind::*;
    let walls: BTreeSet<Cell> = config.walls.iter().copied().collect();
    let hazards: BTreeSet<Cell> = config.hazards.iter().copied().collect();
    let occupied = |c: &Cell| walls.contains(c) || hazards.contains(c) || *c == config.start || *c == config.goal;

    let mut kinds = vec![Null];
    kinds.extend(walls.iter().map(|&cell| RemoveWall { cell }));

    let above: BTreeSet<Cell> = walls
        .iter()
        .filter(|w| w.row > 0)
        .map(|w| Cell::new(w.row - 1, w.col))
        .filter(|c| !occupied(c))
        .collect();
    kinds.extend(above.into_iter().map(|cell| AddWall { cell }));

    kinds.extend(hazards.iter().map(|&cell| RemoveHazard { cell }));
    for &from in &hazards {
        let (r, c) = (from.row as i32, from.col as i32);
        let target = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
            .into_iter()
            .filter(|&(r, c)| r >= 0 && c >= 0)
            .map(|(r, c)| Cell::new(r as u16, c as u16))
            .find(|n| config.in_bounds(*n) && !occupied(n));
        if let Some(to) = target {
            kinds.push(MoveHazard { from, to });
        }
    }

    let (h, w) = (config.height - 1, config.width - 1);
    let corners: Vec<Cell> = [Cell::new(0, 0), Cell::new(0, w), Cell::new(h, 0), Cell::new(h, w)]
        .into_iter()
        .filter(|c| !walls.contains(c) && !hazards.contains(c) && *c != config.goal)
        .collect();
    kinds.extend(corners.iter().map(|&to| MoveAgent { to }));
    kinds.extend(corners.iter().filter(|c| **c != config.start).map(|&to| MoveGoal { to }));
    kinds.push(SetTag { tag: 1 });

    kinds
        .into_iter()
        .enumerate()
        .map(|(id, kind)| Intervention {
            id,
            label: label(&kind),
            kind,
        })
        .collect()
}
