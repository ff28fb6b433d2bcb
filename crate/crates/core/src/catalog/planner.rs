use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::bus::Value;
use crate::world::{Cell, OccupancyGrid, Pose};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no path")]
    NoPath,
    #[error("cell {0} is occupied")]
    CellOccupied(Cell),
    #[error("cell {0} is outside the grid")]
    OutOfBounds(Cell),
}

/// The four neighbors in expansion order: +x, −x, +y, −y.
pub fn neighbors(grid: &OccupancyGrid, c: Cell) -> impl Iterator<Item = Cell> + '_ {
    let candidates = [
        (c.col.checked_add(1), Some(c.row)),
        (c.col.checked_sub(1), Some(c.row)),
        (Some(c.col), c.row.checked_add(1)),
        (Some(c.col), c.row.checked_sub(1)),
    ];
    candidates.into_iter().filter_map(move |pair| match pair {
        (Some(col), Some(row)) => {
            let n = Cell::new(col, row);
            grid.in_bounds(n).then_some(n)
        }
        _ => None,
    })
}

/// Shortest 4-connected path from `start` to `goal`, both included.
///
/// A* with the Manhattan heuristic. Among equal f-scores the node pushed
/// first is expanded first, so results are reproducible.
pub fn plan_path(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Result<Vec<Cell>, PlanError> {
    for c in [start, goal] {
        if !grid.in_bounds(c) {
            return Err(PlanError::OutOfBounds(c));
        }
        if !grid.is_free(c) {
            return Err(PlanError::CellOccupied(c));
        }
    }
    let idx = |c: Cell| c.row * grid.width() + c.col;
    let n = grid.width() * grid.height();
    let mut g = vec![usize::MAX; n];
    let mut came_from: Vec<Option<Cell>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    g[idx(start)] = 0;
    open.push(Reverse((start.manhattan(goal), seq, start)));
    while let Some(Reverse((_, _, current))) = open.pop() {
        if closed[idx(current)] {
            continue;
        }
        if current == goal {
            let mut path = vec![goal];
            let mut c = goal;
            while let Some(prev) = came_from[idx(c)] {
                path.push(prev);
                c = prev;
            }
            path.reverse();
            return Ok(path);
        }
        closed[idx(current)] = true;
        let next_g = g[idx(current)] + 1;
        for nb in neighbors(grid, current) {
            let i = idx(nb);
            if closed[i] || !grid.is_free(nb) || next_g >= g[i] {
                continue;
            }
            g[i] = next_g;
            came_from[i] = Some(current);
            seq += 1;
            open.push(Reverse((next_g + nb.manhattan(goal), seq, nb)));
        }
    }
    Err(PlanError::NoPath)
}

/// A planned route: cell centers at a fixed flight altitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub waypoints: Vec<Pose>,
    pub cells: Vec<Cell>,
}

impl PlannedPath {
    pub fn from_cells(grid: &OccupancyGrid, cells: Vec<Cell>, altitude: f64) -> Self {
        let waypoints = cells
            .iter()
            .map(|c| {
                let (x, y) = grid.center_of(*c);
                Pose {
                    x,
                    y,
                    z: altitude,
                    yaw: 0.0,
                }
            })
            .collect();
        Self { waypoints, cells }
    }

    /// Payload of `planning/planned_path`.
    pub fn to_value(&self) -> Value {
        let waypoints = self
            .waypoints
            .iter()
            .map(|p| Value::List(vec![p.x.into(), p.y.into(), p.z.into()]))
            .collect();
        let cells = self
            .cells
            .iter()
            .map(|c| Value::List(vec![c.col.into(), c.row.into()]))
            .collect();
        Value::map([
            ("waypoints", Value::List(waypoints)),
            ("cells", Value::List(cells)),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let waypoints = v
            .get("waypoints")?
            .as_list()?
            .iter()
            .map(|w| match w.as_list()? {
                [x, y, z] => Some(Pose {
                    x: x.as_f64()?,
                    y: y.as_f64()?,
                    z: z.as_f64()?,
                    yaw: 0.0,
                }),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        let cells = v
            .get("cells")?
            .as_list()?
            .iter()
            .map(|c| match c.as_list()? {
                [col, row] => Some(Cell::new(
                    usize::try_from(col.as_i64()?).ok()?,
                    usize::try_from(row.as_i64()?).ok()?,
                )),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        (waypoints.len() == cells.len()).then_some(Self { waypoints, cells })
    }
}
