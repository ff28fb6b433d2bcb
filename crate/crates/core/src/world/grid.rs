use std::fmt;

use thiserror::Error;

use crate::bus::Value;

pub const DEFAULT_RESOLUTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Free,
    Occupied,
}

/// Grid coordinates: `col` grows with x, `row` grows with y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("line {line}, column {col}: unknown character {ch:?}")]
    UnknownCharacter { line: usize, col: usize, ch: char },
    #[error("invalid grid message: {0}")]
    InvalidMessage(String),
}

/// Static 2-D occupancy map. Cells are row-major; row 0 is the first
/// text line and lies at the lowest y.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new_free(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "grid needs at least one cell");
        Self {
            width,
            height,
            resolution: DEFAULT_RESOLUTION,
            origin: (0.0, 0.0),
            cells: vec![CellState::Free; width * height],
        }
    }

    /// Parses `#` (occupied) / `.` (free) rows. Trailing blank lines and
    /// `\r` line endings are tolerated.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        let width = match lines.first() {
            Some(first) if !first.is_empty() => first.chars().count(),
            _ => return Err(GridError::EmptyGrid),
        };
        let mut cells = Vec::with_capacity(width * lines.len());
        for (i, line) in lines.iter().enumerate() {
            let found = line.chars().count();
            if found != width {
                return Err(GridError::RaggedRows {
                    line: i + 1,
                    expected: width,
                    found,
                });
            }
            for (j, ch) in line.chars().enumerate() {
                cells.push(match ch {
                    '.' => CellState::Free,
                    '#' => CellState::Occupied,
                    _ => {
                        return Err(GridError::UnknownCharacter {
                            line: i + 1,
                            col: j + 1,
                            ch,
                        })
                    }
                });
            }
        }
        Ok(Self {
            width,
            height: lines.len(),
            resolution: DEFAULT_RESOLUTION,
            origin: (0.0, 0.0),
            cells,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|c| match c {
                CellState::Free => '.',
                CellState::Occupied => '#',
            }));
            out.push('\n');
        }
        out
    }

    pub fn with_resolution(mut self, resolution: f64) -> Self {
        assert!(resolution.is_finite() && resolution > 0.0);
        self.resolution = resolution;
        self
    }

    pub fn with_origin(mut self, x: f64, y: f64) -> Self {
        assert!(x.is_finite() && y.is_finite());
        self.origin = (x, y);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.in_bounds(cell)
            .then(|| cell.row * self.width + cell.col)
    }

    pub fn get(&self, cell: Cell) -> Option<CellState> {
        self.index(cell).map(|i| self.cells[i])
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == Some(CellState::Free)
    }

    pub fn set(&mut self, cell: Cell, state: CellState) {
        let i = self.index(cell).expect("cell in bounds");
        self.cells[i] = state;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| **c == CellState::Occupied)
            .count()
    }

    /// Cell containing the world point, if it is on the map.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        let fx = ((x - self.origin.0) / self.resolution).floor();
        let fy = ((y - self.origin.1) / self.resolution).floor();
        if !(fx.is_finite() && fy.is_finite()) || fx < 0.0 || fy < 0.0 {
            return None;
        }
        let cell = Cell::new(fx as usize, fy as usize);
        self.in_bounds(cell).then_some(cell)
    }

    /// World coordinates of the cell center.
    pub fn center_of(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin.0 + (cell.col as f64 + 0.5) * self.resolution,
            self.origin.1 + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    /// Payload published on `mapping/occupancy_grid`.
    pub fn to_value(&self) -> Value {
        let rows: Vec<Value> = self.render().lines().map(Value::from).collect();
        Value::map([
            ("width", Value::from(self.width as i64)),
            ("height", Value::from(self.height as i64)),
            ("resolution", self.resolution.into()),
            ("origin_x", self.origin.0.into()),
            ("origin_y", self.origin.1.into()),
            ("rows", Value::List(rows)),
        ])
    }

    pub fn from_value(v: &Value) -> Result<Self, GridError> {
        let bad = |m: &str| GridError::InvalidMessage(m.to_string());
        let rows = v
            .get("rows")
            .and_then(Value::as_list)
            .ok_or_else(|| bad("missing rows"))?;
        let mut text = String::new();
        for r in rows {
            text.push_str(r.as_str().ok_or_else(|| bad("rows must be strings"))?);
            text.push('\n');
        }
        let grid = Self::parse(&text)?;
        let dims = (
            v.get("width").and_then(Value::as_i64),
            v.get("height").and_then(Value::as_i64),
        );
        if dims != (Some(grid.width as i64), Some(grid.height as i64)) {
            return Err(bad("width/height disagree with rows"));
        }
        let resolution = v
            .f64_field("resolution")
            .ok_or_else(|| bad("missing resolution"))?;
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(bad("resolution must be positive"));
        }
        let ox = v
            .f64_field("origin_x")
            .ok_or_else(|| bad("missing origin_x"))?;
        let oy = v
            .f64_field("origin_y")
            .ok_or_else(|| bad("missing origin_y"))?;
        Ok(grid.with_resolution(resolution).with_origin(ox, oy))
    }
}
