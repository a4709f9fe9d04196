//! Occupancy grid and 8-connected A* planning with obstacle inflation.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::SimError;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell(pub i32, pub i32);

impl Cell {
    pub fn x(self) -> i32 {
        self.0
    }
    pub fn y(self) -> i32 {
        self.1
    }
}

/// Occupancy grid as stored in map files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMap {
    pub width: i32,
    pub height: i32,
    pub resolution_m: f64,
    #[serde(default)]
    pub occupied: BTreeSet<Cell>,
    pub base: Cell,
    #[serde(default)]
    pub recovery: Vec<Cell>,
}

impl GridMap {
    pub fn empty(width: i32, height: i32, resolution_m: f64) -> Self {
        Self {
            width,
            height,
            resolution_m,
            occupied: BTreeSet::new(),
            base: Cell(0, 0),
            recovery: Vec::new(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SimError> {
        let map: GridMap =
            serde_json::from_slice(bytes).map_err(|e| SimError::InvalidMap(e.to_string()))?;
        map.check()?;
        Ok(map)
    }

    pub fn check(&self) -> Result<(), SimError> {
        if self.width <= 0 || self.height <= 0 {
            return Err(SimError::InvalidMap("dimensions must be positive".into()));
        }
        if !(self.resolution_m > 0.0 && self.resolution_m.is_finite()) {
            return Err(SimError::InvalidMap("resolution must be positive".into()));
        }
        for c in self.occupied.iter().chain(self.recovery.iter()).chain([&self.base]) {
            if !self.in_bounds(*c) {
                return Err(SimError::InvalidMap(format!("cell {c:?} out of bounds")));
            }
        }
        if self.is_occupied(self.base) {
            return Err(SimError::InvalidMap("base cell is occupied".into()));
        }
        if let Some(c) = self.recovery.iter().find(|c| self.is_occupied(**c)) {
            return Err(SimError::InvalidMap(format!("recovery cell {c:?} is occupied")));
        }
        Ok(())
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.occupied.contains(&c)
    }

    /// Cell containing the metric point `(x, y)`.
    pub fn cell_at(&self, x: f64, y: f64) -> Cell {
        Cell(
            (x / self.resolution_m).floor() as i32,
            (y / self.resolution_m).floor() as i32,
        )
    }

    /// Metric centre of a cell.
    pub fn center(&self, c: Cell) -> (f64, f64) {
        (
            (c.0 as f64 + 0.5) * self.resolution_m,
            (c.1 as f64 + 0.5) * self.resolution_m,
        )
    }

    /// Occupied cells grown by `radius` cells (Euclidean distance).
    pub fn inflated(&self, radius: i32) -> Inflated {
        let mut blocked = vec![false; (self.width * self.height) as usize];
        let r2 = radius * radius;
        for o in &self.occupied {
            for dx in -radius..=radius {
                for dy in -radius..=radius {
                    if dx * dx + dy * dy > r2 {
                        continue;
                    }
                    let c = Cell(o.0 + dx, o.1 + dy);
                    if self.in_bounds(c) {
                        blocked[(c.1 * self.width + c.0) as usize] = true;
                    }
                }
            }
        }
        Inflated {
            width: self.width,
            height: self.height,
            blocked,
        }
    }
}

/// Traversability after inflation.
#[derive(Debug, Clone)]
pub struct Inflated {
    width: i32,
    height: i32,
    blocked: Vec<bool>,
}

impl Inflated {
    pub fn is_free(&self, c: Cell) -> bool {
        c.0 >= 0
            && c.1 >= 0
            && c.0 < self.width
            && c.1 < self.height
            && !self.blocked[(c.1 * self.width + c.0) as usize]
    }

    /// Legal 8-connected moves from `c` with their costs. Diagonal moves may
    /// not cut the corner of a blocked cell.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
        const MOVES: [(i32, i32); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        MOVES.iter().filter_map(move |&(dx, dy)| {
            let n = Cell(c.0 + dx, c.1 + dy);
            if !self.is_free(n) {
                return None;
            }
            if dx != 0 && dy != 0 {
                if !self.is_free(Cell(c.0 + dx, c.1)) || !self.is_free(Cell(c.0, c.1 + dy)) {
                    return None;
                }
                Some((n, SQRT2))
            } else {
                Some((n, 1.0))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    g: f64,
    cell: Cell,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // min-heap on f, preferring deeper nodes, then cell order
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = (a.0 - b.0).abs() as f64;
    let dy = (a.1 - b.1).abs() as f64;
    dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)
}

/// Minimum-cost path between two cells, avoiding cells within `inflation`
/// cells of an obstacle.
pub fn plan_path(map: &GridMap, from: Cell, to: Cell, inflation: i32) -> Result<Path, SimError> {
    let grid = map.inflated(inflation);
    plan_on(&grid, from, to)
}

pub fn plan_on(grid: &Inflated, from: Cell, to: Cell) -> Result<Path, SimError> {
    for c in [from, to] {
        if !grid.is_free(c) {
            return Err(SimError::CellOccupied(c));
        }
    }
    if from == to {
        return Ok(Path {
            cells: vec![from],
            cost: 0.0,
        });
    }
    let mut open = BinaryHeap::new();
    let mut g: HashMap<Cell, f64> = HashMap::from([(from, 0.0)]);
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    open.push(Open {
        f: octile(from, to),
        g: 0.0,
        cell: from,
    });
    while let Some(Open { g: gc, cell, .. }) = open.pop() {
        if gc > g[&cell] {
            continue;
        }
        if cell == to {
            let mut cells = vec![to];
            let mut cur = to;
            while let Some(&p) = parent.get(&cur) {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            return Ok(Path { cells, cost: gc });
        }
        for (n, step) in grid.neighbors(cell) {
            let cand = gc + step;
            if g.get(&n).is_none_or(|&old| cand < old - 1e-12) {
                g.insert(n, cand);
                parent.insert(n, cell);
                open.push(Open {
                    f: cand + octile(n, to),
                    g: cand,
                    cell: n,
                });
            }
        }
    }
    Err(SimError::Unreachable { from, to })
}

/// Cost of walking a cell sequence with unit/diagonal steps.
pub fn path_cost(cells: &[Cell]) -> f64 {
    cells
        .windows(2)
        .map(|w| {
            if w[0].0 != w[1].0 && w[0].1 != w[1].1 {
                SQRT2
            } else {
                1.0
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_cell() {
        let m = GridMap::empty(5, 5, 1.0);
        let p = plan_path(&m, Cell(2, 2), Cell(2, 2), 1).unwrap();
        assert_eq!(p.cells, vec![Cell(2, 2)]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn diagonal_across_empty_grid() {
        let m = GridMap::empty(5, 5, 1.0);
        let p = plan_path(&m, Cell(0, 0), Cell(4, 4), 1).unwrap();
        assert!((p.cost - 4.0 * SQRT2).abs() < 1e-12);
        assert_eq!(p.cells.len(), 5);
        assert!((path_cost(&p.cells) - p.cost).abs() < 1e-12);
    }

    #[test]
    fn inflated_corridor_is_unreachable() {
        // walls at y=0 and y=2 leave a one-cell corridor along y=1
        let mut m = GridMap::empty(7, 3, 1.0);
        for x in 0..7 {
            m.occupied.insert(Cell(x, 0));
            m.occupied.insert(Cell(x, 2));
        }
        m.base = Cell(0, 1);
        assert_eq!(
            plan_path(&m, Cell(0, 1), Cell(6, 1), 0).unwrap().cells.len(),
            7
        );
        assert!(matches!(
            plan_path(&m, Cell(0, 1), Cell(6, 1), 1),
            Err(SimError::CellOccupied(_))
        ));
    }

    #[test]
    fn blocked_goal_is_reported_and_wall_is_unreachable() {
        let mut m = GridMap::empty(9, 9, 1.0);
        for y in 0..9 {
            m.occupied.insert(Cell(4, y));
        }
        assert!(matches!(
            plan_path(&m, Cell(0, 0), Cell(4, 4), 1),
            Err(SimError::CellOccupied(Cell(4, 4)))
        ));
        assert!(matches!(
            plan_path(&m, Cell(0, 0), Cell(8, 8), 1),
            Err(SimError::Unreachable { .. })
        ));
    }

    #[test]
    fn no_corner_cutting() {
        let mut m = GridMap::empty(3, 3, 1.0);
        m.occupied.insert(Cell(1, 0));
        let p = plan_path(&m, Cell(0, 0), Cell(2, 1), 0).unwrap();
        // (0,0)->(1,1) would clip (1,0)
        assert_eq!(p.cells, vec![Cell(0, 0), Cell(0, 1), Cell(1, 1), Cell(2, 1)]);
    }

    #[test]
    fn map_validation() {
        let doc = br#"{"width": 4, "height": 4, "resolution_m": 0.5, "occupied": [[1,1]], "base": [0,0], "recovery": [[3,3]]}"#;
        let m = GridMap::from_json(doc).unwrap();
        assert!(m.is_occupied(Cell(1, 1)));
        let bad = br#"{"width": 4, "height": 4, "resolution_m": 0.5, "occupied": [[0,0]], "base": [0,0], "recovery": []}"#;
        assert!(GridMap::from_json(bad).is_err());
        let bad = br#"{"width": 4, "height": 4, "resolution_m": 0, "occupied": [], "base": [0,0], "recovery": []}"#;
        assert!(GridMap::from_json(bad).is_err());
        let bad = br#"{"width": 4, "height": 4, "resolution_m": 1, "occupied": [], "base": [0,0], "recovery": [[1,1]], "z": 1}"#;
        assert!(GridMap::from_json(bad).is_err());
    }
}
