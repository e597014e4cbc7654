//! Continuous 2-D point maze on a wall grid.
//!
//! World coordinates put `x` along columns and `y` along rows, with row 0 the
//! first line of the layout text. A position maps to the cell
//! `(floor(y / cell_size), floor(x / cell_size))`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CELL_SIZE: f64 = 1.0;
pub const DEFAULT_ACTION_BOUND: f64 = 0.25;
pub const DEFAULT_GOAL_TOL: f64 = 0.3;
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 400;

/// Distance kept between a blocked position and the wall face.
pub const CONTACT_MARGIN: f64 = 1e-4;

pub const LAYOUT_IDS: [&str; 3] = ["corridor-s", "rooms-4", "spiral"];

const CORRIDOR_S: [&str; 8] = [
    "########",
    "#......#",
    "######.#",
    "#......#",
    "#.######",
    "#......#",
    "#......#",
    "########",
];

const ROOMS_4: [&str; 11] = [
    "###########",
    "#....#....#",
    "#....#....#",
    "#.........#",
    "#....#....#",
    "##.#####.##",
    "#....#....#",
    "#....#....#",
    "#.........#",
    "#....#....#",
    "###########",
];

const SPIRAL: [&str; 13] = [
    "#############",
    "#...........#",
    "###########.#",
    "#.........#.#",
    "#.#######.#.#",
    "#.#.....#.#.#",
    "#.#.###.#.#.#",
    "#.#.#...#.#.#",
    "#.#.#####.#.#",
    "#.#.......#.#",
    "#.#########.#",
    "#...........#",
    "#############",
];

/// Bit-exact text of a built-in layout.
pub fn layout_text(id: &str) -> Result<&'static [&'static str]> {
    match id {
        "corridor-s" => Ok(&CORRIDOR_S),
        "rooms-4" => Ok(&ROOMS_4),
        "spiral" => Ok(&SPIRAL),
        other => Err(Error::InvalidLayout(format!("unknown layout id `{other}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MazeState {
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub name: String,
    rows: usize,
    cols: usize,
    /// Row-major wall mask, `true` = wall.
    walls: Vec<bool>,
    pub cell_size: f64,
    pub action_bound: f64,
    pub goal_tol: f64,
    pub max_episode_steps: usize,
    pub seed: u64,
}

impl MazeSpec {
    /// Built-in layout with default geometry.
    pub fn new(layout: &str, seed: u64) -> Result<Self> {
        let text = layout_text(layout)?;
        Self::from_text(
            layout,
            text,
            DEFAULT_CELL_SIZE,
            DEFAULT_ACTION_BOUND,
            DEFAULT_GOAL_TOL,
            DEFAULT_MAX_EPISODE_STEPS,
            seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_text(
        name: &str,
        lines: &[&str],
        cell_size: f64,
        action_bound: f64,
        goal_tol: f64,
        max_episode_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.len());
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidLayout("empty layout".into()));
        }
        let mut walls = Vec::with_capacity(rows * cols);
        for (r, line) in lines.iter().enumerate() {
            if line.len() != cols {
                return Err(Error::InvalidLayout(format!("row {r} has ragged width")));
            }
            for ch in line.chars() {
                walls.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(Error::InvalidLayout(format!(
                            "unexpected character `{other}` in row {r}"
                        )))
                    }
                });
            }
        }
        if !(cell_size > 0.0) {
            return Err(Error::InvalidLayout("cell_size must be positive".into()));
        }
        if !(goal_tol > 0.0 && goal_tol < cell_size / 2.0) {
            return Err(Error::InvalidLayout(
                "goal_tol must lie in (0, cell_size / 2)".into(),
            ));
        }
        if !(action_bound > 0.0 && action_bound <= cell_size) {
            return Err(Error::InvalidLayout(
                "action_bound must lie in (0, cell_size]".into(),
            ));
        }
        if max_episode_steps == 0 {
            return Err(Error::InvalidLayout("max_episode_steps must be positive".into()));
        }
        let spec = Self {
            name: name.to_string(),
            rows,
            cols,
            walls,
            cell_size,
            action_bound,
            goal_tol,
            max_episode_steps,
            seed,
        };
        let free = spec.free_cells();
        if free.is_empty() {
            return Err(Error::InvalidLayout("layout has no free cells".into()));
        }
        let reach = spec.bfs_from(free[0]);
        if reach.iter().zip(&spec.walls).any(|(d, &w)| !w && d.is_none()) {
            return Err(Error::InvalidLayout(
                "free cells are not a single connected component".into(),
            ));
        }
        Ok(spec)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        cell.row >= self.rows || cell.col >= self.cols || self.walls[cell.row * self.cols + cell.col]
    }

    fn is_wall_signed(&self, row: i64, col: i64) -> bool {
        row < 0 || col < 0 || self.is_wall(Cell {
            row: row as usize,
            col: col as usize,
        })
    }

    pub fn cell_index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for row in 0..self.rows {
            for col in 0..self.cols {
                let c = Cell { row, col };
                if !self.is_wall(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn cell_of(&self, pos: [f64; 2]) -> Cell {
        let col = (pos[0] / self.cell_size).floor().max(0.0) as usize;
        let row = (pos[1] / self.cell_size).floor().max(0.0) as usize;
        Cell { row, col }
    }

    pub fn cell_center(&self, cell: Cell) -> [f64; 2] {
        [
            (cell.col as f64 + 0.5) * self.cell_size,
            (cell.row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Extent of the world bounding box `[0, cols*cs] x [0, rows*cs]`.
    pub fn world_size(&self) -> [f64; 2] {
        [self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size]
    }

    pub fn is_free(&self, pos: [f64; 2]) -> bool {
        pos.iter().all(|v| v.is_finite() && *v >= 0.0) && !self.is_wall(self.cell_of(pos))
    }

    /// BFS step counts from `start` to every cell (`None` for walls/unreachable).
    pub fn bfs_from(&self, start: Cell) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.rows * self.cols];
        if self.is_wall(start) {
            return dist;
        }
        let mut queue = VecDeque::new();
        dist[self.cell_index(start)] = Some(0);
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.cell_index(c)].expect("queued cells have a distance");
            for n in self.neighbors(c) {
                let idx = self.cell_index(n);
                if dist[idx].is_none() {
                    dist[idx] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Free 4-neighbours in the fixed order up, down, left, right.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        const D: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        D.iter().filter_map(move |&(dr, dc)| {
            let (r, k) = (c.row as i64 + dr, c.col as i64 + dc);
            if self.is_wall_signed(r, k) {
                None
            } else {
                Some(Cell {
                    row: r as usize,
                    col: k as usize,
                })
            }
        })
    }

    pub fn clip_action(&self, action: [f64; 2]) -> [f64; 2] {
        let d = self.action_bound;
        [clip(action[0], d), clip(action[1], d)]
    }

    /// Apply a displacement with axis-separable wall sliding (x first, then y).
    pub fn step(&self, state: MazeState, action: [f64; 2]) -> MazeState {
        let a = self.clip_action(action);
        let [mut x, mut y] = state.pos;
        let cs = self.cell_size;

        let row = (y / cs).floor() as i64;
        let col = (x / cs).floor() as i64;
        let nx = x + a[0];
        let ncol = (nx / cs).floor() as i64;
        x = if ncol != col && self.is_wall_signed(row, ncol) {
            if a[0] > 0.0 {
                nx.min((col + 1) as f64 * cs - CONTACT_MARGIN).max(x)
            } else {
                nx.max(col as f64 * cs + CONTACT_MARGIN).min(x)
            }
        } else {
            nx
        };

        let col = (x / cs).floor() as i64;
        let ny = y + a[1];
        let nrow = (ny / cs).floor() as i64;
        y = if nrow != row && self.is_wall_signed(nrow, col) {
            if a[1] > 0.0 {
                ny.min((row + 1) as f64 * cs - CONTACT_MARGIN).max(y)
            } else {
                ny.max(row as f64 * cs + CONTACT_MARGIN).min(y)
            }
        } else {
            ny
        };
        MazeState { pos: [x, y] }
    }

    /// Goal test: Euclidean distance at most `goal_tol`.
    pub fn reached(&self, s: [f64; 2], g: [f64; 2]) -> bool {
        reached(s, g, self.goal_tol)
    }

    /// Layout rendered back to `#`/`.` text.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(if self.walls[r * self.cols + c] { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

fn clip(v: f64, bound: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-bound, bound)
    }
}

pub fn reached(s: [f64; 2], g: [f64; 2], tol: f64) -> bool {
    let dx = s[0] - g[0];
    let dy = s[1] - g[1];
    (dx * dx + dy * dy).sqrt() <= tol
}
