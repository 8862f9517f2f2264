//! Exact 4x4 sudoku oracle: parsing, solving, puzzle generation, and
//! validation.
//!
//! Grids are rendered as four lines of `ab cd`, one row per line, with a space
//! between the two column blocks. Cell values are 1 through 4; 0 marks a
//! blank. The full space of complete grids is small (288), so the solver
//! enumerates exhaustively and the validator is exact.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A 4x4 grid; `cells[row][col]` holds 0 (blank) or 1 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SudokuGrid {
    pub cells: [[u8; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SudokuError {
    #[error("expected 4 grid lines, got {0}")]
    BadLineCount(usize),
    #[error("grid line {line} must look like \"ab cd\" with digits 0-4: {text:?}")]
    BadLine { line: usize, text: String },
}

impl SudokuGrid {
    pub const EMPTY: SudokuGrid = SudokuGrid { cells: [[0; 4]; 4] };

    pub fn is_complete(&self) -> bool {
        self.cells.iter().flatten().all(|&v| v != 0)
    }

    pub fn clue_count(&self) -> usize {
        self.cells.iter().flatten().filter(|&&v| v != 0).count()
    }

    /// Parses the four-line `ab cd` layout. Leading and trailing blank lines
    /// are ignored; the four grid lines themselves must be exact.
    pub fn parse(text: &str) -> Result<SudokuGrid, SudokuError> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if lines.len() != 4 {
            return Err(SudokuError::BadLineCount(lines.len()));
        }
        let mut cells = [[0u8; 4]; 4];
        for (r, line) in lines.iter().enumerate() {
            let bytes = line.as_bytes();
            let ok = bytes.len() == 5
                && bytes[2] == b' '
                && [0usize, 1, 3, 4]
                    .iter()
                    .all(|&i| (b'0'..=b'4').contains(&bytes[i]));
            if !ok {
                return Err(SudokuError::BadLine {
                    line: r + 1,
                    text: String::from(*line),
                });
            }
            for (c, &i) in [0usize, 1, 3, 4].iter().enumerate() {
                cells[r][c] = bytes[i] - b'0';
            }
        }
        Ok(SudokuGrid { cells })
    }

    /// True when `line` has the `ab cd` shape of one grid row.
    pub fn line_shaped(line: &str) -> bool {
        let bytes = line.trim().as_bytes();
        bytes.len() == 5
            && bytes[2] == b' '
            && [0usize, 1, 3, 4]
                .iter()
                .all(|&i| (b'0'..=b'4').contains(&bytes[i]))
    }

    /// Indices of the 2x2 quadrant containing `(row, col)`.
    fn quadrant_cells(q: usize) -> [(usize, usize); 4] {
        let r0 = (q / 2) * 2;
        let c0 = (q % 2) * 2;
        [(r0, c0), (r0, c0 + 1), (r0 + 1, c0), (r0 + 1, c0 + 1)]
    }

    /// True when every filled cell respects the row, column, and quadrant
    /// constraints. Blanks are ignored, so partial grids can be checked.
    pub fn is_consistent(&self) -> bool {
        let distinct = |vals: [u8; 4]| {
            let mut seen = [false; 5];
            for v in vals {
                if v != 0 {
                    if seen[v as usize] {
                        return false;
                    }
                    seen[v as usize] = true;
                }
            }
            true
        };
        for i in 0..4 {
            let row = self.cells[i];
            let col = [
                self.cells[0][i],
                self.cells[1][i],
                self.cells[2][i],
                self.cells[3][i],
            ];
            let quad = Self::quadrant_cells(i).map(|(r, c)| self.cells[r][c]);
            if !distinct(row) || !distinct(col) || !distinct(quad) {
                return false;
            }
        }
        true
    }

    /// Renders the grid in the task's text form: four rows of two
    /// space-separated digit pairs.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(24);
        for (r, row) in self.cells.iter().enumerate() {
            if r > 0 {
                out.push('\n');
            }
            for (c, v) in row.iter().enumerate() {
                if c == 2 {
                    out.push(' ');
                }
                out.push((b'0' + v) as char);
            }
        }
        out
    }
}

impl core::fmt::Display for SudokuGrid {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.render())
    }
}

impl core::str::FromStr for SudokuGrid {
    type Err = SudokuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SudokuGrid::parse(s)
    }
}

impl Serialize for SudokuGrid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for SudokuGrid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        SudokuGrid::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Returns every completion of `puzzle`, in lexicographic cell order.
pub fn solve(puzzle: &SudokuGrid) -> Vec<SudokuGrid> {
    let mut out = Vec::new();
    let mut work = *puzzle;
    let order = [1u8, 2, 3, 4];
    search(&mut work, 0, &order, usize::MAX, &mut out);
    out
}

/// Counts completions, stopping once `limit` have been found.
fn count_solutions(puzzle: &SudokuGrid, limit: usize) -> usize {
    let mut out = Vec::new();
    let mut work = *puzzle;
    let order = [1u8, 2, 3, 4];
    search(&mut work, 0, &order, limit, &mut out);
    out.len()
}

fn search(
    grid: &mut SudokuGrid,
    pos: usize,
    order: &[u8; 4],
    limit: usize,
    out: &mut Vec<SudokuGrid>,
) {
    if out.len() >= limit {
        return;
    }
    if pos == 16 {
        out.push(*grid);
        return;
    }
    let (r, c) = (pos / 4, pos % 4);
    if grid.cells[r][c] != 0 {
        search(grid, pos + 1, order, limit, out);
        return;
    }
    for &v in order {
        if placement_ok(grid, r, c, v) {
            grid.cells[r][c] = v;
            search(grid, pos + 1, order, limit, out);
            grid.cells[r][c] = 0;
            if out.len() >= limit {
                return;
            }
        }
    }
}

fn placement_ok(grid: &SudokuGrid, r: usize, c: usize, v: u8) -> bool {
    for i in 0..4 {
        if grid.cells[r][i] == v || grid.cells[i][c] == v {
            return false;
        }
    }
    let (r0, c0) = ((r / 2) * 2, (c / 2) * 2);
    for dr in 0..2 {
        for dc in 0..2 {
            if grid.cells[r0 + dr][c0 + dc] == v {
                return false;
            }
        }
    }
    true
}

/// Generates a puzzle with a unique solution by carving blanks out of a
/// random complete grid. The uniqueness of the returned puzzle is re-checked
/// before it is returned.
pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> (SudokuGrid, SudokuGrid) {
    let solution = random_complete(rng);
    let mut puzzle = solution;
    let mut positions: Vec<usize> = (0..16).collect();
    positions.shuffle(rng);
    for pos in positions {
        let (r, c) = (pos / 4, pos % 4);
        let saved = puzzle.cells[r][c];
        puzzle.cells[r][c] = 0;
        if count_solutions(&puzzle, 2) != 1 {
            puzzle.cells[r][c] = saved;
        }
    }
    debug_assert_eq!(solve(&puzzle), alloc::vec![solution]);
    (puzzle, solution)
}

/// Generates `count` unique-solution puzzles with their solutions.
pub fn generate_many<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<(SudokuGrid, SudokuGrid)> {
    (0..count).map(|_| generate(rng)).collect()
}

fn random_complete<R: Rng + ?Sized>(rng: &mut R) -> SudokuGrid {
    let mut order = [1u8, 2, 3, 4];
    loop {
        order.shuffle(rng);
        let mut grid = SudokuGrid::EMPTY;
        // Randomize the first row as well so the corner is not biased toward
        // the first value in `order`.
        let mut first = [1u8, 2, 3, 4];
        first.shuffle(rng);
        grid.cells[0] = first;
        let mut out = Vec::new();
        search(&mut grid, 0, &order, 1, &mut out);
        if let Some(found) = out.first() {
            return *found;
        }
    }
}

/// Exact check that `candidate` completes `puzzle`: complete, clue-preserving,
/// and consistent on all twelve row/column/quadrant constraints.
pub fn validate(puzzle: &SudokuGrid, candidate: &SudokuGrid) -> bool {
    if !candidate.is_complete() {
        return false;
    }
    for r in 0..4 {
        for c in 0..4 {
            let clue = puzzle.cells[r][c];
            if clue != 0 && candidate.cells[r][c] != clue {
                return false;
            }
        }
    }
    candidate.is_consistent()
}
