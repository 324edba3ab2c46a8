//! Shortest paths over free occupancy cells (6-connected, unit steps).

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::{CellKey, CellState, WorldMap};
use crate::{Result, Vec3};

const NEIGHBOURS: [[i32; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Breadth-first step counts from one free cell to every free cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    source: CellKey,
    steps: Vec<u32>,
    cell_size: f64,
}

impl DistanceField {
    pub fn source(&self) -> CellKey {
        self.source
    }

    /// Travel cost in metres, `None` if unreachable or outside the grid.
    pub fn cost(&self, map: &WorldMap, cell: &CellKey) -> Option<f64> {
        let idx = map.cell_index(cell)?;
        match self.steps[idx] {
            u32::MAX => None,
            s => Some(s as f64 * self.cell_size),
        }
    }

    pub fn steps(&self, map: &WorldMap, cell: &CellKey) -> Option<u32> {
        let idx = map.cell_index(cell)?;
        (self.steps[idx] != u32::MAX).then_some(self.steps[idx])
    }
}

impl WorldMap {
    fn free_neighbours(&self, cell: CellKey) -> impl Iterator<Item = (CellKey, usize)> + '_ {
        NEIGHBOURS.iter().filter_map(move |d| {
            let n = CellKey([cell.0[0] + d[0], cell.0[1] + d[1], cell.0[2] + d[2]]);
            let idx = self.cell_index(&n)?;
            (self.cells[idx] == CellState::Free).then_some((n, idx))
        })
    }

    /// BFS from the free cell containing `from`.
    pub fn distance_field(&self, from: &Vec3) -> Result<DistanceField> {
        let source = self.require_free(from)?;
        let mut steps = vec![u32::MAX; self.cells.len()];
        let mut queue = VecDeque::new();
        steps[self.cell_index(&source).unwrap()] = 0;
        queue.push_back(source);
        while let Some(cell) = queue.pop_front() {
            let here = steps[self.cell_index(&cell).unwrap()];
            for (n, idx) in self.free_neighbours(cell) {
                if steps[idx] == u32::MAX {
                    steps[idx] = here + 1;
                    queue.push_back(n);
                }
            }
        }
        Ok(DistanceField {
            source,
            steps,
            cell_size: self.config.cell_size,
        })
    }

    /// A* cell path from `from` to `to`, both inclusive; `None` if unreachable.
    pub fn shortest_path(&self, from: &Vec3, to: &Vec3) -> Result<Option<Vec<CellKey>>> {
        let start = self.require_free(from)?;
        let goal = self.require_free(to)?;
        let h = |c: &CellKey| -> u32 { (0..3).map(|a| c.0[a].abs_diff(goal.0[a])).sum() };

        let n = self.cells.len();
        let mut g = vec![u32::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let start_idx = self.cell_index(&start).unwrap();
        let goal_idx = self.cell_index(&goal).unwrap();
        g[start_idx] = 0;
        // (f, g-tiebreak, index); min-heap, lower index first on equal keys
        let mut open = BinaryHeap::new();
        open.push(Reverse((h(&start), 0u32, start_idx)));
        while let Some(Reverse((_, cost, idx))) = open.pop() {
            if cost > g[idx] {
                continue;
            }
            if idx == goal_idx {
                let mut path = vec![goal];
                let mut cur = idx;
                while parent[cur] != usize::MAX {
                    cur = parent[cur];
                    path.push(self.cell_from_index(cur));
                }
                path.reverse();
                return Ok(Some(path));
            }
            let cell = self.cell_from_index(idx);
            for (nb, nidx) in self.free_neighbours(cell) {
                let next = cost + 1;
                if next < g[nidx] {
                    g[nidx] = next;
                    parent[nidx] = idx;
                    open.push(Reverse((next + h(&nb), next, nidx)));
                }
            }
        }
        Ok(None)
    }

    /// Travel cost in metres between two free positions, `None` if unreachable.
    pub fn path_cost(&self, from: &Vec3, to: &Vec3) -> Result<Option<f64>> {
        Ok(self
            .shortest_path(from, to)?
            .map(|p| (p.len() - 1) as f64 * self.config.cell_size))
    }
}
