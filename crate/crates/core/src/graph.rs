//! Directed road graph over regions.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::gp::{Region, RegionId};

#[derive(Clone, Debug)]
pub struct RoadGraph {
    regions: Vec<Region>,
    index: HashMap<RegionId, usize>,
    /// Out-neighbours of each region, sorted by region id.
    adjacency: Vec<Vec<RegionId>>,
    max_out_degree: usize,
}

impl RoadGraph {
    pub fn new(regions: Vec<Region>, edges: &[(RegionId, RegionId)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(regions.len());
        for (i, r) in regions.iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(Error::Invalid(format!("duplicate region {:?} in graph", r.id)));
            }
        }
        let mut adjacency = vec![Vec::new(); regions.len()];
        for (a, b) in edges {
            let (Some(&i), true) = (index.get(a), index.contains_key(b)) else {
                return Err(Error::Invalid(format!("edge {a:?} -> {b:?} leaves the graph")));
            };
            adjacency[i].push(*b);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        let max_out_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { regions, index, adjacency, max_out_degree })
    }

    /// Grid with 8-neighbourhood edges between included cells. Cell `(r, c)`
    /// gets id `r * cols + c` and feature `(r, c) / max(rows, cols)`.
    pub fn grid(rows: usize, cols: usize, include: impl Fn(usize, usize) -> bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!("grid must be non-empty, got {rows}x{cols}")));
        }
        let scale = rows.max(cols) as f64;
        let mut regions = Vec::new();
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if !include(r, c) {
                    continue;
                }
                let id = r * cols + c;
                regions.push(Region::new(id, vec![r as f64 / scale, c as f64 / scale])?);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if include(nr, nc) {
                            edges.push((RegionId(id), RegionId(nr * cols + nc)));
                        }
                    }
                }
            }
        }
        Self::new(regions, &edges)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn contains(&self, id: RegionId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn position(&self, id: RegionId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn region(&self, id: RegionId) -> Option<&Region> {
        self.position(id).map(|i| &self.regions[i])
    }

    pub fn neighbors(&self, id: RegionId) -> &[RegionId] {
        self.position(id).map_or(&[], |i| &self.adjacency[i])
    }

    pub fn max_out_degree(&self) -> usize {
        self.max_out_degree
    }

    /// Regions reachable from `start` in at most `hops` moves, sorted by id.
    pub fn reachable(&self, start: RegionId, hops: usize) -> Vec<RegionId> {
        let mut seen = HashMap::new();
        let mut queue = VecDeque::new();
        seen.insert(start, 0usize);
        queue.push_back(start);
        while let Some(s) = queue.pop_front() {
            let d = seen[&s];
            if d == hops {
                continue;
            }
            for &n in self.neighbors(s) {
                if !seen.contains_key(&n) {
                    seen.insert(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        let mut out: Vec<_> = seen.into_keys().collect();
        out.sort_unstable();
        out
    }

    /// Hop distance from every region to the nearest region satisfying
    /// `target` (following edges forward); `usize::MAX` when unreachable.
    pub fn distance_to(&self, target: impl Fn(RegionId) -> bool) -> Vec<usize> {
        let mut reverse = vec![Vec::new(); self.len()];
        for (i, adj) in self.adjacency.iter().enumerate() {
            for n in adj {
                reverse[self.index[n]].push(i);
            }
        }
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for (i, r) in self.regions.iter().enumerate() {
            if target(r.id) {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &p in &reverse[i] {
                if dist[p] == usize::MAX {
                    dist[p] = dist[i] + 1;
                    queue.push_back(p);
                }
            }
        }
        dist
    }
}
