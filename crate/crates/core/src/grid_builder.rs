//! Builds part-wise vertex grids from mesh topology.
//!
//! Rows are breadth-first distance layers from the part's distal seed(s)
//! over the part's induced edge graph, so row 0 is the most distal. Within a
//! row, vertices run left to right in the part's canonical view, ties broken
//! by ascending vertex index.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::{GridSpec, HandMesh, HandModelError, Part, PartLabeling, PartSegmentation};
use crate::view::{dot, ViewAxis};

/// Consecutive within-row vertices further apart than this many edges are flagged.
pub const MAX_ROW_HOPS: usize = 2;

#[derive(Debug, Error)]
pub enum GridBuildError {
    #[error("part {part:?} is not connected: {unreached} vertices unreachable from the distal seeds")]
    DisconnectedPart { part: String, unreached: usize },
    #[error("seed vertex {seed} is not in part {part:?}")]
    SeedNotInPart { part: String, seed: u32 },
    #[error("hint for part {0:?} has no distal seed")]
    EmptySeeds(String),
    #[error("no orientation hint for part {0:?}")]
    MissingHint(String),
    #[error("hints file: {0}")]
    Hints(String),
    #[error(transparent)]
    Model(#[from] HandModelError),
}

/// Supervision for one part: where its distal end is and how it is viewed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrientationHint {
    pub part_index: usize,
    pub distal_seeds: Vec<u32>,
    pub view_axis: ViewAxis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HintRecord {
    part_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distal_seed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distal_seeds: Option<Vec<u32>>,
    view_axis: ViewAxis,
}

/// Parses the hints file: `[{part_index, distal_seed | distal_seeds, view_axis}]`.
pub fn parse_hints(text: &str) -> Result<Vec<OrientationHint>, GridBuildError> {
    let records: Vec<HintRecord> =
        serde_json::from_str(text).map_err(|e| GridBuildError::Hints(e.to_string()))?;
    records
        .into_iter()
        .map(|r| {
            let seeds = match (r.distal_seed, r.distal_seeds) {
                (Some(s), None) => vec![s],
                (None, Some(s)) => s,
                (Some(_), Some(_)) => {
                    return Err(GridBuildError::Hints(format!(
                        "part {}: give either distal_seed or distal_seeds, not both",
                        r.part_index
                    )))
                }
                (None, None) => {
                    return Err(GridBuildError::Hints(format!(
                        "part {}: missing distal_seed",
                        r.part_index
                    )))
                }
            };
            Ok(OrientationHint { part_index: r.part_index, distal_seeds: seeds, view_axis: r.view_axis })
        })
        .collect()
}

pub fn load_hints(path: impl AsRef<Path>) -> Result<Vec<OrientationHint>, GridBuildError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| GridBuildError::Hints(format!("{}: {e}", path.display())))?;
    parse_hints(&text)
}

pub fn hints_to_json(hints: &[OrientationHint]) -> String {
    let records: Vec<HintRecord> = hints
        .iter()
        .map(|h| {
            let (single, multi) = if h.distal_seeds.len() == 1 {
                (Some(h.distal_seeds[0]), None)
            } else {
                (None, Some(h.distal_seeds.clone()))
            };
            HintRecord { part_index: h.part_index, distal_seed: single, distal_seeds: multi, view_axis: h.view_axis }
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("hints serialize")
}

/// Consecutive vertices of a row that are too far apart on the mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowAdjacencyWarning {
    pub part: String,
    pub row: usize,
    pub position: usize,
    pub from: u32,
    pub to: u32,
    /// `None` when the two vertices are more than [`MAX_ROW_HOPS`] apart.
    pub hops: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BuiltGrid {
    pub spec: GridSpec,
    pub warnings: Vec<RowAdjacencyWarning>,
}

/// Edge graph of the mesh restricted to a vertex subset, keyed by global id.
struct InducedGraph {
    neighbours: HashMap<u32, Vec<u32>>,
}

impl InducedGraph {
    fn new(mesh: &HandMesh, members: &BTreeSet<u32>) -> Self {
        let mut neighbours: HashMap<u32, Vec<u32>> = members.iter().map(|&v| (v, Vec::new())).collect();
        for f in mesh.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                if members.contains(&a) && members.contains(&b) {
                    neighbours.get_mut(&a).expect("member").push(b);
                    neighbours.get_mut(&b).expect("member").push(a);
                }
            }
        }
        for list in neighbours.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbours }
    }

    /// Multi-source BFS distances; unreached vertices are absent.
    fn distances(&self, sources: &[u32]) -> HashMap<u32, usize> {
        let mut dist = HashMap::with_capacity(self.neighbours.len());
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist.insert(s, 0).is_none() {
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for &w in &self.neighbours[&v] {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                    e.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Edge distance between `a` and `b` if it is at most `limit`.
    fn hops_within(&self, a: u32, b: u32, limit: usize) -> Option<usize> {
        if a == b {
            return Some(0);
        }
        let mut frontier = vec![a];
        let mut seen = BTreeSet::from([a]);
        for depth in 1..=limit {
            let mut next = Vec::new();
            for v in frontier {
                for &w in &self.neighbours[&v] {
                    if w == b {
                        return Some(depth);
                    }
                    if seen.insert(w) {
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        None
    }
}

fn row_warnings(part: &str, graph: &InducedGraph, rows: &[Vec<u32>]) -> Vec<RowAdjacencyWarning> {
    let mut warnings = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for (i, pair) in row.windows(2).enumerate() {
            if !graph.neighbours.contains_key(&pair[0]) || !graph.neighbours.contains_key(&pair[1]) {
                continue;
            }
            if graph.hops_within(pair[0], pair[1], MAX_ROW_HOPS).is_none() {
                warnings.push(RowAdjacencyWarning {
                    part: part.to_string(),
                    row: r,
                    position: i,
                    from: pair[0],
                    to: pair[1],
                    hops: None,
                });
            }
        }
    }
    warnings
}

/// Builds the grid of one part.
pub fn build_part_grid(
    mesh: &HandMesh,
    part: &Part,
    hint: &OrientationHint,
) -> Result<BuiltGrid, GridBuildError> {
    if hint.distal_seeds.is_empty() {
        return Err(GridBuildError::EmptySeeds(part.name.clone()));
    }
    let members: BTreeSet<u32> = part.vertex_ids.iter().copied().collect();
    if let Some(&seed) = hint.distal_seeds.iter().find(|s| !members.contains(s)) {
        return Err(GridBuildError::SeedNotInPart { part: part.name.clone(), seed });
    }
    let graph = InducedGraph::new(mesh, &members);
    let dist = graph.distances(&hint.distal_seeds);
    if dist.len() != members.len() {
        return Err(GridBuildError::DisconnectedPart {
            part: part.name.clone(),
            unreached: members.len() - dist.len(),
        });
    }

    let depth = dist.values().copied().max().unwrap_or(0);
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); depth + 1];
    for &v in &members {
        rows[dist[&v]].push(v);
    }
    let right = hint.view_axis.right();
    for row in &mut rows {
        row.sort_by(|&a, &b| {
            let xa = dot(mesh.position(a), right);
            let xb = dot(mesh.position(b), right);
            xa.total_cmp(&xb).then(a.cmp(&b))
        });
    }

    let warnings = row_warnings(&part.name, &graph, &rows);
    for w in &warnings {
        log::debug!(
            "part {:?} row {}: vertices {} and {} are more than {MAX_ROW_HOPS} edges apart",
            w.part,
            w.row,
            w.from,
            w.to
        );
    }
    if !warnings.is_empty() {
        log::warn!("part {:?}: {} row neighbours more than {MAX_ROW_HOPS} edges apart", part.name, warnings.len());
    }
    Ok(BuiltGrid {
        spec: GridSpec { part_index: part.index, row_vertex_ids: rows },
        warnings,
    })
}

/// Builds grids for every part of a labeling and assembles the segmentation.
pub fn build_segmentation(
    mesh: &HandMesh,
    labeling: &PartLabeling,
    hints: &[OrientationHint],
) -> Result<(PartSegmentation, Vec<RowAdjacencyWarning>), GridBuildError> {
    let by_part: HashMap<usize, &OrientationHint> = hints.iter().map(|h| (h.part_index, h)).collect();
    let built: Vec<BuiltGrid> = labeling
        .parts()
        .par_iter()
        .map(|part| {
            let hint = by_part
                .get(&part.index)
                .ok_or_else(|| GridBuildError::MissingHint(part.name.clone()))?;
            build_part_grid(mesh, part, hint)
        })
        .collect::<Result<_, _>>()?;
    let mut warnings = Vec::new();
    let mut grids = Vec::with_capacity(built.len());
    for b in built {
        warnings.extend(b.warnings);
        grids.push(b.spec);
    }
    let seg = PartSegmentation::new(labeling.clone(), grids)?;
    Ok((seg, warnings))
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct PartDiagnostics {
    pub part: String,
    pub part_index: usize,
    pub bijection_ok: bool,
    pub bijection_detail: Option<String>,
    /// Mean edge distance of each row from row 0; strictly increasing when well ordered.
    pub row_mean_distance: Vec<f64>,
    pub monotone: bool,
    pub adjacency_warnings: Vec<RowAdjacencyWarning>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub parts: Vec<PartDiagnostics>,
}

impl GridReport {
    pub fn error_count(&self) -> usize {
        self.parts
            .iter()
            .map(|p| usize::from(!p.bijection_ok) + usize::from(!p.monotone))
            .sum()
    }

    pub fn warning_count(&self) -> usize {
        self.parts.iter().map(|p| p.adjacency_warnings.len()).sum()
    }
}

/// Report-only check of grids against a labeling; never fails.
///
/// `grids` are matched to parts by `part_index`; a missing grid is a
/// bijection failure.
pub fn validate_grids(labeling: &PartLabeling, grids: &[GridSpec], mesh: &HandMesh) -> GridReport {
    let by_part: HashMap<usize, &GridSpec> = grids.iter().map(|g| (g.part_index, g)).collect();
    let parts = labeling
        .parts()
        .iter()
        .map(|part| {
            let members: BTreeSet<u32> = part.vertex_ids.iter().copied().collect();
            let Some(grid) = by_part.get(&part.index) else {
                return PartDiagnostics {
                    part: part.name.clone(),
                    part_index: part.index,
                    bijection_ok: false,
                    bijection_detail: Some("no grid".into()),
                    row_mean_distance: Vec::new(),
                    monotone: false,
                    adjacency_warnings: Vec::new(),
                };
            };
            let bijection_detail = bijection_problem(&members, grid);
            let graph = InducedGraph::new(mesh, &members);
            let first_row: Vec<u32> = grid
                .row_vertex_ids
                .first()
                .map(|r| r.iter().copied().filter(|v| members.contains(v)).collect())
                .unwrap_or_default();
            let dist = graph.distances(&first_row);
            let mut row_mean_distance = Vec::with_capacity(grid.num_rows());
            let mut reachable = true;
            for row in &grid.row_vertex_ids {
                let ds: Vec<usize> = row.iter().filter_map(|v| dist.get(v).copied()).collect();
                if ds.len() != row.len() || ds.is_empty() {
                    reachable = false;
                }
                let mean = if ds.is_empty() {
                    f64::NAN
                } else {
                    ds.iter().sum::<usize>() as f64 / ds.len() as f64
                };
                row_mean_distance.push(mean);
            }
            let monotone = reachable && row_mean_distance.windows(2).all(|w| w[1] > w[0]);
            PartDiagnostics {
                part: part.name.clone(),
                part_index: part.index,
                bijection_ok: bijection_detail.is_none(),
                bijection_detail,
                row_mean_distance,
                monotone,
                adjacency_warnings: row_warnings(&part.name, &graph, &grid.row_vertex_ids),
            }
        })
        .collect();
    GridReport { parts }
}

fn bijection_problem(members: &BTreeSet<u32>, grid: &GridSpec) -> Option<String> {
    let flat: Vec<u32> = grid.row_vertex_ids.concat();
    let unique: BTreeSet<u32> = flat.iter().copied().collect();
    if unique.len() != flat.len() {
        return Some("a vertex appears more than once in the grid".into());
    }
    let missing: Vec<u32> = members.difference(&unique).copied().collect();
    let extra: Vec<u32> = unique.difference(members).copied().collect();
    match (missing.is_empty(), extra.is_empty()) {
        (true, true) => None,
        _ => Some(format!("missing vertices {missing:?}, foreign vertices {extra:?}")),
    }
}

pub fn validate_segmentation(seg: &PartSegmentation, mesh: &HandMesh) -> GridReport {
    validate_grids(seg.labeling(), seg.grids(), mesh)
}
