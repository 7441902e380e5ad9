//! Part segmentation, per-part vertex grids and the grid <-> vertex mappings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContactVector, HandMesh, HandModelError};

pub const SEGMENTATION_FORMAT_VERSION: u32 = 1;

/// A named region of the hand owning a set of vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    pub name: String,
    pub index: usize,
    pub vertex_ids: Vec<u32>,
}

/// Ordered rows of a part's vertices: row 0 is the most distal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub part_index: usize,
    pub row_vertex_ids: Vec<Vec<u32>>,
}

impl GridSpec {
    pub fn num_rows(&self) -> usize {
        self.row_vertex_ids.len()
    }

    pub fn row_lengths(&self) -> Vec<usize> {
        self.row_vertex_ids.iter().map(Vec::len).collect()
    }

    pub fn total_vertices(&self) -> usize {
        self.row_vertex_ids.iter().map(Vec::len).sum()
    }

    /// Single-row variant with rows concatenated in order.
    pub fn flattened(&self) -> GridSpec {
        GridSpec {
            part_index: self.part_index,
            row_vertex_ids: vec![self.row_vertex_ids.concat()],
        }
    }
}

/// Binary per-part grids keyed by part name, as produced by the dense stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseGridPrediction {
    pub grids: BTreeMap<String, Vec<Vec<u8>>>,
}

impl DenseGridPrediction {
    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn get(&self, part: &str) -> Option<&Vec<Vec<u8>>> {
        self.grids.get(part)
    }

    pub fn insert(&mut self, part: impl Into<String>, grid: Vec<Vec<u8>>) {
        self.grids.insert(part.into(), grid);
    }
}

/// Union of the vertices of a set of parts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveVertexSet {
    vertex_ids: BTreeSet<u32>,
}

impl ActiveVertexSet {
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        Self { vertex_ids: ids.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_ids.is_empty()
    }

    pub fn contains(&self, v: u32) -> bool {
        self.vertex_ids.contains(&v)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.vertex_ids.iter().copied()
    }
}

/// Part labeling without grids; the input of the grid builder.
#[derive(Debug, Clone, PartialEq)]
pub struct PartLabeling {
    vertex_count: usize,
    parts: Vec<Part>,
}

impl PartLabeling {
    /// Validates names, indices and the partition of `0..vertex_count`.
    pub fn new(vertex_count: usize, mut parts: Vec<Part>) -> Result<Self, HandModelError> {
        parts.sort_by_key(|p| p.index);
        check_parts(vertex_count, &parts)?;
        Ok(Self { vertex_count, parts })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }
}

fn check_parts(vertex_count: usize, parts: &[Part]) -> Result<(), HandModelError> {
    let mut names = BTreeSet::new();
    for (pos, part) in parts.iter().enumerate() {
        if part.index != pos {
            return Err(HandModelError::InvalidSegmentation(format!(
                "part indices must be unique and dense in [0, {}); part {:?} has index {} at position {pos}",
                parts.len(),
                part.name,
                part.index
            )));
        }
        if part.name.is_empty() {
            return Err(HandModelError::InvalidSegmentation(format!(
                "part {} has an empty name",
                part.index
            )));
        }
        if !names.insert(part.name.as_str()) {
            return Err(HandModelError::InvalidSegmentation(format!(
                "duplicate part name {:?}",
                part.name
            )));
        }
        if part.vertex_ids.is_empty() {
            return Err(HandModelError::InvalidSegmentation(format!(
                "part {:?} has no vertices",
                part.name
            )));
        }
        if let Some(&bad) = part.vertex_ids.iter().find(|&&v| v as usize >= vertex_count) {
            return Err(HandModelError::InvalidSegmentation(format!(
                "part {:?} references vertex {bad} >= vertex count {vertex_count}",
                part.name
            )));
        }
        let unique: BTreeSet<u32> = part.vertex_ids.iter().copied().collect();
        if unique.len() != part.vertex_ids.len() {
            return Err(HandModelError::InvalidSegmentation(format!(
                "part {:?} lists a vertex more than once",
                part.name
            )));
        }
    }

    let mut owners = vec![0usize; vertex_count];
    for part in parts {
        for &v in &part.vertex_ids {
            owners[v as usize] += 1;
        }
    }
    let overlapping: Vec<u32> = (0..vertex_count as u32)
        .filter(|&v| owners[v as usize] > 1)
        .collect();
    if !overlapping.is_empty() {
        return Err(HandModelError::Partition {
            message: "vertices assigned to more than one part".into(),
            vertex_ids: overlapping,
        });
    }
    let uncovered: Vec<u32> = (0..vertex_count as u32)
        .filter(|&v| owners[v as usize] == 0)
        .collect();
    if !uncovered.is_empty() {
        return Err(HandModelError::Partition {
            message: "vertices not assigned to any part".into(),
            vertex_ids: uncovered,
        });
    }
    Ok(())
}

/// Parts, their grids and the lookup tables between grid cells and vertices.
#[derive(Debug, Clone)]
pub struct PartSegmentation {
    labeling: PartLabeling,
    grids: Vec<GridSpec>,
    by_name: HashMap<String, usize>,
    owner: Vec<u32>,
    cell: Vec<(u32, u32)>,
}

impl PartSegmentation {
    /// Validates the labeling and one grid per part (matched by `part_index`).
    pub fn new(labeling: PartLabeling, mut grids: Vec<GridSpec>) -> Result<Self, HandModelError> {
        let parts = labeling.parts();
        grids.sort_by_key(|g| g.part_index);
        if grids.len() != parts.len()
            || grids.iter().enumerate().any(|(i, g)| g.part_index != i)
        {
            return Err(HandModelError::InvalidSegmentation(format!(
                "expected exactly one grid for each of the {} parts",
                parts.len()
            )));
        }
        let mut owner = vec![0u32; labeling.vertex_count()];
        let mut cell = vec![(0u32, 0u32); labeling.vertex_count()];
        for (part, grid) in parts.iter().zip(&grids) {
            check_grid(part, grid)?;
            for &v in &part.vertex_ids {
                owner[v as usize] = part.index as u32;
            }
            for (r, row) in grid.row_vertex_ids.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    cell[v as usize] = (r as u32, c as u32);
                }
            }
        }
        let by_name = parts.iter().map(|p| (p.name.clone(), p.index)).collect();
        Ok(Self { labeling, grids, by_name, owner, cell })
    }

    pub fn vertex_count(&self) -> usize {
        self.labeling.vertex_count()
    }

    pub fn part_count(&self) -> usize {
        self.labeling.parts().len()
    }

    pub fn parts(&self) -> &[Part] {
        self.labeling.parts()
    }

    pub fn grids(&self) -> &[GridSpec] {
        &self.grids
    }

    pub fn labeling(&self) -> &PartLabeling {
        &self.labeling
    }

    pub fn part(&self, index: usize) -> &Part {
        &self.labeling.parts()[index]
    }

    pub fn grid(&self, index: usize) -> &GridSpec {
        &self.grids[index]
    }

    pub fn part_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn part_by_name(&self, name: &str) -> Result<&Part, HandModelError> {
        self.part_index(name)
            .map(|i| self.part(i))
            .ok_or_else(|| HandModelError::UnknownPart(name.to_string()))
    }

    pub fn part_names(&self) -> impl Iterator<Item = &str> {
        self.parts().iter().map(|p| p.name.as_str())
    }

    /// Index of the part owning vertex `v`.
    pub fn owner_of(&self, v: u32) -> usize {
        self.owner[v as usize] as usize
    }

    /// (row, column) of vertex `v` inside its part's grid.
    pub fn cell_of(&self, v: u32) -> (usize, usize) {
        let (r, c) = self.cell[v as usize];
        (r as usize, c as usize)
    }

    /// Same parts with every grid collapsed to a single row.
    pub fn flattened(&self) -> PartSegmentation {
        let grids = self.grids.iter().map(GridSpec::flattened).collect();
        PartSegmentation::new(self.labeling.clone(), grids).expect("flattening preserves validity")
    }

    /// Checks that the segmentation covers the given mesh.
    pub fn check_mesh(&self, mesh: &HandMesh) -> Result<(), HandModelError> {
        if mesh.vertex_count() != self.vertex_count() {
            return Err(HandModelError::InvalidSegmentation(format!(
                "segmentation covers {} vertices but the mesh has {}",
                self.vertex_count(),
                mesh.vertex_count()
            )));
        }
        Ok(())
    }

    pub fn to_file(&self) -> SegmentationFile {
        SegmentationFile {
            version: SEGMENTATION_FORMAT_VERSION,
            part_count: self.part_count(),
            parts: self
                .parts()
                .iter()
                .zip(&self.grids)
                .map(|(p, g)| PartRecord {
                    name: p.name.clone(),
                    index: p.index,
                    vertex_ids: p.vertex_ids.clone(),
                    grid: Some(GridRecord {
                        num_rows: g.num_rows(),
                        row_lengths: g.row_lengths(),
                        row_vertex_ids: g.row_vertex_ids.clone(),
                    }),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("segmentation serializes")
    }
}

fn check_grid(part: &Part, grid: &GridSpec) -> Result<(), HandModelError> {
    let mismatch = |message: String| HandModelError::GridMismatch {
        part: part.name.clone(),
        message,
    };
    if grid.num_rows() == 0 {
        return Err(mismatch("grid has no rows".into()));
    }
    if let Some(r) = grid.row_vertex_ids.iter().position(Vec::is_empty) {
        return Err(mismatch(format!("row {r} is empty")));
    }
    let total = grid.total_vertices();
    if total != part.vertex_ids.len() {
        return Err(mismatch(format!(
            "row lengths sum to {total}, but the part has {} vertices",
            part.vertex_ids.len()
        )));
    }
    let mut in_grid: Vec<u32> = grid.row_vertex_ids.concat();
    let mut in_part = part.vertex_ids.clone();
    in_grid.sort_unstable();
    in_part.sort_unstable();
    if in_grid != in_part {
        return Err(mismatch(
            "grid vertices are not a permutation of the part's vertices".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// On-disk segmentation (or labeling, when `grid` is absent). Vertex ids are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationFile {
    pub version: u32,
    pub part_count: usize,
    pub parts: Vec<PartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub name: String,
    pub index: usize,
    pub vertex_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub num_rows: usize,
    pub row_lengths: Vec<usize>,
    pub row_vertex_ids: Vec<Vec<u32>>,
}

impl SegmentationFile {
    fn check_header(&self) -> Result<(), HandModelError> {
        if self.version != SEGMENTATION_FORMAT_VERSION {
            return Err(HandModelError::Parse(format!(
                "unsupported segmentation version {}",
                self.version
            )));
        }
        if self.part_count != self.parts.len() {
            return Err(HandModelError::Parse(format!(
                "part_count is {} but {} parts are listed",
                self.part_count,
                self.parts.len()
            )));
        }
        Ok(())
    }

    pub fn into_labeling(self, vertex_count: usize) -> Result<PartLabeling, HandModelError> {
        self.check_header()?;
        let parts = self
            .parts
            .into_iter()
            .map(|r| Part { name: r.name, index: r.index, vertex_ids: r.vertex_ids })
            .collect();
        PartLabeling::new(vertex_count, parts)
    }

    pub fn into_segmentation(self, vertex_count: usize) -> Result<PartSegmentation, HandModelError> {
        self.check_header()?;
        let mut grids = Vec::with_capacity(self.parts.len());
        for record in &self.parts {
            let grid = record.grid.as_ref().ok_or_else(|| HandModelError::GridMismatch {
                part: record.name.clone(),
                message: "part has no grid".into(),
            })?;
            if grid.row_lengths.len() != grid.num_rows || grid.row_vertex_ids.len() != grid.num_rows {
                return Err(HandModelError::GridMismatch {
                    part: record.name.clone(),
                    message: format!(
                        "num_rows is {} but row_lengths has {} entries and row_vertex_ids {} rows",
                        grid.num_rows,
                        grid.row_lengths.len(),
                        grid.row_vertex_ids.len()
                    ),
                });
            }
            for (r, (len, row)) in grid.row_lengths.iter().zip(&grid.row_vertex_ids).enumerate() {
                if *len != row.len() {
                    return Err(HandModelError::GridMismatch {
                        part: record.name.clone(),
                        message: format!("row {r} declares length {len} but lists {} vertices", row.len()),
                    });
                }
            }
            grids.push(GridSpec {
                part_index: record.index,
                row_vertex_ids: grid.row_vertex_ids.clone(),
            });
        }
        let labeling = self.into_labeling(vertex_count)?;
        PartSegmentation::new(labeling, grids)
    }
}

fn read_segmentation_file(path: &Path) -> Result<SegmentationFile, HandModelError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HandModelError::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| HandModelError::Parse(format!("{}: {e}", path.display())))
}

/// Loads a segmentation with grids and validates it against the mesh.
pub fn load_segmentation(
    path: impl AsRef<Path>,
    mesh: &HandMesh,
) -> Result<PartSegmentation, HandModelError> {
    read_segmentation_file(path.as_ref())?.into_segmentation(mesh.vertex_count())
}

/// Loads a part labeling (grids optional and ignored).
pub fn load_labeling(path: impl AsRef<Path>, mesh: &HandMesh) -> Result<PartLabeling, HandModelError> {
    read_segmentation_file(path.as_ref())?.into_labeling(mesh.vertex_count())
}

// ---------------------------------------------------------------------------
// Mappings
// ---------------------------------------------------------------------------

/// Union of the vertex sets of the named parts.
pub fn vertices_of_parts<'a>(
    seg: &PartSegmentation,
    part_names: impl IntoIterator<Item = &'a str>,
) -> Result<ActiveVertexSet, HandModelError> {
    let mut ids = BTreeSet::new();
    for name in part_names {
        ids.extend(seg.part_by_name(name)?.vertex_ids.iter().copied());
    }
    Ok(ActiveVertexSet { vertex_ids: ids })
}

/// Scatters grid cells back onto vertices. Vertices outside `active`, and
/// vertices of parts without a grid, stay non-contact.
pub fn grids_to_contact(
    seg: &PartSegmentation,
    grids: &DenseGridPrediction,
    active: &ActiveVertexSet,
) -> Result<ContactVector, HandModelError> {
    let mut contact = ContactVector::zeros(seg.vertex_count());
    for (name, rows) in &grids.grids {
        let index = seg
            .part_index(name)
            .ok_or_else(|| HandModelError::UnknownPart(name.clone()))?;
        let spec = seg.grid(index);
        let shape_ok = rows.len() == spec.num_rows()
            && rows.iter().zip(&spec.row_vertex_ids).all(|(a, b)| a.len() == b.len());
        if !shape_ok {
            return Err(HandModelError::Shape {
                part: name.clone(),
                message: format!(
                    "expected row lengths {:?}, got {:?}",
                    spec.row_lengths(),
                    rows.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
        for (values, ids) in rows.iter().zip(&spec.row_vertex_ids) {
            for (&value, &v) in values.iter().zip(ids) {
                match value {
                    0 => {}
                    1 => {
                        if active.contains(v) {
                            contact.set(v, true);
                        }
                    }
                    other => {
                        return Err(HandModelError::Shape {
                            part: name.clone(),
                            message: format!("non-binary cell value {other}"),
                        })
                    }
                }
            }
        }
    }
    Ok(contact)
}

/// Reads every part's grid off a contact vector.
pub fn contact_to_grids(seg: &PartSegmentation, contact: &ContactVector) -> DenseGridPrediction {
    assert_eq!(contact.len(), seg.vertex_count(), "contact length must equal vertex count");
    let mut out = DenseGridPrediction::default();
    for (part, spec) in seg.parts().iter().zip(seg.grids()) {
        out.insert(part.name.clone(), grid_values(spec, contact));
    }
    out
}

/// The grid of one part read off a contact vector.
pub fn grid_values(spec: &GridSpec, contact: &ContactVector) -> Vec<Vec<u8>> {
    spec.row_vertex_ids
        .iter()
        .map(|row| row.iter().map(|&v| u8::from(contact.get(v))).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Six vertices, two parts: "a" = {0,1,2} in rows [[0,2],[1]], "b" = {3,4,5} in one row.
    fn small() -> PartSegmentation {
        let labeling = PartLabeling::new(
            6,
            vec![
                Part { name: "b".into(), index: 1, vertex_ids: vec![3, 4, 5] },
                Part { name: "a".into(), index: 0, vertex_ids: vec![0, 1, 2] },
            ],
        )
        .unwrap();
        PartSegmentation::new(
            labeling,
            vec![
                GridSpec { part_index: 0, row_vertex_ids: vec![vec![0, 2], vec![1]] },
                GridSpec { part_index: 1, row_vertex_ids: vec![vec![5, 3, 4]] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn lookup_tables() {
        let seg = small();
        assert_eq!(seg.part(0).name, "a");
        assert_eq!(seg.owner_of(4), 1);
        assert_eq!(seg.cell_of(2), (0, 1));
        assert_eq!(seg.cell_of(1), (1, 0));
        assert_eq!(seg.cell_of(3), (0, 1));
    }

    #[test]
    fn overlap_lists_offending_vertices() {
        let err = PartLabeling::new(
            4,
            vec![
                Part { name: "a".into(), index: 0, vertex_ids: vec![0, 1, 2] },
                Part { name: "b".into(), index: 1, vertex_ids: vec![2, 3] },
            ],
        )
        .unwrap_err();
        match err {
            HandModelError::Partition { vertex_ids, .. } => assert_eq!(vertex_ids, vec![2]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_names_and_sparse_indices_rejected() {
        let dup = PartLabeling::new(
            2,
            vec![
                Part { name: "a".into(), index: 0, vertex_ids: vec![0] },
                Part { name: "a".into(), index: 1, vertex_ids: vec![1] },
            ],
        );
        assert!(matches!(dup, Err(HandModelError::InvalidSegmentation(_))));
        let sparse = PartLabeling::new(
            2,
            vec![
                Part { name: "a".into(), index: 0, vertex_ids: vec![0] },
                Part { name: "b".into(), index: 2, vertex_ids: vec![1] },
            ],
        );
        assert!(matches!(sparse, Err(HandModelError::InvalidSegmentation(_))));
    }

    #[test]
    fn grid_that_is_not_a_permutation_is_rejected() {
        let labeling = PartLabeling::new(
            2,
            vec![Part { name: "a".into(), index: 0, vertex_ids: vec![0, 1] }],
        )
        .unwrap();
        let err = PartSegmentation::new(
            labeling,
            vec![GridSpec { part_index: 0, row_vertex_ids: vec![vec![0, 0]] }],
        )
        .unwrap_err();
        assert!(matches!(err, HandModelError::GridMismatch { .. }));
    }

    #[test]
    fn grid_cells_map_to_their_vertices() {
        let seg = small();
        let mut grids = DenseGridPrediction::default();
        grids.insert("a", vec![vec![1, 0], vec![1]]);
        grids.insert("b", vec![vec![0, 1, 0]]);
        let all = vertices_of_parts(&seg, ["a", "b"]).unwrap();
        let c = grids_to_contact(&seg, &grids, &all).unwrap();
        assert_eq!(c.ones().collect::<Vec<_>>(), vec![0, 1, 3]);

        let only_b = vertices_of_parts(&seg, ["b"]).unwrap();
        let c = grids_to_contact(&seg, &grids, &only_b).unwrap();
        assert_eq!(c.ones().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn shape_mismatch_is_shape_error() {
        let seg = small();
        let mut grids = DenseGridPrediction::default();
        grids.insert("a", vec![vec![1, 0, 1]]);
        let all = vertices_of_parts(&seg, ["a"]).unwrap();
        assert!(matches!(
            grids_to_contact(&seg, &grids, &all),
            Err(HandModelError::Shape { .. })
        ));
    }

    #[test]
    fn unknown_part_name_is_reported() {
        let seg = small();
        match vertices_of_parts(&seg, ["a", "zz"]) {
            Err(HandModelError::UnknownPart(name)) => assert_eq!(name, "zz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flattened_keeps_row_order() {
        let seg = small().flattened();
        assert_eq!(seg.grid(0).row_vertex_ids, vec![vec![0, 2, 1]]);
        assert_eq!(seg.cell_of(1), (0, 2));
    }

    #[test]
    fn file_round_trip() {
        let seg = small();
        let file: SegmentationFile = serde_json::from_str(&seg.to_json()).unwrap();
        let again = file.into_segmentation(6).unwrap();
        assert_eq!(again.grids(), seg.grids());
        assert_eq!(again.parts(), seg.parts());
    }

    #[test]
    fn row_length_field_must_match_rows() {
        let mut file = small().to_file();
        file.parts[0].grid.as_mut().unwrap().row_lengths = vec![1, 1];
        assert!(matches!(
            file.into_segmentation(6),
            Err(HandModelError::GridMismatch { .. })
        ));
    }
}
