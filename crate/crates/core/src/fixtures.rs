//! Synthetic stand-ins for the licensed hand asset and image dataset.
//!
//! The fixture mesh is a closed, finger-like tube with exactly 778 vertices,
//! laid out in the hand frame of [`crate::view`]: fingertip at +y, palmar
//! surface toward +z, radial side toward +x. Rings are listed from the
//! fingertip down to the wrist.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::fs;
use std::io;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::grid_builder::{build_segmentation, hints_to_json, OrientationHint};
use crate::hand_model::{ContactVector, HandMesh, Part, PartLabeling, PartSegmentation, SegmentationFile};
use crate::view::ViewAxis;

const TIP_CAP_RINGS: [usize; 2] = [8, 16];
const BODY_RING: usize = 24;
const BODY_RINGS: usize = 31;
const WRIST_CAP_RING: usize = 8;

/// (name, ring count) of the body bands, fingertip to wrist.
const BANDS: [(&str, usize); 8] = [
    ("index_distal", 4),
    ("index_middle", 4),
    ("index_proximal", 4),
    ("index_base", 3),
    ("palm_distal", 4),
    ("palm_middle", 4),
    ("palm_proximal", 4),
    ("wrist", 4),
];

/// Sector order used for part names; each sector spans 6 of the 24 ring slots.
const SECTORS: [(ViewAxis, [usize; 6]); 4] = [
    (ViewAxis::Palmar, [3, 4, 5, 6, 7, 8]),
    (ViewAxis::Dorsal, [15, 16, 17, 18, 19, 20]),
    (ViewAxis::Radial, [21, 22, 23, 0, 1, 2]),
    (ViewAxis::Ulnar, [9, 10, 11, 12, 13, 14]),
];

struct Layout {
    tip: u32,
    cap_rings: Vec<Vec<u32>>,
    body_rings: Vec<Vec<u32>>,
    wrist_ring: Vec<u32>,
    wrist: u32,
}

fn layout() -> Layout {
    let mut next = 0u32;
    let mut take = |n: usize| {
        let ids: Vec<u32> = (next..next + n as u32).collect();
        next += n as u32;
        ids
    };
    let tip = take(1)[0];
    let cap_rings = TIP_CAP_RINGS.iter().map(|&n| take(n)).collect();
    let body_rings = (0..BODY_RINGS).map(|_| take(BODY_RING)).collect();
    let wrist_ring = take(WRIST_CAP_RING);
    let wrist = take(1)[0];
    Layout { tip, cap_rings, body_rings, wrist_ring, wrist }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Cross-section half-widths (radial, palmar) at body ring `r`.
fn section(r: usize) -> (f64, f64) {
    let t = r as f64 / (BODY_RINGS - 1) as f64;
    let palm = smoothstep((t - 0.3) / 0.25);
    let wrist = smoothstep((t - 0.85) / 0.15);
    (0.55 + 1.15 * palm - 0.35 * wrist, 0.45 + 0.25 * palm - 0.05 * wrist)
}

fn ring_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * (k as f64 + 0.5) / n as f64).collect()
}

/// Triangulates the band between two closed rings of possibly different sizes.
fn stitch(a: &[u32], b: &[u32], faces: &mut Vec<[u32; 3]>) {
    let (n, m) = (a.len(), b.len());
    let angle = |k: usize, len: usize| TAU * (k as f64 + 0.5) / len as f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n || j < m {
        let next_a = angle(i + 1, n);
        let next_b = angle(j + 1, m);
        if j >= m || (i < n && next_a <= next_b) {
            faces.push([a[i % n], b[j % m], a[(i + 1) % n]]);
            i += 1;
        } else {
            faces.push([a[i % n], b[j % m], b[(j + 1) % m]]);
            j += 1;
        }
    }
}

fn fan(apex: u32, ring: &[u32], faces: &mut Vec<[u32; 3]>) {
    for k in 0..ring.len() {
        faces.push([apex, ring[k], ring[(k + 1) % ring.len()]]);
    }
}

/// The 778-vertex synthetic hand mesh.
pub fn fixture_mesh() -> HandMesh {
    let lay = layout();
    let mut vertices = vec![[0.0; 3]; 778];
    let top_y = 10.0;
    let body_top = 9.2;
    let body_bottom = 0.4;
    vertices[lay.tip as usize] = [0.0, top_y, 0.0];
    let (a0, b0) = section(0);
    for (ring, (&n, frac)) in lay.cap_rings.iter().zip(TIP_CAP_RINGS.iter().zip([0.45, 0.85])) {
        let y = top_y - (top_y - body_top) * frac * frac;
        for (&v, th) in ring.iter().zip(ring_angles(n)) {
            vertices[v as usize] = [a0 * frac * th.cos(), y, b0 * frac * th.sin()];
        }
    }
    for (r, ring) in lay.body_rings.iter().enumerate() {
        let y = body_top - (body_top - body_bottom) * r as f64 / (BODY_RINGS - 1) as f64;
        let (a, b) = section(r);
        for (&v, th) in ring.iter().zip(ring_angles(BODY_RING)) {
            vertices[v as usize] = [a * th.cos(), y, b * th.sin()];
        }
    }
    let (aw, bw) = section(BODY_RINGS - 1);
    for (&v, th) in lay.wrist_ring.iter().zip(ring_angles(WRIST_CAP_RING)) {
        vertices[v as usize] = [0.55 * aw * th.cos(), 0.15, 0.55 * bw * th.sin()];
    }
    vertices[lay.wrist as usize] = [0.0, 0.0, 0.0];

    let mut faces = Vec::new();
    fan(lay.tip, &lay.cap_rings[0], &mut faces);
    stitch(&lay.cap_rings[0], &lay.cap_rings[1], &mut faces);
    stitch(&lay.cap_rings[1], &lay.body_rings[0], &mut faces);
    for pair in lay.body_rings.windows(2) {
        stitch(&pair[0], &pair[1], &mut faces);
    }
    stitch(&lay.body_rings[BODY_RINGS - 1], &lay.wrist_ring, &mut faces);
    fan(lay.wrist, &lay.wrist_ring, &mut faces);
    HandMesh::new(vertices, faces).expect("fixture mesh is valid")
}

fn band_ranges() -> Vec<(&'static str, std::ops::Range<usize>)> {
    let mut start = 0;
    BANDS
        .iter()
        .map(|&(name, n)| {
            let r = start..start + n;
            start += n;
            (name, r)
        })
        .collect()
}

/// Detailed labeling (34 parts) and one orientation hint per part.
pub fn fixture_labeling_and_hints() -> (PartLabeling, Vec<OrientationHint>) {
    let lay = layout();
    let mut parts = Vec::new();
    let mut hints = Vec::new();
    let mut push = |name: String, ids: Vec<u32>, seeds: Vec<u32>, view: ViewAxis| {
        let index = parts.len();
        parts.push(Part { name, index, vertex_ids: ids });
        hints.push(OrientationHint { part_index: index, distal_seeds: seeds, view_axis: view });
    };

    let mut tip = vec![lay.tip];
    tip.extend(lay.cap_rings.concat());
    push("index_fingertip".into(), tip, vec![lay.tip], ViewAxis::Palmar);

    for (band, rings) in band_ranges() {
        for (view, slots) in SECTORS {
            let ids: Vec<u32> = rings
                .clone()
                .flat_map(|r| slots.iter().map(move |&s| (r, s)))
                .map(|(r, s)| lay.body_rings[r][s])
                .collect();
            let seeds = slots.iter().map(|&s| lay.body_rings[rings.start][s]).collect();
            push(format!("{band}_{}", view.name()), ids, seeds, view);
        }
    }

    let mut end = lay.wrist_ring.clone();
    end.push(lay.wrist);
    push("wrist_end".into(), end, lay.wrist_ring.clone(), ViewAxis::Palmar);

    (PartLabeling::new(778, parts).expect("fixture labeling is a partition"), hints)
}

/// Coarse labeling in the style of a per-segment hand model (6 parts).
pub fn coarse_labeling_and_hints() -> (PartLabeling, Vec<OrientationHint>) {
    let lay = layout();
    let mut parts = Vec::new();
    let mut hints = Vec::new();
    let mut push = |name: &str, ids: Vec<u32>, seeds: Vec<u32>| {
        let index = parts.len();
        parts.push(Part { name: name.into(), index, vertex_ids: ids });
        hints.push(OrientationHint { part_index: index, distal_seeds: seeds, view_axis: ViewAxis::Palmar });
    };
    let mut tip = vec![lay.tip];
    tip.extend(lay.cap_rings.concat());
    push("fingertip", tip, vec![lay.tip]);
    let rings = |r: std::ops::Range<usize>| -> Vec<u32> { r.flat_map(|i| lay.body_rings[i].clone()).collect() };
    push("finger_distal", rings(0..4), lay.body_rings[0].clone());
    push("finger_middle", rings(4..8), lay.body_rings[4].clone());
    push("finger_proximal", rings(8..12), lay.body_rings[8].clone());
    push("palm", rings(12..27), lay.body_rings[12].clone());
    let mut wrist = rings(27..31);
    wrist.extend(&lay.wrist_ring);
    wrist.push(lay.wrist);
    push("wrist", wrist, lay.body_rings[27].clone());
    (PartLabeling::new(778, parts).expect("coarse labeling is a partition"), hints)
}

pub fn fixture_segmentation() -> PartSegmentation {
    let mesh = fixture_mesh();
    let (labeling, hints) = fixture_labeling_and_hints();
    build_segmentation(&mesh, &labeling, &hints).expect("fixture grids build").0
}

pub fn coarse_segmentation() -> PartSegmentation {
    let mesh = fixture_mesh();
    let (labeling, hints) = coarse_labeling_and_hints();
    build_segmentation(&mesh, &labeling, &hints).expect("coarse grids build").0
}

fn labeling_json(labeling: &PartLabeling) -> String {
    let file = SegmentationFile {
        version: crate::hand_model::SEGMENTATION_FORMAT_VERSION,
        part_count: labeling.parts().len(),
        parts: labeling
            .parts()
            .iter()
            .map(|p| crate::hand_model::PartRecord {
                name: p.name.clone(),
                index: p.index,
                vertex_ids: p.vertex_ids.clone(),
                grid: None,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("labeling serializes")
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

pub struct SyntheticSample {
    pub id: String,
    pub image: RgbImage,
    pub gt: ContactVector,
}

/// Mesh-local contact blobs: 1-2 BFS balls of radius 1-4 around random
/// vertices. Sample 3 (when present) has no contact at all.
pub fn synthetic_samples(mesh: &HandMesh, count: usize, seed: u64) -> Vec<SyntheticSample> {
    let adj = mesh.adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut gt = ContactVector::zeros(mesh.vertex_count());
            if i != 3 {
                let blobs = rng.random_range(1..=2);
                for _ in 0..blobs {
                    let centre = rng.random_range(0..mesh.vertex_count()) as u32;
                    let radius = rng.random_range(1..=4);
                    for v in ball(&adj, centre, radius) {
                        gt.set(v, true);
                    }
                }
            }
            SyntheticSample { id: format!("synth_{i:03}"), image: synthetic_image(&mut rng), gt }
        })
        .collect()
}

fn ball(adj: &[Vec<u32>], centre: u32, radius: usize) -> Vec<u32> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[centre as usize] = 0;
    let mut queue = VecDeque::from([centre]);
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        out.push(v);
        let d = dist[v as usize];
        if d == radius {
            continue;
        }
        for &w in &adj[v as usize] {
            if dist[w as usize] == usize::MAX {
                dist[w as usize] = d + 1;
                queue.push_back(w);
            }
        }
    }
    out
}

fn synthetic_image(rng: &mut ChaCha8Rng) -> RgbImage {
    let (w, h) = (96u32, 96u32);
    let bg = [rng.random_range(40..200u8), rng.random_range(40..200u8), rng.random_range(40..200u8)];
    let (ox, oy) = (rng.random_range(20.0..76.0f64), rng.random_range(20.0..76.0f64));
    let (rx, ry) = (rng.random_range(8.0..24.0f64), rng.random_range(8.0..24.0f64));
    let (hx, hy) = (rng.random_range(30.0..66.0f64), rng.random_range(30.0..66.0f64));
    RgbImage::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        if ((fx - ox) / rx).powi(2) + ((fy - oy) / ry).powi(2) <= 1.0 {
            Rgb([30, 90, 200])
        } else if ((fx - hx) / 10.0).powi(2) + ((fy - hy) / 18.0).powi(2) <= 1.0 {
            Rgb([224, 172, 140])
        } else {
            Rgb([bg[0], bg[1].saturating_add((y / 4) as u8), bg[2]])
        }
    })
}

/// Writes `images/*.png` and `manifest.jsonl` into `dir`.
pub fn write_synthetic_dataset(dir: &Path, mesh: &HandMesh, count: usize, seed: u64) -> io::Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    let mut manifest = String::new();
    for s in synthetic_samples(mesh, count, seed) {
        let rel = format!("images/{}.png", s.id);
        s.image
            .save_with_format(dir.join(&rel), image::ImageFormat::Png)
            .map_err(io::Error::other)?;
        let line = json!({ "id": s.id, "image_path": rel, "gt_contact": s.gt, "hand": "right" });
        manifest.push_str(&line.to_string());
        manifest.push('\n');
    }
    fs::write(dir.join("manifest.jsonl"), manifest)
}

/// Writes the full fixture asset set into `dir`.
pub fn write_fixture_assets(dir: &Path, samples: usize, seed: u64) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mesh = fixture_mesh();
    fs::write(dir.join("hand.obj"), mesh.to_obj())?;

    let (labeling, hints) = fixture_labeling_and_hints();
    fs::write(dir.join("labeling_detailed.json"), labeling_json(&labeling))?;
    fs::write(dir.join("hints_detailed.json"), hints_to_json(&hints))?;
    fs::write(dir.join("segmentation_detailed.json"), fixture_segmentation().to_json())?;

    let (coarse, coarse_hints) = coarse_labeling_and_hints();
    fs::write(dir.join("labeling_coarse.json"), labeling_json(&coarse))?;
    fs::write(dir.join("hints_coarse.json"), hints_to_json(&coarse_hints))?;
    fs::write(dir.join("segmentation_coarse.json"), coarse_segmentation().to_json())?;

    write_synthetic_dataset(&dir.join("synthetic"), &mesh, samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_mesh_is_standard_and_closed() {
        let mesh = fixture_mesh();
        mesh.require_standard().unwrap();
        // closed 2-manifold of genus 0: every edge shared by exactly two faces
        let mut edges = std::collections::HashMap::new();
        for f in mesh.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
        let euler = mesh.vertex_count() as i64 - edges.len() as i64 + mesh.faces().len() as i64;
        assert_eq!(euler, 2);
    }

    #[test]
    fn fixture_segmentations_build() {
        let seg = fixture_segmentation();
        assert_eq!(seg.part_count(), 34);
        assert_eq!(seg.grid(0).row_lengths(), vec![1, 8, 16]);
        let palmar = seg.part_index("index_distal_palmar").unwrap();
        assert_eq!(seg.grid(palmar).row_lengths(), vec![6, 6, 6, 6]);
        assert_eq!(coarse_segmentation().part_count(), 6);
    }

    #[test]
    fn synthetic_samples_are_local_and_deterministic() {
        let mesh = fixture_mesh();
        let a = synthetic_samples(&mesh, 20, 7);
        let b = synthetic_samples(&mesh, 20, 7);
        let seg = fixture_segmentation();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.gt, y.gt);
            assert_eq!(x.image, y.image);
            let touched: std::collections::BTreeSet<usize> = x.gt.ones().map(|v| seg.owner_of(v)).collect();
            assert!(touched.len() < seg.part_count());
        }
        assert_eq!(a[3].gt.count_ones(), 0);
    }
}
