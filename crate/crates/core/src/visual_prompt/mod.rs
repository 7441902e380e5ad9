//! Multi-view renderings of the segmented hand used as visual prompts.
//!
//! The part prompt shows every view side by side with faces coloured by part
//! and each part's index printed once, in the view where most of its vertices
//! are visible. The full prompt stacks the part prompt on top of a second row
//! that overlays every part's vertex grid: a dot on each row's first visible
//! vertex, a polyline through the row's visible vertices, and a connector from
//! the end of one row to the start of the next.
//!
//! Everything geometric is also returned as data ([`RenderedPrompt`]) so
//! positions can be checked without reading pixels.

mod camera;
mod raster;

pub use camera::{project, OrthoCamera, Projection};

use std::collections::BTreeMap;
use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{GenericImage as _, ImageFormat, Rgb, RgbImage};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hand_model::{HandMesh, PartSegmentation};
use crate::view::ViewAxis;
use raster::{draw_disc, draw_label, draw_line, edge, DepthTarget};

/// JPEG quality used for model payloads.
pub const JPEG_QUALITY: u8 = 90;

/// Depth tolerance of the vertex visibility test, relative to the bbox diagonal.
pub const DEPTH_EPSILON_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
    #[error("invalid view config: {0}")]
    InvalidConfig(String),
    #[error("segmentation covers {seg} vertices but the mesh has {mesh}")]
    VertexCountMismatch { seg: usize, mesh: usize },
    #[error("image encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ViewConfig {
    pub views: Vec<ViewAxis>,
    pub view_width: u32,
    pub view_height: u32,
    pub background: [u8; 3],
    pub palette_seed: u64,
    /// Pixels kept free around the fitted mesh in each view.
    pub margin: f64,
    pub label_scale: u32,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            views: ViewAxis::ALL.to_vec(),
            view_width: 256,
            view_height: 256,
            background: [255, 255, 255],
            palette_seed: 0,
            margin: 12.0,
            label_scale: 2,
        }
    }
}

impl ViewConfig {
    fn check(&self) -> Result<(), RenderError> {
        if self.views.is_empty() {
            return Err(RenderError::InvalidConfig("at least one view is required".into()));
        }
        if self.view_width == 0 || self.view_height == 0 {
            return Err(RenderError::InvalidConfig("view dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Pixel rectangle of one view inside the composed image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViewRect {
    pub axis: ViewAxis,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl ViewRect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x as f64
            && p[1] >= self.y as f64
            && p[0] <= (self.x + self.width) as f64
            && p[1] <= (self.y + self.height) as f64
    }

    fn clip(&self) -> (i64, i64, i64, i64) {
        (
            self.x as i64,
            self.y as i64,
            (self.x + self.width) as i64,
            (self.y + self.height) as i64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectedVertex {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub visible: bool,
}

impl ProjectedVertex {
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Vertex projections for one entry of [`RenderedPrompt::layout`], in image coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct ViewProjection {
    pub rect: usize,
    pub vertices: Vec<ProjectedVertex>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartLabel {
    pub part_index: usize,
    pub rect: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowOverlay {
    pub row: usize,
    /// Vertex carrying the row-start dot, if any vertex of the row is visible.
    pub first_vertex: Option<u32>,
    pub dot: Option<[f64; 2]>,
    /// Visible vertices of the row in grid order.
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOverlay {
    pub part_index: usize,
    pub rect: usize,
    pub rows: Vec<RowOverlay>,
    /// Segments from a row's last visible vertex to the next row's first visible vertex.
    pub connectors: Vec<[[f64; 2]; 2]>,
}

impl GridOverlay {
    pub fn dot_count(&self) -> usize {
        self.rows.iter().filter(|r| r.dot.is_some()).count()
    }

    pub fn segment_count(&self) -> usize {
        self.rows.iter().map(|r| r.polyline.len().saturating_sub(1)).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RenderedPrompt {
    #[serde(skip)]
    pub image: RgbImage,
    pub width: u32,
    pub height: u32,
    pub legend: BTreeMap<usize, [u8; 3]>,
    pub layout: Vec<ViewRect>,
    pub projected: Vec<ViewProjection>,
    pub labels: Vec<PartLabel>,
    pub overlays: Vec<GridOverlay>,
}

impl RenderedPrompt {
    pub fn to_jpeg(&self) -> Result<Vec<u8>, RenderError> {
        encode_jpeg(&self.image, JPEG_QUALITY)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        encode_png(&self.image)
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prompt metadata serializes")
    }
}

pub fn encode_jpeg(image: &RgbImage, quality: u8) -> Result<Vec<u8>, RenderError> {
    if image.width() == 0 || image.height() == 0 {
        return Err(RenderError::Encode("empty raster".into()));
    }
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality)
        .encode_image(image)
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, RenderError> {
    if image.width() == 0 || image.height() == 0 {
        return Err(RenderError::Encode("empty raster".into()));
    }
    let mut out = Cursor::new(Vec::new());
    image
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Deterministic, well-separated colours: golden-ratio hue steps offset by the seed.
pub fn palette(count: usize, seed: u64) -> Vec<[u8; 3]> {
    let offset = (seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64;
    (0..count)
        .map(|i| {
            let h = (offset + i as f64 * 0.618_033_988_749_895).fract();
            let s = if i % 2 == 0 { 0.55 } else { 0.75 };
            let v = if i % 3 == 0 { 0.95 } else { 0.82 };
            hsv_to_rgb(h, s, v)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match i as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// Part owning a face: majority of its three vertices, ties to the lowest index.
pub fn face_part(seg: &PartSegmentation, face: [u32; 3]) -> usize {
    let owners = face.map(|v| seg.owner_of(v));
    if owners[0] == owners[1] || owners[0] == owners[2] {
        owners[0]
    } else if owners[1] == owners[2] {
        owners[1]
    } else {
        *owners.iter().min().expect("three owners")
    }
}

/// One rasterized view in view-local pixel coordinates.
struct ViewRender {
    axis: ViewAxis,
    proj: Vec<Projection>,
    visible: Vec<bool>,
    target: DepthTarget,
}

/// A vertex is visible when no face that does not contain it covers its
/// projected position at a depth nearer than `eps`.
fn vertex_visibility(mesh: &HandMesh, proj: &[Projection], eps: f64) -> Vec<bool> {
    let faces: Vec<([u32; 3], [[f64; 3]; 3], [f64; 4])> = mesh
        .faces()
        .iter()
        .map(|f| {
            let p = f.map(|v| {
                let q = proj[v as usize];
                [q.x, q.y, q.depth]
            });
            let bbox = [
                p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min),
                p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max),
                p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min),
                p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max),
            ];
            (*f, p, bbox)
        })
        .collect();
    (0..proj.len() as u32)
        .map(|v| {
            let q = proj[v as usize];
            let c = [q.x, q.y, 0.0];
            !faces.iter().any(|(f, p, bb)| {
                if f.contains(&v) || q.x < bb[0] || q.x > bb[1] || q.y < bb[2] || q.y > bb[3] {
                    return false;
                }
                let area = edge(p[0], p[1], p[2]);
                if area.abs() < 1e-12 {
                    return false;
                }
                let w = [edge(p[1], p[2], c) / area, edge(p[2], p[0], c) / area, edge(p[0], p[1], c) / area];
                if w.iter().any(|&x| x < -1e-9) {
                    return false;
                }
                let z = w[0] * p[0][2] + w[1] * p[1][2] + w[2] * p[2][2];
                z < q.depth - eps
            })
        })
        .collect()
}

fn render_views(mesh: &HandMesh, seg: &PartSegmentation, cfg: &ViewConfig) -> Result<Vec<ViewRender>, RenderError> {
    cfg.check()?;
    if seg.vertex_count() != mesh.vertex_count() {
        return Err(RenderError::VertexCountMismatch { seg: seg.vertex_count(), mesh: mesh.vertex_count() });
    }
    let eps = DEPTH_EPSILON_FRACTION * mesh.bbox_diagonal();
    cfg.views
        .par_iter()
        .map(|&axis| {
            let cam = OrthoCamera::fit_mesh(axis, mesh, cfg.view_width, cfg.view_height, cfg.margin)?;
            let proj: Vec<Projection> = mesh.vertices().iter().map(|&p| project(p, &cam)).collect();
            let mut target = DepthTarget::new(cfg.view_width, cfg.view_height);
            for (fi, f) in mesh.faces().iter().enumerate() {
                let p = f.map(|v| {
                    let q = proj[v as usize];
                    [q.x, q.y, q.depth]
                });
                target.fill_triangle(p, fi as u32);
            }
            let visible = vertex_visibility(mesh, &proj, eps);
            Ok(ViewRender { axis, proj, visible, target })
        })
        .collect()
}

fn lighten(c: [u8; 3]) -> [u8; 3] {
    c.map(|x| ((x as u16 + 255) / 2) as u8)
}

/// Paints one row of views starting at image row `y0`; returns the rects.
fn paint_views(
    image: &mut RgbImage,
    views: &[ViewRender],
    seg: &PartSegmentation,
    mesh: &HandMesh,
    colors: &[[u8; 3]],
    cfg: &ViewConfig,
    y0: u32,
    pale: bool,
) -> Vec<ViewRect> {
    let face_color: Vec<[u8; 3]> = mesh
        .faces()
        .iter()
        .map(|&f| {
            let c = colors[face_part(seg, f)];
            if pale {
                lighten(c)
            } else {
                c
            }
        })
        .collect();
    views
        .iter()
        .enumerate()
        .map(|(i, view)| {
            let rect = ViewRect {
                axis: view.axis,
                x: i as u32 * cfg.view_width,
                y: y0,
                width: cfg.view_width,
                height: cfg.view_height,
            };
            for y in 0..cfg.view_height {
                for x in 0..cfg.view_width {
                    let id = view.target.ids[(y * cfg.view_width + x) as usize];
                    let c = if id == u32::MAX { cfg.background } else { face_color[id as usize] };
                    image.put_pixel(rect.x + x, rect.y + y, Rgb(c));
                }
            }
            rect
        })
        .collect()
}

fn projections(views: &[ViewRender], rects: &[ViewRect], rect_offset: usize) -> Vec<ViewProjection> {
    views
        .iter()
        .zip(rects)
        .enumerate()
        .map(|(i, (view, rect))| ViewProjection {
            rect: rect_offset + i,
            vertices: view
                .proj
                .iter()
                .zip(&view.visible)
                .map(|(p, &visible)| ProjectedVertex {
                    x: p.x + rect.x as f64,
                    y: p.y + rect.y as f64,
                    depth: p.depth,
                    visible,
                })
                .collect(),
        })
        .collect()
}

/// One label per part, in the view with the most visible vertices (first view on ties).
fn place_labels(seg: &PartSegmentation, projected: &[ViewProjection]) -> Vec<PartLabel> {
    seg.parts()
        .iter()
        .filter_map(|part| {
            let mut best: Option<(usize, usize)> = None;
            for (vi, view) in projected.iter().enumerate() {
                let n = part.vertex_ids.iter().filter(|&&v| view.vertices[v as usize].visible).count();
                if n > 0 && best.is_none_or(|(_, m)| n > m) {
                    best = Some((vi, n));
                }
            }
            let (vi, n) = best?;
            let view = &projected[vi];
            let (sx, sy) = part
                .vertex_ids
                .iter()
                .map(|&v| view.vertices[v as usize])
                .filter(|p| p.visible)
                .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
            Some(PartLabel { part_index: part.index, rect: view.rect, x: sx / n as f64, y: sy / n as f64 })
        })
        .collect()
}

fn draw_labels(image: &mut RgbImage, labels: &[PartLabel], rects: &[ViewRect], cfg: &ViewConfig) {
    for label in labels {
        draw_label(
            image,
            [label.x, label.y],
            &label.part_index.to_string(),
            cfg.label_scale.max(1) as i64,
            Rgb([255, 255, 255]),
            Rgb([0, 0, 0]),
            rects[label.rect].clip(),
        );
    }
}

fn grid_overlays(seg: &PartSegmentation, projected: &[ViewProjection]) -> Vec<GridOverlay> {
    let mut out = Vec::new();
    for view in projected {
        for (part, grid) in seg.parts().iter().zip(seg.grids()) {
            let rows: Vec<RowOverlay> = grid
                .row_vertex_ids
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    let visible: Vec<u32> =
                        row.iter().copied().filter(|&v| view.vertices[v as usize].visible).collect();
                    RowOverlay {
                        row: r,
                        first_vertex: visible.first().copied(),
                        dot: visible.first().map(|&v| view.vertices[v as usize].xy()),
                        polyline: visible.iter().map(|&v| view.vertices[v as usize].xy()).collect(),
                    }
                })
                .collect();
            if rows.iter().all(|r| r.polyline.is_empty()) {
                continue;
            }
            let connectors = rows
                .windows(2)
                .filter_map(|w| Some([*w[0].polyline.last()?, *w[1].polyline.first()?]))
                .collect();
            out.push(GridOverlay { part_index: part.index, rect: view.rect, rows, connectors });
        }
    }
    out
}

fn draw_overlays(image: &mut RgbImage, overlays: &[GridOverlay], rects: &[ViewRect]) {
    let line = Rgb([25, 25, 25]);
    let link = Rgb([110, 110, 110]);
    let dot = Rgb([210, 20, 20]);
    for o in overlays {
        let clip = rects[o.rect].clip();
        for c in &o.connectors {
            draw_line(image, c[0], c[1], link, clip);
        }
        for row in &o.rows {
            for seg in row.polyline.windows(2) {
                draw_line(image, seg[0], seg[1], line, clip);
            }
        }
        for row in &o.rows {
            if let Some(d) = row.dot {
                draw_disc(image, d, 2.0, dot, clip);
            }
        }
    }
}

fn legend(seg: &PartSegmentation, colors: &[[u8; 3]]) -> BTreeMap<usize, [u8; 3]> {
    seg.parts().iter().map(|p| (p.index, colors[p.index])).collect()
}

fn compose_part(
    mesh: &HandMesh,
    seg: &PartSegmentation,
    cfg: &ViewConfig,
    views: &[ViewRender],
    colors: &[[u8; 3]],
) -> RenderedPrompt {
    let width = cfg.view_width * views.len() as u32;
    let mut image = RgbImage::from_pixel(width, cfg.view_height, Rgb(cfg.background));
    let layout = paint_views(&mut image, views, seg, mesh, colors, cfg, 0, false);
    let projected = projections(views, &layout, 0);
    let labels = place_labels(seg, &projected);
    draw_labels(&mut image, &labels, &layout, cfg);
    RenderedPrompt {
        width,
        height: cfg.view_height,
        image,
        legend: legend(seg, colors),
        layout,
        projected,
        labels,
        overlays: Vec::new(),
    }
}

/// Part-index prompt: views side by side, faces coloured by part, one index label per part.
pub fn render_part_prompt(mesh: &HandMesh, seg: &PartSegmentation, cfg: &ViewConfig) -> Result<RenderedPrompt, RenderError> {
    let views = render_views(mesh, seg, cfg)?;
    let colors = palette(seg.part_count(), cfg.palette_seed);
    Ok(compose_part(mesh, seg, cfg, &views, &colors))
}

/// Full prompt: the part prompt on top, grid overlays on the same views below.
pub fn render_full_prompt(mesh: &HandMesh, seg: &PartSegmentation, cfg: &ViewConfig) -> Result<RenderedPrompt, RenderError> {
    Ok(render_prompts(mesh, seg, cfg)?.1)
}

/// Both prompts from a single rasterization pass.
pub fn render_prompts(
    mesh: &HandMesh,
    seg: &PartSegmentation,
    cfg: &ViewConfig,
) -> Result<(RenderedPrompt, RenderedPrompt), RenderError> {
    let views = render_views(mesh, seg, cfg)?;
    let colors = palette(seg.part_count(), cfg.palette_seed);
    let part = compose_part(mesh, seg, cfg, &views, &colors);

    let width = part.width;
    let mut image = RgbImage::from_pixel(width, 2 * cfg.view_height, Rgb(cfg.background));
    image
        .copy_from(&part.image, 0, 0)
        .expect("top row fits");
    let lower = paint_views(&mut image, &views, seg, mesh, &colors, cfg, cfg.view_height, true);
    let lower_projected = projections(&views, &lower, part.layout.len());
    let overlays = grid_overlays(seg, &lower_projected);
    let mut layout = part.layout.clone();
    layout.extend(lower.iter().copied());
    draw_overlays(&mut image, &overlays, &layout);
    let mut projected = part.projected.clone();
    projected.extend(lower_projected);

    let full = RenderedPrompt {
        width,
        height: 2 * cfg.view_height,
        image,
        legend: part.legend.clone(),
        layout,
        projected,
        labels: part.labels.clone(),
        overlays,
    };
    Ok((part, full))
}
