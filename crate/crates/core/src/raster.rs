//! Software rasterization: view and UV G-buffers, view→UV projection with occlusion tests,
//! atlas→view prior rendering and intrinsic rescaling.

use glam::{DVec2, DVec3};
use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{
    texel_center_uv, uv_to_texel, Camera, ImageBuffer, MaterialView, SPrimeMode, TriangleMesh, UVMaterialAtlas,
};

/// Marks pixels/texels not covered by any triangle.
pub const NO_TRIANGLE: u32 = u32::MAX;

const ROW_BAND: usize = 16;
const MIN_DEPTH: f64 = 1e-9;

/// Per-pixel geometry of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGBuffer {
    pub width: usize,
    pub height: usize,
    /// World-space unit normals.
    pub normal: ImageBuffer,
    /// Object-space positions mapped into [0,1]³ by the mesh bounding box.
    pub position: ImageBuffer,
    /// Camera-space depth.
    pub depth: ImageBuffer,
    pub coverage: ImageBuffer,
    pub triangle: Vec<u32>,
    /// Perspective-correct barycentric coordinates of the visible fragment.
    pub barycentric: Vec<[f32; 3]>,
}

impl ViewGBuffer {
    pub fn is_covered(&self, index: usize) -> bool {
        self.triangle[index] != NO_TRIANGLE
    }

    pub fn covered_count(&self) -> usize {
        self.triangle.iter().filter(|&&t| t != NO_TRIANGLE).count()
    }

    /// Object-space point seen at a covered pixel.
    pub fn surface_point(&self, mesh: &TriangleMesh, index: usize) -> Option<DVec3> {
        let tri = self.triangle[index];
        (tri != NO_TRIANGLE).then(|| interpolate(&mesh.corner_positions(tri as usize), self.barycentric[index]))
    }

    /// UV coordinate seen at a covered pixel.
    pub fn surface_uv(&self, mesh: &TriangleMesh, index: usize) -> Option<DVec2> {
        let tri = self.triangle[index];
        (tri != NO_TRIANGLE).then(|| {
            let [a, b, c] = mesh.corner_uvs(tri as usize);
            let w = self.barycentric[index].map(f64::from);
            a * w[0] + b * w[1] + c * w[2]
        })
    }
}

/// Per-texel geometry of the UV layout.
#[derive(Debug, Clone, PartialEq)]
pub struct UVGBuffer {
    pub resolution: usize,
    /// Object-space positions.
    pub position: ImageBuffer,
    /// World-space unit normals.
    pub normal: ImageBuffer,
    pub occupancy: Vec<bool>,
    pub triangle: Vec<u32>,
    /// Indices of occupied texels, ascending.
    pub occupied: Vec<u32>,
    /// Texels written by more than one triangle.
    pub overlapping_texels: usize,
    pub degenerate_triangles: usize,
}

impl UVGBuffer {
    pub fn texel_position(&self, index: usize) -> DVec3 {
        let p = self.position.at(index);
        DVec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    pub fn texel_normal(&self, index: usize) -> DVec3 {
        let n = self.normal.at(index);
        DVec3::new(n[0] as f64, n[1] as f64, n[2] as f64)
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied.len() as f64 / (self.resolution * self.resolution) as f64
    }
}

/// Material priors and geometric conditioning for one generation view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPriorBundle {
    pub albedo: ImageBuffer,
    pub rm: ImageBuffer,
    /// 1 where material has to be generated.
    pub mask: ImageBuffer,
    pub normal: ImageBuffer,
    pub position: ImageBuffer,
    pub depth: ImageBuffer,
    /// Atlas version the priors were rendered from.
    pub atlas_version: u64,
}

impl ViewPriorBundle {
    pub fn mask_pixels(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.5).count()
    }

    pub fn priors(&self) -> MaterialView {
        MaterialView {
            albedo: self.albedo.clone(),
            rm: self.rm.clone(),
        }
    }
}

/// Texel-space materials and view cosines obtained by projecting one view onto the UV layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewProjection {
    pub albedo: ImageBuffer,
    pub rm: ImageBuffer,
    /// Clamped cosine S′ per texel; 0 where the texel is not visible.
    pub s_prime: ImageBuffer,
}

fn interpolate(corners: &[DVec3; 3], w: [f32; 3]) -> DVec3 {
    corners[0] * w[0] as f64 + corners[1] * w[1] as f64 + corners[2] * w[2] as f64
}

struct ScreenTriangle {
    index: u32,
    screen: [DVec2; 3],
    inv_depth: [f64; 3],
    area: f64,
    x_range: (usize, usize),
    y_range: (usize, usize),
}

#[derive(Clone, Copy)]
struct Fragment {
    triangle: u32,
    bary: [f64; 3],
    depth: f64,
}

impl Fragment {
    const EMPTY: Fragment = Fragment {
        triangle: NO_TRIANGLE,
        bary: [0.0; 3],
        depth: f64::INFINITY,
    };
}

/// Pixel index range whose centers (`i + 0.5`) fall within `[lo, hi]`.
fn center_range(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(size as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

fn setup_triangles(mesh: &TriangleMesh, camera: &Camera) -> Vec<ScreenTriangle> {
    let (w, h) = (camera.width as usize, camera.height as usize);
    (0..mesh.triangles().len())
        .filter_map(|t| {
            let corners = mesh.corner_positions(t);
            let cam = corners.map(|p| camera.to_camera(p));
            // triangles touching the camera plane are dropped rather than clipped
            if cam.iter().any(|c| c.z <= MIN_DEPTH) {
                return None;
            }
            let screen = cam.map(|c| DVec2::new(camera.fx * c.x / c.z + camera.cx, camera.fy * c.y / c.z + camera.cy));
            let area = (screen[1] - screen[0]).perp_dot(screen[2] - screen[0]);
            if area.abs() < 1e-12 || !area.is_finite() {
                return None;
            }
            let min = screen[0].min(screen[1]).min(screen[2]);
            let max = screen[0].max(screen[1]).max(screen[2]);
            let x_range = center_range(min.x, max.x, w)?;
            let y_range = center_range(min.y, max.y, h)?;
            Some(ScreenTriangle {
                index: t as u32,
                screen,
                inv_depth: cam.map(|c| 1.0 / c.z),
                area,
                x_range,
                y_range,
            })
        })
        .collect()
}

fn raster_row(y: usize, width: usize, tris: &[ScreenTriangle], candidates: &[u32]) -> Vec<Fragment> {
    let mut row = vec![Fragment::EMPTY; width];
    let py = y as f64 + 0.5;
    for &ti in candidates {
        let tri = &tris[ti as usize];
        if y < tri.y_range.0 || y > tri.y_range.1 {
            continue;
        }
        let [s0, s1, s2] = tri.screen;
        for (x, frag) in row.iter_mut().enumerate().take(tri.x_range.1 + 1).skip(tri.x_range.0) {
            let p = DVec2::new(x as f64 + 0.5, py);
            let b0 = (s2 - s1).perp_dot(p - s1) / tri.area;
            let b1 = (s0 - s2).perp_dot(p - s2) / tri.area;
            let b2 = (s1 - s0).perp_dot(p - s0) / tri.area;
            if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                continue;
            }
            let w = [b0 * tri.inv_depth[0], b1 * tri.inv_depth[1], b2 * tri.inv_depth[2]];
            let sum = w[0] + w[1] + w[2];
            let depth = 1.0 / sum;
            if depth < frag.depth {
                *frag = Fragment {
                    triangle: tri.index,
                    bary: [w[0] / sum, w[1] / sum, w[2] / sum],
                    depth,
                };
            }
        }
    }
    row
}

/// Rasterizes the mesh into `camera`, sampling pixel centers, keeping the nearest fragment.
pub fn rasterize_view(mesh: &TriangleMesh, camera: &Camera) -> ViewGBuffer {
    let (width, height) = (camera.width as usize, camera.height as usize);
    let tris = setup_triangles(mesh, camera);
    let bands = height.div_ceil(ROW_BAND);
    let mut binned: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (i, t) in tris.iter().enumerate() {
        for band in binned
            .iter_mut()
            .take(t.y_range.1 / ROW_BAND + 1)
            .skip(t.y_range.0 / ROW_BAND)
        {
            band.push(i as u32);
        }
    }
    let fragments: Vec<Fragment> = (0..height)
        .into_par_iter()
        .flat_map_iter(|y| raster_row(y, width, &tris, &binned[y / ROW_BAND]))
        .collect();

    let bounds = mesh.bounds();
    let n = width * height;
    let mut normal = vec![0f32; n * 3];
    let mut position = vec![0f32; n * 3];
    let mut depth = vec![0f32; n];
    let mut coverage = vec![0f32; n];
    normal
        .par_chunks_mut(3)
        .zip(position.par_chunks_mut(3))
        .zip(depth.par_iter_mut().zip(coverage.par_iter_mut()))
        .zip(fragments.par_iter())
        .for_each(|(((nrm, pos), (d, cov)), frag)| {
            if frag.triangle == NO_TRIANGLE {
                return;
            }
            let t = frag.triangle as usize;
            let w = frag.bary;
            let [na, nb, nc] = mesh.corner_normals(t);
            let nn = (na * w[0] + nb * w[1] + nc * w[2]).normalize_or_zero();
            let [pa, pb, pc] = mesh.corner_positions(t);
            let p = bounds.normalize(pa * w[0] + pb * w[1] + pc * w[2]);
            nrm.copy_from_slice(&[nn.x as f32, nn.y as f32, nn.z as f32]);
            pos.copy_from_slice(&[p.x as f32, p.y as f32, p.z as f32]);
            *d = frag.depth as f32;
            *cov = 1.0;
        });
    let triangle = fragments.iter().map(|f| f.triangle).collect();
    let barycentric = fragments.iter().map(|f| f.bary.map(|v| v as f32)).collect();
    let img = |c, d| ImageBuffer::from_raw(width, height, c, d).expect("sized above");
    ViewGBuffer {
        width,
        height,
        normal: img(3, normal),
        position: img(3, position),
        depth: img(1, depth),
        coverage: img(1, coverage),
        triangle,
        barycentric,
    }
}

/// Rasterizes every triangle's UV footprint at `resolution`², sampling texel centers.
///
/// Shared edges follow a top-left rule so each texel belongs to one triangle of a chart;
/// genuinely overlapping charts are resolved in favour of the later triangle.
pub fn rasterize_uv(mesh: &TriangleMesh, resolution: usize) -> UVGBuffer {
    let n = resolution * resolution;
    let mut triangle = vec![NO_TRIANGLE; n];
    let mut bary = vec![[0f64; 3]; n];
    let mut overlapping = 0usize;
    let mut degenerate = 0usize;

    for t in 0..mesh.triangles().len() {
        let mut pts = mesh.corner_uvs(t).map(|uv| uv_to_texel(uv, resolution));
        let mut order = [0usize, 1, 2];
        let mut area = (pts[1] - pts[0]).perp_dot(pts[2] - pts[0]);
        if area.abs() < 1e-12 {
            degenerate += 1;
            continue;
        }
        if area < 0.0 {
            pts.swap(1, 2);
            order.swap(1, 2);
            area = -area;
        }
        let min = pts[0].min(pts[1]).min(pts[2]);
        let max = pts[0].max(pts[1]).max(pts[2]);
        let (Some(xr), Some(yr)) = (
            center_range(min.x, max.x, resolution),
            center_range(min.y, max.y, resolution),
        ) else {
            continue;
        };
        // edge k is opposite corner k
        let edges = [(pts[1], pts[2]), (pts[2], pts[0]), (pts[0], pts[1])];
        let top_left = edges.map(|(a, b)| {
            let d = b - a;
            d.y < 0.0 || (d.y == 0.0 && d.x > 0.0)
        });
        for y in yr.0..=yr.1 {
            for x in xr.0..=xr.1 {
                let p = DVec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let mut w = [0.0; 3];
                let mut inside = true;
                for k in 0..3 {
                    let (a, b) = edges[k];
                    let e = (b - a).perp_dot(p - a);
                    if e < 0.0 || (e == 0.0 && !top_left[k]) {
                        inside = false;
                        break;
                    }
                    w[k] = e / area;
                }
                if !inside {
                    continue;
                }
                let idx = y * resolution + x;
                if triangle[idx] != NO_TRIANGLE {
                    overlapping += 1;
                }
                triangle[idx] = t as u32;
                let mut ordered = [0.0; 3];
                for k in 0..3 {
                    ordered[order[k]] = w[k];
                }
                bary[idx] = ordered;
            }
        }
    }
    if overlapping > 0 {
        warn!("uv layout overlaps on {overlapping} texels; later triangles win");
    }
    if degenerate > 0 {
        warn!("{degenerate} triangles have zero uv area and receive no texels");
    }

    let mut position = vec![0f32; n * 3];
    let mut normal = vec![0f32; n * 3];
    for idx in 0..n {
        let t = triangle[idx];
        if t == NO_TRIANGLE {
            continue;
        }
        let w = bary[idx];
        let [pa, pb, pc] = mesh.corner_positions(t as usize);
        let [na, nb, nc] = mesh.corner_normals(t as usize);
        let p = pa * w[0] + pb * w[1] + pc * w[2];
        let nn = (na * w[0] + nb * w[1] + nc * w[2]).normalize_or_zero();
        position[idx * 3..idx * 3 + 3].copy_from_slice(&[p.x as f32, p.y as f32, p.z as f32]);
        normal[idx * 3..idx * 3 + 3].copy_from_slice(&[nn.x as f32, nn.y as f32, nn.z as f32]);
    }
    let occupancy: Vec<bool> = triangle.iter().map(|&t| t != NO_TRIANGLE).collect();
    let occupied = (0..n as u32).filter(|&i| occupancy[i as usize]).collect();
    let img = |d| ImageBuffer::from_raw(resolution, resolution, 3, d).expect("sized above");
    UVGBuffer {
        resolution,
        position: img(position),
        normal: img(normal),
        occupancy,
        triangle,
        occupied,
        overlapping_texels: overlapping,
        degenerate_triangles: degenerate,
    }
}

/// Bilinear footprint of a continuous pixel coordinate (pixel centers at `i + 0.5`),
/// clamped at the image border.
pub(crate) fn bilinear_taps(p: DVec2, width: usize, height: usize) -> [(usize, f64); 4] {
    let x = p.x - 0.5;
    let y = p.y - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
    let xa = clamp(x0, width);
    let xb = clamp(x0 + 1.0, width);
    let ya = clamp(y0, height);
    let yb = clamp(y0 + 1.0, height);
    [
        (ya * width + xa, (1.0 - tx) * (1.0 - ty)),
        (ya * width + xb, tx * (1.0 - ty)),
        (yb * width + xa, (1.0 - tx) * ty),
        (yb * width + xb, tx * ty),
    ]
}

/// Bilinear sample restricted to taps where `valid` holds, renormalized. `None` if no valid tap
/// carries weight.
pub(crate) fn sample_valid<const C: usize>(
    img: &ImageBuffer,
    p: DVec2,
    valid: impl Fn(usize) -> bool,
) -> Option<[f64; C]> {
    debug_assert_eq!(img.channels(), C);
    let mut acc = [0.0; C];
    let mut total = 0.0;
    for (idx, w) in bilinear_taps(p, img.width(), img.height()) {
        if w <= 0.0 || !valid(idx) {
            continue;
        }
        let px = img.at(idx);
        for c in 0..C {
            acc[c] += w * px[c] as f64;
        }
        total += w;
    }
    (total > 1e-9).then(|| acc.map(|v| v / total))
}

/// Plain bilinear sample of a one-channel image.
pub(crate) fn sample_scalar(img: &ImageBuffer, p: DVec2) -> f64 {
    bilinear_taps(p, img.width(), img.height())
        .iter()
        .map(|&(i, w)| w * img.data()[i] as f64)
        .sum()
}

/// Tests texel visibility from a view and measures its view cosine.
pub(crate) struct VisibilityTest<'a> {
    mesh: &'a TriangleMesh,
    camera: &'a Camera,
    gbuffer: &'a ViewGBuffer,
    epsilon: f64,
    mode: SPrimeMode,
}

impl<'a> VisibilityTest<'a> {
    pub(crate) fn new(mesh: &'a TriangleMesh, camera: &'a Camera, gbuffer: &'a ViewGBuffer, mode: SPrimeMode) -> Self {
        Self {
            mesh,
            camera,
            gbuffer,
            epsilon: 1e-3 * mesh.bounds().diagonal(),
            mode,
        }
    }

    /// Pixel position and S′ of a visible, front-facing surface point.
    pub(crate) fn check(&self, pos: DVec3, normal: DVec3) -> Option<(DVec2, f64)> {
        self.check_on(pos, normal, None)
    }

    /// Like `check`, for a point on triangle `own`. Near creases the interpolated depth leans
    /// toward the neighbouring face, so the point also passes when a pixel next to it shows
    /// the plane of its own triangle.
    pub(crate) fn check_on(&self, pos: DVec3, normal: DVec3, own: Option<u32>) -> Option<(DVec2, f64)> {
        let (px, z) = self.camera.project(pos)?;
        if px.x < 0.0 || px.y < 0.0 || px.x >= self.gbuffer.width as f64 || px.y >= self.gbuffer.height as f64 {
            return None;
        }
        let depth = sample_valid::<1>(&self.gbuffer.depth, px, |i| self.gbuffer.is_covered(i));
        if depth.is_none_or(|[d]| z > d + self.epsilon) && !own.is_some_and(|t| self.plane_nearby(pos, px, t)) {
            return None;
        }
        let s = match self.mode {
            SPrimeMode::PerTexel => normal.dot((self.camera.center() - pos).normalize_or_zero()),
            SPrimeMode::CameraAxis => -normal.dot(self.camera.forward()),
        };
        (s > 0.0).then_some((px, s.min(1.0)))
    }

    fn plane_nearby(&self, pos: DVec3, px: DVec2, own: u32) -> bool {
        let face_normal = |t: u32| {
            let [a, b, c] = self.mesh.corner_positions(t as usize);
            (b - a).cross(c - a).normalize_or_zero()
        };
        let n = face_normal(own);
        let (w, h) = (self.gbuffer.width, self.gbuffer.height);
        let (cx, cy) = (px.x as usize, px.y as usize);
        (cy.saturating_sub(1)..(cy + 2).min(h))
            .flat_map(|y| (cx.saturating_sub(1)..(cx + 2).min(w)).map(move |x| y * w + x))
            .any(|i| {
                let t = self.gbuffer.triangle[i];
                t == own
                    || self
                        .gbuffer
                        .surface_point(self.mesh, i)
                        .is_some_and(|q| face_normal(t).dot(n) > 0.999 && n.dot(q - pos).abs() <= self.epsilon)
            })
    }
}

/// Projects a predicted material view onto the UV layout (texel-driven).
///
/// `eligible`, when given, restricts the projection to texels for which it returns true; all
/// other texels get S′ = 0.
pub fn project_view_to_uv(
    mesh: &TriangleMesh,
    camera: &Camera,
    material: &MaterialView,
    view: &ViewGBuffer,
    uv: &UVGBuffer,
    mode: SPrimeMode,
    eligible: Option<&(dyn Fn(usize) -> bool + Sync)>,
) -> Result<ViewProjection> {
    if material.width() != view.width || material.height() != view.height {
        return Err(Error::Shape(format!(
            "material view is {}x{}, G-buffer is {}x{}",
            material.width(),
            material.height(),
            view.width,
            view.height
        )));
    }
    let res = uv.resolution;
    let test = VisibilityTest::new(mesh, camera, view, mode);
    let samples: Vec<Option<([f64; 3], [f64; 2], f64)>> = uv
        .occupied
        .par_iter()
        .map(|&ti| {
            let ti = ti as usize;
            if let Some(f) = eligible {
                if !f(ti) {
                    return None;
                }
            }
            let (px, s) = test.check(uv.texel_position(ti), uv.texel_normal(ti))?;
            let covered = |i: usize| view.is_covered(i);
            let albedo = sample_valid::<3>(&material.albedo, px, covered)?;
            let rm = sample_valid::<2>(&material.rm, px, covered)?;
            Some((albedo, rm, s))
        })
        .collect();
    let mut albedo = ImageBuffer::zeros(res, res, 3);
    let mut rm = ImageBuffer::zeros(res, res, 2);
    let mut s_prime = ImageBuffer::zeros(res, res, 1);
    for (&ti, sample) in uv.occupied.iter().zip(samples) {
        let Some((a, r, s)) = sample else { continue };
        let ti = ti as usize;
        albedo.at_mut(ti).copy_from_slice(&a.map(|v| v as f32));
        rm.at_mut(ti).copy_from_slice(&r.map(|v| v as f32));
        s_prime.at_mut(ti)[0] = s as f32;
    }
    albedo.clamp_unit();
    rm.clamp_unit();
    Ok(ViewProjection { albedo, rm, s_prime })
}

/// View cosines only, for the occupied texels listed in `texels`. Used for coverage simulation.
pub(crate) fn texel_cosines(
    mesh: &TriangleMesh,
    camera: &Camera,
    view: &ViewGBuffer,
    uv: &UVGBuffer,
    texels: &[u32],
    mode: SPrimeMode,
) -> Vec<f64> {
    let test = VisibilityTest::new(mesh, camera, view, mode);
    texels
        .iter()
        .map(|&ti| {
            let ti = ti as usize;
            test.check_on(uv.texel_position(ti), uv.texel_normal(ti), Some(uv.triangle[ti]))
                .map_or(0.0, |(_, s)| s)
        })
        .collect()
}

/// Bilinear atlas lookup at a UV point: (albedo, rm, weight). Materials are averaged over taps
/// with non-zero weight only, so empty texels never darken the result.
pub(crate) fn sample_atlas(atlas: &UVMaterialAtlas, uv: DVec2) -> ([f64; 3], [f64; 2], f64) {
    let res = atlas.resolution();
    let p = uv_to_texel(uv, res);
    let weights = atlas.weights();
    let weight = sample_scalar(weights, p);
    let baked = |i: usize| weights.data()[i] > 0.0;
    let albedo = sample_valid::<3>(atlas.albedo(), p, baked).unwrap_or([0.0; 3]);
    let rm = sample_valid::<2>(atlas.rm(), p, baked).unwrap_or([0.0; 2]);
    (albedo, rm, weight)
}

/// Renders the atlas into a view as material priors and marks pixels still needing material.
pub fn render_material_priors(
    atlas: &UVMaterialAtlas,
    mesh: &TriangleMesh,
    view: &ViewGBuffer,
    tau: f64,
) -> ViewPriorBundle {
    let (w, h) = (view.width, view.height);
    let n = w * h;
    let samples: Vec<Option<([f64; 3], [f64; 2], f64)>> = (0..n)
        .into_par_iter()
        .map(|i| view.surface_uv(mesh, i).map(|uv| sample_atlas(atlas, uv)))
        .collect();
    let mut albedo = ImageBuffer::zeros(w, h, 3);
    let mut rm = ImageBuffer::zeros(w, h, 2);
    let mut mask = ImageBuffer::zeros(w, h, 1);
    for (i, s) in samples.into_iter().enumerate() {
        let Some((a, r, weight)) = s else { continue };
        albedo.at_mut(i).copy_from_slice(&a.map(|v| v as f32));
        rm.at_mut(i).copy_from_slice(&r.map(|v| v as f32));
        if weight < tau {
            mask.at_mut(i)[0] = 1.0;
        }
    }
    albedo.clamp_unit();
    rm.clamp_unit();
    ViewPriorBundle {
        albedo,
        rm,
        mask,
        normal: view.normal.clone(),
        position: view.position.clone(),
        depth: view.depth.clone(),
        atlas_version: atlas.version(),
    }
}

/// Samples a UV texture at every covered pixel of a view (plain bilinear, clamped at the border).
pub fn render_texture(mesh: &TriangleMesh, view: &ViewGBuffer, texture: &ImageBuffer) -> ImageBuffer {
    let c = texture.channels();
    let res_w = texture.width();
    let res_h = texture.height();
    let n = view.width * view.height;
    let data: Vec<f32> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut px = [0f32; 4];
            if let Some(uv) = view.surface_uv(mesh, i) {
                let p = DVec2::new(uv.x * res_w as f64, (1.0 - uv.y) * res_h as f64);
                for (k, out) in px.iter_mut().enumerate().take(c) {
                    *out = bilinear_taps(p, res_w, res_h)
                        .iter()
                        .map(|&(idx, w)| w * texture.at(idx)[k] as f64)
                        .sum::<f64>() as f32;
                }
            }
            px.into_iter().take(c)
        })
        .collect();
    ImageBuffer::from_raw(view.width, view.height, c, data).expect("sized above")
}

/// Scales focal lengths and recenters the principal point so the projected bounding box of the
/// mesh spans `target_fill` of the smaller image side.
pub fn rescale_intrinsics(mesh: &TriangleMesh, camera: &Camera, target_fill: f64) -> Result<Camera> {
    if mesh.positions().is_empty() {
        return Err(Error::InvalidMesh("mesh has no vertices".into()));
    }
    if !(target_fill > 0.0 && target_fill <= 1.0) {
        return Err(Error::Config("target fill must lie in (0, 1]".into()));
    }
    let mut min = DVec2::splat(f64::INFINITY);
    let mut max = DVec2::splat(f64::NEG_INFINITY);
    for p in mesh.positions() {
        let c = camera.to_camera(*p);
        if c.z <= MIN_DEPTH {
            return Err(Error::NotInFront);
        }
        let q = DVec2::new(c.x / c.z, c.y / c.z);
        min = min.min(q);
        max = max.max(q);
    }
    let span = (max - min) * DVec2::new(camera.fx, camera.fy);
    let longest = span.x.max(span.y);
    if longest <= 1e-12 {
        return Err(Error::Degenerate("mesh projects to a single point".into()));
    }
    let side = camera.width.min(camera.height) as f64;
    let scale = target_fill * side / longest;
    let fx = camera.fx * scale;
    let fy = camera.fy * scale;
    let mid = (min + max) * 0.5;
    let cx = camera.width as f64 * 0.5 - fx * mid.x;
    let cy = camera.height as f64 * 0.5 - fy * mid.y;
    camera.with_intrinsics(fx, fy, cx, cy)
}

/// Center UV of every texel, for callers that iterate the layout.
pub fn texel_uv(index: usize, resolution: usize) -> DVec2 {
    texel_center_uv(index % resolution, index / resolution, resolution)
}
