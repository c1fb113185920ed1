use std::fmt::Write as _;

use glam::{DVec2, DVec3};

use crate::error::{Error, Result};

const NORMAL_TOLERANCE: f64 = 1e-4;

/// One triangle: indices into the position, uv and normal arrays for each corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub positions: [u32; 3],
    pub uvs: [u32; 3],
    pub normals: [u32; 3],
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: DVec3,
    pub max: DVec3,
}

impl Aabb {
    pub fn center(&self) -> DVec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> DVec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().length()
    }

    /// Maps a point into [0,1]³ relative to the box. Flat axes map to 0.
    pub fn normalize(&self, p: DVec3) -> DVec3 {
        let e = self.extent();
        let f = |v: f64, lo: f64, ext: f64| if ext > 0.0 { (v - lo) / ext } else { 0.0 };
        DVec3::new(
            f(p.x, self.min.x, e.x),
            f(p.y, self.min.y, e.y),
            f(p.z, self.min.z, e.z),
        )
    }
}

/// Triangle mesh with per-corner UVs and per-vertex normals, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    positions: Vec<DVec3>,
    normals: Vec<DVec3>,
    uvs: Vec<DVec2>,
    triangles: Vec<Triangle>,
}

/// Wraps a UV coordinate into [0,1] by its fractional part. Values already in range are kept,
/// so a chart touching u = 1 stays at 1.
pub fn wrap_uv(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        v
    } else {
        v - v.floor()
    }
}

impl TriangleMesh {
    pub fn new(positions: Vec<DVec3>, normals: Vec<DVec3>, uvs: Vec<DVec2>, triangles: Vec<Triangle>) -> Result<Self> {
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex position".into()));
        }
        for (i, n) in normals.iter().enumerate() {
            if !n.is_finite() || (n.length() - 1.0).abs() > NORMAL_TOLERANCE {
                return Err(Error::InvalidMesh(format!("normal {i} is not unit length")));
            }
        }
        let uvs: Vec<DVec2> = uvs
            .into_iter()
            .map(|uv| DVec2::new(wrap_uv(uv.x), wrap_uv(uv.y)))
            .collect();
        if uvs.iter().any(|uv| !uv.is_finite()) {
            return Err(Error::InvalidMesh("non-finite uv".into()));
        }
        for (f, t) in triangles.iter().enumerate() {
            let bad = |idx: &[u32; 3], len: usize| idx.iter().any(|&i| i as usize >= len);
            if bad(&t.positions, positions.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {} position index out of range",
                    f + 1
                )));
            }
            if bad(&t.uvs, uvs.len()) {
                return Err(Error::InvalidMesh(format!("face {} uv index out of range", f + 1)));
            }
            if bad(&t.normals, normals.len()) {
                return Err(Error::InvalidMesh(format!("face {} normal index out of range", f + 1)));
            }
        }
        Ok(Self {
            positions,
            normals,
            uvs,
            triangles,
        })
    }

    /// Parses Wavefront OBJ text. Every face must be a triangle carrying `v/vt/vn` indices.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut positions = Vec::new();
        let mut normals = Vec::new();
        let mut uvs = Vec::new();
        let mut triangles = Vec::new();

        for (line_no, raw) in text.lines().enumerate() {
            let line_no = line_no + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut tokens = line.split_whitespace();
            let Some(tag) = tokens.next() else { continue };
            let parse_floats = |tokens: std::str::SplitWhitespace<'_>, n: usize| -> Result<Vec<f64>> {
                let vals: Vec<f64> = tokens
                    .take(n)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::MeshParse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                if vals.len() < n {
                    return Err(Error::MeshParse {
                        line: line_no,
                        message: format!("`{tag}` record needs {n} numbers"),
                    });
                }
                Ok(vals)
            };
            match tag {
                "v" => {
                    let v = parse_floats(tokens, 3)?;
                    positions.push(DVec3::new(v[0], v[1], v[2]));
                }
                "vt" => {
                    let v = parse_floats(tokens, 2)?;
                    uvs.push(DVec2::new(v[0], v[1]));
                }
                "vn" => {
                    let v = parse_floats(tokens, 3)?;
                    let n = DVec3::new(v[0], v[1], v[2]);
                    let len = n.length();
                    if !(len > 0.0) || !len.is_finite() {
                        return Err(Error::MeshParse {
                            line: line_no,
                            message: "zero-length normal".into(),
                        });
                    }
                    normals.push(n / len);
                }
                "f" => {
                    let face = triangles.len() + 1;
                    let corners: Vec<&str> = tokens.collect();
                    if corners.len() != 3 {
                        return Err(Error::MeshNotReady {
                            face,
                            reason: format!("has {} vertices, only triangles are accepted", corners.len()),
                        });
                    }
                    let mut tri = Triangle {
                        positions: [0; 3],
                        uvs: [0; 3],
                        normals: [0; 3],
                    };
                    for (k, corner) in corners.iter().enumerate() {
                        let mut parts = corner.split('/');
                        let resolve = |field: Option<&str>, count: usize, what: &str| -> Result<u32> {
                            let s = field.filter(|s| !s.is_empty()).ok_or_else(|| Error::MeshNotReady {
                                face,
                                reason: format!("missing {what} index"),
                            })?;
                            let idx: i64 = s.parse().map_err(|_| Error::MeshParse {
                                line: line_no,
                                message: format!("bad index `{s}`"),
                            })?;
                            let resolved = if idx < 0 { count as i64 + idx } else { idx - 1 };
                            if resolved < 0 || resolved >= count as i64 {
                                return Err(Error::MeshParse {
                                    line: line_no,
                                    message: format!("{what} index {idx} out of range"),
                                });
                            }
                            Ok(resolved as u32)
                        };
                        tri.positions[k] = resolve(parts.next(), positions.len(), "position")?;
                        tri.uvs[k] = resolve(parts.next(), uvs.len(), "uv")?;
                        tri.normals[k] = resolve(parts.next(), normals.len(), "normal")?;
                    }
                    triangles.push(tri);
                }
                _ => {}
            }
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no faces".into()));
        }
        Self::new(positions, normals, uvs, triangles)
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for p in &self.positions {
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
        for uv in &self.uvs {
            let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
        }
        for n in &self.normals {
            let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
        }
        for t in &self.triangles {
            let _ = write!(out, "f");
            for k in 0..3 {
                let _ = write!(out, " {}/{}/{}", t.positions[k] + 1, t.uvs[k] + 1, t.normals[k] + 1);
            }
            out.push('\n');
        }
        out
    }

    pub fn positions(&self) -> &[DVec3] {
        &self.positions
    }

    pub fn normals(&self) -> &[DVec3] {
        &self.normals
    }

    pub fn uvs(&self) -> &[DVec2] {
        &self.uvs
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn corner_positions(&self, tri: usize) -> [DVec3; 3] {
        let t = &self.triangles[tri];
        t.positions.map(|i| self.positions[i as usize])
    }

    pub fn corner_normals(&self, tri: usize) -> [DVec3; 3] {
        let t = &self.triangles[tri];
        t.normals.map(|i| self.normals[i as usize])
    }

    pub fn corner_uvs(&self, tri: usize) -> [DVec2; 3] {
        let t = &self.triangles[tri];
        t.uvs.map(|i| self.uvs[i as usize])
    }

    pub fn bounds(&self) -> Aabb {
        let mut min = DVec3::splat(f64::INFINITY);
        let mut max = DVec3::splat(f64::NEG_INFINITY);
        for p in &self.positions {
            min = min.min(*p);
            max = max.max(*p);
        }
        Aabb { min, max }
    }

    /// Center of the bounding box; views orbit this point.
    pub fn centroid(&self) -> DVec3 {
        self.bounds().center()
    }

    /// Radius of the smallest sphere around [`Self::centroid`] containing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.positions.iter().map(|p| p.distance(c)).fold(0.0, f64::max)
    }

    /// Total area of all triangles in UV space.
    pub fn uv_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corner_uvs(t);
                0.5 * (b - a).perp_dot(c - a).abs()
            })
            .sum()
    }

    /// Total surface area in object space.
    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corner_positions(t);
                0.5 * (b - a).cross(c - a).length()
            })
            .sum()
    }

    pub fn translated(&self, offset: DVec3) -> Self {
        Self {
            positions: self.positions.iter().map(|p| *p + offset).collect(),
            ..self.clone()
        }
    }
}
