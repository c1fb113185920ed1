//! Procedural UV-unwrapped meshes used by scene generation and tests.

use std::f64::consts::PI;

use glam::{DVec2, DVec3};

use crate::types::{Triangle, TriangleMesh};

/// Side length of one cube face chart in UV space.
const CUBE_CHART: f64 = 0.3;

/// Axis-aligned cube of side `size` centered at the origin. Each face has its own square UV chart
/// in a 3x2 layout with gutters between charts.
///
/// Faces are emitted in the order +X, -X, +Y, -Y, +Z, -Z, two triangles each.
pub fn cube(size: f64) -> TriangleMesh {
    // (normal, tangent a, tangent b) with a x b = normal
    let faces = [
        (DVec3::X, DVec3::Y, DVec3::Z),
        (DVec3::NEG_X, DVec3::Z, DVec3::Y),
        (DVec3::Y, DVec3::Z, DVec3::X),
        (DVec3::NEG_Y, DVec3::X, DVec3::Z),
        (DVec3::Z, DVec3::X, DVec3::Y),
        (DVec3::NEG_Z, DVec3::Y, DVec3::X),
    ];
    let half = size * 0.5;
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut triangles = Vec::new();
    for (f, (n, a, b)) in faces.iter().enumerate() {
        let (col, row) = (f % 3, f / 3);
        let u0 = col as f64 / 3.0 + (1.0 / 3.0 - CUBE_CHART) * 0.5;
        let v0 = row as f64 / 2.0 + (0.5 - CUBE_CHART) * 0.5;
        let base = positions.len() as u32;
        normals.push(*n);
        for (sa, sb) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            positions.push(*n * half + *a * (sa * half) + *b * (sb * half));
            uvs.push(DVec2::new(
                u0 + CUBE_CHART * (sa + 1.0) * 0.5,
                v0 + CUBE_CHART * (sb + 1.0) * 0.5,
            ));
        }
        let ni = f as u32;
        for [i, j, k] in [[0, 1, 2], [0, 2, 3]] {
            triangles.push(Triangle {
                positions: [base + i, base + j, base + k],
                uvs: [base + i, base + j, base + k],
                normals: [ni; 3],
            });
        }
    }
    TriangleMesh::new(positions, normals, uvs, triangles).expect("cube is valid")
}

/// Latitude-longitude sphere centered at the origin. `u` follows longitude, `v` runs from the
/// south pole (0) to the north pole (1); the whole unit square is one chart.
pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> TriangleMesh {
    assert!(segments >= 3 && rings >= 2);
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut normals = Vec::new();
    for j in 0..=rings {
        let theta = PI * j as f64 / rings as f64;
        for i in 0..=segments {
            let phi = 2.0 * PI * i as f64 / segments as f64;
            let n = DVec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
            let n = if j == 0 {
                DVec3::Y
            } else if j == rings {
                DVec3::NEG_Y
            } else {
                n.normalize()
            };
            positions.push(n * radius);
            normals.push(n);
            uvs.push(DVec2::new(i as f64 / segments as f64, 1.0 - j as f64 / rings as f64));
        }
    }
    let idx = |i: usize, j: usize| (j * (segments + 1) + i) as u32;
    let mut triangles = Vec::new();
    let mut push = |a: u32, b: u32, c: u32| {
        triangles.push(Triangle {
            positions: [a, b, c],
            uvs: [a, b, c],
            normals: [a, b, c],
        })
    };
    for j in 0..rings {
        for i in 0..segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if j != 0 {
                push(a, b, c);
            }
            if j != rings - 1 {
                push(a, c, d);
            }
        }
    }
    TriangleMesh::new(positions, normals, uvs, triangles).expect("sphere is valid")
}

/// Unit square in the z = `z` plane facing +Z, spanning [-0.5, 0.5]², mapped onto the full UV square.
pub fn quad(z: f64) -> TriangleMesh {
    let positions = vec![
        DVec3::new(-0.5, -0.5, z),
        DVec3::new(0.5, -0.5, z),
        DVec3::new(0.5, 0.5, z),
        DVec3::new(-0.5, 0.5, z),
    ];
    let uvs = vec![
        DVec2::new(0.0, 0.0),
        DVec2::new(1.0, 0.0),
        DVec2::new(1.0, 1.0),
        DVec2::new(0.0, 1.0),
    ];
    let triangles = vec![
        Triangle {
            positions: [0, 1, 2],
            uvs: [0, 1, 2],
            normals: [0; 3],
        },
        Triangle {
            positions: [0, 2, 3],
            uvs: [0, 2, 3],
            normals: [0; 3],
        },
    ];
    TriangleMesh::new(positions, vec![DVec3::Z], uvs, triangles).expect("quad is valid")
}
