//! Procedural meshes used by tests, examples and the self-check.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mesh;

/// Subdivided icosahedron projected to a sphere; `10·4^s + 2` vertices.
pub fn icosphere(subdivisions: usize, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = if a < b { (a, b) } else { (b, a) };
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts
        .iter()
        .map(|v| [v.x * radius, v.y * radius, v.z * radius])
        .collect();
    Mesh::new(vertices, faces).expect("icosphere is valid")
}

/// Planar `nx × ny` grid in the z = 0 plane with each square split along its diagonal.
pub fn grid(nx: usize, ny: usize, spacing: f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2);
    let mut vertices = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            vertices.push([x as f64 * spacing, y as f64 * spacing, 0.0]);
        }
    }
    let mut faces = Vec::new();
    for y in 0..ny - 1 {
        for x in 0..nx - 1 {
            let v00 = y * nx + x;
            let v10 = v00 + 1;
            let v01 = v00 + nx;
            let v11 = v01 + 1;
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    Mesh::new(vertices, faces).expect("grid is valid")
}

/// Icosphere with smooth random radial bumps; no nontrivial symmetry for `amplitude > 0`.
pub fn bumpy_blob(subdivisions: usize, amplitude: f64, seed: u64) -> Mesh {
    let sphere = icosphere(subdivisions, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(Vector3<f64>, f64)> = (0..7)
        .map(|_| {
            let d = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            (d, rng.random_range(0.4..1.0))
        })
        .collect();
    sphere.map_vertices(|p| {
        let r = 1.0
            + amplitude
                * bumps
                    .iter()
                    .map(|(d, c)| c * (-(p - d).norm_squared() / (2.0 * 0.35 * 0.35)).exp())
                    .sum::<f64>();
        p * r
    })
}

/// Anisotropic scaling along the coordinate axes.
pub fn stretched(mesh: &Mesh, sx: f64, sy: f64, sz: f64) -> Mesh {
    mesh.map_vertices(|p| Vector3::new(p.x * sx, p.y * sy, p.z * sz))
}

/// Bends the mesh around an axis parallel to y so that the x extent `[-half, half]`
/// wraps onto an arc of total angle `angle`; lengths along the z = 0 sheet are kept.
pub fn bend(mesh: &Mesh, angle: f64) -> Mesh {
    if angle == 0.0 {
        return mesh.clone();
    }
    let half = mesh
        .vertices()
        .iter()
        .map(|v| v[0].abs())
        .fold(0.0, f64::max);
    let radius = 2.0 * half / angle;
    mesh.map_vertices(|p| {
        let theta = p.x / radius;
        let r = radius - p.z;
        Vector3::new(r * theta.sin(), p.y, radius - r * theta.cos())
    })
}

/// Elongated bumpy blob and a bent copy with identical connectivity; the ground
/// truth correspondence is the identity on vertex indices.
pub fn bent_pair(subdivisions: usize, bend_angle: f64, seed: u64) -> (Mesh, Mesh) {
    let src = stretched(&bumpy_blob(subdivisions, 0.25, seed), 2.5, 1.0, 0.8);
    let dst = bend(&src, bend_angle);
    (src, dst)
}

/// Deterministic random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for s in 0..4 {
            let m = icosphere(s, 2.0);
            assert_eq!(m.n_vertices(), 10 * 4usize.pow(s as u32) + 2);
            assert_eq!(m.n_faces(), 20 * 4usize.pow(s as u32));
            assert!(m.vertices().iter().all(|v| (Vector3::from(*v).norm() - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn bend_preserves_center_sheet_lengths() {
        let g = grid(11, 3, 0.1);
        let g = g.map_vertices(|p| p - Vector3::new(0.5, 0.0, 0.0));
        let b = bend(&g, 1.0);
        for (i, j) in g.edges() {
            let l0 = (g.position(i) - g.position(j)).norm();
            let l1 = (b.position(i) - b.position(j)).norm();
            assert!((l0 - l1).abs() < 1e-3 * l0);
        }
    }
}
