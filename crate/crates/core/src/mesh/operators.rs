use super::Mesh;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Lumped (barycentric) vertex areas.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    pub diag: Vec<f64>,
}

impl MassMatrix {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn total(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// `A f`
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(f).map(|(a, x)| a * x).collect()
    }

    /// `fᵀ A g`
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.diag
            .iter()
            .zip(f.iter().zip(g))
            .map(|(a, (x, y))| a * x * y)
            .sum()
    }
}

/// Cotangent stiffness matrix: `B_ij = −(cot α_ij + cot β_ij)/2`, diagonal = −row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    pub matrix: CsrMatrix,
}

impl StiffnessMatrix {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Dirichlet energy `fᵀ B f`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        self.matrix.quad_form(f)
    }
}

/// Assembles the lumped mass and cotangent stiffness matrices.
///
/// Obtuse angles give negative weights, which are kept. Boundary edges receive
/// the single cotangent of their one adjacent face.
pub fn assemble_operators(mesh: &Mesh) -> Result<(MassMatrix, StiffnessMatrix)> {
    let n = mesh.n_vertices();
    let mut mass = vec![0.0; n];
    let mut triplets = Vec::with_capacity(mesh.n_faces() * 12);
    for (fi, face) in mesh.faces().iter().enumerate() {
        let p = face.map(|v| mesh.position(v));
        let twice_area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        let scale = (p[1] - p[0]).norm_squared().max((p[2] - p[0]).norm_squared());
        if !(twice_area > 1e-14 * scale) {
            return Err(Error::ZeroAreaFace { face: fi });
        }
        for v in face {
            mass[*v] += twice_area / 6.0;
        }
        for corner in 0..3 {
            let i = face[(corner + 1) % 3];
            let j = face[(corner + 2) % 3];
            let u = p[(corner + 1) % 3] - p[corner];
            let w = p[(corner + 2) % 3] - p[corner];
            let cot = u.dot(&w) / twice_area;
            let half = 0.5 * cot;
            triplets.push((i, j, -half));
            triplets.push((j, i, -half));
            triplets.push((i, i, half));
            triplets.push((j, j, half));
        }
    }
    for (i, &a) in mass.iter().enumerate() {
        if a <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "vertex {i} is not referenced by any face"
            )));
        }
    }
    Ok((
        MassMatrix { diag: mass },
        StiffnessMatrix {
            matrix: CsrMatrix::from_triplets(n, &triplets),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::{Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn equilateral() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3f64.sqrt() / 2.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn equilateral_triangle_values() {
        let (mass, stiff) = assemble_operators(&equilateral()).unwrap();
        let cot60 = 1.0 / 3f64.sqrt();
        assert!((stiff.matrix.get(0, 1) + cot60 / 2.0).abs() < 1e-14);
        assert!((stiff.matrix.get(0, 1) + 0.28868).abs() < 1e-5);
        for a in &mass.diag {
            assert!((a - 3f64.sqrt() / 12.0).abs() < 1e-14);
            assert!((a - 0.14434).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_area_face_is_named() {
        let mesh = Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [2.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            vec![[0, 1, 3], [0, 1, 2]],
        )
        .unwrap();
        match assemble_operators(&mesh) {
            Err(Error::ZeroAreaFace { face }) => assert_eq!(face, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stiffness_symmetric_zero_rows_psd() {
        let mesh = shapes::bumpy_blob(2, 0.15, 3);
        let (mass, stiff) = assemble_operators(&mesh).unwrap();
        let b = &stiff.matrix;
        for i in 0..b.n() {
            let mut sum = 0.0;
            let mut max = 0.0f64;
            for (j, v) in b.row(i) {
                assert_eq!(v, b.get(j, i));
                sum += v;
                max = max.max(v.abs());
            }
            assert!(sum.abs() <= 1e-10 * max);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let f: Vec<f64> = (0..b.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm2: f64 = f.iter().map(|x| x * x).sum();
            assert!(stiff.energy(&f) >= -1e-12 * norm2);
        }
        assert!(mass.diag.iter().all(|&a| a > 0.0));
        let rel = (mass.total() - mesh.total_area()).abs() / mesh.total_area();
        assert!(rel < 1e-10);
    }

    #[test]
    fn operators_invariant_under_rigid_motion() {
        let mesh = shapes::bumpy_blob(2, 0.2, 5);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let moved = mesh.transformed(&rot, &Vector3::new(3.0, -2.0, 0.5));
        let (m0, s0) = assemble_operators(&mesh).unwrap();
        let (m1, s1) = assemble_operators(&moved).unwrap();
        let scale = s0.matrix.norm_inf();
        for i in 0..mesh.n_vertices() {
            assert!((m0.diag[i] - m1.diag[i]).abs() <= 1e-9 * m0.diag[i]);
            for (j, v) in s0.matrix.row(i) {
                assert!((v - s1.matrix.get(i, j)).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn boundary_edges_keep_single_cotangent() {
        let mesh = shapes::grid(3, 3, 1.0);
        let (_, stiff) = assemble_operators(&mesh).unwrap();
        // Edge (0,1) lies on the boundary with a single 45° opposite angle.
        assert!((stiff.matrix.get(0, 1) + 0.5).abs() < 1e-12);
    }
}
