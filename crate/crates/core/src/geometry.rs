//! Reconstruction of the convex body from its support function, and
//! Wavefront OBJ export.
//!
//! The embedding is `X = u x + grad u`, lifted through the orthonormal
//! frame; its radial length satisfies `|X| = sqrt(u^2 + |grad u|^2)`
//! identically. Gauss curvature comes from the support-function side,
//! `K = 1 / det(W)`, never from the mesh.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::sphere::{self, fmt_f64, GridError, ScalarField, SphericalGrid};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("surface is not strictly convex at node ({i}, {j}): min eigenvalue of W = {min_eig:e}")]
    NotStrictlyConvex { i: usize, j: usize, min_eig: f64 },
    #[error("obj: {msg} (line {line})")]
    Obj { line: usize, msg: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The embedded boundary hypersurface with its curvature data.
#[derive(Debug, Clone)]
pub struct EmbeddedSurface {
    grid: Arc<SphericalGrid>,
    /// Ambient points X = u x + grad u, one per node, row-major.
    pub points: Vec<[f64; 3]>,
    /// Gauss curvature 1 / det(W) per node.
    pub gauss: Vec<f64>,
    /// Principal radii (eigenvalues of W) per node, smaller first.
    pub radii: Vec<(f64, f64)>,
}

impl EmbeddedSurface {
    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    /// Radial length |X| per node.
    pub fn radial(&self, idx: usize) -> f64 {
        let p = self.points[idx];
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }
}

/// Embed the support function: X = u x + grad u in ambient coordinates,
/// K = 1 / sigma_2(W), principal radii = eigenvalues of W.
///
/// Requires W positive definite everywhere (strict convexity).
pub fn embed(u: &ScalarField) -> Result<EmbeddedSurface, GeometryError> {
    let grid = u.grid().clone();
    let w = sphere::curvature_matrix(u);
    let grad = sphere::gradient(u);
    let n = grid.node_count();
    let mut points = Vec::with_capacity(n);
    let mut gauss = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n);
    for i in 0..grid.n_lat {
        let (st, ct) = (grid.sin_theta[i], grid.cos_theta[i]);
        for j in 0..grid.n_lon {
            let idx = grid.index(i, j);
            let min_eig = w.min_eig(idx);
            if min_eig <= 0.0 {
                return Err(GeometryError::NotStrictlyConvex { i, j, min_eig });
            }
            let (sp, cp) = grid.phi[j].sin_cos();
            let x = [st * cp, st * sp, ct];
            let e_theta = [ct * cp, ct * sp, -st];
            let e_phi = [-sp, cp, 0.0];
            let uv = u.values()[idx];
            let (g1, g2) = (grad.comp1[idx], grad.comp2[idx]);
            points.push([
                uv * x[0] + g1 * e_theta[0] + g2 * e_phi[0],
                uv * x[1] + g1 * e_theta[1] + g2 * e_phi[1],
                uv * x[2] + g1 * e_theta[2] + g2 * e_phi[2],
            ]);
            gauss.push(1.0 / w.sigma2(idx));
            radii.push((min_eig, w.max_eig(idx)));
        }
    }
    Ok(EmbeddedSurface { grid, points, gauss, radii })
}

/// Total mean-radius functional, integrate(sigma_1(W)) / 2; linear in u.
pub fn mean_radius_functional(u: &ScalarField) -> f64 {
    let w = sphere::curvature_matrix(u);
    let grid = u.grid().clone();
    let trace =
        ScalarField::new(grid, (0..w.w11.len()).map(|i| w.sigma1(i)).collect())
            .expect("trace field is finite");
    sphere::integrate(&trace) / 2.0
}

/// Write a watertight triangle mesh: one vertex per node in row-major order,
/// two pole apices appended as area-weighted ring averages, quads split into
/// triangles and pole caps fanned, all oriented counterclockwise seen from
/// outside.
pub fn export_obj_writer<W: Write>(
    surface: &EmbeddedSurface,
    mut out: W,
) -> Result<(), GeometryError> {
    let g = surface.grid();
    let (n_lat, n_lon) = (g.n_lat, g.n_lon);
    for p in &surface.points {
        writeln!(out, "v {} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]))?;
    }
    // pole apices: the ring weights are equal within a row, so the
    // area-weighted average is the plain mean of the adjacent ring
    let mut north = [0.0f64; 3];
    let mut south = [0.0f64; 3];
    for j in 0..n_lon {
        let pn = surface.points[g.index(0, j)];
        let ps = surface.points[g.index(n_lat - 1, j)];
        for d in 0..3 {
            north[d] += pn[d];
            south[d] += ps[d];
        }
    }
    for d in 0..3 {
        north[d] /= n_lon as f64;
        south[d] /= n_lon as f64;
    }
    writeln!(out, "v {} {} {}", fmt_f64(north[0]), fmt_f64(north[1]), fmt_f64(north[2]))?;
    writeln!(out, "v {} {} {}", fmt_f64(south[0]), fmt_f64(south[1]), fmt_f64(south[2]))?;

    let v = |i: usize, j: usize| 1 + i * n_lon + (j % n_lon);
    let north_idx = n_lat * n_lon + 1;
    let south_idx = n_lat * n_lon + 2;
    for j in 0..n_lon {
        writeln!(out, "f {} {} {}", north_idx, v(0, j), v(0, j + 1))?;
    }
    for i in 0..(n_lat - 1) {
        for j in 0..n_lon {
            writeln!(out, "f {} {} {}", v(i, j), v(i + 1, j), v(i + 1, j + 1))?;
            writeln!(out, "f {} {} {}", v(i, j), v(i + 1, j + 1), v(i, j + 1))?;
        }
    }
    for j in 0..n_lon {
        writeln!(out, "f {} {} {}", south_idx, v(n_lat - 1, j + 1), v(n_lat - 1, j))?;
    }
    Ok(())
}

pub fn export_obj(surface: &EmbeddedSurface, path: &Path) -> Result<(), GeometryError> {
    let file = std::fs::File::create(path)?;
    export_obj_writer(surface, std::io::BufWriter::new(file))
}

/// Parse vertices and triangles back from an OBJ stream (positions and
/// 1-based faces only; used for round-trip checks and the export command's
/// input validation).
pub fn parse_obj<R: BufRead>(
    input: R,
) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>), GeometryError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for slot in &mut p {
                    *slot = it
                        .next()
                        .ok_or_else(|| GeometryError::Obj {
                            line: lineno + 1,
                            msg: "vertex needs 3 coordinates".into(),
                        })?
                        .parse()
                        .map_err(|e| GeometryError::Obj {
                            line: lineno + 1,
                            msg: format!("bad coordinate: {e}"),
                        })?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut f = [0usize; 3];
                for slot in &mut f {
                    let tok = it.next().ok_or_else(|| GeometryError::Obj {
                        line: lineno + 1,
                        msg: "face needs 3 indices".into(),
                    })?;
                    let idx: usize =
                        tok.split('/').next().unwrap_or(tok).parse().map_err(|e| {
                            GeometryError::Obj {
                                line: lineno + 1,
                                msg: format!("bad index: {e}"),
                            }
                        })?;
                    if idx == 0 {
                        return Err(GeometryError::Obj {
                            line: lineno + 1,
                            msg: "obj indices are 1-based".into(),
                        });
                    }
                    *slot = idx - 1;
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::build_grid;
    use std::collections::HashMap;

    #[test]
    fn round_sphere_embedding_is_exact() {
        let grid = build_grid(16).unwrap();
        let r = 1.5;
        let u = ScalarField::constant(grid.clone(), r);
        let s = embed(&u).unwrap();
        for i in 0..grid.n_lat {
            for j in 0..grid.n_lon {
                let idx = grid.index(i, j);
                let x = grid.position(i, j);
                for d in 0..3 {
                    assert!((s.points[idx][d] - r * x[d]).abs() < 1e-15);
                }
                assert!((s.gauss[idx] - 1.0 / (r * r)).abs() < 1e-14);
                assert!((s.radii[idx].0 - r).abs() < 1e-14);
                assert!((s.radii[idx].1 - r).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn translated_sphere_is_a_shifted_round_sphere() {
        let grid = build_grid(32).unwrap();
        let a = [0.3, 0.0, 0.0];
        let u = ScalarField::from_fn(grid.clone(), |_, _, x| 1.0 + 0.3 * x[0]);
        let s = embed(&u).unwrap();
        let h = grid.h();
        for i in 0..grid.n_lat {
            for j in 0..grid.n_lon {
                let idx = grid.index(i, j);
                let x = grid.position(i, j);
                for d in 0..3 {
                    let expect = x[d] + a[d];
                    assert!(
                        (s.points[idx][d] - expect).abs() < 2.0 * h * h,
                        "point {idx} component {d}: {} vs {expect}",
                        s.points[idx][d]
                    );
                }
                // K = 1/r^2 = 1 up to O(h) near the poles, O(h^2) inside
                assert!((s.gauss[idx] - 1.0).abs() < 1.5 * h);
            }
        }
    }

    #[test]
    fn radial_length_matches_support_identity() {
        // |X| = sqrt(u^2 + |grad u|^2) is algebraic in the discrete fields
        let grid = build_grid(16).unwrap();
        let u = ScalarField::from_fn(grid.clone(), |_, _, x| {
            1.0 + 0.2 * x[0] + 0.1 * x[2] + 0.05 * x[1] * x[2]
        });
        let s = embed(&u).unwrap();
        let grad = sphere::gradient(&u);
        for idx in 0..grid.node_count() {
            let rho = (u.values()[idx] * u.values()[idx] + grad.norm_sq(idx)).sqrt();
            assert!((s.radial(idx) - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_rejects_nonconvex_support() {
        let grid = build_grid(16).unwrap();
        let u = ScalarField::from_fn(grid, |_, _, x| 1.0 + 0.9 * (x[2] * x[2] - 0.5));
        assert!(matches!(embed(&u), Err(GeometryError::NotStrictlyConvex { .. })));
    }

    #[test]
    fn translation_equivariance() {
        let grid = build_grid(32).unwrap();
        let base = ScalarField::from_fn(grid.clone(), |_, _, x| 1.0 + 0.05 * x[2] * x[2]);
        let shifted = ScalarField::from_fn(grid.clone(), |_, _, x| {
            1.0 + 0.05 * x[2] * x[2] + 0.2 * x[1]
        });
        let s0 = embed(&base).unwrap();
        let s1 = embed(&shifted).unwrap();
        let h = grid.h();
        for idx in 0..grid.node_count() {
            assert!((s1.points[idx][0] - s0.points[idx][0]).abs() < 2.0 * h * h);
            assert!((s1.points[idx][1] - (s0.points[idx][1] + 0.2)).abs() < 2.0 * h * h);
            assert!((s1.points[idx][2] - s0.points[idx][2]).abs() < 2.0 * h * h);
        }
    }

    #[test]
    fn mean_radius_functional_is_scale_linear() {
        let grid = build_grid(16).unwrap();
        let u = ScalarField::from_fn(grid, |_, _, x| 1.0 + 0.1 * x[0] + 0.05 * x[2] * x[2]);
        let m1 = mean_radius_functional(&u);
        let m2 = mean_radius_functional(&u.scaled(2.0));
        assert!((m2 - 2.0 * m1).abs() <= 1e-10 * m1.abs());
    }

    #[test]
    fn obj_counts_orientation_and_round_trip() {
        let grid = build_grid(8).unwrap();
        let u = ScalarField::constant(grid.clone(), 1.0);
        let s = embed(&u).unwrap();
        let mut buf = Vec::new();
        export_obj_writer(&s, &mut buf).unwrap();
        let (vertices, faces) = parse_obj(std::io::Cursor::new(&buf)).unwrap();

        // 8*16 + 2 vertices; 2*8*16 triangles total (224 lateral + 32 caps)
        assert_eq!(vertices.len(), 130);
        assert_eq!(faces.len(), 256);

        // vertices round-trip the embedding exactly
        for (idx, p) in s.points.iter().enumerate() {
            for d in 0..3 {
                assert!((vertices[idx][d] - p[d]).abs() <= 1e-12);
            }
        }

        // watertight: every undirected edge is shared by exactly two faces,
        // with opposite directed orientations
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &faces {
            for e in 0..3 {
                let a = f[e];
                let b = f[(e + 1) % 3];
                assert_ne!(a, b, "degenerate edge in face {f:?}");
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            assert_eq!(count, 1, "directed edge ({a},{b}) repeated");
            assert_eq!(directed.get(&(b, a)), Some(&1), "edge ({a},{b}) unmatched");
        }

        // convexity orientation: normals point away from the origin
        for f in &faces {
            let (p0, p1, p2) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
            let e1 = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
            let e2 = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
            let n = [
                e1[1] * e2[2] - e1[2] * e2[1],
                e1[2] * e2[0] - e1[0] * e2[2],
                e1[0] * e2[1] - e1[1] * e2[0],
            ];
            let c = [
                (p0[0] + p1[0] + p2[0]) / 3.0,
                (p0[1] + p1[1] + p2[1]) / 3.0,
                (p0[2] + p1[2] + p2[2]) / 3.0,
            ];
            let dot = n[0] * c[0] + n[1] * c[1] + n[2] * c[2];
            assert!(dot > 0.0, "inward-facing triangle {f:?}");
        }
    }

    #[test]
    fn parse_obj_rejects_corruption() {
        let bad = "v 1.0 2.0\n";
        assert!(matches!(
            parse_obj(std::io::Cursor::new(bad.as_bytes())),
            Err(GeometryError::Obj { line: 1, .. })
        ));
        let bad_face = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 zzz\n";
        assert!(matches!(
            parse_obj(std::io::Cursor::new(bad_face.as_bytes())),
            Err(GeometryError::Obj { line: 4, .. })
        ));
    }
}
