use super::{SimplicialMesh, Vec3};

/// Euclidean distance from `p` to the closed triangle `(a, b, c)`.
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5)
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

/// Exact distance from every node to the polyhedral boundary surface.
///
/// Brute force over all boundary facets, pruned by facet bounding spheres;
/// this is the hotspot of mesh preprocessing on large meshes.
pub fn boundary_distance(mesh: &SimplicialMesh) -> Vec<f64> {
    let nodes = mesh.nodes();
    let spheres: Vec<(Vec3, f64)> = mesh
        .boundary_facets()
        .iter()
        .map(|f| {
            let c = (nodes[f[0]] + nodes[f[1]] + nodes[f[2]]) / 3.0;
            let r = f.iter().map(|&i| (nodes[i] - c).norm()).fold(0.0, f64::max);
            (c, r)
        })
        .collect();
    nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if mesh.is_boundary_node(i) {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for (f, (c, r)) in mesh.boundary_facets().iter().zip(&spheres) {
                if (p - c).norm() - r >= best {
                    continue;
                }
                let d = point_triangle_distance(p, &nodes[f[0]], &nodes[f[1]], &nodes[f[2]]);
                best = best.min(d);
            }
            best
        })
        .collect()
}
