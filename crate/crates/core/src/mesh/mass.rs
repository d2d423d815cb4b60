use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::{signed_volume, SimplicialMesh};
use crate::error::{Error, Result};

/// P1 mass matrix over the whole domain.
pub fn mass_matrix(mesh: &SimplicialMesh) -> CsrMatrix<f64> {
    let all = vec![true; mesh.node_count()];
    mass_matrix_on(mesh, &all).expect("nonempty node set")
}

/// P1 mass matrix with the basis functions of nodes outside `roi` replaced
/// by zero.
pub fn mass_matrix_on(mesh: &SimplicialMesh, roi: &[bool]) -> Result<CsrMatrix<f64>> {
    let n = mesh.node_count();
    if roi.len() != n {
        return Err(Error::Dimension(format!("roi mask has {} entries for {n} nodes", roi.len())));
    }
    if !roi.iter().any(|&b| b) {
        return Err(Error::Parameter("region of interest selects no nodes".into()));
    }
    let nodes = mesh.nodes();
    let mut coo = CooMatrix::new(n, n);
    for s in mesh.simplices() {
        let v = signed_volume([&nodes[s[0]], &nodes[s[1]], &nodes[s[2]], &nodes[s[3]]]);
        for a in 0..4 {
            if !roi[s[a]] {
                continue;
            }
            for b in 0..4 {
                if !roi[s[b]] {
                    continue;
                }
                let m = if a == b { v / 10.0 } else { v / 20.0 };
                coo.push(s[a], s[b], m);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}
