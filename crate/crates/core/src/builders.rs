//! Generators for the bundled complexes and meshes.

use crate::mesh::{ImmersedMesh, MeshError, Point, SimplicialComplex, AMBIENT_DIM, TAU};

fn permutations(k: usize) -> Vec<(Vec<usize>, bool)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out.into_iter()
        .map(|p| {
            let odd = crate::mesh::sorted_with_parity(&p).1;
            (p, odd)
        })
        .collect()
}

/// Grid coordinates of vertex `id` in `Z_n^k`, least significant axis first.
pub fn grid_coords(id: usize, k: usize, n: usize) -> Vec<usize> {
    (0..k).map(|j| id / n.pow(j as u32) % n).collect()
}

fn grid_id(c: &[usize], n: usize) -> usize {
    c.iter().rev().fold(0, |acc, &x| acc * n + x)
}

/// Freudenthal–Kuhn triangulation of the torus `Z_n^k` (`n ≥ 3`): each unit
/// cube is cut into `k!` simplices along monotone paths. All simplices are
/// positively oriented with respect to the grid axes.
pub fn kuhn_torus(k: usize, n: usize) -> SimplicialComplex {
    assert!(n >= 3, "Kuhn triangulation of Z_n^k needs n >= 3");
    let perms = permutations(k);
    let mut simplices = Vec::with_capacity(n.pow(k as u32) * perms.len());
    for base in 0..n.pow(k as u32) {
        let b = grid_coords(base, k, n);
        for (p, odd) in &perms {
            let mut c = b.clone();
            let mut s = vec![base];
            for &axis in p {
                c[axis] = (c[axis] + 1) % n;
                s.push(grid_id(&c, n));
            }
            if *odd {
                s.swap(k - 1, k);
            }
            simplices.push(s);
        }
    }
    SimplicialComplex::new(k, n.pow(k as u32), simplices).expect("Kuhn triangulation is a simplicial complex")
}

/// Coordinate `k`-torus in `T^7` spanned by the axes `dirs` (in that order,
/// which fixes the orientation), offset by `origin`. Vertices are labelled by
/// their grid level along `dirs[0]`.
pub fn coordinate_torus(dirs: &[usize], n: usize, origin: &Point) -> ImmersedMesh {
    let k = dirs.len();
    let complex = kuhn_torus(k, n);
    let positions: Vec<Point> = (0..complex.n_vertices())
        .map(|v| {
            let c = grid_coords(v, k, n);
            let mut p = *origin;
            for (j, &d) in dirs.iter().enumerate() {
                p[d] += TAU * c[j] as f64 / n as f64;
            }
            p
        })
        .collect();
    let levels = (0..complex.n_vertices()).map(|v| grid_coords(v, k, n)[0]).collect();
    ImmersedMesh::new(complex, positions, None, Some(levels)).expect("coordinate torus is valid")
}

/// A single oriented `d`-simplex.
pub fn simplex(d: usize) -> SimplicialComplex {
    SimplicialComplex::new(d, d + 1, vec![(0..=d).collect()]).unwrap()
}

/// Boundary of the `(d+1)`-simplex: the minimal triangulation of `S^d`.
pub fn sphere(d: usize) -> SimplicialComplex {
    let facets = (0..=d + 1)
        .map(|drop| {
            let mut f: Vec<usize> = (0..=d + 1).filter(|&v| v != drop).collect();
            if drop % 2 == 1 {
                f.swap(0, 1);
            }
            f
        })
        .collect();
    SimplicialComplex::new(d, d + 2, facets).unwrap()
}

/// Cycle of `m ≥ 3` edges.
pub fn circle(m: usize) -> SimplicialComplex {
    SimplicialComplex::new(1, m, (0..m).map(|i| vec![i, (i + 1) % m]).collect()).unwrap()
}

/// Staircase triangulation of `K × L`; vertex `(a, b)` gets id `a·|L| + b`.
/// Each product cell of sorted simplices is cut along monotone lattice paths,
/// then the result is oriented by propagation.
pub fn product(k: &SimplicialComplex, l: &SimplicialComplex) -> Result<SimplicialComplex, MeshError> {
    let (p, q) = (k.dim(), l.dim());
    let nl = l.n_vertices();
    let mut paths: Vec<Vec<(usize, usize)>> = Vec::new();
    for mask in 0u32..(1 << (p + q)) {
        if mask.count_ones() as usize != q {
            continue;
        }
        let (mut i, mut j) = (0, 0);
        let mut path = vec![(0, 0)];
        for step in 0..p + q {
            if mask >> step & 1 == 1 {
                j += 1;
            } else {
                i += 1;
            }
            path.push((i, j));
        }
        paths.push(path);
    }
    let mut simplices = Vec::new();
    for a in k.simplices() {
        let a = crate::mesh::sorted_with_parity(a).0;
        for b in l.simplices() {
            let b = crate::mesh::sorted_with_parity(b).0;
            for path in &paths {
                simplices.push(path.iter().map(|&(i, j)| a[i] * nl + b[j]).collect());
            }
        }
    }
    SimplicialComplex::new(p + q, k.n_vertices() * nl, simplices)?.oriented()
}

/// `RP^3` as the barycentric subdivision of the boundary of the 16-cell
/// modulo the antipodal map: 40 vertices, 192 tetrahedra.
pub fn rp3() -> SimplicialComplex {
    // faces of the cross-polytope are sign vectors in {-1,0,1}^4 \ 0;
    // a class {S, -S} is represented by the vector whose first nonzero entry is +1
    let mut classes: Vec<[i8; 4]> = Vec::new();
    for code in 0..81 {
        let mut s = [0i8; 4];
        let mut c = code;
        for x in s.iter_mut() {
            *x = (c % 3) as i8 - 1;
            c /= 3;
        }
        if s.iter().find(|&&x| x != 0) == Some(&1) {
            classes.push(s);
        }
    }
    let id = |s: &[i8; 4]| -> usize {
        let sign = *s.iter().find(|&&x| x != 0).unwrap();
        let canon: [i8; 4] = std::array::from_fn(|i| s[i] * sign);
        classes.iter().position(|c| *c == canon).unwrap()
    };
    let mut simplices = Vec::new();
    for (perm, _) in permutations(4) {
        for signs in 0..16u32 {
            if signs >> perm[0] & 1 == 1 {
                continue; // keep one chain from each antipodal pair
            }
            let mut face = [0i8; 4];
            let mut chain = Vec::new();
            for &axis in &perm {
                face[axis] = if signs >> axis & 1 == 1 { -1 } else { 1 };
                chain.push(id(&face));
            }
            simplices.push(chain);
        }
    }
    SimplicialComplex::new(3, classes.len(), simplices)
        .and_then(|c| c.oriented())
        .expect("RP^3 triangulation is valid and orientable")
}

/// `S^2 × S^2` from two copies of the boundary of a tetrahedron.
pub fn s2_times_s2() -> SimplicialComplex {
    product(&sphere(2), &sphere(2)).expect("product of spheres")
}

/// Boundary of `c` as its own complex, with the map from its vertex ids to
/// the vertex ids of `c`.
pub fn boundary_complex(c: &SimplicialComplex) -> Result<(SimplicialComplex, Vec<usize>), MeshError> {
    let facets = c.boundary_facets();
    let mut used: Vec<usize> = facets.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let simplices = facets
        .iter()
        .map(|f| f.iter().map(|v| used.binary_search(v).unwrap()).collect())
        .collect();
    Ok((SimplicialComplex::new(c.dim() - 1, used.len(), simplices)?, used))
}

/// Compact pairs `(C, ∂C)` with the boundary vertex map, for the bundled
/// Lagrangian checks.
pub fn bundled_pair(name: &str) -> Option<(SimplicialComplex, SimplicialComplex, Vec<usize>)> {
    let c = match name {
        "d4_s3" => simplex(4),
        "s1d3_s1s2" => product(&circle(3), &simplex(3)).ok()?,
        "d2t2_t3" => product(&simplex(2), &kuhn_torus(2, 3)).ok()?,
        _ => return None,
    };
    let (l, map) = boundary_complex(&c).ok()?;
    Some((c, l, map))
}

pub const BUNDLED_PAIRS: [&str; 3] = ["d4_s3", "s1d3_s1s2", "d2t2_t3"];

/// Barycentric subdivision of an immersed mesh. New vertices sit at face
/// barycenters of the lifted simplices; orientation follows the parent.
pub fn barycentric_subdivision(m: &ImmersedMesh) -> ImmersedMesh {
    let c = m.complex();
    let k = c.dim();
    let offsets: Vec<usize> = (0..=k)
        .scan(0, |acc, d| {
            let o = *acc;
            *acc += c.faces(d).len();
            Some(o)
        })
        .collect();
    let total = offsets[k] + c.faces(k).len();
    let mut positions: Vec<Option<Point>> = vec![None; total];
    let mut simplices = Vec::new();
    for (si, s) in c.simplices().iter().enumerate() {
        let lifted = m.lifted(si);
        let parent = m.differential(si);
        for (perm, _) in permutations(k + 1) {
            let mut chain = Vec::with_capacity(k + 1);
            let mut pts: Vec<Point> = Vec::with_capacity(k + 1);
            for len in 1..=k + 1 {
                let local: Vec<usize> = perm[..len].to_vec();
                let mut face: Vec<usize> = local.iter().map(|&i| s[i]).collect();
                face.sort_unstable();
                let id = offsets[len - 1] + c.face_index(&face).unwrap();
                let p: Point = std::array::from_fn(|r| local.iter().map(|&i| lifted[i][r]).sum::<f64>() / len as f64);
                positions[id].get_or_insert(p);
                chain.push(id);
                pts.push(p);
            }
            let sub = nalgebra::DMatrix::from_fn(AMBIENT_DIM, k, |r, col| pts[col + 1][r] - pts[0][r]);
            if (parent.transpose() * sub).determinant() < 0.0 {
                chain.swap(0, 1);
            }
            simplices.push(chain);
        }
    }
    let complex = SimplicialComplex::new(k, total, simplices).expect("subdivision is a simplicial complex");
    let positions = positions.into_iter().map(|p| p.expect("every face has a barycenter")).collect();
    ImmersedMesh::new(complex, positions, None, None).expect("subdivision of a valid mesh is valid")
}

/// The zero point of `T^7`.
pub const ORIGIN: Point = [0.0; AMBIENT_DIM];
