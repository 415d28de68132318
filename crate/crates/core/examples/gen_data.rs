//! Writes the sample meshes, connections, pairs and flow seeds used by the
//! README walkthrough and the CLI tests.
//!
//!     cargo run -p g2kit-core --example gen_data -- [out_dir]

use std::fs;
use std::path::Path;

use g2kit_core::builders::{bundled_pair, coordinate_torus, kuhn_torus, rp3, sphere, BUNDLED_PAIRS, ORIGIN};
use g2kit_core::cycles::{Configuration, HolonomyFrame, TangentVector};
use g2kit_core::gauge::{constant_flux_connection, LatticeConnection};
use g2kit_core::lagr::format_bmap;
use g2kit_core::mesh::{format_mesh, ImmersedMesh, Point, SimplicialComplex, TAU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 3;

fn write(dir: &Path, name: &str, body: String) -> std::io::Result<()> {
    fs::write(dir.join(name), body)
}

fn topology(c: &SimplicialComplex, comment: &str) -> String {
    format_mesh(c, None, None, None, comment)
}

/// Normal immersion noise and a connection perturbation with zero holonomy.
fn seed(base: &ImmersedMesh, seed: u64, amp_v: f64, amp_b: f64) -> Configuration {
    let flat = Configuration::flat(base.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = TangentVector::random(&flat, &mut rng, amp_v, amp_b).normal_part(base);
    let mut c = flat.displaced(&t, 1.0);
    let frame = HolonomyFrame::new(c.complex()).expect("torus has an integral H1 basis");
    c.connection = frame.pin(&c.connection, &vec![0.0; frame.rank()]);
    c
}

fn main() -> std::io::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    let dir = Path::new(&out);
    fs::create_dir_all(dir.join("pairs"))?;
    fs::create_dir_all(dir.join("seeds"))?;

    let coassoc = coordinate_torus(&[0, 1, 2, 3], N, &ORIGIN);
    write(dir, "torus4_coassoc.mesh", coassoc.to_file_string("coordinate 4-torus in directions 0 1 2 3"))?;
    write(dir, "torus3_slag.mesh", coordinate_torus(&[1, 2, 3], N, &ORIGIN).to_file_string("3-torus in directions 1 2 3"))?;
    write(dir, "torus3_assoc.mesh", coordinate_torus(&[4, 5, 6], N, &ORIGIN).to_file_string("3-torus in directions 4 5 6"))?;

    // fibres over the x0 circle pushed along x4 by a level-dependent amount
    let disp: Vec<Point> = coassoc
        .levels()
        .expect("coordinate tori carry levels")
        .iter()
        .map(|&l| {
            let mut d = [0.0; 7];
            d[4] = 0.05 * (TAU * l as f64 / N as f64).sin();
            d
        })
        .collect();
    write(dir, "torus4_graph.mesh", coassoc.displaced_unchecked(&disp).to_file_string("graph over the coassociative torus"))?;

    write(dir, "s3.mesh", topology(&sphere(3), "boundary of the 4-simplex"))?;
    write(dir, "rp3.mesh", topology(&rp3(), "real projective 3-space"))?;
    write(dir, "t3.mesh", topology(&kuhn_torus(3, N), "Kuhn triangulation of the 3-torus"))?;

    let c = coassoc.complex();
    write(dir, "asd.conn", constant_flux_connection(&coassoc, &[(0, 1, 1), (2, 3, -1)]).to_file_string(c))?;
    write(dir, "sd.conn", constant_flux_connection(&coassoc, &[(0, 1, 1), (2, 3, 1)]).to_file_string(c))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise: Vec<f64> = (0..c.faces(1).len()).map(|_| rng.gen_range(-0.05..0.05)).collect();
    let perturbed = LatticeConnection::from_angles(c, noise).expect("one angle per edge");
    write(dir, "perturbed.conn", perturbed.to_file_string(c))?;

    for name in BUNDLED_PAIRS {
        let (cc, l, map) = bundled_pair(name).expect("bundled pair");
        write(dir, &format!("pairs/{name}_C.mesh"), topology(&cc, name))?;
        write(dir, &format!("pairs/{name}_L.mesh"), topology(&l, name))?;
        write(dir, &format!("pairs/{name}.bmap"), format_bmap(&map))?;
    }

    for i in 0..6u64 {
        let s = seed(&coassoc, 100 + i, 0.01, 0.05);
        write(dir, &format!("seeds/seed{i}.mesh"), s.mesh.to_file_string(&format!("seed {i}")))?;
        write(dir, &format!("seeds/seed{i}.conn"), s.connection.to_file_string(s.complex()))?;
    }
    Ok(())
}
