//! Numerical toolkit for calibrated geometry on flat G2 model manifolds.
//!
//! The crate is organised bottom-up:
//!
//! * [`forms`]: exterior algebra on small real vector spaces.
//! * [`g2`]: the standard positive 3-form, induced metric, cross products
//!   and product structures.
//! * [`mesh`]: simplicial complexes immersed in the flat torus `T^7`.
//! * [`homology`]: integer (co)homology via Smith normal form, cup products.
//! * [`gauge`]: U(1) lattice connections on meshes and on the cubical 7-torus.
//! * [`cycles`]: configuration-space one-forms, closedness checks and flows.
//! * [`lagr`]: symplectic linear algebra for boundary values.

pub mod builders;
pub mod cycles;
pub mod forms;
pub mod g2;
pub mod gauge;
pub mod homology;
pub mod lagr;
pub mod mesh;
pub mod rational;
