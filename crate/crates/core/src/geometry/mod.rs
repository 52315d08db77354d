//! Grassmann-angle numerics for weighted cross-polytopes: internal angles
//! through the `B`/`J` integrals, external angles by Monte Carlo over
//! outward-normal cones, and the complementary-angle face sum.

mod angles;
mod cones;
mod grassmann;

pub use angles::{
    dawson, inner_product_param, internal_angle, internal_angle_detailed, internal_angle_polytope,
    internal_angle_weighted, j_integral, AngleValue,
};
pub use cones::{
    build_face_normal_cone, external_angle_mc, ConeSpec, ExternalAngle, WeightedCrossPolytopeSpec,
    MAX_FREE_COORDS,
};
pub use grassmann::{grassmann_direct, grassmann_sum, GrassmannEstimate, MAX_SUM_DIM};
