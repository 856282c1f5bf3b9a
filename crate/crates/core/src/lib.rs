//! Variational inference over exponential families in Bregman-divergence
//! form.
//!
//! For a family with log-partition A and optimum φ*, the negative ELBO is
//! the Bregman divergence L(φ) = D_A(φ*‖φ), its gradient is H(φ)(φ − φ*)
//! and its natural gradient is exactly φ − φ*. The crate evaluates these
//! quantities, the ray-wise spectral envelopes that control GD and NGD,
//! runs both optimisers, and checks every bound numerically against
//! independent oracles.
//!
//! | module | contents |
//! |--------|----------|
//! | [`expfam`] | families as (A, ∇A, ∇²A, Ω); Bernoulli product and quadratic |
//! | [`objective`] | L, ∇L, natural gradient, three-point identity, monotonicity |
//! | [`raygeom`] | envelopes α(φ), β(φ), integral representation, one-point bounds |
//! | [`optimizers`] | GD / NGD runs, step schedules, rate calculators |
//! | [`verify`] | finite differences, Simpson, eigensolve, SPD solve |
//! | [`suite`] | the invariant suite behind `bregvi verify` |
//! | [`experiment`] | CLI experiments and their CSV/JSON output |

pub mod error;
pub mod experiment;
pub mod expfam;
pub mod objective;
pub mod optimizers;
pub mod raygeom;
pub mod suite;
pub mod symeig;
pub mod verify;

pub use error::{Error, Result};
pub use expfam::{
    in_domain, make_bernoulli_product, make_quadratic, make_quadratic_diag, ExpFamModel,
    ExponentialFamily, NaturalParams, SpdMatrix,
};
pub use objective::{kl_oracle_bernoulli, three_point_gap, BregmanObjective, MonotonicityCheck};
pub use optimizers::{
    gd_contraction_factor, gd_step, ngd_step, ngd_theoretical_bounds, optimal_gd_step, run, Method,
    RunOptions, StepSchedule, Trajectory,
};
pub use raygeom::{
    condition_number, integral_neg_elbo, one_point_report, quadratic_bounds, ray_point,
    spectral_envelope, OnePointReport, RayEnvelope,
};
