//! Difference-of-convex solvers for the discrete privacy funnel.
//!
//! Given a known joint distribution `P(X, Y)` over finite alphabets, the
//! privacy funnel looks for a stochastic release mechanism `P(Z|X)` that keeps
//! `I(Z;X)` (utility) high while keeping `I(Z;Y)` (leakage of the private
//! variable) low. The unconstrained form minimises
//!
//! ```text
//! L(P(Z|X)) = I(Z;Y) - beta * I(Z;X)
//! ```
//!
//! which splits as `f - g` with `f = -H(Z|Y)` and `g = -H(Z) + beta I(Z;X)`,
//! both convex in `P(Z|X)`. The [`dca`] module linearises `g` at each step and
//! solves the resulting surrogate through a closed-form target in `P(Z|Y)`
//! space followed by one of two inner solvers.
//!
//! Module map:
//!
//! - [`prob`]: distributions, entropies, Markov composition, Bayes inversion.
//! - [`linops`]: block-diagonal Markov operators, pseudo-inverse, softmax.
//! - [`simplex`]: Euclidean projection onto the probability simplex.
//! - [`dca`]: the outer iteration and both inner solvers.
//! - [`baseline`]: deterministic clustering baselines (greedy and exhaustive).
//! - [`sweep`]: hyperparameter grids, restarts, Pareto frontier, CSV/JSON.
//! - [`diagnostics`]: numerical certificates for the derivations the solver
//!   relies on.

pub mod baseline;
pub mod dca;
pub mod diagnostics;
pub mod error;
pub mod linops;
pub mod prob;
pub mod simplex;
pub mod sweep;

pub use error::{Error, Result};
pub use prob::{CondDist, DiscreteDist, Encoder, JointXY};

/// Natural-log units to bits.
pub const NATS_TO_BITS: f64 = std::f64::consts::LOG2_E;

/// The 3x3 test distribution used throughout the examples and the
/// acceptance suite: uniform `p_X` and the channel below
/// (row `i`, column `j` = `P(y_i | x_j)`).
pub fn reference_joint() -> JointXY {
    JointXY::from_rows(
        vec![1.0 / 3.0; 3],
        vec![
            vec![0.90, 0.08, 0.40],
            vec![0.025, 0.82, 0.05],
            vec![0.075, 0.10, 0.55],
        ],
    )
    .expect("reference distribution is valid")
}
