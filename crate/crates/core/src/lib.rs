//! Stackelberg congestion games on road networks.
//!
//! A leader sets tolls, capacities, or routed fleet flows; travelers respond
//! by imitative logit dynamics (ILD) until their route choices reach a
//! Wardrop equilibrium. This crate solves both levels:
//!
//! * **Lower level** — equilibrium computation by ILD with certified step
//!   sizes ([`dynamics`]), over routes enumerated per OD pair ([`paths`]) on
//!   networks with affine, BPR, or mixed-autonomy link costs ([`cost`]).
//! * **Differentiation** — the dynamics unroll into a recorded computation
//!   graph whose adjoint sweep yields exact gradients of leader objectives
//!   with respect to the decision and the initial route split ([`unroll`]);
//!   the adjoint pass costs at most a third more than the forward pass.
//! * **Upper level** — mirror-descent leader optimization in double-loop,
//!   single-loop, iterative, and system-optimum variants ([`scg`]), over
//!   problem families for congestion pricing, capacity design, fleet routing,
//!   and mixed-autonomy pricing ([`problems`]).
//!
//! Networks come from built-in generators, a JSON document, or TNTP files
//! ([`net`], [`tntp`]). All computations are deterministic: given the same
//! inputs and seeds, solvers produce identical bytes.

pub mod cost;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod net;
pub mod paths;
pub mod problems;
pub mod scg;
pub mod sparse;
pub mod tntp;
pub mod unroll;

pub use error::{Error, Result};
