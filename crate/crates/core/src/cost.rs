//! Link travel-time models and derived quantities.
//!
//! Three congestion models are supported on a per-link flow vector `x`:
//!
//! * affine: `u = a + b∘x` with `a = u0`;
//! * BPR: `u = u0·(1 + 0.15·(x/v0)⁴)`;
//! * revised BPR for mixed autonomy: the capacity grows with the squared
//!   share of automated flow, `u = u0·(1 + 0.15·(x_sum/((1 + η·(x₁/x_sum)²)·v0))⁴)`,
//!   where `x₁` is the automated-class flow and `x_sum` the pooled flow. At
//!   `x_sum = 0` the share term is taken as 0 (the continuous extension,
//!   whose partial derivatives also vanish).
//!
//! Class-specific costs add tolls converted to time units: `u_m = u_time +
//! γ·β_m`. Marginal costs `u + x∘u′` drive system-optimal routing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Link;
use crate::sparse::Incidence;

/// Which congestion model maps link flow to travel time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CostKind {
    /// `u = u0 + b∘x`.
    Affine,
    /// `u = u0·(1 + 0.15·(x/v0)⁴)`.
    Bpr,
    /// Pooled BPR with capacity lifted by the automated share; `eta` is the
    /// capacity-gain coefficient η.
    RevisedBpr { eta: f64 },
}

/// Congestion model plus the money-to-time factor γ for tolls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    /// Converts a toll into time units in class costs `u_time + γ·β`.
    pub gamma: f64,
}

/// One demand class of a multiclass model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Fraction of every OD pair's demand carried by this class.
    pub demand_share: f64,
}

/// Affine link costs `a + b∘x`.
pub fn link_cost_affine(a: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(x)
        .map(|((a, b), x)| a + b * x)
        .collect()
}

/// BPR link costs `u0·(1 + 0.15·(x/v0)⁴)`.
pub fn link_cost_bpr(u0: &[f64], v0: &[f64], x: &[f64]) -> Vec<f64> {
    u0.iter()
        .zip(v0)
        .zip(x)
        .map(|((u0, v0), x)| {
            let r = x / v0;
            u0 * (1.0 + 0.15 * r.powi(4))
        })
        .collect()
}

/// Revised BPR link costs on pooled flow `x_sum` with automated flow `x1`.
///
/// The automated share lifts capacity to `(1 + η·(x1/x_sum)²)·v0`; at
/// `x_sum = 0` the share is taken as 0.
pub fn link_cost_revised_bpr(
    u0: &[f64],
    v0: &[f64],
    eta: f64,
    x1: &[f64],
    x_sum: &[f64],
) -> Vec<f64> {
    u0.iter()
        .zip(v0)
        .zip(x1.iter().zip(x_sum))
        .map(|((u0, v0), (x1, xs))| {
            let share = if *xs == 0.0 { 0.0 } else { x1 / xs };
            let cap = (1.0 + eta * share * share) * v0;
            let r = xs / cap;
            u0 * (1.0 + 0.15 * r.powi(4))
        })
        .collect()
}

/// Class cost `u_time + γ·β` for one class's toll vector `beta`.
pub fn class_link_cost(u_time: &[f64], gamma: f64, beta: &[f64]) -> Vec<f64> {
    u_time
        .iter()
        .zip(beta)
        .map(|(u, b)| u + gamma * b)
        .collect()
}

/// Path costs `c = Λᵀ u`.
pub fn path_cost(lambda: &Incidence, u: &[f64]) -> Result<Vec<f64>> {
    let mut c = vec![0.0; lambda.ncols()];
    lambda.mul_t(u, &mut c)?;
    Ok(c)
}

/// Total travel time `⟨u, x⟩`.
pub fn total_travel_time(u: &[f64], x: &[f64]) -> f64 {
    u.iter().zip(x).map(|(u, x)| u * x).sum()
}

/// Capacity-design objective: total travel time plus quadratic build cost
/// `β·⟨w, z∘z⟩`.
pub fn design_objective(total_time: f64, beta: f64, w: &[f64], z: &[f64]) -> f64 {
    total_time + beta * w.iter().zip(z).map(|(w, z)| w * z * z).sum::<f64>()
}

impl CostModel {
    /// Link travel times under this model (single flow vector; the revised
    /// BPR model needs the class split and has its own entry point).
    pub fn link_cost(&self, links: &[Link], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(links, x)?;
        match self.kind {
            CostKind::Affine => {
                let a: Vec<f64> = links.iter().map(|l| l.u0).collect();
                let b: Vec<f64> = links.iter().map(|l| l.b).collect();
                Ok(link_cost_affine(&a, &b, x))
            }
            CostKind::Bpr => {
                let u0: Vec<f64> = links.iter().map(|l| l.u0).collect();
                let v0: Vec<f64> = links.iter().map(|l| l.v0).collect();
                Ok(link_cost_bpr(&u0, &v0, x))
            }
            CostKind::RevisedBpr { .. } => Err(Error::InvalidModel(
                "revised BPR needs the class split; use link_cost_revised_bpr".into(),
            )),
        }
    }

    /// Elementwise derivative `du/dx` at `x`.
    pub fn link_cost_deriv(&self, links: &[Link], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(links, x)?;
        match self.kind {
            CostKind::Affine => Ok(links.iter().map(|l| l.b).collect()),
            CostKind::Bpr => Ok(links
                .iter()
                .zip(x)
                .map(|(l, x)| l.u0 * 0.6 * x.powi(3) / l.v0.powi(4))
                .collect()),
            CostKind::RevisedBpr { .. } => Err(Error::InvalidModel(
                "revised BPR needs the class split; use link_cost_revised_bpr".into(),
            )),
        }
    }

    /// Marginal link cost `u + x∘u′`, the cost seen by system-optimal flow.
    pub fn marginal_link_cost(&self, links: &[Link], x: &[f64]) -> Result<Vec<f64>> {
        let u = self.link_cost(links, x)?;
        let du = self.link_cost_deriv(links, x)?;
        Ok(u.iter()
            .zip(&du)
            .zip(x)
            .map(|((u, du), x)| u + x * du)
            .collect())
    }

    fn check_dim(&self, links: &[Link], x: &[f64]) -> Result<()> {
        if links.len() != x.len() {
            return Err(Error::Dimension {
                what: "link flows",
                expected: links.len(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Shorthand for a model without tolls.
pub fn marginal_link_cost(kind: CostKind, links: &[Link], x: &[f64]) -> Result<Vec<f64>> {
    CostModel { kind, gamma: 0.0 }.marginal_link_cost(links, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_two_link;

    #[test]
    fn affine_matches_hand_values() {
        let u = link_cost_affine(&[1.0, 2.0], &[1.0, 1.0], &[2.0, 1.0]);
        assert_eq!(u, vec![3.0, 3.0]);
    }

    #[test]
    fn bpr_matches_hand_value() {
        // u0 = 2, v0 = 4, x = 2: 2·(1 + 0.15·0.5⁴) = 2.01875.
        let u = link_cost_bpr(&[2.0], &[4.0], &[2.0]);
        assert!((u[0] - 2.01875).abs() < 1e-15);
    }

    #[test]
    fn revised_bpr_matches_hand_value() {
        // u0 = v0 = η = 1, x1 = x2 = 1: share 0.5, capacity 1.25, ratio 1.6,
        // 1 + 0.15·1.6⁴ = 1.98304.
        let u = link_cost_revised_bpr(&[1.0], &[1.0], 1.0, &[1.0], &[2.0]);
        assert!((u[0] - 1.98304).abs() < 1e-12);
    }

    #[test]
    fn revised_bpr_empty_link_is_free_flow() {
        let u = link_cost_revised_bpr(&[3.0], &[1.0], 1.0, &[0.0], &[0.0]);
        assert_eq!(u[0], 3.0);
    }

    #[test]
    fn revised_bpr_continuous_at_zero() {
        let tiny = link_cost_revised_bpr(&[3.0], &[1.0], 1.0, &[1e-9], &[2e-9]);
        assert!((tiny[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn class_cost_adds_scaled_toll() {
        let u = class_link_cost(&[1.0, 2.0], 0.5, &[2.0, 0.0]);
        assert_eq!(u, vec![2.0, 2.0]);
    }

    #[test]
    fn marginal_affine_is_a_plus_2bx() {
        let net = build_two_link();
        let m = CostModel { kind: CostKind::Affine, gamma: 0.0 };
        let mc = m.marginal_link_cost(&net.links, &[1.75, 1.25]).unwrap();
        assert!((mc[0] - 4.5).abs() < 1e-15);
        assert!((mc[1] - 4.5).abs() < 1e-15);
    }

    #[test]
    fn marginal_matches_finite_difference_of_total_time() {
        // d/dx_a [x_a·u_a(x_a)] = u + x·u′ for separable costs.
        let links = vec![
            Link { tail: 0, head: 1, u0: 2.0, v0: 3.0, b: 0.0, bpr_b: None, bpr_power: None },
            Link { tail: 0, head: 1, u0: 1.0, v0: 5.0, b: 0.0, bpr_b: None, bpr_power: None },
        ];
        let m = CostModel { kind: CostKind::Bpr, gamma: 0.0 };
        let x = vec![2.5, 4.0];
        let mc = m.marginal_link_cost(&links, &x).unwrap();
        let h = 1e-6;
        for a in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[a] += h;
            xm[a] -= h;
            let tp = total_travel_time(&m.link_cost(&links, &xp).unwrap(), &xp);
            let tm = total_travel_time(&m.link_cost(&links, &xm).unwrap(), &xm);
            let fd = (tp - tm) / (2.0 * h);
            assert!((mc[a] - fd).abs() < 1e-5, "link {a}: {} vs {fd}", mc[a]);
        }
    }

    #[test]
    fn bpr_monotone_in_flow() {
        let u0 = [1.5];
        let v0 = [2.0];
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let x = [0.2 * i as f64];
            let u = link_cost_bpr(&u0, &v0, &x)[0];
            assert!(u >= prev);
            prev = u;
        }
    }

    #[test]
    fn design_objective_adds_quadratic_cost() {
        let j = design_objective(10.0, 2.0, &[1.0, 3.0], &[1.0, 2.0]);
        assert!((j - (10.0 + 2.0 * (1.0 + 12.0))).abs() < 1e-15);
    }
}
