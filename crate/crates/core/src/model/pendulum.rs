//! Built-in example: three inverted pendulums on carts coupled through
//! shared springs and dampers, linearized about the upright equilibrium.

use super::{
    DesignConfig, LinkSet, LipschitzBounds, Plant, Subsystem, TimeFun, TimeMatrix,
};
use crate::linalg::Matrix;
use std::collections::BTreeMap;

/// Cart masses of the three subsystems.
const MASSES: [f64; 3] = [5.0, 3.0, 7.0];
/// Cart friction coefficients.
const FRICTION: [f64; 3] = [4.0, 2.0, 1.0];
/// Pendulum bob mass (identical across carts).
const BOB_MASS: f64 = 1.0;
const GRAVITY: f64 = 10.0;
const ROD_LENGTH: f64 = 1.0;
/// Carts are coupled in a chain: 1-2 and 2-3 (zero-based below).
const LINKS: [(usize, usize); 4] = [(0, 1), (1, 0), (1, 2), (2, 1)];

// Spring and damper coefficients shared by every physical link.
fn spring() -> (f64, f64) {
    (1.0, 0.5) // k_ij(t) = 1 + 0.5 cos t
}

fn damper() -> (f64, f64) {
    (1.0, 0.5) // b_ij(t) = 1 + 0.5 sin t
}

fn neighbor_count(i: usize) -> f64 {
    LINKS.iter().filter(|&&(a, _)| a == i).count() as f64
}

/// Build the three-pendulum plant and its design configuration.
///
/// State per cart: pendulum angle, angular rate, cart position, cart
/// velocity. One force input per cart; angle and position measured.
pub fn pendulum_example() -> (Plant, DesignConfig) {
    let (k0, k1) = spring();
    let (b0, b1) = damper();
    let mut subsystems = Vec::with_capacity(3);
    for i in 0..3 {
        let mass = MASSES[i];
        let deg = neighbor_count(i);
        let ml = mass * ROD_LENGTH;
        let mut a = TimeMatrix::zeros(4, 4);
        a.set(0, 1, TimeFun::Const(1.0));
        a.set(1, 0, TimeFun::Const((mass + BOB_MASS) * GRAVITY / ml));
        // k_i(t) = Σ_j k_ij(t), b_i(t) = Σ_j b_ij(t) over physical neighbors
        a.set(
            1,
            2,
            TimeFun::Cos {
                a0: deg * k0 / ml,
                a1: deg * k1 / ml,
                omega: 1.0,
            },
        );
        a.set(
            1,
            3,
            TimeFun::Sin {
                a0: (FRICTION[i] + deg * b0) / ml,
                a1: deg * b1 / ml,
                omega: 1.0,
            },
        );
        a.set(2, 3, TimeFun::Const(1.0));
        a.set(3, 0, TimeFun::Const(-BOB_MASS * GRAVITY / mass));
        a.set(
            3,
            2,
            TimeFun::Cos {
                a0: -deg * k0 / mass,
                a1: -deg * k1 / mass,
                omega: 1.0,
            },
        );
        a.set(
            3,
            3,
            TimeFun::Sin {
                a0: -(FRICTION[i] + deg * b0) / mass,
                a1: -deg * b1 / mass,
                omega: 1.0,
            },
        );
        let b = TimeMatrix::constant(&Matrix::from_rows(&[
            vec![0.0],
            vec![-1.0 / ml],
            vec![0.0],
            vec![1.0 / mass],
        ]));
        let c = TimeMatrix::constant(&Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]));
        subsystems.push(Subsystem { a, b, c });
    }

    let mut couplings = BTreeMap::new();
    for &(i, j) in &LINKS {
        let mass = MASSES[i];
        let ml = mass * ROD_LENGTH;
        let mut h = TimeMatrix::zeros(4, 4);
        h.set(
            1,
            2,
            TimeFun::Cos {
                a0: -k0 / ml,
                a1: -k1 / ml,
                omega: 1.0,
            },
        );
        h.set(
            1,
            3,
            TimeFun::Sin {
                a0: -b0 / ml,
                a1: -b1 / ml,
                omega: 1.0,
            },
        );
        h.set(
            3,
            2,
            TimeFun::Cos {
                a0: k0 / mass,
                a1: k1 / mass,
                omega: 1.0,
            },
        );
        h.set(
            3,
            3,
            TimeFun::Sin {
                a0: b0 / mass,
                a1: b1 / mass,
                omega: 1.0,
            },
        );
        couplings.insert((i, j), h);
    }

    let plant = Plant::new(
        subsystems,
        couplings,
        LipschitzBounds {
            a: 0.48,
            b: 0.0,
            c: 0.0,
            h: 0.34,
        },
    )
    .expect("pendulum plant is well-formed");

    let adjacency = plant.adjacency();
    let mut config = DesignConfig::uniform(3, &adjacency, 280.0, 40.0, 20.0, 10.0, 0.01, 0.05, 0.2);
    config.kappa[2] = 480.0;
    (plant, config)
}

/// The plant adjacency of the example, handy for tests and the compare
/// pipeline.
pub fn pendulum_adjacency() -> LinkSet {
    LinkSet::from_iter(LINKS.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn stated_parameters() {
        let (plant, config) = pendulum_example();
        assert_eq!(plant.subsystem_count(), 3);
        let dims = plant.dims();
        for d in &dims {
            assert_eq!((d.n, d.m, d.r), (4, 1, 2));
        }
        // (M_1 + m) g / (M_1 l) with the stated numbers
        let a0 = plant.subsystem(0).a.eval(0.0);
        assert!((a0.get(1, 0) - 12.0).abs() < 1e-12);
        assert_eq!(config.kappa, vec![280.0, 280.0, 480.0]);
        assert_eq!(config.mu, vec![40.0; 3]);
        assert!(config.iota.values().all(|&v| v == 20.0));
        assert!(config.omega.values().all(|&v| v == 10.0));
        assert_eq!(config.gamma, 0.2);
        assert_eq!(config.beta, vec![0.01; 3]);
        assert_eq!(config.epsilon, vec![0.05; 3]);
    }

    #[test]
    fn spring_damper_values_at_zero() {
        let (plant, _) = pendulum_example();
        let h12 = plant.coupling(0, 1).unwrap().eval(0.0);
        // k_ij(0) = 1.5 and b_ij(0) = 1 scaled by -1/(M_1 l)
        assert!((h12.get(1, 2) + 1.5 / 5.0).abs() < 1e-12);
        assert!((h12.get(1, 3) + 1.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_structure_at_zero() {
        let (plant, _) = pendulum_example();
        let snap = plant.aggregate(0.0);
        assert_eq!(snap.a.total_rows(), 12);
        assert_eq!(snap.h.block_count(), 4);
        for &(i, j) in &[(0usize, 1usize), (1, 0), (1, 2), (2, 1)] {
            assert!(snap.h.block(i, j).is_some());
        }
        assert!(snap.h.block(0, 2).is_none());
        assert!(snap.h.block(2, 0).is_none());
    }

    #[test]
    fn adjacency_is_symmetric_pattern() {
        let (plant, _) = pendulum_example();
        let adj = plant.adjacency();
        for &(i, j) in adj.iter() {
            assert!(adj.contains(&(j, i)));
        }
    }

    #[test]
    fn derivative_bounds_hold_by_sampling() {
        let (plant, _) = pendulum_example();
        plant
            .validate_derivative_bounds(10.0 * PI, 1000, 2024)
            .unwrap();
    }

    #[test]
    fn increment_bounds_hold_on_random_pairs() {
        let (plant, _) = pendulum_example();
        plant.validate_increment_bounds(10.0 * PI, 1000, 77).unwrap();
    }
}
