//! Versioned obstacle families shipped with the scenarios.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{ObstacleShape, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Member {
    pub id: String,
    pub obstacles: Vec<ObstacleShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: String,
    pub members: Vec<Member>,
}

fn member(id: &str, obstacles: Vec<ObstacleShape>) -> Member {
    Member {
        id: id.into(),
        obstacles,
    }
}

fn polyline(pts: impl IntoIterator<Item = [f64; 2]>) -> ObstacleShape {
    ObstacleShape::polyline(pts.into_iter().map(Point::from).collect(), 0.0)
}

/// Five obstacles in the closed left half-plane, meant to stress how the
/// ratio lower bound depends on `K`. Version 1; never edit in place.
pub fn adversarial_v1() -> FamilySpec {
    let teeth = [-0.2, -0.45, -0.7]
        .map(|x| ObstacleShape::segment([x, -0.15], [x, 0.15], 0.0));
    let mut comb = vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0)];
    comb.extend(teeth);
    // Left half of the circle |x| = 0.3, from (0, 0.3) to (0, -0.3).
    let arc = polyline((0..=64).map(|i| {
        let t = PI / 2.0 + PI * i as f64 / 64.0;
        [(0.3 * t.cos()).min(0.0), 0.3 * t.sin()]
    }));
    // Radius grows linearly from 0.1 to 0.6 as the angle sweeps the left half.
    let spiral = polyline((0..=96).map(|i| {
        let s = i as f64 / 96.0;
        let (t, r) = (PI / 2.0 + PI * s, 0.1 + 0.5 * s);
        [(r * t.cos()).min(0.0), r * t.sin()]
    }));
    FamilySpec {
        name: "adversarial-v1".into(),
        members: vec![
            member(
                "straight-slit",
                vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0)],
            ),
            member(
                "bent-slit",
                vec![polyline([[0.0, 0.0], [-0.3, 0.0], [-0.7, 0.5]])],
            ),
            member("comb-3", comb),
            member("half-disc-arc", vec![arc]),
            member("spiral", vec![spiral]),
        ],
    }
}

/// Straight slits from the origin along the negative axis.
pub fn straight_slits() -> FamilySpec {
    FamilySpec {
        name: "straight-slits".into(),
        members: [0.9, 0.75, 0.6]
            .iter()
            .map(|&l| {
                member(
                    &format!("slit-{l}"),
                    vec![ObstacleShape::segment([-l, 0.0], [0.0, 0.0], 0.0)],
                )
            })
            .collect(),
    }
}

/// Slits that leave the origin along the negative axis and bend upward at
/// `x = −0.3`.
pub fn bent_slits() -> FamilySpec {
    FamilySpec {
        name: "bent-slits".into(),
        members: [0.1, 0.2, 0.3]
            .iter()
            .map(|&b| {
                member(
                    &format!("bent-{b}"),
                    vec![polyline([[0.0, 0.0], [-0.3, 0.0], [-0.9, b]])],
                )
            })
            .collect(),
    }
}

/// Members for the standalone boundary-condition checks.
pub fn qhbc_default() -> FamilySpec {
    FamilySpec {
        name: "qhbc-slits".into(),
        members: vec![
            member(
                "thin-slit",
                vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.0)],
            ),
            member(
                "thick-slit",
                vec![ObstacleShape::segment([-0.9, 0.0], [0.0, 0.0], 0.02)],
            ),
        ],
    }
}

/// Ten points of `B(0, 1/2) ∩ H_+`, the first three on the positive axis.
pub fn uniform_test_points() -> Vec<Point> {
    [
        [0.1, 0.0],
        [0.25, 0.0],
        [0.4, 0.0],
        [0.02, 0.0],
        [0.05, 0.03],
        [0.02, 0.3],
        [0.2, -0.2],
        [0.3, 0.3],
        [0.1, -0.4],
        [0.45, 0.1],
    ]
    .into_iter()
    .map(Point::from)
    .collect()
}

/// Ten point pairs in `B(0, 1/32)`, each at least 0.01 from the negative
/// axis so that slit obstacles stay several cells away on a 1024 grid.
pub fn double_ratio_pairs() -> Vec<(Point, Point)> {
    let at = |r: f64, t: f64| Point::from([r * t.cos(), r * t.sin()]);
    [
        (0.0, 0.8),
        (0.0, -0.8),
        (0.8, -0.8),
        (1.6, -1.6),
        (2.4, -2.4),
        (2.6, -2.6),
        (0.8, 2.6),
        (-0.8, -2.6),
        (1.6, 2.4),
        (0.0, 2.6),
    ]
    .into_iter()
    .map(|(a, b)| (at(0.02, a), at(0.028, b)))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn shipped_families_are_valid_and_left() {
        for fam in [adversarial_v1(), straight_slits(), bent_slits(), qhbc_default()] {
            for m in &fam.members {
                Domain::new(2, m.obstacles.clone(), 1.0).unwrap();
                let left = |p: &Point| p[0] <= 0.0;
                for o in &m.obstacles {
                    let ok = match o {
                        ObstacleShape::Segment { a, b, .. } => left(a) && left(b),
                        ObstacleShape::Polyline { vertices, .. } => vertices.iter().all(left),
                        _ => false,
                    };
                    assert!(ok, "{} leaves the left half-plane", m.id);
                }
            }
        }
    }

    #[test]
    fn test_points_inside_every_member() {
        for m in &adversarial_v1().members {
            let dom = Domain::new(2, m.obstacles.clone(), 1.0).unwrap();
            for p in uniform_test_points() {
                assert!(p.norm() < 0.5 && p[0] > 0.0 && dom.contains(&p));
            }
        }
        for (x, y) in double_ratio_pairs() {
            assert!(x.norm() < 1.0 / 32.0 && y.norm() < 1.0 / 32.0);
            for p in [x, y] {
                assert!(p[0] > 0.0 || p[1].abs() >= 0.01, "{p:?} hugs the negative axis");
            }
        }
    }
}
