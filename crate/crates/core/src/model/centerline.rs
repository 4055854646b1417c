//! Centerline geometry from a computed `(u, q, r, beta)` solution.
//!
//! The polar angle obeys `phi' = sin(beta) / r` with `phi(0) = 0`; with
//! `beta = alpha - phi` this recovers the planar curve in the rotating frame.

use serde::{Deserialize, Serialize};

use crate::bvp::MeshSolution;
use crate::error::{DomainError, Error};
use crate::ivp::{integrate, IvpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterlineSample {
    pub s: f64,
    pub phi: f64,
    pub x: f64,
    pub y: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centerline {
    pub samples: Vec<CenterlineSample>,
}

fn check_radius(r: f64) -> Result<(), DomainError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(DomainError::NonPositiveRadius(r))
    }
}

/// Integrates the polar angle along `solution` and samples the curve at every
/// collocation point of its mesh.
pub fn reconstruct_centerline(solution: &MeshSolution) -> Result<Centerline, Error> {
    if solution.dim() != 4 {
        return Err(Error::Mesh(format!(
            "expected a 4-component solution, got {}",
            solution.dim()
        )));
    }
    for y in solution.values().chunks_exact(4) {
        check_radius(y[2])?;
    }
    let points = solution.mesh().collocation_points();
    let (a, b) = (solution.mesh().start(), solution.mesh().end());

    let straight = solution.values().chunks_exact(4).all(|y| y[3] == 0.0)
        && solution.slopes().chunks_exact(4).all(|d| d[3] == 0.0);
    let phi: Vec<f64> = if straight {
        vec![0.0; points.len()]
    } else {
        let cfg = IvpConfig::with_tolerances(1e-12, 1e-14);
        let traj = integrate(
            |s, _y: &[f64], dy: &mut [f64]| {
                let z = solution.evaluate(s);
                check_radius(z[2])?;
                dy[0] = z[3].sin() / z[2];
                Ok(())
            },
            &[0.0],
            (a, b),
            &cfg,
        )?;
        if let Some(stop) = traj.domain_stop() {
            return Err(stop.error.into());
        }
        points
            .iter()
            .map(|&s| traj.evaluate(s).map(|v| v[0]))
            .collect::<Result<_, _>>()?
    };

    let samples = points
        .iter()
        .zip(&phi)
        .zip(solution.values().chunks_exact(4))
        .map(|((&s, &phi), y)| {
            let (sin_p, cos_p) = phi.sin_cos();
            CenterlineSample {
                s,
                phi,
                x: y[2] * cos_p,
                y: y[2] * sin_p,
                area: 1.0 / y[0],
            }
        })
        .collect();
    Ok(Centerline { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvp::Mesh;

    #[test]
    fn straight_ray_without_turning() {
        let mesh = Mesh::uniform(0.0, 1.0, 8).unwrap();
        let sol = MeshSolution::from_fn(mesh, 4, |s| {
            Ok((vec![1.0 + s, 1.0, 1.0 + s, 0.0], vec![1.0, 0.0, 1.0, 0.0]))
        })
        .unwrap();
        let c = reconstruct_centerline(&sol).unwrap();
        for p in &c.samples {
            assert_eq!(p.phi, 0.0);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.x, 1.0 + p.s);
            assert!((p.area * (1.0 + p.s) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_nonpositive_radius() {
        let mesh = Mesh::uniform(0.0, 1.0, 4).unwrap();
        let sol = MeshSolution::from_fn(mesh, 4, |s| {
            Ok((vec![1.0, 1.0, 0.5 - s, 0.1], vec![0.0, 0.0, -1.0, 0.0]))
        })
        .unwrap();
        assert!(matches!(
            reconstruct_centerline(&sol),
            Err(Error::Domain(DomainError::NonPositiveRadius(_)))
        ));
    }

    #[test]
    fn circle_about_the_origin() {
        // r = 1 and beta = pi/2 trace the unit circle with phi = s.
        let mesh = Mesh::uniform(0.0, 2.0, 16).unwrap();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let sol = MeshSolution::from_fn(mesh, 4, |_| {
            Ok((vec![1.0, 1.0, 1.0, half_pi], vec![0.0; 4]))
        })
        .unwrap();
        let c = reconstruct_centerline(&sol).unwrap();
        for p in &c.samples {
            assert!((p.phi - p.s).abs() < 1e-10);
            assert!((p.x - p.s.cos()).abs() < 1e-10);
        }
    }
}
