//! Closest-point lifting onto implicit surfaces.

use crate::error::{Error, Result};

/// Lift tolerance; near machine precision so that geometry error never
/// dominates the FEM error.
pub const LIFT_TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;

/// A surface given by a signed-distance-like function, with an optional
/// analytic gradient (central finite differences otherwise).
pub struct ImplicitSurface {
    distance: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    gradient: Option<Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>>,
}

impl ImplicitSurface {
    pub fn new(distance: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { distance: Box::new(distance), gradient: None }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    /// Unit sphere/circle `|x| - 1` (any ambient dimension).
    pub fn sphere() -> Self {
        Self::new(|x: &[f64]| {
            x.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0
        })
        .with_gradient(|x, g| {
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
            for (gi, &xi) in g.iter_mut().zip(x) {
                *gi = xi / r;
            }
        })
    }

    /// Torus around the z-axis with ring radius `big_r` and tube radius
    /// `small_r` (exact signed distance).
    pub fn torus(big_r: f64, small_r: f64) -> Self {
        Self::new(move |x: &[f64]| {
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let q = rho - big_r;
            (q * q + x[2] * x[2]).sqrt() - small_r
        })
    }

    /// Built-in surfaces by name: `sphere`, `circle`, `torus`.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "sphere" | "circle" => Some(Self::sphere()),
            "torus" => Some(Self::torus(1.0, 0.4)),
            _ => None,
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        (self.distance)(x)
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        match &self.gradient {
            Some(g) => g(x, out),
            None => {
                let mut probe = x.to_vec();
                for k in 0..x.len() {
                    let h = 1e-6 * x[k].abs().max(1.0);
                    probe[k] = x[k] + h;
                    let fp = (self.distance)(&probe);
                    probe[k] = x[k] - h;
                    let fm = (self.distance)(&probe);
                    probe[k] = x[k];
                    out[k] = (fp - fm) / (2.0 * h);
                }
            }
        }
    }
}

/// Project points onto the zero level set by damped gradient iteration
/// `y <- y - damping * d(y) grad d(y) / |grad d(y)|^2`; the damping is
/// halved whenever the residual would increase.
///
/// `points` is a flat `k * m` array; the lifted copy is returned.
pub fn lift_nodes(points: &[f64], m: usize, surface: &ImplicitSurface) -> Result<Vec<f64>> {
    if m == 0 || points.len() % m != 0 {
        return Err(Error::DimensionMismatch(format!(
            "lift_nodes: {} coordinates with ambient dimension {m}",
            points.len()
        )));
    }
    let mut out = points.to_vec();
    let mut failures = 0usize;
    let mut worst: f64 = 0.0;
    let mut grad = vec![0.0; m];
    let mut candidate = vec![0.0; m];
    for point in out.chunks_mut(m) {
        let mut res = surface.distance(point);
        let mut converged = res.abs() <= LIFT_TOL;
        let mut damping = 1.0;
        for _ in 0..MAX_ITER {
            if converged {
                break;
            }
            surface.grad(point, &mut grad);
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            if g2 < 1e-300 {
                break;
            }
            let scale = damping * res / g2;
            for k in 0..m {
                candidate[k] = point[k] - scale * grad[k];
            }
            let new_res = surface.distance(&candidate);
            if new_res.abs() < res.abs() {
                point.copy_from_slice(&candidate);
                res = new_res;
                converged = res.abs() <= LIFT_TOL;
            } else {
                damping *= 0.5;
                if damping < 1e-14 {
                    break;
                }
            }
        }
        if !converged {
            failures += 1;
            worst = worst.max(res.abs());
        }
    }
    if failures > 0 {
        return Err(Error::LiftFailed { count: failures, worst });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radial_projection_onto_sphere() {
        let sphere = ImplicitSurface::sphere();
        let lifted = lift_nodes(&[2.0, 0.0, 0.0], 3, &sphere).unwrap();
        assert!((lifted[0] - 1.0).abs() < LIFT_TOL);
        assert!(lifted[1].abs() < LIFT_TOL && lifted[2].abs() < LIFT_TOL);
    }

    #[test]
    fn point_on_surface_is_fixed() {
        let sphere = ImplicitSurface::sphere();
        let p = [0.6, 0.8, 0.0];
        let lifted = lift_nodes(&p, 3, &sphere).unwrap();
        for (a, b) in lifted.iter().zip(&p) {
            assert!((a - b).abs() <= LIFT_TOL);
        }
    }

    #[test]
    fn random_points_near_torus_converge() {
        // no analytic gradient: exercises the finite-difference path
        let torus = ImplicitSurface::new(|x: &[f64]| {
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let q = rho - 1.0;
            (q * q + x[2] * x[2]).sqrt() - 0.4
        });
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut points = Vec::new();
        for _ in 0..100 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let tube = 0.4 + rng.gen_range(-0.2..0.2);
            points.extend_from_slice(&[
                (1.0 + tube * phi.cos()) * theta.cos(),
                (1.0 + tube * phi.cos()) * theta.sin(),
                tube * phi.sin(),
            ]);
        }
        let lifted = lift_nodes(&points, 3, &torus).unwrap();
        for p in lifted.chunks(3) {
            assert!(torus.distance(p).abs() <= LIFT_TOL);
        }
    }

    #[test]
    fn lift_is_idempotent_up_to_tolerance() {
        let sphere = ImplicitSurface::sphere();
        let once = lift_nodes(&[1.7, -0.3, 0.4], 3, &sphere).unwrap();
        let twice = lift_nodes(&once, 3, &sphere).unwrap();
        let moved: f64 = once
            .iter()
            .zip(&twice)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(moved <= 2.0 * LIFT_TOL);
    }
}
