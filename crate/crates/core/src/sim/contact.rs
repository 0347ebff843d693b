use nalgebra::Vector3;

use super::Terrain;

/// Ground reaction on one foot, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    /// Normal force magnitude (N), never negative.
    pub normal: f64,
    /// Tangential (friction) force (N).
    pub tangential: Vector3<f64>,
    /// Tangential foot speed while in contact (m/s).
    pub slip_speed: f64,
}

impl ContactForce {
    pub const NONE: ContactForce = ContactForce {
        normal: 0.0,
        tangential: Vector3::new(0.0, 0.0, 0.0),
        slip_speed: 0.0,
    };

    /// Total force on the foot.
    pub fn total(&self, terrain: &Terrain) -> Vector3<f64> {
        terrain.normal() * self.normal + self.tangential
    }
}

/// Penalty contact between a point foot and the terrain plane.
///
/// The normal force is a one-sided spring-damper on the penetration depth.
/// Friction is viscous in the slip velocity and saturates on the Coulomb cone,
/// where the foot slides.
pub fn contact_force(
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    terrain: &Terrain,
) -> ContactForce {
    let n = terrain.normal();
    let depth = -position.dot(&n);
    if depth <= 0.0 {
        return ContactForce::NONE;
    }
    let v_normal = velocity.dot(&n);
    let normal = (terrain.contact_stiffness * depth - terrain.contact_damping * v_normal).max(0.0);
    if normal == 0.0 {
        return ContactForce::NONE;
    }
    let v_tangent = velocity - n * v_normal;
    let mut tangential = -terrain.tangential_damping * v_tangent;
    let limit = terrain.friction_coefficient * normal;
    let magnitude = tangential.norm();
    if magnitude > limit {
        tangential *= limit / magnitude;
    }
    ContactForce {
        normal,
        tangential,
        slip_speed: v_tangent.norm(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn above_surface_is_free() {
        let t = Terrain::default();
        let c = contact_force(
            &Vector3::new(0.0, 0.0, 0.01),
            &Vector3::new(0.0, 0.0, -1.0),
            &t,
        );
        assert_eq!(c, ContactForce::NONE);
    }

    #[test]
    fn static_penetration_is_spring() {
        let t = Terrain::default();
        let c = contact_force(&Vector3::new(0.3, -0.1, -0.002), &Vector3::zeros(), &t);
        assert!((c.normal - t.contact_stiffness * 0.002).abs() < 1e-9);
        assert_eq!(c.tangential, Vector3::zeros());
    }

    #[test]
    fn separating_fast_gives_no_pull() {
        let t = Terrain::default();
        let c = contact_force(
            &Vector3::new(0.0, 0.0, -0.001),
            &Vector3::new(0.0, 0.0, 5.0),
            &t,
        );
        assert_eq!(c.normal, 0.0);
    }

    proptest! {
        #[test]
        fn friction_stays_in_cone(
            x in -1.0..1.0f64, z in -0.01..0.005f64,
            vx in -3.0..3.0f64, vy in -3.0..3.0f64, vz in -1.0..1.0f64,
            mu in 0.0..1.5f64, slope in -0.3..0.3f64,
        ) {
            let t = Terrain { friction_coefficient: mu, slope_angle: slope, ..Terrain::default() };
            let c = contact_force(&Vector3::new(x, 0.0, z + x * slope.tan()), &Vector3::new(vx, vy, vz), &t);
            prop_assert!(c.normal >= 0.0);
            prop_assert!(c.tangential.norm() <= mu * c.normal + 1e-12);
            prop_assert!(c.tangential.dot(&t.normal()).abs() < 1e-9);
        }
    }
}
