//! Simulated operator: a spring-damper hand pulling the master handle along
//! a splined reference, plus the indexing (clutch) schedule.

use nalgebra::{UnitQuaternion, Vector3, Vector6};

use super::config::OperatorSpec;

/// Piecewise cubic through waypoints with zero velocity at each waypoint;
/// held constant outside the waypoint span.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    points: Vec<(f64, Vector3<f64>)>,
}

impl Spline {
    pub fn new(waypoints: &[[f64; 4]]) -> Self {
        Self {
            points: waypoints
                .iter()
                .map(|w| (w[0], Vector3::new(w[1], w[2], w[3])))
                .collect(),
        }
    }

    /// Position and velocity at `t`.
    pub fn eval(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let first = &self.points[0];
        let last = &self.points[self.points.len() - 1];
        if t <= first.0 {
            return (first.1, Vector3::zeros());
        }
        if t >= last.0 {
            return (last.1, Vector3::zeros());
        }
        let k = self.points.partition_point(|p| p.0 <= t) - 1;
        let (t0, p0) = self.points[k];
        let (t1, p1) = self.points[k + 1];
        let h = t1 - t0;
        let u = (t - t0) / h;
        let s = u * u * (3.0 - 2.0 * u);
        let ds = 6.0 * u * (1.0 - u) / h;
        (p0 + (p1 - p0) * s, (p1 - p0) * ds)
    }

    pub fn end_time(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub spec: OperatorSpec,
    pub reference: Spline,
    origin: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

impl Operator {
    /// `origin` and `orientation` are the initial handle pose.
    pub fn new(spec: &OperatorSpec, origin: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            spec: spec.clone(),
            reference: Spline::new(&spec.waypoints),
            origin,
            orientation,
        }
    }

    /// Wrench the hand applies to the handle, base-aligned `[f; τ]`.
    pub fn wrench(
        &self,
        t: f64,
        position: &Vector3<f64>,
        orientation: &UnitQuaternion<f64>,
        velocity: &Vector6<f64>,
    ) -> Vector6<f64> {
        let (p_ref, v_ref) = self.reference.eval(t);
        let v = velocity.fixed_rows::<3>(0).into_owned();
        let w = velocity.fixed_rows::<3>(3).into_owned();
        let f = (self.origin + p_ref - position) * self.spec.stiffness + (v_ref - v) * self.spec.damping;
        let rot = crate::chain::orientation_error_base(&self.orientation, orientation);
        let tau = rot * (2.0 * self.spec.rot_stiffness) - w * self.spec.rot_damping;
        let mut out = Vector6::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&f);
        out.fixed_rows_mut::<3>(3).copy_from(&tau);
        out
    }

    /// Whether indexing is in progress at `t`.
    pub fn clutch_open(&self, t: f64) -> bool {
        self.spec.clutch.iter().any(|c| t >= c[0] && t < c[1])
    }
}
