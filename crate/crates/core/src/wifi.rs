//! Wi-Fi reflection features: per-link PLCR/DPLCR synthesis, steering
//! matrices and least-squares velocity recovery.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LinkGeometry, LinkMode, Point2D, Vec2, Velocity2D};
use crate::trajectory::SampledTrajectory;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Condition numbers above this are treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WifiConfig {
    pub carrier_frequency: f64,
    pub wavelength: f64,
    pub plcr_rate: f64,
    /// Per-link PLCR noise std in m/s. The reference geometry has unit-gain
    /// orthogonal rows, so this equals the induced velocity error there.
    pub noise_sigma_v: f64,
}

impl Default for WifiConfig {
    fn default() -> Self {
        Self::with_carrier(5.32e9, 100.0, 0.05)
    }
}

impl WifiConfig {
    pub fn with_carrier(carrier_frequency: f64, plcr_rate: f64, noise_sigma_v: f64) -> Self {
        Self {
            carrier_frequency,
            wavelength: SPEED_OF_LIGHT / carrier_frequency,
            plcr_rate,
            noise_sigma_v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::InvalidInput("carrier_frequency must be positive".into()));
        }
        let expected = SPEED_OF_LIGHT / self.carrier_frequency;
        if ((self.wavelength - expected) / expected).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "wavelength {} inconsistent with carrier (expected {expected})",
                self.wavelength
            )));
        }
        if !(self.plcr_rate > 0.0 && self.plcr_rate.is_finite()) {
            return Err(Error::InvalidInput("plcr_rate must be positive".into()));
        }
        if !(self.noise_sigma_v >= 0.0 && self.noise_sigma_v.is_finite()) {
            return Err(Error::InvalidInput("noise_sigma_v must be non-negative".into()));
        }
        Ok(())
    }
}

fn unit_from(p: Point2D, q: Point2D) -> Result<Vec2> {
    let d = p - q;
    let n = d.norm();
    if n <= 1e-12 {
        return Err(Error::SingularCoefficient { x: p.x, y: p.y });
    }
    Ok(d.scale(1.0 / n))
}

pub fn los_coefficients(p: Point2D, link: &LinkGeometry) -> Result<Vec2> {
    Ok(unit_from(p, link.tx)? + unit_from(p, link.rx)?)
}

pub fn nlos_coefficients(p: Point2D, pair: &LinkGeometry) -> Result<Vec2> {
    Ok(unit_from(p, pair.tx)? - unit_from(p, pair.rx)?)
}

/// Steering row for either mode.
pub fn coefficients(p: Point2D, link: &LinkGeometry) -> Result<Vec2> {
    match link.mode {
        LinkMode::Los => los_coefficients(p, link),
        LinkMode::Nlos => nlos_coefficients(p, link),
    }
}

/// Derivative of the steering row with respect to `p`, i.e. the Hessian of
/// the link's path-length function. Row-major `[[d ax/dx, d ax/dy], [d ay/dx, d ay/dy]]`.
pub fn coefficient_jacobian(p: Point2D, link: &LinkGeometry) -> Result<[[f64; 2]; 2]> {
    let term = |q: Point2D| -> Result<[[f64; 2]; 2]> {
        let d = p - q;
        let n = d.norm();
        if n <= 1e-12 {
            return Err(Error::SingularCoefficient { x: p.x, y: p.y });
        }
        let (ux, uy) = (d.x / n, d.y / n);
        Ok([
            [(1.0 - ux * ux) / n, -ux * uy / n],
            [-ux * uy / n, (1.0 - uy * uy) / n],
        ])
    };
    let a = term(link.tx)?;
    let b = term(link.rx)?;
    let s = match link.mode {
        LinkMode::Los => 1.0,
        LinkMode::Nlos => -1.0,
    };
    Ok([
        [a[0][0] + s * b[0][0], a[0][1] + s * b[0][1]],
        [a[1][0] + s * b[1][0], a[1][1] + s * b[1][1]],
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    pub rows: Vec<Vec2>,
}

impl SteeringMatrix {
    pub fn normal_matrix(&self) -> [[f64; 2]; 2] {
        let mut n = [[0.0; 2]; 2];
        for r in &self.rows {
            n[0][0] += r.x * r.x;
            n[0][1] += r.x * r.y;
            n[1][1] += r.y * r.y;
        }
        n[1][0] = n[0][1];
        n
    }

    /// Ratio of the largest to the smallest singular value.
    pub fn condition_number(&self) -> f64 {
        let n = self.normal_matrix();
        let tr = n[0][0] + n[1][1];
        let det = n[0][0] * n[1][1] - n[0][1] * n[1][0];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let hi = 0.5 * tr + disc;
        let lo = 0.5 * tr - disc;
        if hi <= 0.0 {
            return f64::INFINITY;
        }
        // Smallest eigenvalue via det/hi avoids cancellation in `lo`.
        let lo = if lo > 0.0 { (det / hi).max(0.0) } else { lo.max(0.0) };
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).sqrt()
        }
    }

    pub fn apply(&self, v: Velocity2D) -> Vec<f64> {
        self.rows.iter().map(|r| r.x * v.vx + r.y * v.vy).collect()
    }
}

pub fn build_steering_matrix(p: Point2D, links: &[LinkGeometry]) -> Result<SteeringMatrix> {
    if links.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two links, got {}",
            links.len()
        )));
    }
    check_same_mode(links)?;
    let rows = links
        .iter()
        .map(|l| coefficients(p, l))
        .collect::<Result<Vec<_>>>()?;
    let m = SteeringMatrix { rows };
    let condition = m.condition_number();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    Ok(m)
}

fn check_same_mode(links: &[LinkGeometry]) -> Result<()> {
    if let Some(first) = links.first() {
        if links.iter().any(|l| l.mode != first.mode) {
            return Err(Error::InvalidInput("all links must share one mode".into()));
        }
    }
    Ok(())
}

/// Least-squares velocity `(M^T M)^-1 M^T r`.
pub fn recover_velocity(m: &SteeringMatrix, r: &[f64]) -> Result<Velocity2D> {
    if r.len() != m.rows.len() {
        return Err(Error::LengthMismatch {
            what: "PLCR vector",
            got: r.len(),
            expected: m.rows.len(),
        });
    }
    let condition = m.condition_number();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let n = m.normal_matrix();
    let (mut bx, mut by) = (0.0, 0.0);
    for (row, &ri) in m.rows.iter().zip(r) {
        bx += row.x * ri;
        by += row.y * ri;
    }
    let det = n[0][0] * n[1][1] - n[0][1] * n[1][0];
    Ok(Velocity2D::new(
        (n[1][1] * bx - n[0][1] * by) / det,
        (n[0][0] * by - n[1][0] * bx) / det,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlcrSeries {
    pub timestamps: Vec<f64>,
    /// `values[k][i]` is link `i` at sample `k`.
    pub values: Vec<Vec<f64>>,
    pub mode: LinkMode,
    /// Samples whose coefficients were singular; their values are zero.
    pub singular: Vec<usize>,
}

impl PlcrSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn links(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Noiseless PLCR: the steering row at the true position dotted with the
/// true velocity.
pub fn synthesize_plcr(
    traj: &SampledTrajectory,
    links: &[LinkGeometry],
    cfg: &WifiConfig,
) -> Result<PlcrSeries> {
    cfg.validate()?;
    if links.is_empty() {
        return Err(Error::InvalidInput("no links given".into()));
    }
    check_same_mode(links)?;
    let mut values = Vec::with_capacity(traj.len());
    let mut singular = Vec::new();
    for (k, (p, v)) in traj.positions.iter().zip(&traj.velocities).enumerate() {
        let row: Result<Vec<f64>> = links
            .iter()
            .map(|l| coefficients(*p, l).map(|a| a.x * v.vx + a.y * v.vy))
            .collect();
        match row {
            Ok(r) => values.push(r),
            Err(Error::SingularCoefficient { .. }) => {
                singular.push(k);
                values.push(vec![0.0; links.len()]);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PlcrSeries {
        timestamps: traj.timestamps.clone(),
        values,
        mode: links[0].mode,
        singular,
    })
}

/// Adds i.i.d. zero-mean Gaussian noise with std `cfg.noise_sigma_v` to every
/// entry.
pub fn add_plcr_noise<R: Rng + ?Sized>(series: &mut PlcrSeries, cfg: &WifiConfig, rng: &mut R) {
    if cfg.noise_sigma_v <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, cfg.noise_sigma_v).expect("finite sigma");
    for row in &mut series.values {
        for x in row.iter_mut() {
            *x += normal.sample(rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{path_difference, reflection_path_length, SpeakerPair};
    use crate::trajectory::{generate_shape, sample_trajectory, MotionProfile, Shape};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2D {
        Point2D::new(x, y)
    }

    fn central_gradient(f: impl Fn(Point2D) -> f64, at: Point2D) -> Vec2 {
        let h = 1e-5;
        Vec2::new(
            (f(p(at.x + h, at.y)) - f(p(at.x - h, at.y))) / (2.0 * h),
            (f(p(at.x, at.y + h)) - f(p(at.x, at.y - h))) / (2.0 * h),
        )
    }

    #[test]
    fn los_symmetric_point() {
        let link = LinkGeometry::los(p(0.0, 0.0), p(2.0, 0.0)).unwrap();
        let a = los_coefficients(p(1.0, 1.0), &link).unwrap();
        assert!(a.x.abs() < 1e-12);
        assert!((a.y - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn los_beyond_receiver_is_aligned() {
        let link = LinkGeometry::los(p(0.0, 0.0), p(2.0, 0.0)).unwrap();
        let a = los_coefficients(p(3.5, 0.0), &link).unwrap();
        assert!((a.x - 2.0).abs() < 1e-12 && a.y.abs() < 1e-12);
        let b = los_coefficients(p(-1.0, 0.0), &link).unwrap();
        assert!((b.x + 2.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_point_is_singular() {
        let link = LinkGeometry::los(p(0.0, 0.0), p(2.0, 0.0)).unwrap();
        assert!(matches!(
            los_coefficients(p(2.0, 0.0), &link),
            Err(Error::SingularCoefficient { .. })
        ));
        let pair = LinkGeometry::nlos(p(0.0, 0.0), p(2.0, 0.0)).unwrap();
        assert!(nlos_coefficients(p(0.0, 0.0), &pair).is_err());
    }

    #[test]
    fn nlos_bisector_and_far_field() {
        let pair = LinkGeometry::nlos(p(-1.0, 0.0), p(1.0, 0.0)).unwrap();
        // On the bisector the y components of the two unit vectors cancel.
        let a = nlos_coefficients(p(0.0, 2.0), &pair).unwrap();
        assert!(a.x.abs() > 0.1 && a.y.abs() < 1e-12);
        let far = nlos_coefficients(p(0.0, 1e7), &pair).unwrap();
        assert!(far.norm() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn los_matches_numeric_gradient(
            tx in (-5.0..5.0f64, -5.0..5.0f64),
            rx in (-5.0..5.0f64, -5.0..5.0f64),
            q in (-5.0..5.0f64, -5.0..5.0f64),
        ) {
            let (tx, rx, q) = (p(tx.0, tx.1), p(rx.0, rx.1), p(q.0, q.1));
            prop_assume!(tx.distance(rx) > 0.1 && q.distance(tx) > 0.1 && q.distance(rx) > 0.1);
            let link = LinkGeometry::los(tx, rx).unwrap();
            let a = los_coefficients(q, &link).unwrap();
            let g = central_gradient(|x| reflection_path_length(x, &link), q);
            prop_assert!((a - g).norm() < 1e-6);
            prop_assert!(a.x.abs() <= 2.0 && a.y.abs() <= 2.0);
        }

        #[test]
        fn nlos_matches_numeric_gradient(
            r1 in (-5.0..5.0f64, -5.0..5.0f64),
            r2 in (-5.0..5.0f64, -5.0..5.0f64),
            q in (-5.0..5.0f64, -5.0..5.0f64),
        ) {
            let (r1, r2, q) = (p(r1.0, r1.1), p(r2.0, r2.1), p(q.0, q.1));
            prop_assume!(r1.distance(r2) > 0.1 && q.distance(r1) > 0.1 && q.distance(r2) > 0.1);
            let pair = LinkGeometry::nlos(r1, r2).unwrap();
            let a = nlos_coefficients(q, &pair).unwrap();
            let sp = SpeakerPair::new(r1, r2).unwrap();
            let g = central_gradient(|x| path_difference(x, &sp), q);
            prop_assert!((a - g).norm() < 1e-6);
        }

        #[test]
        fn hessian_matches_numeric_jacobian(
            tx in (-5.0..5.0f64, -5.0..5.0f64),
            rx in (-5.0..5.0f64, -5.0..5.0f64),
            q in (-5.0..5.0f64, -5.0..5.0f64),
            nlos in any::<bool>(),
        ) {
            let (tx, rx, q) = (p(tx.0, tx.1), p(rx.0, rx.1), p(q.0, q.1));
            prop_assume!(tx.distance(rx) > 0.1 && q.distance(tx) > 0.3 && q.distance(rx) > 0.3);
            let mode = if nlos { LinkMode::Nlos } else { LinkMode::Los };
            let link = LinkGeometry::new(tx, rx, mode).unwrap();
            let j = coefficient_jacobian(q, &link).unwrap();
            let gx = central_gradient(|x| coefficients(x, &link).unwrap().x, q);
            let gy = central_gradient(|x| coefficients(x, &link).unwrap().y, q);
            prop_assert!((j[0][0] - gx.x).abs() < 1e-5 && (j[0][1] - gx.y).abs() < 1e-5);
            prop_assert!((j[1][0] - gy.x).abs() < 1e-5 && (j[1][1] - gy.y).abs() < 1e-5);
        }

        #[test]
        fn recover_round_trip(
            vx in -2.0..2.0f64, vy in -2.0..2.0f64,
            q in (0.5..5.5f64, 0.5..5.5f64),
            scale in 0.1..10.0f64,
        ) {
            let links = default_links();
            let m = build_steering_matrix(p(q.0, q.1), &links).unwrap();
            let v = Velocity2D::new(vx, vy);
            let r = m.apply(v);
            let got = recover_velocity(&m, &r).unwrap();
            let tol = 1e-9 * v.speed().max(1e-3);
            prop_assert!((got.as_vec() - v.as_vec()).norm() <= tol);
            // Scaling a row and its observation together changes nothing.
            let mut m2 = m.clone();
            let mut r2 = r.clone();
            m2.rows[0] = m2.rows[0].scale(scale);
            r2[0] *= scale;
            let got2 = recover_velocity(&m2, &r2).unwrap();
            prop_assert!((got2.as_vec() - v.as_vec()).norm() <= tol * 10.0);
            for x in &r {
                prop_assert!(x.abs() <= 2.0 * v.speed() + 1e-12);
            }
        }
    }

    fn default_links() -> Vec<LinkGeometry> {
        vec![
            LinkGeometry::los(p(0.0, 0.0), p(6.0, 0.0)).unwrap(),
            LinkGeometry::los(p(0.0, 0.0), p(0.0, 6.0)).unwrap(),
            LinkGeometry::los(p(6.0, 6.0), p(0.0, 6.0)).unwrap(),
        ]
    }

    #[test]
    fn orthogonal_links_are_well_conditioned() {
        // From the origin, each link's endpoints sit symmetrically about one
        // axis, so the rows are (0, sqrt2) and (sqrt2, 0).
        let links = vec![
            LinkGeometry::los(p(-1.0, -1.0), p(1.0, -1.0)).unwrap(),
            LinkGeometry::los(p(-1.0, -1.0), p(-1.0, 1.0)).unwrap(),
        ];
        let m = build_steering_matrix(p(0.0, 0.0), &links).unwrap();
        assert!((m.rows[0] - Vec2::new(0.0, 2f64.sqrt())).norm() < 1e-12);
        assert!((m.rows[1] - Vec2::new(2f64.sqrt(), 0.0)).norm() < 1e-12);
        assert!((m.condition_number() - 1.0).abs() < 1e-9);
        // A point on both segments has zero rows.
        let crossing = vec![
            LinkGeometry::los(p(-1.0, 0.0), p(1.0, 0.0)).unwrap(),
            LinkGeometry::los(p(0.0, -1.0), p(0.0, 1.0)).unwrap(),
        ];
        assert!(matches!(
            build_steering_matrix(p(0.0, 0.0), &crossing),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn duplicate_links_rank_deficient() {
        let l = LinkGeometry::los(p(0.0, 0.0), p(6.0, 0.0)).unwrap();
        assert!(matches!(
            build_steering_matrix(p(3.0, 2.0), &[l, l]),
            Err(Error::RankDeficient { .. })
        ));
        assert!(build_steering_matrix(p(3.0, 2.0), &[l]).is_err());
    }

    #[test]
    fn three_link_rows_match_coefficients() {
        let links = default_links();
        let q = p(2.2, 3.7);
        let m = build_steering_matrix(q, &links).unwrap();
        assert_eq!(m.rows.len(), 3);
        for (row, l) in m.rows.iter().zip(&links) {
            assert_eq!(*row, los_coefficients(q, l).unwrap());
        }
        let v = Velocity2D::new(0.3, -0.8);
        let r = m.apply(v);
        let got = recover_velocity(&m, &r).unwrap();
        let resid: f64 = m
            .apply(got)
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(resid <= 1e-9);
        assert_eq!(
            recover_velocity(&m, &[0.0, 0.0, 0.0]).unwrap(),
            Velocity2D::new(0.0, 0.0)
        );
    }

    fn square() -> SampledTrajectory {
        let path = generate_shape(Shape::Square, p(3.0, 3.0), 4.0, 1).unwrap();
        sample_trajectory(&path, &MotionProfile::default(), 100.0).unwrap()
    }

    #[test]
    fn stationary_user_has_zero_plcr() {
        let traj = SampledTrajectory::from_positions(
            0.01,
            vec![0.0, 0.01, 0.02],
            vec![p(2.0, 2.0); 3],
            vec![],
        );
        let s = synthesize_plcr(&traj, &default_links(), &WifiConfig::default()).unwrap();
        assert!(s.values.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn tangent_to_ellipse_gives_zero_plcr() {
        let link = default_links()[0];
        let q = p(2.0, 1.5);
        let tangent = los_coefficients(q, &link).unwrap().perp();
        let v = Velocity2D::from(tangent.scale(1.0 / tangent.norm()));
        let traj = SampledTrajectory {
            dt: 0.01,
            timestamps: vec![0.0],
            positions: vec![q],
            velocities: vec![v],
            lap_boundaries: vec![],
        };
        let s = synthesize_plcr(&traj, &[link], &WifiConfig::default()).unwrap();
        assert!(s.values[0][0].abs() < 1e-6);
    }

    #[test]
    fn plcr_matches_path_length_differences() {
        let traj = square();
        let links = default_links();
        let s = synthesize_plcr(&traj, &links, &WifiConfig::default()).unwrap();
        assert_eq!(s.len(), traj.len());
        let mut worst: f64 = 0.0;
        for k in 0..traj.len() - 1 {
            for (i, l) in links.iter().enumerate() {
                let fd = (reflection_path_length(traj.positions[k + 1], l)
                    - reflection_path_length(traj.positions[k], l))
                    / traj.dt;
                worst = worst.max((fd - s.values[k][i]).abs());
            }
        }
        // Second-order term: speed^2 * max curvature of the path length * dt.
        assert!(worst < 0.05, "worst {worst}");
    }

    #[test]
    fn noise_has_requested_spread() {
        let traj = square();
        let links = default_links();
        let cfg = WifiConfig::default();
        let clean = synthesize_plcr(&traj, &links, &cfg).unwrap();
        let mut noisy = clean.clone();
        add_plcr_noise(&mut noisy, &cfg, &mut ChaCha8Rng::seed_from_u64(7));
        let d: Vec<f64> = noisy
            .values
            .iter()
            .flatten()
            .zip(clean.values.iter().flatten())
            .map(|(a, b)| a - b)
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!(mean.abs() < 0.005);
        assert!((sd - 0.05).abs() < 0.005);
    }

    #[test]
    fn wavelength_must_match_carrier() {
        let mut cfg = WifiConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.wavelength *= 1.001;
        assert!(cfg.validate().is_err());
    }
}
