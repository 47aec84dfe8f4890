use std::sync::Arc;

use super::{Certificate, Driver, RbsdeError, Scenario};

/// `F(s, p, q) = 1_{p>0} (γ p f(s, ln p/γ, q/(γp)) − |q|²/(2p))`, certified by
/// `F ≤ H(p)` with `H` built from the driver's certificate. The bound is
/// probed on a fixed sample before returning.
pub fn exponential_transform(driver: &Driver, gamma: f64) -> Result<Driver, RbsdeError> {
    let declared = driver.certificate().gamma();
    if !(gamma > 0.0) || (gamma - declared).abs() > 1e-12 * declared.abs() {
        return Err(RbsdeError::Assumption(format!(
            "transform γ = {gamma} differs from the certificate γ = {declared}"
        )));
    }
    let h = driver.certificate().growth_transform(false)?;
    let f = driver.function();
    let transformed = Driver::new(
        move |s, p, q| {
            if p > 0.0 {
                let z: Vec<f64> = q.iter().map(|v| v / (gamma * p)).collect();
                let q2: f64 = q.iter().map(|v| v * v).sum();
                gamma * p * f(s, p.ln() / gamma, &z) - 0.5 * q2 / p
            } else {
                0.0
            }
        },
        Certificate::Majorized(h),
        None,
    );
    transformed.spot_check(0x7a11, 500, 5.0, 1.0, 1)?;
    Ok(transformed)
}

/// `(e^{γξ}, F, e^{γL})` with envelope `e^{γa}`.
pub fn transformed_scenario(scenario: &Scenario, gamma: f64) -> Result<Scenario, RbsdeError> {
    let driver = exponential_transform(&scenario.driver, gamma)?;
    let (xi, l, a) = (
        Arc::clone(&scenario.terminal),
        Arc::clone(&scenario.barrier),
        Arc::clone(&scenario.envelope),
    );
    Scenario::new(
        driver,
        move |b| (gamma * xi(b)).exp(),
        move |t, b| (gamma * l(t, b)).exp(),
        move |t| (gamma * a(t)).exp(),
        scenario.horizon,
        scenario.dimension,
    )
}

/// Node arrays `(P, Q, ΔJ)` of a transformed solution.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedValues {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub dj: Vec<Vec<f64>>,
}

/// `P = e^{γY}`, `Q = γPZ`, `ΔJ = γ e^{γY} ΔK`.
pub fn to_transformed(y: &[Vec<f64>], z: &[Vec<f64>], dk: &[Vec<f64>], gamma: f64) -> TransformedValues {
    let p: Vec<Vec<f64>> = y
        .iter()
        .map(|r| r.iter().map(|v| (gamma * v).exp()).collect())
        .collect();
    let q = z
        .iter()
        .zip(&p)
        .map(|(zr, pr)| zr.iter().zip(pr).map(|(zv, pv)| gamma * pv * zv).collect())
        .collect();
    let dj = dk
        .iter()
        .zip(&p)
        .map(|(kr, pr)| kr.iter().zip(pr).map(|(kv, pv)| gamma * pv * kv).collect())
        .collect();
    TransformedValues { p, q, dj }
}

/// Inverse of [`to_transformed`]: `(Y, Z, ΔK)`.
pub fn from_transformed(values: &TransformedValues, gamma: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let y = values
        .p
        .iter()
        .map(|r| r.iter().map(|p| p.ln() / gamma).collect())
        .collect();
    let z = values
        .q
        .iter()
        .zip(&values.p)
        .map(|(qr, pr)| qr.iter().zip(pr).map(|(q, p)| q / (gamma * p)).collect())
        .collect();
    let dk = values
        .dj
        .iter()
        .zip(&values.p)
        .map(|(jr, pr)| jr.iter().zip(pr).map(|(j, p)| j / (gamma * p)).collect())
        .collect();
    (y, z, dk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_driver_transforms_to_zero() {
        for gamma in [0.5, 1.0, 3.0] {
            let f = exponential_transform(&Driver::quadratic_z(gamma), gamma).unwrap();
            for (p, q) in [(0.3, 1.2), (2.0, -0.7), (10.0, 4.0)] {
                assert!(f.eval(0.1, p, &[q]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_and_constant_drivers() {
        let f = exponential_transform(&Driver::zero(1.0), 1.0).unwrap();
        assert!((f.eval(0.0, 2.0, &[3.0]) + 9.0 / 4.0).abs() < 1e-14);
        assert_eq!(f.eval(0.0, -1.0, &[3.0]), 0.0);
        let alpha = 0.8;
        let f = exponential_transform(&Driver::constant(alpha, 2.0), 2.0).unwrap();
        assert!((f.eval(0.0, 1.0, &[0.0]) - alpha * 2.0).abs() < 1e-14);
        let h = match f.certificate() {
            Certificate::Majorized(h) => h.clone(),
            _ => unreachable!(),
        };
        assert!((f.eval(0.0, 1.0, &[0.0]) - h.eval(1.0)).abs() < 1e-14);
    }

    #[test]
    fn gamma_mismatch_rejected() {
        assert!(exponential_transform(&Driver::quadratic_z(1.0), 2.0).is_err());
    }

    #[test]
    fn value_maps_round_trip() {
        let y = vec![vec![0.3], vec![-1.0, 2.0]];
        let z = vec![vec![0.5]];
        let dk = vec![vec![0.25]];
        let tv = to_transformed(&y, &z, &dk, 1.5);
        let (y2, z2, k2) = from_transformed(&tv, 1.5);
        for (a, b) in y.iter().flatten().zip(y2.iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((z2[0][0] - 0.5).abs() < 1e-14);
        assert!((k2[0][0] - 0.25).abs() < 1e-14);
    }
}
