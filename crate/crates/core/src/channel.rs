//! Rician/Rayleigh channel model, inverse-square path loss, and the
//! MR-precoded downlink SINR with inter-AP interference and optional
//! jammer power.
//!
//! All SINR values are linear ratios; conversion to dB happens only at
//! the connection threshold and in graph edge features.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Parameters of the physical channel between APs, UEs and the jammer.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// LOS mixing factor in [0, 1]; 0 is pure Rayleigh, 1 deterministic.
    pub beta: f64,
    /// Distance (m) at which the channel has unit variance.
    pub d0: f64,
    /// AWGN variance per antenna, linear.
    pub noise_power: f64,
    /// Antennas per AP.
    pub n_antennas: usize,
    /// Jammer transmit power, linear.
    pub jammer_power: f64,
    /// Hard cutoff: UEs farther than this from the jammer are unaffected.
    pub jammer_radius: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta must be in [0,1], got {}",
                self.beta
            )));
        }
        if self.d0 <= 0.0 {
            return Err(Error::Config(format!(
                "d0 must be positive, got {}",
                self.d0
            )));
        }
        if self.noise_power <= 0.0 {
            return Err(Error::Config(format!(
                "noise_power must be positive, got {}",
                self.noise_power
            )));
        }
        if self.n_antennas == 0 {
            return Err(Error::Config("n_antennas must be at least 1".into()));
        }
        if self.jammer_power < 0.0 {
            return Err(Error::Config(format!(
                "jammer_power must be nonnegative, got {}",
                self.jammer_power
            )));
        }
        if self.jammer_radius < 0.0 {
            return Err(Error::Config(format!(
                "jammer_radius must be nonnegative, got {}",
                self.jammer_radius
            )));
        }
        Ok(())
    }
}

/// Complex scalar, kept local to avoid pulling a numerics crate for
/// four arithmetic ops.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    /// conj(self) * other
    pub fn conj_mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re + self.im * other.im,
            im: self.re * other.im - self.im * other.re,
        }
    }
}

impl std::ops::Add for Complex {
    type Output = Complex;
    fn add(self, rhs: Complex) -> Complex {
        Complex::new(self.re + rhs.re, self.im + rhs.im)
    }
}

/// One downlink channel realization between an AP and a UE.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    entries: Vec<Complex>,
}

impl ChannelVector {
    pub fn new(entries: Vec<Complex>) -> Self {
        ChannelVector { entries }
    }

    pub fn entries(&self) -> &[Complex] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|e| e.norm_sqr()).sum()
    }

    /// Hermitian inner product self^H * other.
    pub fn inner(&self, other: &ChannelVector) -> Result<Complex> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        let mut acc = Complex::default();
        for (a, b) in self.entries.iter().zip(&other.entries) {
            acc = acc + a.conj_mul(*b);
        }
        Ok(acc)
    }
}

/// Per-entry channel variance at `distance`: d0^2 / distance^2.
pub fn path_loss_variance(distance: f64, d0: f64) -> Result<f64> {
    if distance <= 0.0 || !distance.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "path loss requires a positive distance, got {distance}"
        )));
    }
    Ok((d0 / distance) * (d0 / distance))
}

/// Unit-magnitude LOS phase ramp for transmitter `index` of `count`,
/// spreading the deterministic array responses evenly so MR precoding
/// keeps its interference suppression in the beta = 1 regime.
pub fn los_phase_for_transmitter(index: usize, count: usize) -> f64 {
    if count == 0 {
        return 0.0;
    }
    std::f64::consts::TAU * index as f64 / count as f64
}

/// Draw one Rician channel vector at the given AP-UE distance.
///
/// The LOS term is `beta * sigma * u` where `u` is the unit-norm phase
/// ramp `u[a] = exp(i a los_phase) / sqrt(N_A)`, so `beta = 1` is fully
/// deterministic given the transmitter's phase; the scattered term has
/// i.i.d. circularly-symmetric Gaussian entries with per-entry variance
/// `sigma^2 = d0^2 / distance^2`.
pub fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ChannelParams,
    distance: f64,
    los_phase: f64,
) -> Result<ChannelVector> {
    let sigma = path_loss_variance(distance, params.d0)?.sqrt();
    let n = params.n_antennas;
    let los_amp = params.beta * sigma / (n as f64).sqrt();
    let mut entries: Vec<Complex> = (0..n)
        .map(|a| {
            let phase = los_phase * a as f64;
            Complex::new(los_amp * phase.cos(), los_amp * phase.sin())
        })
        .collect();
    if params.beta < 1.0 {
        // Real and imaginary parts each carry half the entry variance.
        let scatter = (1.0 - params.beta * params.beta).sqrt() * sigma / 2f64.sqrt();
        for e in entries.iter_mut() {
            let g_re: f64 = StandardNormal.sample(rng);
            let g_im: f64 = StandardNormal.sample(rng);
            e.re += scatter * g_re;
            e.im += scatter * g_im;
        }
    }
    Ok(ChannelVector::new(entries))
}

/// MR-precoded SINR: ||h||^4 / (noise + sum over interferers |h^H h'|^2).
pub fn sinr(
    h_serving: &ChannelVector,
    h_interferers: &[ChannelVector],
    noise_power: f64,
) -> Result<f64> {
    sinr_jammed(h_serving, h_interferers, noise_power, 0.0)
}

/// SINR with the jammer's received power added to the denominator.
///
/// With `p_j = 0` this is exactly [`sinr`].
pub fn sinr_jammed(
    h_serving: &ChannelVector,
    h_interferers: &[ChannelVector],
    noise_power: f64,
    p_j: f64,
) -> Result<f64> {
    if noise_power <= 0.0 {
        return Err(Error::Config(format!(
            "noise_power must be positive, got {noise_power}"
        )));
    }
    if p_j < 0.0 {
        return Err(Error::Config(format!(
            "jammer power must be nonnegative, got {p_j}"
        )));
    }
    let signal = h_serving.norm_sqr();
    let mut denom = noise_power + p_j;
    for h in h_interferers {
        denom += h_serving.inner(h)?.norm_sqr();
    }
    Ok(signal * signal / denom)
}

/// Received jammer power at a UE: sigma_J^2 * |S|^2 with S drawn from
/// the single-antenna Rician law, or exactly zero outside the jammer
/// radius (no rng consumed in that case).
pub fn jammer_received_power<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ChannelParams,
    distance_to_ue: f64,
) -> Result<f64> {
    if distance_to_ue <= 0.0 || !distance_to_ue.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "jammer distance must be positive, got {distance_to_ue}"
        )));
    }
    if distance_to_ue > params.jammer_radius {
        return Ok(0.0);
    }
    let scalar_params = ChannelParams {
        n_antennas: 1,
        ..params.clone()
    };
    let s = draw_channel(rng, &scalar_params, distance_to_ue, 0.0)?;
    Ok(params.jammer_power * s.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn params(beta: f64) -> ChannelParams {
        ChannelParams {
            beta,
            d0: 100.0,
            noise_power: 0.001,
            n_antennas: 4,
            jammer_power: 1.0,
            jammer_radius: 350.0,
        }
    }

    fn vec_re(xs: &[f64]) -> ChannelVector {
        ChannelVector::new(xs.iter().map(|&x| Complex::new(x, 0.0)).collect())
    }

    #[test]
    fn path_loss_at_reference_and_scaled_distances() {
        assert_eq!(path_loss_variance(100.0, 100.0).unwrap(), 1.0);
        assert_eq!(path_loss_variance(200.0, 100.0).unwrap(), 0.25);
        assert_eq!(path_loss_variance(50.0, 100.0).unwrap(), 4.0);
    }

    #[test]
    fn path_loss_rejects_nonpositive_distance() {
        assert!(path_loss_variance(0.0, 100.0).is_err());
        assert!(path_loss_variance(-5.0, 100.0).is_err());
    }

    #[test]
    fn deterministic_channel_ignores_rng_state() {
        let p = params(1.0);
        let mut r1 = stream(1, 0);
        let mut r2 = stream(99, 7);
        let a = draw_channel(&mut r1, &p, 100.0, 0.0).unwrap();
        let b = draw_channel(&mut r2, &p, 100.0, 0.0).unwrap();
        assert_eq!(a, b);
        // At the reference distance the vector is the unit LOS direction.
        let expect = 1.0 / (p.n_antennas as f64).sqrt();
        for e in a.entries() {
            assert!((e.re - expect).abs() < 1e-15);
            assert_eq!(e.im, 0.0);
        }
        assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_norm_matches_path_loss_monte_carlo() {
        // Monte-Carlo oracle for the Gaussian law: E||h||^2 / N_A = sigma^2.
        let p = params(0.0);
        let mut rng = stream(42, 0);
        let n_draws = 100_000;

        let mut mean_at_d0 = 0.0;
        let mut mean_at_2d0 = 0.0;
        for _ in 0..n_draws {
            mean_at_d0 += draw_channel(&mut rng, &p, 100.0, 0.0).unwrap().norm_sqr();
            mean_at_2d0 += draw_channel(&mut rng, &p, 200.0, 0.0).unwrap().norm_sqr();
        }
        mean_at_d0 /= (n_draws * p.n_antennas) as f64;
        mean_at_2d0 /= (n_draws * p.n_antennas) as f64;
        assert!((mean_at_d0 - 1.0).abs() < 0.02, "got {mean_at_d0}");
        assert!(
            (mean_at_2d0 - 0.25).abs() < 0.25 * 0.02,
            "got {mean_at_2d0}"
        );
    }

    #[test]
    fn sinr_with_no_interference_is_noise_limited() {
        let h = vec_re(&[1.0, 0.0]);
        let got = sinr(&h, &[], 0.001).unwrap();
        assert!((got - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_interferer_contributes_nothing() {
        let h = vec_re(&[1.0, 0.0]);
        let i = vec_re(&[0.0, 1.0]);
        let got = sinr(&h, &[i], 0.001).unwrap();
        assert!((got - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn aligned_interferer_dominates() {
        let h = vec_re(&[1.0, 0.0]);
        let i = vec_re(&[1.0, 0.0]);
        let got = sinr(&h, &[i], 0.001).unwrap();
        assert!((got - 1.0 / 1.001).abs() < 1e-12);
    }

    #[test]
    fn sinr_dimension_mismatch_is_an_error() {
        let h = vec_re(&[1.0, 0.0]);
        let i = vec_re(&[1.0]);
        assert!(matches!(
            sinr(&h, &[i], 0.001),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn jammed_sinr_reduces_to_sinr_without_jammer() {
        let mut rng = stream(3, 0);
        let p = params(0.0);
        let h = draw_channel(&mut rng, &p, 150.0, 0.0).unwrap();
        let i1 = draw_channel(&mut rng, &p, 400.0, 0.0).unwrap();
        let i2 = draw_channel(&mut rng, &p, 800.0, 0.0).unwrap();
        let ints = [i1, i2];
        let a = sinr(&h, &ints, 0.001).unwrap();
        let b = sinr_jammed(&h, &ints, 0.001, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jammed_sinr_hand_value() {
        let h = vec_re(&[1.0, 0.0]);
        let got = sinr_jammed(&h, &[], 0.001, 0.999).unwrap();
        assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jamming_strictly_lowers_sinr() {
        let mut rng = stream(5, 0);
        let p = params(0.0);
        for _ in 0..50 {
            let h = draw_channel(&mut rng, &p, 120.0, 0.0).unwrap();
            let i = draw_channel(&mut rng, &p, 500.0, 0.0).unwrap();
            let clean = sinr(&h, std::slice::from_ref(&i), 0.001).unwrap();
            let jammed = sinr_jammed(&h, std::slice::from_ref(&i), 0.001, 0.05).unwrap();
            assert!(jammed < clean);
        }
    }

    #[test]
    fn jammer_power_outside_radius_is_zero() {
        let p = params(0.0);
        let mut rng = stream(6, 0);
        let before = rng.clone();
        let got = jammer_received_power(&mut rng, &p, 350.0 + 1e-9).unwrap();
        assert_eq!(got, 0.0);
        // The rng must be untouched when the cutoff applies.
        assert_eq!(
            draw_channel(&mut rng, &p, 100.0, 0.0).unwrap(),
            draw_channel(&mut before.clone(), &p, 100.0, 0.0).unwrap()
        );
    }

    #[test]
    fn jammer_power_deterministic_case() {
        let p = params(1.0);
        let mut rng = stream(7, 0);
        let got = jammer_received_power(&mut rng, &p, 100.0).unwrap();
        assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jammer_power_rayleigh_mean_monte_carlo() {
        // |S|^2 is exponential with mean sigma^2 = 1 at d0.
        let p = params(0.0);
        let mut rng = stream(8, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| jammer_received_power(&mut rng, &p, 100.0).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "got {mean}");
    }

    #[test]
    fn per_entry_variance_tracks_distance() {
        // beta = 0 at distance 2*d0: per-entry variance 0.25.
        let p = params(0.0);
        let mut rng = stream(9, 0);
        let n = 100_000usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let h = draw_channel(&mut rng, &p, 200.0, 0.0).unwrap();
            acc += h.entries()[0].norm_sqr();
        }
        let var = acc / n as f64;
        assert!((var - 0.25).abs() < 0.25 * 0.02, "got {var}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn complex_vec(n: usize) -> impl Strategy<Value = ChannelVector> {
            proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), n).prop_map(|xs| {
                ChannelVector::new(
                    xs.into_iter()
                        .map(|(re, im)| Complex::new(re, im))
                        .collect(),
                )
            })
        }

        proptest! {
            #[test]
            fn path_loss_scale_covariance(
                d in 1.0f64..5_000.0,
                d0 in 1.0f64..1_000.0,
                c in 0.01f64..100.0,
            ) {
                let a = path_loss_variance(d, d0).unwrap();
                let b = path_loss_variance(c * d, c * d0).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
            }

            #[test]
            fn path_loss_strictly_decreasing(
                d in 1.0f64..5_000.0,
                extra in 0.1f64..1_000.0,
                d0 in 1.0f64..1_000.0,
            ) {
                prop_assert!(
                    path_loss_variance(d + extra, d0).unwrap() < path_loss_variance(d, d0).unwrap()
                );
            }

            #[test]
            fn interference_never_raises_sinr(
                h in complex_vec(3),
                i1 in complex_vec(3),
                i2 in complex_vec(3),
                noise in 1e-4f64..0.1,
            ) {
                let none = sinr(&h, &[], noise).unwrap();
                let one = sinr(&h, std::slice::from_ref(&i1), noise).unwrap();
                let two = sinr(&h, &[i1, i2], noise).unwrap();
                prop_assert!(one <= none);
                prop_assert!(two <= one);
            }

            #[test]
            fn jammer_power_strictly_lowers_sinr(
                h in complex_vec(2),
                i in complex_vec(2),
                noise in 1e-4f64..0.1,
                p1 in 1e-3f64..1.0,
                extra in 1e-3f64..1.0,
            ) {
                prop_assume!(h.norm_sqr() > 1e-6);
                let ints = [i];
                let a = sinr_jammed(&h, &ints, noise, p1).unwrap();
                let b = sinr_jammed(&h, &ints, noise, p1 + extra).unwrap();
                prop_assert!(b < a);
                prop_assert!(a < sinr(&h, &ints, noise).unwrap());
            }
        }
    }
}
