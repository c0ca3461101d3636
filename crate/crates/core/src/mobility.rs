//! Controlled random walk of UEs inside the square deployment area.
//!
//! Each UE carries a reference velocity; every step adds a Gaussian
//! perturbation to it. Leaving the area re-initializes the UE (new
//! uniform position and new reference velocity). A step that would put
//! the UE closer than `d_min` to any AP is rejected and the UE holds
//! its previous position for that step.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Support of the reference-velocity distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySupport {
    /// Components uniform in [-v_max, v_max].
    Signed,
    /// Components uniform in [0, v_max].
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityParams {
    /// Side length L of the square area, meters.
    pub area_side: f64,
    /// Max reference-velocity component, m/s.
    pub v_max: f64,
    /// Std of the per-step Gaussian velocity perturbation, m/s.
    pub sigma_w: f64,
    /// Sampling interval T, seconds.
    pub sample_time: f64,
    /// Minimum distance a UE keeps from every AP, meters.
    pub d_min: f64,
    pub velocity_support: VelocitySupport,
}

impl MobilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.area_side <= 0.0 {
            return Err(Error::Config(format!(
                "area_side must be positive, got {}",
                self.area_side
            )));
        }
        if self.v_max < 0.0 {
            return Err(Error::Config(format!(
                "v_max must be nonnegative, got {}",
                self.v_max
            )));
        }
        if self.sigma_w < 0.0 {
            return Err(Error::Config(format!(
                "sigma_w must be nonnegative, got {}",
                self.sigma_w
            )));
        }
        if self.sample_time <= 0.0 {
            return Err(Error::Config(format!(
                "sample_time must be positive, got {}",
                self.sample_time
            )));
        }
        if self.d_min < 0.0 || self.d_min >= self.area_side / 2.0 {
            return Err(Error::Config(format!(
                "d_min must be in [0, area_side/2), got {}",
                self.d_min
            )));
        }
        Ok(())
    }
}

/// Position and reference velocity of one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState {
    pub position: (f64, f64),
    pub ref_velocity: (f64, f64),
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn clear_of_aps(pos: (f64, f64), ap_positions: &[(f64, f64)], d_min: f64) -> bool {
    ap_positions.iter().all(|&ap| dist(pos, ap) >= d_min)
}

const INIT_ATTEMPTS: usize = 10_000;

/// Draw a fresh UE: uniform position (resampled until it clears every
/// AP by `d_min`) and uniform reference velocity.
pub fn init_ue<R: Rng + ?Sized>(
    rng: &mut R,
    params: &MobilityParams,
    ap_positions: &[(f64, f64)],
) -> Result<UeState> {
    let l = params.area_side;
    let mut position = None;
    for _ in 0..INIT_ATTEMPTS {
        let cand = (rng.random_range(0.0..=l), rng.random_range(0.0..=l));
        if clear_of_aps(cand, ap_positions, params.d_min) {
            position = Some(cand);
            break;
        }
    }
    let position = position.ok_or_else(|| {
        Error::Config(format!(
            "could not place a UE at distance >= {} m from every AP after {INIT_ATTEMPTS} draws",
            params.d_min
        ))
    })?;
    let lo = match params.velocity_support {
        VelocitySupport::Signed => -params.v_max,
        VelocitySupport::Positive => 0.0,
    };
    let ref_velocity = (
        rng.random_range(lo..=params.v_max),
        rng.random_range(lo..=params.v_max),
    );
    Ok(UeState {
        position,
        ref_velocity,
    })
}

/// Advance one UE by one sampling interval.
pub fn step_ue<R: Rng + ?Sized>(
    rng: &mut R,
    state: &UeState,
    params: &MobilityParams,
    ap_positions: &[(f64, f64)],
) -> Result<UeState> {
    let (wx, wy): (f64, f64) = if params.sigma_w > 0.0 {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        (a * params.sigma_w, b * params.sigma_w)
    } else {
        (0.0, 0.0)
    };
    let t = params.sample_time;
    let next = (
        state.position.0 + (state.ref_velocity.0 + wx) * t,
        state.position.1 + (state.ref_velocity.1 + wy) * t,
    );
    let l = params.area_side;
    if next.0 < 0.0 || next.0 > l || next.1 < 0.0 || next.1 > l {
        return init_ue(rng, params, ap_positions);
    }
    if !clear_of_aps(next, ap_positions, params.d_min) {
        // Hold position for this step; keep the reference velocity.
        return Ok(*state);
    }
    Ok(UeState {
        position: next,
        ref_velocity: state.ref_velocity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn params() -> MobilityParams {
        MobilityParams {
            area_side: 1000.0,
            v_max: 6.0 / 3.6,
            sigma_w: 0.5,
            sample_time: 1.0,
            d_min: 10.0,
            velocity_support: VelocitySupport::Signed,
        }
    }

    #[test]
    fn init_is_uniform_and_velocity_bounded() {
        let p = MobilityParams {
            d_min: 0.0,
            ..params()
        };
        let mut rng = stream(11, 0);
        let n = 100_000;
        let mut mean_x = 0.0;
        for _ in 0..n {
            let ue = init_ue(&mut rng, &p, &[]).unwrap();
            assert!((0.0..=p.area_side).contains(&ue.position.0));
            assert!((0.0..=p.area_side).contains(&ue.position.1));
            assert!(ue.ref_velocity.0.abs() <= p.v_max);
            assert!(ue.ref_velocity.1.abs() <= p.v_max);
            mean_x += ue.position.0;
        }
        mean_x /= n as f64;
        assert!((mean_x - 500.0).abs() < 5.0, "got {mean_x}");
    }

    #[test]
    fn init_respects_d_min() {
        let p = params();
        let aps = [(500.0, 500.0)];
        let mut rng = stream(12, 0);
        for _ in 0..10_000 {
            let ue = init_ue(&mut rng, &p, &aps).unwrap();
            assert!(dist(ue.position, aps[0]) >= p.d_min);
        }
    }

    #[test]
    fn init_fails_when_d_min_unsatisfiable() {
        // d_min just below the validation cap, APs covering the area.
        let p = MobilityParams {
            d_min: 499.0,
            ..params()
        };
        let aps = [
            (0.0, 0.0),
            (1000.0, 0.0),
            (0.0, 1000.0),
            (1000.0, 1000.0),
            (500.0, 500.0),
            (0.0, 500.0),
            (1000.0, 500.0),
            (500.0, 0.0),
            (500.0, 1000.0),
        ];
        let mut rng = stream(13, 0);
        assert!(matches!(init_ue(&mut rng, &p, &aps), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_step_is_linear() {
        let p = MobilityParams {
            sigma_w: 0.0,
            v_max: 2.0,
            ..params()
        };
        let state = UeState {
            position: (10.0, 10.0),
            ref_velocity: (1.0, 0.0),
        };
        let mut rng = stream(14, 0);
        let next = step_ue(&mut rng, &state, &p, &[]).unwrap();
        assert_eq!(next.position, (11.0, 10.0));
        assert_eq!(next.ref_velocity, (1.0, 0.0));
    }

    #[test]
    fn boundary_exit_reinitializes() {
        let p = MobilityParams {
            sigma_w: 0.0,
            v_max: 2.0,
            ..params()
        };
        let state = UeState {
            position: (0.5, 10.0),
            ref_velocity: (-1.0, 0.0),
        };
        let mut rng = stream(15, 0);
        let next = step_ue(&mut rng, &state, &p, &[]).unwrap();
        // Re-initialized: inside the box and, generically, a new velocity.
        assert!((0.0..=p.area_side).contains(&next.position.0));
        assert!((0.0..=p.area_side).contains(&next.position.1));
        assert_ne!(next.ref_velocity, state.ref_velocity);
    }

    #[test]
    fn d_min_violation_holds_position() {
        let p = MobilityParams {
            sigma_w: 0.0,
            v_max: 2.0,
            ..params()
        };
        let aps = [(20.0, 10.0)];
        let state = UeState {
            position: (50.0, 10.0),
            ref_velocity: (-25.0, 0.0),
        };
        // One step would land at (25, 10), 5 m from the AP: rejected.
        let mut rng = stream(16, 0);
        let next = step_ue(&mut rng, &state, &p, &aps).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn step_displacement_variance_matches_sigma_w() {
        let p = MobilityParams {
            sigma_w: 1.0,
            v_max: 0.0,
            ..params()
        };
        let mut rng = stream(17, 0);
        let mut state = UeState {
            position: (500.0, 500.0),
            ref_velocity: (0.0, 0.0),
        };
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let next = step_ue(&mut rng, &state, &p, &[]).unwrap();
            let dx = next.position.0 - state.position.0;
            acc += dx * dx;
            // Keep the walk near the center so boundary resets never fire.
            if next.position.0 < 100.0
                || next.position.0 > 900.0
                || next.position.1 < 100.0
                || next.position.1 > 900.0
            {
                state = UeState {
                    position: (500.0, 500.0),
                    ref_velocity: (0.0, 0.0),
                };
            } else {
                state = next;
            }
        }
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 0.02, "got {var}");
    }

    #[test]
    fn fixed_seed_gives_identical_trajectories() {
        let p = params();
        let aps = [(200.0, 200.0), (800.0, 800.0)];
        let run = || {
            let mut rng = stream(18, 0);
            let mut ue = init_ue(&mut rng, &p, &aps).unwrap();
            let mut path = vec![ue.position];
            for _ in 0..500 {
                ue = step_ue(&mut rng, &ue, &p, &aps).unwrap();
                path.push(ue.position);
            }
            path
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn positions_stay_in_box_and_clear_of_aps() {
        let p = params();
        let aps = [(200.0, 200.0), (800.0, 200.0), (500.0, 500.0)];
        let mut rng = stream(19, 0);
        let mut ue = init_ue(&mut rng, &p, &aps).unwrap();
        for _ in 0..20_000 {
            ue = step_ue(&mut rng, &ue, &p, &aps).unwrap();
            assert!((0.0..=p.area_side).contains(&ue.position.0));
            assert!((0.0..=p.area_side).contains(&ue.position.1));
            assert!(clear_of_aps(ue.position, &aps, p.d_min));
        }
    }
}
