//! Pulsatile inflow waveform and the parabolic inflow profile.

use crate::flow::FluidError;

/// Periodic piecewise-plateau inlet waveform with linear ramps of width
/// `ramp_time` centered on each plateau transition (trapezoidal shape).
#[derive(Debug, Clone, PartialEq)]
pub struct InflowWaveform {
    /// Ordered (duration s, plateau centerline velocity m/s) pairs.
    pub phases: Vec<(f64, f64)>,
    pub period: f64,
    pub ramp_time: f64,
}

impl InflowWaveform {
    pub fn new(phases: Vec<(f64, f64)>, ramp_time: f64) -> Result<Self, FluidError> {
        if phases.is_empty() {
            return Err(FluidError::InvalidWaveform {
                reason: "waveform needs at least one phase".into(),
            });
        }
        let period: f64 = phases.iter().map(|(d, _)| d).sum();
        if period <= 0.0 || phases.iter().any(|(d, _)| *d <= 0.0) {
            return Err(FluidError::InvalidWaveform {
                reason: "phase durations must be positive".into(),
            });
        }
        let min_duration = phases.iter().map(|(d, _)| *d).fold(f64::INFINITY, f64::min);
        if ramp_time < 0.0 || ramp_time >= min_duration / 2.0 {
            return Err(FluidError::InvalidWaveform {
                reason: format!(
                    "ramp_time {ramp_time} must be below half the shortest phase ({min_duration})"
                ),
            });
        }
        Ok(Self {
            phases,
            period,
            ramp_time,
        })
    }

    /// Arterial triphasic profile: systolic peak, early-diastolic reversal,
    /// late-diastolic forward plateau over a 1 Hz cycle.
    pub fn triphasic() -> Self {
        Self::new(vec![(0.15, 0.400), (0.10, -0.015), (0.75, 0.008)], 0.010)
            .expect("triphasic constants are valid")
    }

    /// Constant inflow (no pulsatility), useful for steady-state validation.
    pub fn constant(velocity: f64) -> Self {
        Self {
            phases: vec![(1.0, velocity)],
            period: 1.0,
            ramp_time: 0.0,
        }
    }

    /// Largest plateau magnitude; ramps never exceed it.
    pub fn peak_speed(&self) -> f64 {
        self.phases.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// Centerline inflow velocity at time `t` (s). Periodic in `period`.
    pub fn velocity(&self, t: f64) -> f64 {
        let t = t.rem_euclid(self.period);
        let n = self.phases.len();
        if n == 1 {
            return self.phases[0].1;
        }
        let half_ramp = 0.5 * self.ramp_time;
        // Transition k sits at the start of phase k; k = 0 wraps from the last
        // phase. ramp_time < min duration / 2 keeps ramps disjoint.
        if half_ramp > 0.0 {
            let mut start = 0.0;
            for k in 0..n {
                let level = self.phases[k].1;
                let prev_level = self.phases[(k + n - 1) % n].1;
                let mut d = t - start;
                if d > self.period / 2.0 {
                    d -= self.period;
                } else if d < -self.period / 2.0 {
                    d += self.period;
                }
                if d.abs() <= half_ramp {
                    let s = (d + half_ramp) / self.ramp_time;
                    return prev_level + (level - prev_level) * s;
                }
                start += self.phases[k].0;
            }
        }
        let mut start = 0.0;
        for &(duration, level) in &self.phases {
            if t < start + duration {
                return level;
            }
            start += duration;
        }
        self.phases[n - 1].1
    }
}

/// Developed channel profile `peak * 4 y (d - y) / d^2`, zero at both walls.
pub fn parabolic_profile(y: f64, peak: f64, width: f64) -> f64 {
    peak * 4.0 * y * (width - y) / (width * width)
}
