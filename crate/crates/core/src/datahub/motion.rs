//! Smooth analytic motion generators. Each spec is drawn from a seed alone
//! and can be sampled at any frame rate, so reference trajectories can be
//! regenerated at a different fps for the rollout benchmark.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bodies::BodyModel;
use crate::kinrep::{Block, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionFamily {
    PeriodicGait,
    ReachLike,
    RandomSmooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionRanges {
    /// Multiplier on each coordinate's nominal range.
    pub amplitude: (f64, f64),
    /// Stride frequency (gait), band edge (random-smooth) or reach rate, Hz.
    pub frequency: (f64, f64),
}

#[derive(Clone, Debug)]
struct Sine {
    amp: f64,
    omega: f64,
    phase: f64,
}

#[derive(Clone, Debug)]
enum Shape {
    Sines { center: Vec<f64>, terms: Vec<Vec<Sine>> },
    /// Minimum-jerk moves through waypoints; `times[0] = 0`.
    Reach { times: Vec<f64>, points: Vec<Vec<f64>> },
}

#[derive(Clone, Debug)]
pub struct MotionSpec {
    shape: Shape,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

impl MotionSpec {
    pub fn draw(family: MotionFamily, ranges: &MotionRanges, body: &BodyModel, duration: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = body.center.len();
        let amp = uniform(&mut rng, ranges.amplitude);
        let shape = match family {
            MotionFamily::PeriodicGait => {
                let f = uniform(&mut rng, ranges.frequency);
                let phase0 = rng.gen_range(0.0..TAU);
                let terms = (0..n)
                    .map(|j| {
                        let a = body.range[j] * amp * rng.gen_range(0.5..1.0);
                        let phase = phase0 + f64::from(body.side[j]) * std::f64::consts::PI + rng.gen_range(-0.3..0.3);
                        vec![
                            Sine {
                                amp: a,
                                omega: TAU * f,
                                phase,
                            },
                            Sine {
                                amp: 0.25 * a,
                                omega: 2.0 * TAU * f,
                                phase: 2.0 * phase + rng.gen_range(-0.5..0.5),
                            },
                        ]
                    })
                    .collect();
                Shape::Sines {
                    center: body.center.clone(),
                    terms,
                }
            }
            MotionFamily::RandomSmooth => {
                let terms = (0..n)
                    .map(|j| {
                        (0..4)
                            .map(|_| Sine {
                                amp: body.range[j] * amp * rng.gen_range(0.1..0.5),
                                omega: TAU * uniform(&mut rng, ranges.frequency),
                                phase: rng.gen_range(0.0..TAU),
                            })
                            .collect()
                    })
                    .collect();
                let center = (0..n)
                    .map(|j| body.center[j] + body.range[j] * rng.gen_range(-0.3..0.3))
                    .collect();
                Shape::Sines { center, terms }
            }
            MotionFamily::ReachLike => {
                let mut times = vec![0.0];
                let mut points = vec![body.center.clone()];
                while *times.last().unwrap() <= duration {
                    let rate = uniform(&mut rng, ranges.frequency);
                    times.push(times.last().unwrap() + 1.0 / rate);
                    points.push(
                        (0..n)
                            .map(|j| body.center[j] + body.range[j] * amp * rng.gen_range(-1.0..1.0))
                            .collect(),
                    );
                }
                Shape::Reach { times, points }
            }
        };
        MotionSpec { shape }
    }

    pub fn dof(&self) -> usize {
        match &self.shape {
            Shape::Sines { center, .. } => center.len(),
            Shape::Reach { points, .. } => points[0].len(),
        }
    }

    /// Exact `(q, q̇, q̈)` at time `t`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Sines { center, terms } => {
                let mut q = center.clone();
                let mut qd = vec![0.0; q.len()];
                let mut qdd = vec![0.0; q.len()];
                for (j, ts) in terms.iter().enumerate() {
                    for s in ts {
                        let (sn, cs) = (s.omega * t + s.phase).sin_cos();
                        q[j] += s.amp * sn;
                        qd[j] += s.amp * s.omega * cs;
                        qdd[j] -= s.amp * s.omega * s.omega * sn;
                    }
                }
                (q, qd, qdd)
            }
            Shape::Reach { times, points } => {
                let k = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[k - 1], times[k]);
                let h = t1 - t0;
                let s = ((t - t0) / h).clamp(0.0, 1.0);
                // 10s³ − 15s⁴ + 6s⁵ and its derivatives
                let p = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
                let dp = 30.0 * s * s * (1.0 - s) * (1.0 - s) / h;
                let ddp = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (h * h);
                let (a, b) = (&points[k - 1], &points[k]);
                let q = a.iter().zip(b).map(|(x, y)| x + (y - x) * p).collect();
                let qd = a.iter().zip(b).map(|(x, y)| (y - x) * dp).collect();
                let qdd = a.iter().zip(b).map(|(x, y)| (y - x) * ddp).collect();
                (q, qd, qdd)
            }
        }
    }

    /// `frames` samples at `fps`, starting at t = 0.
    pub fn sample(&self, fps: f64, frames: usize) -> Trajectory {
        let n = self.dof();
        let mut q = Vec::with_capacity(frames * n);
        let mut qd = Vec::with_capacity(frames * n);
        let mut qdd = Vec::with_capacity(frames * n);
        for i in 0..frames {
            let (a, b, c) = self.eval(i as f64 / fps);
            q.extend(a);
            qd.extend(b);
            qdd.extend(c);
        }
        Trajectory {
            q: Block::new(n, q),
            qd: Block::new(n, qd),
            qdd: Block::new(n, qdd),
        }
    }
}
