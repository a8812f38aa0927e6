//! Seeded synthetic problem generators.
//!
//! Stream layout: run `r` of an experiment with base seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s + r)` on stream 0. Auxiliary draws that must
//! not perturb the main sequence use other stream numbers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, Sample};

/// Generator for run `run` of a Monte-Carlo experiment.
pub fn run_rng(seed_base: u64, run: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_base.wrapping_add(run))
}

/// Independent substream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl NoiseKind {
    pub fn gaussian_var(var: f64) -> Self {
        NoiseKind::Gaussian { mean: 0.0, std: var.sqrt() }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseKind::Gaussian { mean, std } => {
                if std == 0.0 {
                    mean
                } else {
                    Normal::new(mean, std).expect("validated").sample(rng)
                }
            }
            NoiseKind::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    Uniform::new_inclusive(lo, hi).expect("validated").sample(rng)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseKind::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            NoiseKind::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid noise component {self:?}")))
        }
    }
}

/// Finite mixture for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub components: Vec<(f64, NoiseKind)>,
}

impl Mixture {
    pub fn new(components: Vec<(f64, NoiseKind)>) -> Result<Self> {
        let m = Self { components };
        m.validate()?;
        Ok(m)
    }

    /// `w·first + (1 − w)·second`.
    pub fn pair(w: f64, first: NoiseKind, second: NoiseKind) -> Result<Self> {
        Self::new(vec![(w, first), (1.0 - w, second)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Input("mixture has no components".into()));
        }
        let mut total = 0.0;
        for (w, kind) in &self.components {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Input(format!("mixture weight {w} is negative")));
            }
            kind.validate()?;
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// A draw and the index of the component that produced it.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let last = self.components.len() - 1;
        for (idx, (w, kind)) in self.components.iter().enumerate() {
            acc += w;
            if u < acc || idx == last {
                return (kind.draw(rng), idx);
            }
        }
        unreachable!()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_labeled(rng).0
    }
}

/// One mixture per output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub channels: Vec<Mixture>,
}

impl NoiseSpec {
    pub fn new(channels: Vec<Mixture>) -> Result<Self> {
        for c in &channels {
            c.validate()?;
        }
        Ok(Self { channels })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(self.channels.len(), self.channels.iter().map(|c| c.sample(rng)))
    }

    /// `0.9·N(0, 0.25) + 0.1·U(−20, 20)`.
    pub fn example1() -> Self {
        let mix = Mixture::pair(0.9, NoiseKind::gaussian_var(0.25), NoiseKind::Uniform { lo: -20.0, hi: 20.0 });
        Self { channels: vec![mix.expect("static weights")] }
    }

    /// `(1 − p)·N(0, 1) + p·U(−20, 20)`.
    pub fn contaminated_unit(p: f64) -> Result<Self> {
        Self::new(vec![Mixture::pair(
            1.0 - p,
            NoiseKind::gaussian_var(1.0),
            NoiseKind::Uniform { lo: -20.0, hi: 20.0 },
        )?])
    }

    /// Two-channel noise for the heteroscedastic line problem. Cases 1 to 4
    /// use symmetric uniform outliers, case 5 wide Gaussians, case 6
    /// one-sided uniforms.
    pub fn example2(p1: f64, p2: f64, case_id: u8) -> Result<Self> {
        let (out1, out2) = match case_id {
            1..=4 => (NoiseKind::Uniform { lo: -10.0, hi: 10.0 }, NoiseKind::Uniform { lo: -20.0, hi: 20.0 }),
            5 => (NoiseKind::gaussian_var(100.0), NoiseKind::gaussian_var(200.0)),
            6 => (NoiseKind::Uniform { lo: 0.0, hi: 10.0 }, NoiseKind::Uniform { lo: 0.0, hi: 20.0 }),
            _ => return Err(Error::Input(format!("case id must be 1..6, got {case_id}"))),
        };
        for p in [p1, p2] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Input(format!("mixing probability {p} outside [0, 1]")));
            }
        }
        Self::new(vec![
            Mixture::pair(p1, NoiseKind::gaussian_var(0.25), out1)?,
            Mixture::pair(p2, NoiseKind::gaussian_var(1.0), out2)?,
        ])
    }
}

/// Mixing probabilities `[p1, p2]` of the six standard cases.
pub fn example2_case_probs(case_id: u8) -> Result<(f64, f64)> {
    Ok(match case_id {
        1 => (1.0, 1.0),
        2 => (0.8, 1.0),
        3 => (1.0, 0.8),
        4 => (0.8, 0.8),
        5 => (0.8, 0.6),
        6 => (0.6, 0.8),
        _ => return Err(Error::Input(format!("case id must be 1..6, got {case_id}"))),
    })
}

pub const EXAMPLE1_THETA: f64 = 1.0;

/// `x_k = 8 sin(0.04πk)` for `k = 1..=n`.
pub fn sine_input(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 8.0 * (0.04 * std::f64::consts::PI * k as f64).sin()).collect()
}

pub fn gen_example1(n: usize, seed: u64) -> Result<(Dataset, f64)> {
    gen_example1_with(n, &mut run_rng(seed, 0))
}

pub fn gen_example1_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(Dataset, f64)> {
    gen_scalar(n, &NoiseSpec::example1().channels[0], EXAMPLE1_THETA, rng)
}

/// `y_k = x_k·θ + v_k` on the sine input.
pub fn gen_scalar<R: Rng + ?Sized>(n: usize, noise: &Mixture, theta: f64, rng: &mut R) -> Result<(Dataset, f64)> {
    if n == 0 {
        return Err(Error::Input("need at least one sample".into()));
    }
    let x = sine_input(n);
    let y: Vec<f64> = x.iter().map(|&xk| xk * theta + noise.sample(rng)).collect();
    Ok((Dataset::scalar(&x, &y)?, theta))
}

pub fn gen_example2(n: usize, p1: f64, p2: f64, case_id: u8, seed: u64) -> Result<(Dataset, DVector<f64>)> {
    gen_example2_with(n, p1, p2, case_id, &mut run_rng(seed, 0))
}

/// Two outputs sharing the regressor `[1, x_k]`, θ° = [1, 1].
pub fn gen_example2_with<R: Rng + ?Sized>(
    n: usize,
    p1: f64,
    p2: f64,
    case_id: u8,
    rng: &mut R,
) -> Result<(Dataset, DVector<f64>)> {
    let noise = NoiseSpec::example2(p1, p2, case_id)?;
    if n == 0 {
        return Err(Error::Input("need at least one sample".into()));
    }
    let theta = DVector::from_element(2, 1.0);
    let samples = sine_input(n)
        .into_iter()
        .map(|xk| {
            let x = DMatrix::from_row_slice(2, 2, &[1.0, xk, 1.0, xk]);
            let y = &x * &theta + noise.sample(rng);
            Sample::new(x, y)
        })
        .collect();
    Ok((Dataset::new(samples)?, theta))
}
