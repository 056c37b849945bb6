//! Isotropic Q-Wiener noise: angular power spectrum, Karhunen-Loeve channel
//! bookkeeping, and dyadically refinable Brownian increment lattices.
//!
//! The Q-Wiener process expands as
//!
//! ```text
//! W(t) = sum_l ( sqrt(A_l) b1_{l,0}(t) Y_{l,0}
//!        + sqrt(2 A_l) sum_{m=1}^{l} ( b1_{l,m}(t) Re Y_{l,m}
//!                                    + b2_{l,m}(t) Im Y_{l,m} ) )
//! ```
//!
//! with independent standard Brownian motions `b1, b2` and the angular power
//! spectrum `A_l`. A [`BrownianLattice`] stores the raw `b`-increments on the
//! finest dyadic grid; consumers apply the `sqrt(A_l)` / `sqrt(A_l / 2)`
//! channel scalings of the coefficient SDE system themselves, so one lattice
//! serves every spectrum and both Euler schemes.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::{Read, Write};

use crate::harmonics::degree_rate;
use crate::rng::{stream_rng, DOMAIN_LATTICE};
use crate::{Error, Result};

/// Decay law `l -> A_l` of the noise covariance eigenvalues.
///
/// `A_l = scale * l^-decay` for `1 <= l <= cutoff`, `A_0 = zero_mode`
/// (default 0), and `A_l = 0` beyond the cutoff. The power law is undefined
/// at `l = 0` and the `l = 0` mode is undamped, so its strength is a
/// separate knob.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularPowerSpectrum {
    scale: f64,
    decay: f64,
    zero_mode: f64,
    cutoff: Option<u32>,
}

impl AngularPowerSpectrum {
    /// Power law `A_l = scale * l^-decay`; requires `scale > 0`, `decay > 0`.
    pub fn new(scale: f64, decay: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidInput(format!("scale {scale} must be > 0")));
        }
        if !(decay > 0.0) {
            return Err(Error::InvalidInput(format!(
                "decay exponent {decay} must be > 0"
            )));
        }
        Ok(Self {
            scale,
            decay,
            zero_mode: 0.0,
            cutoff: None,
        })
    }

    /// Sets `A_0`; must be nonnegative.
    pub fn with_zero_mode(mut self, zero_mode: f64) -> Result<Self> {
        if !(zero_mode >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "zero mode {zero_mode} must be >= 0"
            )));
        }
        self.zero_mode = zero_mode;
        Ok(self)
    }

    /// Zeroes the spectrum above `cutoff` (band-limited noise).
    pub fn with_cutoff(mut self, cutoff: u32) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `A_l`.
    pub fn power(&self, degree: u32) -> f64 {
        if let Some(cutoff) = self.cutoff {
            if degree > cutoff {
                return 0.0;
            }
        }
        if degree == 0 {
            self.zero_mode
        } else {
            self.scale * (degree as f64).powf(-self.decay)
        }
    }

    /// Partial trace `sum_{l=0}^{kappa} (2l+1) A_l (1 + l(l+1))^s` of
    /// `(Id - Laplace)^s Q`; `E ||W(t)||^2_{H^s}` equals `t` times the full
    /// trace whenever the series converges (`decay > 2(s+1)`).
    pub fn trace_sobolev(&self, s: f64, kappa: u32) -> f64 {
        (0..=kappa)
            .map(|l| (2 * l + 1) as f64 * self.power(l) * (1.0 + degree_rate(l)).powf(s))
            .sum()
    }
}

/// One real Brownian channel of the expansion: the `m = 0` motion, or the
/// first/second motion of an `m >= 1` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Channel {
    pub degree: u32,
    pub order: u32,
    /// `true` selects `b2` (the imaginary-part motion); `order = 0` carries
    /// only `b1`.
    pub second: bool,
}

impl Channel {
    /// Noise intensity of the coefficient SDE driven by this channel:
    /// `A_l` for `m = 0`, `A_l / 2` for the real/imaginary channels.
    pub fn intensity(&self, spectrum: &AngularPowerSpectrum) -> f64 {
        let a = spectrum.power(self.degree);
        if self.order == 0 {
            a
        } else {
            0.5 * a
        }
    }

    /// Position of this channel in degree-major layout; matches the slot
    /// layout of [`crate::CoefficientField`] and is independent of the
    /// truncation.
    pub fn index(&self) -> usize {
        let base = (self.degree as usize) * (self.degree as usize);
        if self.order == 0 {
            base
        } else {
            base + 2 * self.order as usize - 1 + self.second as usize
        }
    }

    fn stream_parts(&self) -> [u64; 4] {
        [
            DOMAIN_LATTICE,
            self.degree as u64,
            self.order as u64,
            self.second as u64,
        ]
    }
}

/// All channels up to truncation `kappa`, in degree-major order;
/// `(kappa+1)^2` in total.
pub fn channels(kappa: u32) -> impl Iterator<Item = Channel> {
    (0..=kappa).flat_map(|degree| {
        std::iter::once(Channel {
            degree,
            order: 0,
            second: false,
        })
        .chain((1..=degree).flat_map(move |order| {
            [false, true].into_iter().map(move |second| Channel {
                degree,
                order,
                second,
            })
        }))
    })
}

/// Default cap on lattice memory (increments only), 3 GiB.
pub const DEFAULT_LATTICE_BUDGET: usize = 3 << 30;

const LATTICE_MAGIC: &[u8; 8] = b"SPHLAT01";

/// Brownian increments of every channel on the finest dyadic grid
/// `t_i = i * T * 2^-M`.
///
/// Aggregating `2^j` consecutive finest increments reproduces the exact
/// Brownian increment at level `M - j`, so one realization drives coupled
/// solves at every coarser step size. Channels are sampled from disjoint
/// counter-derived streams: the lattice is a pure function of
/// `(kappa, T, M, seed)` regardless of thread schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianLattice {
    kappa: u32,
    t_final: f64,
    level: u32,
    seed: u64,
    increments: Vec<Vec<f64>>,
}

/// Increments of a single channel, scaled by `sqrt(h_min)`.
fn channel_increments(seed: u64, channel: Channel, level: u32, t_final: f64) -> Vec<f64> {
    let n = 1usize << level;
    let sqrt_h = (t_final / n as f64).sqrt();
    let mut rng = stream_rng(seed, &channel.stream_parts());
    (0..n)
        .map(|_| sqrt_h * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Halves an increment array by summing adjacent pairs.
fn halve(fine: &[f64]) -> Vec<f64> {
    fine.chunks_exact(2).map(|p| p[0] + p[1]).collect()
}

impl BrownianLattice {
    /// Samples a lattice with the default memory budget.
    pub fn sample(kappa: u32, t_final: f64, level: u32, seed: u64) -> Result<Self> {
        Self::sample_with_budget(kappa, t_final, level, seed, DEFAULT_LATTICE_BUDGET)
    }

    pub fn sample_with_budget(
        kappa: u32,
        t_final: f64,
        level: u32,
        seed: u64,
        max_bytes: usize,
    ) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::InvalidInput(format!(
                "final time {t_final} must be > 0"
            )));
        }
        let n_channels = (kappa as usize + 1) * (kappa as usize + 1);
        let bytes = n_channels
            .checked_mul(1usize << level)
            .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()))
            .ok_or_else(|| Error::ResourceLimit("lattice size overflows usize".into()))?;
        if bytes > max_bytes {
            return Err(Error::ResourceLimit(format!(
                "lattice of {n_channels} channels x 2^{level} increments needs {bytes} bytes \
                 (budget {max_bytes})"
            )));
        }
        let channel_list: Vec<Channel> = channels(kappa).collect();
        let increments: Vec<Vec<f64>> = channel_list
            .par_iter()
            .map(|&c| channel_increments(seed, c, level, t_final))
            .collect();
        Ok(Self {
            kappa,
            t_final,
            level,
            seed,
            increments,
        })
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Finest dyadic level `M`; the finest step is `T * 2^-M`.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channel_count(&self) -> usize {
        self.increments.len()
    }

    /// Finest-level increments of one channel.
    pub fn channel(&self, channel: Channel) -> &[f64] {
        &self.increments[channel.index()]
    }

    /// Increments of one channel aggregated to level `j <= M`, step
    /// `T * 2^-j`. Aggregation proceeds by repeated pairwise halving, so
    /// aggregating to `j'` and then to `j` is bit-identical to aggregating
    /// to `j` directly.
    pub fn aggregate_channel(&self, channel: Channel, level: u32) -> Result<Vec<f64>> {
        self.check_level(level)?;
        let mut cur = self.increments[channel.index()].clone();
        for _ in level..self.level {
            cur = halve(&cur);
        }
        Ok(cur)
    }

    /// Aggregates every channel to level `j`.
    pub fn aggregate(&self, level: u32) -> Result<Vec<Vec<f64>>> {
        self.check_level(level)?;
        Ok(self
            .increments
            .par_iter()
            .map(|fine| {
                let mut cur = fine.clone();
                for _ in level..self.level {
                    cur = halve(&cur);
                }
                cur
            })
            .collect())
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level > self.level {
            return Err(Error::InvalidInput(format!(
                "level {level} exceeds finest level {}",
                self.level
            )));
        }
        Ok(())
    }

    /// Binary dump: header `(magic, kappa, T, M, seed)`, then channel-major
    /// little-endian f64 increments.
    pub fn dump(&self, mut writer: impl Write) -> Result<()> {
        writer.write_all(LATTICE_MAGIC)?;
        writer.write_all(&self.kappa.to_le_bytes())?;
        writer.write_all(&self.t_final.to_le_bytes())?;
        writer.write_all(&self.level.to_le_bytes())?;
        writer.write_all(&self.seed.to_le_bytes())?;
        for channel in &self.increments {
            for v in channel {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(mut reader: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if &magic != LATTICE_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        reader.read_exact(&mut b4)?;
        let kappa = u32::from_le_bytes(b4);
        reader.read_exact(&mut b8)?;
        let t_final = f64::from_le_bytes(b8);
        reader.read_exact(&mut b4)?;
        let level = u32::from_le_bytes(b4);
        reader.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        if !(t_final > 0.0) || level > 40 {
            return Err(Error::Format(format!(
                "implausible header: T={t_final}, M={level}"
            )));
        }
        let n_channels = (kappa as usize + 1) * (kappa as usize + 1);
        let n = 1usize << level;
        let mut increments = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            let mut channel = Vec::with_capacity(n);
            for _ in 0..n {
                reader.read_exact(&mut b8)?;
                channel.push(f64::from_le_bytes(b8));
            }
            increments.push(channel);
        }
        Ok(Self {
            kappa,
            t_final,
            level,
            seed,
            increments,
        })
    }
}
