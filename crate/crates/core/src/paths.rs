//! Counter-based Brownian increments.
//!
//! Fine-level standard normals are addressed by `(seed, atom, fine_step,
//! channel)`: the atom selects a ChaCha8 stream and the pair
//! `(fine_step, channel)` a 64-bit word position inside it. A coarse
//! increment is the binary-tree sum of its `2^level` fine increments, so a
//! path at `(dt, level)` and one at `(dt / 2, level - 1)` share the same fine
//! grid and the coarse one is the exact pairwise sum of the finer one.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{DolrError, Result};
use crate::kernels::reduce::for_each_row_mut;
use crate::kernels::EnsembleMatrix;

/// Default cap on the number of increments materialised by [`generate`].
pub const DEFAULT_VALUE_CAP: u128 = 1 << 25;

/// Maps the top 52 random bits to the open interval `(0, 1)`.
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Inverse of the standard normal CDF (Wichura's AS241, PPND16), accurate to
/// about 1e-16 relative.
pub fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_4e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = libm::sqrt(-libm::log(r));
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Sequential stream of standard normals for auxiliary sampling (initial
/// data, probe points, random rotations). Tags select disjoint ChaCha
/// streams that never collide with per-atom noise streams.
#[derive(Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, tag: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX - tag);
        Self { rng }
    }

    pub fn next_normal(&mut self) -> f64 {
        normal_quantile(unit_open(self.rng.next_u64()))
    }

    pub fn next_uniform(&mut self) -> f64 {
        unit_open(self.rng.next_u64())
    }
}

/// Anything that can hand out the `N x m` increments of a step.
pub trait NoiseSource: Sync {
    fn n_atoms(&self) -> usize;
    fn channels(&self) -> usize;
    fn dt(&self) -> f64;
    /// Fills `out` (`N x m`) with the increments over `[step dt, (step+1) dt]`.
    fn increments(&self, step: usize, out: &mut EnsembleMatrix) -> Result<()>;
}

/// Lazily evaluated Brownian increments; nothing is stored.
#[derive(Clone)]
pub struct BrownianSource {
    proto: ChaCha8Rng,
    seed: u64,
    dt: f64,
    n_atoms: usize,
    m: usize,
    level: u32,
}

impl BrownianSource {
    pub fn new(seed: u64, dt: f64, n_atoms: usize, m: usize, level: u32) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || n_atoms == 0 || m == 0 {
            return Err(DolrError::InvalidBoundInput(alloc::format!(
                "Brownian source needs dt > 0 and positive dims (dt={dt}, N={n_atoms}, m={m})"
            )));
        }
        if level > 30 {
            return Err(DolrError::OverflowingDims {
                requested: 1u128 << level,
                cap: 1 << 30,
            });
        }
        Ok(Self {
            proto: ChaCha8Rng::seed_from_u64(seed),
            seed,
            dt,
            n_atoms,
            m,
            level,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn fine_dt(&self) -> f64 {
        self.dt / (1u64 << self.level) as f64
    }

    /// Standard normal behind fine increment `(fine_step, atom, channel)`.
    pub fn fine_normal(&self, fine_step: u64, atom: usize, channel: usize) -> f64 {
        let mut rng = self.proto.clone();
        rng.set_stream(atom as u64);
        rng.set_word_pos(2 * (fine_step as u128 * self.m as u128 + channel as u128));
        normal_quantile(unit_open(rng.next_u64()))
    }

    fn fill_atom(&self, step: usize, atom: usize, row: &mut [f64], scratch: &mut Vec<f64>) {
        let sub = 1usize << self.level;
        let m = self.m;
        let scale = libm::sqrt(self.fine_dt());
        let mut rng = self.proto.clone();
        rng.set_stream(atom as u64);
        rng.set_word_pos(2 * (step as u128 * sub as u128 * m as u128));
        scratch.clear();
        scratch.resize(sub * m, 0.0);
        for j in 0..sub {
            for c in 0..m {
                scratch[c * sub + j] = scale * normal_quantile(unit_open(rng.next_u64()));
            }
        }
        for (c, out) in row.iter_mut().enumerate() {
            let v = &mut scratch[c * sub..(c + 1) * sub];
            let mut len = sub;
            while len > 1 {
                for i in 0..len / 2 {
                    v[i] = v[2 * i] + v[2 * i + 1];
                }
                len /= 2;
            }
            *out = v[0];
        }
    }
}

impl NoiseSource for BrownianSource {
    fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    fn channels(&self) -> usize {
        self.m
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn increments(&self, step: usize, out: &mut EnsembleMatrix) -> Result<()> {
        if out.n_atoms() != self.n_atoms || out.width() != self.m {
            return Err(DolrError::ShapeMismatch(alloc::format!(
                "increment buffer {}x{} for a {}x{} source",
                out.n_atoms(),
                out.width(),
                self.n_atoms,
                self.m
            )));
        }
        let m = self.m;
        for_each_row_mut(out.as_mut_slice(), m, |atom, row| {
            let mut scratch = Vec::new();
            self.fill_atom(step, atom, row, &mut scratch);
        });
        Ok(())
    }
}

/// Materialised increments, `n_steps x N x m`, row-major in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub seed: u64,
    pub n_steps: usize,
    pub dt: f64,
    pub n_atoms: usize,
    pub m: usize,
    pub level: u32,
    data: Vec<f64>,
}

impl BrownianPath {
    pub fn increment(&self, step: usize, atom: usize, channel: usize) -> f64 {
        self.data[(step * self.n_atoms + atom) * self.m + channel]
    }

    /// All increments of one step, `N x m` row-major.
    pub fn step_slice(&self, step: usize) -> &[f64] {
        let len = self.n_atoms * self.m;
        &self.data[step * len..(step + 1) * len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl NoiseSource for BrownianPath {
    fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    fn channels(&self) -> usize {
        self.m
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn increments(&self, step: usize, out: &mut EnsembleMatrix) -> Result<()> {
        if step >= self.n_steps {
            return Err(DolrError::PathExhausted { step });
        }
        if out.n_atoms() != self.n_atoms || out.width() != self.m {
            return Err(DolrError::ShapeMismatch("increment buffer".into()));
        }
        out.as_mut_slice().copy_from_slice(self.step_slice(step));
        Ok(())
    }
}

pub fn generate(
    seed: u64,
    n_steps: usize,
    dt: f64,
    n_atoms: usize,
    m: usize,
    level: u32,
) -> Result<BrownianPath> {
    generate_with_cap(seed, n_steps, dt, n_atoms, m, level, DEFAULT_VALUE_CAP)
}

pub fn generate_with_cap(
    seed: u64,
    n_steps: usize,
    dt: f64,
    n_atoms: usize,
    m: usize,
    level: u32,
    cap: u128,
) -> Result<BrownianPath> {
    let requested = n_steps as u128 * n_atoms as u128 * m as u128;
    if requested > cap {
        return Err(DolrError::OverflowingDims { requested, cap });
    }
    if n_steps == 0 {
        return Err(DolrError::InvalidBoundInput(
            "n_steps must be positive".into(),
        ));
    }
    let src = BrownianSource::new(seed, dt, n_atoms, m, level)?;
    let mut data = vec![0.0; requested as usize];
    let mut buf = EnsembleMatrix::zeros(n_atoms, m);
    let len = n_atoms * m;
    for s in 0..n_steps {
        src.increments(s, &mut buf)?;
        data[s * len..(s + 1) * len].copy_from_slice(buf.as_slice());
    }
    Ok(BrownianPath {
        seed,
        n_steps,
        dt,
        n_atoms,
        m,
        level,
        data,
    })
}
