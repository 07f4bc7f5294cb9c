//! Reference systems and a seeded family of random well-conditioned systems.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::{parse_system, LoadedSystem};
use crate::system::{TimeInvariantLinearSystem, TimeVaryingLinearSystem};

pub const SHEAR_JSON: &str = include_str!("../systems/shear.json");
pub const OSCILLATOR_JSON: &str = include_str!("../systems/oscillator.json");
pub const SCALAR_UNIT_JSON: &str = include_str!("../systems/scalar_unit.json");

fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

/// 1×1 system `(φ, c, q, r)`.
pub fn scalar_lti(phi: f64, c: f64, q: f64, r: f64) -> TimeInvariantLinearSystem {
    TimeInvariantLinearSystem::new(m(1, 1, &[phi]), m(1, 1, &[c]), m(1, 1, &[q]), m(1, 1, &[r]))
        .expect("1×1 shapes agree")
}

/// Shear dynamics `Φ = [[1, −1], [0, 1]]` with position measurement,
/// `Q = q_scale·I` and `R = [r]`.
pub fn shear_lti(q_scale: f64, r: f64) -> TimeInvariantLinearSystem {
    TimeInvariantLinearSystem::new(
        m(2, 2, &[1.0, -1.0, 0.0, 1.0]),
        m(1, 2, &[1.0, 0.0]),
        DMatrix::identity(2, 2) * q_scale,
        m(1, 1, &[r]),
    )
    .expect("2×2 shapes agree")
}

/// Near-deterministic shear system with tiny process noise.
pub fn shear_reference() -> TimeInvariantLinearSystem {
    match parse_system(SHEAR_JSON).expect("embedded system parses") {
        LoadedSystem::Lti { system, .. } => system,
        LoadedSystem::Ltv(_) => unreachable!("embedded file is time-invariant"),
    }
}

/// Horizon stored with the shear reference system.
pub fn shear_reference_horizon() -> usize {
    match parse_system(SHEAR_JSON).expect("embedded system parses") {
        LoadedSystem::Lti { horizon, .. } => horizon,
        LoadedSystem::Ltv(sys) => sys.horizon(),
    }
}

/// Two-state time-varying oscillator, `N = 30`.
pub fn oscillator() -> TimeVaryingLinearSystem {
    parse_system(OSCILLATOR_JSON).expect("embedded system parses").to_ltv()
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    uniform(rng, n, n).qr().q()
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = uniform(rng, n, n);
    let shift = rng.gen_range(0.1..0.2);
    let s = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * shift;
    (&s + s.transpose()) * 0.5
}

/// Random system with `Φ_k = U diag(s) Vᵀ`, singular values in `[0.6, 1.5]`,
/// uniform `C_k` entries and SPD noise covariances.
pub fn random_family_member(seed: u64, n: usize, p: usize, horizon: usize) -> TimeVaryingLinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = Vec::with_capacity(horizon);
    let mut q = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let u = orthogonal(&mut rng, n);
        let v = orthogonal(&mut rng, n);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(0.6..1.5)));
        phi.push(u * s * v.transpose());
        q.push(spd(&mut rng, n));
    }
    let c = (0..=horizon).map(|_| uniform(&mut rng, p, n)).collect();
    let r = (0..=horizon).map(|_| spd(&mut rng, p)).collect();
    TimeVaryingLinearSystem::new(phi, c, q, r).expect("generated shapes agree")
}

/// One draw from the acceptance family: `n, p ∈ {1,2,3}`, `N ∈ 1..=8`.
#[derive(Debug, Clone)]
pub struct FamilyDraw {
    pub seed: u64,
    pub system: TimeVaryingLinearSystem,
}

/// `count` systems with dimensions and horizon drawn from `seed`.
pub fn random_family(seed: u64, count: usize) -> impl Iterator<Item = FamilyDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| {
        let n = rng.gen_range(1..=3);
        let p = rng.gen_range(1..=3);
        let horizon = rng.gen_range(1..=8);
        let member_seed = rng.gen();
        FamilyDraw {
            seed: member_seed,
            system: random_family_member(member_seed, n, p, horizon),
        }
    })
}
