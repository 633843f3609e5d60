use rand::Rng;

use super::brownian::{bridge_exit_probabilities, BrownianGrid};
use super::source::{MartingaleSource, Step};
use crate::error::{invalid, Result, SipError};
use crate::rng::SipRng;
use crate::stats::{normal_quantile, Cdf};

/// Base Brownian steps per slot of length `σ²`.
pub const BASE_DIVISIONS: u32 = 256;
/// Bridge bisections allowed below the base step.
pub const REFINE_LEVELS: u32 = 10;
/// Bridge exit probability below which a segment is accepted without
/// refinement.
const NEGLIGIBLE_EXIT: f64 = 1e-9;
/// Acceptance rate under which the exit-pair sampler gives up.
pub const REJECTION_FLOOR: f64 = 1e-4;
/// Points kept behind the cursor before old grid points are dropped.
const GRID_WINDOW: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomPolicy {
    /// Fail on any atom hit by the path.
    Reject,
    /// Spread each atom uniformly over its jump of the distribution function.
    Randomize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCoupling {
    /// `U_i`, iid uniform on `(0, 1)`.
    pub uniforms: Vec<f64>,
    /// `Z_i = σ Φ^{-1}(U_i)`.
    pub z: Vec<f64>,
}

/// Per-step probability integral transform of the increments through their
/// conditional laws.
pub fn quantile_couple<'a, F>(
    d: &[f64],
    mut law_at: F,
    sigma2: f64,
    atoms: AtomPolicy,
    rng: &mut SipRng,
) -> Result<QuantileCoupling>
where
    F: FnMut(usize) -> Result<Box<dyn Cdf + 'a>>,
{
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid("sigma2", "must be positive"));
    }
    let sd = sigma2.sqrt();
    let mut uniforms = Vec::with_capacity(d.len());
    let mut z = Vec::with_capacity(d.len());
    for (i, &di) in d.iter().enumerate() {
        let law = law_at(i)?;
        let hi = law.cdf(di);
        let lo = law.cdf_left(di);
        let u = if hi - lo > 1e-12 {
            match atoms {
                AtomPolicy::Reject => return Err(SipError::NonContinuousLaw { at: di, mass: hi - lo }),
                AtomPolicy::Randomize => lo + (hi - lo) * rng.random::<f64>(),
            }
        } else {
            hi
        };
        let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        uniforms.push(u);
        z.push(sd * normal_quantile(u));
    }
    Ok(QuantileCoupling { uniforms, z })
}

/// A martingale path produced by stopping one Brownian motion at
/// successive two-point exit times.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub d: Vec<f64>,
    pub x: Vec<f64>,
    /// Chain state before each step.
    pub prev_states: Vec<f64>,
    /// `τ_i = T_i - T_{i-1}`.
    pub stopping_times: Vec<f64>,
    /// `B(T_k)`.
    pub embedded: Vec<f64>,
    /// `Z_i = B(iσ²) - B((i-1)σ²)`.
    pub z: Vec<f64>,
    /// `max_k |M_k - B(T_k)|`, the grid-resolution error.
    pub embedding_error: f64,
    /// Largest per-step mass removed by truncating the increment law.
    pub truncated_mass: f64,
}

/// Exit pair `(u, v)` with `u < 0 < v` drawn from `(v - u) μ(du) μ(dv)` on
/// `[-L, L]²`.
fn exit_pair<S: MartingaleSource>(src: &S, state: S::State, rng: &mut SipRng) -> Result<(Step<S::State>, Step<S::State>)> {
    // Slack keeps laws with an atom exactly at the level inside it.
    let level = src.truncation(state).0 * (1.0 + 1e-9);
    let max_tries = (10.0 / REJECTION_FLOOR) as u32;
    for _ in 0..max_tries {
        let u = src.sample_side(state, false, rng)?;
        let v = src.sample_side(state, true, rng)?;
        if u.d < -level || v.d > level {
            continue;
        }
        if rng.random::<f64>() * 2.0 * level < v.d - u.d {
            return Ok((u, v));
        }
    }
    Err(SipError::RejectionEfficiency { efficiency: 1.0 / f64::from(max_tries), floor: REJECTION_FLOOR })
}

/// Runs the Brownian motion from the point at `cursor` until it leaves
/// `(lo, hi)`. Leaves `cursor` at the exit point and reports whether the
/// upper barrier was hit.
fn run_to_exit(bm: &mut BrownianGrid, cursor: &mut usize, lo: f64, hi: f64, slots: &mut Vec<f64>, per_slot: u64) -> Result<bool> {
    let min_h = bm.dt() / f64::from(1u32 << REFINE_LEVELS) * 1.5;
    loop {
        if *cursor + 1 == bm.len() {
            let b = bm.push_step();
            if bm.base_steps() % per_slot == 0 {
                slots.push(b);
            }
        }
        let i = *cursor;
        let (t0, t1) = (bm.times()[i], bm.times()[i + 1]);
        let (b0, b1) = (bm.values()[i], bm.values()[i + 1]);
        let (up, down) = bridge_exit_probabilities(b0, b1, t1 - t0, lo, hi);
        let pc = (up + down).min(1.0);
        if pc < NEGLIGIBLE_EXIT {
            *cursor += 1;
            continue;
        }
        if t1 - t0 > min_h {
            bm.refine(i)?;
            continue;
        }
        *cursor += 1;
        if b1 >= hi {
            return Ok(true);
        }
        if b1 <= lo {
            return Ok(false);
        }
        if bm.uniform() < pc {
            return Ok(bm.uniform() * (up + down) < up);
        }
    }
}

/// Embeds `n` steps of the martingale into `bm`: each increment is the exit
/// value of a randomized two-point interval around the current level of the
/// martingale, so `d_i` has the conditional law of the source and
/// `E(τ_i | past) = Var(d_i | past)`. `bm` must start at time 0 with step
/// `σ² / BASE_DIVISIONS`.
pub fn skorokhod_embed<S: MartingaleSource<State = f64>>(
    src: &S,
    n: usize,
    sigma2: f64,
    bm: &mut BrownianGrid,
    rng: &mut SipRng,
) -> Result<Embedding> {
    embed_generic(src, n, sigma2, bm, rng, |s| s)
}

/// [`skorokhod_embed`] for sources without a scalar state.
pub fn skorokhod_embed_iid<S: MartingaleSource<State = ()>>(
    src: &S,
    n: usize,
    sigma2: f64,
    bm: &mut BrownianGrid,
    rng: &mut SipRng,
) -> Result<Embedding> {
    embed_generic(src, n, sigma2, bm, rng, |_| 0.0)
}

fn embed_generic<S: MartingaleSource, F: Fn(S::State) -> f64>(
    src: &S,
    n: usize,
    sigma2: f64,
    bm: &mut BrownianGrid,
    rng: &mut SipRng,
    label: F,
) -> Result<Embedding> {
    if bm.len() != 1 || bm.base_steps() != 0 {
        return Err(invalid("bm", "the Brownian grid must be fresh"));
    }
    let per_slot = u64::from(BASE_DIVISIONS);
    if ((bm.dt() * per_slot as f64) - sigma2).abs() > 1e-12 * sigma2 {
        return Err(invalid("bm", "grid step must be sigma2 / BASE_DIVISIONS"));
    }
    let mut state = src.start(rng);
    let mut out = Embedding {
        d: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        prev_states: Vec::with_capacity(n),
        stopping_times: Vec::with_capacity(n),
        embedded: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        embedding_error: 0.0,
        truncated_mass: 0.0,
    };
    let mut slots = Vec::with_capacity(n);
    let mut cursor = 0usize;
    let mut level = 0.0;
    let mut last_time = 0.0;
    for _ in 0..n {
        out.truncated_mass = out.truncated_mass.max(src.truncation(state).1);
        let (u, v) = exit_pair(src, state, rng)?;
        let upper = run_to_exit(bm, &mut cursor, level + u.d, level + v.d, &mut slots, per_slot)?;
        let step = if upper { v } else { u };
        out.prev_states.push(label(state));
        level += step.d;
        state = step.state;
        out.d.push(step.d);
        out.x.push(step.x);
        let (t, b) = (bm.times()[cursor], bm.values()[cursor]);
        out.stopping_times.push(t - last_time);
        last_time = t;
        out.embedded.push(b);
        out.embedding_error = out.embedding_error.max((b - level).abs());
        if cursor > GRID_WINDOW {
            cursor -= bm.forget_before(cursor);
        }
    }
    while slots.len() < n {
        let b = bm.push_step();
        if bm.base_steps() % per_slot == 0 {
            slots.push(b);
        }
        if bm.len() > 2 * GRID_WINDOW {
            bm.forget_before(bm.len() - 1);
        }
    }
    let mut prev = 0.0;
    for b in slots.into_iter().take(n) {
        out.z.push(b - prev);
        prev = b;
    }
    Ok(out)
}
