//! Exact forward simulation of the interacting reinforced processes and their
//! weighted empirical means.
//!
//! Each step draws `X_{n+1,j} ~ Bernoulli(∑_h w_{h,j} Z_{n,h})` independently,
//! then updates `Z_{n+1} = (1 − r_n) Z_n + r_n X_{n+1}` and
//! `N_{n+1} = (1 − q_{n+1,n+1}) N_n + q_{n+1,n+1} X_{n+1}`.
//!
//! Replica `r` of an ensemble with master seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s)` on stream `r`, so results do not depend on
//! scheduling or thread count.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{SpectralData, WeightedNetwork};
use crate::schedules::{RSchedule, WeightSchedule};

/// Probabilities outside `[0, 1]` by at most this much are rounding and get clamped.
pub const PROBABILITY_SLACK: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("initial component {index} = {value} outside [0, 1]")]
    ComponentOutOfRange { index: usize, value: f64 },
    #[error("success probability {p} for agent {agent} outside [0, 1]")]
    ProbabilityOutOfUnit { agent: usize, p: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid checkpoints: {0}")]
    BadCheckpoints(String),
    #[error("horizon must be at least 1")]
    BadHorizon,
    #[error("at least one replica is required")]
    NoReplicas,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub step: u64,
    pub z: Vec<f64>,
    pub nw: Vec<f64>,
    pub last_x: Vec<u8>,
}

pub fn init_state(z0: &[f64]) -> Result<SystemState> {
    for (index, &value) in z0.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(SimError::ComponentOutOfRange { index, value });
        }
    }
    Ok(SystemState { step: 0, z: z0.to_vec(), nw: vec![0.0; z0.len()], last_x: vec![0; z0.len()] })
}

/// Everything shared by the replicas of one run: the network in column form and
/// the step-size tables up to the horizon.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub net: WeightedNetwork,
    pub r: RSchedule,
    pub w: WeightSchedule,
    /// Row-major weights: `rows[h·N + j] = w_{h,j}`.
    rows: Arc<Vec<f64>>,
    /// `rates[k] = r_{k−1}` used by step `k` (index 0 unused).
    rates: Arc<Vec<f64>>,
    /// `last[k] = q_{k,k}` (index 0 unused).
    last: Arc<Vec<f64>>,
}

impl SimSetup {
    pub fn new(net: WeightedNetwork, r: RSchedule, w: WeightSchedule, horizon: u64) -> Self {
        let n = net.n_agents();
        let wm = net.weights();
        let rows = (0..n * n).map(|i| wm[(i / n, i % n)]).collect();
        let mut setup = Self { net, r, w, rows: Arc::new(rows), rates: Arc::new(vec![0.0]), last: Arc::new(vec![0.0]) };
        setup.extend(horizon);
        setup
    }

    /// Grow the step tables to cover `horizon`.
    pub fn extend(&mut self, horizon: u64) {
        if (self.rates.len() as u64) > horizon {
            return;
        }
        let rates: Vec<f64> = (0..=horizon).map(|k| if k == 0 { 0.0 } else { self.r.step_rate(k) }).collect();
        let last: Vec<f64> = (0..=horizon).map(|k| if k == 0 { 0.0 } else { self.w.q_nn(k) }).collect();
        self.rates = Arc::new(rates);
        self.last = Arc::new(last);
    }

    pub fn n_agents(&self) -> usize {
        self.net.n_agents()
    }

    pub fn horizon(&self) -> u64 {
        self.rates.len() as u64 - 1
    }

    fn rate(&self, k: u64) -> f64 {
        self.rates.get(k as usize).copied().unwrap_or_else(|| self.r.step_rate(k))
    }

    fn last_weight(&self, k: u64) -> f64 {
        self.last.get(k as usize).copied().unwrap_or_else(|| self.w.q_nn(k))
    }
}

fn check_dims(setup: &SimSetup, state: &SystemState) -> Result<()> {
    let n = setup.n_agents();
    for len in [state.z.len(), state.nw.len(), state.last_x.len()] {
        if len != n {
            return Err(SimError::DimensionMismatch { expected: n, got: len });
        }
    }
    Ok(())
}

/// Advance one step in place, consuming exactly `N` uniforms from `rng`.
pub fn step_in_place<R: Rng>(state: &mut SystemState, setup: &SimSetup, rng: &mut R, p: &mut [f64]) -> Result<()> {
    let n = setup.n_agents();
    p.fill(0.0);
    for (h, row) in setup.rows.chunks_exact(n).enumerate() {
        let z = state.z[h];
        for (pj, w) in p.iter_mut().zip(row) {
            *pj += w * z;
        }
    }
    if let Some(j) = p.iter().position(|s| !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(s)) {
        return Err(SimError::ProbabilityOutOfUnit { agent: j, p: p[j] });
    }
    let k = state.step + 1;
    let r = setup.rate(k);
    let q = setup.last_weight(k);
    for j in 0..n {
        let u: f64 = rng.random();
        let x = u < p[j];
        state.last_x[j] = x as u8;
        let xf = if x { 1.0 } else { 0.0 };
        state.z[j] = (1.0 - r) * state.z[j] + r * xf;
        state.nw[j] = (1.0 - q) * state.nw[j] + q * xf;
    }
    state.step = k;
    Ok(())
}

/// One step of the dynamics, returning the new state.
pub fn step<R: Rng>(state: &SystemState, setup: &SimSetup, rng: &mut R) -> Result<SystemState> {
    check_dims(setup, state)?;
    let mut next = state.clone();
    let mut p = vec![0.0; setup.n_agents()];
    step_in_place(&mut next, setup, rng, &mut p)?;
    Ok(next)
}

/// Projections onto the common direction and its complement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// `Ñ_n = N^{−1/2} v_1ᵀ N_n`.
    pub ntilde: f64,
    /// `Z̃_n = N^{−1/2} v_1ᵀ Z_n`.
    pub ztilde: f64,
}

/// Returns `(Ñ_n, Z̃_n, N′_n)` with `N′_n = (I − u_1 v_1ᵀ) N_n = N_n − Ñ_n 1`.
pub fn project(state: &SystemState, spec: &SpectralData) -> Result<(f64, f64, Vec<f64>)> {
    let n = spec.n_agents();
    if state.nw.len() != n || state.z.len() != n {
        return Err(SimError::DimensionMismatch { expected: n, got: state.nw.len() });
    }
    let scale = 1.0 / (n as f64).sqrt();
    let dot = |x: &[f64]| x.iter().zip(&spec.v1).map(|(a, b)| a * b).sum::<f64>() * scale;
    let ntilde = dot(&state.nw);
    let ztilde = dot(&state.z);
    let nprime = state.nw.iter().map(|x| x - ntilde).collect();
    Ok((ntilde, ztilde, nprime))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state: SystemState,
    pub ntilde: f64,
    pub ztilde: f64,
    pub nprime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    pub seed: u64,
    pub stream: u64,
    pub fingerprint: String,
}

impl Trajectory {
    pub fn at(&self, step: u64) -> Option<&Checkpoint> {
        self.checkpoints.binary_search_by_key(&step, |c| c.state.step).ok().map(|i| &self.checkpoints[i])
    }

    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectory has at least one checkpoint")
    }

    /// CSV with columns `step,agent,Z,Nw,X`, one row per agent and checkpoint.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,agent,Z,Nw,X\n");
        for c in &self.checkpoints {
            let s = &c.state;
            for j in 0..s.z.len() {
                out.push_str(&format!("{},{},{:?},{:?},{}\n", s.step, j + 1, s.z[j], s.nw[j], s.last_x[j]));
            }
        }
        out
    }
}

/// How replica initial inclinations are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    Fixed { z0: Vec<f64> },
    /// Independent uniforms, drawn from the replica stream before the first step.
    UniformIid,
}

impl InitMode {
    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Result<SystemState> {
        match self {
            InitMode::Fixed { z0 } => {
                if z0.len() != n {
                    return Err(SimError::DimensionMismatch { expected: n, got: z0.len() });
                }
                init_state(z0)
            }
            InitMode::UniformIid => init_state(&(0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>()),
        }
    }

    /// All-zero or all-one starts are absorbing: `Z∞` is then constant and the
    /// covariance factor `Z∞(1 − Z∞)` vanishes.
    pub fn is_degenerate(&self) -> bool {
        match self {
            InitMode::Fixed { z0 } => z0.iter().all(|&z| z == 0.0) || z0.iter().all(|&z| z == 1.0),
            InitMode::UniformIid => false,
        }
    }
}

fn validate_checkpoints(checkpoints: &[u64], horizon: u64) -> Result<()> {
    if horizon == 0 {
        return Err(SimError::BadHorizon);
    }
    if checkpoints.is_empty() {
        return Err(SimError::BadCheckpoints("empty list".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::BadCheckpoints("steps must be strictly increasing".into()));
    }
    if checkpoints[0] < 1 || *checkpoints.last().unwrap() > horizon {
        return Err(SimError::BadCheckpoints(format!("steps must lie in [1, {horizon}]")));
    }
    Ok(())
}

/// Random stream of replica `stream` under `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulate one path up to the last checkpoint, recording each checkpoint.
pub fn run_trajectory(
    setup: &SimSetup,
    spec: &SpectralData,
    init: &InitMode,
    checkpoints: &[u64],
    seed: u64,
    stream: u64,
    fingerprint: &str,
) -> Result<Trajectory> {
    let horizon = *checkpoints.last().ok_or_else(|| SimError::BadCheckpoints("empty list".into()))?;
    validate_checkpoints(checkpoints, horizon)?;
    let n = setup.n_agents();
    if spec.n_agents() != n {
        return Err(SimError::DimensionMismatch { expected: n, got: spec.n_agents() });
    }
    let mut rng = replica_rng(seed, stream);
    let mut state = init.draw(n, &mut rng)?;
    let mut p = vec![0.0; n];
    let mut out = Vec::with_capacity(checkpoints.len());
    for &target in checkpoints {
        while state.step < target {
            step_in_place(&mut state, setup, &mut rng, &mut p)?;
        }
        let (ntilde, ztilde, nprime) = project(&state, spec)?;
        out.push(Checkpoint { state: state.clone(), ntilde, ztilde, nprime });
    }
    Ok(Trajectory { checkpoints: out, seed, stream, fingerprint: fingerprint.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub replicas: Vec<Trajectory>,
    pub master_seed: u64,
    pub fingerprint: String,
    pub checkpoints: Vec<u64>,
    pub degenerate_start: bool,
}

impl EnsembleResult {
    /// `Ñ` of every replica at `step`.
    pub fn ntilde_at(&self, step: u64) -> Vec<f64> {
        self.replicas.iter().map(|t| t.at(step).map_or(f64::NAN, |c| c.ntilde)).collect()
    }
}

/// Run `replicas` independent paths. Replica `r` uses stream `r` of `master_seed`;
/// `threads = None` uses the global rayon pool.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    setup: &SimSetup,
    spec: &SpectralData,
    init: &InitMode,
    checkpoints: &[u64],
    replicas: usize,
    master_seed: u64,
    threads: Option<usize>,
    fingerprint: &str,
) -> Result<EnsembleResult> {
    if replicas == 0 {
        return Err(SimError::NoReplicas);
    }
    let horizon = *checkpoints.last().ok_or_else(|| SimError::BadCheckpoints("empty list".into()))?;
    validate_checkpoints(checkpoints, horizon)?;
    let mut setup = setup.clone();
    setup.extend(horizon);
    let job = || -> Result<Vec<Trajectory>> {
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| run_trajectory(&setup, spec, init, checkpoints, master_seed, r, fingerprint))
            .collect()
    };
    let replicas = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(job)?,
        None => job()?,
    };
    Ok(EnsembleResult {
        replicas,
        master_seed,
        fingerprint: fingerprint.to_string(),
        checkpoints: checkpoints.to_vec(),
        degenerate_start: init.is_degenerate(),
    })
}
