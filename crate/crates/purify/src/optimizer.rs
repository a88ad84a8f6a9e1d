//! Genetic search over purification circuits.
//!
//! Mutation-only elitist GA: each generation keeps the top scorers, refills
//! the pool with mutated copies, deduplicates by canonical form, and tops up
//! with fresh random circuits when deduplication shrinks the pool. Fitness is
//! a weighted penalty on the three infidelity components of the output pair,
//! optionally gated by a hard success-probability floor.
//!
//! Every stochastic step draws from a seed derived serially from the master
//! seed, one per individual, so parallel and serial runs produce bit-identical
//! results.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::bellstate::{BcdPerm, ErrorModel, MeasBasis};
use crate::circuit::{canonicalize, Circuit, CircuitOp, Mode, MAX_WIDTH};
use crate::evaluator::{evaluate, EvalReport, EvaluatorError};

/// Attempts at building one acceptable random circuit before giving up.
const RANDOM_CIRCUIT_ATTEMPTS: usize = 100_000;

/// Attempts at producing a mutant distinct from its parent.
const MUTATE_ATTEMPTS: usize = 32;

/// Attempts per open slot when topping a population up with fresh circuits.
const TOPUP_ATTEMPTS_PER_SLOT: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("invalid GA config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Eval(#[from] EvaluatorError),
}

/// Relative odds of each mutation kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationWeights {
    pub insert: f64,
    pub delete: f64,
    pub replace: f64,
    pub param_tweak: f64,
    pub swap_adjacent: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        MutationWeights {
            insert: 2.0,
            delete: 1.0,
            replace: 2.0,
            param_tweak: 3.0,
            swap_adjacent: 1.0,
        }
    }
}

/// Search configuration.
///
/// `fitness_weights` are the penalties `[w_b, w_c, w_d]` applied to the three
/// non-target components of the output pair. `crossover_rate` is reserved for
/// a recombination operator and is currently ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub width: usize,
    pub max_length: usize,
    pub mode: Mode,
    pub population_size: usize,
    pub survivors_per_generation: usize,
    pub children_per_survivor: usize,
    pub generations: usize,
    pub seed: u64,
    pub mutation: MutationWeights,
    pub fitness_weights: [f64; 3],
    pub success_floor: Option<f64>,
    pub crossover_rate: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            width: 3,
            max_length: 17,
            mode: Mode::Standard,
            population_size: 200,
            survivors_per_generation: 40,
            children_per_survivor: 5,
            generations: 200,
            seed: 1,
            mutation: MutationWeights::default(),
            fitness_weights: [1.0, 1.0, 1.0],
            success_floor: None,
            crossover_rate: 0.0,
        }
    }
}

impl GaConfig {
    fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |msg: &str| Err(OptimizerError::BadConfig(msg.to_string()));
        if self.width < 2 || self.width > MAX_WIDTH {
            return bad("width must be in 2..=16");
        }
        if self.max_length < 2 {
            return bad("max_length must be at least 2 (a gate and a measurement)");
        }
        if self.survivors_per_generation == 0 {
            return bad("survivors_per_generation must be at least 1");
        }
        if self.population_size < self.survivors_per_generation {
            return bad("population_size must be at least survivors_per_generation");
        }
        if self.children_per_survivor == 0 {
            return bad("children_per_survivor must be at least 1");
        }
        if self.generations == 0 {
            return bad("generations must be at least 1");
        }
        let w = &self.mutation;
        let weights = [
            w.insert,
            w.delete,
            w.replace,
            w.param_tweak,
            w.swap_adjacent,
        ];
        if weights.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("mutation weights must be finite and nonnegative");
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return bad("at least one mutation weight must be positive");
        }
        if self
            .fitness_weights
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
        {
            return bad("fitness weights must be finite and nonnegative");
        }
        if let Some(floor) = self.success_floor {
            if !floor.is_finite() || !(0.0..=1.0).contains(&floor) {
                return bad("success_floor must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// One evaluated individual.
#[derive(Clone, Debug)]
pub struct Scored {
    pub fitness: f64,
    pub report: EvalReport,
    pub circuit: Circuit,
}

/// Search outcome: the best individual of each generation, in order, plus the
/// last evaluated pool sorted best first.
#[derive(Clone, Debug)]
pub struct GaRun {
    pub trace: Vec<Scored>,
    pub final_population: Vec<Scored>,
}

impl GaRun {
    pub fn best(&self) -> &Scored {
        self.trace
            .last()
            .expect("trace holds one entry per generation")
    }
}

/// Scores an evaluated circuit: `1 - (w_b*b + w_c*c + w_d*d)` over the
/// normalized output components, `-inf` when the output is undefined or the
/// success floor is violated. Equal weights make this the output fidelity.
pub fn fitness(report: &EvalReport, cfg: &GaConfig) -> f64 {
    if !report.final_defined {
        return f64::NEG_INFINITY;
    }
    if let Some(floor) = cfg.success_floor {
        if report.success_prob < floor {
            return f64::NEG_INFINITY;
        }
    }
    let [w_b, w_c, w_d] = cfg.fitness_weights;
    let out = &report.final_state;
    1.0 - (w_b * out.p_b() + w_c * out.p_c() + w_d * out.p_d())
}

fn random_bcd(rng: &mut impl Rng) -> BcdPerm {
    BcdPerm::ALL[rng.gen_range(0..BcdPerm::ALL.len())]
}

fn random_basis(rng: &mut impl Rng) -> MeasBasis {
    match rng.gen_range(0..3) {
        0 => MeasBasis::CoinZ,
        1 => MeasBasis::CoinX,
        _ => MeasBasis::AntiY,
    }
}

fn random_gate(cfg: &GaConfig, rng: &mut impl Rng) -> CircuitOp {
    let (src, dst) = match cfg.mode {
        Mode::Standard => {
            let src = rng.gen_range(0..cfg.width);
            let mut dst = rng.gen_range(0..cfg.width - 1);
            if dst >= src {
                dst += 1;
            }
            (src, dst)
        }
        // Hot/cold gates act on register neighbors only.
        Mode::HotCold => {
            let lo = rng.gen_range(0..cfg.width - 1);
            if rng.gen_bool(0.5) {
                (lo, lo + 1)
            } else {
                (lo + 1, lo)
            }
        }
    };
    CircuitOp::Gate {
        src,
        dst,
        bcd_src: random_bcd(rng),
        bcd_dst: random_bcd(rng),
    }
}

fn random_measure(cfg: &GaConfig, rng: &mut impl Rng) -> CircuitOp {
    let pair = rng.gen_range(1..cfg.width);
    // Hot/cold mode can only refill the communication slot.
    let reset = match cfg.mode {
        Mode::Standard => rng.gen_bool(0.5),
        Mode::HotCold => pair == cfg.width - 1 && rng.gen_bool(0.5),
    };
    CircuitOp::Measure {
        pair,
        basis: random_basis(rng),
        reset,
    }
}

fn random_swap(cfg: &GaConfig, rng: &mut impl Rng) -> CircuitOp {
    let lo = rng.gen_range(0..cfg.width - 1);
    CircuitOp::Swap { a: lo, b: lo + 1 }
}

/// A random mid-circuit operation (never a trailing relabeling).
fn random_op(cfg: &GaConfig, rng: &mut impl Rng) -> CircuitOp {
    let roll = rng.gen_range(0..10);
    match cfg.mode {
        Mode::Standard if roll < 6 => random_gate(cfg, rng),
        Mode::Standard => random_measure(cfg, rng),
        Mode::HotCold if roll < 5 => random_gate(cfg, rng),
        Mode::HotCold if roll < 7 => random_swap(cfg, rng),
        Mode::HotCold => random_measure(cfg, rng),
    }
}

fn random_final_bcd(rng: &mut impl Rng) -> CircuitOp {
    // Identity would be a no-op gene; sample the five proper relabelings.
    CircuitOp::FinalBcd {
        perm: BcdPerm::ALL[rng.gen_range(1..BcdPerm::ALL.len())],
    }
}

/// Draws random circuits until one passes canonicalization, and returns it in
/// canonical form. The proposal is biased toward acceptance (it opens with a
/// gate-like operation and closes with a measurement) but the canonicalizer
/// has the final word.
pub fn random_circuit(cfg: &GaConfig, rng: &mut impl Rng) -> Circuit {
    for _ in 0..RANDOM_CIRCUIT_ATTEMPTS {
        let len = rng.gen_range(2..=cfg.max_length);
        let mut ops = Vec::with_capacity(len + 1);
        ops.push(match cfg.mode {
            Mode::Standard => random_gate(cfg, rng),
            Mode::HotCold if rng.gen_bool(0.25) => random_swap(cfg, rng),
            Mode::HotCold => random_gate(cfg, rng),
        });
        for _ in 1..len - 1 {
            ops.push(random_op(cfg, rng));
        }
        ops.push(random_measure(cfg, rng));
        if rng.gen_bool(0.15) {
            ops.push(random_final_bcd(rng));
        }
        if let Ok(c) = canonicalize(&Circuit::new(cfg.width, cfg.mode, ops)) {
            return c;
        }
    }
    unreachable!("random canonical circuits exist for every valid GA config")
}

fn mutation_kind(cfg: &GaConfig, rng: &mut impl Rng) -> usize {
    let w = &cfg.mutation;
    let table = WeightedIndex::new([
        w.insert,
        w.delete,
        w.replace,
        w.param_tweak,
        w.swap_adjacent,
    ])
    .expect("validated weights are nonnegative with a positive sum");
    table.sample(rng)
}

/// Re-rolls one parameter of `op` without changing which pairs it touches.
fn tweak_op(cfg: &GaConfig, op: &mut CircuitOp, rng: &mut impl Rng) {
    match op {
        CircuitOp::Gate {
            bcd_src, bcd_dst, ..
        } => {
            if rng.gen_bool(0.5) {
                *bcd_src = random_bcd(rng);
            } else {
                *bcd_dst = random_bcd(rng);
            }
        }
        CircuitOp::Measure { pair, basis, reset } => {
            let reset_allowed = match cfg.mode {
                Mode::Standard => true,
                Mode::HotCold => *pair == cfg.width - 1,
            };
            if reset_allowed && rng.gen_bool(0.3) {
                *reset = !*reset;
            } else {
                *basis = random_basis(rng);
            }
        }
        // A register swap has no free parameter; retarget it instead.
        CircuitOp::Swap { a, b } => {
            let lo = rng.gen_range(0..cfg.width - 1);
            *a = lo;
            *b = lo + 1;
        }
        CircuitOp::FinalBcd { perm } => {
            *perm = BcdPerm::ALL[rng.gen_range(1..BcdPerm::ALL.len())];
        }
    }
}

/// Applies one weighted random edit and canonicalizes. Edits that fail
/// canonicalization or collapse back onto the parent are retried a bounded
/// number of times; if none sticks, the parent is returned unchanged.
pub fn mutate(parent: &Circuit, cfg: &GaConfig, rng: &mut impl Rng) -> Circuit {
    let parent_key = parent.gene_key();
    for _ in 0..MUTATE_ATTEMPTS {
        let mut ops = parent.ops.clone();
        let has_final = matches!(ops.last(), Some(CircuitOp::FinalBcd { .. }));
        // Positions of mid-circuit ops; a trailing relabeling stays trailing.
        let body = ops.len() - usize::from(has_final);
        match mutation_kind(cfg, rng) {
            0 => {
                if parent.op_count() >= cfg.max_length {
                    continue;
                }
                if !has_final && rng.gen_bool(0.1) {
                    ops.push(random_final_bcd(rng));
                } else {
                    let at = rng.gen_range(0..=body);
                    ops.insert(at, random_op(cfg, rng));
                }
            }
            1 => {
                ops.remove(rng.gen_range(0..ops.len()));
                if ops.is_empty() {
                    continue;
                }
            }
            2 => {
                let at = rng.gen_range(0..ops.len());
                ops[at] = if at == body {
                    random_final_bcd(rng)
                } else {
                    random_op(cfg, rng)
                };
            }
            3 => {
                let at = rng.gen_range(0..ops.len());
                tweak_op(cfg, &mut ops[at], rng);
            }
            _ => {
                if ops.len() < 2 {
                    continue;
                }
                let at = rng.gen_range(0..ops.len() - 1);
                ops.swap(at, at + 1);
            }
        }
        if let Ok(c) = canonicalize(&Circuit::new(cfg.width, cfg.mode, ops)) {
            if c.gene_key() != parent_key {
                return c;
            }
        }
    }
    parent.clone()
}

fn score_all(
    pool: Vec<Circuit>,
    cfg: &GaConfig,
    em: &ErrorModel,
) -> Result<Vec<Scored>, OptimizerError> {
    let mut scored = pool
        .into_par_iter()
        .map(|circuit| {
            let report = evaluate(&circuit, em)?;
            let fitness = fitness(&report, cfg);
            Ok(Scored {
                fitness,
                report,
                circuit,
            })
        })
        .collect::<Result<Vec<_>, EvaluatorError>>()?;
    // Descending fitness; canonical form breaks ties so order is reproducible.
    scored.sort_by(|a, b| {
        b.fitness
            .total_cmp(&a.fitness)
            .then_with(|| a.circuit.gene_key().cmp(&b.circuit.gene_key()))
    });
    Ok(scored)
}

/// Extends `pool` with fresh random circuits until it reaches `target`,
/// skipping duplicates. Gives up quietly once the attempt budget is spent so
/// tiny gene spaces terminate with a smaller pool.
fn top_up(
    pool: &mut Vec<Circuit>,
    seen: &mut HashSet<String>,
    target: usize,
    cfg: &GaConfig,
    rng: &mut ChaCha8Rng,
) {
    let missing = target.saturating_sub(pool.len());
    let mut attempts = missing * TOPUP_ATTEMPTS_PER_SLOT;
    while pool.len() < target && attempts > 0 {
        attempts -= 1;
        let mut child_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let c = random_circuit(cfg, &mut child_rng);
        if seen.insert(c.gene_key()) {
            pool.push(c);
        }
    }
}

/// Runs the elitist search and returns the per-generation best trace plus the
/// final evaluated pool. Deterministic for a fixed config, including under
/// parallel evaluation.
pub fn run_ga(cfg: &GaConfig, em: &ErrorModel) -> Result<GaRun, OptimizerError> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pool = Vec::with_capacity(cfg.population_size);
    let mut seen = HashSet::new();
    top_up(&mut pool, &mut seen, cfg.population_size, cfg, &mut master);

    let mut trace: Vec<Scored> = Vec::with_capacity(cfg.generations);
    let mut scored = score_all(pool, cfg, em)?;
    for _generation in 0..cfg.generations {
        trace.push(scored[0].clone());
        if trace.len() == cfg.generations {
            break;
        }

        let survivors: Vec<Circuit> = scored
            .iter()
            .take(cfg.survivors_per_generation)
            .map(|s| s.circuit.clone())
            .collect();
        // One pre-drawn seed per child keeps parallel mutation reproducible.
        let child_seeds: Vec<(usize, u64)> = (0..survivors.len())
            .flat_map(|i| (0..cfg.children_per_survivor).map(move |_| i))
            .map(|i| (i, master.gen()))
            .collect();
        let children: Vec<Circuit> = child_seeds
            .into_par_iter()
            .map(|(i, seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                mutate(&survivors[i], cfg, &mut rng)
            })
            .collect();

        let mut next = Vec::with_capacity(survivors.len() + children.len());
        let mut seen = HashSet::new();
        for c in survivors.into_iter().chain(children) {
            if seen.insert(c.gene_key()) {
                next.push(c);
            }
        }
        top_up(&mut next, &mut seen, cfg.population_size, cfg, &mut master);
        scored = score_all(next, cfg, em)?;
    }

    Ok(GaRun {
        trace,
        final_population: scored,
    })
}
