//! Monte Carlo estimation of the raw-pair cost of running a circuit to
//! completion, restarting failed parts until every measurement accepts.
//!
//! Each trial walks the circuit once, sampling every measurement outcome from
//! the exact conditional Bell-diagonal state (there is no trajectory-level
//! error sampling; the register stays an exact distribution throughout). When
//! a measurement rejects, the smallest restartable block containing it is
//! re-tensored with fresh raw pairs and replayed; if the failed measurement's
//! component reaches the output pair, the whole circuit starts over. The
//! tallies answer "how many raw pairs does one produced pair really cost".
//!
//! Restartable blocks come from [`color_partition`]; by construction their
//! pairs are all fresh at the block start, the block's ops touch nothing
//! else, and the rest of the register is statistically independent of the
//! block's outcome, so swapping in fresh pairs and replaying is exact.
//!
//! The circuit is simulated in the op order given. Reordering commuting ops
//! preserves single-shot statistics but not restart granularity, so this
//! module never rewrites its input (it only validates it).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::bellstate::{
    apply_bilateral_gate, apply_measurement, bcd_perm_single, init_distribution, BellDistribution,
    BellLabel, BellStateError, ErrorModel,
};
use crate::circuit::{
    canonicalize, color_partition, Circuit, CircuitError, CircuitOp, ColorPartition, Subcircuit,
};
use crate::evaluator::gate_perm;

#[derive(Debug, thiserror::Error)]
pub enum McError {
    #[error("invalid Monte Carlo config: {0}")]
    BadConfig(String),
    #[error("no trial completed within the restart guard")]
    AllTrialsAborted,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    State(#[from] BellStateError),
}

/// Trial-count, seeding, and restart-guard knobs.
///
/// `full_restart_only` disables block replays so the two restart semantics
/// can be compared on the same seed stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub max_restarts_per_trial: usize,
    pub full_restart_only: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            trials: 10_000,
            seed: 1,
            max_restarts_per_trial: 10_000,
            full_restart_only: false,
        }
    }
}

/// Aggregated cost statistics over all trials.
///
/// Histograms cover completed trials only, so their mass is
/// `trials - aborted`. `cumulative` is the fraction of all trials (aborted
/// ones included in the denominator) finishing within a pair budget, so it
/// climbs toward `1 - aborted/trials`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trials: usize,
    pub aborted: usize,
    /// Restart semantics used: `"subcircuit"` re-tensors only the failed
    /// block's pairs from fresh raw states, `"full"` restarts the whole
    /// circuit on every failure.
    pub restart_policy: String,
    /// Completed trials keyed by raw pairs consumed.
    pub pairs_histogram: BTreeMap<usize, usize>,
    /// Completed trials keyed by operations executed (replays included).
    pub ops_histogram: BTreeMap<usize, usize>,
    /// `(pair budget, fraction of all trials completing within it)`.
    pub cumulative: Vec<(usize, f64)>,
    /// Fraction of all trials that completed without a single restart.
    pub first_pass_fraction: f64,
    /// Mean raw pairs consumed per completed trial; `None` if none completed.
    pub n_avg: Option<f64>,
    /// Mean operations executed per completed trial; `None` if none completed.
    pub mean_ops: Option<f64>,
}

/// Mean raw pairs consumed per produced pair, over completed trials.
pub fn mean_pairs(report: &McReport) -> Result<f64, McError> {
    let (mut total, mut count) = (0.0, 0usize);
    for (&pairs, &trials) in &report.pairs_histogram {
        total += (pairs * trials) as f64;
        count += trials;
    }
    if count == 0 {
        return Err(McError::AllTrialsAborted);
    }
    Ok(total / count as f64)
}

fn normalized(state: &BellDistribution) -> Result<BellDistribution, BellStateError> {
    let total = state.total();
    let weights = state.weights().iter().map(|w| w / total).collect();
    BellDistribution::new(state.n_pairs(), weights)
}

/// Replaces the pairs in `members` with fresh raw pairwise product states,
/// keeping the joint state of the rest. Exact when `members` is independent
/// of the rest, which the restartable-block construction guarantees.
fn retensor_members(
    state: &BellDistribution,
    members: &[usize],
    em: &ErrorModel,
) -> Result<BellDistribution, BellStateError> {
    let mut rest = vec![0.0; state.weights().len()];
    for (s, &w) in state.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut key = s;
        for &p in members {
            key = state.with_label(key, p, BellLabel::A);
        }
        rest[key] += w;
    }
    let weights = (0..rest.len())
        .map(|s| {
            let mut key = s;
            let mut w = 1.0;
            for &p in members {
                w *= em.raw.get(state.label_at(s, p));
                key = state.with_label(key, p, BellLabel::A);
            }
            w * rest[key]
        })
        .collect();
    normalized(&BellDistribution::new(state.n_pairs(), weights)?)
}

struct Trial<'a> {
    c: &'a Circuit,
    em: &'a ErrorModel,
    partition: &'a ColorPartition,
    cfg: &'a McConfig,
    rng: ChaCha8Rng,
    state: BellDistribution,
    pairs: usize,
    ops: usize,
    restarts: usize,
}

enum StepOutcome {
    Done,
    Failed,
    Aborted,
}

impl<'a> Trial<'a> {
    fn new(
        c: &'a Circuit,
        em: &'a ErrorModel,
        partition: &'a ColorPartition,
        cfg: &'a McConfig,
        seed: u64,
    ) -> Result<Trial<'a>, McError> {
        Ok(Trial {
            c,
            em,
            partition,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: init_distribution(c.width, em.raw)?,
            pairs: c.width,
            ops: 0,
            restarts: 0,
        })
    }

    /// Applies one op; measurements are sampled. `Failed` means a rejected
    /// measurement that still needs a restart decision.
    fn execute(&mut self, t: usize) -> Result<StepOutcome, McError> {
        match self.c.ops[t] {
            CircuitOp::Gate { src, dst, .. } => {
                let perm = gate_perm(&self.c.ops[t]).expect("gates map to a permutation");
                self.state = apply_bilateral_gate(&self.state, &perm, src, dst, self.em.p2)?;
                self.ops += 1;
            }
            CircuitOp::Swap { a, b } => {
                let perm = gate_perm(&self.c.ops[t]).expect("swaps map to a permutation");
                self.state = apply_bilateral_gate(&self.state, &perm, a, b, self.em.p2)?;
                self.ops += 1;
            }
            CircuitOp::FinalBcd { perm } => {
                self.state = bcd_perm_single(&self.state, 0, perm)?;
            }
            CircuitOp::Measure { pair, basis, reset } => {
                let (accepted, weight) =
                    apply_measurement(&self.state, pair, basis, self.em.eta, self.em.raw, reset)?;
                self.ops += 1;
                if self.rng.gen::<f64>() >= weight / self.state.total() {
                    return Ok(StepOutcome::Failed);
                }
                self.state = normalized(&accepted)?;
                if reset {
                    self.pairs += 1;
                }
            }
        }
        Ok(StepOutcome::Done)
    }

    /// Re-tensors the block's pairs and replays its ops until its trailing
    /// measurement accepts.
    fn replay_block(&mut self, sub: &Subcircuit) -> Result<StepOutcome, McError> {
        // The closed-block property makes "touches a member" equivalent to
        // "touches members only", and the trailing measurement is the block's
        // only one, so the replay below can fail solely at its last op.
        let block_ops: Vec<usize> = (sub.start..=sub.measure_op)
            .filter(|&u| sub.pairs.iter().any(|&p| self.c.ops[u].touches(p)))
            .collect();
        'replay: loop {
            self.pairs += sub.pairs.len();
            self.state = retensor_members(&self.state, &sub.pairs, self.em)?;
            for &u in &block_ops {
                match self.execute(u)? {
                    StepOutcome::Done => {}
                    StepOutcome::Failed => {
                        self.restarts += 1;
                        if self.restarts > self.cfg.max_restarts_per_trial {
                            return Ok(StepOutcome::Aborted);
                        }
                        continue 'replay;
                    }
                    StepOutcome::Aborted => unreachable!("execute never aborts"),
                }
            }
            return Ok(StepOutcome::Done);
        }
    }

    /// Runs the circuit to completion; `true` means completed, `false` means
    /// the restart guard tripped.
    fn run(&mut self) -> Result<bool, McError> {
        let mut t = 0;
        while t < self.c.ops.len() {
            match self.execute(t)? {
                StepOutcome::Done => {
                    t += 1;
                    continue;
                }
                StepOutcome::Aborted => unreachable!("execute never aborts"),
                StepOutcome::Failed => {}
            }
            self.restarts += 1;
            if self.restarts > self.cfg.max_restarts_per_trial {
                return Ok(false);
            }
            let block = if self.cfg.full_restart_only {
                None
            } else {
                self.partition.subcircuit_for_measure(t)
            };
            match block {
                Some(sub) => match self.replay_block(sub)? {
                    StepOutcome::Done => t = sub.measure_op + 1,
                    StepOutcome::Aborted => return Ok(false),
                    StepOutcome::Failed => unreachable!("replay retries failures"),
                },
                None => {
                    self.pairs += self.c.width;
                    self.state = init_distribution(self.c.width, self.em.raw)?;
                    t = 0;
                }
            }
        }
        Ok(true)
    }
}

struct TrialOutcome {
    pairs: usize,
    ops: usize,
    first_pass: bool,
    aborted: bool,
}

fn run_trial(
    c: &Circuit,
    em: &ErrorModel,
    partition: &ColorPartition,
    cfg: &McConfig,
    seed: u64,
) -> Result<TrialOutcome, McError> {
    let mut trial = Trial::new(c, em, partition, cfg, seed)?;
    let completed = trial.run()?;
    Ok(TrialOutcome {
        pairs: trial.pairs,
        ops: trial.ops,
        first_pass: trial.restarts == 0,
        aborted: !completed,
    })
}

/// Runs `cfg.trials` independent executions of the circuit and aggregates the
/// raw-pair and operation costs. Deterministic for a fixed config under any
/// worker count: every trial draws from its own stream seeded off the master.
///
/// The circuit must pass validation and the canonical filters; its op order
/// is simulated exactly as given.
pub fn simulate_runs(c: &Circuit, em: &ErrorModel, cfg: &McConfig) -> Result<McReport, McError> {
    if cfg.trials == 0 {
        return Err(McError::BadConfig("trials must be at least 1".to_string()));
    }
    canonicalize(c)?;
    let partition = color_partition(c);

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.trials).map(|_| master.gen()).collect();
    let outcomes = seeds
        .into_par_iter()
        .map(|seed| run_trial(c, em, &partition, cfg, seed))
        .collect::<Result<Vec<_>, McError>>()?;

    let mut pairs_histogram = BTreeMap::new();
    let mut ops_histogram = BTreeMap::new();
    let mut aborted = 0usize;
    let mut first_pass = 0usize;
    for o in &outcomes {
        if o.aborted {
            aborted += 1;
            continue;
        }
        *pairs_histogram.entry(o.pairs).or_insert(0usize) += 1;
        *ops_histogram.entry(o.ops).or_insert(0usize) += 1;
        first_pass += usize::from(o.first_pass);
    }

    let completed = cfg.trials - aborted;
    let mut cumulative = Vec::with_capacity(pairs_histogram.len());
    let mut running = 0usize;
    for (&pairs, &count) in &pairs_histogram {
        running += count;
        cumulative.push((pairs, running as f64 / cfg.trials as f64));
    }
    let mean_of = |hist: &BTreeMap<usize, usize>| {
        (completed > 0)
            .then(|| hist.iter().map(|(&k, &v)| (k * v) as f64).sum::<f64>() / completed as f64)
    };

    let restart_policy = if cfg.full_restart_only {
        "full"
    } else {
        "subcircuit"
    };
    Ok(McReport {
        trials: cfg.trials,
        aborted,
        restart_policy: restart_policy.to_string(),
        n_avg: mean_of(&pairs_histogram),
        mean_ops: mean_of(&ops_histogram),
        pairs_histogram,
        ops_histogram,
        cumulative,
        first_pass_fraction: first_pass as f64 / cfg.trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellstate::{MeasBasis, PairQuadruple};
    use crate::circuit::{builtin, CircuitOp as Op, Mode};
    use crate::evaluator::evaluate;

    fn fig1() -> Circuit {
        builtin("fig1").unwrap()
    }

    fn mc(trials: usize, seed: u64) -> McConfig {
        McConfig {
            trials,
            seed,
            ..McConfig::default()
        }
    }

    #[test]
    fn perfect_circuit_costs_exactly_its_width() {
        let em = ErrorModel::werner(1.0, 1.0, 1.0).unwrap();
        let report = simulate_runs(&fig1(), &em, &mc(500, 9)).unwrap();
        assert_eq!(report.aborted, 0);
        assert_eq!(report.pairs_histogram, BTreeMap::from([(2, 500)]));
        assert_eq!(report.n_avg, Some(2.0));
        assert_eq!(mean_pairs(&report).unwrap(), 2.0);
        assert_eq!(report.first_pass_fraction, 1.0);
        assert_eq!(report.cumulative, vec![(2, 1.0)]);
    }

    #[test]
    fn single_round_cost_matches_geometric_analytics() {
        let trials = 100_000;
        let em = ErrorModel::werner(0.9, 1.0, 1.0).unwrap();
        let p = evaluate(&fig1(), &em).unwrap().success_prob;
        let report = simulate_runs(&fig1(), &em, &mc(trials, 31)).unwrap();

        // Pairs per trial is 2 * Geometric(p); compare the mean at 3 sigma.
        let expected = 2.0 / p;
        let sigma = 2.0 * (1.0 - p).sqrt() / p / (trials as f64).sqrt();
        let n_avg = mean_pairs(&report).unwrap();
        assert!(
            (n_avg - expected).abs() < 3.0 * sigma,
            "{n_avg} vs {expected}"
        );
        assert!((n_avg - 2.28425).abs() < 0.02);

        let sigma_fp = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((report.first_pass_fraction - p).abs() < 3.0 * sigma_fp);

        assert!(n_avg >= 2.0);
        assert_eq!(
            report.pairs_histogram.values().sum::<usize>(),
            trials - report.aborted
        );
    }

    /// Pairs {1, 2} form a closed block whose failed check can be redone
    /// alone; the final check's component includes the output pair, so its
    /// failures restart everything.
    fn two_block_circuit() -> Circuit {
        Circuit::new(
            3,
            Mode::Standard,
            vec![
                Op::gate(1, 2),
                Op::measure(2, MeasBasis::CoinZ, false),
                Op::gate(0, 1),
                Op::measure(1, MeasBasis::CoinZ, false),
            ],
        )
    }

    #[test]
    fn op_order_is_simulated_as_given() {
        let c = two_block_circuit();
        let partition = color_partition(&c);
        let sub = partition.subcircuit_for_measure(1).expect("block exists");
        assert_eq!(sub.start, 0);
        assert_eq!(sub.pairs, vec![1, 2]);
    }

    #[test]
    fn block_restarts_beat_full_restarts() {
        let em = ErrorModel::werner(0.8, 0.99, 0.99).unwrap();
        let c = two_block_circuit();
        let block = simulate_runs(&c, &em, &mc(20_000, 5)).unwrap();
        let full = simulate_runs(
            &c,
            &em,
            &McConfig {
                full_restart_only: true,
                ..mc(20_000, 5)
            },
        )
        .unwrap();
        let n_block = mean_pairs(&block).unwrap();
        let n_full = mean_pairs(&full).unwrap();
        assert!(n_block < n_full, "{n_block} vs {n_full}");
        // Same seed stream, so the first-pass branch agrees exactly.
        assert_eq!(block.first_pass_fraction, full.first_pass_fraction);
        assert_eq!(block.restart_policy, "subcircuit");
        assert_eq!(full.restart_policy, "full");
    }

    #[test]
    fn block_replay_cost_matches_renewal_analytics() {
        // With block restarts the trial is a two-stage renewal process:
        // the block retries geometrically at its own acceptance rate, and a
        // final-check failure restarts the whole cycle. Expected pairs:
        // (width + |block| * (1/p1 - 1)) / p2, with p1 the block's acceptance
        // and p2 the final check's conditional acceptance. Any bias in the
        // re-tensor or replay would shift p1 or p2 off the evaluator's values.
        let trials = 100_000;
        let em = ErrorModel::werner(0.8, 0.97, 0.97).unwrap();
        let c = two_block_circuit();

        let block_alone = Circuit::new(
            2,
            Mode::Standard,
            vec![Op::gate(0, 1), Op::measure(1, MeasBasis::CoinZ, false)],
        );
        let p1 = evaluate(&block_alone, &em).unwrap().success_prob;
        let p_joint = evaluate(&c, &em).unwrap().success_prob;
        let p2 = p_joint / p1;
        let expected = (3.0 + 2.0 * (1.0 / p1 - 1.0)) / p2;

        let report = simulate_runs(&c, &em, &mc(trials, 13)).unwrap();
        assert_eq!(report.aborted, 0);
        let n_avg = mean_pairs(&report).unwrap();

        // Self-calibrating 3-sigma band from the sampled histogram.
        let mut var = 0.0;
        for (&pairs, &count) in &report.pairs_histogram {
            var += (pairs as f64 - n_avg).powi(2) * count as f64;
        }
        let sigma_mean = (var / trials as f64).sqrt() / (trials as f64).sqrt();
        assert!(
            (n_avg - expected).abs() < 3.0 * sigma_mean,
            "{n_avg} vs {expected} (sigma {sigma_mean})"
        );
    }

    #[test]
    fn first_pass_fraction_tracks_single_shot_success() {
        let trials = 100_000;
        let em = ErrorModel::werner(0.85, 0.97, 0.98).unwrap();
        let c = two_block_circuit();
        let p = evaluate(&c, &em).unwrap().success_prob;
        let report = simulate_runs(&c, &em, &mc(trials, 77)).unwrap();
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (report.first_pass_fraction - p).abs() < 3.0 * sigma,
            "{} vs {p}",
            report.first_pass_fraction
        );
    }

    #[test]
    fn raising_readout_quality_never_costs_more() {
        let trials = 20_000;
        let em_lo = ErrorModel::werner(0.9, 1.0, 0.95).unwrap();
        let em_hi = ErrorModel::werner(0.9, 1.0, 1.0).unwrap();
        // Common random numbers: same seed stream for both sweeps.
        let lo = simulate_runs(&fig1(), &em_lo, &mc(trials, 111)).unwrap();
        let hi = simulate_runs(&fig1(), &em_hi, &mc(trials, 111)).unwrap();
        assert!(mean_pairs(&lo).unwrap() >= mean_pairs(&hi).unwrap());
    }

    #[test]
    fn reports_are_deterministic() {
        let em = ErrorModel::werner(0.87, 0.98, 0.99).unwrap();
        let c = two_block_circuit();
        let a = simulate_runs(&c, &em, &mc(5_000, 21)).unwrap();
        let b = simulate_runs(&c, &em, &mc(5_000, 21)).unwrap();
        assert_eq!(a, b);
        let other = simulate_runs(&c, &em, &mc(5_000, 22)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn cumulative_curve_is_monotone_and_complete() {
        let em = ErrorModel::werner(0.9, 0.99, 0.99).unwrap();
        let report = simulate_runs(&fig1(), &em, &mc(10_000, 3)).unwrap();
        for pair in report.cumulative.windows(2) {
            assert!(pair[0].0 < pair[1].0);
            assert!(pair[0].1 <= pair[1].1);
        }
        let last = report.cumulative.last().unwrap().1;
        let expected = 1.0 - report.aborted as f64 / report.trials as f64;
        assert!((last - expected).abs() < 1e-12);
    }

    #[test]
    fn impossible_acceptance_aborts_every_trial() {
        // A raw register of pure bit-flip pairs turns the sacrificed pair
        // into D, which the X-parity check always rejects at eta = 1.
        let raw = PairQuadruple::new([0.0, 1.0, 0.0, 0.0]).unwrap();
        let em = ErrorModel::new(raw, 1.0, 1.0).unwrap();
        let c = Circuit::new(
            2,
            Mode::Standard,
            vec![Op::gate(0, 1), Op::measure(1, MeasBasis::CoinX, false)],
        );
        let cfg = McConfig {
            trials: 50,
            seed: 2,
            max_restarts_per_trial: 20,
            full_restart_only: false,
        };
        let report = simulate_runs(&c, &em, &cfg).unwrap();
        assert_eq!(report.aborted, 50);
        assert_eq!(report.n_avg, None);
        assert!(matches!(
            mean_pairs(&report),
            Err(McError::AllTrialsAborted)
        ));
        assert!(report.pairs_histogram.is_empty());
        assert_eq!(report.first_pass_fraction, 0.0);
    }

    #[test]
    fn resets_are_charged_once_per_execution() {
        // One pumping round with a refill: width 2 plus one reset = 3 pairs
        // minimum; every completed trial must spend at least that.
        let c = Circuit::new(
            2,
            Mode::Standard,
            vec![
                Op::gate(0, 1),
                Op::measure(1, MeasBasis::CoinZ, true),
                Op::gate(1, 0),
                Op::measure(1, MeasBasis::CoinX, false),
            ],
        );
        let em = ErrorModel::werner(0.9, 0.99, 0.99).unwrap();
        let report = simulate_runs(&c, &em, &mc(2_000, 8)).unwrap();
        let n = c.width + c.reset_count();
        assert!(report.pairs_histogram.keys().all(|&k| k >= n));
        assert!(mean_pairs(&report).unwrap() >= n as f64);
    }

    #[test]
    fn zero_trials_is_rejected() {
        let em = ErrorModel::werner(0.9, 1.0, 1.0).unwrap();
        let cfg = McConfig {
            trials: 0,
            ..McConfig::default()
        };
        assert!(matches!(
            simulate_runs(&fig1(), &em, &cfg),
            Err(McError::BadConfig(_))
        ));
    }
}
