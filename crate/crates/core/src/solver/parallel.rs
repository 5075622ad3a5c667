use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::CountVector;
use crate::linalg::{DesignMatrix, EtaOptions};
use crate::model::AdaptiveWeights;

use super::{
    check_problem, coordinate, AdmmConfig, AdmmState, Problem, Shard, ShardBackend, ShardReport,
    SolveOutput,
};

/// Contiguous row ranges `[start, end)` covering `0..n` in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    ranges: Vec<(usize, usize)>,
}

impl Partition {
    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn shards(&self) -> usize {
        self.ranges.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|(a, b)| b - a).collect()
    }

    pub fn rows(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSpec {
    /// `G` shards whose sizes differ by at most one, larger shards first.
    Balanced(usize),
    /// Explicit shard sizes in row order.
    Sizes(Vec<usize>),
}

pub fn make_partition(n: usize, spec: &PartitionSpec) -> Result<Partition> {
    let sizes = match spec {
        PartitionSpec::Balanced(g) => {
            let g = *g;
            if g == 0 {
                return Err(Error::InvalidPartition("need at least one shard".into()));
            }
            if g > n {
                return Err(Error::InvalidPartition(format!(
                    "{g} shards for {n} rows would leave a shard empty"
                )));
            }
            let (base, extra) = (n / g, n % g);
            (0..g).map(|i| base + usize::from(i < extra)).collect()
        }
        PartitionSpec::Sizes(sizes) => {
            if sizes.is_empty() {
                return Err(Error::InvalidPartition("need at least one shard".into()));
            }
            if sizes.contains(&0) {
                return Err(Error::InvalidPartition("shard sizes must be positive".into()));
            }
            let total: usize = sizes.iter().sum();
            if total != n {
                return Err(Error::InvalidPartition(format!(
                    "shard sizes sum to {total}, expected {n}"
                )));
            }
            sizes.clone()
        }
    };
    let mut start = 0;
    let ranges = sizes
        .iter()
        .map(|len| {
            let r = (start, start + len);
            start += len;
            r
        })
        .collect();
    Ok(Partition { ranges })
}

/// How the coordinator picks `eta`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum EtaMode {
    /// Use this value on every shard.
    Shared(f64),
    /// Sum of the per-shard bounds `eta_g`.
    #[default]
    SumShards,
}

/// Per-shard bounds `eta_g >= mu |X_g'X_g|_2`, in shard order.
pub fn register_eta(x: &DesignMatrix, partition: &Partition, mu: f64, opts: &EtaOptions) -> Result<Vec<f64>> {
    partition
        .ranges()
        .iter()
        .map(|&(a, b)| Ok(crate::linalg::estimate_eta(&x.slice_rows(a, b), mu, opts)?.value))
        .collect()
}

enum Command {
    Init { beta0: Arc<Vec<f64>>, eta: f64 },
    Step(Arc<Vec<f64>>),
    Stop,
}

enum Reply {
    Registered(f64),
    Report(ShardReport),
    Final(Vec<f64>, Vec<f64>),
}

struct ThreadBackend {
    commands: Vec<Sender<Command>>,
    replies: Receiver<(usize, Result<Reply>)>,
}

impl ThreadBackend {
    fn broadcast(&self, make: impl Fn() -> Command) -> Result<()> {
        for (g, tx) in self.commands.iter().enumerate() {
            tx.send(make()).map_err(|_| Error::WorkerLost(g))?;
        }
        Ok(())
    }

    /// One reply per worker, returned in shard order.
    fn collect(&self) -> Result<Vec<Reply>> {
        let mut slots: Vec<Option<Reply>> = (0..self.commands.len()).map(|_| None).collect();
        for _ in 0..self.commands.len() {
            let (g, reply) = self.replies.recv().map_err(|_| Error::WorkerLost(usize::MAX))?;
            slots[g] = Some(reply?);
        }
        Ok(slots.into_iter().map(|s| s.expect("one reply per worker")).collect())
    }

    fn reports(&self) -> Result<Vec<ShardReport>> {
        self.collect()?
            .into_iter()
            .enumerate()
            .map(|(g, r)| match r {
                Reply::Report(rep) => Ok(rep),
                _ => Err(Error::WorkerLost(g)),
            })
            .collect()
    }

    fn register(&self) -> Result<Vec<f64>> {
        self.collect()?
            .into_iter()
            .enumerate()
            .map(|(g, r)| match r {
                Reply::Registered(eta) => Ok(eta),
                _ => Err(Error::WorkerLost(g)),
            })
            .collect()
    }
}

impl ShardBackend for ThreadBackend {
    fn init(&mut self, beta0: &[f64], eta: f64) -> Result<Vec<ShardReport>> {
        let beta0 = Arc::new(beta0.to_vec());
        self.broadcast(|| Command::Init {
            beta0: Arc::clone(&beta0),
            eta,
        })?;
        self.reports()
    }

    fn step(&mut self, beta: Arc<Vec<f64>>) -> Result<Vec<ShardReport>> {
        self.broadcast(|| Command::Step(Arc::clone(&beta)))?;
        self.reports()
    }

    fn finish(self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.broadcast(|| Command::Stop)?;
        let mut r = Vec::new();
        let mut u = Vec::new();
        for (g, reply) in self.collect()?.into_iter().enumerate() {
            match reply {
                Reply::Final(rg, ug) => {
                    r.extend(rg);
                    u.extend(ug);
                }
                _ => return Err(Error::WorkerLost(g)),
            }
        }
        Ok((r, u))
    }
}

/// Worker loop: register `eta_g`, then answer commands until told to stop
/// or the coordinator hangs up.
fn worker(
    g: usize,
    mut shard: Shard<'_>,
    eta_opts: EtaOptions,
    commands: Receiver<Command>,
    replies: Sender<(usize, Result<Reply>)>,
) {
    let send = |reply: Result<Reply>| replies.send((g, reply)).is_ok();
    let registered = catch_unwind(AssertUnwindSafe(|| shard.register(&eta_opts)))
        .unwrap_or(Err(Error::WorkerLost(g)));
    if !send(registered.map(Reply::Registered)) {
        return;
    }
    while let Ok(cmd) = commands.recv() {
        let outcome = catch_unwind(AssertUnwindSafe(|| match cmd {
            Command::Init { beta0, eta } => Some(Reply::Report(shard.init(&beta0, eta))),
            Command::Step(beta) => Some(Reply::Report(shard.step(&beta))),
            Command::Stop => None,
        }));
        match outcome {
            Ok(Some(reply)) => {
                if !send(Ok(reply)) {
                    return;
                }
            }
            Ok(None) => {
                let (r, u) = shard.into_ru();
                send(Ok(Reply::Final(r, u)));
                return;
            }
            Err(_) => {
                send(Err(Error::WorkerLost(g)));
                return;
            }
        }
    }
}

/// Coordinator/worker linearized ADMM with one thread per shard.
///
/// Workers first report `eta_g`; the coordinator fixes `eta` from
/// `eta_mode` and sends it back with the initial `beta`. Every iteration the
/// coordinator soft-thresholds `beta - sum_g xi_g`, broadcasts the result,
/// and waits for all shards. With `EtaMode::Shared` and a common start the
/// iterates agree with [`super::solve`] up to the order of floating-point
/// sums; with one shard they agree exactly.
#[allow(clippy::too_many_arguments)]
pub fn solve_parallel(
    x: &DesignMatrix,
    s: &CountVector,
    lambda: f64,
    w: &AdaptiveWeights,
    config: &AdmmConfig,
    partition: &Partition,
    eta_mode: EtaMode,
    init: Option<&AdmmState>,
) -> Result<SolveOutput> {
    let zero;
    let init = match init {
        Some(state) => state,
        None => {
            zero = AdmmState::zeros(x.nrows(), x.ncols());
            &zero
        }
    };
    check_problem(x, s, lambda, w, config, init)?;
    if partition.rows() != x.nrows() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} rows, matrix has {}",
            partition.rows(),
            x.nrows()
        )));
    }
    if let EtaMode::Shared(eta) = eta_mode {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
    }

    let blocks: Vec<(DesignMatrix, CountVector)> = partition
        .ranges()
        .iter()
        .map(|&(a, b)| (x.slice_rows(a, b), s.slice(a, b)))
        .collect();
    let problem = Problem {
        n: x.nrows(),
        d: x.ncols(),
        lambda,
        w: w.weights(),
    };

    thread::scope(|scope| {
        let (reply_tx, reply_rx) = channel();
        let mut commands = Vec::with_capacity(blocks.len());
        for (g, ((xg, sg), &(a, b))) in blocks.iter().zip(partition.ranges()).enumerate() {
            let (tx, rx) = channel();
            commands.push(tx);
            let shard = Shard::new(
                xg,
                sg.counts(),
                sg.m(),
                init.r[a..b].to_vec(),
                init.u[a..b].to_vec(),
                config,
            );
            let replies = reply_tx.clone();
            let opts = config.eta_options;
            thread::Builder::new()
                .name(format!("admm-worker-{g}"))
                .spawn_scoped(scope, move || worker(g, shard, opts, rx, replies))
                .map_err(Error::Io)?;
        }
        drop(reply_tx);

        let backend = ThreadBackend {
            commands,
            replies: reply_rx,
        };
        let etas = backend.register()?;
        let eta = match eta_mode {
            EtaMode::Shared(eta) => eta,
            EtaMode::SumShards => etas.iter().fold(0.0, |acc, e| acc + e),
        };
        coordinate(backend, &problem, config, eta, init)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{serial_eta, solve, Record};

    fn problem(n: usize) -> (DesignMatrix, CountVector) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin(), (t * 0.11).cos(), ((t * 0.53).sin() * 2.0).tanh()]
            })
            .collect();
        let counts = (0..n).map(|i| ((i * 7) % 5) as u32).collect();
        (
            DesignMatrix::from_rows(&rows).unwrap(),
            CountVector::new(counts, 4).unwrap(),
        )
    }

    #[test]
    fn partition_examples() {
        let one = make_partition(10, &PartitionSpec::Balanced(1)).unwrap();
        assert_eq!(one.ranges(), &[(0, 10)]);
        let three = make_partition(10, &PartitionSpec::Balanced(3)).unwrap();
        assert_eq!(three.sizes(), vec![4, 3, 3]);
        let explicit = make_partition(10, &PartitionSpec::Sizes(vec![2, 8])).unwrap();
        assert_eq!(explicit.ranges(), &[(0, 2), (2, 10)]);
        assert!(make_partition(10, &PartitionSpec::Sizes(vec![2, 7])).is_err());
        assert!(make_partition(10, &PartitionSpec::Sizes(vec![0, 10])).is_err());
        assert!(make_partition(3, &PartitionSpec::Balanced(4)).is_err());
        assert!(make_partition(3, &PartitionSpec::Balanced(0)).is_err());
    }

    #[test]
    fn single_shard_is_bitwise_serial() {
        let (x, s) = problem(60);
        let w = AdaptiveWeights::uniform(3);
        let config = AdmmConfig {
            record: Record::Beta,
            ..AdmmConfig::default()
        };
        let serial = solve(&x, &s, 0.4, &w, &config, None).unwrap();
        let part = make_partition(60, &PartitionSpec::Balanced(1)).unwrap();
        let par = solve_parallel(&x, &s, 0.4, &w, &config, &part, EtaMode::SumShards, None).unwrap();
        assert_eq!(serial.eta, par.eta);
        assert_eq!(serial.trace, par.trace);
        assert_eq!(serial.coefficients, par.coefficients);
        assert_eq!(serial.state, par.state);
    }

    #[test]
    fn shared_eta_tracks_serial() {
        let (x, s) = problem(90);
        let w = AdaptiveWeights::uniform(3);
        let config = AdmmConfig {
            record: Record::Beta,
            ..AdmmConfig::default()
        };
        let serial = solve(&x, &s, 0.4, &w, &config, None).unwrap();
        let eta = serial_eta(&x, &config).unwrap();
        for g in [2, 3, 7] {
            let part = make_partition(90, &PartitionSpec::Balanced(g)).unwrap();
            let par = solve_parallel(&x, &s, 0.4, &w, &config, &part, EtaMode::Shared(eta), None).unwrap();
            assert_eq!(par.iterations, serial.iterations);
            for (a, b) in par.trace.iterates.iter().zip(&serial.trace.iterates) {
                for (p, q) in a.beta.iter().zip(&b.beta) {
                    assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()));
                }
            }
        }
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let (x, s) = problem(80);
        let w = AdaptiveWeights::uniform(3);
        let part = make_partition(80, &PartitionSpec::Balanced(4)).unwrap();
        let config = AdmmConfig::default();
        let a = solve_parallel(&x, &s, 0.3, &w, &config, &part, EtaMode::SumShards, None).unwrap();
        let b = solve_parallel(&x, &s, 0.3, &w, &config, &part, EtaMode::SumShards, None).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn sum_of_shard_bounds_dominates() {
        let (x, _) = problem(50);
        let part = make_partition(50, &PartitionSpec::Sizes(vec![10, 15, 25])).unwrap();
        let opts = EtaOptions::default();
        let etas = register_eta(&x, &part, 1.0, &opts).unwrap();
        let global = crate::linalg::estimate_eta(&x, 1.0, &opts).unwrap().value;
        assert!(etas.iter().sum::<f64>() >= global);
    }

    #[test]
    fn mismatched_partition_is_rejected() {
        let (x, s) = problem(20);
        let part = make_partition(19, &PartitionSpec::Balanced(2)).unwrap();
        let res = solve_parallel(
            &x,
            &s,
            0.1,
            &AdaptiveWeights::uniform(3),
            &AdmmConfig::default(),
            &part,
            EtaMode::SumShards,
            None,
        );
        assert!(matches!(res, Err(Error::InvalidPartition(_))));
    }
}
