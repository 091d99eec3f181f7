use std::fmt;
use std::time::Instant;

use commkit::{
    spawn_group, AssertionLevel, Communicator, Distribution, RankGroup, TransportConfig,
    TransportKind,
};
use commkit_algorithms::{
    bfs, bfs_reference, global_edges, sample_sort, DistGraph, GraphKind, GraphSpec, Strategy,
    DEFAULT_OVERSAMPLING,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Flags;

pub const CSV_HEADER: &str = "benchmark,p,transport,strategy,input_size,seed,wall_time_seconds,messages_per_rank_max,bytes_total,checksum";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bench {
    AllgatherDemo,
    Sort,
    Bfs,
}

impl fmt::Display for Bench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bench::AllgatherDemo => "allgather-demo",
            Bench::Sort => "sort",
            Bench::Bfs => "bfs",
        })
    }
}

#[derive(Debug)]
pub enum BenchError {
    Usage(String),
    Verification(String),
    Runtime(commkit::Error),
}

impl BenchError {
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Usage(_) => 2,
            BenchError::Verification(_) | BenchError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::Usage(m) => write!(f, "invalid arguments: {m}"),
            BenchError::Verification(m) => write!(f, "verification failed: {m}"),
            BenchError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<commkit::Error> for BenchError {
    fn from(e: commkit::Error) -> Self {
        BenchError::Runtime(e)
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub benchmark: Bench,
    pub p: usize,
    pub transport: TransportKind,
    pub strategy: Option<Strategy>,
    pub input_size: usize,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub messages_per_rank_max: u64,
    pub bytes_total: u64,
    pub checksum: u64,
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let strategy = self.strategy.map_or("-".to_string(), |s| s.to_string());
        write!(
            f,
            "{},{},{},{},{},{},{:.6},{},{},{:016x}",
            self.benchmark,
            self.p,
            self.transport,
            strategy,
            self.input_size,
            self.seed,
            self.wall_time_seconds,
            self.messages_per_rank_max,
            self.bytes_total,
            self.checksum
        )
    }
}

/// 64-bit FNV-1a over the little-endian bytes of `values`.
pub fn checksum(values: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Everything a rank needs besides its communicator.
struct Workload {
    bench: Bench,
    n: usize,
    seed: u64,
    strategy: Strategy,
    graph: Option<(GraphSpec, Vec<(u64, u64)>)>,
}

impl Workload {
    fn new(bench: Bench, flags: &Flags) -> Result<Self, BenchError> {
        let graph = if bench == Bench::Bfs {
            let kind: GraphKind = flags.graph.into();
            let m = flags.m.unwrap_or(4 * flags.n);
            let spec = GraphSpec::of_kind(kind, flags.n, m);
            let edges =
                global_edges(spec, flags.seed).map_err(|e| BenchError::Usage(e.to_string()))?;
            if spec.vertices() == 0 {
                return Err(BenchError::Usage("bfs needs at least one vertex".into()));
            }
            Some((spec, edges))
        } else {
            None
        };
        Ok(Workload {
            bench,
            n: flags.n,
            seed: flags.seed,
            strategy: flags.strategy.into(),
            graph,
        })
    }

    fn keys(&self, rank: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rank as u64);
        (0..self.n).map(|_| rng.gen()).collect()
    }

    /// Runs the timed region on one rank; returns seconds and the output.
    fn execute(&self, comm: &Communicator) -> commkit::Result<(f64, Vec<u64>)> {
        let (rank, p) = comm.rank_and_size();
        match self.bench {
            Bench::AllgatherDemo => {
                let data = self.keys(rank);
                let start = Instant::now();
                let out = comm.allgatherv().send_buf(&data).call()?.into_recv_buf();
                Ok((start.elapsed().as_secs_f64(), out))
            }
            Bench::Sort => {
                let data = self.keys(rank);
                let start = Instant::now();
                let out = sample_sort(comm, data, DEFAULT_OVERSAMPLING, self.seed)?;
                Ok((start.elapsed().as_secs_f64(), out))
            }
            Bench::Bfs => {
                let (spec, edges) = self.graph.as_ref().expect("bfs workload has a graph");
                let dist = Distribution::even(spec.vertices(), p)?;
                let graph = DistGraph::from_edges(dist, rank, edges)?;
                let start = Instant::now();
                let out = bfs(comm, &graph, 0, self.strategy)?;
                Ok((start.elapsed().as_secs_f64(), out))
            }
        }
    }

    /// The output whose checksum is reported.
    fn result(&self, outputs: Vec<Vec<u64>>) -> Vec<u64> {
        match self.bench {
            Bench::AllgatherDemo => outputs.into_iter().next().unwrap_or_default(),
            Bench::Sort | Bench::Bfs => outputs.concat(),
        }
    }

    fn verify(&self, p: usize, outputs: &[Vec<u64>]) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Verification(m.to_string()));
        match self.bench {
            Bench::AllgatherDemo => {
                let expected: Vec<u64> = (0..p).flat_map(|r| self.keys(r)).collect();
                if outputs.iter().any(|o| o != &expected) {
                    return fail("allgatherv result differs from the concatenated inputs");
                }
            }
            Bench::Sort => {
                let mut expected: Vec<u64> = (0..p).flat_map(|r| self.keys(r)).collect();
                expected.sort_unstable();
                if outputs.concat() != expected {
                    return fail("sorted output differs from the sequential sort");
                }
            }
            Bench::Bfs => {
                let (spec, edges) = self.graph.as_ref().expect("bfs workload has a graph");
                if outputs.concat() != bfs_reference(spec.vertices(), edges, 0) {
                    return fail("distances differ from the sequential search");
                }
            }
        }
        Ok(())
    }

    fn input_size(&self, p: usize) -> usize {
        match self.bench {
            Bench::AllgatherDemo | Bench::Sort => self.n * p,
            Bench::Bfs => self.n,
        }
    }
}

fn execute_all(
    group: &RankGroup,
    work: &Workload,
    level: AssertionLevel,
) -> commkit::Result<(f64, Vec<Vec<u64>>)> {
    let results = group.run(|comm| work.execute(&comm.with_assertion_level(level)));
    let mut time = 0f64;
    let mut outputs = Vec::with_capacity(results.len());
    for r in results {
        let (t, out) = r?;
        time = time.max(t);
        outputs.push(out);
    }
    Ok((time, outputs))
}

/// Runs `flags.reps` repetitions of `bench`, verifying first if requested.
pub fn run(bench: Bench, flags: &Flags) -> Result<Vec<Record>, BenchError> {
    let p = flags.ranks as usize;
    let transport: TransportKind = flags.transport.into();
    let mut config = TransportConfig::of_kind(transport);
    if let Some(base) = flags.port_base {
        if base as usize + p > u16::MAX as usize + 1 {
            return Err(BenchError::Usage(format!(
                "port base {base} leaves no room for {p} ranks"
            )));
        }
        config = config.with_port_base(base);
    }
    let level: AssertionLevel = flags.assert_level.into();
    let work = Workload::new(bench, flags)?;
    let group = spawn_group(p, &config)?;

    if flags.verify {
        let (_, outputs) = execute_all(&group, &work, level)?;
        work.verify(p, &outputs)?;
    }
    let mut records = Vec::with_capacity(flags.reps as usize);
    for _ in 0..flags.reps {
        group.reset_stats();
        let (time, outputs) = execute_all(&group, &work, level)?;
        let stats = group.stats();
        records.push(Record {
            benchmark: bench,
            p,
            transport,
            strategy: (bench == Bench::Bfs).then_some(work.strategy),
            input_size: work.input_size(p),
            seed: flags.seed,
            wall_time_seconds: time,
            messages_per_rank_max: stats
                .iter()
                .map(|s| s.messages_sent + s.protocol_messages_sent)
                .max()
                .unwrap_or(0),
            bytes_total: stats.iter().map(|s| s.bytes_sent).sum(),
            checksum: checksum(&work.result(outputs)),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(checksum(&[]), 0xcbf2_9ce4_8422_2325);
        assert_ne!(checksum(&[1, 2]), checksum(&[2, 1]));
    }

    fn flags(n: usize) -> Flags {
        use clap::Parser;
        #[derive(clap::Parser)]
        struct Wrap {
            #[command(flatten)]
            flags: Flags,
        }
        let mut f = Wrap::parse_from(["x"]).flags;
        f.n = n;
        f
    }

    #[test]
    fn corrupted_outputs_fail_verification() {
        for bench in [Bench::AllgatherDemo, Bench::Sort, Bench::Bfs] {
            let work = Workload::new(bench, &flags(16)).unwrap();
            let group = spawn_group(2, &TransportConfig::inproc()).unwrap();
            let (_, mut outputs) = execute_all(&group, &work, AssertionLevel::Light).unwrap();
            work.verify(2, &outputs).unwrap();
            outputs[1][0] ^= 1;
            let err = work.verify(2, &outputs).unwrap_err();
            assert!(matches!(err, BenchError::Verification(_)), "{bench}");
            assert_eq!(err.exit_code(), 1);
        }
    }

    #[test]
    fn record_formats_as_csv() {
        let r = Record {
            benchmark: Bench::Bfs,
            p: 4,
            transport: TransportKind::Tcp,
            strategy: Some(Strategy::Grid),
            input_size: 10,
            seed: 3,
            wall_time_seconds: 0.5,
            messages_per_rank_max: 7,
            bytes_total: 99,
            checksum: 255,
        };
        assert_eq!(
            r.to_string(),
            "bfs,4,tcp,grid,10,3,0.500000,7,99,00000000000000ff"
        );
        assert_eq!(
            CSV_HEADER.split(',').count(),
            r.to_string().split(',').count()
        );
    }
}
