//! `commkit-bench`: runs sample sort, BFS or an allgather demo on a rank
//! group and prints one CSV row per repetition.

mod run;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commkit::{AssertionLevel, TransportKind};
use commkit_algorithms::{GraphKind, Strategy};

#[derive(Parser, Debug)]
#[command(name = "commkit-bench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Allgatherv of `n` elements per rank.
    AllgatherDemo(Flags),
    /// Sample sort of `n` random 64-bit keys per rank.
    Sort(Flags),
    /// Breadth-first search from vertex 0 on an `n`-vertex graph.
    Bfs(Flags),
}

#[derive(Args, Debug, Clone)]
pub struct Flags {
    /// Number of ranks.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub ranks: u32,
    #[arg(long, value_enum, default_value_t = TransportArg::Inproc)]
    pub transport: TransportArg,
    /// First TCP port; rank r listens on port-base + r. Ephemeral ports when
    /// omitted.
    #[arg(long)]
    pub port_base: Option<u16>,
    /// Elements per rank (sort, allgather-demo) or vertices (bfs).
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Edges of a gnm graph; defaults to 4n.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum, default_value_t = GraphArg::Gnm)]
    pub graph: GraphArg,
    /// Exchange strategy of bfs.
    #[arg(long, value_enum, default_value_t = StrategyArg::Direct)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,
    /// Check the result against a sequential reference before timing.
    #[arg(long)]
    pub verify: bool,
    #[arg(long = "assert", value_enum, env = "ASSERT_LEVEL", default_value_t = AssertArg::Light)]
    pub assert_level: AssertArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum TransportArg {
    Inproc,
    Tcp,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum GraphArg {
    Ring,
    Grid2d,
    Gnm,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum StrategyArg {
    Direct,
    Sparse,
    Grid,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum AssertArg {
    None,
    Light,
    Heavy,
}

impl From<TransportArg> for TransportKind {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::Inproc => TransportKind::InProc,
            TransportArg::Tcp => TransportKind::Tcp,
        }
    }
}

impl From<GraphArg> for GraphKind {
    fn from(g: GraphArg) -> Self {
        match g {
            GraphArg::Ring => GraphKind::Ring,
            GraphArg::Grid2d => GraphKind::Grid2d,
            GraphArg::Gnm => GraphKind::Gnm,
        }
    }
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Direct => Strategy::Direct,
            StrategyArg::Sparse => Strategy::Sparse,
            StrategyArg::Grid => Strategy::Grid,
        }
    }
}

impl From<AssertArg> for AssertionLevel {
    fn from(a: AssertArg) -> Self {
        match a {
            AssertArg::None => AssertionLevel::None,
            AssertArg::Light => AssertionLevel::Light,
            AssertArg::Heavy => AssertionLevel::Heavy,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (bench, flags) = match cli.command {
        Command::AllgatherDemo(f) => (run::Bench::AllgatherDemo, f),
        Command::Sort(f) => (run::Bench::Sort, f),
        Command::Bfs(f) => (run::Bench::Bfs, f),
    };
    match run::run(bench, &flags) {
        Ok(records) => {
            println!("{}", run::CSV_HEADER);
            for r in records {
                println!("{r}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("commkit-bench: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
