//! Text formats: sampled graph files and trajectory CSVs.
//!
//! A graph file is
//!
//! ```text
//! graphdyn-graph v1
//! n=<int> rho=<17 significant digits> seed=<u64> variant=<pointwise|cell_averaged>
//! i j
//! ...
//! ```
//!
//! with 1-based edges `i <= j` in strictly increasing lexicographic order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{gn_norm, step_l2_norm, sup_norm};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::graphon::GraphonSpec;
use crate::sampler::{node_weights, EdgeVariant, SampledGraph};

pub const GRAPH_MAGIC: &str = "graphdyn-graph v1";

/// Largest n for which a trajectory is written with every node as a column.
pub const FULL_CSV_MAX_N: usize = 1024;

/// Number of nodes kept in the down-sampled state CSV.
pub const PROBE_NODES: usize = 16;

/// Positional decimal with 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn write_graph<W: Write>(graph: &SampledGraph, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{GRAPH_MAGIC}")?;
    writeln!(
        w,
        "n={} rho={} seed={} variant={}",
        graph.n,
        format_sig17(graph.rho),
        graph.seed,
        graph.variant
    )?;
    for (i, j) in graph.edges() {
        writeln!(w, "{} {}", i + 1, j + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_graph(graph: &SampledGraph, path: impl AsRef<Path>) -> Result<()> {
    write_graph(graph, File::create(path)?)
}

/// Header and edge list of a graph file, edges 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFile {
    pub n: usize,
    pub rho: f64,
    pub seed: u64,
    pub variant: EdgeVariant,
    pub edges: Vec<(usize, usize)>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn header_field<'a>(line: usize, token: Option<&'a str>, key: &str) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(key)?.strip_prefix('='))
        .ok_or_else(|| parse_err(line, format!("expected {key}=<value>")))
}

pub fn read_graph_file<R: BufRead>(r: R) -> Result<GraphFile> {
    let mut lines = r.lines();
    match lines.next().transpose()? {
        Some(l) if l == GRAPH_MAGIC => {}
        _ => return Err(parse_err(1, format!("expected header {GRAPH_MAGIC:?}"))),
    }
    let meta = lines.next().transpose()?.ok_or_else(|| parse_err(2, "missing metadata line"))?;
    let mut tokens = meta.split(' ');
    let n: usize = header_field(2, tokens.next(), "n")?
        .parse()
        .map_err(|_| parse_err(2, "bad node count"))?;
    let rho: f64 = header_field(2, tokens.next(), "rho")?
        .parse()
        .map_err(|_| parse_err(2, "bad rho"))?;
    let seed: u64 = header_field(2, tokens.next(), "seed")?
        .parse()
        .map_err(|_| parse_err(2, "bad seed"))?;
    let variant: EdgeVariant = header_field(2, tokens.next(), "variant")?
        .parse()
        .map_err(|_| parse_err(2, "bad variant"))?;
    if tokens.next().is_some() {
        return Err(parse_err(2, "trailing fields"));
    }
    if n < 2 || !(rho > 0.0 && rho <= 1.0) {
        return Err(parse_err(2, format!("need n >= 2 and rho in (0,1], got n={n} rho={rho}")));
    }

    let mut edges = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for (k, l) in lines.enumerate() {
        let line = k + 3;
        let l = l?;
        let mut it = l.split(' ');
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(line, "expected `i j`"));
        };
        let i: usize = a.parse().map_err(|_| parse_err(line, "bad node index"))?;
        let j: usize = b.parse().map_err(|_| parse_err(line, "bad node index"))?;
        if i == 0 || j > n {
            return Err(parse_err(line, format!("edge ({i}, {j}) out of range 1..={n}")));
        }
        if i > j {
            return Err(parse_err(line, format!("edge ({i}, {j}) not in canonical order i <= j")));
        }
        let e = (i - 1, j - 1);
        if last.is_some_and(|p| p >= e) {
            return Err(parse_err(line, "edges not strictly increasing"));
        }
        last = Some(e);
        edges.push(e);
    }
    Ok(GraphFile { n, rho, seed, variant, edges })
}

/// Reads a graph and recomputes its node weights from `spec` at the stored density.
pub fn read_graph<R: BufRead>(r: R, spec: &GraphonSpec) -> Result<SampledGraph> {
    spec.validate()?;
    let file = read_graph_file(r)?;
    let weights = node_weights(spec, file.rho, file.n, file.variant);
    let graph = SampledGraph::from_edges(file.n, file.rho, file.seed, file.variant, &file.edges, weights)?;
    graph.check_symmetry()?;
    Ok(graph)
}

pub fn load_graph(path: impl AsRef<Path>, spec: &GraphonSpec) -> Result<SampledGraph> {
    read_graph(BufReader::new(File::open(path)?), spec)
}

fn join_row(t: f64, values: impl Iterator<Item = f64>) -> String {
    let mut s = format!("{t}");
    for v in values {
        s.push(',');
        s.push_str(&format!("{v}"));
    }
    s
}

/// Nodes kept in the down-sampled state CSV: centres of 16 equal blocks.
pub fn probe_nodes(n: usize) -> Vec<usize> {
    let k = PROBE_NODES.min(n);
    (0..k).map(|b| ((2 * b + 1) * n) / (2 * k)).collect()
}

/// `t,u_1,…,u_n`, one snapshot per line.
pub fn write_full_csv<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let header: Vec<String> = (1..=traj.n).map(|i| format!("u_{i}")).collect();
    writeln!(w, "t,{}", header.join(","))?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        writeln!(w, "{}", join_row(*t, s.iter().copied()))?;
    }
    w.flush()?;
    Ok(())
}

/// `t,mean,l2,linf,gn_norm`.
pub fn write_observables_csv<W: Write>(traj: &Trajectory, weights: &[f64], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "t,mean,l2,linf,gn_norm")?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let row = [mean, step_l2_norm(s), sup_norm(s), gn_norm(s, weights)?];
        writeln!(w, "{}", join_row(*t, row.into_iter()))?;
    }
    w.flush()?;
    Ok(())
}

/// `t,u_<i>,…` at the probe nodes.
pub fn write_probe_csv<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let nodes = probe_nodes(traj.n);
    let header: Vec<String> = nodes.iter().map(|i| format!("u_{}", i + 1)).collect();
    writeln!(w, "t,{}", header.join(","))?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        writeln!(w, "{}", join_row(*t, nodes.iter().map(|&i| s[i])))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trajectory.csv` for small n, otherwise `observables.csv` and
/// `states_16.csv`. Returns the written paths.
pub fn write_trajectory(traj: &Trajectory, weights: &[f64], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    if traj.n <= FULL_CSV_MAX_N {
        let p = dir.join("trajectory.csv");
        write_full_csv(traj, File::create(&p)?)?;
        Ok(vec![p])
    } else {
        let obs = dir.join("observables.csv");
        write_observables_csv(traj, weights, File::create(&obs)?)?;
        let probes = dir.join("states_16.csv");
        write_probe_csv(traj, File::create(&probes)?)?;
        Ok(vec![obs, probes])
    }
}
