//! Monte-Carlo experiments over a corpus of synthetic maps.
//!
//! A config file uses the same line format as map files:
//!
//! ```text
//! # corpus
//! vertices 3 10
//! edges full
//! trials 1000
//! eps_v 0.5 1
//! eps_e 0.5 1
//! dp_vertices on
//! dp_edges on
//! splitting off
//! seed 7
//! revisits 0
//! timing off
//! ```
//!
//! Every key is optional. `edges` is `full` (every legal count for each
//! vertex count) or an explicit list. Wall-clock timing is off by default so
//! that output files are reproducible byte for byte; `mean_steps` is always
//! written as a machine-independent cost measure.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::dp::PrivacyBudget;
use crate::graph::{generate_map_seeded, MapSpec};
use crate::publish::{check_rules, publish, PublishConfig};
use crate::recover::{reconstruct_path, score_good_output};
use crate::rng::{derive_seed, seeded};

pub const CSV_VERSION: u32 = 1;

pub const CSV_COLUMNS: &str = "vertices,edges,eps_v,eps_e,mode,trials,usable_fraction,good_output_fraction,\
overall_good_fraction,mean_steps,mean_runtime_us,median_runtime_us,rule_failures,recovery_failures,depth_failures";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgePolicy {
    /// Every count in `[|V| - 1, |V|(|V| - 1)/2]`.
    Full,
    /// These counts, where legal for the vertex count.
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub vertices: (usize, usize),
    pub edges: EdgePolicy,
    pub trials: u32,
    pub eps_v: Vec<f64>,
    pub eps_e: Vec<f64>,
    pub dp_vertices: bool,
    pub dp_edges: bool,
    pub splitting: bool,
    pub seed: u64,
    pub revisits: usize,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            vertices: (3, 10),
            edges: EdgePolicy::Full,
            trials: 1000,
            eps_v: vec![0.5, 1.0],
            eps_e: vec![0.5, 1.0],
            dp_vertices: true,
            dp_edges: true,
            splitting: true,
            seed: 0,
            revisits: 0,
            timing: false,
        }
    }
}

/// One corpus cell: a map size and one point of the budget grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub vertices: usize,
    pub edges: usize,
    pub eps_v: Option<f64>,
    pub eps_e: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| ConfigError::Parse { line, msg };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut fields = raw.split_whitespace();
            let key = fields.next().unwrap_or_default();
            let vals: Vec<&str> = fields.collect();
            let one = || match vals.as_slice() {
                [v] => Ok(*v),
                _ => Err(err(format!("`{key}` takes one value"))),
            };
            let num = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad number `{s}`")));
            let flag = |s: &str| match s {
                "on" | "true" | "yes" => Ok(true),
                "off" | "false" | "no" => Ok(false),
                _ => Err(err(format!("bad flag `{s}`"))),
            };
            let reals = || -> Result<Vec<f64>, ConfigError> {
                vals.iter()
                    .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`"))))
                    .collect()
            };
            match key {
                "vertices" => match vals.as_slice() {
                    [a] => cfg.vertices = (num(a)? as usize, num(a)? as usize),
                    [a, b] => cfg.vertices = (num(a)? as usize, num(b)? as usize),
                    _ => return Err(err("`vertices` takes one or two values".into())),
                },
                "edges" => {
                    cfg.edges = match vals.as_slice() {
                        ["full"] => EdgePolicy::Full,
                        [] => return Err(err("`edges` needs `full` or a list".into())),
                        list => EdgePolicy::List(list.iter().map(|s| num(s).map(|x| x as usize)).collect::<Result<_, _>>()?),
                    }
                }
                "trials" => cfg.trials = u32::try_from(num(one()?)?).map_err(|_| err("too many trials".into()))?,
                "eps_v" => cfg.eps_v = reals()?,
                "eps_e" => cfg.eps_e = reals()?,
                "dp_vertices" => cfg.dp_vertices = flag(one()?)?,
                "dp_edges" => cfg.dp_edges = flag(one()?)?,
                "splitting" => cfg.splitting = flag(one()?)?,
                "seed" => cfg.seed = num(one()?)?,
                "revisits" => cfg.revisits = num(one()?)? as usize,
                "timing" => cfg.timing = flag(one()?)?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.vertices.0 < 2 || self.vertices.0 > self.vertices.1 {
            return bad("vertex range must satisfy 2 <= min <= max");
        }
        for (name, grid) in [("eps_v", &self.eps_v), ("eps_e", &self.eps_e)] {
            if grid.is_empty() {
                return Err(ConfigError::Invalid(format!("{name} grid is empty")));
            }
            if let Some(x) = grid.iter().find(|&&x| PrivacyBudget::new(x).is_err()) {
                return Err(ConfigError::Invalid(format!("{name} value {x} is not a positive budget")));
            }
        }
        if let EdgePolicy::List(l) = &self.edges {
            if l.is_empty() {
                return bad("edge list is empty");
            }
        }
        if self.cells().is_empty() {
            return bad("no legal (vertices, edges) combination");
        }
        Ok(())
    }

    /// Short label for the enabled steps, e.g. `dpv+dpe+split`.
    pub fn mode(&self) -> String {
        let parts: Vec<&str> = [
            (self.dp_vertices, "dpv"),
            (self.dp_edges, "dpe"),
            (self.splitting, "split"),
        ]
        .iter()
        .filter(|p| p.0)
        .map(|p| p.1)
        .collect();
        if parts.is_empty() {
            "plain".into()
        } else {
            parts.join("+")
        }
    }

    /// Map sizes of the corpus.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in self.vertices.0..=self.vertices.1 {
            let (lo, hi) = MapSpec::edge_bounds(n);
            match &self.edges {
                EdgePolicy::Full => out.extend((lo..=hi).map(|m| (n, m))),
                EdgePolicy::List(l) => out.extend(l.iter().filter(|&&m| m >= lo && m <= hi).map(|&m| (n, m))),
            }
        }
        out
    }

    pub fn cells(&self) -> Vec<Cell> {
        let grid = |on: bool, g: &[f64]| if on { g.iter().map(|&x| Some(x)).collect() } else { vec![None] };
        let (ev, ee) = (grid(self.dp_vertices, &self.eps_v), grid(self.dp_edges, &self.eps_e));
        let mut out = Vec::new();
        for (n, m) in self.sizes() {
            for &eps_v in &ev {
                for &eps_e in &ee {
                    out.push(Cell {
                        vertices: n,
                        edges: m,
                        eps_v,
                        eps_e,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub vertices: usize,
    pub edges: usize,
    pub eps_v: Option<f64>,
    pub eps_e: Option<f64>,
    pub mode: String,
    pub trials: u32,
    pub usable_fraction: f64,
    /// Mean score over usable trials (0 when none is usable).
    pub good_output_fraction: f64,
    pub overall_good_fraction: f64,
    pub mean_steps: f64,
    /// Microseconds spent in `publish`, when timing is on.
    pub mean_runtime: Option<f64>,
    pub median_runtime: Option<f64>,
    /// Usable trials whose graph broke a construction rule.
    pub rule_failures: u32,
    /// Usable trials whose recovered steps differ from the true path.
    pub recovery_failures: u32,
    /// Trials built without splitting with more than `ceil(|V_G|/2)` layers.
    pub depth_failures: u32,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        let opt = |x: Option<f64>, prec: usize| x.map_or_else(|| "none".to_string(), |v| format!("{v:.prec$}"));
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.3},{},{},{},{},{}",
            self.vertices,
            self.edges,
            opt(self.eps_v, 3),
            opt(self.eps_e, 3),
            self.mode,
            self.trials,
            self.usable_fraction,
            self.good_output_fraction,
            self.overall_good_fraction,
            self.mean_steps,
            opt(self.mean_runtime, 1),
            opt(self.median_runtime, 1),
            self.rule_failures,
            self.recovery_failures,
            self.depth_failures,
        )
    }
}

fn budget(x: Option<f64>) -> Option<PrivacyBudget> {
    x.map(|e| PrivacyBudget::new(e).expect("checked by config"))
}

fn bits(x: Option<f64>) -> u64 {
    x.map_or(u64::MAX, f64::to_bits)
}

/// Runs every trial of one cell. Maps depend only on the size and trial
/// number, so cells that differ only in budget see the same maps.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> ResultRow {
    let spec = MapSpec {
        vertices: cell.vertices,
        edges: cell.edges,
        revisits: cfg.revisits,
    };
    let pc = PublishConfig {
        eps_v: budget(cell.eps_v),
        eps_e: budget(cell.eps_e),
        splitting: cfg.splitting,
    };
    let (n, m) = (cell.vertices as u64, cell.edges as u64);
    let mut usable = 0u32;
    let mut score = 0.0;
    let mut steps = 0u64;
    let mut times = Vec::new();
    let (mut rule_failures, mut recovery_failures, mut depth_failures) = (0, 0, 0);
    for t in 0..cfg.trials as u64 {
        let map = generate_map_seeded(spec, derive_seed(cfg.seed, &[n, m, t])).expect("legal size");
        let mut rng = seeded(derive_seed(cfg.seed, &[n, m, t, bits(cell.eps_v), bits(cell.eps_e)]));
        let start = Instant::now();
        let out = publish(&map.network, &map.path, pc, &mut rng);
        let elapsed = start.elapsed();
        if cfg.timing {
            times.push(elapsed.as_secs_f64() * 1e6);
        }
        let Ok(out) = out else { continue };
        usable += 1;
        steps += out.stats.transitions;
        if !check_rules(&out.graph, &out.processed, &out.matrix).is_empty() {
            rule_failures += 1;
        }
        let rec = reconstruct_path(&out.graph, &map.network);
        if rec.edge_set != map.path.base_edges() {
            recovery_failures += 1;
        }
        if !out.stats.used_splitting() && out.graph.layer_count() > out.graph.vertices().len().div_ceil(2) {
            depth_failures += 1;
        }
        score += score_good_output(&rec, &map.path);
    }
    let usable_fraction = usable as f64 / cfg.trials as f64;
    let good_output_fraction = if usable == 0 { 0.0 } else { score / usable as f64 };
    let (mean_runtime, median_runtime) = if times.is_empty() {
        (None, None)
    } else {
        times.sort_by(f64::total_cmp);
        let k = times.len();
        let median = if k % 2 == 1 {
            times[k / 2]
        } else {
            (times[k / 2 - 1] + times[k / 2]) / 2.0
        };
        (Some(times.iter().sum::<f64>() / k as f64), Some(median))
    };
    ResultRow {
        vertices: cell.vertices,
        edges: cell.edges,
        eps_v: cell.eps_v,
        eps_e: cell.eps_e,
        mode: cfg.mode(),
        trials: cfg.trials,
        usable_fraction,
        good_output_fraction,
        overall_good_fraction: usable_fraction * good_output_fraction,
        mean_steps: if usable == 0 { 0.0 } else { steps as f64 / usable as f64 },
        mean_runtime,
        median_runtime,
        rule_failures,
        recovery_failures,
        depth_failures,
    }
}

/// Runs all cells (in parallel) and returns the rows in cell order.
pub fn run_rows(cfg: &ExperimentConfig) -> Vec<ResultRow> {
    let cells = cfg.cells();
    let mut rows: Vec<ResultRow> = cells.par_iter().map(|&c| run_cell(cfg, c)).collect();
    rows.sort_by(|a, b| {
        (a.vertices, a.edges)
            .cmp(&(b.vertices, b.edges))
            .then(a.eps_v.partial_cmp(&b.eps_v).unwrap())
            .then(a.eps_e.partial_cmp(&b.eps_e).unwrap())
    });
    rows
}

/// Runs the experiment and renders it as CSV with a versioned header
/// comment.
pub fn run_experiment(cfg: &ExperimentConfig) -> String {
    to_csv(cfg, &run_rows(cfg))
}

pub fn to_csv(cfg: &ExperimentConfig, rows: &[ResultRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# gbpath results v{CSV_VERSION} sizes={} cells={} trials={} seed={} mode={} revisits={}",
        cfg.sizes().len(),
        rows.len(),
        cfg.trials,
        cfg.seed,
        cfg.mode(),
        cfg.revisits
    )
    .unwrap();
    writeln!(out, "{CSV_COLUMNS}").unwrap();
    for r in rows {
        writeln!(out, "{}", r.csv_line()).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_has_128_sizes() {
        assert_eq!(ExperimentConfig::default().sizes().len(), 128);
    }

    #[test]
    fn parse_and_reject() {
        let cfg = ExperimentConfig::parse("vertices 4\nedges 3 5 9\ntrials 2\neps_v 1\ndp_edges off\n").unwrap();
        assert_eq!(cfg.sizes(), vec![(4, 3), (4, 5)]);
        assert_eq!(cfg.cells().len(), 2);
        assert_eq!(cfg.mode(), "dpv+split");
        assert!(matches!(ExperimentConfig::parse("eps_e\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("trials 0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("colour red\n"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("vertices 5 3\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn single_trial_cell() {
        let cfg = ExperimentConfig {
            trials: 1,
            ..Default::default()
        };
        let row = run_cell(&cfg, cfg.cells()[0]);
        assert!([0.0, 0.5, 1.0].contains(&row.good_output_fraction));
        assert_eq!(row.usable_fraction, 1.0);
        assert_eq!(row.mean_runtime, None);
    }

    #[test]
    fn csv_is_reproducible() {
        let cfg = ExperimentConfig::parse("vertices 3 5\ntrials 3\nsplitting off\neps_v 1\neps_e 1\n").unwrap();
        let a = run_experiment(&cfg);
        assert_eq!(a, run_experiment(&cfg));
        assert!(a.starts_with("# gbpath results v1 sizes=13 cells=13"));
        assert_eq!(a.lines().count(), 15);
    }
}
