use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gbpath::dp::PrivacyBudget;
use gbpath::graph::{generate_map, read_map, validate, write_map, MapFile, MapSpec};
use gbpath::harness::{run_experiment, ExperimentConfig};
use gbpath::publish::{publish, read_published, write_published, LayeredGraph, PublishConfig, PublishError};
use gbpath::recover::{adversary_infer, reconstruct_path, AdversaryView};
use gbpath::rng::seeded;

/// Publish a path through a network as a differentially private layered graph.
#[derive(Parser)]
#[command(name = "gbpath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random map whose path visits every vertex.
    GenerateMap {
        #[arg(long)]
        vertices: usize,
        #[arg(long)]
        edges: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Revisits to splice into the path.
        #[arg(long, default_value_t = 0)]
        cyclic: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Publish the map's path as a layered graph.
    Publish {
        #[arg(long)]
        map: PathBuf,
        /// Vertex budget, or `none` to skip duplicate injection.
        #[arg(long, value_parser = parse_eps)]
        eps_v: Eps,
        /// Edge budget, or `none` to keep every non-edge off shared branches.
        #[arg(long, value_parser = parse_eps)]
        eps_e: Eps,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail instead of splitting vertices when no layering exists.
        #[arg(long)]
        no_split: bool,
        /// Also write the randomized relation matrix to `<output>.matrix`.
        #[arg(long)]
        dump_matrix: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Recover the path steps and direction from a published graph.
    Reconstruct {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        published: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// List the edges an adversary missing `U-V` cannot rule out.
    Attack {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        published: PathBuf,
        #[arg(long, value_parser = parse_edge)]
        withhold: (usize, usize),
    },
    /// Run a corpus experiment and write CSV results.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy)]
struct Eps(Option<PrivacyBudget>);

fn parse_eps(s: &str) -> Result<Eps, String> {
    if s == "none" {
        return Ok(Eps(None));
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    PrivacyBudget::new(x).map(|b| Eps(Some(b))).map_err(|e| e.to_string())
}

fn parse_edge(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').ok_or("expected U-V")?;
    let num = |t: &str| t.parse::<usize>().map_err(|_| format!("`{t}` is not a vertex"));
    Ok((num(a)?, num(b)?))
}

enum Failure {
    Validation(String),
    Io(String),
    Construction(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Construction(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) | Failure::Construction(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_map(path: &Path) -> Result<MapFile, Failure> {
    let map = read_map(&read(path)?).map_err(invalid)?;
    let problems = validate(&map.network, &map.path);
    if let Some(p) = problems.first() {
        return Err(Failure::Validation(format!("{}: {p}", path.display())));
    }
    Ok(map)
}

fn load_published(path: &Path, map: &MapFile) -> Result<LayeredGraph, Failure> {
    let g = read_published(&read(path)?).map_err(invalid)?;
    let n = map.network.vertex_count();
    if let Some(v) = g.vertices().iter().find(|v| v.base as usize >= n) {
        return Err(Failure::Validation(format!("published vertex {v} is not in the map")));
    }
    Ok(g)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenerateMap {
            vertices,
            edges,
            seed,
            cyclic,
            output,
        } => {
            let spec = MapSpec {
                vertices,
                edges,
                revisits: cyclic,
            };
            let m = generate_map(spec, &mut seeded(seed)).map_err(invalid)?;
            write(&output, &write_map(&m.network, &m.path))
        }
        Command::Publish {
            map,
            eps_v,
            eps_e,
            seed,
            no_split,
            dump_matrix,
            output,
        } => {
            let m = load_map(&map)?;
            let cfg = PublishConfig {
                eps_v: eps_v.0,
                eps_e: eps_e.0,
                splitting: !no_split,
            };
            let out = publish(&m.network, &m.path, cfg, &mut seeded(seed)).map_err(|e| match e {
                PublishError::ConstructionFailed => Failure::Construction(e.to_string()),
                other => invalid(other),
            })?;
            write(&output, &write_published(&out.graph))?;
            if dump_matrix {
                let mut text = String::from("# vertices");
                for v in out.processed.vertices() {
                    write!(text, " {v}").unwrap();
                }
                text.push('\n');
                text.push_str(&out.matrix.to_string());
                let mut path = output.into_os_string();
                path.push(".matrix");
                write(Path::new(&path), &text)?;
            }
            Ok(())
        }
        Command::Reconstruct { map, published, output } => {
            let m = load_map(&map)?;
            let g = load_published(&published, &m)?;
            write(&output, &reconstruct_path(&g, &m.network).report())
        }
        Command::Attack {
            map,
            published,
            withhold,
        } => {
            let m = load_map(&map)?;
            let g = load_published(&published, &m)?;
            let view = AdversaryView::withholding(&m.network, &m.path, g, withhold).map_err(invalid)?;
            let attack = adversary_infer(&view).map_err(invalid)?;
            println!("CANDIDATES {}", attack.candidates.len());
            for (a, b) in &attack.candidates {
                println!("EDGE {a}-{b} {:.6}", attack.weight());
            }
            Ok(())
        }
        Command::Experiment { config, output } => {
            let cfg = ExperimentConfig::parse(&read(&config)?).map_err(invalid)?;
            write(&output, &run_experiment(&cfg))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gbpath: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
