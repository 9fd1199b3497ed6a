//! `gdlog`: command-line front end for generative Datalog programs.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gdlog_core::analysis::{build_dependency_graph, check_graph, Acyclicity};
use gdlog_core::chase::{sample_outcome, CompiledProgram, Schedule, DEFAULT_STEP_BUDGET};
use gdlog_core::enumerate::{enumerate_outcomes, marginal, EnumerationPolicy};
use gdlog_core::model::{Instance, Program, Schema};
use gdlog_core::parser::{load_edb_csv, parse_fact, parse_facts, parse_program};
use gdlog_core::ppdl::{estimate_posterior, exact_posterior};
use gdlog_core::{Error, Registry};
use serde_json::{json, Value};

const EXIT_INPUT: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CYCLIC: u8 = 3;
const EXIT_ILLEGAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "gdlog", version, about = "Generative Datalog: analysis, chase sampling, enumeration and inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check weak acyclicity of the program.
    Check {
        #[command(flatten)]
        common: Common,
        /// Print the dependency graph in DOT format instead of the verdict.
        #[arg(long)]
        dot: bool,
    },
    /// Print the existential translation of the program.
    Translate {
        #[command(flatten)]
        common: Common,
    },
    /// Run one random chase and print the outcome.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        seed: u64,
        /// Maximum number of chase steps.
        #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
        budget: u64,
    },
    /// Enumerate possible outcomes with their probabilities.
    Enumerate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Posterior probability of a fact under the program's constraints.
    Infer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        /// Fact to query, e.g. 'Earthquake("Napa", 1)'.
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        /// Number of samples (mc mode).
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        /// Base seed (required in mc mode).
        #[arg(long, required_if_eq("mode", "mc"))]
        seed: Option<u64>,
        #[command(flatten)]
        policy: PolicyArgs,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Program file (.gdl).
    program: PathBuf,
    /// Also register the test distributions Dbl and DblOrNext.
    #[arg(long)]
    test_dists: bool,
    /// Output format; defaults to text for check/translate and json otherwise.
    #[arg(long, value_enum)]
    output: Option<Output>,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Fact file with `Rel(c1, ..., cn).` statements; repeatable.
    #[arg(long = "facts", value_name = "PATH")]
    facts: Vec<PathBuf>,
    /// Header-less CSV rows for an EDB relation; repeatable.
    #[arg(long = "edb", value_name = "REL=PATH", value_parser = parse_binding)]
    edb: Vec<(String, PathBuf)>,
}

#[derive(Args, Debug)]
struct PolicyArgs {
    /// Prune branches once at most this much mass is left unexplored.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Maximum number of branching nodes to expand.
    #[arg(long, default_value_t = 1_000_000)]
    nodes: usize,
    /// Mass to cover when expanding an infinite support.
    #[arg(long, default_value_t = 1.0 - 1e-6)]
    support_target: f64,
    /// Maximum chase steps along one path.
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    step_budget: u64,
}

impl PolicyArgs {
    fn policy(&self) -> EnumerationPolicy {
        EnumerationPolicy {
            mass_epsilon: self.epsilon,
            node_budget: self.nodes,
            support_mass_target: self.support_target,
            schedule: Schedule::Fifo,
            step_budget: self.step_budget,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Json,
    Text,
}

fn parse_binding(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((rel, path)) if !rel.is_empty() && !path.is_empty() => {
            Ok((rel.trim().to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected REL=PATH, got {s:?}")),
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) | Error::Invalid(_) | Error::Policy(_) | Error::Io { .. } => EXIT_INPUT,
            Error::Chase(_) | Error::Domain(_) => EXIT_RUNTIME,
            Error::IllegalInput | Error::UndeterminedLegality { .. } => EXIT_ILLEGAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: String) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn registry(common: &Common) -> Registry {
    if common.test_dists {
        Registry::with_test_distributions()
    } else {
        Registry::standard()
    }
}

fn load_program(common: &Common, registry: &Registry) -> Result<Program, Failure> {
    parse_program(&read(&common.program)?, registry)
        .map_err(|e| Error::from(e.with_file(&common.program)).into())
}

fn input_schema(program: &Program) -> Schema {
    let mut schema = program.edb_schema.clone();
    schema.extend(program.idb_schema.clone());
    schema
}

fn load_input(program: &Program, args: &InputArgs) -> Result<Instance, Failure> {
    let schema = input_schema(program);
    let mut input = Instance::new();
    for path in &args.facts {
        let facts = parse_facts(&read(path)?, &schema).map_err(|e| Error::from(e.with_file(path)))?;
        input.extend(&facts);
    }
    for (rel, path) in &args.edb {
        let file = fs::File::open(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        let facts = load_edb_csv(rel, file, &program.edb_schema).map_err(|e| Error::from(e.with_file(path)))?;
        input.extend(&facts);
    }
    log::info!("loaded {} input facts", input.len());
    Ok(input)
}

fn compile(program: &Program, registry: &Registry) -> Result<CompiledProgram, Failure> {
    let compiled = CompiledProgram::new(program, registry)?;
    if let Acyclicity::Cyclic { .. } = check_graph(&build_dependency_graph(program)) {
        log::warn!("program is not weakly acyclic; chase paths may hit the step budget");
    }
    Ok(compiled)
}

fn json_text(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// Runs one command and returns (exit code, stdout text).
fn run(cli: Cli) -> Result<(u8, String), Failure> {
    match cli.command {
        Command::Check { common, dot } => {
            let program = load_program(&common, &registry(&common))?;
            let graph = build_dependency_graph(&program);
            let verdict = check_graph(&graph);
            let code = if verdict.is_weakly_acyclic() { 0 } else { EXIT_CYCLIC };
            let out = if dot {
                graph.to_dot()
            } else if common.output == Some(Output::Json) {
                let witness: Vec<String> = match &verdict {
                    Acyclicity::WeaklyAcyclic => Vec::new(),
                    Acyclicity::Cyclic { witness } => witness.iter().map(ToString::to_string).collect(),
                };
                json_text(&json!({
                    "weakly_acyclic": verdict.is_weakly_acyclic(),
                    "witness": witness,
                }))
            } else {
                match &verdict {
                    Acyclicity::WeaklyAcyclic => "WEAKLY-ACYCLIC\n".to_string(),
                    Acyclicity::Cyclic { witness } => {
                        let mut s = String::from("NOT WEAKLY-ACYCLIC\nwitness cycle:\n");
                        for e in witness {
                            s.push_str(&format!("  {e}\n"));
                        }
                        s
                    }
                }
            };
            Ok((code, out))
        }
        Command::Translate { common } => {
            let reg = registry(&common);
            let program = load_program(&common, &reg)?;
            let translated = gdlog_core::translate::to_existential(&program, &reg)?;
            let out = if common.output == Some(Output::Json) {
                let rules: Vec<String> = translated.rules.iter().map(ToString::to_string).collect();
                let fds: Vec<String> = translated.fds.iter().map(ToString::to_string).collect();
                json_text(&json!({ "rules": rules, "fds": fds }))
            } else {
                translated.to_string()
            };
            Ok((0, out))
        }
        Command::Sample {
            common,
            input,
            seed,
            budget,
        } => {
            let reg = registry(&common);
            let program = load_program(&common, &reg)?;
            let input = load_input(&program, &input)?;
            let prog = compile(&program, &reg)?;
            let outcome = sample_outcome(&prog, &input, seed, budget).map_err(Error::from)?;
            let out = if common.output == Some(Output::Text) {
                format!(
                    "{}log_probability: {}\nterminated: {}\nsteps: {}\n",
                    outcome.facts, outcome.log_probability, outcome.terminated, outcome.steps
                )
            } else {
                json_text(&outcome)
            };
            Ok((0, out))
        }
        Command::Enumerate {
            common,
            input,
            policy,
        } => {
            let reg = registry(&common);
            let program = load_program(&common, &reg)?;
            let input = load_input(&program, &input)?;
            let prog = compile(&program, &reg)?;
            let dist = enumerate_outcomes(&prog, &input, &policy.policy())?;
            let out = if common.output == Some(Output::Text) {
                let mut s = String::new();
                for e in &dist.entries {
                    s.push_str(&format!("{}\n", e.probability));
                    for f in e.facts.iter() {
                        s.push_str(&format!("  {f}\n"));
                    }
                }
                s.push_str(&format!(
                    "explored_mass: {}\nresidual_mass: {}\n",
                    dist.explored_mass, dist.residual_mass
                ));
                s
            } else {
                json_text(&dist)
            };
            Ok((0, out))
        }
        Command::Infer {
            common,
            input,
            query,
            mode,
            samples,
            seed,
            policy,
        } => {
            let reg = registry(&common);
            let program = load_program(&common, &reg)?;
            let input = load_input(&program, &input)?;
            let query = parse_fact(&query, &input_schema(&program))
                .map_err(|e| input_error(format!("--query: {e}")))?;
            let prog = compile(&program, &reg)?;
            let report: Value = match mode {
                Mode::Exact => {
                    let post = exact_posterior(&prog, &input, &policy.policy())?;
                    let m = marginal(&post, &query);
                    json!({
                        "query": query.to_string(),
                        "mode": "exact",
                        "probability": (post.residual_mass == 0.0).then_some(m.lower),
                        "lower": m.lower,
                        "upper": m.upper,
                        "explored_mass": post.explored_mass,
                        "residual_mass": post.residual_mass,
                    })
                }
                Mode::Mc => {
                    let seed = seed.expect("clap requires --seed in mc mode");
                    let est = estimate_posterior(&prog, &input, &query, samples, seed, policy.step_budget)?;
                    if !est.is_defined() {
                        log::warn!("no sample satisfied the constraints");
                    }
                    let mut v = serde_json::to_value(&est).expect("estimate serializes");
                    v["mode"] = json!("mc");
                    v
                }
            };
            let out = if common.output == Some(Output::Text) {
                let obj = report.as_object().expect("report is an object");
                obj.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
            } else {
                json_text(&report)
            };
            Ok((0, out))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GDLOG_LOG"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok((code, out)) => {
            let mut stdout = io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(EXIT_RUNTIME);
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
