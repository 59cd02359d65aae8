use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(
    name = "treebound",
    version,
    about = "Distortion lower bounds for complete binary trees in l_p spaces"
)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lower bound on the distortion of T_n in a space of type p.
    Bound(BoundArgs),
    /// Modulus of convexity of l_p^d.
    Modulus(ModulusArgs),
    /// Search for a low-distortion embedding of T_n.
    Embed(EmbedArgs),
    /// Certify an embedding file by repeated half-depth extraction.
    Certify(CertifyArgs),
    /// Iterative and asymptotic bounds over a list of m; ratio = asymptotic / iterative.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Iterative,
    Asymptotic,
    Both,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(group(clap::ArgGroup::new("size").required(true).args(["m", "n"])))]
struct BoundArgs {
    /// Number of self-improvement steps.
    #[arg(long)]
    m: Option<u64>,
    /// Tree depth as a decimal integer of any size; m = floor(log2 n).
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    p: f64,
    /// Convexity constant, or `auto` for the l_p value.
    #[arg(long, default_value = "auto")]
    c: String,
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,
    /// Print CSV rows instead of text.
    #[arg(long, conflicts_with = "json")]
    csv: bool,
}

#[derive(Debug, Args, serde::Serialize)]
struct ModulusArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    eps: f64,
    /// Also run the numerical search.
    #[arg(long)]
    numeric: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args, serde::Serialize)]
struct EmbedArgs {
    #[arg(long)]
    depth: u32,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    restarts: u32,
    #[arg(long, default_value_t = 5000)]
    steps: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    /// Embedding JSON to write.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Optional CSV of sampled optimisation steps.
    #[arg(long)]
    history: Option<std::path::PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct CertifyArgs {
    #[arg(long)]
    input: std::path::PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    /// Write the full extraction trace as JSON.
    #[arg(long)]
    trace: Option<std::path::PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
struct ReportArgs {
    #[arg(long)]
    p: f64,
    /// Comma-separated iteration counts.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    m_list: Vec<u64>,
    #[arg(long, default_value = "auto")]
    c: String,
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    /// Write the table as CSV.
    #[arg(long)]
    csv: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bound(a) => commands::bound(a, cli.json),
        Command::Modulus(a) => commands::modulus(a, cli.json),
        Command::Embed(a) => commands::embed(a, cli.json),
        Command::Certify(a) => commands::certify(a, cli.json),
        Command::Report(a) => commands::report(a, cli.json),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
