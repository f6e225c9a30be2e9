mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use datamarket::audit::{mechanism_audit, misreport_sweep, AuditOptions, GridSpec, Spacing};
use datamarket::markets::{
    DataMixtureMarket, MarketConfig, MarketInstance, MeanEstimationMarket, RetrievalMarket,
};
use datamarket::model::{Market, PaymentRule};
use datamarket::payments::{pay, redistribute, PaymentOptions, ShapleyMode};
use datamarket::{allocation::social_welfare, MarketError, Result};

use output::{Format, Written};

/// Welfare-maximizing data markets: allocation, payment rules and incentive audits.
///
/// Randomness comes only from `--seed`, fed to a ChaCha8 generator.
/// Set MARKET_LOG=error|info|debug for diagnostics on stderr.
#[derive(Debug, Parser)]
#[command(name = "datamarket", version)]
struct Cli {
    /// Seed for generated markets and sampled Shapley permutations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Output format. Defaults to csv for `sweep` and json otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random market file.
    Gen(GenArgs),
    /// Solve for the welfare-maximizing allocation at true costs.
    Solve(MarketArg),
    /// Payments under one rule at true costs.
    Pay(PayArgs),
    /// One seller's misreport sweep with all others truthful.
    Sweep(SweepArgs),
    /// Best responses, IR, budget balance and price of anarchy per rule.
    Audit(AuditArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    #[value(alias = "mean_estimation")]
    Mean,
    DataMixture,
    Retrieval,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Buyers (mean family).
    #[arg(long, default_value_t = 5)]
    buyers: usize,
    /// Sellers (mean and data_mixture families).
    #[arg(long, default_value_t = 10)]
    sellers: usize,
    /// Mean dimension (mean family).
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Corpus size s (retrieval family).
    #[arg(long, default_value_t = 10)]
    corpus: usize,
    /// Retrieved pool size n (retrieval family).
    #[arg(long, default_value_t = 10)]
    pool: usize,
    /// Context budget k (retrieval family).
    #[arg(long, default_value_t = 1)]
    budget: usize,
}

#[derive(Debug, Args)]
struct MarketArg {
    /// Market file (JSON).
    #[arg(long)]
    market: PathBuf,
}

#[derive(Debug, Args)]
struct RuleArgs {
    #[arg(long, value_parser = parse_rule)]
    rule: PaymentRule,
    /// Estimate Shapley payments from this many sampled permutations instead of exact enumeration.
    #[arg(long)]
    permutations: Option<usize>,
}

#[derive(Debug, Args)]
struct PayArgs {
    #[command(flatten)]
    market: MarketArg,
    #[command(flatten)]
    rule: RuleArgs,
    /// Split payments across buyers by marginal value and report buyer charges.
    #[arg(long)]
    redistribute: bool,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Lowest reported cost, as a multiple of the true cost unless --absolute.
    #[arg(long, default_value_t = 0.1)]
    low: f64,
    /// Highest reported cost, as a multiple of the true cost unless --absolute.
    #[arg(long, default_value_t = 10.0)]
    high: f64,
    /// Grid points before the true cost is inserted.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value = "log", value_parser = parse_spacing)]
    spacing: Spacing,
    /// Treat --low and --high as costs rather than multiples of the true cost.
    #[arg(long)]
    absolute: bool,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec {
            low: self.low,
            high: self.high,
            relative: !self.absolute,
            points: self.points,
            spacing: self.spacing,
            include_truth: true,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    market: MarketArg,
    #[command(flatten)]
    rule: RuleArgs,
    /// Zero-based index of the deviating seller.
    #[arg(long)]
    seller: usize,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    market: MarketArg,
    /// Rules to audit; repeat or comma-separate. All rules when absent.
    #[arg(long, value_parser = parse_rule, value_delimiter = ',')]
    rule: Vec<PaymentRule>,
    #[arg(long)]
    permutations: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
}

fn parse_rule(s: &str) -> std::result::Result<PaymentRule, String> {
    s.parse().map_err(|e: MarketError| e.to_string())
}

fn parse_spacing(s: &str) -> std::result::Result<Spacing, String> {
    s.parse().map_err(|e: MarketError| e.to_string())
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    violations: Vec<String>,
}

fn payment_options(permutations: Option<usize>, seed: u64) -> PaymentOptions {
    PaymentOptions {
        shapley: match permutations {
            Some(permutations) => ShapleyMode::Sampled { permutations, seed },
            None => ShapleyMode::Exact,
        },
        ..Default::default()
    }
}

fn load(path: &Path) -> Result<MarketInstance> {
    let (config, base) = MarketConfig::load(path)?;
    let market = config.build(&base)?;
    log::info!(
        "loaded {} market: {} buyers, {} sellers",
        market.family(),
        market.players().buyers(),
        market.players().sellers()
    );
    Ok(market)
}

fn generate(args: &GenArgs, seed: u64) -> Result<MarketInstance> {
    Ok(match args.family {
        Family::Mean => MarketInstance::MeanEstimation(MeanEstimationMarket::random(
            args.buyers,
            args.sellers,
            args.dim,
            seed,
        )?),
        Family::DataMixture => {
            MarketInstance::DataMixture(DataMixtureMarket::random(args.sellers, seed)?)
        }
        Family::Retrieval => MarketInstance::Retrieval(RetrievalMarket::random(
            args.corpus,
            args.pool,
            args.budget,
            seed,
        )?),
    })
}

fn run(cli: &Cli) -> Result<Written> {
    match &cli.command {
        Command::Gen(args) => {
            let market = generate(args, cli.seed)?;
            Ok(Written::Json(MarketConfig::describe(&market).to_json()?))
        }
        Command::Solve(args) => {
            let market = load(&args.market)?;
            let allocation = market.solve(market.true_costs())?;
            let welfare = social_welfare(&market, &allocation, market.true_costs())?;
            output::solution(cli.format, &allocation, &welfare)
        }
        Command::Pay(args) => {
            let market = load(&args.market.market)?;
            let options = payment_options(args.rule.permutations, cli.seed);
            let truth = market.true_costs();
            let mut result = pay(&market, args.rule.rule, truth, &options)?;
            if !result.truncated.is_empty() {
                log::warn!(
                    "myerson integrand had not decayed at the cap for sellers {:?}",
                    result.truncated
                );
            }
            if args.redistribute {
                let charges = redistribute(&market, truth, &result.seller_payments)?;
                result = result.with_buyer_charges(charges);
            }
            output::payment(cli.format, &result)
        }
        Command::Sweep(args) => {
            let market = load(&args.market.market)?;
            let sellers = market.players().sellers();
            if args.seller >= sellers {
                return Err(MarketError::invalid(format!(
                    "--seller {} out of range (market has {sellers} sellers)",
                    args.seller
                )));
            }
            let grid = args
                .grid
                .spec()
                .points_for(market.true_costs().get(args.seller))?;
            let options = payment_options(args.rule.permutations, cli.seed);
            let records = misreport_sweep(&market, args.rule.rule, args.seller, &grid, &options)?;
            output::sweep(cli.format, &records)
        }
        Command::Audit(args) => {
            let market = load(&args.market.market)?;
            let rules = if args.rule.is_empty() {
                PaymentRule::ALL.to_vec()
            } else {
                args.rule.clone()
            };
            let options = AuditOptions {
                grid: args.grid.spec(),
                payments: payment_options(args.permutations, cli.seed),
            };
            let verdicts = mechanism_audit(&market, &rules, &options, Some(cli.seed))?;
            output::audit(cli.format, &verdicts)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MARKET_LOG", "warn")).init();
    let result = run(&cli).and_then(|written| written.emit(cli.output.as_deref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = ErrorRecord {
                kind: e.kind(),
                message: e.to_string(),
                violations: match &e {
                    MarketError::Invalid(v) => v.clone(),
                    _ => Vec::new(),
                },
            };
            eprintln!(
                "{}",
                serde_json::to_string(&record).unwrap_or_else(|_| format!("{e}"))
            );
            ExitCode::FAILURE
        }
    }
}
