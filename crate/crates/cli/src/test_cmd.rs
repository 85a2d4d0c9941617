//! `fdx test`: run one procedure on a file of z-values.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fdx_core::procedures::{guo_romano, lehmann_romano};
use fdx_core::twogroup::{fit_empirical_null_with, NullFitMethod, DEFAULT_CENTRAL_FRACTION};
use fdx_core::{
    bh, lfdr_empirical, lfdr_oracle, procedure1, procedure2, pvalue_from_z_sided, sc_adaptive,
    DensityMethod, EmpiricalNull, FdxLevel, Gaussian, LfdrVector, PValueSide, ProcedureOptions,
    RandomizedExtra, TwoGroupModel,
};
use serde::Serialize;

use crate::input::read_z_file;
use crate::{to_json, write_file, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proc2,
    Proc1,
    Bh,
    Sc,
    Lr,
    Gr,
}

impl Method {
    fn uses_pvalues(self) -> bool {
        matches!(self, Method::Bh | Method::Lr | Method::Gr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    /// N(0, 1) null; the null proportion is estimated from the central window.
    Theoretical,
    /// Null mean, sd and proportion estimated from the central window.
    Empirical,
    /// Known two-group model given by --pi and --mu.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Kernel,
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullFit {
    Mle,
    CentralMatching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    TwoSided,
    Lower,
    Upper,
}

impl From<Side> for PValueSide {
    fn from(s: Side) -> Self {
        match s {
            Side::TwoSided => PValueSide::TwoSided,
            Side::Lower => PValueSide::Lower,
            Side::Upper => PValueSide::Upper,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TestArgs {
    /// File with one z-value per line (optional header line).
    #[arg(long)]
    pub input: PathBuf,
    /// FDP tolerance.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Bound on P(FDP > gamma).
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// FDR level for bh and sc; defaults to --alpha.
    #[arg(long)]
    pub alpha_fdr: Option<f64>,
    #[arg(long, value_enum, default_value_t = Method::Proc2)]
    pub method: Method,
    #[arg(long = "null", value_enum, default_value_t = NullMode::Theoretical)]
    pub null_mode: NullMode,
    /// Non-null proportion (oracle null only).
    #[arg(long)]
    pub pi: Option<f64>,
    /// Non-null mean (oracle null only).
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Estimate of the mixture density in the lfdr denominator.
    #[arg(long, value_enum, default_value_t = Density::Kernel)]
    pub density: Density,
    /// Kernel bandwidth; Silverman's rule when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Share of the data in the central window used for the null.
    #[arg(long, default_value_t = DEFAULT_CENTRAL_FRACTION)]
    pub central_fraction: f64,
    #[arg(long, value_enum, default_value_t = NullFit::Mle)]
    pub null_fit: NullFit,
    /// Tail of the p-values.
    #[arg(long, value_enum, default_value_t = Side::TwoSided)]
    pub pvalue_side: Side,
    /// Randomize the rejection of hypothesis K + 1 (proc1 / proc2).
    #[arg(long)]
    pub randomize: bool,
    /// Seed for the randomized rejection and the mixture fit.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-hypothesis results.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Run summary.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct NullUsed {
    mode: NullMode,
    delta0: f64,
    sigma0: f64,
    pi0: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    m: usize,
    /// Rejections of the procedure, including a fired randomized extra.
    rejections: usize,
    k: usize,
    k1: Option<usize>,
    k2: Option<usize>,
    tail_at_k: Option<f64>,
    randomized_extra: Option<RandomizedExtra>,
    null: NullUsed,
    config: &'a TestArgs,
}

#[derive(Serialize)]
struct Row {
    index: usize,
    z: f64,
    pvalue: f64,
    lfdr: Option<f64>,
    rank: usize,
    rejected: u8,
}

/// lfdr and the null it was computed against.
fn estimate_lfdr(z: &[f64], args: &TestArgs) -> CliResult<(LfdrVector, EmpiricalNull)> {
    let estimation = |e: fdx_core::FdxError| CliError::Estimation(e.to_string());
    let density = match args.density {
        Density::Kernel => DensityMethod::Kernel {
            bandwidth: args.bandwidth,
        },
        Density::Mixture => DensityMethod::Mixture { seed: args.seed },
    };
    let null = match args.null_mode {
        NullMode::Oracle => {
            let (pi, mu) = oracle_params(args)?;
            let model = TwoGroupModel::standard(pi, mu)?;
            let lfdr = lfdr_oracle(z, &model)?;
            return Ok((
                lfdr,
                EmpiricalNull {
                    delta0: 0.0,
                    sigma0: 1.0,
                    pi0: 1.0 - pi,
                },
            ));
        }
        NullMode::Theoretical => {
            EmpiricalNull::theoretical(z, args.central_fraction).map_err(estimation)?
        }
        NullMode::Empirical => {
            let method = match args.null_fit {
                NullFit::Mle => NullFitMethod::Mle,
                NullFit::CentralMatching => NullFitMethod::CentralMatching,
            };
            fit_empirical_null_with(z, args.central_fraction, method).map_err(estimation)?
        }
    };
    let lfdr = lfdr_empirical(z, &null, &density).map_err(estimation)?;
    if !lfdr.flagged.is_empty() {
        eprintln!(
            "warning: estimated density vanished at {} z-values; their lfdr is set to 1",
            lfdr.flagged.len()
        );
    }
    Ok((lfdr.lfdr, null))
}

fn oracle_params(args: &TestArgs) -> CliResult<(f64, f64)> {
    match (args.pi, args.mu) {
        (Some(pi), Some(mu)) => Ok((pi, mu)),
        _ => Err(CliError::Input(
            "--null oracle needs both --pi and --mu".to_string(),
        )),
    }
}

/// 1-based positions of each hypothesis when sorted ascending (stable).
fn ranks_of(order: &[usize]) -> Vec<usize> {
    let mut rank = vec![0; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

pub fn run(args: &TestArgs) -> CliResult<()> {
    let level = FdxLevel::new(args.gamma, args.alpha)?;
    let alpha_fdr = args.alpha_fdr.unwrap_or(args.alpha);
    if args.null_mode != NullMode::Oracle && (args.pi.is_some() || args.mu.is_some()) {
        return Err(CliError::Input(
            "--pi and --mu apply only to --null oracle".to_string(),
        ));
    }
    let z = read_z_file(&args.input).map_err(CliError::Input)?;
    let m = z.len();

    // p-value methods still report lfdr when it can be estimated.
    let (lfdr, null) = match estimate_lfdr(&z, args) {
        Ok((l, n)) => (Some(l), n),
        Err(CliError::Estimation(msg))
            if args.method.uses_pvalues() && args.null_mode == NullMode::Theoretical =>
        {
            eprintln!("warning: lfdr not reported: {msg}");
            (
                None,
                EmpiricalNull {
                    delta0: 0.0,
                    sigma0: 1.0,
                    pi0: 1.0,
                },
            )
        }
        Err(e) => return Err(e),
    };
    let null_gaussian = Gaussian::new(null.delta0, null.sigma0)?;
    let p = pvalue_from_z_sided(&z, &null_gaussian, args.pvalue_side.into())?;

    let opts = ProcedureOptions {
        randomize: args.randomize,
        seed: args.seed,
        prefilter: false,
    };
    let mut k1 = None;
    let mut k2 = None;
    let mut tail_at_k = None;
    let mut extra = None;
    let (rejected, order) = if args.method.uses_pvalues() {
        let rejected = match args.method {
            Method::Bh => bh(&p, alpha_fdr)?,
            Method::Lr => lehmann_romano(&p, &level)?,
            _ => guo_romano(&p, &level)?,
        };
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
        (rejected, order)
    } else {
        let lfdr = lfdr
            .as_ref()
            .expect("lfdr methods fail on estimation errors");
        let rejected = match args.method {
            Method::Sc => sc_adaptive(lfdr, alpha_fdr)?,
            method => {
                let res = if method == Method::Proc1 {
                    procedure1(lfdr, &level, &opts)
                } else {
                    procedure2(lfdr, &level, &opts)
                };
                k1 = Some(res.k1);
                k2 = Some(res.k2);
                tail_at_k = Some(res.tail_at_k);
                extra = res.randomized_extra;
                res.rejected_with_extra()
            }
        };
        (rejected, lfdr.rank().to_vec())
    };

    let rank = ranks_of(&order);
    let mut is_rejected = vec![0u8; m];
    for &i in &rejected {
        is_rejected[i] = 1;
    }
    let k = rejected.len() - usize::from(extra.is_some_and(|e| e.outcome));

    if let Some(path) = &args.out_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..m {
            w.serialize(Row {
                index: i + 1,
                z: z[i],
                pvalue: p[i],
                lfdr: lfdr.as_ref().map(|l| l.values()[i]),
                rank: rank[i],
                rejected: is_rejected[i],
            })
            .map_err(|e| CliError::Input(format!("cannot encode CSV: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Input(format!("cannot encode CSV: {e}")))?;
        write_file(path, &bytes)?;
    }
    let summary = Summary {
        m,
        rejections: rejected.len(),
        k,
        k1,
        k2,
        tail_at_k,
        randomized_extra: extra,
        null: NullUsed {
            mode: args.null_mode,
            delta0: null.delta0,
            sigma0: null.sigma0,
            pi0: null.pi0,
        },
        config: args,
    };
    if let Some(path) = &args.out_json {
        write_file(path, &to_json(&summary)?)?;
    }
    println!(
        "m = {m}, method = {:?}, rejections = {}{}",
        args.method,
        rejected.len(),
        match (k1, k2) {
            (Some(a), Some(b)) => format!(" (K1 = {a}, K2 = {b}, K = {k})"),
            _ => String::new(),
        }
    );
    Ok(())
}
