use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{Context, Result};
use num_bigint::BigUint;
use serde::Serialize;
use serde_json::json;
use treebound_core::convexity::DEFAULT_MODULUS_BUDGET;
use treebound_core::io::{embedding_from_json, embedding_to_json, format_f64, to_json_string};
use treebound_core::{
    certify_chain, convexity_profile, lower_bound_asymptotic, lower_bound_iterative, lower_bound_iterative_u64,
    modulus_analytic, modulus_numeric, multi_start, ConvexityProfile, Error, LowerBoundResult, OptimizerConfig,
    ProfileSource, SpaceSpec,
};

use crate::manifest::RunManifest;
use crate::{BoundArgs, CertifyArgs, EmbedArgs, MethodArg, ModulusArgs, ReportArgs};

/// A usage problem detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// 1 for domain and runtime errors, 2 for usage errors, 3 for broken invariants.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Depth { .. }) => 2,
        Some(Error::LemmaViolation { .. } | Error::ContractViolation(_) | Error::Hypothesis { .. }) => 3,
        _ => 1,
    }
}

fn profile_for(p: f64, c: &str) -> Result<ConvexityProfile> {
    if c == "auto" {
        return Ok(convexity_profile(&SpaceSpec::new(p, 2)?)?);
    }
    let c: f64 = c
        .parse()
        .map_err(|_| Usage(format!("--c expects a number or `auto`, got `{c}`")))?;
    Ok(ConvexityProfile::new(p, c, ProfileSource::Supplied)?)
}

/// `floor(log2 n)` for a decimal string of any length.
fn m_from_n(n: &str) -> Result<u64> {
    let big = BigUint::from_str(n.trim()).map_err(|_| Usage(format!("--n expects a positive integer, got `{n}`")))?;
    if big.bits() == 0 {
        return Err(Error::Domain("n must be >= 1".into()).into());
    }
    Ok(big.bits() - 1)
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    print!("{}", to_json_string(value)?);
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug, Serialize)]
struct BoundRecord {
    m: u64,
    method: &'static str,
    value: f64,
    p: f64,
    c: f64,
    tau: f64,
    leading_order_only: bool,
}

impl From<&LowerBoundResult> for BoundRecord {
    fn from(r: &LowerBoundResult) -> Self {
        BoundRecord {
            m: r.m,
            method: r.method.as_str(),
            value: r.value,
            p: r.profile.p_type,
            c: r.profile.c,
            tau: r.tau,
            leading_order_only: r.leading_order_only,
        }
    }
}

pub fn bound(args: &BoundArgs, json: bool) -> Result<ExitCode> {
    let started = Instant::now();
    let m = match (&args.m, &args.n) {
        (Some(m), _) => *m,
        (None, Some(n)) => m_from_n(n)?,
        (None, None) => unreachable!("clap requires --m or --n"),
    };
    let profile = profile_for(args.p, &args.c)?;
    let mut results = Vec::new();
    if matches!(args.method, MethodArg::Iterative | MethodArg::Both) {
        results.push(lower_bound_iterative_u64(m, &profile, args.tau)?);
    }
    if matches!(args.method, MethodArg::Asymptotic | MethodArg::Both) {
        results.push(lower_bound_asymptotic(m, &profile)?);
    }
    let records: Vec<BoundRecord> = results.iter().map(BoundRecord::from).collect();

    if json {
        let manifest = RunManifest::new("bound", args, None, started);
        print_json(&json!({ "manifest": manifest.to_value(), "results": records }))?;
    } else if args.csv {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(std::io::stdout());
        w.write_record(["m", "method", "value", "p", "c", "tau"])?;
        for r in &records {
            w.write_record([
                r.m.to_string(),
                r.method.to_string(),
                format_f64(r.value),
                format_f64(r.p),
                format_f64(r.c),
                format_f64(r.tau),
            ])?;
        }
        w.flush()?;
    } else {
        println!(
            "m = {m}, p = {}, c = {}",
            format_f64(profile.p_type),
            format_f64(profile.c)
        );
        for r in &records {
            let note = if r.leading_order_only {
                " (leading order only)"
            } else {
                ""
            };
            println!("{:<10} {}{note}", r.method, format_f64(r.value));
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn modulus(args: &ModulusArgs, json: bool) -> Result<ExitCode> {
    let started = Instant::now();
    let space = SpaceSpec::new(args.p, args.dim)?;
    let analytic = match modulus_analytic(&space, args.eps) {
        Ok(v) => Some(v),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let numeric = if args.numeric || analytic.is_none() {
        Some(modulus_numeric(&space, args.eps, args.seed, DEFAULT_MODULUS_BUDGET)?)
    } else {
        None
    };
    let difference = match (analytic, &numeric) {
        (Some(a), Some(n)) => Some((n.value - a).abs()),
        _ => None,
    };

    if json {
        let seed = numeric.as_ref().map(|_| args.seed);
        let manifest = RunManifest::new("modulus", args, seed, started);
        print_json(&json!({
            "manifest": manifest.to_value(),
            "p": args.p,
            "dim": args.dim,
            "eps": args.eps,
            "analytic": analytic,
            "numeric": numeric,
            "difference": difference,
        }))?;
    } else {
        if let Some(a) = analytic {
            println!("analytic {}", format_f64(a));
        }
        if let Some(n) = &numeric {
            println!("numeric  {}", format_f64(n.value));
            println!("  x = {:?}", n.x);
            println!("  y = {:?}", n.y);
            println!("  |x - y| = {}", format_f64(n.separation));
        }
        if let Some(d) = difference {
            println!("|numeric - analytic| = {d:.3e}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn embed(args: &EmbedArgs, json: bool) -> Result<ExitCode> {
    let started = Instant::now();
    let space = SpaceSpec::new(args.p, args.dim)?;
    let config = OptimizerConfig {
        restarts: args.restarts,
        steps: args.steps,
        seed: args.seed,
        ..OptimizerConfig::default()
    };
    let best = multi_start(args.depth, &space, &config)?;
    let profile = convexity_profile(&space)?;
    let (m, lower) = if args.depth >= 2 {
        let m = args.depth.ilog2();
        (m, lower_bound_iterative(m, &profile, args.tau)?.value)
    } else {
        (0, 1.0)
    };

    let manifest = RunManifest::new("embed", args, Some(args.seed), started);
    let mut record = manifest.to_value();
    record["optimizer"] = serde_json::to_value(config)?;
    write_file(&args.out, &embedding_to_json(&best.embedding, Some(record))?)?;
    if let Some(path) = &args.history {
        let mut text = manifest.csv_comment().into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut text);
            w.write_record(["restart", "step", "objective", "exact_distortion_snapshot"])?;
            for row in &best.trajectory {
                w.write_record([
                    row.restart.to_string(),
                    row.step.to_string(),
                    format_f64(row.objective),
                    format_f64(row.exact_distortion_snapshot),
                ])?;
            }
            w.flush()?;
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&text))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }

    if json {
        print_json(&json!({
            "manifest": manifest.to_value(),
            "distortion": best.report.distortion,
            "lower_bound": lower,
            "m": m,
            "restarts": best.history,
        }))?;
    } else {
        println!("T_{} into l_{}^{}", args.depth, format_f64(args.p), args.dim);
        println!("upper (optimized distortion) {}", format_f64(best.report.distortion));
        println!("lower (certified, m = {m})     {}", format_f64(lower));
        println!("wrote {}", args.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn certify(args: &CertifyArgs, json: bool) -> Result<ExitCode> {
    let started = Instant::now();
    let text = fs::read_to_string(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let (e, _) = embedding_from_json(&text).with_context(|| format!("in {}", args.input.display()))?;
    let depth = e.tree().depth();
    if depth < 2 {
        return Err(Usage(format!(
            "certification needs a tree of depth >= 2, the input has depth {depth}"
        ))
        .into());
    }
    let profile = convexity_profile(e.space())?;
    let trace = certify_chain(&e, &profile, args.tau)?;
    let statement = trace
        .certified_statement
        .clone()
        .expect("certify_chain states its result");

    let manifest = RunManifest::new("certify", args, None, started);
    if let Some(path) = &args.trace {
        write_file(
            path,
            &to_json_string(&json!({ "manifest": manifest.to_value(), "trace": trace }))?,
        )?;
    }
    if json {
        print_json(&json!({
            "manifest": manifest.to_value(),
            "D0": statement.observed_distortion,
            "d_sequence": trace.d_sequence,
            "lower_bound": statement.lower_bound,
            "m": statement.m,
            "pass": statement.pass,
            "rigorous_profile": profile.is_rigorous(),
        }))?;
    } else {
        println!("D_0 = {}", format_f64(statement.observed_distortion));
        for (k, d) in trace.d_sequence.iter().enumerate() {
            println!("  D_{k} = {}", format_f64(*d));
        }
        println!("L = {} (m = {})", format_f64(statement.lower_bound), statement.m);
        println!("{}", if statement.pass { "PASS" } else { "FAIL" });
    }
    // D_0 < L would contradict the lemma chain that just succeeded.
    Ok(if statement.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

pub fn report(args: &ReportArgs, json: bool) -> Result<ExitCode> {
    let started = Instant::now();
    let profile = profile_for(args.p, &args.c)?;
    let mut rows = Vec::with_capacity(args.m_list.len());
    for &m in &args.m_list {
        let it = lower_bound_iterative_u64(m, &profile, args.tau)?.value;
        let asym = lower_bound_asymptotic(m, &profile)?.value;
        // Share of the certified bound captured by the leading-order term.
        rows.push((m, it, asym, asym / it));
    }

    let manifest = RunManifest::new("report", args, None, started);
    if let Some(path) = &args.csv {
        let mut text = manifest.csv_comment().into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut text);
            w.write_record(["m", "iterative", "asymptotic", "ratio"])?;
            for (m, it, asym, ratio) in &rows {
                w.write_record([m.to_string(), format_f64(*it), format_f64(*asym), format_f64(*ratio)])?;
            }
            w.flush()?;
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&text))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if json {
        let table: Vec<_> = rows
            .iter()
            .map(|(m, it, asym, ratio)| json!({ "m": m, "iterative": it, "asymptotic": asym, "ratio": ratio }))
            .collect();
        print_json(&json!({ "manifest": manifest.to_value(), "rows": table }))?;
    } else {
        println!("{:>12} {:>22} {:>22} {:>10}", "m", "iterative", "asymptotic", "ratio");
        for (m, it, asym, ratio) in &rows {
            println!(
                "{m:>12} {:>22} {:>22} {ratio:>10.6}",
                format_f64(*it),
                format_f64(*asym)
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
