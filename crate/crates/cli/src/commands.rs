//! Dispatch from parsed arguments to the engine.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use orlicz_risk::distributions::{AtomicRV, QuantileRV, Scheme};
use orlicz_risk::duality::{biconjugate_check, es_dual_eval, extend_by_condexp, fenchel_conjugate, Density, SearchOptions};
use orlicz_risk::harness::{
    check_axioms, coex_probe, counterexample_limit_heart, dilatation_probe, exp_truncation_family, fatou_probe,
    fatou_probe_quantile, order_blowup_probe, random_partitions, random_population, ProbeReport,
};
use orlicz_risk::io::{format_f64, read_partition, read_values, read_z_column, serialize_extended, serialize_extended_vec};
use orlicz_risk::orlicz::{luxemburg_norm, orlicz_norm, HeartReport, OrliczFunction};
use orlicz_risk::partitions::{cond_exp, Partition};
use orlicz_risk::risk::{counterexample_rho, counterexample_rho_quantile, es, kusuoka_argmax, var, KusuokaSpec, RiskMeasure};
use orlicz_risk::{Error, Result};
use serde::Serialize;

use crate::config::ProbeConfig;
use crate::report::{Report, Table};
use crate::{Cli, Command, Family, NormKind, Probe};

pub fn run(cli: &Cli) -> Result<()> {
    if cli.common.threads == 0 {
        return Err(Error::Parse("--threads must be at least 1".into()));
    }
    let config = ProbeConfig::load(cli.common.config.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start thread pool: {e}")))?;
    let report = pool.install(|| dispatch(&cli.command, cli.common.seed, &config))?;
    match &cli.common.output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            report.write(cli.common.format, &mut out)
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            report.write(cli.common.format, &mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Scalar<'a> {
    label: &'a str,
    #[serde(serialize_with = "serialize_extended")]
    value: f64,
}

fn scalar(command: &str, label: &str, value: f64) -> Result<Report> {
    Report::new(command, &Scalar { label, value }, Table::values(&[value]))
}

#[derive(Serialize)]
struct Vector<'a> {
    label: &'a str,
    #[serde(serialize_with = "serialize_extended_vec")]
    values: Vec<f64>,
}

fn vector(command: &str, label: &str, values: Vec<f64>) -> Result<Report> {
    let table = Table::values(&values);
    Report::new(command, &Vector { label, values }, table)
}

fn measure(descriptor: &str) -> Result<RiskMeasure> {
    RiskMeasure::from_descriptor(descriptor)
}

/// `exp:rate=R`, `neg_exp:rate=R` or `file:<path>`.
fn law(descriptor: &str) -> Result<QuantileRV> {
    let bad = || Error::Parse(format!("unknown law `{descriptor}`"));
    let (name, rest) = descriptor.split_once(':').ok_or_else(bad)?;
    let rate = || -> Result<f64> {
        rest.strip_prefix("rate=")
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected `rate=<number>` in `{descriptor}`")))
    };
    match name {
        "exp" => QuantileRV::exponential(rate()?),
        "neg_exp" => Ok(QuantileRV::exponential(rate()?)?.negate()),
        "file" => Ok(read_values(Path::new(rest))?.to_quantile()),
        _ => Err(bad()),
    }
}

fn dispatch(command: &Command, seed: u64, config: &ProbeConfig) -> Result<Report> {
    match command {
        Command::Norm { input, phi, kind } => {
            let x = read_values(input)?;
            let f = OrliczFunction::from_descriptor(phi)?;
            let v = match kind {
                NormKind::Luxemburg => luxemburg_norm(&x, &f)?,
                NormKind::Orlicz => orlicz_norm(&x, &f)?,
            };
            scalar("norm", f.label(), v)
        }
        Command::Conjugate { input, measure: m, phi } => match (m, phi) {
            (Some(m), _) => {
                let rho = measure(m)?;
                let z = AtomicRV::new(read_z_column(input)?)?;
                let r = fenchel_conjugate(&rho, &z, &SearchOptions::new(Vec::new()))?;
                let table = Table::pairs(vec![
                    ("value".into(), format_f64(r.value)),
                    ("lower_bound".into(), r.lower_bound.to_string()),
                ]);
                Report::new("conjugate", &r, table)
            }
            (None, Some(phi)) => {
                let f = OrliczFunction::from_descriptor(phi)?;
                let x = read_values(input)?;
                let psi = x.values().iter().map(|s| f.conjugate(*s)).collect::<Result<Vec<_>>>()?;
                vector("conjugate", f.label(), psi)
            }
            (None, None) => Err(Error::Parse("conjugate needs --measure or --phi".into())),
        },
        Command::Var { input, alpha } => scalar("var", &format!("var:alpha={alpha}"), var(&read_values(input)?, *alpha)?),
        Command::Es { input, alpha } => scalar("es", &format!("es:alpha={alpha}"), es(&read_values(input)?, *alpha)?),
        Command::Kusuoka { input, measure } => {
            let path = measure.strip_prefix("kusuoka:").unwrap_or(measure);
            let spec = KusuokaSpec::from_csv(Path::new(path))?;
            let best = kusuoka_argmax(&read_values(input)?, &spec)?;
            #[derive(Serialize)]
            struct Body<'a> {
                value: f64,
                candidate_id: &'a str,
            }
            let id = &spec.candidates()[best.candidate].id;
            let table = Table::pairs(vec![
                ("value".into(), format_f64(best.value)),
                ("candidate_id".into(), id.clone()),
            ]);
            Report::new("kusuoka", &Body { value: best.value, candidate_id: id }, table)
        }
        Command::Condexp { input, partition } => {
            let c = cond_exp(&read_values(input)?, &read_partition(partition)?)?;
            vector("condexp", "conditional_expectation", c.into_values())
        }
        Command::Dual {
            input,
            alpha,
            measure: m,
            density,
        } => {
            let x = read_values(input)?;
            match (alpha, m) {
                (Some(a), _) => {
                    let r = es_dual_eval(&x, *a)?;
                    let table = Table::pairs(vec![("value".into(), format_f64(r.value))]);
                    Report::new("dual", &r, table)
                }
                (None, Some(m)) => {
                    let rho = measure(m)?;
                    let ds = density
                        .iter()
                        .map(|p| Density::from_csv(p, None))
                        .collect::<Result<Vec<_>>>()?;
                    let r = biconjugate_check(&rho, &x, &ds)?;
                    let table = Table::pairs(vec![
                        ("lower".into(), format_f64(r.lower)),
                        ("primal".into(), format_f64(r.primal)),
                        ("gap".into(), format_f64(r.gap)),
                    ]);
                    Report::new("dual", &r, table)
                }
                (None, None) => Err(Error::Parse("dual needs --alpha or --measure".into())),
            }
        }
        Command::Extend {
            measure: m,
            law: l,
            phi,
            depth,
        } => {
            let rho = measure(m)?;
            let trace = extend_by_condexp(&rho, &law(l)?, &OrliczFunction::from_descriptor(phi)?, *depth)?;
            let table = Table {
                header: vec!["depth", "value", "blocks", "threshold"],
                rows: trace
                    .steps
                    .iter()
                    .map(|s| {
                        vec![
                            s.depth.to_string(),
                            format_f64(s.value),
                            s.blocks.to_string(),
                            format_f64(s.threshold),
                        ]
                    })
                    .collect(),
            };
            Report::new("extend", &trace, table)
        }
        Command::Counterexample { input, phi, depth } => {
            let f = OrliczFunction::from_descriptor(phi)?;
            match input {
                Some(path) => scalar("counterexample", f.label(), counterexample_rho(&read_values(path)?)),
                None => counterexample_trace(&f, *depth),
            }
        }
        Command::Probe { probe } => run_probe(probe, seed, config),
    }
}

#[derive(Serialize)]
struct TracePoint {
    n: usize,
    #[serde(serialize_with = "serialize_extended")]
    value: f64,
}

#[derive(Serialize)]
struct CounterexampleTrace<'a> {
    phi: &'a str,
    trace: Vec<TracePoint>,
    #[serde(serialize_with = "serialize_extended")]
    limit_value: f64,
    limit_heart: HeartReport,
}

/// `rho(1 - min(Y, n))` for `n = 1..=depth` with `Y ~ Exp(1)`, and the limit.
fn counterexample_trace(phi: &OrliczFunction, depth: usize) -> Result<Report> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let (seq, limit) = exp_truncation_family(depth)?;
    let trace = seq
        .iter()
        .enumerate()
        .map(|(i, x)| {
            Ok(TracePoint {
                n: i + 1,
                value: counterexample_rho_quantile(x, phi)?.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let limit_value = counterexample_rho_quantile(&limit, phi)?.value;
    let limit_heart = counterexample_limit_heart(phi)?;
    let table = Table {
        header: vec!["n", "value"],
        rows: trace.iter().map(|p| vec![p.n.to_string(), format_f64(p.value)]).collect(),
    };
    let body = CounterexampleTrace {
        phi: phi.label(),
        trace,
        limit_value,
        limit_heart,
    };
    Report::new("counterexample", &body, table)
}

fn probe_report(r: &ProbeReport, config: &ProbeConfig) -> Result<Report> {
    if let Some(dir) = config.raw("witnesses") {
        r.archive_witnesses(&PathBuf::from(dir))?;
    }
    let mut rows = vec![
        ("probe_name".to_string(), r.probe_name.clone()),
        ("seed".to_string(), r.seed.to_string()),
        ("trials".to_string(), r.trials.to_string()),
        ("passed".to_string(), r.passed.to_string()),
        ("violations".to_string(), r.violations.len().to_string()),
    ];
    rows.extend(r.extras.0.iter().map(|(k, v)| (k.clone(), format_f64(*v))));
    Report::new("probe", r, Table::pairs(rows))
}

fn schemes(config: &ProbeConfig) -> Result<Vec<Scheme>> {
    match config.raw("schemes") {
        None => Ok(vec![Scheme::MonotoneDown, Scheme::Oscillating, Scheme::NoiseDecay]),
        Some(list) => list.split(',').map(|s| s.trim().parse()).collect(),
    }
}

fn population(config: &ProbeConfig, seed: u64, count: usize) -> Result<Vec<AtomicRV>> {
    random_population(
        config.get("population", count)?,
        config.get("min_n", 2)?,
        config.get("max_n", 32)?,
        seed,
    )
}

fn run_probe(probe: &Probe, seed: u64, config: &ProbeConfig) -> Result<Report> {
    match probe {
        Probe::Axioms { measure: m } => {
            let rho = measure(m)?;
            let pop = population(config, seed, 100)?;
            probe_report(&check_axioms(&rho, &pop, config.get("trials", 200)?, seed)?, config)
        }
        Probe::Fatou { measure: m, family, depth } => {
            let rho = measure(m)?;
            match family {
                Some(Family::ExpTruncation) => {
                    let (seq, limit) = exp_truncation_family(*depth)?;
                    probe_report(&fatou_probe_quantile(&rho, &seq, &limit, seed)?, config)
                }
                None => {
                    let pop = population(config, seed, 100)?;
                    let r = fatou_probe(&rho, &pop, &schemes(config)?, config.get("count", 24)?, seed)?;
                    probe_report(&r, config)
                }
            }
        }
        Probe::Dilatation { measure: m, input } => {
            let rho = measure(m)?;
            let x = read_values(input)?;
            let parts = random_partitions(x.len(), config.get("partitions", 100)?, config.get("max_blocks", 8)?, seed)?;
            probe_report(&dilatation_probe(&rho, &x, &parts, seed)?, config)
        }
        Probe::Coex { input, weights, partition } => {
            let x = read_values(input)?;
            let y = match weights {
                Some(p) => read_values(p)?,
                None => AtomicRV::constant(1.0, x.len())?,
            };
            let chain = if partition.is_empty() {
                default_chain(x.len())?
            } else {
                partition.iter().map(|p| read_partition(p)).collect::<Result<Vec<_>>>()?
            };
            let r = coex_probe(&x, &y, &chain)?;
            let table = Table {
                header: vec!["step", "value"],
                rows: r
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vec![i.to_string(), format_f64(*v)])
                    .collect(),
            };
            Report::new("probe", &r, table)
        }
        Probe::Blowup { law: l } => {
            let r = order_blowup_probe(
                &law(l)?,
                config.get("base_levels", 4)?,
                config.get("k", 4.0)?,
                config.get("trials", 64)?,
                seed,
            )?;
            let table = Table::pairs(vec![
                ("statistic".into(), format_f64(r.statistic)),
                ("k".into(), format_f64(r.k)),
                ("tail_mass".into(), format_f64(r.tail_mass)),
                ("bulk_mass".into(), format_f64(r.bulk_mass)),
            ]);
            Report::new("probe", &r, table)
        }
    }
}

/// Trivial, consecutive pairs, singletons; repeated members dropped.
fn default_chain(n: usize) -> Result<Vec<Partition>> {
    let mut sizes = vec![2; n / 2];
    if n % 2 == 1 {
        sizes.push(1);
    }
    let mut chain = vec![Partition::trivial(n)?, Partition::contiguous(&sizes)?, Partition::singletons(n)?];
    chain.dedup();
    Ok(chain)
}
