//! Command-line entry points: dataset generation, surrogate training with
//! or without worst-case enrichment, model verification, and comparison
//! reports.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wcpfnn::config::{reconcile, ConfigError, ExperimentConfig};
use wcpfnn::dataset::{generate_labeled_dataset, load_csv, save_csv, Dataset};
use wcpfnn::enrich::{run_pfnn_baseline, run_wc_pfnn, RunLog};
use wcpfnn::grid::{
    build_admittance, build_quadratic_forms, parse_matpower_case, InputDomain, NetworkCase,
    QuadraticFormModel,
};
use wcpfnn::nn::{pair_from_json, pair_to_json, PfnnPair};
use wcpfnn::opf::solve_opf_penalty;
use wcpfnn::report::{compare, d_fraction_nominal, runlog_from_json, runlog_to_csv, runlog_to_json};
use wcpfnn::verifier::{find_worst_case, fit_hypercube, Side, VerifyConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_NOT_CERTIFIED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "wcpfnn",
    about = "AC-OPF neural surrogates with certified worst-case training"
)]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Samples and labels a dataset, writing CSV + provenance.
    Generate,
    /// Trains a surrogate pair.
    Train {
        /// `pfnn` (fixed dataset baseline) or `wc-pfnn` (enrichment loop).
        #[arg(long)]
        method: String,
    },
    /// Verifies a trained model's worst-case violation and hypercube.
    Verify {
        /// Model JSON file (defaults to `<out>/model-<method>.json`).
        #[arg(long)]
        model: PathBuf,
    },
    /// Compares a baseline run log against an enriched one.
    Report {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        enriched: PathBuf,
    },
}

struct Loaded {
    cfg: ExperimentConfig,
    case: NetworkCase,
    qf: QuadraticFormModel,
    domain: InputDomain,
}

fn load_experiment(cli: &Cli) -> Result<Loaded, String> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p.to_str().ok_or("non-utf8 config path")?)
            .map_err(|e| e.to_string())?,
        None => return Err("--config is required for this command".into()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    reconcile(&mut cfg);
    cfg.validate().map_err(|e| e.to_string())?;
    if cfg.case_path.is_empty() {
        return Err(ConfigError::MissingCase("<unset>".into()).to_string());
    }
    let text = std::fs::read_to_string(&cfg.case_path).map_err(|e| e.to_string())?;
    let case = parse_matpower_case(&text).map_err(|e| e.to_string())?;
    let adm = build_admittance(&case).map_err(|e| e.to_string())?;
    let qf = build_quadratic_forms(&case, &adm).map_err(|e| e.to_string())?;
    let domain = InputDomain::from_nominal_fraction(
        &qf,
        cfg.load_lower_fraction,
        cfg.load_upper_fraction,
    );
    Ok(Loaded {
        cfg,
        case,
        qf,
        domain,
    })
}

fn write(path: &Path, content: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
    }
    std::fs::write(path, content).map_err(|e| e.to_string())
}

fn cmd_generate(exp: &Loaded) -> Result<(), (u8, String)> {
    let Loaded {
        cfg, case, qf, domain, ..
    } = exp;
    let labeler = |d: &[f64]| -> Result<(Vec<f64>, Vec<f64>), String> {
        solve_opf_penalty(qf, case, d, &cfg.opf)
            .map(|sol| (sol.g, sol.v))
            .map_err(|e| e.to_string())
    };
    let ds = generate_labeled_dataset(qf, domain, cfg.dataset_size, cfg.seed, &labeler)
        .map_err(|e| (EXIT_NUMERICAL, e.to_string()))?;
    let out = Path::new(&cfg.out_dir);
    write(&out.join("dataset.csv"), &save_csv(qf, &ds)).map_err(|e| (EXIT_CONFIG, e))?;
    let provenance = serde_json::json!({
        "case": cfg.case_path,
        "n": cfg.dataset_size,
        "seed": cfg.seed,
        "splits": {
            "train": ds.count(wcpfnn::dataset::Split::Train),
            "validation": ds.count(wcpfnn::dataset::Split::Validation),
            "test": ds.count(wcpfnn::dataset::Split::Test),
        },
        "provenance": ds.provenance,
    });
    write(
        &out.join("dataset.json"),
        &serde_json::to_string_pretty(&provenance).expect("json"),
    )
    .map_err(|e| (EXIT_CONFIG, e))?;
    println!(
        "wrote {} samples to {}",
        ds.samples.len(),
        out.join("dataset.csv").display()
    );
    Ok(())
}

fn read_dataset(exp: &Loaded) -> Result<Dataset, (u8, String)> {
    let path = Path::new(&exp.cfg.out_dir).join("dataset.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    load_csv(&text, &exp.qf, &exp.domain).map_err(|e| (EXIT_CONFIG, e.to_string()))
}

fn cmd_train(exp: &Loaded, method: &str) -> Result<(), (u8, String)> {
    let Loaded {
        cfg, case, qf, domain, ..
    } = exp;
    let mut dataset = read_dataset(exp)?;
    let mut pair = PfnnPair::new(qf, domain, &cfg.hidden_layers, cfg.seed);
    let log: RunLog = match method {
        "wc-pfnn" => run_wc_pfnn(qf, &mut dataset, &mut pair, &cfg.nn, &cfg.enrich, qf.base_mva)
            .map_err(|e| (EXIT_NUMERICAL, e.to_string()))?,
        "pfnn" => {
            let labeler = |d: &[f64]| -> Result<(Vec<f64>, Vec<f64>), String> {
                solve_opf_penalty(qf, case, d, &cfg.opf)
                    .map(|sol| (sol.g, sol.v))
                    .map_err(|e| e.to_string())
            };
            run_pfnn_baseline(
                qf,
                &mut dataset,
                &mut pair,
                &cfg.nn,
                &cfg.enrich,
                qf.base_mva,
                &labeler,
            )
            .map_err(|e| (EXIT_NUMERICAL, e.to_string()))?
        }
        other => {
            return Err((
                EXIT_CONFIG,
                format!("unknown method `{other}` (expected pfnn or wc-pfnn)"),
            ))
        }
    };
    let out = Path::new(&cfg.out_dir);
    write(&out.join(format!("model-{method}.json")), &pair_to_json(&pair))
        .map_err(|e| (EXIT_CONFIG, e))?;
    write(&out.join(format!("runlog-{method}.json")), &runlog_to_json(&log))
        .map_err(|e| (EXIT_CONFIG, e))?;
    write(&out.join(format!("runlog-{method}.csv")), &runlog_to_csv(&log))
        .map_err(|e| (EXIT_CONFIG, e))?;
    let last = log.rounds.last();
    println!(
        "trained {method}: final v_g_max = {} MVA over {} rounds",
        last.map_or(0.0, |r| r.v_g_max_mva),
        log.rounds.len()
    );
    Ok(())
}

fn cmd_verify(exp: &Loaded, model: &Path) -> Result<(), (u8, String)> {
    let Loaded { cfg, qf, domain, .. } = exp;
    let text = std::fs::read_to_string(model)
        .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", model.display())))?;
    let pair = pair_from_json(&text).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    let vcfg = VerifyConfig {
        alpha: cfg.enrich.alpha_wc,
        ..cfg.verify.clone()
    };
    let wc = find_worst_case(
        &pair.net_g,
        &domain.lower,
        &domain.upper,
        &qf.g_lower,
        &qf.g_upper,
        &vcfg,
    )
    .map_err(|e| (EXIT_NUMERICAL, e.to_string()))?;
    let hypercube = if wc.v_g_max > 0.0 {
        let limit = match wc.side {
            Side::Upper => qf.g_upper[wc.component],
            Side::Lower => qf.g_lower[wc.component],
        };
        let hc = fit_hypercube(&pair.net_g, &domain.lower, &domain.upper, &wc, limit, &vcfg)
            .map_err(|e| (EXIT_NUMERICAL, e.to_string()))?;
        Some(hc)
    } else {
        None
    };
    let report = serde_json::json!({
        "component": wc.component,
        "side": wc.side,
        "v_g_max_pu": wc.v_g_max,
        "v_g_max_mva": wc.v_g_max * qf.base_mva,
        "D_WC": wc.d_wc,
        "gap": wc.gap,
        "nodes": wc.node_count,
        "wall_ms": wc.wall_ms,
        "certified": wc.certified,
        "hypercube": hypercube.as_ref().map(|h| serde_json::json!({
            "alpha": h.alpha,
            "d_normalized": h.d_normalized,
            "d_fraction_nominal": d_fraction_nominal(
                h.d_normalized, &domain.lower, &domain.upper, &domain.nominal),
            "witness": h.witness,
        })),
    });
    let rendered = serde_json::to_string_pretty(&report).expect("json");
    let out = Path::new(&cfg.out_dir).join("verification.json");
    write(&out, &rendered).map_err(|e| (EXIT_CONFIG, e))?;
    println!("{rendered}");
    if !wc.certified {
        return Err((EXIT_NOT_CERTIFIED, "verification not certified".into()));
    }
    Ok(())
}

fn cmd_report(exp: &Loaded, baseline: &Path, enriched: &Path) -> Result<(), (u8, String)> {
    let Loaded { cfg, qf, domain, .. } = exp;
    let read_log = |p: &Path| -> Result<RunLog, (u8, String)> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", p.display())))?;
        runlog_from_json(&text).map_err(|e| (EXIT_CONFIG, e.to_string()))
    };
    let b = read_log(baseline)?;
    let e = read_log(enriched)?;
    let report = compare(&b, &e, qf, &domain.lower, &domain.upper, &domain.nominal);
    let rendered = serde_json::to_string_pretty(&report).expect("json");
    let out = Path::new(&cfg.out_dir).join("comparison.json");
    write(&out, &rendered).map_err(|err| (EXIT_CONFIG, err))?;
    println!("{rendered}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exp = match load_experiment(&cli) {
        Ok(l) => l,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match &cli.command {
        Command::Generate => cmd_generate(&exp),
        Command::Train { method } => cmd_train(&exp, method),
        Command::Verify { model } => cmd_verify(&exp, model),
        Command::Report { baseline, enriched } => cmd_report(&exp, baseline, enriched),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
