use std::process::ExitCode;

use clap::Parser;
use pauliprop_cli::{bench, oracle_check, run, write_bench_csv, Cli, CliError, RunConfig};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pauliprop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli)?;
    if cfg.oracle_check {
        let report = oracle_check(&cfg)?;
        for row in &report.rows {
            println!(
                "t={} engine={:.15} reference={:.15} deviation={:.3e}",
                row.t,
                row.engine,
                row.reference,
                (row.engine - row.reference).abs()
            );
        }
        if let Some(d) = report.coefficient_deviation {
            println!("coefficient deviation {d:.3e}");
        }
        let worst = report.max_deviation();
        println!("max deviation {worst:.3e}");
        if cfg.epsilon0 == 0.0 && worst > 1e-10 {
            return Err(CliError::Numerical(format!(
                "engine deviates from the dense reference by {worst:.3e}"
            )));
        }
        return Ok(());
    }
    if let Some(sweep) = &cfg.bench {
        let rows = bench(&cfg, sweep)?;
        std::fs::create_dir_all(&cfg.out)?;
        let path = cfg.out.join("bench.csv");
        write_bench_csv(&path, &rows)?;
        println!("{}", pauliprop_cli::BENCH_HEADER);
        for r in &rows {
            println!(
                "{},{},{},{:.6},{:.6},{:.6}",
                r.workers, r.t, r.term_count, r.wall_ms_per_gate, r.compute_ms_per_gate, r.exchange_ms_per_gate
            );
        }
        return Ok(());
    }
    let summary = run(&cfg)?;
    if let Some(last) = summary.records.last() {
        println!(
            "completed {} layers: observable {} with {} terms",
            last.t, last.observables[0], last.term_count
        );
    }
    println!("ledger written to {}", cfg.out.join("ledger.csv").display());
    Ok(())
}
