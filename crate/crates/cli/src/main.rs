use std::io::IsTerminal;
use std::process::ExitCode;

use clap::Parser;
use qpwegner_cli::{resolve_config, run_to_dir, Cli, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};

fn paint(text: &str, code: &str) -> String {
    let color = std::io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty());
    if color {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_PASS as u8 });
        }
    };
    let run = resolve_config(&cli).and_then(|cfg| {
        if cfg.has_custom_frequency() {
            eprintln!("warning: custom frequency matrix; its Diophantine property is not checked (see `spacing`)");
        }
        run_to_dir(cli.command, &cfg, &cli.out, cli.threads)
    });
    match run {
        Ok(run) => {
            for line in &run.outcome.lines {
                println!("{line}");
            }
            let verdict = if run.outcome.pass { paint("PASS", "32") } else { paint("FAIL", "31") };
            println!("{verdict} {} ({:.2} s)", cli.command.name(), run.seconds);
            println!("wrote {}, {}, {}", run.paths.csv.display(), run.paths.json.display(), run.paths.manifest.display());
            ExitCode::from(if run.outcome.pass { EXIT_PASS } else { EXIT_FAIL } as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
