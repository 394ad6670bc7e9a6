//! `pipeforge selfplay`: the play-train loop with reports, traces and a checkpoint on disk.

use std::fs::File;
use std::io::Write;
use std::sync::Arc;

use pipeforge_core::selfplay::SelfPlayError;
use pipeforge_core::{run_iterations, NetParams};

use crate::setup::{config_setups, create_dir, load_config, load_net, say, write_file};
use crate::{io_err, usage, CliError, SelfplayArgs};

pub fn run(args: SelfplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config, &args.overrides)?;
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(g) = args.games {
        cfg.games_per_iteration = g;
    }
    let catalog = Arc::new(cfg.load_catalog().map_err(usage)?);
    let net = match &args.checkpoint {
        Some(p) => load_net(p, &catalog)?,
        None => NetParams::init(&catalog, cfg.embedding_dim, cfg.hidden_dim, cfg.hyper(), cfg.seed),
    };
    let setups = config_setups(&cfg, &catalog)?;

    let traces_dir = args.out_dir.join("traces");
    create_dir(&traces_dir)?;
    let reports_path = args.out_dir.join("reports.jsonl");
    let mut reports = File::create(&reports_path).map_err(|e| io_err(&reports_path, e))?;

    let sp = cfg.selfplay_config();
    let result = run_iterations(&catalog, &setups, &sp, net, |report, games| {
        for (g, trace) in games.iter().enumerate() {
            let name = format!("iter{:03}_game{:03}.jsonl", report.iteration, g);
            std::fs::write(traces_dir.join(name), trace.to_jsonl())?;
        }
        let line = serde_json::to_string(report).map_err(std::io::Error::other)?;
        writeln!(reports, "{line}")?;
        reports.flush()?;
        let loss = match (report.loss_before, report.loss_after) {
            (Some(b), Some(a)) => format!("{b:.4} -> {a:.4}"),
            _ => "-".to_string(),
        };
        writeln!(
            out,
            "iteration {}/{}: mean_e {:.4} max_e {:.4} best_e {:.4} loss {loss}",
            report.iteration, sp.iterations, report.mean_e, report.max_e, report.best_e
        )?;
        out.flush()
    });
    let outcome = result.map_err(|e| match e {
        SelfPlayError::Game { .. } | SelfPlayError::Train { .. } => CliError::Failed(e.to_string()),
        SelfPlayError::Config(_) | SelfPlayError::Sink { .. } => usage(e),
    })?;

    let checkpoint = args.out_dir.join("checkpoint.json");
    write_file(&checkpoint, &outcome.net.to_checkpoint_json(&catalog.hash()))?;
    if let Some(last) = outcome.reports.last() {
        say(
            out,
            format_args!(
                "best: [{}] e={:.4} ({} iteration {} game {})",
                last.best_pipeline.join(", "),
                last.best_e,
                last.best_dataset,
                last.best_game.iteration,
                last.best_game.game
            ),
        )?;
    }
    say(out, format_args!("reports: {}", reports_path.display()))?;
    say(out, format_args!("checkpoint: {}", checkpoint.display()))
}
