//! `pipeforge explain`: move-by-move narrative of a trace plus a replay check.

use std::io::Write;

use pipeforge_core::game::{META_LEN, TASK_LEN};
use pipeforge_core::trace::initial_state_of;
use pipeforge_core::{verify_replay, ActionSpace, Catalog, TraceFile};

use crate::setup::say;
use crate::{usage, CliError, ExplainArgs};

pub fn run(args: ExplainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let catalog = match &args.catalog {
        Some(p) => Catalog::from_path(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => Catalog::builtin(),
    };
    let file = TraceFile::read(&args.trace).map_err(|e| usage(format!("{}: {e}", args.trace.display())))?;
    // Without an explicit limit, the slot count of the recorded state vectors decides.
    let recorded = file.moves.first().map(|m| m.state_vec.len().saturating_sub(META_LEN + TASK_LEN));
    let catalog = match args.max_len.or(recorded) {
        Some(l) if l != catalog.max_len() => catalog.with_max_len(l).map_err(usage)?,
        _ => catalog,
    };
    let space = ActionSpace::new(&catalog);

    let start = initial_state_of(&file);
    say(
        out,
        format_args!("start: empty pipeline, task {}", start.task().kind()),
    )?;
    for m in &file.moves {
        let action = space
            .decode(m.action)
            .map(|a| a.describe(&catalog))
            .unwrap_or_else(|_| format!("unknown action {}", m.action));
        let top = m.pi.iter().copied().fold(0.0f64, f64::max);
        say(out, format_args!("move {}: {action}; π(top)={top:.2}", m.move_number))?;
    }
    say(out, format_args!("final pipeline: [{}]", file.outcome.final_pipeline.join(", ")))?;
    say(
        out,
        format_args!("e: {:.6} ({})", file.outcome.evaluation, file.outcome.status.as_str()),
    )?;
    match verify_replay(&file, &catalog) {
        Ok(_) => say(out, format_args!("replay check: OK")),
        Err(m) => {
            say(out, format_args!("replay check: FAILED at move {}", m.move_number))?;
            Err(CliError::Failed(format!("replay check failed at move {}: {}", m.move_number, m.reason)))
        }
    }
}
