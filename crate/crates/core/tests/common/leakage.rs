//! Poisoning test: rewriting validation rows must not change any fitted stage parameter.

use pipeforge_core::eval::{fit_fold, fold_splits, Dataset};
use pipeforge_core::{Catalog, TaskSpec};

/// Rewrites the given data rows: numeric cells are scaled and shifted, text cells become
/// an unseen category, and targets move to a different label or value.
pub fn poison(text: &str, rows: &[usize], target: &str, regression: bool) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let t = header.iter().position(|h| *h == target).unwrap();
    let labels: Vec<String> = {
        let mut v: Vec<String> = lines[1..].iter().map(|l| l.split(',').nth(t).unwrap().to_string()).collect();
        v.sort();
        v.dedup();
        v
    };
    for &r in rows {
        let cells: Vec<String> = lines[r + 1]
            .split(',')
            .enumerate()
            .map(|(c, cell)| {
                if c == t {
                    if regression {
                        format!("{}", cell.parse::<f64>().unwrap() * -37.0 + 1000.0)
                    } else {
                        let k = labels.iter().position(|l| l == cell).unwrap();
                        labels[(k + 1) % labels.len()].clone()
                    }
                } else if let Ok(v) = cell.parse::<f64>() {
                    format!("{}", v * 1e3 - 7e5)
                } else if cell.is_empty() || cell == "NA" {
                    "123456".to_string()
                } else {
                    "poison".to_string()
                }
            })
            .collect();
        lines[r + 1] = cells.join(",");
    }
    lines.join("\n") + "\n"
}

/// Every transform before every estimator on three fixtures and five folds. Returns the
/// number of fitted comparisons, or a description of the first difference.
pub fn poisoning_check() -> Result<usize, String> {
    let catalog = Catalog::builtin();
    let transforms = [
        "mean-imputer",
        "median-imputer",
        "constant-imputer",
        "standard-scaler",
        "minmax-scaler",
        "identity-transform",
        "variance-threshold",
        "top-k-target-correlation",
    ];
    let mut fitted = 0;
    for name in ["mixed_binary", "three_class", "linear_regression"] {
        let task: TaskSpec = super::fixture_task(name);
        let text = std::fs::read_to_string(super::fixture(&format!("{name}.csv"))).unwrap();
        let ds = Dataset::from_csv_str(name, &text, &task).unwrap();
        let regression = !task.kind().is_classification();
        let estimators: &[&str] = if regression { &["sgd-linear"] } else { &["sgd-linear", "gaussian-nb"] };
        for (train, valid) in fold_splits(ds.target(), 5, 1) {
            let poisoned = Dataset::from_csv_str(name, &poison(&text, &valid, task.target_column(), regression), &task)
                .unwrap();
            for t in transforms {
                for est in estimators {
                    // Imputation first so every stage sees complete data.
                    let ids: Vec<&str> = if t.ends_with("imputer") { vec![t, est] } else { vec!["mean-imputer", t, est] };
                    let p = catalog.resolve(&ids).unwrap();
                    // Unscaled SGD may diverge; it must then diverge identically.
                    match (fit_fold(&catalog, &p, &ds, &train, 9), fit_fold(&catalog, &p, &poisoned, &train, 9)) {
                        (Ok(clean), Ok(dirty)) => {
                            if clean.parameters() != dirty.parameters() {
                                return Err(format!("{name} {ids:?}: fitted parameters differ"));
                            }
                            fitted += 1;
                        }
                        (Err(a), Err(b)) if a.to_string() == b.to_string() => {}
                        (a, b) => return Err(format!("{name} {ids:?}: {:?} vs {:?}", a.err(), b.err())),
                    }
                }
            }
        }
    }
    Ok(fitted)
}
