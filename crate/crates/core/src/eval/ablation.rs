use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::model::ModelConfig;
use crate::train::mean_std;

use super::EvalError;

/// Result of one trained model on a shared test set.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub config: ModelConfig,
    pub seed: u64,
    /// Identifies the dataset the run used.
    pub data: String,
    pub test_acc: f64,
    pub epochs_to_best: usize,
}

/// Mean and population standard deviation over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let (mean, std) = mean_std(xs);
        Stat { mean, std, n: xs.len() }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// One model with its higher-order and first-order variants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub model: String,
    pub second_acc: Option<Stat>,
    pub first_acc: Option<Stat>,
    pub second_epochs: Option<Stat>,
    pub first_epochs: Option<Stat>,
}

impl AblationRow {
    /// Mean accuracy of the higher-order variant minus its twin.
    pub fn gap(&self) -> Option<f64> {
        Some(self.second_acc?.mean - self.first_acc?.mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |s: Option<Stat>, scale: f64| match s {
            Some(s) => Stat {
                mean: s.mean * scale,
                std: s.std * scale,
                n: s.n,
            }
            .to_string(),
            None => "-".into(),
        };
        writeln!(
            f,
            "{:<22} {:>15} {:>15} {:>15} {:>15}",
            "model", "2nd order", "1st order", "epochs (2nd)", "epochs (1st)"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<22} {:>15} {:>15} {:>15} {:>15}",
                r.model,
                cell(r.second_acc, 100.0),
                cell(r.first_acc, 100.0),
                cell(r.second_epochs, 1.0),
                cell(r.first_epochs, 1.0)
            )?;
        }
        Ok(())
    }
}

/// Groups runs by model (cell and stack) and variant (higher-order or
/// first-order). Every variant must cover the same `(seed, data)` pairs,
/// and runs may differ only in cell kind, stack use or the ablation flag.
pub fn ablation_report(runs: &[AblationRun]) -> Result<AblationTable, EvalError> {
    let first = runs.first().ok_or(EvalError::Empty)?;
    for r in runs {
        let mut a = r.config;
        let mut b = first.config;
        for c in [&mut a, &mut b] {
            c.first_order_ablation = false;
            c.use_stack = false;
            c.cell = crate::cells::CellKind::TreeRnn;
        }
        if let Some(key) = a.first_difference(&b) {
            return Err(EvalError::Unpaired(format!("runs differ in `{key}`")));
        }
    }
    let mut groups: BTreeMap<(String, bool), Vec<&AblationRun>> = BTreeMap::new();
    for r in runs {
        let model = ModelConfig {
            first_order_ablation: false,
            ..r.config
        }
        .label();
        groups
            .entry((model, r.config.first_order_ablation))
            .or_default()
            .push(r);
    }
    let keys =
        |rs: &[&AblationRun]| -> BTreeSet<(u64, String)> { rs.iter().map(|r| (r.seed, r.data.clone())).collect() };
    let reference = keys(groups.values().next().expect("nonempty"));
    for ((model, ablated), rs) in &groups {
        if keys(rs) != reference || rs.len() != reference.len() {
            let variant = if *ablated { "1st order" } else { "2nd order" };
            return Err(EvalError::Unpaired(format!(
                "{model} ({variant}) covers different seeds or data"
            )));
        }
    }
    let mut order: Vec<String> = Vec::new();
    for r in runs {
        let m = ModelConfig {
            first_order_ablation: false,
            ..r.config
        }
        .label();
        if !order.contains(&m) {
            order.push(m);
        }
    }
    let stat = |model: &str, ablated: bool, f: fn(&AblationRun) -> f64| {
        groups.get(&(model.to_string(), ablated)).map(|rs| {
            let mut rs = rs.clone();
            rs.sort_by(|a, b| (a.seed, &a.data).cmp(&(b.seed, &b.data)));
            Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
        })
    };
    let rows = order
        .into_iter()
        .map(|m| AblationRow {
            second_acc: stat(&m, false, |r| r.test_acc),
            first_acc: stat(&m, true, |r| r.test_acc),
            second_epochs: stat(&m, false, |r| r.epochs_to_best as f64),
            first_epochs: stat(&m, true, |r| r.epochs_to_best as f64),
            model: m,
        })
        .collect();
    Ok(AblationTable { rows })
}
