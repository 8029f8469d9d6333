use serde::{Deserialize, Serialize};
use specedge::moments::MomentReport;
use specedge::{Exec, ProfileSpec, SCHEMA_VERSION};

use super::{predict, Prediction};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::OutputDir;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeOutput {
    pub schema_version: u32,
    pub config_hash: String,
    pub profile: ProfileSpec,
    pub prediction: Prediction,
    pub report: MomentReport,
}

/// One row of `edge.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub config_hash: String,
    pub k: usize,
    pub m_2k: f64,
    pub edge_root: Option<f64>,
    pub edge_ratio: Option<f64>,
}

pub fn cmd_edge(cfg: &ExperimentConfig, exec: Exec) -> CliResult<EdgeOutput> {
    let (report, prediction) = predict(cfg, exec)?;
    Ok(EdgeOutput {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        profile: cfg.profile.clone(),
        prediction,
        report,
    })
}

impl EdgeOutput {
    pub fn rows(&self) -> Vec<MomentRow> {
        let r = &self.report;
        r.m_even
            .iter()
            .enumerate()
            .map(|(k, &m)| MomentRow {
                config_hash: self.config_hash.clone(),
                k,
                m_2k: m,
                edge_root: k.checked_sub(1).map(|j| r.edge_root[j]),
                edge_ratio: k.checked_sub(1).map(|j| r.edge_ratio[j]),
            })
            .collect()
    }

    pub fn write(&self, out: &OutputDir) -> CliResult<()> {
        out.write_json("edge.json", self)?;
        out.write_csv("edge.csv", &self.rows())?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let p = &self.prediction;
        format!(
            "edge: {:?} estimate {:.6} (root lower bound {:.6}, K = {}){}",
            p.method,
            p.value,
            p.root_lower,
            p.k,
            if p.low_confidence { " [low confidence]" } else { "" }
        )
    }
}
