//! End-to-end driver: stages run in order, each writing `<name>.<ext>` and
//! `<name>.manifest.json` to the output directory. A stage whose manifest
//! matches its config and inputs, and whose outputs are intact, is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use mathcode_core::manifest::{hash_config, Artifact, StageManifest};
use serde_json::json;

use crate::config::{parse_input, Input, PipelineConfig, Stage};
use crate::context::Context;
use crate::stages::{execute, manifest_path, StageIo};

pub struct StageSummary {
    pub name: String,
    pub kind: &'static str,
    pub skipped: bool,
    pub manifest: StageManifest,
}

/// Hash of everything besides the input files that decides a stage's output.
pub fn stage_hash(stage: &Stage, ctx: &Context) -> String {
    hash_config(&json!({
        "stage": stage,
        "seed": ctx.seed,
        "tokens": ctx.tokens,
        "request": ctx.gateway_config.request,
    }))
}

/// Write a manifest for a stage that just finished. Any old manifest is
/// removed before the stage starts, so an interrupted stage leaves none.
pub fn run_stage(stage: &Stage, io: &StageIo, ctx: &Context, inputs: Vec<Artifact>) -> anyhow::Result<StageManifest> {
    let manifest_file = manifest_path(&io.output);
    if manifest_file.exists() {
        std::fs::remove_file(&manifest_file).with_context(|| format!("removing {}", manifest_file.display()))?;
    }
    let manifest = execute(stage, io, ctx, stage_hash(stage, ctx), inputs)?;
    manifest.write(&manifest_file)?;
    Ok(manifest)
}

pub fn run_pipeline(
    config: &PipelineConfig,
    base: &Path,
    output_dir: &Path,
    ctx: &Context,
    force: bool,
) -> anyhow::Result<Vec<StageSummary>> {
    std::fs::create_dir_all(output_dir).with_context(|| format!("creating {}", output_dir.display()))?;
    let outputs: BTreeMap<&str, PathBuf> = config
        .stages
        .iter()
        .map(|s| {
            (
                s.name(),
                output_dir.join(format!("{}.{}", s.name(), s.output_kind().extension())),
            )
        })
        .collect();
    let resolve = |raw: &str| match parse_input(raw, base) {
        Input::Stage(name) => outputs[name.as_str()].clone(),
        Input::Path(p) => p,
    };

    let mut summaries = Vec::new();
    let mut earlier: Vec<(String, PathBuf)> = Vec::new();
    for stage in &config.stages {
        let output = outputs[stage.name()].clone();
        let io = StageIo {
            resolve: &resolve,
            output: output.clone(),
            manifests: match stage {
                Stage::Stats(_) => earlier.clone(),
                _ => Vec::new(),
            },
        };
        let inputs = io.input_artifacts(stage)?;
        let previous = StageManifest::read(manifest_path(&output)).ok();
        let hash = stage_hash(stage, ctx);
        let (skipped, manifest) = match previous {
            Some(m) if !force && m.is_current(&hash, &inputs) => {
                log::info!("stage {} is up to date", stage.name());
                (true, m)
            }
            _ => {
                log::info!("running stage {} ({})", stage.name(), stage.kind_name());
                (false, run_stage(stage, &io, ctx, inputs)?)
            }
        };
        earlier.push((stage.name().to_string(), manifest_path(&output)));
        summaries.push(StageSummary {
            name: stage.name().to_string(),
            kind: stage.kind_name(),
            skipped,
            manifest,
        });
    }
    Ok(summaries)
}
