//! On-disk forest: `manifest.json` plus one `tree_XXXX.json` per tree.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lmdi_core::data::Task;
use lmdi_core::forest::{ForestModel, ForestParams};
use lmdi_core::tree::TreeModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::output::Outputs;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub params: ForestParams,
    pub seed: u64,
    pub task: Task,
    pub n: usize,
    pub p: usize,
    pub n_trees: usize,
    pub feature_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    tree: TreeModel,
    in_bag_counts: Vec<u32>,
}

fn tree_file(t: usize) -> String {
    format!("tree_{t:04}.json")
}

pub fn save(forest: &ForestModel, feature_names: &[String], out: &mut Outputs) -> Result<()> {
    let manifest = Manifest {
        params: forest.params().clone(),
        seed: forest.seed(),
        task: forest.task(),
        n: forest.n_train(),
        p: forest.n_features(),
        n_trees: forest.n_trees(),
        feature_names: feature_names.to_vec(),
    };
    out.write_json("manifest.json", &manifest)?;
    for (t, (tree, counts)) in forest.trees().iter().zip(forest.in_bag_counts()).enumerate() {
        out.write_json(
            &tree_file(t),
            &TreeFile {
                tree: tree.clone(),
                in_bag_counts: counts.clone(),
            },
        )?;
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("malformed {}", path.display()))
}

pub fn load(dir: &Path) -> Result<(ForestModel, Manifest)> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.feature_names.len() != manifest.p {
        bail!("manifest lists {} feature names for p = {}", manifest.feature_names.len(), manifest.p);
    }
    let mut trees = Vec::with_capacity(manifest.n_trees);
    let mut counts = Vec::with_capacity(manifest.n_trees);
    for t in 0..manifest.n_trees {
        let file: TreeFile = read_json(&dir.join(tree_file(t)))?;
        // rebuild so the structural checks run on whatever was on disk
        let tree = TreeModel::from_parts(file.tree.nodes().to_vec(), file.tree.splits().to_vec(), manifest.p)
            .with_context(|| format!("tree {t} is inconsistent"))?;
        trees.push(tree);
        counts.push(file.in_bag_counts);
    }
    let forest = ForestModel::from_parts(
        trees,
        counts,
        manifest.params.clone(),
        manifest.seed,
        manifest.task,
        manifest.n,
        manifest.p,
    )?;
    Ok((forest, manifest))
}
