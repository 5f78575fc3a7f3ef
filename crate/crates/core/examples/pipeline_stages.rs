//! The extract, pool, hash, eval and distance stages on a small synthetic
//! dataset, the same way the `orbitpool` command runs them.

use orbitpool::pipeline::{cmd_distance, cmd_eval, cmd_extract, cmd_hash, cmd_pool, RunConfig, StageOptions};
use orbitpool::synthetic::rotation_benchmark;

const CONFIG: &str = r#"
manifest = "manifest.json"
sequence = "A:scale,S:trans,M:rot"

[paths]
images = "images"
output = "out"

[orbit]
scale_steps = 3
target_size = [28, 28]

[extractor]
kind = "toy"
n_stages = 2
channels_out = 8

[distance]
pairs = [["img000", "img000_rot90"], ["img000", "img001"]]
"#;

fn main() -> orbitpool::Result<()> {
    let root = std::env::temp_dir().join("orbitpool-pipeline-example");
    let bench = rotation_benchmark(3, 28, 5);
    for (id, img) in &bench.images {
        std::fs::create_dir_all(root.join("images"))?;
        img.save_png(root.join("images").join(format!("{id}.png")))?;
    }
    std::fs::write(root.join("manifest.json"), bench.manifest.to_json())?;
    std::fs::write(root.join("run.toml"), CONFIG)?;

    let mut cfg = RunConfig::load(root.join("run.toml"))?;
    let opts = StageOptions { force: true, ..StageOptions::default() };
    for summary in
        [cmd_extract(&cfg, &opts)?, cmd_pool(&cfg, &opts)?, cmd_hash(&cfg, &opts)?, cmd_distance(&cfg, &opts)?]
    {
        println!("{:>8}: {} written, {} failed", summary.stage, summary.written, summary.failed.len());
    }
    let (_, float) = cmd_eval(&cfg, &opts)?;
    cfg.hash = true;
    let (_, hashed) = cmd_eval(&cfg, &opts)?;
    println!(
        "mAP {:.4} ({}), {:.4} ({})",
        float.value, float.config["distance"], hashed.value, hashed.config["distance"]
    );
    print!("{}", std::fs::read_to_string(cfg.distances_path())?);
    println!("artifacts under {}", root.join("out").display());
    Ok(())
}
