use mibmi::channels::{normalize, preset, preset_from_file, rank_channels_averaged, select_top, ChannelRanking};
use serde_json::json;

use super::{json_bytes, load_checkpoint, load_dataset, sibling};
use crate::error::{CliError, CliResult};
use crate::manifest::{check_output_path, digest_json, Outputs, RunManifest};
use crate::SelectArgs;

pub fn run(args: SelectArgs) -> CliResult<()> {
    check_output_path(&args.out)?;
    let ranking_path = match (&args.ranking, args.checkpoints.is_empty()) {
        (Some(p), _) => Some(p.clone()),
        (None, false) => Some(sibling(&args.out, ".ranking.json")),
        (None, true) => None,
    };
    if let Some(p) = &ranking_path {
        check_output_path(p)?;
        if args.checkpoints.is_empty() {
            return Err(CliError::validation("--ranking needs at least one --checkpoint"));
        }
    }
    if args.n_bar.is_none() && args.preset.is_none() && args.preset_file.is_none() {
        return Err(CliError::validation("give one of --n-bar, --preset or --preset-file"));
    }
    if args.n_bar.is_some() && args.checkpoints.is_empty() {
        return Err(CliError::validation(
            "--n-bar needs at least one --checkpoint to rank channels",
        ));
    }

    let data = load_dataset(&args.data)?;
    let d = &data.value;
    let checkpoints = args
        .checkpoints
        .iter()
        .map(|p| load_checkpoint(p))
        .collect::<CliResult<Vec<_>>>()?;
    for (c, p) in checkpoints.iter().zip(&args.checkpoints) {
        if c.value.config().n_ch != d.n_ch() {
            return Err(CliError::validation(format!(
                "checkpoint {} has {} input channels but {} has {}",
                p.display(),
                c.value.config().n_ch,
                args.data.display(),
                d.n_ch()
            )));
        }
    }
    let ranking: Option<ChannelRanking> = if checkpoints.is_empty() {
        None
    } else {
        let weights: Vec<_> = checkpoints
            .iter()
            .map(|c| &c.value.network.spatial.weight.value)
            .collect();
        Some(rank_channels_averaged(&weights, Some(d.channel_names()))?)
    };

    let (mut selected, source) = if let Some(n_bar) = args.n_bar {
        (
            select_top(ranking.as_ref().expect("checked above"), n_bar)?,
            format!("top-{n_bar}"),
        )
    } else {
        let p = match (&args.preset, &args.preset_file) {
            (Some(name), _) => preset(name)?,
            (None, Some(path)) => preset_from_file(path).map_err(|e| CliError::context(path.display(), e))?,
            (None, None) => unreachable!("checked above"),
        };
        let names: Vec<String> = p.electrodes.iter().map(|e| normalize(e)).collect();
        (d.channel_indices(&names)?, p.name)
    };
    selected.sort_unstable();
    let reduced = d.select_channels(&selected)?;
    let selected_names: Vec<&str> = selected.iter().map(|&i| d.channel_names()[i].as_str()).collect();

    println!("selection {source}: {} of {} channels", selected.len(), d.n_ch());
    if let Some(r) = &ranking {
        for (rank, c) in r.channels.iter().enumerate() {
            let mark = if selected.contains(&c.index) { "*" } else { " " };
            println!("{mark} {:>3} {:>4} {:<8} {:.6}", rank + 1, c.index, c.name, c.norm);
        }
    }
    println!("selected: {}", selected_names.join(" "));

    let digest = digest_json(&json!({ "selection": source, "selected": selected }));
    let mut manifest = RunManifest::new("select-channels", digest);
    manifest.inputs.push(data.record);
    manifest.inputs.extend(checkpoints.into_iter().map(|c| c.record));
    let mut out = Outputs::default();
    out.add(&args.out, reduced.to_bytes()?);
    if let (Some(path), Some(r)) = (&ranking_path, &ranking) {
        out.add(
            path,
            json_bytes(&json!({
                "ranking": r,
                "selection": source,
                "selected": selected,
                "selected_names": selected_names,
            })),
        );
    }
    out.commit(manifest)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
