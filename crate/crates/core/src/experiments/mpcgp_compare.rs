//! Side-by-side comparison of the piecewise process and its
//! shifted-partition mixture on one shared reference dataset: heat maps of a
//! single realisation and the mean jump across base-partition edges.

use super::config::ExperimentConfig;
use super::field_study::square_grid_counts;
use super::output::{fmt_g9, write_csv};
use crate::error::Result;
use crate::functionals::summarize;
use crate::geometry::{regular_grid, uniform_locations, GridStyle, Partition};
use crate::pcgp::{edge_discontinuity, MpcgpModel, PcgpModel};
use crate::sparse::{ReferenceSet, SparseFactor};
use rayon::prelude::*;
use std::path::PathBuf;

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stream = super::experiment_stream(cfg);
    let d = cfg.domain.dim();
    let refs = uniform_locations(&cfg.domain, cfg.reference_count, stream.child(0))?;
    let refset = ReferenceSet::from_unordered(&refs, cfg.ordering, cfg.reference_rule)?;
    let factor = SparseFactor::build(&cfg.covariance, &refset)?;
    let z_data = factor.simulate(stream.child(1));

    let grid_size = cfg.grid_sizes.iter().copied().max().unwrap_or(10_000);
    let counts = square_grid_counts(d, grid_size)?;
    let grid = regular_grid(&cfg.domain, &counts, GridStyle::CellCentered)?;

    let base = Partition::new(&cfg.domain, &cfg.partition_counts, &vec![0.0; d])?;
    let plain = PcgpModel::new(
        cfg.covariance.clone(),
        refset.clone(),
        factor.clone(),
        base.clone(),
        cfg.m_region,
    )?
    .with_cell_cap(cfg.cell_cap);
    let mix = MpcgpModel::with_domain(
        &cfg.domain,
        cfg.covariance.clone(),
        refset.clone(),
        factor.clone(),
        &cfg.partition_counts,
        cfg.m_region,
        cfg.mixture_size,
        cfg.cell_cap,
    )?;
    let plain_plan = plain.plan(std::slice::from_ref(&grid))?;
    let mix_plans = mix.plan(std::slice::from_ref(&grid))?;

    let reps = cfg.replications;
    let grid_counts = (counts[0], counts[1]);
    // both models share the per-replication target substream, so a mixture
    // of one reproduces the plain run bit for bit
    let stats: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64)> {
            let t_stream = stream.child(2).child(rep as u64);
            let vp = plain.simulate(&plain_plan, &z_data, t_stream);
            let vm = mix.simulate(&mix_plans, &z_data, t_stream);
            Ok((
                edge_discontinuity(vp.as_slice(), &grid, grid_counts, &base)?,
                edge_discontinuity(vm.as_slice(), &grid, grid_counts, &base)?,
            ))
        })
        .collect::<Result<_>>()?;

    let plain_stats: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let mix_stats: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let sp = summarize(&plain_stats);
    let sm = summarize(&mix_stats);
    let mut files = vec![write_csv(
        &cfg.out_dir,
        "mpcgp_edge_stats.csv",
        &["model", "mean_edge_jump", "sd", "se", "replications"],
        &[
            vec![
                "pcgp".to_string(),
                fmt_g9(sp.mean),
                fmt_g9(sp.sd),
                fmt_g9(sp.se),
                sp.n.to_string(),
            ],
            vec![
                "mpcgp".to_string(),
                fmt_g9(sm.mean),
                fmt_g9(sm.sd),
                fmt_g9(sm.se),
                sm.n.to_string(),
            ],
        ],
    )?];

    // heat maps of replication 0 and the shared reference values
    let t0 = stream.child(2).child(0);
    let heat = |values: &nalgebra::DVector<f64>| -> Vec<Vec<String>> {
        grid.iter()
            .zip(values.iter())
            .map(|(loc, v)| {
                let mut row: Vec<String> = loc.coords().iter().map(|c| fmt_g9(*c)).collect();
                row.push(fmt_g9(*v));
                row
            })
            .collect()
    };
    let vp = plain.simulate(&plain_plan, &z_data, t0);
    let vm = mix.simulate(&mix_plans, &z_data, t0);
    files.push(write_csv(
        &cfg.out_dir,
        "mpcgp_heatmap_pcgp.csv",
        &["x", "y", "value"],
        &heat(&vp),
    )?);
    files.push(write_csv(
        &cfg.out_dir,
        "mpcgp_heatmap_mpcgp.csv",
        &["x", "y", "value"],
        &heat(&vm),
    )?);
    for model in ["pcgp", "mpcgp"] {
        let rows: Vec<Vec<String>> = refset
            .locations()
            .iter()
            .zip(z_data.iter())
            .map(|(loc, v)| {
                let mut row: Vec<String> = loc.coords().iter().map(|c| fmt_g9(*c)).collect();
                row.push(fmt_g9(*v));
                row
            })
            .collect();
        files.push(write_csv(
            &cfg.out_dir,
            &format!("mpcgp_reference_{model}.csv"),
            &["x", "y", "value"],
            &rows,
        )?);
    }
    Ok(files)
}
