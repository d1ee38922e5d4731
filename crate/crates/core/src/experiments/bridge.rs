//! Brownian-bridge study: empirical distribution of the path integral and
//! maximum under the sequential-neighbour and piecewise constructions on
//! nested dyadic grids, against the exact functional laws.

use super::config::ExperimentConfig;
use super::output::{fmt_g9, histogram_rows, write_csv, HISTOGRAM_BINS};
use crate::error::Result;
use crate::field::{FieldModel, SparseGp};
use crate::functionals::{bridge_laws, bridge_max_density, h3, summarize};
use crate::geometry::{Location, Partition};
use crate::pcgp::PcgpModel;
use crate::sparse::{ReferenceSet, SparseFactor};
use rayon::prelude::*;
use std::path::PathBuf;

/// Dyadic interior targets of each partition cell at the listed levels.
/// Level `n` places points at `a + i (b-a) / 2^n`, `i = 1 .. 2^n - 1`,
/// inside each cell `[a, b)`; listed levels are nested, and each entry
/// holds only the points new at that level.
pub(crate) fn bridge_level_targets(
    partition: &Partition,
    levels: &[usize],
) -> Vec<Vec<Location>> {
    let mut edges = vec![partition.domain().lower()[0]];
    edges.extend_from_slice(partition.cuts(0));
    edges.push(partition.domain().upper()[0]);
    levels
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let coarser: u64 = if k == 0 { 0 } else { 1u64 << (n - levels[k - 1]) };
            let denom = (1u64 << n) as f64;
            let mut pts = Vec::new();
            for w in edges.windows(2) {
                let (a, b) = (w[0], w[1]);
                let width = b - a;
                for i in 1..(1u64 << n) {
                    if coarser != 0 && i % coarser == 0 {
                        continue;
                    }
                    pts.push(Location::d1(a + width * (i as f64 / denom)));
                }
            }
            pts
        })
        .collect()
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let partition = Partition::new(&cfg.domain, &cfg.partition_counts, &[0.0])?;
    // reference locations sit exactly on the partition cuts
    let refs: Vec<Location> = partition.cuts(0).iter().map(|&c| Location::d1(c)).collect();
    let refset = ReferenceSet::new(refs, cfg.reference_rule)?;
    let factor = SparseFactor::build(&cfg.covariance, &refset)?;
    let level_targets = bridge_level_targets(&partition, &cfg.levels);

    let mut models: Vec<FieldModel> = Vec::new();
    if cfg.models.iter().any(|m| m == "nngp") {
        models.push(FieldModel::Sparse(SparseGp {
            model: cfg.covariance.clone(),
            refset: refset.clone(),
            factor: factor.clone(),
            target_rule: cfg.target_rule,
        }));
    }
    if cfg.models.iter().any(|m| m == "pcgp") {
        models.push(FieldModel::Pcgp(
            PcgpModel::new(
                cfg.covariance.clone(),
                refset.clone(),
                factor.clone(),
                partition.clone(),
                cfg.m_region,
            )?
            .with_cell_cap(cfg.cell_cap),
        ));
    }
    let plans = models
        .iter()
        .map(|m| m.plan(&level_targets))
        .collect::<Result<Vec<_>>>()?;

    let stream = super::experiment_stream(cfg);
    let reps = cfg.replications;
    // [rep][model][level] -> (integral, maximum)
    let sims: Vec<Vec<Vec<(f64, f64)>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = stream.child(rep as u64);
            let z = factor.simulate(rep_stream.child(0));
            plans
                .iter()
                .enumerate()
                .map(|(mi, plan)| {
                    let path = plan.simulate(&z, rep_stream.child(1 + mi as u64));
                    (0..plan.level_count())
                        .map(|l| {
                            let vals = path.at_level(l);
                            let integral = cfg.domain.volume() * vals.iter().sum::<f64>()
                                / vals.len() as f64;
                            let (_, max) = h3(vals);
                            (integral, max)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut files = Vec::new();
    let mut rows = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        for (li, &level) in cfg.levels.iter().enumerate() {
            let grid_size = plans[mi].level_end(li);
            let integrals: Vec<f64> = sims.iter().map(|r| r[mi][li].0).collect();
            let maxima: Vec<f64> = sims.iter().map(|r| r[mi][li].1).collect();
            for (stat, values) in [("integral", &integrals), ("maximum", &maxima)] {
                let s = summarize(values);
                rows.push(vec![
                    model.tag().to_string(),
                    level.to_string(),
                    grid_size.to_string(),
                    stat.to_string(),
                    fmt_g9(s.mean),
                    fmt_g9(s.sd),
                    fmt_g9(s.se),
                    s.n.to_string(),
                ]);
                files.push(write_csv(
                    &cfg.out_dir,
                    &format!("bb_hist_{stat}_{}_n{level}.csv", model.tag()),
                    &["bin_left", "bin_right", "count"],
                    &histogram_rows(values, HISTOGRAM_BINS),
                )?);
            }
        }
    }
    files.push(write_csv(
        &cfg.out_dir,
        "bb_results.csv",
        &["model", "level", "grid_size", "statistic", "mean", "sd", "se", "replications"],
        &rows,
    )?);

    // exact laws sampled on fine grids, for plotting against the histograms
    let laws = bridge_laws();
    let sd = laws.integral_variance.sqrt();
    let integral_rows: Vec<Vec<String>> = (0..=200)
        .map(|k| {
            let x = -4.2 * sd + 8.4 * sd * k as f64 / 200.0;
            let dens = (-0.5 * (x / sd) * (x / sd)).exp()
                / (sd * (2.0 * std::f64::consts::PI).sqrt());
            vec![fmt_g9(x), fmt_g9(dens)]
        })
        .collect();
    files.push(write_csv(
        &cfg.out_dir,
        "bb_exact_integral.csv",
        &["x", "density"],
        &integral_rows,
    )?);
    let max_rows: Vec<Vec<String>> = (0..=200)
        .map(|k| {
            let x = 2.5 * k as f64 / 200.0;
            vec![fmt_g9(x), fmt_g9(bridge_max_density(x))]
        })
        .collect();
    files.push(write_csv(&cfg.out_dir, "bb_exact_maximum.csv", &["x", "density"], &max_rows)?);
    Ok(files)
}
