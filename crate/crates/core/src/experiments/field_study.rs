//! Two-dimensional field study: path functionals over regular grids of
//! growing resolution, conditional on one simulated reference dataset, for
//! the sequential-neighbour and piecewise constructions (optionally with a
//! dense parent benchmark).

use super::config::ExperimentConfig;
use super::output::{fmt_g9, write_csv};
use crate::error::{Error, Result};
use crate::field::{FieldModel, SparseGp};
use crate::functionals::{h1, h2, h3, summarize, Interval};
use crate::geometry::{regular_grid, uniform_locations, GridStyle, Location, Partition};
use crate::pcgp::PcgpModel;
use crate::sparse::{ReferenceSet, SparseFactor};
use nalgebra::DVector;
use rayon::prelude::*;
use std::path::PathBuf;

/// The three level-set intervals reported by the study.
pub(crate) fn level_set_intervals() -> [(&'static str, Interval); 3] {
    [
        ("h2_A1", Interval::new(0.0, 0.5).unwrap()),
        ("h2_A2", Interval::new(1.0, 2.0).unwrap()),
        ("h2_A3", Interval::new(-2.5, 0.0).unwrap()),
    ]
}

pub(crate) fn square_grid_counts(domain_dim: usize, size: usize) -> Result<Vec<usize>> {
    let per_axis = (size as f64).powf(1.0 / domain_dim as f64).round() as usize;
    if per_axis.pow(domain_dim as u32) != size {
        return Err(Error::Config(format!(
            "grid size {size} is not a {domain_dim}-dimensional lattice count"
        )));
    }
    Ok(vec![per_axis; domain_dim])
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let stream = super::experiment_stream(cfg);
    let d = cfg.domain.dim();
    let refs = uniform_locations(&cfg.domain, cfg.reference_count, stream.child(0))?;
    let refset = ReferenceSet::from_unordered(&refs, cfg.ordering, cfg.reference_rule)?;
    let factor = SparseFactor::build(&cfg.covariance, &refset)?;
    // one fictitious dataset shared by every conditional replication
    let z_data = factor.simulate(stream.child(1));

    let grids: Vec<Vec<Location>> = cfg
        .grid_sizes
        .iter()
        .map(|&m| {
            let counts = square_grid_counts(d, m)?;
            regular_grid(&cfg.domain, &counts, GridStyle::CellCentered)
        })
        .collect::<Result<_>>()?;

    let mut models: Vec<FieldModel> = Vec::new();
    if cfg.models.iter().any(|m| m == "nngp" || m == "rngp") {
        models.push(FieldModel::Sparse(SparseGp {
            model: cfg.covariance.clone(),
            refset: refset.clone(),
            factor: factor.clone(),
            target_rule: cfg.target_rule,
        }));
    }
    if cfg.models.iter().any(|m| m == "pcgp") {
        let partition = Partition::new(&cfg.domain, &cfg.partition_counts, &vec![0.0; d])?;
        models.push(FieldModel::Pcgp(
            PcgpModel::new(
                cfg.covariance.clone(),
                refset.clone(),
                factor.clone(),
                partition,
                cfg.m_region,
            )?
            .with_cell_cap(cfg.cell_cap),
        ));
    }

    // per model, one single-level plan per grid
    let plans: Vec<Vec<crate::field::FieldPlan>> = models
        .iter()
        .map(|m| {
            grids
                .iter()
                .map(|g| m.plan(std::slice::from_ref(g)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let full_gp = if cfg.full_gp_size > 0 && cfg.models.iter().any(|m| m == "full_gp") {
        let counts = square_grid_counts(d, cfg.full_gp_size)?;
        let grid = regular_grid(&cfg.domain, &counts, GridStyle::CellCentered)?;
        let model = FieldModel::Parent(cfg.covariance.clone());
        let plan = model.plan(std::slice::from_ref(&grid))?;
        Some((model, plan))
    } else {
        None
    };

    let intervals = level_set_intervals();
    let stat_names: Vec<String> = ["h1"]
        .iter()
        .map(|s| s.to_string())
        .chain(intervals.iter().map(|(n, _)| n.to_string()))
        .chain(["min", "max"].iter().map(|s| s.to_string()))
        .collect();

    let compute_stats = |domain: &crate::geometry::Domain, vals: &[f64]| -> Vec<f64> {
        let (lo, hi) = h3(vals);
        let mut out = vec![h1(domain, vals)];
        for (_, iv) in intervals {
            out.push(h2(vals, iv));
        }
        out.push(lo);
        out.push(hi);
        out
    };

    let reps = cfg.replications;
    // [rep][model][grid][stat]
    let sims: Vec<Vec<Vec<Vec<f64>>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = stream.child(2).child(rep as u64);
            models
                .iter()
                .enumerate()
                .map(|(mi, _)| {
                    plans[mi]
                        .iter()
                        .enumerate()
                        .map(|(gi, plan)| {
                            let path =
                                plan.simulate(&z_data, rep_stream.child(mi as u64).child(gi as u64));
                            compute_stats(&cfg.domain, &path.values)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let full_sims: Option<Vec<Vec<f64>>> = full_gp.as_ref().map(|(_, plan)| {
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let rep_stream = stream.child(3).child(rep as u64);
                let path = plan.simulate(&DVector::zeros(0), rep_stream);
                compute_stats(&cfg.domain, &path.values)
            })
            .collect()
    });

    let mut rows = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        for (gi, &m_size) in cfg.grid_sizes.iter().enumerate() {
            for (si, stat) in stat_names.iter().enumerate() {
                let values: Vec<f64> = sims.iter().map(|r| r[mi][gi][si]).collect();
                let s = summarize(&values);
                rows.push(vec![
                    model.tag().to_string(),
                    m_size.to_string(),
                    stat.clone(),
                    fmt_g9(s.mean),
                    fmt_g9(s.sd),
                    fmt_g9(s.se),
                    s.n.to_string(),
                ]);
            }
        }
    }
    if let (Some(sims_full), Some(_)) = (&full_sims, &full_gp) {
        for (si, stat) in stat_names.iter().enumerate() {
            let values: Vec<f64> = sims_full.iter().map(|r| r[si]).collect();
            let s = summarize(&values);
            rows.push(vec![
                "full_gp".to_string(),
                cfg.full_gp_size.to_string(),
                stat.clone(),
                fmt_g9(s.mean),
                fmt_g9(s.sd),
                fmt_g9(s.se),
                s.n.to_string(),
            ]);
        }
    }

    let mut files = vec![write_csv(
        &cfg.out_dir,
        "field_results.csv",
        &["model", "grid_size", "statistic", "mean", "sd", "se", "replications"],
        &rows,
    )?];

    // one realisation per model on the finest grid
    let finest = cfg.grid_sizes.len() - 1;
    for (mi, model) in models.iter().enumerate() {
        let rep_stream = stream.child(2).child(0);
        let path = plans[mi][finest]
            .simulate(&z_data, rep_stream.child(mi as u64).child(finest as u64));
        let heat_rows: Vec<Vec<String>> = grids[finest]
            .iter()
            .zip(&path.values)
            .map(|(loc, v)| {
                let mut row: Vec<String> =
                    loc.coords().iter().map(|c| fmt_g9(*c)).collect();
                row.push(fmt_g9(*v));
                row
            })
            .collect();
        files.push(write_csv(
            &cfg.out_dir,
            &format!("field_heatmap_{}.csv", model.tag()),
            &["x", "y", "value"],
            &heat_rows,
        )?);
    }
    Ok(files)
}
