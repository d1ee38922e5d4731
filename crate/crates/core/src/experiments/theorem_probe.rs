//! Refinement probes on nested dyadic grids, conditional on one reference
//! dataset: divergence (or stabilisation) of path extremes, analytic vs
//! empirical conditional variance of the grid-average functional, averaged
//! coefficient traces, and the indicator-functional limit.

use super::config::ExperimentConfig;
use super::output::{fmt_g9, write_csv};
use crate::error::{Error, Result};
use crate::field::{FieldModel, SparseGp};
use crate::functionals::{
    averaged_reference_coefficients, h3, indicator_mean, summarize, variance_with_se, Interval,
    SE_BATCHES,
};
use crate::geometry::{uniform_locations, GridSchedule, Location, Partition};
use crate::pcgp::PcgpModel;
use crate::sparse::{ReferenceSet, SparseFactor};
use rayon::prelude::*;
use std::path::PathBuf;

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    if cfg.levels.first() != Some(&0) || cfg.levels.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Config(
            "theorem-probe needs consecutive grids.levels starting at 0".into(),
        ));
    }
    let stream = super::experiment_stream(cfg);
    let d = cfg.domain.dim();
    let refs = uniform_locations(&cfg.domain, cfg.reference_count, stream.child(0))?;
    let refset = ReferenceSet::from_unordered(&refs, cfg.ordering, cfg.reference_rule)?;
    let factor = SparseFactor::build(&cfg.covariance, &refset)?;
    let z_data = factor.simulate(stream.child(1));

    // nested schedule levels; each entry holds the new points of that level
    let mut schedule = GridSchedule::new(cfg.domain.clone(), cfg.schedule_base.clone())?;
    let mut level_targets: Vec<Vec<Location>> = Vec::with_capacity(cfg.levels.len());
    for &n in &cfg.levels {
        while schedule.level() < n {
            schedule = schedule.refine()?;
        }
        level_targets.push(if n == 0 { schedule.locations() } else { schedule.new_locations() });
    }

    let nngp = FieldModel::Sparse(SparseGp {
        model: cfg.covariance.clone(),
        refset: refset.clone(),
        factor: factor.clone(),
        target_rule: cfg.target_rule,
    });
    let partition = Partition::new(&cfg.domain, &cfg.partition_counts, &vec![0.0; d])?;
    let pcgp_model = PcgpModel::new(
        cfg.covariance.clone(),
        refset.clone(),
        factor.clone(),
        partition,
        cfg.m_region,
    )?
    .with_cell_cap(cfg.cell_cap);
    let nngp_plan = nngp.plan(&level_targets)?;
    let pcgp = FieldModel::Pcgp(pcgp_model.clone());
    let pcgp_plan = pcgp.plan(&level_targets)?;
    let levels = cfg.levels.len();
    let volume = cfg.domain.volume();

    // analytic conditional variance of the grid average given the reference
    // values: sequential-neighbour targets are independent, piecewise cells
    // carry their full within-cell conditional covariance
    let sparse_conds = nngp_plan.sparse_levels().expect("sparse plan");
    let mut cum_sd2 = 0.0;
    let mut nngp_analytic = Vec::with_capacity(levels);
    for (l, conds) in sparse_conds.iter().enumerate() {
        for i in 0..conds.len() {
            let sd = conds.conditional(i).sd;
            cum_sd2 += sd * sd;
        }
        let m = nngp_plan.level_end(l) as f64;
        nngp_analytic.push(volume * volume * cum_sd2 / (m * m));
    }
    let mut pcgp_analytic = Vec::with_capacity(levels);
    {
        let mut cumulative: Vec<Location> = Vec::new();
        for lt in &level_targets {
            cumulative.extend(lt.iter().cloned());
            let flat = pcgp_model.plan(std::slice::from_ref(&cumulative))?;
            let mut total = 0.0;
            for block in flat.blocks(0) {
                total += block.cond.covariance.iter().sum::<f64>();
            }
            let m = cumulative.len() as f64;
            pcgp_analytic.push(volume * volume * total / (m * m));
        }
    }

    let indicator = Interval::new(0.0, 0.5).unwrap();
    // analytic limit of the indicator average given the reference values,
    // cumulative over the nested levels
    let indicator_analytic: Vec<f64> = {
        let mut acc = 0.0;
        let mut seen = 0usize;
        let mut cum = Vec::with_capacity(levels);
        for conds in sparse_conds {
            let means = conds.means(&z_data);
            for i in 0..conds.len() {
                acc += indicator_mean(means[i], conds.conditional(i).sd, indicator);
            }
            seen += conds.len();
            cum.push(acc / seen as f64);
        }
        cum
    };

    // replications, reusing values across levels within each path
    let reps = cfg.replications;
    struct RepStats {
        nngp_h1: Vec<f64>,
        pcgp_h1: Vec<f64>,
        nngp_minmax: Vec<(f64, f64)>,
        pcgp_minmax: Vec<(f64, f64)>,
        nngp_indicator: Vec<f64>,
    }
    let sims: Vec<RepStats> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = stream.child(2).child(rep as u64);
            let pn = nngp_plan.simulate(&z_data, rep_stream.child(0));
            let pp = pcgp_plan.simulate(&z_data, rep_stream.child(1));
            let h1_of = |vals: &[f64]| volume * vals.iter().sum::<f64>() / vals.len() as f64;
            RepStats {
                nngp_h1: (0..levels).map(|l| h1_of(pn.at_level(l))).collect(),
                pcgp_h1: (0..levels).map(|l| h1_of(pp.at_level(l))).collect(),
                nngp_minmax: (0..levels).map(|l| h3(pn.at_level(l))).collect(),
                pcgp_minmax: (0..levels).map(|l| h3(pp.at_level(l))).collect(),
                nngp_indicator: (0..levels)
                    .map(|l| {
                        let vals = pn.at_level(l);
                        vals.iter().filter(|v| indicator.contains(**v)).count() as f64
                            / vals.len() as f64
                    })
                    .collect(),
            }
        })
        .collect();

    let mut files = Vec::new();

    let mut div_rows = Vec::new();
    for (model, get) in [
        ("nngp", &(|r: &RepStats, l: usize| r.nngp_minmax[l]) as &dyn Fn(&RepStats, usize) -> (f64, f64)),
        ("pcgp", &|r: &RepStats, l: usize| r.pcgp_minmax[l]),
    ] {
        for l in 0..levels {
            let mins: Vec<f64> = sims.iter().map(|r| get(r, l).0).collect();
            let maxs: Vec<f64> = sims.iter().map(|r| get(r, l).1).collect();
            let (smin, smax) = (summarize(&mins), summarize(&maxs));
            div_rows.push(vec![
                model.to_string(),
                cfg.levels[l].to_string(),
                nngp_plan.level_end(l).to_string(),
                fmt_g9(smin.mean),
                fmt_g9(smin.se),
                fmt_g9(smax.mean),
                fmt_g9(smax.se),
                reps.to_string(),
            ]);
        }
    }
    files.push(write_csv(
        &cfg.out_dir,
        "theorem_divergence.csv",
        &["model", "level", "grid_size", "mean_min", "se_min", "mean_max", "se_max", "replications"],
        &div_rows,
    )?);

    let mut var_rows = Vec::new();
    for (model, analytic, get) in [
        (
            "nngp",
            &nngp_analytic,
            &(|r: &RepStats, l: usize| r.nngp_h1[l]) as &dyn Fn(&RepStats, usize) -> f64,
        ),
        ("pcgp", &pcgp_analytic, &|r: &RepStats, l: usize| r.pcgp_h1[l]),
    ] {
        for l in 0..levels {
            let values: Vec<f64> = sims.iter().map(|r| get(r, l)).collect();
            let (var, se) = variance_with_se(&values, SE_BATCHES);
            var_rows.push(vec![
                model.to_string(),
                cfg.levels[l].to_string(),
                nngp_plan.level_end(l).to_string(),
                fmt_g9(analytic[l]),
                fmt_g9(var),
                fmt_g9(se),
                reps.to_string(),
            ]);
        }
    }
    files.push(write_csv(
        &cfg.out_dir,
        "theorem_h1_variance.csv",
        &["model", "level", "grid_size", "analytic_var", "empirical_var", "empirical_se", "replications"],
        &var_rows,
    )?);

    // averaged coefficient traces over cumulative grids
    let mut coeff_rows = Vec::new();
    {
        let mut sums = vec![0.0f64; refset.len()];
        let mut seen = 0usize;
        let mut prev: Option<Vec<f64>> = None;
        for (l, conds) in sparse_conds.iter().enumerate() {
            let level_avg = averaged_reference_coefficients(conds, refset.len())?;
            for (s, c) in sums.iter_mut().zip(&level_avg) {
                *s += c * conds.len() as f64;
            }
            seen += conds.len();
            let current: Vec<f64> = sums.iter().map(|s| s / seen as f64).collect();
            if let Some(p) = &prev {
                let delta = current
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                coeff_rows.push(vec![
                    cfg.levels[l].to_string(),
                    nngp_plan.level_end(l).to_string(),
                    fmt_g9(delta),
                ]);
            }
            prev = Some(current);
        }
    }
    files.push(write_csv(
        &cfg.out_dir,
        "theorem_coefficients.csv",
        &["level", "grid_size", "max_abs_delta"],
        &coeff_rows,
    )?);

    let mut ind_rows = Vec::new();
    for l in 0..levels {
        let values: Vec<f64> = sims.iter().map(|r| r.nngp_indicator[l]).collect();
        let s = summarize(&values);
        ind_rows.push(vec![
            cfg.levels[l].to_string(),
            nngp_plan.level_end(l).to_string(),
            fmt_g9(indicator_analytic[l]),
            fmt_g9(s.mean),
            fmt_g9(s.se),
            reps.to_string(),
        ]);
    }
    files.push(write_csv(
        &cfg.out_dir,
        "theorem_indicator.csv",
        &["level", "grid_size", "analytic_mean", "empirical_mean", "empirical_se", "replications"],
        &ind_rows,
    )?);

    Ok(files)
}
