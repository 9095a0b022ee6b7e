//! One runner per mode. Each returns its artifacts in memory; files are
//! written by the caller once the computation has finished.

use gbridge::bridge::{
    entropic_cost_vs_w2, regularized_asymptotics, verify_commutation, BridgeSolution,
    RegularizedFamily,
};
use gbridge::oracle::{grid_ipf, mc_pushforward};
use gbridge::sinkhorn::{
    convergence_rates, empirical_rates, entropy_budget, error_report, gibbs_products,
    potential_flow, regularized_rates, riccati_crosscheck, run_sinkhorn, ErrorRow,
};
use gbridge::{schrodinger_bridge, BridgeProblem, DMatrix, DVector, KernelParams};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, ModeParams};

pub struct Artifacts {
    /// `(file name, contents)`.
    pub tables: Vec<(String, Vec<u8>)>,
    pub summary: Value,
}

fn mat(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn kernel_json(k: &KernelParams) -> Value {
    json!({ "alpha": vec(&k.alpha), "beta": mat(&k.beta), "tau": mat(k.tau.matrix()) })
}

fn bridge_json(sol: &BridgeSolution) -> Value {
    json!({
        "iota": vec(&sol.params.alpha),
        "kappa": mat(&sol.params.beta),
        "varsigma": mat(sol.params.tau.matrix()),
        "r": mat(sol.r.matrix()),
        "dual": {
            "iota_bar": vec(&sol.dual_params.alpha),
            "kappa_bar": mat(&sol.dual_params.beta),
            "varsigma_bar": mat(sol.dual_params.tau.matrix()),
            "r_bar": mat(sol.r_bar.matrix()),
        },
        "marginal_residual": sol.marginal_residual,
    })
}

fn problem_json(p: &BridgeProblem) -> Value {
    json!({
        "eta": { "mean": vec(&p.eta.mean), "cov": mat(p.eta.cov.matrix()) },
        "mu": { "mean": vec(&p.mu.mean), "cov": mat(p.mu.cov.matrix()) },
        "theta": kernel_json(&p.theta),
    })
}

fn table(header: Vec<String>, rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // in-memory writes cannot fail
    w.write_record(&header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn num(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn run(e: &Experiment) -> gbridge::Result<Artifacts> {
    let p = &e.problem;
    let sol = schrodinger_bridge(p)?;
    let mut summary = json!({
        "mode": e.mode,
        "seed": e.seed,
        "dim": p.dim(),
        "problem": problem_json(p),
        "bridge": bridge_json(&sol),
    });
    let tables = match &e.params {
        ModeParams::Bridge => {
            summary["commutation"] =
                serde_json::to_value(verify_commutation(p)?).expect("serializable");
            summary["rates"] = serde_json::to_value(convergence_rates(p)?).expect("serializable");
            Vec::new()
        }
        ModeParams::Sinkhorn { iterations } => sinkhorn(p, *iterations, &mut summary)?,
        ModeParams::Rates { t_grid } => rates(p, t_grid, &mut summary)?,
        ModeParams::Regularize { t_grid } => regularize(p, t_grid, &mut summary)?,
        ModeParams::Oracle {
            grid,
            max_iterations,
            tolerance,
        } => {
            let rep = grid_ipf(p, *grid, *max_iterations, *tolerance)?;
            let (s, k) = (p.eta.cov.matrix()[(0, 0)], sol.params.beta[(0, 0)]);
            let exact = [
                p.eta.mean[0],
                p.mu.mean[0],
                s,
                p.mu.cov.matrix()[(0, 0)],
                k * s,
            ];
            let got = [
                rep.mean[0],
                rep.mean[1],
                rep.cov[(0, 0)],
                rep.cov[(1, 1)],
                rep.cov[(0, 1)],
            ];
            let err = exact
                .iter()
                .zip(&got)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            summary["oracle"] = json!({
                "iterations": rep.iterations,
                "converged": rep.converged,
                "marginal_error": rep.marginal_error,
                "mean": vec(&rep.mean),
                "cov": mat(&rep.cov),
                "closed_form": { "mean": &exact[..2], "cov": [[exact[2], exact[4]], [exact[4], exact[3]]] },
                "max_moment_error": err,
                "entropy": rep.entropy,
            });
            let rows = rep
                .coupling
                .x
                .points
                .iter()
                .zip(rep.u.iter().zip(&rep.v))
                .map(|(x, (u, v))| vec![num(*x), num(*u), num(*v)])
                .collect();
            vec![(
                "oracle.csv".into(),
                table(vec!["x".into(), "u".into(), "v".into()], rows),
            )]
        }
        ModeParams::Montecarlo {
            samples,
            repetitions,
            bands,
        } => {
            let kernel = sol.params.relaxed();
            let seeds: Vec<u64> = (0..*repetitions as u64)
                .map(|k| e.seed.wrapping_add(k))
                .collect();
            let reps = seeds
                .par_iter()
                .map(|s| mc_pushforward(&p.eta, &kernel, &p.mu, *samples, *s))
                .collect::<gbridge::Result<Vec<_>>>()?;
            let d = p.dim();
            let mut header = vec!["seed".to_string(), "max_z".into(), "within".into()];
            header.extend((0..d).map(|i| format!("mean_{i}")));
            header.extend((0..d).flat_map(|i| (0..d).map(move |j| format!("cov_{i}{j}"))));
            let rows = reps
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.seed.to_string(),
                        num(r.max_z),
                        r.within(*bands).to_string(),
                    ];
                    row.extend(r.mean.iter().map(|x| num(*x)));
                    row.extend(mat(&r.cov).into_iter().flatten().map(num));
                    row
                })
                .collect();
            let hits = reps.iter().filter(|r| r.within(*bands)).count();
            summary["montecarlo"] = json!({
                "samples": samples,
                "repetitions": repetitions,
                "bands": bands,
                "within": hits,
                "fraction_within": hits as f64 / *repetitions as f64,
            });
            vec![("montecarlo.csv".into(), table(header, rows))]
        }
    };
    Ok(Artifacts { tables, summary })
}

fn sinkhorn(
    p: &BridgeProblem,
    iterations: usize,
    summary: &mut Value,
) -> gbridge::Result<Vec<(String, Vec<u8>)>> {
    let t = run_sinkhorn(p, iterations)?;
    let report = error_report(&t, 2.0)?;
    let d = p.dim();
    let mut header = vec!["n".to_string(), "parity".into()];
    header.extend((0..d).map(|i| format!("m_n_{i}")));
    for name in ["sigma_n", "tau_n"] {
        header.extend((0..d).flat_map(|i| (0..d).map(move |j| format!("{name}_{i}{j}"))));
    }
    header.extend(
        [
            "err_mean",
            "err_cov",
            "err_tau",
            "ent_to_bridge",
            "bound_value",
        ]
        .map(String::from),
    );
    let rows = t
        .states
        .iter()
        .map(|s| {
            let r: &ErrorRow = if s.is_even() {
                &report.even[s.n / 2]
            } else {
                &report.odd[s.n / 2]
            };
            let mut row = vec![
                s.n.to_string(),
                if s.is_even() { "even" } else { "odd" }.to_string(),
            ];
            row.extend(s.mean.iter().map(|x| num(*x)));
            row.extend(mat(s.cov.matrix()).into_iter().flatten().map(num));
            row.extend(mat(s.theta.tau.matrix()).into_iter().flatten().map(num));
            row.extend([r.mean, r.cov, r.tau, r.entropy, r.bound_tau].map(num));
            row
        })
        .collect();

    let check = riccati_crosscheck(&t)?;
    let gibbs = gibbs_products(&t)?;
    let flow = potential_flow(&t)?;
    let budget = entropy_budget(&t)?;
    let slopes = empirical_rates(&report, &t.rates);
    summary["rates"] = serde_json::to_value(t.rates).expect("serializable");
    summary["sinkhorn"] = json!({
        "iterations": iterations,
        "converged_at": t.converged_at,
        "burn_in": report.burn_in,
        "last_kernel": kernel_json(&t.last().theta),
        "crosscheck": serde_json::to_value(check).expect("serializable"),
        "empirical_rates": serde_json::to_value(slopes).expect("serializable"),
        "gibbs_max_fixed_point_residual": gibbs
            .iter()
            .map(|g| g.mu_fixed_point_residual.max(g.eta_fixed_point_residual.unwrap_or(0.0)))
            .fold(0.0, f64::max),
        "potentials": {
            "max_density_error": flow.pairs.iter().map(|q| q.density_error).fold(0.0, f64::max),
            "max_sandwich_violation": flow.pairs.iter().map(|q| q.sandwich_violation).fold(0.0, f64::max),
            "monotone": flow.monotone,
        },
        "entropy": {
            "one_over_n_violation": budget.one_over_n_violation,
            "telescoping_residual": budget.telescoping_residual,
            "envelope_violation": budget.envelope_violation,
            "geometric": budget.geometric(),
            "tail_ratio": budget.tail_ratio,
            "rate_cap": budget.rate_cap,
        },
    });
    Ok(vec![("trajectory.csv".into(), table(header, rows))])
}

fn rates(
    p: &BridgeProblem,
    t_grid: &[f64],
    summary: &mut Value,
) -> gbridge::Result<Vec<(String, Vec<u8>)>> {
    let family = RegularizedFamily::from_problem(p);
    let rows = t_grid
        .par_iter()
        .map(|t| regularized_rates(&family, *t))
        .collect::<gbridge::Result<Vec<_>>>()?;
    let header = [
        "t",
        "rho_theta",
        "rho_bar",
        "upper_bound",
        "upper_bound_identity_gain",
    ]
    .map(String::from)
    .to_vec();
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.rho),
                num(r.rho_bar),
                num(r.bound),
                opt(r.bound_identity),
            ]
        })
        .collect();
    summary["rates"] = serde_json::to_value(&rows).expect("serializable");
    Ok(vec![("rates.csv".into(), table(header, csv_rows))])
}

fn regularize(
    p: &BridgeProblem,
    t_grid: &[f64],
    summary: &mut Value,
) -> gbridge::Result<Vec<(String, Vec<u8>)>> {
    let family = RegularizedFamily::from_problem(p);
    let rows = t_grid
        .par_iter()
        .map(|t| {
            Ok((
                regularized_asymptotics(&family, *t)?,
                entropic_cost_vs_w2(&family, *t)?,
            ))
        })
        .collect::<gbridge::Result<Vec<_>>>()?;
    let header = [
        "t",
        "kappa_gap",
        "varsigma_over_t_gap",
        "r_over_t_gap",
        "varsigma_gap",
        "kappa_norm",
        "r_gap",
        "t_h",
        "half_w2sq",
        "entropic_gap",
        "decomposition_residual",
    ]
    .map(String::from)
    .to_vec();
    let csv_rows = rows
        .iter()
        .map(|(a, g)| {
            [
                a.t,
                a.kappa_gap,
                a.varsigma_over_t_gap,
                a.r_over_t_gap,
                a.varsigma_gap,
                a.kappa_norm,
                a.r_gap,
                g.t_h,
                g.half_w2sq,
                g.gap,
                g.decomposition_residual,
            ]
            .map(num)
            .to_vec()
        })
        .collect();
    summary["monge_coefficient"] = json!(mat(family.monge_coefficient()?.matrix()));
    summary["max_decomposition_residual"] = json!(rows
        .iter()
        .map(|(_, g)| g.decomposition_residual)
        .fold(0.0, f64::max));
    Ok(vec![("regularize.csv".into(), table(header, csv_rows))])
}
