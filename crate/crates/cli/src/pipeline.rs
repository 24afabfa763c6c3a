//! Stages of the experiment pipeline. Each stage writes its artifacts under
//! `<out>/<stage>/` and appends its checks to the run record.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use homogen_core::cell::{cell_grid, check_p_continuity, default_scale, hamiltonian, solve_cell, CellOptions};
use homogen_core::effham::{
    coercivity_margin, evenness_defect, flat_regions, hbar, p_grid_1d, p_grid_2d, partition_check, plus_bracket,
    quartic, sandwich_violation, tabulate, EffectiveHamiltonian, HbarPoint, Region, SIGMA_STEP,
};
use homogen_core::evolve::{solve_homogenized, EvolutionResult, solve_oscillatory, EvolveOptions, HbarInterpolant, InitialData};
use homogen_core::export::{fmt_f64, write_json, Table};
use homogen_core::field::{
    estimate_bounds, normalize, sample_realization, EnsembleKind, EnsembleSpec, Profile,
};
use homogen_core::grid::{Grid, Point};
use homogen_core::metric::{
    check_subsolution_properties, solve_metric_with, MetricOptions, MetricStatus, PropertyCheckOptions,
};
use homogen_core::shape::{
    check_shape_monotonicity, ensemble_vbar, EnsembleShapes, LatticeShapes, ShapeOptions, ShapeProvider,
};
use homogen_core::Result;

use crate::config::ExperimentConfig;
use crate::record::RunRecord;

/// Largest increment along a ladder still treated as nonincreasing.
const ROUNDOFF: f64 = 1e-9;

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub spec: EnsembleSpec,
    pub record: RunRecord,
    /// Write bulky per-node dumps (fields, metrics, slices).
    pub dump: bool,
    provider: Option<Arc<dyn ShapeProvider + Send>>,
    table: Option<EffectiveHamiltonian>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, out: PathBuf, command: &str, dump: bool) -> Self {
        let spec = cfg.ensemble_spec();
        let record = RunRecord {
            name: cfg.name.clone(),
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            ..Default::default()
        };
        Self {
            cfg,
            out,
            spec,
            record,
            dump,
            provider: None,
            table: None,
        }
    }

    fn path(&mut self, stage: &str, name: &str) -> PathBuf {
        let p = self.out.join(stage).join(name);
        self.record.outputs.push(p.display().to_string());
        p
    }

    /// Run `f` as stage `name`, timing it and recording any error.
    pub fn stage(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<()>) -> bool {
        let t = Instant::now();
        let res = f(self);
        self.record.timings.insert(name.into(), t.elapsed().as_secs_f64());
        match res {
            Ok(()) => true,
            Err(e) => {
                self.record.errors.push(format!("{name}: {e}"));
                false
            }
        }
    }

    fn metric_grid(&self) -> Result<Grid> {
        let m = &self.cfg.metric;
        let cells = (m.half_extent / m.spacing).round();
        Grid::new(self.cfg.dimension(), m.spacing, cells * m.spacing, false)
    }

    pub fn potential(&mut self) -> Result<()> {
        let grid = self.metric_grid()?;
        let field = sample_realization(&self.spec, 0, &grid)?;
        let (lo, hi) = self.spec.essential_bounds();
        let excess = field
            .values
            .iter()
            .map(|v| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        self.record.at_most(
            "field.essential-range",
            "sampled values lie within the essential bounds of the law",
            excess,
            1e-12,
        );
        if self.dump {
            let mut t = Table::new(&["x", "y", "v"]);
            for (i, v) in field.values.iter().enumerate() {
                let p = grid.point(i);
                t.push_floats(&[p[0], p[1], *v]);
            }
            let path = self.path("potential", "field.csv");
            t.write(&path)?;
        }
        let r = grid.half_extent;
        let bounds = estimate_bounds(&self.spec, &[r / 4.0, r / 2.0, r], 4, grid.spacing)?;
        let path = self.path("potential", "bounds.json");
        write_json(&path, &bounds)?;
        Ok(())
    }

    pub fn metric(&mut self) -> Result<()> {
        let grid = self.metric_grid()?;
        let h = grid.spacing;
        let field = normalize(&sample_realization(&self.spec, 0, &grid)?);
        let vbar = ensemble_vbar(&self.spec);
        let origin = grid.nearest_node(&[0.0, 0.0]).expect("origin inside the box");
        let opts = MetricOptions {
            margin: self.cfg.metric.margin,
            ..MetricOptions::default()
        };
        let check = PropertyCheckOptions {
            pairs: self.cfg.metric.pairs,
            triples: self.cfg.metric.triples,
            seed: self.cfg.seed,
            tolerance: 10.0 * h,
            ..PropertyCheckOptions::default()
        };
        let params = self.cfg.metric_params().expect("validated");
        let results = params
            .par_iter()
            .map(|q| -> Result<_> {
                let m = solve_metric_with(&field, q, origin, &opts)?;
                let report = if m.is_finite() {
                    Some(check_subsolution_properties(&m, &field, &check)?)
                } else {
                    None
                };
                Ok((m, report))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut sentinel_mismatch = 0.0;
        let (mut cone, mut sym, mut sub): (f64, f64, f64) = (0.0, 0.0, 0.0);
        let mut summary = Vec::new();
        for (k, (m, report)) in results.iter().enumerate() {
            let admissible = m.params.is_admissible(vbar);
            if admissible != (m.status == MetricStatus::Finite) {
                sentinel_mismatch += 1.0;
            }
            if let Some(r) = report {
                cone = cone.max(r.cone_violation);
                sym = sym.max(r.symmetry_defect);
                sub = sub.max(r.subadditivity_defect);
            }
            summary.push(serde_json::json!({
                "mu": m.params.mu,
                "sigma": m.params.sigma,
                "status": m.status,
                "trust_radius": m.trust_radius,
                "degenerate_nodes": m.degenerate_nodes,
                "properties": report,
            }));
            if self.dump && m.is_finite() {
                let mut t = Table::new(&["x", "y", "m"]);
                for (i, v) in m.values.iter().enumerate() {
                    let p = grid.point(i);
                    t.push_floats(&[p[0], p[1], *v]);
                }
                let path = self.path("metric", &format!("m_{k}.csv"));
                t.write(&path)?;
            }
        }
        let path = self.path("metric", "summary.json");
        write_json(&path, &summary)?;
        let rec = &mut self.record;
        rec.at_most(
            "metric.sentinel",
            "inadmissible pairs give the -inf sentinel and admissible pairs a finite metric",
            sentinel_mismatch,
            0.0,
        );
        rec.at_most("metric.cone-bounds", "cone bounds on trusted nodes (slack 10h)", cone, 10.0 * h);
        rec.at_most("metric.symmetry", "symmetry defect on sampled pairs", sym, 10.0 * h);
        rec.at_most("metric.subadditivity", "subadditivity defect on sampled triples", sub, 10.0 * h);
        Ok(())
    }

    fn shape_options(&self) -> ShapeOptions {
        let s = &self.cfg.shape;
        ShapeOptions {
            spacing: s.spacing,
            radii: s.radii.clone(),
            realizations: s.realizations,
            directions: s.directions,
            margin: s.margin,
            richardson: s.richardson,
        }
    }

    fn exact_provider(&self) -> EnsembleShapes {
        EnsembleShapes::new(self.spec.clone(), self.shape_options(), self.cfg.tolerances.tol_mu, SIGMA_STEP)
    }

    pub fn shape(&mut self) -> Result<()> {
        let provider = self.exact_provider();
        let params = self.cfg.shape_params().expect("validated");
        let shapes = params
            .par_iter()
            .map(|q| provider.shape_exact(q).map(|s| (*s).clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(&["mu", "sigma", "e1", "e2", "mbar", "stderr"]);
        let mut even: f64 = 0.0;
        for s in &shapes {
            if s.is_finite() {
                even = even.max(s.evenness_defect());
            }
            for (d, e) in s.directions.iter().enumerate() {
                t.push_floats(&[s.params.mu, s.params.sigma, e[0], e[1], s.values[d], s.stderr[d]]);
            }
        }
        let path = self.path("shape", "shapes.csv");
        t.write(&path)?;
        let mono = check_shape_monotonicity(&shapes)?;
        let path = self.path("shape", "monotonicity.json");
        write_json(&path, &mono)?;
        let rec = &mut self.record;
        rec.at_most(
            "shape.monotonicity",
            "direction-wise ordering in sigma and in sigma*mu (exact)",
            mono.max_violation,
            0.0,
        );
        let gap = mono.min_strict_gap.unwrap_or(f64::NAN);
        rec.push(
            "shape.strict-gap",
            "strictly ordered sigma*mu gives a strictly larger shape",
            gap,
            0.0,
            gap > 0.0,
            mono.min_strict_gap.is_none().then(|| "no strictly ordered pair in the ladder".into()),
        );
        let tol = self.cfg.tolerances.tol_h;
        rec.at_most("shape.evenness", "max |mbar(e) - mbar(-e)|", even, tol);
        Ok(())
    }

    fn ensure_provider(&mut self) -> Result<Arc<dyn ShapeProvider + Send>> {
        if let Some(p) = &self.provider {
            return Ok(p.clone());
        }
        let exact = self.exact_provider();
        let provider: Arc<dyn ShapeProvider + Send> = if self.cfg.dimension() == 1 {
            Arc::new(exact)
        } else {
            let pmax = self.cfg.effham.pmax;
            let corner = [pmax, pmax];
            let mu_max = plus_bracket(&corner, exact.vbar());
            Arc::new(LatticeShapes::build(exact, self.cfg.effham.lattice_points, mu_max)?)
        };
        self.provider = Some(provider.clone());
        Ok(provider)
    }

    pub fn effham(&mut self) -> Result<()> {
        let provider = self.ensure_provider()?;
        let e = &self.cfg.effham;
        let grid = if self.cfg.dimension() == 1 {
            p_grid_1d(e.pmax, e.points)
        } else {
            p_grid_2d(e.pmax, e.points)
        };
        let table = tabulate(&grid, provider.as_ref())?;
        let mut t = Table::new(&["p1", "p2", "hbar", "region"]);
        for h in &table.points {
            t.push(vec![fmt_f64(h.p[0]), fmt_f64(h.p[1]), fmt_f64(h.value), h.region.label().into()]);
        }
        let path = self.path("effham", "hbar.csv");
        t.write(&path)?;
        let tol = self.cfg.tolerances.clone();
        let path = self.path("effham", "constants.json");
        write_json(
            &path,
            &serde_json::json!({
                "vbar": table.constants.vbar,
                "kappa": table.constants.kappa,
                "mu_star": table.constants.mu_star,
                "sigma_star": table.constants.sigma_star,
                "tolerances": tol,
            }),
        )?;

        let tol_h = tol.tol_h;
        let flat = flat_regions(&table);
        let partition = partition_check(&table);
        let coercive = coercivity_margin(provider.as_ref(), 16)?;
        let rec = &mut self.record;
        rec.at_most("effham.sandwich", "quartic - vbar <= Hbar <= quartic at every node", sandwich_violation(&table), tol_h);
        rec.at_most(
            "effham.flat-hilltop",
            "Hbar is flat and equal to mu* on K1",
            flat.k1_spread.max(flat.k1_offset),
            tol_h,
        );
        rec.at_most("effham.flat-valley", "|Hbar| on K3", flat.k3_max, tol_h);
        rec.push(
            "effham.partition",
            "K4 beyond K3 along every ray; K1..K3 bounded",
            partition.misordered as f64,
            0.0,
            partition.passed,
            Some(format!("bounded radius {}", partition.bounded_radius)),
        );
        rec.at_most("effham.evenness", "max |Hbar(p) - Hbar(-p)|", evenness_defect(&table), tol_h);
        rec.push(
            "effham.coercivity",
            "Hbar(2e) > Hbar(1.2e) on sampled directions",
            coercive,
            0.0,
            coercive > 0.0,
            None,
        );
        rec.at_most(
            "effham.path-consistency",
            "nodes where the path walk and the bisection disagree",
            table.flagged() as f64,
            0.0,
        );
        if matches!(self.spec.kind, EnsembleKind::Constant { .. }) {
            let err = table
                .points
                .iter()
                .map(|h| (h.value - quartic(&h.p)).abs())
                .fold(0.0, f64::max);
            rec.at_most("effham.constant-exactness", "max |Hbar - (|p|^2 - 1)^2| for a constant potential", err, 0.02);
        }
        self.table = Some(table);
        Ok(())
    }

    fn hbar_at(&mut self, p: &Point) -> Result<HbarPoint> {
        let provider = self.ensure_provider()?;
        hbar(p, provider.as_ref())
    }

    pub fn cell(&mut self) -> Result<()> {
        let Some(c) = self.cfg.cell.clone() else {
            self.record.skipped.push("cell".into());
            return Ok(());
        };
        let vbar = ensemble_vbar(&self.spec);
        let scale = c.scale.unwrap_or_else(|| default_scale(vbar));
        let opts = CellOptions {
            tol: self.cfg.tolerances.tol_cell,
            ..CellOptions::default()
        };
        let hbars = c
            .momenta
            .iter()
            .map(|&p| self.hbar_at(&[p, 0.0]))
            .collect::<Result<Vec<_>>>()?;
        let oracle: Vec<Option<f64>> = c.momenta.iter().map(|&p| quadrature_hbar(&self.spec, p)).collect();
        let fields = c
            .deltas
            .iter()
            .map(|&d| -> Result<_> {
                let g = cell_grid(&self.spec, d, c.spacing, scale)?;
                Ok(normalize(&sample_realization(&self.spec, 0, &g)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> = (0..c.momenta.len())
            .flat_map(|i| (0..c.deltas.len()).map(move |j| (i, j)))
            .collect();
        let sols = jobs
            .par_iter()
            .map(|&(i, j)| solve_cell(&fields[j], &[c.momenta[i], 0.0], c.deltas[j], &opts))
            .collect::<Result<Vec<_>>>()?;

        let mut t = Table::new(&[
            "p1",
            "p2",
            "delta",
            "minus_delta_v0",
            "hbar",
            "hbar_quadrature",
            "error",
            "residual",
            "iterations",
        ]);
        let nd = c.deltas.len();
        let mu_star = 1.0 - vbar;
        let (mut bounds, mut lip, mut decay, mut final_err): (f64, f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0, 0.0);
        let (mut liminf, mut hilltop, mut plus_branch) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
        for (i, &p) in c.momenta.iter().enumerate() {
            let hb = &hbars[i];
            let row = &sols[i * nd..(i + 1) * nd];
            let errs: Vec<f64> = row.iter().map(|s| (s.minus_delta_v0() - hb.value).abs()).collect();
            for (s, e) in row.iter().zip(&errs) {
                bounds = bounds.max(s.bounds_violation());
                t.push(vec![
                    fmt_f64(p),
                    fmt_f64(0.0),
                    fmt_f64(s.delta),
                    fmt_f64(s.minus_delta_v0()),
                    fmt_f64(hb.value),
                    oracle[i].map_or_else(String::new, fmt_f64),
                    fmt_f64(*e),
                    fmt_f64(s.residual),
                    s.iterations.to_string(),
                ]);
            }
            for w in errs.windows(2) {
                decay = decay.max(w[1] - w[0]);
            }
            final_err = final_err.max(*errs.last().unwrap());
            lip = lip.max(row[nd - 1].max_gradient() - 2.0 * row[0].max_gradient());
            let last = row[nd - 1].minus_delta_v0();
            liminf = liminf.min(last);
            if p < 1.0 {
                hilltop = hilltop.max(last - mu_star.max(0.0));
            }
            if hb.region == Region::K4 {
                plus_branch = plus_branch.min(last - hb.tangency.mu);
            }
        }
        let path = self.path("cell", "ladder.csv");
        t.write(&path)?;

        let p0 = [c.momenta[0], 0.0];
        let p1 = [c.momenta[0] + 0.1, 0.0];
        let ratios = fields
            .iter()
            .zip(&c.deltas)
            .take(2)
            .map(|(f, &d)| check_p_continuity(f, &p0, &p1, d, &opts))
            .collect::<Result<Vec<_>>>()?;
        let stability = if ratios.len() == 2 {
            let (a, b) = (ratios[0], ratios[1]);
            if a.max(b) < 1e-12 {
                1.0
            } else {
                a.max(b) / a.min(b).max(1e-300)
            }
        } else {
            1.0
        };

        let tol = self.cfg.tolerances.clone();
        let rec = &mut self.record;
        rec.at_most("cell.bounds", "comparison bounds hold node-wise", bounds, tol.tol_cell);
        rec.at_most(
            "cell.lipschitz-uniform",
            "max gradient at the smallest delta minus twice that at the largest",
            lip,
            1e-6,
        );
        rec.at_most("cell.ladder-decay", "|-delta v(0) - Hbar| is nonincreasing along the delta ladder", decay, ROUNDOFF);
        rec.at_most("cell.final-error", "|-delta v(0) - Hbar| at the smallest delta", final_err, tol.tol_hom);
        rec.push(
            "cell.liminf-nonnegative",
            "-delta v(0) >= -tol at the smallest delta",
            liminf,
            -tol.tol_hom,
            liminf >= -tol.tol_hom,
            None,
        );
        rec.push(
            "cell.limsup-hilltop",
            "-delta v(0) <= mu* + tol for |p| < 1",
            hilltop,
            tol.tol_hom,
            hilltop <= tol.tol_hom,
            hilltop.is_infinite().then(|| "no momentum inside the unit ball".into()),
        );
        rec.push(
            "cell.liminf-plus-branch",
            "-delta v(0) >= mu - tol where p supports the sigma = +1 shape at mu",
            plus_branch,
            -tol.tol_hom,
            plus_branch >= -tol.tol_hom,
            plus_branch.is_infinite().then(|| "no K4 momentum in the ladder".into()),
        );
        rec.push(
            "cell.p-continuity",
            "ratio of the p-continuity constants at the two largest deltas",
            stability,
            2.0,
            stability <= 2.0,
            Some(format!("constants {ratios:?}")),
        );
        if oracle.iter().all(Option::is_some) {
            let gap = hbars
                .iter()
                .zip(&oracle)
                .map(|(h, o)| (h.value - o.unwrap()).abs())
                .fold(0.0, f64::max);
            rec.at_most(
                "effham.quadrature-agreement",
                "Hbar from metric shapes vs period-average quadrature",
                gap,
                2.0 * tol.tol_mu,
            );
        }
        Ok(())
    }

    pub fn evolve(&mut self) -> Result<()> {
        let Some(e) = self.cfg.evolve.clone() else {
            self.record.skipped.push("evolve".into());
            return Ok(());
        };
        let hbars = e
            .momenta
            .iter()
            .map(|&p| self.hbar_at(&[p, 0.0]).map(|h| h.value))
            .collect::<Result<Vec<_>>>()?;
        let opts_for = |eps: f64| EvolveOptions {
            spacing: eps / e.resolution,
            final_time: e.final_time,
            slices: vec![0.0, 0.5 * e.final_time, e.final_time],
            k: e.k,
            margin: e.margin,
            ..EvolveOptions::default()
        };
        let jobs: Vec<(usize, usize)> = (0..e.momenta.len())
            .flat_map(|i| (0..e.epsilons.len()).map(move |j| (i, j)))
            .collect();
        let spec = self.spec.clone();
        let runs = jobs
            .par_iter()
            .map(|&(i, j)| {
                let p = e.momenta[i];
                let hb = hbars[i];
                let reference = move |x: &Point, t: f64| p * x[0] - t * hb;
                let g = InitialData::Linear { p: [p, 0.0] };
                solve_oscillatory(&spec, 0, e.epsilons[j], &g, &opts_for(e.epsilons[j]), Some(&reference))
            })
            .collect::<Result<Vec<_>>>()?;

        let ne = e.epsilons.len();
        let mut t = Table::new(&["p1", "p2", "epsilon", "hbar", "sup_error", "steps", "alpha"]);
        let mut decay: f64 = 0.0;
        for (i, &p) in e.momenta.iter().enumerate() {
            let row = &runs[i * ne..(i + 1) * ne];
            let errs: Vec<f64> = row.iter().map(|r| r.error_vs_reference.unwrap()).collect();
            for w in errs.windows(2) {
                decay = decay.max(w[1] - w[0]);
            }
            for r in row {
                t.push(vec![
                    fmt_f64(p),
                    fmt_f64(0.0),
                    fmt_f64(r.epsilon),
                    fmt_f64(hbars[i]),
                    fmt_f64(r.error_vs_reference.unwrap()),
                    r.steps.to_string(),
                    fmt_f64(r.alpha),
                ]);
                if self.dump {
                    let mut s = Table::new(&["x", "y", "u"]);
                    let u = r.slices.last().unwrap();
                    for k in r.nodes_in_ball() {
                        let x = r.grid.point(k);
                        s.push_floats(&[x[0], x[1], u[k]]);
                    }
                    let path = self.path("evolve", &format!("u_p{}_eps{}.csv", fmt_f64(p), fmt_f64(r.epsilon)));
                    s.write(&path)?;
                }
            }
        }
        let path = self.path("evolve", "ladder.csv");
        t.write(&path)?;

        // Homogenized plane waves through the tabulated interpolant.
        let mut plane: f64 = 0.0;
        if let Some(table) = &self.table {
            let interp = HbarInterpolant::from_table(table)?;
            for &p in &e.momenta {
                let hb = interp.eval(&[p, 0.0])?;
                let reference = move |x: &Point, t: f64| p * x[0] - t * hb;
                let g = InitialData::Linear { p: [p, 0.0] };
                let r = solve_homogenized(&interp, &g, &opts_for(e.epsilons[0]), Some(&reference))?;
                plane = plane.max(r.error_vs_reference.unwrap());
            }
        } else {
            plane = f64::NAN;
        }

        // Adding a dyadic constant to the data shifts the solution exactly.
        let eps = *e.epsilons.first().unwrap();
        let p = e.momenta[0];
        let a = solve_oscillatory(&self.spec, 0, eps, &InitialData::Linear { p: [p, 0.0] }, &opts_for(eps), None)?;
        let g = InitialData::Affine { p: [p, 0.0], c: 0.5 };
        let shifted = solve_oscillatory(&self.spec, 0, eps, &g, &opts_for(eps), None)?;
        let shift_err = shift_defect(&a, &shifted, 0.5);

        let rec = &mut self.record;
        rec.at_most(
            "evolve.ladder-decay",
            "sup |u_eps - (p.x - t Hbar)| over B_k x [0,T] is nonincreasing in eps",
            decay,
            ROUNDOFF,
        );
        rec.push(
            "evolve.homogenized-plane-wave",
            "homogenized scheme reproduces p.x - t Hbar(p) from the table",
            plane,
            1e-9,
            plane <= 1e-9,
            plane.is_nan().then(|| "effective Hamiltonian table unavailable".into()),
        );
        rec.at_most("evolve.constants-commute", "g + c gives u + c", shift_err, 1e-9);
        Ok(())
    }
}

/// `Hbar(p)` for one-dimensional periodic or constant ensembles by
/// period-average quadrature and bisection; `None` otherwise.
pub fn quadrature_hbar(spec: &EnsembleSpec, p: f64) -> Option<f64> {
    if spec.dimension != 1 {
        return None;
    }
    let (profile, vbar): (Box<dyn Fn(f64) -> f64>, f64) = match spec.kind {
        EnsembleKind::Constant { .. } => (Box::new(|_| 0.0), 0.0),
        EnsembleKind::ShiftedPeriodic {
            profile: profile @ Profile::Cosine { .. },
            ..
        } => (Box::new(move |x| profile.eval(1, &[x, 0.0])), profile.max() - profile.min()),
        _ => return None,
    };
    let n = 8192;
    let avg = |mu: f64, sigma: f64| -> f64 {
        (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                (1.0 + sigma * (mu + profile(x)).sqrt()).max(0.0).sqrt()
            })
            .sum::<f64>()
            / n as f64
    };
    let pa = p.abs();
    let kappa = 1.0 - vbar;
    if kappa >= 0.0 && avg(0.0, -1.0) >= pa {
        if avg(kappa, -1.0) >= pa {
            return Some(kappa);
        }
        let (mut a, mut b) = (0.0, kappa);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if avg(m, -1.0) >= pa {
                a = m
            } else {
                b = m
            }
        }
        return Some(0.5 * (a + b));
    }
    if avg(0.0, 1.0) >= pa {
        return Some(0.0);
    }
    let (mut a, mut b) = (0.0, hamiltonian(&[p, 0.0]) + vbar + 1.0);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if avg(m, 1.0) >= pa {
            b = m
        } else {
            a = m
        }
    }
    Some(0.5 * (a + b))
}

/// `sup |b - a - c|` over stored slices on the error ball.
fn shift_defect(a: &EvolutionResult, b: &EvolutionResult, c: f64) -> f64 {
    a.slices
        .iter()
        .zip(&b.slices)
        .flat_map(|(x, y)| a.nodes_in_ball().map(move |i| (y[i] - x[i] - c).abs()))
        .fold(0.0, f64::max)
}

pub fn write_record(out: &Path, record: &RunRecord) -> Result<PathBuf> {
    let path = out.join("record").join(format!("{}.json", record.name));
    write_json(&path, record)?;
    Ok(path)
}
