use crate::args::{parse_kind, Cmd, IneqArgs, MuSource, PsiArgs, SpaceArgs, Suite, Window};
use crate::report::{csv, read_file, write_file, CliError, CliResult, Report};
use ehi_core::dyadic::{build_decomposition, cube_capacities, verify_decomposition, DyadicDecomposition};
use ehi_core::format::{fmt_f64, parse_space, space_to_json, Space};
use ehi_core::harnack::{
    check_capacity_lemmas, check_green_lemmas, ehi_scan, harnack_constant, stability_experiment, CapLemmaConfig,
    GreenLemmaConfig, HarnackReport, StabilityConfig, TrendWindow,
};
use ehi_core::remetric::{
    build_dpsi, build_psi, check_cap_psi, check_cs, check_pi, cross_metric_check, verify_regular_scale, CrossConfig,
    PsiWindow, ScaleFn, ScaleTable, FINITE_MAX,
};
use ehi_core::spaces::{generate, SpaceSpec};
use ehi_core::vk::{audit_ledger, build_measure, verify_capacity_good, verify_doubling, Ledger, VkTheory};
use ehi_core::Ratio;
use std::path::Path;

fn f(v: f64) -> String {
    fmt_f64(v)
}

fn bounded(r: Ratio) -> bool {
    r.is_finite() && r.value() <= FINITE_MAX
}

pub fn load_space(a: &SpaceArgs) -> CliResult<Space> {
    if let Some(kind) = parse_kind(&a.space) {
        let size =
            a.level.ok_or_else(|| CliError::input("input-invalid", format!("--space {} needs --level", a.space)))?;
        let spec = SpaceSpec {
            kind,
            size,
            aux: a.aux.unwrap_or(0),
            metric: a.metric,
            measure: a.measure,
            subdivide: a.subdivide,
        };
        return Ok(generate(&spec)?);
    }
    Ok(parse_space(&read_file(Path::new(&a.space))?)?)
}

fn ids_to_indices(s: &Space, list: &str) -> CliResult<Vec<usize>> {
    let mut out = vec![];
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let id: i64 = tok.parse().map_err(|_| CliError::input("input-invalid", format!("bad point id `{tok}`")))?;
        out.push(s.metric.index_of(id)?);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn root_index(s: &Space, root: Option<i64>) -> CliResult<usize> {
    Ok(match root {
        Some(id) => s.metric.index_of(id)?,
        None => 0,
    })
}

struct VkOut {
    measure: Vec<f64>,
    ledger: Ledger,
    theory: Option<VkTheory>,
}

fn vk_measure(rep: &mut Report, s: &Space, a: f64, root: usize) -> CliResult<(DyadicDecomposition, VkOut)> {
    let dec = rep.stage("cubes", || Ok(build_decomposition(&s.metric, root, a)?))?;
    let caps = rep.stage("capacities", || Ok(cube_capacities(&dec, &s.metric, &s.net)?))?;
    let k0 = dec.k0().ok_or_else(|| CliError::input("input-invalid", "a single-point space has no cube structure"))?;
    let r = rep.stage("measure", || Ok(build_measure(&dec, &caps, &s.metric, k0 - 1)?))?;
    let theory = caps.delta_hat.map(|d| VkTheory { delta_hat: d, c_big: r.ledger.c_big, a_dec: a });
    rep.put("capacity_table", &caps);
    Ok((dec, VkOut { measure: r.measure, ledger: r.ledger, theory }))
}

fn window(w: Window) -> PsiWindow {
    match w {
        Window::Printed => PsiWindow::Printed,
        Window::Unshifted => PsiWindow::Unshifted,
    }
}

fn measure_for(rep: &mut Report, s: &Space, p: &PsiArgs) -> CliResult<Vec<f64>> {
    match p.mu {
        MuSource::Space => Ok(s.net.measure().to_vec()),
        MuSource::Vk => Ok(vk_measure(rep, s, p.a, 0)?.1.measure),
    }
}

fn psi_table(rep: &mut Report, s: &Space, mu: &[f64], p: &PsiArgs) -> CliResult<ScaleTable> {
    rep.stage("psi", || Ok(build_psi(&s.net, mu, &s.metric, p.psi_a, window(p.window))?))
}

fn psi_csv(s: &Space, t: &ScaleTable) -> String {
    let rows = (0..s.metric.len())
        .flat_map(|x| t.radii.iter().enumerate().map(move |(j, &r)| (x, j, r)))
        .map(|(x, j, r)| vec![s.metric.ids()[x].to_string(), f(r), f(t.values[x][j]), t.clamped[x][j].to_string()]);
    csv(&["id", "r", "psi", "clamped"], rows)
}

fn scales_csv(h: &HarnackReport) -> String {
    csv(
        &["radius", "c_h", "in_window"],
        h.per_scale.iter().map(|s| vec![f(s.radius), f(s.c_h.value()), s.in_window.to_string()]),
    )
}

fn measure_csv(s: &Space, mu: &[f64]) -> String {
    csv(&["id", "mass"], s.metric.ids().iter().zip(mu).map(|(id, m)| vec![id.to_string(), f(*m)]))
}

pub fn run(cmd: &Cmd, rep: &mut Report) -> CliResult<()> {
    match cmd {
        Cmd::Gen { space, output } => {
            let s = rep.stage("space", || load_space(space))?;
            let body = space_to_json(&s) + "\n";
            match output {
                Some(p) => write_file(p, &body)?,
                None => print!("{body}"),
            }
            rep.put("points", s.metric.len());
            rep.put("edges", s.net.edges().len());
            rep.put("diam", s.metric.diam());
            rep.put("resolution", s.metric.resolution());
            rep.put("metric", s.decl);
            if let Some(note) = parse_kind(&space.space).and_then(|k| k.note()) {
                rep.put("note", note);
            }
            rep.table("edges", || {
                let ids = s.metric.ids();
                csv(
                    &["u", "v", "c"],
                    s.net.edges().iter().map(|&(u, v, c)| vec![ids[u].to_string(), ids[v].to_string(), f(c)]),
                )
            });
            rep.table("measure", || measure_csv(&s, s.net.measure()));
        }
        Cmd::Green { space, domain } => {
            let s = rep.stage("space", || load_space(space))?;
            let d = ids_to_indices(&s, domain)?;
            let g = rep.stage("green", || Ok(s.net.green_matrix(&d)?))?;
            let k = d.len();
            let ids: Vec<i64> = d.iter().map(|&x| s.metric.ids()[x]).collect();
            let rows: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| g.get(i, j)).collect()).collect();
            for r in &rows {
                println!("{}", r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" "));
            }
            rep.put("domain", &ids);
            rep.put("green", &rows);
            rep.put("max_asymmetry", g.max_asymmetry());
            rep.table("green", || {
                csv(
                    &["x", "y", "g"],
                    (0..k)
                        .flat_map(|i| (0..k).map(move |j| (i, j)))
                        .map(|(i, j)| vec![ids[i].to_string(), ids[j].to_string(), f(rows[i][j])]),
                )
            });
        }
        Cmd::Cap { space, domain, target } => {
            let s = rep.stage("space", || load_space(space))?;
            let d = ids_to_indices(&s, domain)?;
            let a = ids_to_indices(&s, target)?;
            let c = rep.stage("capacity", || Ok(s.net.capacity(&d, &a)?))?;
            println!("{:?}", c.value);
            let ids = s.metric.ids();
            rep.put("capacity", c.value);
            rep.put("equilibrium_measure", c.eq_measure.iter().map(|&(x, m)| (ids[x], m)).collect::<Vec<_>>());
            rep.table("potential", || {
                csv(&["id", "value"], ids.iter().zip(&c.potential).map(|(id, v)| vec![id.to_string(), f(*v)]))
            });
        }
        Cmd::Harnack { space, center, radius, delta, centres } => {
            let s = rep.stage("space", || load_space(space))?;
            match (center, radius) {
                (Some(c), Some(r)) => {
                    let x = s.metric.index_of(*c)?;
                    let b = rep.stage("harnack", || Ok(harnack_constant(&s.net, &s.metric, x, *r, *delta)?))?;
                    println!("{}", b.c_h.value());
                    rep.assert("harnack_finite", b.c_h.is_finite());
                    rep.table("harnack", || {
                        csv(&["center", "radius", "c_h"], [vec![b.center.to_string(), f(b.radius), f(b.c_h.value())]])
                    });
                    rep.put("ball", &b);
                }
                (None, None) => {
                    let h = rep.stage("ehi_scan", || {
                        Ok(ehi_scan(&s.net, &s.metric, *delta, *centres, TrendWindow::default())?)
                    })?;
                    println!("{}", h.global_max.value());
                    rep.assert("harnack_finite", h.global_max.is_finite());
                    rep.table("harnack", || {
                        csv(
                            &["center", "radius", "c_h"],
                            h.records.iter().map(|b| vec![b.center.to_string(), f(b.radius), f(b.c_h.value())]),
                        )
                    });
                    rep.table("scales", || scales_csv(&h));
                    rep.put("scan", &h);
                }
                _ => return Err(CliError::input("input-invalid", "--center and --radius go together")),
            }
        }
        Cmd::Cubes { space, a, root, input, output } => {
            let s = rep.stage("space", || load_space(space))?;
            let dec = match input {
                Some(p) => {
                    let dec = DyadicDecomposition::from_json(&read_file(p)?)?;
                    if dec.ids != s.metric.ids() {
                        return Err(CliError::input("input-invalid", "decomposition points differ from the space"));
                    }
                    dec
                }
                None => {
                    let x0 = root_index(&s, *root)?;
                    rep.stage("cubes", || Ok(build_decomposition(&s.metric, x0, *a)?))?
                }
            };
            let v = rep.stage("verify", || Ok(verify_decomposition(&dec, &s.metric)))?;
            if let Some(p) = output {
                write_file(p, &(dec.to_json() + "\n"))?;
            }
            println!("{}", if v.all_pass() { "pass" } else { "fail" });
            for p in &v.properties {
                rep.assert(p.name, p.pass);
            }
            rep.table("cubes", || {
                let ids = dec.ids.clone();
                let rows: Vec<Vec<String>> = (dec.k_min..=dec.k_max())
                    .flat_map(|k| dec.cubes(k).into_iter().map(move |(c, m)| (k, c, m.len())))
                    .map(|(k, c, m)| vec![k.to_string(), ids[c].to_string(), m.to_string()])
                    .collect();
                csv(&["level", "center", "points"], rows)
            });
            rep.put("verification", &v);
        }
        Cmd::Vk { space, a, root, samples, replay, ledger_out, measure_out } => {
            if let Some(p) = replay {
                let l = Ledger::from_json(&read_file(p)?)?;
                let audit = rep.stage("audit", || Ok(audit_ledger(&l)))?;
                println!("{}", if audit.pass() { "pass" } else { "fail" });
                rep.assert("ledger", audit.pass());
                rep.put("audit", &audit);
                return Ok(());
            }
            let s = rep.stage("space", || load_space(space))?;
            let x0 = root_index(&s, *root)?;
            let (_, vk) = vk_measure(rep, &s, *a, x0)?;
            // the audit runs on the serialized form, so the saved ledger is what was checked
            let text = vk.ledger.to_json();
            let audit = rep.stage("audit", || Ok(audit_ledger(&Ledger::from_json(text.as_bytes())?)))?;
            let cert = rep.stage("capacity_good", || {
                Ok(verify_capacity_good(&vk.measure, &s.net, &s.metric, 2.0, *samples, vk.theory)?)
            })?;
            let dbl = rep.stage("doubling", || Ok(verify_doubling(&vk.measure, &s.metric, *samples)))?;
            if let Some(p) = ledger_out {
                write_file(p, &(text + "\n"))?;
            }
            if let Some(p) = measure_out {
                let t = Space { metric: s.metric.clone(), net: s.net.time_change(vk.measure.clone())?, decl: s.decl };
                write_file(p, &(space_to_json(&t) + "\n"))?;
            }
            rep.assert("ledger", audit.pass());
            rep.assert("capacity_good", cert.pass);
            rep.assert("doubling", dbl.pass);
            println!("{}", if rep.pass() { "pass" } else { "fail" });
            rep.table("measure", || measure_csv(&s, &vk.measure));
            rep.put("audit", &audit);
            rep.put("capacity_good", &cert);
            rep.put("doubling", &dbl);
            rep.put("measure", &vk.measure);
        }
        Cmd::Psi { space, psi, pairs } => {
            let s = rep.stage("space", || load_space(space))?;
            let mu = measure_for(rep, &s, psi)?;
            let t = psi_table(rep, &s, &mu, psi)?;
            let reg = rep.stage("regularity", || Ok(verify_regular_scale(&t, &s.metric, *pairs)))?;
            println!("C1 {} beta1 {} beta2 {}", reg.c1, reg.beta1, reg.beta2);
            rep.assert("regular", reg.pass);
            rep.table("psi", || psi_csv(&s, &t));
            rep.put("regularity", &reg);
            rep.put("radii", &t.radii);
        }
        Cmd::Remetric { space, psi, pairs, budget } => {
            let s = rep.stage("space", || load_space(space))?;
            let mu = measure_for(rep, &s, psi)?;
            let t = psi_table(rep, &s, &mu, psi)?;
            let reg = rep.stage("regularity", || Ok(verify_regular_scale(&t, &s.metric, *pairs)))?;
            rep.table("psi", || psi_csv(&s, &t));
            rep.put("regularity", &reg);
            rep.assert("regular", reg.pass);
            let rem =
                rep.stage("remetric", || Ok(build_dpsi(&ScaleFn::Table(t.clone()), reg.beta2, &s.metric, *budget)?))?;
            println!("beta {} sandwich {}", rem.beta, rem.sandwich_constant);
            rep.assert("distortion_finite", rem.distortion.is_finite);
            rep.table("dpsi", || {
                let n = s.metric.len();
                let ids = s.metric.ids();
                csv(
                    &["x", "y", "d", "d_psi"],
                    (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).map(|(x, y)| {
                        vec![ids[x].to_string(), ids[y].to_string(), f(s.metric.d(x, y)), f(rem.d_psi.d(x, y))]
                    }),
                )
            });
            rep.put("remetric", &rem);
        }
        Cmd::Check { suite, space, psi, ineq, delta } => {
            let s = rep.stage("space", || load_space(space))?;
            check(rep, *suite, &s, psi, ineq, *delta)?;
        }
        Cmd::Stability { space, psi, lambda, seed, trials, delta, centres, max_ratio } => {
            let s = rep.stage("space", || load_space(space))?;
            let mu = measure_for(rep, &s, psi)?;
            let t = psi_table(rep, &s, &mu, psi)?;
            let cfg = StabilityConfig { delta: *delta, centres: *centres, ..StabilityConfig::default() };
            let st = rep.stage("stability", || {
                Ok(stability_experiment(&s.net, &s.metric, &mu, &ScaleFn::Table(t), *lambda, *seed, *trials, &cfg)?)
            })?;
            println!("max ratio {}", st.max_ratio.value());
            rep.assert("certificates_exact", st.certificates_exact);
            rep.assert("ratio_bounded", st.max_ratio.value() <= *max_ratio);
            rep.table("trials", || {
                csv(
                    &["trial", "c_h", "c_g", "pi", "cap"],
                    st.trials.iter().map(|t| {
                        vec![
                            t.trial.to_string(),
                            f(t.ratio_c_h.value()),
                            f(t.ratio_c_g.value()),
                            f(t.ratio_pi.value()),
                            f(t.ratio_cap.value()),
                        ]
                    }),
                )
            });
            rep.put("stability", &st);
        }
        Cmd::Pipeline { space, a, delta, lambda, seed, trials, centres, mu } => {
            if lambda.is_some() && seed.is_none() {
                return Err(CliError::input("input-invalid", "--lambda needs --seed"));
            }
            pipeline(rep, space, *a, *delta, *lambda, *seed, *trials, *centres, *mu)?;
        }
    }
    Ok(())
}

fn check(rep: &mut Report, suite: Suite, s: &Space, p: &PsiArgs, q: &IneqArgs, delta: f64) -> CliResult<()> {
    match suite {
        Suite::Greens => {
            let mut cfg = GreenLemmaConfig { delta, ..GreenLemmaConfig::default() };
            if let Some(c) = q.centres {
                cfg.centres = c;
            }
            let r = rep.stage("greens", || Ok(check_green_lemmas(&s.net, &s.metric, &cfg)?))?;
            println!("violations {}", r.unconditional_violations());
            rep.assert("greens", r.unconditional_violations() == 0);
            rep.put("greens", &r);
        }
        Suite::Caps => {
            let mut cfg = CapLemmaConfig { a1: q.a1, a2: q.a2, ..CapLemmaConfig::default() };
            if let Some(c) = q.centres {
                cfg.centres = c;
            }
            let dec = rep.stage("cubes", || Ok(build_decomposition(&s.metric, 0, p.a)?))?;
            let r = rep.stage("caps", || Ok(check_capacity_lemmas(&s.net, &s.metric, &cfg, Some(&dec))?))?;
            println!("violations {}", r.unconditional_violations());
            rep.assert("caps", r.unconditional_violations() == 0);
            rep.put("caps", &r);
        }
        Suite::Pi | Suite::Cappsi => {
            let mu = measure_for(rep, s, p)?;
            let psi = ScaleFn::Table(psi_table(rep, s, &mu, p)?);
            let (name, r) = if matches!(suite, Suite::Pi) {
                ("pi", rep.stage("pi", || Ok(check_pi(&s.net, &mu, &s.metric, &psi, q.a1, q.a2, q.centres)?))?)
            } else {
                (
                    "cappsi",
                    rep.stage("cappsi", || Ok(check_cap_psi(&s.net, &mu, &s.metric, &psi, q.a1, q.a2, q.centres)?))?,
                )
            };
            println!("constant {}", r.constant.value());
            rep.assert(name, bounded(r.constant));
            rep.table("balls", || {
                csv(
                    &["center", "radius", "raw", "normalized"],
                    r.balls
                        .iter()
                        .map(|b| vec![b.center.to_string(), f(b.radius), f(b.raw.value()), f(b.normalized.value())]),
                )
            });
            rep.put(name, &r);
        }
        Suite::Cs => {
            let mu = measure_for(rep, s, p)?;
            let psi = ScaleFn::Table(psi_table(rep, s, &mu, p)?);
            let r = rep.stage("cs", || Ok(check_cs(&s.net, &mu, &s.metric, &psi, q.a1, q.a2, q.centres)?))?;
            println!("C2 at C1=1: {}", r.frontier[0].1.value());
            rep.assert("cs", bounded(r.frontier[0].1));
            rep.table("balls", || {
                csv(
                    &["center", "radius", "c1", "c2"],
                    r.balls.iter().flat_map(|b| {
                        b.frontier
                            .iter()
                            .map(move |(c1, c2)| vec![b.center.to_string(), f(b.radius), f(*c1), f(c2.value())])
                    }),
                )
            });
            rep.put("cs", &r);
        }
        Suite::Cross => {
            let mu = measure_for(rep, s, p)?;
            let t = psi_table(rep, s, &mu, p)?;
            let reg = rep.stage("regularity", || Ok(verify_regular_scale(&t, &s.metric, 20_000)))?;
            let psi = ScaleFn::Table(t);
            let rem = rep.stage("remetric", || Ok(build_dpsi(&psi, reg.beta2, &s.metric, 100_000)?))?;
            let cfg = CrossConfig { a1: q.a1, a2: q.a2, delta, centres: q.centres };
            let r = rep.stage("cross", || Ok(cross_metric_check(&s.net, &mu, &s.metric, &psi, &rem, &cfg)?))?;
            println!("{}", if r.pass { "pass" } else { "fail" });
            rep.assert("cross", r.pass);
            rep.put("regularity", &reg);
            rep.put("remetric", &rem);
            rep.put("cross", &r);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn pipeline(
    rep: &mut Report,
    space: &SpaceArgs,
    a: f64,
    delta: f64,
    lambda: Option<f64>,
    seed: Option<u64>,
    trials: u64,
    centres: usize,
    mu_source: MuSource,
) -> CliResult<()> {
    let s = rep.stage("space", || load_space(space))?;
    rep.put("points", s.metric.len());

    let h = rep.stage("ehi_scan", || Ok(ehi_scan(&s.net, &s.metric, delta, Some(centres), TrendWindow::default())?))?;
    rep.assert("ehi_finite", h.global_max.is_finite());
    rep.table("scales", || scales_csv(&h));
    rep.put("ehi", &h.per_scale);
    rep.put("ehi_global_max", h.global_max);
    rep.put("ehi_trend", h.trend);

    let (dec, vk) = vk_measure(rep, &s, a, 0)?;
    let dv = rep.stage("verify_cubes", || Ok(verify_decomposition(&dec, &s.metric)))?;
    rep.assert("cubes", dv.all_pass());
    rep.put("cubes", &dv);
    let text = vk.ledger.to_json();
    let audit = rep.stage("audit", || Ok(audit_ledger(&Ledger::from_json(text.as_bytes())?)))?;
    rep.assert("ledger", audit.pass());
    rep.put("audit", &audit);
    let cert =
        rep.stage("capacity_good", || Ok(verify_capacity_good(&vk.measure, &s.net, &s.metric, 2.0, 32, vk.theory)?))?;
    rep.assert("capacity_good", cert.pass);
    rep.put("capacity_good", &cert);
    let dbl = rep.stage("doubling", || Ok(verify_doubling(&vk.measure, &s.metric, 32)))?;
    rep.put("doubling", &dbl);
    rep.table("measure", || measure_csv(&s, &vk.measure));

    let mu = match mu_source {
        MuSource::Vk => vk.measure.clone(),
        MuSource::Space => s.net.measure().to_vec(),
    };
    let t = rep.stage("psi", || Ok(build_psi(&s.net, &mu, &s.metric, 2.0, PsiWindow::Unshifted)?))?;
    let reg = rep.stage("regularity", || Ok(verify_regular_scale(&t, &s.metric, 20_000)))?;
    rep.assert("regular", reg.pass);
    rep.put("regularity", &reg);
    rep.table("psi", || psi_csv(&s, &t));
    let psi = ScaleFn::Table(t);
    // a failed remetrization is a finding, not an input problem: record it and go on
    match rep.stage("remetric", || Ok(build_dpsi(&psi, reg.beta2, &s.metric, 100_000)?)) {
        Ok(rem) => {
            rep.assert("remetric", rem.distortion.is_finite);
            rep.put("remetric", &rem);
            let cfg = CrossConfig { delta, centres: Some(centres), ..CrossConfig::default() };
            let cross = rep.stage("cross", || Ok(cross_metric_check(&s.net, &mu, &s.metric, &psi, &rem, &cfg)?))?;
            rep.assert("cross", cross.pass);
            rep.put("cross", &cross);
        }
        Err(e) if e.exit == 1 => {
            rep.assert("remetric", false);
            rep.put("remetric", serde_json::json!({"error": e.message}));
        }
        Err(e) => return Err(e),
    }
    let gl = GreenLemmaConfig { delta, centres, ..GreenLemmaConfig::default() };
    let greens = rep.stage("greens", || Ok(check_green_lemmas(&s.net, &s.metric, &gl)?))?;
    rep.assert("greens", greens.unconditional_violations() == 0);
    rep.put("greens", &greens);
    let cl = CapLemmaConfig { centres, ..CapLemmaConfig::default() };
    let caps = rep.stage("caps", || Ok(check_capacity_lemmas(&s.net, &s.metric, &cl, Some(&dec))?))?;
    rep.assert("caps", caps.unconditional_violations() == 0);
    rep.put("caps", &caps);

    if let (Some(lambda), Some(seed)) = (lambda, seed) {
        let sc = StabilityConfig { delta, centres: Some(centres), ..StabilityConfig::default() };
        let st = rep.stage("stability", || {
            Ok(stability_experiment(&s.net, &s.metric, &mu, &psi, lambda, seed, trials, &sc)?)
        })?;
        rep.assert("certificates_exact", st.certificates_exact);
        rep.assert("stability_bounded", st.max_ratio.value() <= 10.0);
        rep.put("stability", &st);
    }
    println!("{}", if rep.pass() { "pass" } else { "fail" });
    Ok(())
}
