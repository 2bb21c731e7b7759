use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use formtol::batch::{
    self, draw_pilot_batch, generate_virtual_batch, mother_shape, ncr_dispersion, part_seed, run_ncr, BatchStats,
    CovarianceFactor, NcrReport, ROLE_PILOT, ROLE_VIRTUAL,
};
use formtol::contact::{assembly_csv, gap_grid_csv, Assembler, MatingSetup};
use formtol::kinematics::{build_alpha, domain_contains, domain_csv, fr_domain, surface_center, Sdt};
use formtol::mesh::{interpolate_to_nodes, read_points};
use formtol::modal::{build_basis, load_basis, save_basis, ModalBasis};
use formtol::signature::{project, read_signature, residue, spectrum_csv, write_signature};
use formtol::{Error, Result};

use crate::config::RunConfig;

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

/// Input files are checked up front so a typo names the file.
fn input(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::InvalidArgument(format!("input file {} not found", path.display())))
    }
}

fn basis_for(cfg: &RunConfig, path: Option<&Path>) -> Result<ModalBasis> {
    match path {
        Some(p) => load_basis(input(p)?),
        None => build_basis(&cfg.mesh()?, cfg.n_modes()),
    }
}

pub fn gen_basis(cfg: &RunConfig) -> Result<()> {
    let basis = build_basis(&cfg.mesh()?, cfg.n_modes())?;
    let path = cfg.output.dir.join("basis.txt");
    fs::create_dir_all(&cfg.output.dir)?;
    save_basis(&basis, &path)?;
    println!("basis: {} modes, {} rigid", basis.n_modes(), basis.n_rigid());
    let first: Vec<String> = basis
        .omega2()
        .iter()
        .skip(basis.n_rigid())
        .take(5)
        .map(|w| format!("{:.4e}", w.max(0.0).sqrt()))
        .collect();
    println!("first flexible frequencies (unit material): {}", first.join(" "));
    println!("wrote {}", path.display());
    Ok(())
}

pub fn decompose(cfg: &RunConfig, surface: &Path, basis_path: Option<&Path>, m: Option<usize>) -> Result<()> {
    let basis = basis_for(cfg, basis_path)?;
    let m = m.unwrap_or(cfg.mating.m.min(basis.n_modes()));
    let mesh = basis.mesh().clone();
    let points = read_points(input(surface)?, mesh.kind())?;
    let interp = interpolate_to_nodes(&points, &mesh)?;
    if !interp.extrapolated.is_empty() {
        eprintln!(
            "warning: {} node(s) outside the measured span took the nearest sample value",
            interp.extrapolated.len()
        );
    }
    let sig = project(&interp.field, &basis, m)?;
    let res = residue(&interp.field, &sig, &basis)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    write_signature(dir.join("signature.txt"), &sig)?;
    write(dir, "spectrum.csv", &spectrum_csv(&sig))?;
    write(
        dir,
        "residue.txt",
        &format!("m: {m}\nresidue_norm_mm: {:e}\nresidue_peak_mm: {:e}\n", res.norm, res.peak),
    )?;
    println!("projected on {m} modes: residue norm {:.4e} mm, peak {:.4e} mm", res.norm, res.peak);
    println!("wrote {}", dir.display());
    Ok(())
}

fn verdict(inside: bool) -> &'static str {
    if inside {
        "conform"
    } else {
        "non-conform"
    }
}

fn sdt_line(sdt: &Sdt, cfg: &RunConfig) -> String {
    cfg.case()
        .components()
        .iter()
        .zip(sdt.reduced(cfg.case()))
        .map(|(c, v)| format!("{}={v:.6e}", c.name()))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn assemble(cfg: &RunConfig, sig1: &Path, sig2: &Path, basis_path: Option<&Path>) -> Result<()> {
    let basis = basis_for(cfg, basis_path)?;
    let mesh = basis.mesh().clone();
    let alpha = build_alpha(&basis, surface_center(&mesh))?;
    let setup = MatingSetup { force: cfg.force(), m: cfg.mating.m };
    let asm = Assembler::new(&basis, &alpha, setup)?;
    let (s1, s2) = (read_signature(input(sig1)?)?, read_signature(input(sig2)?)?);
    let res = asm.assemble(&s1, &s2)?;
    let face = cfg.fr_face()?;
    let domain = fr_domain(cfg.tolerance.t, &face, cfg.case())?;
    let with_form = res.sdt_with_form.transport(domain.point);
    let rigid_only = res.sdt_rigid_only.transport(domain.point);
    let cw = domain_contains(&domain, &with_form)?;
    let cr = domain_contains(&domain, &rigid_only)?;

    let dir = &cfg.output.dir;
    write(dir, "assembly.csv", &assembly_csv(&res, cfg.case()))?;
    write(dir, "gap.csv", &gap_grid_csv(&mesh, &res.gap))?;
    write(dir, "domain.csv", &domain_csv(&domain))?;
    let mut text = String::new();
    let _ = writeln!(text, "contacts: {:?}", res.facet.contacts);
    let _ = writeln!(text, "with_form_at_B: {}", sdt_line(&with_form, cfg));
    let _ = writeln!(text, "with_form_margin_mm: {:e}", cw.margin);
    let _ = writeln!(text, "with_form_verdict: {}", verdict(cw.inside));
    let _ = writeln!(text, "rigid_only_at_B: {}", sdt_line(&rigid_only, cfg));
    let _ = writeln!(text, "rigid_only_margin_mm: {:e}", cr.margin);
    let _ = writeln!(text, "rigid_only_verdict: {}", verdict(cr.inside));
    write(dir, "verdict.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn stats_csv(stats: &[(&str, &BatchStats)]) -> String {
    let mut s = String::from("part,row");
    let m = stats[0].1.m();
    for i in 1..=m {
        let _ = write!(s, ",mode_{i}");
    }
    s.push('\n');
    for (name, st) in stats {
        let _ = write!(s, "{name},mean");
        for v in st.mu().iter() {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
        for i in 0..m {
            let _ = write!(s, "{name},cov_{}", i + 1);
            for v in st.cov().row(i).iter() {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
    }
    s
}

/// Pilot statistics of both parts, then `batch.runs` virtual productions.
pub fn simulate_reports(cfg: &RunConfig) -> Result<(Vec<NcrReport>, [BatchStats; 2])> {
    let basis = build_basis(&cfg.mesh()?, cfg.n_modes())?;
    let mesh = basis.mesh().clone();
    let alpha = build_alpha(&basis, surface_center(&mesh))?;
    let m = cfg.mating.m;
    let asm = Assembler::new(&basis, &alpha, MatingSetup { force: cfg.force(), m })?;
    let domain = fr_domain(cfg.tolerance.t, &cfg.fr_face()?, cfg.case())?;
    let b = &cfg.batch;
    let mother = mother_shape(b.mu0, m)?;
    let (_, stats1) = draw_pilot_batch(&mother, b.sigma0, b.pilot_size, part_seed(b.seed, 1, ROLE_PILOT))?;
    let (_, stats2) = draw_pilot_batch(&mother, b.sigma0, b.pilot_size, part_seed(b.seed, 2, ROLE_PILOT))?;
    for (part, st) in [(1, &stats1), (2, &stats2)] {
        // rank-deficient pilots (n <= m) always leave round-off negatives
        let clamped = CovarianceFactor::new(st).clamped;
        let scale = st.cov().trace().max(f64::MIN_POSITIVE);
        if let Some(worst) = clamped.iter().copied().reduce(f64::min).filter(|w| *w < -1e-12 * scale) {
            eprintln!(
                "warning: part {part}: {} negative covariance eigenvalue(s) clamped to 0 (lowest {worst:e})",
                clamped.len()
            );
        }
    }
    let pairing = cfg.pairing()?;
    let mut reports = Vec::with_capacity(b.runs);
    for run in 0..b.runs as u64 {
        let v1 = generate_virtual_batch(&stats1, b.size, part_seed(b.seed, 1, ROLE_VIRTUAL + run))?;
        let v2 = generate_virtual_batch(&stats2, b.size, part_seed(b.seed, 2, ROLE_VIRTUAL + run))?;
        reports.push(run_ncr(&v1, &v2, &asm, &domain, pairing, b.seed)?);
    }
    Ok((reports, [stats1, stats2]))
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let (reports, [s1, s2]) = simulate_reports(cfg)?;
    let dir = &cfg.output.dir;
    let first = &reports[0];
    let domain = fr_domain(cfg.tolerance.t, &cfg.fr_face()?, cfg.case())?;
    write(dir, "domain.csv", &domain_csv(&domain))?;
    write(dir, "pilot_stats.csv", &stats_csv(&[("part1", &s1), ("part2", &s2)]))?;
    write(dir, "ncr_records.csv", &batch::records_csv(first))?;
    write(dir, "ncr_ellipse.csv", &batch::ellipse_csv(first))?;
    let mut summary = batch::summary(first);
    let mut runs = String::from("run,ncr_with_form,ncr_rigid_only,no_stable_contact\n");
    for (r, rep) in reports.iter().enumerate() {
        let _ = writeln!(runs, "{r},{:e},{:e},{}", rep.ncr_with_form, rep.ncr_rigid_only, rep.unstable);
    }
    write(dir, "ncr_runs.csv", &runs)?;
    if reports.len() > 1 {
        let d = ncr_dispersion(&reports)?;
        let _ = writeln!(summary, "runs: {}", d.with_form.runs);
        for (name, x) in [("with_form", d.with_form), ("rigid_only", d.rigid_only)] {
            let _ = writeln!(
                summary,
                "ncr_{name}_over_runs: mean {:.4} std {:.4} binomial {:.4}",
                x.mean, x.std, x.binomial
            );
        }
    }
    write(dir, "ncr_summary.txt", &summary)?;
    print!("{summary}");
    println!("wrote {}", dir.display());
    Ok(())
}

/// Exit status for a failed command: 2 for bad input, 3 for failed computation.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        3
    }
}
