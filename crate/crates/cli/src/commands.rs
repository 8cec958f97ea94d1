use std::path::Path;

use ambsim::channel::{self, linear_to_db, PlacementConstraints};
use ambsim::detector::DetectorKind;
use ambsim::experiments::{
    self, Curve, MapOptions, MeasuredChannelSet, OutageOptions, PcsSource, SyntheticPcs,
};
use ambsim::output::{self, fmt_f64, write_atomic, MapMeta};
use ambsim::polarization::{self, Orientation};
use ambsim::seed::child_seed;
use ambsim::tag::StatePair;
use anyhow::{bail, Context, Result};

use crate::config::{axis_points, Config, PcsSourceKind};

/// Collects the files a command writes, by name relative to the output directory.
pub struct Outputs<'a> {
    dir: &'a Path,
    pub names: Vec<String>,
}

impl<'a> Outputs<'a> {
    pub fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            names: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, contents.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn curve(&mut self, name: &str, curve: &Curve) -> Result<()> {
        self.write(name, &output::curve_csv(curve))
    }
}

fn deg(o: Orientation) -> String {
    let (p, a) = o.to_degrees();
    format!("({p:.1}, {a:.1})")
}

pub fn optimum(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let o = &cfg.optimum;
    let source =
        Orientation::from_degrees(cfg.source_orientation_deg[0], cfg.source_orientation_deg[1])?;
    let grid = |[a, b, s]: [f64; 3]| polarization::degree_grid(a, b, s);
    let step = o.search_step_deg;
    let last_azimuth = 360.0 - step;
    let map = polarization::agreement_map(
        source,
        &grid(o.reader_polar_deg),
        &grid(o.reader_azimuth_deg),
        &polarization::degree_grid(0.0, 180.0, step),
        &polarization::degree_grid(0.0, last_azimuth, step),
    )
    .context("optimum")?;

    let mut long = String::from(
        "reader_polar_deg,reader_azimuth_deg,analytic_polar_deg,analytic_azimuth_deg,searched_polar_deg,searched_azimuth_deg,dot\n",
    );
    let mut matrix = String::new();
    for (i, &rp) in map.reader_polar.iter().enumerate() {
        let mut row = Vec::with_capacity(map.reader_azimuth.len());
        for (j, &ra) in map.reader_azimuth.iter().enumerate() {
            let (ap, aa) = map.analytic[i][j].to_degrees();
            let (sp, sa) = map.searched[i][j].to_degrees();
            let dot = map.dot[i][j];
            long.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_f64(rp.to_degrees()),
                fmt_f64(ra.to_degrees()),
                fmt_f64(ap),
                fmt_f64(aa),
                fmt_f64(sp),
                fmt_f64(sa),
                fmt_f64(dot)
            ));
            row.push(fmt_f64(dot));
        }
        matrix.push_str(&row.join(","));
        matrix.push('\n');
    }
    out.write("agreement.csv", &long)?;
    out.write("dot_matrix.csv", &matrix)?;

    let reader =
        Orientation::from_degrees(cfg.reader_orientation_deg[0], cfg.reader_orientation_deg[1])?;
    let analytic = polarization::optimal_tag_orientation(reader);
    let (s, r) = (source.unit_vector(), reader.unit_vector());
    let (searched, _) = polarization::exhaustive_best_orientation(
        |t| polarization::backscatter_projection(s, t.unit_vector(), r).abs(),
        &polarization::degree_grid(0.0, 180.0, step),
        &polarization::degree_grid(0.0, last_azimuth, step),
    )?;
    println!(
        "reader {}: analytic tag {} (polar, azimuth), searched tag {}, dot={:.3}",
        deg(reader),
        deg(analytic),
        deg(searched),
        analytic.unit_vector().dot(searched.unit_vector()).abs()
    );
    println!(
        "{} reader orientations, min |dot| = {:.6}",
        map.len(),
        map.min_dot()
    );
    Ok(())
}

pub fn map(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let sc = cfg.scenario(0)?;
    let grid = cfg.map_grid(&sc)?;
    let tag = cfg.tag_model()?;
    let kind = cfg.detector.kind;
    let opts = MapOptions {
        lse_bits: cfg.map.lse_bits,
        link: cfg.link_options(),
        seed: cfg.monte_carlo_seed(),
    };
    let m = experiments::ber_map(&sc, &tag, kind, &grid, cfg.snr_tx_db, &opts)?;
    let nx = grid.nx();
    out.write("ber.csv", &output::matrix_csv(&m.ber, nx))?;
    out.write("pattern.csv", &output::matrix_csv(&m.best_pattern, nx))?;
    out.write("carpet.csv", &output::carpet_csv(&m))?;
    let mut at_snr = sc.clone();
    at_snr.set_snr_tx_db(cfg.snr_tx_db);
    let amp = experiments::amplitude_maps(&at_snr, &tag, &grid)?;
    out.write("a_on.csv", &output::matrix_csv(&amp.a_on, nx))?;
    out.write("a_off.csv", &output::matrix_csv(&amp.a_off, nx))?;
    let meta = MapMeta::new(
        &grid,
        cfg.snr_tx_db,
        cfg.seed,
        &sc,
        &cfg.tag_label(),
        &kind.to_string(),
    );
    out.write(
        "meta.json",
        &format!("{}\n", serde_json::to_string_pretty(&meta)?),
    )?;

    let reach = m.ber.iter().filter(|&&b| b < cfg.ber_target).count();
    let distinct = {
        let mut v = m.best_pattern.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    println!(
        "{} cells, {} below BER target {}, {} distinct best orientations",
        m.ber.len(),
        reach,
        cfg.ber_target,
        distinct
    );
    Ok(())
}

pub fn outage(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let snr = axis_points(cfg.outage.snr_db)?;
    let tags: Vec<String> = if cfg.outage.tags.is_empty() {
        vec![cfg.tag_label()]
    } else {
        cfg.outage.tags.clone()
    };
    let detectors: Vec<DetectorKind> = if cfg.outage.detectors.is_empty() {
        vec![cfg.detector.kind]
    } else {
        cfg.outage.detectors.clone()
    };
    let n_real = cfg.outage.scatterer_realizations;
    let scenarios = (0..n_real as u64)
        .map(|r| cfg.scenario(r))
        .collect::<Result<Vec<_>>>()?;
    let region = cfg.annulus();

    for name in &tags {
        let tag = if cfg.outage.tags.is_empty() {
            cfg.tag_model()?
        } else {
            cfg.preset_tag(name)?
        };
        for &kind in &detectors {
            let mut mean = vec![0.0; snr.len()];
            for (r, sc) in scenarios.iter().enumerate() {
                let opts = OutageOptions {
                    ber_target: cfg.ber_target,
                    lse: cfg.lse_method(),
                    link: cfg.link_options(),
                    seed: child_seed(cfg.monte_carlo_seed(), r as u64),
                };
                let c = experiments::outage_curve(
                    sc,
                    &tag,
                    kind,
                    cfg.outage.snr_axis,
                    &snr,
                    &region,
                    &opts,
                )
                .with_context(|| format!("outage for {name}/{kind}"))?;
                if n_real > 1 {
                    out.curve(
                        &format!("realizations/outage_{name}_{kind}_r{r}.csv"),
                        &c.to_curve(name.as_str()),
                    )?;
                }
                for (m, v) in mean.iter_mut().zip(&c.outage) {
                    *m += v / n_real as f64;
                }
            }
            let curve = Curve {
                label: format!("{name}_{kind}"),
                snr_db: snr.clone(),
                value: mean,
            };
            out.curve(&format!("outage_{name}_{kind}.csv"), &curve)?;
            println!("{name:>8} {kind}: {}", summary(&curve));
        }
    }

    let mut gain = 0.0;
    for sc in &scenarios {
        gain += channel::direct_channel(sc)?.0.norm_sqr() / n_real as f64;
    }
    let captured = Curve {
        label: "captured".into(),
        snr_db: snr.clone(),
        value: snr.iter().map(|s| s + linear_to_db(gain)).collect(),
    };
    out.curve("captured.csv", &captured)?;
    Ok(())
}

fn summary(c: &Curve) -> String {
    c.snr_db
        .iter()
        .zip(&c.value)
        .map(|(s, v)| format!("{}:{v:.3}", fmt_f64(*s)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn pcs(cfg: &Config, out: &mut Outputs) -> Result<()> {
    let p = &cfg.pcs;
    let snr = axis_points(p.snr_db)?;
    let link = cfg.link_options();
    let seed = cfg.monte_carlo_seed();
    if p.source == PcsSourceKind::Synthetic {
        let synth = SyntheticPcs {
            rhos: p.rho.clone(),
            relative_sigma: p.relative_sigma,
            frame_bits: p.frame_bits,
            ..Default::default()
        };
        let curves = experiments::synthetic_pcs_sweep(&synth, &snr, p.n_bits, &link, seed)?;
        for (c, rho) in curves.iter().zip(&p.rho) {
            out.curve(&format!("pcs_rho_{}.csv", fmt_f64(*rho)), c)?;
            println!("rho {rho}: {}", summary(c));
        }
        return Ok(());
    }

    let source = match p.source {
        PcsSourceKind::Measured => {
            let path = p
                .measured_file
                .as_ref()
                .context("pcs.measured_file: required for measured channels")?;
            let set = MeasuredChannelSet::load(path)
                .with_context(|| format!("loading {}", path.display()))?;
            PcsSource::Measured(set)
        }
        PcsSourceKind::Model => PcsSource::Model {
            scenario: cfg.scenario(0)?,
            tag: cfg.tag_model()?,
        },
        PcsSourceKind::Synthetic => unreachable!(),
    };
    let pairs = p
        .pairs
        .iter()
        .map(|s| s.parse::<StatePair>().map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let curves = experiments::pcs_sweep(&source, &pairs, p.snr_axis, &snr, p.n_bits, &link, seed)?;
    let mut selection = String::from("pair,rx_antenna_id,separation\n");
    for c in &curves {
        out.curve(&format!("pcs_{}.csv", c.pair.file_stem()), &c.curve)?;
        selection.push_str(&format!(
            "{},{},{}\n",
            c.pair,
            c.antenna,
            fmt_f64(c.separation)
        ));
        println!(
            "{:>5} (rx {}): {}",
            c.pair.to_string(),
            c.antenna,
            summary(&c.curve)
        );
    }
    out.write("pcs_selection.csv", &selection)?;
    Ok(())
}

/// Checks every scatterer realization against the placement rules.
pub fn validate(cfg: &Config) -> Result<()> {
    let lambda = channel::SPEED_OF_LIGHT / cfg.frequency_hz;
    let realizations = cfg.outage.scatterer_realizations as u64;
    let mut problems = Vec::new();
    for r in 0..realizations {
        let sc = cfg.scenario(r)?;
        let k = PlacementConstraints {
            above_ground: sc.ground_plane,
            ..PlacementConstraints::for_wavelength(lambda)
        };
        for v in channel::placement_violations(
            &sc.scatterers,
            &k,
            sc.reader.position,
            &[sc.source.position],
        ) {
            problems.push(format!("realization {r}: {v}"));
        }
        let h = channel::direct_channel(&sc)?.0;
        println!(
            "realization {r}: {} scatterers, |h_SR| = {:.3e}, captured SNR at {} dB = {:.2} dB",
            sc.scatterers.len(),
            h.norm(),
            fmt_f64(cfg.snr_tx_db),
            cfg.snr_tx_db + linear_to_db(h.norm_sqr())
        );
    }
    cfg.map_grid(&cfg.base_scenario()?)?;
    cfg.annulus().cells(&cfg.base_scenario()?)?;
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{p}");
        }
        bail!("{} placement violations", problems.len());
    }
    println!("config ok");
    Ok(())
}
