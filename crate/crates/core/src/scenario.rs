//! Plain-text scenario files.
//!
//! One `key: value` pair per line, `#` starts a comment. Keys are the
//! [`RadarConfig`] field names (`p`, `qr`, `k`, `m`, `n`, `fc`, `delta_f`, `t0`,
//! `d_r`, `d_t`), `targets`, `snr_db` or `sigma2`, `seed`, `pm_levels` and `pm_on`.
//! Spacings accept a `lambda` suffix (`d_r: 0.5 lambda`). Each `targets` line holds
//! one `{r_m: .., v_mps: .., theta_deg: .., beta_re: .., beta_im: ..}` record or a
//! bracketed list of them; repeated lines append. Snapshot sidecars add `pulse`
//! lines in the frame text format.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::trial_seed;
use crate::codec::{FrameSelection, PulseSelection};
use crate::config::{RadarConfig, Scene, Target, SPEED_OF_LIGHT};
use crate::error::{FracError, Result};
use crate::linalg::C64;
use crate::signal::{snr_to_sigma2, synthesize, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    SnrDb(f64),
    Sigma2(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: RadarConfig,
    pub targets: Vec<Target>,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub pm_levels: usize,
    pub pm_on: bool,
    /// Present in snapshot sidecars.
    pub frame: Option<FrameSelection>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            cfg: RadarConfig::standard(),
            targets: Scene::standard_targets(),
            noise: NoiseSpec::SnrDb(20.0),
            seed: 1,
            pm_levels: 2,
            pm_on: true,
            frame: None,
        }
    }
}

fn perr(line: usize, msg: impl Into<String>) -> FracError {
    FracError::Parse(format!("line {line}: {}", msg.into()))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| perr(line, format!("'{}' is not a number", s.trim())))
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| perr(line, format!("'{}' is not a non-negative integer", s.trim())))
}

fn parse_target(body: &str, line: usize) -> Result<Target> {
    let (mut r, mut v, mut th) = (None, None, None);
    let mut beta = C64::new(1.0, 0.0);
    for field in body.split(',').map(str::trim).filter(|f| !f.is_empty()) {
        let (k, val) = field.split_once(':').ok_or_else(|| perr(line, format!("target field '{field}' lacks ':'")))?;
        let x = parse_f64(val, line)?;
        match k.trim() {
            "r_m" => r = Some(x),
            "v_mps" => v = Some(x),
            "theta_deg" => th = Some(x),
            "beta_re" => beta.re = x,
            "beta_im" => beta.im = x,
            other => return Err(perr(line, format!("unknown target field '{other}'"))),
        }
    }
    match (r, v, th) {
        (Some(r), Some(v), Some(th)) => Ok(Target::new(r, v, th.to_radians(), beta)),
        _ => Err(perr(line, "target needs r_m, v_mps and theta_deg")),
    }
}

fn parse_targets(value: &str, line: usize) -> Result<Vec<Target>> {
    let mut s = value.trim();
    if let Some(inner) = s.strip_prefix('[') {
        s = inner.strip_suffix(']').ok_or_else(|| perr(line, "unterminated '['"))?;
    }
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let open = rest.strip_prefix('{').ok_or_else(|| perr(line, "target records must be enclosed in '{}'"))?;
        let close = open.find('}').ok_or_else(|| perr(line, "unterminated '{'"))?;
        out.push(parse_target(&open[..close], line)?);
        rest = open[close + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    Ok(out)
}

/// Length in metres; a `lambda` suffix scales by the carrier wavelength.
fn parse_length(s: &str, line: usize, wavelength: f64) -> Result<f64> {
    let t = s.trim();
    match t.strip_suffix("lambda") {
        Some(num) if num.trim().is_empty() => Ok(wavelength),
        Some(num) => Ok(parse_f64(num, line)? * wavelength),
        None => parse_f64(t, line),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Scenario { targets: Vec::new(), ..Scenario::default() };
        let mut targets_given = false;
        let mut noise: Option<NoiseSpec> = None;
        let mut pulses: Vec<PulseSelection> = Vec::new();
        let mut spacings: Vec<(bool, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once(':').ok_or_else(|| perr(line, "expected 'key: value'"))?;
            let value = value.trim();
            let cfg = &mut sc.cfg;
            match key.trim() {
                "p" => cfg.p = parse_usize(value, line)?,
                "qr" => cfg.qr = parse_usize(value, line)?,
                "k" => cfg.k = parse_usize(value, line)?,
                "m" => cfg.m = parse_usize(value, line)?,
                "n" => cfg.n = parse_usize(value, line)?,
                "fc" => cfg.fc = parse_f64(value, line)?,
                "delta_f" => cfg.delta_f = parse_f64(value, line)?,
                "t0" => cfg.t0 = parse_f64(value, line)?,
                // resolved after fc is known
                "d_r" => spacings.push((true, value.to_string(), line)),
                "d_t" => spacings.push((false, value.to_string(), line)),
                "targets" => {
                    targets_given = true;
                    sc.targets.extend(parse_targets(value, line)?);
                }
                "snr_db" | "sigma2" if noise.is_some() => return Err(perr(line, "give only one of snr_db and sigma2")),
                "snr_db" => noise = Some(NoiseSpec::SnrDb(parse_f64(value, line)?)),
                "sigma2" => noise = Some(NoiseSpec::Sigma2(parse_f64(value, line)?)),
                "seed" => sc.seed = value.parse().map_err(|_| perr(line, format!("'{value}' is not a seed")))?,
                "pm_levels" => sc.pm_levels = parse_usize(value, line)?,
                "pm_on" => {
                    sc.pm_on = value.parse().map_err(|_| perr(line, format!("'{value}' is not true/false")))?;
                }
                "pulse" => pulses.push(value.parse().map_err(|e: FracError| perr(line, e.to_string()))?),
                other => return Err(perr(line, format!("unknown key '{other}'"))),
            }
        }
        let wavelength = SPEED_OF_LIGHT / sc.cfg.fc;
        let (mut dr_set, mut dt_set) = (false, false);
        for (is_rx, value, line) in spacings {
            let x = parse_length(&value, line, wavelength)?;
            if is_rx {
                sc.cfg.d_r = x;
                dr_set = true;
            } else {
                sc.cfg.d_t = x;
                dt_set = true;
            }
        }
        // keep the defaults consistent with a changed carrier or receive count
        if !dr_set {
            sc.cfg.d_r = 0.5 * wavelength;
        }
        if !dt_set {
            sc.cfg.d_t = sc.cfg.qr as f64 * sc.cfg.d_r;
        }
        if !targets_given {
            sc.targets = Scene::standard_targets();
        }
        if let Some(n) = noise {
            sc.noise = n;
        }
        if !pulses.is_empty() {
            sc.frame = Some(FrameSelection { pulses });
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        Scene::new(self.targets.clone(), 0.0, self.seed).validate(&self.cfg)?;
        match self.noise {
            NoiseSpec::SnrDb(x) if !x.is_finite() => {
                return Err(FracError::InvalidScene("snr_db must be finite".into()))
            }
            NoiseSpec::Sigma2(x) if !(x >= 0.0 && x.is_finite()) => {
                return Err(FracError::InvalidScene("sigma2 must be finite and >= 0".into()))
            }
            _ => {}
        }
        if self.pm_levels < 1 {
            return Err(FracError::InvalidConfig("pm_levels must be at least 1".into()));
        }
        if let Some(f) = &self.frame {
            f.validate(&self.cfg, self.pm_levels)?;
        }
        Ok(())
    }

    /// Scene and frame drawn as trial 0 of a sweep seeded with `self.seed`, so a
    /// synthesized snapshot matches that trial. A stored frame replaces the draw.
    pub fn realize(&self) -> Result<(Scene, FrameSelection)> {
        self.validate()?;
        let seed = trial_seed(self.seed, 0);
        let frame = match &self.frame {
            Some(f) => f.clone(),
            None => FrameSelection::random(&self.cfg, self.pm_levels, &mut ChaCha8Rng::seed_from_u64(seed))?,
        };
        let mut scene = Scene::new(self.targets.clone(), 0.0, seed);
        scene.sigma2 = match self.noise {
            NoiseSpec::SnrDb(snr) => snr_to_sigma2(snr, &scene, &self.cfg, &frame),
            NoiseSpec::Sigma2(s) => s,
        };
        Ok((scene, frame))
    }

    pub fn synthesize(&self) -> Result<(Snapshot, f64)> {
        let (scene, frame) = self.realize()?;
        Ok((synthesize(&scene, &self.cfg, &frame, self.pm_levels, self.pm_on)?, scene.sigma2))
    }

    pub fn to_text(&self) -> String {
        let c = &self.cfg;
        let mut s = String::new();
        let _ = writeln!(s, "p: {}\nqr: {}\nk: {}\nm: {}\nn: {}", c.p, c.qr, c.k, c.m, c.n);
        let _ =
            writeln!(s, "fc: {:e}\ndelta_f: {:e}\nt0: {:e}\nd_r: {:e}\nd_t: {:e}", c.fc, c.delta_f, c.t0, c.d_r, c.d_t);
        for t in &self.targets {
            let _ = writeln!(
                s,
                "targets: {{r_m: {}, v_mps: {}, theta_deg: {}, beta_re: {}, beta_im: {}}}",
                t.r,
                t.v,
                t.theta.to_degrees(),
                t.beta.re,
                t.beta.im
            );
        }
        match self.noise {
            NoiseSpec::SnrDb(x) => {
                let _ = writeln!(s, "snr_db: {x}");
            }
            NoiseSpec::Sigma2(x) => {
                let _ = writeln!(s, "sigma2: {x:e}");
            }
        }
        let _ = writeln!(s, "seed: {}\npm_levels: {}\npm_on: {}", self.seed, self.pm_levels, self.pm_on);
        if let Some(f) = &self.frame {
            for p in &f.pulses {
                let _ = writeln!(s, "pulse: {p}");
            }
        }
        s
    }
}
