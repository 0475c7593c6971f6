//! Flat key = value run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use vrmass_core::geometry::sphere_area;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

macro_rules! keyword_enum {
    ($name:ident { $($var:ident => $kw:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq)]
        pub enum $name { $($var),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($kw => Ok($name::$var),)+
                    _ => Err(format!("expected one of: {}", [$($kw),+].join(", "))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$var => $kw),+ })
            }
        }
    };
}

keyword_enum!(Subcommand {
    Mass => "mass",
    Lichnerowicz => "lichnerowicz",
    Lapse => "lapse",
    Evolve => "evolve",
    Variation => "variation",
    Verify => "verify",
});
keyword_enum!(FiberKind { Sphere => "sphere", Hyperbolic => "hyperbolic" });
keyword_enum!(Inner { Center => "center", Excision => "excision", TwoEnded => "two_ended" });
keyword_enum!(SpacingKind { Uniform => "uniform", Exponential => "exponential" });
keyword_enum!(Family {
    Background => "background",
    Kottler => "kottler",
    Conformal => "conformal",
    Compact => "compact",
    Tt => "tt",
});
keyword_enum!(ExtrapolationKind { Fit => "fit", Last => "last" });
keyword_enum!(GateKind { Enforce => "enforce", Skip => "skip" });

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub n: usize,
    pub fiber: FiberKind,
    pub fiber_volume: f64,
    pub inner: Inner,
    pub r0: f64,
    pub intervals: usize,
    pub r_max: f64,
    pub spacing: SpacingKind,
    pub spacing_strength: f64,
    pub radii: Vec<f64>,
    pub family: Family,
    pub eps: f64,
    pub delta: f64,
    pub amplitude: f64,
    pub kottler_mass: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub extrapolation: ExtrapolationKind,
    pub gate: GateKind,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub companion: bool,
    pub first_eps: f64,
    pub second_eps: f64,
    pub directions: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    /// Keys that were not given and took their default.
    pub defaulted: Vec<String>,
}

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "subcommand",
    "n",
    "fiber",
    "fiber_volume",
    "inner",
    "r0",
    "intervals",
    "r_max",
    "spacing",
    "spacing_strength",
    "radii",
    "family",
    "eps",
    "delta",
    "amplitude",
    "kottler_mass",
    "bump_center",
    "bump_width",
    "newton_tol",
    "newton_max_iter",
    "extrapolation",
    "gate",
    "t0",
    "t_end",
    "dt",
    "record_every",
    "companion",
    "first_eps",
    "second_eps",
    "directions",
    "out",
    "seed",
    "threads",
];

struct Fields {
    map: BTreeMap<String, (usize, String)>,
    defaulted: Vec<String>,
}

impl Fields {
    fn get<T: FromStr>(&mut self, key: &str, default: impl FnOnce() -> T) -> Result<(T, usize), ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            Some((line, raw)) => raw
                .parse::<T>()
                .map(|v| (v, line))
                .map_err(|e| err(line, format!("{key}: cannot parse {raw:?}: {e}"))),
            None => {
                self.defaulted.push(key.to_string());
                Ok((default(), 0))
            }
        }
    }

    fn list(&mut self, key: &str, default: impl FnOnce() -> Vec<f64>) -> Result<(Vec<f64>, usize), ConfigError> {
        match self.map.remove(key) {
            Some((line, raw)) => raw
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| err(line, format!("{key}: cannot parse {s:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()
                .map(|v| (v, line)),
            None => {
                self.defaulted.push(key.to_string());
                Ok((default(), 0))
            }
        }
    }
}

/// Six radii evenly spaced in (R/2, R].
pub fn default_radii(r_max: f64) -> Vec<f64> {
    (1..=6).map(|k| 0.5 * r_max + k as f64 * r_max / 12.0).collect()
}

fn check(ok: bool, line: usize, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(err(line, msg))
    }
}

/// Parse `key = value` lines; `#` starts a comment. Missing keys get defaults,
/// which are listed in `defaulted`.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_for(text, None)
}

/// As `parse_config`, with the subcommand given on the command line. A
/// `subcommand` key in the text must then agree with it.
pub fn parse_config_for(text: &str, given: Option<Subcommand>) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| err(line, format!("expected key = value, got {body:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(err(line, format!("unknown key {key:?}")));
        }
        if let Some((first, _)) = map.get(key) {
            return Err(err(line, format!("duplicate key {key:?} (first on line {first})")));
        }
        map.insert(key.to_string(), (line, value.to_string()));
    }
    let mut f = Fields { map, defaulted: Vec::new() };

    let subcommand = match (given, f.map.remove("subcommand")) {
        (g, Some((line, raw))) => {
            let s: Subcommand = raw.parse().map_err(|e| err(line, format!("subcommand: cannot parse {raw:?}: {e}")))?;
            if g.is_some_and(|g| g != s) {
                return Err(err(line, format!("subcommand {s} conflicts with {} on the command line", g.unwrap())));
            }
            s
        }
        (Some(g), None) => g,
        (None, None) => {
            f.defaulted.push("subcommand".into());
            Subcommand::Mass
        }
    };
    let (n, ln) = f.get("n", || 3usize)?;
    check(n >= 3, ln, "n must be at least 3")?;
    // evolution and variation run on the two-ended hyperbolic-fiber chart
    let two_ended = matches!(subcommand, Subcommand::Evolve | Subcommand::Variation);
    let (fiber, _) = f.get("fiber", || if two_ended { FiberKind::Hyperbolic } else { FiberKind::Sphere })?;
    let (fiber_volume, l) = f.get("fiber_volume", || match fiber {
        FiberKind::Sphere => sphere_area(n - 1),
        FiberKind::Hyperbolic => 4.0 * std::f64::consts::PI,
    })?;
    check(fiber_volume > 0.0, l, "fiber_volume must be positive")?;
    let (inner, _) = f.get("inner", || if two_ended { Inner::TwoEnded } else { Inner::Excision })?;
    let (r0, l) = f.get("r0", || 1.0)?;
    check(r0 > 0.0, l, "r0 must be positive")?;
    let (intervals, l) = f.get("intervals", || 400usize)?;
    check(intervals >= 8, l, "intervals must be at least 8")?;
    let (r_max, l_rmax) = f.get("r_max", || 12.0)?;
    check(r_max > 0.0, l_rmax, "r_max must be positive")?;
    check(inner != Inner::Excision || r_max > r0, l_rmax, "r_max must exceed r0")?;
    let (spacing, _) = f.get("spacing", || SpacingKind::Uniform)?;
    let (spacing_strength, l) = f.get("spacing_strength", || 1.0)?;
    check(spacing_strength > 0.0, l, "spacing_strength must be positive")?;
    let (radii, l) = f.list("radii", || default_radii(r_max))?;
    check(!radii.is_empty() && radii.iter().all(|&r| r > 0.0 && r <= r_max), l, "radii must lie in (0, r_max]")?;
    check(radii.windows(2).all(|w| w[0] < w[1]), l, "radii must be increasing")?;
    let (family, _) = f.get("family", || if subcommand == Subcommand::Evolve { Family::Tt } else { Family::Background })?;
    let (eps, _) = f.get("eps", || 0.1)?;
    let (delta, l) = f.get("delta", || 2.0)?;
    check(delta > 0.0, l, "delta must be positive")?;
    let (amplitude, _) = f.get("amplitude", || 0.5)?;
    let (kottler_mass, _) = f.get("kottler_mass", || 0.0)?;
    let (bump_center, _) = f.get("bump_center", || 2.5)?;
    let (bump_width, l) = f.get("bump_width", || 2.5)?;
    check(bump_width > 0.0, l, "bump_width must be positive")?;
    let (newton_tol, l) = f.get("newton_tol", || 1e-10)?;
    check(newton_tol > 0.0, l, "newton_tol must be positive")?;
    let (newton_max_iter, l) = f.get("newton_max_iter", || 50usize)?;
    check(newton_max_iter > 0, l, "newton_max_iter must be positive")?;
    let (extrapolation, _) = f.get("extrapolation", || ExtrapolationKind::Fit)?;
    let (gate, _) = f.get("gate", || GateKind::Enforce)?;
    let (t0, l) = f.get("t0", || 1.0)?;
    check(t0 > 0.0, l, "t0 must be positive")?;
    let (t_end, l) = f.get("t_end", || 2.0)?;
    check(t_end > t0, l, "t_end must exceed t0")?;
    let (dt, l) = f.get("dt", || 1e-3)?;
    check(dt > 0.0, l, "dt must be positive")?;
    let (record_every, l) = f.get("record_every", || 10usize)?;
    check(record_every > 0, l, "record_every must be positive")?;
    let (companion, _) = f.get("companion", || false)?;
    let (first_eps, l) = f.get("first_eps", || vrmass_core::variation::FIRST_EPS)?;
    check(first_eps > 0.0, l, "first_eps must be positive")?;
    let (second_eps, l) = f.get("second_eps", || vrmass_core::variation::SECOND_EPS)?;
    check(second_eps > 0.0, l, "second_eps must be positive")?;
    let (directions, _) = f.get("directions", || 10usize)?;
    let (out, _) = f.get("out", || PathBuf::from("out"))?;
    let (seed, _) = f.get("seed", || 0u64)?;
    let (threads, l) = f.get("threads", || 1usize)?;
    check(threads > 0, l, "threads must be positive")?;
    debug_assert!(f.map.is_empty());

    Ok(RunConfig {
        subcommand,
        n,
        fiber,
        fiber_volume,
        inner,
        r0,
        intervals,
        r_max,
        spacing,
        spacing_strength,
        radii,
        family,
        eps,
        delta,
        amplitude,
        kottler_mass,
        bump_center,
        bump_width,
        newton_tol,
        newton_max_iter,
        extrapolation,
        gate,
        t0,
        t_end,
        dt,
        record_every,
        companion,
        first_eps,
        second_eps,
        directions,
        out,
        seed,
        threads,
        defaulted: f.defaulted,
    })
}

impl RunConfig {
    /// Resolved values in `KEYS` order, formatted so that they parse back.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let radii: Vec<String> = self.radii.iter().map(|r| format!("{r:?}")).collect();
        let vals = [
            self.subcommand.to_string(),
            self.n.to_string(),
            self.fiber.to_string(),
            format!("{:?}", self.fiber_volume),
            self.inner.to_string(),
            format!("{:?}", self.r0),
            self.intervals.to_string(),
            format!("{:?}", self.r_max),
            self.spacing.to_string(),
            format!("{:?}", self.spacing_strength),
            radii.join(","),
            self.family.to_string(),
            format!("{:?}", self.eps),
            format!("{:?}", self.delta),
            format!("{:?}", self.amplitude),
            format!("{:?}", self.kottler_mass),
            format!("{:?}", self.bump_center),
            format!("{:?}", self.bump_width),
            format!("{:?}", self.newton_tol),
            self.newton_max_iter.to_string(),
            self.extrapolation.to_string(),
            self.gate.to_string(),
            format!("{:?}", self.t0),
            format!("{:?}", self.t_end),
            format!("{:?}", self.dt),
            self.record_every.to_string(),
            self.companion.to_string(),
            format!("{:?}", self.first_eps),
            format!("{:?}", self.second_eps),
            self.directions.to_string(),
            self.out.display().to_string(),
            self.seed.to_string(),
            self.threads.to_string(),
        ];
        KEYS.iter().copied().zip(vals).collect()
    }

    /// The resolved config as parseable text.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Manifest: resolved config, defaulted keys, versions.
    pub fn manifest(&self) -> String {
        let mut s = self.to_text();
        s.push_str(&format!("defaulted = {}\n", self.defaulted.join(",")));
        s.push_str(&format!("vrmass_cli_version = {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("vrmass_core_version = {}\n", vrmass_core::VERSION));
        s
    }
}
