//! `key = value` scenario files with `[section]` headers and `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use ini::Ini;

use super::{standard_bc, ChartSpec, RunParams, ScenarioSpec};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::mesh::{BcSegment, BoundaryLabel, Circle, NotchSpec, ScenarioGeometry};

const SECTIONS: [&str; 7] = ["chart", "notch", "extension", "hole", "bc", "params", "run"];

pub fn load_config(path: &Path) -> Result<ScenarioSpec> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Parses a scenario file; unset parameters keep their defaults.
pub fn parse_config(text: &str) -> Result<ScenarioSpec> {
    let ini = Ini::load_from_str(text).map_err(|e| Error::parse(e.line, e.msg.to_string()))?;
    let lines = Lines::new(text);
    if let Some(k) = ini.general_section().iter().next() {
        return Err(Error::parse(
            lines.find(None, 0, k.0),
            format!("key `{}` outside any section", k.0),
        ));
    }
    for name in ini.sections().flatten() {
        if !SECTIONS.contains(&name) {
            return Err(Error::parse(
                lines.header(name),
                format!("unknown section [{name}]"),
            ));
        }
    }
    for name in ["chart", "notch", "extension", "bc", "params", "run"] {
        if ini.section_all(Some(name)).count() > 1 {
            return Err(Error::parse(
                lines.header(name),
                format!("section [{name}] given twice"),
            ));
        }
    }
    let section = |name: &'static str, k: usize| Section {
        props: ini.section_all(Some(name)).nth(k),
        name,
        index: k,
        lines: &lines,
    };

    let chart_s = section("chart", 0);
    chart_s.allow(&[
        "kind", "radius", "length", "xbar", "ybar", "x0", "x1", "y0", "y1",
    ])?;
    let kind = chart_s
        .raw("kind")
        .ok_or_else(|| Error::parse(lines.header("chart").max(1), "[chart] needs `kind`"))?;
    let chart = match kind {
        "cylinder" => ChartSpec::Cylinder {
            radius: chart_s.num("radius")?.unwrap_or(1.0),
            length: chart_s.num("length")?.unwrap_or(1.0),
        },
        "sphere" => ChartSpec::Sphere {
            radius: chart_s.num("radius")?.unwrap_or(1.0),
            xbar: chart_s.num("xbar")?.unwrap_or(std::f64::consts::FRAC_PI_2),
            ybar: chart_s.num("ybar")?.unwrap_or(std::f64::consts::FRAC_PI_6),
        },
        "flat" => ChartSpec::Flat {
            domain: chart_s.rect()?.unwrap_or_else(Rect::unit),
        },
        other => {
            return Err(Error::parse(
                chart_s.line("kind"),
                format!("unknown chart kind `{other}` (expected flat, cylinder or sphere)"),
            ))
        }
    };
    let domain = chart.domain();

    let notch_s = section("notch", 0);
    notch_s.allow(&["x0", "x1", "y0", "y1"])?;
    let notch = notch_s.rect()?.map(|rect| NotchSpec { rect });
    let ext_s = section("extension", 0);
    ext_s.allow(&["x0", "x1", "y0", "y1"])?;
    let extension = ext_s.rect()?;

    let mut holes = Vec::new();
    for k in 0..ini.section_all(Some("hole")).count() {
        let s = section("hole", k);
        s.allow(&["cx", "cy", "radius"])?;
        holes.push(Circle {
            center: [s.req("cx")?, s.req("cy")?],
            radius: s.req("radius")?,
        });
    }

    let bc_s = section("bc", 0);
    bc_s.allow(&["preset", "plus", "minus", "zero", "free"])?;
    let mut bc = Vec::new();
    match bc_s.raw("preset") {
        None => {}
        Some("standard") => {
            let outer = extension.unwrap_or(domain);
            let n = notch.map_or(Rect::new(0.0, 0.0, 0.0, 0.0), |n| n.rect);
            bc.extend(standard_bc(outer.x0, outer.x1, outer.y0, n));
        }
        Some(other) => {
            return Err(Error::parse(
                bc_s.line("preset"),
                format!("unknown bc preset `{other}`"),
            ));
        }
    }
    for key in ["plus", "minus", "zero", "free"] {
        let label: BoundaryLabel = key.parse().map_err(Error::Input)?;
        for (j, value) in bc_s.all(key).into_iter().enumerate() {
            let line = bc_s.line_nth(key, j);
            let nums = value
                .split_whitespace()
                .map(|t| {
                    parse_number(t).ok_or_else(|| Error::parse(line, format!("bad number `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if nums.len() != 4 {
                return Err(Error::parse(line, format!("`{key}` expects `ax ay bx by`")));
            }
            bc.push(BcSegment {
                label,
                a: [nums[0], nums[1]],
                b: [nums[2], nums[3]],
            });
        }
    }

    let ps = section("params", 0);
    ps.allow(&[
        "tol",
        "tol_m",
        "tol_v",
        "max_it",
        "tau",
        "alpha",
        "epsilon",
        "eta",
        "kappa",
        "lambda",
        "mu",
        "h_min",
        "h_max",
        "max_mesh_updates",
        "adapt",
    ])?;
    let d = RunParams::default();
    let params = RunParams {
        tol: ps.num("tol")?.unwrap_or(d.tol),
        tol_m: ps.num("tol_m")?.unwrap_or(d.tol_m),
        tol_v: ps.num("tol_v")?.unwrap_or(d.tol_v),
        max_it: ps.int("max_it")?.map_or(d.max_it, |x| x as usize),
        tau: ps.num("tau")?.unwrap_or(d.tau),
        alpha: ps.num("alpha")?.unwrap_or(d.alpha),
        epsilon: ps.num("epsilon")?.unwrap_or(d.epsilon),
        eta: ps.num("eta")?.unwrap_or(d.eta),
        kappa: ps.num("kappa")?.unwrap_or(d.kappa),
        lambda: ps.num("lambda")?.unwrap_or(d.lambda),
        mu: ps.num("mu")?.unwrap_or(d.mu),
        h_min: ps.num("h_min")?.unwrap_or(d.h_min),
        h_max: ps.num("h_max")?.unwrap_or(d.h_max),
        max_mesh_updates: ps
            .int("max_mesh_updates")?
            .map_or(d.max_mesh_updates, |x| x as usize),
        adapt: ps.boolean("adapt")?.unwrap_or(d.adapt),
    };

    let rs = section("run", 0);
    rs.allow(&["final_time", "target_h", "seed"])?;
    let spec = ScenarioSpec {
        chart,
        geometry: ScenarioGeometry {
            domain,
            extension,
            notch,
            holes,
            bc,
        },
        final_time: rs.num("final_time")?.unwrap_or(0.0),
        params,
        target_h: rs.num("target_h")?.unwrap_or(0.05),
        seed: rs.int("seed")?.unwrap_or(0),
    };
    spec.validate()?;
    Ok(spec)
}

/// Writes `spec` in the file format, with shortest round-trip numbers and
/// explicit boundary segments.
pub fn to_config_string(spec: &ScenarioSpec) -> String {
    let f = format_number;
    let mut s = String::new();
    s.push_str("[chart]\n");
    match spec.chart {
        ChartSpec::Flat { domain } => {
            s.push_str("kind = flat\n");
            write_rect(&mut s, domain);
        }
        ChartSpec::Cylinder { radius, length } => {
            let _ = writeln!(
                s,
                "kind = cylinder\nradius = {}\nlength = {}",
                f(radius),
                f(length)
            );
        }
        ChartSpec::Sphere { radius, xbar, ybar } => {
            let _ = writeln!(
                s,
                "kind = sphere\nradius = {}\nxbar = {}\nybar = {}",
                f(radius),
                f(xbar),
                f(ybar)
            );
        }
    }
    let g = &spec.geometry;
    if let Some(n) = g.notch {
        s.push_str("\n[notch]\n");
        write_rect(&mut s, n.rect);
    }
    if let Some(e) = g.extension {
        s.push_str("\n[extension]\n");
        write_rect(&mut s, e);
    }
    for h in &g.holes {
        let _ = writeln!(
            s,
            "\n[hole]\ncx = {}\ncy = {}\nradius = {}",
            f(h.center[0]),
            f(h.center[1]),
            f(h.radius)
        );
    }
    if !g.bc.is_empty() {
        s.push_str("\n[bc]\n");
        for b in &g.bc {
            let _ = writeln!(
                s,
                "{} = {} {} {} {}",
                b.label,
                f(b.a[0]),
                f(b.a[1]),
                f(b.b[0]),
                f(b.b[1])
            );
        }
    }
    let p = &spec.params;
    let _ = writeln!(
        s,
        "\n[params]\ntol = {}\ntol_m = {}\ntol_v = {}\nmax_it = {}\ntau = {}\nalpha = {}\nepsilon = {}\neta = {}\n\
         kappa = {}\nlambda = {}\nmu = {}\nh_min = {}\nh_max = {}\nmax_mesh_updates = {}\nadapt = {}",
        f(p.tol),
        f(p.tol_m),
        f(p.tol_v),
        p.max_it,
        f(p.tau),
        f(p.alpha),
        f(p.epsilon),
        f(p.eta),
        f(p.kappa),
        f(p.lambda),
        f(p.mu),
        f(p.h_min),
        f(p.h_max),
        p.max_mesh_updates,
        p.adapt
    );
    let _ = writeln!(
        s,
        "\n[run]\nfinal_time = {}\ntarget_h = {}\nseed = {}",
        f(spec.final_time),
        f(spec.target_h),
        spec.seed
    );
    s
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x:?}")
}

fn write_rect(s: &mut String, r: Rect) {
    let f = format_number;
    let _ = writeln!(
        s,
        "x0 = {}\nx1 = {}\ny0 = {}\ny1 = {}",
        f(r.x0),
        f(r.x1),
        f(r.y0),
        f(r.y1)
    );
}

/// Decimal numbers, plus `pi`, `-pi`, `k*pi`, `pi/d` and `k*pi/d`.
fn parse_number(token: &str) -> Option<f64> {
    let t = token.trim();
    if let Ok(x) = t.parse::<f64>() {
        return x.is_finite().then_some(x);
    }
    let (sign, t) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t),
    };
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim().parse::<f64>().ok()?),
        None => (t, 1.0),
    };
    let coeff = if num == "pi" {
        1.0
    } else {
        num.strip_suffix("pi")?
            .trim()
            .strip_suffix('*')?
            .trim()
            .parse::<f64>()
            .ok()?
    };
    let x = sign * coeff * std::f64::consts::PI / den;
    x.is_finite().then_some(x)
}

/// Line lookup for error messages; rust-ini does not keep positions.
struct Lines<'a> {
    /// `(line number, section, occurrence of that section, key)`.
    entries: Vec<(usize, Option<&'a str>, usize, Option<&'a str>)>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let mut entries = Vec::new();
        let mut current: Option<&str> = None;
        let mut seen: Vec<(&str, usize)> = Vec::new();
        let mut occurrence = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
                let name = name.trim();
                occurrence = match seen.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, c)) => {
                        *c += 1;
                        *c
                    }
                    None => {
                        seen.push((name, 0));
                        0
                    }
                };
                current = Some(name);
                entries.push((i + 1, current, occurrence, None));
            } else if let Some((k, _)) = line.split_once('=') {
                if !line.starts_with('#') && !line.starts_with(';') {
                    entries.push((i + 1, current, occurrence, Some(k.trim())));
                }
            }
        }
        Lines { entries }
    }

    fn header(&self, section: &str) -> usize {
        self.entries
            .iter()
            .find(|e| e.1 == Some(section) && e.3.is_none())
            .map_or(0, |e| e.0)
    }

    fn find_nth(&self, section: Option<&str>, index: usize, key: &str, nth: usize) -> usize {
        self.entries
            .iter()
            .filter(|e| e.1 == section && e.2 == index && e.3 == Some(key))
            .nth(nth)
            .map_or(0, |e| e.0)
    }

    fn find(&self, section: Option<&str>, index: usize, key: &str) -> usize {
        self.find_nth(section, index, key, 0)
    }
}

struct Section<'a> {
    props: Option<&'a ini::Properties>,
    name: &'static str,
    index: usize,
    lines: &'a Lines<'a>,
}

impl<'a> Section<'a> {
    fn line(&self, key: &str) -> usize {
        self.lines.find(Some(self.name), self.index, key)
    }

    fn line_nth(&self, key: &str, nth: usize) -> usize {
        self.lines.find_nth(Some(self.name), self.index, key, nth)
    }

    fn allow(&self, keys: &[&str]) -> Result<()> {
        let Some(p) = self.props else { return Ok(()) };
        for (k, _) in p.iter() {
            if !keys.contains(&k) {
                return Err(Error::parse(
                    self.line(k),
                    format!("unknown key `{k}` in [{}]", self.name),
                ));
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        let p = self.props?;
        p.get(key)
    }

    fn all(&self, key: &str) -> Vec<&'a str> {
        self.props
            .map_or_else(Vec::new, |p| p.get_all(key).collect())
    }

    fn num(&self, key: &str) -> Result<Option<f64>> {
        if self.all(key).len() > 1 {
            return Err(Error::parse(
                self.line_nth(key, 1),
                format!("`{key}` given twice"),
            ));
        }
        self.raw(key)
            .map(|v| {
                parse_number(v).ok_or_else(|| {
                    Error::parse(self.line(key), format!("bad number `{v}` for `{key}`"))
                })
            })
            .transpose()
    }

    fn req(&self, key: &str) -> Result<f64> {
        self.num(key)?.ok_or_else(|| {
            Error::parse(
                self.lines.header(self.name),
                format!("[{}] needs `{key}`", self.name),
            )
        })
    }

    fn int(&self, key: &str) -> Result<Option<u64>> {
        self.raw(key)
            .map(|v| {
                v.trim().parse::<u64>().map_err(|_| {
                    Error::parse(self.line(key), format!("bad integer `{v}` for `{key}`"))
                })
            })
            .transpose()
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        self.raw(key)
            .map(|v| match v.trim() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::parse(
                    self.line(key),
                    format!("bad boolean `{v}` for `{key}`"),
                )),
            })
            .transpose()
    }

    /// All four corners, or none.
    fn rect(&self) -> Result<Option<Rect>> {
        let vals = [
            self.num("x0")?,
            self.num("x1")?,
            self.num("y0")?,
            self.num("y1")?,
        ];
        match vals {
            [Some(x0), Some(x1), Some(y0), Some(y1)] => Ok(Some(Rect::new(x0, x1, y0, y1))),
            [None, None, None, None] => Ok(None),
            _ => Err(Error::parse(
                self.lines.header(self.name),
                format!("[{}] needs all of x0, x1, y0, y1", self.name),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pi_forms() {
        assert_eq!(parse_number("pi"), Some(PI));
        assert_eq!(parse_number("-pi/2"), Some(-PI / 2.0));
        assert_eq!(parse_number("2*pi/3"), Some(2.0 * PI / 3.0));
        assert_eq!(parse_number("0.25"), Some(0.25));
        assert_eq!(parse_number("1e-3"), Some(1e-3));
        assert_eq!(parse_number("pie"), None);
        assert_eq!(parse_number("inf"), None);
    }

    #[test]
    fn presets_round_trip() {
        for spec in [
            ScenarioSpec::cylinder(1.0),
            ScenarioSpec::sphere(PI / 7.0).with_hole([-0.25, 0.5 - PI / 7.0], 0.15),
        ] {
            let text = to_config_string(&spec);
            assert_eq!(parse_config(&text).unwrap(), spec, "{text}");
        }
    }

    #[test]
    fn standard_preset_matches_builder() {
        let text = "[chart]\nkind = cylinder\nlength = 1\n\n[notch]\nx0 = -1e-3\nx1 = 1e-3\ny0 = 0\ny1 = 0.3\n\n\
                    [extension]\nx0 = -pi/2\nx1 = pi/2\ny0 = -0.1\ny1 = 0\n\n[bc]\npreset = standard\n\n[run]\nfinal_time = 2.3\n";
        assert_eq!(parse_config(text).unwrap(), ScenarioSpec::cylinder(1.0));
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = "[chart]\nkind = cylinder\n# comment\nradius = 1\nradiu = 2\n";
        match parse_config(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("radiu"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_its_line() {
        let text = "[chart]\nkind = cylinder\n[params]\ntau = abc\n";
        assert!(matches!(
            parse_config(text),
            Err(Error::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn unknown_section_is_rejected() {
        let text = "[chart]\nkind = flat\n[mesh]\nx = 1\n";
        assert!(matches!(
            parse_config(text),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn repeated_holes_are_collected() {
        let text = "[chart]\nkind = cylinder\n[hole]\ncx = -0.2\ncy = 0.88\nradius = 0.08\n\
                    [hole]\ncx = -0.2\ncy = 0.68\nradius = 0.08\n";
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.geometry.holes.len(), 2);
        assert_eq!(spec.geometry.holes[1].center, [-0.2, 0.68]);
    }
}
