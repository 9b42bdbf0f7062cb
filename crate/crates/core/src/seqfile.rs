//! Experiment configuration documents (JSON, `"schema": 1`).
//!
//! All frequencies are in MHz, times in µs, lengths in µm, powers in mW and
//! phases in radians unless a field name says otherwise (`phases_pi`).
//! Unknown keys are rejected unless parsing in [`Strictness::Lax`] mode.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::optics::{AddressingOptions, BeamSpec, ShiftMode, OMEGA_REF_MHZ, POWER_REF_MW, TAU_6P_NS, WAIST_UM, ZEEMAN_SPLIT_MHZ};
use crate::protocols::{Protocol, Readout, Setup};
use crate::readout::{DetectionModel, Outcome};
use crate::spinmodel::{AtomArray, Microwave, ProductBasis, C3_MHZ_UM3};

pub const SCHEMA_VERSION: u32 = 1;

/// Bundled figure configurations as (name, document).
pub const BUNDLED: [(&str, &str); 7] = [
    ("fig1c", include_str!("../examples/fig1c.json")),
    ("fig2b", include_str!("../examples/fig2b.json")),
    ("fig2c", include_str!("../examples/fig2c.json")),
    ("fig3b", include_str!("../examples/fig3b.json")),
    ("fig3c", include_str!("../examples/fig3c.json")),
    ("fig3def", include_str!("../examples/fig3def.json")),
    ("raman", include_str!("../examples/raman.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, doc)| *doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub atoms: AtomsConfig,
    #[serde(default)]
    pub levels: LevelsConfig,
    #[serde(default)]
    pub beams: Vec<BeamConfig>,
    #[serde(default)]
    pub addressing: AddressingConfig,
    #[serde(default)]
    pub microwave: MicrowaveConfig,
    #[serde(default)]
    pub readout: ReadoutConfig,
    pub protocol: Protocol,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_c3() -> f64 {
    C3_MHZ_UM3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomsConfig {
    pub positions_um: Vec<[f64; 3]>,
    #[serde(default = "default_c3")]
    pub c3_mhz_um3: f64,
    /// Couplings that replace C₃/R³ for specific pairs.
    #[serde(default)]
    pub coupling_overrides: Vec<CouplingOverride>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingOverride {
    pub i: usize,
    pub j: usize,
    pub u_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsConfig {
    #[serde(default)]
    pub zero: bool,
    #[serde(default)]
    pub ground: bool,
}

fn default_waist() -> f64 {
    WAIST_UM
}
fn default_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn default_omega_ref() -> f64 {
    OMEGA_REF_MHZ
}
fn default_power_ref() -> f64 {
    POWER_REF_MW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub power_mw: f64,
    pub detuning_mhz: f64,
    #[serde(default = "default_waist")]
    pub waist_um: f64,
    #[serde(default)]
    pub center_um: [f64; 3],
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    /// Ω_addr reached at `power_ref_mw`.
    #[serde(default = "default_omega_ref")]
    pub omega_ref_mhz: f64,
    #[serde(default = "default_power_ref")]
    pub power_ref_mw: f64,
}

impl BeamConfig {
    pub fn to_beam(&self) -> BeamSpec {
        BeamSpec {
            power: self.power_mw,
            waist: self.waist_um,
            center: self.center_um,
            axis: self.axis,
            detuning: self.detuning_mhz,
            omega_ref: self.omega_ref_mhz,
            power_ref: self.power_ref_mw,
        }
    }
}

fn default_tau() -> f64 {
    TAU_6P_NS
}
fn default_zeeman() -> f64 {
    ZEEMAN_SPLIT_MHZ
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddressingConfig {
    #[serde(default)]
    pub shift_mode: ShiftMode,
    #[serde(default = "default_tau")]
    pub tau_6p_ns: f64,
    /// Treat photon scattering as loss.
    #[serde(default)]
    pub scattering: bool,
    #[serde(default = "default_zeeman")]
    pub zeeman_split_mhz: f64,
    #[serde(default)]
    pub zero_shift_mhz: f64,
}

impl Default for AddressingConfig {
    fn default() -> Self {
        Self {
            shift_mode: ShiftMode::default(),
            tau_6p_ns: TAU_6P_NS,
            scattering: false,
            zeeman_split_mhz: ZEEMAN_SPLIT_MHZ,
            zero_shift_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrowaveConfig {
    #[serde(default)]
    pub rabi_mhz: f64,
    #[serde(default)]
    pub detuning_mhz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

fn default_eta() -> f64 {
    1.0
}
fn default_scattered() -> Outcome {
    Outcome::Recaptured
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub flip_probability: f64,
    #[serde(default = "default_scattered")]
    pub scattered_outcome: Outcome,
    /// Repetitions per point; 0 reports exact probabilities.
    #[serde(default)]
    pub shots: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            flip_probability: 0.0,
            scattered_outcome: Outcome::Recaptured,
            shots: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    /// Unknown keys are dropped instead of rejected.
    Lax,
}

/// One problem with a configuration document.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Malformed JSON.
    Syntax { line: usize, column: usize, message: String },
    /// Well-formed JSON that does not fit the schema: missing or unknown keys,
    /// wrong types.
    Schema {
        path: String,
        message: String,
        suggestion: Option<String>,
    },
    /// A schema-valid document describing something impossible.
    Physics { field: String, message: String },
}

impl ConfigError {
    pub fn class(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "syntax",
            ConfigError::Schema { .. } => "schema",
            ConfigError::Physics { .. } => "physics",
        }
    }

    /// Location of the problem: `line:column`, a key path or a field name.
    pub fn location(&self) -> String {
        match self {
            ConfigError::Syntax { line, column, .. } => format!("{line}:{column}"),
            ConfigError::Schema { path, .. } => path.clone(),
            ConfigError::Physics { field, .. } => field.clone(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, column, message } => {
                write!(f, "syntax error at line {line}, column {column}: {message}")
            }
            ConfigError::Schema {
                path,
                message,
                suggestion,
            } => {
                write!(f, "schema violation at `{path}`: {message}")?;
                if let Some(s) = suggestion {
                    write!(f, " (did you mean `{s}`?)")?;
                }
                Ok(())
            }
            ConfigError::Physics { field, message } => write!(f, "physics violation in `{field}`: {message}"),
        }
    }
}

/// All problems found in a document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigError> for ConfigErrors {
    fn from(e: ConfigError) -> Self {
        ConfigErrors(vec![e])
    }
}

/// Parses and validates a document.
pub fn parse(document: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_with(document, &[], Strictness::Strict)
}

/// Parses a document, applies `key=value` overrides (see [`set_path`]) and
/// validates the result.
pub fn parse_with(document: &str, overrides: &[(String, String)], strictness: Strictness) -> Result<ExperimentConfig, ConfigErrors> {
    let mut value = parse_value(document)?;
    for (key, raw) in overrides {
        set_path(&mut value, key, raw)?;
    }
    from_value(value, strictness)
}

/// The document as untyped JSON.
pub fn parse_value(document: &str) -> Result<Value, ConfigErrors> {
    serde_json::from_str(document).map_err(|e| {
        ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        }
        .into()
    })
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(k) => message[..k].to_string(),
        None => message.to_string(),
    }
}

/// Typed config from untyped JSON, followed by physics validation.
pub fn from_value(mut value: Value, strictness: Strictness) -> Result<ExperimentConfig, ConfigErrors> {
    let config = loop {
        match serde_path_to_error::deserialize::<_, ExperimentConfig>(value.clone()) {
            Ok(c) => break c,
            Err(err) => {
                let path = err.path().clone();
                let message = err.inner().to_string();
                let unknown = unknown_key(&message);
                if let (Strictness::Lax, Some(key)) = (strictness, &unknown) {
                    if is_unknown_field(&message) && remove_key(&mut value, &path, key) {
                        continue;
                    }
                }
                let suggestion = unknown.as_ref().and_then(|k| nearest(k, &expected_keys(&message)));
                return Err(ConfigError::Schema {
                    path: path_string(&path),
                    message,
                    suggestion,
                }
                .into());
            }
        }
    };
    let errors = config.validate();
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(errors))
    }
}

fn path_string(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." { "$".to_string() } else { s }
}

/// The offending name in "unknown field `x`" and "unknown variant `x`".
fn unknown_key(message: &str) -> Option<String> {
    let rest = message
        .strip_prefix("unknown field `")
        .or_else(|| message.strip_prefix("unknown variant `"))?;
    rest.split('`').next().map(str::to_string)
}

fn is_unknown_field(message: &str) -> bool {
    message.starts_with("unknown field `")
}

/// Candidates listed after "expected" in a serde message.
fn expected_keys(message: &str) -> Vec<String> {
    let Some(k) = message.find("expected") else {
        return Vec::new();
    };
    message[k..].split('`').skip(1).step_by(2).map(str::to_string).collect()
}

fn nearest(key: &str, candidates: &[String]) -> Option<String> {
    candidates
        .iter()
        .min_by_key(|c| strsim::damerau_levenshtein(key, c))
        .cloned()
}

fn remove_key(value: &mut Value, path: &serde_path_to_error::Path, key: &str) -> bool {
    use serde_path_to_error::Segment;
    let mut segments: Vec<&Segment> = path.iter().collect();
    // the path ends at the offending key itself
    if matches!(segments.last(), Some(Segment::Map { key: k }) if k == key) {
        segments.pop();
    }
    let mut node = value;
    for segment in segments {
        let present = match segment {
            Segment::Seq { index } => node.get(*index).is_some(),
            Segment::Map { key } => node.get(key.as_str()).is_some(),
            _ => false,
        };
        if !present {
            break;
        }
        node = match segment {
            Segment::Seq { index } => &mut node[*index],
            Segment::Map { key } => &mut node[key.as_str()],
            _ => unreachable!("checked above"),
        };
    }
    node.as_object_mut().is_some_and(|o| o.remove(key).is_some())
}

/// Sets `path` (dotted keys, `[i]` for array elements, e.g.
/// `readout.eta` or `protocol.windows[0].duration_us`) to `raw`, which is read
/// as JSON when possible and as a string otherwise. Missing objects along the
/// path are created.
pub fn set_path(value: &mut Value, path: &str, raw: &str) -> Result<(), ConfigError> {
    let bad = |message: String| ConfigError::Schema {
        path: path.to_string(),
        message,
        suggestion: None,
    };
    let mut steps: Vec<PathStep> = Vec::new();
    for part in path.split('.') {
        let (name, mut rest) = match part.find('[') {
            Some(k) => (&part[..k], &part[k..]),
            None => (part, ""),
        };
        if name.is_empty() {
            return Err(bad("empty key in override path".into()));
        }
        steps.push(PathStep::Key(name.to_string()));
        while let Some(stripped) = rest.strip_prefix('[') {
            let close = stripped.find(']').ok_or_else(|| bad("unclosed `[` in override path".into()))?;
            let index = stripped[..close]
                .parse()
                .map_err(|_| bad(format!("`{}` is not an array index", &stripped[..close])))?;
            steps.push(PathStep::Index(index));
            rest = &stripped[close + 1..];
        }
        if !rest.is_empty() {
            return Err(bad(format!("unexpected `{rest}` in override path")));
        }
    }
    let new_value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = value;
    for step in steps {
        node = match step {
            PathStep::Key(k) => {
                if node.is_null() {
                    *node = Value::Object(Default::default());
                }
                node.as_object_mut()
                    .ok_or_else(|| bad(format!("`{k}` is not inside an object")))?
                    .entry(k)
                    .or_insert(Value::Null)
            }
            PathStep::Index(i) => {
                let arr = node.as_array_mut().ok_or_else(|| bad(format!("[{i}] is not inside an array")))?;
                let len = arr.len();
                arr.get_mut(i).ok_or_else(|| bad(format!("index {i} out of range (length {len})")))?
            }
        };
    }
    *node = new_value;
    Ok(())
}

enum PathStep {
    Key(String),
    Index(usize),
}

/// Canonical document: fixed key order, every field spelled out, shortest
/// round-trip number formatting, two-space indentation, trailing newline.
pub fn echo(config: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(config).expect("configs always serialize");
    s.push('\n');
    s
}

impl ExperimentConfig {
    pub fn atom_array(&self) -> crate::Result<AtomArray> {
        let mut array = AtomArray::new(self.atoms.positions_um.clone(), self.atoms.c3_mhz_um3)?;
        for o in &self.atoms.coupling_overrides {
            array = array.with_override(o.i, o.j, o.u_mhz)?;
        }
        Ok(array)
    }

    /// The apparatus described by the document.
    pub fn setup(&self) -> crate::Result<Setup> {
        let a = &self.addressing;
        let r = &self.readout;
        Ok(Setup {
            array: self.atom_array()?,
            beams: self.beams.iter().map(BeamConfig::to_beam).collect(),
            addressing: AddressingOptions {
                mode: a.shift_mode,
                tau_6p_ns: a.tau_6p_ns,
                zeeman_split: a.zeeman_split_mhz,
                zero_shift: a.zero_shift_mhz,
            },
            scattering: a.scattering,
            zero_level: self.levels.zero,
            ground_level: self.levels.ground,
            microwave: Microwave {
                rabi: self.microwave.rabi_mhz,
                detuning: self.microwave.detuning_mhz,
                phase: self.microwave.phase_rad,
            },
            readout: Readout {
                eta: r.eta,
                detection: DetectionModel {
                    scattered: r.scattered_outcome,
                    flip_probability: r.flip_probability,
                },
                shots: r.shots,
                seed: r.seed,
            },
        })
    }

    /// Physics and consistency checks of a schema-valid document.
    pub fn validate(&self) -> Vec<ConfigError> {
        let physics = |field: String, message: String| ConfigError::Physics { field, message };
        let mut out = Vec::new();
        if self.schema != SCHEMA_VERSION {
            out.push(ConfigError::Schema {
                path: "schema".into(),
                message: format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema),
                suggestion: None,
            });
            return out;
        }
        let atoms = &self.atoms;
        if atoms.positions_um.is_empty() {
            out.push(physics("atoms.positions_um".into(), "at least one atom is needed".into()));
        }
        if atoms.positions_um.iter().flatten().any(|x| !x.is_finite()) {
            out.push(physics("atoms.positions_um".into(), "positions must be finite".into()));
        }
        if !atoms.c3_mhz_um3.is_finite() {
            out.push(physics("atoms.c3_mhz_um3".into(), "must be finite".into()));
        }
        let n = atoms.positions_um.len();
        for (k, o) in atoms.coupling_overrides.iter().enumerate() {
            if o.i >= n || o.j >= n || o.i == o.j {
                out.push(physics(
                    format!("atoms.coupling_overrides[{k}]"),
                    format!("({}, {}) is not a pair of distinct atoms among {n}", o.i, o.j),
                ));
            } else if !o.u_mhz.is_finite() {
                out.push(physics(format!("atoms.coupling_overrides[{k}].u_mhz"), "must be finite".into()));
            }
        }
        if !out.is_empty() {
            return out;
        }
        let setup = match self.setup() {
            Ok(s) => s,
            Err(crate::Error::SingularGeometry { i, j }) => {
                out.push(physics("atoms.positions_um".into(), format!("atoms {i} and {j} coincide")));
                return out;
            }
            Err(e) => {
                out.push(physics("atoms".into(), e.to_string()));
                return out;
            }
        };
        if let Err(e) = ProductBasis::new(setup.scheme(), n) {
            out.push(physics("atoms.positions_um".into(), e.to_string()));
        }
        for v in setup.violations() {
            out.push(physics(v.field, v.message));
        }
        for v in self.protocol.violations(&setup) {
            let field = if v.field.contains('.') && !v.field.starts_with("protocol") {
                v.field
            } else {
                format!("protocol.{}", v.field)
            };
            out.push(physics(field, v.message));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"schema": 1,
            "atoms": {"positions_um": [[0, 0, 0], [0, 0, 26.5]], "coupling_overrides": [{"i": 0, "j": 1, "u_mhz": 0.4}]},
            "microwave": {"rabi_mhz": 1.3},
            "beams": [{"power_mw": 30, "detuning_mhz": 1300}],
            "protocol": {"kind": "exchange"}}"#
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let c = parse(minimal()).unwrap();
        assert_eq!(c.atoms.c3_mhz_um3, 7456.0);
        assert_eq!(c.beams[0].waist_um, 3.4);
        assert_eq!(c.readout.eta, 1.0);
        assert_eq!(c.protocol.name(), "exchange");
        let setup = c.setup().unwrap();
        assert_eq!(setup.array.pair_coupling(0, 1).unwrap(), 0.4);
    }

    #[test]
    fn empty_document_is_a_syntax_error() {
        let e = parse("").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].class(), "syntax");
        let e = parse("{\n  \"schema\": 1,\n  oops\n}").unwrap_err();
        match &e.0[0] {
            ConfigError::Syntax { line, column, .. } => assert_eq!((*line, *column), (3, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn misspelled_key_names_nearest() {
        let doc = minimal().replace("\"microwave\"", "\"microwav\"");
        let e = parse(&doc).unwrap_err();
        match &e.0[0] {
            ConfigError::Schema { suggestion, .. } => assert_eq!(suggestion.as_deref(), Some("microwave")),
            other => panic!("{other:?}"),
        }
        let doc = minimal().replace("\"rabi_mhz\"", "\"rabi_mz\"");
        let e = parse(&doc).unwrap_err();
        match &e.0[0] {
            ConfigError::Schema { path, suggestion, .. } => {
                assert_eq!(path, "microwave.rabi_mz");
                assert_eq!(suggestion.as_deref(), Some("rabi_mhz"));
            }
            other => panic!("{other:?}"),
        }
        let doc = minimal().replace("\"kind\": \"exchange\"", "\"kind\": \"exchang\"");
        let e = parse(&doc).unwrap_err();
        assert!(e.to_string().contains("did you mean `exchange`"), "{e}");
    }

    #[test]
    fn misspelled_protocol_parameter() {
        let doc = minimal().replace("\"kind\": \"exchange\"", "\"kind\": \"exchange\", \"windos\": []");
        let e = parse(&doc).unwrap_err();
        assert!(e.to_string().contains("did you mean `windows`"), "{e}");
        let lax = parse_with(&doc, &[], Strictness::Lax).unwrap();
        assert_eq!(lax, parse(minimal()).unwrap());
    }

    #[test]
    fn lax_mode_drops_unknown_keys() {
        let doc = minimal().replace("\"schema\": 1,", "\"schema\": 1, \"future\": {\"x\": 1},");
        assert!(parse(&doc).is_err());
        let c = parse_with(&doc, &[], Strictness::Lax).unwrap();
        assert_eq!(c, parse(minimal()).unwrap());
    }

    #[test]
    fn eta_out_of_range_names_field() {
        let e = parse_with(minimal(), &[("readout.eta".into(), "1.2".into())], Strictness::Strict).unwrap_err();
        assert_eq!(e.0[0].class(), "physics");
        assert_eq!(e.0[0].location(), "readout.eta");
    }

    #[test]
    fn physics_violations() {
        let coincident = minimal().replace("[0, 0, 26.5]", "[0, 0, 0]");
        let e = parse(&coincident).unwrap_err();
        assert_eq!(e.0[0].location(), "atoms.positions_um");
        let overlap = minimal().replace(
            "\"kind\": \"exchange\"",
            r#""kind": "exchange", "windows": [{"start_us": 0.5, "duration_us": 0.6}, {"start_us": 0.9, "duration_us": 0.1}]"#,
        );
        let e = parse(&overlap).unwrap_err();
        assert_eq!(e.0[0].class(), "physics");
        assert_eq!(e.0[0].location(), "protocol.windows[1]");
        let ground = parse_with(minimal(), &[("readout.eta".into(), "0.88".into())], Strictness::Strict).unwrap_err();
        assert_eq!(ground.0[0].location(), "levels.ground");
        let wrong_type = parse_with(minimal(), &[("readout.shots".into(), "\"many\"".into())], Strictness::Strict).unwrap_err();
        assert_eq!(wrong_type.0[0].class(), "schema");
        assert_eq!(wrong_type.0[0].location(), "readout.shots");
        let version = minimal().replace("\"schema\": 1", "\"schema\": 2");
        assert_eq!(parse(&version).unwrap_err().0[0].location(), "schema");
    }

    #[test]
    fn overrides_edit_nested_values() {
        let mut v = parse_value(minimal()).unwrap();
        set_path(&mut v, "protocol.windows", r#"[{"start_us": 0.625, "duration_us": 0.6}]"#).unwrap();
        set_path(&mut v, "protocol.windows[0].duration_us", "0.3").unwrap();
        set_path(&mut v, "output.dir", "out/x").unwrap();
        assert_eq!(v["protocol"]["windows"][0]["duration_us"], 0.3);
        assert_eq!(v["output"]["dir"], "out/x");
        assert!(set_path(&mut v, "protocol.windows[3].start_us", "1").is_err());
        assert!(set_path(&mut v, "atoms..x", "1").is_err());
        assert!(set_path(&mut v, "schema.x", "1").is_err());
    }

    #[test]
    fn echo_round_trip_and_idempotence() {
        for (name, doc) in BUNDLED {
            let c = parse(doc).unwrap_or_else(|e| panic!("{name}: {e}"));
            let once = echo(&c);
            let back = parse(&once).unwrap();
            assert_eq!(back, c, "{name}");
            assert_eq!(echo(&back), once, "{name}");
        }
    }

    #[test]
    fn fig3b_parameters() {
        let c = parse(bundled("fig3b").unwrap()).unwrap();
        assert_eq!(c.atoms.coupling_overrides[0].u_mhz, 0.40);
        assert_eq!(c.readout.eta, 0.88);
        assert_eq!(c.readout.shots, 100);
    }

    #[test]
    fn unknown_key_helpers() {
        let m = "unknown field `microwav`, expected one of `schema`, `atoms`, `microwave`";
        assert_eq!(unknown_key(m).as_deref(), Some("microwav"));
        assert!(is_unknown_field(m));
        assert_eq!(expected_keys(m), vec!["schema", "atoms", "microwave"]);
        assert_eq!(expected_keys("unknown field `a`, expected `bb`"), vec!["bb"]);
        assert_eq!(nearest("microwav", &expected_keys(m)).as_deref(), Some("microwave"));
    }
}
