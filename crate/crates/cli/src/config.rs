//! JSON system-configuration files and their validation.
//!
//! A config either describes a linear interconnection through open-loop
//! matrices `A`, `B_i`, `K` (row-major arrays with explicit shapes) or
//! selects the built-in nonlinear benchmark by its controller gain. Optional
//! `omega_path` / `phi` overrides replace the constructed certificates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use trignet_core::gainalg::{GainExpr, PowerGain};
use trignet_core::omega::{OmegaPath, PhiMap};
use trignet_core::plant::{GeneratedSystem, LinearPlant, Plant};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Row-major matrix payload with an explicit shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixData {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            shape: [m.nrows(), m.ncols()],
            data: (0..m.nrows())
                .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
                .map(|(r, c)| m[(r, c)])
                .collect(),
        }
    }

    pub fn to_matrix(&self, field: &str) -> Result<DMatrix<f64>, CliError> {
        let [rows, cols] = self.shape;
        if self.data.len() != rows * cols {
            return Err(CliError::validation(format!(
                "field '{field}': shape {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(CliError::validation(format!(
                "field '{field}': contains non-finite entries"
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &self.data))
    }
}

/// A single-term comparison gain `coeff·r^exponent`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GainData {
    pub coeff: f64,
    pub exponent: f64,
}

/// Provenance stamp written by `trignet generate`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorStamp {
    pub seed: u64,
    pub bound: f64,
    pub dense_coupling: bool,
    pub attempts: u64,
    pub rho: f64,
}

/// On-disk system description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemConfigFile {
    Linear {
        version: u32,
        n: usize,
        dims: Vec<usize>,
        a: MatrixData,
        b: Vec<MatrixData>,
        k: MatrixData,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Vec<MatrixData>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_tilde: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega_path: Option<Vec<GainData>>,
        /// Row-major `n×n`; `null` entries are the zero gain.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<Vec<Option<GainData>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generator: Option<GeneratorStamp>,
    },
    NonlinearExample {
        version: u32,
        k: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_bar_sq: Option<f64>,
    },
}

/// Analysis overrides parsed alongside the plant.
#[derive(Debug, Clone, Default)]
pub struct AnalysisOverrides {
    pub omega_path: Option<OmegaPath>,
    pub phi: Option<PhiMap>,
}

/// A parsed configuration: the plant plus optional certificate overrides.
#[derive(Debug, Clone)]
pub enum ParsedConfig {
    Linear { plant: LinearPlant, overrides: AnalysisOverrides },
    NonlinearExample { k: f64, sigma_bar_sq: Option<f64> },
}

impl ParsedConfig {
    pub fn plant(&self) -> Result<Plant, CliError> {
        match self {
            ParsedConfig::Linear { plant, .. } => Ok(Plant::Linear(plant.clone())),
            ParsedConfig::NonlinearExample { k, sigma_bar_sq } => {
                let bundle = trignet_core::plant::builtin_nonlinear_example(*k, *sigma_bar_sq)?;
                Ok(Plant::Nonlinear(bundle.plant))
            }
        }
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &std::path::Path) -> Result<ParsedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let file: SystemConfigFile = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("malformed JSON in {}: {e}", path.display())))?;
    parse_config_file(file)
}

pub fn parse_config_file(file: SystemConfigFile) -> Result<ParsedConfig, CliError> {
    match file {
        SystemConfigFile::NonlinearExample { version, k, sigma_bar_sq } => {
            check_version(version)?;
            // Validate eagerly so load-time errors name the field.
            trignet_core::plant::builtin_nonlinear_example(k, sigma_bar_sq)
                .map_err(|e| CliError::validation(format!("field 'k'/'sigma_bar_sq': {e}")))?;
            Ok(ParsedConfig::NonlinearExample { k, sigma_bar_sq })
        }
        SystemConfigFile::Linear {
            version,
            n,
            dims,
            a,
            b,
            k,
            q,
            c_tilde,
            omega_path,
            phi,
            generator: _,
        } => {
            check_version(version)?;
            if n == 0 || dims.len() != n {
                return Err(CliError::validation(format!(
                    "field 'dims': expected {n} entries, got {}",
                    dims.len()
                )));
            }
            let total: usize = dims.iter().sum();
            let a_full = a.to_matrix("A")?;
            if a_full.nrows() != total || a_full.ncols() != total {
                return Err(CliError::validation(format!(
                    "field 'A': expected shape {total}x{total}, got {}x{}",
                    a_full.nrows(),
                    a_full.ncols()
                )));
            }
            if b.len() != n {
                return Err(CliError::validation(format!(
                    "field 'B': expected {n} per-subsystem matrices, got {}",
                    b.len()
                )));
            }
            let mut b_mats = Vec::with_capacity(n);
            let mut m_dims = Vec::with_capacity(n);
            for (i, bi) in b.iter().enumerate() {
                let m = bi.to_matrix(&format!("B[{i}]"))?;
                if m.nrows() != dims[i] {
                    return Err(CliError::validation(format!(
                        "field 'B[{i}]': expected {} rows, got {}",
                        dims[i],
                        m.nrows()
                    )));
                }
                m_dims.push(m.ncols());
                b_mats.push(m);
            }
            let m_total: usize = m_dims.iter().sum();
            let k_full = k.to_matrix("K")?;
            if k_full.nrows() != m_total || k_full.ncols() != total {
                return Err(CliError::validation(format!(
                    "field 'K': expected shape {m_total}x{total}, got {}x{}",
                    k_full.nrows(),
                    k_full.ncols()
                )));
            }
            let q_mats = match q {
                Some(qs) => {
                    if qs.len() != n {
                        return Err(CliError::validation(format!(
                            "field 'Q': expected {n} matrices, got {}",
                            qs.len()
                        )));
                    }
                    qs.iter()
                        .enumerate()
                        .map(|(i, qi)| qi.to_matrix(&format!("Q[{i}]")))
                        .collect::<Result<Vec<_>, _>>()?
                }
                None => dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            };
            let c_tilde = match c_tilde {
                Some(v) => {
                    if v.len() != n {
                        return Err(CliError::validation(format!(
                            "field 'c_tilde': expected {n} entries, got {}",
                            v.len()
                        )));
                    }
                    v
                }
                None => q_mats
                    .iter()
                    .map(|qi| qi.symmetric_eigenvalues().min() / 2.0)
                    .collect(),
            };

            // Extract blocks and assemble the closed loop.
            let offsets: Vec<usize> = dims
                .iter()
                .scan(0usize, |acc, &d| {
                    let o = *acc;
                    *acc += d;
                    Some(o)
                })
                .collect();
            let m_offsets: Vec<usize> = m_dims
                .iter()
                .scan(0usize, |acc, &d| {
                    let o = *acc;
                    *acc += d;
                    Some(o)
                })
                .collect();
            let mut a_blocks = Vec::with_capacity(n * n);
            let mut k_blocks = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    a_blocks.push(
                        a_full
                            .view((offsets[i], offsets[j]), (dims[i], dims[j]))
                            .into_owned(),
                    );
                    k_blocks.push(
                        k_full
                            .view((m_offsets[i], offsets[j]), (m_dims[i], dims[j]))
                            .into_owned(),
                    );
                }
            }
            let plant =
                LinearPlant::from_open_loop(dims.clone(), a_blocks, b_mats, k_blocks, q_mats, c_tilde)
                    .map_err(CliError::from)?;

            let overrides = AnalysisOverrides {
                omega_path: match omega_path {
                    Some(gains) => {
                        if gains.len() != n {
                            return Err(CliError::validation(format!(
                                "field 'omega_path': expected {n} gains, got {}",
                                gains.len()
                            )));
                        }
                        let comps = gains
                            .iter()
                            .map(|g| PowerGain::new(g.coeff, g.exponent))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(CliError::from)?;
                        Some(OmegaPath::user_supplied(comps).map_err(CliError::from)?)
                    }
                    None => None,
                },
                phi: match phi {
                    Some(entries) => {
                        if entries.len() != n * n {
                            return Err(CliError::validation(format!(
                                "field 'phi': expected {} entries, got {}",
                                n * n,
                                entries.len()
                            )));
                        }
                        let exprs = entries
                            .iter()
                            .map(|e| match e {
                                None => Ok(GainExpr::zero()),
                                Some(g) => PowerGain::new(g.coeff, g.exponent)
                                    .map(GainExpr::from_term),
                            })
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(CliError::from)?;
                        Some(PhiMap::new(n, exprs).map_err(CliError::from)?)
                    }
                    None => None,
                },
            };
            Ok(ParsedConfig::Linear { plant, overrides })
        }
    }
}

fn check_version(version: u32) -> Result<(), CliError> {
    if version != CONFIG_VERSION {
        return Err(CliError::validation(format!(
            "field 'version': expected {CONFIG_VERSION}, got {version}"
        )));
    }
    Ok(())
}

/// Serializes a generated system to the on-disk format.
///
/// The original open-loop draws are stored, so parsing the file redoes the
/// identical closed-loop assembly and reproduces the plant bit for bit.
pub fn config_from_generated(
    generated: &GeneratedSystem,
    seed: u64,
    bound: f64,
    dense_coupling: bool,
) -> SystemConfigFile {
    let plant = &generated.plant;
    let n = plant.n();
    let dims = plant.dims();
    let total = plant.total_dim();
    let offsets = plant.offsets();
    let mut a_full = DMatrix::<f64>::zeros(total, total);
    let mut k_full = DMatrix::<f64>::zeros(total, total);
    for i in 0..n {
        for j in 0..n {
            a_full
                .view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                .copy_from(&generated.open_loop.a[i * n + j]);
            k_full
                .view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                .copy_from(&generated.open_loop.k[i * n + j]);
        }
    }
    SystemConfigFile::Linear {
        version: CONFIG_VERSION,
        n,
        dims: dims.to_vec(),
        a: MatrixData::from_matrix(&a_full),
        b: generated.open_loop.b.iter().map(MatrixData::from_matrix).collect(),
        k: MatrixData::from_matrix(&k_full),
        q: Some((0..n).map(|i| MatrixData::from_matrix(plant.q_matrix(i))).collect()),
        c_tilde: Some(plant.c_tilde().to_vec()),
        omega_path: None,
        phi: None,
        generator: Some(GeneratorStamp {
            seed,
            bound,
            dense_coupling,
            attempts: generated.attempts,
            rho: generated.rho,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonlinear_config_round_trip() {
        let file = SystemConfigFile::NonlinearExample {
            version: 1,
            k: 64.0,
            sigma_bar_sq: None,
        };
        let text = serde_json::to_string_pretty(&file).unwrap();
        let parsed: SystemConfigFile = serde_json::from_str(&text).unwrap();
        let cfg = parse_config_file(parsed).unwrap();
        match cfg {
            ParsedConfig::NonlinearExample { k, sigma_bar_sq } => {
                assert_eq!(k, 64.0);
                assert!(sigma_bar_sq.is_none());
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn rejects_small_k() {
        let file = SystemConfigFile::NonlinearExample {
            version: 1,
            k: 16.0,
            sigma_bar_sq: None,
        };
        let err = parse_config_file(file).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains('k'));
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"type":"linear","version":1,"n":1,"dims":[1],
            "a":{"shape":[1,1],"data":[-1.0]},
            "k":{"shape":[1,1],"data":[0.0]}}"#;
        let err = serde_json::from_str::<SystemConfigFile>(text).unwrap_err();
        assert!(err.to_string().contains("missing field `b`"), "{err}");
    }

    #[test]
    fn shape_mismatch_is_named() {
        let file = SystemConfigFile::Linear {
            version: 1,
            n: 1,
            dims: vec![2],
            a: MatrixData { shape: [2, 2], data: vec![-1.0, 0.0, 0.0] },
            b: vec![MatrixData { shape: [2, 2], data: vec![1.0, 0.0, 0.0, 1.0] }],
            k: MatrixData { shape: [2, 2], data: vec![0.0; 4] },
            q: None,
            c_tilde: None,
            omega_path: None,
            phi: None,
            generator: None,
        };
        let err = parse_config_file(file).unwrap_err();
        assert!(err.to_string().contains("'A'"), "{err}");
    }

    #[test]
    fn non_hurwitz_is_reported() {
        let file = SystemConfigFile::Linear {
            version: 1,
            n: 1,
            dims: vec![1],
            a: MatrixData { shape: [1, 1], data: vec![1.0] },
            b: vec![MatrixData { shape: [1, 1], data: vec![0.0] }],
            k: MatrixData { shape: [1, 1], data: vec![0.0] },
            q: None,
            c_tilde: None,
            omega_path: None,
            phi: None,
            generator: None,
        };
        let err = parse_config_file(file).unwrap_err();
        assert!(err.to_string().to_lowercase().contains("hurwitz"), "{err}");
    }
}
