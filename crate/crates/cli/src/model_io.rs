//! Model files and builtin model names.

use std::path::Path;

use gaplab_core::model::{BoundaryTuples, Tetrad, WoVector};
use gaplab_core::{build_aklt, build_kappa_example, build_product, ClassATuple, CMatrix, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

type Entry = [f64; 2];
type RawMatrix = Vec<Vec<Entry>>;

/// On-disk model: complex entries as `[re, im]`, matrices row-major.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub n0: usize,
    #[serde(rename = "kR")]
    pub k_r: usize,
    #[serde(rename = "kL")]
    pub k_l: usize,
    pub lambda: Vec<Entry>,
    #[serde(rename = "D")]
    pub d: Vec<RawMatrix>,
    #[serde(rename = "G")]
    pub g: Vec<RawMatrix>,
    #[serde(rename = "Y")]
    pub y: RawMatrix,
    #[serde(rename = "B")]
    pub b: Vec<RawMatrix>,
}

/// A loaded model with its provenance.
pub struct LoadedModel {
    pub source: String,
    pub fingerprint: String,
    pub tuple: ClassATuple,
}

fn to_matrix(field: &str, raw: &RawMatrix, dim: usize) -> Result<CMatrix, CliError> {
    if raw.len() != dim {
        return Err(CliError::input(format!("field {field}: {} rows, expected {dim}", raw.len())));
    }
    for (r, row) in raw.iter().enumerate() {
        if row.len() != dim {
            return Err(CliError::input(format!("field {field}: row {r} has {} entries, expected {dim}", row.len())));
        }
        if let Some(c) = row.iter().position(|e| !e[0].is_finite() || !e[1].is_finite()) {
            return Err(CliError::input(format!("field {field}: entry ({r},{c}) is not finite")));
        }
    }
    Ok(CMatrix::from_fn(dim, dim, |r, c| C64::new(raw[r][c][0], raw[r][c][1])))
}

fn from_matrix(m: &CMatrix) -> RawMatrix {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect()
}

impl ModelFile {
    pub fn from_tuple(t: &ClassATuple) -> Self {
        let tet = &t.tetrad;
        ModelFile {
            n: t.n(),
            n0: t.n0,
            k_r: tet.k_r(),
            k_l: tet.k_l(),
            lambda: tet.wo.lambda.iter().map(|z| [z.re, z.im]).collect(),
            d: tet.boundary.d.iter().map(from_matrix).collect(),
            g: tet.boundary.g.iter().map(from_matrix).collect(),
            y: from_matrix(&tet.y),
            b: t.b.iter().map(from_matrix).collect(),
        }
    }

    pub fn to_tuple(&self) -> Result<ClassATuple, CliError> {
        if self.n < 2 {
            return Err(CliError::input(format!("field n: {} < 2", self.n)));
        }
        if self.n0 == 0 {
            return Err(CliError::input("field n0: must be positive"));
        }
        let kdim = self.k_r + self.k_l + 1;
        if self.lambda.len() != kdim {
            return Err(CliError::input(format!("field lambda: {} entries, expected kR+kL+1 = {kdim}", self.lambda.len())));
        }
        if self.d.len() != self.k_r {
            return Err(CliError::input(format!("field D: {} matrices, expected kR = {}", self.d.len(), self.k_r)));
        }
        if self.g.len() != self.k_l {
            return Err(CliError::input(format!("field G: {} matrices, expected kL = {}", self.g.len(), self.k_l)));
        }
        if self.b.len() != self.n {
            return Err(CliError::input(format!("field B: {} matrices, expected n = {}", self.b.len(), self.n)));
        }
        let d = self
            .d
            .iter()
            .enumerate()
            .map(|(i, m)| to_matrix(&format!("D[{i}]"), m, self.k_r + 1))
            .collect::<Result<Vec<_>, _>>()?;
        let g = self
            .g
            .iter()
            .enumerate()
            .map(|(i, m)| to_matrix(&format!("G[{i}]"), m, self.k_l + 1))
            .collect::<Result<Vec<_>, _>>()?;
        let y = to_matrix("Y", &self.y, kdim)?;
        let k = self.n0 * kdim;
        let b = self
            .b
            .iter()
            .enumerate()
            .map(|(i, m)| to_matrix(&format!("B[{i}]"), m, k))
            .collect::<Result<Vec<_>, _>>()?;
        let lambda = self.lambda.iter().map(|e| C64::new(e[0], e[1])).collect();
        let tetrad = Tetrad { wo: WoVector { k_r: self.k_r, k_l: self.k_l, lambda }, boundary: BoundaryTuples { d, g }, y };
        ClassATuple::new(self.n0, tetrad, b).map_err(|e| CliError::input(format!("model: {e}")))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn parse_kappa_args(args: &str) -> Result<(usize, usize, usize, f64, usize), CliError> {
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(CliError::input(format!("builtin:kappa takes (n0,kR,kL,kappa,n), got '{args}'")));
    }
    let int = |i: usize, name: &str| -> Result<usize, CliError> {
        parts[i].parse().map_err(|_| CliError::input(format!("builtin:kappa: {name} = '{}' is not a count", parts[i])))
    };
    let kappa: f64 = parts[3].parse().map_err(|_| CliError::input(format!("builtin:kappa: kappa = '{}' is not a number", parts[3])))?;
    Ok((int(0, "n0")?, int(1, "kR")?, int(2, "kL")?, kappa, int(4, "n")?))
}

fn builtin(name: &str) -> Result<ClassATuple, CliError> {
    let name = name.trim();
    match name {
        "aklt" => Ok(build_aklt()),
        "product" => Ok(build_product()),
        "kappa" => build_kappa_example(1, 1, 1, 0.5, 2).map_err(|e| CliError::input(e.to_string())),
        _ => {
            let args = name
                .strip_prefix("kappa(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| CliError::input(format!("unknown builtin '{name}' (expected kappa, kappa(n0,kR,kL,kappa,n), aklt, product)")))?;
            let (n0, kr, kl, kappa, n) = parse_kappa_args(args)?;
            build_kappa_example(n0, kr, kl, kappa, n).map_err(|e| CliError::input(format!("builtin:kappa: {e}")))
        }
    }
}

/// Resolves `builtin:<name>` or a path to a JSON model file.
pub fn load(source: &str) -> Result<LoadedModel, CliError> {
    if let Some(name) = source.strip_prefix("builtin:") {
        let tuple = builtin(name)?;
        let canonical = serde_json::to_vec(&ModelFile::from_tuple(&tuple)).expect("model serialises");
        return Ok(LoadedModel { source: source.to_string(), fingerprint: sha256_hex(&canonical), tuple });
    }
    let path = Path::new(source);
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::input(format!("model file {source}: not found"))
        } else {
            CliError::io(format!("model file {source}: {e}"))
        }
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::input(format!("model file {source}: not UTF-8 ({e})")))?;
    let file: ModelFile = serde_json::from_str(text).map_err(|e| CliError::input(format!("model file {source}: {e}")))?;
    let tuple = file.to_tuple().map_err(|e| CliError::input(format!("model file {source}: {}", e.message)))?;
    Ok(LoadedModel { source: source.to_string(), fingerprint: sha256_hex(&bytes), tuple })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_round_trip() {
        let m = load("builtin:kappa(2,1,0,0.5,2)").unwrap();
        let file = ModelFile::from_tuple(&m.tuple);
        let back = file.to_tuple().unwrap();
        for (a, b) in m.tuple.b.iter().zip(&back.b) {
            assert_eq!(a, b);
        }
        assert_eq!(file.k_r, 1);
        assert!(m.fingerprint.starts_with("sha256:"));
    }

    #[test]
    fn bad_builtins() {
        assert_eq!(load("builtin:nope").err().unwrap().code, 2);
        assert_eq!(load("builtin:kappa(1,1)").err().unwrap().code, 2);
        assert_eq!(load("builtin:kappa(1,1,1,1.5,2)").err().unwrap().code, 2);
    }

    #[test]
    fn shape_errors_name_the_field() {
        let mut f = ModelFile::from_tuple(&build_kappa_example(1, 1, 1, 0.5, 2).unwrap());
        f.b[1].pop();
        let err = f.to_tuple().err().unwrap();
        assert!(err.message.contains("field B[1]"), "{}", err.message);
    }
}
