//! Model directories: config, vocabularies, and parameters as a flat
//! little-endian `f64` file described by a text manifest.

use std::fs;
use std::path::Path;

use speechparse_core::autodiff::{ManifestEntry, ParamStore};
use speechparse_core::model::{parse_kv, ModelConfig, Parser, SymbolVocab, WordVocab};

use crate::{read_file, write_file, Error, Result};

pub const MAGIC: &[u8; 8] = b"SPPARAMS";
pub const VERSION: u32 = 1;
const MANIFEST_HEADER: &str = "speechparse-params";

pub const CONFIG_FILE: &str = "model.cfg";
pub const WORDS_FILE: &str = "words.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const MANIFEST_FILE: &str = "params.manifest";
pub const PARAMS_FILE: &str = "params.bin";

fn format_err(path: &Path, message: String) -> Error {
    Error::Core {
        path: path.to_path_buf(),
        source: speechparse_core::Error::Format(message),
    }
}

pub fn encode_params(params: &ParamStore) -> (String, Vec<u8>) {
    let mut manifest = format!("{MANIFEST_HEADER} {VERSION}\n");
    for e in params.manifest() {
        manifest.push_str(&format!("{}\t{}\t{}\t{}\n", e.name, e.rows, e.cols, e.offset));
    }
    let flat = params.flat_values();
    let mut bin = Vec::with_capacity(20 + 8 * flat.len());
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&VERSION.to_le_bytes());
    bin.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        bin.extend_from_slice(&v.to_le_bytes());
    }
    (manifest, bin)
}

pub fn decode_params(manifest: &str, bin: &[u8], path: &Path) -> Result<ParamStore> {
    let mut lines = manifest.lines();
    let header = lines.next().unwrap_or("");
    if header != format!("{MANIFEST_HEADER} {VERSION}") {
        return Err(format_err(path, format!("unsupported manifest header `{header}`")));
    }
    let entries = lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let n = |k: usize| f.get(k).and_then(|s| s.parse::<usize>().ok());
            match (f.len(), n(1), n(2), n(3)) {
                (4, Some(rows), Some(cols), Some(offset)) => Ok(ManifestEntry {
                    name: f[0].to_string(),
                    rows,
                    cols,
                    offset,
                }),
                _ => Err(format_err(path, format!("manifest line {}: `{line}`", i + 2))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if bin.len() < 20 || &bin[..8] != MAGIC {
        return Err(format_err(path, "not a parameter file".into()));
    }
    let version = u32::from_le_bytes(bin[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(format_err(path, format!("parameter file version {version}, expected {VERSION}")));
    }
    let count = u64::from_le_bytes(bin[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bin[20..];
    if body.len() != 8 * count {
        return Err(format_err(path, format!("expected {count} values, file holds {} bytes", body.len())));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ParamStore::from_manifest(&entries, &flat).map_err(|source| Error::Core {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save(dir: &Path, parser: &Parser) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join(CONFIG_FILE), parser.config.to_kv().as_bytes())?;
    write_file(&dir.join(WORDS_FILE), lines(parser.words.words()).as_bytes())?;
    write_file(&dir.join(LABELS_FILE), lines(parser.symbols.labels()).as_bytes())?;
    let (manifest, bin) = encode_params(&parser.params);
    write_file(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    write_file(&dir.join(PARAMS_FILE), &bin)
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

pub fn load(dir: &Path) -> Result<Parser> {
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg = read_file(&cfg_path)?;
    let at = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Core { path, source }
    };
    let config = parse_kv(&cfg)
        .and_then(|kv| ModelConfig::from_kv(&kv))
        .map_err(at(&cfg_path))?;
    let words: Vec<String> = read_file(&dir.join(WORDS_FILE))?.lines().map(String::from).collect();
    let labels = read_file(&dir.join(LABELS_FILE))?;
    let symbols = SymbolVocab::new(labels.lines());
    let manifest = read_file(&dir.join(MANIFEST_FILE))?;
    let bin_path = dir.join(PARAMS_FILE);
    let bin = fs::read(&bin_path).map_err(|source| Error::Io {
        path: bin_path.clone(),
        source,
    })?;
    let params = decode_params(&manifest, &bin, &bin_path)?;
    Parser::from_params(config, WordVocab::from_words(words), symbols, params).map_err(at(dir))
}
