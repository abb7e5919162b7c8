use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{PathCorpus, PathRecord, PhysicalNode};
use crate::error::{Error, LineDiagnostic, Result};
use crate::util::{fmt_sig, quote, tokenize};

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Each data line starts with a group key used for fold assignment.
    pub grouped: bool,
}

#[derive(Default)]
pub(crate) struct Interner {
    ids: HashMap<String, u32>,
    nodes: Vec<PhysicalNode>,
}

impl Interner {
    pub(crate) fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.ids.insert(name.to_string(), id);
        self.nodes.push(PhysicalNode {
            id,
            name: name.to_string(),
        });
        id
    }

    pub(crate) fn into_nodes(self) -> Vec<PhysicalNode> {
        self.nodes
    }
}

#[derive(PartialEq)]
enum Section {
    Headerless,
    Vertices,
    Paths,
}

/// Parses a paths file.
///
/// Data lines are `n1 n2 ... nk weight` with `k >= 2`, optionally preceded by a group
/// key. A `*Vertices` block (`id name` lines) followed by `*Paths` makes path tokens
/// refer to declared vertex ids; without it, tokens are node names. Malformed lines
/// are skipped and kept as diagnostics; parsing fails only if no line survives.
pub fn parse_paths<R: BufRead>(reader: R, opts: ParseOptions) -> Result<PathCorpus> {
    let mut section = Section::Headerless;
    let mut interner = Interner::default();
    // declared vertex token -> dense id
    let mut declared: HashMap<String, u32> = HashMap::new();
    let mut paths = Vec::new();
    let mut diagnostics = Vec::new();
    let mut data_lines = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(directive) = trimmed.strip_prefix('*') {
            let keyword = directive.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
            match keyword.as_str() {
                "vertices" => section = Section::Vertices,
                "paths" => section = Section::Paths,
                _ => diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message: format!("unknown directive '*{keyword}'"),
                }),
            }
            continue;
        }
        let tokens = match tokenize(trimmed) {
            Ok(t) => t,
            Err(msg) => {
                diagnostics.push(LineDiagnostic { line: line_no, message: msg });
                if section != Section::Vertices {
                    data_lines += 1;
                }
                continue;
            }
        };
        if section == Section::Vertices {
            let id_tok = &tokens[0];
            let name = tokens.get(1).cloned().unwrap_or_else(|| id_tok.clone());
            if declared.contains_key(id_tok) {
                diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message: format!("vertex id '{id_tok}' declared twice"),
                });
                continue;
            }
            let id = interner.nodes.len() as u32;
            interner.nodes.push(PhysicalNode { id, name });
            declared.insert(id_tok.clone(), id);
            continue;
        }

        data_lines += 1;
        match parse_data_line(&tokens, opts, section == Section::Paths, &declared, &mut interner) {
            Ok(rec) => paths.push(rec),
            Err(message) => diagnostics.push(LineDiagnostic { line: line_no, message }),
        }
    }

    if paths.is_empty() {
        return Err(if data_lines == 0 {
            Error::EmptyCorpus
        } else {
            Error::AllLinesRejected(diagnostics)
        });
    }
    let mut corpus = PathCorpus::with_shared_nodes(Arc::new(interner.into_nodes()), paths)?;
    corpus.diagnostics = diagnostics;
    Ok(corpus)
}

fn parse_data_line(
    tokens: &[String],
    opts: ParseOptions,
    by_declared_id: bool,
    declared: &HashMap<String, u32>,
    interner: &mut Interner,
) -> std::result::Result<PathRecord, String> {
    let (group, rest) = if opts.grouped {
        match tokens.split_first() {
            Some((g, rest)) => (Some(g.clone()), rest),
            None => return Err("missing group column".into()),
        }
    } else {
        (None, tokens)
    };
    let Some((weight_tok, node_toks)) = rest.split_last() else {
        return Err("empty data line".into());
    };
    if node_toks.len() < 2 {
        return Err(format!("path needs at least 2 nodes, found {}", node_toks.len()));
    }
    let weight: f64 = weight_tok
        .parse()
        .map_err(|_| format!("non-numeric weight '{weight_tok}'"))?;
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(format!("weight must be positive and finite, got {weight_tok}"));
    }
    let nodes = if by_declared_id {
        node_toks
            .iter()
            .map(|t| declared.get(t).copied().ok_or_else(|| format!("undeclared vertex '{t}'")))
            .collect::<std::result::Result<Vec<_>, _>>()?
    } else {
        node_toks.iter().map(|t| interner.intern(t)).collect()
    };
    Ok(PathRecord { nodes, weight, group })
}

/// Writes a corpus in the `*Vertices` / `*Paths` form; weights use 17 significant digits
/// so that parsing the output reproduces names, ids and weights exactly.
pub fn write_paths<W: Write>(corpus: &PathCorpus, mut w: W) -> Result<()> {
    writeln!(w, "*Vertices {}", corpus.node_count())?;
    for node in corpus.nodes() {
        writeln!(w, "{} {}", node.id, quote(&node.name))?;
    }
    writeln!(w, "*Paths {}", corpus.len())?;
    for p in corpus.paths() {
        let mut line = String::new();
        if let Some(g) = &p.group {
            line.push_str(&quote(g));
            line.push(' ');
        }
        for id in &p.nodes {
            line.push_str(&id.to_string());
            line.push(' ');
        }
        line.push_str(&fmt_sig(p.weight, 17));
        writeln!(w, "{line}")?;
    }
    Ok(())
}
