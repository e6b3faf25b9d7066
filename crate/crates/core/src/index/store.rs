//! Binary index file, little-endian throughout:
//!
//! ```text
//! magic "CTIX" | version u32 | N u64 | avgdl f64 | stoplist sha256 [32]
//! N x (id_len u32, id bytes)
//! N x doc_len u32
//! V u64, then V x (term_len u32, term bytes, cf u64, df u32, df x (doc u32, tf u32))
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{IndexError, InvertedIndex, Posting};
use crate::text::Term;

pub const MAGIC: &[u8; 4] = b"CTIX";
pub const FORMAT_VERSION: u32 = 1;

impl InvertedIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.num_docs() as u64).to_le_bytes());
        out.extend_from_slice(&self.avg_doc_length.to_le_bytes());
        out.extend_from_slice(&self.pipeline_fingerprint);
        for id in &self.doc_ids {
            put_str(&mut out, id);
        }
        for len in &self.doc_lengths {
            out.extend_from_slice(&len.to_le_bytes());
        }
        out.extend_from_slice(&(self.terms.len() as u64).to_le_bytes());
        for (i, term) in self.terms.iter().enumerate() {
            put_str(&mut out, term.as_str());
            out.extend_from_slice(&self.collection_counts[i].to_le_bytes());
            out.extend_from_slice(&(self.postings[i].len() as u32).to_le_bytes());
            for p in &self.postings[i] {
                out.extend_from_slice(&p.doc.to_le_bytes());
                out.extend_from_slice(&p.tf.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let n = r.u64()? as usize;
        let avgdl = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        let mut doc_ids = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            doc_ids.push(r.string()?);
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(corrupt("document ids not strictly sorted"));
        }
        let mut doc_lengths = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            doc_lengths.push(r.u32()?);
        }
        let v = r.u64()? as usize;
        let mut terms = Vec::with_capacity(v.min(1 << 24));
        let mut postings = Vec::with_capacity(v.min(1 << 24));
        let mut stored_cf = Vec::with_capacity(v.min(1 << 24));
        for _ in 0..v {
            let s = r.string()?;
            let term = Term::new(s.clone()).ok_or_else(|| corrupt(format!("invalid term '{s}'")))?;
            if terms.last().is_some_and(|prev: &Term| prev >= &term) {
                return Err(corrupt("vocabulary not strictly sorted"));
            }
            stored_cf.push(r.u64()?);
            let df = r.u32()? as usize;
            let mut plist = Vec::with_capacity(df.min(n));
            for _ in 0..df {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= n || tf == 0 || plist.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(corrupt(format!("bad posting for term '{term}'")));
                }
                plist.push(Posting { doc, tf });
            }
            terms.push(term);
            postings.push(plist);
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let index = InvertedIndex::from_parts(terms, postings, doc_ids, doc_lengths, fingerprint);
        if index.collection_counts != stored_cf {
            return Err(corrupt("collection counts disagree with postings"));
        }
        if index.avg_doc_length.to_bits() != avgdl.to_bits() {
            return Err(corrupt("average document length disagrees with document lengths"));
        }
        for (d, terms) in index.doc_terms.iter().enumerate() {
            let sum: u64 = terms.iter().map(|&(_, tf)| tf as u64).sum();
            if sum != index.doc_lengths[d] as u64 {
                return Err(corrupt(format!("length of document {} disagrees with postings", index.doc_ids[d])));
            }
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| IndexError::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path).map_err(|source| IndexError::Io { path: path.into(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Human-readable dump: header lines, then one line per term with
    /// `term<TAB>cf<TAB>df<TAB>doc:tf ...` using registry ids.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# version {FORMAT_VERSION}").unwrap();
        writeln!(out, "# docs {}", self.num_docs()).unwrap();
        writeln!(out, "# avgdl {}", self.avg_doc_length).unwrap();
        writeln!(out, "# terms {}", self.terms.len()).unwrap();
        writeln!(out, "# stoplist {}", hex::encode(self.pipeline_fingerprint)).unwrap();
        for (d, id) in self.doc_ids.iter().enumerate() {
            writeln!(out, "doc\t{d}\t{id}\t{}", self.doc_lengths[d]).unwrap();
        }
        for (i, term) in self.terms.iter().enumerate() {
            write!(out, "{term}\t{}\t{}\t", self.collection_counts[i], self.postings[i].len()).unwrap();
            let entries: Vec<String> =
                self.postings[i].iter().map(|p| format!("{}:{}", self.doc_ids[p.doc as usize], p.tf)).collect();
            writeln!(out, "{}", entries.join(" ")).unwrap();
        }
        out
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn corrupt(msg: impl Into<String>) -> IndexError {
    IndexError::Corrupt(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }
}
