#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zhcurate::Document;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` consecutive CJK ideographs starting at `start`.
pub fn han_range(start: u32, n: u32) -> Vec<char> {
    (start..start + n).filter_map(char::from_u32).collect()
}

pub fn random_text(rng: &mut impl Rng, alphabet: &[char], len: usize) -> String {
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

/// Text from a sparse first-order chain over a small alphabet: each
/// character has four likely successors. Easy for an n-gram model.
pub struct Chain {
    alphabet: Vec<char>,
    next: Vec<[usize; 4]>,
}

impl Chain {
    pub fn new(seed: u64, alphabet: Vec<char>) -> Self {
        let mut r = rng(seed);
        let next = (0..alphabet.len())
            .map(|_| std::array::from_fn(|_| r.random_range(0..alphabet.len())))
            .collect();
        Chain { alphabet, next }
    }

    pub fn text(&self, rng: &mut impl Rng, len: usize) -> String {
        let mut i = rng.random_range(0..self.alphabet.len());
        let mut out = String::new();
        for _ in 0..len {
            out.push(self.alphabet[i]);
            i = self.next[i][rng.random_range(0..4)];
        }
        out
    }
}

/// Comment fixture for prompt-set construction: 231 comments that split
/// into two parts of at least three codepoints, 100 without any
/// delimiter, and 56 whose prompt or continuation is too short.
pub struct CommentPlan {
    pub comments: Vec<String>,
    pub valid: usize,
    pub no_delimiter: usize,
    pub too_short: usize,
}

pub fn toxicity_comments(seed: u64) -> CommentPlan {
    let mut r = rng(seed);
    let alpha = han_range(0x4E00, 800);
    let delims: Vec<char> = "，。！？；：、…\n".chars().collect();
    let mut comments = Vec::new();
    for _ in 0..231 {
        let p = { let n = r.random_range(2..20); random_text(&mut r, &alpha, n) };
        let c = { let n = r.random_range(3..30); random_text(&mut r, &alpha, n) };
        let d = delims[r.random_range(0..delims.len())];
        comments.push(format!("{p}{d}{c}"));
    }
    for _ in 0..100 {
        // Latin punctuation and spaces do not split
        let t = { let n = r.random_range(5..40); random_text(&mut r, &alpha, n) };
        comments.push(format!("{} ,{}!", t, random_text(&mut r, &alpha, 3)));
    }
    for i in 0..56 {
        let long = { let n = r.random_range(5..20); random_text(&mut r, &alpha, n) };
        let short = { let n = r.random_range(0..2); random_text(&mut r, &alpha, n) };
        let d = delims[r.random_range(0..delims.len() - 1)];
        comments.push(if i % 2 == 0 {
            // prompt "x，" is two codepoints
            format!("{}{d}{long}", random_text(&mut r, &alpha, 1))
        } else {
            format!("{long}{d}{short}")
        });
    }
    comments.shuffle(&mut r);
    CommentPlan {
        comments,
        valid: 231,
        no_delimiter: 100,
        too_short: 56,
    }
}

/// 950 random documents plus 50 edited copies (3% of characters replaced).
/// Returns the corpus and the planted (original, copy) id pairs.
pub fn near_dup_corpus(seed: u64) -> (Vec<Document>, Vec<(String, String)>) {
    let mut r = rng(seed);
    let alpha = han_range(0x4E00, 3000);
    let mut docs: Vec<Document> = (0..950)
        .map(|i| Document::new(format!("d{i:04}"), "synthetic", random_text(&mut r, &alpha, 300)))
        .collect();
    let mut planted = Vec::new();
    for j in 0..50 {
        let src = j * 19;
        let mut chars: Vec<char> = docs[src].text.chars().collect();
        for _ in 0..9 {
            let at = r.random_range(0..chars.len());
            chars[at] = alpha[r.random_range(0..alpha.len())];
        }
        let id = format!("n{j:02}");
        planted.push((docs[src].id.clone(), id.clone()));
        docs.push(Document::new(id, "synthetic", chars.into_iter().collect::<String>()));
    }
    (docs, planted)
}

/// Mixed corpus touching every pipeline stage: datelines and halfwidth
/// punctuation in news, non-story news, short and symbol-heavy documents,
/// a crawled subset that is half fluent and half noise with some repeated
/// lines, simplified characters in the instruction subset, and 2% edited
/// duplicates.
pub fn mixed_corpus(n: usize, seed: u64, chain: &Chain) -> Vec<Document> {
    let mut r = rng(seed);
    let alpha = han_range(0x4E00, 2500);
    let simplified: Vec<char> = "爱碍袄罢摆败办帮宝报贝备笔币边变标别宾".chars().collect();
    let sources = ["gigaword5-cna", "asbc", "coct-books", "cc100-zht", "wikipedia-zht", "theses", "xp3-zht"];
    let mut docs: Vec<Document> = Vec::with_capacity(n);
    for i in 0..n {
        let source = sources[i % sources.len()];
        let roll: f64 = r.random();
        let len = r.random_range(120..400);
        let mut doc = match source {
            "gigaword5-cna" => {
                let body = chain.text(&mut r, len).replace('丁', ",").replace('七', ".");
                let text = if roll < 0.5 {
                    format!("2011-0{}-1{} {body}", r.random_range(1..10), r.random_range(0..10))
                } else {
                    format!("（中央社記者台北{}日電）{body}", r.random_range(1..30))
                };
                let kind = if roll < 0.9 { "story" } else { "advis" };
                Document::new(format!("{source}-{i}"), source, text).with_meta("type", kind)
            }
            "asbc" => {
                let text = if roll < 0.1 {
                    format!("{}{}", chain.text(&mut r, 160), "#@%&*".repeat(30))
                } else {
                    chain.text(&mut r, len)
                };
                Document::new(format!("{source}-{i}"), source, text)
            }
            "cc100-zht" => {
                let text = if roll < 0.45 {
                    chain.text(&mut r, len)
                } else if roll < 0.9 {
                    random_text(&mut r, &alpha, len)
                } else {
                    format!("{}\n", chain.text(&mut r, 20)).repeat(12)
                };
                let script = if roll < 0.95 { "zh-Hant" } else { "zh-Hans" };
                Document::new(format!("{source}-{i}"), source, text).with_meta("script", script)
            }
            "xp3-zht" => {
                let mut chars: Vec<char> = chain.text(&mut r, len).chars().collect();
                for _ in 0..5 {
                    let at = r.random_range(0..chars.len());
                    chars[at] = simplified[r.random_range(0..simplified.len())];
                }
                Document::new(format!("{source}-{i}"), source, chars.into_iter().collect::<String>())
            }
            _ => {
                let text = if roll < 0.05 { chain.text(&mut r, 100) } else { chain.text(&mut r, len) };
                Document::new(format!("{source}-{i}"), source, text)
            }
        };
        if i > 100 && r.random::<f64>() < 0.02 {
            let src = r.random_range(0..docs.len());
            let mut chars: Vec<char> = docs[src].text.chars().collect();
            let at = r.random_range(0..chars.len());
            chars[at] = '丙';
            doc = Document::new(format!("dup-{i}"), docs[src].source.clone(), chars.into_iter().collect::<String>());
            doc.meta = docs[src].meta.clone();
        }
        docs.push(doc);
    }
    docs
}

/// One canned HTTP reply.
#[derive(Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn ok(body: impl Into<String>) -> Self {
        Reply {
            status: 200,
            body: body.into(),
        }
    }

    pub fn status(status: u16) -> Self {
        Reply {
            status,
            body: "{}".into(),
        }
    }
}

/// Minimal HTTP/1.1 server on a local port. Replies are taken in order per
/// path, the last one repeating; every request (path, body) is recorded.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
    _handle: JoinHandle<()>,
}

impl MockServer {
    pub fn start(script: BTreeMap<String, Vec<Reply>>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        let handle = std::thread::spawn(move || {
            let mut served: BTreeMap<String, usize> = BTreeMap::new();
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line.is_empty() {
                    continue;
                }
                let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let mut len = 0usize;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push((path.clone(), String::from_utf8_lossy(&body).into_owned()));
                let n = served.entry(path.clone()).or_insert(0);
                let reply = script
                    .get(&path)
                    .map(|rs| rs[(*n).min(rs.len() - 1)].clone())
                    .unwrap_or(Reply::status(404));
                *n += 1;
                let resp = format!(
                    "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.status,
                    reply.body.len(),
                    reply.body
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        MockServer {
            url,
            requests,
            _handle: handle,
        }
    }

    pub fn paths(&self) -> Vec<String> {
        self.requests.lock().unwrap().iter().map(|(p, _)| p.clone()).collect()
    }
}
