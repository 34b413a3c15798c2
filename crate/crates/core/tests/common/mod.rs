#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "ve", "bir", "bu", "için", "ile", "olarak", "daha", "çok", "en", "gibi", "tarihinde", "yılında",
    "şehir", "nüfus", "ülke", "dağ", "nehir", "göl", "köy", "ilçe", "il", "bölge", "deniz", "kıyı",
    "tarih", "savaş", "devlet", "imparatorluk", "cumhuriyet", "kurulmuştur", "bulunmaktadır",
    "yer", "alır", "önemli", "büyük", "küçük", "eski", "yeni", "güney", "kuzey", "doğu", "batı",
    "müzik", "sanatçı", "yazar", "şair", "roman", "film", "oyuncu", "takım", "futbol", "lig",
    "bilim", "fizik", "kimya", "matematik", "üniversite", "öğrenci", "öğretmen", "okul", "kitap",
    "dünya", "güneş", "ay", "yıldız", "gezegen", "uzay", "ağaç", "çiçek", "hayvan", "kuş", "balık",
    "İstanbul", "Ankara", "İzmir", "Türkiye", "Osmanlı", "Anadolu", "Karadeniz", "Ege", "Akdeniz",
];

/// Deterministic Turkish-looking articles of a few sentences each.
pub fn turkish_corpus(articles: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..articles)
        .map(|_| {
            let sentences = rng.gen_range(4..12);
            let mut text = String::new();
            for s in 0..sentences {
                let len = rng.gen_range(5..14);
                let words: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
                let mut sentence = words.join(" ");
                if let Some(first) = sentence.get(..1) {
                    let upper = first.to_uppercase();
                    sentence.replace_range(..1, &upper);
                }
                if s > 0 {
                    text.push(if s % 4 == 0 { '\n' } else { ' ' });
                }
                if rng.gen_bool(0.3) {
                    sentence.push_str(&format!(" {}", rng.gen_range(1000..2024)));
                }
                text.push_str(&sentence);
                text.push('.');
            }
            text
        })
        .collect()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A MediaWiki export wrapping `bodies` as main-namespace pages with some
/// markup, plus one redirect and one talk page.
pub fn dump_xml(bodies: &[String]) -> String {
    let mut xml = String::from("<mediawiki xmlns=\"http://www.mediawiki.org/xml/export-0.10/\" xml:lang=\"tr\">\n");
    let mut page = |id: usize, title: &str, ns: i64, text: &str, redirect: bool| {
        xml.push_str(&format!(
            "<page><title>{}</title><ns>{ns}</ns><id>{id}</id>{}<revision><id>{}</id><text xml:space=\"preserve\">{}</text></revision></page>\n",
            escape(title),
            if redirect { "<redirect title=\"Hedef\" />" } else { "" },
            id + 100_000,
            escape(text)
        ));
    };
    for (i, body) in bodies.iter().enumerate() {
        let marked = format!(
            "{{{{Bilgi kutusu|ad=Madde {i}}}}}\n'''Madde {i}''' [[Türkiye|Türk]] {body}<ref>kaynak {i}</ref>\n[[Kategori:Deneme]]"
        );
        page(i + 1, &format!("Madde {i}"), 0, &marked, false);
    }
    page(bodies.len() + 1, "Eski ad", 0, "#YÖNLENDİR [[Madde 0]]", true);
    page(bodies.len() + 2, "Tartışma:Madde 0", 1, "Bir tartışma.", false);
    xml.push_str("</mediawiki>\n");
    xml
}

/// Reference encoder: for each merge in rank order, rescan the whole
/// sequence and replace every left-to-right occurrence.
pub fn naive_encode(merges: &[(u32, u32)], bytes: &[u8]) -> Vec<u32> {
    let mut seq: Vec<u32> = bytes.iter().map(|&b| u32::from(b)).collect();
    for (rank, &(a, b)) in merges.iter().enumerate() {
        let id = 256 + rank as u32;
        let mut out = Vec::with_capacity(seq.len());
        let mut i = 0;
        while i < seq.len() {
            if i + 1 < seq.len() && seq[i] == a && seq[i + 1] == b {
                out.push(id);
                i += 2;
            } else {
                out.push(seq[i]);
                i += 1;
            }
        }
        seq = out;
    }
    seq
}

/// Reference trainer: recount every adjacent pair after each merge; the
/// highest count wins, ties go to the smallest pair, and training stops
/// once no pair occurs twice.
pub fn naive_train(docs: &[&str], merges_wanted: usize) -> Vec<(u32, u32)> {
    let mut seqs: Vec<Vec<u32>> = docs.iter().map(|d| d.bytes().map(u32::from).collect()).collect();
    let mut merges = Vec::new();
    while merges.len() < merges_wanted {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for s in &seqs {
            for w in s.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += 1;
            }
        }
        let best = counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then(pb.cmp(pa)));
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let id = 256 + merges.len() as u32;
        merges.push(pair);
        for s in seqs.iter_mut() {
            let mut out = Vec::with_capacity(s.len());
            let mut i = 0;
            while i < s.len() {
                if i + 1 < s.len() && (s[i], s[i + 1]) == pair {
                    out.push(id);
                    i += 2;
                } else {
                    out.push(s[i]);
                    i += 1;
                }
            }
            *s = out;
        }
    }
    merges
}

pub fn random_bytes(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max_len);
    // Mostly a small alphabet so merges actually fire, with full-range
    // bytes mixed in.
    (0..len)
        .map(|_| if rng.gen_bool(0.8) { b"abcde "[rng.gen_range(0..6)] } else { rng.gen() })
        .collect()
}
