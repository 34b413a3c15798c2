//! Small Turkish sample data so every example runs without downloads.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "türkiye", "istanbul", "ankara", "şehir", "nehir", "dağ", "deniz", "tarih", "yüzyıl", "osmanlı",
    "cumhuriyet", "halk", "dil", "kitap", "yazar", "şair", "müzik", "bilim", "üniversite", "öğrenci",
    "köprü", "cami", "saray", "liman", "ada", "göl", "orman", "bölge", "nüfus", "ilçe", "belediye",
    "kuruldu", "bulunur", "olarak", "ile", "ve", "bir", "bu", "en", "büyük", "önemli", "eski", "yeni",
    "güzel", "ünlü", "doğu", "batı", "kuzey", "güney", "merkezi", "yapılmıştır", "bilinir", "çok",
];

/// `n` pseudo-articles of a few sentences each.
pub fn articles(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let sentences = rng.gen_range(3..8);
            (0..sentences)
                .map(|_| {
                    let len = rng.gen_range(5..12);
                    let words: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
                    let s = words.join(" ");
                    let mut chars = s.chars();
                    let first = chars.next().unwrap();
                    format!("{}{}.", first.to_uppercase(), chars.as_str())
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// A MediaWiki-style XML export holding `bodies` as wikitext, plus one
/// redirect and one talk page that ingestion should drop.
pub fn dump_xml(bodies: &[String]) -> String {
    let mut xml = String::from("<mediawiki>\n");
    let page = |xml: &mut String, id: usize, ns: u32, title: &str, text: &str, redirect: bool| {
        xml.push_str(&format!(
            "<page><title>{title}</title><ns>{ns}</ns><id>{id}</id>{}<revision><text>{}</text></revision></page>\n",
            if redirect { "<redirect title=\"Hedef\" />" } else { "" },
            escape(text)
        ));
    };
    for (i, body) in bodies.iter().enumerate() {
        let text = format!(
            "{{{{Bilgi kutusu|ad=Madde {i}}}}}\n'''Madde {i}''' [[bağlantı|{body}]]<ref>kaynak</ref>\n[[Kategori:Örnek]]"
        );
        page(&mut xml, i + 1, 0, &format!("Madde {i}"), &text, false);
    }
    page(&mut xml, bodies.len() + 1, 0, "Yönlendirme", "#YÖNLENDİRME [[Madde 0]]", true);
    page(&mut xml, bodies.len() + 2, 1, "Tartışma:Madde 0", "Tartışma metni.", false);
    xml.push_str("</mediawiki>\n");
    xml
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A fresh scratch directory under the system temp dir.
pub fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("trgpt-example-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}
