use super::InstructionRecord;
use crate::bpe::SEPARATOR_TEXT;

/// Identifier of the frozen template wording below.
pub const TEMPLATE_VERSION: &str = "tr-alpaca-v1";

const PREAMBLE_WITH_INPUT: &str = "Aşağıda bir görevi tanımlayan bir komut ve ek bağlam sağlayan bir girdi \
bulunmaktadır. İsteği uygun şekilde tamamlayan bir yanıt yazın.";
const PREAMBLE: &str = "Aşağıda bir görevi tanımlayan bir komut bulunmaktadır. İsteği uygun şekilde tamamlayan \
bir yanıt yazın.";
const INSTRUCTION_HEADER: &str = "### Komut:";
const INPUT_HEADER: &str = "### Girdi:";
const RESPONSE_HEADER: &str = "### Yanıt:";

/// Prompt (everything up to and including the response header) and the
/// response text. The end-of-text marker is not included.
pub fn render_prompt_parts(record: &InstructionRecord) -> (String, String) {
    let prompt = if record.girdi.is_empty() {
        format!("{PREAMBLE}\n\n{INSTRUCTION_HEADER}\n{}\n\n{RESPONSE_HEADER}\n", record.komut)
    } else {
        format!(
            "{PREAMBLE_WITH_INPUT}\n\n{INSTRUCTION_HEADER}\n{}\n\n{INPUT_HEADER}\n{}\n\n{RESPONSE_HEADER}\n",
            record.komut, record.girdi
        )
    };
    (prompt, record.cikti.clone())
}

/// Full training text: prompt, response, end-of-text marker.
pub fn render_prompt(record: &InstructionRecord) -> String {
    let (prompt, response) = render_prompt_parts(record);
    format!("{prompt}{response}{SEPARATOR_TEXT}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn shapes() {
        let plain = render_prompt(&InstructionRecord::new("Üç ana renk nedir?", "", "Kırmızı."));
        assert!(!plain.contains(INPUT_HEADER));
        assert!(plain.ends_with("### Yanıt:\nKırmızı.<|endoftext|>"));
        let with = render_prompt(&InstructionRecord::new("Topla", "1,2,3", "6"));
        assert!(with.contains("### Girdi:\n1,2,3\n"));
    }

    #[test]
    fn distinct_records_render_distinctly() {
        let mut seen = HashSet::new();
        for i in 0..2000 {
            let r = InstructionRecord::new(format!("komut {}", i % 40), if i % 3 == 0 { String::new() } else { format!("g{}", i / 40) }, format!("yanıt {i}"));
            assert!(seen.insert(render_prompt(&r)));
        }
    }
}
