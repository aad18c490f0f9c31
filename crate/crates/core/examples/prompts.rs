//! Print every agent's prompt template and the placeholders it needs.
//!
//!     cargo run --example prompts

use std::collections::BTreeMap;

use whistle::agents::{render_prompt, TemplateId};

pub fn run() -> anyhow::Result<()> {
    for id in TemplateId::ALL {
        let template = id.template();
        let names = template.placeholders();
        println!("== {} ({})", id.as_str(), names.iter().copied().collect::<Vec<_>>().join(", "));
        // Render with each placeholder shown as <name>.
        let values: BTreeMap<&str, String> = names.iter().map(|n| (*n, format!("<{n}>"))).collect();
        let p = render_prompt(id, &values)?;
        println!("-- system\n{}\n-- user\n{}\n", p.system, p.user);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run()
}
