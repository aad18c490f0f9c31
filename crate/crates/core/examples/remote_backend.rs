//! Route agents to an OpenAI-compatible endpoint through a config file.
//!
//! Without `OPENAI_API_KEY` this only prints the request that would be
//! sent. With it, one real call is made:
//!
//!     OPENAI_API_KEY=... cargo run --example remote_backend

use std::path::Path;

use whistle::agents::AgentRole;
use whistle::backends::{complete_chat, BackendsConfig, ChatRequest, ImagePayload, RemoteBackend, RemoteSettings};

const CONFIG: &str = r#"{
  "backends": {
    "gpt": {"kind": "remote", "url": "https://api.openai.com/v1/chat/completions",
            "model": "gpt-4o", "auth_env_var": "OPENAI_API_KEY", "vision": true,
            "max_retries": 3, "timeout": 60, "max_in_flight": 4},
    "local": {"kind": "remote", "url": "http://localhost:8000/v1/chat/completions",
              "model": "qwen3-vl-8b"}
  },
  "agents": {"default": "gpt", "context": "local"}
}"#;

pub fn run(send: bool) -> anyhow::Result<()> {
    let cfg: BackendsConfig = serde_json::from_str(CONFIG)?;
    for role in AgentRole::ALL {
        println!("{role:<8} -> {}", cfg.route(role.as_str())?);
    }
    // Building checks every entry but contacts nobody.
    let built = cfg.build(Path::new("."), None)?;
    println!("built {} backends", built.len());

    let mut settings = RemoteSettings::new("https://api.openai.com/v1/chat/completions", "gpt-4o");
    settings.auth_env_var = Some("OPENAI_API_KEY".into());
    settings.vision = true;
    let backend = RemoteBackend::new("gpt", settings)?;
    let frame = ImagePayload::new("image/png", vec![0x89, b'P', b'N', b'G']);
    let req = ChatRequest::new(
        "video",
        "demo/video",
        "You are a professional AI Soccer Referee Assistant.\nOutput JSON only.",
        "Describe the frame.",
    )
    .with_attachments(vec![frame]);

    if send && std::env::var_os("OPENAI_API_KEY").is_some() {
        let resp = complete_chat(&backend, &req)?;
        println!("{} replied in {:?}:\n{}", resp.backend_id, resp.latency, resp.text);
    } else {
        println!("request body:\n{}", serde_json::to_string_pretty(&backend.request_body(&req))?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run(true)
}
