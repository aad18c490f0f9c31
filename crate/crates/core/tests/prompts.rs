mod common;

use common::{check_golden, golden, match_golden, sent_prompts};
use whistle::agents::TemplateId;

#[test]
fn every_agent_prompt_matches_its_golden() {
    let sent = sent_prompts();
    assert_eq!(sent.len(), 5);
    for p in &sent {
        check_golden(p).unwrap();
    }
}

#[test]
fn templates_match_goldens_verbatim() {
    for id in TemplateId::ALL {
        let t = id.template();
        assert_eq!(t.system, golden(&format!("{}.system.txt", id.as_str())), "{id:?}");
        assert_eq!(t.user, golden(&format!("{}.user.txt", id.as_str())), "{id:?}");
    }
}

#[test]
fn golden_matcher_reports_drift() {
    let g = "Scenario: \"{query_text}\"\nDone.";
    let slots = match_golden(g, "Scenario: \"a {b} c\"\nDone.").unwrap();
    assert_eq!(slots["query_text"], "a {b} c");
    assert!(match_golden(g, "Scenario: \"x\"\nDone!").is_err());
    assert!(match_golden(g, "Situation: \"x\"\nDone.").is_err());
}

#[test]
fn video_frames_are_attached() {
    let sent = sent_prompts();
    let video = sent.iter().find(|p| p.agent == "video").unwrap();
    assert_eq!(video.call.attachments, 1);
    assert!(sent.iter().filter(|p| p.agent != "video").all(|p| p.call.attachments == 0));
}
