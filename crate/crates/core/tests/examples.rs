//! Every example runs to completion offline.

#[path = "../examples/ablation_eval.rs"]
mod ablation_eval;
#[path = "../examples/ingest_cases.rs"]
mod ingest_cases;
#[path = "../examples/prompts.rs"]
mod prompts;
#[path = "../examples/remote_backend.rs"]
mod remote_backend;
#[path = "../examples/retrieval.rs"]
mod retrieval;
#[path = "../examples/text_question.rs"]
mod text_question;
#[path = "../examples/video_question.rs"]
mod video_question;

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn retrieval_example() {
    retrieval::run("goalkeeper leaves the line at a penalty").unwrap();
}

#[test]
fn ingest_cases_example() {
    ingest_cases::run(tmp().path()).unwrap();
}

#[test]
fn prompts_example() {
    prompts::run().unwrap();
}

#[test]
fn text_question_example() {
    text_question::run(tmp().path()).unwrap();
}

#[test]
fn video_question_example() {
    video_question::run(tmp().path()).unwrap();
}

#[test]
fn ablation_eval_example() {
    ablation_eval::run(tmp().path()).unwrap();
}

#[test]
fn human_eval_example() {
    human_eval::run(tmp().path()).unwrap();
}

#[test]
fn remote_backend_example() {
    remote_backend::run(false).unwrap();
}
