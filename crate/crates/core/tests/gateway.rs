mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use common::{Client, ServerBuilder, TestServer, ADMIN_TOKEN};
use purrfessor::backends::MockBackend;
use purrfessor::domain::Condition;
use purrfessor::gateway::{ManualClock, APOLOGY, DEFAULT_SUGGESTIONS, MEAL_PLAN_TOOLTIP};
use serde_json::{json, Value};

const PNG: &[u8] = b"\x89PNG\r\n\x1a\nfake image payload";

fn condition_key(v: &Value) -> String {
    format!("{}:{}", v["profile"].as_str().unwrap(), v["model"].as_str().unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn seventy_sessions_fill_every_condition_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..70 {
        let s = client.create_session().await;
        *counts.entry(condition_key(&s.condition)).or_default() += 1;
    }
    assert_eq!(counts.len(), 7, "{counts:?}");
    assert!(counts.values().all(|&n| n == 10), "{counts:?}");
    server.stop().await;
}

#[tokio::test]
async fn condition_override_needs_the_admin_token() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let wanted = json!({"condition": {"profile": "pet", "model": "llava_finetuned"}});

    let resp = client.create_session_with(wanted.clone(), None).await;
    assert_eq!(resp.status(), 403);
    let resp = client.create_session_with(wanted.clone(), Some("wrong")).await;
    assert_eq!(resp.status(), 403);

    let resp = client.create_session_with(wanted.clone(), Some(ADMIN_TOKEN)).await;
    assert_eq!(resp.status(), 201);
    let s = Client::session_info(resp.json().await.unwrap());
    assert_eq!(s.condition, wanted["condition"]);

    // Overrides do not consume draws from the randomization sequence.
    assert_eq!(server.state.sessions.draws(), 0);

    let bad = json!({"condition": {"profile": "pet", "model": "baseline_chatgpt"}});
    let resp = client.create_session_with(bad, Some(ADMIN_TOKEN)).await;
    assert_eq!(resp.status(), 422);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "invalid_condition");
    server.stop().await;
}

#[tokio::test]
async fn requests_need_a_valid_token() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let resp = client.http.get(client.url("/api/ui-config")).send().await.unwrap();
    assert_eq!(resp.status(), 401);
    let resp = client.get("not-a-token", "/api/sessions/current").await;
    assert_eq!(resp.status(), 401);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "unauthorized");

    let s = client.create_session().await;
    assert_eq!(s.token.len(), 64);
    // The alternative header works too.
    let resp = client.http.get(client.url("/api/sessions/current")).header("x-session-token", &s.token).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    server.stop().await;
}

#[tokio::test]
async fn conversations_are_private_to_their_session() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let a = client.create_session().await;
    let b = client.create_session().await;
    let conv = client.new_conversation(&a.token).await;
    client.send_text(&a.token, &conv, "What should I eat after a run?").await;

    let resp = client.get(&b.token, &format!("/api/conversations/{conv}")).await;
    assert_eq!(resp.status(), 404);
    let err = client.send(&b.token, &conv, json!({"text": "hello"})).await.unwrap_err();
    assert_eq!(err.0, 404);
    let resp = client.get(&a.token, "/api/conversations/does-not-exist").await;
    assert_eq!(resp.status(), 404);
    server.stop().await;
}

#[tokio::test]
async fn a_turn_streams_and_persists_both_messages() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let s = client.create_session().await;
    let conv = client.new_conversation(&s.token).await;
    let turn = client.send_text(&s.token, &conv, "Any quick high-protein breakfast ideas?").await;
    assert!(turn.error.is_none());
    assert!(turn.chunks.len() > 1, "mock streams several chunks");
    let done = turn.done.clone().unwrap();
    assert_eq!(done["text"].as_str().unwrap(), turn.text());
    assert_eq!(done["finish_reason"], "stop");

    let c = client.conversation(&s.token, &conv).await;
    let messages = c["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0]["role"], "user");
    assert_eq!(messages[1]["role"], "assistant");
    assert_eq!(messages[1]["text"].as_str().unwrap(), turn.text());
    assert_eq!(messages[1]["id"], done["message_id"]);
    assert!(messages[0]["seq"].as_u64().unwrap() < messages[1]["seq"].as_u64().unwrap());
    assert_eq!(c["condition"], s.condition);
    server.stop().await;
}

#[tokio::test]
async fn posting_without_a_conversation_starts_one() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let s = client.create_session().await;
    let resp =
        client.http.post(client.url("/api/messages")).bearer_auth(&s.token).json(&json!({"text": "hi"})).send().await.unwrap();
    let turn = Client::read_turn(resp, Instant::now()).await.unwrap();
    assert!(!turn.conversation_id.is_empty());
    let c = client.conversation(&s.token, &turn.conversation_id).await;
    assert_eq!(c["messages"].as_array().unwrap().len(), 2);

    let empty = client.send(&s.token, &turn.conversation_id, json!({"text": "  "})).await.unwrap_err();
    assert_eq!(empty.0, 400);
    server.stop().await;
}

#[tokio::test]
async fn backend_failure_becomes_an_apology_and_an_error_turn() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerBuilder::new(dir.path())
        .mock(MockBackend::new(common::SEED).with_fault("please fail now"))
        .start()
        .await;
    let client = server.client();
    let s = client.create_session().await;
    let conv = client.new_conversation(&s.token).await;
    let turn = client.send_text(&s.token, &conv, "please fail now").await;
    assert!(turn.error.is_some());
    assert_eq!(turn.text(), APOLOGY);
    let done = turn.done.unwrap();
    assert_eq!(done["finish_reason"], "error");

    let c = client.conversation(&s.token, &conv).await;
    let messages = c["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[1]["finish_reason"], "error");
    assert_eq!(messages[1]["text"], APOLOGY);

    // The service stays up for other conversations.
    let other = client.new_conversation(&s.token).await;
    let ok = client.send_text(&s.token, &other, "What is a good snack?").await;
    assert!(ok.error.is_none());
    server.stop().await;
}

#[tokio::test]
async fn midstream_failure_keeps_partial_text() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerBuilder::new(dir.path())
        .mock(MockBackend::new(common::SEED).with_midstream_fault("break midway", 2))
        .start()
        .await;
    let client = server.client();
    let s = client.create_session().await;
    let conv = client.new_conversation(&s.token).await;
    let turn = client.send_text(&s.token, &conv, "break midway please").await;
    assert!(turn.error.is_some());
    let text = turn.text();
    assert!(text.ends_with(&format!("\n\n{APOLOGY}")), "{text:?}");
    assert!(text.len() > APOLOGY.len() + 2);
    let c = client.conversation(&s.token, &conv).await;
    assert_eq!(c["messages"][1]["text"].as_str().unwrap(), text);
    server.stop().await;
}

#[tokio::test]
async fn images_upload_as_json_or_multipart() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let s = client.create_session().await;
    let conv = client.new_conversation(&s.token).await;
    let b64 = base64::engine::general_purpose::STANDARD;

    let body = json!({"text": "What can I cook with this?", "image": {"media_type": "image/png", "data": b64.encode(PNG)}});
    let turn = client.send(&s.token, &conv, body).await.unwrap();
    assert!(turn.error.is_none());

    let form = reqwest::multipart::Form::new()
        .text("text", "And with this one?")
        .part("image", reqwest::multipart::Part::bytes(PNG.to_vec()).file_name("a.png").mime_str("image/png").unwrap());
    let resp = client
        .http
        .post(client.url(&format!("/api/conversations/{conv}/messages")))
        .bearer_auth(&s.token)
        .multipart(form)
        .send()
        .await
        .unwrap();
    let turn = Client::read_turn(resp, Instant::now()).await.unwrap();
    assert!(turn.error.is_none());

    let c = client.conversation(&s.token, &conv).await;
    let users: Vec<&Value> = c["messages"].as_array().unwrap().iter().filter(|m| m["role"] == "user").collect();
    assert_eq!(users.len(), 2);
    for m in users {
        let img = &m["image_ref"];
        assert_eq!(img["media_type"], "image/png");
        assert_eq!(img["byte_size"], PNG.len());
    }

    let gif = json!({"text": "gif", "image": {"media_type": "image/gif", "data": b64.encode(b"GIF89a")}});
    let err = client.send(&s.token, &conv, gif).await.unwrap_err();
    assert_eq!(err.0, 415);

    let big = vec![0u8; 65 * 1024];
    let too_big = json!({"text": "big", "image": {"media_type": "image/png", "data": b64.encode(&big)}});
    let err = client.send(&s.token, &conv, too_big).await.unwrap_err();
    assert_eq!(err.0, 413);
    assert_eq!(err.1["error"], "payload_too_large");
    server.stop().await;
}

#[tokio::test]
async fn ui_config_follows_the_condition() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let pet = client
        .create_session_with(json!({"condition": {"profile": "pet", "model": "gpt4"}}), Some(ADMIN_TOKEN))
        .await;
    let pet = Client::session_info(pet.json().await.unwrap());
    let bot = client
        .create_session_with(json!({"condition": {"profile": "bot", "model": "gpt4"}}), Some(ADMIN_TOKEN))
        .await;
    let bot = Client::session_info(bot.json().await.unwrap());

    let pet_cfg: Value = client.get(&pet.token, "/api/ui-config").await.json().await.unwrap();
    let bot_cfg: Value = client.get(&bot.token, "/api/ui-config").await.json().await.unwrap();
    assert_ne!(pet_cfg["persona_display"], bot_cfg["persona_display"]);
    assert_eq!(pet_cfg["persona_display"]["display_name"], "Purrfessor");

    let suggestions: Vec<&str> = pet_cfg["suggestions"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(suggestions, DEFAULT_SUGGESTIONS);
    assert_eq!(suggestions[0], "Please take a look at my refrigerator and tell me what healthy meals I can cook!");
    assert_eq!(pet_cfg["tooltips"]["meal_plan"], MEAL_PLAN_TOOLTIP);
    for item in pet_cfg["menu"].as_array().unwrap() {
        let key = item["key"].as_str().unwrap();
        assert!(pet_cfg["tooltips"][key].is_string(), "menu item {key} has no tooltip");
    }

    assert_eq!(pet_cfg["walkthrough_done"], false);
    let resp = client.http.post(client.url("/api/sessions/current/walkthrough")).bearer_auth(&pet.token).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let pet_cfg: Value = client.get(&pet.token, "/api/ui-config").await.json().await.unwrap();
    assert_eq!(pet_cfg["walkthrough_done"], true);
    server.stop().await;
}

fn complete_answers(client_schema: &Value) -> serde_json::Map<String, Value> {
    let mut answers = serde_json::Map::new();
    for item in client_schema["items"].as_array().unwrap() {
        let id = item["id"].as_str().unwrap().to_owned();
        let v = match item["kind"].as_str().unwrap() {
            "likert" => json!(item["min"].as_i64().unwrap()),
            "coded" => item["options"][0]["label"].clone(),
            _ => json!("Purrfessor, a cat with glasses"),
        };
        answers.insert(id, v);
    }
    answers
}

#[tokio::test]
async fn questionnaires_validate_and_reject_resubmission() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let s = client.create_session().await;

    let schema: Value = client.get(&s.token, "/api/questionnaires/pre").await.json().await.unwrap();
    assert_eq!(schema["phase"], "pre");
    let mut answers = complete_answers(&schema);

    let first = answers.keys().next().unwrap().clone();
    let saved = answers.remove(&first).unwrap();
    let resp = client.post_json(&s.token, "/api/questionnaires/pre", json!({"answers": answers})).await;
    assert_eq!(resp.status(), 422);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "schema_violation");

    answers.insert(first, saved);
    answers.insert("no_such_item".into(), json!(1));
    let resp = client.post_json(&s.token, "/api/questionnaires/pre", json!({"answers": answers})).await;
    assert_eq!(resp.status(), 422);
    answers.remove("no_such_item");

    let resp = client.post_json(&s.token, "/api/questionnaires/pre", json!({"answers": answers})).await;
    assert_eq!(resp.status(), 201);
    let resp = client.post_json(&s.token, "/api/questionnaires/pre", json!({"answers": answers})).await;
    assert_eq!(resp.status(), 409);

    let post_schema: Value = client.get(&s.token, "/api/questionnaires/post").await.json().await.unwrap();
    let post = complete_answers(&post_schema);
    let resp = client.post_json(&s.token, "/api/questionnaires/post", json!({"answers": post})).await;
    assert_eq!(resp.status(), 201);
    let resp = client.post_json(&s.token, "/api/questionnaires/post", json!({"answers": post})).await;
    assert_eq!(resp.status(), 409);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "duplicate_submission");

    let resp = client.get(&s.token, "/api/questionnaires/during").await;
    assert!(resp.status().is_client_error());

    // The researcher view sees the completed participant.
    let resp = client.http.get(client.url("/api/admin/stats/scales")).header("x-admin-token", ADMIN_TOKEN).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let report: Value = resp.json().await.unwrap();
    assert_eq!(report["participants"], 1);
    server.stop().await;
}

#[tokio::test]
async fn idle_sessions_expire() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(chrono::Utc::now()));
    let server = ServerBuilder::new(dir.path()).clock(clock.clone()).idle(Duration::from_secs(3600)).start().await;
    let client = server.client();
    let s = client.create_session().await;
    clock.advance(chrono::Duration::minutes(59));
    assert_eq!(client.get(&s.token, "/api/sessions/current").await.status(), 200);
    // Activity refreshed the idle timer.
    clock.advance(chrono::Duration::minutes(59));
    assert_eq!(client.get(&s.token, "/api/sessions/current").await.status(), 200);
    clock.advance(chrono::Duration::minutes(61));
    let resp = client.get(&s.token, "/api/sessions/current").await;
    assert_eq!(resp.status(), 401);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "session_expired");
    server.stop().await;
}

#[tokio::test]
async fn sessions_and_conversations_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let s = client.create_session().await;
    let conv = client.new_conversation(&s.token).await;
    let turn = client.send_text(&s.token, &conv, "Is oatmeal a good breakfast?").await;
    let first_conditions: Vec<String> = {
        let mut v = vec![condition_key(&s.condition)];
        for _ in 0..3 {
            v.push(condition_key(&client.create_session().await.condition));
        }
        v
    };
    server.stop().await;

    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    assert_eq!(client.get(&s.token, "/api/sessions/current").await.status(), 200);
    let c = client.conversation(&s.token, &conv).await;
    assert_eq!(c["messages"][1]["text"].as_str().unwrap(), turn.text());
    assert_eq!(server.state.sessions.draws(), first_conditions.len() as u64);

    // The assignment sequence continues where it stopped.
    let fresh = tempfile::tempdir().unwrap();
    let reference = TestServer::start(fresh.path()).await;
    let rc = reference.client();
    let mut expected = Vec::new();
    for _ in 0..7 {
        expected.push(condition_key(&rc.create_session().await.condition));
    }
    assert_eq!(first_conditions[..], expected[..4]);
    for e in &expected[4..] {
        assert_eq!(&condition_key(&client.create_session().await.condition), e);
    }
    reference.stop().await;
    server.stop().await;
}

#[tokio::test]
async fn admin_export_streams_conversations() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path()).await;
    let client = server.client();
    let s = client.create_session().await;
    let conv = client.new_conversation(&s.token).await;
    client.send_text(&s.token, &conv, "Tell me about lentils").await;

    let resp = client.http.get(client.url("/api/admin/export/conversations")).send().await.unwrap();
    assert_eq!(resp.status(), 403);
    let resp = client
        .http
        .get(client.url(&format!("/api/admin/export/conversations?session_id={}", s.session_id)))
        .header("x-admin-token", ADMIN_TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let text = resp.text().await.unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l["conversation_id"] == conv.as_str()));

    let cond: Condition = serde_json::from_value(s.condition.clone()).unwrap();
    let other = Condition::ALL.iter().find(|c| **c != cond).unwrap();
    let resp = client
        .http
        .get(client.url(&format!("/api/admin/export/conversations?condition={other}")))
        .header("x-admin-token", ADMIN_TOKEN)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    assert!(resp.text().await.unwrap().trim().is_empty());
    server.stop().await;
}
