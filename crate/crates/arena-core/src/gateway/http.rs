//! Chat-completions HTTP transport.
//!
//! Requests carry the system text, then a single user message whose content
//! mixes one text part with one base64 data-URL image part per sampled frame.

use base64::Engine;
use serde_json::{json, Value};

use super::{Attempt, BackendDescriptor, GatewayError, GenerationRequest};

pub(super) async fn attempt(
    client: &reqwest::Client,
    descriptor: &BackendDescriptor,
    req: &GenerationRequest,
) -> Attempt {
    let body = match build_body(descriptor, req) {
        Ok(body) => body,
        Err(err) => return Attempt::Fatal(err),
    };
    let endpoint = descriptor.endpoint.as_deref().expect("validated at pool build");
    let mut builder = client.post(endpoint).json(&body);
    if let Some(env_name) = &descriptor.api_key_env {
        if let Ok(key) = std::env::var(env_name) {
            builder = builder.bearer_auth(key);
        }
    }

    let response = match builder.send().await {
        Ok(r) => r,
        Err(e) if e.is_timeout() => return Attempt::Timeout,
        Err(e) => return Attempt::Unavailable(e.to_string()),
    };

    let status = response.status();
    if status.as_u16() == 429 {
        return Attempt::RateLimited;
    }
    if status.is_server_error() {
        return Attempt::Unavailable(format!("status {status}"));
    }
    if !status.is_success() {
        return Attempt::Fatal(GatewayError::BackendUnavailable {
            task_id: req.task_id.clone(),
            model_id: descriptor.model_id.clone(),
            detail: format!("status {status}"),
        });
    }

    let value: Value = match response.json().await {
        Ok(v) => v,
        Err(e) if e.is_timeout() => return Attempt::Timeout,
        Err(e) => {
            return Attempt::Fatal(GatewayError::MalformedResponse {
                task_id: req.task_id.clone(),
                model_id: descriptor.model_id.clone(),
                detail: format!("body is not JSON: {e}"),
            })
        }
    };
    match extract_text(&value) {
        Some(text) => Attempt::Ok(text),
        None => Attempt::Fatal(GatewayError::MalformedResponse {
            task_id: req.task_id.clone(),
            model_id: descriptor.model_id.clone(),
            detail: "missing choices[0].message.content".into(),
        }),
    }
}

fn build_body(descriptor: &BackendDescriptor, req: &GenerationRequest) -> Result<Value, GatewayError> {
    let mut content = vec![json!({"type": "text", "text": req.user_text_with_subtitles()})];
    for frame in &req.frames {
        let bytes = std::fs::read(frame).map_err(|source| GatewayError::FrameIo {
            task_id: req.task_id.clone(),
            path: frame.display().to_string(),
            source,
        })?;
        let encoded = base64::engine::general_purpose::STANDARD.encode(&bytes);
        let mime = match frame.extension().and_then(|e| e.to_str()) {
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            _ => "image/jpeg",
        };
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:{mime};base64,{encoded}")}
        }));
    }
    Ok(json!({
        "model": descriptor.model_id,
        "messages": [
            {"role": "system", "content": req.system_text},
            {"role": "user", "content": content}
        ],
        "max_tokens": descriptor.params.max_output_tokens,
        "temperature": descriptor.params.temperature,
    }))
}

fn extract_text(value: &Value) -> Option<String> {
    let content = value.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let joined: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if joined.is_empty() {
                None
            } else {
                Some(joined.join(""))
            }
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_carries_text_then_frames() {
        let tmp = tempfile::tempdir().unwrap();
        let frame = tmp.path().join("f0.jpg");
        std::fs::write(&frame, b"jpegbytes").unwrap();
        let descriptor = BackendDescriptor {
            kind: super::super::BackendKind::HttpChat,
            endpoint: Some("http://localhost/v1".into()),
            ..BackendDescriptor::echo("m")
        };
        let mut req = GenerationRequest::text_only("t", "sys", "user");
        req.frames = vec![frame];
        req.subtitles = Some("subs".into());
        let body = build_body(&descriptor, &req).unwrap();
        assert_eq!(body["messages"][0]["role"], "system");
        let content = body["messages"][1]["content"].as_array().unwrap();
        assert_eq!(content.len(), 2);
        assert_eq!(content[0]["text"].as_str().unwrap(), "user\n\nSUBTITLES:\nsubs");
        let url = content[1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/jpeg;base64,"));
        assert_eq!(body["max_tokens"], 4096);
    }

    #[test]
    fn extract_handles_string_and_parts() {
        let s = json!({"choices": [{"message": {"content": "hello"}}]});
        assert_eq!(extract_text(&s).unwrap(), "hello");
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(extract_text(&parts).unwrap(), "ab");
        let bad = json!({"choices": []});
        assert!(extract_text(&bad).is_none());
    }
}
