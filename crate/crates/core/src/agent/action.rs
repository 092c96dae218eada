use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const BLOCK_OPEN: &str = "<<<action";
pub const BLOCK_CLOSE: &str = ">>>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    ToolCall {
        name: String,
        arguments: Value,
    },
    AddResource {
        resource: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        replace: Option<usize>,
    },
    FinalAnswer,
    Malformed {
        raw: String,
        reason: String,
    },
}

impl Action {
    fn malformed(raw: &str, reason: impl Into<String>) -> Self {
        Action::Malformed { raw: raw.to_owned(), reason: reason.into() }
    }
}

/// Splits model output into thought and action. Tool names are fixed at
/// construction so unknown actions are caught before execution.
#[derive(Debug, Clone)]
pub struct ActionParser {
    tools: Vec<String>,
}

impl ActionParser {
    pub fn new<S: Into<String>>(tools: impl IntoIterator<Item = S>) -> Self {
        Self { tools: tools.into_iter().map(Into::into).collect() }
    }

    pub fn parse(&self, output: &str) -> (String, Action) {
        let Some(open) = output.find(BLOCK_OPEN) else {
            return (output.trim().to_owned(), Action::malformed(output, "no action block found"));
        };
        let thought = output[..open].trim().to_owned();
        let body_start = open + BLOCK_OPEN.len();
        let body = &output[body_start..];
        let raw = match body.find(BLOCK_CLOSE) {
            Some(end) => &output[open..body_start + end + BLOCK_CLOSE.len()],
            None => &output[open..],
        };

        let mut stream = serde_json::Deserializer::from_str(body).into_iter::<Value>();
        let value = match stream.next() {
            Some(Ok(v)) => v,
            Some(Err(e)) if e.is_eof() && !body.contains(BLOCK_CLOSE) => {
                return (thought, Action::malformed(raw, "unterminated action block"));
            }
            _ => return (thought, Action::malformed(raw, "invalid JSON in action block")),
        };
        let rest = &body[stream.byte_offset()..];
        if !rest.trim_start().starts_with(BLOCK_CLOSE) {
            let reason = if rest.contains(BLOCK_CLOSE) {
                "unexpected text after JSON in action block"
            } else {
                "unterminated action block"
            };
            return (thought, Action::malformed(raw, reason));
        }
        (thought, self.classify(raw, value))
    }

    fn classify(&self, raw: &str, value: Value) -> Action {
        let Value::Object(mut map) = value else {
            return Action::malformed(raw, "action block must contain a JSON object");
        };
        let name = match map.remove("action") {
            Some(Value::String(s)) => s,
            _ => return Action::malformed(raw, "action block needs a string \"action\" field"),
        };
        match name.as_str() {
            "final_answer" => Action::FinalAnswer,
            "add_resource" => {
                let resource = match map.remove("resource") {
                    Some(r @ Value::Object(_)) => r,
                    _ => return Action::malformed(raw, "add_resource needs a \"resource\" object"),
                };
                let replace = match map.remove("replace") {
                    None | Some(Value::Null) => None,
                    Some(Value::Number(n)) => match n.as_u64() {
                        Some(k) if k >= 1 => Some(k as usize),
                        _ => return Action::malformed(raw, "replace must be a positive ordinal"),
                    },
                    Some(_) => return Action::malformed(raw, "replace must be a positive ordinal"),
                };
                Action::AddResource { resource, replace }
            }
            tool if self.tools.iter().any(|t| t == tool) => {
                Action::ToolCall { name: name.clone(), arguments: Value::Object(std::mem::take(&mut map)) }
            }
            other => Action::malformed(raw, format!("unknown action `{other}`")),
        }
    }
}

/// Parses with the default tool set (`search`).
pub fn parse_action(output: &str) -> (String, Action) {
    ActionParser::new(["search"]).parse(output)
}

/// Renders an action back into block syntax.
pub fn render_action(action: &Action) -> String {
    let mut map = Map::new();
    match action {
        Action::ToolCall { name, arguments } => {
            map.insert("action".into(), Value::String(name.clone()));
            if let Value::Object(args) = arguments {
                map.extend(args.clone());
            }
        }
        Action::AddResource { resource, replace } => {
            map.insert("action".into(), "add_resource".into());
            map.insert("resource".into(), resource.clone());
            if let Some(k) = replace {
                map.insert("replace".into(), (*k).into());
            }
        }
        Action::FinalAnswer => {
            map.insert("action".into(), "final_answer".into());
        }
        Action::Malformed { raw, .. } => return raw.clone(),
    }
    format!("{BLOCK_OPEN} {} {BLOCK_CLOSE}", Value::Object(map))
}
