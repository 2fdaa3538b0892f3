#include "lexeval/elicit.hpp"

#include <array>
#include <cctype>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using nlohmann::json;

namespace lexeval {

namespace {

const char* field_name(AnswerSchema schema) {
  switch (schema) {
    case AnswerSchema::Covered: return "covered";
    case AnswerSchema::Punishable: return "punishable";
    case AnswerSchema::Present: return "present";
    case AnswerSchema::Spans: return "spans";
    case AnswerSchema::Targets: return "targets";
    case AnswerSchema::Analysis: return "analysis";
  }
  return "";
}

std::optional<StructuredAnswer> try_parse(const std::string& text, AnswerSchema schema) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
  if (!doc.is_object()) return std::nullopt;
  auto it = doc.find(field_name(schema));
  if (it == doc.end()) return std::nullopt;

  StructuredAnswer answer;
  answer.schema = schema;
  switch (schema) {
    case AnswerSchema::Covered:
    case AnswerSchema::Punishable:
    case AnswerSchema::Present:
      if (!it->is_boolean()) return std::nullopt;
      answer.decision = it->get<bool>();
      break;
    case AnswerSchema::Spans:
    case AnswerSchema::Targets:
      if (it->is_string()) {
        answer.items.push_back(it->get<std::string>());
      } else if (it->is_array()) {
        for (const auto& element : *it) {
          if (!element.is_string()) return std::nullopt;
          answer.items.push_back(element.get<std::string>());
        }
      } else {
        return std::nullopt;
      }
      break;
    case AnswerSchema::Analysis:
      if (!it->is_string()) return std::nullopt;
      answer.analysis = it->get<std::string>();
      break;
  }
  return answer;
}

// Drops ``` fence lines wholesale; everything between them survives verbatim.
std::string repair_strip_fence(const std::string& text) {
  if (text.find("```") == std::string::npos) return text;
  std::string out;
  bool dropped = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::size_t end = nl == std::string::npos ? text.size() : nl;
    std::string_view line(text.data() + start, end - start);
    if (starts_with(trim(line), "```")) {
      dropped = true;
    } else {
      out.append(line);
      if (nl != std::string::npos) out += '\n';
    }
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return dropped ? out : text;
}

// Cuts to the outermost brace (or, failing that, bracket) pair. Removing
// nothing but whitespace does not count as a repair.
std::string repair_trim_prose(const std::string& text) {
  auto cut = [&](char open, char close) -> std::optional<std::string> {
    std::size_t first = text.find(open);
    std::size_t last = text.rfind(close);
    if (first == std::string::npos || last == std::string::npos || last <= first) {
      return std::nullopt;
    }
    bool removed_prose = false;
    for (std::size_t i = 0; i < first && !removed_prose; ++i) {
      removed_prose = !std::isspace(static_cast<unsigned char>(text[i]));
    }
    for (std::size_t i = last + 1; i < text.size() && !removed_prose; ++i) {
      removed_prose = !std::isspace(static_cast<unsigned char>(text[i]));
    }
    if (!removed_prose) return std::nullopt;
    return text.substr(first, last - first + 1);
  };
  if (auto repaired = cut('{', '}')) return *repaired;
  if (text.find('{') == std::string::npos) {
    if (auto repaired = cut('[', ']')) return *repaired;
  }
  return text;
}

std::string repair_drop_trailing_comma(const std::string& text) {
  std::string out;
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_string) {
      out += ch;
      if (ch == '\\' && i + 1 < text.size()) {
        out += text[++i];
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
      out += ch;
      continue;
    }
    if (ch == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;  // drop it
    }
    out += ch;
  }
  return out;
}

std::string repair_single_quotes(const std::string& text) {
  std::string out;
  enum { Outside, InDouble, InSingle } state = Outside;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    switch (state) {
      case Outside:
        if (ch == '\'') {
          state = InSingle;
          out += '"';
        } else {
          if (ch == '"') state = InDouble;
          out += ch;
        }
        break;
      case InDouble:
        out += ch;
        if (ch == '\\' && i + 1 < text.size()) {
          out += text[++i];
        } else if (ch == '"') {
          state = Outside;
        }
        break;
      case InSingle:
        if (ch == '\\' && i + 1 < text.size() && text[i + 1] == '\'') {
          out += '\'';  // \' loses its escape under double quoting
          ++i;
        } else if (ch == '\'') {
          state = Outside;
          out += '"';
        } else if (ch == '"') {
          out += "\\\"";
        } else {
          out += ch;
          if (ch == '\\' && i + 1 < text.size()) out += text[++i];
        }
        break;
    }
  }
  return out;
}

// Normalizes yes/no-like field values (quoted or bare) to JSON booleans.
std::string repair_bool_words(const std::string& text) {
  std::string out;
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_string) {
      out += ch;
      if (ch == '\\' && i + 1 < text.size()) {
        out += text[++i];
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
      out += ch;
      continue;
    }
    out += ch;
    if (ch != ':') continue;

    std::size_t j = i + 1;
    std::string whitespace;
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) {
      whitespace += text[j++];
    }
    std::string token;
    std::size_t end = j;
    if (j < text.size() && text[j] == '"') {
      std::size_t k = j + 1;
      while (k < text.size() && text[k] != '"') {
        if (text[k] == '\\') ++k;
        ++k;
      }
      if (k >= text.size()) continue;  // unterminated string; not ours to fix
      token = text.substr(j + 1, k - j - 1);
      end = k + 1;
    } else {
      std::size_t k = j;
      while (k < text.size() && std::isalpha(static_cast<unsigned char>(text[k]))) ++k;
      token = text.substr(j, k - j);
      end = k;
    }
    if (token.empty()) continue;
    std::string folded = case_fold(token);
    const char* replacement = nullptr;
    if (folded == "yes" || folded == "ja" || folded == "true") replacement = "true";
    if (folded == "no" || folded == "nein" || folded == "false") replacement = "false";
    if (replacement) {
      out += whitespace;
      out += replacement;
      i = end - 1;
    }
  }
  return out;
}

// Last resort: the whole reply is the answer, just not as JSON.
std::string repair_bare_answer(const std::string& text, AnswerSchema schema) {
  std::string folded = case_fold(trim(text));
  while (!folded.empty() &&
         (folded.back() == '.' || folded.back() == '!' || folded.back() == ',')) {
    folded.pop_back();
  }
  folded = std::string(trim(folded));

  const char* field = nullptr;
  switch (schema) {
    case AnswerSchema::Covered: field = "covered"; break;
    case AnswerSchema::Punishable: field = "punishable"; break;
    case AnswerSchema::Present: field = "present"; break;
    default: break;
  }
  if (field != nullptr) {
    static const std::array<std::string_view, 8> kYes = {
        "yes", "ja", "true", "relevant", "punishable", "strafbar", "covered", "present"};
    static const std::array<std::string_view, 10> kNo = {
        "no",          "nein",           "false",        "not relevant", "nicht relevant",
        "not punishable", "nicht strafbar", "not covered", "not present",  "none"};
    for (std::string_view word : kYes) {
      if (folded == word) return std::string("{\"") + field + "\": true}";
    }
    for (std::string_view word : kNo) {
      if (folded == word) return std::string("{\"") + field + "\": false}";
    }
    return text;
  }

  if (schema == AnswerSchema::Spans || schema == AnswerSchema::Targets) {
    std::string_view trimmed = trim(text);
    if (!trimmed.empty() && trimmed.front() == '[') {
      try {
        json arr = json::parse(trimmed);
        if (arr.is_array()) {
          json doc;
          doc[field_name(schema)] = arr;
          return doc.dump();
        }
      } catch (const json::parse_error&) {
      }
    }
    if (schema == AnswerSchema::Targets && folded == "unclear") {
      return R"({"targets": ["Unclear"]})";
    }
  }
  return text;
}

}  // namespace

std::string serialize_answer(const StructuredAnswer& answer) {
  json doc;
  switch (answer.schema) {
    case AnswerSchema::Covered:
    case AnswerSchema::Punishable:
    case AnswerSchema::Present:
      doc[field_name(answer.schema)] = answer.decision;
      break;
    case AnswerSchema::Spans:
    case AnswerSchema::Targets:
      doc[field_name(answer.schema)] = answer.items;
      break;
    case AnswerSchema::Analysis:
      doc[field_name(answer.schema)] = answer.analysis;
      break;
  }
  return doc.dump();
}

const std::vector<std::string>& repair_rule_names() {
  static const std::vector<std::string> kNames = {
      "strip_fence", "trim_prose", "drop_trailing_comma",
      "single_quotes", "bool_words", "bare_answer"};
  return kNames;
}

ExtractResult extract_json(const std::string& text, AnswerSchema schema) {
  if (auto answer = try_parse(text, schema)) return {std::move(answer), {}};

  using Rule = std::function<std::string(const std::string&)>;
  const std::array<Rule, 6> rules = {
      repair_strip_fence,
      repair_trim_prose,
      repair_drop_trailing_comma,
      repair_single_quotes,
      repair_bool_words,
      [schema](const std::string& t) { return repair_bare_answer(t, schema); },
  };

  std::string candidate = text;
  std::vector<std::string> applied;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    std::string repaired = rules[i](candidate);
    if (repaired == candidate) continue;  // rule had nothing to do
    candidate = std::move(repaired);
    applied.push_back(repair_rule_names()[i]);
    if (auto answer = try_parse(candidate, schema)) return {std::move(answer), applied};
  }
  return {std::nullopt, applied};
}

// --- RefusalDetector --------------------------------------------------------

RefusalDetector::RefusalDetector(const AssetStore& store) {
  const std::string& content = store.get("elicit/refusal-patterns.txt");
  std::istringstream lines(content);
  std::string line;
  bool first = true;
  while (std::getline(lines, line)) {
    std::string_view view = trim(line);
    if (first) {
      first = false;
      if (starts_with(view, "# refusal-patterns ")) {
        version_ = std::string(view.substr(std::string_view("# refusal-patterns ").size()));
        continue;
      }
      version_ = "unversioned";
    }
    if (view.empty() || view.front() == '#') continue;
    patterns_.push_back(case_fold(view));
  }
  if (patterns_.empty()) throw DataError("refusal pattern asset has no patterns");
}

RefusalDetector RefusalDetector::from_patterns(std::vector<std::string> patterns) {
  RefusalDetector detector;
  detector.version_ = "inline";
  for (std::string& pattern : patterns) detector.patterns_.push_back(case_fold(pattern));
  if (detector.patterns_.empty()) throw DataError("refusal pattern list is empty");
  return detector;
}

bool RefusalDetector::matches(const std::string& text) const {
  std::string folded = case_fold(text);
  for (const std::string& pattern : patterns_) {
    if (folded.find(pattern) != std::string::npos) return true;
  }
  return false;
}

bool RefusalDetector::is_refusal(const CompletionResponse& response) const {
  return response.finish_reason == FinishReason::Filter || matches(response.text);
}

// --- run_step ---------------------------------------------------------------

bool transcript_is_consistent(const StepTranscript& transcript) {
  int terminal = (transcript.parsed.has_value() ? 1 : 0) + (transcript.refusal ? 1 : 0) +
                 (transcript.manual_review ? 1 : 0);
  return terminal == 1;
}

StepTranscript run_step(ElicitContext& ctx, const std::string& post_id, const StepSpec& step,
                        int paraphrase_index, const Bindings& bindings) {
  StepTranscript transcript;
  transcript.step_id = step.step_id;
  transcript.paraphrase_index = paraphrase_index;

  std::string prompt = render_step(step, paraphrase_index, bindings, ctx.store);
  std::string tag_base =
      post_id + "/" + step.step_id + "/p" + std::to_string(paraphrase_index);

  CompletionRequest free_request;
  free_request.model_id = ctx.model_id;
  free_request.decoding = ctx.decoding;
  free_request.messages = {{Role::User, prompt}};
  free_request.request_tag = tag_base + "/free";
  CompletionResponse free_response = ctx.service.complete(post_id, free_request);
  transcript.free_text = free_response.text;
  if (ctx.refusals.is_refusal(free_response)) {
    transcript.refusal = true;
    return transcript;  // no second completion for a refused step
  }

  std::string instruction = ctx.store.get("elicit/format-instruction.txt");
  static const std::string kSchemaSlot = "{SCHEMA}";
  if (std::size_t pos = instruction.find(kSchemaSlot); pos != std::string::npos) {
    instruction.replace(pos, kSchemaSlot.size(), schema_skeleton(step.answer_schema));
  }

  CompletionRequest format_request = free_request;
  format_request.messages.push_back({Role::Assistant, transcript.free_text});
  format_request.messages.push_back({Role::User, instruction});
  format_request.request_tag = tag_base + "/format";
  CompletionResponse format_response = ctx.service.complete(post_id, format_request);
  transcript.formatted_text = format_response.text;
  if (ctx.refusals.is_refusal(format_response)) {
    transcript.refusal = true;
    return transcript;
  }

  ExtractResult result = extract_json(transcript.formatted_text, step.answer_schema);
  transcript.repairs = std::move(result.repairs);
  if (!result.answer) {
    transcript.manual_review = true;
    return transcript;
  }
  transcript.parsed = std::move(result.answer);

  if (step.answer_schema == AnswerSchema::Spans) {
    auto statement = bindings.find("STATEMENT");
    if (statement != bindings.end()) {
      for (const std::string& span : transcript.parsed->items) {
        if (statement->second.find(span) == std::string::npos) {
          transcript.non_span_mentions.push_back(span);
        }
      }
    }
  }
  return transcript;
}

}  // namespace lexeval
