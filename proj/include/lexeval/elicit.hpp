#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lexeval/assets.hpp"
#include "lexeval/backend.hpp"
#include "lexeval/chainspec.hpp"

namespace lexeval {

// One parsed model answer, tagged by the schema it conforms to.
struct StructuredAnswer {
  AnswerSchema schema = AnswerSchema::Punishable;
  bool decision = false;            // Covered / Punishable / Present
  std::vector<std::string> items;   // Spans / Targets
  std::string analysis;             // Analysis

  bool operator==(const StructuredAnswer&) const = default;
};

// Canonical JSON for a parsed answer; extract_json on this string is a no-op
// round trip (same answer, zero repairs).
std::string serialize_answer(const StructuredAnswer& answer);

struct ExtractResult {
  std::optional<StructuredAnswer> answer;  // empty on failure
  std::vector<std::string> repairs;        // rule names in application order
};

// Pulls a schema-conforming answer out of model output, applying the bounded
// ordered repair set where the raw text does not parse. Failure is a result,
// not an exception.
ExtractResult extract_json(const std::string& text, AnswerSchema schema);

// Names of the repair rules, in pipeline order.
const std::vector<std::string>& repair_rule_names();

// Substring matcher over a versioned pattern asset; a filtered finish reason
// counts as a refusal regardless of text.
class RefusalDetector {
 public:
  explicit RefusalDetector(const AssetStore& store);
  static RefusalDetector from_patterns(std::vector<std::string> patterns);

  bool matches(const std::string& text) const;
  bool is_refusal(const CompletionResponse& response) const;
  const std::string& version() const { return version_; }

 private:
  RefusalDetector() = default;
  std::vector<std::string> patterns_;  // case-folded
  std::string version_;
};

struct StepTranscript {
  std::string step_id;
  int paraphrase_index = 0;
  std::string free_text;
  std::string formatted_text;
  std::optional<StructuredAnswer> parsed;
  std::vector<std::string> repairs;
  bool refusal = false;
  bool manual_review = false;
  // spans the model reported but which do not occur verbatim in the statement
  std::vector<std::string> non_span_mentions;
};

// Exactly one terminal state: parsed, refusal, or manual_review.
bool transcript_is_consistent(const StepTranscript& transcript);

struct ElicitContext {
  CompletionService& service;
  const AssetStore& store;
  const RefusalDetector& refusals;
  std::string model_id;
  DecodingParams decoding;
};

// The two-step elicitation: free-text answer first, then a reformat request.
// A refusal at step one skips step two; call count is always 1 or 2.
StepTranscript run_step(ElicitContext& ctx, const std::string& post_id, const StepSpec& step,
                        int paraphrase_index, const Bindings& bindings);

}  // namespace lexeval
