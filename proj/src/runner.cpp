#include "lexeval/runner.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

#include "lexeval/elicit.hpp"
#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using nlohmann::json;

namespace lexeval {

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kVerdictsFile = "verdicts.jsonl";
constexpr const char* kFrFile = "fr_decisions.jsonl";
constexpr const char* kStagesFile = "stages.jsonl";
constexpr const char* kExtractionsFile = "extractions.jsonl";
constexpr const char* kManualFile = "manual_review.jsonl";
constexpr const char* kEpoch = "1970-01-01T00:00:00Z";

json decoding_to_json(const DecodingParams& decoding) {
  json j{{"temperature", decoding.temperature}, {"max_tokens", decoding.max_tokens}};
  if (decoding.seed) j["seed"] = *decoding.seed;
  return j;
}

DecodingParams decoding_from_json(const json& j) {
  DecodingParams decoding;
  decoding.temperature = j.at("temperature").get<double>();
  decoding.max_tokens = j.at("max_tokens").get<int>();
  if (j.contains("seed")) decoding.seed = j.at("seed").get<long>();
  return decoding;
}

// The id commits to every input; created_at deliberately stays out so a
// resumed run keeps its identity.
std::string compute_run_id(const RunManifest& m) {
  json j{{"approaches", m.approach_ids},
         {"assets", m.assets_fingerprint},
         {"backend", m.backend_fingerprint},
         {"corpus", m.corpus_fingerprint},
         {"decoding", decoding_to_json(m.decoding)},
         {"model", m.model_id},
         {"paraphrase_limit", m.paraphrase_limit},
         {"tool", m.tool_version}};
  return sha256_hex(j.dump()).substr(0, 12);
}

json parse_record(const std::filesystem::path& path, int line_no, std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw DataError("corrupted record at " + path.string() + ":" + std::to_string(line_no));
  }
  return j;
}

void append_jsonl(std::ofstream& out, const json& j) { out << j.dump() << "\n"; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

bool is_probe_id(std::string_view approach_id) {
  return approach_id.find('@') != std::string_view::npos;
}

// "fr-title" -> "title"; used to pair runs for the contradiction check.
std::string conditioning_flavor(std::string_view approach_id) {
  std::size_t dash = approach_id.rfind('-');
  if (dash == std::string_view::npos) return std::string(approach_id);
  return std::string(approach_id.substr(dash + 1));
}

void write_records(const RunData& data, const std::filesystem::path& run_dir) {
  auto verdicts = open_out(run_dir / kVerdictsFile);
  for (const Verdict& v : data.verdicts) verdicts << verdict_to_json(v) << "\n";

  auto fr = open_out(run_dir / kFrFile);
  for (const FrRecord& r : data.fr_decisions) {
    append_jsonl(fr, json{{"post_id", r.post_id},
                          {"approach_id", r.approach_id},
                          {"paraphrase_index", r.paraphrase_index},
                          {"covered", r.covered},
                          {"refusal_tainted", r.refusal_tainted}});
  }

  auto stages = open_out(run_dir / kStagesFile);
  for (const StageDecisionSet& s : data.stage_sets) {
    json groups = json::object();
    for (const auto& [group, present] : s.groups) groups[std::string(to_string(group))] = present;
    json conducts = json::object();
    for (const auto& [conduct, present] : s.conducts) {
      conducts[std::string(to_string(conduct))] = present;
    }
    append_jsonl(stages, json{{"post_id", s.post_id},
                              {"approach_id", s.approach_id},
                              {"paraphrase_index", s.paraphrase_index},
                              {"groups", groups},
                              {"conducts", conducts},
                              {"coerced", s.coerced}});
  }

  auto extractions = open_out(run_dir / kExtractionsFile);
  for (const ExtractionRecord& e : data.extractions) {
    append_jsonl(extractions, json{{"post_id", e.post_id},
                                   {"approach_id", e.approach_id},
                                   {"paraphrase_index", e.paraphrase_index},
                                   {"spans", e.spans},
                                   {"targets", e.targets},
                                   {"non_span_mentions", e.non_span_mentions},
                                   {"refusal_tainted", e.refusal_tainted}});
  }

  auto manual = open_out(run_dir / kManualFile);
  for (const ManualReviewRecord& m : data.manual_reviews) {
    append_jsonl(manual, json{{"post_id", m.post_id},
                              {"approach_id", m.approach_id},
                              {"paraphrase_index", m.paraphrase_index},
                              {"step_id", m.step_id}});
  }
}

// Resume a directory that belongs to the same run (the cache survives, the
// outputs are rebuilt); refuse anything that looks like somebody else's data.
void prepare_run_dir(const std::filesystem::path& dir, const RunManifest& manifest) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw DataError("output path " + dir.string() + " exists and is not a directory");
  }
  if (fs::exists(dir / kManifestFile)) {
    RunManifest existing = load_manifest(dir);
    if (existing.run_id != manifest.run_id) {
      throw DataError("run directory " + dir.string() + " belongs to run " + existing.run_id +
                      ", not " + manifest.run_id + " (inputs differ); refusing to overwrite");
    }
    fs::remove_all(dir / "transcripts");
    for (const char* name : {kVerdictsFile, kFrFile, kStagesFile, kExtractionsFile, kManualFile}) {
      fs::remove(dir / name);
    }
  } else if (fs::exists(dir) && !fs::is_empty(dir)) {
    throw DataError("output directory " + dir.string() +
                    " is not empty and holds no run manifest; refusing to overwrite");
  } else {
    fs::create_directories(dir);
  }
}

// One chain over one post and paraphrase. Steps run in order; every answer is
// bound for later {ANSWER:<step>} slots whether or not it parsed. A step sent
// to manual review excludes the whole run from the record files.
void run_chain_once(ElicitContext& ctx, const ChainSpec& chain, const Post& post, int paraphrase,
                    RunData& out) {
  Bindings bindings{{"STATEMENT", post.text}};
  if (chain.statute_id) {
    if (const StatuteRegistryEntry* entry = find_statute(*chain.statute_id)) {
      bindings["STATUTE_REF"] = entry->display_ref;
    }
  }

  std::vector<StepTranscript> steps;
  bool excluded = false;
  for (const StepSpec& step : chain.steps) {
    StepTranscript t = run_step(ctx, post.id, step, paraphrase, bindings);
    bindings["ANSWER:" + step.step_id] = t.free_text;
    if (t.manual_review) {
      out.manual_reviews.push_back({post.id, chain.approach_id, paraphrase, step.step_id});
      excluded = true;
    }
    steps.push_back(std::move(t));
  }
  if (excluded) return;

  const StepSpec& first = chain.steps.front();

  if (first.answer_schema == AnswerSchema::Covered) {
    const StepTranscript& t = steps.front();
    bool covered = t.parsed ? t.parsed->decision : false;
    out.fr_decisions.push_back({post.id, chain.approach_id, paraphrase, covered, t.refusal});
    return;
  }

  if (first.answer_schema == AnswerSchema::Spans || first.answer_schema == AnswerSchema::Targets) {
    ExtractionRecord rec;
    rec.post_id = post.id;
    rec.approach_id = chain.approach_id;
    rec.paraphrase_index = paraphrase;
    for (std::size_t i = 0; i < chain.steps.size(); ++i) {
      const StepSpec& spec = chain.steps[i];
      const StepTranscript& t = steps[i];
      if (t.parsed && spec.answer_schema == AnswerSchema::Spans) {
        rec.spans = t.parsed->items;
        rec.non_span_mentions = t.non_span_mentions;
      } else if (t.parsed && spec.answer_schema == AnswerSchema::Targets) {
        rec.targets = t.parsed->items;
      }
      rec.refusal_tainted = rec.refusal_tainted || t.refusal;
    }
    out.extractions.push_back(std::move(rec));
    return;
  }

  bool staged = std::any_of(chain.steps.begin(), chain.steps.end(),
                            [](const StepSpec& s) { return s.group || s.conduct; });
  if (staged) {
    StageDecisionSet set;
    set.post_id = post.id;
    set.approach_id = chain.approach_id;
    set.paraphrase_index = paraphrase;
    for (std::size_t i = 0; i < chain.steps.size(); ++i) {
      const StepSpec& spec = chain.steps[i];
      const StepTranscript& t = steps[i];
      bool yes = t.parsed ? t.parsed->decision : false;
      if (spec.group) {
        set.groups[*spec.group] = yes;
      } else if (spec.conduct) {
        set.conducts[*spec.conduct] = yes;
      }
      if (t.refusal) set.coerced.push_back(spec.step_id);
    }
    out.verdicts.push_back(aggregate_stages(set));
    out.stage_sets.push_back(std::move(set));
    return;
  }

  // single-step binary punishability, end-to-end or probe
  const StepTranscript& t = steps.back();
  StructuredAnswer answer;
  answer.schema = AnswerSchema::Punishable;
  if (t.parsed) answer = *t.parsed;
  VerdictBasis basis = is_probe_id(chain.approach_id) ? VerdictBasis::Probe : VerdictBasis::EndToEnd;
  out.verdicts.push_back(
      binary_verdict(answer, basis, post.id, chain.approach_id, paraphrase, t.refusal));
}

RunData execute_run(const RunOptions& options, const AssetStore& store,
                    const std::vector<ChainSpec>& chains) {
  if (chains.empty()) throw UsageError("no approaches selected");
  if (options.paraphrase_limit < 0) throw UsageError("paraphrase limit cannot be negative");
  for (const ChainSpec& chain : chains) {
    if (options.paraphrase_limit > chain.paraphrase_count) {
      throw UsageError("paraphrase limit " + std::to_string(options.paraphrase_limit) +
                       " exceeds the " + std::to_string(chain.paraphrase_count) +
                       " paraphrases defined for '" + chain.approach_id + "'");
    }
  }

  Corpus corpus = load_corpus(options.corpus_path);
  BackendConfig config = load_backend_config(options.backend_config_path);
  bool deterministic = config.kind == "mock";

  RunManifest manifest;
  for (const ChainSpec& chain : chains) manifest.approach_ids.push_back(chain.approach_id);
  manifest.model_id = config.model_id;
  manifest.decoding = config.decoding;
  manifest.backend_fingerprint = config.fingerprint;
  manifest.corpus_fingerprint = sha256_hex(read_file(options.corpus_path));
  manifest.assets_fingerprint = store.fingerprint();
  manifest.paraphrase_limit = options.paraphrase_limit;
  manifest.run_id = compute_run_id(manifest);
  manifest.created_at = deterministic ? kEpoch : utc_timestamp();

  prepare_run_dir(options.out_dir, manifest);
  save_manifest(manifest, options.out_dir);

  CacheStore cache(options.cache_path ? *options.cache_path : options.out_dir / "cache.jsonl");
  TranscriptStore transcripts(options.out_dir);
  std::unique_ptr<Backend> backend = make_backend(config);
  CompletionService service(*backend, &cache, &transcripts, {.deterministic = deterministic});
  RefusalDetector refusals(store);
  ElicitContext ctx{service, store, refusals, config.model_id, config.decoding};

  RunData data;
  data.manifest = manifest;
  for (const ChainSpec& chain : chains) {
    int paraphrases = chain.paraphrase_count;
    if (options.paraphrase_limit > 0) paraphrases = std::min(paraphrases, options.paraphrase_limit);
    for (const Post& post : corpus.posts) {
      for (int p = 0; p < paraphrases; ++p) {
        run_chain_once(ctx, chain, post, p, data);
      }
    }
  }
  write_records(data, options.out_dir);
  return data;
}

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

// Pools every paraphrase into one series with "<post>#p<i>" ids so the probe
// cells can be scored by a single agreement computation.
LabelSeries pooled_series(const std::map<int, std::vector<std::pair<std::string, bool>>>& by_p) {
  std::vector<std::pair<std::string, bool>> pairs;
  for (const auto& [p, entries] : by_p) {
    for (const auto& [id, label] : entries) {
      pairs.emplace_back(id + "#p" + std::to_string(p), label);
    }
  }
  return series_from_bools(pairs);
}

struct RateCounts {
  std::size_t present = 0;
  std::size_t tainted = 0;
  std::size_t excluded = 0;

  double refusal_rate() const {
    return present == 0 ? 0.0 : static_cast<double>(tainted) / static_cast<double>(present);
  }
  double manual_rate() const {
    std::size_t expected = present + excluded;
    return expected == 0 ? 0.0 : static_cast<double>(excluded) / static_cast<double>(expected);
  }
};

AgreementReport build_report(const RunData& data, const Corpus& corpus,
                             const std::optional<TargetLexicon>& lexicon) {
  AgreementReport report;
  report.model_id = data.manifest.model_id;

  // gold series for the two binary questions
  std::vector<std::pair<std::string, bool>> gold_punishable;
  std::vector<std::pair<std::string, bool>> gold_covered;
  for (const GoldAnnotation& g : corpus.gold) {
    if (g.punishable) gold_punishable.emplace_back(g.post_id, *g.punishable);
    if (g.fr_covered) gold_covered.emplace_back(g.post_id, *g.fr_covered);
  }

  // records keyed by approach, then paraphrase
  using SeriesMap = std::map<int, std::vector<std::pair<std::string, bool>>>;
  std::map<std::string, SeriesMap> verdict_series;
  std::map<std::string, SeriesMap> fr_series;
  std::map<std::string, RateCounts> rates;
  for (const Verdict& v : data.verdicts) {
    verdict_series[v.approach_id][v.paraphrase_index].emplace_back(v.post_id, v.punishable);
    RateCounts& r = rates[v.approach_id];
    ++r.present;
    if (v.refusal_tainted) ++r.tainted;
  }
  for (const FrRecord& f : data.fr_decisions) {
    fr_series[f.approach_id][f.paraphrase_index].emplace_back(f.post_id, f.covered);
    RateCounts& r = rates[f.approach_id];
    ++r.present;
    if (f.refusal_tainted) ++r.tainted;
  }
  for (const ExtractionRecord& e : data.extractions) {
    RateCounts& r = rates[e.approach_id];
    ++r.present;
    if (e.refusal_tainted) ++r.tainted;
  }
  for (const ManualReviewRecord& m : data.manual_reviews) {
    ++rates[m.approach_id].excluded;
    report.manual_review_items.push_back(m.post_id + "/" + m.step_id + "/p" +
                                         std::to_string(m.paraphrase_index));
  }
  std::sort(report.manual_review_items.begin(), report.manual_review_items.end());
  report.manual_review_items.erase(
      std::unique(report.manual_review_items.begin(), report.manual_review_items.end()),
      report.manual_review_items.end());

  // classification rows, registry order first, probes excluded (they get their
  // own table)
  std::vector<std::string> ordered;
  auto want = [&](const std::string& id) {
    return !is_probe_id(id) &&
           std::find(ordered.begin(), ordered.end(), id) == ordered.end() &&
           (verdict_series.contains(id) || fr_series.contains(id));
  };
  for (const std::string& id : registered_approach_ids()) {
    if (want(id)) ordered.push_back(id);
  }
  for (const auto& [id, series] : fr_series) {
    if (want(id)) ordered.push_back(id);
  }
  for (const auto& [id, series] : verdict_series) {
    if (want(id)) ordered.push_back(id);
  }

  for (const std::string& id : ordered) {
    bool fr = fr_series.contains(id);
    const SeriesMap& by_p = fr ? fr_series.at(id) : verdict_series.at(id);
    LabelSeries gold = series_from_bools(fr ? gold_covered : gold_punishable);

    ApproachScore score;
    score.approach_id = id;
    score.display_label = report_display_label(id);
    std::vector<double> f1_positives;
    std::vector<double> f1_macros;
    std::size_t n_min = 0;
    for (const auto& [p, pairs] : by_p) {
      LabelSeries pred = series_from_bools(pairs);
      Kappa k = cohen_kappa(pred, gold);
      F1Scores f = f1(pred, gold, kPositiveLabel);
      n_min = score.per_paraphrase.empty() ? k.n : std::min(n_min, k.n);
      score.per_paraphrase.push_back(k);
      f1_positives.push_back(f.positive);
      f1_macros.push_back(f.macro);
    }
    if (score.per_paraphrase.empty()) continue;  // everything went to manual review
    score.kappa = paraphrase_average(score.per_paraphrase);
    score.f1_positive = mean_of(f1_positives);
    score.f1_macro = mean_of(f1_macros);
    score.n_effective = n_min;
    score.refusal_rate = rates[id].refusal_rate();
    score.manual_review_rate = rates[id].manual_rate();
    report.approaches.push_back(std::move(score));
  }

  // target-group rows: one aggregated row per staged or extraction approach,
  // scored over the flattened (post, group) grid
  std::vector<std::pair<std::string, bool>> gold_groups;
  std::vector<std::pair<std::string, bool>> gold_conducts;
  for (const GoldAnnotation& g : corpus.gold) {
    if (g.groups) {
      for (TargetGroup group : kAllTargetGroups) {
        gold_groups.emplace_back(g.post_id + "#" + std::string(to_string(group)),
                                 g.groups->contains(group));
      }
    }
    if (g.conducts) {
      for (Conduct conduct : kAllConducts) {
        gold_conducts.emplace_back(g.post_id + "#" + std::string(to_string(conduct)),
                                   g.conducts->contains(conduct));
      }
    }
  }

  std::map<std::string, SeriesMap> group_series;
  std::map<std::string, std::map<Conduct, SeriesMap>> conduct_series;
  for (const StageDecisionSet& s : data.stage_sets) {
    for (const auto& [group, present] : s.groups) {
      group_series[s.approach_id][s.paraphrase_index].emplace_back(
          s.post_id + "#" + std::string(to_string(group)), present);
    }
    for (const auto& [conduct, present] : s.conducts) {
      conduct_series[s.approach_id][conduct][s.paraphrase_index].emplace_back(
          s.post_id + "#" + std::string(to_string(conduct)), present);
    }
  }
  if (lexicon) {
    for (const ExtractionRecord& e : data.extractions) {
      TargetMatch match = match_targets(e.targets, *lexicon);
      for (TargetGroup group : kAllTargetGroups) {
        group_series[e.approach_id][e.paraphrase_index].emplace_back(
            e.post_id + "#" + std::string(to_string(group)), match.groups.contains(group));
      }
    }
  }

  auto subtask_row = [](const std::string& label, const SeriesMap& by_p,
                        const std::vector<std::pair<std::string, bool>>& gold_pairs)
      -> std::optional<SubtaskScore> {
    if (by_p.empty() || gold_pairs.empty()) return std::nullopt;
    LabelSeries gold = series_from_bools(gold_pairs);
    SubtaskScore row;
    row.label = label;
    std::vector<Kappa> ks;
    std::vector<double> f1s;
    std::size_t n_min = 0;
    for (const auto& [p, pairs] : by_p) {
      LabelSeries pred = series_from_bools(pairs);
      Kappa k = cohen_kappa(pred, gold);
      n_min = ks.empty() ? k.n : std::min(n_min, k.n);
      ks.push_back(k);
      f1s.push_back(f1(pred, gold, kPositiveLabel).positive);
    }
    row.kappa = paraphrase_average(ks);
    row.f1_positive = mean_of(f1s);
    row.n_effective = n_min;
    return row;
  };

  for (const std::string& id : registered_approach_ids()) {
    if (auto it = group_series.find(id); it != group_series.end()) {
      if (auto row = subtask_row(report_display_label(id), it->second, gold_groups)) {
        report.group_rows.push_back(std::move(*row));
      }
    }
  }
  for (const std::string& id : registered_approach_ids()) {
    if (auto it = conduct_series.find(id); it != conduct_series.end()) {
      for (Conduct conduct : kAllConducts) {
        auto cit = it->second.find(conduct);
        if (cit == it->second.end()) continue;
        std::string label =
            report_display_label(id) + ": " + std::string(to_string(conduct));
        if (auto row = subtask_row(label, cit->second, gold_conducts)) {
          report.conduct_rows.push_back(std::move(*row));
        }
      }
    }
  }

  // contradiction between the constitutional and the statutory reading of the
  // same post, paired per paraphrase within each conditioning flavor
  for (const char* flavor : {"title", "text"}) {
    std::string fr_id = std::string("fr-") + flavor;
    std::string stat_id = std::string("stat-") + flavor;
    if (!fr_series.contains(fr_id) || !verdict_series.contains(stat_id)) continue;
    std::map<std::pair<std::string, int>, const Verdict*> stat_index;
    for (const Verdict& v : data.verdicts) {
      if (v.approach_id == stat_id) stat_index[{v.post_id, v.paraphrase_index}] = &v;
    }
    std::vector<std::pair<FrDecision, Verdict>> pairs;
    for (const FrRecord& f : data.fr_decisions) {
      if (f.approach_id != fr_id) continue;
      auto it = stat_index.find({f.post_id, f.paraphrase_index});
      if (it == stat_index.end()) continue;
      pairs.emplace_back(FrDecision{f.post_id, f.approach_id, f.covered}, *it->second);
    }
    if (pairs.empty()) continue;
    report.contradictions.push_back(
        ContradictionScore{flavor, contradiction_rate(pairs), pairs.size()});
  }

  // statute-substitution probe table; the base approach supplies the §130
  // reference column
  std::map<std::string, std::map<std::string, SeriesMap>> probe_cells;
  for (const Verdict& v : data.verdicts) {
    if (!is_probe_id(v.approach_id)) continue;
    std::size_t at = v.approach_id.find('@');
    std::string base = v.approach_id.substr(0, at);
    std::string statute = v.approach_id.substr(at + 1);
    probe_cells[base][statute][v.paraphrase_index].emplace_back(v.post_id, v.punishable);
  }
  if (!probe_cells.empty()) {
    for (auto& [base, columns] : probe_cells) {
      if (auto it = verdict_series.find(base); it != verdict_series.end()) {
        columns["§130"] = it->second;
      }
    }
    std::map<std::string, std::map<std::string, LabelSeries>> pooled;
    std::map<int, std::vector<std::pair<std::string, bool>>> gold_by_p;
    std::set<int> paraphrases_seen;
    for (const auto& [base, columns] : probe_cells) {
      for (const auto& [statute, by_p] : columns) {
        for (const auto& [p, pairs] : by_p) paraphrases_seen.insert(p);
      }
    }
    for (int p : paraphrases_seen) gold_by_p[p] = gold_punishable;
    for (const auto& [base, columns] : probe_cells) {
      for (const auto& [statute, by_p] : columns) {
        pooled[base][statute] = pooled_series(by_p);
      }
    }
    report.probe = probe_score(pooled, pooled_series(gold_by_p));
  }

  return report;
}

void write_report_files(const AgreementReport& report, const std::filesystem::path& out_dir,
                        std::optional<ReportFormat> format) {
  std::filesystem::create_directories(out_dir);
  if (!format || *format == ReportFormat::Csv) {
    write_file(out_dir / "report.csv", emit_report(report, ReportFormat::Csv));
  }
  if (!format || *format == ReportFormat::Markdown) {
    write_file(out_dir / "report.md", emit_report(report, ReportFormat::Markdown));
  }
}

}  // namespace

void save_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir) {
  json j{{"schema_version", 1},
         {"run_id", manifest.run_id},
         {"approach_ids", manifest.approach_ids},
         {"model_id", manifest.model_id},
         {"decoding", decoding_to_json(manifest.decoding)},
         {"backend_fingerprint", manifest.backend_fingerprint},
         {"corpus_fingerprint", manifest.corpus_fingerprint},
         {"assets_fingerprint", manifest.assets_fingerprint},
         {"tool_version", manifest.tool_version},
         {"created_at", manifest.created_at},
         {"paraphrase_limit", manifest.paraphrase_limit}};
  write_file(run_dir / kManifestFile, j.dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& run_dir) {
  std::filesystem::path path = run_dir / kManifestFile;
  if (!std::filesystem::exists(path)) {
    throw DataError("no run manifest at " + path.string());
  }
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw DataError("corrupted run manifest at " + path.string());
  }
  try {
    RunManifest manifest;
    manifest.run_id = j.at("run_id").get<std::string>();
    manifest.approach_ids = j.at("approach_ids").get<std::vector<std::string>>();
    manifest.model_id = j.at("model_id").get<std::string>();
    manifest.decoding = decoding_from_json(j.at("decoding"));
    manifest.backend_fingerprint = j.at("backend_fingerprint").get<std::string>();
    manifest.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
    manifest.assets_fingerprint = j.at("assets_fingerprint").get<std::string>();
    manifest.tool_version = j.at("tool_version").get<std::string>();
    manifest.created_at = j.at("created_at").get<std::string>();
    manifest.paraphrase_limit = j.at("paraphrase_limit").get<int>();
    return manifest;
  } catch (const json::exception& e) {
    throw DataError("corrupted run manifest at " + path.string() + ": " + e.what());
  }
}

RunData cmd_run(const RunOptions& options) {
  AssetStore store = options.assets_dir ? AssetStore(*options.assets_dir) : AssetStore();
  std::vector<ChainSpec> chains;
  for (const std::string& id : options.approach_ids) {
    chains.push_back(builtin_approach(store, id));
  }
  return execute_run(options, store, chains);
}

AgreementReport cmd_probe(const RunOptions& options, const std::vector<std::string>& statute_ids,
                          std::optional<ReportFormat> format) {
  if (options.approach_ids.size() != 1) {
    throw UsageError("the probe takes exactly one base approach");
  }
  AssetStore store = options.assets_dir ? AssetStore(*options.assets_dir) : AssetStore();
  ChainSpec base = builtin_approach(store, options.approach_ids.front());

  std::vector<StatuteRegistryEntry> entries;
  if (statute_ids.empty()) {
    entries = probe_statutes();
  } else {
    for (const std::string& id : statute_ids) {
      const StatuteRegistryEntry* entry = find_statute(id);
      if (!entry) throw UsageError("unknown statute '" + id + "'");
      if (entry->statute_id == "§130") {
        throw UsageError("§130 is the reference column and always included");
      }
      entries.push_back(*entry);
    }
  }

  std::vector<ChainSpec> chains = probe_variants(base, entries);
  chains.insert(chains.begin(), std::move(base));

  RunData data = execute_run(options, store, chains);
  Corpus corpus = load_corpus(options.corpus_path);
  AgreementReport report = build_report(data, corpus, std::nullopt);
  report.corpus_label = options.corpus_path.filename().string();
  write_report_files(report, options.out_dir, format);
  return report;
}

RunData load_run(const std::filesystem::path& run_dir) {
  RunData data;
  data.manifest = load_manifest(run_dir);

  std::filesystem::path verdicts = run_dir / kVerdictsFile;
  if (std::filesystem::exists(verdicts)) {
    for_each_line(verdicts, [&](int line_no, std::string_view line) {
      try {
        data.verdicts.push_back(verdict_from_json(std::string(line)));
      } catch (const DataError& e) {
        throw DataError("corrupted record at " + verdicts.string() + ":" +
                        std::to_string(line_no) + ": " + e.what());
      }
    });
  }

  std::filesystem::path fr = run_dir / kFrFile;
  if (std::filesystem::exists(fr)) {
    for_each_line(fr, [&](int line_no, std::string_view line) {
      json j = parse_record(fr, line_no, line);
      data.fr_decisions.push_back({j.at("post_id").get<std::string>(),
                                   j.at("approach_id").get<std::string>(),
                                   j.at("paraphrase_index").get<int>(),
                                   j.at("covered").get<bool>(),
                                   j.at("refusal_tainted").get<bool>()});
    });
  }

  std::filesystem::path stages = run_dir / kStagesFile;
  if (std::filesystem::exists(stages)) {
    for_each_line(stages, [&](int line_no, std::string_view line) {
      json j = parse_record(stages, line_no, line);
      StageDecisionSet set;
      set.post_id = j.at("post_id").get<std::string>();
      set.approach_id = j.at("approach_id").get<std::string>();
      set.paraphrase_index = j.at("paraphrase_index").get<int>();
      for (const auto& [name, present] : j.at("groups").items()) {
        set.groups[target_group_from_string(name)] = present.get<bool>();
      }
      for (const auto& [name, present] : j.at("conducts").items()) {
        set.conducts[conduct_from_string(name)] = present.get<bool>();
      }
      set.coerced = j.at("coerced").get<std::vector<std::string>>();
      data.stage_sets.push_back(std::move(set));
    });
  }

  std::filesystem::path extractions = run_dir / kExtractionsFile;
  if (std::filesystem::exists(extractions)) {
    for_each_line(extractions, [&](int line_no, std::string_view line) {
      json j = parse_record(extractions, line_no, line);
      ExtractionRecord rec;
      rec.post_id = j.at("post_id").get<std::string>();
      rec.approach_id = j.at("approach_id").get<std::string>();
      rec.paraphrase_index = j.at("paraphrase_index").get<int>();
      rec.spans = j.at("spans").get<std::vector<std::string>>();
      rec.targets = j.at("targets").get<std::vector<std::string>>();
      rec.non_span_mentions = j.at("non_span_mentions").get<std::vector<std::string>>();
      rec.refusal_tainted = j.at("refusal_tainted").get<bool>();
      data.extractions.push_back(std::move(rec));
    });
  }

  std::filesystem::path manual = run_dir / kManualFile;
  if (std::filesystem::exists(manual)) {
    for_each_line(manual, [&](int line_no, std::string_view line) {
      json j = parse_record(manual, line_no, line);
      data.manual_reviews.push_back({j.at("post_id").get<std::string>(),
                                     j.at("approach_id").get<std::string>(),
                                     j.at("paraphrase_index").get<int>(),
                                     j.at("step_id").get<std::string>()});
    });
  }

  return data;
}

AgreementReport cmd_evaluate(const EvaluateOptions& options) {
  if (options.run_dirs.empty()) throw UsageError("at least one run directory is required");
  Corpus corpus = load_corpus(options.corpus_path);
  std::string corpus_fp = sha256_hex(read_file(options.corpus_path));

  RunData merged;
  std::set<std::string> model_ids;
  for (const std::filesystem::path& dir : options.run_dirs) {
    RunData run = load_run(dir);
    if (run.manifest.corpus_fingerprint != corpus_fp) {
      throw DataError("run " + run.manifest.run_id + " in " + dir.string() +
                      " was produced from a different corpus (fingerprint mismatch)");
    }
    model_ids.insert(run.manifest.model_id);
    merged.manifest = run.manifest;
    std::move(run.verdicts.begin(), run.verdicts.end(), std::back_inserter(merged.verdicts));
    std::move(run.fr_decisions.begin(), run.fr_decisions.end(),
              std::back_inserter(merged.fr_decisions));
    std::move(run.stage_sets.begin(), run.stage_sets.end(),
              std::back_inserter(merged.stage_sets));
    std::move(run.extractions.begin(), run.extractions.end(),
              std::back_inserter(merged.extractions));
    std::move(run.manual_reviews.begin(), run.manual_reviews.end(),
              std::back_inserter(merged.manual_reviews));
  }
  std::string model_label;
  for (const std::string& id : model_ids) {
    if (!model_label.empty()) model_label += " + ";
    model_label += id;
  }
  merged.manifest.model_id = model_label;

  std::optional<TargetLexicon> lexicon;
  if (options.lexicon_path) lexicon = TargetLexicon::load(*options.lexicon_path);

  AgreementReport report = build_report(merged, corpus, lexicon);
  report.corpus_label = options.corpus_path.filename().string();
  write_report_files(report, options.out_dir, options.format);
  return report;
}

ContradictionOutcome cmd_contradictions(const std::filesystem::path& fr_run_dir,
                                        const std::filesystem::path& stat_run_dir,
                                        const std::filesystem::path& out_dir) {
  RunData fr_run = load_run(fr_run_dir);
  RunData stat_run = load_run(stat_run_dir);
  if (fr_run.manifest.corpus_fingerprint != stat_run.manifest.corpus_fingerprint) {
    throw DataError("the two runs were produced from different corpora");
  }

  std::set<std::string> fr_ids;
  for (const FrRecord& f : fr_run.fr_decisions) fr_ids.insert(f.approach_id);
  if (fr_ids.size() != 1) {
    throw DataError("expected exactly one fundamental-rights approach in " +
                    fr_run_dir.string() + ", found " + std::to_string(fr_ids.size()));
  }
  std::string fr_id = *fr_ids.begin();
  std::string flavor = conditioning_flavor(fr_id);

  std::set<std::string> stat_ids;
  for (const Verdict& v : stat_run.verdicts) {
    if (!is_probe_id(v.approach_id) && !is_fr_approach(v.approach_id)) {
      stat_ids.insert(v.approach_id);
    }
  }
  std::string stat_id;
  for (const std::string& id : stat_ids) {
    if (conditioning_flavor(id) == flavor) {
      if (!stat_id.empty()) throw DataError("ambiguous statutory approaches in " +
                                            stat_run_dir.string());
      stat_id = id;
    }
  }
  if (stat_id.empty()) {
    std::string found;
    for (const std::string& id : stat_ids) {
      if (!found.empty()) found += ", ";
      found += id;
    }
    throw UsageError("no statutory approach with '" + flavor + "' conditioning in " +
                     stat_run_dir.string() + " (found: " + found +
                     "); both runs must condition on the same statute presentation");
  }

  std::map<std::pair<std::string, int>, const Verdict*> stat_index;
  for (const Verdict& v : stat_run.verdicts) {
    if (v.approach_id == stat_id) stat_index[{v.post_id, v.paraphrase_index}] = &v;
  }

  ContradictionOutcome outcome;
  std::vector<std::pair<FrDecision, Verdict>> pairs;
  for (const FrRecord& f : fr_run.fr_decisions) {
    if (f.approach_id != fr_id) continue;
    auto it = stat_index.find({f.post_id, f.paraphrase_index});
    if (it == stat_index.end()) continue;
    FrDecision fr{f.post_id, f.approach_id, f.covered};
    pairs.emplace_back(fr, *it->second);
    outcome.details.push_back({f.post_id, f.paraphrase_index, f.covered, it->second->punishable,
                               is_contradictory(fr, *it->second)});
  }
  if (pairs.empty()) {
    throw DataError("the runs share no (post, paraphrase) pairs to compare");
  }
  outcome.score = ContradictionScore{flavor, contradiction_rate(pairs), pairs.size()};

  std::filesystem::create_directories(out_dir);
  std::string csv = "section,label,metric,value,n\ncontradictions," + flavor + ",rate," +
                    format_full(outcome.score.rate) + "," + std::to_string(outcome.score.n) + "\n";
  write_file(out_dir / "contradictions.csv", csv);

  std::string md = "# Contradiction report\n\nModel: " + fr_run.manifest.model_id +
                   "\n\n| Conditioning | Rate | n |\n| --- | --- | --- |\n| " + flavor + " | " +
                   format_2dp(outcome.score.rate) + " | " + std::to_string(outcome.score.n) +
                   " |\n";
  write_file(out_dir / "contradictions.md", md);

  auto details = open_out(out_dir / "contradictions.jsonl");
  for (const ContradictionDetail& d : outcome.details) {
    append_jsonl(details, json{{"post_id", d.post_id},
                               {"paraphrase_index", d.paraphrase_index},
                               {"covered", d.covered},
                               {"punishable", d.punishable},
                               {"contradictory", d.contradictory}});
  }
  return outcome;
}

std::string cmd_render(const std::string& approach_id, const std::string& statement,
                       int paraphrase_index,
                       const std::optional<std::filesystem::path>& assets_dir) {
  AssetStore store = assets_dir ? AssetStore(*assets_dir) : AssetStore();
  ChainSpec spec = builtin_approach(store, approach_id);
  if (paraphrase_index < 0 || paraphrase_index >= spec.paraphrase_count) {
    throw UsageError("paraphrase index " + std::to_string(paraphrase_index) +
                     " out of range; '" + spec.approach_id + "' defines " +
                     std::to_string(spec.paraphrase_count) + " paraphrases");
  }

  Bindings bindings{{"STATEMENT", statement}};
  if (spec.statute_id) {
    if (const StatuteRegistryEntry* entry = find_statute(*spec.statute_id)) {
      bindings["STATUTE_REF"] = entry->display_ref;
    }
  }

  std::string out;
  for (const StepSpec& step : spec.steps) {
    out += "=== step " + step.step_id + " (" + std::string(to_string(step.subtask)) + ") ===\n";
    out += render_step(step, paraphrase_index, bindings, store);
    out += "\n\n";
    // later steps quote earlier answers; a dry run has none
    bindings["ANSWER:" + step.step_id] = "[MODEL PREDICTION]";
  }
  return out;
}

AgreementReport cmd_baseline(const BaselineRunOptions& options) {
  Corpus corpus = load_corpus(options.corpus_path);
  std::vector<LabeledText> data;
  std::vector<std::pair<std::string, bool>> gold_pairs;
  for (const Post& post : corpus.posts) {
    const GoldAnnotation* gold = corpus.find_gold(post.id);
    if (gold && gold->punishable) {
      data.push_back({post.id, post.text, *gold->punishable});
      gold_pairs.emplace_back(post.id, *gold->punishable);
    }
  }
  if (data.empty()) throw DataError("corpus carries no punishability annotations");

  LoocvResult svm = loocv(data, options.config);
  TrivialPredictions trivial = trivial_baselines(gold_pairs, options.config.seed);
  LabelSeries gold = series_from_bools(gold_pairs);

  AgreementReport report;
  report.model_id = "tfidf-pca-svm";
  report.corpus_label = options.corpus_path.filename().string();
  auto add = [&](const std::string& id, const std::string& label,
                 const std::vector<std::pair<std::string, bool>>& predictions) {
    LabelSeries pred = series_from_bools(predictions);
    Kappa k = cohen_kappa(pred, gold);
    F1Scores f = f1(pred, gold, kPositiveLabel);
    ApproachScore score;
    score.approach_id = id;
    score.display_label = label;
    score.per_paraphrase = {k};
    score.kappa = paraphrase_average(score.per_paraphrase);
    score.f1_positive = f.positive;
    score.f1_macro = f.macro;
    score.n_effective = k.n;
    report.approaches.push_back(std::move(score));
  };
  add("svm", "SVM (tf-idf + PCA)", svm.predictions);
  add("majority", "Majority class", trivial.majority);
  add("uniform", "Uniform random", trivial.uniform_random);
  add("prior", "Class-prior random", trivial.prior_random);

  write_report_files(report, options.out_dir, options.format);
  return report;
}

std::string report_display_label(std::string_view approach_id) {
  if (std::size_t at = approach_id.find('@'); at != std::string_view::npos) {
    return report_display_label(approach_id.substr(0, at)) + " @ " +
           std::string(approach_id.substr(at + 1));
  }
  if (approach_id == "fr-title") return "Title Art. 5 I GG";
  if (approach_id == "fr-text") return "Text Art. 5 I GG";
  if (approach_id == "stat-title") return "Title § 130";
  if (approach_id == "stat-text") return "Text § 130";
  if (approach_id == "stat-simple") return "Simplified text § 130";
  if (approach_id == "high-level-stages") return "High-level stages";
  if (approach_id == "stages") return "Stages";
  if (approach_id == "stages-definitions") return "Stages + definitions";
  if (approach_id == "stages-examples") return "Stages + examples";
  if (approach_id == "stages-definitions-examples") return "Stages + definitions + examples";
  if (approach_id == "target-extraction") return "Target extraction";
  return std::string(approach_id);
}

}  // namespace lexeval
