#include "lexeval/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lexeval/chainspec.hpp"
#include "lexeval/corpus.hpp"
#include "lexeval/error.hpp"
#include "lexeval/runner.hpp"
#include "lexeval/util.hpp"

namespace lexeval {

namespace {

std::optional<ReportFormat> parse_format(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "md") return ReportFormat::Markdown;
  throw UsageError("unknown report format '" + name + "'; use csv or md");
}

void print_run_summary(const RunData& data) {
  std::cout << "run " << data.manifest.run_id << ": " << data.verdicts.size() << " verdicts, "
            << data.fr_decisions.size() << " coverage decisions, " << data.extractions.size()
            << " extractions, " << data.manual_reviews.size() << " manual-review items\n";
}

void print_report_summary(const AgreementReport& report,
                          const std::filesystem::path& out_dir) {
  for (const ApproachScore& row : report.approaches) {
    std::cout << row.display_label << ": kappa " << format_2dp(row.kappa.mean) << " · F1 "
              << format_2dp(row.f1_positive) << " (n=" << row.n_effective << ")\n";
  }
  for (const ContradictionScore& row : report.contradictions) {
    std::cout << "contradictions (" << row.label << "): " << format_2dp(row.rate)
              << " (n=" << row.n << ")\n";
  }
  std::cout << "reports written to " << out_dir.string() << "\n";
}

int cli_validate(const std::optional<std::filesystem::path>& corpus_path,
                 const std::optional<std::filesystem::path>& assets_dir) {
  AssetStore store = assets_dir ? AssetStore(*assets_dir) : AssetStore();
  int issues = 0;
  for (const std::string& id : registered_approach_ids()) {
    try {
      validate_chain_spec(builtin_approach(store, id), store);
    } catch (const Error& e) {
      std::cerr << "chain " << id << ": " << e.what() << "\n";
      ++issues;
    }
  }
  if (corpus_path) {
    Corpus corpus = load_corpus(*corpus_path);
    for (const ValidationIssue& issue : validate_corpus(corpus)) {
      std::cerr << (issue.post_id.empty() ? std::string("corpus") : issue.post_id) << ": "
                << issue.message << "\n";
      ++issues;
    }
    std::cout << corpus.posts.size() << " posts, " << corpus.gold.size() << " annotations\n";
  }
  if (issues > 0) {
    std::cerr << issues << " validation issue(s)\n";
    return 2;
  }
  std::cout << "all checks passed\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"agreement harness for statute-conditioned punishability classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  // shared option storage; each subcommand binds the subset it needs
  std::vector<std::string> approaches;
  std::string corpus_path;
  std::string backend_config;
  std::string out_dir;
  std::string cache_dir;
  std::string assets_dir;
  std::string lexicon_path;
  std::string format_name;
  std::vector<std::string> run_dirs;
  std::vector<std::string> statutes;
  int paraphrases = 0;

  CLI::App* run = app.add_subcommand("run", "execute approaches over a corpus");
  run->add_option("--approach", approaches, "approach id (repeatable)")->required();
  run->add_option("--corpus", corpus_path, "corpus JSONL file")->required();
  run->add_option("--backend-config", backend_config, "backend config JSON")->required();
  run->add_option("--out", out_dir, "run directory")->required();
  run->add_option("--paraphrases", paraphrases, "limit paraphrases per step");
  run->add_option("--cache-dir", cache_dir, "directory for the completion cache");
  run->add_option("--assets-dir", assets_dir, "overlay directory shadowing builtin assets");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score run records against the gold");
  evaluate->add_option("--run", run_dirs, "run directory (repeatable)")->required();
  evaluate->add_option("--corpus", corpus_path, "corpus JSONL file")->required();
  evaluate->add_option("--out", out_dir, "report directory")->required();
  evaluate->add_option("--lexicon", lexicon_path, "target lexicon for extraction scoring");
  evaluate->add_option("--format", format_name, "csv or md (default: both)");

  CLI::App* contradictions =
      app.add_subcommand("contradictions", "cross-level consistency of two runs");
  std::string fr_run_dir;
  std::string stat_run_dir;
  contradictions->add_option("--fr-run", fr_run_dir, "fundamental-rights run directory")
      ->required();
  contradictions->add_option("--stat-run", stat_run_dir, "statutory run directory")->required();
  contradictions->add_option("--out", out_dir, "report directory")->required();

  CLI::App* probe = app.add_subcommand("probe", "statute-substitution probe");
  probe->add_option("--approach", approaches, "statutory base approach")->required();
  probe->add_option("--corpus", corpus_path, "corpus JSONL file")->required();
  probe->add_option("--backend-config", backend_config, "backend config JSON")->required();
  probe->add_option("--out", out_dir, "run directory")->required();
  probe->add_option("--statutes", statutes, "statute ids to substitute (default: all probes)");
  probe->add_option("--paraphrases", paraphrases, "limit paraphrases per step");
  probe->add_option("--cache-dir", cache_dir, "directory for the completion cache");
  probe->add_option("--assets-dir", assets_dir, "overlay directory shadowing builtin assets");
  probe->add_option("--format", format_name, "csv or md (default: both)");

  CLI::App* render = app.add_subcommand("render", "print fully rendered prompts (no backend)");
  std::string render_text;
  std::string render_post;
  int paraphrase_index = 0;
  render->add_option("--approach", approaches, "approach id")->required();
  render->add_option("--text", render_text, "statement to embed");
  render->add_option("--post", render_post, "post id to embed (needs --corpus)");
  render->add_option("--corpus", corpus_path, "corpus JSONL file");
  render->add_option("--paraphrase", paraphrase_index, "paraphrase index (default 0)");
  render->add_option("--assets-dir", assets_dir, "overlay directory shadowing builtin assets");

  CLI::App* baseline = app.add_subcommand("baseline", "lexical reference classifier");
  BaselineConfig baseline_config;
  baseline->add_option("--corpus", corpus_path, "corpus JSONL file")->required();
  baseline->add_option("--out", out_dir, "report directory")->required();
  baseline->add_option("--components", baseline_config.components, "projection dimensions");
  baseline->add_option("--variance-target", baseline_config.variance_target,
                       "explained-variance ratio to keep (overrides --components)");
  baseline->add_option("--C", baseline_config.C, "soft-margin penalty");
  baseline->add_option("--seed", baseline_config.seed, "seed for the random baselines");
  baseline->add_option("--format", format_name, "csv or md (default: both)");

  CLI::App* validate = app.add_subcommand("validate", "check corpus and builtin chains");
  validate->add_option("--corpus", corpus_path, "corpus JSONL file");
  validate->add_option("--assets-dir", assets_dir, "overlay directory shadowing builtin assets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto opt_path = [](const std::string& value) -> std::optional<std::filesystem::path> {
    if (value.empty()) return std::nullopt;
    return std::filesystem::path(value);
  };

  try {
    if (app.got_subcommand(run)) {
      RunOptions options;
      options.approach_ids = approaches;
      options.corpus_path = corpus_path;
      options.backend_config_path = backend_config;
      options.out_dir = out_dir;
      options.paraphrase_limit = paraphrases;
      if (!cache_dir.empty()) {
        options.cache_path = std::filesystem::path(cache_dir) / "cache.jsonl";
      }
      options.assets_dir = opt_path(assets_dir);
      print_run_summary(cmd_run(options));
      return 0;
    }

    if (app.got_subcommand(evaluate)) {
      EvaluateOptions options;
      for (const std::string& dir : run_dirs) options.run_dirs.emplace_back(dir);
      options.corpus_path = corpus_path;
      options.out_dir = out_dir;
      options.lexicon_path = opt_path(lexicon_path);
      options.format = parse_format(format_name);
      print_report_summary(cmd_evaluate(options), out_dir);
      return 0;
    }

    if (app.got_subcommand(contradictions)) {
      ContradictionOutcome outcome = cmd_contradictions(fr_run_dir, stat_run_dir, out_dir);
      std::cout << "contradictions (" << outcome.score.label
                << "): " << format_2dp(outcome.score.rate) << " (n=" << outcome.score.n << ")\n"
                << "reports written to " << out_dir << "\n";
      return 0;
    }

    if (app.got_subcommand(probe)) {
      RunOptions options;
      options.approach_ids = approaches;
      options.corpus_path = corpus_path;
      options.backend_config_path = backend_config;
      options.out_dir = out_dir;
      options.paraphrase_limit = paraphrases;
      if (!cache_dir.empty()) {
        options.cache_path = std::filesystem::path(cache_dir) / "cache.jsonl";
      }
      options.assets_dir = opt_path(assets_dir);
      AgreementReport report = cmd_probe(options, statutes, parse_format(format_name));
      print_report_summary(report, out_dir);
      return 0;
    }

    if (app.got_subcommand(render)) {
      std::string statement = render_text;
      if (statement.empty()) {
        if (render_post.empty() || corpus_path.empty()) {
          throw UsageError("render needs --text, or --post together with --corpus");
        }
        Corpus corpus = load_corpus(corpus_path);
        const Post* post = corpus.find_post(render_post);
        if (!post) throw DataError("unknown post id '" + render_post + "'");
        statement = post->text;
      }
      std::cout << cmd_render(approaches.front(), statement, paraphrase_index,
                              opt_path(assets_dir));
      return 0;
    }

    if (app.got_subcommand(baseline)) {
      BaselineRunOptions options;
      options.corpus_path = corpus_path;
      options.out_dir = out_dir;
      options.config = baseline_config;
      options.format = parse_format(format_name);
      print_report_summary(cmd_baseline(options), out_dir);
      return 0;
    }

    if (app.got_subcommand(validate)) {
      return cli_validate(opt_path(corpus_path), opt_path(assets_dir));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const std::string& attempt : e.attempts()) std::cerr << "  " << attempt << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace lexeval
