#include "lexeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

namespace lexeval {

namespace {

// id → label with abstentions removed; validates the series invariants.
std::map<std::string, std::string> indexed(const LabelSeries& series) {
  if (series.ids.size() != series.labels.size()) {
    throw DataError("label series has " + std::to_string(series.ids.size()) + " ids but " +
                    std::to_string(series.labels.size()) + " labels");
  }
  std::map<std::string, std::string> index;
  for (std::size_t i = 0; i < series.ids.size(); ++i) {
    if (!index.emplace(series.ids[i], series.labels[i]).second) {
      throw DataError("duplicate id in label series: '" + series.ids[i] + "'");
    }
  }
  for (const std::string& id : series.abstentions) index.erase(id);
  return index;
}

// Shared ids in deterministic (sorted) order with both labels attached.
std::vector<std::pair<std::string, std::string>> paired(const LabelSeries& a,
                                                        const LabelSeries& b) {
  auto index_a = indexed(a);
  auto index_b = indexed(b);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [id, label_a] : index_a) {
    auto it = index_b.find(id);
    if (it != index_b.end()) pairs.emplace_back(label_a, it->second);
  }
  if (pairs.empty()) throw DataError("label series share no ids after removing abstentions");
  return pairs;
}

double f1_for_label(const std::vector<std::pair<std::string, std::string>>& pairs,
                    std::string_view positive) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& [pred, gold] : pairs) {
    if (pred == positive && gold == positive) ++tp;
    if (pred == positive && gold != positive) ++fp;
    if (pred != positive && gold == positive) ++fn;
  }
  double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::string csv_row(std::string_view section, std::string_view label, std::string_view metric,
                    double value, std::size_t n) {
  std::ostringstream row;
  row << section << "," << label << "," << metric << "," << format_full(value) << "," << n
      << "\n";
  return row.str();
}

std::string rate_note(double rate, std::string_view what) {
  if (rate <= 0.0) return "";
  return " (" + std::string(what) + " " + format_2dp(rate) + ")";
}

}  // namespace

LabelSeries series_from_bools(const std::vector<std::pair<std::string, bool>>& id_label) {
  LabelSeries series;
  for (const auto& [id, value] : id_label) {
    series.ids.push_back(id);
    series.labels.emplace_back(value ? kPositiveLabel : kNegativeLabel);
  }
  return series;
}

Kappa cohen_kappa(const LabelSeries& a, const LabelSeries& b) {
  auto pairs = paired(a, b);
  double n = static_cast<double>(pairs.size());

  std::map<std::string, std::size_t> marginal_a;
  std::map<std::string, std::size_t> marginal_b;
  std::size_t agree = 0;
  for (const auto& [label_a, label_b] : pairs) {
    ++marginal_a[label_a];
    ++marginal_b[label_b];
    if (label_a == label_b) ++agree;
  }

  Kappa kappa;
  kappa.n = pairs.size();
  kappa.p_o = agree / n;
  for (const auto& [label, count_a] : marginal_a) {
    auto it = marginal_b.find(label);
    if (it == marginal_b.end()) continue;
    kappa.p_e += (count_a / n) * (it->second / n);
  }
  if (1.0 - kappa.p_e < 1e-12) {
    kappa.degenerate = true;
    kappa.value = 0.0;  // constant raters agreeing by construction carry no signal
  } else {
    kappa.value = (kappa.p_o - kappa.p_e) / (1.0 - kappa.p_e);
  }
  return kappa;
}

F1Scores f1(const LabelSeries& pred, const LabelSeries& gold, std::string_view positive_label) {
  auto pairs = paired(pred, gold);
  F1Scores scores;
  scores.n = pairs.size();
  scores.positive = f1_for_label(pairs, positive_label);

  std::set<std::string> alphabet;
  for (const auto& [label_pred, label_gold] : pairs) {
    alphabet.insert(label_pred);
    alphabet.insert(label_gold);
  }
  for (const std::string& label : alphabet) scores.macro += f1_for_label(pairs, label);
  scores.macro /= static_cast<double>(alphabet.size());
  return scores;
}

Spread paraphrase_average(const std::vector<Kappa>& kappas) {
  if (kappas.empty()) throw UsageError("paraphrase average over an empty kappa list");
  Spread spread;
  spread.count = kappas.size();
  spread.min = kappas.front().value;
  spread.max = kappas.front().value;
  for (const Kappa& kappa : kappas) {
    spread.mean += kappa.value;
    spread.min = std::min(spread.min, kappa.value);
    spread.max = std::max(spread.max, kappa.value);
  }
  spread.mean /= static_cast<double>(kappas.size());
  for (const Kappa& kappa : kappas) {
    spread.sd += (kappa.value - spread.mean) * (kappa.value - spread.mean);
  }
  spread.sd = std::sqrt(spread.sd / static_cast<double>(kappas.size()));
  return spread;
}

double contradiction_rate(const std::vector<std::pair<FrDecision, Verdict>>& pairs) {
  if (pairs.empty()) throw DataError("contradiction rate over an empty pair list");
  std::size_t contradictory = 0;
  for (const auto& [fr, stat] : pairs) {
    if (is_contradictory(fr, stat)) ++contradictory;
  }
  return static_cast<double>(contradictory) / static_cast<double>(pairs.size());
}

const std::vector<std::string> kProbeColumnOrder = {"§120", "§123", "§300", "§324",
                                                    "§400", "§1000", "§130"};

ProbeTable probe_score(
    const std::map<std::string, std::map<std::string, LabelSeries>>& predictions,
    const LabelSeries& gold) {
  ProbeTable table;
  table.statutes = kProbeColumnOrder;
  // rows in registry order, then anything unexpected alphabetically
  for (std::string_view known : {"stat-title", "stat-text", "stat-simple"}) {
    if (predictions.contains(std::string(known))) table.approaches.emplace_back(known);
  }
  for (const auto& [approach, columns] : predictions) {
    if (std::find(table.approaches.begin(), table.approaches.end(), approach) ==
        table.approaches.end()) {
      table.approaches.push_back(approach);
    }
  }
  for (const auto& [approach, columns] : predictions) {
    for (const auto& [statute, series] : columns) {
      table.cells[approach][statute] = cohen_kappa(series, gold);
    }
  }
  return table;
}

std::string emit_report(const AgreementReport& report, ReportFormat format) {
  std::ostringstream out;

  if (format == ReportFormat::Csv) {
    out << "section,label,metric,value,n\n";
    for (const ApproachScore& row : report.approaches) {
      out << csv_row("approach", row.approach_id, "kappa_mean", row.kappa.mean, row.n_effective);
      out << csv_row("approach", row.approach_id, "kappa_sd", row.kappa.sd, row.n_effective);
      out << csv_row("approach", row.approach_id, "kappa_min", row.kappa.min, row.n_effective);
      out << csv_row("approach", row.approach_id, "kappa_max", row.kappa.max, row.n_effective);
      for (std::size_t i = 0; i < row.per_paraphrase.size(); ++i) {
        out << csv_row("approach", row.approach_id, "kappa_p" + std::to_string(i),
                       row.per_paraphrase[i].value, row.per_paraphrase[i].n);
      }
      out << csv_row("approach", row.approach_id, "f1_positive", row.f1_positive,
                     row.n_effective);
      out << csv_row("approach", row.approach_id, "f1_macro", row.f1_macro, row.n_effective);
      out << csv_row("approach", row.approach_id, "refusal_rate", row.refusal_rate,
                     row.n_effective);
      out << csv_row("approach", row.approach_id, "manual_review_rate", row.manual_review_rate,
                     row.n_effective);
    }
    for (const SubtaskScore& row : report.group_rows) {
      out << csv_row("group", row.label, "kappa_mean", row.kappa.mean, row.n_effective);
      out << csv_row("group", row.label, "f1_positive", row.f1_positive, row.n_effective);
    }
    for (const SubtaskScore& row : report.conduct_rows) {
      out << csv_row("conduct", row.label, "kappa_mean", row.kappa.mean, row.n_effective);
      out << csv_row("conduct", row.label, "f1_positive", row.f1_positive, row.n_effective);
    }
    for (const ContradictionScore& row : report.contradictions) {
      out << csv_row("contradiction", row.label, "rate", row.rate, row.n);
    }
    if (report.probe) {
      for (const std::string& approach : report.probe->approaches) {
        auto row = report.probe->cells.find(approach);
        if (row == report.probe->cells.end()) continue;
        for (const std::string& statute : report.probe->statutes) {
          auto cell = row->second.find(statute);
          if (cell == row->second.end()) continue;
          out << csv_row("probe", approach + "/" + statute, "kappa", cell->second.value,
                         cell->second.n);
        }
      }
    }
    return out.str();
  }

  // Markdown
  auto display = [&](const std::string& approach_id) -> std::string {
    for (const ApproachScore& row : report.approaches) {
      if (row.approach_id == approach_id && !row.display_label.empty()) {
        return row.display_label;
      }
    }
    return approach_id;
  };

  out << "# Agreement report\n\n";
  out << "Model: " << report.model_id << " · corpus: " << report.corpus_label << "\n\n";

  out << "## Classification\n\n";
  if (report.approaches.empty()) {
    out << "_No approaches evaluated (n=0)._\n\n";
  } else {
    out << "| Approach | κ | κ sd | F1 (pos) | F1 (macro) | n |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const ApproachScore& row : report.approaches) {
      out << "| " << (row.display_label.empty() ? row.approach_id : row.display_label) << " | "
          << format_2dp(row.kappa.mean) << rate_note(row.refusal_rate, "refusals")
          << rate_note(row.manual_review_rate, "manual") << " | " << format_2dp(row.kappa.sd)
          << " | " << format_2dp(row.f1_positive) << " | " << format_2dp(row.f1_macro) << " | "
          << row.n_effective << " |\n";
    }
    out << "\n";
  }

  out << "## Target groups\n\n";
  if (report.group_rows.empty()) {
    out << "_No group-stage rows (n=0)._\n\n";
  } else {
    out << "| Group | κ | F1 | n |\n|---|---|---|---|\n";
    for (const SubtaskScore& row : report.group_rows) {
      out << "| " << row.label << " | " << format_2dp(row.kappa.mean) << " | "
          << format_2dp(row.f1_positive) << " | " << row.n_effective << " |\n";
    }
    out << "\n";
  }

  out << "## Conducts\n\n";
  if (report.conduct_rows.empty()) {
    out << "_No conduct-stage rows (n=0)._\n\n";
  } else {
    out << "| Conduct | κ | F1 | n |\n|---|---|---|---|\n";
    for (const SubtaskScore& row : report.conduct_rows) {
      out << "| " << row.label << " | " << format_2dp(row.kappa.mean) << " | "
          << format_2dp(row.f1_positive) << " | " << row.n_effective << " |\n";
    }
    out << "\n";
  }

  out << "## Contradictions\n\n";
  if (report.contradictions.empty()) {
    out << "_No contradiction pairs (n=0)._\n\n";
  } else {
    out << "| Conditioning | Rate | n |\n|---|---|---|\n";
    for (const ContradictionScore& row : report.contradictions) {
      out << "| " << row.label << " | " << format_2dp(row.rate) << " | " << row.n << " |\n";
    }
    out << "\n";
  }

  out << "## Statute probes\n\n";
  if (!report.probe || report.probe->approaches.empty()) {
    out << "_No probe runs (n=0)._\n";
  } else {
    out << "| Approach |";
    for (const std::string& statute : report.probe->statutes) out << " " << statute << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < report.probe->statutes.size(); ++i) out << "---|";
    out << "\n";
    for (const std::string& approach : report.probe->approaches) {
      out << "| " << display(approach) << " |";
      auto row = report.probe->cells.find(approach);
      for (const std::string& statute : report.probe->statutes) {
        if (row == report.probe->cells.end() || !row->second.contains(statute)) {
          out << " / |";
        } else {
          out << " " << format_2dp(row->second.at(statute).value) << " |";
        }
      }
      out << "\n";
    }
  }

  if (!report.manual_review_items.empty()) {
    out << "\n## Manual review queue\n\n";
    for (const std::string& item : report.manual_review_items) {
      out << "- " << item << "\n";
    }
  }
  return out.str();
}

}  // namespace lexeval
