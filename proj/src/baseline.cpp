#include "lexeval/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <Eigen/Dense>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

namespace lexeval {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(case_fold(current));
      current.clear();
    }
  };
  for (std::size_t i = 0; i < text.size();) {
    unsigned char ch = static_cast<unsigned char>(text[i]);
    if (ch < 0x80) {
      if (std::isalnum(ch)) {
        current += static_cast<char>(ch);
      } else {
        flush();
      }
      ++i;
      continue;
    }
    // Latin-1 supplement: the 0xC2 page is punctuation and signs (§, °, «),
    // the 0xC3 page is letters except the multiplication and division signs.
    if (ch == 0xC2 && i + 1 < text.size()) {
      flush();
      i += 2;
      continue;
    }
    if (ch == 0xC3 && i + 1 < text.size()) {
      unsigned char low = static_cast<unsigned char>(text[i + 1]);
      if (low == 0x97 || low == 0xB7) {
        flush();
      } else {
        current += text[i];
        current += text[i + 1];
      }
      i += 2;
      continue;
    }
    current += static_cast<char>(ch);  // other multibyte sequences are letters to us
    ++i;
  }
  flush();
  return tokens;
}

FeatureMatrix tfidf(const std::vector<std::string>& texts) {
  if (texts.empty()) throw DataError("tfidf over an empty text list");

  std::vector<std::vector<std::string>> docs;
  docs.reserve(texts.size());
  std::map<std::string, std::size_t> document_frequency;
  bool any_tokens = false;
  for (const std::string& text : texts) {
    docs.push_back(tokenize(text));
    any_tokens = any_tokens || !docs.back().empty();
    std::map<std::string, bool> seen;
    for (const std::string& token : docs.back()) {
      if (!seen[token]) {
        seen[token] = true;
        ++document_frequency[token];
      }
    }
  }
  if (!any_tokens) throw DataError("tfidf over documents with no tokens at all");

  FeatureMatrix features;
  std::map<std::string, std::size_t> term_index;
  for (const auto& [term, df] : document_frequency) {
    term_index[term] = features.vocabulary.size();
    features.vocabulary.push_back(term);
    features.idf.push_back(
        std::log((1.0 + static_cast<double>(texts.size())) / (1.0 + static_cast<double>(df))) +
        1.0);
  }

  for (const auto& doc : docs) {
    std::vector<double> row(features.vocabulary.size(), 0.0);
    if (!doc.empty()) {
      for (const std::string& token : doc) row[term_index.at(token)] += 1.0;
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] = row[i] / static_cast<double>(doc.size()) * features.idf[i];
      }
    }
    features.rows.push_back(std::move(row));
  }
  return features;
}

std::vector<double> featurize(const std::string& text, const FeatureMatrix& features) {
  std::map<std::string, std::size_t> term_index;
  for (std::size_t i = 0; i < features.vocabulary.size(); ++i) {
    term_index[features.vocabulary[i]] = i;
  }
  std::vector<std::string> tokens = tokenize(text);
  std::vector<double> row(features.vocabulary.size(), 0.0);
  if (tokens.empty()) return row;
  for (const std::string& token : tokens) {
    auto it = term_index.find(token);
    if (it != term_index.end()) row[it->second] += 1.0;
  }
  for (std::size_t i = 0; i < row.size(); ++i) {
    row[i] = row[i] / static_cast<double>(tokens.size()) * features.idf[i];
  }
  return row;
}

// --- PCA --------------------------------------------------------------------

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd matrix(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return matrix;
}

}  // namespace

Projection fit_projection(const FeatureMatrix& features, int k) {
  const Eigen::Index n = static_cast<Eigen::Index>(features.rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(features.vocabulary.size());
  if (k < 1 || k > std::min<Eigen::Index>(n - 1, d)) {
    throw UsageError("projection rank " + std::to_string(k) + " out of range for " +
                     std::to_string(n) + " rows x " + std::to_string(d) + " columns");
  }

  Eigen::MatrixXd data = to_eigen(features.rows);
  Eigen::RowVectorXd mean = data.colwise().mean();
  Eigen::MatrixXd centered = data.rowwise() - mean;

  Projection projection;
  projection.mean.assign(mean.data(), mean.data() + d);

  // eigenvalues ascending; total variance = trace either way
  std::vector<std::pair<double, Eigen::VectorXd>> axes;  // (eigenvalue of XᵀX, direction)
  double total = 0.0;
  if (d <= n) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered.transpose() * centered);
    total = solver.eigenvalues().sum();
    for (Eigen::Index i = d - 1; i >= 0 && static_cast<int>(axes.size()) < k; --i) {
      axes.emplace_back(solver.eigenvalues()(i), solver.eigenvectors().col(i));
    }
  } else {
    // Gram trick: XXᵀ shares the nonzero spectrum, directions recovered as Xᵀu/√λ
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered * centered.transpose());
    total = solver.eigenvalues().sum();
    for (Eigen::Index i = n - 1; i >= 0 && static_cast<int>(axes.size()) < k; --i) {
      double lambda = solver.eigenvalues()(i);
      if (lambda < 1e-12) break;
      Eigen::VectorXd direction =
          centered.transpose() * solver.eigenvectors().col(i) / std::sqrt(lambda);
      axes.emplace_back(lambda, direction);
    }
  }

  for (const auto& [lambda, direction] : axes) {
    if (lambda < 1e-12) break;  // no variance left; a shorter projection is honest
    projection.components.emplace_back(direction.data(), direction.data() + d);
    projection.explained_variance_ratio.push_back(total > 0.0 ? lambda / total : 0.0);
  }
  if (projection.components.empty()) {
    throw DataError("projection found no variance in the feature matrix");
  }
  return projection;
}

std::vector<double> project_row(const std::vector<double>& row, const Projection& projection) {
  if (row.size() != projection.mean.size()) {
    throw UsageError("row has " + std::to_string(row.size()) + " features, projection expects " +
                     std::to_string(projection.mean.size()));
  }
  std::vector<double> out(projection.components.size(), 0.0);
  for (std::size_t c = 0; c < projection.components.size(); ++c) {
    double dot = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      dot += (row[j] - projection.mean[j]) * projection.components[c][j];
    }
    out[c] = dot;
  }
  return out;
}

std::vector<std::vector<double>> project(const FeatureMatrix& features,
                                         const Projection& projection) {
  std::vector<std::vector<double>> out;
  out.reserve(features.rows.size());
  for (const auto& row : features.rows) out.push_back(project_row(row, projection));
  return out;
}

// --- linear SVM -------------------------------------------------------------

namespace {

// Dual coordinate ascent on the standard box-constrained problem, always
// working on the maximally violating pair; ties resolve to the lowest index
// so training is deterministic.
std::vector<double> solve_dual(const std::vector<std::vector<double>>& x,
                               const std::vector<int>& y, double C) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> gram(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double dot = 0.0;
      for (std::size_t f = 0; f < x[i].size(); ++f) dot += x[i][f] * x[j][f];
      gram[i][j] = dot;
      gram[j][i] = dot;
    }
  }
  auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * gram[i][j]; };

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // of ½αᵀQα − eᵀα

  const double tolerance = 1e-8;
  const long max_iterations = 100000;
  for (long iteration = 0; iteration < max_iterations; ++iteration) {
    // first-order working set: i from I_up, j from I_low
    std::ptrdiff_t i = -1, j = -1;
    double up_best = -1e300, low_best = 1e300;
    for (std::size_t t = 0; t < n; ++t) {
      bool in_up = (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0);
      bool in_low = (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C);
      double value = -y[t] * grad[t];
      if (in_up && value > up_best) {
        up_best = value;
        i = static_cast<std::ptrdiff_t>(t);
      }
      if (in_low && value < low_best) {
        low_best = value;
        j = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (i < 0 || j < 0 || up_best - low_best < tolerance) break;

    const std::size_t a = static_cast<std::size_t>(i);
    const std::size_t b = static_cast<std::size_t>(j);
    double old_a = alpha[a], old_b = alpha[b];
    if (y[a] != y[b]) {
      double quad = q(a, a) + q(b, b) + 2.0 * q(a, b);
      if (quad <= 0) quad = 1e-12;
      double delta = (-grad[a] - grad[b]) / quad;
      double diff = alpha[a] - alpha[b];
      alpha[a] += delta;
      alpha[b] += delta;
      if (diff > 0 && alpha[b] < 0) {
        alpha[b] = 0;
        alpha[a] = diff;
      } else if (diff <= 0 && alpha[a] < 0) {
        alpha[a] = 0;
        alpha[b] = -diff;
      }
      if (diff > 0 && alpha[a] > C) {
        alpha[a] = C;
        alpha[b] = C - diff;
      } else if (diff <= 0 && alpha[b] > C) {
        alpha[b] = C;
        alpha[a] = C + diff;
      }
    } else {
      double quad = q(a, a) + q(b, b) - 2.0 * q(a, b);
      if (quad <= 0) quad = 1e-12;
      double delta = (grad[a] - grad[b]) / quad;
      double sum = alpha[a] + alpha[b];
      alpha[a] -= delta;
      alpha[b] += delta;
      if (sum > C && alpha[a] > C) {
        alpha[a] = C;
        alpha[b] = sum - C;
      } else if (sum <= C && alpha[b] < 0) {
        alpha[b] = 0;
        alpha[a] = sum;
      }
      if (sum > C && alpha[b] > C) {
        alpha[b] = C;
        alpha[a] = sum - C;
      } else if (sum <= C && alpha[a] < 0) {
        alpha[a] = 0;
        alpha[b] = sum;
      }
    }
    double delta_a = alpha[a] - old_a;
    double delta_b = alpha[b] - old_b;
    if (std::abs(delta_a) < 1e-15 && std::abs(delta_b) < 1e-15) break;
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += q(t, a) * delta_a + q(t, b) * delta_b;
    }
  }
  return alpha;
}

// Exact minimization of the hinge sum over the unregularized bias: the loss
// is piecewise linear in b, so an optimum sits on a breakpoint.
double best_bias(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                 const std::vector<double>& w) {
  std::vector<double> margins(x.size(), 0.0);
  std::vector<double> breakpoints;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dot = 0.0;
    for (std::size_t f = 0; f < w.size(); ++f) dot += w[f] * x[i][f];
    margins[i] = dot;
    breakpoints.push_back(y[i] - dot);  // hinge i hits zero at this bias
  }
  std::sort(breakpoints.begin(), breakpoints.end());
  double best = breakpoints.front();
  double best_loss = 1e300;
  for (double candidate : breakpoints) {
    double loss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      loss += std::max(0.0, 1.0 - y[i] * (margins[i] + candidate));
    }
    if (loss < best_loss - 1e-12) {
      best_loss = loss;
      best = candidate;
    }
  }
  return best;
}

}  // namespace

MarginClassifier train_svm(const std::vector<std::vector<double>>& features,
                           const std::vector<bool>& labels, double C) {
  if (features.size() != labels.size()) {
    throw UsageError("feature rows and labels differ in length");
  }
  if (features.empty()) throw DataError("training set is empty");
  if (C <= 0) throw UsageError("regularization strength C must be positive");
  bool has_pos = false, has_neg = false;
  for (bool label : labels) (label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    throw DataError("training set contains only one class");
  }

  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] ? 1 : -1;

  std::vector<double> alpha = solve_dual(features, y, C);

  MarginClassifier classifier;
  classifier.C = C;
  classifier.weights.assign(features.front().size(), 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    for (std::size_t f = 0; f < classifier.weights.size(); ++f) {
      classifier.weights[f] += alpha[i] * y[i] * features[i][f];
    }
  }
  classifier.bias = best_bias(features, y, classifier.weights);
  return classifier;
}

bool predict_one(const MarginClassifier& classifier, const std::vector<double>& features) {
  double score = classifier.bias;
  for (std::size_t f = 0; f < classifier.weights.size() && f < features.size(); ++f) {
    score += classifier.weights[f] * features[f];
  }
  return score > 0.0;
}

std::vector<bool> predict(const MarginClassifier& classifier,
                          const std::vector<std::vector<double>>& features) {
  std::vector<bool> labels;
  labels.reserve(features.size());
  for (const auto& row : features) labels.push_back(predict_one(classifier, row));
  return labels;
}

double svm_objective(const MarginClassifier& classifier,
                     const std::vector<std::vector<double>>& features,
                     const std::vector<bool>& labels) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double score = classifier.bias;
    for (std::size_t f = 0; f < classifier.weights.size(); ++f) {
      score += classifier.weights[f] * features[i][f];
    }
    int y = labels[i] ? 1 : -1;
    hinge += std::max(0.0, 1.0 - y * score);
  }
  double norm = 0.0;
  for (double w : classifier.weights) norm += w * w;
  return hinge + norm / (2.0 * classifier.C);
}

// --- LOOCV ------------------------------------------------------------------

LoocvResult loocv(const std::vector<LabeledText>& data, const BaselineConfig& config) {
  if (data.size() < 4) throw DataError("leave-one-out needs at least four posts");

  LoocvResult result;
  for (std::size_t held_out = 0; held_out < data.size(); ++held_out) {
    std::vector<std::string> texts;
    std::vector<bool> labels;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (i == held_out) continue;
      texts.push_back(data[i].text);
      labels.push_back(data[i].positive);
    }
    bool has_pos = std::find(labels.begin(), labels.end(), true) != labels.end();
    bool has_neg = std::find(labels.begin(), labels.end(), false) != labels.end();
    if (!has_pos || !has_neg) {
      result.skipped.push_back(data[held_out].id);
      continue;
    }

    FeatureMatrix features = tfidf(texts);
    int max_rank = static_cast<int>(
        std::min(texts.size() - 1, features.vocabulary.size()));
    int k = std::min(config.components, max_rank);
    Projection projection = fit_projection(features, std::max(1, k));
    if (config.variance_target > 0.0) {
      double cumulated = 0.0;
      std::size_t keep = projection.components.size();
      for (std::size_t i = 0; i < projection.explained_variance_ratio.size(); ++i) {
        cumulated += projection.explained_variance_ratio[i];
        if (cumulated >= config.variance_target) {
          keep = i + 1;
          break;
        }
      }
      projection.components.resize(keep);
      projection.explained_variance_ratio.resize(keep);
    }

    MarginClassifier classifier = train_svm(project(features, projection), labels, config.C);
    std::vector<double> held_features =
        project_row(featurize(data[held_out].text, features), projection);
    result.predictions.emplace_back(data[held_out].id,
                                    predict_one(classifier, held_features));
  }

  if (result.predictions.empty()) {
    throw DataError("every leave-one-out fold was skipped");
  }
  std::vector<std::pair<std::string, bool>> gold;
  for (const LabeledText& item : data) {
    bool skipped = std::find(result.skipped.begin(), result.skipped.end(), item.id) !=
                   result.skipped.end();
    if (!skipped) gold.emplace_back(item.id, item.positive);
  }
  LabelSeries predicted = series_from_bools(result.predictions);
  LabelSeries actual = series_from_bools(gold);
  result.f1 = f1(predicted, actual, kPositiveLabel);
  result.kappa = cohen_kappa(predicted, actual);
  return result;
}

TrivialPredictions trivial_baselines(const std::vector<std::pair<std::string, bool>>& gold,
                                     unsigned seed) {
  if (gold.empty()) throw DataError("trivial baselines over an empty gold list");

  std::size_t positives = 0;
  for (const auto& [id, label] : gold) positives += label ? 1 : 0;
  bool majority_label = positives * 2 > gold.size();
  double prior = static_cast<double>(positives) / static_cast<double>(gold.size());

  // raw mt19937 draws keep this reproducible across standard libraries
  std::mt19937 uniform_rng(seed);
  std::mt19937 prior_rng(seed + 0x9E3779B9u);
  auto canonical = [](std::mt19937& rng) {
    return static_cast<double>(rng()) / 4294967296.0;  // [0, 1)
  };

  TrivialPredictions predictions;
  for (const auto& [id, label] : gold) {
    predictions.majority.emplace_back(id, majority_label);
    predictions.uniform_random.emplace_back(id, (uniform_rng() & 1u) != 0);
    predictions.prior_random.emplace_back(id, canonical(prior_rng) < prior);
  }
  return predictions;
}

}  // namespace lexeval
