#pragma once

#include <string>
#include <vector>

#include "lexeval/metrics.hpp"

namespace lexeval {

// Lowercased tokens split at word boundaries; umlauts and other non-ASCII
// letters stay intact.
std::vector<std::string> tokenize(const std::string& text);

struct FeatureMatrix {
  std::vector<std::vector<double>> rows;  // row i belongs to input text i
  std::vector<std::string> vocabulary;    // sorted term list
  std::vector<double> idf;                // parallel to vocabulary
};

// tf = count / document length; idf = ln((1+N)/(1+df)) + 1.
FeatureMatrix tfidf(const std::vector<std::string>& texts);

// Features for an unseen text under an existing vocabulary; out-of-vocabulary
// tokens still count toward the document length.
std::vector<double> featurize(const std::string& text, const FeatureMatrix& features);

struct Projection {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // orthonormal rows, most variance first
  std::vector<double> explained_variance_ratio;
};

// Top-k principal components of the centered rows. Directions with no
// variance are dropped, so the projection can end up with fewer than k
// components on rank-deficient data.
Projection fit_projection(const FeatureMatrix& features, int k);

std::vector<double> project_row(const std::vector<double>& row, const Projection& projection);
std::vector<std::vector<double>> project(const FeatureMatrix& features,
                                         const Projection& projection);

struct MarginClassifier {
  std::vector<double> weights;
  double bias = 0.0;
  double C = 1.0;
};

// Soft-margin linear classifier; deterministic for fixed data order.
MarginClassifier train_svm(const std::vector<std::vector<double>>& features,
                           const std::vector<bool>& labels, double C);

bool predict_one(const MarginClassifier& classifier, const std::vector<double>& features);
std::vector<bool> predict(const MarginClassifier& classifier,
                          const std::vector<std::vector<double>>& features);

// Hinge loss plus ||w||² / (2C); the bias term is unregularized.
double svm_objective(const MarginClassifier& classifier,
                     const std::vector<std::vector<double>>& features,
                     const std::vector<bool>& labels);

struct LabeledText {
  std::string id;
  std::string text;
  bool positive = false;
};

struct BaselineConfig {
  int components = 100;          // capped at fold rank
  double variance_target = 0.0;  // >0 keeps the smallest k explaining this ratio
  double C = 1.0;
  unsigned seed = 17;
};

struct LoocvResult {
  std::vector<std::pair<std::string, bool>> predictions;
  std::vector<std::string> skipped;  // folds whose training set lost a class
  F1Scores f1;
  Kappa kappa;
};

// Leave-one-out evaluation; each fold fits vocabulary, idf, projection and
// classifier on the remaining posts only.
LoocvResult loocv(const std::vector<LabeledText>& data, const BaselineConfig& config);

struct TrivialPredictions {
  std::vector<std::pair<std::string, bool>> majority;
  std::vector<std::pair<std::string, bool>> uniform_random;
  std::vector<std::pair<std::string, bool>> prior_random;
};

TrivialPredictions trivial_baselines(const std::vector<std::pair<std::string, bool>>& gold,
                                     unsigned seed);

}  // namespace lexeval
