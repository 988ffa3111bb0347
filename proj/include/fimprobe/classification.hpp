#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fimprobe/hits.hpp"

namespace fimprobe {

inline constexpr std::size_t kNumFeatures = 6;
using Features = std::array<double, kNumFeatures>;

// Feature order: class, function, variable, string, comment, docstring.
struct FeatureRow {
  std::string script_id;
  std::string project_id;
  Features features{};
  bool label = false;
};

// Rows without a ground-truth label are skipped.
std::vector<FeatureRow> to_feature_rows(const std::vector<HitVector>& hits);

class InsufficientData : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class DegenerateData : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MaxFeatures { Sqrt, Log2 };
enum class SplitCriterion { Gini, Entropy };

struct ForestParams {
  int n_estimators = 100;
  MaxFeatures max_features = MaxFeatures::Sqrt;
  int max_depth = 10;
  SplitCriterion criterion = SplitCriterion::Gini;

  bool operator==(const ForestParams&) const = default;
};

std::string describe(const ForestParams& params);
std::size_t features_per_split(MaxFeatures mode, std::size_t n_features);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::array<std::uint32_t, 2> counts{};  // negative, positive

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  Features importances{};       // unnormalized weighted impurity decrease

  bool predict(const Features& x) const;
  bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
  ForestParams params;
  std::uint64_t training_seed = 0;
  std::vector<DecisionTree> trees;
  Features feature_importances{};

  bool operator==(const ForestModel&) const = default;
};

ForestModel train_forest(const std::vector<FeatureRow>& train, const ForestParams& params,
                         std::uint64_t seed);

struct ScriptVerdict {
  bool label = false;
  double votes = 0.0;  // fraction of trees voting positive
};

// Majority vote; an exact tie resolves to positive.
ScriptVerdict predict_script(const ForestModel& model, const Features& features);

// Mean decrease in impurity, averaged over trees and normalized to sum 1.
Features gini_importance(const ForestModel& model);

nlohmann::ordered_json forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& doc);

// --- evaluation -----------------------------------------------------------

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool operator==(const Confusion&) const = default;
};

struct EvalReport {
  double precision = 0.0;
  double accuracy = 0.0;
  double f_score = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  Confusion confusion;
  // Names of metrics whose denominator was zero (reported as 0).
  std::vector<std::string> degenerate;
};

class LengthMismatch : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

EvalReport compute_metrics(const std::vector<bool>& predicted, const std::vector<bool>& actual);
EvalReport metrics_from_confusion(const Confusion& c);
nlohmann::ordered_json report_to_json(const EvalReport& report);

struct RepoCriterion {
  enum class Mode { SinglePositive, Fraction };
  Mode mode = Mode::SinglePositive;
  double theta = 1.0;

  static RepoCriterion single_positive() { return {Mode::SinglePositive, 1.0}; }
  static RepoCriterion fraction(double theta);
  std::string describe() const;
};

class EmptyRepository : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

bool aggregate_repository(const std::vector<bool>& script_verdicts, const RepoCriterion& criterion);

// --- dataset handling -----------------------------------------------------

struct DatasetSplit {
  std::vector<FeatureRow> train;
  std::vector<FeatureRow> test;
};

inline constexpr double kDefaultTestFraction = 0.2;

// Grouped by project, stratified by project majority label, deterministic.
DatasetSplit split_dataset(const std::vector<FeatureRow>& rows, double test_fraction,
                           std::uint64_t seed);

struct ParamGrid {
  std::vector<int> n_estimators{50, 100, 200};
  std::vector<MaxFeatures> max_features{MaxFeatures::Sqrt, MaxFeatures::Log2};
  std::vector<int> max_depth{10, 20, 30};
  std::vector<SplitCriterion> criteria{SplitCriterion::Gini, SplitCriterion::Entropy};

  std::vector<ForestParams> expand() const;
};

struct GridEntry {
  ForestParams params;
  EvalReport report;
};

struct GridResult {
  ForestModel best;
  EvalReport best_report;
  std::vector<GridEntry> entries;
};

// Selection order: higher test F-score, then higher sensitivity, then fewer
// estimators, then shallower depth. Remaining ties keep the earlier entry.
bool outranks(const GridEntry& candidate, const GridEntry& incumbent);

GridResult grid_search(const DatasetSplit& split, const ParamGrid& grid, std::uint64_t seed);

// Rank correlation among the six features and the label (index 6).
using CorrelationMatrix = std::array<std::array<double, 7>, 7>;
CorrelationMatrix spearman_matrix(const std::vector<FeatureRow>& rows);

// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(const std::vector<double>& values);

}  // namespace fimprobe
