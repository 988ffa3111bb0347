#include <algorithm>
#include <cmath>
#include <numeric>

#include "fimprobe/classification.hpp"
#include "fimprobe/util.hpp"

namespace fimprobe {

std::vector<FeatureRow> to_feature_rows(const std::vector<HitVector>& hits) {
  std::vector<FeatureRow> rows;
  rows.reserve(hits.size());
  for (const auto& h : hits) {
    if (!h.trained_on) continue;
    rows.push_back({h.script_id, h.project_id, h.rates, *h.trained_on});
  }
  return rows;
}

std::string describe(const ForestParams& p) {
  return "n_estimators=" + std::to_string(p.n_estimators) +
         ",max_features=" + (p.max_features == MaxFeatures::Sqrt ? "sqrt" : "log2") +
         ",max_depth=" + std::to_string(p.max_depth) +
         ",criterion=" + (p.criterion == SplitCriterion::Gini ? "gini" : "entropy");
}

std::size_t features_per_split(MaxFeatures mode, std::size_t n_features) {
  const double n = static_cast<double>(n_features);
  const double m = mode == MaxFeatures::Sqrt ? std::sqrt(n) : std::log2(n);
  return std::clamp<std::size_t>(static_cast<std::size_t>(m), 1, n_features);
}

bool DecisionTree::predict(const Features& x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                        : n.right);
  }
  return nodes[i].counts[1] >= nodes[i].counts[0];
}

namespace {

double impurity(SplitCriterion criterion, double n0, double n1) {
  const double n = n0 + n1;
  if (n <= 0.0) return 0.0;
  const double p0 = n0 / n, p1 = n1 / n;
  if (criterion == SplitCriterion::Gini) return 1.0 - p0 * p0 - p1 * p1;
  double h = 0.0;
  if (p0 > 0.0) h -= p0 * std::log2(p0);
  if (p1 > 0.0) h -= p1 * std::log2(p1);
  return h;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureRow>& rows, const ForestParams& params, Rng& rng)
      : rows_(rows), params_(params), rng_(rng),
        per_split_(features_per_split(params.max_features, kNumFeatures)) {}

  DecisionTree build(std::vector<std::size_t> sample) {
    DecisionTree tree;
    root_size_ = static_cast<double>(sample.size());
    struct Pending {
      int node;
      int depth;
      std::vector<std::size_t> sample;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, 0, std::move(sample)});
    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();
      auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
      for (auto idx : job.sample) ++node.counts[rows_[idx].label ? 1 : 0];
      const bool pure = node.counts[0] == 0 || node.counts[1] == 0;
      if (pure || job.depth >= params_.max_depth || job.sample.size() < 2) continue;

      const auto split = best_split(job.sample, node.counts);
      if (split.feature < 0) continue;

      std::vector<std::size_t> left, right;
      for (auto idx : job.sample) {
        (rows_[idx].features[static_cast<std::size_t>(split.feature)] <= split.threshold ? left
                                                                                         : right)
            .push_back(idx);
      }
      tree.importances[static_cast<std::size_t>(split.feature)] +=
          static_cast<double>(job.sample.size()) / root_size_ * split.gain;
      const int left_id = static_cast<int>(tree.nodes.size());
      const int right_id = left_id + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& parent = tree.nodes[static_cast<std::size_t>(job.node)];
      parent.feature = split.feature;
      parent.threshold = split.threshold;
      parent.left = left_id;
      parent.right = right_id;
      // Right pushed first so the left subtree is expanded first.
      stack.push_back({right_id, job.depth + 1, std::move(right)});
      stack.push_back({left_id, job.depth + 1, std::move(left)});
    }
    return tree;
  }

 private:
  SplitChoice best_split(const std::vector<std::size_t>& sample,
                         const std::array<std::uint32_t, 2>& counts) {
    std::array<std::size_t, kNumFeatures> order{};
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates; keep drawing past constant features until
    // `per_split_` informative ones were examined.
    const double n = static_cast<double>(sample.size());
    const double parent = impurity(params_.criterion, counts[0], counts[1]);
    SplitChoice best;
    std::size_t examined = 0;
    std::vector<std::pair<double, bool>> column(sample.size());
    for (std::size_t k = 0; k < kNumFeatures && examined < per_split_; ++k) {
      std::swap(order[k], order[k + rng_.below(kNumFeatures - k)]);
      const std::size_t f = order[k];
      for (std::size_t s = 0; s < sample.size(); ++s) {
        column[s] = {rows_[sample[s]].features[f], rows_[sample[s]].label};
      }
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;
      ++examined;
      double left0 = 0, left1 = 0;
      for (std::size_t s = 0; s + 1 < column.size(); ++s) {
        (column[s].second ? left1 : left0) += 1.0;
        if (column[s].first == column[s + 1].first) continue;
        const double nl = left0 + left1, nr = n - nl;
        const double right0 = counts[0] - left0, right1 = counts[1] - left1;
        const double gain = parent - nl / n * impurity(params_.criterion, left0, left1) -
                            nr / n * impurity(params_.criterion, right0, right1);
        if (gain > best.gain + 1e-12) {
          best.feature = static_cast<int>(f);
          best.threshold = column[s].first + (column[s + 1].first - column[s].first) / 2.0;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  const std::vector<FeatureRow>& rows_;
  const ForestParams& params_;
  Rng& rng_;
  std::size_t per_split_;
  double root_size_ = 1.0;
};

}  // namespace

ForestModel train_forest(const std::vector<FeatureRow>& train, const ForestParams& params,
                         std::uint64_t seed) {
  if (train.empty()) throw DegenerateData("training set is empty");
  const auto positives = std::count_if(train.begin(), train.end(), [](auto& r) { return r.label; });
  if (positives == 0 || static_cast<std::size_t>(positives) == train.size()) {
    throw DegenerateData("training set must contain both labels");
  }
  if (params.n_estimators < 1 || params.max_depth < 1) {
    throw std::invalid_argument("n_estimators and max_depth must be positive");
  }
  ForestModel model;
  model.params = params;
  model.training_seed = seed;
  model.trees.reserve(static_cast<std::size_t>(params.n_estimators));
  for (int t = 0; t < params.n_estimators; ++t) {
    Rng rng(derive_seed(seed, "tree", std::to_string(t)));
    std::vector<std::size_t> sample(train.size());
    for (auto& s : sample) s = rng.below(train.size());
    TreeBuilder builder(train, params, rng);
    model.trees.push_back(builder.build(std::move(sample)));
  }
  model.feature_importances = gini_importance(model);
  return model;
}

ScriptVerdict predict_script(const ForestModel& model, const Features& features) {
  if (model.trees.empty()) throw std::invalid_argument("model has no trees");
  std::size_t positive = 0;
  for (const auto& tree : model.trees) positive += tree.predict(features) ? 1 : 0;
  const double votes = static_cast<double>(positive) / static_cast<double>(model.trees.size());
  return {2 * positive >= model.trees.size(), votes};
}

Features gini_importance(const ForestModel& model) {
  Features total{};
  for (const auto& tree : model.trees) {
    const double sum = std::accumulate(tree.importances.begin(), tree.importances.end(), 0.0);
    if (sum <= 0.0) continue;
    for (std::size_t f = 0; f < kNumFeatures; ++f) total[f] += tree.importances[f] / sum;
  }
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  if (sum <= 0.0) {
    total.fill(1.0 / static_cast<double>(kNumFeatures));
    return total;
  }
  for (auto& v : total) v /= sum;
  return total;
}

nlohmann::ordered_json forest_to_json(const ForestModel& model) {
  nlohmann::ordered_json doc;
  doc["format"] = "fimprobe-random-forest";
  doc["version"] = 1;
  nlohmann::ordered_json order = nlohmann::ordered_json::array();
  for (auto kind : kFeatureOrder) order.push_back(std::string(to_string(kind)) + "_hits");
  doc["feature_order"] = order;
  doc["hyperparams"] = {
      {"n_estimators", model.params.n_estimators},
      {"max_features", model.params.max_features == MaxFeatures::Sqrt ? "sqrt" : "log2"},
      {"max_depth", model.params.max_depth},
      {"split_criterion", model.params.criterion == SplitCriterion::Gini ? "gini" : "entropy"}};
  doc["training_seed"] = model.training_seed;
  doc["feature_importances"] = model.feature_importances;
  nlohmann::ordered_json trees = nlohmann::ordered_json::array();
  for (const auto& tree : model.trees) {
    nlohmann::ordered_json t;
    t["importances"] = tree.importances;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : tree.nodes) {
      nodes.push_back(nlohmann::ordered_json::array(
          {n.feature, n.threshold, n.left, n.right, n.counts[0], n.counts[1]}));
    }
    t["nodes"] = nodes;
    trees.push_back(t);
  }
  doc["trees"] = trees;
  return doc;
}

ForestModel forest_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "fimprobe-random-forest") {
    throw std::runtime_error("not a random forest model document");
  }
  std::size_t k = 0;
  for (const auto& name : doc.at("feature_order")) {
    if (name.get<std::string>() != std::string(to_string(kFeatureOrder.at(k++))) + "_hits") {
      throw std::runtime_error("model feature order does not match");
    }
  }
  ForestModel model;
  const auto& hp = doc.at("hyperparams");
  model.params.n_estimators = hp.at("n_estimators").get<int>();
  model.params.max_features =
      hp.at("max_features").get<std::string>() == "sqrt" ? MaxFeatures::Sqrt : MaxFeatures::Log2;
  model.params.max_depth = hp.at("max_depth").get<int>();
  model.params.criterion = hp.at("split_criterion").get<std::string>() == "gini"
                               ? SplitCriterion::Gini
                               : SplitCriterion::Entropy;
  model.training_seed = doc.at("training_seed").get<std::uint64_t>();
  model.feature_importances = doc.at("feature_importances").get<Features>();
  for (const auto& t : doc.at("trees")) {
    DecisionTree tree;
    tree.importances = t.at("importances").get<Features>();
    for (const auto& n : t.at("nodes")) {
      TreeNode node;
      node.feature = n.at(0).get<int>();
      node.threshold = n.at(1).get<double>();
      node.left = n.at(2).get<int>();
      node.right = n.at(3).get<int>();
      node.counts = {n.at(4).get<std::uint32_t>(), n.at(5).get<std::uint32_t>()};
      tree.nodes.push_back(node);
    }
    if (tree.nodes.empty()) throw std::runtime_error("tree without nodes");
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace fimprobe
