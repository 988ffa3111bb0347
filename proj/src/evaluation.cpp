#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "fimprobe/classification.hpp"
#include "fimprobe/util.hpp"

namespace fimprobe {

namespace {
double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

EvalReport metrics_from_confusion(const Confusion& c) {
  EvalReport r;
  r.confusion = c;
  const std::size_t total = c.tp + c.fp + c.tn + c.fn;
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.sensitivity = ratio(c.tp, c.tp + c.fn);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.accuracy = ratio(c.tp + c.tn, total);
  const double pr = r.precision + r.sensitivity;
  r.f_score = pr > 0.0 ? 2.0 * r.precision * r.sensitivity / pr : 0.0;
  if (c.tp + c.fp == 0) r.degenerate.push_back("precision");
  if (c.tp + c.fn == 0) r.degenerate.push_back("sensitivity");
  if (c.tn + c.fp == 0) r.degenerate.push_back("specificity");
  if (total == 0) r.degenerate.push_back("accuracy");
  if (pr <= 0.0) r.degenerate.push_back("f_score");
  return r;
}

EvalReport compute_metrics(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
  if (predicted.size() != actual.size()) {
    throw LengthMismatch("predicted and actual label vectors differ in length");
  }
  Confusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i]) {
      ++(actual[i] ? c.tp : c.fp);
    } else {
      ++(actual[i] ? c.fn : c.tn);
    }
  }
  return metrics_from_confusion(c);
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision;
  j["accuracy"] = r.accuracy;
  j["f_score"] = r.f_score;
  j["sensitivity"] = r.sensitivity;
  j["specificity"] = r.specificity;
  j["confusion"] = {{"tp", r.confusion.tp},
                    {"fp", r.confusion.fp},
                    {"tn", r.confusion.tn},
                    {"fn", r.confusion.fn}};
  j["degenerate"] = r.degenerate;
  return j;
}

RepoCriterion RepoCriterion::fraction(double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw std::invalid_argument("repository fraction must be in (0, 1]");
  }
  return {Mode::Fraction, theta};
}

std::string RepoCriterion::describe() const {
  if (mode == Mode::SinglePositive) return "single_positive";
  return "fraction>=" + format_real(theta);
}

bool aggregate_repository(const std::vector<bool>& verdicts, const RepoCriterion& criterion) {
  if (verdicts.empty()) throw EmptyRepository("repository has no script verdicts");
  const auto positive =
      static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), true));
  if (criterion.mode == RepoCriterion::Mode::SinglePositive) return positive > 0;
  return static_cast<double>(positive) / static_cast<double>(verdicts.size()) >= criterion.theta;
}

DatasetSplit split_dataset(const std::vector<FeatureRow>& rows, double test_fraction,
                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must be in (0, 1)");
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> projects;  // positives, total
  for (const auto& r : rows) {
    auto& p = projects[r.project_id];
    p.first += r.label ? 1 : 0;
    ++p.second;
  }
  if (projects.size() < 2) {
    throw InsufficientData("need at least two projects to split, got " +
                           std::to_string(projects.size()));
  }
  std::array<std::vector<std::string>, 2> strata;
  for (const auto& [id, p] : projects) strata[2 * p.first >= p.second ? 1 : 0].push_back(id);

  const std::size_t n = projects.size();
  const auto wanted = static_cast<std::size_t>(
      std::clamp<long long>(std::llround(test_fraction * static_cast<double>(n)), 1,
                            static_cast<long long>(n) - 1));
  // Largest-remainder allocation of test projects across the two strata.
  std::array<std::size_t, 2> take{};
  std::array<double, 2> rem{};
  for (std::size_t s = 0; s < 2; ++s) {
    const double exact = static_cast<double>(wanted) * static_cast<double>(strata[s].size()) /
                         static_cast<double>(n);
    take[s] = static_cast<std::size_t>(std::floor(exact));
    rem[s] = exact - static_cast<double>(take[s]);
  }
  while (take[0] + take[1] < wanted) {
    const std::size_t s = rem[1] >= rem[0] ? 1 : 0;
    const std::size_t pick = take[s] < strata[s].size() ? s : 1 - s;
    ++take[pick];
    rem[pick] = -1.0;
  }

  std::map<std::string, bool> in_test;
  for (std::size_t s = 0; s < 2; ++s) {
    Rng rng(derive_seed(seed, "split", std::to_string(s)));
    rng.shuffle(strata[s]);
    for (std::size_t i = 0; i < strata[s].size(); ++i) in_test[strata[s][i]] = i < take[s];
  }
  DatasetSplit split;
  for (const auto& r : rows) (in_test[r.project_id] ? split.test : split.train).push_back(r);
  return split;
}

std::vector<ForestParams> ParamGrid::expand() const {
  std::vector<ForestParams> out;
  for (int ne : n_estimators) {
    for (auto mf : max_features) {
      for (int md : max_depth) {
        for (auto cr : criteria) out.push_back({ne, mf, md, cr});
      }
    }
  }
  return out;
}

bool outranks(const GridEntry& candidate, const GridEntry& incumbent) {
  auto key = [](const GridEntry& e) {
    return std::make_tuple(e.report.f_score, e.report.sensitivity, -e.params.n_estimators,
                           -e.params.max_depth);
  };
  return key(candidate) > key(incumbent);
}

GridResult grid_search(const DatasetSplit& split, const ParamGrid& grid, std::uint64_t seed) {
  if (split.test.empty()) throw InsufficientData("test split is empty");
  const auto configs = grid.expand();
  if (configs.empty()) throw std::invalid_argument("parameter grid is empty");
  std::vector<bool> actual;
  for (const auto& r : split.test) actual.push_back(r.label);

  GridResult result;
  bool have_best = false;
  for (const auto& params : configs) {
    auto model = train_forest(split.train, params, seed);
    std::vector<bool> predicted;
    for (const auto& r : split.test) predicted.push_back(predict_script(model, r.features).label);
    auto report = compute_metrics(predicted, actual);
    result.entries.push_back({params, report});
    if (!have_best || outranks(result.entries.back(), {result.best.params, result.best_report})) {
      result.best = std::move(model);
      result.best_report = report;
      have_best = true;
    }
  }
  return result;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

CorrelationMatrix spearman_matrix(const std::vector<FeatureRow>& rows) {
  if (rows.size() < 3) throw InsufficientData("rank correlation needs at least three rows");
  std::array<std::vector<double>, 7> ranks;
  for (std::size_t c = 0; c < 7; ++c) {
    std::vector<double> col;
    col.reserve(rows.size());
    for (const auto& r : rows) col.push_back(c < 6 ? r.features[c] : (r.label ? 1.0 : 0.0));
    ranks[c] = average_ranks(col);
  }
  const double n = static_cast<double>(rows.size());
  std::array<double, 7> mean{}, sd{};
  for (std::size_t c = 0; c < 7; ++c) {
    mean[c] = n > 0 ? std::accumulate(ranks[c].begin(), ranks[c].end(), 0.0) / n : 0.0;
    double ss = 0.0;
    for (double v : ranks[c]) ss += (v - mean[c]) * (v - mean[c]);
    sd[c] = std::sqrt(ss);
  }
  CorrelationMatrix m{};
  for (std::size_t a = 0; a < 7; ++a) {
    for (std::size_t b = 0; b < 7; ++b) {
      if (a == b) {
        m[a][b] = 1.0;
        continue;
      }
      if (sd[a] == 0.0 || sd[b] == 0.0) continue;  // constant column: no defined correlation
      double cov = 0.0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        cov += (ranks[a][i] - mean[a]) * (ranks[b][i] - mean[b]);
      }
      m[a][b] = std::clamp(cov / (sd[a] * sd[b]), -1.0, 1.0);
    }
  }
  return m;
}

}  // namespace fimprobe
