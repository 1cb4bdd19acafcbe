#pragma once

// Versioned evaluation report: one row per data variant (raw, a
// granularity, a baseline), columns per activity plus overall and attribute
// accuracies.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strata/eval/ablation.hpp"
#include "strata/eval/classifier.hpp"
#include "strata/eval/metrics.hpp"
#include "strata/eval/pedometer.hpp"
#include "strata/eval/privacy.hpp"

namespace strata::eval {

inline constexpr int kReportFormatVersion = 1;

struct ReportRow {
  std::string method;
  std::optional<int> granularity;
  CvResult activity;
  std::map<std::string, CvResult> attributes;
  std::optional<double> utility_ratio;  // against the raw row
};

struct EvaluationReport {
  std::uint64_t classifier_hash = 0;
  std::vector<std::string> activity_names;
  std::vector<ReportRow> rows;
  std::map<int, double> hscores;  // layer -> H-score
  std::optional<PedometerResult> pedometer;
  std::optional<LaplaceSweep> laplace;
  std::vector<ModalityResult> modalities;

  /// Rejects rows scored with a different classifier budget than the rest.
  void add_row(ReportRow row) {
    auto check = [&](const CvResult& r) {
      if (classifier_hash == 0) classifier_hash = r.config_hash;
      if (r.config_hash != classifier_hash)
        throw SchemaError("eval", "row '" + row.method + "' was scored with a different classifier configuration");
    };
    check(row.activity);
    for (const auto& [_, r] : row.attributes) check(r);
    rows.push_back(std::move(row));
  }

  const ReportRow& row(const std::string& method) const {
    for (const auto& r : rows)
      if (r.method == method) return r;
    throw RangeError("eval", "report has no row '" + method + "'");
  }
};

/// Recall per true class from a confusion matrix.
inline std::vector<double> per_class_accuracy(const std::vector<std::vector<int>>& confusion) {
  std::vector<double> out;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    int n = 0;
    for (int v : confusion[i]) n += v;
    out.push_back(n == 0 ? 0.0 : static_cast<double>(confusion[i][i]) / n);
  }
  return out;
}

inline nlohmann::json to_json(const CvResult& r) {
  return {{"target", r.target},        {"mean_accuracy", r.mean_accuracy}, {"fold_accuracy", r.fold_accuracy},
          {"folds", r.folds},          {"seed", r.seed},                   {"config_hash", r.config_hash},
          {"confusion", r.confusion}};
}

inline nlohmann::json to_json(const EvaluationReport& rep) {
  nlohmann::json j;
  j["format"] = "strata.evaluation_report";
  j["version"] = kReportFormatVersion;
  j["classifier_hash"] = rep.classifier_hash;
  j["activity_names"] = rep.activity_names;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json row;
    row["method"] = r.method;
    row["granularity"] = r.granularity ? nlohmann::json(*r.granularity) : nlohmann::json(nullptr);
    nlohmann::json per_act;
    const auto pc = per_class_accuracy(r.activity.confusion);
    for (std::size_t a = 0; a < pc.size() && a < rep.activity_names.size(); ++a) per_act[rep.activity_names[a]] = pc[a];
    row["per_activity"] = per_act;
    row["activity"] = to_json(r.activity);
    for (const auto& [name, cv] : r.attributes) {
      row["attributes"][name] = to_json(cv);
      row["attributes"][name]["verdict"] =
          to_string(anonymity_verdict(cv.mean_accuracy, static_cast<int>(cv.confusion.size())));
    }
    row["utility_ratio"] = r.utility_ratio ? nlohmann::json(*r.utility_ratio) : nlohmann::json(nullptr);
    j["rows"].push_back(row);
  }
  for (const auto& [layer, h] : rep.hscores) j["hscores"][std::to_string(layer)] = h;
  if (rep.pedometer) {
    j["pedometer"]["true_steps"] = rep.pedometer->true_steps;
    for (const auto& [k, v] : rep.pedometer->counted_steps) {
      j["pedometer"]["counted_steps"][k] = v;
      j["pedometer"]["error_rate"][k] = rep.pedometer->error_rate(k);
    }
  }
  if (rep.laplace) {
    j["laplace"] = {{"scale_unit", "multiple of per-channel std"},
                    {"scales", rep.laplace->scales},
                    {"activity_accuracy", rep.laplace->activity_accuracy},
                    {"attribute_accuracy", rep.laplace->attribute_accuracy},
                    {"mean_activity", rep.laplace->mean_activity},
                    {"mean_attribute", rep.laplace->mean_attribute}};
  }
  for (const auto& m : rep.modalities)
    j["modalities"].push_back({{"modality", m.modality},
                               {"channels", m.channels},
                               {"raw_accuracy", m.raw_accuracy},
                               {"recon_accuracy", m.recon_accuracy},
                               {"utility_ratio", m.utility_ratio}});
  return j;
}

/// Scores `raw` and every variant with one classifier configuration and
/// seed. Variants must be index-aligned with `raw`.
inline EvaluationReport evaluate(const Dataset& raw, const std::vector<std::pair<std::string, const Dataset*>>& variants,
                                 const std::vector<std::string>& attributes, const ClassifierConfig& cfg,
                                 std::uint64_t seed) {
  EvaluationReport rep;
  rep.activity_names = raw.activity_names;
  auto score = [&](const std::string& method, const Dataset& d) {
    if (d.size() != raw.size()) throw SchemaError("eval", "variant '" + method + "' is not aligned with the raw data");
    ReportRow row;
    row.method = method;
    row.activity = cross_validate(d, Target::activity(), cfg, seed);
    for (const auto& a : attributes) row.attributes[a] = cross_validate(d, Target::attr(a), cfg, seed);
    return row;
  };
  rep.add_row(score("raw", raw));
  const double base = rep.rows.front().activity.mean_accuracy;
  for (const auto& [name, d] : variants) {
    ReportRow row = score(name, *d);
    if (name.rfind("granu", 0) == 0) row.granularity = std::stoi(name.substr(5));
    row.utility_ratio = utility_ratio(base, row.activity.mean_accuracy);
    rep.add_row(std::move(row));
  }
  return rep;
}

}  // namespace strata::eval
