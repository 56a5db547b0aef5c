#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shsnet/eval/metrics.hpp"
#include "shsnet/geometry/io.hpp"
#include "shsnet/geometry/point_cloud.hpp"

namespace shsnet::eval {

// Per-point heatmap rows: x,y,z,error_degrees.
inline std::string error_csv(const PointCloud& cloud, std::span<const double> errors) {
  if (errors.size() != cloud.size()) throw InvalidArgument("error count does not match the cloud");
  std::string out = "x,y,z,error_deg\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.point(i);
    for (int c = 0; c < 3; ++c) {
      detail::append_number(out, p[c]);
      out += ',';
    }
    detail::append_number(out, errors[i]);
    out += '\n';
  }
  return out;
}

inline void write_error_csv(const std::filesystem::path& path, const PointCloud& cloud, std::span<const double> errors) {
  detail::write_text(path, error_csv(cloud, errors));
}

inline nlohmann::json to_json(const PgpCurve& c) {
  nlohmann::json j;
  j["thresholds"] = c.thresholds;
  j["fractions"] = c.fractions;
  j["auc"] = c.auc;
  return j;
}

// Report without the per-point arrays; those go to the CSV.
inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["rmse_oriented"] = r.rmse_oriented;
  j["rmse_unoriented"] = r.rmse_unoriented;
  j["sign_accuracy"] = r.sign_accuracy;
  j["points"] = r.errors_oriented.size();
  j["pgp_unoriented"] = to_json(r.pgp_unoriented);
  j["pgp_oriented"] = to_json(r.pgp_oriented);
  return j;
}

inline nlohmann::json to_json(const Summary& s) {
  return {{"pooled_rmse_oriented", s.pooled_oriented},
          {"pooled_rmse_unoriented", s.pooled_unoriented},
          {"shape_mean_rmse_oriented", s.shape_mean_oriented},
          {"shape_mean_rmse_unoriented", s.shape_mean_unoriented}};
}

}  // namespace shsnet::eval
