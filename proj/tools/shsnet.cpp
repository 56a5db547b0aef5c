// shsnet command-line frontend.
//
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 missing artifact, 5 algorithmic failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shsnet/autodiff.hpp"
#include "shsnet/classical.hpp"
#include "shsnet/eval.hpp"
#include "shsnet/geometry.hpp"
#include "shsnet/model.hpp"
#include "shsnet/training.hpp"

namespace fs = std::filesystem;
using namespace shsnet;

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kMissing = 4, kFailure = 5 };

struct UsageError : Error {
  using Error::Error;
};

struct MissingArtifact : Error {
  using Error::Error;
};

// ---- gen-data

struct GenDataArgs {
  std::string shape;
  std::size_t n = 5000;
  double noise = 0.0;
  std::string density = "none";
  std::uint64_t seed = 0;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  const auto kind = parse_shape_kind(a.shape);
  if (!kind) throw UsageError("unknown shape '" + a.shape + "' (sphere, torus, box, plane)");
  const auto density = parse_density(a.density);
  if (!density) throw UsageError("unknown density '" + a.density + "' (none, stripe, gradient)");
  if (a.n == 0) throw UsageError("--n must be positive");
  PointCloud cloud = generate_shape(*kind, a.n, a.seed);
  cloud = apply_density(cloud, *density, a.seed);
  cloud = add_noise(cloud, a.noise, a.seed);
  save_xyz(a.out, cloud);
  std::cerr << "wrote " << cloud.size() << " points to " << a.out << "\n";
  return kOk;
}

// ---- estimate

struct EstimateArgs {
  std::string method;
  std::string in;
  std::string out;
  std::optional<std::size_t> k;
  std::string checkpoint;
  int jet_order = 2;
  std::uint64_t seed = 0;
};

model::Checkpoint require_checkpoint(const std::string& path) {
  if (path.empty()) throw MissingArtifact("a checkpoint is required (--checkpoint)");
  if (!fs::exists(path)) throw MissingArtifact("checkpoint '" + path + "' does not exist");
  return model::load_checkpoint(path);
}

int run_estimate(const EstimateArgs& a) {
  if (a.method != "pca" && a.method != "jet" && a.method != "shs")
    throw UsageError("unknown method '" + a.method + "' (pca, jet, shs)");
  if (a.method != "shs" && !a.checkpoint.empty()) throw UsageError("--checkpoint only applies to --method shs");
  const PointCloud cloud = load_xyz(a.in);
  std::vector<Vec3> normals;
  if (a.method == "shs") {
    const auto ck = require_checkpoint(a.checkpoint);
    if (a.k && *a.k != ck.config.patch_size)
      throw UsageError("--k " + std::to_string(*a.k) + " differs from the checkpoint's patch size " +
                       std::to_string(ck.config.patch_size));
    if (cloud.size() < ck.config.patch_size) throw UsageError("cloud has fewer points than the patch size");
    for (const auto& n : model::predict_cloud(cloud, ck.params, ck.config, a.seed)) normals.push_back(n.oriented);
  } else {
    const std::size_t k = a.k.value_or(32);
    if (k < 3 || k > cloud.size()) throw UsageError("--k must lie in [3, number of points]");
    normals = classical::estimate_normals(cloud, a.method == "pca" ? classical::Estimator::pca : classical::Estimator::jet,
                                          k, a.jet_order);
  }
  save_normals(a.out, normals);
  return kOk;
}

// ---- orient

struct OrientArgs {
  std::string in;
  std::string normals;
  std::size_t k_graph = 10;
  std::string out;
};

int run_orient(const OrientArgs& a) {
  const PointCloud cloud = load_xyz(a.in);
  const auto normals = load_normals(a.normals);
  if (normals.size() != cloud.size())
    throw UsageError("normals file has " + std::to_string(normals.size()) + " rows, points file " +
                     std::to_string(cloud.size()));
  save_normals(a.out, classical::mst_orient(cloud, normals, a.k_graph));
  return kOk;
}

// ---- train

struct TrainArgs {
  std::string config;
  std::string data_dir;
  std::string out_checkpoint;
  std::string loss_csv;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

std::vector<fs::path> xyz_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".xyz") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .xyz files in '" + dir.string() + "'");
  return files;
}

int run_train(const TrainArgs& a) {
  if (!fs::exists(a.config)) throw IoError("cannot open config '" + a.config + "'");
  auto rc = training::load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  std::vector<PointCloud> data;
  for (const auto& f : xyz_files(a.data_dir)) {
    data.push_back(load_xyz(f));
    if (!data.back().has_normals()) throw UsageError("training file '" + f.string() + "' has no normals");
  }
  auto params = model::init_params(rc.model, rc.train.seed);
  const auto history = training::train(params, data, rc.model, rc.train, [&](const training::EpochStats& s) {
    if (!a.quiet)
      std::cerr << "epoch " << s.epoch << "/" << rc.train.epochs << "  lr " << s.lr << "  loss " << s.mean_loss << "  ("
                << s.seconds << " s)\n";
  });
  model::save_checkpoint(a.out_checkpoint, rc.model, params);
  const std::string csv = a.loss_csv.empty() ? a.out_checkpoint + ".loss.csv" : a.loss_csv;
  training::write_loss_csv(csv, history);
  return kOk;
}

// ---- eval

struct EvalArgs {
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  bool oriented = false;
  bool flip_majority = false;
  std::string report;
  std::string heatmap;
};

// Ground truth from a 6-column .xyz (points + normals) or a .normals file.
struct GroundTruth {
  std::optional<PointCloud> cloud;
  std::vector<Vec3> normals;
};

GroundTruth load_gt(const std::string& path) {
  GroundTruth gt;
  if (fs::path(path).extension() == ".xyz") {
    gt.cloud = load_xyz(path);
    if (!gt.cloud->has_normals()) throw UsageError("ground-truth file '" + path + "' has no normals");
    gt.normals = gt.cloud->normals();
  } else {
    gt.normals = load_normals(path);
  }
  return gt;
}

int run_eval(const EvalArgs& a) {
  if (a.pred.size() != a.gt.size()) throw UsageError("--pred and --gt must be given the same number of times");
  if (!a.heatmap.empty() && a.pred.size() != 1) throw UsageError("--heatmap needs exactly one --pred/--gt pair");
  std::vector<eval::EvalReport> reports;
  nlohmann::json shapes = nlohmann::json::array();
  for (std::size_t i = 0; i < a.pred.size(); ++i) {
    const auto gt = load_gt(a.gt[i]);
    auto pred = load_normals(a.pred[i]);
    if (pred.size() != gt.normals.size())
      throw UsageError("'" + a.pred[i] + "' has " + std::to_string(pred.size()) + " normals, '" + a.gt[i] + "' has " +
                       std::to_string(gt.normals.size()));
    if (pred.empty()) throw UsageError("'" + a.pred[i] + "' is empty");
    bool flipped = false;
    if (a.flip_majority) pred = eval::majority_flip(pred, gt.normals, &flipped);
    reports.push_back(eval::evaluate(pred, gt.normals));
    auto j = eval::to_json(reports.back());
    j["pred"] = a.pred[i];
    j["gt"] = a.gt[i];
    j["flipped"] = flipped;
    shapes.push_back(std::move(j));
    if (!a.heatmap.empty()) {
      if (!gt.cloud) throw UsageError("--heatmap needs point positions; pass the ground truth as .xyz");
      eval::write_error_csv(a.heatmap, *gt.cloud,
                            a.oriented ? reports.back().errors_oriented : reports.back().errors_unoriented);
    }
  }
  const auto summary = eval::summarize(reports);
  nlohmann::json out;
  out["mode"] = a.oriented ? "oriented" : "unoriented";
  out["summary"] = eval::to_json(summary);
  out["shapes"] = std::move(shapes);
  if (!a.report.empty()) detail::write_text(a.report, out.dump(2) + "\n");

  const auto& r = reports.front();
  std::cout.precision(17);
  const double rmse = a.oriented ? summary.pooled_oriented : summary.pooled_unoriented;
  std::cout << "rmse = " << rmse << "\n";
  std::cout << "rmse_oriented = " << summary.pooled_oriented << "\n";
  std::cout << "rmse_unoriented = " << summary.pooled_unoriented << "\n";
  std::cout << "shape_mean_rmse = " << (a.oriented ? summary.shape_mean_oriented : summary.shape_mean_unoriented) << "\n";
  if (reports.size() == 1) {
    std::cout << "auc = " << (a.oriented ? r.pgp_oriented.auc : r.pgp_unoriented.auc) << "\n";
    std::cout << "sign_accuracy = " << r.sign_accuracy << "\n";
  }
  return kOk;
}

// ---- grad-check

struct GradCheckArgs {
  std::uint64_t seed = 0;
  std::size_t samples = 2;
  double tolerance = 1e-3;
  double step = 1e-5;
};

// End-to-end check of the total loss on the tiny configuration.
int run_grad_check(const GradCheckArgs& a) {
  const auto check = training::model_grad_check(model::ModelConfig::tiny(), a.seed, a.samples, a.step);
  const auto& report = check.report;
  std::cout << "parameters = " << check.scalars << "\n";
  std::cout << "max_relative_error = " << report.max_relative_error << "\n";
  std::cout << "worst = " << check.names[report.param] << "[" << report.entry << "] analytic " << report.analytic
            << " numeric " << report.numeric << "\n";
  const bool ok = report.max_relative_error < a.tolerance;
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oriented point cloud normal estimation"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic shape with oriented ground-truth normals");
  c_gen->add_option("--shape", gen.shape, "sphere | torus | box | plane")->required();
  c_gen->add_option("--n", gen.n, "Points before density thinning");
  c_gen->add_option("--noise", gen.noise, "Gaussian noise, fraction of the bounding-box diagonal")->check(CLI::NonNegativeNumber);
  c_gen->add_option("--density", gen.density, "none | stripe | gradient");
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--out", gen.out, "Output .xyz (6 columns)")->required();

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "Estimate normals with PCA, jets or a trained network");
  c_est->add_option("--method", est.method, "pca | jet | shs")->required();
  c_est->add_option("--in", est.in, "Input .xyz")->required();
  c_est->add_option("--out", est.out, "Output .normals")->required();
  c_est->add_option("--k", est.k, "Neighborhood size (default 32; shs uses the checkpoint's)");
  c_est->add_option("--checkpoint", est.checkpoint, "Trained model (shs only)");
  c_est->add_option("--jet-order", est.jet_order)->check(CLI::Range(1, 4));
  c_est->add_option("--seed", est.seed);

  OrientArgs ori;
  auto* c_ori = app.add_subcommand("orient", "Propagate a consistent sign over a minimum spanning tree");
  c_ori->add_option("--in", ori.in, "Points .xyz")->required();
  c_ori->add_option("--normals", ori.normals, "Unoriented .normals")->required();
  c_ori->add_option("--k-graph", ori.k_graph, "Neighbors per point in the graph")->check(CLI::Range(2, 1000));
  c_ori->add_option("--out", ori.out, "Output .normals")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the network on every .xyz file of a directory");
  c_tr->add_option("--config", tr.config, "key = value run configuration")->required();
  c_tr->add_option("--data-dir", tr.data_dir)->required();
  c_tr->add_option("--out-checkpoint", tr.out_checkpoint)->required();
  c_tr->add_option("--loss-csv", tr.loss_csv, "Loss history (default <checkpoint>.loss.csv)");
  c_tr->add_option("--seed", tr.seed, "Overrides the config's seed");
  c_tr->add_flag("--quiet", tr.quiet);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Angle RMSE, PGP curves and per-point errors");
  c_ev->add_option("--pred", ev.pred, "Predicted .normals (repeatable)")->required();
  c_ev->add_option("--gt", ev.gt, "Ground truth .xyz or .normals (repeatable)")->required();
  c_ev->add_flag("--oriented", ev.oriented, "Report oriented errors as primary");
  c_ev->add_flag("--flip-majority", ev.flip_majority, "Flip each prediction set if most normals point inward");
  c_ev->add_option("--report", ev.report, "JSON report path");
  c_ev->add_option("--heatmap", ev.heatmap, "Per-point x,y,z,error CSV");

  GradCheckArgs gc;
  auto* c_gc = app.add_subcommand("grad-check", "Finite-difference check of the full loss on the tiny model");
  c_gc->add_option("--seed", gc.seed);
  c_gc->add_option("--samples", gc.samples)->check(CLI::Range(1, 16));
  c_gc->add_option("--tolerance", gc.tolerance)->check(CLI::PositiveNumber);
  c_gc->add_option("--step", gc.step, "central-difference step")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (c_gen->parsed()) return run_gen_data(gen);
    if (c_est->parsed()) return run_estimate(est);
    if (c_ori->parsed()) return run_orient(ori);
    if (c_tr->parsed()) return run_train(tr);
    if (c_ev->parsed()) return run_eval(ev);
    if (c_gc->parsed()) return run_grad_check(gc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissing;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const MalformedLine& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const EmptyCloud& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const DisconnectedGraph& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
