// surkit command-line front end.
//
//   surkit fit          --annotations A.csv --models all --out fits.csv [--plot-dir DIR]
//   surkit model-table  --fits fits.csv --out table.csv
//   surkit predict      --annotations A.csv --features F.json --mode src --family Gaussian --out report.csv
//   surkit synth        [--spec S.json] [flags] --out-annotations A.csv --out-features F.json
//
// Exit codes: 0 ok, 1 unexpected failure, 2 bad input (parse error, invalid
// spec or flag), 3 empty dataset, 4 features lack the per-QP blocks the mode needs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "surkit/error.hpp"
#include "surkit/fitting.hpp"
#include "surkit/io.hpp"
#include "surkit/pipeline.hpp"
#include "surkit/plot.hpp"
#include "surkit/synth.hpp"

namespace fs = std::filesystem;
using namespace surkit;

namespace {

enum Exit { kOk = 0, kFailure = 1, kBadInput = 2, kEmpty = 3, kMissingPvs = 4 };

int exit_code(errc code) {
  switch (code) {
    case errc::empty_input:
    case errc::empty_samples:
    case errc::empty_matrix:
      return kEmpty;
    case errc::missing_pvs_features:
      return kMissingPvs;
    case errc::did_not_converge:
    case errc::qp_infeasible:
    case errc::non_monotone_model:
      return kFailure;
    default:
      return kBadInput;
  }
}

ModelFamily family_arg(const std::string& name) {
  const auto f = parse_family(name);
  if (!f) throw error(errc::invalid_params, "unknown model family '" + name + "'");
  return *f;
}

std::vector<ModelFamily> models_arg(const std::string& list) {
  if (list == "all") return {kAllFamilies.begin(), kAllFamilies.end()};
  std::vector<ModelFamily> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto f = family_arg(item);
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  }
  if (out.empty()) throw error(errc::invalid_params, "--models lists no families");
  return out;
}

// File-name-safe "video_resolution".
std::string plot_name(const std::string& video, const std::string& res) {
  std::string s = video + "_" + res;
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return s + ".svg";
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string annotations, models = "all", out, plot_dir;
  double p = 0.75;
};

int run_fit(const FitArgs& a) {
  check_threshold(a.p);
  const auto families = models_arg(a.models);
  const auto groups = io::parse_annotations(io::read_file(a.annotations));
  if (groups.empty()) throw error(errc::empty_input, a.annotations + " holds no annotations");
  std::vector<FitResult> all;
  for (const auto& g : groups) {
    auto fits = fit_all(g, families, a.p);
    if (!a.plot_dir.empty()) {
      io::atomic_write(fs::path(a.plot_dir) / plot_name(g.video_id, g.resolution),
                       plot::fit_plot_svg(compute_empirical_sur(g), fits, a.p, g.video_id + " (" + g.resolution + ")"));
    }
    for (auto& f : fits) {
      if (!f.converged) std::cerr << "warning: " << g.video_id << "/" << g.resolution << ": " << family_name(f.family())
                                  << " did not converge (" << to_string(f.status) << ")\n";
      all.push_back(std::move(f));
    }
  }
  io::atomic_write(a.out, io::emit_fits(all, a.p));
  return kOk;
}

struct TableArgs {
  std::string fits, out;
};

int run_model_table(const TableArgs& a) {
  const auto fits = io::parse_fits(io::read_file(a.fits));
  if (fits.empty()) throw error(errc::empty_input, a.fits + " holds no fits");
  io::atomic_write(a.out, io::emit_model_table(aggregate_model_table(fits), fits.front().p));
  return kOk;
}

struct PredictArgs {
  std::string annotations, features, mode = "src", family = "Gaussian", out, per_video;
  int folds = 5;
  std::uint64_t seed = 0;
  double p = 0.75;
  bool no_tune = false;
  std::optional<double> svr_c, svr_epsilon, svr_gamma;
};

int run_predict(const PredictArgs& a) {
  PredictorConfig config;
  const auto mode = parse_mode(a.mode);
  if (!mode) throw error(errc::invalid_params, "unknown mode '" + a.mode + "'");
  config.mode = *mode;
  config.family = family_arg(a.family);
  config.folds = a.folds;
  config.seed = a.seed;
  config.p = a.p;
  config.tune = !a.no_tune;
  if (a.svr_c) config.hyper.c = *a.svr_c;
  if (a.svr_epsilon) config.hyper.epsilon = *a.svr_epsilon;
  if (a.svr_gamma) config.hyper.gamma = *a.svr_gamma;
  config.hyper.validate();

  const auto groups = io::parse_annotations(io::read_file(a.annotations));
  const auto features = io::parse_features(io::read_file(a.features));
  if (groups.empty()) throw error(errc::empty_input, a.annotations + " holds no annotations");
  config.grid = features.grid;

  std::map<std::pair<std::string, std::string>, const FeatureRecord*> by_key;
  for (const auto& v : features.videos) by_key[{v.video_id, v.resolution}] = &v;
  std::vector<LabeledVideo> data;
  for (const auto& g : groups) {
    const auto it = by_key.find({g.video_id, g.resolution});
    if (it == by_key.end()) {
      throw error(errc::parse_error, a.features + ": no features for video '" + g.video_id + "' (" + g.resolution + ")");
    }
    for (int s : g.samples) {
      if (!features.grid.contains(s)) {
        throw error(errc::parse_error, a.annotations + ": jnd " + std::to_string(s) + " of '" + g.video_id +
                                           "' is outside the features grid");
      }
    }
    if (config.mode != PredictorMode::src && !it->second->has_pvs()) {
      throw error(errc::missing_pvs_features, "mode " + std::string(to_string(config.mode)) + " needs pvs features, '" +
                                                  g.video_id + "' (" + g.resolution + ") has none");
    }
    data.push_back({*it->second, g});
  }

  const auto report = cross_validate(data, config);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  io::atomic_write(a.out, io::emit_report(report, config.p));
  if (!a.per_video.empty()) io::atomic_write(a.per_video, io::emit_report_videos(report, config.p));
  return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string spec_path, out_annotations, out_features, out_truth;
  std::optional<std::size_t> n_videos, subjects, masking_dim, qd_dim;
  std::optional<std::string> family, ranges, discretization;
  std::optional<double> noise;
  std::vector<std::string> resolutions;
  bool no_pvs = false;
  std::optional<std::uint64_t> seed;
};

Discretization discretization_arg(const std::string& s) {
  if (s == "round" || s == "round-half-even" || s == "round_half_even") return Discretization::round_half_even;
  if (s == "ceil") return Discretization::ceil;
  throw error(errc::invalid_params, "unknown discretization '" + s + "' (round or ceil)");
}

// "15:40,2:8"
std::vector<ParamRange> ranges_arg(const std::string& s) {
  std::vector<ParamRange> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) {
        const double v = std::stod(item);
        out.push_back({v, v});
      } else {
        out.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
      }
    } catch (const std::logic_error&) {
      throw error(errc::invalid_params, "bad range '" + item + "' (expected lo:hi)");
    }
  }
  return out;
}

// JSON spec file; every key is optional and mirrors a flag.
SynthSpec load_spec(const std::string& path) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw error(errc::parse_error, path + ": " + e.what());
  }
  if (!j.is_object()) throw error(errc::parse_error, path + ": spec must be a JSON object");
  static const std::vector<std::string> known{"n_videos", "subjects_per_video", "family", "ranges", "masking_dim",
                                              "qd_dim", "with_pvs", "noise", "resolutions", "grid",
                                              "discretization", "seed"};
  SynthSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw error(errc::parse_error, path + ": unknown key '" + key + "'");
      }
    }
    if (j.contains("family")) {
      s.family = family_arg(j["family"].get<std::string>());
      s.ranges = is_distribution(s.family) ? default_ranges(s.family) : std::vector<ParamRange>{};
    }
    if (j.contains("n_videos")) s.n_videos = j["n_videos"].get<std::size_t>();
    if (j.contains("subjects_per_video")) s.subjects_per_video = j["subjects_per_video"].get<std::size_t>();
    if (j.contains("ranges")) {
      s.ranges.clear();
      for (const auto& r : j["ranges"]) s.ranges.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    }
    if (j.contains("masking_dim")) s.masking_dim = j["masking_dim"].get<std::size_t>();
    if (j.contains("qd_dim")) s.qd_dim = j["qd_dim"].get<std::size_t>();
    if (j.contains("with_pvs")) s.with_pvs = j["with_pvs"].get<bool>();
    if (j.contains("noise")) s.noise = j["noise"].get<double>();
    if (j.contains("resolutions")) s.resolutions = j["resolutions"].get<std::vector<std::string>>();
    if (j.contains("grid")) s.grid = DistortionGrid(j["grid"].at("min").get<int>(), j["grid"].at("max").get<int>());
    if (j.contains("discretization")) s.discretization = discretization_arg(j["discretization"].get<std::string>());
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw error(errc::parse_error, path + ": " + e.what());
  }
  return s;
}

fs::path default_truth_path(const fs::path& annotations) {
  auto p = annotations;
  p.replace_extension();
  p += ".truth.csv";
  return p;
}

int run_synth(const SynthArgs& a) {
  SynthSpec s = a.spec_path.empty() ? SynthSpec{} : load_spec(a.spec_path);
  if (a.family) {
    s.family = family_arg(*a.family);
    if (is_distribution(s.family)) s.ranges = default_ranges(s.family);
  }
  if (a.ranges) s.ranges = ranges_arg(*a.ranges);
  if (a.n_videos) s.n_videos = *a.n_videos;
  if (a.subjects) s.subjects_per_video = *a.subjects;
  if (a.masking_dim) s.masking_dim = *a.masking_dim;
  if (a.qd_dim) s.qd_dim = *a.qd_dim;
  if (a.noise) s.noise = *a.noise;
  if (!a.resolutions.empty()) s.resolutions = a.resolutions;
  if (a.no_pvs) s.with_pvs = false;
  if (a.discretization) s.discretization = discretization_arg(*a.discretization);
  if (a.seed) s.seed = *a.seed;
  s.validate();

  const auto data = gen_dataset(s);
  std::vector<JndSamples> groups;
  std::vector<io::TruthRow> truth;
  for (const auto& v : data) {
    groups.push_back(v.annotations);
    truth.push_back({v.annotations.video_id, v.annotations.resolution, v.truth});
  }
  io::atomic_write(a.out_annotations, io::emit_annotations(groups));
  io::atomic_write(a.out_features, io::emit_features(to_feature_set(s, data)));
  io::atomic_write(a.out_truth.empty() ? default_truth_path(a.out_annotations) : fs::path(a.out_truth),
                   io::emit_truth(truth));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surkit: satisfied-user-ratio modelling and prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "surkit 1.0.0");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit SUR models to each video's empirical curve");
  fit_cmd->add_option("--annotations", fit.annotations, "annotations CSV")->required();
  fit_cmd->add_option("--models", fit.models, "comma-separated families, or 'all'")->capture_default_str();
  fit_cmd->add_option("--p", fit.p, "SUR threshold for the p%SUR metric")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "fits CSV to write")->required();
  fit_cmd->add_option("--plot-dir", fit.plot_dir, "write one SVG plot per video here");

  TableArgs table;
  auto* table_cmd = app.add_subcommand("model-table", "Per-family means of a fits CSV");
  table_cmd->add_option("--fits", table.fits, "fits CSV from 'fit'")->required();
  table_cmd->add_option("--out", table.out, "table CSV to write")->required();

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Cross-validated SUR prediction from features");
  pred_cmd->add_option("--annotations", pred.annotations, "annotations CSV")->required();
  pred_cmd->add_option("--features", pred.features, "features JSON")->required();
  pred_cmd->add_option("--mode", pred.mode, "baseline, src or src-pvs")->capture_default_str();
  pred_cmd->add_option("--family", pred.family, "model family to predict")->capture_default_str();
  pred_cmd->add_option("--folds", pred.folds, "cross-validation folds")->capture_default_str()->check(CLI::Range(2, 1000));
  pred_cmd->add_option("--seed", pred.seed, "fold assignment seed")->envname("SURKIT_SEED")->capture_default_str();
  pred_cmd->add_option("--p", pred.p, "SUR threshold")->capture_default_str();
  pred_cmd->add_option("--svr-c", pred.svr_c, "SVR box constraint C (default 10)");
  pred_cmd->add_option("--svr-epsilon", pred.svr_epsilon, "SVR epsilon tube on scaled targets (default 0.01)");
  pred_cmd->add_option("--svr-gamma", pred.svr_gamma, "RBF gamma (default: 1/(n_features*var))");
  pred_cmd->add_flag("--no-tune", pred.no_tune,
                    "parameter-driven modes: use the given SVR settings instead of inner 3-fold CV over C, epsilon, gamma");
  pred_cmd->add_option("--out", pred.out, "report CSV to write")->required();
  pred_cmd->add_option("--per-video", pred.per_video, "also write per-video predictions here");

  SynthArgs syn;
  auto* syn_cmd = app.add_subcommand("synth", "Generate a synthetic annotations + features dataset");
  syn_cmd->add_option("--spec", syn.spec_path, "JSON spec; flags override its keys");
  syn_cmd->add_option("--n-videos", syn.n_videos, "videos per resolution (default 100)");
  syn_cmd->add_option("--subjects", syn.subjects, "subjects per video (default 30)");
  syn_cmd->add_option("--family", syn.family, "ground-truth family (default Gaussian)");
  syn_cmd->add_option("--ranges", syn.ranges, "parameter ranges, lo:hi per parameter, comma-separated");
  syn_cmd->add_option("--masking-dim", syn.masking_dim, "masking feature length (default 8)");
  syn_cmd->add_option("--qd-dim", syn.qd_dim, "per-QP feature length (default 4)");
  syn_cmd->add_option("--noise", syn.noise, "std of additive feature noise (default 0)");
  syn_cmd->add_option("--resolutions", syn.resolutions, "resolution labels (default 1080p)")->delimiter(',');
  syn_cmd->add_flag("--no-pvs", syn.no_pvs, "omit per-QP feature blocks");
  syn_cmd->add_option("--discretization", syn.discretization, "round (default) or ceil");
  syn_cmd->add_option("--seed", syn.seed, "master seed")->envname("SURKIT_SEED");
  syn_cmd->add_option("--out-annotations", syn.out_annotations, "annotations CSV to write")->required();
  syn_cmd->add_option("--out-features", syn.out_features, "features JSON to write")->required();
  syn_cmd->add_option("--out-truth", syn.out_truth, "true-parameter CSV (default: <annotations>.truth.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit);
    if (table_cmd->parsed()) return run_model_table(table);
    if (pred_cmd->parsed()) return run_predict(pred);
    if (syn_cmd->parsed()) return run_synth(syn);
  } catch (const error& e) {
    std::cerr << "surkit: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "surkit: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
