// kcf: command-line front end for data generation, fitting, training,
// certification, rollout statistics and table reports.

#include <kcf/io.hpp>
#include <kcf/kcf.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

using namespace kcf;
namespace fs = std::filesystem;
using kcf::io::json;

namespace {

// ---------------------------------------------------------------------------
// Manifest

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Records one command invocation in <dir>/manifest.json ("runs" grows by one entry).
class ManifestEntry {
 public:
  ManifestEntry(std::string command, int argc, char** argv)
      : started_(std::chrono::steady_clock::now()) {
    entry_["command"] = std::move(command);
    entry_["argv"] = std::vector<std::string>(argv, argv + argc);
    entry_["tool_version"] = kVersion;
    entry_["started_at"] = utc_now();
  }

  json& operator[](const char* key) { return entry_[key]; }

  void commit(const fs::path& dir) {
    entry_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    const fs::path path = dir / "manifest.json";
    json manifest{{"tool", "kcf"}, {"runs", json::array()}};
    if (fs::exists(path)) {
      manifest = io::read_json(path);
      if (!manifest.contains("runs") || !manifest["runs"].is_array())
        throw ValidationError(path.string() + " is not a kcf manifest");
    }
    manifest["runs"].push_back(entry_);
    io::write_json(path, manifest);
  }

 private:
  json entry_;
  std::chrono::steady_clock::time_point started_;
};

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw IoError(std::string(what) + " directory '" + dir.string() + "' does not exist");
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("missing artifact '" + path.string() + "'");
}

json protocol_json(const ExperimentProtocol& p) {
  return {{"duration", p.duration},
          {"dt", p.dt},
          {"hold", p.hold},
          {"hold_steps", p.hold_steps()},
          {"seed", p.seed},
          {"train_fraction", p.train_fraction},
          {"split", p.split == SplitPolicy::random ? "random" : "contiguous"},
          {"guard_factor", p.guard_factor}};
}

struct LoadedModel {
  NormalBasis basis;
  FittedModel model;
  std::string label;
  std::vector<Index> state_rows;
};

LoadedModel load_model(const fs::path& dir) {
  require_dir(dir, "model");
  require_file(dir / "dict.json");
  require_file(dir / "model.json");
  LoadedModel out;
  out.basis = io::basis_from_json(io::read_json(dir / "dict.json"));
  const json mj = io::read_json(dir / "model.json");
  out.model = io::model_from_json(mj, out.basis);
  out.model.validate();
  out.label = mj.value("class", std::string(to_string(out.basis.structure())));
  out.state_rows = io::get<std::vector<Index>>(mj, "state_rows");
  return out;
}

SnapshotDataset load_data(const fs::path& dir, json* sidecar = nullptr) {
  require_dir(dir, "data");
  require_file(dir / "data.json");
  require_file(dir / "data.csv");
  return io::read_dataset(dir, sidecar);
}

SnapshotDataset split_of(const SnapshotDataset& d, const std::string& split) {
  if (split == "train") return d.train_split();
  if (split == "test") {
    if (d.indices(false).empty()) throw ValidationError("dataset has no test columns");
    return d.test_split();
  }
  if (split == "all") return d;
  throw ValidationError("unknown split '" + split + "'");
}

// ---------------------------------------------------------------------------
// generate-data

struct GenerateArgs {
  std::string system = "dc-motor";
  std::string nonlinearity = "tanh";
  std::uint64_t seed = 0;
  double dt = 0.005;
  double duration = 50.0;
  double hold = 0.2;
  double train_fraction = 0.8;
  std::string split = "random";
  std::string out;
};

int cmd_generate(const GenerateArgs& a, ManifestEntry& manifest) {
  auto desc = SystemDescription::named(a.system);
  desc.nonlinearity = input_nonlinearity_from_string(a.nonlinearity);
  ExperimentProtocol p;
  p.seed = a.seed;
  p.dt = a.dt;
  p.duration = a.duration;
  p.hold = a.hold;
  p.train_fraction = a.train_fraction;
  if (a.split != "random" && a.split != "contiguous") throw ValidationError("split must be random or contiguous");
  p.split = a.split == "random" ? SplitPolicy::random : SplitPolicy::contiguous;
  p.validate();
  const ControlSystem sys = desc.build();

  const SnapshotDataset d = collect(sys, p);
  const json extra{{"system", io::to_json(desc)},
                   {"protocol", protocol_json(p)},
                   {"integrator", sys.discrete_map ? "discrete-map" : "rk4"},
                   {"input_domain", {{"lo", io::to_json(sys.input_domain.lo)}, {"hi", io::to_json(sys.input_domain.hi)}}}};
  io::write_dataset(a.out, d, extra);

  manifest["config"] = {{"system", io::to_json(desc)}, {"protocol", protocol_json(p)}};
  manifest["seeds"] = {{"data", a.seed}};
  manifest["outputs"] = {(fs::path(a.out) / "data.csv").string(), (fs::path(a.out) / "data.json").string()};
  manifest.commit(a.out);
  std::cout << "wrote " << d.size() << " snapshots (" << d.indices(true).size() << " train, "
            << d.indices(false).size() << " test) to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string data;
  std::string out;
  std::string dictionary;
  std::string structure = "lifted-linear";
  int degree = 1;
  std::string label;
};

void write_model(const fs::path& out, const NormalBasis& basis, const FittedModel& model, const std::string& label) {
  io::write_json(out / "dict.json", io::to_json(basis));
  io::write_json(out / "model.json", io::to_json(model, label));
}

int cmd_fit(const FitArgs& a, ManifestEntry& manifest) {
  const SnapshotDataset data = load_data(a.data);
  NormalBasis basis;
  if (!a.dictionary.empty()) {
    require_file(a.dictionary);
    basis = io::basis_from_json(io::read_json(a.dictionary));
  } else {
    if (a.degree < 1) throw ValidationError("degree must be at least 1");
    const StateDictionary h = polynomial_dictionary(data.state_dim(), a.degree);
    if (a.structure == "lifted-linear") basis = make_lifted_linear(h, data.input_dim());
    else if (a.structure == "bilinear") basis = make_bilinear(h, data.input_dim());
    else throw ValidationError("structure must be lifted-linear or bilinear");
  }
  const FittedModel model = fit_top_block(basis, data.train_split());
  const std::string label = a.label.empty() ? std::string(to_string(basis.structure())) : a.label;
  write_model(a.out, basis, model, label);

  manifest["config"] = {{"dictionary", a.dictionary.empty() ? json(nullptr) : json(a.dictionary)},
                        {"structure", to_string(basis.structure())},
                        {"degree", a.degree},
                        {"label", label}};
  manifest["inputs"] = {a.data};
  manifest["outputs"] = {(fs::path(a.out) / "dict.json").string(), (fs::path(a.out) / "model.json").string()};
  manifest.commit(a.out);
  std::printf("fitted %s: n_H = %ld, n_Psi = %ld, residual %.6e on %ld training snapshots\n", label.c_str(),
              static_cast<long>(basis.n_h()), static_cast<long>(basis.n_psi()), model.diagnostics.residual_fro,
              static_cast<long>(model.diagnostics.samples));
  return 0;
}

// ---------------------------------------------------------------------------
// certify

json report_document(const LoadedModel& m, const std::map<std::string, ConsistencyReport>& reports, json base) {
  base["class"] = m.label;
  base["structure"] = to_string(m.basis.structure());
  base["n_H"] = m.basis.n_h();
  base["n_Psi"] = m.basis.n_psi();
  if (!base.contains("splits")) base["splits"] = json::object();
  for (const auto& [split, r] : reports) base["splits"][split] = io::to_json(r);
  return base;
}

void print_summary(const std::string& label, const std::map<std::string, ConsistencyReport>& reports) {
  std::printf("%-6s %9s %14s %14s %14s\n", "split", "samples", "cci", "trace", "rrmse_max");
  for (const char* split : {"train", "test", "all"}) {
    const auto it = reports.find(split);
    if (it == reports.end()) continue;
    const auto& r = it->second;
    std::printf("%-6s %9ld %14.6e %14.6e %14.6e\n", split, static_cast<long>(r.diagnostics.samples), r.cci, r.trace,
                r.rrmse_max);
  }
  const auto cell = [&](const char* s) {
    const auto it = reports.find(s);
    char buf[32];
    if (it == reports.end()) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.6g", it->second.rrmse_max);
    return std::string(buf);
  };
  std::printf("| %s | %s | %s |\n", label.c_str(), cell("train").c_str(), cell("test").c_str());
}

struct CertifyArgs {
  std::string model;
  std::string data;
  std::string split = "both";
  std::string out;
};

int cmd_certify(const CertifyArgs& a, ManifestEntry& manifest) {
  const LoadedModel m = load_model(a.model);
  const SnapshotDataset data = load_data(a.data);
  std::vector<std::string> splits;
  if (a.split == "both") splits = {"train", "test"};
  else splits = {a.split};

  std::map<std::string, ConsistencyReport> reports;
  for (const auto& s : splits) {
    const auto subset = split_of(data, s);
    check_dataset_against_basis(m.basis, subset);
    reports.emplace(s, certify(m.basis, subset));
  }
  const fs::path out_dir = a.out.empty() ? fs::path(a.model) : fs::path(a.out);
  const fs::path path = out_dir / "report.json";
  json doc = report_document(m, reports, fs::exists(path) ? io::read_json(path) : json::object());
  io::write_json(path, doc);

  print_summary(m.label, reports);
  json line{{"class", m.label}};
  for (const auto& [s, r] : reports) line[s] = {{"cci", r.cci}, {"rrmse_max", r.rrmse_max}, {"trace", r.trace}};
  std::cout << line.dump() << "\n";

  manifest["config"] = {{"split", a.split}};
  manifest["inputs"] = {a.model, a.data};
  manifest["outputs"] = {path.string()};
  manifest.commit(out_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string cls;
  std::string data;
  std::string config;
  std::string out;
  bool paper_scale = false;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, ManifestEntry& manifest) {
  const auto cls = learning::model_class_from_string(a.cls);
  learning::TrainConfig cfg = a.paper_scale ? learning::TrainConfig::paper_scale() : learning::TrainConfig{};
  if (!a.config.empty()) {
    require_file(a.config);
    cfg = io::train_config_from_json(io::read_json(a.config), cfg);
  }
  if (a.seed) cfg.seed = *a.seed;
  const SnapshotDataset data = load_data(a.data);
  cfg.validate(cls, data.input_dim());
  const fs::path out(a.out);
  fs::create_directories(out);

  std::string log = "epoch,lr,loss,trace,batches,skipped\n";
  learning::TrainCallbacks cb;
  cb.on_epoch = [&](const learning::EpochLog& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d,%d\n", e.epoch, e.lr, e.loss, e.trace, e.batches,
                  e.skipped);
    log += buf;
    if ((e.epoch + 1) % 10 == 0 || e.epoch + 1 == cfg.epochs)
      std::fprintf(stderr, "epoch %d/%d loss %.6e trace %.6e\n", e.epoch + 1, cfg.epochs, e.loss, e.trace);
  };
  cb.on_checkpoint = [&](int epoch, const learning::ParametricBasis& b) {
    char name[48];
    std::snprintf(name, sizeof name, "epoch_%04d.json", epoch);
    io::write_json(out / "checkpoints" / name, io::to_json(b.snapshot()));
  };
  const auto res = learning::train(data, cls, cfg, cb);

  LoadedModel m{res.basis, res.model, learning::to_string(cls), {}};
  write_model(out, res.basis, res.model, m.label);
  io::write_text(out / "train_log.csv", log);
  std::map<std::string, ConsistencyReport> reports{{"train", res.train_report}};
  if (res.test_report) reports.emplace("test", *res.test_report);
  io::write_json(out / "report.json", report_document(m, reports, json::object()));
  print_summary(m.label, reports);

  manifest["config"] = io::to_json(cfg);
  manifest["config"]["class"] = m.label;
  manifest["seeds"] = {{"train", cfg.seed}};
  manifest["inputs"] = {a.data};
  manifest["outputs"] = {(out / "dict.json").string(), (out / "model.json").string(), (out / "report.json").string()};
  manifest.commit(out);
  return 0;
}

// ---------------------------------------------------------------------------
// rollout

struct RolloutArgs {
  std::vector<std::string> models;
  std::string data;
  Index horizon = 200;
  Index count = 1000;
  std::uint64_t seed = 0;
  int jobs = 1;
  Index hold_steps = 0;
  std::string out;
};

ErrorStatistics rollout_statistics(const LoadedModel& m, const ControlSystem& sys, double dt,
                                   const std::vector<Vector>& x0s, const std::vector<Matrix>& inputs, int jobs) {
  std::vector<RolloutResult> results(x0s.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < x0s.size(); i = next++) {
      try {
        RolloutResult r = rollout(m.model, x0s[i], inputs[i], simulate(sys, x0s[i], inputs[i], dt));
        // Keep only the rows that carry the state.
        r.relative_error = Matrix(r.relative_error(m.state_rows, Eigen::all));
        results[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  std::vector<Index> coords(m.state_rows.size());
  std::iota(coords.begin(), coords.end(), Index{0});
  return error_statistics(results, coords);
}

int cmd_rollout(const RolloutArgs& a, ManifestEntry& manifest) {
  if (a.horizon < 1 || a.count < 1) throw ValidationError("horizon and count must be positive");
  if (a.jobs < 1) throw ValidationError("jobs must be at least 1");
  json side;
  const SnapshotDataset data = load_data(a.data, &side);
  if (!side.contains("system") || !side.contains("protocol"))
    throw ValidationError("data.json lacks the system description needed to simulate ground truth");
  const ControlSystem sys = io::system_from_json(side.at("system")).build();
  const double dt = io::get<double>(side.at("protocol"), "dt");
  const Index hold = a.hold_steps > 0 ? a.hold_steps : io::get<Index>(side.at("protocol"), "hold_steps");

  std::vector<LoadedModel> models;
  for (const auto& dir : a.models) models.push_back(load_model(dir));
  for (const auto& m : models) {
    if (m.basis.state_dim() != sys.n || m.basis.input_dim() != sys.m)
      throw DimensionError("model '" + m.label + "' does not match the system dimensions");
    if (static_cast<Index>(m.state_rows.size()) != sys.n) throw ValidationError("model.json state_rows must list n rows");
  }

  // Draw every initial state and input sequence up front so results do not depend on --jobs.
  auto pool_idx = data.indices(false);
  if (pool_idx.empty()) pool_idx = data.indices(true);
  Rng rng(a.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool_idx.size() - 1);
  std::vector<Vector> x0s;
  std::vector<Matrix> inputs;
  for (Index k = 0; k < a.count; ++k) {
    x0s.push_back(data.x.col(pool_idx[pick(rng)]));
    inputs.push_back(piecewise_constant_inputs(sys.input_domain, a.horizon, hold, rng));
  }

  std::string csv;
  const bool labelled = models.size() > 1;
  csv = labelled ? "model,step,coordinate,median,q25,q75\n" : "step,coordinate,median,q25,q75\n";
  for (const auto& m : models) {
    const auto stats = rollout_statistics(m, sys, dt, x0s, inputs, a.jobs);
    csv += io::statistics_rows(stats, labelled ? m.label : "");
    std::printf("%-12s median relative error at step %ld:", m.label.c_str(), static_cast<long>(a.horizon));
    for (Index c = 0; c < stats.median.rows(); ++c) std::printf(" x%ld %.4e", static_cast<long>(c + 1), stats.median(c, a.horizon));
    std::printf("\n");
  }
  fs::path out = a.out.empty() ? fs::path(a.models.front()) / "stats.csv" : fs::path(a.out);
  if (out.extension() != ".csv") out /= "stats.csv";
  io::write_text(out, csv);

  manifest["config"] = {{"horizon", a.horizon}, {"count", a.count}, {"hold_steps", hold}, {"jobs", a.jobs}};
  manifest["seeds"] = {{"rollout", a.seed}};
  json in = a.models;
  in.push_back(a.data);
  manifest["inputs"] = in;
  manifest["outputs"] = {out.string()};
  manifest.commit(out.parent_path().empty() ? fs::path(".") : out.parent_path());
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

int cmd_report(const ReportArgs& a, ManifestEntry& manifest) {
  std::string md = "| model | RRMSE_max (train) | RRMSE_max (test) |\n|---|---|---|\n";
  std::string csv = "model,train_rrmse_max,test_rrmse_max\n";
  std::string fig = "model,step,coordinate,median,q25,q75\n";
  bool any_stats = false;
  for (const auto& run : a.runs) {
    const fs::path dir(run);
    require_dir(dir, "run");
    require_file(dir / "report.json");
    require_file(dir / "manifest.json");
    const json rep = io::read_json(dir / "report.json");
    const auto label = io::get<std::string>(rep, "class");
    const json& splits = rep.at("splits");
    const auto value = [&](const char* s) -> std::string {
      if (!splits.contains(s)) return "";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6g", io::get<double>(splits.at(s), "rrmse_max"));
      return buf;
    };
    md += "| " + label + " | " + value("train") + " | " + value("test") + " |\n";
    csv += label + "," + value("train") + "," + value("test") + "\n";
    if (fs::exists(dir / "stats.csv")) {
      std::istringstream in(io::read_text(dir / "stats.csv"));
      std::string line;
      std::getline(in, line);
      const bool labelled = line.rfind("model,", 0) == 0;
      while (std::getline(in, line))
        if (!line.empty()) fig += (labelled ? "" : label + ",") + line + "\n";
      any_stats = true;
    }
  }
  std::cout << md;
  if (!a.out.empty()) {
    const fs::path out(a.out);
    io::write_text(out / "table.md", md);
    io::write_text(out / "table.csv", csv);
    if (any_stats) io::write_text(out / "fig1.csv", fig);
    manifest["inputs"] = a.runs;
    manifest["outputs"] = {(out / "table.md").string(), (out / "table.csv").string()};
    manifest.commit(out);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::io: return 4;
  }
  return 1;
}

int fail(int code, const std::string& tag, const std::string& message) {
  std::cerr << json{{"error", tag}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman control family models: fit, learn and certify"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "Simulate a system and write data.csv + data.json");
  g->add_option("--system", gen.system, "dc-motor | scalar-linear")->capture_default_str();
  g->add_option("--input-nonlinearity", gen.nonlinearity, "tanh | tanh-cos")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--dt", gen.dt, "sampling time [s]")->capture_default_str();
  g->add_option("--duration", gen.duration, "experiment length [s]")->capture_default_str();
  g->add_option("--hold", gen.hold, "input hold time [s]")->capture_default_str();
  g->add_option("--train-fraction", gen.train_fraction)->capture_default_str();
  g->add_option("--split", gen.split, "random | contiguous")->capture_default_str();
  g->add_option("--out", gen.out)->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit [A11, A12] for a closed-form dictionary");
  f->add_option("--data", fit.data)->required();
  f->add_option("--out", fit.out)->required();
  f->add_option("--dictionary", fit.dictionary, "dictionary JSON (overrides --structure/--degree)");
  f->add_option("--structure", fit.structure, "lifted-linear | bilinear")->capture_default_str();
  f->add_option("--degree", fit.degree, "monomial degree of H")->capture_default_str();
  f->add_option("--label", fit.label, "model name used in tables");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Learn a dictionary by minimizing the consistency loss");
  t->add_option("--class", tr.cls, "separable | bilinear | linear")->required();
  t->add_option("--data", tr.data)->required();
  t->add_option("--config", tr.config, "TrainConfig JSON overlay");
  t->add_option("--out", tr.out)->required();
  t->add_flag("--paper-scale", tr.paper_scale, "64x4 hidden layers, 500 epochs");
  t->add_option("--seed", tr.seed);

  CertifyArgs cert;
  auto* c = app.add_subcommand("certify", "Compute the consistency certificate of a model");
  c->add_option("--model", cert.model)->required();
  c->add_option("--data", cert.data)->required();
  c->add_option("--split", cert.split, "train | test | all | both")->capture_default_str();
  c->add_option("--out", cert.out, "directory for report.json (default: model dir)");

  RolloutArgs ro;
  auto* r = app.add_subcommand("rollout", "Multi-step prediction error statistics");
  r->add_option("--model", ro.models, "model directory (repeatable)")->required();
  r->add_option("--data", ro.data)->required();
  r->add_option("--horizon", ro.horizon)->capture_default_str();
  r->add_option("--count", ro.count)->capture_default_str();
  r->add_option("--seed", ro.seed)->capture_default_str();
  r->add_option("--jobs", ro.jobs)->capture_default_str();
  r->add_option("--hold-steps", ro.hold_steps, "input hold in steps (default: from data.json)");
  r->add_option("--out", ro.out, "CSV path or directory (default: <model>/stats.csv)");

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Aggregate run directories into tables");
  p->add_option("--runs", rep.runs, "model directories")->required();
  p->add_option("--out", rep.out, "directory for table.md, table.csv, fig1.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  try {
    ManifestEntry manifest(app.get_subcommands().front()->get_name(), argc, argv);
    if (*g) return cmd_generate(gen, manifest);
    if (*f) return cmd_fit(fit, manifest);
    if (*t) return cmd_train(tr, manifest);
    if (*c) return cmd_certify(cert, manifest);
    if (*r) return cmd_rollout(ro, manifest);
    if (*p) return cmd_report(rep, manifest);
  } catch (const Error& e) {
    return fail(exit_code(e.kind()), e.tag(), e.what());
  } catch (const io::json::exception& e) {
    return fail(2, "validation", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(4, "io", e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
  return 1;
}
