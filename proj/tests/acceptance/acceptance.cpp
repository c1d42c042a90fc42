// Acceptance runner: one PASS/FAIL line per criterion on stdout, progress on stderr.
// Exit status is 0 only when every selected criterion passes.

#include "fixtures.hpp"

#include <kcf/io.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

using namespace kcf;
using namespace kcf::fixtures;
using kcf::io::json;

namespace {

// Tolerances, pinned.
constexpr double kImagTol = 1e-9;
constexpr double kUnitIntervalSlack = 1e-8;
constexpr double kSpectrumInvarianceTol = 1e-8;
constexpr double kTraceInvarianceTol = 1e-9;
constexpr double kBoundSlack = 1e-10;
constexpr double kAttainTol = 1e-8;
constexpr double kReferenceSpectrumTol = 1e-9;
constexpr double kExactCciTol = 1e-10;
constexpr double kExactRolloutTol = 1e-8;
constexpr double kSandwichSlack = 1e-10;
constexpr double kTopBlockTol = 1e-12;
constexpr double kGradientTol = 1e-5;
constexpr double kGradientStep = 1e-5;
constexpr double kSeparableCeiling = 0.01;
constexpr double kLinearOverSeparable = 3.0;
constexpr double kRatioWidening = 0.8;

constexpr double kPropBudget = 5.0;
constexpr double kTheoremBudget = 30.0;
constexpr double kGradientBudget = 10.0;
constexpr double kTrainRunBudget = 15.0 * 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every certificate produced in this process, for the trace sandwich.
struct SandwichLog {
  int count = 0;
  double worst_lower = 0.0;  // max of trace/n_H - cci
  double worst_upper = 0.0;  // max of cci - trace
  void add(const ConsistencyReport& r) {
    ++count;
    const double nh = static_cast<double>(r.eigenvalues.size());
    worst_lower = std::max(worst_lower, r.trace / nh - r.cci);
    worst_upper = std::max(worst_upper, r.cci - r.trace);
  }
};
SandwichLog g_sandwich;

ConsistencyReport certified(const Matrix& j, const Matrix& l) {
  auto r = certify(j, l);
  g_sandwich.add(r);
  return r;
}

ConsistencyReport certified(const NormalBasis& b, const SnapshotDataset& d) {
  auto r = certify(b, d);
  g_sandwich.add(r);
  return r;
}

Outcome proposition_one() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double max_imag = 0.0, lo = 0.0, hi = 1.0;
  for (int k = 0; k < 100; ++k) {
    auto p = random_sized_problem(rng);
    auto fb = forward_backward(p.j, p.l);
    const Eigen::VectorXcd ev = Eigen::EigenSolver<Matrix>(consistency_matrix(fb.a_f, fb.a_b), false).eigenvalues();
    max_imag = std::max(max_imag, ev.imag().cwiseAbs().maxCoeff());
    lo = std::min(lo, ev.real().minCoeff());
    hi = std::max(hi, ev.real().maxCoeff());
    certified(p.j, p.l);
  }
  const double secs = seconds_since(t0);
  return {max_imag <= kImagTol && lo >= -kUnitIntervalSlack && hi <= 1.0 + kUnitIntervalSlack && secs < kPropBudget,
          fmt("100 pairs, max|Im| = %.2e, eigenvalues in [%.3e, 1%+.3e], %.2fs", max_imag, lo, hi - 1.0, secs)};
}

Outcome proposition_two() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  auto basis = make_bilinear(polynomial_dictionary(2, 2), 1);
  double spec_err = 0.0, trace_err = 0.0;
  for (int k = 0; k < 50; ++k) {
    SnapshotDataset d(gaussian_matrix(2, 80, rng), gaussian_matrix(2, 80, rng), gaussian_matrix(1, 80, rng));
    auto before = certified(basis, d);
    auto after = certified(change_of_basis(basis, random_block_lower(basis.n_h(), basis.n_psi(), rng)), d);
    spec_err = std::max(spec_err, (before.eigenvalues - after.eigenvalues).cwiseAbs().maxCoeff());
    trace_err = std::max(trace_err, std::abs(before.trace - after.trace));
  }
  const double secs = seconds_since(t0);
  return {spec_err <= kSpectrumInvarianceTol && trace_err <= kTraceInvarianceTol && secs < kPropBudget,
          fmt("50 changes of basis, spectrum diff %.2e, trace diff %.2e, %.2fs", spec_err, trace_err, secs)};
}

Outcome theorem_sharpness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(303);
  double bound_excess = -1.0, attain_err = 0.0, spec_err = 0.0;
  for (int k = 0; k < 20; ++k) {
    auto p = random_sized_problem(rng);
    auto rep = certified(p.j, p.l);
    FunctionErrorProbe probe(p.j, p.l);
    const double root = std::sqrt(rep.cci);
    double worst = 0.0;
    for (int s = 0; s < 100000; ++s) worst = std::max(worst, probe(random_unit(p.j.rows(), rng)));
    bound_excess = std::max(bound_excess, worst - root);
    attain_err = std::max(attain_err, std::abs(probe(rep.pullback) - root));

    const Vector ref = Eigen::SelfAdjointEigenSolver<Matrix>(reference_symmetric_target(p.j, p.l)).eigenvalues();
    auto fb = forward_backward(p.j, p.l);
    Eigen::VectorXcd mcc = Eigen::EigenSolver<Matrix>(consistency_matrix(fb.a_f, fb.a_b), false).eigenvalues();
    std::sort(mcc.data(), mcc.data() + mcc.size(), [](auto a, auto b) { return a.real() < b.real(); });
    spec_err = std::max({spec_err, (mcc.real() - ref).cwiseAbs().maxCoeff(), mcc.imag().cwiseAbs().maxCoeff(),
                         (rep.eigenvalues - ref).cwiseAbs().maxCoeff()});
  }
  const double secs = seconds_since(t0);
  return {bound_excess <= kBoundSlack && attain_err <= kAttainTol && spec_err <= kReferenceSpectrumTol &&
              secs < kTheoremBudget,
          fmt("20 problems x 1e5 directions, max(rrmse - sqrt(cci)) = %.2e, attainment err %.2e, "
              "spectrum vs reference %.2e, %.2fs",
              bound_excess, attain_err, spec_err, secs)};
}

Outcome exact_subspace() {
  Rng rng(404);
  std::string detail;
  bool pass = true;
  const auto run = [&](const char* label, const ControlSystem& sys, const NormalBasis& basis) {
    auto data = sample_snapshots(sys, 500, 405);
    auto rep = certified(basis, data);
    auto model = fit_top_block(basis, data);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const Vector x0 = sys.state_domain.sample(rng);
      const Matrix inputs = piecewise_constant_inputs(sys.input_domain, 200, 10, rng);
      auto r = rollout(model, x0, inputs, simulate(sys, x0, inputs, 0.0));
      worst = std::max(worst, r.relative_error.maxCoeff());
    }
    pass = pass && rep.cci <= kExactCciTol && worst <= kExactRolloutTol;
    if (!detail.empty()) detail += "; ";
    detail += fmt("%s cci %.2e, 200-step max rel err %.2e", label, rep.cci, worst);
  };
  run("linear/lifted-linear", synthetic_linear(random_stable(3, rng), gaussian_matrix(3, 2, rng)),
      make_lifted_linear(identity_dictionary(3), 2));
  run("bilinear/bilinear",
      synthetic_bilinear(random_stable(3, rng), {0.1 * random_stable(3, rng), 0.1 * random_stable(3, rng)}),
      make_bilinear(identity_dictionary(3), 2));
  return {pass, detail};
}

Outcome top_block() {
  Rng rng(505);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Index n = 1 + k % 3, m = 1 + k % 2;
    auto h = polynomial_dictionary(n, 2);
    auto basis = k % 2 == 0 ? make_bilinear(h, m) : make_lifted_linear(h, m);
    const Index count = basis.n_psi() + 30;
    SnapshotDataset d(gaussian_matrix(n, count, rng), gaussian_matrix(n, count, rng), gaussian_matrix(m, count, rng));
    const Matrix full = edmd_full(basis, d).topRows(basis.n_h());
    const Matrix shortcut = fit_top_block(basis, d).top_block();
    worst = std::max(worst, (full - shortcut).cwiseAbs().maxCoeff() / std::max(1.0, full.cwiseAbs().maxCoeff()));
  }
  return {worst <= kTopBlockTol, fmt("20 instances, max |EDMD top rows - shortcut| = %.2e", worst)};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(606);
  double worst = 0.0;
  std::string per;
  for (auto cls : {learning::ModelClass::separable, learning::ModelClass::bilinear, learning::ModelClass::linear}) {
    auto t = toy_problem(cls, 20, {16, 8}, rng);
    const auto r = check_gradient(t, {1e-2, 1e-3}, kGradientStep);
    worst = std::max({worst, r.relative_error, r.max_coordinate_error});
    per += fmt(" %s %.2e/%.2e", learning::to_string(cls), r.max_coordinate_error, r.relative_error);
  }
  const double secs = seconds_since(t0);
  return {worst <= kGradientTol && secs < kGradientBudget,
          fmt("h = 1e-5, worst coordinate / norm-wise relative error:%s, %.2fs", per.c_str(), secs)};
}

Outcome data_protocol() {
  ExperimentProtocol p;
  p.seed = 1;
  auto d = collect(dc_motor(InputNonlinearity::tanh), p);
  Index changes = 0, misplaced = 0;
  for (Index k = 1; k < d.size(); ++k) {
    const bool changed = d.u(0, k) != d.u(0, k - 1);
    changes += changed;
    misplaced += changed != (k % 40 == 0);
  }
  const auto train = static_cast<Index>(d.indices(true).size());
  const auto test = static_cast<Index>(d.indices(false).size());
  return {d.size() == 10000 && misplaced == 0 && changes == 249 && train == 8000 && test == 2000,
          fmt("N = %ld, input changes %ld (misplaced %ld), train/test %ld/%ld", static_cast<long>(d.size()),
              static_cast<long>(changes), static_cast<long>(misplaced), static_cast<long>(train),
              static_cast<long>(test))};
}

Outcome dc_motor_experiment(const std::string& workdir) {
  using learning::ModelClass;
  const auto cfg = learning::TrainConfig::paper_scale();
  std::map<std::string, std::map<std::string, double>> test;
  double slowest = 0.0;
  json summary = json::object();
  for (auto kind : {InputNonlinearity::tanh, InputNonlinearity::tanh_cos}) {
    ExperimentProtocol p;
    p.seed = 1;
    const auto data = collect(dc_motor(kind), p);
    for (auto cls : {ModelClass::separable, ModelClass::bilinear, ModelClass::linear}) {
      const auto t0 = std::chrono::steady_clock::now();
      learning::TrainCallbacks cb;
      cb.on_epoch = [&](const learning::EpochLog& log) {
        if ((log.epoch + 1) % 50 == 0)
          std::cerr << "  " << to_string(kind) << "/" << learning::to_string(cls) << " epoch " << log.epoch + 1
                    << " loss " << log.loss << "\n";
      };
      auto res = learning::train(data, cls, cfg, cb);
      const double secs = seconds_since(t0);
      slowest = std::max(slowest, secs);
      const double rr = res.test_report->rrmse_max;
      test[to_string(kind)][learning::to_string(cls)] = rr;
      std::cerr << to_string(kind) << "/" << learning::to_string(cls) << ": test rrmse_max " << rr << ", train "
                << res.train_report.rrmse_max << ", " << secs << "s\n";
      g_sandwich.add(res.train_report);
      g_sandwich.add(*res.test_report);
      summary[to_string(kind)][learning::to_string(cls)] = {{"test_rrmse_max", rr},
                                                            {"train_rrmse_max", res.train_report.rrmse_max},
                                                            {"test_cci", res.test_report->cci},
                                                            {"seconds", secs}};
    }
  }
  if (!workdir.empty()) {
    summary["config"] = io::to_json(cfg);
    io::write_json(std::filesystem::path(workdir) / "dc_motor_summary.json", summary);
  }

  const auto& a = test["tanh"];
  const auto& b = test["tanh-cos"];
  const bool order_a = a.at("separable") < a.at("bilinear") && a.at("bilinear") < a.at("linear");
  const bool order_b = b.at("separable") < b.at("bilinear") && b.at("bilinear") < b.at("linear");
  const double ratio_lin = a.at("linear") / a.at("separable");
  const double ratio_a = a.at("bilinear") / a.at("separable");
  const double ratio_b = b.at("bilinear") / b.at("separable");
  const bool pass = order_a && order_b && a.at("separable") <= kSeparableCeiling && ratio_lin >= kLinearOverSeparable &&
                    ratio_b > kRatioWidening * ratio_a && slowest < kTrainRunBudget;
  return {pass, fmt("tanh sep/bil/lin %.5f/%.5f/%.5f, tanh-cos %.5f/%.5f/%.5f, lin/sep %.1fx, bil/sep %.1fx vs "
                    "%.1fx, slowest run %.0fs",
                    a.at("separable"), a.at("bilinear"), a.at("linear"), b.at("separable"), b.at("bilinear"),
                    b.at("linear"), ratio_lin, ratio_b, ratio_a, slowest)};
}

Outcome trace_sandwich() {
  auto eq = trace_proxy(Matrix(Eigen::Vector2d(0.0, 1.0).asDiagonal()));
  Matrix j(2, 3), l(1, 3);
  j << 1, 0, 0, 0, 1, 0;
  l << 1, 0, 0;
  auto rep = certified(j, l);
  const bool example = eq.lower == 0.5 && eq.trace == 1.0 && eq.upper == 1.0 && rep.cci == 1.0 && rep.trace == 1.0;
  return {example && g_sandwich.worst_lower <= kSandwichSlack && g_sandwich.worst_upper <= kSandwichSlack,
          fmt("diag(0,1) -> (%.1f, %.1f, %.1f); %d certificates, max(trace/n_H - cci) = %.2e, max(cci - trace) = "
              "%.2e",
              eq.lower, rep.cci, eq.upper, g_sandwich.count, g_sandwich.worst_lower, g_sandwich.worst_upper)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<std::string> skip, only;
  std::string workdir;
  app.add_option("--skip", skip, "criteria to skip")->delimiter(',');
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--workdir", workdir, "directory for run artifacts");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"proposition-1", proposition_one},
      {"proposition-2", proposition_two},
      {"theorem-sharpness", theorem_sharpness},
      {"exact-subspace", exact_subspace},
      {"top-block", top_block},
      {"gradient-check", gradient_check},
      {"data-protocol", data_protocol},
      {"dc-motor", [&] { return dc_motor_experiment(workdir); }},
      // Last, so it sees every certificate produced above.
      {"trace-sandwich", trace_sandwich},
  };
  const std::set<std::string> skip_set(skip.begin(), skip.end()), only_set(only.begin(), only.end());

  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (skip_set.count(name) || (!only_set.empty() && !only_set.count(name))) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
