#pragma once

#include "kcf/consistency.hpp"
#include "kcf/dictionary.hpp"
#include "kcf/learning/neural.hpp"
#include "kcf/learning/train.hpp"
#include "kcf/predictor.hpp"
#include "kcf/regression.hpp"
#include "kcf/systems.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace kcf::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Read a required key, turning library exceptions into validation errors.
template <typename T>
T get(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Matrices: {"rows", "cols", "data": row-major}

inline json to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = get<Index>(j, "rows");
  const auto cols = get<Index>(j, "cols");
  const auto data = get<std::vector<double>>(j, "data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
    throw ValidationError("matrix data length does not match its shape");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const json& j) {
  std::vector<double> d;
  try {
    d = j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("expected a number array: ") + e.what());
  }
  return Eigen::Map<const Vector>(d.data(), static_cast<Index>(d.size()));
}

// ---------------------------------------------------------------------------
// Expressions

inline json to_json(const Expr& e) {
  using Op = Expr::Op;
  json j{{"op", Expr::op_name(e.op())}};
  switch (e.op()) {
    case Op::constant: j["value"] = e.value(); break;
    case Op::variable: j["index"] = e.index(); break;
    case Op::pow:
      j["arg"] = to_json(e.args()[0]);
      j["exponent"] = e.exponent();
      break;
    case Op::add:
    case Op::mul: {
      json args = json::array();
      for (const auto& a : e.args()) args.push_back(to_json(a));
      j["args"] = args;
      break;
    }
    default: j["arg"] = to_json(e.args()[0]); break;
  }
  return j;
}

inline Expr expr_from_json(const json& j) {
  using Op = Expr::Op;
  const Op op = Expr::op_from_name(get<std::string>(j, "op"));
  switch (op) {
    case Op::constant: return Expr::constant(get<double>(j, "value"));
    case Op::variable: return Expr::variable(get<Index>(j, "index"));
    case Op::pow: return Expr::pow(expr_from_json(j.at("arg")), get<int>(j, "exponent"));
    case Op::add:
    case Op::mul: {
      std::vector<Expr> args;
      for (const auto& a : j.at("args")) args.push_back(expr_from_json(a));
      return Expr::nary(op, std::move(args));
    }
    default: return Expr::unary(op, expr_from_json(j.at("arg")));
  }
}

// ---------------------------------------------------------------------------
// Networks

inline json to_json(const learning::Mlp& net) {
  const auto& s = net.spec();
  return {{"input_dim", s.input_dim},       {"hidden", s.hidden},
          {"output_dim", s.output_dim},     {"activation", "elu"},
          {"layer_norm", s.layer_norm},     {"input_shift", to_json(s.input_shift)},
          {"input_scale", to_json(s.input_scale)}, {"weights", to_json(net.parameters())}};
}

inline learning::Mlp mlp_from_json(const json& j) {
  learning::MlpSpec s;
  s.input_dim = get<Index>(j, "input_dim");
  s.hidden = get<std::vector<Index>>(j, "hidden");
  s.output_dim = get<Index>(j, "output_dim");
  s.layer_norm = get<bool>(j, "layer_norm");
  if (j.contains("input_shift")) s.input_shift = vector_from_json(j.at("input_shift"));
  if (j.contains("input_scale")) s.input_scale = vector_from_json(j.at("input_scale"));
  return learning::Mlp(std::move(s), vector_from_json(j.at("weights")));
}

// ---------------------------------------------------------------------------
// Dictionaries

inline json to_json(const StateDictionary& h) {
  const auto& impl = h.impl();
  if (const auto* e = dynamic_cast<const ExpressionStateDictionary*>(&impl)) {
    json fs = json::array();
    for (const auto& f : e->functions()) fs.push_back(to_json(f));
    return {{"type", "expression"}, {"n", e->state_dim()}, {"functions", fs}};
  }
  if (const auto* c = dynamic_cast<const ConstantAugmentedDictionary*>(&impl))
    return {{"type", "append-constant"}, {"inner", to_json(c->inner())}};
  if (const auto* t = dynamic_cast<const TransformedStateDictionary*>(&impl))
    return {{"type", "transformed"}, {"transform", to_json(t->transform())}, {"inner", to_json(t->inner())}};
  if (const auto* nd = dynamic_cast<const learning::NeuralStateDictionary*>(&impl))
    return {{"type", "neural"}, {"pinned", nd->pinned()}, {"network", to_json(nd->network())}};
  throw ValidationError("state dictionary type is not serializable");
}

inline StateDictionary state_dictionary_from_json(const json& j) {
  const auto type = get<std::string>(j, "type");
  if (type == "expression") {
    std::vector<Expr> fs;
    for (const auto& f : j.at("functions")) fs.push_back(expr_from_json(f));
    return expression_dictionary(get<Index>(j, "n"), std::move(fs));
  }
  if (type == "append-constant")
    return StateDictionary(std::make_shared<ConstantAugmentedDictionary>(state_dictionary_from_json(j.at("inner"))));
  if (type == "transformed")
    return StateDictionary(std::make_shared<TransformedStateDictionary>(matrix_from_json(j.at("transform")),
                                                                        state_dictionary_from_json(j.at("inner"))));
  if (type == "neural")
    return StateDictionary(std::make_shared<learning::NeuralStateDictionary>(mlp_from_json(j.at("network")),
                                                                             get<std::vector<Index>>(j, "pinned")));
  throw ValidationError("unknown state dictionary type '" + type + "'");
}

inline json to_json(const InputFactor& g) {
  const auto& impl = g.impl();
  json base{{"m", g.input_dim()}, {"rows", g.rows()}, {"cols", g.cols()}};
  if (dynamic_cast<const LiftedLinearInputFactor*>(&impl)) {
    base["type"] = "lifted-linear";
  } else if (dynamic_cast<const BilinearInputFactor*>(&impl)) {
    base["type"] = "bilinear";
  } else if (const auto* e = dynamic_cast<const ExpressionInputFactor*>(&impl)) {
    base["type"] = "expression";
    json entries = json::array();
    for (const auto& x : e->entries()) entries.push_back(to_json(x));
    base["entries"] = entries;
  } else if (const auto* t = dynamic_cast<const TransformedInputFactor*>(&impl)) {
    base["type"] = "transformed";
    base["r21"] = to_json(t->r21());
    base["r22"] = to_json(t->r22());
    base["r11_inv"] = to_json(t->r11_inv());
    base["inner"] = to_json(t->inner());
  } else if (const auto* nf = dynamic_cast<const learning::NeuralInputFactor*>(&impl)) {
    base["type"] = "neural";
    base["network"] = to_json(nf->network());
  } else {
    throw ValidationError("input factor type is not serializable");
  }
  return base;
}

inline InputFactor input_factor_from_json(const json& j) {
  const auto type = get<std::string>(j, "type");
  const auto m = get<Index>(j, "m");
  const auto rows = get<Index>(j, "rows");
  const auto cols = get<Index>(j, "cols");
  if (type == "lifted-linear") return InputFactor(std::make_shared<LiftedLinearInputFactor>(m, cols));
  if (type == "bilinear") return InputFactor(std::make_shared<BilinearInputFactor>(m, cols));
  if (type == "expression") {
    std::vector<Expr> entries;
    for (const auto& e : j.at("entries")) entries.push_back(expr_from_json(e));
    return InputFactor(std::make_shared<ExpressionInputFactor>(m, rows, cols, std::move(entries)));
  }
  if (type == "transformed")
    return InputFactor(std::make_shared<TransformedInputFactor>(
        matrix_from_json(j.at("r21")), matrix_from_json(j.at("r22")), matrix_from_json(j.at("r11_inv")),
        input_factor_from_json(j.at("inner"))));
  if (type == "neural")
    return InputFactor(std::make_shared<learning::NeuralInputFactor>(mlp_from_json(j.at("network")), rows, cols));
  throw ValidationError("unknown input factor type '" + type + "'");
}

/// Dictionary document {kind, n, m, n_H, n_Psi, structure, params: {H, G}}.
inline json to_json(const NormalBasis& b) {
  return {{"kind", to_string(b.kind())},
          {"n", b.state_dim()},
          {"m", b.input_dim()},
          {"n_H", b.n_h()},
          {"n_Psi", b.n_psi()},
          {"structure", to_string(b.structure())},
          {"params", {{"H", to_json(b.state_dictionary())}, {"G", to_json(b.input_factor())}}}};
}

inline NormalBasis basis_from_json(const json& j) {
  const json& params = j.at("params");
  NormalBasis b(state_dictionary_from_json(params.at("H")), input_factor_from_json(params.at("G")));
  if (b.state_dim() != get<Index>(j, "n") || b.input_dim() != get<Index>(j, "m") || b.n_h() != get<Index>(j, "n_H") ||
      b.n_psi() != get<Index>(j, "n_Psi"))
    throw ValidationError("dictionary header dimensions disagree with its parameters");
  return b;
}

// ---------------------------------------------------------------------------
// Fitted model

inline json to_json(const FittedModel& m, const std::string& model_class = "") {
  json j{{"A11", to_json(m.a11)},
         {"A12", to_json(m.a12)},
         {"n_H", m.basis.n_h()},
         {"n_Psi", m.basis.n_psi()},
         {"structure", to_string(m.basis.structure())},
         {"state_rows", std::vector<Index>{}},
         {"diagnostics",
          {{"residual_fro", m.diagnostics.residual_fro},
           {"cond_psi", m.diagnostics.cond_psi},
           {"cond_h_plus", m.diagnostics.cond_h_plus},
           {"samples", m.diagnostics.samples}}}};
  // States are read from the leading rows of the lifted state when H pins them.
  std::vector<Index> rows;
  for (Index i = 0; i < m.basis.state_dim() && i < m.basis.n_h(); ++i) rows.push_back(i);
  j["state_rows"] = rows;
  if (!model_class.empty()) j["class"] = model_class;
  return j;
}

inline FittedModel model_from_json(const json& j, const NormalBasis& basis) {
  FittedModel m;
  m.a11 = matrix_from_json(j.at("A11"));
  m.a12 = matrix_from_json(j.at("A12"));
  m.basis = basis;
  if (j.contains("diagnostics")) {
    const auto& d = j.at("diagnostics");
    m.diagnostics.residual_fro = d.value("residual_fro", 0.0);
    m.diagnostics.cond_psi = d.value("cond_psi", 0.0);
    m.diagnostics.cond_h_plus = d.value("cond_h_plus", 0.0);
    m.diagnostics.samples = d.value("samples", Index{0});
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Consistency report

inline json to_json(const ConsistencyReport& r) {
  return {{"spectrum", to_json(r.eigenvalues)},
          {"cci", r.cci},
          {"trace", r.trace},
          {"trace_bounds", {r.trace / static_cast<double>(r.m_cc.rows()), r.trace}},
          {"rrmse_max", r.rrmse_max},
          {"worst_direction", to_json(r.worst_direction)},
          {"pullback", to_json(r.pullback)},
          {"M_CC", to_json(r.m_cc)},
          {"diagnostics",
           {{"max_imag", r.diagnostics.max_imag},
            {"gram_cond_h_plus", r.diagnostics.gram_cond_j},
            {"gram_cond_psi", r.diagnostics.gram_cond_l},
            {"cci_raw", r.diagnostics.cci_raw},
            {"samples", r.diagnostics.samples}}}};
}

// ---------------------------------------------------------------------------
// Systems and datasets

inline json to_json(const SystemDescription& s) {
  json j{{"name", s.name}};
  if (s.name == "dc-motor") j["input_nonlinearity"] = to_string(s.nonlinearity);
  if (s.name == "synthetic-linear") {
    j["A"] = to_json(s.a);
    j["B"] = to_json(s.b);
  }
  if (s.name == "synthetic-bilinear") {
    j["A"] = to_json(s.a);
    json bs = json::array();
    for (const auto& b : s.b_i) bs.push_back(to_json(b));
    j["B"] = bs;
  }
  return j;
}

inline SystemDescription system_from_json(const json& j) {
  SystemDescription s;
  s.name = get<std::string>(j, "name");
  if (j.contains("input_nonlinearity"))
    s.nonlinearity = input_nonlinearity_from_string(get<std::string>(j, "input_nonlinearity"));
  if (s.name == "synthetic-linear") {
    s.a = matrix_from_json(j.at("A"));
    s.b = matrix_from_json(j.at("B"));
  }
  if (s.name == "synthetic-bilinear") {
    s.a = matrix_from_json(j.at("A"));
    for (const auto& b : j.at("B")) s.b_i.push_back(matrix_from_json(b));
  }
  s.build();  // validates shapes
  return s;
}

inline std::string dataset_csv(const SnapshotDataset& d) {
  std::string out;
  for (Index i = 0; i < d.state_dim(); ++i) out += "x" + std::to_string(i + 1) + ",";
  for (Index i = 0; i < d.input_dim(); ++i) out += "u" + std::to_string(i + 1) + ",";
  for (Index i = 0; i < d.state_dim(); ++i)
    out += "xplus" + std::to_string(i + 1) + (i + 1 < d.state_dim() ? "," : "\n");
  char buf[40];
  auto put = [&](double v, bool last) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
    out += last ? '\n' : ',';
  };
  for (Index k = 0; k < d.size(); ++k) {
    for (Index i = 0; i < d.state_dim(); ++i) put(d.x(i, k), false);
    for (Index i = 0; i < d.input_dim(); ++i) put(d.u(i, k), false);
    for (Index i = 0; i < d.state_dim(); ++i) put(d.x_plus(i, k), i + 1 == d.state_dim());
  }
  return out;
}

inline void write_dataset(const fs::path& dir, const SnapshotDataset& d, const json& extra = json::object()) {
  d.validate();
  write_text(dir / "data.csv", dataset_csv(d));
  json side{{"n", d.state_dim()},
            {"m", d.input_dim()},
            {"N", d.size()},
            {"columns", "x..., u..., xplus..."},
            {"train_count", d.indices(true).size()},
            {"test_count", d.indices(false).size()},
            {"train_mask", d.train_mask}};
  for (auto it = extra.begin(); it != extra.end(); ++it) side[it.key()] = it.value();
  write_json(dir / "data.json", side);
}

inline SnapshotDataset read_dataset(const fs::path& dir, json* sidecar_out = nullptr) {
  const json side = read_json(dir / "data.json");
  const auto n = get<Index>(side, "n");
  const auto m = get<Index>(side, "m");
  const auto count = get<Index>(side, "N");
  if (n < 1 || m < 1 || count < 1) throw ValidationError("data.json dimensions must be positive");
  const std::string text = read_text(dir / "data.csv");

  SnapshotDataset d;
  d.x.resize(n, count);
  d.u.resize(m, count);
  d.x_plus.resize(n, count);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("data.csv is empty");
  Index row = 0;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= count) throw ValidationError("data.csv has more rows than data.json declares");
    vals.clear();
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      vals.push_back(std::strtod(p, &end));
      if (end == p) throw ValidationError("malformed number in data.csv row " + std::to_string(row + 1));
      p = end;
      if (*p == ',') ++p;
    }
    if (static_cast<Index>(vals.size()) != 2 * n + m)
      throw ValidationError("data.csv row " + std::to_string(row + 1) + " has " + std::to_string(vals.size()) +
                            " fields, expected " + std::to_string(2 * n + m));
    for (Index i = 0; i < n; ++i) d.x(i, row) = vals[static_cast<std::size_t>(i)];
    for (Index i = 0; i < m; ++i) d.u(i, row) = vals[static_cast<std::size_t>(n + i)];
    for (Index i = 0; i < n; ++i) d.x_plus(i, row) = vals[static_cast<std::size_t>(n + m + i)];
    ++row;
  }
  if (row != count) throw ValidationError("data.csv has " + std::to_string(row) + " rows, data.json declares " +
                                          std::to_string(count));
  d.train_mask = side.contains("train_mask") ? get<std::vector<std::uint8_t>>(side, "train_mask")
                                             : std::vector<std::uint8_t>(static_cast<std::size_t>(count), 1);
  d.validate();
  if (sidecar_out) *sidecar_out = side;
  return d;
}

// ---------------------------------------------------------------------------
// Training configuration

inline json to_json(const learning::TrainConfig& c) {
  return {{"epochs", c.epochs},     {"warmup_epochs", c.warmup_epochs}, {"batch_size", c.batch_size},
          {"lr_peak", c.lr_peak},   {"lr_floor", c.lr_floor},           {"betas", {c.beta1, c.beta2}},
          {"alpha", c.alpha},       {"alpha_h", c.alpha_h},             {"seed", c.seed},
          {"hidden", c.hidden},     {"n_H", c.n_h},                     {"n_Psi", c.n_psi},
          {"layer_norm", c.layer_norm}, {"pinned", c.pinned},           {"checkpoint_every", c.checkpoint_every}};
}

/// Overlay the keys present in `j` onto `base`.
inline learning::TrainConfig train_config_from_json(const json& j, learning::TrainConfig base = {}) {
  if (!j.is_object()) throw ValidationError("training config must be a JSON object");
  static const std::vector<std::string> known{"epochs", "warmup_epochs", "batch_size", "lr_peak",  "lr_floor",
                                              "betas",  "alpha",         "alpha_h",    "seed",     "hidden",
                                              "n_H",    "n_Psi",         "layer_norm", "pinned",   "checkpoint_every"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ValidationError("unknown training config key '" + it.key() + "'");
  if (j.contains("epochs")) base.epochs = get<int>(j, "epochs");
  if (j.contains("warmup_epochs")) base.warmup_epochs = get<int>(j, "warmup_epochs");
  if (j.contains("batch_size")) base.batch_size = get<Index>(j, "batch_size");
  if (j.contains("lr_peak")) base.lr_peak = get<double>(j, "lr_peak");
  if (j.contains("lr_floor")) base.lr_floor = get<double>(j, "lr_floor");
  if (j.contains("betas")) {
    const auto b = get<std::vector<double>>(j, "betas");
    if (b.size() != 2) throw ValidationError("betas must have two entries");
    base.beta1 = b[0];
    base.beta2 = b[1];
  }
  if (j.contains("alpha")) base.alpha = get<double>(j, "alpha");
  if (j.contains("alpha_h")) base.alpha_h = get<double>(j, "alpha_h");
  if (j.contains("seed")) base.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("hidden")) base.hidden = get<std::vector<Index>>(j, "hidden");
  if (j.contains("n_H")) base.n_h = get<Index>(j, "n_H");
  if (j.contains("n_Psi")) base.n_psi = get<Index>(j, "n_Psi");
  if (j.contains("layer_norm")) base.layer_norm = get<bool>(j, "layer_norm");
  if (j.contains("pinned")) base.pinned = get<Index>(j, "pinned");
  if (j.contains("checkpoint_every")) base.checkpoint_every = get<int>(j, "checkpoint_every");
  return base;
}

// ---------------------------------------------------------------------------
// Rollout statistics: step, coordinate, median, q25, q75

inline std::string statistics_rows(const ErrorStatistics& s, const std::string& label) {
  std::string out;
  char buf[160];
  for (Index t = 0; t < s.median.cols(); ++t)
    for (Index c = 0; c < s.median.rows(); ++c) {
      std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g,%.17g\n", static_cast<long>(t),
                    static_cast<long>(s.coordinates[static_cast<std::size_t>(c)]), s.median(c, t), s.q25(c, t),
                    s.q75(c, t));
      if (!label.empty()) out += label + ",";
      out += buf;
    }
  return out;
}

inline std::string statistics_csv(const ErrorStatistics& s, const std::string& label = "") {
  std::string out = label.empty() ? "step,coordinate,median,q25,q75\n" : "model,step,coordinate,median,q25,q75\n";
  out += statistics_rows(s, label);
  return out;
}

}  // namespace kcf::io
