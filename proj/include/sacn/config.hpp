#pragma once

// Training configuration and its flat `key=value` file format. Blank lines and lines
// starting with '#' are ignored; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sacn/error.hpp"

namespace sacn {

enum class Precision { float32, float64 };
enum class DecoderKind { conv_transe, distmult, transe };

struct TrainConfig {
  double learning_rate = 0.003;
  double dropout = 0.2;
  std::size_t embedding_size = 200;
  std::size_t hidden_size = 0;  // encoder input/hidden width; 0 means embedding_size
  std::size_t kernel_count = 100;
  std::size_t kernel_width = 5;
  std::size_t layers = 2;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  std::uint64_t seed = 42;
  double label_smoothing = 0.1;
  bool batchnorm = true;
  std::size_t eval_every = 1;
  std::size_t patience = 20;  // evaluations without MRR improvement; 0 disables
  std::string data_dir;
  Precision precision = Precision::float32;
  DecoderKind decoder = DecoderKind::conv_transe;
  int transe_norm = 1;
  bool bias = false;
  bool row_normalize = false;
  bool encoder_output_relu = false;  // ReLU on the last encoder layer as well
  double weight_decay = 0.0;
  double grad_clip = 0.0;
  std::size_t eval_batch_size = 256;

  std::size_t encoder_width() const noexcept { return hidden_size == 0 ? embedding_size : hidden_size; }
};

inline std::string to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }
inline std::string to_string(DecoderKind d) {
  switch (d) {
    case DecoderKind::conv_transe: return "conv_transe";
    case DecoderKind::distmult: return "distmult";
    case DecoderKind::transe: return "transe";
  }
  return "?";
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ValidationError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ValidationError("config key '" + key + "' expects a number, got '" + v + "'");
  return d;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ValidationError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

}  // namespace detail

/// Setter table shared by the file parser and command-line overrides.
inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  static const std::map<std::string, std::function<void(TrainConfig&, const std::string&, const std::string&)>> setters{
      {"learning_rate", [](auto& c, auto& k, auto& v) { c.learning_rate = parse_double(k, v); }},
      {"dropout", [](auto& c, auto& k, auto& v) { c.dropout = parse_double(k, v); }},
      {"embedding_size", [](auto& c, auto& k, auto& v) { c.embedding_size = parse_uint(k, v); }},
      {"hidden_size", [](auto& c, auto& k, auto& v) { c.hidden_size = parse_uint(k, v); }},
      {"kernel_count", [](auto& c, auto& k, auto& v) { c.kernel_count = parse_uint(k, v); }},
      {"kernel_width", [](auto& c, auto& k, auto& v) { c.kernel_width = parse_uint(k, v); }},
      {"layers", [](auto& c, auto& k, auto& v) { c.layers = parse_uint(k, v); }},
      {"batch_size", [](auto& c, auto& k, auto& v) { c.batch_size = parse_uint(k, v); }},
      {"epochs", [](auto& c, auto& k, auto& v) { c.epochs = parse_uint(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_uint(k, v); }},
      {"label_smoothing", [](auto& c, auto& k, auto& v) { c.label_smoothing = parse_double(k, v); }},
      {"batchnorm", [](auto& c, auto& k, auto& v) { c.batchnorm = parse_bool(k, v); }},
      {"eval_every", [](auto& c, auto& k, auto& v) { c.eval_every = parse_uint(k, v); }},
      {"patience", [](auto& c, auto& k, auto& v) { c.patience = parse_uint(k, v); }},
      {"data_dir", [](auto& c, auto&, auto& v) { c.data_dir = v; }},
      {"precision",
       [](auto& c, auto& k, auto& v) {
         if (v == "float32") c.precision = Precision::float32;
         else if (v == "float64") c.precision = Precision::float64;
         else throw ValidationError("config key '" + k + "' expects float32|float64, got '" + v + "'");
       }},
      {"decoder",
       [](auto& c, auto& k, auto& v) {
         if (v == "conv_transe") c.decoder = DecoderKind::conv_transe;
         else if (v == "distmult") c.decoder = DecoderKind::distmult;
         else if (v == "transe") c.decoder = DecoderKind::transe;
         else throw ValidationError("config key '" + k + "' expects conv_transe|distmult|transe, got '" + v + "'");
       }},
      {"transe_norm", [](auto& c, auto& k, auto& v) { c.transe_norm = static_cast<int>(parse_uint(k, v)); }},
      {"bias", [](auto& c, auto& k, auto& v) { c.bias = parse_bool(k, v); }},
      {"row_normalize", [](auto& c, auto& k, auto& v) { c.row_normalize = parse_bool(k, v); }},
      {"encoder_output_relu", [](auto& c, auto& k, auto& v) { c.encoder_output_relu = parse_bool(k, v); }},
      {"weight_decay", [](auto& c, auto& k, auto& v) { c.weight_decay = parse_double(k, v); }},
      {"grad_clip", [](auto& c, auto& k, auto& v) { c.grad_clip = parse_double(k, v); }},
      {"eval_batch_size", [](auto& c, auto& k, auto& v) { c.eval_batch_size = parse_uint(k, v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ValidationError("unknown config key '" + key + "'");
  it->second(c, key, v);
}

inline void validate(const TrainConfig& c) {
  const auto fail = [](const std::string& m) { throw ValidationError("invalid config: " + m); };
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (c.embedding_size == 0) fail("embedding_size must be >= 1");
  if (c.kernel_count == 0) fail("kernel_count must be >= 1");
  if (c.kernel_width == 0) fail("kernel_width must be >= 1");
  if (c.batch_size == 0) fail("batch_size must be >= 1");
  if (c.eval_batch_size == 0) fail("eval_batch_size must be >= 1");
  if (!(c.label_smoothing >= 0.0 && c.label_smoothing < 1.0)) fail("label_smoothing must be in [0, 1)");
  if (c.eval_every == 0) fail("eval_every must be >= 1");
  if (c.transe_norm != 1 && c.transe_norm != 2) fail("transe_norm must be 1 or 2");
  if (c.weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (c.grad_clip < 0.0) fail("grad_clip must be >= 0");
}

/// Values outside the reference hyperparameter grid. Informational only.
inline std::vector<std::string> grid_notes(const TrainConfig& c) {
  std::vector<std::string> notes;
  const auto in = [](double v, std::initializer_list<double> set) {
    for (double s : set)
      if (v == s) return true;
    return false;
  };
  if (!in(c.learning_rate, {0.01, 0.005, 0.003, 0.001})) notes.push_back("learning_rate outside {0.01,0.005,0.003,0.001}");
  if (!in(c.dropout, {0.0, 0.1, 0.2, 0.3, 0.4, 0.5})) notes.push_back("dropout outside {0.0..0.5}");
  if (!in(static_cast<double>(c.embedding_size), {100, 200, 300})) notes.push_back("embedding_size outside {100,200,300}");
  if (!in(static_cast<double>(c.kernel_count), {50, 100, 200, 300})) notes.push_back("kernel_count outside {50,100,200,300}");
  if (!in(static_cast<double>(c.kernel_width), {1, 3, 5})) notes.push_back("kernel_width outside {1,3,5}");
  return notes;
}

inline TrainConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  TrainConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected key=value");
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    try {
      set_config_value(c, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  validate(c);
  return c;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

/// Every field, one `key=value` per line, in a fixed order.
inline std::string to_string(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "learning_rate=" << c.learning_rate << '\n'
     << "dropout=" << c.dropout << '\n'
     << "embedding_size=" << c.embedding_size << '\n'
     << "hidden_size=" << c.hidden_size << '\n'
     << "kernel_count=" << c.kernel_count << '\n'
     << "kernel_width=" << c.kernel_width << '\n'
     << "layers=" << c.layers << '\n'
     << "batch_size=" << c.batch_size << '\n'
     << "epochs=" << c.epochs << '\n'
     << "seed=" << c.seed << '\n'
     << "label_smoothing=" << c.label_smoothing << '\n'
     << "batchnorm=" << (c.batchnorm ? "true" : "false") << '\n'
     << "eval_every=" << c.eval_every << '\n'
     << "patience=" << c.patience << '\n'
     << "data_dir=" << c.data_dir << '\n'
     << "precision=" << to_string(c.precision) << '\n'
     << "decoder=" << to_string(c.decoder) << '\n'
     << "transe_norm=" << c.transe_norm << '\n'
     << "bias=" << (c.bias ? "true" : "false") << '\n'
     << "row_normalize=" << (c.row_normalize ? "true" : "false") << '\n'
     << "encoder_output_relu=" << (c.encoder_output_relu ? "true" : "false") << '\n'
     << "weight_decay=" << c.weight_decay << '\n'
     << "grad_clip=" << c.grad_clip << '\n'
     << "eval_batch_size=" << c.eval_batch_size << '\n';
  return os.str();
}

}  // namespace sacn
