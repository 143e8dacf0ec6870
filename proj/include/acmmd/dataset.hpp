#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "acmmd/estimator.hpp"
#include "acmmd/reliability.hpp"
#include "acmmd/sequence.hpp"

// JSON-lines datasets.
//
//   #acmmd {"alphabet": ["A", "B", "STOP"], "terminal": "STOP"}
//   {"x": {"scalar": 0.3}, "y": {"tokens": ["A"]}, "y_model": {"tokens": []}}
//
// x is one of {"scalar": f}, {"embedding": [f...]}, {"tokens": [s...]}. Outputs
// carry "tokens" and optionally "embedding" or "per_position" (mean-pooled on
// load). Reliability records add "model_samples": [{output}, ...]. Any other
// top-level field is kept as metadata for group_by. Lines starting with '#'
// are comments; the optional "#acmmd" header declares the output alphabet
// (and optionally "x_alphabet"). Without it the alphabet is the sorted set of
// symbols seen.
namespace acmmd {

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class RecordShape { Triplet, Reliability };

struct Record {
  Triplet triplet;
  std::vector<Output> model_samples;
  std::map<std::string, std::string> metadata;
  std::size_t line = 0;

  ReliabilityRecord reliability() const {
    return {triplet.y, triplet.y_model, model_samples, triplet.x};
  }
};

struct DatasetFile {
  AlphabetPtr alphabet;
  AlphabetPtr x_alphabet;  // only for sequence inputs
  RecordShape shape = RecordShape::Triplet;
  std::optional<Eigen::Index> x_dim;
  std::optional<Eigen::Index> y_dim;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(records.size());
    for (const auto &r : records) out.push_back(r.triplet);
    return out;
  }

  std::vector<ReliabilityRecord> reliability_records() const {
    std::vector<ReliabilityRecord> out;
    out.reserve(records.size());
    for (const auto &r : records) out.push_back(r.reliability());
    return out;
  }
};

namespace detail {

using nlohmann::json;

inline constexpr std::string_view kHeaderTag = "#acmmd";

[[noreturn]] inline void data_error(std::size_t line, const std::string &what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

struct RawLine {
  json value;
  std::size_t line;
};

inline std::vector<std::string> token_list(const json &j, std::size_t line,
                                           const std::string &field) {
  if (!j.is_array()) data_error(line, "field \"" + field + "\" must be an array of symbols");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto &t : j) {
    if (!t.is_string()) data_error(line, "field \"" + field + "\" must contain strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

inline Vector number_vector(const json &j, std::size_t line, const std::string &field) {
  if (!j.is_array() || j.empty()) {
    data_error(line, "field \"" + field + "\" must be a non-empty array of numbers");
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) data_error(line, "field \"" + field + "\" must contain numbers");
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
    if (!std::isfinite(v(static_cast<Eigen::Index>(k)))) {
      data_error(line, "field \"" + field + "\" contains a non-finite value");
    }
  }
  return v;
}

inline Vector pooled_vector(const json &j, std::size_t line, const std::string &field) {
  if (!j.is_array() || j.empty()) {
    data_error(line, "field \"" + field + "\" must be a non-empty matrix");
  }
  const Vector first = number_vector(j[0], line, field);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), first.size());
  m.row(0) = first.transpose();
  for (std::size_t r = 1; r < j.size(); ++r) {
    const Vector row = number_vector(j[r], line, field);
    if (row.size() != first.size()) data_error(line, "ragged \"" + field + "\" matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return mean_pool(m);
}

inline const json &require(const json &obj, const std::string &field, std::size_t line,
                           const std::string &where = "") {
  if (!obj.is_object() || !obj.contains(field)) {
    data_error(line, "missing field \"" + where + field + "\"");
  }
  return obj.at(field);
}

inline Sequence make_sequence(const AlphabetPtr &alphabet, const std::vector<std::string> &syms,
                              std::size_t line, const std::string &field) {
  try {
    return Sequence::from_symbols(alphabet, syms);
  } catch (const std::invalid_argument &e) {
    data_error(line, "field \"" + field + "\": " + e.what());
  }
}

class Parser {
public:
  Parser(AlphabetPtr alphabet, AlphabetPtr x_alphabet)
      : alphabet_(std::move(alphabet)), x_alphabet_(std::move(x_alphabet)) {}

  Output output(const json &j, std::size_t line, const std::string &field) {
    if (!j.is_object()) data_error(line, "field \"" + field + "\" must be an object");
    Output o{make_sequence(alphabet_, token_list(require(j, "tokens", line, field + "."), line,
                                                 field + ".tokens"),
                           line, field + ".tokens"),
             std::nullopt};
    if (j.contains("embedding") && j.contains("per_position")) {
      data_error(line, "field \"" + field + "\" has both embedding and per_position");
    }
    if (j.contains("embedding")) {
      o.embedding = number_vector(j.at("embedding"), line, field + ".embedding");
    } else if (j.contains("per_position")) {
      o.embedding = pooled_vector(j.at("per_position"), line, field + ".per_position");
    }
    const std::optional<Eigen::Index> dim =
        o.embedding ? std::optional<Eigen::Index>(o.embedding->size()) : std::nullopt;
    if (!y_dim_seen_) {
      y_dim_ = dim;
      y_dim_seen_ = true;
    } else if (dim != y_dim_) {
      data_error(line, "inconsistent output embedding in \"" + field + "\"");
    }
    return o;
  }

  Input input(const json &j, std::size_t line) {
    if (!j.is_object() || j.size() != 1) {
      data_error(line, "field \"x\" must hold exactly one of scalar, embedding, tokens");
    }
    Input x;
    int kind = 0;
    if (j.contains("scalar")) {
      if (!j.at("scalar").is_number()) data_error(line, "field \"x.scalar\" must be a number");
      x = j.at("scalar").get<double>();
      kind = 1;
    } else if (j.contains("embedding")) {
      Vector v = number_vector(j.at("embedding"), line, "x.embedding");
      if (x_dim_ && *x_dim_ != v.size()) data_error(line, "inconsistent input embedding dimension");
      x_dim_ = v.size();
      x = std::move(v);
      kind = 2;
    } else if (j.contains("tokens")) {
      x = make_sequence(x_alphabet_, token_list(j.at("tokens"), line, "x.tokens"), line,
                        "x.tokens");
      kind = 3;
    } else {
      data_error(line, "field \"x\" must hold one of scalar, embedding, tokens");
    }
    if (x_kind_ != 0 && x_kind_ != kind) data_error(line, "mixed input kinds in dataset");
    x_kind_ = kind;
    return x;
  }

  std::optional<Eigen::Index> x_dim() const { return x_dim_; }
  std::optional<Eigen::Index> y_dim() const { return y_dim_; }

private:
  AlphabetPtr alphabet_;
  AlphabetPtr x_alphabet_;
  std::optional<Eigen::Index> x_dim_;
  std::optional<Eigen::Index> y_dim_;
  bool y_dim_seen_ = false;
  int x_kind_ = 0;
};

inline void collect_symbols(const json &out, std::set<std::string> &syms) {
  if (out.is_object() && out.contains("tokens") && out.at("tokens").is_array()) {
    for (const auto &t : out.at("tokens")) {
      if (t.is_string()) syms.insert(t.get<std::string>());
    }
  }
}

inline AlphabetPtr alphabet_from_header(const json &header, const char *key, std::size_t line) {
  if (!header.contains(key)) return nullptr;
  try {
    std::optional<std::string> terminal;
    const std::string term_key = std::string(key) == "alphabet" ? "terminal" : "x_terminal";
    if (header.contains(term_key)) terminal = header.at(term_key).get<std::string>();
    return make_alphabet(header.at(key).get<std::vector<std::string>>(), terminal);
  } catch (const std::exception &e) {
    data_error(line, std::string("invalid header: ") + e.what());
  }
}

inline std::string metadata_value(const json &v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

} // namespace detail

inline bool is_reserved_field(const std::string &key) {
  return key == "x" || key == "y" || key == "y_model" || key == "model_samples";
}

// Parses a JSON-lines stream. For RecordShape::Triplet every record needs x,
// y and y_model; for Reliability it needs y, y_model and model_samples (x is
// optional). Records of one file must agree on which optional parts exist.
inline DatasetFile parse_dataset(std::istream &in, RecordShape shape) {
  using detail::json;
  std::vector<detail::RawLine> lines;
  json header = json::object();
  std::size_t header_line = 0;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (text[first] == '#') {
      if (text.compare(first, detail::kHeaderTag.size(), detail::kHeaderTag) == 0) {
        try {
          header = json::parse(text.substr(first + detail::kHeaderTag.size()));
        } catch (const json::parse_error &e) {
          detail::data_error(line, std::string("malformed header: ") + e.what());
        }
        if (!header.is_object()) detail::data_error(line, "header must be a JSON object");
        header_line = line;
      }
      continue;
    }
    try {
      lines.push_back({json::parse(text), line});
    } catch (const json::parse_error &e) {
      detail::data_error(line, std::string("malformed JSON: ") + e.what());
    }
    if (!lines.back().value.is_object()) detail::data_error(line, "record must be a JSON object");
  }
  if (lines.empty()) throw DataError("empty dataset");

  DatasetFile file;
  file.shape = shape;
  file.alphabet = detail::alphabet_from_header(header, "alphabet", header_line);
  file.x_alphabet = detail::alphabet_from_header(header, "x_alphabet", header_line);
  if (!file.alphabet || !file.x_alphabet) {
    std::set<std::string> ys;
    std::set<std::string> xs;
    for (const auto &l : lines) {
      const auto &v = l.value;
      for (const char *f : {"y", "y_model"}) {
        if (v.contains(f)) detail::collect_symbols(v.at(f), ys);
      }
      if (v.contains("model_samples") && v.at("model_samples").is_array()) {
        for (const auto &o : v.at("model_samples")) detail::collect_symbols(o, ys);
      }
      if (v.contains("x")) detail::collect_symbols(v.at("x"), xs);
    }
    if (!file.alphabet) {
      if (ys.empty()) ys.insert("A");
      file.alphabet = make_alphabet({ys.begin(), ys.end()});
    }
    if (!file.x_alphabet && !xs.empty()) file.x_alphabet = make_alphabet({xs.begin(), xs.end()});
  }

  detail::Parser parser(file.alphabet, file.x_alphabet);
  std::optional<bool> has_x;
  std::optional<bool> has_ms;
  for (const auto &l : lines) {
    const auto &v = l.value;
    Record rec;
    rec.line = l.line;
    const bool rec_has_x = v.contains("x");
    if (shape == RecordShape::Triplet && !rec_has_x) detail::data_error(l.line, "missing field \"x\"");
    if (has_x && *has_x != rec_has_x) detail::data_error(l.line, "mixed record shapes (x)");
    has_x = rec_has_x;
    if (rec_has_x) rec.triplet.x = parser.input(v.at("x"), l.line);
    rec.triplet.y = parser.output(detail::require(v, "y", l.line), l.line, "y");
    rec.triplet.y_model = parser.output(detail::require(v, "y_model", l.line), l.line, "y_model");
    if (shape == RecordShape::Reliability) {
      const auto &ms = detail::require(v, "model_samples", l.line);
      if (!ms.is_array()) detail::data_error(l.line, "field \"model_samples\" must be an array");
      if (ms.size() < 2) detail::data_error(l.line, "field \"model_samples\" needs >= 2 samples");
      for (std::size_t k = 0; k < ms.size(); ++k) {
        rec.model_samples.push_back(
            parser.output(ms[k], l.line, "model_samples[" + std::to_string(k) + "]"));
      }
    } else {
      const bool rec_has_ms = v.contains("model_samples");
      if (has_ms && *has_ms != rec_has_ms) {
        detail::data_error(l.line, "mixed record shapes (model_samples)");
      }
      has_ms = rec_has_ms;
    }
    for (const auto &[key, value] : v.items()) {
      if (!is_reserved_field(key)) rec.metadata[key] = detail::metadata_value(value);
    }
    file.records.push_back(std::move(rec));
  }
  file.x_dim = parser.x_dim();
  file.y_dim = parser.y_dim();
  return file;
}

inline DatasetFile load_dataset(const std::string &path, RecordShape shape) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);
  return parse_dataset(in, shape);
}

namespace detail {

inline json output_json(const Output &o) {
  json j = json::object();
  j["tokens"] = o.tokens.symbols();
  if (o.embedding) {
    j["embedding"] = std::vector<double>(o.embedding->data(),
                                         o.embedding->data() + o.embedding->size());
  }
  return j;
}

inline json input_json(const Input &x) {
  json j = json::object();
  if (const auto *s = std::get_if<double>(&x)) {
    j["scalar"] = *s;
  } else if (const auto *v = std::get_if<Vector>(&x)) {
    j["embedding"] = std::vector<double>(v->data(), v->data() + v->size());
  } else {
    j["tokens"] = std::get<Sequence>(x).symbols();
  }
  return j;
}

inline json header_json(const Alphabet &alphabet) {
  json h = json::object();
  h["alphabet"] = alphabet.symbols();
  if (alphabet.terminal_symbol()) h["terminal"] = *alphabet.terminal_symbol();
  return h;
}

} // namespace detail

// Writes a header comment and one line per record. Output is a pure function
// of the records.
inline void write_dataset(std::ostream &out, const Alphabet &alphabet,
                          std::span<const Triplet> triplets) {
  out << detail::kHeaderTag << ' ' << detail::header_json(alphabet).dump() << '\n';
  for (const auto &t : triplets) {
    detail::json j = detail::json::object();
    j["x"] = detail::input_json(t.x);
    j["y"] = detail::output_json(t.y);
    j["y_model"] = detail::output_json(t.y_model);
    out << j.dump() << '\n';
  }
}

inline void write_dataset(std::ostream &out, const Alphabet &alphabet,
                          std::span<const ReliabilityRecord> records) {
  out << detail::kHeaderTag << ' ' << detail::header_json(alphabet).dump() << '\n';
  for (const auto &r : records) {
    detail::json j = detail::json::object();
    if (r.x) j["x"] = detail::input_json(*r.x);
    j["y"] = detail::output_json(r.y);
    j["y_model"] = detail::output_json(r.y_model);
    detail::json ms = detail::json::array();
    for (const auto &o : r.model_samples) ms.push_back(detail::output_json(o));
    j["model_samples"] = std::move(ms);
    out << j.dump() << '\n';
  }
}

} // namespace acmmd
